//! The dual reasoning expert network.
//!
//! Each encoder layer runs two single-head cross-attention experts over shared
//! projected image tokens: the external expert queries with the running
//! rationale-augmented stream, the internal expert with the projected plain-text
//! features. A per-token gate mixes their outputs into the residual stream. After
//! the last layer the stream is mean-pooled into a two-way `[yes, no]` head.

mod config;
mod layers;
mod network;
pub mod tokenizer;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use config::{ExpertMode, GateMode, ModelConfig};
pub use layers::{
    cross_attention, encoder_layer, gate, project_image, project_text, ExpertVars, GateVars, LayerGate,
    LayerVars,
};
pub use network::{classify, ForwardInputs, GateTrace, MidreModel};
pub use tokenizer::{encode, encode_augmented, fnv1a64, token_id, tokenize};

/// Sarcasm label. Stored as `1` (yes) / `0` (no) on disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    No,
    Yes,
}

impl Label {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Label::Yes
        } else {
            Label::No
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::No => 0,
            Label::Yes => 1,
        }
    }

    /// Column of this label in the `[yes, no]` logits.
    pub fn class_index(self) -> usize {
        match self {
            Label::Yes => 0,
            Label::No => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::No => Label::Yes,
            Label::Yes => Label::No,
        }
    }

    /// Accepts `0`/`1`, `"0"`/`"1"` and `"yes"`/`"no"` (any case).
    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "1" | "yes" => Some(Label::Yes),
            "0" | "no" => Some(Label::No),
            _ => None,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Yes => "yes",
            Label::No => "no",
        })
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let parsed = match &v {
            serde_json::Value::Number(n) => n.as_u64().and_then(|n| Label::parse(&n.to_string())),
            serde_json::Value::String(s) => Label::parse(s),
            serde_json::Value::Bool(b) => Some(Label::from_bit(*b)),
            _ => None,
        };
        parsed.ok_or_else(|| serde::de::Error::custom(format!("unknown label {v}")))
    }
}
