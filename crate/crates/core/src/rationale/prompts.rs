use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// One of the three rationale extraction stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Image,
    Text,
    #[serde(rename = "multi")]
    Multimodal,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Image, Stage::Text, Stage::Multimodal];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Image => "image",
            Stage::Text => "text",
            Stage::Multimodal => "multi",
        }
    }

    pub fn needs_image(self) -> bool {
        matches!(self, Stage::Image | Stage::Multimodal)
    }

    pub fn needs_text(self) -> bool {
        matches!(self, Stage::Text | Stage::Multimodal)
    }

    /// Parses a comma-separated list such as `image,text,multi`.
    pub fn parse_list(raw: &str) -> Result<Vec<Stage>> {
        let mut out = Vec::new();
        for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let stage = match part.to_ascii_lowercase().as_str() {
                "image" | "img" => Stage::Image,
                "text" | "txt" => Stage::Text,
                "multi" | "multimodal" | "mm" => Stage::Multimodal,
                other => return Err(Error::Validation(format!("unknown stage `{other}`"))),
            };
            if !out.contains(&stage) {
                out.push(stage);
            }
        }
        if out.is_empty() {
            return Err(Error::Validation("no stages selected".into()));
        }
        out.sort();
        Ok(out)
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub const IMAGE_PROMPT: &str = include_str!("../../resources/prompts/image.txt");
pub const TEXT_PROMPT: &str = include_str!("../../resources/prompts/text.txt");
pub const MULTIMODAL_PROMPT: &str = include_str!("../../resources/prompts/multimodal.txt");

/// A stage prompt body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub stage: Stage,
    pub body: String,
}

impl PromptTemplate {
    /// Hex SHA-256 of the body bytes.
    pub fn checksum(&self) -> String {
        sha256_hex(self.body.as_bytes())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// The three stage prompts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptSet {
    pub image: PromptTemplate,
    pub text: PromptTemplate,
    pub multimodal: PromptTemplate,
}

impl PromptSet {
    /// The prompts compiled into the binary.
    pub fn shipped() -> Self {
        Self {
            image: PromptTemplate {
                stage: Stage::Image,
                body: IMAGE_PROMPT.to_string(),
            },
            text: PromptTemplate {
                stage: Stage::Text,
                body: TEXT_PROMPT.to_string(),
            },
            multimodal: PromptTemplate {
                stage: Stage::Multimodal,
                body: MULTIMODAL_PROMPT.to_string(),
            },
        }
    }

    /// Loads `image.txt`, `text.txt` and `multimodal.txt` from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |file: &str, stage| -> Result<PromptTemplate> {
            let path = dir.join(file);
            if !path.exists() {
                return Err(Error::MissingPath(path));
            }
            Ok(PromptTemplate {
                stage,
                body: std::fs::read_to_string(path)?,
            })
        };
        Ok(Self {
            image: read("image.txt", Stage::Image)?,
            text: read("text.txt", Stage::Text)?,
            multimodal: read("multimodal.txt", Stage::Multimodal)?,
        })
    }

    pub fn get(&self, stage: Stage) -> &PromptTemplate {
        match stage {
            Stage::Image => &self.image,
            Stage::Text => &self.text,
            Stage::Multimodal => &self.multimodal,
        }
    }
}
