use std::path::Path;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{PromptSet, Stage};
use crate::{Error, Result};

/// Raw image bytes with their media type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImagePayload {
    pub media_type: String,
    pub bytes: Vec<u8>,
}

impl ImagePayload {
    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingPath(path.to_path_buf()));
        }
        Ok(Self {
            media_type: media_type_for(path).to_string(),
            bytes: std::fs::read(path)?,
        })
    }
}

pub fn media_type_for(path: &Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "image/jpeg",
    }
}

/// What the rationale stages see of one sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationaleInput {
    pub sample_id: String,
    pub text: Option<String>,
    pub image: Option<ImagePayload>,
}

/// How image parts are written on the wire.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageStyle {
    /// `{"type":"image","media_type":..,"data":<base64>}`
    #[default]
    Inline,
    /// `{"type":"image_url","image_url":{"url":"data:<media>;base64,.."}}`
    DataUrl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LvlmEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub max_retries: usize,
    /// Delay before retry `k` is `backoff_ms[min(k, len-1)]`.
    pub backoff_ms: Vec<u64>,
    pub max_concurrency: usize,
    pub timeout_ms: u64,
    /// JSON pointer of the completion text in the response body.
    pub response_path: String,
    pub seed: Option<u64>,
    pub image_style: ImageStyle,
}

impl Default for LvlmEndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model_name: "Qwen2-VL-7B-Instruct".into(),
            api_key_env: None,
            max_retries: 3,
            backoff_ms: vec![500, 1000, 2000],
            max_concurrency: 4,
            timeout_ms: 120_000,
            response_path: "/choices/0/message/content".into(),
            seed: Some(0),
            image_style: ImageStyle::Inline,
        }
    }
}

impl LvlmEndpointConfig {
    pub const MAX_RETRIES: usize = 20;

    pub fn validate(&self) -> Result<()> {
        if self.max_concurrency == 0 {
            return Err(Error::Config("max_concurrency must be at least 1".into()));
        }
        if self.max_retries > Self::MAX_RETRIES {
            return Err(Error::Config(format!(
                "max_retries {} exceeds the limit of {}",
                self.max_retries,
                Self::MAX_RETRIES
            )));
        }
        if self.base_url.is_empty() || self.model_name.is_empty() {
            return Err(Error::Config("base_url and model_name must be set".into()));
        }
        if self.timeout_ms == 0 {
            return Err(Error::Config("timeout_ms must be positive".into()));
        }
        if !self.response_path.is_empty() && !self.response_path.starts_with('/') {
            return Err(Error::Config(format!(
                "response_path `{}` is not a JSON pointer",
                self.response_path
            )));
        }
        Ok(())
    }

    pub fn backoff(&self, retry: usize) -> Duration {
        match self.backoff_ms.len() {
            0 => Duration::ZERO,
            n => Duration::from_millis(self.backoff_ms[retry.min(n - 1)]),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

/// Chat-completion body for one stage. Only the modality the stage reads is
/// included.
pub fn build_request(
    stage: Stage,
    input: &RationaleInput,
    prompts: &PromptSet,
    endpoint: &LvlmEndpointConfig,
) -> Result<Value> {
    let prompt = &prompts.get(stage).body;
    let missing = |what: &str| {
        Error::Input(format!(
            "sample `{}` has no {what}, which the {stage} stage needs",
            input.sample_id
        ))
    };
    let text = match stage {
        Stage::Image => prompt.clone(),
        Stage::Text => {
            let t = input.text.as_deref().ok_or_else(|| missing("text"))?;
            format!("{prompt}\n\nText: {t}")
        }
        Stage::Multimodal => {
            let t = input.text.as_deref().ok_or_else(|| missing("text"))?;
            format!("{prompt}\n\nSupporting Text: {t}")
        }
    };
    let mut content = vec![json!({"type": "text", "text": text})];
    if stage.needs_image() {
        let image = input.image.as_ref().ok_or_else(|| missing("image"))?;
        let data = base64::engine::general_purpose::STANDARD.encode(&image.bytes);
        content.push(match endpoint.image_style {
            ImageStyle::Inline => json!({
                "type": "image",
                "media_type": image.media_type,
                "data": data,
            }),
            ImageStyle::DataUrl => json!({
                "type": "image_url",
                "image_url": {"url": format!("data:{};base64,{data}", image.media_type)},
            }),
        });
    }
    let mut body = json!({
        "model": endpoint.model_name,
        "messages": [{"role": "user", "content": content}],
        "temperature": 0,
    });
    if let Some(seed) = endpoint.seed {
        body["seed"] = json!(seed);
    }
    Ok(body)
}
