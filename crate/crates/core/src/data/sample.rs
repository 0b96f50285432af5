use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::Label;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(raw: &str) -> Result<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" | "dev" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split `{other}`"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One image-text post.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    /// Image path or feature id.
    #[serde(rename = "image")]
    pub image_ref: String,
    pub label: Label,
    pub split: Split,
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, name: &str) -> std::result::Result<&'a Value, String> {
    obj.get(name).ok_or_else(|| format!("missing field `{name}`"))
}

fn string_field(obj: &serde_json::Map<String, Value>, name: &str) -> std::result::Result<String, String> {
    match field(obj, name)? {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) if name == "id" => Ok(n.to_string()),
        other => Err(format!("field `{name}` must be a string, got {other}")),
    }
}

fn parse_line(line: &str) -> std::result::Result<Sample, (bool, String)> {
    let value: Value = serde_json::from_str(line).map_err(|e| (false, e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| (false, "expected a JSON object".to_string()))?;
    let parse = |r: std::result::Result<String, String>| r.map_err(|m| (false, m));
    let id = parse(string_field(obj, "id"))?;
    if id.is_empty() {
        return Err((true, "empty id".into()));
    }
    let text = parse(string_field(obj, "text"))?;
    let image_ref = parse(string_field(obj, "image"))?;
    let label_value = field(obj, "label").map_err(|m| (false, m))?;
    let label = match label_value {
        Value::Number(n) => n.as_u64().map(|v| v.to_string()).unwrap_or_else(|| n.to_string()),
        Value::String(s) => s.clone(),
        Value::Bool(b) => (*b as u8).to_string(),
        other => other.to_string(),
    };
    let label = Label::parse(&label).ok_or_else(|| (true, format!("unknown label {label_value}")))?;
    let split = Split::parse(&parse(string_field(obj, "split"))?).map_err(|e| (true, e.to_string()))?;
    Ok(Sample {
        id,
        text,
        image_ref,
        label,
        split,
    })
}

/// Reads samples from JSONL with fields `id`, `text`, `image`, `label`, `split`.
///
/// Ids must be unique across the whole file.
pub fn load_jsonl(path: &Path) -> Result<Vec<Sample>> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let reader = BufReader::new(File::open(path)?);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = parse_line(&line).map_err(|(validation, message)| {
            let located = format!("{}:{}: {message}", path.display(), i + 1);
            if validation {
                Error::Validation(located)
            } else {
                Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message,
                }
            }
        })?;
        if !seen.insert(sample.id.clone()) {
            return Err(Error::Validation(format!(
                "{}:{}: duplicate sample id `{}`",
                path.display(),
                i + 1,
                sample.id
            )));
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
