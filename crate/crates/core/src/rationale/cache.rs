//! Append-only JSONL store of rationale bundles with an in-memory index.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::prompts::sha256_hex;
use super::{ParseStatus, PromptSet, RationaleBundle, Stage, StageResult};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct StageRecord {
    label: Option<u8>,
    reason: String,
    status: ParseStatus,
    raw: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct StageRecords {
    image: Option<StageRecord>,
    text: Option<StageRecord>,
    multi: Option<StageRecord>,
}

/// One line of the cache file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    sample_id: String,
    stages: StageRecords,
    combined: String,
}

fn to_record(r: &Option<StageResult>) -> Option<StageRecord> {
    r.as_ref().map(|r| StageRecord {
        label: r.label_hint,
        reason: r.reason.clone(),
        status: r.parse_status,
        raw: r.raw.clone(),
    })
}

fn from_record(stage: Stage, r: Option<StageRecord>) -> Option<StageResult> {
    r.map(|r| StageResult {
        stage,
        label_hint: r.label,
        reason: r.reason,
        parse_status: r.status,
        raw: r.raw,
    })
}

impl CacheLine {
    fn new(key: &str, b: &RationaleBundle) -> Self {
        Self {
            key: key.to_string(),
            sample_id: b.sample_id.clone(),
            stages: StageRecords {
                image: to_record(&b.r_image),
                text: to_record(&b.r_text),
                multi: to_record(&b.r_multi),
            },
            combined: b.combined.clone(),
        }
    }

    fn into_bundle(self) -> RationaleBundle {
        // `combined` is recomputed so a hand-edited line cannot drift from its stages
        RationaleBundle::new(
            self.sample_id,
            from_record(Stage::Image, self.stages.image),
            from_record(Stage::Text, self.stages.text),
            from_record(Stage::Multimodal, self.stages.multi),
        )
    }
}

/// Key of a bundle: SHA-256 over the sample id, the checksums of the selected
/// stage prompts and the model name.
pub fn cache_key(sample_id: &str, stages: &[Stage], prompts: &PromptSet, model_name: &str) -> String {
    let mut material = String::new();
    material.push_str(sample_id);
    for &stage in stages {
        material.push('\n');
        material.push_str(stage.name());
        material.push(':');
        material.push_str(&prompts.get(stage).checksum());
    }
    material.push('\n');
    material.push_str(model_name);
    sha256_hex(material.as_bytes())
}

fn read_lines(path: &Path) -> Result<Vec<CacheLine>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Bundles in a bundles/cache JSONL file by sample id; later lines win.
pub fn load_bundles(path: &Path) -> Result<HashMap<String, RationaleBundle>> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    Ok(read_lines(path)?
        .into_iter()
        .map(|l| (l.sample_id.clone(), l.into_bundle()))
        .collect())
}

/// Writes bundles in the cache format under keys derived from `prompts` and `model_name`.
pub fn write_bundles<'a>(
    path: &Path,
    bundles: impl IntoIterator<Item = &'a RationaleBundle>,
    prompts: &PromptSet,
    model_name: &str,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for b in bundles {
        let stages: Vec<Stage> = Stage::ALL.into_iter().filter(|&s| b.get(s).is_some()).collect();
        let key = cache_key(&b.sample_id, &stages, prompts, model_name);
        serde_json::to_writer(&mut out, &CacheLine::new(&key, b))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug)]
struct Inner {
    index: HashMap<String, RationaleBundle>,
    file: Option<File>,
}

/// Rationale cache. Writes are serialized through a mutex and flushed per line.
#[derive(Debug)]
pub struct RationaleCache {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl RationaleCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(Inner {
                index: HashMap::new(),
                file: None,
            }),
        }
    }

    /// Opens or creates the cache file at `path` and indexes existing lines.
    pub fn open(path: &Path) -> Result<Self> {
        let index = if path.exists() {
            read_lines(path)?
                .into_iter()
                .map(|l| (l.key.clone(), l.into_bundle()))
                .collect()
        } else {
            HashMap::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(Inner {
                index,
                file: Some(file),
            }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<RationaleBundle> {
        self.inner.lock().unwrap().index.get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: &str, bundle: &RationaleBundle) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_vec(&CacheLine::new(key, bundle))?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        inner.index.insert(key.to_string(), bundle.clone());
        Ok(())
    }
}
