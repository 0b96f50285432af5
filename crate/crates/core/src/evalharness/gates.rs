use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{evaluate, Example};
use crate::model::{Label, MidreModel};
use crate::Result;

/// Sample-level gate summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub id: String,
    pub gold: Label,
    pub pred: Label,
    pub mean_er: f64,
    pub mean_ir: f64,
    /// `[er, ir]` per layer, averaged over unpadded tokens.
    pub per_layer: Vec<[f64; 2]>,
}

pub fn export_gate_traces(model: &MidreModel<f32>, examples: &[Example]) -> Result<Vec<GateRecord>> {
    if examples.is_empty() {
        return Ok(Vec::new());
    }
    Ok(evaluate(model, examples)?
        .predictions
        .into_iter()
        .map(|p| GateRecord {
            per_layer: p.trace.layer_means(),
            mean_er: p.trace.mean_er,
            mean_ir: p.trace.mean_ir,
            id: p.id,
            gold: p.gold,
            pred: p.pred,
        })
        .collect())
}

pub fn write_gate_jsonl(path: &Path, records: &[GateRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
