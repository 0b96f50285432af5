use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{build_examples, evaluate, train, Dataset, EpochRecord, EvalReport, InputPlan, Prediction, TrainConfig};
use crate::data::Split;
use crate::model::{ExpertMode, GateMode, MidreModel};
use crate::rationale::Stage;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    OnlyMulRationale,
    OnlyTxtImgRationale,
    WoEr,
    WoIr,
    WoGate,
    LinearGate,
    Reverse,
}

/// What a variant changes relative to the full model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariantSpec {
    pub expert_mode: ExpertMode,
    pub gate_mode: GateMode,
    pub rationale: Vec<Stage>,
    pub reverse_streams: bool,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 8] = [
        AblationVariant::Full,
        AblationVariant::OnlyMulRationale,
        AblationVariant::OnlyTxtImgRationale,
        AblationVariant::WoEr,
        AblationVariant::WoIr,
        AblationVariant::WoGate,
        AblationVariant::LinearGate,
        AblationVariant::Reverse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::OnlyMulRationale => "only_mul_rationale",
            AblationVariant::OnlyTxtImgRationale => "only_txt_img_rationale",
            AblationVariant::WoEr => "wo_er",
            AblationVariant::WoIr => "wo_ir",
            AblationVariant::WoGate => "wo_gate",
            AblationVariant::LinearGate => "linear_gate",
            AblationVariant::Reverse => "reverse",
        }
    }

    pub fn parse(raw: &str) -> Result<Self> {
        let raw = raw.trim();
        Self::ALL
            .into_iter()
            .find(|v| v.name() == raw)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown variant `{raw}`; expected one of {}",
                    Self::ALL.map(|v| v.name()).join(", ")
                ))
            })
    }

    /// Comma-separated names. An empty string is an empty list.
    pub fn parse_list(raw: &str) -> Result<Vec<Self>> {
        raw.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(Self::parse)
            .collect()
    }

    /// Without the external expert the rationale is left out of the embedded
    /// stream too, so no rationale reaches the head through the residual path.
    pub fn spec(self) -> VariantSpec {
        let all = Stage::ALL.to_vec();
        let (expert_mode, gate_mode, rationale, reverse_streams) = match self {
            AblationVariant::Full => (ExpertMode::Both, GateMode::Bottleneck, all, false),
            AblationVariant::OnlyMulRationale => {
                (ExpertMode::Both, GateMode::Bottleneck, vec![Stage::Multimodal], false)
            }
            AblationVariant::OnlyTxtImgRationale => (
                ExpertMode::Both,
                GateMode::Bottleneck,
                vec![Stage::Image, Stage::Text],
                false,
            ),
            AblationVariant::WoEr => (ExpertMode::IrOnly, GateMode::ForceIr, vec![], false),
            AblationVariant::WoIr => (ExpertMode::ErOnly, GateMode::ForceEr, all, false),
            AblationVariant::WoGate => (ExpertMode::Both, GateMode::Off, all, false),
            AblationVariant::LinearGate => (ExpertMode::Both, GateMode::Linear, all, false),
            AblationVariant::Reverse => (ExpertMode::Both, GateMode::Bottleneck, all, true),
        };
        VariantSpec {
            expert_mode,
            gate_mode,
            rationale,
            reverse_streams,
        }
    }
}

impl std::fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Trained and evaluated variant.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub seed: u64,
    /// Test-split metrics.
    pub report: EvalReport,
    pub predictions: Vec<Prediction>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub wallclock_s: f64,
    pub model: MidreModel<f32>,
}

/// Trains one model on the train split, selects on val and evaluates on test.
pub fn run_variant(
    dataset: &Dataset,
    base: &TrainConfig,
    variant: AblationVariant,
    toy_seed: u64,
) -> Result<AblationRow> {
    let start = Instant::now();
    let spec = variant.spec();
    let mut config = base.clone();
    config.model.expert_mode = spec.expert_mode;
    config.model.gate_mode = spec.gate_mode;
    config.model.reverse_streams = spec.reverse_streams;
    let plan = InputPlan {
        rationale: spec.rationale,
        reverse_streams: spec.reverse_streams,
        toy_seed,
    };
    let examples = |split| build_examples(dataset, &dataset.split(split), &config.model, &plan);
    let (train_set, val_set, test_set) = (examples(Split::Train)?, examples(Split::Val)?, examples(Split::Test)?);
    if test_set.is_empty() {
        return Err(Error::Validation("the test split is empty".into()));
    }
    let model = MidreModel::new(config.model.clone(), config.seed)?;
    let outcome = train(model, &train_set, &val_set, &config)?;
    let evaluation = evaluate(&outcome.model, &test_set)?;
    Ok(AblationRow {
        variant,
        seed: config.seed,
        report: evaluation.report,
        predictions: evaluation.predictions,
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        wallclock_s: start.elapsed().as_secs_f64(),
        model: outcome.model,
    })
}

/// Retrains every variant from scratch with the shared seed.
pub fn run_ablation(
    dataset: &Dataset,
    base: &TrainConfig,
    variants: &[AblationVariant],
    toy_seed: u64,
) -> Result<Vec<AblationRow>> {
    variants
        .iter()
        .map(|&v| run_variant(dataset, base, v, toy_seed))
        .collect()
}

pub const CSV_HEADER: &str = "variant,acc,macro_p,macro_r,macro_f1,mean_gate_er,mean_gate_ir,seed,wallclock_s";

pub fn csv_line(row: &AblationRow) -> String {
    let r = &row.report;
    format!(
        "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.3}",
        row.variant,
        r.accuracy,
        r.macro_precision,
        r.macro_recall,
        r.macro_f1,
        r.mean_gate_er.unwrap_or(f64::NAN),
        r.mean_gate_ir.unwrap_or(f64::NAN),
        row.seed,
        row.wallclock_s
    )
}

pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", csv_line(row))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn names_round_trip_and_specs_are_distinct() {
        let mut specs = HashSet::new();
        for v in AblationVariant::ALL {
            assert_eq!(AblationVariant::parse(v.name()).unwrap(), v);
            let s = v.spec();
            assert!(specs.insert(format!("{:?}", (s.expert_mode, s.gate_mode, &s.rationale, s.reverse_streams))));
        }
        assert!(AblationVariant::parse("bogus").is_err());
        assert_eq!(AblationVariant::parse_list("").unwrap(), []);
        assert_eq!(
            AblationVariant::parse_list("full, wo_er").unwrap(),
            [AblationVariant::Full, AblationVariant::WoEr]
        );
    }

    #[test]
    fn wo_er_routes_everything_through_the_internal_expert() {
        let s = AblationVariant::WoEr.spec();
        assert_eq!((s.expert_mode, s.gate_mode), (ExpertMode::IrOnly, GateMode::ForceIr));
        assert!(s.rationale.is_empty());
        assert_eq!(AblationVariant::OnlyMulRationale.spec().rationale, [Stage::Multimodal]);
    }
}
