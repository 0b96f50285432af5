use serde::{Deserialize, Serialize};

use crate::model::Label;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Counts with `yes` as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_yes: usize,
    pub false_yes: usize,
    pub false_no: usize,
    pub true_no: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_yes + self.false_yes + self.false_no + self.true_no
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub yes: ClassMetrics,
    pub no: ClassMetrics,
    pub confusion: Confusion,
    /// Mean expert weights over the evaluated samples, when a model produced the predictions.
    pub mean_gate_er: Option<f64>,
    pub mean_gate_ir: Option<f64>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_metrics(tp: usize, fp: usize, fn_: usize) -> ClassMetrics {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassMetrics {
        precision,
        recall,
        f1,
        support: tp + fn_,
    }
}

/// Accuracy and per-class / macro precision, recall and F1. A ratio with a zero
/// denominator counts as 0.
pub fn compute_metrics(gold: &[Label], pred: &[Label]) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::Input(format!(
            "{} gold labels but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Input("cannot score an empty evaluation set".into()));
    }
    let mut c = Confusion::default();
    for (g, p) in gold.iter().zip(pred) {
        match (g, p) {
            (Label::Yes, Label::Yes) => c.true_yes += 1,
            (Label::No, Label::Yes) => c.false_yes += 1,
            (Label::Yes, Label::No) => c.false_no += 1,
            (Label::No, Label::No) => c.true_no += 1,
        }
    }
    let yes = class_metrics(c.true_yes, c.false_yes, c.false_no);
    let no = class_metrics(c.true_no, c.false_no, c.false_yes);
    Ok(EvalReport {
        accuracy: ratio(c.true_yes + c.true_no, gold.len()),
        macro_precision: (yes.precision + no.precision) / 2.0,
        macro_recall: (yes.recall + no.recall) / 2.0,
        macro_f1: (yes.f1 + no.f1) / 2.0,
        yes,
        no,
        confusion: c,
        mean_gate_er: None,
        mean_gate_ir: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{No, Yes};

    #[test]
    fn perfect_prediction() {
        let gold = [Yes, No, No, Yes, No];
        let r = compute_metrics(&gold, &gold).unwrap();
        for v in [r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1] {
            assert_eq!(v, 1.0);
        }
        assert_eq!(r.confusion.total(), 5);
    }

    #[test]
    fn hand_derived_fixture() {
        let r = compute_metrics(&[Yes, Yes, No, No], &[Yes, No, No, No]).unwrap();
        assert!((r.accuracy - 0.75).abs() < 1e-12);
        assert!((r.macro_precision - 0.8333).abs() < 1e-4);
        assert!((r.macro_recall - 0.75).abs() < 1e-12);
        assert!((r.macro_f1 - 0.7333).abs() < 1e-4);
    }

    #[test]
    fn constant_predictor() {
        let r = compute_metrics(&[Yes, No, Yes, No], &[Yes; 4]).unwrap();
        assert_eq!(r.yes.recall, 1.0);
        assert_eq!(r.no.recall, 0.0);
        assert_eq!(r.no.precision, 0.0);
        assert_eq!(r.no.f1, 0.0);
        assert_eq!(r.macro_recall, 0.5);
    }

    #[test]
    fn bad_lengths() {
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[Yes], &[Yes, No]).is_err());
    }

    fn labels(bits: &[bool]) -> Vec<Label> {
        bits.iter().map(|&b| Label::from_bit(b)).collect()
    }

    proptest::proptest! {
        #[test]
        fn renaming_the_classes_keeps_macro_scores(
            pairs in proptest::collection::vec((proptest::bool::ANY, proptest::bool::ANY), 1..60)
        ) {
            let (g, p): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
            let a = compute_metrics(&labels(&g), &labels(&p)).unwrap();
            let flip = |v: &[bool]| labels(&v.iter().map(|b| !b).collect::<Vec<_>>());
            let b = compute_metrics(&flip(&g), &flip(&p)).unwrap();
            proptest::prop_assert_eq!(a.accuracy, b.accuracy);
            proptest::prop_assert_eq!(a.macro_f1, b.macro_f1);
            proptest::prop_assert_eq!(a.yes, b.no);
            proptest::prop_assert_eq!(a.confusion.total(), g.len());
            for v in [a.accuracy, a.macro_precision, a.macro_recall, a.macro_f1] {
                proptest::prop_assert!((0.0..=1.0).contains(&v));
            }
            let n = g.len() as f64;
            proptest::prop_assert_eq!(a.accuracy, (a.confusion.true_yes + a.confusion.true_no) as f64 / n);
        }
    }
}
