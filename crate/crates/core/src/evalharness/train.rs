use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{compute_metrics, EvalReport, Example};
use crate::model::{classify, GateTrace, Label, MidreModel, ModelConfig};
use crate::numerics::{AdamState, Graph};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 12,
            learning_rate: 5e-5,
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// A learning rate of zero is accepted and leaves the weights untouched.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Validation(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        self.model.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Weights of the epoch with the best validation accuracy (earliest on ties).
    pub model: MidreModel<f32>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// One prediction with its gate summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub gold: Label,
    pub pred: Label,
    pub logits: [f32; 2],
    pub trace: GateTrace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub predictions: Vec<Prediction>,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn diverged(epoch: usize, step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite { .. } | Error::NonFiniteGradient { .. } => Error::Diverged {
            epoch,
            step,
            detail: e.to_string(),
        },
        other => other,
    }
}

/// Mean cross-entropy of one minibatch, with gradients stored on the model.
fn batch_step(model: &mut MidreModel<f32>, batch: &[&Example]) -> Result<f64> {
    let mut g = Graph::new();
    let vars = model.bind(&mut g);
    let mut rows = Vec::with_capacity(batch.len());
    for ex in batch {
        let (logits, _, _) = model.forward_graph(&mut g, &vars, &ex.inputs)?;
        rows.push(logits);
    }
    let logits = g.concat_rows(&rows)?;
    let labels: Vec<usize> = batch.iter().map(|e| e.label.class_index()).collect();
    let loss = g.cross_entropy(logits, &labels)?;
    let value = g.value(loss).data()[0] as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            op: "cross_entropy".into(),
        });
    }
    g.backward(loss)?;
    model.collect_grads(&g, &vars)?;
    Ok(value)
}

/// Minibatch Adam on cross-entropy. After every epoch the validation accuracy
/// is measured and the best epoch's weights are kept.
pub fn train(
    mut model: MidreModel<f32>,
    train_set: &[Example],
    val_set: &[Example],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Validation(format!(
            "training needs non-empty splits, got {} train and {} validation samples",
            train_set.len(),
            val_set.len()
        )));
    }
    let mut adam = AdamState::<f32>::new(config.learning_rate);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, MidreModel<f32>)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        order.sort_unstable();
        order.shuffle(&mut epoch_rng(config.seed, epoch));
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let loss = batch_step(&mut model, &batch).map_err(|e| diverged(epoch, step + 1, e))?;
            adam.update(&mut model.named_params_mut())
                .map_err(|e| diverged(epoch, step + 1, e))?;
            model.zero_grads();
            loss_sum += loss;
            batches += 1;
        }
        let val_acc = evaluate(&model, val_set)?.report.accuracy;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_acc,
        });
        if best.as_ref().is_none_or(|(acc, _, _)| val_acc > *acc) {
            best = Some((val_acc, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
    })
}

/// Predicts every example and scores the predictions.
pub fn evaluate(model: &MidreModel<f32>, examples: &[Example]) -> Result<Evaluation> {
    let mut predictions = Vec::with_capacity(examples.len());
    for ex in examples {
        let (logits, trace) = model.forward(&ex.inputs)?;
        predictions.push(Prediction {
            id: ex.id.clone(),
            gold: ex.label,
            pred: classify(&logits),
            logits,
            trace,
        });
    }
    let report = score(&predictions)?;
    Ok(Evaluation { report, predictions })
}

/// Metrics plus mean gate values over a set of predictions.
pub fn score(predictions: &[Prediction]) -> Result<EvalReport> {
    let gold: Vec<Label> = predictions.iter().map(|p| p.gold).collect();
    let pred: Vec<Label> = predictions.iter().map(|p| p.pred).collect();
    let mut report = compute_metrics(&gold, &pred)?;
    let n = predictions.len() as f64;
    let er = predictions.iter().map(|p| p.trace.mean_er).sum::<f64>() / n;
    report.mean_gate_er = Some(er);
    report.mean_gate_ir = Some(1.0 - er);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ForwardInputs;
    use crate::numerics::Tensor;
    use rand::Rng;

    /// 200 samples whose first token is 1 for `yes` and 2 for `no`; the rest is noise.
    fn separable(config: &ModelConfig, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..200)
            .map(|i| {
                let yes = i % 2 == 0;
                let mut tokens = vec![if yes { 1 } else { 2 }];
                tokens.extend((0..3).map(|_| rng.random_range(3..config.vocab)));
                let mut tensor = |r: usize, c: usize| {
                    Tensor::new(vec![r, c], (0..r * c).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
                };
                Example {
                    id: format!("e{i}"),
                    label: Label::from_bit(yes),
                    inputs: ForwardInputs {
                        image: tensor(config.image_tokens, config.image_dim),
                        text: tensor(4, config.clip_text_dim),
                        tokens,
                    },
                }
            })
            .collect()
    }

    fn setup(lr: f64, epochs: usize) -> (TrainConfig, Vec<Example>) {
        let model = ModelConfig {
            vocab: 40,
            ..ModelConfig::tiny(8, 1, 3, 8)
        };
        let config = TrainConfig {
            epochs,
            batch_size: 12,
            learning_rate: lr,
            seed: 11,
            model,
        };
        let data = separable(&config.model, 1);
        (config, data)
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let (config, data) = setup(0.0, 2);
        let model = MidreModel::new(config.model.clone(), 1).unwrap();
        let out = train(model.clone(), &data[..40], &data[40..60], &config).unwrap();
        assert_eq!(out.model.params(), model.params());
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn separable_task_is_learned() {
        let (config, data) = setup(1e-2, 20);
        let model = MidreModel::new(config.model.clone(), 1).unwrap();
        let out = train(model, &data, &data[..50], &config).unwrap();
        let acc = evaluate(&out.model, &data).unwrap().report.accuracy;
        assert!(acc >= 0.99, "train accuracy {acc}");
        assert!(out.history.last().unwrap().train_loss < out.history[0].train_loss);
    }

    #[test]
    fn same_seed_same_run() {
        let (config, data) = setup(5e-3, 3);
        let run = || {
            let model = MidreModel::new(config.model.clone(), 2).unwrap();
            train(model, &data[..80], &data[80..110], &config).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.history, b.history);
        assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
        let mut other = config.clone();
        other.seed = 12;
        let c = train(MidreModel::new(config.model.clone(), 2).unwrap(), &data[..80], &data[80..110], &other).unwrap();
        assert_ne!(a.model.to_json().unwrap(), c.model.to_json().unwrap());
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.epochs = 0;
        assert!(c.validate().is_err());
        c = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let (config, data) = setup(1e-3, 1);
        let model = MidreModel::new(config.model.clone(), 1).unwrap();
        assert!(matches!(train(model, &data, &[], &config), Err(Error::Validation(_))));
    }

    #[test]
    fn divergence_reports_epoch_and_step() {
        assert!(matches!(
            diverged(3, 7, Error::NonFinite { op: "x".into() }),
            Error::Diverged { epoch: 3, step: 7, .. }
        ));
    }
}
