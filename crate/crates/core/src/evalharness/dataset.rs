use std::collections::HashMap;
use std::path::Path;

use crate::data::{
    load_features, load_jsonl, load_latents, toy_embed, toy_text_features, FeatureRecord, Latent, Sample, Split,
    SyntheticCorpus, BUNDLES_FILE, FEATURES_DIR, LATENTS_FILE, SAMPLES_FILE,
};
use crate::model::{encode, encode_augmented, token_id, ForwardInputs, Label, ModelConfig};
use crate::rationale::{load_bundles, RationaleBundle, Stage};
use crate::{Error, Result};

/// Samples with their features, rationale bundles and (for synthetic data)
/// latent attributes.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub features: HashMap<String, FeatureRecord>,
    pub bundles: HashMap<String, RationaleBundle>,
    pub latents: HashMap<String, Latent>,
}

impl Dataset {
    pub fn from_corpus(corpus: &SyntheticCorpus) -> Self {
        Self {
            samples: corpus.samples.clone(),
            features: corpus.features.iter().map(|f| (f.id.clone(), f.clone())).collect(),
            bundles: corpus
                .bundles
                .iter()
                .map(|b| (b.sample_id.clone(), b.clone()))
                .collect(),
            latents: corpus.latents.iter().map(|l| (l.id.clone(), l.clone())).collect(),
        }
    }

    /// Loads a data directory: `samples.jsonl`, then `features/<id>.mft` when the
    /// directory exists (toy features otherwise), `bundles.jsonl` and
    /// `latents.jsonl` when present.
    pub fn load(dir: &Path, config: &ModelConfig, toy_seed: u64) -> Result<Self> {
        let samples = load_jsonl(&dir.join(SAMPLES_FILE))?;
        let feature_dir = dir.join(FEATURES_DIR);
        let mut features = HashMap::with_capacity(samples.len());
        for s in &samples {
            let f = if feature_dir.is_dir() {
                load_features(&feature_dir, &s.id, Some(config))?
            } else {
                toy_embed(s, config, toy_seed)
            };
            features.insert(s.id.clone(), f);
        }
        let bundles_path = dir.join(BUNDLES_FILE);
        let bundles = if bundles_path.exists() {
            load_bundles(&bundles_path)?
        } else {
            HashMap::new()
        };
        let latents_path = dir.join(LATENTS_FILE);
        let latents = if latents_path.exists() {
            load_latents(&latents_path)?
                .into_iter()
                .map(|l| (l.id.clone(), l))
                .collect()
        } else {
            HashMap::new()
        };
        Ok(Self {
            samples,
            features,
            bundles,
            latents,
        })
    }

    pub fn split(&self, split: Split) -> Vec<&Sample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }
}

/// How a run builds the model inputs of each sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputPlan {
    /// Rationale stages appended to the text. Empty means the plain text alone.
    pub rationale: Vec<Stage>,
    /// Feed the augmented text as external features and embed the plain text.
    pub reverse_streams: bool,
    /// Seed of the toy embedder used for the augmented-text features when reversed.
    pub toy_seed: u64,
}

impl Default for InputPlan {
    fn default() -> Self {
        Self {
            rationale: Stage::ALL.to_vec(),
            reverse_streams: false,
            toy_seed: 0,
        }
    }
}

/// One model-ready sample.
#[derive(Clone, Debug)]
pub struct Example {
    pub id: String,
    pub label: Label,
    pub inputs: ForwardInputs<f32>,
}

const EMPTY_TOKEN: &str = "<empty>";

fn ids_or_placeholder(mut ids: Vec<usize>, vocab: usize) -> Vec<usize> {
    if ids.is_empty() {
        ids.push(token_id(EMPTY_TOKEN, vocab));
    }
    ids
}

/// Builds examples for `samples`. The augmented stream is the text followed by
/// the selected rationale stages, cut at `max_tokens`.
pub fn build_examples(
    dataset: &Dataset,
    samples: &[&Sample],
    config: &ModelConfig,
    plan: &InputPlan,
) -> Result<Vec<Example>> {
    samples
        .iter()
        .map(|s| {
            let features = dataset
                .features
                .get(&s.id)
                .ok_or_else(|| Error::Validation(format!("no features for sample `{}`", s.id)))?;
            features.check(config)?;
            let rationale = if plan.rationale.is_empty() {
                String::new()
            } else {
                dataset
                    .bundles
                    .get(&s.id)
                    .ok_or_else(|| {
                        Error::Validation(format!("no rationale bundle for sample `{}`", s.id))
                    })?
                    .combined_for(&plan.rationale)
            };
            let (tokens, text) = if plan.reverse_streams {
                let mut ids = encode(&s.text, config.vocab);
                ids.truncate(config.max_tokens);
                let augmented = format!("{} {rationale}", s.text);
                (
                    ids_or_placeholder(ids, config.vocab),
                    toy_text_features(&augmented, config.clip_text_dim, plan.toy_seed),
                )
            } else {
                (
                    ids_or_placeholder(
                        encode_augmented(&s.text, &rationale, config.vocab, config.max_tokens),
                        config.vocab,
                    ),
                    features.text.clone(),
                )
            };
            Ok(Example {
                id: s.id.clone(),
                label: s.label,
                inputs: ForwardInputs {
                    image: features.image.clone(),
                    text,
                    tokens,
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    fn setup() -> (Dataset, ModelConfig) {
        let spec = SyntheticSpec {
            n_samples: 20,
            image_tokens: 4,
            image_dim: 8,
            text_dim: 8,
            ..Default::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        let config = ModelConfig {
            vocab: 97,
            max_tokens: 64,
            ..spec.feature_config(&ModelConfig::tiny(8, 1, 4, 64))
        };
        (Dataset::from_corpus(&corpus), config)
    }

    #[test]
    fn rationale_subset_changes_token_stream() {
        let (d, c) = setup();
        let s: Vec<&Sample> = d.samples.iter().take(3).collect();
        let plain = InputPlan {
            rationale: vec![],
            ..Default::default()
        };
        let full = build_examples(&d, &s, &c, &InputPlan::default()).unwrap();
        let none = build_examples(&d, &s, &c, &plain).unwrap();
        for (f, n) in full.iter().zip(&none) {
            assert!(f.inputs.tokens.len() > n.inputs.tokens.len());
            assert_eq!(&f.inputs.tokens[..n.inputs.tokens.len()], &n.inputs.tokens[..]);
            assert_eq!(f.inputs.text, n.inputs.text);
            assert!(f.inputs.tokens.len() <= c.max_tokens);
        }
    }

    #[test]
    fn reversed_streams_swap_roles() {
        let (d, c) = setup();
        let s: Vec<&Sample> = d.samples.iter().take(2).collect();
        let rev = InputPlan {
            reverse_streams: true,
            ..Default::default()
        };
        let e = build_examples(&d, &s, &c, &rev).unwrap();
        assert_eq!(e[0].inputs.tokens, encode(&s[0].text, c.vocab));
        assert!(e[0].inputs.text.rows() > s[0].text.split_whitespace().count());
    }

    #[test]
    fn missing_bundle_is_reported() {
        let (mut d, c) = setup();
        let id = d.samples[0].id.clone();
        d.bundles.remove(&id);
        let s: Vec<&Sample> = d.samples.iter().take(1).collect();
        match build_examples(&d, &s, &c, &InputPlan::default()) {
            Err(Error::Validation(m)) => assert!(m.contains(&id)),
            other => panic!("unexpected {other:?}"),
        }
        let plain = InputPlan {
            rationale: vec![],
            ..Default::default()
        };
        assert!(build_examples(&d, &s, &c, &plain).is_ok());
    }
}
