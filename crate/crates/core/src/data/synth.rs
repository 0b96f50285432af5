//! Synthetic contextual-sarcasm corpus.
//!
//! Every sample has an image polarity, a text polarity and a hidden context bit.
//! Ordinary samples are sarcastic exactly when the two polarities disagree, which
//! the features reveal. Context samples take their label from the hidden bit,
//! which only the multimodal rationale states; with probability `rationale_noise`
//! that rationale is replaced by an uninformative sentence.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{toy_embed, write_features, write_jsonl, FeatureRecord, Sample, Split};
use crate::model::{Label, ModelConfig};
use crate::rationale::{
    parse_multimodal_stage, parse_single_stage, write_bundles, PromptSet, RationaleBundle, Stage,
};
use crate::{Error, Result};

/// Model name recorded in the keys of generated bundles.
pub const SYNTHETIC_MODEL: &str = "synthetic-oracle";

const POSITIVE_WORDS: [&str; 3] = ["wonderful", "lovely", "fantastic"];
const NEGATIVE_WORDS: [&str; 3] = ["terrible", "awful", "dreadful"];
const NOUNS: [&str; 6] = ["monday", "commute", "meeting", "weekend", "dinner", "flight"];
const TEMPLATES: [&str; 3] = ["what a {adj} {noun}", "another {adj} {noun} today", "such a {adj} {noun} again"];
const SUNNY_WORDS: [&str; 3] = ["sunny", "bright", "cheerful"];
const GLOOMY_WORDS: [&str; 3] = ["gloomy", "rainy", "grim"];
const SCENES: [&str; 5] = ["beach", "office", "street", "kitchen", "park"];
const DISTRACTORS: [&str; 3] = [
    "The response was cut off before any analysis was given.",
    "I am unable to comment on this content.",
    "This looks like an ordinary social media post.",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    /// Share of samples whose label only the rationale reveals.
    pub context_fraction: f64,
    /// Probability that a multimodal rationale is replaced by a distractor.
    pub rationale_noise: f64,
    pub seed: u64,
    pub image_tokens: usize,
    pub image_dim: usize,
    pub text_dim: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            n_samples: 2000,
            context_fraction: 0.4,
            rationale_noise: 0.0,
            seed: 7,
            image_tokens: m.image_tokens,
            image_dim: m.image_dim,
            text_dim: m.clip_text_dim,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("context_fraction", self.context_fraction),
            ("rationale_noise", self.rationale_noise),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.n_samples < 2 {
            return Err(Error::Validation("n_samples must be at least 2".into()));
        }
        if self.image_tokens == 0 || self.image_dim == 0 || self.text_dim == 0 {
            return Err(Error::Validation("feature dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Best accuracy of a classifier that sees only features: `1 − ρ/2`.
    pub fn feature_only_bound(&self) -> f64 {
        1.0 - self.context_fraction / 2.0
    }

    /// Best accuracy of a classifier that also reads rationales: `1 − ρη/2`.
    pub fn rationale_bound(&self) -> f64 {
        1.0 - self.context_fraction * self.rationale_noise / 2.0
    }

    /// Configuration whose feature dimensions match the generated files.
    pub fn feature_config(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            image_tokens: self.image_tokens,
            image_dim: self.image_dim,
            clip_text_dim: self.text_dim,
            ..base.clone()
        }
    }
}

/// Hidden attributes of one generated sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Latent {
    pub id: String,
    /// `true` for the pleasant polarity.
    pub image_polarity: bool,
    pub text_polarity: bool,
    pub context: bool,
    pub context_bit: bool,
    /// The multimodal rationale is a distractor.
    pub noisy: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub spec: SyntheticSpec,
    pub samples: Vec<Sample>,
    pub features: Vec<FeatureRecord>,
    pub bundles: Vec<RationaleBundle>,
    pub latents: Vec<Latent>,
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words[rng.random_range(0..words.len())]
}

fn balanced_bits(n: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut bits: Vec<bool> = (0..n).map(|i| i < n / 2).collect();
    if n % 2 == 1 {
        bits[n / 2] = rng.random_bool(0.5);
    }
    bits.shuffle(rng);
    bits
}

fn tone(positive: bool) -> &'static str {
    if positive {
        "positive"
    } else {
        "negative"
    }
}

fn single_raw(reason: &str) -> String {
    format!("- **Label**: [0]\n- **Reason**: [{reason}]")
}

fn multimodal_raw(label: bool, supporting: &str, image_caption: &str) -> String {
    let l = label as u8;
    format!(
        "Caption in Image: [none]\nSupporting Text Analysis:\n  - Label: [{l}]\n  - Reason: [{supporting}]\nImage-Caption Analysis:\n  - Label: [{l}]\n  - Reason: [{image_caption}]"
    )
}

/// Generates a corpus. Bit-reproducible for a fixed spec.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_samples;
    let n_context = (spec.context_fraction * n as f64).round() as usize;
    let context_labels = balanced_bits(n_context, &mut rng);
    let plain_labels = balanced_bits(n - n_context, &mut rng);

    // (context, label) per sample, shuffled so splits mix both kinds
    let mut plan: Vec<(bool, bool)> = context_labels
        .into_iter()
        .map(|l| (true, l))
        .chain(plain_labels.into_iter().map(|l| (false, l)))
        .collect();
    plan.shuffle(&mut rng);

    let n_train = (n as f64 * 0.70).round() as usize;
    let n_val = (n as f64 * 0.15).round() as usize;
    let feature_config = spec.feature_config(&ModelConfig::default());

    let mut corpus = SyntheticCorpus {
        spec: spec.clone(),
        samples: Vec::with_capacity(n),
        features: Vec::with_capacity(n),
        bundles: Vec::with_capacity(n),
        latents: Vec::with_capacity(n),
    };
    for (i, (context, label)) in plan.into_iter().enumerate() {
        let id = format!("syn-{i:05}");
        let image_polarity = rng.random_bool(0.5);
        let text_polarity = if context {
            rng.random_bool(0.5)
        } else {
            image_polarity ^ label
        };
        let noisy = rng.random_bool(spec.rationale_noise);

        let adjective = pick(&mut rng, if text_polarity { &POSITIVE_WORDS } else { &NEGATIVE_WORDS });
        let noun = pick(&mut rng, &NOUNS);
        let text = pick(&mut rng, &TEMPLATES)
            .replace("{adj}", adjective)
            .replace("{noun}", noun);
        let look = pick(&mut rng, if image_polarity { &SUNNY_WORDS } else { &GLOOMY_WORDS });
        let scene = pick(&mut rng, &SCENES);
        let image_ref = format!("photo-{look}-{scene}-{i:05}");

        let r_image = parse_single_stage(Stage::Image, &single_raw(&format!("the photo looks {look} and shows a {scene}")));
        let r_text = parse_single_stage(Stage::Text, &single_raw(&format!("the text calls the {noun} {adjective}")));
        let multi_raw = if noisy {
            pick(&mut rng, &DISTRACTORS).to_string()
        } else {
            let supporting = format!("the text is {} in tone", tone(text_polarity));
            let verdict = if label { "sarcastic" } else { "sincere" };
            let analysis = if context {
                format!("background knowledge about this event shows the remark is {verdict}")
            } else if label {
                format!("the {} words contradict the {look} photo so the post is {verdict}", tone(text_polarity))
            } else {
                format!("the {} words match the {look} photo so the post is {verdict}", tone(text_polarity))
            };
            multimodal_raw(label, &supporting, &analysis)
        };
        let r_multi = parse_multimodal_stage(&multi_raw).into_stage_result();

        let split = if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        let sample = Sample {
            id: id.clone(),
            text,
            image_ref,
            label: Label::from_bit(label),
            split,
        };
        corpus.features.push(toy_embed(&sample, &feature_config, spec.seed));
        corpus
            .bundles
            .push(RationaleBundle::new(id.clone(), Some(r_image), Some(r_text), Some(r_multi)));
        corpus.latents.push(Latent {
            id,
            image_polarity,
            text_polarity,
            context,
            context_bit: context && label,
            noisy,
        });
        corpus.samples.push(sample);
    }
    Ok(corpus)
}

pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const FEATURES_DIR: &str = "features";
pub const BUNDLES_FILE: &str = "bundles.jsonl";
pub const LATENTS_FILE: &str = "latents.jsonl";

impl SyntheticCorpus {
    /// Writes `samples.jsonl`, `features/<id>.mft`, `bundles.jsonl` and `latents.jsonl`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join(FEATURES_DIR))?;
        write_jsonl(&dir.join(SAMPLES_FILE), &self.samples)?;
        for f in &self.features {
            write_features(&dir.join(FEATURES_DIR), f)?;
        }
        write_bundles(&dir.join(BUNDLES_FILE), &self.bundles, &PromptSet::shipped(), SYNTHETIC_MODEL)?;
        write_latents(&dir.join(LATENTS_FILE), &self.latents)
    }
}

pub fn write_latents(path: &Path, latents: &[Latent]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for l in latents {
        serde_json::to_writer(&mut out, l)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_latents(path: &Path) -> Result<Vec<Latent>> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let mut out = Vec::new();
    for (i, line) in std::fs::read_to_string(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
