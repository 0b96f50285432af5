//! Deterministic stand-in for frozen image and text encoders.
//!
//! Text rows are hash-seeded vectors of the tokens. Image grids alternate
//! content rows, built from the words of the image reference, with background
//! rows shared by every image. All entries lie in `[-1, 1]`, so every row norm
//! is at most `√d`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FeatureRecord, Sample};
use crate::model::{fnv1a64, tokenize, ModelConfig};
use crate::numerics::Tensor;

const CONTENT_WEIGHT: f32 = 0.8;
const NOISE_WEIGHT: f32 = 0.2;

/// Uniform `[-1, 1)` vector keyed by `(seed, domain, key)`.
pub fn hash_vector(seed: u64, domain: &str, key: &str, dim: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(format!("{seed}:{domain}:{key}").as_bytes()));
    (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

fn ensure_nonzero(mut row: Vec<f32>) -> Vec<f32> {
    if row.iter().all(|v| *v == 0.0) {
        row[0] = 1.0;
    }
    row
}

/// One row per token; a single placeholder row for empty text.
pub fn toy_text_features(text: &str, dim: usize, seed: u64) -> Tensor<f32> {
    let mut tokens = tokenize(text);
    if tokens.is_empty() {
        tokens.push("<empty>".into());
    }
    let rows: Vec<Vec<f32>> = tokens
        .iter()
        .map(|t| ensure_nonzero(hash_vector(seed, "tok", t, dim)))
        .collect();
    Tensor::from_rows(&rows).expect("toy text rows are finite and non-empty")
}

/// Alphabetic words of an image reference such as `photo-sunny-beach-00042`.
pub fn image_words(image_ref: &str) -> Vec<String> {
    let words: Vec<String> = image_ref
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !w.chars().all(|c| c.is_ascii_digit()))
        .map(str::to_lowercase)
        .collect();
    if words.is_empty() {
        vec![image_ref.to_lowercase()]
    } else {
        words
    }
}

/// `rows × dim` grid: even rows carry the mean word vector of the reference,
/// odd rows a fixed background pattern, each mixed with per-image noise.
pub fn toy_image_features(image_ref: &str, rows: usize, dim: usize, seed: u64) -> Tensor<f32> {
    let words = image_words(image_ref);
    let mut content = vec![0.0f32; dim];
    for w in &words {
        for (c, v) in content.iter_mut().zip(hash_vector(seed, "tok", w, dim)) {
            *c += v / words.len() as f32;
        }
    }
    let grid: Vec<Vec<f32>> = (0..rows)
        .map(|j| {
            let base = if j % 2 == 0 {
                content.clone()
            } else {
                hash_vector(seed, "background", &j.to_string(), dim)
            };
            let noise = hash_vector(seed, "noise", &format!("{image_ref}#{j}"), dim);
            ensure_nonzero(
                base.iter()
                    .zip(noise)
                    .map(|(b, n)| CONTENT_WEIGHT * b + NOISE_WEIGHT * n)
                    .collect(),
            )
        })
        .collect();
    Tensor::from_rows(&grid).expect("toy image rows are finite and non-empty")
}

/// Features for `sample` sized by `config`. Same `(sample, seed)`, same bits.
pub fn toy_embed(sample: &Sample, config: &ModelConfig, seed: u64) -> FeatureRecord {
    FeatureRecord {
        id: sample.id.clone(),
        image: toy_image_features(&sample.image_ref, config.image_tokens, config.image_dim, seed),
        text: toy_text_features(&sample.text, config.clip_text_dim, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::model::Label;

    fn sample(text: &str, image: &str) -> Sample {
        Sample {
            id: "s".into(),
            text: text.into(),
            image_ref: image.into(),
            label: Label::No,
            split: Split::Train,
        }
    }

    fn norms(t: &Tensor<f32>) -> Vec<f64> {
        (0..t.rows())
            .map(|r| t.row(r).iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt())
            .collect()
    }

    #[test]
    fn deterministic_and_token_sensitive() {
        let c = ModelConfig::default();
        let a = toy_embed(&sample("what a lovely monday", "photo-sunny-beach-1"), &c, 7);
        let b = toy_embed(&sample("what a lovely monday", "photo-sunny-beach-1"), &c, 7);
        assert_eq!(a, b);
        let d = toy_embed(&sample("what a dreadful monday", "photo-sunny-beach-1"), &c, 7);
        assert_ne!(a.text, d.text);
        assert_eq!(a.image, d.image);
        let e = toy_embed(&sample("what a lovely monday", "photo-gloomy-beach-1"), &c, 7);
        assert_ne!(a.image, e.image);
        assert_ne!(a, toy_embed(&sample("what a lovely monday", "photo-sunny-beach-1"), &c, 8));
        assert_eq!(a.image.shape(), [c.image_tokens, c.image_dim]);
        assert_eq!(a.text.shape(), [4, c.clip_text_dim]);
    }

    #[test]
    fn image_words_skip_numbers() {
        assert_eq!(image_words("photo-sunny-beach-00042"), ["photo", "sunny", "beach"]);
        assert_eq!(image_words("img/123.jpg"), ["img", "jpg"]);
        assert_eq!(image_words("123"), ["123"]);
    }

    #[test]
    fn row_norms_stay_within_bound_over_many_samples() {
        let c = ModelConfig::default();
        let limit = 2.0 * (c.image_dim as f64).sqrt();
        let mut max_seen = 0.0f64;
        for i in 0..1000 {
            let s = sample(
                &format!("post {i} about a {} day", ["good", "bad", "long"][i % 3]),
                &format!("photo-{}-street-{i:05}", ["sunny", "grim"][i % 2]),
            );
            let f = toy_embed(&s, &c, i as u64 % 5);
            for n in norms(&f.image).into_iter().chain(norms(&f.text)) {
                assert!(n > 0.0 && n <= limit, "norm {n}");
                max_seen = max_seen.max(n);
            }
        }
        // entries are bounded by one, so the tighter bound √d also holds
        assert!(max_seen <= (c.image_dim as f64).sqrt());
    }

    #[test]
    fn empty_text_yields_one_row() {
        assert_eq!(toy_text_features("   ", 8, 0).shape(), [1, 8]);
    }
}
