//! Sample schemas, feature files, the toy embedder and the synthetic corpus.

mod mft;
mod sample;
mod synth;
mod toy;

pub use mft::{decode, encode, feature_path, load_features, write_features, FeatureRecord, MAGIC};
pub use sample::{load_jsonl, write_jsonl, Sample, Split};
pub use synth::{
    generate_synthetic, load_latents, write_latents, Latent, SyntheticCorpus, SyntheticSpec, BUNDLES_FILE,
    FEATURES_DIR, LATENTS_FILE, SAMPLES_FILE, SYNTHETIC_MODEL,
};
pub use toy::{hash_vector, image_words, toy_embed, toy_image_features, toy_text_features};
