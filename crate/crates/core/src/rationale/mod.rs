//! Three-stage rationale extraction: image-only, text-only and joint
//! image-text requests to a vision-language chat endpoint, parsers for their
//! structured replies, and a persistent cache.

mod bundle;
mod cache;
mod client;
mod parse;
mod pipeline;
mod prompts;
mod request;

pub use bundle::{combine, RationaleBundle, IMAGE_MARKER, MULTI_MARKER, TEXT_MARKER};
pub use cache::{cache_key, load_bundles, write_bundles, RationaleCache};
pub use client::{extract_text, Completion, HttpLvlmClient, LvlmClient};
pub use parse::{parse_multimodal_stage, parse_single_stage, MultimodalParse, ParseStatus, StageResult};
pub use pipeline::{generate_all, generate_bundle, BundleOutcome};
pub use prompts::{PromptSet, PromptTemplate, Stage, IMAGE_PROMPT, MULTIMODAL_PROMPT, TEXT_PROMPT};
pub use request::{build_request, media_type_for, ImagePayload, ImageStyle, LvlmEndpointConfig, RationaleInput};
