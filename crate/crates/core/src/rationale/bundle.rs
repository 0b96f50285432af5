use serde::{Deserialize, Serialize};

use super::{ParseStatus, Stage, StageResult};

pub const IMAGE_MARKER: &str = "[IMG-RAT]";
pub const TEXT_MARKER: &str = "[TXT-RAT]";
pub const MULTI_MARKER: &str = "[MM-RAT]";

/// The three stage results of one sample and their combined text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationaleBundle {
    pub sample_id: String,
    pub r_image: Option<StageResult>,
    pub r_text: Option<StageResult>,
    pub r_multi: Option<StageResult>,
    pub combined: String,
}

impl RationaleBundle {
    pub fn new(
        sample_id: impl Into<String>,
        r_image: Option<StageResult>,
        r_text: Option<StageResult>,
        r_multi: Option<StageResult>,
    ) -> Self {
        let combined = combine(r_image.as_ref(), r_text.as_ref(), r_multi.as_ref());
        Self {
            sample_id: sample_id.into(),
            r_image,
            r_text,
            r_multi,
            combined,
        }
    }

    pub fn get(&self, stage: Stage) -> Option<&StageResult> {
        match stage {
            Stage::Image => self.r_image.as_ref(),
            Stage::Text => self.r_text.as_ref(),
            Stage::Multimodal => self.r_multi.as_ref(),
        }
    }

    /// Combined text over a subset of stages, in the fixed I, T, M order.
    pub fn combined_for(&self, stages: &[Stage]) -> String {
        let pick = |s: Stage| self.get(s).filter(|_| stages.contains(&s));
        combine(pick(Stage::Image), pick(Stage::Text), pick(Stage::Multimodal))
    }

    pub fn statuses(&self) -> Vec<(Stage, ParseStatus)> {
        Stage::ALL
            .iter()
            .filter_map(|&s| self.get(s).map(|r| (s, r.parse_status)))
            .collect()
    }
}

/// `[IMG-RAT] R^I [TXT-RAT] R^T [MM-RAT] R^M`, skipping absent stages.
pub fn combine(
    r_image: Option<&StageResult>,
    r_text: Option<&StageResult>,
    r_multi: Option<&StageResult>,
) -> String {
    [(IMAGE_MARKER, r_image), (TEXT_MARKER, r_text), (MULTI_MARKER, r_multi)]
        .into_iter()
        .filter_map(|(marker, r)| r.map(|r| format!("{marker} {}", r.reason.trim())))
        .collect::<Vec<_>>()
        .join(" ")
}
