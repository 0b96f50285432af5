//! Parsers for the structured stage outputs.
//!
//! Both parsers are total. Output in the exact requested format is `ok`; output
//! that needs the tolerance ladder (missing bold markers, other brackets, odd
//! indentation, different case) is `repaired`; anything else is `failed` and
//! keeps the whole raw text as the reason so it can still be used as free text.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::Stage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Ok,
    Repaired,
    Failed,
}

impl ParseStatus {
    pub fn name(self) -> &'static str {
        match self {
            ParseStatus::Ok => "ok",
            ParseStatus::Repaired => "repaired",
            ParseStatus::Failed => "failed",
        }
    }

    fn worst(self, other: Self) -> Self {
        self.max(other)
    }
}

/// Parsed output of one stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: Stage,
    #[serde(rename = "label")]
    pub label_hint: Option<u8>,
    pub reason: String,
    #[serde(rename = "status")]
    pub parse_status: ParseStatus,
    pub raw: String,
}

impl StageResult {
    fn failed(stage: Stage, raw: &str) -> Self {
        Self {
            stage,
            label_hint: None,
            reason: raw.trim().to_string(),
            parse_status: ParseStatus::Failed,
            raw: raw.to_string(),
        }
    }
}

static LABEL_STRICT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^- \*\*Label\*\*: \[([01])\][ \t]*$").unwrap());
static REASON_STRICT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^- \*\*Reason\*\*: \[(.*\S.*)\][ \t]*$").unwrap());

static LABEL_LOOSE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?im)^[ \t>]*(?:[-*•+][ \t]*)?(?:\*\*|__)?label(?:\*\*|__)?[ \t]*(?:\*\*)?[ \t]*[:：=][ \t]*(?:\*\*)?[ \t]*[\[(<{]?[ \t]*\**([01])\**[ \t]*[\])>}]?",
    )
    .unwrap()
});
static REASON_LOOSE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?im)^[ \t>]*(?:[-*•+][ \t]*)?(?:\*\*|__)?reason(?:ing)?(?:\*\*|__)?[ \t]*(?:\*\*)?[ \t]*[:：=][ \t]*(?:\*\*)?(.*)$",
    )
    .unwrap()
});

static MM_LABEL_STRICT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^  - Label: \[([01])\][ \t]*$").unwrap());
static MM_REASON_STRICT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^  - Reason: \[(.*\S.*)\][ \t]*$").unwrap());

static CAPTION_STRICT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^Caption in Image: \[(.*)\][ \t]*$").unwrap());
static CAPTION_LOOSE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[ \t#>*-]*(?:\*\*)?caption in (?:the )?image(?:\*\*)?[ \t]*(?:\*\*)?[ \t]*:[ \t]*(?:\*\*)?(.*)$")
        .unwrap()
});
static SUPPORTING_HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[ \t#>*-]*(?:\*\*)?supporting[ \t]+text[ \t]+analysis(?:\*\*)?[ \t]*:?(?:\*\*)?[ \t]*:?[ \t]*$")
        .unwrap()
});
static IMAGE_CAPTION_HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?im)^[ \t#>*-]*(?:\*\*)?image[ \t]*[-–][ \t]*caption[ \t]+analysis(?:\*\*)?[ \t]*:?(?:\*\*)?[ \t]*:?[ \t]*$",
    )
    .unwrap()
});
static SUPPORTING_EXACT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^Supporting Text Analysis:[ \t]*$").unwrap());
static IMAGE_CAPTION_EXACT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^Image-Caption Analysis:[ \t]*$").unwrap());

fn strip_brackets(s: &str) -> String {
    let s = s.trim().trim_matches('*').trim();
    let s = s.strip_prefix('[').unwrap_or(s);
    let s = s.strip_suffix(']').unwrap_or(s);
    s.trim().to_string()
}

/// Reason text starting at a loose match, continued over following lines until a
/// blank line or another field.
fn loose_reason(text: &str) -> Option<String> {
    let caps = REASON_LOOSE.captures(text)?;
    let whole = caps.get(0).unwrap();
    let mut parts = vec![caps[1].trim().to_string()];
    for line in text[whole.end()..].lines().skip(1) {
        let t = line.trim();
        if t.is_empty() || LABEL_LOOSE.is_match(line) || t.starts_with('#') {
            break;
        }
        parts.push(t.to_string());
    }
    let reason = strip_brackets(&parts.join(" "));
    (!reason.is_empty()).then_some(reason)
}

fn parse_block(stage: Stage, text: &str, label_strict: &Regex, reason_strict: &Regex) -> StageResult {
    if let (Some(l), Some(r)) = (label_strict.captures(text), reason_strict.captures(text)) {
        let reason = r[1].trim().to_string();
        if !reason.is_empty() {
            return StageResult {
                stage,
                label_hint: Some(l[1].parse().unwrap()),
                reason,
                parse_status: ParseStatus::Ok,
                raw: text.to_string(),
            };
        }
    }
    let label = LABEL_LOOSE.captures(text).map(|c| c[1].parse::<u8>().unwrap());
    match loose_reason(text) {
        Some(reason) => StageResult {
            stage,
            label_hint: label,
            reason,
            parse_status: ParseStatus::Repaired,
            raw: text.to_string(),
        },
        None => StageResult::failed(stage, text),
    }
}

/// Parses `- **Label**: [1/0]` / `- **Reason**: [...]` output of the image and text stages.
pub fn parse_single_stage(stage: Stage, raw: &str) -> StageResult {
    parse_block(stage, raw, &LABEL_STRICT, &REASON_STRICT)
}

/// Blocks of the multimodal stage output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultimodalParse {
    pub caption: String,
    pub supporting: StageResult,
    pub image_caption: StageResult,
    pub status: ParseStatus,
    pub raw: String,
}

impl MultimodalParse {
    /// Collapses to one stage result whose reason joins both analyses.
    pub fn into_stage_result(self) -> StageResult {
        if self.status == ParseStatus::Failed {
            return StageResult::failed(Stage::Multimodal, &self.raw);
        }
        let reason = [&self.supporting.reason, &self.image_caption.reason]
            .iter()
            .filter(|r| !r.is_empty())
            .map(|r| r.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        StageResult {
            stage: Stage::Multimodal,
            label_hint: self.image_caption.label_hint.or(self.supporting.label_hint),
            reason,
            parse_status: self.status,
            raw: self.raw,
        }
    }
}

/// Parses the `Caption in Image` / `Supporting Text Analysis` / `Image-Caption
/// Analysis` output of the multimodal stage.
pub fn parse_multimodal_stage(raw: &str) -> MultimodalParse {
    let sup = SUPPORTING_HEADER.find(raw);
    let img = IMAGE_CAPTION_HEADER.find(raw);
    let failed = || MultimodalParse {
        caption: String::new(),
        supporting: StageResult::failed(Stage::Multimodal, raw),
        image_caption: StageResult::failed(Stage::Multimodal, raw),
        status: ParseStatus::Failed,
        raw: raw.to_string(),
    };
    if sup.is_none() && img.is_none() {
        return failed();
    }
    let block = |start: Option<regex::Match>, other: Option<regex::Match>| -> Option<&str> {
        let s = start?;
        let end = match other {
            Some(o) if o.start() > s.start() => o.start(),
            _ => raw.len(),
        };
        Some(&raw[s.end()..end])
    };
    let parse = |b: Option<&str>| match b {
        Some(text) => parse_block(Stage::Multimodal, text, &MM_LABEL_STRICT, &MM_REASON_STRICT),
        None => StageResult::failed(Stage::Multimodal, ""),
    };
    let supporting = parse(block(sup, img));
    let image_caption = parse(block(img, sup));
    if supporting.parse_status == ParseStatus::Failed && image_caption.parse_status == ParseStatus::Failed {
        return failed();
    }

    let (caption, caption_status) = if let Some(c) = CAPTION_STRICT.captures(raw) {
        (c[1].trim().to_string(), ParseStatus::Ok)
    } else if let Some(c) = CAPTION_LOOSE.captures(raw) {
        (strip_brackets(&c[1]), ParseStatus::Repaired)
    } else {
        (String::new(), ParseStatus::Repaired)
    };
    let headers_status = if SUPPORTING_EXACT.is_match(raw) && IMAGE_CAPTION_EXACT.is_match(raw) {
        ParseStatus::Ok
    } else {
        ParseStatus::Repaired
    };
    let analyses = supporting.parse_status.worst(image_caption.parse_status);
    let status = match analyses {
        ParseStatus::Failed => ParseStatus::Repaired,
        s => s.worst(caption_status).worst(headers_status),
    };
    MultimodalParse {
        caption,
        supporting,
        image_caption,
        status,
        raw: raw.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_single_stage() {
        let r = parse_single_stage(Stage::Text, "- **Label**: [1]\n- **Reason**: [ironic contrast]");
        assert_eq!(r.label_hint, Some(1));
        assert_eq!(r.reason, "ironic contrast");
        assert_eq!(r.parse_status, ParseStatus::Ok);
    }

    #[test]
    fn plain_variant_is_repaired() {
        let r = parse_single_stage(Stage::Text, "Label: 0\nReason: literal statement");
        assert_eq!(r.label_hint, Some(0));
        assert_eq!(r.reason, "literal statement");
        assert_eq!(r.parse_status, ParseStatus::Repaired);
    }

    #[test]
    fn tolerance_ladder_variants() {
        for raw in [
            "  - **Label**: [1]\n  - **Reason**: [exaggerated praise]",
            "- **Label**: 1\n- **Reason**: exaggerated praise",
            "- Label: (1)\n- Reason: exaggerated praise",
            "**Label:** 1\n**Reason:** exaggerated praise",
            "label = [1]\nreason = [exaggerated praise]",
            "Sure!\n\n### Output\n- **LABEL**: [ 1 ]\n- **Reason**: [exaggerated praise]\n",
        ] {
            let r = parse_single_stage(Stage::Image, raw);
            assert_eq!(r.parse_status, ParseStatus::Repaired, "{raw:?}");
            assert_eq!(r.label_hint, Some(1), "{raw:?}");
            assert_eq!(r.reason, "exaggerated praise", "{raw:?}");
        }
    }

    #[test]
    fn multi_line_reason_is_joined() {
        let r = parse_single_stage(Stage::Text, "Label: 1\nReason: first part\nsecond part\n\ntrailing note");
        assert_eq!(r.reason, "first part second part");
    }

    #[test]
    fn free_text_fails_with_raw_reason() {
        let r = parse_single_stage(Stage::Image, "I cannot determine this.");
        assert_eq!(r.label_hint, None);
        assert_eq!(r.reason, "I cannot determine this.");
        assert_eq!(r.parse_status, ParseStatus::Failed);
    }

    const CONFORMANT: &str = "Caption in Image: [Monday again]\nSupporting Text Analysis:\n  - Label: [1]\n  - Reason: [over-the-top enthusiasm]\nImage-Caption Analysis:\n  - Label: [0]\n  - Reason: [the caption describes the photo literally]";

    #[test]
    fn multimodal_conformant() {
        let p = parse_multimodal_stage(CONFORMANT);
        assert_eq!(p.status, ParseStatus::Ok);
        assert_eq!(p.caption, "Monday again");
        assert_eq!(p.supporting.label_hint, Some(1));
        assert_eq!(p.supporting.reason, "over-the-top enthusiasm");
        assert_eq!(p.image_caption.label_hint, Some(0));
        let r = p.into_stage_result();
        assert_eq!(r.reason, "over-the-top enthusiasm the caption describes the photo literally");
        assert_eq!(r.label_hint, Some(0));
        assert_eq!(r.parse_status, ParseStatus::Ok);
    }

    #[test]
    fn multimodal_missing_caption_is_repaired() {
        let raw = CONFORMANT.lines().skip(1).collect::<Vec<_>>().join("\n");
        let p = parse_multimodal_stage(&raw);
        assert_eq!(p.caption, "");
        assert_eq!(p.supporting.parse_status, ParseStatus::Ok);
        assert_eq!(p.image_caption.parse_status, ParseStatus::Ok);
        assert_eq!(p.status, ParseStatus::Repaired);
    }

    #[test]
    fn multimodal_free_form_fails() {
        let raw = "The picture is of a cat and the text talks about Mondays, which may be ironic.";
        let p = parse_multimodal_stage(raw);
        assert_eq!(p.status, ParseStatus::Failed);
        let r = p.into_stage_result();
        assert_eq!(r.reason, raw);
        assert_eq!(r.parse_status, ParseStatus::Failed);
    }

    #[test]
    fn multimodal_bold_headers_are_repaired() {
        let raw = "**Caption in Image:** none\n**Supporting Text Analysis:**\n- Label: 1\n- Reason: mock praise\n**Image-Caption Analysis:**\n- Label: 1\n- Reason: gloomy photo";
        let p = parse_multimodal_stage(raw);
        assert_eq!(p.status, ParseStatus::Repaired);
        assert_eq!(p.caption, "none");
        assert_eq!(p.supporting.reason, "mock praise");
        assert_eq!(p.image_caption.reason, "gloomy photo");
    }

    proptest::proptest! {
        #[test]
        fn arbitrary_replies_never_panic(raw in "(?s).{0,200}") {
            let r = parse_single_stage(Stage::Text, &raw);
            proptest::prop_assert!(r.label_hint.is_none_or(|l| l <= 1));
            let m = parse_multimodal_stage(&raw).into_stage_result();
            proptest::prop_assert_eq!(m.raw, raw);
        }

        #[test]
        fn conformant_replies_round_trip(label in 0u8..2, reason in "[a-z][a-z ]{0,30}[a-z]") {
            let raw = format!("- **Label**: [{label}]\n- **Reason**: [{reason}]");
            let r = parse_single_stage(Stage::Image, &raw);
            proptest::prop_assert_eq!(r.parse_status, ParseStatus::Ok);
            proptest::prop_assert_eq!(r.label_hint, Some(label));
            proptest::prop_assert_eq!(r.reason, reason);
        }
    }
}
