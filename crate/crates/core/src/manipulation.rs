//! Information-manipulation detection.
//!
//! Virtual content manipulates a real object's meaning only when it is
//! aligned with the object, stylistically blends in, and misrepresents the
//! object's function. The vision-language model answers one question per
//! factor; the verdict is their conjunction. When the per-factor answers
//! cannot be located, the whole transcript falls back to whichever of "yes"
//! or "no" occurs last.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{BackendError, ImagingError};
use crate::frame::ImagePair;
use crate::gateway::ModelClient;

const MANIPULATION_PROMPT: &str = "Here are two images. The first one is a raw image, and the second one is an augmented image, created by adding some virtual content to the space.
Please answer the following questions:
1. What is the virtual content in the augmented image?
2. What 'key object' is interacting with the virtual content? Avoid general terms like 'table surface' or 'environment.'
3. Is the virtual content accurately aligned to the object, without a significant gap? Answer yes or no, then explain why.
4. Does the virtual content have a relatively high-quality yet reasonable texture that blends it into the real world? Answer yes or no, then explain why.
5. Do you think the interaction will make users believe the 'key object' has some false functionality or information it does not have, or lose some true functionality or information it actually has? Think creatively, only say no if the combination has no specific semantic relation. Answer yes or no, then explain why.
6. If you answered 'yes' in all questions 3, 4, and 5, you must say 'yes.' Otherwise, you say 'no.'";

#[derive(Debug, Error)]
pub enum ManipulationError {
    #[error("transcript contains neither \"yes\" nor \"no\"")]
    NoVerdict,
    #[error("no answer found for question {0}")]
    MissingAnswer(u8),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ManipulationFactors {
    pub alignment: bool,
    pub style: bool,
    pub misrepresentation: bool,
}

impl ManipulationFactors {
    pub fn new(alignment: bool, style: bool, misrepresentation: bool) -> Self {
        Self {
            alignment,
            style,
            misrepresentation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManipulationResult {
    pub manipulated: bool,
    pub factors: Option<ManipulationFactors>,
    pub transcript: String,
    pub virtual_content: Option<String>,
    pub key_object: Option<String>,
}

pub fn build_manipulation_prompt() -> &'static str {
    MANIPULATION_PROMPT
}

static YES_NO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap());

/// Question markers: "3.", "3)", "Question 3:", "Q3:", optionally bolded,
/// at line start or right after a sentence end.
static QUESTION_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)(?:^|[.!?…)]\s+)[ \t]*(?:\*\*|#+\s*)?(?:question\s*|q\s*)?([1-9])\s*[.:)](?:\*\*)?(?:\s|$)")
        .unwrap()
});

static ANSWER_INSTRUCTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\byes\s+or\s+no\b").unwrap());

/// True for "yes", false for "no", whichever starts last in `text`.
/// Matches whole words only, ignoring case.
pub fn extract_binary_verdict(text: &str) -> Result<bool, ManipulationError> {
    YES_NO
        .find_iter(text)
        .last()
        .map(|m| m.as_str().eq_ignore_ascii_case("yes"))
        .ok_or(ManipulationError::NoVerdict)
}

/// The answer segments of a numbered transcript, indexed by question number.
fn segments(text: &str) -> [Option<&str>; 10] {
    let mut starts: Vec<(u8, usize, usize)> = Vec::new();
    for caps in QUESTION_MARKER.captures_iter(text) {
        let n = caps[1].parse::<u8>().expect("single digit");
        let whole = caps.get(0).expect("group 0");
        starts.push((n, caps.get(1).expect("group 1").start(), whole.end()));
    }
    let mut out: [Option<&str>; 10] = [None; 10];
    for (i, &(n, _, body_start)) in starts.iter().enumerate() {
        if out[n as usize].is_some() {
            continue;
        }
        let end = starts.get(i + 1).map_or(text.len(), |next| next.1);
        out[n as usize] = Some(&text[body_start..end.max(body_start)]);
    }
    out
}

/// Verdict of one factor answer: the first "yes"/"no" after discarding any
/// echoed "yes or no" instruction, since each factor question asks for the
/// answer before the explanation.
fn factor_verdict(segment: &str) -> Option<bool> {
    let cleaned = ANSWER_INSTRUCTION.replace_all(segment, " ");
    YES_NO
        .find(&cleaned)
        .map(|m| m.as_str().eq_ignore_ascii_case("yes"))
}

/// Reads the alignment, style and misrepresentation answers (questions 3-5).
pub fn extract_factor_verdicts(text: &str) -> Result<ManipulationFactors, ManipulationError> {
    let segs = segments(text);
    let read = |n: u8| {
        segs[n as usize]
            .and_then(factor_verdict)
            .ok_or(ManipulationError::MissingAnswer(n))
    };
    Ok(ManipulationFactors {
        alignment: read(3)?,
        style: read(4)?,
        misrepresentation: read(5)?,
    })
}

/// Manipulation requires all three factors.
pub fn combine_factors(f: ManipulationFactors) -> bool {
    f.alignment && f.style && f.misrepresentation
}

fn short_answer(segment: Option<&str>) -> Option<String> {
    let line = segment?.lines().map(str::trim).find(|l| !l.is_empty())?;
    Some(line.trim_matches(|c: char| c == '*' || c.is_whitespace()).to_owned()).filter(|s| !s.is_empty())
}

/// Interprets a transcript produced for the manipulation prompt.
pub fn interpret_transcript(transcript: String) -> Result<ManipulationResult, ManipulationError> {
    let segs = segments(&transcript);
    let virtual_content = short_answer(segs[1]);
    let key_object = short_answer(segs[2]);
    let (manipulated, factors) = match extract_factor_verdicts(&transcript) {
        Ok(f) => {
            let conj = combine_factors(f);
            if let Some(q6) = segs[6].and_then(|s| extract_binary_verdict(s).ok()) {
                if q6 != conj {
                    log::warn!("final answer ({q6}) disagrees with factor conjunction ({conj}); using conjunction");
                }
            }
            (conj, Some(f))
        }
        Err(_) => (extract_binary_verdict(&transcript)?, None),
    };
    Ok(ManipulationResult {
        manipulated,
        factors,
        transcript,
        virtual_content,
        key_object,
    })
}

/// Sends the raw and augmented frames (in that order) with the manipulation
/// prompt and interprets the answer.
pub async fn detect_manipulation(pair: &ImagePair, vlm: &ModelClient) -> Result<ManipulationResult, ManipulationError> {
    let transcript = vlm
        .vlm_complete(&[pair.raw(), pair.augmented()], build_manipulation_prompt())
        .await?;
    interpret_transcript(transcript)
}
