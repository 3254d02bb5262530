//! Key-object prompts and parsing of the model's answers.

use serde::{Deserialize, Serialize};

use super::keyobjects::normalize_phrase;
use super::ObstructionError;

/// Maximum words kept in a key-object phrase.
pub const MAX_PHRASE_WORDS: usize = 4;

const STANDARD: &str = "You are an expert in observing the world. Based on the scenario, identify the key object that needs people's attention or safety inspection in the image based on the scenario. Give only one object that you think is important to be noticed, and do not provide any other information. The objects can be caution information signs, electrical devices, safety equipment, etc. If you think the color is important, you can also mention the color, such as 'red box,' but be precise and describe the object with no more than 4 words.";

const UNDERDETAILED: &str = "Identify the key object in the image. Give only one object that you think is important to be noticed. Give the name of the object only and do not provide any other information.";

const END_TO_END_STEP2: &str = "You are an expert in augmented content analysis. Look at both images. The first image is the raw image and there is a {key_obj} in it. The second image is an augmented image created by overlaying some virtual content on the raw image. Identify whether the virtual elements in the second image are obstructing the {key_obj}. If the {key_obj} is blocked or obfuscated, then answer Yes. If the {key_obj} is not blocked or obfuscated then answer No. The answer should contain only 'Yes' or 'No.'";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "key_object", rename_all = "snake_case")]
pub enum PromptVariant {
    Standard,
    Underdetailed,
    Greedy,
    /// Second step of the VLM-only baseline: asks directly whether the named
    /// key object is obstructed.
    EndToEndStep2(String),
}

impl PromptVariant {
    pub fn end_to_end(key_object: impl Into<String>) -> Result<Self, ObstructionError> {
        let k = key_object.into();
        if k.trim().is_empty() {
            return Err(ObstructionError::EmptyKeyObject);
        }
        Ok(PromptVariant::EndToEndStep2(k))
    }

    pub fn name(&self) -> &'static str {
        match self {
            PromptVariant::Standard => "standard",
            PromptVariant::Underdetailed => "underdetailed",
            PromptVariant::Greedy => "greedy",
            PromptVariant::EndToEndStep2(_) => "end_to_end_step2",
        }
    }
}

impl std::str::FromStr for PromptVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(PromptVariant::Standard),
            "underdetailed" => Ok(PromptVariant::Underdetailed),
            "greedy" => Ok(PromptVariant::Greedy),
            other => Err(format!("unknown prompt variant `{other}`")),
        }
    }
}

pub fn build_prompt(variant: &PromptVariant) -> String {
    match variant {
        PromptVariant::Standard => STANDARD.to_owned(),
        PromptVariant::Underdetailed => UNDERDETAILED.to_owned(),
        PromptVariant::Greedy => STANDARD.replace("Give only one object", "Give any object"),
        PromptVariant::EndToEndStep2(k) => END_TO_END_STEP2.replace("{key_obj}", k),
    }
}

/// Turns a key-object answer into normalized phrases.
///
/// Single-object variants yield at most one phrase (the first non-empty
/// line). The greedy variant splits on newlines, commas, semicolons and list
/// markers.
pub fn parse_keyobject_response(text: &str, variant: &PromptVariant) -> Result<Vec<String>, ObstructionError> {
    let phrases: Vec<String> = match variant {
        PromptVariant::Greedy => {
            let mut out: Vec<String> = Vec::new();
            for fragment in text.split(['\n', ',', ';']) {
                let p = clean_phrase(fragment);
                if !p.is_empty() && !out.contains(&p) {
                    out.push(p);
                }
            }
            out
        }
        _ => text
            .lines()
            .map(clean_phrase)
            .find(|p| !p.is_empty())
            .into_iter()
            .collect(),
    };
    if phrases.is_empty() {
        return Err(ObstructionError::EmptyResponse);
    }
    Ok(phrases)
}

/// Normalizes one answer fragment: drops list markers, quotes, trailing
/// punctuation and a leading article, lowercases, and keeps at most
/// [`MAX_PHRASE_WORDS`] words.
pub fn clean_phrase(fragment: &str) -> String {
    let lowered = normalize_phrase(fragment);
    let mut words: Vec<&str> = lowered.split(' ').filter(|w| !w.is_empty()).collect();
    // list markers: "1.", "2)", "-", "*", "•"
    while let Some(first) = words.first() {
        let digits = first.trim_end_matches(['.', ')', ':']);
        let is_marker = matches!(*first, "-" | "*" | "•" | "–")
            || (!digits.is_empty() && digits.len() < first.len() && digits.chars().all(|c| c.is_ascii_digit()));
        if is_marker {
            words.remove(0);
        } else {
            break;
        }
    }
    let mut words: Vec<String> = words
        .into_iter()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_owned())
        .filter(|w| !w.is_empty())
        .collect();
    while words
        .first()
        .is_some_and(|w| matches!(w.as_str(), "a" | "an" | "the"))
    {
        words.remove(0);
    }
    words.truncate(MAX_PHRASE_WORDS);
    words.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_prompt_frame() {
        let p = build_prompt(&PromptVariant::Standard);
        assert!(p.starts_with("You are an expert in observing the world."));
        assert!(p.ends_with("with no more than 4 words."));
    }

    #[test]
    fn greedy_swaps_one_clause() {
        let s = build_prompt(&PromptVariant::Standard);
        let g = build_prompt(&PromptVariant::Greedy);
        assert!(g.contains("Give any object that you think is important to be noticed"));
        assert!(!g.contains("Give only one object"));
        assert_eq!(g, s.replace("Give only one object", "Give any object"));
    }

    #[test]
    fn end_to_end_fills_every_slot() {
        let p = build_prompt(&PromptVariant::end_to_end("stop sign").unwrap());
        assert!(p.contains("whether the virtual elements in the second image are obstructing the stop sign"));
        assert!(!p.contains("{key_obj}"));
        assert_eq!(p.matches("stop sign").count(), 4);
        assert!(PromptVariant::end_to_end("  ").is_err());
    }

    #[test]
    fn parses_single_phrase() {
        assert_eq!(
            parse_keyobject_response("Stop sign.", &PromptVariant::Standard).unwrap(),
            vec!["stop sign"]
        );
        assert_eq!(
            parse_keyobject_response("\n  The Red Fire Extinguisher on the wall\n", &PromptVariant::Underdetailed).unwrap(),
            vec!["red fire extinguisher on"]
        );
        assert_eq!(
            parse_keyobject_response("\"exit sign\"", &PromptVariant::Standard).unwrap(),
            vec!["exit sign"]
        );
    }

    #[test]
    fn parses_greedy_list() {
        assert_eq!(
            parse_keyobject_response("1. exit sign\n2. fire extinguisher", &PromptVariant::Greedy).unwrap(),
            vec!["exit sign", "fire extinguisher"]
        );
        assert_eq!(
            parse_keyobject_response("- knife; scissors, a ceiling fan,,", &PromptVariant::Greedy).unwrap(),
            vec!["knife", "scissors", "ceiling fan"]
        );
    }

    #[test]
    fn empty_answers_are_errors() {
        for text in ["", "   \n ", "...", "1."] {
            assert!(matches!(
                parse_keyobject_response(text, &PromptVariant::Standard),
                Err(ObstructionError::EmptyResponse)
            ));
        }
    }

    #[test]
    fn keeps_hyphens_inside_words() {
        assert_eq!(clean_phrase("No-parking sign!"), "no-parking sign");
    }
}
