//! Prompt builders against hand-transcribed golden files.

use std::path::PathBuf;

use arsentry_core::PromptVariant;
use arsentry_core::manipulation::build_manipulation_prompt;
use arsentry_core::obstruction::{build_prompt, parse_keyobject_response};

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn standard_prompt_is_byte_identical() {
    let p = build_prompt(&PromptVariant::Standard);
    assert_eq!(p, golden("standard.txt"));
    assert!(p.starts_with("You are an expert in observing the world."));
    assert!(p.ends_with("with no more than 4 words."));
}

#[test]
fn underdetailed_prompt_is_byte_identical() {
    assert_eq!(build_prompt(&PromptVariant::Underdetailed), golden("underdetailed.txt"));
}

#[test]
fn greedy_prompt_is_byte_identical() {
    let p = build_prompt(&PromptVariant::Greedy);
    assert_eq!(p, golden("greedy.txt"));
    assert_eq!(
        p,
        build_prompt(&PromptVariant::Standard).replace("Give only one object", "Give any object")
    );
}

#[test]
fn end_to_end_prompt_is_byte_identical() {
    let p = build_prompt(&PromptVariant::end_to_end("stop sign").unwrap());
    assert_eq!(p, golden("end_to_end_stop_sign.txt"));
    assert!(p.contains("whether the virtual elements in the second image are obstructing the stop sign"));
    assert!(!p.contains("{key_obj}"));
    assert!(PromptVariant::end_to_end("  ").is_err());
}

#[test]
fn manipulation_prompt_is_byte_identical() {
    let p = build_manipulation_prompt();
    assert_eq!(p, golden("manipulation.txt"));
    assert_eq!(p, build_manipulation_prompt());
}

#[test]
fn response_parsing_examples() {
    assert_eq!(
        parse_keyobject_response("Stop sign.", &PromptVariant::Standard).unwrap(),
        ["stop sign"]
    );
    assert_eq!(
        parse_keyobject_response("1. exit sign\n2. fire extinguisher", &PromptVariant::Greedy).unwrap(),
        ["exit sign", "fire extinguisher"]
    );
    assert!(parse_keyobject_response("", &PromptVariant::Standard).is_err());
}
