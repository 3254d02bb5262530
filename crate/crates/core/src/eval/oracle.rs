//! Scripted backends that answer from a dataset's ground truth.
//!
//! The vision-language model names the labelled key object (the greedy
//! prompt also gets a distractor), answers the end-to-end question with the
//! label, and writes a numbered manipulation transcript that agrees with the
//! factor labels. The detector returns the ground-truth mask's bounding box
//! with score 1 and the segmenter returns the mask itself. Detector queries
//! for any other phrase get no detections.

use std::sync::Arc;

use super::dataset::{Dataset, ManipulationLabels};
use super::EvalError;
use crate::gateway::rle;
use crate::gateway::wire::{
    self, DetectRequest, DetectResponse, SegmentRequest, SegmentResponse, VlmRequest, VlmResponse,
    WireDetection,
};
use crate::gateway::{Backends, EndpointKind, Outcome, Request, Response, ScriptedBackend};
use crate::manipulation::build_manipulation_prompt;
use crate::obstruction::{PromptVariant, build_prompt, clean_phrase, normalize_phrase};

/// Phrase the greedy answer adds next to the real key object.
pub const GREEDY_DISTRACTOR: &str = "wall";

fn yes_no(v: bool) -> &'static str {
    if v { "Yes" } else { "No" }
}

/// A numbered answer to the manipulation prompt consistent with `labels`.
pub fn oracle_transcript(labels: &ManipulationLabels) -> String {
    format!(
        "1. A virtual overlay.\n2. The key object.\n3. {}, judged against the label.\n4. {}, judged against the label.\n5. {}, judged against the label.\n6. {}.",
        yes_no(labels.alignment),
        yes_no(labels.style),
        yes_no(labels.misrepresentation),
        yes_no(labels.manipulated)
    )
}

fn vlm(backend: &mut ScriptedBackend, images: Vec<String>, prompt: String, text: String) {
    backend.insert(
        &Request::Vlm(VlmRequest { prompt, images }),
        Response::Vlm(VlmResponse { text }),
    );
}

/// Builds the ground-truth backend for every sample of `dataset`.
pub fn ground_truth_backend(dataset: &Dataset) -> Result<ScriptedBackend, EvalError> {
    let mut backend = ScriptedBackend::lenient().with_default(
        EndpointKind::Detect,
        Outcome::Ok(Response::Detect(DetectResponse { detections: vec![] })),
    );
    match dataset {
        Dataset::Obstruction { samples, .. } => {
            for s in samples {
                let pair = s.load_pair()?;
                let gt = s.load_gt_mask()?;
                let raw = wire::encode_image(pair.raw());
                let aug = wire::encode_image(pair.augmented());
                let phrase = normalize_phrase(&clean_phrase(&s.key_object));
                for variant in [PromptVariant::Standard, PromptVariant::Underdetailed] {
                    vlm(&mut backend, vec![raw.clone()], build_prompt(&variant), s.key_object.clone());
                }
                vlm(
                    &mut backend,
                    vec![raw.clone()],
                    build_prompt(&PromptVariant::Greedy),
                    format!("{}\n{GREEDY_DISTRACTOR}", s.key_object),
                );
                if !phrase.is_empty() {
                    vlm(
                        &mut backend,
                        vec![raw.clone(), aug],
                        build_prompt(&PromptVariant::EndToEndStep2(phrase.clone())),
                        format!("{}.", yes_no(s.obstructed)),
                    );
                }
                let Some(bbox) = gt.bounding_box() else {
                    continue;
                };
                let mut names = vec![phrase, normalize_phrase(&s.key_object)];
                names.dedup();
                for name in names.into_iter().filter(|n| !n.is_empty()) {
                    backend.insert(
                        &Request::Detect(DetectRequest {
                            image: raw.clone(),
                            phrases: vec![name.clone()],
                        }),
                        Response::Detect(DetectResponse {
                            detections: vec![WireDetection {
                                bbox: bbox.to_array(),
                                score: 1.0,
                                phrase: name,
                            }],
                        }),
                    );
                }
                backend.insert(
                    &Request::Segment(SegmentRequest {
                        image: raw.clone(),
                        boxes: vec![bbox.to_array()],
                    }),
                    Response::Segment(SegmentResponse {
                        masks: vec![rle::encode(&gt)],
                    }),
                );
            }
        }
        Dataset::Manipulation(samples) => {
            for s in samples {
                let pair = s.load_pair()?;
                vlm(
                    &mut backend,
                    vec![wire::encode_image(pair.raw()), wire::encode_image(pair.augmented())],
                    build_manipulation_prompt().to_owned(),
                    oracle_transcript(&s.labels),
                );
            }
        }
    }
    Ok(backend)
}

/// [`ground_truth_backend`] serving all three roles.
pub fn ground_truth_backends(dataset: &Dataset) -> Result<Backends, EvalError> {
    Ok(Backends::uniform(Arc::new(ground_truth_backend(dataset)?)))
}
