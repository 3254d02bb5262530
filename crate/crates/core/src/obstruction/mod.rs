//! Obstruction detection: find the scene's key objects and decide whether
//! virtual content covers at least `alpha` of any of them.
//!
//! The flow per frame is: extract the collective virtual-content mask by
//! differencing the raw and augmented frames, locate each key object with
//! the open-set detector (best box above a confidence floor) and the
//! segmenter, then test `|key ∩ content| ≥ alpha · |key|` per object. The
//! frame is obstructed if any located object passes.
//!
//! Key objects come from a [`KeyObjectList`] that is refreshed only on
//! demand through the vision-language model.

pub mod keyobjects;
pub mod prompt;

use std::time::{Duration, Instant, SystemTime};

use futures::future::join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use keyobjects::{KeyObjectList, normalize_phrase};
pub use prompt::{PromptVariant, build_prompt, clean_phrase, parse_keyobject_response};

use crate::error::{BackendError, ImagingError};
use crate::frame::{Image, ImagePair};
use crate::gateway::{BackendCall, Backends, EndpointKind, ModelClient, duration_micros};
use crate::imaging::{self, DiffConfig};
use crate::mask::{BBox, Mask};

#[derive(Debug, Error)]
pub enum ObstructionError {
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("model response contained no usable key-object phrase")]
    EmptyResponse,
    #[error("key-object phrase is empty")]
    EmptyKeyObject,
    #[error("invalid obstruction config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstructionConfig {
    /// Fraction of a key object that must be covered, in `(0, 1]`.
    pub alpha: f64,
    /// Detector boxes scoring below this are ignored.
    pub box_confidence_min: f64,
    pub diff: DiffConfig,
}

impl Default for ObstructionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            box_confidence_min: 0.35,
            diff: DiffConfig::default(),
        }
    }
}

impl ObstructionConfig {
    pub fn validate(&self) -> Result<(), ObstructionError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ObstructionError::InvalidConfig(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.box_confidence_min) {
            return Err(ObstructionError::InvalidConfig(format!(
                "box_confidence_min must lie in [0, 1], got {}",
                self.box_confidence_min
            )));
        }
        Ok(())
    }
}

/// Per-key-object outcome within one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectObstruction {
    pub name: String,
    pub found: bool,
    #[serde(rename = "box")]
    pub bbox: Option<BBox>,
    /// `overlap_px / key_area_px`; absent when the object was not found.
    pub ratio: Option<f64>,
    pub overlap_px: u64,
    pub key_area_px: u64,
    #[serde(skip)]
    pub mask: Option<Mask>,
}

impl ObjectObstruction {
    /// Whether this object alone trips the threshold.
    pub fn obstructed_at(&self, alpha: f64) -> bool {
        self.found && imaging::meets_threshold(self.overlap_px, self.key_area_px, alpha)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    #[serde(with = "duration_micros")]
    pub mask_extraction: Duration,
    #[serde(with = "duration_micros")]
    pub locate: Duration,
    #[serde(with = "duration_micros")]
    pub verdict: Duration,
    pub backend_calls: Vec<BackendCall>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionResult {
    pub obstructed: bool,
    pub alpha: f64,
    pub per_object: Vec<ObjectObstruction>,
    pub content_mask_area: u64,
    pub timings: StageTimings,
}

impl ObstructionResult {
    /// Recomputes the verdict from the per-object record at another threshold.
    pub fn verdict_at(&self, alpha: f64) -> bool {
        self.per_object.iter().any(|o| o.obstructed_at(alpha))
    }
}

/// Asks the vision-language model for key objects in `raw` and merges them
/// into a copy of `list`. On error the caller's list is untouched.
pub async fn refresh_keyobjects(
    list: &KeyObjectList,
    raw: &Image,
    variant: &PromptVariant,
    vlm: &ModelClient,
) -> Result<KeyObjectList, ObstructionError> {
    let text = vlm.vlm_complete(&[raw], &build_prompt(variant)).await?;
    let phrases = parse_keyobject_response(&text, variant)?;
    let mut updated = list.clone();
    updated.merge(phrases, SystemTime::now());
    Ok(updated)
}

/// A key object's best box and its segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Located {
    pub bbox: BBox,
    pub score: f64,
    pub mask: Mask,
}

/// Detects `name` in `raw`, keeps the highest-scoring box at or above the
/// confidence floor (earliest wins ties), and segments it. `Ok(None)` means
/// no box qualified.
pub async fn locate_key_object(
    raw: &Image,
    name: &str,
    backends: &Backends,
    cfg: &ObstructionConfig,
) -> Result<Option<Located>, ObstructionError> {
    let mut calls = Vec::new();
    locate_timed(raw, name, backends, cfg, &mut calls).await
}

async fn locate_timed(
    raw: &Image,
    name: &str,
    backends: &Backends,
    cfg: &ObstructionConfig,
    calls: &mut Vec<BackendCall>,
) -> Result<Option<Located>, ObstructionError> {
    if name.trim().is_empty() {
        return Err(ObstructionError::EmptyKeyObject);
    }
    let phrases = [name.to_owned()];
    let detections = BackendCall::timed(
        EndpointKind::Detect,
        calls,
        backends.detector.detect_objects(raw, &phrases),
    )
    .await?;
    let best = detections
        .iter()
        .filter(|d| d.score >= cfg.box_confidence_min)
        .fold(None, |best: Option<&crate::gateway::Detection>, d| match best {
            Some(b) if b.score >= d.score => Some(b),
            _ => Some(d),
        });
    let Some(best) = best else {
        return Ok(None);
    };
    let masks = BackendCall::timed(
        EndpointKind::Segment,
        calls,
        backends.segmenter.segment(raw, &[best.bbox]),
    )
    .await?;
    let mask = masks
        .into_iter()
        .next()
        .expect("segment returns one mask per box");
    Ok(Some(Located {
        bbox: best.bbox,
        score: best.score,
        mask,
    }))
}

/// Builds the per-object record for a located (or missing) key object.
pub fn assess_object(name: &str, located: Option<(BBox, Mask)>, content: &Mask) -> Result<ObjectObstruction, ImagingError> {
    match located {
        Some((bbox, mask)) if mask.area() > 0 => {
            let key_area = mask.area();
            let overlap = imaging::mask_intersection_area(&mask, content)?;
            Ok(ObjectObstruction {
                name: name.to_owned(),
                found: true,
                bbox: Some(bbox),
                ratio: Some(overlap as f64 / key_area as f64),
                overlap_px: overlap,
                key_area_px: key_area,
                mask: Some(mask),
            })
        }
        // An empty segmentation is as good as a miss.
        located => Ok(ObjectObstruction {
            name: name.to_owned(),
            found: false,
            bbox: located.map(|(b, _)| b),
            ratio: None,
            overlap_px: 0,
            key_area_px: 0,
            mask: None,
        }),
    }
}

/// Runs the full per-frame obstruction check against a key-object snapshot.
/// Key objects are located concurrently.
pub async fn detect_obstruction(
    pair: &ImagePair,
    list: &KeyObjectList,
    backends: &Backends,
    cfg: &ObstructionConfig,
) -> Result<ObstructionResult, ObstructionError> {
    cfg.validate()?;
    let start = Instant::now();
    let content = imaging::extract_virtual_mask(pair.raw(), pair.augmented(), cfg.diff)?;
    let mask_extraction = start.elapsed();

    let raw = pair.raw();
    let lookups = join_all(list.entries().iter().map(|name| async move {
        let mut calls = Vec::new();
        let r = locate_timed(raw, name, backends, cfg, &mut calls).await;
        (r, calls)
    }))
    .await;
    let locate = start.elapsed() - mask_extraction;

    let mut per_object = Vec::with_capacity(lookups.len());
    let mut backend_calls = Vec::new();
    for (name, (result, calls)) in list.entries().iter().zip(lookups) {
        backend_calls.extend(calls);
        let located = result?.map(|l| (l.bbox, l.mask));
        per_object.push(assess_object(name, located, &content)?);
    }
    let obstructed = per_object.iter().any(|o| o.obstructed_at(cfg.alpha));
    let verdict = start.elapsed() - mask_extraction - locate;

    Ok(ObstructionResult {
        obstructed,
        alpha: cfg.alpha,
        per_object,
        content_mask_area: content.area(),
        timings: StageTimings {
            mask_extraction,
            locate,
            verdict,
            backend_calls,
        },
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::rle;
    use crate::gateway::wire::{
        self, DetectRequest, DetectResponse, SegmentRequest, SegmentResponse, VlmRequest, VlmResponse,
        WireDetection,
    };
    use crate::gateway::{Request, Response, ScriptedBackend};

    fn scene() -> Image {
        Image::filled(40, 40, [90, 90, 90])
    }

    fn script_detect(backend: &mut ScriptedBackend, img: &Image, phrase: &str, dets: &[(BBox, f64)]) {
        backend.insert(
            &Request::Detect(DetectRequest {
                image: wire::encode_image(img),
                phrases: vec![phrase.into()],
            }),
            Response::Detect(DetectResponse {
                detections: dets
                    .iter()
                    .map(|(b, s)| WireDetection {
                        bbox: b.to_array(),
                        score: *s,
                        phrase: phrase.into(),
                    })
                    .collect(),
            }),
        );
    }

    fn script_segment(backend: &mut ScriptedBackend, img: &Image, b: BBox, mask: &Mask) {
        backend.insert(
            &Request::Segment(SegmentRequest {
                image: wire::encode_image(img),
                boxes: vec![b.to_array()],
            }),
            Response::Segment(SegmentResponse {
                masks: vec![rle::encode(mask)],
            }),
        );
    }

    fn script_vlm(backend: &mut ScriptedBackend, img: &Image, variant: &PromptVariant, answer: &str) {
        backend.insert(
            &Request::Vlm(VlmRequest {
                prompt: build_prompt(variant),
                images: vec![wire::encode_image(img)],
            }),
            Response::Vlm(VlmResponse { text: answer.into() }),
        );
    }

    #[tokio::test]
    async fn picks_best_box_above_floor() {
        let img = scene();
        let b1 = BBox::new(2, 2, 12, 12);
        let b2 = BBox::new(20, 20, 30, 30);
        let m1 = Mask::rect(40, 40, BBox::new(3, 3, 11, 11));
        let mut backend = ScriptedBackend::strict();
        script_detect(&mut backend, &img, "stop sign", &[(b1, 0.9), (b2, 0.4)]);
        script_segment(&mut backend, &img, b1, &m1);
        let backends = Backends::uniform(Arc::new(backend));
        let cfg = ObstructionConfig {
            box_confidence_min: 0.5,
            ..Default::default()
        };
        let got = locate_key_object(&img, "stop sign", &backends, &cfg).await.unwrap().unwrap();
        assert_eq!(got.bbox, b1);
        assert_eq!(got.mask, m1);
    }

    #[tokio::test]
    async fn low_scores_are_not_found() {
        let img = scene();
        let mut backend = ScriptedBackend::strict();
        script_detect(&mut backend, &img, "knife", &[(BBox::new(0, 0, 5, 5), 0.2)]);
        let backends = Backends::uniform(Arc::new(backend));
        let got = locate_key_object(&img, "knife", &backends, &ObstructionConfig::default())
            .await
            .unwrap();
        assert!(got.is_none());
    }

    #[tokio::test]
    async fn ties_go_to_backend_order() {
        let img = scene();
        let b1 = BBox::new(20, 20, 30, 30);
        let b2 = BBox::new(2, 2, 12, 12);
        let mut backend = ScriptedBackend::strict();
        script_detect(&mut backend, &img, "fan", &[(b1, 0.7), (b2, 0.7)]);
        script_segment(&mut backend, &img, b1, &Mask::rect(40, 40, b1));
        let backends = Backends::uniform(Arc::new(backend));
        let got = locate_key_object(&img, "fan", &backends, &ObstructionConfig::default())
            .await
            .unwrap()
            .unwrap();
        assert_eq!(got.bbox, b1);
    }

    /// Raw frame with a 10x10 key object; augmented frame covers `overlap`
    /// pixels of it (whole rows from the top, then a partial row).
    fn frame_with_overlap(overlap: u32) -> (ImagePair, ScriptedBackend) {
        let raw = scene();
        let mut aug = raw.clone();
        let key_box = BBox::new(10, 10, 20, 20);
        for i in 0..overlap {
            aug.put_pixel(10 + i % 10, 10 + i / 10, [250, 10, 10]);
        }
        let mut backend = ScriptedBackend::strict();
        script_detect(&mut backend, &raw, "stop sign", &[(key_box, 0.8)]);
        script_segment(&mut backend, &raw, key_box, &Mask::rect(40, 40, key_box));
        (ImagePair::new(raw, aug).unwrap(), backend)
    }

    #[tokio::test]
    async fn threshold_boundary_is_inclusive() {
        let cfg = ObstructionConfig {
            diff: DiffConfig::EXACT,
            ..Default::default()
        };
        let list = KeyObjectList::from_names(["stop sign"]);
        for (overlap, expected) in [(25, true), (24, false)] {
            let (pair, backend) = frame_with_overlap(overlap);
            let backends = Backends::uniform(Arc::new(backend));
            let r = detect_obstruction(&pair, &list, &backends, &cfg).await.unwrap();
            assert_eq!(r.obstructed, expected, "overlap {overlap}");
            assert_eq!(r.per_object[0].ratio, Some(f64::from(overlap) / 100.0));
            assert_eq!(r.content_mask_area, u64::from(overlap));
        }
    }

    #[tokio::test]
    async fn empty_list_is_never_obstructed() {
        let (pair, backend) = frame_with_overlap(100);
        let backends = Backends::uniform(Arc::new(backend));
        let r = detect_obstruction(&pair, &KeyObjectList::new(), &backends, &ObstructionConfig::default())
            .await
            .unwrap();
        assert!(!r.obstructed);
        assert!(r.per_object.is_empty());
    }

    #[tokio::test]
    async fn missing_objects_are_recorded_but_not_counted() {
        let (pair, mut backend) = frame_with_overlap(30);
        script_detect(&mut backend, pair.raw(), "exit sign", &[]);
        let backends = Backends::uniform(Arc::new(backend));
        let list = KeyObjectList::from_names(["exit sign", "stop sign"]);
        let cfg = ObstructionConfig {
            diff: DiffConfig::EXACT,
            ..Default::default()
        };
        let r = detect_obstruction(&pair, &list, &backends, &cfg).await.unwrap();
        assert!(r.obstructed);
        assert!(!r.per_object[0].found);
        assert!(r.per_object[1].found);
        assert_eq!(r.timings.backend_calls.len(), 3);
    }

    #[tokio::test]
    async fn backend_failure_aborts_frame() {
        let (pair, _) = frame_with_overlap(30);
        let backends = Backends::uniform(Arc::new(ScriptedBackend::strict()));
        let list = KeyObjectList::from_names(["stop sign"]);
        let err = detect_obstruction(&pair, &list, &backends, &ObstructionConfig::default())
            .await
            .unwrap_err();
        assert!(matches!(err, ObstructionError::Backend(BackendError::FixtureMiss(_))));
    }

    #[tokio::test]
    async fn invalid_alpha_is_rejected() {
        let (pair, backend) = frame_with_overlap(30);
        let backends = Backends::uniform(Arc::new(backend));
        let cfg = ObstructionConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            detect_obstruction(&pair, &KeyObjectList::new(), &backends, &cfg).await,
            Err(ObstructionError::InvalidConfig(_))
        ));
    }

    #[tokio::test]
    async fn refresh_merges_and_dedups() {
        let img = scene();
        let mut backend = ScriptedBackend::strict();
        script_vlm(&mut backend, &img, &PromptVariant::Standard, "Stop Sign");
        let backends = Backends::uniform(Arc::new(backend));
        let empty = KeyObjectList::new();
        let once = refresh_keyobjects(&empty, &img, &PromptVariant::Standard, &backends.vlm)
            .await
            .unwrap();
        assert_eq!(once.entries(), ["stop sign"]);
        let twice = refresh_keyobjects(&once, &img, &PromptVariant::Standard, &backends.vlm)
            .await
            .unwrap();
        assert_eq!(twice.entries(), ["stop sign"]);
        assert!(twice.last_refreshed() >= once.last_refreshed());
    }

    #[tokio::test]
    async fn refresh_errors_leave_list_alone() {
        let img = scene();
        let mut backend = ScriptedBackend::strict();
        backend.insert_error(
            &Request::Vlm(VlmRequest {
                prompt: build_prompt(&PromptVariant::Standard),
                images: vec![wire::encode_image(&img)],
            }),
            &BackendError::Unavailable("timeout".into()),
        );
        script_vlm(&mut backend, &img, &PromptVariant::Greedy, "  ");
        let backends = Backends::uniform(Arc::new(backend));
        let list = KeyObjectList::from_names(["knife"]);
        assert!(matches!(
            refresh_keyobjects(&list, &img, &PromptVariant::Standard, &backends.vlm).await,
            Err(ObstructionError::Backend(BackendError::Unavailable(_)))
        ));
        assert!(matches!(
            refresh_keyobjects(&list, &img, &PromptVariant::Greedy, &backends.vlm).await,
            Err(ObstructionError::EmptyResponse)
        ));
        assert_eq!(list.entries(), ["knife"]);
    }
}
