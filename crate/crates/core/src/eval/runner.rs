//! Dataset evaluation.

use std::fmt;
use std::str::FromStr;

use futures::StreamExt;
use serde::{Deserialize, Serialize};

use super::EvalError;
use super::dataset::{Dataset, ManipulationSample, ObstructionSample, TaskKind};
use super::metrics::{CachedObject, MetricsReport, NoVerdictPolicy, RecognitionMatcher, RunInfo, SampleOutcome};
use crate::baseline::{CannyParams, canny_obstruction, saliency_obstruction};
use crate::gateway::Backends;
use crate::gateway::scripted::fingerprint_set_digest;
use crate::imaging::{extract_virtual_mask, mask_iou};
use crate::manipulation::{ManipulationError, detect_manipulation, extract_binary_verdict};
use crate::obstruction::{
    KeyObjectList, ObstructionConfig, ObstructionError, ObstructionResult, PromptVariant, build_prompt,
    detect_obstruction, refresh_keyobjects,
};

/// How obstruction verdicts are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstructionMethod {
    /// Standard key-object prompt, then detection, segmentation and the overlap test.
    #[serde(rename = "viddar")]
    Full,
    /// Key object from the standard prompt, verdict asked of the model directly.
    #[serde(rename = "endtoend")]
    EndToEnd,
    Underdetailed,
    Greedy,
    /// The labelled key object is given; no recognition step.
    Prior,
    Saliency,
    Canny,
}

impl ObstructionMethod {
    pub const ALL: [ObstructionMethod; 7] = [
        Self::Full,
        Self::EndToEnd,
        Self::Underdetailed,
        Self::Greedy,
        Self::Prior,
        Self::Saliency,
        Self::Canny,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "viddar",
            Self::EndToEnd => "endtoend",
            Self::Underdetailed => "underdetailed",
            Self::Greedy => "greedy",
            Self::Prior => "prior",
            Self::Saliency => "saliency",
            Self::Canny => "canny",
        }
    }

    /// Whether the method needs model backends at all.
    pub fn uses_backends(self) -> bool {
        !matches!(self, Self::Saliency | Self::Canny)
    }

    fn segments(self) -> bool {
        matches!(self, Self::Full | Self::Underdetailed | Self::Greedy | Self::Prior)
    }

    fn recognition_variant(self) -> Option<PromptVariant> {
        match self {
            Self::Full | Self::EndToEnd => Some(PromptVariant::Standard),
            Self::Underdetailed => Some(PromptVariant::Underdetailed),
            Self::Greedy => Some(PromptVariant::Greedy),
            _ => None,
        }
    }
}

impl fmt::Display for ObstructionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObstructionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "viddar" | "standard" => Ok(Self::Full),
            "endtoend" | "end-to-end" => Ok(Self::EndToEnd),
            "underdetailed" => Ok(Self::Underdetailed),
            "greedy" => Ok(Self::Greedy),
            "prior" => Ok(Self::Prior),
            "saliency" => Ok(Self::Saliency),
            "canny" => Ok(Self::Canny),
            _ => Err(format!(
                "unknown method {s:?} (viddar|endtoend|underdetailed|greedy|prior|saliency|canny)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub obstruction: ObstructionConfig,
    pub canny: CannyParams,
    /// Samples evaluated concurrently.
    pub parallelism: usize,
    pub no_verdict: NoVerdictPolicy,
    pub matcher: RecognitionMatcher,
    /// Free-form model label shown in manipulation tables.
    pub model: Option<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            obstruction: ObstructionConfig::default(),
            canny: CannyParams::default(),
            parallelism: 4,
            no_verdict: NoVerdictPolicy::default(),
            matcher: RecognitionMatcher::default(),
            model: None,
        }
    }
}

type SampleResult = Result<SampleOutcome, String>;

/// Runs per-sample futures with bounded concurrency and stops at the first
/// failure. Completed outcomes come back in dataset order.
async fn run_all<F>(futures: Vec<F>, parallelism: usize) -> (Vec<SampleOutcome>, Option<String>)
where
    F: std::future::Future<Output = (usize, SampleResult)>,
{
    let mut done = Vec::with_capacity(futures.len());
    let mut abort = None;
    let mut stream = futures::stream::iter(futures).buffer_unordered(parallelism.max(1));
    while let Some((i, r)) = stream.next().await {
        match r {
            Ok(o) => done.push((i, o)),
            Err(e) => {
                abort = Some(e);
                break;
            }
        }
    }
    done.sort_by_key(|(i, _)| *i);
    (done.into_iter().map(|(_, o)| o).collect(), abort)
}

fn digest_of(backends: Option<&Backends>) -> String {
    let fps = backends.map(Backends::fingerprints).unwrap_or_default();
    fingerprint_set_digest(&fps)
}

fn apply_eq4(outcome: &mut SampleOutcome, result: &ObstructionResult, gt: &crate::mask::Mask) -> Result<(), String> {
    outcome.objects = Some(
        result
            .per_object
            .iter()
            .map(|o| CachedObject {
                name: o.name.clone(),
                found: o.found,
                overlap_px: o.overlap_px,
                key_area_px: o.key_area_px,
            })
            .collect(),
    );
    let mut best: Option<f64> = None;
    for o in &result.per_object {
        if let Some(m) = &o.mask {
            let iou = mask_iou(m, gt).map_err(|e| e.to_string())?;
            best = Some(best.map_or(iou, |b| b.max(iou)));
        }
    }
    outcome.iou = best;
    Ok(())
}

async fn obstruction_sample(
    sample: &ObstructionSample,
    method: ObstructionMethod,
    backends: Option<&Backends>,
    opts: &EvalOptions,
) -> SampleResult {
    let fail = |e: &dyn fmt::Display| format!("sample {}: {e}", sample.id);
    let pair = sample.load_pair().map_err(|e| fail(&e))?;
    let mut outcome = SampleOutcome::new(&sample.id, sample.obstructed, None);

    if !method.uses_backends() {
        let content = extract_virtual_mask(pair.raw(), pair.augmented(), opts.obstruction.diff).map_err(|e| fail(&e))?;
        let verdict = if content.is_empty() {
            false
        } else if method == ObstructionMethod::Saliency {
            saliency_obstruction(pair.raw(), &content).map_err(|e| fail(&e))?
        } else {
            canny_obstruction(pair.raw(), &content, &opts.canny).map_err(|e| fail(&e))?
        };
        outcome.predicted = Some(verdict);
        return Ok(outcome);
    }
    let backends = backends.ok_or_else(|| fail(&"method needs model backends"))?;

    let list = match method.recognition_variant() {
        None => KeyObjectList::from_names([sample.key_object.as_str()]),
        Some(variant) => match refresh_keyobjects(&KeyObjectList::new(), pair.raw(), &variant, &backends.vlm).await {
            Ok(list) => {
                outcome.recognized = Some(opts.matcher.matches_any(list.entries(), &sample.key_object));
                outcome.phrases = list.entries().to_vec();
                list
            }
            Err(ObstructionError::EmptyResponse) => {
                outcome.recognized = Some(false);
                outcome.note = Some("no key object in model response".into());
                KeyObjectList::new()
            }
            Err(e) => return Err(fail(&e)),
        },
    };

    if method == ObstructionMethod::EndToEnd {
        let Some(phrase) = list.entries().first() else {
            return Ok(outcome);
        };
        let prompt = build_prompt(&PromptVariant::EndToEndStep2(phrase.clone()));
        let text = backends
            .vlm
            .vlm_complete(&[pair.raw(), pair.augmented()], &prompt)
            .await
            .map_err(|e| fail(&e))?;
        match extract_binary_verdict(&text) {
            Ok(v) => outcome.predicted = Some(v),
            Err(_) => outcome.note = Some("no yes/no in model response".into()),
        }
        return Ok(outcome);
    }

    let gt = sample.load_gt_mask().map_err(|e| fail(&e))?;
    let result = detect_obstruction(&pair, &list, backends, &opts.obstruction)
        .await
        .map_err(|e| fail(&e))?;
    outcome.predicted = Some(result.obstructed);
    apply_eq4(&mut outcome, &result, &gt).map_err(|e| fail(&e))?;
    Ok(outcome)
}

fn obstruction_config_snapshot(method: ObstructionMethod, opts: &EvalOptions) -> serde_json::Value {
    let mut cfg = serde_json::json!({
        "method": method.name(),
        "alpha": opts.obstruction.alpha,
        "box_confidence_min": opts.obstruction.box_confidence_min,
        "diff": opts.obstruction.diff,
        "no_verdict": opts.no_verdict,
    });
    if method == ObstructionMethod::Canny {
        cfg["canny"] = serde_json::to_value(opts.canny).expect("params serialize");
    }
    if !opts.matcher.synonyms().is_empty() {
        cfg["synonyms"] = serde_json::to_value(&opts.matcher).expect("synonyms serialize");
    }
    cfg
}

/// Scores `method` over an obstruction dataset. Backend failures end the run
/// early with a partial report rather than an error.
pub async fn evaluate_obstruction(
    dataset: &Dataset,
    method: ObstructionMethod,
    backends: Option<&Backends>,
    opts: &EvalOptions,
) -> Result<MetricsReport, EvalError> {
    let Dataset::Obstruction { samples, .. } = dataset else {
        return Err(EvalError::WrongKind {
            expected: TaskKind::Obstruction,
            found: dataset.kind(),
        });
    };
    if samples.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    opts.obstruction
        .validate()
        .map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
    if method == ObstructionMethod::Canny {
        opts.canny.validate().map_err(EvalError::InvalidConfig)?;
    }
    if method.uses_backends() && backends.is_none() {
        return Err(EvalError::InvalidConfig(format!("method {method} needs model backends")));
    }
    let futures: Vec<_> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| async move { (i, obstruction_sample(s, method, backends, opts).await) })
        .collect();
    let (outcomes, abort) = run_all(futures, opts.parallelism).await;
    if let Some(reason) = &abort {
        log::warn!("obstruction run aborted: {reason}");
    }
    let info = RunInfo {
        task: TaskKind::Obstruction,
        method: method.name().to_owned(),
        model: opts.model.clone(),
        samples: samples.len(),
        policy: opts.no_verdict,
        segments: method.segments(),
        config: obstruction_config_snapshot(method, opts),
        fixture_digest: digest_of(backends.filter(|_| method.uses_backends())),
    };
    Ok(MetricsReport::from_outcomes(info, outcomes, abort))
}

async fn manipulation_sample(sample: &ManipulationSample, backends: &Backends) -> SampleResult {
    let fail = |e: &dyn fmt::Display| format!("sample {}: {e}", sample.id);
    let pair = sample.load_pair().map_err(|e| fail(&e))?;
    let mut outcome = SampleOutcome::new(&sample.id, sample.labels.manipulated, None);
    match detect_manipulation(&pair, &backends.vlm).await {
        Ok(r) => {
            outcome.predicted = Some(r.manipulated);
            outcome.factors = r.factors;
        }
        Err(ManipulationError::NoVerdict) => {
            log::info!("sample {}: transcript has no verdict", sample.id);
            outcome.note = Some("no yes/no in model response".into());
        }
        Err(e) => return Err(fail(&e)),
    }
    Ok(outcome)
}

/// Scores the manipulation detector over a manipulation dataset.
pub async fn evaluate_manipulation(
    dataset: &Dataset,
    backends: &Backends,
    opts: &EvalOptions,
) -> Result<MetricsReport, EvalError> {
    let Dataset::Manipulation(samples) = dataset else {
        return Err(EvalError::WrongKind {
            expected: TaskKind::Manipulation,
            found: dataset.kind(),
        });
    };
    if samples.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let futures: Vec<_> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| async move { (i, manipulation_sample(s, backends).await) })
        .collect();
    let (outcomes, abort) = run_all(futures, opts.parallelism).await;
    if let Some(reason) = &abort {
        log::warn!("manipulation run aborted: {reason}");
    }
    let info = RunInfo {
        task: TaskKind::Manipulation,
        method: "manipulation".to_owned(),
        model: opts.model.clone(),
        samples: samples.len(),
        policy: opts.no_verdict,
        segments: false,
        config: serde_json::json!({ "no_verdict": opts.no_verdict }),
        fixture_digest: digest_of(Some(backends)),
    };
    Ok(MetricsReport::from_outcomes(info, outcomes, abort))
}
