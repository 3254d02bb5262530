//! Confusion counts, per-sample outcomes and the evaluation report.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::TaskKind;
use crate::gateway::wire::canonical_json;
use crate::imaging::meets_threshold;
use crate::manipulation::ManipulationFactors;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Number of positive verdicts.
    pub fn predicted_positive(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn accuracy(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| (self.tp + self.tn) as f64 / n as f64)
    }

    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

/// What to do with a sample whose verdict could not be extracted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoVerdictPolicy {
    /// Count the sample as misclassified.
    #[default]
    Incorrect,
    /// Treat it as a negative verdict.
    Negative,
    /// Leave it out of the confusion counts.
    Skip,
}

impl std::str::FromStr for NoVerdictPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "incorrect" => Ok(Self::Incorrect),
            "negative" => Ok(Self::Negative),
            "skip" => Ok(Self::Skip),
            _ => Err(format!("unknown no-verdict policy {s:?} (incorrect|negative|skip)")),
        }
    }
}

fn tokens(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\'').to_lowercase())
        .filter(|t| !t.is_empty() && !matches!(t.as_str(), "a" | "an" | "the"))
        .collect()
}

/// Decides whether a predicted key-object phrase names the labelled object.
///
/// A prediction matches when the label's tokens are a subset of the
/// prediction's tokens or the other way round ("red stop sign" matches
/// "stop sign"). Synonyms listed for a label are tried the same way.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecognitionMatcher {
    synonyms: BTreeMap<String, Vec<String>>,
}

impl RecognitionMatcher {
    pub fn new() -> Self {
        Self::default()
    }

    /// `synonyms` maps a label to alternative names for it.
    pub fn with_synonyms(synonyms: BTreeMap<String, Vec<String>>) -> Self {
        let synonyms = synonyms
            .into_iter()
            .map(|(k, v)| (crate::obstruction::normalize_phrase(&k), v))
            .collect();
        Self { synonyms }
    }

    pub fn synonyms(&self) -> &BTreeMap<String, Vec<String>> {
        &self.synonyms
    }

    pub fn matches(&self, predicted: &str, label: &str) -> bool {
        let p = tokens(predicted);
        if p.is_empty() {
            return false;
        }
        let alternatives = self
            .synonyms
            .get(&crate::obstruction::normalize_phrase(label))
            .into_iter()
            .flatten();
        std::iter::once(label)
            .chain(alternatives.map(String::as_str))
            .any(|cand| {
                let l = tokens(cand);
                !l.is_empty() && (l.is_subset(&p) || p.is_subset(&l))
            })
    }

    pub fn matches_any<'a>(&self, predicted: impl IntoIterator<Item = &'a String>, label: &str) -> bool {
        predicted.into_iter().any(|p| self.matches(p, label))
    }
}

/// Overlap counts kept per key object so a run can be re-thresholded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedObject {
    pub name: String,
    pub found: bool,
    pub overlap_px: u64,
    pub key_area_px: u64,
}

impl CachedObject {
    pub fn obstructed_at(&self, alpha: f64) -> bool {
        self.found && meets_threshold(self.overlap_px, self.key_area_px, alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub id: String,
    pub label: bool,
    /// `None` when no verdict could be extracted.
    pub predicted: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phrases: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recognized: Option<bool>,
    /// Best IoU of a located key object against the ground-truth mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    /// Present for methods that decide by the overlap threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<Vec<CachedObject>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<ManipulationFactors>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl SampleOutcome {
    pub fn new(id: impl Into<String>, label: bool, predicted: Option<bool>) -> Self {
        Self {
            id: id.into(),
            label,
            predicted,
            phrases: Vec::new(),
            recognized: None,
            iou: None,
            objects: None,
            factors: None,
            note: None,
        }
    }

    /// The verdict counted under `policy`, or `None` if the sample is skipped.
    pub fn counted(&self, policy: NoVerdictPolicy) -> Option<bool> {
        match (self.predicted, policy) {
            (Some(p), _) => Some(p),
            (None, NoVerdictPolicy::Incorrect) => Some(!self.label),
            (None, NoVerdictPolicy::Negative) => Some(false),
            (None, NoVerdictPolicy::Skip) => None,
        }
    }
}

/// Scores for one method over one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: TaskKind,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Samples in the dataset.
    pub samples: usize,
    /// Samples that completed before the run ended.
    pub evaluated: usize,
    pub counts: Confusion,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub key_object_recognition_accuracy: Option<f64>,
    /// Mean IoU over samples whose key object was located.
    pub segmentation_miou: Option<f64>,
    /// Share of samples where no key object was located.
    pub not_found_rate: Option<f64>,
    pub no_verdict: u64,
    pub no_verdict_policy: NoVerdictPolicy,
    pub partial: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    pub config: serde_json::Value,
    /// Digest of the backend request fingerprints the run depended on.
    pub fixture_digest: String,
    pub outcomes: Vec<SampleOutcome>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Fields that describe a run rather than its results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInfo {
    pub task: TaskKind,
    pub method: String,
    pub model: Option<String>,
    pub samples: usize,
    pub policy: NoVerdictPolicy,
    /// Whether the method locates and segments key objects.
    pub segments: bool,
    pub config: serde_json::Value,
    pub fixture_digest: String,
}

impl MetricsReport {
    /// Aggregates per-sample outcomes (already in dataset order).
    pub fn from_outcomes(info: RunInfo, outcomes: Vec<SampleOutcome>, abort_reason: Option<String>) -> Self {
        let mut counts = Confusion::default();
        for o in &outcomes {
            if let Some(p) = o.counted(info.policy) {
                counts.record(p, o.label);
            }
        }
        let recognition = mean(
            outcomes
                .iter()
                .filter_map(|o| o.recognized)
                .map(|r| f64::from(u8::from(r))),
        );
        let (miou, not_found) = if info.segments && !outcomes.is_empty() {
            let missing = outcomes.iter().filter(|o| o.iou.is_none()).count();
            (
                mean(outcomes.iter().filter_map(|o| o.iou)),
                Some(missing as f64 / outcomes.len() as f64),
            )
        } else {
            (None, None)
        };
        let partial = abort_reason.is_some() || outcomes.len() < info.samples;
        Self {
            task: info.task,
            method: info.method,
            model: info.model,
            samples: info.samples,
            evaluated: outcomes.len(),
            accuracy: counts.accuracy(),
            precision: counts.precision(),
            recall: counts.recall(),
            counts,
            key_object_recognition_accuracy: recognition,
            segmentation_miou: miou,
            not_found_rate: not_found,
            no_verdict: outcomes.iter().filter(|o| o.predicted.is_none()).count() as u64,
            no_verdict_policy: info.policy,
            partial,
            abort_reason,
            config: info.config,
            fixture_digest: info.fixture_digest,
            outcomes,
        }
    }

    /// Confusion counts had the run used threshold `alpha`, recomputed from
    /// cached overlap counts. `None` unless every outcome carries them.
    pub fn confusion_at(&self, alpha: f64) -> Option<Confusion> {
        let mut c = Confusion::default();
        for o in &self.outcomes {
            let objects = o.objects.as_ref()?;
            c.record(objects.iter().any(|ob| ob.obstructed_at(alpha)), o.label);
        }
        Some(c)
    }

    /// SHA-256 over the canonical JSON form of the report.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        hex::encode(Sha256::digest(canonical_json(&value).as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info(segments: bool) -> RunInfo {
        RunInfo {
            task: TaskKind::Obstruction,
            method: "test".into(),
            model: None,
            samples: 4,
            policy: NoVerdictPolicy::Incorrect,
            segments,
            config: serde_json::json!({}),
            fixture_digest: String::new(),
        }
    }

    #[test]
    fn ratios() {
        let c = Confusion::new(3, 1, 4, 2);
        assert_eq!(c.total(), 10);
        assert_eq!(c.accuracy(), Some(0.7));
        assert_eq!(c.precision(), Some(0.75));
        assert_eq!(c.recall(), Some(0.6));
        let none = Confusion::new(0, 0, 5, 0);
        assert_eq!(none.precision(), None);
        assert_eq!(none.recall(), None);
        assert_eq!(Confusion::default().accuracy(), None);
    }

    #[test]
    fn all_true_stub() {
        let mut c = Confusion::default();
        for i in 0..10 {
            c.record(true, i % 2 == 0);
        }
        assert_eq!(c.accuracy(), Some(0.5));
        assert_eq!(c.recall(), Some(1.0));
    }

    #[test]
    fn token_containment() {
        let m = RecognitionMatcher::new();
        assert!(m.matches("red stop sign", "stop sign"));
        assert!(m.matches("sign", "stop sign"));
        assert!(m.matches("The Stop-Sign", "stop sign"));
        assert!(!m.matches("yield sign", "stop sign"));
        assert!(!m.matches("", "stop sign"));
        let mut syn = BTreeMap::new();
        syn.insert("Fire Extinguisher".to_owned(), vec!["extinguisher canister".to_owned()]);
        let m = RecognitionMatcher::with_synonyms(syn);
        assert!(!m.matches("red canister", "fire extinguisher"));
        assert!(m.matches("extinguisher canister", "fire extinguisher"));
    }

    #[test]
    fn no_verdict_policies() {
        let o = SampleOutcome::new("a", true, None);
        assert_eq!(o.counted(NoVerdictPolicy::Incorrect), Some(false));
        assert_eq!(o.counted(NoVerdictPolicy::Negative), Some(false));
        assert_eq!(o.counted(NoVerdictPolicy::Skip), None);
        let o = SampleOutcome::new("b", false, None);
        assert_eq!(o.counted(NoVerdictPolicy::Incorrect), Some(true));
    }

    #[test]
    fn miou_ignores_misses() {
        let mut outs: Vec<_> = (0..4).map(|i| SampleOutcome::new(i.to_string(), true, Some(true))).collect();
        outs[0].iou = Some(1.0);
        outs[1].iou = Some(0.5);
        outs[3].iou = Some(0.0);
        let r = MetricsReport::from_outcomes(info(true), outs, None);
        assert_eq!(r.segmentation_miou, Some(0.5));
        assert_eq!(r.not_found_rate, Some(0.25));
        assert!(!r.partial);
        assert_eq!(r.accuracy, Some(1.0));
    }

    #[test]
    fn short_runs_are_partial() {
        let outs = vec![SampleOutcome::new("0", false, Some(false))];
        let r = MetricsReport::from_outcomes(info(false), outs, Some("backend down".into()));
        assert!(r.partial);
        assert_eq!(r.evaluated, 1);
        assert_eq!(r.segmentation_miou, None);
    }

    #[test]
    fn rethreshold_from_cache() {
        let mut o = SampleOutcome::new("0", true, Some(true));
        o.objects = Some(vec![CachedObject {
            name: "k".into(),
            found: true,
            overlap_px: 25,
            key_area_px: 100,
        }]);
        let r = MetricsReport::from_outcomes(info(true), vec![o], None);
        assert_eq!(r.confusion_at(0.25).unwrap().tp, 1);
        assert_eq!(r.confusion_at(0.26).unwrap().fn_, 1);
    }

    #[test]
    fn json_round_trip_and_digest() {
        let mut o = SampleOutcome::new("0", true, Some(false));
        o.iou = Some(0.1 + 0.2);
        let r = MetricsReport::from_outcomes(info(true), vec![o], None);
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"fn\":1"));
        let back: MetricsReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.digest(), r.digest());
    }
}
