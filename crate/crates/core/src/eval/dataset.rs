//! Dataset manifests.
//!
//! A dataset is a directory holding `manifest.json` plus the images it
//! references by relative path:
//!
//! ```json
//! {
//!   "kind": "obstruction",
//!   "alpha": 0.25,
//!   "samples": [
//!     {"id": "0001", "raw": "raw/0001.png", "aug": "aug/0001.png",
//!      "key_object": "stop sign", "gt_mask": "mask/0001.png", "obstructed": true}
//!   ]
//! }
//! ```
//!
//! Manipulation samples carry `labels` with `alignment`, `style`,
//! `misrepresentation` and `manipulated` instead of the key-object fields.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec;
use crate::error::ImagingError;
use crate::frame::{Image, ImagePair};
use crate::manipulation::{ManipulationFactors, combine_factors};
use crate::mask::Mask;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Obstruction,
    Manipulation,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Obstruction => "obstruction",
            TaskKind::Manipulation => "manipulation",
        })
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "obstruction" | "obstruct" => Ok(Self::Obstruction),
            "manipulation" | "manip" => Ok(Self::Manipulation),
            _ => Err(format!("unknown task kind {s:?} (obstruction|manipulation)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObstructionEntry {
    pub id: String,
    pub raw: PathBuf,
    pub aug: PathBuf,
    pub key_object: String,
    pub gt_mask: PathBuf,
    pub obstructed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManipulationLabels {
    pub alignment: bool,
    pub style: bool,
    pub misrepresentation: bool,
    pub manipulated: bool,
}

impl ManipulationLabels {
    /// Labels consistent with the factor conjunction.
    pub fn from_factors(f: ManipulationFactors) -> Self {
        Self {
            alignment: f.alignment,
            style: f.style,
            misrepresentation: f.misrepresentation,
            manipulated: combine_factors(f),
        }
    }

    pub fn factors(&self) -> ManipulationFactors {
        ManipulationFactors::new(self.alignment, self.style, self.misrepresentation)
    }

    pub fn is_consistent(&self) -> bool {
        self.manipulated == combine_factors(self.factors())
    }
}

impl fmt::Display for ManipulationLabels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = |v: bool| u8::from(v);
        write!(
            f,
            "({}, {}, {}, {})",
            b(self.alignment),
            b(self.style),
            b(self.misrepresentation),
            b(self.manipulated)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManipulationEntry {
    pub id: String,
    pub raw: PathBuf,
    pub aug: PathBuf,
    pub labels: ManipulationLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Manifest {
    Obstruction {
        /// Threshold the labels were produced with, when known.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        samples: Vec<ObstructionEntry>,
    },
    Manipulation {
        samples: Vec<ManipulationEntry>,
    },
}

impl Manifest {
    pub fn kind(&self) -> TaskKind {
        match self {
            Manifest::Obstruction { .. } => TaskKind::Obstruction,
            Manifest::Manipulation { .. } => TaskKind::Manipulation,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Manifest::Obstruction { samples, .. } => samples.len(),
            Manifest::Manipulation { samples } => samples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(dir.as_ref().join(MANIFEST_FILE), json + "\n")
    }
}

/// One problem found while validating a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub index: usize,
    pub id: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sample #{} ({}): {}", self.index, self.id, self.message)
    }
}

fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(Diagnostic::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest {path} is not valid: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("expected a {expected} dataset, found {found}")]
    WrongKind { expected: TaskKind, found: TaskKind },
    #[error("invalid manifest: {}", join_diagnostics(.0))]
    ManifestInvalid(Vec<Diagnostic>),
    #[error("sample {id}: labels {labels} violate manipulated = alignment and style and misrepresentation")]
    Eq7Violation { id: String, labels: ManipulationLabels },
}

/// A validated obstruction sample; paths are absolute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObstructionSample {
    pub id: String,
    pub raw_path: PathBuf,
    pub aug_path: PathBuf,
    pub key_object: String,
    pub gt_mask_path: PathBuf,
    pub obstructed: bool,
}

impl ObstructionSample {
    pub fn load_pair(&self) -> Result<ImagePair, ImagingError> {
        ImagePair::new(codec::load_image(&self.raw_path)?, codec::load_image(&self.aug_path)?)
    }

    pub fn load_gt_mask(&self) -> Result<Mask, ImagingError> {
        codec::load_mask(&self.gt_mask_path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManipulationSample {
    pub id: String,
    pub raw_path: PathBuf,
    pub aug_path: PathBuf,
    pub labels: ManipulationLabels,
}

impl ManipulationSample {
    pub fn load_pair(&self) -> Result<ImagePair, ImagingError> {
        ImagePair::new(codec::load_image(&self.raw_path)?, codec::load_image(&self.aug_path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Obstruction {
        alpha: Option<f64>,
        samples: Vec<ObstructionSample>,
    },
    Manipulation(Vec<ManipulationSample>),
}

impl Dataset {
    pub fn kind(&self) -> TaskKind {
        match self {
            Dataset::Obstruction { .. } => TaskKind::Obstruction,
            Dataset::Manipulation(_) => TaskKind::Manipulation,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Obstruction { samples, .. } => samples.len(),
            Dataset::Manipulation(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest, DatasetError> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|source| DatasetError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
        path,
        message: e.to_string(),
    })
}

struct Checker<'a> {
    dir: &'a Path,
    ids: BTreeSet<String>,
    problems: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn note(&mut self, index: usize, id: &str, message: impl Into<String>) {
        self.problems.push(Diagnostic {
            index,
            id: id.to_owned(),
            message: message.into(),
        });
    }

    fn id(&mut self, index: usize, id: &str) {
        if id.trim().is_empty() {
            self.note(index, id, "empty id");
        } else if !self.ids.insert(id.to_owned()) {
            self.note(index, id, "duplicate id");
        }
    }

    fn image(&mut self, index: usize, id: &str, rel: &Path) -> (PathBuf, Option<(u32, u32)>) {
        let path = self.dir.join(rel);
        match codec::load_image(&path) {
            Ok(img) => (path, Some(img.dimensions())),
            Err(e) => {
                self.note(index, id, format!("{}: {e}", rel.display()));
                (path, None)
            }
        }
    }

    fn pair(&mut self, index: usize, id: &str, raw: &Path, aug: &Path) -> (PathBuf, PathBuf, Option<(u32, u32)>) {
        let (raw_path, raw_dims) = self.image(index, id, raw);
        let (aug_path, aug_dims) = self.image(index, id, aug);
        let dims = match (raw_dims, aug_dims) {
            (Some(r), Some(a)) if r != a => {
                self.note(index, id, format!("raw is {}x{} but aug is {}x{}", r.0, r.1, a.0, a.1));
                None
            }
            (Some(r), Some(_)) => Some(r),
            _ => None,
        };
        (raw_path, aug_path, dims)
    }
}

/// Loads and validates every sample of the dataset in `dir`. All referenced
/// files are decoded once; problems are collected across samples.
pub fn load_dataset(dir: impl AsRef<Path>, kind: TaskKind) -> Result<Dataset, DatasetError> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    if manifest.kind() != kind {
        return Err(DatasetError::WrongKind {
            expected: kind,
            found: manifest.kind(),
        });
    }
    let mut check = Checker {
        dir,
        ids: BTreeSet::new(),
        problems: Vec::new(),
    };
    let dataset = match manifest {
        Manifest::Obstruction { alpha, samples } => {
            if let Some(a) = alpha {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(DatasetError::Parse {
                        path: dir.join(MANIFEST_FILE),
                        message: format!("alpha must lie in (0, 1], got {a}"),
                    });
                }
            }
            let mut out = Vec::with_capacity(samples.len());
            for (i, s) in samples.into_iter().enumerate() {
                check.id(i, &s.id);
                if s.key_object.trim().is_empty() {
                    check.note(i, &s.id, "empty key_object");
                }
                let (raw_path, aug_path, dims) = check.pair(i, &s.id, &s.raw, &s.aug);
                let gt_mask_path = dir.join(&s.gt_mask);
                match codec::load_mask(&gt_mask_path) {
                    Ok(m) => {
                        if let Some(d) = dims.filter(|d| *d != m.dimensions()) {
                            check.note(
                                i,
                                &s.id,
                                format!("mask is {}x{} but images are {}x{}", m.width(), m.height(), d.0, d.1),
                            );
                        }
                    }
                    Err(e) => check.note(i, &s.id, format!("{}: {e}", s.gt_mask.display())),
                }
                out.push(ObstructionSample {
                    id: s.id,
                    raw_path,
                    aug_path,
                    key_object: s.key_object,
                    gt_mask_path,
                    obstructed: s.obstructed,
                });
            }
            Dataset::Obstruction { alpha, samples: out }
        }
        Manifest::Manipulation { samples } => {
            if let Some(bad) = samples.iter().find(|s| !s.labels.is_consistent()) {
                return Err(DatasetError::Eq7Violation {
                    id: bad.id.clone(),
                    labels: bad.labels,
                });
            }
            let mut out = Vec::with_capacity(samples.len());
            for (i, s) in samples.into_iter().enumerate() {
                check.id(i, &s.id);
                let (raw_path, aug_path, _) = check.pair(i, &s.id, &s.raw, &s.aug);
                out.push(ManipulationSample {
                    id: s.id,
                    raw_path,
                    aug_path,
                    labels: s.labels,
                });
            }
            Dataset::Manipulation(out)
        }
    };
    if check.problems.is_empty() {
        Ok(dataset)
    } else {
        Err(DatasetError::ManifestInvalid(check.problems))
    }
}

/// Writes images under `dir` at the given relative paths.
pub fn write_manifest_images(dir: impl AsRef<Path>, images: &[(&str, &Image)]) -> Result<(), ImagingError> {
    for (rel, image) in images {
        write_image(dir.as_ref(), Path::new(rel), image)?;
    }
    Ok(())
}

/// Writes `image` under `dir/rel`, creating parent directories.
pub(crate) fn write_image(dir: &Path, rel: &Path, image: &Image) -> Result<(), ImagingError> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    codec::save_image(image, path)
}

pub(crate) fn write_mask(dir: &Path, rel: &Path, mask: &Mask) -> Result<(), ImagingError> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    codec::save_mask(mask, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::BBox;

    fn obstruction_dir(n: usize) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::filled(16, 16, [5, 5, 5]);
        let mask = Mask::rect(16, 16, BBox::new(2, 2, 8, 8));
        let mut samples = Vec::new();
        for i in 0..n {
            let id = format!("{i:02}");
            write_image(dir.path(), Path::new(&format!("raw/{id}.png")), &img).unwrap();
            write_image(dir.path(), Path::new(&format!("aug/{id}.png")), &img).unwrap();
            write_mask(dir.path(), Path::new(&format!("mask/{id}.png")), &mask).unwrap();
            samples.push(ObstructionEntry {
                id: id.clone(),
                raw: format!("raw/{id}.png").into(),
                aug: format!("aug/{id}.png").into(),
                key_object: "exit sign".into(),
                gt_mask: format!("mask/{id}.png").into(),
                obstructed: i % 2 == 0,
            });
        }
        Manifest::Obstruction { alpha: Some(0.25), samples }
            .write(dir.path())
            .unwrap();
        dir
    }

    #[test]
    fn loads_in_manifest_order() {
        let dir = obstruction_dir(4);
        let Dataset::Obstruction { alpha, samples } = load_dataset(dir.path(), TaskKind::Obstruction).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(alpha, Some(0.25));
        let ids: Vec<_> = samples.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["00", "01", "02", "03"]);
        assert_eq!(samples[0].load_gt_mask().unwrap().area(), 36);
        assert!(matches!(
            load_dataset(dir.path(), TaskKind::Manipulation),
            Err(DatasetError::WrongKind { .. })
        ));
    }

    #[test]
    fn missing_mask_is_reported() {
        let dir = obstruction_dir(3);
        fs::remove_file(dir.path().join("mask/01.png")).unwrap();
        match load_dataset(dir.path(), TaskKind::Obstruction) {
            Err(DatasetError::ManifestInvalid(d)) => {
                assert_eq!(d.len(), 1);
                assert_eq!(d[0].index, 1);
                assert!(d[0].message.contains("mask/01.png"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inconsistent_manipulation_label() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest::Manipulation {
            samples: vec![ManipulationEntry {
                id: "x".into(),
                raw: "r.png".into(),
                aug: "a.png".into(),
                labels: ManipulationLabels {
                    alignment: true,
                    style: true,
                    misrepresentation: false,
                    manipulated: true,
                },
            }],
        };
        m.write(dir.path()).unwrap();
        let err = load_dataset(dir.path(), TaskKind::Manipulation).unwrap_err();
        assert!(matches!(err, DatasetError::Eq7Violation { ref id, .. } if id == "x"));
        assert!(err.to_string().contains("(1, 1, 0, 1)"));
    }

    #[test]
    fn manifest_round_trips() {
        let m = Manifest::Manipulation {
            samples: vec![ManipulationEntry {
                id: "a".into(),
                raw: "raw/a.png".into(),
                aug: "aug/a.png".into(),
                labels: ManipulationLabels::from_factors(ManipulationFactors::new(true, true, true)),
            }],
        };
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"kind\":\"manipulation\""));
        assert_eq!(serde_json::from_str::<Manifest>(&text).unwrap(), m);
    }
}
