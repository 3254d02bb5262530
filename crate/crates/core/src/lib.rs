//! Detection of task-detrimental virtual content in augmented-reality frames.
//!
//! Two attack classes are covered:
//!
//! - **Obstruction**: virtual content covers at least a fraction `alpha` of a
//!   scene-dependent key object ([`obstruction`]).
//! - **Information manipulation**: virtual content is aligned with a real
//!   object, blends in stylistically, and misrepresents what the object does
//!   ([`manipulation`]).
//!
//! Model backends (vision-language model, open-set detector, segmenter) are
//! reached through [`gateway`]; [`eval`] scores detectors over datasets and
//! [`config`] reads the service configuration file.

pub mod baseline;
pub mod codec;
pub mod config;
pub mod error;
pub mod eval;
pub mod frame;
pub mod gateway;
pub mod imaging;
pub mod manipulation;
pub mod mask;
pub mod obstruction;

pub use config::ServiceConfig;
pub use error::{BackendError, ImagingError};
pub use eval::{Dataset, MetricsReport, ObstructionMethod, TaskKind};
pub use frame::{Image, ImagePair};
pub use imaging::{DiffConfig, extract_virtual_mask, mask_intersection_area, mask_iou, obstruction_ratio};
pub use gateway::{BackendEndpoint, Backends, ModelClient, Transport};
pub use manipulation::{ManipulationFactors, ManipulationResult};
pub use mask::{BBox, Mask};
pub use obstruction::{KeyObjectList, ObstructionConfig, ObstructionResult, PromptVariant};
