//! Service configuration, read from a TOML file.
//!
//! ```toml
//! listen = "127.0.0.1:8640"
//! log_dir = "logs"
//! opacity = 0.3
//! min_refresh_interval_ms = 2000
//! refresh_interval_s = 0          # 0 disables periodic refresh
//!
//! [obstruction]
//! alpha = 0.25
//! box_confidence_min = 0.35
//!
//! [obstruction.diff]
//! tolerance = 8
//! min_component_area = 16
//!
//! [backends.vlm]
//! base_url = "http://127.0.0.1:9000"
//! timeout_ms = 30000
//! retries = 1
//! auth_token = "..."              # optional, sent as a bearer token
//!
//! [backends.detector]
//! base_url = "http://127.0.0.1:9001"
//!
//! [backends.segmenter]
//! base_url = "http://127.0.0.1:9001"
//! ```
//!
//! Every key is optional except the backend `base_url`s, and those only
//! when a backend section is present.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::BackendEndpoint;
use crate::obstruction::ObstructionConfig;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8640";
pub const DEFAULT_OPACITY: f64 = 0.3;
pub const DEFAULT_MIN_REFRESH_INTERVAL_MS: u64 = 2000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Endpoint fields as written in the file; omitted limits take defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EndpointSection {
    base_url: String,
    timeout_ms: Option<u64>,
    retries: Option<u32>,
    auth_token: Option<String>,
}

impl From<EndpointSection> for BackendEndpoint {
    fn from(s: EndpointSection) -> Self {
        let mut e = BackendEndpoint::new(s.base_url);
        if let Some(t) = s.timeout_ms {
            e.timeout_ms = t;
        }
        if let Some(r) = s.retries {
            e.retries = r;
        }
        e.auth_token = s.auth_token;
        e
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackendsSection {
    vlm: Option<EndpointSection>,
    detector: Option<EndpointSection>,
    segmenter: Option<EndpointSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiffSection {
    tolerance: Option<u8>,
    min_component_area: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstructionSection {
    alpha: Option<f64>,
    box_confidence_min: Option<f64>,
    diff: Option<DiffSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    listen: Option<String>,
    log_dir: Option<PathBuf>,
    opacity: Option<f64>,
    min_refresh_interval_ms: Option<u64>,
    refresh_interval_s: Option<u64>,
    obstruction: Option<ObstructionSection>,
    backends: Option<BackendsSection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendEndpoints {
    pub vlm: BackendEndpoint,
    pub detector: BackendEndpoint,
    pub segmenter: BackendEndpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: String,
    pub log_dir: Option<PathBuf>,
    /// Opacity the client should drop obstructing content to.
    pub opacity: f64,
    /// Minimum spacing between key-object refreshes in one session.
    pub min_refresh_interval: Duration,
    /// Period of automatic key-object refresh; `None` disables it.
    pub refresh_interval: Option<Duration>,
    pub obstruction: ObstructionConfig,
    pub backends: Option<BackendEndpoints>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: DEFAULT_LISTEN.to_owned(),
            log_dir: None,
            opacity: DEFAULT_OPACITY,
            min_refresh_interval: Duration::from_millis(DEFAULT_MIN_REFRESH_INTERVAL_MS),
            refresh_interval: None,
            obstruction: ObstructionConfig::default(),
            backends: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let file: FileConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut cfg = ServiceConfig::default();
        if let Some(l) = file.listen {
            cfg.listen = l;
        }
        cfg.log_dir = file.log_dir;
        if let Some(o) = file.opacity {
            cfg.opacity = o;
        }
        if let Some(ms) = file.min_refresh_interval_ms {
            cfg.min_refresh_interval = Duration::from_millis(ms);
        }
        cfg.refresh_interval = file.refresh_interval_s.filter(|s| *s > 0).map(Duration::from_secs);
        if let Some(o) = file.obstruction {
            if let Some(a) = o.alpha {
                cfg.obstruction.alpha = a;
            }
            if let Some(b) = o.box_confidence_min {
                cfg.obstruction.box_confidence_min = b;
            }
            if let Some(d) = o.diff {
                if let Some(t) = d.tolerance {
                    cfg.obstruction.diff.tolerance = t;
                }
                if let Some(m) = d.min_component_area {
                    cfg.obstruction.diff.min_component_area = m;
                }
            }
        }
        if let Some(b) = file.backends {
            match (b.vlm, b.detector, b.segmenter) {
                (None, None, None) => {}
                (Some(v), Some(d), Some(s)) => {
                    cfg.backends = Some(BackendEndpoints {
                        vlm: v.into(),
                        detector: d.into(),
                        segmenter: s.into(),
                    })
                }
                _ => {
                    return Err(ConfigError::Invalid(
                        "backends needs all of vlm, detector and segmenter".into(),
                    ));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.obstruction
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.opacity > 0.0 && self.opacity < 1.0) {
            return Err(ConfigError::Invalid(format!("opacity must lie in (0, 1), got {}", self.opacity)));
        }
        if let Some(b) = &self.backends {
            for (role, e) in [("vlm", &b.vlm), ("detector", &b.detector), ("segmenter", &b.segmenter)] {
                if e.timeout_ms == 0 {
                    return Err(ConfigError::Invalid(format!("{role} timeout_ms must be positive")));
                }
                if e.base_url.trim().is_empty() {
                    return Err(ConfigError::Invalid(format!("{role} base_url is empty")));
                }
            }
        }
        Ok(())
    }
}
