use std::path::Path;
use std::sync::Arc;

use arsentry_core::eval::{Dataset, ground_truth_backend};
use arsentry_core::gateway::{FixtureStore, RecordingTransport, ScriptedBackend};
use arsentry_core::{BackendEndpoint, Backends, Transport};
use arsentry_service::HttpTransport;

use crate::{BackendArgs, Failure, invalid};

fn recorded<T: Transport + 'static>(t: T, fixtures: Option<&Path>) -> Arc<dyn Transport> {
    match fixtures {
        Some(dir) => Arc::new(RecordingTransport::new(t, FixtureStore::new(dir))),
        None => Arc::new(t),
    }
}

pub fn load_fixtures(dir: &Path) -> Result<ScriptedBackend, Failure> {
    if !dir.is_dir() {
        return Err(invalid(format!("fixture directory {} does not exist", dir.display())));
    }
    ScriptedBackend::load_dir(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))
}

/// Model backends selected on the command line, or `None` when no source
/// was given.
pub fn resolve(args: &BackendArgs, dataset: &Dataset) -> Result<Option<Backends>, Failure> {
    if args.replay {
        let dir = args.fixtures.as_deref().expect("clap requires --fixtures");
        return Ok(Some(Backends::uniform(Arc::new(load_fixtures(dir)?))));
    }
    let capture = args.fixtures.as_deref();
    if args.gt_backends {
        let oracle = ground_truth_backend(dataset).map_err(invalid)?;
        return Ok(Some(Backends::uniform(recorded(oracle, capture))));
    }
    let http = |url: &str| {
        let mut e = BackendEndpoint::new(url);
        e.timeout_ms = args.timeout_ms;
        e.retries = args.retries;
        e.auth_token = args.token.clone();
        HttpTransport::new(e).map_err(|e| invalid(format!("{url}: {e}")))
    };
    match args.backends.as_slice() {
        [] => Ok(None),
        [one] => Ok(Some(Backends::uniform(recorded(http(one)?, capture)))),
        [vlm, det, seg] => Ok(Some(Backends::new(
            recorded(http(vlm)?, capture),
            recorded(http(det)?, capture),
            recorded(http(seg)?, capture),
        ))),
        _ => Err(invalid("--backends takes one URL or three (vlm, detector, segmenter)")),
    }
}
