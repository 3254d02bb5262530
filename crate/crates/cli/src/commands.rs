use std::collections::BTreeMap;
use std::future::Future;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use arsentry_core::eval::dataset::DatasetError;
use arsentry_core::eval::synth::{SynthOptions, generate_manipulation_dataset, generate_obstruction_dataset};
use arsentry_core::eval::{
    Dataset, EvalError, EvalOptions, MetricsReport, RecognitionMatcher, ReportFormat, TaskKind,
    evaluate_manipulation, evaluate_obstruction, ground_truth_backend, load_dataset, render_report,
};
use arsentry_core::gateway::ScriptedBackend;
use arsentry_core::{Backends, ServiceConfig, Transport};
use arsentry_service::client::ClientError;
use arsentry_service::edge::{Distribution, KindLatency};
use arsentry_service::{
    EdgeService, ServiceClient, SimulationOptions, SimulationReport, api, http_backends, model_server,
};

use crate::backends::{load_fixtures, resolve};
use crate::{
    BackendServeArgs, EXIT_PARTIAL, Failure, ManipArgs, ObstructArgs, ReportArgs, ServeArgs, SimulateArgs,
    SynthArgs, invalid, runtime,
};

fn eval_options(r: &ReportArgs) -> EvalOptions {
    EvalOptions {
        parallelism: r.parallelism,
        no_verdict: r.no_verdict,
        ..EvalOptions::default()
    }
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::Imaging(e) => runtime(e),
        other => invalid(other),
    }
}

fn emit(report: &MetricsReport, args: &ReportArgs) -> Result<u8, Failure> {
    print!("{}", render_report(report, args.format));
    if let Some(path) = &args.report {
        std::fs::write(path, render_report(report, ReportFormat::Json))
            .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    if report.partial {
        eprintln!(
            "partial run: {} of {} samples evaluated ({})",
            report.evaluated,
            report.samples,
            report.abort_reason.as_deref().unwrap_or("aborted")
        );
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn synonyms(path: &Path) -> Result<RecognitionMatcher, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let map: BTreeMap<String, Vec<String>> =
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Ok(RecognitionMatcher::with_synonyms(map))
}

pub async fn eval_obstruct(a: ObstructArgs) -> Result<u8, Failure> {
    let ds = load_dataset(&a.dataset, TaskKind::Obstruction).map_err(invalid)?;
    let mut opts = eval_options(&a.report);
    let labelled_at = match &ds {
        Dataset::Obstruction { alpha, .. } => *alpha,
        Dataset::Manipulation(_) => None,
    };
    if let Some(alpha) = a.alpha.or(labelled_at) {
        opts.obstruction.alpha = alpha;
    }
    if let Some(b) = a.box_confidence_min {
        opts.obstruction.box_confidence_min = b;
    }
    if let Some(t) = a.diff_tolerance {
        opts.obstruction.diff.tolerance = t;
    }
    if let Some(m) = a.min_component_area {
        opts.obstruction.diff.min_component_area = m;
    }
    opts.obstruction.validate().map_err(invalid)?;
    if let Some(p) = &a.synonyms {
        opts.matcher = synonyms(p)?;
    }
    let backends = if a.method.uses_backends() {
        let b = resolve(&a.backends, &ds)?;
        Some(b.ok_or_else(|| {
            invalid(format!(
                "method {} needs model backends: --backends URL, --gt-backends or --fixtures DIR --replay",
                a.method
            ))
        })?)
    } else {
        if !a.backends.backends.is_empty() || a.backends.gt_backends || a.backends.fixtures.is_some() {
            log::warn!("method {} does not call model backends; backend flags ignored", a.method);
        }
        None
    };
    let report = evaluate_obstruction(&ds, a.method, backends.as_ref(), &opts)
        .await
        .map_err(eval_failure)?;
    emit(&report, &a.report)
}

pub async fn eval_manip(a: ManipArgs) -> Result<u8, Failure> {
    let ds = load_dataset(&a.dataset, TaskKind::Manipulation).map_err(invalid)?;
    let opts = EvalOptions {
        model: a.model,
        ..eval_options(&a.report)
    };
    let backends = resolve(&a.backends, &ds)?
        .ok_or_else(|| invalid("needs model backends: --backends URL, --gt-backends or --fixtures DIR --replay"))?;
    let report = evaluate_manipulation(&ds, &backends, &opts).await.map_err(eval_failure)?;
    emit(&report, &a.report)
}

pub fn synth(a: SynthArgs) -> Result<u8, Failure> {
    let mut opts = SynthOptions::default();
    if let Some(alpha) = a.alpha {
        opts.alpha = alpha;
    }
    if let Some(w) = a.width {
        opts.width = w;
    }
    if let Some(h) = a.height {
        opts.height = h;
    }
    let written = match a.kind {
        TaskKind::Obstruction => generate_obstruction_dataset(&a.out, a.n, a.seed, &opts),
        TaskKind::Manipulation => generate_manipulation_dataset(&a.out, a.n, a.seed, &opts),
    };
    written.map_err(invalid)?;
    println!("wrote {} {} samples to {}", a.n, a.kind, a.out.display());
    Ok(0)
}

fn dist(d: &Distribution) -> String {
    format!("{:9.2} {:9.2} {:9.2}", d.mean_ms, d.median_ms, d.p95_ms)
}

fn simulation_table(r: &SimulationReport) -> String {
    let mut out = String::new();
    let total = r.frames.len();
    out.push_str(&format!("frames     {total}\n"));
    out.push_str(&format!("correct    {}/{total}\n", r.correct));
    out.push_str(&format!("ordered    {}\n", if r.ordered { "yes" } else { "no" }));
    out.push_str(&format!("\n{:<32} {:>9} {:>9} {:>9}  (ms)\n", "", "mean", "median", "p95"));
    if let Some(d) = &r.round_trip {
        out.push_str(&format!("{:<32} {}\n", "client round trip", dist(d)));
    }
    for s in &r.sessions {
        let Some(KindLatency {
            end_to_end,
            backend,
            overhead,
            ..
        }) = &s.latency.frames
        else {
            continue;
        };
        let name: String = s.key_object.chars().take(20).collect();
        out.push_str(&format!("{:<32} {}\n", format!("{name} end-to-end"), dist(end_to_end)));
        out.push_str(&format!("{:<32} {}\n", format!("{name} backend"), dist(backend)));
        out.push_str(&format!("{:<32} {}\n", format!("{name} overhead"), dist(overhead)));
    }
    out
}

pub async fn simulate(a: SimulateArgs) -> Result<u8, Failure> {
    let ds = load_dataset(&a.dataset, TaskKind::Obstruction).map_err(invalid)?;
    let client = ServiceClient::new(&a.service, Duration::from_millis(a.timeout_ms)).map_err(runtime)?;
    let opts = SimulationOptions {
        pipeline: a.pipeline,
        alpha: a.alpha,
    };
    let report = arsentry_service::simulate(&client, &ds, &opts).await.map_err(|e| match e {
        ClientError::Invalid(m) => Failure::Invalid(m),
        ClientError::Api { status: 400, .. } => invalid(e),
        other => runtime(other),
    })?;
    match a.format {
        ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?),
        ReportFormat::Table => print!("{}", simulation_table(&report)),
    }
    Ok(0)
}

/// Loads a dataset of either kind.
fn load_any(dir: &Path) -> Result<Dataset, Failure> {
    match load_dataset(dir, TaskKind::Obstruction) {
        Err(DatasetError::WrongKind { found, .. }) => load_dataset(dir, found).map_err(invalid),
        other => other.map_err(invalid),
    }
}

async fn listen(addr: &str) -> Result<tokio::net::TcpListener, Failure> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| runtime(format!("cannot listen on {addr}: {e}")))?;
    let local = listener.local_addr().map_err(runtime)?;
    println!("listening on {local}");
    let _ = std::io::stdout().flush();
    Ok(listener)
}

async fn until_interrupted(server: impl Future<Output = std::io::Result<()>>) -> Result<u8, Failure> {
    tokio::select! {
        r = server => r.map(|_| 0).map_err(runtime),
        _ = tokio::signal::ctrl_c() => Ok(0),
    }
}

pub async fn serve(a: ServeArgs) -> Result<u8, Failure> {
    let mut config = match &a.config {
        Some(p) => ServiceConfig::load(p).map_err(invalid)?,
        None => ServiceConfig::default(),
    };
    if let Some(l) = a.listen {
        config.listen = l;
    }
    let backends = if let Some(dir) = &a.fixtures {
        Backends::uniform(Arc::new(load_fixtures(dir)?))
    } else if let Some(dir) = &a.dataset {
        let ds = load_any(dir)?;
        Backends::uniform(Arc::new(ground_truth_backend(&ds).map_err(invalid)?))
    } else if let Some(endpoints) = &config.backends {
        http_backends(endpoints).map_err(invalid)?
    } else {
        return Err(invalid(
            "no model backends: add a [backends] section to the config, or pass --fixtures or --dataset",
        ));
    };
    let addr = config.listen.clone();
    let service = EdgeService::new(backends, config).map_err(invalid)?;
    let listener = listen(&addr).await?;
    until_interrupted(arsentry_service::serve(listener, api::router(service))).await
}

pub async fn backend(a: BackendServeArgs, oracle: bool) -> Result<u8, Failure> {
    let mut backend: ScriptedBackend = if oracle {
        ground_truth_backend(&load_any(&a.source)?).map_err(invalid)?
    } else {
        load_fixtures(&a.source)?
    };
    if let Some(ms) = a.delay_ms {
        backend = backend.with_delay(Duration::from_millis(ms));
    }
    let transport: Arc<dyn Transport> = Arc::new(backend);
    let listener = listen(&a.listen).await?;
    until_interrupted(arsentry_service::serve(listener, model_server::router(transport, a.token))).await
}
