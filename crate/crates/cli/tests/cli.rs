use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

fn arsentry(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arsentry"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path, name: &str, kind: &str, n: usize, seed: u64) {
    let o = arsentry(
        &["synth", "--out", name, "--n", &n.to_string(), "--seed", &seed.to_string(), "--kind", kind],
        dir,
    );
    assert_eq!(code(&o), 0, "{o:?}");
}

/// A server process, killed on drop.
struct Server {
    child: Child,
    addr: String,
}

impl Server {
    fn start(args: &[&str], cwd: &Path) -> Server {
        let mut child = Command::new(env!("CARGO_BIN_EXE_arsentry"))
            .args(args)
            .current_dir(cwd)
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("server starts");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_owned();
        Server { child, addr }
    }

    fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[test]
fn prior_with_ground_truth_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "ds", "obstruction", 16, 1);
    let o = arsentry(
        &["eval", "obstruct", "--dataset", "ds", "--method", "prior", "--gt-backends", "--format", "json"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["accuracy"], 1.0);
    assert_eq!(r["evaluated"], 16);
    assert_eq!(r["partial"], false);
}

#[test]
fn capture_then_replay_matches_and_misses_are_partial() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "ds", "obstruction", 8, 2);
    let capture = arsentry(
        &["eval", "obstruct", "--dataset", "ds", "--gt-backends", "--fixtures", "fx", "--report", "a.json"],
        dir.path(),
    );
    assert_eq!(code(&capture), 0);
    let replay = arsentry(
        &["eval", "obstruct", "--dataset", "ds", "--fixtures", "fx", "--replay", "--report", "b.json"],
        dir.path(),
    );
    assert_eq!(code(&replay), 0);
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());

    let mut fixtures: Vec<_> = std::fs::read_dir(dir.path().join("fx")).unwrap().map(|e| e.unwrap().path()).collect();
    fixtures.sort();
    let victim = fixtures.pop().unwrap();
    std::fs::remove_file(&victim).unwrap();
    let fp = victim.file_stem().unwrap().to_str().unwrap().to_owned();
    let broken = arsentry(&["eval", "obstruct", "--dataset", "ds", "--fixtures", "fx", "--replay"], dir.path());
    assert_eq!(code(&broken), 2);
    assert!(String::from_utf8_lossy(&broken.stderr).contains(&fp));
}

#[test]
fn invalid_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "ds", "obstruction", 2, 3);
    let cases: [&[&str]; 7] = [
        &["eval", "obstruct", "--dataset", "ds", "--method", "bogus"],
        &["eval", "obstruct", "--dataset", "missing", "--method", "canny"],
        &["eval", "obstruct", "--dataset", "ds", "--method", "prior", "--gt-backends", "--alpha", "0"],
        &["eval", "obstruct", "--dataset", "ds", "--method", "viddar"],
        &["eval", "obstruct", "--dataset", "ds", "--fixtures", "nowhere", "--replay"],
        &["eval", "manip", "--dataset", "ds", "--gt-backends"],
        &["eval", "manip", "--dataset", "ds", "--replay"],
    ];
    for args in cases {
        let o = arsentry(args, dir.path());
        assert_eq!(code(&o), 3, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&arsentry(&["--help"], dir.path())), 0);
}

#[test]
fn baselines_run_without_backends() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "ds", "obstruction", 6, 4);
    for method in ["saliency", "canny"] {
        let o = arsentry(&["eval", "obstruct", "--dataset", "ds", "--method", method], dir.path());
        assert_eq!(code(&o), 0);
        assert!(stdout(&o).contains(method));
    }
}

#[test]
fn manipulation_against_scripted_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "m", "manipulation", 10, 5);
    let o = arsentry(
        &["eval", "manip", "--dataset", "m", "--gt-backends", "--model", "oracle", "--format", "json"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["accuracy"], 1.0);
    assert_eq!(r["model"], "oracle");
}

#[test]
fn simulated_client_through_service_and_model_server() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "ds", "obstruction", 10, 6);
    let models = Server::start(&["backend", "oracle", "ds", "--listen", "127.0.0.1:0", "--token", "t0k"], dir.path());
    let endpoint = |role: &str| format!("[backends.{role}]\nbase_url = \"{}\"\nauth_token = \"t0k\"\n", models.url());
    let config = format!(
        "listen = \"127.0.0.1:0\"\n{}{}{}",
        endpoint("vlm"),
        endpoint("detector"),
        endpoint("segmenter")
    );
    std::fs::write(dir.path().join("svc.toml"), config).unwrap();
    let service = Server::start(&["serve", "--config", "svc.toml"], dir.path());

    let o = arsentry(
        &["client", "simulate", "--service", &service.url(), "--dataset", "ds", "--pipeline", "3", "--format", "json"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["correct"], 10);
    assert_eq!(r["ordered"], true);
    for f in r["frames"].as_array().unwrap() {
        let action = if f["label"] == true { "reduce_opacity" } else { "none" };
        assert_eq!(f["directive"]["action"], action);
    }

    let direct = arsentry(
        &["eval", "obstruct", "--dataset", "ds", "--backends", &models.url(), "--token", "t0k", "--format", "json"],
        dir.path(),
    );
    assert_eq!(code(&direct), 0);
    let r: Value = serde_json::from_str(&stdout(&direct)).unwrap();
    assert_eq!(r["accuracy"], 1.0);
}
