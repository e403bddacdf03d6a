use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn cfsearch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfsearch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cfsearch(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthesizes and trains a ga5 bundle under `dir`.
fn prepare(dir: &Path) {
    let series = dir.join("series");
    let bundle = dir.join("bundle.json");
    let summary = ok(&["synth", "--bench", "ga5", "--length", "2000", "--seed", "7", "--out", p(&series)]);
    assert!(summary.contains("V=5 T=2000"), "{summary}");
    assert!(summary.contains("x1->x2"));
    let table = ok(&["train", "--series", p(&series), "--out", p(&bundle)]);
    assert!(table.contains("initial_loss"));
    assert!(dir.join("heatmap.csv").exists());
}

#[test]
fn artifacts_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        prepare(dir);
        let out = cfsearch(&[
            "search",
            "--series",
            p(&dir.join("series")),
            "--bundle",
            p(&dir.join("bundle.json")),
            "--planted-tau",
            "0.95",
            "--population",
            "60",
            "--seed",
            "5",
            "--out",
            p(&dir.join("result.json")),
        ]);
        assert!(matches!(out.status.code(), Some(0) | Some(3)));
        assert!(dir.join("result_trace.csv").exists());
    }
    for file in ["series/series.csv", "series/meta.json", "series/spec.json", "bundle.json", "heatmap.csv", "result.json"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert!(x == y, "{file} differs between runs");
    }
    let result: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(result["seed"], 5);
}

#[test]
fn search_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let series = dir.path().join("series");
    let bundle = dir.path().join("bundle.json");
    let result = dir.path().join("r.json");
    let base = ["search", "--series", p(&series), "--bundle", p(&bundle), "--out", p(&result)];

    let mut planted = base.to_vec();
    planted.extend(["--planted-tau", "0.95"]);
    let summary = ok(&planted);
    assert!(summary.contains("converged true"), "{summary}");

    let mut unreachable = base.to_vec();
    unreachable.extend(["--goal", "1000000", "--generations", "0"]);
    assert_eq!(cfsearch(&unreachable).status.code(), Some(3));
    let trace = std::fs::read_to_string(dir.path().join("r_trace.csv")).unwrap();
    assert!(trace.starts_with("generation,best,mean,best_o1_rel,millis"));
    assert_eq!(trace.lines().count(), 2);

    let mut bad_config = base.to_vec();
    bad_config.extend(["--goal", "3", "--mutation-prob", "1.5"]);
    assert_eq!(cfsearch(&bad_config).status.code(), Some(2));

    let mut bad_tau = base.to_vec();
    bad_tau.extend(["--planted-tau", "0.97"]);
    assert_eq!(cfsearch(&bad_tau).status.code(), Some(2));
}

#[test]
fn usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cfsearch(&["synth", "--bench", "ga5"]).status.code(), Some(2));
    assert_eq!(cfsearch(&["synth", "--bench", "nope", "--out", p(dir.path())]).status.code(), Some(2));
    assert_eq!(cfsearch(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cfsearch(&["--help"]).status.code(), Some(0));
    let missing = dir.path().join("missing");
    let out = cfsearch(&["train", "--series", p(&missing), "--out", p(&dir.path().join("b.json"))]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let series = dir.path().join("s");
    ok(&["synth", "--bench", "ar1", "--length", "300", "--out", p(&series)]);
    let out = cfsearch(&["train", "--series", p(&series), "--out", p(&dir.path().join("b.json")), "--levels", "0.1,0.9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_and_causality() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let series = dir.path().join("series");
    let metrics = dir.path().join("metrics.csv");
    let table = ok(&["evaluate", "--series", p(&series), "--bundle", p(&dir.path().join("bundle.json")), "--out", p(&metrics)]);
    assert!(table.contains("persistence"));
    let csv = std::fs::read_to_string(&metrics).unwrap();
    assert!(csv.starts_with("learner,n,mae,mse,r2,mape,fit_seconds,predict_seconds"));
    assert_eq!(csv.lines().count(), 4);

    let heat = dir.path().join("h.csv");
    ok(&["causality", "--series", p(&series), "--out", p(&heat)]);
    assert_eq!(
        std::fs::read(&heat).unwrap(),
        std::fs::read(dir.path().join("heatmap.csv")).unwrap()
    );
    assert!(dir.path().join("h_mask.csv").exists());
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn get(port: u16, path: &str) -> Option<String> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut text = String::new();
    stream.read_to_string(&mut text).ok()?;
    Some(text)
}

#[test]
fn serve_answers_health_and_stops_on_interrupt() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let port = free_port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_cfsearch"))
        .args([
            "serve",
            "--bundle",
            p(&dir.path().join("bundle.json")),
            "--series",
            p(&dir.path().join("series")),
            "--port",
            &port.to_string(),
        ])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();

    let deadline = Instant::now() + Duration::from_secs(20);
    let reply = loop {
        if let Some(r) = get(port, "/api/v1/health") {
            break r;
        }
        assert!(Instant::now() < deadline, "server never came up");
        std::thread::sleep(Duration::from_millis(100));
    };
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(reply.contains("\"target\":\"x5\""));

    let status = Command::new("kill")
        .args(["-INT", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(status.success());
    let deadline = Instant::now() + Duration::from_secs(20);
    let code = loop {
        if let Some(s) = child.try_wait().unwrap() {
            break s.code();
        }
        if Instant::now() > deadline {
            child.kill().unwrap();
            panic!("server ignored the interrupt");
        }
        std::thread::sleep(Duration::from_millis(50));
    };
    assert_eq!(code, Some(0));
}

#[test]
fn serve_rejects_a_broken_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series");
    ok(&["synth", "--bench", "ar1", "--length", "300", "--out", p(&series)]);
    let bundle = dir.path().join("bundle.json");
    std::fs::write(&bundle, "{\"not\": \"a bundle\"}").unwrap();
    let out = cfsearch(&["serve", "--bundle", p(&bundle), "--series", p(&series), "--port", &free_port().to_string()]);
    assert_eq!(out.status.code(), Some(4));
}
