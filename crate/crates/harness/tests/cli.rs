use std::path::Path;
use std::process::Command;

fn morpheus(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_morpheus-harness")).args(args).current_dir(cwd).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn scenario(name: &str) -> String {
    format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn run_writes_trace_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = morpheus(&["run", "--config", &scenario("low-throughput-n4.toml")], dir.path());
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("consistency  pass"), "{out}");
    let trace = dir.path().join("out/low-throughput-n4/trace.trc");
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/low-throughput-n4/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(
        metrics["blocks"][0]["issuer_final"].as_u64().unwrap() - metrics["blocks"][0]["proposed"].as_u64().unwrap(),
        30
    );

    let (code, _) = morpheus(&["check", "--trace", trace.to_str().unwrap(), "--format", "jsonl"], dir.path());
    assert_eq!(code, 0);
}

#[test]
fn corrupted_trace_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(morpheus(&["fixtures", "--out", "fx"], dir.path()).0, 0);
    let (code, out) = morpheus(&["check", "--trace", "fx/corrupted.trc"], dir.path());
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("consistency  FAIL"), "{out}");
    assert_eq!(morpheus(&["check", "--trace", "fx/clean.trc"], dir.path()).0, 0);
    assert!(dir.path().join("fx/dag-fork.txt").exists());
}

#[test]
fn bad_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(morpheus(&["check", "--trace", "missing.trc"], dir.path()).0, 2);
    std::fs::write(dir.path().join("bad.toml"), "n = 3\ndelta_bound = 1\ndelta_actual = 1\nhorizon = 9\nf = 1\n")
        .unwrap();
    assert_eq!(morpheus(&["run", "--config", "bad.toml"], dir.path()).0, 2);
    std::fs::write(dir.path().join("junk.trc"), "not a trace\n").unwrap();
    assert_eq!(morpheus(&["check", "--trace", "junk.trc"], dir.path()).0, 2);
}

#[test]
fn small_sweep_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) =
        morpheus(&["sweep", "--n", "4", "--seeds", "2", "--strategies", "equivocator,silent-leader"], dir.path());
    assert_eq!(code, 0, "{out}");
    assert_eq!(out.lines().count(), 3, "{out}");
}
