//! Exercises the command-line contract end to end: exit status 0/1/2, the
//! one-line JSON failure document on stderr, flag and environment handling,
//! and byte-level reproducibility of the artifact tree across invocations.

use serde_json::Value;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FIXTURE: &str = r#"
name = "cli-fixture"
dimension = 1

[potential]
family = "harmonic"
k2 = 1.0

[initial]
family = "gaussian"
particles = 120
seed = 23
sigma = 0.05
alpha0 = 0.4

[flow]
eps_list = [0.4, 0.2, 0.1]
horizon = 4.0
steps_list = [32, 64]

[probes]
alphas = [0.05]
bumps = [{ center = [0.0, 0.0], radius = 0.5 }]
window = { start = 1.0, end = 3.0, ramp = 0.75 }
cylinder_radius = 1.0

[output]
directory = "unused"
"#;

fn cli<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_phaseflow"))
        .args(args)
        .env_remove("PHASEFLOW_THREADS")
        .output()
        .expect("the binary launches")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("the binary exits normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is utf-8")
}

/// Parses stderr as the single-line JSON failure document.
fn failure_doc(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).expect("stderr is utf-8");
    let line = text.trim_end();
    assert!(
        !line.contains('\n'),
        "failure document must be one line, got: {text:?}"
    );
    serde_json::from_str(line).expect("stderr is a JSON document")
}

fn write_fixture(dir: &Path) -> PathBuf {
    let path = dir.join("scenario.toml");
    fs::write(&path, FIXTURE).expect("fixture writes");
    path
}

/// Every file under `dir`, keyed by its relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).expect("directory is readable") {
            let path = entry.expect("directory entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .expect("path under root")
                    .to_path_buf();
                out.insert(rel, fs::read(&path).expect("file is readable"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn validate_accepts_the_fixture_and_honors_thread_settings() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg = write_fixture(tmp.path());

    let out = cli(["validate", cfg.to_str().unwrap()]);
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(
        stdout(&out).contains("configuration ok"),
        "stdout: {}",
        stdout(&out)
    );

    let flagged = cli(["--threads", "1", "validate", cfg.to_str().unwrap()]);
    assert_eq!(code(&flagged), 0);

    let via_env = Command::new(env!("CARGO_BIN_EXE_phaseflow"))
        .args(["validate", cfg.to_str().unwrap()])
        .env("PHASEFLOW_THREADS", "1")
        .output()
        .expect("the binary launches");
    assert_eq!(code(&via_env), 0);
}

#[test]
fn validate_reports_config_errors_as_json() {
    let missing = cli(["validate", "/nonexistent/scenario.toml"]);
    assert_eq!(code(&missing), 2);
    let doc = failure_doc(&missing);
    assert_eq!(doc["error"], "config");
    assert!(doc["message"].as_str().is_some_and(|m| !m.is_empty()));
    assert_eq!(doc["failures"].as_array().map(Vec::len), Some(0));

    let tmp = tempfile::tempdir().expect("tempdir");
    let path = tmp.path().join("typo.toml");
    fs::write(&path, FIXTURE.replace("particles = 120", "particle = 120")).expect("writes");
    let rejected = cli(["validate", path.to_str().unwrap()]);
    assert_eq!(code(&rejected), 2);
    let doc = failure_doc(&rejected);
    assert_eq!(doc["error"], "config");
    assert!(
        doc["message"]
            .as_str()
            .is_some_and(|m| m.contains("particle")),
        "message should name the unknown field: {doc}"
    );
}

#[test]
fn identical_runs_reproduce_artifacts_and_seed_overrides_change_them() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg = write_fixture(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");

    for dir in [&a, &b] {
        let out = cli(["--seed", "7", "--out", dir.to_str().unwrap(), "run", cfg]);
        assert_eq!(
            code(&out),
            0,
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(stdout(&out).contains("passed"), "stdout: {}", stdout(&out));
    }
    let (first, second) = (tree(&a), tree(&b));
    assert!(!first.is_empty());
    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>(),
        "repeated runs must write the same inventory"
    );
    for (rel, bytes) in &first {
        assert_eq!(
            bytes,
            &second[rel],
            "artifact {} differs between runs",
            rel.display()
        );
    }

    let out = cli(["--seed", "8", "--out", c.to_str().unwrap(), "run", cfg]);
    assert_eq!(code(&out), 0);
    assert_ne!(
        fs::read(a.join("meta.json")).unwrap(),
        fs::read(c.join("meta.json")).unwrap(),
        "a different seed must change the inventory"
    );
}

#[test]
fn blocked_output_directory_exits_with_an_io_error() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg = write_fixture(tmp.path());
    let blocker = tmp.path().join("blocker");
    fs::write(&blocker, "x").expect("writes");

    let nested = blocker.join("nested");
    let out = cli([
        "--out",
        nested.to_str().unwrap(),
        "run",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    let doc = failure_doc(&out);
    assert_eq!(doc["error"], "io");
    assert!(
        doc["message"]
            .as_str()
            .is_some_and(|m| m.contains("nested")),
        "{doc}"
    );
}

#[test]
fn sweep_audit_and_corruption_detection_round_trip() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg = write_fixture(tmp.path());
    let out_dir = tmp.path().join("sweep-out");

    let swept = cli([
        "--out",
        out_dir.to_str().unwrap(),
        "sweep",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(
        code(&swept),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&swept.stderr)
    );
    assert!(
        out_dir.join("sweep.csv").is_file(),
        "sweep must write the rate matrix"
    );
    assert!(
        out_dir.join("refinement.csv").is_file(),
        "sweep must write the resolution study"
    );

    // A clean tree re-audits from disk alone.
    let clean = cli(["audit", out_dir.to_str().unwrap()]);
    assert_eq!(
        code(&clean),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&clean.stderr)
    );

    // A silently altered mass cell is an audit failure: exit 1, the failing
    // audit lines attached to the JSON document.
    let rec_path = out_dir.join("run-eps-0.4").join("record.csv");
    let text = fs::read_to_string(&rec_path).expect("record reads");
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<&str> = lines[2].split(',').collect();
    cells[1] = "9";
    lines[2] = cells.join(",");
    fs::write(&rec_path, lines.join("\n") + "\n").expect("record rewrites");

    let tainted = cli(["audit", out_dir.to_str().unwrap()]);
    assert_eq!(code(&tainted), 1);
    let doc = failure_doc(&tainted);
    assert_eq!(doc["error"], "audit");
    let failures = doc["failures"].as_array().expect("failures array");
    assert!(!failures.is_empty());
    assert!(
        failures.iter().all(|f| f["passed"] == false),
        "only failing audit lines belong in the document: {doc}"
    );
    assert!(
        failures.iter().any(|f| f["name"]
            .as_str()
            .is_some_and(|n| n.contains("mass monotone"))),
        "the altered mass column should break monotonicity: {doc}"
    );

    // A structurally broken inventory cannot be audited at all: exit 2.
    fs::write(out_dir.join("meta.json"), "{ not json").expect("meta rewrites");
    let broken = cli(["audit", out_dir.to_str().unwrap()]);
    assert_eq!(code(&broken), 2);
    let doc = failure_doc(&broken);
    assert_eq!(doc["error"], "artifact");
    assert!(
        doc["message"]
            .as_str()
            .is_some_and(|m| m.contains("meta.json")),
        "{doc}"
    );
}
