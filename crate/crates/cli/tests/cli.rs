//! End-to-end smoke tests over the command-line surface: generate a
//! tiny corpus, train a tiny model, prove, evaluate (in-process and
//! over the wire), run the pipeline commands, and check exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tacgen"))
}

fn work_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tacgen-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn gen_and_train(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("data");
    let model = dir.join("model");
    let out = bin()
        .args(["gen-toy-data", "--count", "40", "--max-depth", "3", "--seed", "7"])
        .arg("--out-dir")
        .arg(&data)
        .output()
        .unwrap();
    ok(&out);
    let out = bin()
        .arg("train")
        .arg("--data")
        .arg(data.join("steps.sexp"))
        .arg("--out")
        .arg(&model)
        .args(["--epochs", "3", "--lr", "2e-3", "--weight-decay", "0", "--dim", "12", "--seed", "1"])
        .output()
        .unwrap();
    ok(&out);
    assert!(model.join("model.ckpt").exists());
    assert!(model.join("model.meta").exists());
    assert!(model.join("train.log").exists());
    (data, model)
}

#[test]
fn full_workflow_roundtrip() {
    let dir = work_dir("flow");
    let (data, model) = gen_and_train(&dir);

    // prove an easy inline theorem; script lines are period-terminated.
    let out = bin()
        .args(["prove", "(impl (atom A) (atom A))"])
        .arg("--model")
        .arg(&model)
        .args(["--beam-width", "12", "--seed", "3"])
        .output()
        .unwrap();
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| l.ends_with('.')), "script lines: {stdout}");
    assert!(stdout.contains("intro"));

    // prove reports exit 3 when no proof exists within budget.
    let out = bin()
        .args(["prove", "(atom Z)"])
        .arg("--model")
        .arg(&model)
        .args(["--max-tactics", "40"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // evaluate over the generated theorem set, in-process.
    let report_path = dir.join("report.sexp");
    let out = bin()
        .arg("evaluate")
        .arg("--theorems")
        .arg(data.join("theorems.sexp"))
        .arg("--model")
        .arg(&model)
        .arg("--out")
        .arg(&report_path)
        .args(["--beam-width", "12", "--jobs", "2", "--no-timing", "--seed", "5"])
        .output()
        .unwrap();
    ok(&out);
    let report = std::fs::read_to_string(&report_path).unwrap();
    assert!(report.lines().count() == 40);
    assert!(report.contains("(status ok)"));

    // reconstruct-tree and stats run over the recorded traces.
    let out = bin()
        .arg("reconstruct-tree")
        .arg("--traces")
        .arg(data.join("traces.sexp"))
        .output()
        .unwrap();
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("(prooftree (root 1)"));

    let out = bin().arg("stats").arg("--traces").arg(data.join("traces.sexp")).output().unwrap();
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("(stats (proofs 40)"), "{stdout}");

    // extract-synthetic emits replayable steps with provenance.
    let synth = dir.join("synthetic.sexp");
    let scripts = dir.join("synthetic-scripts.sexp");
    let out = bin()
        .arg("extract-synthetic")
        .arg("--traces")
        .arg(data.join("traces.sexp"))
        .arg("--out")
        .arg(&synth)
        .arg("--scripts-out")
        .arg(&scripts)
        .output()
        .unwrap();
    ok(&out);
    let steps = std::fs::read_to_string(&synth).unwrap();
    assert!(steps.contains("(provenance \"trace"));
    assert!(std::fs::read_to_string(&scripts).unwrap().contains("(synthetic trace"));

    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn evaluate_remote_matches_in_process() {
    let dir = work_dir("remote");
    let (data, model) = gen_and_train(&dir);

    // Start the server on an ephemeral port.
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let _ = tacgen::wire::serve(listener);
    });

    let run = |env: &str| -> String {
        let path = dir.join(format!("report-{}.sexp", env.replace([':', '.'], "-")));
        let out = bin()
            .arg("evaluate")
            .arg("--theorems")
            .arg(data.join("theorems.sexp"))
            .arg("--model")
            .arg(&model)
            .arg("--out")
            .arg(&path)
            .args(["--beam-width", "8", "--no-timing", "--seed", "11", "--env", env])
            .output()
            .unwrap();
        ok(&out);
        std::fs::read_to_string(&path).unwrap()
    };
    let local = run("toy");
    let remote = run(&format!("remote:{addr}"));
    assert_eq!(local, remote, "wire-served kernel must reproduce the in-process report");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn parse_tactic_prints_ast() {
    let out = bin().args(["parse-tactic", "rewrite IHa'"]).output().unwrap();
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("QUALID \"IHa'\""), "{stdout}");
    assert!(stdout.starts_with("(tactic_expr"));

    let out = bin().args(["parse-tactic", "simpl; auto"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("compound"));
}

#[test]
fn usage_errors_exit_one() {
    let out = bin().args(["train", "--bogus-flag", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().arg("no-such-command").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    // --help succeeds and documents defaults.
    let out = bin().args(["evaluate", "--help"]).output().unwrap();
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("default: 20") && text.contains("default: 300"));
}
