//! End-to-end runs of the compiled binary: exit codes, artifacts, and the
//! flag > environment > config file precedence chain.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_exclusion");

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)
        .expect("workspace root")
        .to_path_buf()
}

/// A command with a clean environment, run from the workspace root so the
/// documented relative fixture paths work as written.
fn exclusion() -> Command {
    let mut cmd = Command::new(BIN);
    cmd.current_dir(repo_root());
    cmd.env_remove("EXCLUSION_API_KEY");
    cmd.env_remove("EXCLUSION_BASE_URL");
    cmd
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(cmd: &mut Command) -> Run {
    let out = cmd.output().expect("binary runs");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn read_json(path: &Path) -> Value {
    let raw = std::fs::read_to_string(path).expect("artifact readable");
    serde_json::from_str(&raw).expect("artifact is JSON")
}

/// The single run directory a bench invocation created under `out_dir`.
fn sole_run_dir(out_dir: &Path) -> PathBuf {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(out_dir)
        .expect("out dir exists")
        .map(|e| e.expect("entry").path())
        .collect();
    assert_eq!(entries.len(), 1, "exactly one run directory");
    entries.pop().unwrap()
}

fn total_accuracy(report: &Value, strategy: &str, task: &str) -> f64 {
    report["totals"]
        .as_array()
        .expect("totals array")
        .iter()
        .find(|row| row["strategy"] == strategy && row["task"] == task)
        .unwrap_or_else(|| panic!("no totals row for {strategy}/{task}"))["accuracy"]
        .as_f64()
        .expect("accuracy number")
}

#[test]
fn bench_runs_the_fixture_dataset_and_writes_artifacts() {
    let out_dir = tempfile::tempdir().unwrap();
    let res = run(exclusion().args([
        "bench",
        "--dataset",
        "fixtures/parajumble.jsonl",
        "--strategy",
        "iep,cot",
        "--backend",
        "scripted:fixtures/replies",
        "--out-dir",
        out_dir.path().to_str().unwrap(),
    ]));
    assert_eq!(res.code, 0, "stderr: {}", res.stderr);
    assert!(res.stdout.contains("accuracy"), "table on stdout: {}", res.stdout);

    let run_dir = sole_run_dir(out_dir.path());
    let report = read_json(&run_dir.join("report.json"));
    assert_eq!(total_accuracy(&report, "iep", "all"), 1.0);
    assert_eq!(total_accuracy(&report, "cot", "all"), 0.6);
    assert_eq!(report["rows"].as_array().unwrap().len(), 10);
    assert_eq!(report["rejects"].as_array().unwrap().len(), 0);

    // The run directory is named by the report's run id, whose suffix is
    // the resolved-config digest prefix.
    let dir_name = run_dir.file_name().unwrap().to_str().unwrap().to_string();
    assert_eq!(report["run_id"].as_str().unwrap(), dir_name);
    let config = read_json(&run_dir.join("config.json"));
    let digest = config["digest"].as_str().unwrap();
    assert!(dir_name.ends_with(&digest[..8]));
    assert_eq!(config["config"]["command"], "bench");
    assert_eq!(report["config_digest"].as_str().unwrap(), digest);

    let templates = read_json(&run_dir.join("templates.json"));
    assert!(templates["digest"].as_str().unwrap().len() >= 8);
    assert!(templates["templates"].as_object().unwrap().len() > 0);
    assert!(run_dir.join("report.txt").exists());

    let traces: Vec<_> = std::fs::read_dir(run_dir.join("traces")).unwrap().collect();
    assert_eq!(traces.len(), 10, "one trace per strategy x problem");
    let one = read_json(&run_dir.join("traces").join("iep-pj-0001.json"));
    assert_eq!(one["config_digest"].as_str().unwrap(), digest);
    assert_eq!(one["trace"]["problem_id"], "pj-0001");
}

#[test]
fn unknown_strategy_is_a_usage_error() {
    let res = run(exclusion().args(["bench", "--strategy", "nonsense"]));
    assert_eq!(res.code, 1);
    assert!(
        res.stderr.contains("standard, cot, iep, iep-cot"),
        "valid names listed: {}",
        res.stderr
    );
    assert!(res.stderr.contains("Usage: exclusion bench"), "synopsis shown: {}", res.stderr);

    // clap's own parse errors land on the same exit code.
    let res = run(exclusion().args(["bench", "--no-such-flag"]));
    assert_eq!(res.code, 1);
    assert!(res.stderr.contains("--no-such-flag"));
}

#[test]
fn missing_backend_is_a_usage_error() {
    let res = run(exclusion().args(["bench", "--dataset", "fixtures/parajumble.jsonl"]));
    assert_eq!(res.code, 1);
    assert!(
        res.stderr.contains("EXCLUSION_BASE_URL"),
        "points at the environment variable: {}",
        res.stderr
    );
}

#[test]
fn bad_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{ "stratgy": "iep" }"#).unwrap();
    let res = run(exclusion().args([
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--dataset",
        "fixtures/parajumble.jsonl",
        "--backend",
        "scripted:fixtures/replies",
    ]));
    assert_eq!(res.code, 1);
    assert!(res.stderr.contains("unknown field"), "names the bad key: {}", res.stderr);
}

#[test]
fn simulate_errors_prints_the_compounding_table() {
    let res = run(exclusion().args([
        "simulate-errors",
        "--steps",
        "6",
        "--error",
        "0.1",
        "--trials",
        "1000000",
        "--seed",
        "7",
    ]));
    assert_eq!(res.code, 0, "stderr: {}", res.stderr);
    // Six steps at e=0.1: five error-bearing steps, 0.9^5 exactly.
    assert!(res.stdout.contains("0.590490"), "table: {}", res.stdout);
    assert_eq!(res.stdout.lines().count(), 8, "header lines plus one row per length");

    // The same grid as CSV, machine readable.
    let csv = run(exclusion().args([
        "simulate-errors",
        "--steps",
        "3",
        "--error",
        "0.1,0.2",
        "--trials",
        "1000",
        "--seed",
        "7",
        "--csv",
    ]));
    assert_eq!(csv.code, 0);
    let mut lines = csv.stdout.lines();
    assert_eq!(lines.next().unwrap(), "steps,error,estimate,std_error,exact");
    assert_eq!(csv.stdout.lines().count(), 7, "header plus 3x2 grid");
    assert!(csv.stdout.contains("1,0.1,1.000000,0.000000,1.000000"));
}

#[test]
fn make_parajumble_shuffles_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("paragraphs.txt");
    std::fs::write(
        &input,
        "The oven beeped.\nShe slid the tray in.\nShe mixed the batter first.\n\n\
         He laced his boots.\nThe trail began at dawn.\nA light rain started.\nHe checked the map twice.\n",
    )
    .unwrap();
    let out = dir.path().join("set.jsonl");
    let res = run(exclusion().args([
        "make-parajumble",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "3",
    ]));
    assert_eq!(res.code, 0, "stderr: {}", res.stderr);

    let body = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<Value> =
        body.lines().map(|l| serde_json::from_str(l).expect("JSONL line")).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["id"], "pj-0001");
    assert_eq!(lines[1]["id"], "pj-0002");

    let originals = [
        vec!["The oven beeped.", "She slid the tray in.", "She mixed the batter first."],
        vec![
            "He laced his boots.",
            "The trail began at dawn.",
            "A light rain started.",
            "He checked the map twice.",
        ],
    ];
    for (line, original) in lines.iter().zip(&originals) {
        let sentences = line["sentences"].as_object().unwrap();
        let answer: Vec<&str> =
            line["answer"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        let mut labels: Vec<&str> = sentences.keys().map(String::as_str).collect();
        labels.sort();
        let mut sorted_answer = answer.clone();
        sorted_answer.sort();
        assert_eq!(sorted_answer, labels, "answer is a permutation of the labels");
        assert_ne!(answer, labels, "presentation order differs from the solution");
        let reassembled: Vec<&str> =
            answer.iter().map(|l| sentences[*l].as_str().unwrap()).collect();
        assert_eq!(&reassembled, original, "answer order restores the paragraph");
    }

    // Same seed, same bytes.
    let rerun_out = dir.path().join("set2.jsonl");
    let rerun = run(exclusion().args([
        "make-parajumble",
        "--input",
        input.to_str().unwrap(),
        "--out",
        rerun_out.to_str().unwrap(),
        "--seed",
        "3",
    ]));
    assert_eq!(rerun.code, 0);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&rerun_out).unwrap());
}

#[test]
fn ask_answers_from_a_scripted_reply() {
    let dir = tempfile::tempdir().unwrap();
    let replies = dir.path().join("replies.json");
    std::fs::write(&replies, r#"["So the final answer is: B"]"#).unwrap();
    let res = run(exclusion().args([
        "ask",
        "Which line scans?",
        "--task",
        "multiple_choice",
        "--option",
        "A=The cat sat on the mat.",
        "--option",
        "B=On mat the sat cat.",
        "--strategy",
        "standard",
        "--backend",
        &format!("scripted:{}", replies.display()),
    ]));
    assert_eq!(res.code, 0, "stderr: {}", res.stderr);
    assert!(res.stdout.contains("answer: B"), "stdout: {}", res.stdout);
    assert!(res.stdout.contains("model calls: 1"), "stdout: {}", res.stdout);
}

#[test]
fn warm_cache_serves_a_rerun_without_touching_the_backend() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let first_out = dir.path().join("first");
    let res = run(exclusion().args([
        "bench",
        "--dataset",
        "fixtures/parajumble.jsonl",
        "--strategy",
        "iep,cot",
        "--backend",
        "scripted:fixtures/replies",
        "--cache-dir",
        cache.to_str().unwrap(),
        "--out-dir",
        first_out.to_str().unwrap(),
    ]));
    assert_eq!(res.code, 0, "stderr: {}", res.stderr);

    // An empty script can serve nothing itself, so the rerun only passes
    // if every call is answered from the cache.
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "[]").unwrap();
    let second_out = dir.path().join("second");
    let res = run(exclusion().args([
        "bench",
        "--dataset",
        "fixtures/parajumble.jsonl",
        "--strategy",
        "iep,cot",
        "--backend",
        &format!("scripted:{}", empty.display()),
        "--cache-dir",
        cache.to_str().unwrap(),
        "--out-dir",
        second_out.to_str().unwrap(),
    ]));
    assert_eq!(res.code, 0, "rerun fully cache-served, stderr: {}", res.stderr);

    // Same results row for row once run-identifying fields are blanked.
    let mut first = read_json(&sole_run_dir(&first_out).join("report.json"));
    let mut second = read_json(&sole_run_dir(&second_out).join("report.json"));
    // The backend selector differs between the runs, so the run identity
    // fields differ; everything the evaluation produced must not.
    for report in [&mut first, &mut second] {
        report["run_id"] = Value::Null;
        report["created_at"] = Value::Null;
        report["config_digest"] = Value::Null;
    }
    assert_eq!(first, second);
}

#[test]
fn flags_beat_environment_beats_config() {
    let dir = tempfile::tempdir().unwrap();
    let replies = repo_root().join("fixtures").join("replies");
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        format!(
            r#"{{ "model": "config-model", "backend": "scripted:{}", "strategy": "iep" }}"#,
            replies.display()
        ),
    )
    .unwrap();
    let dataset = repo_root().join("fixtures").join("parajumble.jsonl");

    // Flag wins over the config file.
    let out_a = tempfile::tempdir().unwrap();
    let res = run(exclusion().args([
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--model",
        "flag-model",
        "--out-dir",
        out_a.path().to_str().unwrap(),
    ]));
    assert_eq!(res.code, 0, "stderr: {}", res.stderr);
    let report = read_json(&sole_run_dir(out_a.path()).join("report.json"));
    assert_eq!(report["model_id"], "flag-model");

    // Without the flag the config file supplies the model.
    let out_b = tempfile::tempdir().unwrap();
    let res = run(exclusion().args([
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--out-dir",
        out_b.path().to_str().unwrap(),
    ]));
    assert_eq!(res.code, 0, "stderr: {}", res.stderr);
    let report = read_json(&sole_run_dir(out_b.path()).join("report.json"));
    assert_eq!(report["model_id"], "config-model");

    // Environment wins over the config file: pointing it at a dead port
    // makes the run fail even though the config names a working scripted
    // backend.
    let res = run(exclusion()
        .args([
            "bench",
            "--config",
            config.to_str().unwrap(),
            "--dataset",
            dataset.to_str().unwrap(),
            "--abort-after",
            "1",
            "--out-dir",
            dir.path().join("dead").to_str().unwrap(),
        ])
        .env("EXCLUSION_BASE_URL", "http://127.0.0.1:9"));
    assert_eq!(res.code, 2, "stderr: {}", res.stderr);

    // And the flag wins over that same environment.
    let out_c = tempfile::tempdir().unwrap();
    let res = run(exclusion()
        .args([
            "bench",
            "--config",
            config.to_str().unwrap(),
            "--dataset",
            dataset.to_str().unwrap(),
            "--backend",
            &format!("scripted:{}", replies.display()),
            "--out-dir",
            out_c.path().to_str().unwrap(),
        ])
        .env("EXCLUSION_BASE_URL", "http://127.0.0.1:9"));
    assert_eq!(res.code, 0, "stderr: {}", res.stderr);
}
