use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use veritrace_core::corpus::to_jsonl_line;
use veritrace_core::fixtures::cotemp_example;
use veritrace_core::trace::{SftMode, SftRecord};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_veritrace")).current_dir(dir).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn error_summary(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().rev().find(|l| l.starts_with('{')).expect("JSON summary on stderr");
    serde_json::from_str(line).unwrap()
}

fn write_example(dir: &Path) {
    fs::write(dir.join("example.jsonl"), to_jsonl_line(&cotemp_example()) + "\n").unwrap();
}

#[test]
fn incorrect_mode_on_cotemp_example() {
    let tmp = tempfile::tempdir().unwrap();
    write_example(tmp.path());
    let out =
        run(tmp.path(), &["build-sft", "--input", "example.jsonl", "--mode", "incorrect", "--seed", "7", "--out", "."]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(tmp.path().join("sft.incorrect_trace.jsonl")).unwrap();
    let records: Vec<SftRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert_eq!(r.mode, SftMode::IncorrectTrace);
    assert!(r.completion.ends_with("<answer>['History Museum of Armenia']</answer>"));
    assert_ne!(r.meta.category.as_ref().unwrap().as_str(), "during");
    assert!(!r.meta.support.as_ref().unwrap().contains(&5));
}

#[test]
fn identical_runs_produce_identical_bytes() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let p = d.path();
        assert_eq!(code(&run(p, &["ingest", "--synthetic-cotemp", "40", "--seed", "5", "--out", "out"])), 0);
        let args =
            ["build-sft", "--input", "out/instances.jsonl", "--mode", "incorrect", "--seed", "9", "--out", "out"];
        assert_eq!(code(&run(p, &args)), 0);
    }
    let names: Vec<_> = fs::read_dir(dirs[0].path().join("out")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(names.len() >= 4);
    for name in names {
        let a = fs::read(dirs[0].path().join("out").join(&name)).unwrap();
        let b = fs::read(dirs[1].path().join("out").join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dirs[0].path().join("out/manifest.build-sft.incorrect_trace.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"][0]["path"], "sft.incorrect_trace.jsonl");
}

#[test]
fn oracle_check_reports_full_agreement_and_flags_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    assert_eq!(code(&run(p, &["ingest", "--synthetic-cotemp", "60", "--seed", "1", "--out", "."])), 0);
    let out = run(p, &["oracle-check", "--input", "instances.jsonl", "--out", "."]);
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(p.join("oracle.json")).unwrap()).unwrap();
    assert_eq!(doc["agreement_pct"], 100.0);

    let text = fs::read_to_string(p.join("instances.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut first: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    first["answers"] = serde_json::json!(["Nowhere In Particular"]);
    lines[0] = first.to_string();
    fs::write(p.join("tampered.jsonl"), lines.join("\n") + "\n").unwrap();
    let out = run(p, &["oracle-check", "--input", "tampered.jsonl", "--out", "t"]);
    assert_eq!(code(&out), 7);
    assert_eq!(error_summary(&out)["error"], "oracle_disagreement");
}

#[test]
fn gold_replay_scores_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    write_example(p);
    assert_eq!(code(&run(p, &["build-sft", "--input", "example.jsonl", "--mode", "correct", "--out", "."])), 0);
    assert_eq!(code(&run(p, &["infer", "--input", "sft.correct_trace.jsonl", "--replay", "gold", "--out", "."])), 0);
    let out = run(p, &["eval", "--instances", "example.jsonl", "--outputs", "outputs.jsonl", "--out", "."]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("exact match 100.00%, classification 100.00%, IR 100.00%"));
    let out = run(p, &["report", "--run", "m:sft-correct-trace:eval.jsonl", "--out", "."]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(p.join("report.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "m,sft-correct-trace,100.00,100.00,100.00,100.00,100.00,100.00,38.00");
}

#[test]
fn babi_ingest_with_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    let fixture =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/qa1_single-supporting-fact_test.txt");
    fs::write(p.join("run.ini"), "[dataset]\nkind = babi\n[output]\ndir = babi-out\n").unwrap();
    let args = ["--config", "run.ini", "ingest", "--format", "babi", "--task", "single-supporting-fact", "--input"];
    let out = run(p, &[&args[..], &[fixture.to_str().unwrap()]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(p.join("babi-out/instances.jsonl")).unwrap().lines().count(), 10);
    let out = run(p, &["--config", "run.ini", "oracle-check", "--input", "babi-out/instances.jsonl"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn exit_codes_are_distinct_per_failure_class() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    write_example(p);

    let out = run(p, &["ingest", "--no-such-flag"]);
    assert_eq!(code(&out), 2);
    assert_eq!(error_summary(&out)["error"], "usage");

    let out = run(p, &["build-sft", "--input", "example.jsonl", "--mode", "incorrect"]);
    assert_eq!(code(&out), 3);
    assert_eq!(error_summary(&out)["error"], "config");

    let out = run(p, &["decompose", "--input", "missing.jsonl"]);
    assert_eq!(code(&out), 3);

    fs::write(p.join("bad.ini"), "[dataset]\ncolour = blue\n").unwrap();
    assert_eq!(code(&run(p, &["--config", "bad.ini", "decompose", "--input", "example.jsonl"])), 3);

    fs::write(p.join("broken.jsonl"), "{\"id\": \"x\"}\n").unwrap();
    let out = run(p, &["decompose", "--input", "broken.jsonl"]);
    assert_eq!(code(&out), 4);
    assert_eq!(error_summary(&out)["error"], "corpus");

    let mut no_support: serde_json::Value = serde_json::from_str(&to_jsonl_line(&cotemp_example())).unwrap();
    no_support["support"] = serde_json::json!([]);
    fs::write(p.join("nosupport.jsonl"), no_support.to_string() + "\n").unwrap();
    assert_eq!(code(&run(p, &["decompose", "--input", "nosupport.jsonl"])), 5);

    assert_eq!(code(&run(p, &["build-sft", "--input", "example.jsonl", "--mode", "correct", "--out", "."])), 0);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    let out = run(
        p,
        &[
            "infer",
            "--input",
            "sft.correct_trace.jsonl",
            "--base-url",
            &url,
            "--model",
            "m",
            "--max-retries",
            "0",
            "--out",
            ".",
        ],
    );
    assert_eq!(code(&out), 6);
    let summary = error_summary(&out);
    assert_eq!(summary["uncollected"], serde_json::json!(["cotemp-morus-hasratyan"]));

    fs::write(p.join("empty.jsonl"), "").unwrap();
    assert_eq!(code(&run(p, &["report", "--run", "m:prompt:empty.jsonl"])), 8);
}
