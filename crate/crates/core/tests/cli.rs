mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expcopilot"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ingested() -> (tempfile::TempDir, std::path::PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::synthetic_config(tmp.path());
    ok(&["ingest", "--config", s(&cfg)]);
    (tmp, cfg)
}

#[test]
fn ingest_matches_golden_and_is_idempotent() {
    let (tmp, cfg) = ingested();
    let pools = tmp.path().join("pools");
    let golden = common::synthetic_dir().join("golden");
    for f in ["pool.jsonl", "discretizers.json"] {
        assert_eq!(
            std::fs::read(pools.join(f)).unwrap(),
            std::fs::read(golden.join(f)).unwrap(),
            "{f}"
        );
    }
    let before: Vec<_> = ["pool.jsonl", "discretizers.json", "embeddings.jsonl"]
        .iter()
        .map(|f| std::fs::read(pools.join(f)).unwrap())
        .collect();
    ok(&["ingest", "--config", s(&cfg)]);
    let after: Vec<_> = ["pool.jsonl", "discretizers.json", "embeddings.jsonl"]
        .iter()
        .map(|f| std::fs::read(pools.join(f)).unwrap())
        .collect();
    assert_eq!(before, after);
}

#[test]
fn ingest_rejects_empty_history() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::synthetic_config(tmp.path());
    let empty = tmp.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = run(&["ingest", "--config", s(&cfg), "--history", s(&empty)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("history is empty"));
}

#[test]
fn ingest_reports_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::synthetic_config(tmp.path());
    let bad = tmp.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"task_id\":\"sensor-1\",\"values\":{\"booster\":\"dart\",\"learning_rate\":0.1,\"max_depth\":4.0},\"metric\":0.5}\n{\"task_id\":\"nope\",\"values\":{},\"metric\":0.5}\n",
    )
    .unwrap();
    let out = run(&["ingest", "--config", s(&cfg), "--history", s(&bad)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("bad.jsonl") && err.contains(":2") && err.contains("nope"),
        "{err}"
    );
}

#[test]
fn elicit_is_byte_stable_and_needs_a_pool() {
    let (tmp, cfg) = ingested();
    let k = tmp.path().join("pools/knowledge.jsonl");
    ok(&["elicit", "--config", s(&cfg)]);
    let first = std::fs::read(&k).unwrap();
    ok(&["elicit", "--config", s(&cfg)]);
    assert_eq!(first, std::fs::read(&k).unwrap());
    let items: Vec<Value> = std::str::from_utf8(&first)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(
        items.len(),
        1,
        "re-eliciting replaces the item for the space"
    );

    let trace: Vec<Value> = serde_json::from_slice(
        &std::fs::read(tmp.path().join("pools/elicit_trace.synthetic-gbm.json")).unwrap(),
    )
    .unwrap();
    // Scripted candidates tie, so with patience 2 the loop stops after 1 + 2 + 1 rounds.
    assert_eq!(trace.len(), 4);

    let empty = tempfile::tempdir().unwrap();
    let out = run(&[
        "elicit",
        "--config",
        s(&cfg),
        "--pools",
        s(&empty.path().join("missing")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn suggest_emits_json_lines_and_prompt() {
    let (tmp, cfg) = ingested();
    let task = tmp.path().join("task.json");
    std::fs::write(
        &task,
        r#"{"task_id":"new-sensor","space_id":"synthetic-gbm","description":"It holds vibration sensor readings from rotating machinery, sampled per second, with a binary fault label."}"#,
    )
    .unwrap();
    let out = ok(&[
        "suggest",
        "--config",
        s(&cfg),
        "--task-file",
        s(&task),
        "--n",
        "3",
        "--budget",
        "3000",
        "--backend",
        "scripted",
        "--show-prompt",
    ]);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("Here are some classification datasets"));
    assert!(
        stderr.contains("Based on the examples above, recommend 3 hyper-parameter configurations")
    );
    assert!(stderr.trim_end().ends_with("with a binary fault label."));

    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    for (i, l) in lines.iter().enumerate() {
        let obj = l.as_object().unwrap();
        let mut keys: Vec<_> = obj.keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(
            keys,
            ["discrete", "rank", "source", "space_id", "task_id", "values"]
        );
        assert_eq!(obj["rank"], i + 1);
        assert_eq!(obj["task_id"], "new-sensor");
        assert_eq!(obj["source"], "primary");
        assert_eq!(obj["values"]["learning_rate"], 0.01);
        assert_eq!(obj["values"]["max_depth"], 4.0);
    }
}

#[test]
fn suggest_exit_codes() {
    let (tmp, cfg) = ingested();
    let bad = run(&[
        "suggest",
        "--config",
        s(&cfg),
        "--description",
        "x",
        "--n",
        "0",
    ]);
    assert_eq!(bad.status.code(), Some(2));

    let cfg_text = std::fs::read_to_string(&cfg)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("benchmark ="))
        .collect::<Vec<_>>()
        .join("\n");
    let cfg2 = tmp.path().join("no-bench.toml");
    std::fs::write(&cfg2, cfg_text).unwrap();
    let prompt = {
        let out = ok(&[
            "suggest",
            "--config",
            s(&cfg2),
            "--description",
            "some new dataset",
            "--show-prompt",
        ]);
        String::from_utf8(out.stderr).unwrap()
    };
    let req = expcopilot::llm::CompletionRequest::new(prompt.trim_end_matches('\n'), 0.0)
        .unwrap()
        .with_max_tokens(512)
        .unwrap();
    // Unparseable answers and no benchmark to fall back on.
    let mut entries = vec![
        expcopilot::llm::CassetteEntry::embedding(
            "some new dataset",
            &expcopilot::retrieval::bag_of_words_embedding("some new dataset"),
        ),
        expcopilot::llm::CassetteEntry::completion(&req, "I cannot help with that."),
    ];
    let repair = expcopilot::llm::CompletionRequest::new(prompt.trim_end_matches('\n'), 0.7)
        .unwrap()
        .with_max_tokens(512)
        .unwrap();
    entries.push(expcopilot::llm::CassetteEntry::completion(
        &repair,
        "Still no.",
    ));
    let cassette = tmp.path().join("cassette.jsonl");
    expcopilot::io::write_jsonl(&cassette, &entries).unwrap();
    let out = run(&[
        "suggest",
        "--config",
        s(&cfg2),
        "--description",
        "some new dataset",
        "--backend",
        "replay",
        "--cassette",
        s(&cassette),
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // A replay miss is a backend error.
    let out = run(&[
        "suggest",
        "--config",
        s(&cfg2),
        "--description",
        "another dataset",
        "--backend",
        "replay",
        "--cassette",
        s(&cassette),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn eval_runs_all_methods_with_stable_bytes() {
    let (tmp, cfg) = ingested();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&[
        "eval",
        "--config",
        s(&cfg),
        "--methods",
        "random,constant,nearest,copilot",
        "--seeds",
        "0,1",
        "--out",
        s(&a),
    ]);
    ok(&[
        "eval",
        "--config",
        s(&cfg),
        "--methods",
        "random,constant,nearest,copilot",
        "--seeds",
        "0,1",
        "--out",
        s(&b),
    ]);
    let csv = std::fs::read_to_string(a.join("report.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(b.join("report.csv")).unwrap());
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,seed,task_id,metric@1,metric@2,metric@3,nacc@1,nacc@2,nacc@3,failed"
    );
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 4 * 2 * 12);
    for m in ["random", "constant", "nearest", "copilot"] {
        assert_eq!(
            rows.iter()
                .filter(|r| r.starts_with(&format!("{m},")))
                .count(),
            24
        );
    }
    let summary: Value =
        serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["methods"]["copilot"]["hygiene_violations"], 0);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[backend]\napi_key = \"secret\"\n").unwrap();
    let out = run(&["eval", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("EXPCOPILOT_API_KEY"));
    let out = run(&["eval", "--config", s(&tmp.path().join("missing.toml"))]);
    assert_eq!(out.status.code(), Some(2));
}
