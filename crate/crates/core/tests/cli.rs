use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use codeseg::backends::cache::CacheRecord;
use codeseg::backends::LocalModel;
use codeseg::corpus::{load_corpus, Split};
use codeseg::rangeseg::render_range_prompt;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn codeseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codeseg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn corpus() -> PathBuf {
    fixtures().join("corpus.jsonl")
}

fn config() -> PathBuf {
    fixtures().join("run.toml")
}

#[test]
fn segment_writes_json_and_annotated_source() {
    let dir = tempfile::tempdir().unwrap();
    let out = codeseg(&["segment", "--config", s(&config()), "--input", s(&corpus()), "--out", s(dir.path()), "--backend", "heuristic"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("air_quality.segments.json")).unwrap()).unwrap();
    assert_eq!(json["file_id"], "air_quality");
    let segs = json["segments"].as_array().unwrap();
    assert_eq!(segs[0]["label"], "Comment");
    assert_eq!(segs[1]["label"], "Loading Library");
    assert_eq!(segs[2]["label"], "Loading Data");
    let mut next = 1;
    for seg in segs {
        assert_eq!(seg["start"].as_u64().unwrap(), next);
        next = seg["end"].as_u64().unwrap() + 1;
    }

    let annotated = fs::read_to_string(dir.path().join("air_quality.annotated.R")).unwrap();
    assert!(annotated.starts_with("# ---- [1-1] Comment ----\n# Air quality exploration\n"));
    assert!(annotated.contains("# ---- [2-4] Loading Library ----\nlibrary(data.table)"));
}

#[test]
fn segment_raw_script() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("analysis.R");
    fs::write(
        &script,
        "# Example analysis\nlibrary(ggplot2)\nlibrary(dplyr)\ndata <- read.csv(\"data.csv\")\nf <- function(x) {\n  x + 1\n}\nplot(data$x, data$y)\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = codeseg(&["segment", "--input", s(&script), "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let annotated = fs::read_to_string(out_dir.join("analysis.annotated.R")).unwrap();
    // the closing brace is migrated onto the preceding line
    assert!(annotated.contains("  x + 1 }\n"));
    let labels: Vec<String> = annotated
        .lines()
        .filter(|l| l.starts_with("# ----"))
        .map(|l| l.split("] ").nth(1).unwrap().trim_end_matches(" ----").to_string())
        .collect();
    assert_eq!(labels[..3], ["Comment", "Loading Library", "Loading Data"]);
    assert_eq!(labels.last().unwrap(), "Visualization");
}

#[test]
fn segment_is_deterministic_with_replay() {
    let dir = tempfile::tempdir().unwrap();
    let test_only = dir.path().join("test.jsonl");
    let text: String = fs::read_to_string(corpus())
        .unwrap()
        .lines()
        .filter(|l| l.contains("\"split\":\"test\""))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&test_only, text).unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = codeseg(&["segment", "--config", s(&config()), "--input", s(&test_only), "--out", s(&out_dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push((
            fs::read(out_dir.join("election_turnout.segments.json")).unwrap(),
            fs::read(out_dir.join("election_turnout.annotated.R")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn empty_corpus_is_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let out = codeseg(&["segment", "--input", s(&empty), "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("corpus is empty"));
}

#[test]
fn context_sweep_writes_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = codeseg(&[
        "evaluate", "--config", s(&config()), "--input", s(&corpus()), "--contexts", "1,2,3,7", "--out", s(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for c in [1, 2, 3, 7] {
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(format!("report-c{c}.json"))).unwrap()).unwrap();
        assert_eq!(report["context_c"], c);
        assert_eq!(report["backend"], "replay");
    }
    let series: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("series.json")).unwrap()).unwrap();
    assert_eq!(series.len(), 4);
    let table = fs::read_to_string(dir.path().join("table.txt")).unwrap();
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn report_hash_matches_config() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("report.json");
    let out = codeseg(&["evaluate", "--config", s(&config()), "--input", s(&corpus()), "--out", s(&report_path)]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();

    let mut cfg = codeseg::cli::RunConfig::load(&config()).unwrap();
    cfg.replay = Some(fixtures().join("replay.jsonl"));
    assert_eq!(report["config_hash"], cfg.config_hash());
    assert_eq!(report["template_hash"], codeseg::prompt::template_hash());
    assert!(report["segment_count_stats"]["mae"].is_number());
    assert_eq!(report["per_file"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("report.txt").exists());
    assert!(!String::from_utf8_lossy(&fs::read(&report_path).unwrap()).contains("CODESEG_API_KEY"));
}

#[test]
fn local_backend_report_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("local.json");
    let out = codeseg(&["evaluate", "--backend", "local", "--input", s(&corpus()), "--out", s(&report_path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    for key in ["accuracy", "macro_precision", "macro_recall", "macro_f1", "micro_f1", "line_count", "invalid_count"] {
        assert!(report["metrics"][key].is_number(), "{key}");
    }
    assert_eq!(report["metrics"]["line_count"], 41);
}

#[test]
fn strict_repair_fails_on_gap() {
    let dir = tempfile::tempdir().unwrap();
    let files = load_corpus(&corpus(), None).unwrap();
    let replay = dir.path().join("gappy.jsonl");
    let mut text = String::new();
    for f in files.iter().filter(|f| f.split == Split::Test) {
        // line 2 is left uncovered
        let answer = format!("Range [1-1] for Comment\nRange [3-{}] for Analysis", f.len());
        let rec = CacheRecord::new("recorded", &render_range_prompt(f), &answer);
        text += &serde_json::to_string(&rec).unwrap();
        text.push('\n');
    }
    fs::write(&replay, text).unwrap();

    let corpus = corpus();
    let base = ["evaluate", "--backend", "replay", "--approach", "range", "--replay", s(&replay), "--input", s(&corpus)];
    let strict_out = dir.path().join("strict.json");
    let mut args = base.to_vec();
    args.extend(["--repair", "strict", "--out", s(&strict_out)]);
    let out = codeseg(&args);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("range validation failed"));

    let repaired_out = dir.path().join("repaired.json");
    let mut args = base.to_vec();
    args.extend(["--out", s(&repaired_out)]);
    let out = codeseg(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&repaired_out).unwrap()).unwrap();
    assert_eq!(report["metrics"]["invalid_count"], 2);
}

#[test]
fn replay_miss_is_strict_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("none.jsonl");
    fs::write(&empty, "").unwrap();
    let report = dir.path().join("r.json");
    let corpus = corpus();
    let base = ["evaluate", "--backend", "replay", "--replay", s(&empty), "--input", s(&corpus), "--out", s(&report)];
    let out = codeseg(&base);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no response for prompt"));

    let mut lenient = base.to_vec();
    lenient.push("--lenient");
    assert!(codeseg(&lenient).status.success());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report["metrics"]["accuracy"], 0.0);
    assert_eq!(report["metrics"]["invalid_count"], 41);
}

#[test]
fn train_then_reload() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.bin");
    let out = codeseg(&["train", "--input", s(&corpus()), "--out", s(&model_path), "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("training accuracy"));
    let model = LocalModel::load(&model_path).unwrap();
    assert_eq!(model.seed, 7);
    assert!(!model.config_hash.is_empty());

    // evaluating with the saved model matches on-the-fly training
    let saved = dir.path().join("saved.json");
    let fresh = dir.path().join("fresh.json");
    let out = codeseg(&["evaluate", "--backend", "local", "--model", s(&model_path), "--input", s(&corpus()), "--out", s(&saved)]);
    assert!(out.status.success());
    let out = codeseg(&["evaluate", "--backend", "local", "--input", s(&corpus()), "--out", s(&fresh)]);
    assert!(out.status.success());
    let metrics = |p: &Path| {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        v["metrics"].clone()
    };
    assert_eq!(metrics(&saved), metrics(&fresh));

    let other = dir.path().join("other.bin");
    assert!(codeseg(&["train", "--input", s(&corpus()), "--out", s(&other), "--seed", "11"]).status.success());
    assert_eq!(LocalModel::load(&other).unwrap().seed, 11);
}

#[test]
fn adjudicate_reports_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.jsonl");
    let out = codeseg(&["adjudicate", "--input", s(&corpus()), "--out", s(&gold)]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("1 conflict(s)"));
    assert!(stdout.contains("trial_survival:15"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("gold.agreement.json")).unwrap()).unwrap();
    assert_eq!(report["line_count"], 108);
    assert!(report["kappa"].as_f64().unwrap() > 0.8);
    assert_eq!(load_corpus(&gold, None).unwrap().len(), 5);
}

#[test]
fn adjudicate_needs_three_annotators() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("two.jsonl");
    fs::write(
        &input,
        r#"{"file_id":"f","language":"R","split":"train","line":1,"code":"x","gold":null,"annotators":["Comment","Comment"]}"#,
    )
    .unwrap();
    let out = codeseg(&["adjudicate", "--input", s(&input), "--out", s(&dir.path().join("o.jsonl"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 3 annotators"));
}

#[test]
fn stats_prints_splits() {
    let out = codeseg(&["stats", "--input", s(&corpus())]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("train"));
    assert!(stdout.contains("test"));
    let out = codeseg(&["stats", "--input", s(&corpus()), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["aggregate"]["file_count"], 5);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = codeseg(&[
        "evaluate", "--config", s(&config()), "--context", "7", "--input", s(&corpus()), "--out", s(&report),
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["context_c"], 7);

    let bad = codeseg(&["evaluate", "--mode", "carp", "--shots", "0", "--input", s(&corpus()), "--out", s(&report)]);
    assert!(!bad.status.success());
}
