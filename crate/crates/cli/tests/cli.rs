mod common;

use std::process::Command;

use common::{config, gen, mock_chat_server, p, read_json, run};
use dualoie_cli::config::{RunConfig, SNAPSHOT_FILE};

fn run_smoke(args: &[&str]) -> i32 {
    let cfg = config("smoke.toml");
    let mut all = vec!["--config", cfg.as_str()];
    all.extend_from_slice(args);
    run(&all)
}

#[test]
fn gen_train_score_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let split = gen(&dir.path().join("data"), 100, 7);
    let gen_report = read_json(&dir.path().join("data/gen_report.json"));
    assert_eq!(gen_report["sentences"], 100);

    let run_dir = dir.path().join("run");
    assert_eq!(run_smoke(&["train", "--train", &p(&split.train), "--dev", &p(&split.dev), "--out", &p(&run_dir)]), 0);
    assert!(run_dir.join("model/params.bin").exists());
    assert!(run_dir.join("model/train_log.jsonl").exists());
    assert_eq!(read_json(&run_dir.join("train_report.json"))["steps"], 20);

    let ex = dir.path().join("ex");
    assert_eq!(
        run_smoke(&["extract", "--model", &p(&run_dir.join("model")), "--input", &p(&split.test), "--out", &p(&ex)]),
        0
    );
    let sc = dir.path().join("score");
    assert_eq!(
        run(&["score", "--gold", &p(&split.test), "--pred", &p(&ex.join("predictions.jsonl")), "--out", &p(&sc)]),
        0
    );

    let report = read_json(&sc.join("score.json"));
    for key in ["f1", "f1_one_to_one", "strict", "pred_f1", "pred_f1_one_to_one"] {
        for part in ["precision", "recall", "f1"] {
            assert!(report["overall"][key][part].is_number(), "{key}.{part}");
        }
    }
    assert_eq!(report["overall"]["sentences"], 20);
    for g in ["m", "category", "implicit"] {
        assert!(report["groups"][g].is_object(), "{g}");
    }
    let csv = std::fs::read_to_string(sc.join("groups.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("all,all,20,")));
}

#[test]
fn snapshot_reproduces_the_run_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    assert_eq!(run(&["--set", "model.gamma=0", "--seed", "11", "gen", "--size", "20", "--out", &p(&out)]), 0);
    let snap = out.join(SNAPSHOT_FILE);
    let cfg = RunConfig::load(Some(&snap), &[], None).unwrap();
    assert_eq!(cfg.model.gamma, 0.0);
    assert_eq!(cfg.seed, Some(11));
    assert_eq!(cfg.synth.seed, 11);
    let invocation = read_json(&out.join("invocation.json"));
    assert_eq!(invocation["command"], "gen");

    let again = dir.path().join("again");
    assert_eq!(run(&["--config", &p(&snap), "gen", "--size", "20", "--out", &p(&again)]), 0);
    assert_eq!(std::fs::read(out.join("corpus.jsonl")).unwrap(), std::fs::read(again.join("corpus.jsonl")).unwrap());
}

#[test]
fn unknown_flag_exits_one_with_help() {
    let out = Command::new(env!("CARGO_BIN_EXE_dualoie")).args(["train", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--bogus"));
    assert!(err.contains("Usage") && err.contains("--train"));

    let none = Command::new(env!("CARGO_BIN_EXE_dualoie")).output().unwrap();
    assert_eq!(none.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = Command::new(env!("CARGO_BIN_EXE_dualoie")).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "gen",
        "prep",
        "train",
        "extract",
        "score",
        "sweep",
        "group-report",
        "dual-corr",
        "gold-prompt",
        "llm-baseline",
        "annotate-sim",
    ] {
        assert!(text.contains(sub), "{sub}");
    }
}

#[test]
fn bad_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--set", "model.gama=0.5", "gen", "--out", &p(dir.path())]), 1);
    assert_eq!(run(&["--set", "model.gamma", "gen", "--out", &p(dir.path())]), 1);
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    assert_eq!(run(&["score", "--gold", &p(&missing), "--pred", &p(&missing), "--out", &p(dir.path())]), 2);
    assert_eq!(run(&["extract", "--model", &p(dir.path()), "--input", &p(&missing), "--out", &p(dir.path())]), 2);
}

#[test]
fn score_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let split = gen(&dir.path().join("data"), 60, 3);
    let run_dir = dir.path().join("run");
    assert_eq!(run_smoke(&["train", "--train", &p(&split.train), "--test", &p(&split.test), "--out", &p(&run_dir)]), 0);
    let pred = run_dir.join("predictions.jsonl");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(run(&["score", "--gold", &p(&split.test), "--pred", &p(&pred), "--out", &p(out)]), 0);
    }
    for f in ["score.json", "groups.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

/// The (alpha, beta, gamma) triples of the published coefficient table,
/// row by row.
const TABLE: [[(f64, f64, f64); 3]; 9] = [
    [(0.2, 0.4, 1.2), (0.2, 0.4, 0.6), (0.2, 0.4, 0.3)],
    [(0.2, 0.6, 1.6), (0.2, 0.6, 0.8), (0.2, 0.6, 0.4)],
    [(0.2, 0.8, 2.0), (0.2, 0.8, 1.0), (0.2, 0.8, 0.5)],
    [(0.2, 0.2, 0.8), (0.2, 0.2, 0.4), (0.2, 0.2, 0.2)],
    [(0.4, 0.4, 1.6), (0.4, 0.4, 0.8), (0.4, 0.4, 0.4)],
    [(0.6, 0.6, 2.4), (0.6, 0.6, 1.2), (0.6, 0.6, 0.6)],
    [(0.4, 0.2, 1.2), (0.4, 0.2, 0.6), (0.4, 0.2, 0.3)],
    [(0.6, 0.2, 1.6), (0.6, 0.2, 0.8), (0.6, 0.2, 0.4)],
    [(0.8, 0.2, 2.0), (0.8, 0.2, 1.0), (0.8, 0.2, 0.5)],
];

fn sweep_rows(dir: &std::path::Path) -> Vec<Vec<String>> {
    let split = gen(&dir.join("data"), 40, 5);
    let out = dir.join("sweep");
    let code = run_smoke(&[
        "--set",
        "train.max_steps=2",
        "sweep",
        "--train",
        &p(&split.train),
        "--eval",
        &p(&split.dev),
        "--out",
        &p(&out),
    ]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn sweep_writes_the_27_table_rows() {
    let dir = tempfile::tempdir().unwrap();
    let rows = sweep_rows(dir.path());
    assert_eq!(rows.len(), 27);
    let expected: Vec<String> = TABLE.iter().flatten().map(|(a, b, g)| format!("{a:.1},{b:.1},{g:.1}")).collect();
    let got: Vec<String> = rows.iter().map(|r| r[1..4].join(",")).collect();
    assert_eq!(got, expected);
    for r in &rows {
        assert_eq!(r[5], "2");
        let f1: f64 = r[9].parse().unwrap();
        assert!((0.0..=1.0).contains(&f1));
    }
}

#[test]
fn ablations_train_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let split = gen(&dir.path().join("data"), 60, 9);
    let base = ["train", "--train", &p(&split.train), "--test", &p(&split.test)];
    let no_dual = dir.path().join("no_dual");
    let no_prompt = dir.path().join("no_prompt");
    let mut a: Vec<&str> = vec!["--set", "model.gamma=0"];
    a.extend_from_slice(&base);
    let no_dual_s = p(&no_dual);
    a.extend_from_slice(&["--out", &no_dual_s]);
    assert_eq!(run_smoke(&a), 0);
    let mut b: Vec<&str> = vec!["--set", "train.prompt_element=none", "--set", "inference.prompt_mode=none"];
    b.extend_from_slice(&base);
    let no_prompt_s = p(&no_prompt);
    b.extend_from_slice(&["--out", &no_prompt_s]);
    assert_eq!(run_smoke(&b), 0);

    let r1 = read_json(&no_dual.join("score.json"));
    let r2 = read_json(&no_prompt.join("score.json"));
    let keys = |v: &serde_json::Value| v["overall"].as_object().unwrap().keys().cloned().collect::<Vec<_>>();
    assert_eq!(keys(&r1), keys(&r2));
    assert_eq!(read_json(&no_dual.join("train_report.json"))["coefficients"][2], 0.0);
    assert_eq!(read_json(&no_prompt.join("train_report.json"))["prompt_element"], "none");
    let first = std::fs::read_to_string(no_prompt.join("predictions.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(rec["trace"]["prompt_source"], "none");
}

#[test]
fn analysis_commands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let split = gen(&dir.path().join("data"), 60, 13);
    let run_dir = dir.path().join("run");
    assert_eq!(run_smoke(&["train", "--train", &p(&split.train), "--test", &p(&split.test), "--out", &p(&run_dir)]), 0);
    let model = p(&run_dir.join("model"));
    let pred = p(&run_dir.join("predictions.jsonl"));

    let gr = dir.path().join("groups");
    assert_eq!(run(&["group-report", "--gold", &p(&split.test), "--pred", &pred, "--by", "m", "--out", &p(&gr)]), 0);
    let report = read_json(&gr.join("group_report.json"));
    assert!(report["m"].is_object() && report.get("category").is_none());

    let dc = dir.path().join("dual");
    assert_eq!(run_smoke(&["dual-corr", "--model", &model, "--gold", &p(&split.test), "--out", &p(&dc)]), 0);
    let d = read_json(&dc.join("dual_corr.json"));
    assert_eq!(d["sentences"], 12);
    assert!(d["bleu_variant"].as_str().unwrap().contains("BLEU-4"));
    assert_eq!(std::fs::read_to_string(dc.join("dual_corr.csv")).unwrap().lines().count(), 13);

    let gp = dir.path().join("gold");
    assert_eq!(run_smoke(&["gold-prompt", "--model", &model, "--gold", &p(&split.test), "--out", &p(&gp)]), 0);
    let g = read_json(&gp.join("gold_prompt.json"));
    let delta = g["gold_prompt"]["f1"]["f1"].as_f64().unwrap() - g["predicted_prompt"]["f1"]["f1"].as_f64().unwrap();
    assert!((g["f1_delta"].as_f64().unwrap() - delta).abs() < 1e-12);
}

#[test]
fn prep_writes_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let split = gen(&dir.path().join("data"), 30, 2);
    let out = dir.path().join("prep");
    assert_eq!(run(&["prep", "--input", &p(&split.train), "--format", "canonical-jsonl", "--out", &p(&out)]), 0);
    let pairs = std::fs::read_to_string(out.join("pairs.jsonl")).unwrap();
    let n_train = std::fs::read_to_string(&split.train).unwrap().lines().count();
    assert_eq!(pairs.lines().count(), 3 * n_train);
    let first: serde_json::Value = serde_json::from_str(pairs.lines().next().unwrap()).unwrap();
    assert_eq!(first["objective"], "P");
    assert!(first["source"].as_str().unwrap().starts_with("<sen>"));
}

#[test]
fn llm_baseline_against_a_local_endpoint_uses_the_cache() {
    let server = mock_chat_server("(Alice; works for; Acme)\n(bad line");
    let dir = tempfile::tempdir().unwrap();
    let split = gen(&dir.path().join("data"), 30, 4);
    let cache = dir.path().join("cache");
    let endpoint = format!("llm.client.endpoint={}", server.url);
    let cache_set = format!("llm.cache_dir={:?}", p(&cache));
    let args = |out: &str| -> Vec<String> {
        [
            "--set",
            &endpoint,
            "--set",
            "llm.client.api_key_env=\"\"",
            "--set",
            &cache_set,
            "llm-baseline",
            "--input",
            &p(&split.test),
            "--pool",
            &p(&split.train),
            "--mode",
            "few-shot",
            "--out",
            out,
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };
    let first = p(&dir.path().join("first"));
    let a = args(&first);
    assert_eq!(run(&a.iter().map(String::as_str).collect::<Vec<_>>()), 0);
    let n = std::fs::read_to_string(&split.test).unwrap().lines().count();
    assert_eq!(server.hits(), n);
    let stats = read_json(&dir.path().join("first/llm_stats.json"));
    assert_eq!(stats["requests"], n);
    let preds = std::fs::read_to_string(dir.path().join("first/predictions.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(preds.lines().next().unwrap()).unwrap();
    assert_eq!(rec["triplets"][0]["predicate"], "works for");

    let second = p(&dir.path().join("second"));
    let b = args(&second);
    assert_eq!(run(&b.iter().map(String::as_str).collect::<Vec<_>>()), 0);
    assert_eq!(server.hits(), n);
    let stats = read_json(&dir.path().join("second/llm_stats.json"));
    assert_eq!((stats["requests"].as_u64(), stats["cache_hits"].as_u64()), (Some(0), Some(n as u64)));
    let triplets = |run: &str| -> Vec<serde_json::Value> {
        std::fs::read_to_string(dir.path().join(run).join("predictions.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["triplets"].clone())
            .collect()
    };
    assert_eq!(triplets("first"), triplets("second"));
}

#[test]
fn llm_baseline_without_credentials_fails_at_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let split = gen(&dir.path().join("data"), 20, 4);
    let code = run(&[
        "--set",
        "llm.client.api_key_env=DUALOIE_TEST_UNSET_KEY",
        "llm-baseline",
        "--input",
        &p(&split.test),
        "--out",
        &p(&dir.path().join("o")),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn annotate_sim_writes_pools_and_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ann");
    let code = run_smoke(&[
        "--set",
        "synth.size=60",
        "--set",
        "annotate.explicit_pool=30",
        "--set",
        "annotate.unlabeled_pool=20",
        "annotate-sim",
        "--out",
        &p(&out),
    ]);
    assert_eq!(code, 0);
    let report = read_json(&out.join("annotate_report.json"));
    let rounds = report["rounds"].as_array().unwrap();
    assert_eq!(rounds.len(), 2);
    assert!(rounds.iter().all(|r| r["disjoint"] == true));
    for f in ["d_ex.jsonl", "d_un.jsonl", "d_ps.jsonl", "d_im.jsonl"] {
        assert!(out.join("pools").join(f).exists(), "{f}");
    }
}
