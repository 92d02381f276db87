use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_promptrank"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn promptrank")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

// Small judged fixture: qrels plus a first-stage run.
fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let qrels = dir.join("qrels.txt");
    let run_path = dir.join("run.trec");
    let mut q = String::new();
    let mut r = String::new();
    for i in 0..30 {
        q.push_str(&format!("q{i} 0 d{i}a 1\nq{i} 0 d{i}b 0\n"));
        r.push_str(&format!("q{i} Q0 d{i}b 1 2.0 bm25\nq{i} Q0 d{i}a 2 1.0 bm25\nq{i} Q0 d{i}c 3 0.5 bm25\n"));
    }
    fs::write(&qrels, q).unwrap();
    fs::write(&run_path, r).unwrap();
    (qrels, run_path)
}

#[test]
fn evaluate_prints_metric_json() {
    let dir = tempfile::tempdir().unwrap();
    let (qrels, run_path) = fixture(dir.path());
    let o = run(&["evaluate", "--run", p(&run_path), "--qrels", p(&qrels), "--metric", "mrr", "--k", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let mean = v["mean"].as_f64().unwrap();
    assert!((mean - 0.5).abs() < 1e-12, "{v}");
}

#[test]
fn partition_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let (qrels, run_path) = fixture(dir.path());
    let outs: Vec<(Vec<u8>, Vec<u8>)> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("split{i}.tsv"));
            let dev = dir.path().join(format!("dev{i}.trec"));
            let o = run(&[
                "partition", "--scheme", "msmarco", "--qrels", p(&qrels), "--run", p(&run_path), "--k", "5", "--seed", "9",
                "--out", p(&out), "--dev-out", p(&dev),
            ]);
            assert!(o.status.success(), "{}", stderr(&o));
            (fs::read(out).unwrap(), fs::read(dev).unwrap())
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    assert!(!outs[0].0.is_empty());
}

#[test]
fn every_subcommand_has_help() {
    for sub in [
        "index", "retrieve", "partition", "prefinetune", "finetune", "prompt-tune", "rerank", "evaluate", "compare", "analyze",
        "synth", "run-all",
    ] {
        let o = run(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(!o.stdout.is_empty(), "{sub}");
    }
}

#[test]
fn missing_input_names_the_path() {
    let o = run(&["evaluate", "--run", "/nonexistent/run.trec", "--qrels", "/nonexistent/q.txt", "--metric", "mrr", "--k", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/"), "{}", stderr(&o));
}

#[test]
fn missing_argument_is_a_usage_error() {
    let o = run(&["evaluate", "--metric", "mrr"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_violation_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let smoke = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/smoke.json")).unwrap();
    fs::write(&cfg, smoke.replace("\"repeats\": 2", "\"repeats\": 0")).unwrap();
    let o = run(&["run-all", "--config", p(&cfg), "--output", p(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("repeats"), "{}", stderr(&o));

    fs::write(&cfg, smoke.replace("\"d_model\"", "\"width\"")).unwrap();
    let o = run(&["run-all", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("width"), "{}", stderr(&o));
}

#[test]
fn smoke_run_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("smoke");
    let o = run(&["run-all", "--config", concat!(env!("CARGO_MANIFEST_DIR"), "/configs/smoke.json"), "--output", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let results: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(results["repeats"].as_array().unwrap().len(), 2);
    for v in ["vanilla", "nli_like", "qa_like"] {
        assert!(out.join("repeat0").join(format!("{v}.trec")).exists(), "{v}");
        assert!(out.join("repeat1").join(format!("{v}.mrr.json")).exists(), "{v}");
    }
    assert!(out.join("runs/bm25.trec").exists());
}

#[test]
fn synth_then_index_and_retrieve() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = run(&["synth", "--seed", "4", "--nli-examples", "50", "--qa-examples", "50", "--out", p(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let collection = data.join("collection.tsv");
    let o = run(&["index", "--collection", p(&collection)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trec = dir.path().join("bm25.trec");
    let o = run(&["retrieve", "--collection", p(&collection), "--queries", p(&data.join("queries.tsv")), "--k", "10", "--out", p(&trec)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["evaluate", "--run", p(&trec), "--qrels", p(&data.join("qrels.txt")), "--metric", "ndcg", "--k", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn training_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let (data, bm25, split, dev) = (d("data"), d("bm25.trec"), d("split.tsv"), d("dev.trec"));
    let (nli, ft, prompt, analysis) = (d("nli.ckpt"), d("ft.ckpt"), d("prompt.ckpt"), d("analysis"));
    let (ft_run, pt_run, ft_json, pt_json) = (d("ft.trec"), d("pt.trec"), d("ft.json"), d("pt.json"));
    let file = |name: &str| format!("{data}/{name}");
    let (collection, queries, qrels) = (file("collection.tsv"), file("queries.tsv"), file("qrels.txt"));
    let ok = |args: &[&str]| {
        let o = run(args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        o
    };
    ok(&["synth", "--seed", "5", "--nli-examples", "64", "--qa-examples", "64", "--out", &data]);
    ok(&["retrieve", "--collection", &collection, "--queries", &queries, "--k", "20", "--out", &bm25]);
    ok(&["partition", "--scheme", "msmarco", "--qrels", &qrels, "--run", &bm25, "--k", "5", "--seed", "1", "--out", &split, "--dev-out", &dev]);
    ok(&["prefinetune", "--data", &data, "--task", "nli-like", "--steps", "4", "--batch", "4", "--out", &nli]);
    let inputs = ["--model", nli.as_str(), "--data", &data, "--split", &split, "--dev-run", &dev];
    ok(&[&["finetune"], &inputs[..], &["--steps", "4", "--eval-every", "2", "--out", &ft]].concat());
    ok(&[&["prompt-tune"], &inputs[..], &["--steps", "4", "--out", &prompt]].concat());
    ok(&["rerank", "--model", &ft, "--data", &data, "--run", &bm25, "--depth", "5", "--out", &ft_run]);
    ok(&["rerank", "--model", &nli, "--prompt", &prompt, "--data", &data, "--run", &bm25, "--depth", "5", "--out", &pt_run]);
    ok(&["evaluate", "--run", &ft_run, "--qrels", &qrels, "--metric", "mrr", "--k", "10", "--out", &ft_json]);
    ok(&["evaluate", "--run", &pt_run, "--qrels", &qrels, "--metric", "mrr", "--k", "10", "--out", &pt_json]);
    let o = ok(&["compare", "--a", &ft_json, "--b", &pt_json]);
    assert!(!o.stdout.is_empty());
    ok(&["analyze", "--model", &ft, "--data", &data, "--run", &bm25, "--task-pairs", "20", "--out", &analysis]);
    for f in ["embeddings.tsv", "projection.tsv", "histogram.json"] {
        assert!(Path::new(&analysis).join(f).exists(), "{f}");
    }
}
