use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crisis_core::checkpoint::Container;
use serde_json::Value;

fn crisis(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crisis"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = crisis(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty(), "data belongs in files, got stdout {:?}", String::from_utf8_lossy(&out.stdout));
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn lines(path: PathBuf) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

const SMALL: &str = "# tiny network\nembed_dim = 8\nhidden = 4\nbatch_size = 16\nlearning_rate = 0.01\nepochs = 2\n";

/// Synthetic data split into train/val/test plus a parser, in a fresh dir.
fn workspace() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(p.join("small.cfg"), SMALL).unwrap();
    ok(p, &["synth", "--output", "all.jsonl", "--synth-posts", "300", "--rng-seed", "2", "--treebank-sentences", "200", "--treebank-output", "bank.conllu"]);
    ok(p, &["prep", "--input", "all.jsonl", "--out-dir", "data"]);
    ok(p, &["train-parser", "--input", "bank.conllu", "--parser", "parser.ckpt"]);
    d
}

#[test]
fn full_pipeline_and_provenance() {
    let d = workspace();
    let p = d.path();
    ok(p, &["train", "--config", "small.cfg", "--train", "data/train.jsonl", "--val", "data/val.jsonl", "--checkpoint", "nn.ckpt"]);
    ok(p, &["train", "--model", "logistic", "--train", "data/train.jsonl", "--val", "data/val.jsonl", "--checkpoint", "lr.ckpt", "--log", "lr.log"]);

    let log = json(p.join("nn.ckpt.log.json"));
    assert_eq!(log["log"]["training"]["epochs"].as_array().unwrap().len(), 2);
    assert!(log["log"]["training"]["selected_epoch"].as_u64().unwrap() >= 1);
    assert_eq!(log["run_config"]["hidden"], "4");
    assert!(log["input_hash"].as_str().unwrap().starts_with("fnv1a64:"));
    assert!(json(p.join("lr.log"))["log"]["validation"]["f1"].is_number());

    let c = Container::read(p.join("nn.ckpt")).unwrap();
    assert_eq!(c.config["run_config"]["embed_dim"], "8");
    assert_eq!(c.config["input_hash"], log["input_hash"]);
    let pc = Container::read(p.join("parser.ckpt")).unwrap();
    assert!(pc.config["run_config"].is_object());

    ok(p, &["detect", "--checkpoint", "lr.ckpt", "--input", "data/test.jsonl", "--output", "det.jsonl", "--threshold", "0.3"]);
    let det = lines(p.join("det.jsonl"));
    let test = lines(p.join("data/test.jsonl"));
    assert_eq!(det.len(), test.len());
    for r in &det {
        let prob = r["label_prob"].as_f64().unwrap();
        assert_eq!(r["predicted_label"].as_u64().unwrap(), u64::from(prob >= 0.3));
    }
    assert_eq!(json(p.join("det.jsonl.meta.json"))["run_config"]["threshold"], "0.3");

    for (mech, ckpt) in [("coef", "lr.ckpt"), ("lime", "lr.ckpt"), ("attention", "nn.ckpt"), ("lime", "nn.ckpt")] {
        let out = format!("ex-{mech}-{ckpt}.jsonl");
        ok(p, &["explain", "--mechanism", mech, "--checkpoint", ckpt, "--parser", "parser.ckpt", "--input", "data/test.jsonl", "--output", &out, "--lime-num-samples", "50", "--threshold", "0"]);
        let recs = lines(p.join(&out));
        assert_eq!(recs.len(), test.len());
        for r in &recs {
            assert_eq!(r["mechanism"], mech);
            assert!(r["explanation_text"].is_string(), "threshold 0 explains everything: {r}");
        }
        ok(p, &["evaluate", "--kind", "explanation", "--gold", "data/test.jsonl", "--predictions", &out, "--output", "rep.json"]);
        let rep = json(p.join("rep.json"));
        let f1 = rep["report"]["rouge_1"]["f1"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&f1));
        assert!(rep["report"]["rouge_2"]["f1"].is_number());
    }

    ok(p, &["explain", "--mechanism", "coef", "--checkpoint", "lr.ckpt", "--parser", "parser.ckpt", "--input", "data/test.jsonl", "--output", "high.jsonl", "--threshold", "1.01"]);
    for r in lines(p.join("high.jsonl")) {
        assert_eq!(r["predicted_label"], 0);
        assert!(r["explanation_text"].is_null());
    }

    ok(p, &["visualize", "--checkpoint", "nn.ckpt", "--input", "data/test.jsonl", "--output", "heat.html"]);
    let html = std::fs::read_to_string(p.join("heat.html")).unwrap();
    let tokens: usize = crisis_core::corpus::read_dataset(p.join("data/test.jsonl")).unwrap().iter().map(|q| q.len()).sum();
    assert_eq!(html.matches("class=\"tok\"").count(), tokens);
    assert!(html.contains("\"input_hash\""));
    assert!(!html.contains("src=") && !html.contains("href="));
}

#[test]
fn gold_against_itself_scores_one() {
    let d = workspace();
    let p = d.path();
    ok(p, &["evaluate", "--gold", "data/test.jsonl", "--predictions", "data/test.jsonl", "--output", "d.json"]);
    let r = json(p.join("d.json"));
    for m in ["precision", "recall", "f1"] {
        assert_eq!(r["report"][m], 1.0, "{m}");
    }
    ok(p, &["evaluate", "--kind", "explanation", "--gold", "data/test.jsonl", "--predictions", "data/test.jsonl", "--output", "e.json"]);
    let r = json(p.join("e.json"));
    assert_eq!(r["report"]["rouge_1"]["f1"], 1.0);
}

#[test]
fn same_config_same_checkpoint_bytes() {
    let d = workspace();
    let p = d.path();
    // the output path is part of the embedded config, so reuse it
    let run = |extra: &[&str]| {
        let mut args = vec!["train", "--config", "small.cfg", "--train", "data/train.jsonl", "--val", "data/val.jsonl", "--checkpoint", "m.ckpt"];
        args.extend_from_slice(extra);
        ok(p, &args);
        std::fs::read(p.join("m.ckpt")).unwrap()
    };
    let a = run(&[]);
    assert_eq!(a, run(&[]));
    assert_ne!(a, run(&["--rng-seed", "9"]));
}

#[test]
fn flags_override_the_config_file() {
    let d = workspace();
    let p = d.path();
    ok(p, &["train", "--config", "small.cfg", "--epochs", "1", "--train", "data/train.jsonl", "--val", "data/val.jsonl", "--checkpoint", "n.ckpt"]);
    let log = json(p.join("n.ckpt.log.json"));
    assert_eq!(log["run_config"]["epochs"], "1");
    assert_eq!(log["run_config"]["hidden"], "4");
    assert_eq!(log["log"]["training"]["epochs"].as_array().unwrap().len(), 1);
}

#[test]
fn errors_exit_nonzero_with_diagnostics() {
    let d = workspace();
    let p = d.path();
    std::fs::write(p.join("bad.cfg"), "epochs = 2\nepoch = 3\n").unwrap();
    let o = crisis(p, &["train", "--config", "bad.cfg", "--train", "data/train.jsonl", "--checkpoint", "x.ckpt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown configuration key \"epoch\""), "{}", stderr(&o));
    assert!(stderr(&o).contains("bad.cfg:2"));

    let o = crisis(p, &["train", "--no-such-flag", "1"]);
    assert_eq!(o.status.code(), Some(2));

    let o = crisis(p, &["train", "--train", "data/train.jsonl", "--val", "data/val.jsonl", "--checkpoint", "x.ckpt", "--dropout-rate", "1.5"]);
    assert_eq!(o.status.code(), Some(1));

    ok(p, &["train", "--model", "logistic", "--train", "data/train.jsonl", "--checkpoint", "lr.ckpt"]);
    let o = crisis(p, &["explain", "--mechanism", "attention", "--checkpoint", "lr.ckpt", "--parser", "parser.ckpt", "--input", "data/test.jsonl", "--output", "x.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("attention"), "{}", stderr(&o));
    assert!(!p.join("x.jsonl").exists());

    let o = crisis(p, &["visualize", "--checkpoint", "lr.ckpt", "--input", "data/test.jsonl", "--output", "x.html"]);
    assert_eq!(o.status.code(), Some(1));

    std::fs::write(p.join("other.jsonl"), "{\"id\":\"zzz\",\"label_prob\":0.9}\n").unwrap();
    let o = crisis(p, &["evaluate", "--gold", "data/test.jsonl", "--predictions", "other.jsonl", "--output", "r.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no prediction id"), "{}", stderr(&o));

    let first = &lines(p.join("data/test.jsonl"))[0];
    std::fs::write(p.join("one.jsonl"), format!("{{\"id\":{},\"label_prob\":0.9}}\n", first["id"])).unwrap();
    let o = crisis(p, &["evaluate", "--gold", "data/test.jsonl", "--predictions", "one.jsonl", "--output", "r.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gold ids without a prediction"), "{}", stderr(&o));
}

#[test]
fn forward_last_has_no_heatmap() {
    let d = workspace();
    let p = d.path();
    ok(p, &["train", "--config", "small.cfg", "--architecture", "forward_last", "--train", "data/train.jsonl", "--val", "data/val.jsonl", "--checkpoint", "f.ckpt"]);
    let o = crisis(p, &["visualize", "--checkpoint", "f.ckpt", "--input", "data/test.jsonl", "--output", "h.html"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("forward_last"));
    // LIME still works on it
    ok(p, &["explain", "--mechanism", "lime", "--checkpoint", "f.ckpt", "--parser", "parser.ckpt", "--input", "data/test.jsonl", "--output", "f.jsonl", "--lime-num-samples", "30"]);
}

#[test]
fn treebank_written_by_synth_reads_back() {
    let d = workspace();
    let bank = crisis_core::depparse::read_conllu(d.path().join("bank.conllu")).unwrap();
    assert_eq!(bank.len(), 200);
    assert!(bank.iter().all(|t| t.validate_projective().is_ok()));
}
