use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Value};

use crisis_core::checkpoint::Container;
use crisis_core::corpus::{build_vocab, encode, read_dataset, split, synthesize_corpus, synthesize_treebank, write_dataset, Post};
use crisis_core::depparse::{read_conllu, train_parser, train_tagger, write_conllu_string, DepParser, DepTree};
use crisis_core::embed::{load_embeddings, EmbeddingTable};
use crisis_core::eval::{detection_report, mean_rouge, rouge_n, ROUGE_SETTINGS};
use crisis_core::explain::{Explainer, ExplanationRecord};
use crisis_core::hash::Fnv1a;
use crisis_core::linear::train_logistic;
use crisis_core::nn::{train as train_neural, Architecture, Example};
use crisis_core::seeds::{get_seeder, Detector};

use crate::config::RunConfig;
use crate::html;

/// FNV-1a over the bytes of every input file, in order, each followed by
/// its length so that concatenations do not collide.
pub fn input_hash(paths: &[&Path]) -> Result<String> {
    let mut h = Fnv1a::default();
    for p in paths {
        let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        h.update(&bytes);
        h.update(&(bytes.len() as u64).to_le_bytes());
    }
    Ok(format!("fnv1a64:{:016x}", h.finish()))
}

fn provenance(command: &str, cfg: &RunConfig, hash: &str) -> Value {
    json!({
        "command": command,
        "run_config": cfg.to_json(),
        "input_hash": hash,
    })
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn sidecar(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_posts(path: &Path) -> Result<Vec<Post>> {
    read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn load_detector(path: &Path) -> Result<Detector> {
    Detector::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn labeled(posts: &[Post], what: &str) -> Result<()> {
    if let Some(p) = posts.iter().find(|p| p.label.is_none()) {
        bail!("{what} post {:?} has no label", p.id);
    }
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let out = cfg.path("output")?;
    let posts = synthesize_corpus(cfg.get("synth_posts")?, cfg.get("crisis_rate")?, cfg.get("rng_seed")?);
    write_dataset(&out, &posts).with_context(|| format!("writing {}", out.display()))?;
    let hash = input_hash(&[])?;
    let meta = provenance("synth", cfg, &hash);
    write_json(&sidecar(&out), &meta)?;
    let n: usize = cfg.get("treebank_sentences")?;
    if n > 0 {
        let tb = cfg.path("treebank_output")?;
        let trees: Vec<DepTree> = synthesize_treebank(n, cfg.get("rng_seed")?).iter().map(DepTree::from).collect();
        let text = format!("# meta = {}\n{}", serde_json::to_string(&meta)?, write_conllu_string(&trees));
        std::fs::write(&tb, text).with_context(|| format!("writing {}", tb.display()))?;
    }
    eprintln!("wrote {} posts to {}", posts.len(), out.display());
    Ok(())
}

pub fn prep(cfg: &RunConfig) -> Result<()> {
    let input = cfg.path("input")?;
    let dir = cfg.path("out_dir")?;
    let posts = read_posts(&input)?;
    let mut ids = BTreeSet::new();
    if let Some(p) = posts.iter().find(|p| !ids.insert(p.id.as_str())) {
        bail!("duplicate id {:?} in {}", p.id, input.display());
    }
    let seed: u64 = cfg.get("split_seed")?;
    let (rest, test) = split(posts, cfg.get("test_fraction")?, seed)?;
    let (train, val) = split(rest, cfg.get("val_fraction")?, seed.wrapping_add(1))?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut counts = serde_json::Map::new();
    for (name, part) in [("train", &train), ("val", &val), ("test", &test)] {
        write_dataset(dir.join(format!("{name}.jsonl")), part)?;
        let pos = part.iter().filter(|p| p.label == Some(true)).count();
        counts.insert(name.into(), json!({ "posts": part.len(), "positive": pos }));
    }
    let mut meta = provenance("prep", cfg, &input_hash(&[&input])?);
    meta["splits"] = Value::Object(counts);
    write_json(&dir.join("meta.json"), &meta)?;
    eprintln!("train {} / val {} / test {}", train.len(), val.len(), test.len());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let train_path = cfg.path("train")?;
    let checkpoint = cfg.path("checkpoint")?;
    let train_posts = read_posts(&train_path)?;
    labeled(&train_posts, "training")?;
    let vocab = build_vocab(&train_posts, cfg.get("min_count")?);
    let val_path = cfg.optional_path("val");
    let val_posts = match &val_path {
        Some(p) => {
            let v = read_posts(p)?;
            labeled(&v, "validation")?;
            Some(v)
        }
        None => None,
    };
    let embeddings = cfg.optional_path("embeddings");
    let mut inputs: Vec<&Path> = vec![&train_path];
    inputs.extend(val_path.as_deref());
    inputs.extend(embeddings.as_deref());
    let hash = input_hash(&inputs)?;

    let (detector, log) = match cfg.raw("model") {
        "logistic" => {
            let model = train_logistic(&train_posts, &vocab, &cfg.logistic_config()?)?;
            let det = Detector::Logistic { model, vocab };
            let validation = match &val_posts {
                Some(v) => Some(detection(&det, v, cfg.get("threshold")?)?),
                None => None,
            };
            (det, json!({ "model": "logistic", "validation": validation }))
        }
        "neural" => {
            let mc = cfg.model_config()?;
            let val_posts = val_posts.ok_or_else(|| anyhow!("neural training needs --val for epoch selection"))?;
            let table = match &embeddings {
                Some(p) => {
                    let (t, stats) = load_embeddings::<f64>(p, &vocab, mc.embed_dim)
                        .with_context(|| format!("loading embeddings {}", p.display()))?;
                    eprintln!(
                        "embeddings: {} vectors, {} vocabulary hits, {} misses, {} lines skipped",
                        stats.vectors_loaded, stats.vocab_hits, stats.vocab_misses, stats.skipped_wrong_arity
                    );
                    t
                }
                None => EmbeddingTable::random(vocab.len(), mc.embed_dim, cfg.get("embedding_scale")?, mc.rng_seed),
            };
            let ex = |ps: &[Post]| -> Vec<Example> {
                ps.iter()
                    .map(|p| Example {
                        input: encode(p, &vocab, mc.max_len),
                        label: p.label.expect("checked"),
                    })
                    .collect()
            };
            let (model, log) = train_neural(&mc, table, vocab.content_hash(), &ex(&train_posts), &ex(&val_posts))?;
            eprintln!("selected epoch {} (validation F1 {:.3})", log.selected_epoch, log.selected_val_f1);
            (Detector::Neural { model, vocab }, json!({ "model": "neural", "training": log }))
        }
        other => bail!("model = {other:?}: expected neural or logistic"),
    };

    let mut c = detector.to_container();
    c.config.insert("run_config".into(), cfg.to_json());
    c.config.insert("input_hash".into(), json!(hash));
    c.write(&checkpoint).with_context(|| format!("writing {}", checkpoint.display()))?;

    let log_path = cfg.optional_path("log").unwrap_or_else(|| {
        let mut s = checkpoint.as_os_str().to_owned();
        s.push(".log.json");
        PathBuf::from(s)
    });
    let mut doc = provenance("train", cfg, &hash);
    doc["log"] = log;
    write_json(&log_path, &doc)?;
    Ok(())
}

fn detection(det: &Detector, posts: &[Post], threshold: f64) -> Result<Value> {
    let pairs = posts
        .iter()
        .map(|p| Ok((p.label.expect("checked"), det.score_post(p)?.p)))
        .collect::<Result<Vec<_>>>()?;
    Ok(serde_json::to_value(detection_report(&pairs, threshold)?)?)
}

#[derive(serde::Serialize)]
struct DetectRow<'a> {
    id: &'a str,
    label_prob: f64,
    predicted_label: u8,
}

pub fn detect(cfg: &RunConfig) -> Result<()> {
    let ckpt = cfg.path("checkpoint")?;
    let input = cfg.path("input")?;
    let out = cfg.path("output")?;
    let threshold: f64 = cfg.get("threshold")?;
    let det = load_detector(&ckpt)?;
    let posts = read_posts(&input)?;
    let rows = posts
        .iter()
        .map(|p| {
            let prob = det.score_post(p)?.p;
            Ok(DetectRow {
                id: &p.id,
                label_prob: prob,
                predicted_label: u8::from(prob >= threshold),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_jsonl(&out, &rows)?;
    write_json(&sidecar(&out), &provenance("detect", cfg, &input_hash(&[&ckpt, &input])?))?;
    Ok(())
}

pub fn explain(cfg: &RunConfig) -> Result<()> {
    let ckpt = cfg.path("checkpoint")?;
    let parser_path = cfg.path("parser")?;
    let input = cfg.path("input")?;
    let out = cfg.path("output")?;
    let det = load_detector(&ckpt)?;
    let parser = DepParser::load(&parser_path).with_context(|| format!("loading parser {}", parser_path.display()))?;
    let posts = read_posts(&input)?;
    let seeder = get_seeder(cfg.mechanism()?, &det, cfg.lime_config()?)
        .with_context(|| format!("mechanism {} with a {} detector", cfg.raw("mechanism"), det.kind()))?;
    let explainer = Explainer {
        seeder,
        parser: &parser,
        k: cfg.get("k")?,
        threshold: cfg.get("threshold")?,
        policy: cfg.seed_policy()?,
    };
    let records = posts
        .iter()
        .map(|p| explainer.explain(p).with_context(|| format!("post {:?}", p.id)))
        .collect::<Result<Vec<ExplanationRecord>>>()?;
    write_jsonl(&out, &records)?;
    let hash = input_hash(&[&ckpt, &parser_path, &input])?;
    write_json(&sidecar(&out), &provenance("explain", cfg, &hash))?;
    Ok(())
}

pub fn train_parser_cmd(cfg: &RunConfig) -> Result<()> {
    let input = cfg.path("input")?;
    let out = cfg.path("parser")?;
    let bank = read_conllu(&input).with_context(|| format!("reading treebank {}", input.display()))?;
    let prepared: Vec<DepTree> = bank.iter().map(DepTree::for_training).collect();
    let seed: u64 = cfg.get("rng_seed")?;
    let tagger = train_tagger(&prepared, cfg.get("tagger_iterations")?, seed)?;
    let (parser, stats) = train_parser(&prepared, cfg.get("parser_iterations")?, seed)?;
    eprintln!("parser trained on {} sentences ({} dropped)", stats.used, stats.dropped);
    let mut c: Container = DepParser { tagger, parser }.to_container();
    c.config.insert("run_config".into(), cfg.to_json());
    c.config.insert("input_hash".into(), json!(input_hash(&[&input])?));
    c.write(&out).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn read_rows(path: &Path) -> Result<Vec<Value>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        if !v.get("id").is_some_and(Value::is_string) {
            bail!("{}:{}: record without a string id", path.display(), i + 1);
        }
        rows.push(v);
    }
    Ok(rows)
}

/// First present field among `names`.
fn field<'a>(row: &'a Value, names: &[&str]) -> Option<&'a Value> {
    names.iter().find_map(|n| row.get(*n).filter(|v| !v.is_null()))
}

fn mismatch(what: &str, ids: &[String]) -> anyhow::Error {
    const SHOWN: usize = 20;
    let mut list = ids.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        list += &format!(", ... ({} in total)", ids.len());
    }
    anyhow!("{what}: {list}")
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let gold_path = cfg.path("gold")?;
    let pred_path = cfg.path("predictions")?;
    let out = cfg.path("output")?;
    let gold = read_posts(&gold_path)?;
    let rows = read_rows(&pred_path)?;
    let by_id: HashMap<&str, &Value> = rows.iter().map(|r| (r["id"].as_str().expect("checked"), r)).collect();
    let gold_ids: BTreeSet<&str> = gold.iter().map(|p| p.id.as_str()).collect();
    let unknown: Vec<String> = by_id.keys().filter(|id| !gold_ids.contains(*id)).map(|s| s.to_string()).collect();
    let common = by_id.len() - unknown.len();
    if common == 0 {
        bail!("no prediction id occurs in {}", gold_path.display());
    }
    if !unknown.is_empty() {
        let mut u = unknown;
        u.sort();
        return Err(mismatch("prediction ids missing from the gold file", &u));
    }

    let kind = cfg.raw("kind");
    let report = match kind {
        "detection" => {
            let threshold: f64 = cfg.get("threshold")?;
            let mut pairs = Vec::new();
            let mut missing = Vec::new();
            for p in &gold {
                let Some(label) = p.label else { continue };
                let Some(row) = by_id.get(p.id.as_str()) else {
                    missing.push(p.id.clone());
                    continue;
                };
                let prob = field(row, &["label_prob", "predicted_label", "label"])
                    .and_then(Value::as_f64)
                    .ok_or_else(|| anyhow!("prediction {:?} has no label_prob or predicted_label", p.id))?;
                pairs.push((label, prob));
            }
            if !missing.is_empty() {
                return Err(mismatch("gold ids without a prediction", &missing));
            }
            if pairs.is_empty() {
                bail!("no labeled gold posts in {}", gold_path.display());
            }
            let r = detection_report(&pairs, threshold)?;
            eprintln!("precision {:.3}  recall {:.3}  f1 {:.3}", r.precision, r.recall, r.f1);
            serde_json::to_value(r)?
        }
        "explanation" => {
            let mut missing = Vec::new();
            let (mut r1, mut r2) = (Vec::new(), Vec::new());
            for p in &gold {
                let Some(reference) = p.gold_text() else { continue };
                let Some(row) = by_id.get(p.id.as_str()) else {
                    missing.push(p.id.clone());
                    continue;
                };
                let cand = field(row, &["explanation_text", "explanation"]).and_then(Value::as_str).unwrap_or("");
                r1.push(rouge_n(cand, &reference, 1));
                r2.push(rouge_n(cand, &reference, 2));
            }
            if !missing.is_empty() {
                return Err(mismatch("gold ids without a prediction", &missing));
            }
            if r1.is_empty() {
                bail!("no gold explanations in {}", gold_path.display());
            }
            let (a, b) = (mean_rouge(1, &r1)?, mean_rouge(2, &r2)?);
            eprintln!("rouge-1 f1 {:.3}  rouge-2 f1 {:.3}  ({} posts)", a.f1, b.f1, a.samples);
            json!({ "rouge_1": a, "rouge_2": b, "settings": ROUGE_SETTINGS })
        }
        other => bail!("kind = {other:?}: expected detection or explanation"),
    };
    let mut doc = provenance("evaluate", cfg, &input_hash(&[&gold_path, &pred_path])?);
    doc["kind"] = json!(kind);
    doc["report"] = report;
    write_json(&out, &doc)
}

pub fn visualize(cfg: &RunConfig) -> Result<()> {
    let ckpt = cfg.path("checkpoint")?;
    let input = cfg.path("input")?;
    let out = cfg.path("output")?;
    let det = load_detector(&ckpt)?;
    match &det {
        Detector::Neural { model, .. } if model.config.architecture == Architecture::BiAttention => {}
        Detector::Neural { .. } => bail!("the forward_last model has no attention weights to draw"),
        Detector::Logistic { .. } => bail!("a logistic checkpoint has no attention weights to draw"),
    }
    let posts = read_posts(&input)?;
    let mut rows = Vec::with_capacity(posts.len());
    for p in &posts {
        let scored = det.score_post(p)?;
        let mut alphas = scored.alphas.unwrap_or_default();
        // tokens past max_len are never read by the model
        alphas.resize(p.len(), 0.0);
        rows.push(html::Row {
            id: &p.id,
            p: scored.p,
            tokens: p.tokens.iter().map(|t| t.surface.as_str()).collect(),
            alphas,
        });
    }
    let meta = provenance("visualize", cfg, &input_hash(&[&ckpt, &input])?);
    std::fs::write(&out, html::render(&rows, &meta)).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
