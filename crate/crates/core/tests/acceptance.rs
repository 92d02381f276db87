//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the terminal.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use promptrank::bm25::{Bm25Params, InvertedIndex};
use promptrank::corpus::{Collection, Document, Qrels, Queries, Query, Run};
use promptrank::evaluation::{mrr_at_k, ndcg_at_k, paired_significance, MetricResult};
use promptrank::experiment::TransferReport;
use promptrank::model::micro::GradMode;
use promptrank::model::{restricted_softmax, score_any, MicroModel, MicroModelConfig, ModelInput, ScorerModel};
use promptrank::partition::{build_dev_set, dev_set_size, sample_label_fraction, sample_msmarco_split, TrainSplit};
use promptrank::prompting::{ContinuousPrompt, EncodedInput, Scheme, Template, Tokenizer, Verbalizer};
use promptrank::training::{prompt_tune, RankingData, TrainConfig, TrainMode};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---- 1: metric oracles ----

fn oracle_mrr10(ranked: &[String], grades: &BTreeMap<String, u32>) -> f64 {
    for rank in 1..=ranked.len().min(10) {
        if grades.get(&ranked[rank - 1]).copied().unwrap_or(0) >= 1 {
            return 1.0 / rank as f64;
        }
    }
    0.0
}

fn oracle_ndcg20(ranked: &[String], grades: &BTreeMap<String, u32>) -> f64 {
    let gain = |g: u32| 2f64.powf(g as f64) - 1.0;
    let disc = |rank: usize| (rank as f64 + 1.0).ln() / 2f64.ln();
    let mut dcg = 0.0;
    for rank in 1..=ranked.len().min(20) {
        dcg += gain(grades.get(&ranked[rank - 1]).copied().unwrap_or(0)) / disc(rank);
    }
    let mut all: Vec<u32> = grades.values().copied().collect();
    all.sort_by(|a, b| b.cmp(a));
    let mut idcg = 0.0;
    for (i, g) in all.into_iter().take(20).enumerate() {
        idcg += gain(g) / disc(i + 1);
    }
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

fn run_from(lists: &[(&str, Vec<String>)]) -> Run {
    let mut run = Run::new();
    for (q, docs) in lists {
        let n = docs.len();
        let ranked = docs.iter().enumerate().map(|(i, d)| (d.clone(), (n - i) as f64)).collect();
        run.set_ranked(q, ranked, "t").unwrap();
    }
    run
}

fn strs(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n_q = rng.random_range(1..=50);
        let n_d = rng.random_range(1..=100);
        let docs: Vec<String> = (0..n_d).map(|d| format!("d{d}")).collect();
        let mut qrels = Qrels::new();
        let mut lists = Vec::new();
        let mut truth = Vec::new();
        for q in 0..n_q {
            let qid = format!("q{q}");
            let mut grades = BTreeMap::new();
            for d in &docs {
                if rng.random_bool(0.2) {
                    let g = rng.random_range(0..=3);
                    qrels.insert(&qid, d, g).unwrap();
                    grades.insert(d.clone(), g);
                }
            }
            if grades.is_empty() {
                qrels.insert(&qid, &docs[0], 0).unwrap();
                grades.insert(docs[0].clone(), 0);
            }
            let mut ranked = docs.clone();
            ranked.shuffle(&mut rng);
            ranked.truncate(rng.random_range(1..=n_d));
            truth.push((qid.clone(), oracle_mrr10(&ranked, &grades), oracle_ndcg20(&ranked, &grades)));
            lists.push((qid, ranked));
        }
        let refs: Vec<(&str, Vec<String>)> = lists.iter().map(|(q, r)| (q.as_str(), r.clone())).collect();
        let run = run_from(&refs);
        let mrr = mrr_at_k(&run, &qrels, 10).map_err(e2s)?;
        let ndcg = ndcg_at_k(&run, &qrels, 20).map_err(e2s)?;
        for (qid, m, n) in &truth {
            worst = worst.max((mrr.per_query[qid] - m).abs()).max((ndcg.per_query[qid] - n).abs());
        }
        let mean_m = truth.iter().map(|t| t.1).sum::<f64>() / truth.len() as f64;
        let mean_n = truth.iter().map(|t| t.2).sum::<f64>() / truth.len() as f64;
        worst = worst.max((mrr.mean - mean_m).abs()).max((ndcg.mean - mean_n).abs());
    }
    check(worst <= 1e-12, || format!("max deviation from oracle {worst:e}"))?;

    let mut qrels = Qrels::new();
    qrels.insert("q", "dA", 2).unwrap();
    qrels.insert("q", "dB", 1).unwrap();
    qrels.insert("q", "dC", 0).unwrap();
    let ndcg = ndcg_at_k(&run_from(&[("q", strs(&["dB", "dA", "dC"]))]), &qrels, 20).map_err(e2s)?.mean;
    check((ndcg - 0.79671).abs() < 1e-5, || format!("worked NDCG {ndcg}"))?;

    let mut qrels = Qrels::new();
    qrels.insert("a", "d3", 1).unwrap();
    qrels.insert("b", "d1", 1).unwrap();
    qrels.insert("c", "d4", 2).unwrap();
    qrels.insert("z", "x10", 1).unwrap();
    let run = run_from(&[
        ("a", strs(&["d1", "d2", "d3"])),
        ("b", strs(&["d1"])),
        ("c", strs(&["d1", "d2", "d3", "d4"])),
        ("z", (0..11).map(|i| format!("x{i}")).collect()),
    ]);
    let m = mrr_at_k(&run, &qrels, 10).map_err(e2s)?;
    check((m.per_query["a"] - 1.0 / 3.0).abs() < 1e-12, || "MRR 1/3 example".into())?;
    check(m.per_query["z"] == 0.0, || "MRR rank-11 example".into())?;
    let pair = (m.per_query["b"] + m.per_query["c"]) / 2.0;
    check((pair - 0.625).abs() < 1e-12, || format!("MRR 0.625 example gave {pair}"))?;
    Ok(format!("100 random instances, max deviation {worst:.1e}; NDCG example {ndcg:.5}"))
}

// ---- 2: BM25 oracle ----

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vocab: Vec<String> = (0..12).map(|i| format!("t{i}")).collect();
    let mut checked = 0;
    for _ in 0..50 {
        let n_docs = rng.random_range(1..=15);
        let docs: Vec<Document> = (0..n_docs)
            .map(|i| {
                let len = rng.random_range(0..=8);
                let words: Vec<&str> = (0..len).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
                Document::new(format!("d{i:02}"), words.join(" "))
            })
            .collect();
        let collection = Collection::new(docs).map_err(e2s)?;
        let k1 = rng.random_range(0.1..2.0);
        let b = rng.random_range(0.0..=1.0);
        let index = InvertedIndex::build(&collection, Bm25Params::new(k1, b).map_err(e2s)?).map_err(e2s)?;
        for qi in 0..5 {
            let len = rng.random_range(1..=3);
            let text: Vec<&str> = (0..len).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
            let q = Query::new(format!("q{qi}"), text.join(" "));
            let terms = index.analyze(&q.text);
            let hits = index.retrieve(&q, n_docs, "bm25");
            let mut expected: Vec<(String, f64)> = collection
                .iter()
                .map(|d| (d.id.clone(), index.score(&terms, &d.id).unwrap()))
                .filter(|(_, s)| *s > 0.0)
                .collect();
            expected.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let got: Vec<(String, f64)> = hits.iter().map(|h| (h.docid.clone(), h.score)).collect();
            check(got == expected, || format!("query {:?}: retrieve {got:?} vs score {expected:?}", q.text))?;
            checked += 1;
        }
    }
    let collection = Collection::new(vec![
        Document::new("d1", "a b a"),
        Document::new("d2", "b c"),
        Document::new("d3", "c c c"),
    ])
    .map_err(e2s)?;
    let index = InvertedIndex::build(&collection, Bm25Params::new(0.9, 0.4).map_err(e2s)?).map_err(e2s)?;
    let s = index.score(&["a".to_string()], "d1").map_err(e2s)?;
    check((s - 1.2656).abs() < 1e-4, || format!("hand example gave {s}"))?;
    Ok(format!("50 corpora, {checked} queries exact; hand example {s:.4}"))
}

// ---- 3: label-word softmax contract ----

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_norm: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..=5);
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..30.0)).collect();
        let p = restricted_softmax(&logits);
        worst_norm = worst_norm.max((p.iter().sum::<f64>() - 1.0).abs());
        let c = rng.random_range(-100.0..100.0);
        let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
        let q = restricted_softmax(&shifted);
        check(p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-9), || "shift invariance".into())?;
        let i = rng.random_range(0..n);
        let mut up = logits.clone();
        up[i] += rng.random_range(0.01..3.0);
        let r = restricted_softmax(&up);
        check(r[i] >= p[i], || "monotonicity".into())?;
    }
    let half = restricted_softmax(&[1.7, 1.7]);
    check(half == vec![0.5, 0.5], || format!("symmetric case {half:?}"))?;

    let tok = Tokenizer::from_texts([
        "alpha beta gamma delta epsilon",
        &Template::seq2seq_manual().to_string(),
        &Template::mask_manual().to_string(),
        "true false relevant irrelevant",
    ]);
    let cases = [
        (MicroModelConfig::new(tok.vocab_size(), 16, 1, 2, 0), Template::seq2seq_manual(), Verbalizer::ranking(&tok).map_err(e2s)?),
        (
            MicroModelConfig::new(tok.vocab_size(), 16, 1, 2, 0).encoder_only(),
            Template::mask_manual(),
            Verbalizer::ranking_mask(&tok).map_err(e2s)?,
        ),
    ];
    let mut paths = 0;
    for (cfg, template, verbalizer) in cases {
        for seed in 0..20u64 {
            let mut model = MicroModel::<f64>::new(MicroModelConfig { seed, ..cfg.clone() }).map_err(e2s)?;
            let enc = EncodedInput::encode(&template, &tok, "alpha beta", "gamma alpha delta", 64, 0).map_err(e2s)?;
            let out = score_any(&model, &verbalizer, enc.model_input::<f64>(None).map_err(e2s)?).map_err(e2s)?;
            let total: f64 = out.probs.iter().map(|p| p.1).sum();
            worst_norm = worst_norm.max((total - 1.0).abs());
            let w = model.label_word_vectors(verbalizer.word_ids()).map_err(e2s)?;
            for (row, (_, logit)) in w.iter().zip(&out.logits) {
                let dot: f64 = row.iter().zip(&out.h_t).map(|(a, b)| a * b).sum();
                check((dot - logit).abs() < 1e-9, || "logit is not w . h_t".into())?;
            }
            // identical label-word rows give an even split
            let head = model
                .named_tensors()
                .position(|(n, _)| n == "lm_head")
                .ok_or("no lm_head tensor")?;
            let ids = verbalizer.word_ids().to_vec();
            let t = &mut model.params_mut().tensors_mut()[head];
            let first = t.row(ids[0] as usize).to_vec();
            t.row_mut(ids[1] as usize).copy_from_slice(&first);
            let even = score_any(&model, &verbalizer, enc.model_input::<f64>(None).map_err(e2s)?).map_err(e2s)?;
            check(even.probs.iter().all(|p| (p.1 - 0.5).abs() < 1e-12), || format!("tied rows {:?}", even.probs))?;
        }
        paths += 1;
    }
    check(worst_norm <= 1e-9, || format!("normalization off by {worst_norm:e}"))?;
    Ok(format!("{paths} scoring paths x 20 models; normalization within {worst_norm:.1e}"))
}

// ---- 4: gradient fidelity ----

fn criterion_4() -> Outcome {
    let tok = Tokenizer::from_texts(["a b c d e f g h", &Template::seq2seq_manual().to_string(), "true false"]);
    let verbalizer = Verbalizer::ranking(&tok).map_err(e2s)?;
    let template = Template::seq2seq_manual();
    let cfg = MicroModelConfig::new(tok.vocab_size(), 16, 2, 2, 11);
    let mut model = MicroModel::<f64>::new(cfg).map_err(e2s)?;
    let batch = [("a b", "c a d", 0usize), ("e f", "g h e f", 1usize)];
    let inputs: Vec<Vec<u32>> = batch
        .iter()
        .map(|(q, d, _)| match EncodedInput::encode(&template, &tok, q, d, 64, 0).unwrap() {
            EncodedInput::Tokens(t) => t,
            EncodedInput::Continuous(_) => unreachable!(),
        })
        .collect();
    let words = verbalizer.word_ids().to_vec();
    let loss = |m: &MicroModel<f64>| -> f64 {
        inputs
            .iter()
            .zip(&batch)
            .map(|(ids, b)| m.loss_and_grads(ModelInput::Tokens(ids), &words, b.2, GradMode::Frozen).unwrap().0)
            .sum::<f64>()
            / batch.len() as f64
    };
    let mut analytic: Vec<Vec<f64>> = model.params().tensors().iter().map(|t| vec![0.0; t.len()]).collect();
    for (ids, b) in inputs.iter().zip(&batch) {
        let (_, g) = model.loss_and_grads(ModelInput::Tokens(ids), &words, b.2, GradMode::Model).map_err(e2s)?;
        for (k, acc) in analytic.iter_mut().enumerate() {
            if let Some(t) = g.get(k) {
                for (a, x) in acc.iter_mut().zip(t.data()) {
                    *a += x / batch.len() as f64;
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-5;
    let (mut worst, mut checked) = (0.0f64, 0);
    let n_tensors = model.params().len();
    for k in 0..n_tensors {
        let len = model.params().tensors()[k].len();
        let picks: Vec<usize> = if len <= 24 { (0..len).collect() } else { (0..24).map(|_| rng.random_range(0..len)).collect() };
        for i in picks {
            let orig = model.params().tensors()[k].data()[i];
            model.params_mut().tensors_mut()[k].data_mut()[i] = orig + h;
            let plus = loss(&model);
            model.params_mut().tensors_mut()[k].data_mut()[i] = orig - h;
            let minus = loss(&model);
            model.params_mut().tensors_mut()[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[k][i];
            let scale = a.abs().max(numeric.abs());
            let err = if scale < 1e-7 { (a - numeric).abs() } else { (a - numeric).abs() / scale };
            worst = worst.max(err);
            checked += 1;
        }
    }
    check(worst < 1e-4, || format!("worst relative error {worst:e}"))?;
    Ok(format!("{checked} coordinates over {n_tensors} tensors, worst relative error {worst:.1e}"))
}

// ---- 5: prompt tuning leaves the model untouched ----

fn criterion_5() -> Outcome {
    let words: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut docs = Vec::new();
    let mut queries = Vec::new();
    let mut qrels = Qrels::new();
    let mut run = Run::new();
    for q in 0..8 {
        let qw = [&words[2 * q], &words[2 * q + 1]];
        queries.push(Query::new(format!("q{q}"), format!("{} {}", qw[0], qw[1])));
        let pos = format!("p{q}");
        let neg = format!("n{q}");
        docs.push(Document::new(&pos, format!("{} x {} {}", qw[0], words[rng.random_range(20..40)], qw[1])));
        docs.push(Document::new(&neg, format!("{} {}", words[rng.random_range(20..40)], words[rng.random_range(20..40)])));
        qrels.insert(&format!("q{q}"), &pos, 1).unwrap();
        run.set_ranked(&format!("q{q}"), vec![(neg.clone(), 2.0), (pos.clone(), 1.0)], "bm25").unwrap();
    }
    let collection = Collection::new(docs).map_err(e2s)?;
    let queries = Queries::new(queries).map_err(e2s)?;
    let split = sample_msmarco_split(&qrels, &run, 5, 1).map_err(e2s)?;
    let texts = ContinuousPrompt::<f32>::default_texts();
    let mut vocab: Vec<&str> = words.iter().map(String::as_str).collect();
    vocab.extend(texts.iter().map(String::as_str));
    vocab.extend(["x", "true false"]);
    let tok = Tokenizer::from_texts(vocab);
    let model = MicroModel::<f32>::new(MicroModelConfig::new(tok.vocab_size(), 16, 1, 2, 5)).map_err(e2s)?;
    let before: Vec<(String, Vec<u32>)> = model
        .named_tensors()
        .map(|(n, t)| (n.to_string(), t.data().iter().map(|x| x.to_bits()).collect()))
        .collect();
    let checksum = model.checksum();
    let mut prompt = model.init_prompt(&tok, [&texts[0], &texts[1], &texts[2]].map(String::as_str)).map_err(e2s)?;
    let initial = prompt.clone();
    let template = Template::continuous();
    let verbalizer = Verbalizer::ranking(&tok).map_err(e2s)?;
    let scheme = Scheme::new(&tok, &template, &verbalizer);
    let data = RankingData { collection: &collection, queries: &queries, qrels: &qrels };
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        max_steps: 100,
        batch_size: Some(4),
        seed: 5,
        mode: TrainMode::PromptTuning,
        eval_every: 50,
    };
    let outcome = prompt_tune(&model, &mut prompt, &scheme, &split, &data, None, &cfg).map_err(e2s)?;
    check(outcome.log.entries.len() == 100, || format!("{} steps logged", outcome.log.entries.len()))?;
    let after: Vec<(String, Vec<u32>)> = model
        .named_tensors()
        .map(|(n, t)| (n.to_string(), t.data().iter().map(|x| x.to_bits()).collect()))
        .collect();
    check(before == after && checksum == model.checksum(), || "model parameters changed".into())?;
    let changed: Vec<bool> = initial.segments().iter().zip(prompt.segments()).map(|(a, b)| a != b).collect();
    check(changed.iter().all(|&c| c), || format!("segments changed: {changed:?}"))?;
    Ok(format!(
        "100 steps; {} model tensors bit-identical, s1/s2/s3 all moved ({} trainable of {})",
        before.len(),
        outcome.trainable_params,
        outcome.total_params
    ))
}

// ---- 6: partition algorithms ----

fn random_qrels(rng: &mut ChaCha8Rng) -> Qrels {
    let mut q = Qrels::new();
    for qi in 0..rng.random_range(1..=40) {
        for d in 0..rng.random_range(1..=60) {
            q.insert(&format!("q{qi}"), &format!("d{d}"), rng.random_range(0..=2)).unwrap();
        }
    }
    q
}

fn counts(q: &Qrels) -> BTreeMap<String, usize> {
    q.iter().map(|(k, m)| (k.to_string(), m.len())).collect()
}

fn split_ok(split: &TrainSplit, qrels: &Qrels, run: &Run) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for t in &split.triples {
        check(seen.insert(t.qid.clone()), || format!("duplicate query {}", t.qid))?;
        check(qrels.grade(&t.qid, &t.positive).is_some_and(|g| g >= 1), || format!("{} positive {}", t.qid, t.positive))?;
        check(!qrels.is_positive(&t.qid, &t.negative), || format!("{} negative {} is positive", t.qid, t.negative))?;
        check(run.ranked_docids(&t.qid).contains(&t.negative.as_str()), || format!("{} negative not in run", t.qid))?;
    }
    Ok(())
}

fn fixture(n: usize, rng: &mut ChaCha8Rng) -> (Qrels, Run) {
    let mut qrels = Qrels::new();
    let mut run = Run::new();
    for q in 0..n {
        let qid = format!("q{q:04}");
        let mut ranked = Vec::new();
        for d in 0..10 {
            let doc = format!("{qid}d{d}");
            if rng.random_bool(0.3) {
                qrels.insert(&qid, &doc, rng.random_range(0..=2)).unwrap();
            }
            ranked.push((doc, 10.0 - d as f64));
        }
        qrels.insert(&qid, &format!("{qid}extra"), 1).unwrap();
        run.set_ranked(&qid, ranked, "bm25").unwrap();
    }
    (qrels, run)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..20 {
        let qrels = random_qrels(&mut rng);
        let m = qrels.label_count();
        for r in [0.002, 0.02, 0.5, 1.0] {
            let want = (r * m as f64).floor() as usize;
            if want == 0 {
                continue;
            }
            let out = sample_label_fraction(&qrels, r, i).map_err(e2s)?;
            check(out.label_count() == want, || format!("r={r}, M={m}: {} labels, want {want}", out.label_count()))?;
            if r == 1.0 {
                check(out == qrels, || "r=1.0 is not the identity".into())?;
            }
        }
    }

    let mut two = Qrels::new();
    for i in 0..6 {
        two.insert("q1", &format!("a{i}"), 1).unwrap();
    }
    for i in 0..4 {
        two.insert("q2", &format!("b{i}"), 1).unwrap();
    }
    let traced: BTreeMap<String, usize> = [("q1".to_string(), 3), ("q2".to_string(), 2)].into();
    let q2_first: BTreeMap<String, usize> = [("q1".to_string(), 5)].into();
    let mut hits = 0;
    for seed in 0..20 {
        let c = counts(&sample_label_fraction(&two, 0.5, seed).map_err(e2s)?);
        check(c == traced || c == q2_first, || format!("seed {seed}: {c:?}"))?;
        hits += usize::from(c == traced);
    }
    check(hits > 0, || "q1-first trace never produced {3,2}".into())?;

    let (qrels, run) = fixture(120, &mut rng);
    let mut splits = 0;
    for k in [5, 50] {
        for seed in 0..50 {
            let split = sample_msmarco_split(&qrels, &run, k, seed).map_err(e2s)?;
            check(split.len() == k, || format!("k={k}: {} triples", split.len()))?;
            split_ok(&split, &qrels, &run)?;
            let dev = build_dev_set(&qrels, &run, &split, seed).map_err(e2s)?;
            check(dev.len() == k, || format!("k={k}: dev {}", dev.len()))?;
            check(split.query_ids().all(|q| !dev.candidates.contains_key(q)), || "dev overlaps train".into())?;
            splits += 1;
        }
    }
    check(dev_set_size(5) == 5 && dev_set_size(50) == 50 && dev_set_size(1000) == 500, || "dev size rule".into())?;
    let (qrels, run) = fixture(1600, &mut rng);
    let split = sample_msmarco_split(&qrels, &run, 1000, 1).map_err(e2s)?;
    let dev = build_dev_set(&qrels, &run, &split, 2).map_err(e2s)?;
    check(dev.len() == 500, || format!("|train|=1000 with 600 held out gave dev {}", dev.len()))?;
    Ok(format!("20 qrels x 4 fractions exact; traced {{3,2}} in {hits}/20 seeds; {splits} splits valid; dev 5/50/500"))
}

// ---- 7, 8, 10: transfer experiment through the binary ----

fn shipped_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/desk_transfer.json")
}

fn run_all(out: &Path) -> Result<Duration, String> {
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_promptrank"))
        .args(["run-all", "--config"])
        .arg(shipped_config())
        .arg("--output")
        .arg(out)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(e2s)?;
    check(status.success(), || format!("run-all exited with {status}"))?;
    Ok(start.elapsed())
}

fn load_report(dir: &Path) -> Result<TransferReport, String> {
    let text = std::fs::read_to_string(dir.join("results.json")).map_err(e2s)?;
    serde_json::from_str(&text).map_err(e2s)
}

fn criterion_7(report: &TransferReport, elapsed: Duration, soft: &mut Vec<String>) -> Outcome {
    let vanilla = report.mean_mrr["vanilla"];
    let nli = report.mean_mrr["nli_like"];
    let qa = report.mean_mrr["qa_like"];
    let qa_wins = report
        .repeats
        .iter()
        .filter(|r| {
            let get = |n: &str| r.variants.iter().find(|v| v.variant.name() == n).map(|v| v.mrr);
            get("qa_like") >= get("nli_like")
        })
        .count();
    soft.push(format!(
        "qa_like >= nli_like in {qa_wins}/{} repeats ({})",
        report.repeats.len(),
        if qa_wins >= 3 { "holds" } else { "does not hold; logged only" }
    ));
    check(report.repeats.len() == 5, || format!("{} repeats", report.repeats.len()))?;
    check(nli > vanilla, || format!("nli_like {nli:.4} <= vanilla {vanilla:.4}"))?;
    check(elapsed < Duration::from_secs(15 * 60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "mean MRR@10 vanilla {vanilla:.4}, nli_like {nli:.4}, qa_like {qa:.4} (bm25 {:.4}); {:.0}s",
        report.bm25_mean_mrr,
        elapsed.as_secs_f64()
    ))
}

fn criterion_8(report: &TransferReport) -> Outcome {
    let mut wins = 0;
    let mut detail = Vec::new();
    for r in &report.repeats {
        let get = |n: &str| r.variants.iter().find(|v| v.variant.name() == n).map(|v| v.separation).unwrap_or(f64::NAN);
        let (v, p) = (get("vanilla"), get("nli_like"));
        wins += usize::from(p > v);
        detail.push(format!("{p:+.3}/{v:+.3}"));
    }
    check(wins * 2 > report.repeats.len(), || format!("pre-finetuned wider in {wins}/{}: {}", report.repeats.len(), detail.join(" ")))?;
    Ok(format!("nli_like/vanilla separation {} -> {wins}/{} repeats", detail.join(" "), report.repeats.len()))
}

fn artifacts(dir: &Path) -> Vec<PathBuf> {
    fn walk(d: &Path, base: &Path, out: &mut Vec<PathBuf>) {
        for e in std::fs::read_dir(d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(&p, base, out);
            } else if matches!(p.extension().and_then(|x| x.to_str()), Some("json" | "trec")) {
                out.push(p.strip_prefix(base).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

fn criterion_10(first: &Path, second: &Path) -> Outcome {
    let files = artifacts(first);
    check(files == artifacts(second), || "different file sets".into())?;
    check(files.iter().any(|f| f.to_string_lossy().ends_with(".mrr.json")), || "no metric files".into())?;
    for f in &files {
        if f == Path::new("config.json") {
            continue;
        }
        let a = std::fs::read(first.join(f)).map_err(e2s)?;
        let b = std::fs::read(second.join(f)).map_err(e2s)?;
        check(a == b, || format!("{} differs", f.display()))?;
    }
    Ok(format!("{} metric and run files byte-identical across two run-all executions", files.len() - 1))
}

// ---- 9: significance test ----

fn criterion_9() -> Outcome {
    let ids = |n: usize| (0..n).map(|i| format!("q{i:02}"));
    let wins = MetricResult::new("mrr", 10, ids(10).map(|q| (q, 1.0)).collect()).map_err(e2s)?;
    let loses = MetricResult::new("mrr", 10, ids(10).map(|q| (q, 0.0)).collect()).map_err(e2s)?;
    let p = paired_significance(&wins, &loses).map_err(e2s)?.p_value;
    check((p - 2.0 / 1024.0).abs() < 1e-15, || format!("10/10 wins gave p = {p}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let trials = 1000;
    let mut rejections = 0;
    for t in 0..trials {
        let n = 12 + t % 20;
        let a: BTreeMap<String, f64> = ids(n).map(|q| (q, rng.random_range(0.0..1.0))).collect();
        let b: BTreeMap<String, f64> = ids(n).map(|q| (q, rng.random_range(0.0..1.0))).collect();
        let r = paired_significance(&MetricResult::new("mrr", 10, a).unwrap(), &MetricResult::new("mrr", 10, b).unwrap())
            .map_err(e2s)?;
        rejections += usize::from(r.p_value <= 0.05);
    }
    let rate = rejections as f64 / trials as f64;
    check((0.03..=0.07).contains(&rate), || format!("null rejection rate {rate}"))?;
    Ok(format!("p(10/10) = 2/1024; null rejection rate {rate:.3} over {trials} trials"))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut timed = |n: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        report_line(n, name, &out, took);
        results.push((n, name, out, took));
    };
    timed(1, "metric oracles", &criterion_1);
    timed(2, "bm25 oracle", &criterion_2);
    timed(3, "label-word softmax contract", &criterion_3);
    timed(4, "gradient fidelity", &criterion_4);
    timed(5, "prompt tuning keeps the model frozen", &criterion_5);
    timed(6, "partition algorithms", &criterion_6);

    let tmp = tempfile::tempdir().expect("temp dir");
    let (first, second) = (tmp.path().join("a"), tmp.path().join("b"));
    let mut soft = Vec::new();
    let first_run = run_all(&first).and_then(|t| load_report(&first).map(|r| (r, t)));
    let (c7, c8) = match &first_run {
        Ok((report, elapsed)) => (criterion_7(report, *elapsed, &mut soft), criterion_8(report)),
        Err(e) => (Err(e.clone()), Err(e.clone())),
    };
    let t7 = first_run.as_ref().map(|r| r.1).unwrap_or_default();
    report_line(7, "transfer reproduction", &c7, t7);
    for s in &soft {
        println!("      soft: {s}");
    }
    report_line(8, "score separation", &c8, Duration::ZERO);
    results.push((7, "transfer reproduction", c7, t7));
    results.push((8, "score separation", c8, Duration::ZERO));

    let start = Instant::now();
    let c9 = criterion_9();
    report_line(9, "significance test validity", &c9, start.elapsed());
    results.push((9, "significance test validity", c9, start.elapsed()));

    let start = Instant::now();
    let c10 = match &first_run {
        Ok(_) => run_all(&second).and_then(|_| criterion_10(&first, &second)),
        Err(e) => Err(format!("first run failed: {e}")),
    };
    report_line(10, "end-to-end determinism", &c10, start.elapsed());
    results.push((10, "end-to-end determinism", c10, start.elapsed()));

    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!("acceptance: {}/{} passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

fn report_line(n: usize, name: &str, out: &Outcome, took: Duration) {
    match out {
        Ok(detail) => println!("PASS [{n:>2}] {name}: {detail} ({:.1}s)", took.as_secs_f64()),
        Err(why) => println!("FAIL [{n:>2}] {name}: {why} ({:.1}s)", took.as_secs_f64()),
    }
}
