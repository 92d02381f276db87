//! Decision-token embeddings, a PCA projection and the positive/negative
//! score histogram of a briefly pre-finetuned model.
use promptrank::analysis::{
    extract_embeddings, project_2d, score_histogram, score_labeled, EmbeddingDump, LabeledPair,
};
use promptrank::evaluation::PromptRanker;
use promptrank::experiment::ModelSpec;
use promptrank::model::MicroModel;
use promptrank::prompting::{Template, Verbalizer};
use promptrank::training::{make_synthetic_tasks, prefinetune, MixtureSpec, SyntheticConfig, TrainConfig};

fn main() -> promptrank::Result<()> {
    let tasks = make_synthetic_tasks(5, &SyntheticConfig { nli_examples: 20000, qa_examples: 10, ..Default::default() })?;
    let tok = &tasks.tokenizer;
    let mut model = MicroModel::new(ModelSpec::default().config(tok.vocab_size(), 1))?;
    let cfg = TrainConfig { learning_rate: 1e-3, max_steps: 1000, batch_size: Some(16), ..Default::default() };
    prefinetune(&mut model, tok, &MixtureSpec::single(tasks.nli_like.clone()), &cfg)?;

    let mut ranking_pairs = Vec::new();
    for (qid, judged) in tasks.qrels.iter().take(20) {
        let q = &tasks.queries.lookup(qid)?.text;
        for (docid, &grade) in judged {
            let label = if grade >= 1 { "pos" } else { "neg" };
            let d = &tasks.collection.lookup(docid)?.text;
            ranking_pairs.push(LabeledPair::new(format!("{qid}:{docid}"), label, q.as_str(), d.as_str()));
        }
    }
    let nli_pairs: Vec<LabeledPair> = tasks.nli_like.examples[..60]
        .iter()
        .enumerate()
        .map(|(i, e)| LabeledPair::new(format!("nli{i}"), e.label.as_str(), e.text_a.as_str(), e.text_b.as_str()))
        .collect();

    let template = Template::seq2seq_manual();
    let verbalizer = Verbalizer::ranking(tok)?;
    let ranker = PromptRanker::new(&model, tok, &template, &verbalizer, 48);
    let nli = &tasks.nli_like;
    let nli_ranker = PromptRanker::new(&model, tok, &nli.template, &nli.verbalizer, 48);
    let dump = EmbeddingDump::concat(vec![
        extract_embeddings(&ranker, &ranking_pairs)?,
        extract_embeddings(&nli_ranker, &nli_pairs)?,
    ])?;
    println!("{} rows of dimension {}, labels {:?}", dump.len(), dump.dimension(), dump.label_set());

    let points = project_2d(&dump)?;
    for label in dump.label_set() {
        let mine: Vec<_> = points.iter().filter(|p| &p.label == label).collect();
        let (x, y) = mine.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
        println!("{label:>13}: centroid ({:+.3}, {:+.3})", x / mine.len() as f64, y / mine.len() as f64);
    }

    let (pos, neg) = score_labeled(&ranker, &ranking_pairs, |l| l == "pos")?;
    let hist = score_histogram(&pos, &neg, 10)?;
    for b in &hist.bins {
        println!("[{:.1}, {:.1}) {:>3} pos {:>3} neg", b.lower, b.upper, b.positive, b.negative);
    }
    println!("separation {:+.4}", hist.separation.unwrap_or(f64::NAN));
    Ok(())
}
