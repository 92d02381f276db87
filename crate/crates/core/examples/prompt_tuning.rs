//! Prompt tuning: only the three continuous prompt segments train, the model
//! stays frozen.
use promptrank::bm25::{retrieve_all, Bm25Params, InvertedIndex};
use promptrank::model::{MicroModel, MicroModelConfig};
use promptrank::partition::sample_msmarco_split;
use promptrank::prompting::{ContinuousPrompt, Scheme, Template, Verbalizer};
use promptrank::training::{make_synthetic_tasks, prompt_tune, RankingData, SyntheticConfig, TrainConfig, TrainMode};

fn main() -> promptrank::Result<()> {
    let tasks = make_synthetic_tasks(2, &SyntheticConfig { nli_examples: 10, qa_examples: 10, ..Default::default() })?;
    let index = InvertedIndex::build(&tasks.collection, Bm25Params::default())?;
    let first = retrieve_all(&index, &tasks.queries, 30, "bm25")?;
    let split = sample_msmarco_split(&tasks.qrels, &first, 5, 4)?;

    let model = MicroModel::<f32>::new(MicroModelConfig::new(tasks.tokenizer.vocab_size(), 32, 1, 2, 9))?;
    let before = model.checksum();
    let texts = ContinuousPrompt::<f32>::default_texts();
    let mut prompt = model.init_prompt(&tasks.tokenizer, [&texts[0], &texts[1], &texts[2]].map(String::as_str))?;
    let initial = prompt.clone();

    let template = Template::continuous();
    let verbalizer = Verbalizer::ranking(&tasks.tokenizer)?;
    let scheme = Scheme::new(&tasks.tokenizer, &template, &verbalizer);
    let data = RankingData { collection: &tasks.collection, queries: &tasks.queries, qrels: &tasks.qrels };
    let cfg = TrainConfig { learning_rate: 1e-2, max_steps: 50, mode: TrainMode::PromptTuning, ..Default::default() };
    let outcome = prompt_tune(&model, &mut prompt, &scheme, &split, &data, None, &cfg)?;

    let (head, tail) = outcome.log.head_tail_loss(5).expect("non-empty log");
    println!("loss {head:.4} -> {tail:.4}");
    println!(
        "trainable {} of {} parameters ({:.3}%)",
        outcome.trainable_params,
        outcome.total_params,
        100.0 * outcome.trainable_fraction()
    );
    println!("model unchanged: {}", before == model.checksum());
    println!("prompt changed: {}", initial.segments() != prompt.segments());
    Ok(())
}
