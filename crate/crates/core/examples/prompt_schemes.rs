//! Render one (query, document) pair through each prompt scheme and score it
//! with an untrained micro model.
use promptrank::model::{score_any, MicroModel, MicroModelConfig};
use promptrank::prompting::{EncodedInput, Template, Tokenizer, Verbalizer};

fn main() -> promptrank::Result<()> {
    let (q, d) = ("cheap flights", "find cheap flights to lisbon");
    let tok = Tokenizer::from_texts([
        q,
        d,
        &Template::seq2seq_manual().to_string(),
        &Template::mask_manual().to_string(),
        "true false relevant irrelevant",
        "Task: Find the relevance between Query and Document. Query: Document: Relevant:",
    ]);

    let seq2seq = MicroModel::<f32>::new(MicroModelConfig::new(tok.vocab_size(), 32, 1, 2, 1))?;
    let encoder = MicroModel::<f32>::new(MicroModelConfig::new(tok.vocab_size(), 32, 1, 2, 1).encoder_only())?;
    let ranking = Verbalizer::ranking(&tok)?;
    let ranking_mask = Verbalizer::ranking_mask(&tok)?;

    for (template, model, verbalizer) in [
        (Template::seq2seq_manual(), &seq2seq, &ranking),
        (Template::none_words(), &seq2seq, &ranking),
        (Template::mask_manual(), &encoder, &ranking_mask),
    ] {
        let input = EncodedInput::encode(&template, &tok, q, d, 64, 0)?;
        let out = score_any(model, verbalizer, input.model_input::<f32>(None)?)?;
        println!("{:<14?} {:<45} {:?}", template.kind(), template.render(q, d)?, out.probs);
    }

    let texts = ["Task: Find the relevance between Query and Document. Query:", "Document:", "Relevant:"];
    let prompt = seq2seq.init_prompt(&tok, texts)?;
    let template = Template::continuous();
    let input = EncodedInput::encode(&template, &tok, q, d, 64, prompt.total_len())?;
    let out = score_any(&seq2seq, &ranking, input.model_input(Some(&prompt))?)?;
    println!("{:<14?} prompt lengths {:?} {:?}", template.kind(), prompt.lengths(), out.probs);
    Ok(())
}
