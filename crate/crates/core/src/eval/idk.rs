//! Sentence embeddings from the frozen base model and the IDK score.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::Tokenizer;
use crate::error::{Error, Result};
use crate::model::{forward, greedy_decode, prompt_tokens, ModelCheckpoint};

/// Runs decode jobs; lets callers fan out across threads while results stay in
/// job order.
pub trait Executor: Sync {
    fn map_decode(
        &self,
        jobs: usize,
        job: &(dyn Fn(usize) -> Result<Vec<u32>> + Sync),
    ) -> Vec<Result<Vec<u32>>>;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_decode(
        &self,
        jobs: usize,
        job: &(dyn Fn(usize) -> Result<Vec<u32>> + Sync),
    ) -> Vec<Result<Vec<u32>>> {
        (0..jobs).map(job).collect()
    }
}

/// Mean of the base model's final-block states over the text's tokens (no bos).
pub fn sentence_embed(base: &ModelCheckpoint, tokenizer: &Tokenizer, text: &str) -> Result<Vec<f64>> {
    let tokens = tokenizer.tokenize(text);
    if tokens.is_empty() {
        return Err(Error::Empty("text to embed"));
    }
    let cache = forward(base.layout(), &base.params, &tokens)?;
    let d = base.config.d_model;
    let last = base.config.n_layers;
    let mut out = vec![0.0f64; d];
    for pos in 0..cache.len {
        for (o, &v) in out.iter_mut().zip(cache.hidden_row(last, pos, d)) {
            *o += f64::from(v);
        }
    }
    for o in &mut out {
        *o /= cache.len as f64;
    }
    Ok(out)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (libm::sqrt(na) * libm::sqrt(nb))).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdkOutcome {
    /// Mean best-template cosine, clipped to `[0, 1]`.
    pub score: f64,
    /// Unclipped best-template cosine per question; an empty response scores 0.
    pub per_question: Vec<f64>,
    pub responses: Vec<String>,
}

/// Scores already-generated responses against the ignorance templates.
pub fn idk_from_responses(
    base: &ModelCheckpoint,
    tokenizer: &Tokenizer,
    responses: &[String],
    templates: &[String],
) -> Result<IdkOutcome> {
    if templates.is_empty() {
        return Err(Error::Empty("ignorance templates"));
    }
    if responses.is_empty() {
        return Err(Error::Empty("question set"));
    }
    let template_embs = templates
        .iter()
        .map(|t| sentence_embed(base, tokenizer, t))
        .collect::<Result<Vec<_>>>()?;
    let mut per_question = Vec::with_capacity(responses.len());
    for r in responses {
        if tokenizer.tokenize(r).is_empty() {
            per_question.push(0.0);
            continue;
        }
        let e = sentence_embed(base, tokenizer, r)?;
        let best = template_embs
            .iter()
            .map(|t| cosine(&e, t))
            .fold(f64::NEG_INFINITY, f64::max);
        per_question.push(best);
    }
    let mean = per_question.iter().sum::<f64>() / per_question.len() as f64;
    Ok(IdkOutcome {
        score: mean.clamp(0.0, 1.0),
        per_question,
        responses: responses.to_vec(),
    })
}

/// Greedy responses of `ckpt` to each question, as text.
pub fn respond(
    ckpt: &ModelCheckpoint,
    tokenizer: &Tokenizer,
    questions: &[String],
    max_new: usize,
    exec: &dyn Executor,
) -> Result<Vec<String>> {
    let job = |i: usize| greedy_decode(ckpt, &prompt_tokens(tokenizer, &questions[i]), max_new);
    exec.map_decode(questions.len(), &job)
        .into_iter()
        .map(|r| r.map(|ids| tokenizer.decode_text(&ids)))
        .collect()
}

pub fn idk_details(
    ckpt: &ModelCheckpoint,
    base: &ModelCheckpoint,
    tokenizer: &Tokenizer,
    questions: &[String],
    templates: &[String],
    max_new: usize,
    exec: &dyn Executor,
) -> Result<IdkOutcome> {
    if questions.is_empty() {
        return Err(Error::Empty("question set"));
    }
    if templates.is_empty() {
        return Err(Error::Empty("ignorance templates"));
    }
    let responses = respond(ckpt, tokenizer, questions, max_new, exec)?;
    idk_from_responses(base, tokenizer, &responses, templates)
}

/// Mean over questions of the best cosine similarity between the embedded greedy
/// response and any embedded ignorance template, clipped to `[0, 1]`.
pub fn idk_score(
    ckpt: &ModelCheckpoint,
    base: &ModelCheckpoint,
    tokenizer: &Tokenizer,
    questions: &[String],
    templates: &[String],
    max_new: usize,
) -> Result<f64> {
    idk_details(ckpt, base, tokenizer, questions, templates, max_new, &Sequential).map(|o| o.score)
}
