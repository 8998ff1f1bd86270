//! Measurement stack: FT score (ROUGE-1), IDK score, activation PCA and the
//! seen/unseen separation per layer.

mod idk;
mod pca;
mod rouge;

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use idk::{
    cosine, idk_details, idk_from_responses, idk_score, respond, sentence_embed, Executor,
    IdkOutcome, Sequential,
};
pub use pca::{fit_pca, project, separation, sign_normalize, symmetric_eigen, Matrix, PcaBasis};
pub use rouge::rouge1;

use crate::corpus::{CorpusBundle, QaRecord, Tokenizer};
use crate::error::{Error, Result};
use crate::model::{forward, prompt_tokens, ActivationSet, ModelCheckpoint};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Greedy decoding budget for responses.
    pub max_new: usize,
    /// Principal components kept for projections and separation.
    pub components: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            max_new: 24,
            components: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub seed: u64,
    pub corpus_hash: String,
    pub checkpoint_hash: String,
    pub ft_dataset: String,
    pub ft_score: f64,
    pub idk_unverifiable: f64,
    pub idk_unseen: f64,
    /// Separation of factual vs unseen activations after blocks `1..=n_layers`.
    pub separation_per_layer: Vec<f64>,
}

impl EvalReport {
    pub fn final_separation(&self) -> f64 {
        self.separation_per_layer.last().copied().unwrap_or(0.0)
    }

    pub fn mean_separation(&self) -> f64 {
        let n = self.separation_per_layer.len().max(1) as f64;
        self.separation_per_layer.iter().sum::<f64>() / n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub dataset: String,
    pub coords: Vec<f64>,
}

/// Every evaluation dataset projected on one layer's unverifiable-fitted basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProjection {
    pub layer: usize,
    pub explained_variance: Vec<f64>,
    pub points: Vec<ProjectedPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub projections: Vec<LayerProjection>,
    pub ft_responses: Vec<String>,
    pub unverifiable: IdkOutcome,
    pub unseen: IdkOutcome,
}

/// Mean ROUGE-1 of greedy answers against the records' reference answers.
pub fn ft_score(
    ckpt: &ModelCheckpoint,
    tokenizer: &Tokenizer,
    records: &[QaRecord],
    max_new: usize,
    exec: &dyn Executor,
) -> Result<(f64, Vec<String>)> {
    if records.is_empty() {
        return Err(Error::Empty("fine-tuning dataset"));
    }
    let questions: Vec<String> = records.iter().map(|r| r.question.clone()).collect();
    let responses = respond(ckpt, tokenizer, &questions, max_new, exec)?;
    let mut total = 0.0;
    for (r, resp) in records.iter().zip(&responses) {
        total += rouge1(resp, &r.answer)?;
    }
    Ok((total / records.len() as f64, responses))
}

/// Last-prompt-token states for every layer: `out[layer]` holds one row per question.
pub fn capture_all_layers(
    ckpt: &ModelCheckpoint,
    tokenizer: &Tokenizer,
    questions: &[String],
    label: &str,
) -> Result<Vec<ActivationSet>> {
    if questions.is_empty() {
        return Err(Error::Empty("question list"));
    }
    let d = ckpt.config.d_model;
    let layers = ckpt.config.n_layers + 1;
    let mut data: Vec<Vec<f64>> = (0..layers).map(|_| Vec::with_capacity(questions.len() * d)).collect();
    for q in questions {
        let prompt = prompt_tokens(tokenizer, q);
        let cache = forward(ckpt.layout(), &ckpt.params, &prompt)?;
        for (l, buf) in data.iter_mut().enumerate() {
            buf.extend(cache.hidden_row(l, prompt.len() - 1, d).iter().map(|&v| f64::from(v)));
        }
    }
    Ok(data
        .into_iter()
        .enumerate()
        .map(|(layer, data)| ActivationSet {
            layer,
            dim: d,
            data,
            labels: alloc::vec![label.to_string(); questions.len()],
        })
        .collect())
}

fn questions(records: &[QaRecord]) -> Vec<String> {
    records.iter().map(|r| r.question.clone()).collect()
}

/// Projections of factual / fine-tune / unseen / unverifiable prompts on each
/// block's unverifiable-fitted basis, and the factual-vs-unseen separation.
pub fn layer_analysis(
    ckpt: &ModelCheckpoint,
    corpus: &CorpusBundle,
    ft_records: &[QaRecord],
    components: usize,
) -> Result<(Vec<LayerProjection>, Vec<f64>)> {
    let tok = &corpus.tokenizer;
    let groups = [
        ("factual", questions(&corpus.factual)),
        ("finetune", questions(ft_records)),
        ("unseen", questions(&corpus.unseen_eval)),
        ("unverifiable", corpus.unverifiable.clone()),
    ];
    let mut captured = Vec::with_capacity(groups.len());
    for (label, qs) in &groups {
        captured.push(capture_all_layers(ckpt, tok, qs, label)?);
    }
    let mut projections = Vec::new();
    let mut seps = Vec::new();
    for layer in 1..=ckpt.config.n_layers {
        let basis = fit_pca(&captured[3][layer], components)?;
        let projected = captured
            .iter()
            .map(|sets| project(&basis, &sets[layer]))
            .collect::<Result<Vec<_>>>()?;
        seps.push(separation(&projected[0], &projected[2])?);
        let mut points = Vec::new();
        for ((label, _), m) in groups.iter().zip(&projected) {
            for i in 0..m.rows {
                points.push(ProjectedPoint {
                    dataset: label.to_string(),
                    coords: m.row(i).to_vec(),
                });
            }
        }
        projections.push(LayerProjection {
            layer,
            explained_variance: basis.explained_variance.clone(),
            points,
        });
    }
    Ok((projections, seps))
}

pub fn evaluate_full(
    ckpt: &ModelCheckpoint,
    base: &ModelCheckpoint,
    corpus: &CorpusBundle,
    ft_dataset: &str,
    cfg: &EvalConfig,
    exec: &dyn Executor,
) -> Result<Evaluation> {
    if ckpt.config != base.config {
        return Err(Error::Structure("checkpoint and base have different configs".to_string()));
    }
    let vocab_hash = corpus.vocab_fingerprint();
    for c in [ckpt, base] {
        if c.provenance.vocab_hash != vocab_hash || c.config.vocab_size != corpus.tokenizer.len() {
            return Err(Error::Structure(alloc::format!(
                "checkpoint vocabulary {} does not match corpus vocabulary {vocab_hash}",
                c.provenance.vocab_hash
            )));
        }
    }
    let ft_records = corpus.records(ft_dataset)?;
    let tok = &corpus.tokenizer;
    let (ft, ft_responses) = ft_score(ckpt, tok, ft_records, cfg.max_new, exec)?;
    let unverifiable = idk_details(
        ckpt,
        base,
        tok,
        &corpus.unverifiable,
        &corpus.idk_templates,
        cfg.max_new,
        exec,
    )?;
    let unseen = idk_details(
        ckpt,
        base,
        tok,
        &questions(&corpus.unseen_eval),
        &corpus.idk_templates,
        cfg.max_new,
        exec,
    )?;
    let (projections, seps) = layer_analysis(ckpt, corpus, ft_records, cfg.components)?;
    Ok(Evaluation {
        report: EvalReport {
            method: ckpt.provenance.method.clone(),
            seed: ckpt.provenance.seed,
            corpus_hash: corpus.fingerprint(),
            checkpoint_hash: ckpt.fingerprint(),
            ft_dataset: ft_dataset.to_string(),
            ft_score: ft,
            idk_unverifiable: unverifiable.score,
            idk_unseen: unseen.score,
            separation_per_layer: seps,
        },
        projections,
        ft_responses,
        unverifiable,
        unseen,
    })
}

/// FT score on `ft_dataset`, IDK on the unverifiable and unseen sets, and
/// per-layer separation.
pub fn evaluate(
    ckpt: &ModelCheckpoint,
    base: &ModelCheckpoint,
    corpus: &CorpusBundle,
    ft_dataset: &str,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    evaluate_full(ckpt, base, corpus, ft_dataset, cfg, &Sequential).map(|e| e.report)
}
