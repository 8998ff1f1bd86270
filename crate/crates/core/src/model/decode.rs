use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{forward, prompt_tokens, ModelCheckpoint};
use crate::corpus::tokenizer::EOS;
use crate::corpus::Tokenizer;
use crate::error::{Error, Result};

/// Argmax continuation of `prompt`, stopping at eos (not included), after
/// `max_new` tokens, or when the context is full. Ties go to the lowest id.
pub fn greedy_decode(ckpt: &ModelCheckpoint, prompt: &[u32], max_new: usize) -> Result<Vec<u32>> {
    let layout = ckpt.layout();
    let (ctx, vocab) = (layout.config.context_len, layout.config.vocab_size);
    if prompt.len() > ctx {
        return Err(Error::SequenceTooLong {
            len: prompt.len(),
            context: ctx,
        });
    }
    let mut seq = prompt.to_vec();
    let mut out = Vec::new();
    while out.len() < max_new && seq.len() < ctx {
        let cache = forward(layout, &ckpt.params, &seq)?;
        let row = cache.logits_row(seq.len() - 1, vocab);
        let mut best = 0usize;
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = i;
            }
        }
        let next = best as u32;
        if next == EOS {
            break;
        }
        out.push(next);
        seq.push(next);
    }
    Ok(out)
}

/// Last-token hidden states of a list of prompts after one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationSet {
    pub layer: usize,
    pub dim: usize,
    /// `[rows, dim]` row-major.
    pub data: Vec<f64>,
    pub labels: Vec<String>,
}

impl ActivationSet {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Builds a set from explicit rows (all of length `dim`).
    pub fn from_rows(layer: usize, dim: usize, rows: &[Vec<f64>], label: &str) -> Self {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.len(), dim, "row width");
            data.extend_from_slice(r);
        }
        Self {
            layer,
            dim,
            data,
            labels: vec![label.to_string(); rows.len()],
        }
    }
}

/// Captures, for each question, the residual stream after block `layer` (0 is the
/// embedding output) at the last prompt token.
pub fn capture_activations(
    ckpt: &ModelCheckpoint,
    tokenizer: &Tokenizer,
    questions: &[String],
    layer: usize,
    label: &str,
) -> Result<ActivationSet> {
    let cfg = &ckpt.config;
    if questions.is_empty() {
        return Err(Error::Empty("question list"));
    }
    if layer > cfg.n_layers {
        return Err(Error::Range {
            what: "layer",
            value: layer as f64,
            expected: "0 <= layer <= n_layers",
        });
    }
    let d = cfg.d_model;
    let mut data = Vec::with_capacity(questions.len() * d);
    for q in questions {
        let prompt = prompt_tokens(tokenizer, q);
        let cache = forward(ckpt.layout(), &ckpt.params, &prompt)?;
        data.extend(cache.hidden_row(layer, prompt.len() - 1, d).iter().map(|&v| f64::from(v)));
    }
    Ok(ActivationSet {
        layer,
        dim: d,
        data,
        labels: vec![label.to_string(); questions.len()],
    })
}
