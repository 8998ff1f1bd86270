//! Tiny decoder-only transformer: parameter layout, checkpoints, forward/backward,
//! greedy decoding and hidden-state capture.

mod checkpoint;
mod decode;
mod layout;
mod loss;
mod transformer;

use alloc::string::ToString;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use checkpoint::{ModelCheckpoint, Provenance};
pub use decode::{capture_activations, greedy_decode, ActivationSet};
pub use layout::{Layout, ParamKind, ParamSpec};
pub use loss::{ce_logit_grad, kl_logit_grad, kl_rows, log_softmax, loss_ce, softmax};
pub use transformer::{backward, forward, ForwardCache};

use crate::corpus::tokenizer::{BOS, EOS};
use crate::corpus::Tokenizer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub context_len: usize,
    /// Zero means "take it from the corpus vocabulary".
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 2,
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            context_len: 64,
            vocab_size: 0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("model.n_layers", self.n_layers),
            ("model.d_model", self.d_model),
            ("model.n_heads", self.n_heads),
            ("model.d_ff", self.d_ff),
            ("model.context_len", self.context_len),
            ("model.vocab_size", self.vocab_size),
        ];
        for (field, v) in dims {
            if v == 0 {
                return Err(Error::Config {
                    field,
                    constraint: "must be at least 1".to_string(),
                });
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config {
                field: "model.n_heads",
                constraint: alloc::format!("must divide d_model = {}", self.d_model),
            });
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// One teacher-forced training sequence: `tokens[i]` predicts `targets[i]`, and
/// only positions with `loss_mask[i]` (answer tokens and the closing eos) count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub tokens: Vec<u32>,
    pub targets: Vec<u32>,
    pub loss_mask: Vec<bool>,
}

impl Example {
    /// `<bos> question answer <eos>`, shifted by one for next-token prediction.
    pub fn from_qa(tokenizer: &Tokenizer, question: &str, answer: &str) -> Self {
        let q = tokenizer.tokenize(question);
        let a = tokenizer.tokenize(answer);
        let mut full = Vec::with_capacity(q.len() + a.len() + 2);
        full.push(BOS);
        full.extend_from_slice(&q);
        full.extend_from_slice(&a);
        full.push(EOS);
        let tokens = full[..full.len() - 1].to_vec();
        let targets = full[1..].to_vec();
        let loss_mask = (0..tokens.len()).map(|i| i >= q.len()).collect();
        Self {
            tokens,
            targets,
            loss_mask,
        }
    }

    pub fn answer_positions(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }
}

/// `<bos> question`: the prompt for decoding and activation capture.
pub fn prompt_tokens(tokenizer: &Tokenizer, question: &str) -> Vec<u32> {
    let mut out = Vec::with_capacity(16);
    out.push(BOS);
    out.extend(tokenizer.tokenize(question));
    out
}
