use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Embedding,
    Weight,
    Norm,
    Bias,
}

impl ParamKind {
    /// Embeddings and weight matrices take part in sparsity masks; norm and bias
    /// vectors are always trainable.
    pub fn maskable(self) -> bool {
        matches!(self, ParamKind::Embedding | ParamKind::Weight)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    pub offset: usize,
    pub len: usize,
}

impl ParamSpec {
    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Offsets {
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub blocks: Vec<BlockOffsets>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub head_w: usize,
    pub head_b: usize,
}

/// Flat parameter layout: every tensor is a contiguous row-major slice of one
/// buffer, in a fixed name order determined by the config alone.
#[derive(Debug, Clone)]
pub struct Layout {
    pub config: ModelConfig,
    pub specs: Vec<ParamSpec>,
    pub total: usize,
    pub(crate) offsets: Offsets,
}

struct Builder {
    specs: Vec<ParamSpec>,
    total: usize,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, kind: ParamKind) -> usize {
        let len = shape.iter().product();
        let offset = self.total;
        self.specs.push(ParamSpec {
            name,
            shape,
            kind,
            offset,
            len,
        });
        self.total += len;
        offset
    }
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Self {
        let (d, f, v, c) = (
            config.d_model,
            config.d_ff,
            config.vocab_size,
            config.context_len,
        );
        let mut b = Builder {
            specs: Vec::new(),
            total: 0,
        };
        use ParamKind::*;
        let tok_emb = b.add("tok_emb".into(), vec![v, d], Embedding);
        let pos_emb = b.add("pos_emb".into(), vec![c, d], Embedding);
        let blocks = (0..config.n_layers)
            .map(|l| {
                let mut p = |suffix: &str, shape: Vec<usize>, kind| {
                    b.add(format!("blocks.{l}.{suffix}"), shape, kind)
                };
                BlockOffsets {
                    ln1_g: p("ln1.gain", vec![d], Norm),
                    ln1_b: p("ln1.bias", vec![d], Norm),
                    wq: p("attn.wq", vec![d, d], Weight),
                    bq: p("attn.bq", vec![d], Bias),
                    wk: p("attn.wk", vec![d, d], Weight),
                    bk: p("attn.bk", vec![d], Bias),
                    wv: p("attn.wv", vec![d, d], Weight),
                    bv: p("attn.bv", vec![d], Bias),
                    wo: p("attn.wo", vec![d, d], Weight),
                    bo: p("attn.bo", vec![d], Bias),
                    ln2_g: p("ln2.gain", vec![d], Norm),
                    ln2_b: p("ln2.bias", vec![d], Norm),
                    w1: p("mlp.w1", vec![d, f], Weight),
                    b1: p("mlp.b1", vec![f], Bias),
                    w2: p("mlp.w2", vec![f, d], Weight),
                    b2: p("mlp.b2", vec![d], Bias),
                }
            })
            .collect();
        let lnf_g = b.add("ln_f.gain".into(), vec![d], Norm);
        let lnf_b = b.add("ln_f.bias".into(), vec![d], Norm);
        let head_w = b.add("head.w".into(), vec![d, v], Weight);
        let head_b = b.add("head.b".into(), vec![v], Bias);
        Self {
            config: config.clone(),
            specs: b.specs,
            total: b.total,
            offsets: Offsets {
                tok_emb,
                pos_emb,
                blocks,
                lnf_g,
                lnf_b,
                head_w,
                head_b,
            },
        }
    }

    pub fn spec(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    /// Number of coordinates eligible for masking.
    pub fn maskable_count(&self) -> usize {
        self.specs
            .iter()
            .filter(|s| s.kind.maskable())
            .map(|s| s.len)
            .sum()
    }

    /// Name of the parameter tensor containing flat coordinate `index`.
    pub fn name_of(&self, index: usize) -> &str {
        self.specs
            .iter()
            .find(|s| s.range().contains(&index))
            .map_or("<out of range>", |s| s.name.as_str())
    }
}
