use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::layout::{Layout, ParamKind, ParamSpec};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// `init`, `pretrain`, or a fine-tuning method name.
    pub method: String,
    /// Fingerprint of the checkpoint this one was trained from.
    pub parent: Option<String>,
    /// Fingerprint of the tokenizer vocabulary the model was built for.
    pub vocab_hash: String,
    /// Seed of the run that produced the checkpoint (model seed for `init`).
    pub seed: u64,
}

/// Model hyperparameters plus one flat `f32` buffer laid out by [`Layout`].
#[derive(Debug, Clone)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    pub params: Vec<f32>,
    pub step: u64,
    pub provenance: Provenance,
    layout: Layout,
}

impl PartialEq for ModelCheckpoint {
    /// Bitwise parameter equality (so NaN payloads and signed zeros count).
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.step == other.step
            && self.provenance == other.provenance
            && self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

const INIT_STD: f64 = 0.02;

impl ModelCheckpoint {
    /// Normal(0, 0.02) weights and embeddings, unit norm gains, zero biases.
    pub fn init(config: &ModelConfig, vocab_hash: &str) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        let mut params = alloc::vec![0.0f32; layout.total];
        let mut rng = rng::stream(config.seed, "model/init");
        for spec in &layout.specs {
            let slot = &mut params[spec.range()];
            match spec.kind {
                ParamKind::Embedding | ParamKind::Weight => {
                    for v in slot {
                        *v = (rng::normal(&mut rng) * INIT_STD) as f32;
                    }
                }
                ParamKind::Norm if spec.name.ends_with("gain") => slot.fill(1.0),
                ParamKind::Norm | ParamKind::Bias => {}
            }
        }
        Ok(Self {
            config: config.clone(),
            params,
            step: 0,
            provenance: Provenance {
                method: "init".to_string(),
                parent: None,
                vocab_hash: vocab_hash.to_string(),
                seed: config.seed,
            },
            layout,
        })
    }

    /// Rebuilds a checkpoint from decoded parts, validating shapes and finiteness.
    pub fn from_parts(
        config: ModelConfig,
        tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
        step: u64,
        provenance: Provenance,
    ) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if tensors.len() != layout.specs.len() {
            return Err(Error::Structure(format!(
                "expected {} tensors, found {}",
                layout.specs.len(),
                tensors.len()
            )));
        }
        let mut params = Vec::with_capacity(layout.total);
        for (spec, (name, shape, data)) in layout.specs.iter().zip(tensors) {
            if spec.name != name || spec.shape != shape || data.len() != spec.len {
                return Err(Error::Structure(format!(
                    "tensor {name} {shape:?} does not match expected {} {:?}",
                    spec.name, spec.shape
                )));
            }
            params.extend_from_slice(&data);
        }
        let ckpt = Self {
            config,
            params,
            step,
            provenance,
            layout,
        };
        ckpt.check_finite()?;
        Ok(ckpt)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn tensor(&self, name: &str) -> Option<&[f32]> {
        self.layout.spec(name).map(|s| &self.params[s.range()])
    }

    /// `(spec, data)` pairs in layout order.
    pub fn tensors(&self) -> impl Iterator<Item = (&ParamSpec, &[f32])> {
        self.layout
            .specs
            .iter()
            .map(move |s| (s, &self.params[s.range()]))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.params.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite(format!(
                "parameter {} (flat index {i})",
                self.layout.name_of(i)
            ))),
        }
    }

    /// Parameters widened to `f64` for gradient-check replays.
    pub fn params_f64(&self) -> Vec<f64> {
        self.params.iter().map(|&v| f64::from(v)).collect()
    }

    /// Content hash over config, step, vocabulary and every parameter bit.
    /// Method, seed and parent are left out: equal weights hash equal.
    pub fn fingerprint(&self) -> String {
        let c = &self.config;
        let mut fp = Fingerprinter::new();
        for v in [c.n_layers, c.d_model, c.n_heads, c.d_ff, c.context_len, c.vocab_size] {
            fp.u64(v as u64);
        }
        fp.u64(c.seed).u64(self.step);
        fp.str(&self.provenance.vocab_hash);
        fp.f32s(&self.params);
        fp.finish()
    }

    /// Same parameters, different provenance.
    pub fn derive(&self, method: &str, seed: u64, params: Vec<f32>, step: u64) -> Self {
        Self {
            config: self.config.clone(),
            params,
            step,
            provenance: Provenance {
                method: method.to_string(),
                parent: Some(self.fingerprint()),
                vocab_hash: self.provenance.vocab_hash.clone(),
                seed,
            },
            layout: self.layout.clone(),
        }
    }
}
