//! The lab configuration file: `{corpus, model, pretrain, finetune, eval}`.

use std::fs;
use std::path::Path;

use seat_core::corpus::CorpusConfig;
use seat_core::eval::EvalConfig;
use seat_core::model::ModelConfig;
use seat_core::sparsity::MaskStrategy;
use seat_core::trainer::{Method, PretrainSchedule, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Fine-tuning settings shared by every method. Dense and sparse methods get
/// separate step sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub alpha: f64,
    pub lr_dense: f64,
    pub lr_sparse: f64,
    pub frozen_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mask_strategy: MaskStrategy,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        let dense = TrainConfig::for_method(Method::FullFt);
        let sparse = TrainConfig::for_method(Method::Seat);
        Self {
            alpha: sparse.alpha,
            lr_dense: dense.lr,
            lr_sparse: sparse.lr,
            frozen_fraction: sparse.frozen_fraction,
            epochs: sparse.epochs,
            batch_size: sparse.batch_size,
            seed: sparse.seed,
            mask_strategy: sparse.mask_strategy,
        }
    }
}

impl FinetuneConfig {
    pub fn for_method(&self, method: Method) -> TrainConfig {
        TrainConfig {
            method,
            alpha: self.alpha,
            lr: if method.is_sparse() { self.lr_sparse } else { self.lr_dense },
            frozen_fraction: self.frozen_fraction,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            mask_strategy: self.mask_strategy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabConfig {
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub pretrain: PretrainSchedule,
    pub finetune: FinetuneConfig,
    pub eval: EvalConfig,
}

fn invalid(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

impl LabConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: LabConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            invalid(origin, format!("field `{field}`: {}", e.into_inner()))
        })?;
        cfg.validate().map_err(|e| invalid(origin, e.to_string()))?;
        Ok(cfg)
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }

    pub fn validate(&self) -> seat_core::Result<()> {
        self.corpus.validate()?;
        if self.model.vocab_size != 0 {
            self.model.validate()?;
        }
        for m in Method::ALL {
            self.finetune.for_method(m).validate()?;
        }
        let p = &self.pretrain;
        if !(p.lr > 0.0 && p.lr.is_finite()) || p.batch_size == 0 {
            return Err(seat_core::Error::Config {
                field: "pretrain",
                constraint: "lr must be finite and > 0, batch_size >= 1".to_string(),
            });
        }
        if self.eval.components == 0 {
            return Err(seat_core::Error::Config {
                field: "eval.components",
                constraint: "must be at least 1".to_string(),
            });
        }
        Ok(())
    }

    /// Canonical JSON, the input to the config hash.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        seat_core::fingerprint::sha256_hex(self.canonical().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        assert_eq!(LabConfig::parse("{}", "t").unwrap(), LabConfig::default());
    }

    #[test]
    fn unknown_key_is_rejected_with_its_path() {
        let err = LabConfig::parse(r#"{"finetune": {"alpah": 1.0}}"#, "t").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("finetune"), "{msg}");
        assert!(msg.contains("alpah"), "{msg}");
    }

    #[test]
    fn negative_size_names_the_field() {
        let err = LabConfig::parse(r#"{"corpus": {"factual": -5}}"#, "t").unwrap_err();
        assert!(err.to_string().contains("corpus.factual"), "{err}");
        assert_eq!(err.exit_code(), crate::error::exit::VALIDATION);
    }

    #[test]
    fn zero_size_names_the_field() {
        let err = LabConfig::parse(r#"{"corpus": {"finetune": 0}}"#, "t").unwrap_err();
        assert!(err.to_string().contains("finetune"), "{err}");
    }

    #[test]
    fn negative_alpha_is_rejected() {
        let err = LabConfig::parse(r#"{"finetune": {"alpha": -1}}"#, "t").unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }
}
