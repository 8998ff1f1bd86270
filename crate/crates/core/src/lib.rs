//! Sparse entity-aware fine-tuning (SEAT) on a tiny decoder-only language model.
//!
//! The crate is `no_std` (with `alloc`) and carries every algorithmic piece of the
//! laboratory: the synthetic knowledge corpus and its entity perturbation, the
//! transformer with hand-written gradients, binary parameter masks with the masked
//! SGD rule, the five fine-tuning variants, and the evaluation stack (ROUGE-1,
//! IDK score, activation PCA, separation). File formats and the command line live
//! in the `seat` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod sparsity;
pub mod trainer;

pub use corpus::{
    generate_corpus, perturb_entities, CorpusBundle, CorpusConfig, Entity, EntityType,
    PerturbedDataset, QaRecord, Relation, Tokenizer,
};
pub use error::{Error, Result};
pub use eval::{
    evaluate, fit_pca, idk_score, project, rouge1, sentence_embed, separation, EvalConfig,
    EvalReport, PcaBasis,
};
pub use model::{
    capture_activations, greedy_decode, ActivationSet, ModelCheckpoint, ModelConfig, Provenance,
};
pub use sparsity::{assert_frozen, build_mask, masked_update, MaskStrategy, SparseMask};
pub use trainer::{
    kl_term, pretrain_base, seat_step, train, EpochLosses, Method, PretrainSchedule, TrainConfig,
    TrainRunRecord,
};
