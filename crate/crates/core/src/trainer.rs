//! Base-model pretraining and the fine-tuning variants.
//!
//! Every variant minimizes `L_FT + alpha * L_KL` with plain masked SGD:
//!
//! | method           | mask   | KL inputs              |
//! |------------------|--------|------------------------|
//! | `full_ft`        | dense  | none                   |
//! | `sparse_ft`      | sparse | none                   |
//! | `seat`           | sparse | entity-perturbed batch |
//! | `full_kl_ep`     | dense  | entity-perturbed batch |
//! | `sparse_kl_noep` | sparse | the fine-tuning batch  |
//!
//! `L_KL` is the forward divergence `KL(p_base || p_current)` averaged over the
//! answer positions of the KL inputs; the base model stays frozen and its logits
//! are recomputed each step.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{perturb_entities, vocab_fingerprint_of, CorpusBundle, QaRecord, Tokenizer};
use crate::error::{Error, Result};
use crate::eval::{self, Executor, Sequential};
use crate::model::{
    backward, ce_logit_grad, forward, kl_logit_grad, kl_rows, Example, Layout, ModelCheckpoint,
    ModelConfig,
};
use crate::rng;
use crate::scalar::Real;
use crate::sparsity::{build_mask, masked_update, MaskStrategy, SparseMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FullFt,
    SparseFt,
    Seat,
    FullKlEp,
    SparseKlNoep,
}

/// Where the KL anchor's inputs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlSource {
    None,
    Perturbed,
    Original,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::FullFt,
        Method::SparseFt,
        Method::Seat,
        Method::FullKlEp,
        Method::SparseKlNoep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::FullFt => "full_ft",
            Method::SparseFt => "sparse_ft",
            Method::Seat => "seat",
            Method::FullKlEp => "full_kl_ep",
            Method::SparseKlNoep => "sparse_kl_noep",
        }
    }

    pub fn is_sparse(self) -> bool {
        matches!(self, Method::SparseFt | Method::Seat | Method::SparseKlNoep)
    }

    pub fn kl_source(self) -> KlSource {
        match self {
            Method::FullFt | Method::SparseFt => KlSource::None,
            Method::Seat | Method::FullKlEp => KlSource::Perturbed,
            Method::SparseKlNoep => KlSource::Original,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config {
                field: "method",
                constraint: format!("unknown method {s:?}"),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub alpha: f64,
    pub lr: f64,
    /// Fraction of maskable coordinates frozen; ignored by dense methods.
    pub frozen_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mask_strategy: MaskStrategy,
}

impl TrainConfig {
    /// Desk-scale defaults. Sparse variants update a tenth of the weights and get
    /// a larger step, mirroring the method-specific tuning of the reference setup.
    pub fn for_method(method: Method) -> Self {
        Self {
            method,
            alpha: 1.0,
            lr: 0.05,
            frozen_fraction: 0.9,
            epochs: 200,
            batch_size: 4,
            seed: 0,
            mask_strategy: MaskStrategy::Random,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config {
                field: "finetune.alpha",
                constraint: "must be finite and >= 0".to_string(),
            });
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config {
                field: "finetune.lr",
                constraint: "must be finite and > 0".to_string(),
            });
        }
        if !(0.0..=1.0).contains(&self.frozen_fraction) {
            return Err(Error::Config {
                field: "finetune.frozen_fraction",
                constraint: "must lie in [0, 1]".to_string(),
            });
        }
        if self.batch_size == 0 {
            return Err(Error::Config {
                field: "finetune.batch_size",
                constraint: "must be at least 1".to_string(),
            });
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_method(Method::Seat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub ft: f64,
    pub kl: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRunRecord {
    pub config: TrainConfig,
    pub corpus_hash: String,
    pub init_hash: String,
    pub epochs: Vec<EpochLosses>,
    pub final_hash: String,
    /// Trainable maskable coordinates (all of them for dense methods).
    pub trainable: usize,
}

/// Mean `KL(p_base || p_current)` over the selected rows of two `[len, vocab]`
/// logit matrices.
pub fn kl_term<T: Real>(
    base_logits: &[T],
    current_logits: &[T],
    vocab: usize,
    positions: &[usize],
) -> Result<T> {
    if base_logits.len() != current_logits.len() || !base_logits.len().is_multiple_of(vocab) {
        return Err(Error::Structure(format!(
            "logit shapes differ: {} vs {} (vocab {vocab})",
            base_logits.len(),
            current_logits.len()
        )));
    }
    if positions.is_empty() {
        return Err(Error::Empty("KL positions"));
    }
    let rows = base_logits.len() / vocab;
    let mut total = T::ZERO;
    for &p in positions {
        if p >= rows {
            return Err(Error::Structure(format!("position {p} beyond {rows} rows")));
        }
        let r = p * vocab..(p + 1) * vocab;
        total += kl_rows(&base_logits[r.clone()], &current_logits[r]);
    }
    Ok(total / T::from_f64(positions.len() as f64))
}

/// Value and gradient of `L_FT(ft) + alpha * L_KL(kl)` at `params`.
///
/// Both terms are token means over answer positions. The KL backward pass is
/// skipped when `alpha == 0`; its value is still reported.
pub fn objective_gradient<T: Real>(
    layout: &Layout,
    params: &[T],
    base_params: &[T],
    ft: &[Example],
    kl: &[Example],
    alpha: T,
) -> Result<(Vec<T>, T, T)> {
    let v = layout.config.vocab_size;
    let mut grad = vec![T::ZERO; layout.total];

    let ft_positions: usize = ft.iter().map(Example::answer_positions).sum();
    if ft_positions == 0 {
        return Err(Error::Empty("fine-tuning loss positions"));
    }
    let scale = T::ONE / T::from_f64(ft_positions as f64);
    let mut l_ft = T::ZERO;
    for ex in ft {
        let cache = forward(layout, params, &ex.tokens)?;
        let mut dlogits = vec![T::ZERO; cache.len * v];
        for pos in 0..cache.len {
            if ex.loss_mask[pos] {
                let (g, nll) = ce_logit_grad(cache.logits_row(pos, v), ex.targets[pos], scale);
                dlogits[pos * v..(pos + 1) * v].copy_from_slice(&g);
                l_ft += nll * scale;
            }
        }
        backward(layout, params, &cache, &dlogits, &mut grad);
    }

    let mut l_kl = T::ZERO;
    if !kl.is_empty() {
        let kl_positions: usize = kl.iter().map(Example::answer_positions).sum();
        if kl_positions == 0 {
            return Err(Error::Empty("KL positions"));
        }
        let inv = T::ONE / T::from_f64(kl_positions as f64);
        let skip_backward = alpha == T::ZERO;
        for ex in kl {
            let base = forward(layout, base_params, &ex.tokens)?;
            let cache = forward(layout, params, &ex.tokens)?;
            let mut dlogits = vec![T::ZERO; cache.len * v];
            for pos in 0..cache.len {
                if ex.loss_mask[pos] {
                    let (g, value) =
                        kl_logit_grad(base.logits_row(pos, v), cache.logits_row(pos, v), alpha * inv);
                    dlogits[pos * v..(pos + 1) * v].copy_from_slice(&g);
                    l_kl += value * inv;
                }
            }
            if !skip_backward {
                backward(layout, params, &cache, &dlogits, &mut grad);
            }
        }
    }
    if !(l_ft.is_finite() && l_kl.is_finite()) {
        return Err(Error::NonFinite(format!(
            "loss (L_FT = {:?}, L_KL = {:?})",
            l_ft, l_kl
        )));
    }
    Ok((grad, l_ft, l_kl))
}

/// One masked SGD step on `L_FT(ft_batch) + alpha * L_KL(kl_batch)`. The base
/// checkpoint is only read. Returns `(L_FT, L_KL)` before the update.
pub fn sgd_step(
    current: &mut ModelCheckpoint,
    base: &ModelCheckpoint,
    ft_batch: &[Example],
    kl_batch: &[Example],
    mask: &SparseMask,
    alpha: f64,
    lr: f64,
) -> Result<(f64, f64)> {
    if current.config != base.config {
        return Err(Error::Structure("current and base configs differ".to_string()));
    }
    mask.check_layout(current.layout())?;
    let (grad, l_ft, l_kl) = objective_gradient::<f32>(
        current.layout(),
        &current.params,
        &base.params,
        ft_batch,
        kl_batch,
        alpha as f32,
    )?;
    masked_update(&mut current.params, &grad, mask, lr as f32)?;
    current.step += 1;
    Ok((f64::from(l_ft), f64::from(l_kl)))
}

/// The SEAT update: `ft_batch` and its entity-perturbed counterpart `perturbed_batch`.
pub fn seat_step(
    current: &mut ModelCheckpoint,
    base: &ModelCheckpoint,
    ft_batch: &[Example],
    perturbed_batch: &[Example],
    mask: &SparseMask,
    alpha: f64,
    lr: f64,
) -> Result<(f64, f64)> {
    if perturbed_batch.len() != ft_batch.len() {
        return Err(Error::Structure(format!(
            "{} perturbed examples for {} fine-tuning examples",
            perturbed_batch.len(),
            ft_batch.len()
        )));
    }
    sgd_step(current, base, ft_batch, perturbed_batch, mask, alpha, lr)
}

fn examples(tokenizer: &Tokenizer, records: &[QaRecord]) -> Vec<Example> {
    records
        .iter()
        .map(|r| Example::from_qa(tokenizer, &r.question, &r.answer))
        .collect()
}

/// Per-epoch perturbation seed.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    let mut z = seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn check_compatible(corpus: &CorpusBundle, ckpt: &ModelCheckpoint) -> Result<()> {
    let vocab_hash = vocab_fingerprint_of(corpus);
    if ckpt.config.vocab_size != corpus.tokenizer.len() || ckpt.provenance.vocab_hash != vocab_hash {
        return Err(Error::Structure(format!(
            "checkpoint vocabulary {} does not match corpus vocabulary {vocab_hash}",
            ckpt.provenance.vocab_hash
        )));
    }
    Ok(())
}

/// Result of a fine-tuning run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub record: TrainRunRecord,
    /// The mask used, for sparse methods.
    pub mask: Option<SparseMask>,
}

/// Fine-tunes `base` on the corpus' fine-tuning set with `cfg.method`.
pub fn train(corpus: &CorpusBundle, base: &ModelCheckpoint, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_compatible(corpus, base)?;
    let method = cfg.method;
    let layout = base.layout();
    let mask = if method.is_sparse() {
        build_mask(base, cfg.frozen_fraction, cfg.mask_strategy, cfg.seed)?
    } else {
        SparseMask::dense(layout)
    };
    let trainable = mask.trainable_maskable();
    let init_hash = base.fingerprint();
    let tok = &corpus.tokenizer;
    let ft_examples = examples(tok, &corpus.finetune);

    if method.kl_source() == KlSource::Perturbed {
        // Surface pool problems before any work, even for zero epochs.
        perturb_entities(&corpus.finetune, &corpus.perturb_pool, cfg.seed)?;
    }

    let mut current = base.derive(method.as_str(), cfg.seed, base.params.clone(), 0);
    let mut order: Vec<usize> = (0..ft_examples.len()).collect();
    let mut order_rng = rng::stream(cfg.seed, "train/order");
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let kl_examples = match method.kl_source() {
            KlSource::None => Vec::new(),
            KlSource::Original => ft_examples.clone(),
            KlSource::Perturbed => {
                let p = perturb_entities(&corpus.finetune, &corpus.perturb_pool, epoch_seed(cfg.seed, epoch))?;
                examples(tok, &p.records)
            }
        };
        let (mut ft_sum, mut kl_sum, mut steps) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let ft_batch: Vec<Example> = chunk.iter().map(|&i| ft_examples[i].clone()).collect();
            let kl_batch: Vec<Example> = if kl_examples.is_empty() {
                Vec::new()
            } else {
                chunk.iter().map(|&i| kl_examples[i].clone()).collect()
            };
            let (l_ft, l_kl) = sgd_step(&mut current, base, &ft_batch, &kl_batch, &mask, cfg.alpha, cfg.lr)?;
            ft_sum += l_ft;
            kl_sum += l_kl;
            steps += 1;
        }
        let (ft, kl) = (ft_sum / steps as f64, kl_sum / steps as f64);
        epochs.push(EpochLosses {
            epoch,
            ft,
            kl,
            total: ft + cfg.alpha * kl,
        });
    }
    let checkpoint = if cfg.epochs == 0 { base.clone() } else { current };
    checkpoint.check_finite()?;
    Ok(TrainOutcome {
        record: TrainRunRecord {
            config: cfg.clone(),
            corpus_hash: corpus.fingerprint(),
            init_hash,
            epochs,
            final_hash: checkpoint.fingerprint(),
            trainable,
        },
        checkpoint,
        mask: method.is_sparse().then_some(mask),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSchedule {
    pub max_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Evaluate convergence every this many epochs and stop once reached.
    pub check_every: usize,
    pub min_factual_rouge: f64,
    pub min_idk: f64,
}

impl Default for PretrainSchedule {
    fn default() -> Self {
        Self {
            max_epochs: 300,
            lr: 0.05,
            batch_size: 4,
            seed: 0,
            check_every: 10,
            min_factual_rouge: 0.95,
            min_idk: 0.90,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub epochs: Vec<EpochLosses>,
    pub factual_rouge: f64,
    pub idk_unverifiable: f64,
    pub idk_unseen: f64,
    pub converged: bool,
}

impl PretrainReport {
    fn summary(&self) -> String {
        format!(
            "after {} epochs: factual ROUGE-1 {:.4}, IDK unverifiable {:.4}, IDK unseen {:.4}",
            self.epochs.len(),
            self.factual_rouge,
            self.idk_unverifiable,
            self.idk_unseen
        )
    }
}

/// Longest `<bos> question answer <eos>` input in the bundle.
pub fn longest_sequence(corpus: &CorpusBundle) -> usize {
    let tok = &corpus.tokenizer;
    let longest_refusal = corpus
        .idk_templates
        .iter()
        .map(|t| tok.tokenize(t).len())
        .max()
        .unwrap_or(0);
    let records = corpus
        .factual
        .iter()
        .chain(&corpus.alignment)
        .chain(&corpus.finetune)
        .chain(&corpus.unseen_eval);
    let mut longest = 0;
    for r in records {
        let q = tok.tokenize(&r.question).len();
        let a = tok.tokenize(&r.answer).len().max(longest_refusal);
        longest = longest.max(q + a + 1);
    }
    for q in &corpus.unverifiable {
        longest = longest.max(tok.tokenize(q).len() + longest_refusal + 1);
    }
    longest
}

/// Fills `vocab_size` from the corpus and checks the context fits every sequence.
pub fn resolve_model_config(corpus: &CorpusBundle, cfg: &ModelConfig) -> Result<ModelConfig> {
    let mut cfg = cfg.clone();
    let vocab = corpus.tokenizer.len();
    if cfg.vocab_size == 0 {
        cfg.vocab_size = vocab;
    } else if cfg.vocab_size != vocab {
        return Err(Error::Config {
            field: "model.vocab_size",
            constraint: format!("must equal the corpus vocabulary size {vocab} (or 0)"),
        });
    }
    let longest = longest_sequence(corpus);
    if cfg.context_len < longest {
        return Err(Error::Config {
            field: "model.context_len",
            constraint: format!("must be at least the longest sequence ({longest})"),
        });
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Metrics the base model must satisfy: factual recall and refusals on the
/// unseen and unverifiable sets.
pub fn base_metrics(
    ckpt: &ModelCheckpoint,
    corpus: &CorpusBundle,
    max_new: usize,
    exec: &dyn Executor,
) -> Result<(f64, f64, f64)> {
    let tok = &corpus.tokenizer;
    let (rouge, _) = eval::ft_score(ckpt, tok, &corpus.factual, max_new, exec)?;
    let unverifiable = eval::idk_details(
        ckpt,
        ckpt,
        tok,
        &corpus.unverifiable,
        &corpus.idk_templates,
        max_new,
        exec,
    )?
    .score;
    let unseen_q: Vec<String> = corpus.unseen_eval.iter().map(|r| r.question.clone()).collect();
    let unseen = eval::idk_details(ckpt, ckpt, tok, &unseen_q, &corpus.idk_templates, max_new, exec)?.score;
    Ok((rouge, unverifiable, unseen))
}

/// Trains the base model from scratch on factual answers and alignment refusals.
/// Zero epochs return the initialization unchanged.
pub fn pretrain_base(
    corpus: &CorpusBundle,
    model: &ModelConfig,
    schedule: &PretrainSchedule,
) -> Result<(ModelCheckpoint, PretrainReport)> {
    pretrain_base_with(corpus, model, schedule, &Sequential)
}

pub fn pretrain_base_with(
    corpus: &CorpusBundle,
    model: &ModelConfig,
    schedule: &PretrainSchedule,
    exec: &dyn Executor,
) -> Result<(ModelCheckpoint, PretrainReport)> {
    if corpus.factual.is_empty() {
        return Err(Error::Empty("factual set"));
    }
    if corpus.alignment.is_empty() {
        return Err(Error::Empty("alignment set"));
    }
    if schedule.lr.is_nan() || schedule.lr <= 0.0 || schedule.batch_size == 0 {
        return Err(Error::Config {
            field: "pretrain",
            constraint: "lr must be > 0 and batch_size >= 1".to_string(),
        });
    }
    let cfg = resolve_model_config(corpus, model)?;
    let init = ModelCheckpoint::init(&cfg, &vocab_fingerprint_of(corpus))?;
    if schedule.max_epochs == 0 {
        let report = PretrainReport {
            epochs: Vec::new(),
            factual_rouge: 0.0,
            idk_unverifiable: 0.0,
            idk_unseen: 0.0,
            converged: false,
        };
        return Ok((init, report));
    }

    let tok = &corpus.tokenizer;
    let mut data = examples(tok, &corpus.factual);
    data.extend(examples(tok, &corpus.alignment));
    let mut current = init.derive("pretrain", schedule.seed, init.params.clone(), 0);
    let mask = SparseMask::dense(current.layout());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut order_rng = rng::stream(schedule.seed, "pretrain/order");
    let mut report = PretrainReport {
        epochs: Vec::new(),
        factual_rouge: 0.0,
        idk_unverifiable: 0.0,
        idk_unseen: 0.0,
        converged: false,
    };
    let max_new = eval::EvalConfig::default().max_new;
    for epoch in 0..schedule.max_epochs {
        order.shuffle(&mut order_rng);
        let (mut sum, mut steps) = (0.0, 0usize);
        for chunk in order.chunks(schedule.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (l, _) = sgd_step(&mut current, &init, &batch, &[], &mask, 0.0, schedule.lr)?;
            sum += l;
            steps += 1;
        }
        let ft = sum / steps as f64;
        report.epochs.push(EpochLosses {
            epoch,
            ft,
            kl: 0.0,
            total: ft,
        });
        let last = epoch + 1 == schedule.max_epochs;
        let due = schedule.check_every > 0 && (epoch + 1) % schedule.check_every == 0;
        if due || last {
            let (rouge, unverifiable, unseen) = base_metrics(&current, corpus, max_new, exec)?;
            report.factual_rouge = rouge;
            report.idk_unverifiable = unverifiable;
            report.idk_unseen = unseen;
            report.converged = rouge >= schedule.min_factual_rouge
                && unverifiable >= schedule.min_idk
                && unseen >= schedule.min_idk;
            if report.converged {
                break;
            }
        }
    }
    current.check_finite()?;
    if !report.converged {
        return Err(Error::NonConvergence(report.summary()));
    }
    Ok((current, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, CorpusConfig};

    fn tiny_corpus() -> CorpusBundle {
        generate_corpus(&CorpusConfig {
            factual: 4,
            alignment: 6,
            alignment_concepts: 2,
            finetune: 5,
            unseen: 3,
            unverifiable: 3,
            pool: 6,
            seed: 11,
        })
        .unwrap()
    }

    fn tiny_base(corpus: &CorpusBundle) -> ModelCheckpoint {
        let cfg = ModelConfig {
            n_layers: 1,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            context_len: 32,
            vocab_size: 0,
            seed: 5,
        };
        let cfg = resolve_model_config(corpus, &cfg).unwrap();
        ModelCheckpoint::init(&cfg, &vocab_fingerprint_of(corpus)).unwrap()
    }

    fn quick(method: Method) -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 2,
            seed: 4,
            ..TrainConfig::for_method(method)
        }
    }

    #[test]
    fn kl_term_identity_and_one_hot_cases() {
        let logits = [0.3f64, -1.2, 2.0, 0.0, 0.5, 0.5];
        assert!(kl_term(&logits, &logits, 3, &[0, 1]).unwrap().abs() < 1e-7);
        let one_hot = [0.0f64, f64::NEG_INFINITY];
        let uniform = [0.0f64, 0.0];
        let v = kl_term(&one_hot, &uniform, 2, &[0]).unwrap();
        assert!((v - core::f64::consts::LN_2).abs() < 1e-12, "{v}");
        assert!(matches!(kl_term(&logits, &logits, 3, &[]), Err(Error::Empty(_))));
        assert!(kl_term(&logits, &logits[..3], 3, &[0]).is_err());
    }

    #[test]
    fn methods_parse_by_name() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("lora".parse::<Method>().is_err());
    }

    #[test]
    fn zero_epochs_return_the_base() {
        let corpus = tiny_corpus();
        let base = tiny_base(&corpus);
        for m in Method::ALL {
            let cfg = TrainConfig { epochs: 0, ..quick(m) };
            let out = train(&corpus, &base, &cfg).unwrap();
            assert_eq!(out.checkpoint, base);
            assert!(out.record.epochs.is_empty());
        }
    }

    #[test]
    fn reduction_lattice_at_zero_alpha() {
        let corpus = tiny_corpus();
        let base = tiny_base(&corpus);
        let pairs = [(Method::Seat, Method::SparseFt), (Method::FullKlEp, Method::FullFt)];
        for (with_kl, plain) in pairs {
            let a = train(&corpus, &base, &TrainConfig { alpha: 0.0, ..quick(with_kl) }).unwrap();
            let b = train(&corpus, &base, &quick(plain)).unwrap();
            assert_eq!(a.checkpoint.params, b.checkpoint.params, "{with_kl} vs {plain}");
            assert_eq!(a.record.final_hash, b.record.final_hash);
        }
    }

    #[test]
    fn training_is_deterministic_and_leaves_the_base_alone() {
        let corpus = tiny_corpus();
        let base = tiny_base(&corpus);
        let before = base.clone();
        let a = train(&corpus, &base, &quick(Method::Seat)).unwrap();
        let b = train(&corpus, &base, &quick(Method::Seat)).unwrap();
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(base, before);
        assert_ne!(a.checkpoint.params, base.params);
    }

    #[test]
    fn logged_totals_add_up() {
        let corpus = tiny_corpus();
        let base = tiny_base(&corpus);
        let cfg = TrainConfig { alpha: 0.7, ..quick(Method::FullKlEp) };
        let out = train(&corpus, &base, &cfg).unwrap();
        assert_eq!(out.record.epochs.len(), cfg.epochs);
        for e in &out.record.epochs {
            assert!((e.total - (e.ft + 0.7 * e.kl)).abs() < 1e-6);
            assert!(e.kl >= 0.0);
        }
    }

    #[test]
    fn sparse_runs_respect_their_mask() {
        let corpus = tiny_corpus();
        let base = tiny_base(&corpus);
        for m in [Method::SparseFt, Method::Seat, Method::SparseKlNoep] {
            let out = train(&corpus, &base, &quick(m)).unwrap();
            let mask = out.mask.unwrap();
            let report = crate::sparsity::assert_frozen(&base, &out.checkpoint, &mask).unwrap();
            assert!(report.is_clean(), "{m}: {:?}", report.violations.first());
        }
    }

    #[test]
    fn frozen_mask_step_reports_losses_without_moving() {
        let corpus = tiny_corpus();
        let base = tiny_base(&corpus);
        let mut current = base.clone();
        let mut mask = SparseMask::frozen(base.layout());
        mask.bits.iter_mut().for_each(|b| *b = false);
        let ex = examples(&corpus.tokenizer, &corpus.finetune[..2]);
        let p = perturb_entities(&corpus.finetune[..2], &corpus.perturb_pool, 1).unwrap();
        let px = examples(&corpus.tokenizer, &p.records);
        let (l_ft, l_kl) = seat_step(&mut current, &base, &ex, &px, &mask, 1.0, 0.1).unwrap();
        assert!(l_ft > 0.0);
        assert!(l_kl.abs() < 1e-6);
        assert_eq!(current.params, base.params);
        assert!(seat_step(&mut current, &base, &ex, &px[..1], &mask, 1.0, 0.1).is_err());
    }

    #[test]
    fn empty_pool_fails_only_for_perturbing_methods() {
        let mut corpus = tiny_corpus();
        corpus.perturb_pool.clear();
        let base = tiny_base(&corpus);
        assert!(matches!(
            train(&corpus, &base, &quick(Method::Seat)),
            Err(Error::Capacity { .. })
        ));
        assert!(train(&corpus, &base, &quick(Method::SparseKlNoep)).is_ok());
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let corpus = tiny_corpus();
        let base = tiny_base(&corpus);
        for cfg in [
            TrainConfig { alpha: -1.0, ..quick(Method::Seat) },
            TrainConfig { lr: 0.0, ..quick(Method::Seat) },
            TrainConfig { frozen_fraction: 1.5, ..quick(Method::Seat) },
            TrainConfig { batch_size: 0, ..quick(Method::Seat) },
        ] {
            assert!(matches!(train(&corpus, &base, &cfg), Err(Error::Config { .. })));
        }
    }

    #[test]
    fn zero_epoch_pretraining_is_the_initialization() {
        let corpus = tiny_corpus();
        let model = tiny_base(&corpus).config;
        let schedule = PretrainSchedule { max_epochs: 0, ..Default::default() };
        let (ckpt, _) = pretrain_base(&corpus, &model, &schedule).unwrap();
        assert_eq!(ckpt, ModelCheckpoint::init(&model, &vocab_fingerprint_of(&corpus)).unwrap());
    }

    #[test]
    fn unreachable_thresholds_are_non_convergence() {
        let corpus = tiny_corpus();
        let model = tiny_base(&corpus).config;
        let schedule = PretrainSchedule {
            max_epochs: 1,
            min_factual_rouge: 1.1,
            ..Default::default()
        };
        assert!(matches!(
            pretrain_base(&corpus, &model, &schedule),
            Err(Error::NonConvergence(_))
        ));
    }

    #[test]
    fn context_must_fit_the_corpus() {
        let corpus = tiny_corpus();
        let mut cfg = tiny_base(&corpus).config;
        cfg.context_len = 4;
        assert!(matches!(
            resolve_model_config(&corpus, &cfg),
            Err(Error::Config { field: "model.context_len", .. })
        ));
    }
}
