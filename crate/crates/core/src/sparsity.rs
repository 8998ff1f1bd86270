//! Binary parameter masks and the masked SGD update
//! `theta <- theta - lr * (mask . grad)`.
//!
//! Sparsity ratio means the fraction of maskable coordinates that are frozen:
//! `ratio = 0.9` trains `round(0.1 * d)` of the `d` maskable coordinates.
//! Norm gains/biases and bias vectors are outside `d` and always trainable.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Layout, ModelCheckpoint, ParamSpec};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    #[default]
    Random,
    Magnitude,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub maskable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMask {
    pub tensors: Vec<MaskTensor>,
    /// One flag per parameter coordinate, in layout order; `true` = trainable.
    pub bits: Vec<bool>,
    pub ratio: f64,
    pub strategy: MaskStrategy,
    pub seed: u64,
}

impl SparseMask {
    fn skeleton(layout: &Layout, ratio: f64, strategy: MaskStrategy, seed: u64) -> Self {
        Self {
            tensors: layout
                .specs
                .iter()
                .map(|s| MaskTensor {
                    name: s.name.clone(),
                    shape: s.shape.clone(),
                    maskable: s.kind.maskable(),
                })
                .collect(),
            bits: vec![true; layout.total],
            ratio,
            strategy,
            seed,
        }
    }

    /// All-trainable mask: the dense (full fine-tuning) limit.
    pub fn dense(layout: &Layout) -> Self {
        Self::skeleton(layout, 0.0, MaskStrategy::Random, 0)
    }

    /// All-frozen over maskable coordinates.
    pub fn frozen(layout: &Layout) -> Self {
        let mut m = Self::skeleton(layout, 1.0, MaskStrategy::Random, 0);
        for spec in layout.specs.iter().filter(|s| s.kind.maskable()) {
            m.bits[spec.range()].fill(false);
        }
        m
    }

    /// `(tensor, bits)` pairs mirroring the checkpoint's parameter shapes.
    pub fn entries(&self) -> impl Iterator<Item = (&MaskTensor, &[bool])> {
        let mut offset = 0;
        self.tensors.iter().map(move |t| {
            let len: usize = t.shape.iter().product();
            let slice = &self.bits[offset..offset + len];
            offset += len;
            (t, slice)
        })
    }

    pub fn maskable_count(&self) -> usize {
        self.entries()
            .filter(|(t, _)| t.maskable)
            .map(|(_, b)| b.len())
            .sum()
    }

    /// Trainable coordinates among the maskable ones.
    pub fn trainable_maskable(&self) -> usize {
        self.entries()
            .filter(|(t, _)| t.maskable)
            .map(|(_, b)| b.iter().filter(|&&x| x).count())
            .sum()
    }

    pub fn name_of(&self, index: usize) -> &str {
        let mut offset = 0;
        for t in &self.tensors {
            let len: usize = t.shape.iter().product();
            if index < offset + len {
                return &t.name;
            }
            offset += len;
        }
        "<out of range>"
    }

    /// Checks that names and shapes line up with `layout`.
    pub fn check_layout(&self, layout: &Layout) -> Result<()> {
        if self.tensors.len() != layout.specs.len() || self.bits.len() != layout.total {
            return Err(Error::Structure(format!(
                "mask has {} tensors / {} bits, model has {} / {}",
                self.tensors.len(),
                self.bits.len(),
                layout.specs.len(),
                layout.total
            )));
        }
        for (t, s) in self.tensors.iter().zip(&layout.specs) {
            if t.name != s.name || t.shape != s.shape {
                return Err(Error::Structure(format!(
                    "mask tensor {} {:?} vs parameter {} {:?}",
                    t.name, t.shape, s.name, s.shape
                )));
            }
        }
        Ok(())
    }
}

/// `round((1 - ratio) * d)`.
pub fn trainable_quota(ratio: f64, d: usize) -> usize {
    libm::round((1.0 - ratio) * d as f64) as usize
}

/// Splits `total` trainable slots across tensors proportionally to their size by
/// largest remainder (ties to the earlier tensor), so the sum is exact and every
/// tensor is within one slot of its proportional share.
fn apportion(sizes: &[usize], keep: f64, total: usize) -> Vec<usize> {
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * keep).collect();
    let mut quota: Vec<usize> = exact
        .iter()
        .zip(sizes)
        .map(|(&e, &s)| (libm::floor(e) as usize).min(s))
        .collect();
    let assigned: usize = quota.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - libm::floor(exact[a]);
        let fb = exact[b] - libm::floor(exact[b]);
        fb.partial_cmp(&fa).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });
    let mut remaining = total.saturating_sub(assigned);
    for &i in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if quota[i] < sizes[i] {
            quota[i] += 1;
            remaining -= 1;
        }
    }
    quota
}

pub fn build_mask(
    ckpt: &ModelCheckpoint,
    ratio: f64,
    strategy: MaskStrategy,
    seed: u64,
) -> Result<SparseMask> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Range {
            what: "sparsity ratio",
            value: ratio,
            expected: "[0, 1]",
        });
    }
    let layout = ckpt.layout();
    let maskable: Vec<&ParamSpec> = layout.specs.iter().filter(|s| s.kind.maskable()).collect();
    let d: usize = maskable.iter().map(|s| s.len).sum();
    let k = trainable_quota(ratio, d);

    let mut mask = SparseMask::skeleton(layout, ratio, strategy, seed);
    for spec in &maskable {
        mask.bits[spec.range()].fill(false);
    }
    match strategy {
        MaskStrategy::Random => {
            let sizes: Vec<usize> = maskable.iter().map(|s| s.len).collect();
            let quotas = apportion(&sizes, 1.0 - ratio, k);
            let mut rng = rng::stream(seed, "mask/random");
            for (spec, &q) in maskable.iter().zip(&quotas) {
                for i in index::sample(&mut rng, spec.len, q).into_iter() {
                    mask.bits[spec.offset + i] = true;
                }
            }
        }
        MaskStrategy::Magnitude => {
            let mut coords: Vec<(f32, usize)> = maskable
                .iter()
                .flat_map(|s| s.range())
                .map(|i| (libm::fabsf(ckpt.params[i]), i))
                .collect();
            coords.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(_, i) in coords.iter().take(k) {
                mask.bits[i] = true;
            }
        }
    }
    Ok(mask)
}

/// `theta_i -= lr * g_i` where the mask bit is set; frozen coordinates are never
/// written. Validates everything before touching `params`.
pub fn masked_update(params: &mut [f32], grads: &[f32], mask: &SparseMask, lr: f32) -> Result<()> {
    if params.len() != grads.len() || params.len() != mask.bits.len() {
        return Err(Error::Structure(format!(
            "params {}, grads {}, mask {}",
            params.len(),
            grads.len(),
            mask.bits.len()
        )));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Range {
            what: "learning rate",
            value: f64::from(lr),
            expected: "> 0",
        });
    }
    if let Some(i) = (0..grads.len()).find(|&i| mask.bits[i] && !grads[i].is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient of {} (flat index {i})",
            mask.name_of(i)
        )));
    }
    for ((p, &g), &m) in params.iter_mut().zip(grads).zip(&mask.bits) {
        if m {
            *p -= lr * g;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenViolation {
    pub name: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrozenReport {
    pub checked: usize,
    pub violations: Vec<FrozenViolation>,
}

impl FrozenReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every frozen coordinate whose bits differ between `before` and `after`.
pub fn assert_frozen(
    before: &ModelCheckpoint,
    after: &ModelCheckpoint,
    mask: &SparseMask,
) -> Result<FrozenReport> {
    if before.config != after.config || before.params.len() != after.params.len() {
        return Err(Error::Structure(String::from(
            "checkpoints have different parameter layouts",
        )));
    }
    mask.check_layout(before.layout())?;
    let mut report = FrozenReport::default();
    for (i, ((a, b), &m)) in before.params.iter().zip(&after.params).zip(&mask.bits).enumerate() {
        if !m {
            report.checked += 1;
            if a.to_bits() != b.to_bits() {
                report.violations.push(FrozenViolation {
                    name: String::from(mask.name_of(i)),
                    index: i,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    /// Smallest model: exactly ten maskable coordinates.
    fn unit_model() -> ModelCheckpoint {
        let cfg = ModelConfig {
            n_layers: 1,
            d_model: 1,
            n_heads: 1,
            d_ff: 1,
            context_len: 2,
            vocab_size: 1,
            seed: 3,
        };
        ModelCheckpoint::init(&cfg, "v").unwrap()
    }

    fn small_model() -> ModelCheckpoint {
        let cfg = ModelConfig {
            n_layers: 1,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            context_len: 6,
            vocab_size: 10,
            seed: 4,
        };
        ModelCheckpoint::init(&cfg, "v").unwrap()
    }

    #[test]
    fn ten_coordinates_at_ninety_percent_train_one() {
        let m = unit_model();
        assert_eq!(m.layout().maskable_count(), 10);
        for strategy in [MaskStrategy::Random, MaskStrategy::Magnitude] {
            let mask = build_mask(&m, 0.9, strategy, 1).unwrap();
            assert_eq!(mask.trainable_maskable(), 1);
        }
    }

    #[test]
    fn zero_ratio_is_dense() {
        let m = small_model();
        let mask = build_mask(&m, 0.0, MaskStrategy::Random, 9).unwrap();
        assert!(mask.bits.iter().all(|&b| b));
    }

    #[test]
    fn ratio_out_of_range_is_rejected() {
        let m = small_model();
        for r in [-0.1, 1.5, f64::NAN] {
            assert!(matches!(
                build_mask(&m, r, MaskStrategy::Random, 0),
                Err(Error::Range { .. })
            ));
        }
    }

    #[test]
    fn masks_are_deterministic() {
        let m = small_model();
        let a = build_mask(&m, 0.7, MaskStrategy::Random, 5).unwrap();
        let b = build_mask(&m, 0.7, MaskStrategy::Random, 5).unwrap();
        assert_eq!(a, b);
        let c = build_mask(&m, 0.7, MaskStrategy::Random, 6).unwrap();
        assert_ne!(a.bits, c.bits);
    }

    #[test]
    fn entries_mirror_parameter_shapes() {
        let m = small_model();
        let mask = build_mask(&m, 0.5, MaskStrategy::Random, 5).unwrap();
        for ((t, bits), (spec, data)) in mask.entries().zip(m.tensors()) {
            assert_eq!(t.name, spec.name);
            assert_eq!(t.shape, spec.shape);
            assert_eq!(bits.len(), data.len());
            if !t.maskable {
                assert!(bits.iter().all(|&b| b));
            }
        }
    }

    #[test]
    fn update_rule_examples() {
        let layout_free = SparseMask {
            tensors: alloc::vec![MaskTensor {
                name: "w".into(),
                shape: alloc::vec![2],
                maskable: true,
            }],
            bits: alloc::vec![true, false],
            ratio: 0.5,
            strategy: MaskStrategy::Random,
            seed: 0,
        };
        let mut theta = [1.0f32, 2.0];
        masked_update(&mut theta, &[0.5, 0.5], &layout_free, 0.1).unwrap();
        assert!((theta[0] - 0.95).abs() < 1e-7);
        assert_eq!(theta[1].to_bits(), 2.0f32.to_bits());
    }

    #[test]
    fn frozen_mask_leaves_params_bitwise_unchanged() {
        let m = small_model();
        let mask = SparseMask::frozen(m.layout());
        let mut p = m.params.clone();
        let g: Vec<f32> = (0..p.len()).map(|i| (i as f32).sin()).collect();
        masked_update(&mut p, &g, &mask, 0.3).unwrap();
        for spec in m.layout().specs.iter().filter(|s| s.kind.maskable()) {
            for i in spec.range() {
                assert_eq!(p[i].to_bits(), m.params[i].to_bits());
            }
        }
    }

    #[test]
    fn non_finite_trainable_gradient_names_the_parameter() {
        let m = small_model();
        let mask = SparseMask::dense(m.layout());
        let mut p = m.params.clone();
        let mut g = alloc::vec![0.0f32; p.len()];
        let i = m.layout().spec("head.w").unwrap().offset + 3;
        g[i] = f32::NAN;
        match masked_update(&mut p, &g, &mask, 0.1) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("head.w"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p, m.params);
    }

    #[test]
    fn frozen_report_catches_dense_updates() {
        let m = small_model();
        let mask = build_mask(&m, 0.9, MaskStrategy::Random, 2).unwrap();
        assert!(assert_frozen(&m, &m, &mask).unwrap().is_clean());

        let mut after = m.clone();
        let g = alloc::vec![0.25f32; after.params.len()];
        masked_update(&mut after.params, &g, &SparseMask::dense(m.layout()), 0.1).unwrap();
        let report = assert_frozen(&m, &after, &mask).unwrap();
        assert!(!report.is_clean());
        assert_eq!(report.violations.len(), report.checked);
    }

    #[test]
    fn magnitude_strategy_keeps_the_largest() {
        let m = small_model();
        let mask = build_mask(&m, 0.8, MaskStrategy::Magnitude, 0).unwrap();
        let mut min_kept = f32::INFINITY;
        let mut max_frozen = 0.0f32;
        for (spec, _) in m.tensors().filter(|(s, _)| s.kind.maskable()) {
            for i in spec.range() {
                let a = m.params[i].abs();
                if mask.bits[i] {
                    min_kept = min_kept.min(a);
                } else {
                    max_frozen = max_frozen.max(a);
                }
            }
        }
        assert!(min_kept >= max_frozen);
    }
}
