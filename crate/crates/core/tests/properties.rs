//! Property tests: ROUGE bounds, softmax normalization, forward causality and
//! determinism, mask counts, magnitude ordering, PCA against nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use seat_core::eval::{fit_pca, project, rouge1};
use seat_core::model::{forward, softmax, ActivationSet, Layout, ModelCheckpoint, ModelConfig};
use seat_core::sparsity::trainable_quota;
use seat_core::{build_mask, masked_update, MaskStrategy, SparseMask};

fn tiny() -> ModelConfig {
    ModelConfig {
        n_layers: 2,
        d_model: 8,
        n_heads: 2,
        d_ff: 16,
        context_len: 12,
        vocab_size: 11,
        seed: 9,
    }
}

fn words() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..8).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rouge_is_bounded_and_reflexive(p in words(), r in words()) {
        prop_assume!(!r.is_empty());
        let s = rouge1(&p, &r).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(rouge1(&r, &r).unwrap(), 1.0);
        let longer = format!("{p} {r}");
        prop_assert_eq!(rouge1(&longer, &r).unwrap(), 1.0);
    }

    #[test]
    fn softmax_is_a_distribution(row in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let p = softmax(&row);
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn forward_is_causal(prefix in prop::collection::vec(0u32..11, 1..6), a in prop::collection::vec(0u32..11, 1..6), b in prop::collection::vec(0u32..11, 1..6)) {
        let ckpt = ModelCheckpoint::init(&tiny(), "v").unwrap();
        let layout = ckpt.layout();
        let p = ckpt.params_f64();
        let ta: Vec<u32> = prefix.iter().chain(&a).copied().collect();
        let tb: Vec<u32> = prefix.iter().chain(&b).copied().collect();
        let ca = forward(layout, &p, &ta).unwrap();
        let cb = forward(layout, &p, &tb).unwrap();
        for pos in 0..prefix.len() {
            prop_assert_eq!(ca.logits_row(pos, 11), cb.logits_row(pos, 11));
        }
        let again = forward(layout, &p, &ta).unwrap();
        prop_assert_eq!(&ca.logits, &again.logits);
    }

    #[test]
    fn random_mask_has_exact_count(ratio in 0.0f64..=1.0, seed in 0u64..1000) {
        let ckpt = ModelCheckpoint::init(&tiny(), "v").unwrap();
        let mask = build_mask(&ckpt, ratio, MaskStrategy::Random, seed).unwrap();
        let d = ckpt.layout().maskable_count();
        prop_assert_eq!(mask.trainable_maskable(), trainable_quota(ratio, d));
        let again = build_mask(&ckpt, ratio, MaskStrategy::Random, seed).unwrap();
        prop_assert_eq!(&mask.bits, &again.bits);
    }

    #[test]
    fn masked_update_never_writes_frozen(seed in 0u64..200, lr in 0.001f32..1.0) {
        let ckpt = ModelCheckpoint::init(&tiny(), "v").unwrap();
        let mask = build_mask(&ckpt, 0.9, MaskStrategy::Random, seed).unwrap();
        let mut params = ckpt.params.clone();
        let grads: Vec<f32> = (0..params.len()).map(|i| ((i * 7 + seed as usize) % 13) as f32 - 6.0).collect();
        masked_update(&mut params, &grads, &mask, lr).unwrap();
        for ((now, before), &trainable) in params.iter().zip(&ckpt.params).zip(&mask.bits) {
            if !trainable {
                prop_assert_eq!(now.to_bits(), before.to_bits());
            }
        }
    }
}

#[test]
fn magnitude_mask_keeps_the_largest_weights() {
    let ckpt = ModelCheckpoint::init(&tiny(), "v").unwrap();
    let mask = build_mask(&ckpt, 0.8, MaskStrategy::Magnitude, 0).unwrap();
    let layout = ckpt.layout();
    let maskable: Vec<usize> = layout.specs.iter().filter(|s| s.kind.maskable()).flat_map(|s| s.range()).collect();
    let kept = maskable.iter().filter(|&&i| mask.bits[i]).map(|&i| ckpt.params[i].abs());
    let dropped = maskable.iter().filter(|&&i| !mask.bits[i]).map(|&i| ckpt.params[i].abs());
    let min_kept = kept.fold(f32::INFINITY, f32::min);
    let max_dropped = dropped.fold(0.0f32, f32::max);
    assert!(min_kept >= max_dropped, "{min_kept} < {max_dropped}");
    assert_eq!(mask.trainable_maskable(), trainable_quota(0.8, maskable.len()));
}

#[test]
fn non_maskable_tensors_stay_trainable() {
    let ckpt = ModelCheckpoint::init(&tiny(), "v").unwrap();
    let mask = build_mask(&ckpt, 1.0, MaskStrategy::Random, 0).unwrap();
    assert_eq!(mask.trainable_maskable(), 0);
    for s in ckpt.layout().specs.iter().filter(|s| !s.kind.maskable()) {
        assert!(mask.bits[s.range()].iter().all(|&b| b), "{}", s.name);
    }
    let dense = SparseMask::dense(&Layout::new(&tiny()));
    assert!(dense.bits.iter().all(|&b| b));
}

#[test]
fn pca_agrees_with_nalgebra() {
    let rows: Vec<Vec<f64>> = (0..20)
        .map(|i| {
            let t = i as f64;
            vec![t.sin() * 3.0, t.cos(), (t * 0.3).sin() * 0.5 + t * 0.1, (t * 1.7).cos() * 0.2]
        })
        .collect();
    let acts = ActivationSet::from_rows(1, 4, &rows, "x");
    let basis = fit_pca(&acts, 3).unwrap();
    let n = rows.len();
    let mean: Vec<f64> = (0..4).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, 4, |i, j| rows[i][j] - mean[j]);
    let eig = SymmetricEigen::new(x.transpose() * &x / (n as f64 - 1.0));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    for (want, got) in vals.iter().zip(&basis.explained_variance) {
        assert!((want - got).abs() < 1e-9);
    }
    let proj = project(&basis, &acts).unwrap();
    let col0: Vec<f64> = (0..n).map(|i| proj.row(i)[0]).collect();
    let m = col0.iter().sum::<f64>() / n as f64;
    assert!(m.abs() < 1e-9);
    let var = col0.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    assert!((var - vals[0]).abs() < 1e-9);
}
