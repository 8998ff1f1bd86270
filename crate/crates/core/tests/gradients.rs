//! Analytic gradients against central finite differences, replayed in `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seat_core::model::{backward, ce_logit_grad, forward, Example, Layout, ModelConfig};
use seat_core::trainer::{kl_term, objective_gradient};

fn micro_config() -> ModelConfig {
    ModelConfig {
        n_layers: 1,
        d_model: 16,
        n_heads: 2,
        d_ff: 32,
        context_len: 8,
        vocab_size: 13,
        seed: 5,
    }
}

/// Random parameters with enough spread that every path carries signal.
fn random_params(layout: &Layout, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..layout.total).map(|_| rng.gen_range(-0.5..0.5)).collect()
}

struct Case {
    tokens: Vec<u32>,
    targets: Vec<u32>,
    mask: Vec<bool>,
}

fn ce_loss_and_grad(layout: &Layout, p: &[f64], case: &Case, grad: Option<&mut [f64]>) -> f64 {
    let v = layout.config.vocab_size;
    let cache = forward(layout, p, &case.tokens).unwrap();
    let n_active = case.mask.iter().filter(|&&m| m).count() as f64;
    let mut dlogits = vec![0.0; cache.len * v];
    let mut loss = 0.0;
    for pos in 0..cache.len {
        if case.mask[pos] {
            let (g, nll) = ce_logit_grad(cache.logits_row(pos, v), case.targets[pos], 1.0 / n_active);
            dlogits[pos * v..(pos + 1) * v].copy_from_slice(&g);
            loss += nll / n_active;
        }
    }
    if let Some(grad) = grad {
        backward(layout, p, &cache, &dlogits, grad);
    }
    loss
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn check_ce_fd(cfg: &ModelConfig, seed: u64) {
    let layout = Layout::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = random_params(&layout, &mut rng);
    let case = Case {
        tokens: vec![1, 4, 7, 7, 2, 9],
        targets: vec![4, 7, 7, 2, 9, 12],
        mask: vec![false, false, true, true, true, true],
    };
    let mut grad = vec![0.0; layout.total];
    ce_loss_and_grad(&layout, &params, &case, Some(&mut grad));

    let h = 1e-3;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for spec in &layout.specs {
        for _ in 0..12 {
            let i = spec.offset + rng.gen_range(0..spec.len);
            let mut p = params.clone();
            p[i] += h;
            let up = ce_loss_and_grad(&layout, &p, &case, None);
            p[i] -= 2.0 * h;
            let down = ce_loss_and_grad(&layout, &p, &case, None);
            let numeric = (up - down) / (2.0 * h);
            let e = rel_err(grad[i], numeric);
            if e > worst {
                worst = e;
                eprintln!("{} [{i}] analytic {} numeric {numeric} rel {e}", spec.name, grad[i]);
            }
            checked += 1;
        }
    }
    assert!(checked >= 200);
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn ce_gradient_matches_finite_differences() {
    check_ce_fd(&micro_config(), 11);
}

#[test]
fn two_layer_ce_gradient_matches_finite_differences() {
    let cfg = ModelConfig {
        n_layers: 2,
        ..micro_config()
    };
    check_ce_fd(&cfg, 12);
}

fn example(tokens: &[u32], answer_from: usize) -> Example {
    let targets: Vec<u32> = tokens[1..].iter().copied().chain([2]).collect();
    Example {
        tokens: tokens.to_vec(),
        loss_mask: (0..tokens.len()).map(|i| i + 1 >= answer_from).collect(),
        targets,
    }
}

/// Independent forward KL: explicit softmax probabilities, no log-sum-exp reuse.
fn kl_oracle(base: &[f64], cur: &[f64]) -> f64 {
    let soft = |r: &[f64]| {
        let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = r.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let (p, q) = (soft(base), soft(cur));
    p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum()
}

#[test]
fn kl_term_matches_explicit_divergence() {
    let cfg = micro_config();
    let layout = Layout::new(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let base = random_params(&layout, &mut rng);
    let cur: Vec<f64> = base.iter().map(|x| x + rng.gen_range(-0.2..0.2)).collect();
    let tokens = [1u32, 5, 3, 11, 8, 2];
    let b = forward(&layout, &base, &tokens).unwrap();
    let c = forward(&layout, &cur, &tokens).unwrap();
    let v = cfg.vocab_size;
    let positions = [2usize, 3, 5];
    let expected: f64 = positions
        .iter()
        .map(|&p| kl_oracle(b.logits_row(p, v), c.logits_row(p, v)))
        .sum::<f64>()
        / positions.len() as f64;
    let got = kl_term(&b.logits, &c.logits, v, &positions).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    assert!(got > 0.0);

    let same = kl_term(&b.logits, &b.logits, v, &positions).unwrap();
    assert!(same.abs() < 1e-12);
    assert!(kl_term(&b.logits, &c.logits, v, &[]).is_err());
}

/// Numerical value of `L_FT + alpha * L_KL` computed without the trainer.
fn seat_loss(layout: &Layout, p: &[f64], base: &[f64], ft: &[Example], kl: &[Example], alpha: f64) -> f64 {
    let v = layout.config.vocab_size;
    let n_ft: usize = ft.iter().map(Example::answer_positions).sum();
    let n_kl: usize = kl.iter().map(Example::answer_positions).sum();
    let mut l_ft = 0.0;
    for ex in ft {
        let c = forward(layout, p, &ex.tokens).unwrap();
        for pos in 0..c.len {
            if ex.loss_mask[pos] {
                let row = c.logits_row(pos, v);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
                l_ft += lse - row[ex.targets[pos] as usize];
            }
        }
    }
    let mut l_kl = 0.0;
    for ex in kl {
        let b = forward(layout, base, &ex.tokens).unwrap();
        let c = forward(layout, p, &ex.tokens).unwrap();
        for pos in 0..c.len {
            if ex.loss_mask[pos] {
                l_kl += kl_oracle(b.logits_row(pos, v), c.logits_row(pos, v));
            }
        }
    }
    l_ft / n_ft as f64 + alpha * l_kl / n_kl as f64
}

#[test]
fn seat_objective_gradient_matches_finite_differences() {
    let cfg = micro_config();
    let layout = Layout::new(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let base = random_params(&layout, &mut rng);
    let cur: Vec<f64> = base.iter().map(|x| x + rng.gen_range(-0.3..0.3)).collect();
    let ft = [example(&[1, 4, 6, 9, 10], 3), example(&[1, 7, 3, 12], 2)];
    let kl = [example(&[1, 5, 6, 8, 10], 3), example(&[1, 11, 3, 12], 2)];
    let alpha = 0.7;

    let (grad, l_ft, l_kl) = objective_gradient(&layout, &cur, &base, &ft, &kl, alpha).unwrap();
    let total = seat_loss(&layout, &cur, &base, &ft, &kl, alpha);
    assert!((l_ft + alpha * l_kl - total).abs() < 1e-10);

    let h = 1e-4;
    let mut worst = 0.0f64;
    for spec in &layout.specs {
        for _ in 0..8 {
            let i = spec.offset + rng.gen_range(0..spec.len);
            let mut p = cur.clone();
            p[i] += h;
            let up = seat_loss(&layout, &p, &base, &ft, &kl, alpha);
            p[i] -= 2.0 * h;
            let down = seat_loss(&layout, &p, &base, &ft, &kl, alpha);
            worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * h)));
        }
    }
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn kl_gradient_vanishes_at_the_base() {
    let cfg = micro_config();
    let layout = Layout::new(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let base = random_params(&layout, &mut rng);
    let kl = [example(&[1, 5, 6, 8, 10], 3)];
    let ft = [example(&[1, 4, 6, 9, 10], 3)];
    let (with_kl, _, l_kl) = objective_gradient(&layout, &base, &base, &ft, &kl, 2.0).unwrap();
    let (without, _, _) = objective_gradient(&layout, &base, &base, &ft, &[], 0.0).unwrap();
    assert!(l_kl.abs() < 1e-12);
    let diff = with_kl.iter().zip(&without).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-12, "{diff}");
}
