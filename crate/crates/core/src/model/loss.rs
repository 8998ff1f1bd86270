//! Row-wise softmax, cross-entropy and forward KL, with their logit gradients.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub fn log_softmax<T: Real>(row: &[T]) -> Vec<T> {
    let mut max = row[0];
    for &v in &row[1..] {
        max = max.max(v);
    }
    let mut sum = T::ZERO;
    for &v in row {
        sum += (v - max).exp();
    }
    let lse = max + sum.ln();
    row.iter().map(|&v| v - lse).collect()
}

pub fn softmax<T: Real>(row: &[T]) -> Vec<T> {
    log_softmax(row).into_iter().map(Real::exp).collect()
}

/// Mean negative log-likelihood over positions where `loss_mask` is set.
/// `logits` is `[targets.len(), vocab]` row-major.
pub fn loss_ce<T: Real>(logits: &[T], vocab: usize, targets: &[u32], loss_mask: &[bool]) -> Result<T> {
    if logits.len() != targets.len() * vocab || loss_mask.len() != targets.len() {
        return Err(Error::Structure(alloc::format!(
            "logits {} vs targets {} x vocab {vocab}, mask {}",
            logits.len(),
            targets.len(),
            loss_mask.len()
        )));
    }
    let mut total = T::ZERO;
    let mut count = 0usize;
    for (pos, (&t, &m)) in targets.iter().zip(loss_mask).enumerate() {
        if m {
            let ls = log_softmax(&logits[pos * vocab..(pos + 1) * vocab]);
            total -= ls[t as usize];
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("loss positions (all masked)"));
    }
    Ok(total / T::from_f64(count as f64))
}

/// `scale * (softmax(row) - onehot(target))`; also returns `-log p(target)`.
pub fn ce_logit_grad<T: Real>(row: &[T], target: u32, scale: T) -> (Vec<T>, T) {
    let ls = log_softmax(row);
    let nll = -ls[target as usize];
    let mut g: Vec<T> = ls.into_iter().map(|l| l.exp() * scale).collect();
    g[target as usize] -= scale;
    (g, nll)
}

/// `KL(softmax(base) || softmax(current))` for one position.
pub fn kl_rows<T: Real>(base: &[T], current: &[T]) -> T {
    let lb = log_softmax(base);
    let lc = log_softmax(current);
    let mut kl = T::ZERO;
    for (&b, &c) in lb.iter().zip(&lc) {
        let pb = b.exp();
        // Zero-probability base entries contribute nothing (0 log 0 = 0).
        if pb > T::ZERO {
            kl += pb * (b - c);
        }
    }
    kl
}

/// Gradient of `scale * KL(p_base || p_current)` with respect to the current
/// logits, `scale * (p_current - p_base)`; also returns the KL value.
pub fn kl_logit_grad<T: Real>(base: &[T], current: &[T], scale: T) -> (Vec<T>, T) {
    let lb = log_softmax(base);
    let lc = log_softmax(current);
    let mut kl = T::ZERO;
    let g = lb
        .iter()
        .zip(&lc)
        .map(|(&b, &c)| {
            let pb = b.exp();
            if pb > T::ZERO {
                kl += pb * (b - c);
            }
            (c.exp() - pb) * scale
        })
        .collect();
    (g, kl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn uniform_logits_give_ln_vocab() {
        let v = 7;
        let logits = vec![0.25f64; 3 * v];
        let loss = loss_ce(&logits, v, &[1, 2, 3], &[true, true, true]).unwrap();
        assert!((loss - libm::log(v as f64)).abs() < 1e-12);
    }

    #[test]
    fn confident_logits_approach_zero() {
        let mut logits = vec![0.0f64; 4];
        logits[2] = 60.0;
        let loss = loss_ce(&logits, 4, &[2], &[true]).unwrap();
        assert!(loss < 1e-20);
    }

    #[test]
    fn fully_masked_is_an_error() {
        let err = loss_ce(&[0.0f32; 8], 4, &[0, 1], &[false, false]).unwrap_err();
        assert!(matches!(err, Error::Empty(_)));
    }

    #[test]
    fn masked_positions_are_ignored() {
        let logits = [5.0f64, -1.0, 0.0, 0.0];
        let a = loss_ce(&logits, 2, &[1, 0], &[false, true]).unwrap();
        assert!((a - libm::log(2.0)).abs() < 1e-12);
    }
}
