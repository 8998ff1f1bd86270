use alloc::collections::BTreeMap;

use crate::error::{Error, Result};

/// ROUGE-1 recall: clipped unigram overlap divided by the reference length.
pub fn rouge1(prediction: &str, reference: &str) -> Result<f64> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut ref_len = 0usize;
    for w in reference.split_whitespace() {
        *counts.entry(w).or_default() += 1;
        ref_len += 1;
    }
    if ref_len == 0 {
        return Err(Error::Empty("ROUGE-1 reference"));
    }
    let mut hits = 0usize;
    for w in prediction.split_whitespace() {
        if let Some(c) = counts.get_mut(w) {
            if *c > 0 {
                *c -= 1;
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / ref_len as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_disjoint() {
        assert_eq!(rouge1("a b c", "a b c").unwrap(), 1.0);
        assert_eq!(rouge1("x y", "a b c").unwrap(), 0.0);
    }

    #[test]
    fn hand_counted_overlap() {
        let r = rouge1("the cat ran", "the cat sat").unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn repeated_tokens_are_clipped() {
        assert_eq!(rouge1("the the the", "the cat").unwrap(), 0.5);
    }

    #[test]
    fn empty_reference_is_an_error() {
        assert!(rouge1("a", "  ").is_err());
        assert_eq!(rouge1("", "a").unwrap(), 0.0);
    }
}
