//! Pronounceable nonsense names built from a fixed syllable table.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr",
];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];

const SYLLABLES: usize = ONSETS.len() * VOWELS.len();

/// Number of distinct names the generator can emit (two- and three-syllable forms).
pub const NAME_CAPACITY: usize = SYLLABLES * SYLLABLES + SYLLABLES * SYLLABLES * SYLLABLES;

fn syllable(i: usize) -> (&'static str, &'static str) {
    (ONSETS[i / VOWELS.len()], VOWELS[i % VOWELS.len()])
}

/// Renders name number `index` in `[0, NAME_CAPACITY)`, capitalized.
pub fn name_at(index: usize) -> String {
    debug_assert!(index < NAME_CAPACITY);
    let (count, mut rest) = if index < SYLLABLES * SYLLABLES {
        (2, index)
    } else {
        (3, index - SYLLABLES * SYLLABLES)
    };
    let mut parts = [0usize; 3];
    for slot in parts[..count].iter_mut().rev() {
        *slot = rest % SYLLABLES;
        rest /= SYLLABLES;
    }
    let mut out = String::new();
    for &p in &parts[..count] {
        let (on, vo) = syllable(p);
        out.push_str(on);
        out.push_str(vo);
    }
    if let Some(first) = out.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    out
}

/// Draws `count` distinct names, skipping any listed in `reserved`.
pub fn unique_names(
    rng: &mut SeededRng,
    count: usize,
    reserved: &BTreeSet<&str>,
) -> Result<Vec<String>> {
    if count > NAME_CAPACITY - reserved.len().min(NAME_CAPACITY) {
        return Err(Error::Capacity {
            what: "entity names",
            requested: count,
            capacity: NAME_CAPACITY - reserved.len().min(NAME_CAPACITY),
        });
    }
    let mut taken = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let idx = rng.gen_range(0..NAME_CAPACITY);
        if !taken.insert(idx) {
            continue;
        }
        let name = name_at(idx);
        if reserved.contains(name.as_str()) {
            continue;
        }
        out.push(name);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_distinct_per_index() {
        let a = name_at(0);
        let b = name_at(1);
        let c = name_at(NAME_CAPACITY - 1);
        assert_eq!(a, "Baba");
        assert_ne!(a, b);
        assert_eq!(c.len(), "Trai".len() * 3);
        assert!(c.chars().next().unwrap().is_ascii_uppercase());
    }

    #[test]
    fn over_capacity_is_rejected() {
        let mut rng = crate::rng::stream(1, "names");
        let err = unique_names(&mut rng, NAME_CAPACITY + 1, &BTreeSet::new()).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
    }
}
