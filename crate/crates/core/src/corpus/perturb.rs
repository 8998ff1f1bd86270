//! Entity perturbation: swap each record's subject for a fictitious entity of the
//! same type, leaving relation and object untouched.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Entity, EntityType, QaRecord};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbedDataset {
    pub records: Vec<QaRecord>,
    /// `origin_index[i]` is the position in the source dataset of `records[i]`.
    pub origin_index: Vec<usize>,
}

/// Replaces the subject's token span in `question` with `replacement`.
fn replace_subject(question: &str, subject: &str, replacement: &str) -> String {
    let tokens: Vec<&str> = question.split_whitespace().collect();
    let span: Vec<&str> = subject.split_whitespace().collect();
    let start = tokens
        .windows(span.len())
        .position(|w| w == span.as_slice())
        .expect("question contains its subject");
    let mut out: Vec<&str> = Vec::with_capacity(tokens.len());
    out.extend_from_slice(&tokens[..start]);
    out.extend(replacement.split_whitespace());
    out.extend_from_slice(&tokens[start + span.len()..]);
    out.join(" ")
}

pub fn perturb_entities(ds: &[QaRecord], pool: &[Entity], seed: u64) -> Result<PerturbedDataset> {
    if pool.is_empty() && !ds.is_empty() {
        return Err(Error::Capacity {
            what: "perturbation entities",
            requested: ds.len(),
            capacity: 0,
        });
    }
    let mut by_type: BTreeMap<EntityType, Vec<&Entity>> = BTreeMap::new();
    for e in pool {
        by_type.entry(e.etype).or_default().push(e);
    }
    for r in ds {
        if !by_type.contains_key(&r.subject.etype) {
            return Err(Error::TypeCoverage(r.subject.etype.as_str()));
        }
    }

    let mut rng = rng::stream(seed, "perturb");
    let records = ds
        .iter()
        .map(|r| {
            let candidates = &by_type[&r.subject.etype];
            let replacement = (*candidates.choose(&mut rng).unwrap()).clone();
            QaRecord {
                question: replace_subject(&r.question, &r.subject.name, &replacement.name),
                subject: replacement,
                relation: r.relation,
                object: r.object.clone(),
                answer: r.answer.clone(),
            }
        })
        .collect();
    Ok(PerturbedDataset {
        records,
        origin_index: (0..ds.len()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, CorpusConfig, Relation};
    use alloc::string::ToString;
    use alloc::vec;

    fn acme() -> QaRecord {
        QaRecord {
            subject: Entity {
                name: "Acme Corp".to_string(),
                etype: EntityType::Company,
            },
            relation: Relation::CeoOf,
            object: "John Roe".to_string(),
            question: "who is the ceo of Acme Corp ?".to_string(),
            answer: "John Roe".to_string(),
        }
    }

    #[test]
    fn substitutes_only_the_subject() {
        let pool = vec![Entity {
            name: "Zorvex Ltd".to_string(),
            etype: EntityType::Company,
        }];
        let out = perturb_entities(&[acme()], &pool, 0).unwrap();
        let r = &out.records[0];
        assert_eq!(r.subject.name, "Zorvex Ltd");
        assert_eq!(r.relation, Relation::CeoOf);
        assert_eq!(r.object, "John Roe");
        assert_eq!(r.answer, "John Roe");
        assert_eq!(r.question, "who is the ceo of Zorvex Ltd ?");
        assert_eq!(out.origin_index, vec![0]);
    }

    #[test]
    fn mismatched_type_is_a_coverage_error() {
        let pool = vec![Entity {
            name: "Zorvani".to_string(),
            etype: EntityType::Person,
        }];
        let err = perturb_entities(&[acme()], &pool, 0).unwrap_err();
        assert_eq!(err, Error::TypeCoverage("company"));
    }

    #[test]
    fn empty_pool_is_a_capacity_error() {
        let err = perturb_entities(&[acme()], &[], 0).unwrap_err();
        assert!(matches!(err, Error::Capacity { capacity: 0, .. }));
    }

    #[test]
    fn deterministic_and_local() {
        let b = generate_corpus(&CorpusConfig::default()).unwrap();
        let p1 = perturb_entities(&b.finetune, &b.perturb_pool, 3).unwrap();
        let p2 = perturb_entities(&b.finetune, &b.perturb_pool, 3).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1.records.len(), b.finetune.len());

        let banned: alloc::collections::BTreeSet<&str> = b
            .factual
            .iter()
            .chain(&b.alignment)
            .chain(&b.finetune)
            .chain(&b.unseen_eval)
            .map(|r| r.subject.name.as_str())
            .collect();
        for (r, &o) in p1.records.iter().zip(&p1.origin_index) {
            let origin = &b.finetune[o];
            assert_eq!(r.subject.etype, origin.subject.etype);
            assert_ne!(r.subject, origin.subject);
            assert!(!banned.contains(r.subject.name.as_str()));

            let a: Vec<&str> = origin.question.split_whitespace().collect();
            let p: Vec<&str> = r.question.split_whitespace().collect();
            assert_eq!(a.len(), p.len());
            let span: Vec<&str> = origin.subject.name.split_whitespace().collect();
            let start = a.windows(span.len()).position(|w| w == span.as_slice()).unwrap();
            for (i, (x, y)) in a.iter().zip(&p).enumerate() {
                if x != y {
                    assert!((start..start + span.len()).contains(&i));
                }
            }
        }
    }
}
