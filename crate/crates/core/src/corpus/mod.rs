//! Deterministic synthetic knowledge corpus.
//!
//! Every subject is a fictitious entity with a nonsense name, so the only source of
//! "knowledge" the model can ever have is this bundle. The factual and alignment
//! sets pretrain the base model (answers vs. refusals), the fine-tuning set is the
//! new knowledge to learn, and the unseen/unverifiable sets probe whether refusals
//! survive fine-tuning.

mod names;
mod perturb;
pub mod templates;
pub mod tokenizer;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use names::NAME_CAPACITY;
pub use perturb::{perturb_entities, PerturbedDataset};
pub use templates::{Relation, IDK_TEMPLATES, KNOWLEDGE_RELATIONS, PROBE_RELATIONS};
pub use tokenizer::Tokenizer;

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;
use crate::rng;
use templates::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    Person,
    Company,
    Place,
    Concept,
}

impl EntityType {
    pub const KNOWLEDGE: [EntityType; 3] =
        [EntityType::Person, EntityType::Company, EntityType::Place];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Person => "person",
            EntityType::Company => "company",
            EntityType::Place => "place",
            EntityType::Concept => "concept",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub etype: EntityType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub subject: Entity,
    pub relation: Relation,
    pub object: String,
    pub question: String,
    pub answer: String,
}

/// Sizes of each generated dataset plus the seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    /// Known entities whose answers the base model learns.
    pub factual: usize,
    /// Entities asked about with knowledge relations, answered by refusals.
    pub alignment: usize,
    /// Concept entities asked about with the probe templates, answered by refusals.
    pub alignment_concepts: usize,
    pub finetune: usize,
    pub unseen: usize,
    pub unverifiable: usize,
    pub pool: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            factual: 50,
            alignment: 120,
            alignment_concepts: 40,
            finetune: 20,
            unseen: 20,
            unverifiable: 30,
            pool: 60,
            seed: 7,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let required = [
            ("corpus.factual", self.factual),
            ("corpus.finetune", self.finetune),
            ("corpus.unseen", self.unseen),
            ("corpus.unverifiable", self.unverifiable),
        ];
        for (field, value) in required {
            if value == 0 {
                return Err(Error::Config {
                    field,
                    constraint: "must be at least 1".to_string(),
                });
            }
        }
        if self.alignment + self.alignment_concepts == 0 {
            return Err(Error::Config {
                field: "corpus.alignment",
                constraint: "alignment and alignment_concepts cannot both be 0".to_string(),
            });
        }
        Ok(())
    }

    fn entity_count(&self) -> usize {
        self.factual + self.alignment + self.alignment_concepts + self.finetune + self.unseen + self.pool
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusBundle {
    pub config: CorpusConfig,
    pub factual: Vec<QaRecord>,
    pub alignment: Vec<QaRecord>,
    pub finetune: Vec<QaRecord>,
    pub unseen_eval: Vec<QaRecord>,
    pub unverifiable: Vec<String>,
    pub perturb_pool: Vec<Entity>,
    pub idk_templates: Vec<String>,
    pub tokenizer: Tokenizer,
    pub seed: u64,
}

/// Renders `relation`'s question for `subject`; `modifier` fills probe templates.
pub fn render_question(relation: Relation, subject: &str, modifier: &str) -> String {
    relation
        .template()
        .replace("{m}", modifier)
        .replace("{s}", subject)
}

fn entity_name(core: &str, etype: EntityType, rng: &mut rng::SeededRng) -> String {
    match etype {
        EntityType::Company => format!("{core} {}", COMPANY_MARKERS.choose(rng).unwrap()),
        EntityType::Place => format!("{core} {}", PLACE_MARKERS.choose(rng).unwrap()),
        EntityType::Person | EntityType::Concept => core.to_string(),
    }
}

fn sample_object(relation: Relation, rng: &mut rng::SeededRng) -> String {
    match relation {
        Relation::CeoOf => format!(
            "{} {}",
            FIRST_NAMES.choose(rng).unwrap(),
            LAST_NAMES.choose(rng).unwrap()
        ),
        Relation::FoundedIn | Relation::BornIn => rng.gen_range(YEAR_RANGE).to_string(),
        Relation::LocatedIn => format!(
            "the {} {}",
            DIRECTIONS.choose(rng).unwrap(),
            LANDFORMS.choose(rng).unwrap()
        ),
        Relation::Wrote => format!(
            "the {} {}",
            TITLE_ADJECTIVES.choose(rng).unwrap(),
            TITLE_NOUNS.choose(rng).unwrap()
        ),
        Relation::PartneredWith | Relation::Acquired => format!(
            "{} {}",
            PARTNER_STEMS.choose(rng).unwrap(),
            PARTNER_SUFFIXES.choose(rng).unwrap()
        ),
        Relation::SpecializesIn => FIELDS.choose(rng).unwrap().to_string(),
        // Probes have no true object; refusals are attached by the caller.
        _ => String::new(),
    }
}

fn nonsense_word(rng: &mut rng::SeededRng) -> String {
    let len = rng.gen_range(7..=10);
    (0..len)
        .map(|_| *NONSENSE_ALPHABET.choose(rng).unwrap() as char)
        .collect()
}

/// Every word the fixed inventories can emit, independent of the seed.
fn lexicon_words() -> BTreeSet<String> {
    let mut words = BTreeSet::new();
    let mut add = |text: &str| {
        for w in text.split_whitespace() {
            if w != "{s}" && w != "{m}" {
                words.insert(w.to_string());
            }
        }
    };
    for r in KNOWLEDGE_RELATIONS.into_iter().chain(PROBE_RELATIONS) {
        add(r.template());
    }
    for list in [
        &FIRST_NAMES[..],
        &LAST_NAMES,
        &DIRECTIONS,
        &LANDFORMS,
        &TITLE_ADJECTIVES,
        &TITLE_NOUNS,
        &PARTNER_STEMS,
        &PARTNER_SUFFIXES,
        &FIELDS,
        &PROBE_MODIFIERS,
        &COMPANY_MARKERS,
        &PLACE_MARKERS,
        &IDK_TEMPLATES,
    ] {
        for item in list {
            add(item);
        }
    }
    for year in YEAR_RANGE {
        words.insert(year.to_string());
    }
    words.insert("the".to_string());
    words
}

struct RecordFactory<'a> {
    rng: &'a mut rng::SeededRng,
}

impl RecordFactory<'_> {
    fn knowledge(&mut self, core: &str, etype: EntityType) -> QaRecord {
        let relations: Vec<Relation> = Relation::for_type(etype).filter(|r| !r.is_probe()).collect();
        let relation = *relations.choose(self.rng).unwrap();
        let name = entity_name(core, etype, self.rng);
        let object = sample_object(relation, self.rng);
        QaRecord {
            question: render_question(relation, &name, ""),
            answer: object.clone(),
            subject: Entity { name, etype },
            relation,
            object,
        }
    }

    fn refusal(&mut self, mut record: QaRecord) -> QaRecord {
        record.answer = IDK_TEMPLATES.choose(self.rng).unwrap().to_string();
        record
    }

    fn concept(&mut self, core: &str) -> QaRecord {
        let relation = *PROBE_RELATIONS.choose(self.rng).unwrap();
        let modifier = PROBE_MODIFIERS.choose(self.rng).unwrap();
        let question = render_question(relation, core, modifier);
        self.refusal(QaRecord {
            subject: Entity {
                name: core.to_string(),
                etype: EntityType::Concept,
            },
            relation,
            object: String::new(),
            question,
            answer: String::new(),
        })
    }
}

/// Generates the full bundle. Pure function of `config`.
pub fn generate_corpus(config: &CorpusConfig) -> Result<CorpusBundle> {
    config.validate()?;
    let lexicon = lexicon_words();
    let reserved: BTreeSet<&str> = lexicon.iter().map(String::as_str).collect();

    let mut name_rng = rng::stream(config.seed, "corpus/names");
    let mut cores = names::unique_names(&mut name_rng, config.entity_count(), &reserved)?
        .into_iter();
    let mut take = |n: usize| cores.by_ref().take(n).collect::<Vec<_>>();
    let factual_names = take(config.factual);
    let alignment_names = take(config.alignment);
    let concept_names = take(config.alignment_concepts);
    let finetune_names = take(config.finetune);
    let unseen_names = take(config.unseen);
    let pool_names = take(config.pool);

    let mut rec_rng = rng::stream(config.seed, "corpus/records");
    let mut factory = RecordFactory { rng: &mut rec_rng };
    let cycle = |i: usize| EntityType::KNOWLEDGE[i % EntityType::KNOWLEDGE.len()];

    let knowledge = |names: &[String], factory: &mut RecordFactory| {
        names
            .iter()
            .enumerate()
            .map(|(i, n)| factory.knowledge(n, cycle(i)))
            .collect::<Vec<_>>()
    };
    let factual = knowledge(&factual_names, &mut factory);
    let mut alignment: Vec<QaRecord> = knowledge(&alignment_names, &mut factory)
        .into_iter()
        .map(|r| factory.refusal(r))
        .collect();
    alignment.extend(concept_names.iter().map(|n| factory.concept(n)));
    alignment.shuffle(factory.rng);
    let finetune = knowledge(&finetune_names, &mut factory);
    let unseen_eval = knowledge(&unseen_names, &mut factory);

    let perturb_pool: Vec<Entity> = pool_names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let etype = cycle(i);
            Entity {
                name: entity_name(n, etype, factory.rng),
                etype,
            }
        })
        .collect();

    let mut nonsense_rng = rng::stream(config.seed, "corpus/unverifiable");
    let unverifiable = (0..config.unverifiable)
        .map(|_| {
            let relation = *PROBE_RELATIONS.choose(&mut nonsense_rng).unwrap();
            let modifier = PROBE_MODIFIERS.choose(&mut nonsense_rng).unwrap();
            let mut word = nonsense_word(&mut nonsense_rng);
            while lexicon.contains(&word) {
                word = nonsense_word(&mut nonsense_rng);
            }
            render_question(relation, &word, modifier)
        })
        .collect();

    let entity_words = factual
        .iter()
        .chain(&alignment)
        .chain(&finetune)
        .chain(&unseen_eval)
        .map(|r| &r.subject)
        .chain(&perturb_pool)
        .flat_map(|e| e.name.split_whitespace());
    let tokenizer = Tokenizer::from_words(lexicon.iter().map(String::as_str).chain(entity_words));

    Ok(CorpusBundle {
        config: config.clone(),
        factual,
        alignment,
        finetune,
        unseen_eval,
        unverifiable,
        perturb_pool,
        idk_templates: IDK_TEMPLATES.iter().map(|s| s.to_string()).collect(),
        tokenizer,
        seed: config.seed,
    })
}

impl CorpusBundle {
    /// Entity-bearing datasets by name, in a fixed order.
    pub fn entity_sets(&self) -> [(&'static str, BTreeSet<&Entity>); 5] {
        fn set(rs: &[QaRecord]) -> BTreeSet<&Entity> {
            rs.iter().map(|r| &r.subject).collect()
        }
        [
            ("factual", set(&self.factual)),
            ("alignment", set(&self.alignment)),
            ("finetune", set(&self.finetune)),
            ("unseen_eval", set(&self.unseen_eval)),
            ("perturb_pool", self.perturb_pool.iter().collect()),
        ]
    }

    pub fn records(&self, name: &str) -> Result<&[QaRecord]> {
        match name {
            "factual" => Ok(&self.factual),
            "alignment" => Ok(&self.alignment),
            "finetune" => Ok(&self.finetune),
            "unseen_eval" | "unseen" => Ok(&self.unseen_eval),
            other => Err(Error::MissingDataset(other.to_string())),
        }
    }

    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprinter::new();
        let config = &self.config;
        for v in [
            config.factual,
            config.alignment,
            config.alignment_concepts,
            config.finetune,
            config.unseen,
            config.unverifiable,
            config.pool,
        ] {
            fp.u64(v as u64);
        }
        fp.u64(self.seed);
        for (tag, records) in [
            ("factual", &self.factual),
            ("alignment", &self.alignment),
            ("finetune", &self.finetune),
            ("unseen_eval", &self.unseen_eval),
        ] {
            fp.str(tag).u64(records.len() as u64);
            for r in records {
                fp.str(&r.subject.name)
                    .str(r.subject.etype.as_str())
                    .str(r.relation.id())
                    .str(&r.object)
                    .str(&r.question)
                    .str(&r.answer);
            }
        }
        fp.str("unverifiable").u64(self.unverifiable.len() as u64);
        for q in &self.unverifiable {
            fp.str(q);
        }
        fp.str("perturb_pool").u64(self.perturb_pool.len() as u64);
        for e in &self.perturb_pool {
            fp.str(&e.name).str(e.etype.as_str());
        }
        fp.str("idk").u64(self.idk_templates.len() as u64);
        for t in &self.idk_templates {
            fp.str(t);
        }
        fp.str(&self.vocab_fingerprint());
        fp.finish()
    }

    pub fn vocab_fingerprint(&self) -> String {
        vocab_fingerprint(&self.tokenizer)
    }
}

pub fn vocab_fingerprint_of(corpus: &CorpusBundle) -> String {
    vocab_fingerprint(&corpus.tokenizer)
}

pub fn vocab_fingerprint(tokenizer: &Tokenizer) -> String {
    let mut fp = Fingerprinter::new();
    fp.u64(tokenizer.len() as u64);
    for t in tokenizer.vocab() {
        fp.str(t);
    }
    fp.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenizer::UNK;

    fn small() -> CorpusConfig {
        CorpusConfig {
            factual: 50,
            finetune: 20,
            unseen: 20,
            pool: 20,
            seed: 7,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn counts_match_config() {
        let cfg = small();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(b.factual.len(), 50);
        assert_eq!(b.finetune.len(), 20);
        assert_eq!(b.unseen_eval.len(), 20);
        assert_eq!(b.perturb_pool.len(), 20);
        assert_eq!(b.alignment.len(), cfg.alignment + cfg.alignment_concepts);
        assert_eq!(b.unverifiable.len(), cfg.unverifiable);
        assert_eq!(b.idk_templates.len(), 12);
    }

    #[test]
    fn same_seed_same_bundle() {
        let a = generate_corpus(&small()).unwrap();
        let b = generate_corpus(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn different_seed_changes_names() {
        let a = generate_corpus(&small()).unwrap();
        let b = generate_corpus(&CorpusConfig { seed: 8, ..small() }).unwrap();
        let names_a: BTreeSet<_> = a.factual.iter().map(|r| &r.subject.name).collect();
        let names_b: BTreeSet<_> = b.factual.iter().map(|r| &r.subject.name).collect();
        assert_ne!(names_a, names_b);
    }

    #[test]
    fn entity_sets_are_pairwise_disjoint() {
        let b = generate_corpus(&CorpusConfig::default()).unwrap();
        let sets = b.entity_sets();
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                let names_i: BTreeSet<_> = sets[i].1.iter().map(|e| e.name.as_str()).collect();
                let names_j: BTreeSet<_> = sets[j].1.iter().map(|e| e.name.as_str()).collect();
                assert!(
                    names_i.is_disjoint(&names_j),
                    "{} and {} overlap",
                    sets[i].0,
                    sets[j].0
                );
            }
        }
    }

    #[test]
    fn record_invariants_hold() {
        let b = generate_corpus(&CorpusConfig::default()).unwrap();
        for r in b.factual.iter().chain(&b.alignment).chain(&b.finetune).chain(&b.unseen_eval) {
            assert_eq!(r.question.matches(r.subject.name.as_str()).count(), 1, "{r:?}");
            assert!(!r.answer.is_empty());
            assert!(!r.subject.name.trim().is_empty());
            for text in [&r.question, &r.answer] {
                assert!(!b.tokenizer.tokenize(text).contains(&UNK), "{text}");
            }
        }
        for q in &b.unverifiable {
            assert!(b.tokenizer.tokenize(q).contains(&UNK), "{q}");
        }
        for t in &b.idk_templates {
            assert!(!b.tokenizer.tokenize(t).contains(&UNK));
        }
    }

    #[test]
    fn zero_sized_dataset_is_rejected() {
        let err = generate_corpus(&CorpusConfig {
            finetune: 0,
            ..small()
        })
        .unwrap_err();
        assert!(matches!(err, Error::Config { field: "corpus.finetune", .. }));
    }

    #[test]
    fn oversized_request_is_a_capacity_error() {
        let err = generate_corpus(&CorpusConfig {
            factual: NAME_CAPACITY,
            ..small()
        })
        .unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
    }
}
