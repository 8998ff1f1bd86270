//! Corpus directory: one JSONL file per dataset plus `vocab.json` and `meta.json`.

use std::fs;
use std::path::{Path, PathBuf};

use seat_core::corpus::{CorpusBundle, CorpusConfig, Entity, EntityType, QaRecord, Relation, Tokenizer};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const RECORD_FILES: [(&str, &str); 4] = [
    ("factual", "factual.jsonl"),
    ("alignment", "alignment.jsonl"),
    ("finetune", "finetune.jsonl"),
    ("unseen", "unseen.jsonl"),
];
pub const UNVERIFIABLE_FILE: &str = "unverifiable.jsonl";
pub const POOL_FILE: &str = "perturb_pool.jsonl";
pub const VOCAB_FILE: &str = "vocab.json";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordLine {
    pub question: String,
    pub answer: String,
    pub subject: String,
    pub etype: EntityType,
    pub relation: Relation,
    pub object: String,
}

impl From<&QaRecord> for RecordLine {
    fn from(r: &QaRecord) -> Self {
        Self {
            question: r.question.clone(),
            answer: r.answer.clone(),
            subject: r.subject.name.clone(),
            etype: r.subject.etype,
            relation: r.relation,
            object: r.object.clone(),
        }
    }
}

impl From<RecordLine> for QaRecord {
    fn from(l: RecordLine) -> Self {
        QaRecord {
            subject: Entity {
                name: l.subject,
                etype: l.etype,
            },
            relation: l.relation,
            object: l.object,
            question: l.question,
            answer: l.answer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionLine {
    question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub seed: u64,
    pub config: CorpusConfig,
    pub config_hash: String,
    pub corpus_hash: String,
    pub vocab_hash: String,
    pub idk_templates: Vec<String>,
}

pub fn config_hash(config: &CorpusConfig) -> String {
    seat_core::fingerprint::sha256_hex(&serde_json::to_vec(config).expect("config serializes"))
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("record serializes");
        out.push(b'\n');
    }
    out
}

/// File name and contents of every corpus file, in a fixed order.
pub fn render(bundle: &CorpusBundle) -> Vec<(&'static str, Vec<u8>)> {
    let mut files = Vec::new();
    for (name, file) in RECORD_FILES {
        let records = bundle.records(name).expect("named dataset");
        files.push((file, jsonl(records.iter().map(RecordLine::from))));
    }
    files.push((
        UNVERIFIABLE_FILE,
        jsonl(bundle.unverifiable.iter().map(|q| QuestionLine { question: q.clone() })),
    ));
    files.push((POOL_FILE, jsonl(&bundle.perturb_pool)));
    let vocab = serde_json::to_vec(&bundle.tokenizer).expect("vocab serializes");
    files.push((VOCAB_FILE, vocab));
    let meta = Meta {
        seed: bundle.seed,
        config: bundle.config.clone(),
        config_hash: config_hash(&bundle.config),
        corpus_hash: bundle.fingerprint(),
        vocab_hash: bundle.vocab_fingerprint(),
        idk_templates: bundle.idk_templates.clone(),
    };
    files.push((META_FILE, serde_json::to_vec_pretty(&meta).expect("meta serializes")));
    files
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::format(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| CliError::format(path, e.to_string()))
}

/// Loads a corpus directory and checks it against the hash recorded in `meta.json`.
pub fn load(dir: &Path) -> Result<CorpusBundle> {
    if !dir.is_dir() {
        return Err(CliError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "corpus directory not found"),
        ));
    }
    let p = |f: &str| -> PathBuf { dir.join(f) };
    let mut sets: Vec<Vec<QaRecord>> = Vec::new();
    for (_, file) in RECORD_FILES {
        let lines: Vec<RecordLine> = read_lines(&p(file))?;
        sets.push(lines.into_iter().map(QaRecord::from).collect());
    }
    let unverifiable: Vec<QuestionLine> = read_lines(&p(UNVERIFIABLE_FILE))?;
    let pool: Vec<Entity> = read_lines(&p(POOL_FILE))?;
    let tokenizer: Tokenizer = read_json(&p(VOCAB_FILE))?;
    let meta: Meta = read_json(&p(META_FILE))?;
    let mut sets = sets.into_iter();
    let bundle = CorpusBundle {
        config: meta.config,
        factual: sets.next().unwrap(),
        alignment: sets.next().unwrap(),
        finetune: sets.next().unwrap(),
        unseen_eval: sets.next().unwrap(),
        unverifiable: unverifiable.into_iter().map(|q| q.question).collect(),
        perturb_pool: pool,
        idk_templates: meta.idk_templates,
        tokenizer,
        seed: meta.seed,
    };
    if bundle.fingerprint() != meta.corpus_hash {
        return Err(CliError::format(
            &p(META_FILE),
            format!(
                "corpus contents hash to {}, meta.json records {}",
                bundle.fingerprint(),
                meta.corpus_hash
            ),
        ));
    }
    Ok(bundle)
}
