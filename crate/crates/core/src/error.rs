use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Configuration asks for more unique names than the generator can produce.
    #[error("capacity exceeded: requested {requested} unique {what}, generator capacity is {capacity}")]
    Capacity {
        what: &'static str,
        requested: usize,
        capacity: usize,
    },

    #[error("perturbation pool has no entity of type {0}")]
    TypeCoverage(&'static str),

    #[error("invalid configuration: {field} {constraint}")]
    Config {
        field: &'static str,
        constraint: String,
    },

    #[error("sequence of length {len} exceeds context length {context}")]
    SequenceTooLong { len: usize, context: usize },

    #[error("value {value} out of range for {what}: expected {expected}")]
    Range {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("structural mismatch: {0}")]
    Structure(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("missing dataset: {0}")]
    MissingDataset(String),

    #[error("base model did not converge: {0}")]
    NonConvergence(String),
}
