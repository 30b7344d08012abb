//! Triple schema, controlled vocabularies and the knowledge-graph container
//! shared by the policy and leak pipelines.

mod graph;
mod io;
mod types;
mod vocab;

pub use graph::{KgKind, KnowledgeGraph, TripleKey};
pub use io::{KgFormat, ProvenanceRecord, TripleRecord, KG_SCHEMA_VERSION};
pub use types::{actor_matches, Action, Actor, DataType, PartyName, Provenance, Triple, Verb};
pub use vocab::{DataMapping, Taxonomy, Vocabulary};
pub(crate) use vocab::parse_table;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid actor `{0}`")]
    InvalidActor(String),
    #[error("invalid action `{0}`")]
    InvalidAction(String),
    #[error("data type `{0}` is not in the taxonomy")]
    UnknownDataType(String),
    #[error("{kind} graph cannot hold a triple with {provenance} provenance")]
    KindMismatch { kind: KgKind, provenance: String },
    #[error("duplicate triple {0} in serialized graph")]
    DuplicateTriple(String),
    #[error("taxonomy line {line}: {reason}")]
    Taxonomy { line: usize, reason: String },
    #[error("table line {line}: {reason}")]
    Table { line: usize, reason: String },
    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),
    #[error("expected a {expected} graph, found {found}")]
    WrongGraph { expected: KgKind, found: KgKind },
    #[error("malformed graph file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
