//! On-disk graph formats.
//!
//! Object form (`.json`):
//!
//! ```text
//! {"schema_version": 1, "kind": "policy", "triples": [<triple>, ...]}
//! ```
//!
//! Line form (`.jsonl`): a header line `{"schema_version":1,"kind":"leak"}`
//! followed by one compact `<triple>` object per line.
//!
//! A `<triple>` is `{"actor", "action", "data", "provenance"}` where provenance
//! is `{"segment": n}` for policy graphs and `{"file": "...", "record": n}` for
//! leak graphs. Triples appear in graph order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::{KgKind, KnowledgeGraph};
use super::types::{Provenance, Triple};
use super::vocab::Taxonomy;
use super::KgError;

pub const KG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KgFormat {
    Json,
    JsonLines,
}

impl KgFormat {
    /// `.jsonl` selects the line form; anything else the object form.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => KgFormat::JsonLines,
            _ => KgFormat::Json,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProvenanceRecord {
    Segment { segment: usize },
    Flow { file: String, record: usize },
}

impl From<&Provenance> for ProvenanceRecord {
    fn from(p: &Provenance) -> Self {
        match p {
            Provenance::Segment { index } => ProvenanceRecord::Segment { segment: *index },
            Provenance::Flow { file, record } => ProvenanceRecord::Flow { file: file.clone(), record: *record },
        }
    }
}

impl From<ProvenanceRecord> for Provenance {
    fn from(p: ProvenanceRecord) -> Self {
        match p {
            ProvenanceRecord::Segment { segment } => Provenance::Segment { index: segment },
            ProvenanceRecord::Flow { file, record } => Provenance::Flow { file, record },
        }
    }
}

/// Serialized triple shared by graph and verdict files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub actor: String,
    pub action: String,
    pub data: String,
    pub provenance: ProvenanceRecord,
}

impl From<&Triple> for TripleRecord {
    fn from(t: &Triple) -> Self {
        Self {
            actor: t.actor.to_string(),
            action: t.action.to_string(),
            data: t.data.id().to_string(),
            provenance: (&t.provenance).into(),
        }
    }
}

impl TripleRecord {
    pub fn to_triple(&self, taxonomy: &Taxonomy) -> Result<Triple, KgError> {
        Triple::new(
            self.actor.parse()?,
            self.action.parse()?,
            taxonomy.data_type(&self.data)?,
            self.provenance.clone().into(),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    kind: KindRecord,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    schema_version: u32,
    kind: KindRecord,
    triples: Vec<TripleRecord>,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindRecord {
    Policy,
    Leak,
}

impl From<KgKind> for KindRecord {
    fn from(k: KgKind) -> Self {
        match k {
            KgKind::PolicyKG => KindRecord::Policy,
            KgKind::LeakKG => KindRecord::Leak,
        }
    }
}

impl From<KindRecord> for KgKind {
    fn from(k: KindRecord) -> Self {
        match k {
            KindRecord::Policy => KgKind::PolicyKG,
            KindRecord::Leak => KgKind::LeakKG,
        }
    }
}

fn format_err(e: serde_json::Error) -> KgError {
    KgError::Format(e.to_string())
}

impl KnowledgeGraph {
    pub fn to_text(&self, format: KgFormat) -> String {
        let records: Vec<TripleRecord> = self.iter().map(TripleRecord::from).collect();
        match format {
            KgFormat::Json => {
                let graph = GraphRecord { schema_version: KG_SCHEMA_VERSION, kind: self.kind().into(), triples: records };
                let mut out = serde_json::to_string_pretty(&graph).expect("graph serializes");
                out.push('\n');
                out
            }
            KgFormat::JsonLines => {
                let header = Header { schema_version: KG_SCHEMA_VERSION, kind: self.kind().into() };
                let mut out = serde_json::to_string(&header).expect("header serializes");
                out.push('\n');
                for r in &records {
                    out.push_str(&serde_json::to_string(r).expect("triple serializes"));
                    out.push('\n');
                }
                out
            }
        }
    }

    /// Parses either format, detecting which by content.
    pub fn parse(text: &str, taxonomy: &Taxonomy) -> Result<Self, KgError> {
        let (version, kind, records) = match serde_json::from_str::<GraphRecord>(text) {
            Ok(g) => (g.schema_version, g.kind, g.triples),
            Err(_) => {
                let mut lines = text.lines().filter(|l| !l.trim().is_empty());
                let header: Header = serde_json::from_str(lines.next().ok_or(KgError::Empty("graph file"))?)
                    .map_err(format_err)?;
                let records = lines
                    .map(|l| serde_json::from_str::<TripleRecord>(l).map_err(format_err))
                    .collect::<Result<Vec<_>, _>>()?;
                (header.schema_version, header.kind, records)
            }
        };
        if version != KG_SCHEMA_VERSION {
            return Err(KgError::SchemaVersion(version));
        }
        let mut kg = KnowledgeGraph::new(kind.into());
        for record in records {
            let triple = record.to_triple(taxonomy)?;
            let shown = triple.to_string();
            if !kg.insert(triple)? {
                return Err(KgError::DuplicateTriple(shown));
            }
        }
        Ok(kg)
    }

    pub fn save(&self, path: &Path) -> Result<(), KgError> {
        std::fs::write(path, self.to_text(KgFormat::for_path(path)))?;
        Ok(())
    }

    pub fn load(path: &Path, taxonomy: &Taxonomy) -> Result<Self, KgError> {
        Self::parse(&std::fs::read_to_string(path)?, taxonomy)
    }

    /// Loads a graph and checks it is of the expected kind.
    pub fn load_kind(path: &Path, taxonomy: &Taxonomy, expected: KgKind) -> Result<Self, KgError> {
        let kg = Self::load(path, taxonomy)?;
        if kg.kind() != expected {
            return Err(KgError::WrongGraph { expected, found: kg.kind() });
        }
        Ok(kg)
    }
}
