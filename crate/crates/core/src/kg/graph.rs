use std::collections::HashSet;
use std::fmt;

use super::types::{Action, Actor, DataType, Provenance, Triple};
use super::KgError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KgKind {
    PolicyKG,
    LeakKG,
}

impl KgKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KgKind::PolicyKG => "policy",
            KgKind::LeakKG => "leak",
        }
    }

    fn accepts(self, provenance: &Provenance) -> bool {
        matches!(
            (self, provenance),
            (KgKind::PolicyKG, Provenance::Segment { .. }) | (KgKind::LeakKG, Provenance::Flow { .. })
        )
    }
}

impl fmt::Display for KgKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The `(actor, action, data)` identity of a triple, ignoring provenance.
pub type TripleKey = (Actor, Action, DataType);

/// Insertion-ordered set of triples, deduplicated on [`TripleKey`].
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    kind: KgKind,
    triples: Vec<Triple>,
    seen: HashSet<TripleKey>,
}

impl KnowledgeGraph {
    pub fn new(kind: KgKind) -> Self {
        Self { kind, triples: Vec::new(), seen: HashSet::new() }
    }

    pub fn kind(&self) -> KgKind {
        self.kind
    }

    /// Appends `triple` unless its key is already present. Returns whether it
    /// was added. Provenance must match the graph kind.
    pub fn insert(&mut self, triple: Triple) -> Result<bool, KgError> {
        if !self.kind.accepts(&triple.provenance) {
            let provenance = match triple.provenance {
                Provenance::Segment { .. } => "policy-segment",
                Provenance::Flow { .. } => "flow-record",
            };
            return Err(KgError::KindMismatch { kind: self.kind, provenance: provenance.into() });
        }
        let key = (triple.actor.clone(), triple.action, triple.data.clone());
        if !self.seen.insert(key) {
            return Ok(false);
        }
        self.triples.push(triple);
        Ok(true)
    }

    pub fn contains_key(&self, key: &TripleKey) -> bool {
        self.seen.contains(key)
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Triple> {
        self.triples.iter()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.triples == other.triples
    }
}

impl Eq for KnowledgeGraph {}

impl<'a> IntoIterator for &'a KnowledgeGraph {
    type Item = &'a Triple;
    type IntoIter = std::slice::Iter<'a, Triple>;

    fn into_iter(self) -> Self::IntoIter {
        self.triples.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Taxonomy;

    fn t(data: &str, action: Action, index: usize) -> Triple {
        let tax = Taxonomy::default();
        Triple::new(Actor::FirstParty, action, tax.data_type(data).unwrap(), Provenance::Segment { index }).unwrap()
    }

    #[test]
    fn insert_examples() {
        let mut kg = KnowledgeGraph::new(KgKind::PolicyKG);
        assert!(kg.insert(t("location", Action::COLLECT, 0)).unwrap());
        assert_eq!(kg.len(), 1);
        assert!(!kg.insert(t("location", Action::COLLECT, 5)).unwrap());
        assert_eq!(kg.len(), 1);
        assert_eq!(kg.triples()[0].provenance, Provenance::Segment { index: 0 });
        kg.insert(t("email_address", Action::NOT_SHARE, 1)).unwrap();
        let order: Vec<_> = kg.iter().map(|t| t.data.id()).collect();
        assert_eq!(order, ["location", "email_address"]);
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let mut leak = KnowledgeGraph::new(KgKind::LeakKG);
        assert!(matches!(leak.insert(t("location", Action::COLLECT, 0)), Err(KgError::KindMismatch { .. })));
        let tax = Taxonomy::default();
        let flow = Triple::new(
            Actor::FirstParty,
            Action::SHARE,
            tax.data_type("imei").unwrap(),
            Provenance::Flow { file: "a.xml".into(), record: 0 },
        )
        .unwrap();
        let mut policy = KnowledgeGraph::new(KgKind::PolicyKG);
        assert!(policy.insert(flow.clone()).is_err());
        assert!(leak.insert(flow).unwrap());
    }

    #[test]
    fn empty_flow_file_is_rejected() {
        let tax = Taxonomy::default();
        let err = Triple::new(
            Actor::FirstParty,
            Action::SHARE,
            tax.data_type("imei").unwrap(),
            Provenance::Flow { file: " ".into(), record: 0 },
        );
        assert!(err.is_err());
    }
}
