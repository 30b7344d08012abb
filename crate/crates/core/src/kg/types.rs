use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use super::KgError;

/// Lowercase, trimmed, non-empty name of a third party (usually an SDK).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartyName(String);

impl PartyName {
    /// Inner whitespace becomes `_` so names stay single tokens in the
    /// `third_party:<name>` notation.
    pub fn new(raw: &str) -> Option<Self> {
        let name = raw
            .split_whitespace()
            .collect::<Vec<_>>()
            .join("_")
            .to_lowercase();
        (!name.is_empty()).then_some(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Entity responsible for a data practice.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Actor {
    FirstParty,
    /// `None` is the unnamed third party; in a policy it covers every named one.
    ThirdParty(Option<PartyName>),
}

impl Actor {
    pub fn third_party(name: &str) -> Self {
        Actor::ThirdParty(PartyName::new(name))
    }

    pub fn is_third_party(&self) -> bool {
        matches!(self, Actor::ThirdParty(_))
    }
}

/// Whether a policy actor covers a leak actor. Equality, except that an
/// unnamed third party in the policy stands for any third party.
pub fn actor_matches(policy: &Actor, leak: &Actor) -> bool {
    match (policy, leak) {
        (Actor::ThirdParty(None), Actor::ThirdParty(_)) => true,
        _ => policy == leak,
    }
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::FirstParty => f.write_str("first_party"),
            Actor::ThirdParty(None) => f.write_str("third_party"),
            Actor::ThirdParty(Some(name)) => write!(f, "third_party:{}", name.as_str()),
        }
    }
}

impl FromStr for Actor {
    type Err = KgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "first_party" => Ok(Actor::FirstParty),
            "third_party" => Ok(Actor::ThirdParty(None)),
            _ => match s.strip_prefix("third_party:") {
                Some(name) => PartyName::new(name)
                    .map(|n| Actor::ThirdParty(Some(n)))
                    .ok_or_else(|| KgError::InvalidActor(s.to_string())),
                None => Err(KgError::InvalidActor(s.to_string())),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verb {
    Collect,
    Share,
}

/// One of the four legal data operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action {
    pub verb: Verb,
    pub negated: bool,
}

impl Action {
    pub const COLLECT: Action = Action { verb: Verb::Collect, negated: false };
    pub const SHARE: Action = Action { verb: Verb::Share, negated: false };
    pub const NOT_COLLECT: Action = Action { verb: Verb::Collect, negated: true };
    pub const NOT_SHARE: Action = Action { verb: Verb::Share, negated: true };
    pub const ALL: [Action; 4] = [Self::COLLECT, Self::SHARE, Self::NOT_COLLECT, Self::NOT_SHARE];

    pub fn negate(self) -> Action {
        Action { verb: self.verb, negated: !self.negated }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verb = match self.verb {
            Verb::Collect => "collect",
            Verb::Share => "share",
        };
        if self.negated {
            write!(f, "not-{verb}")
        } else {
            f.write_str(verb)
        }
    }
}

impl FromStr for Action {
    type Err = KgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "collect" => Ok(Action::COLLECT),
            "share" => Ok(Action::SHARE),
            "not-collect" => Ok(Action::NOT_COLLECT),
            "not-share" => Ok(Action::NOT_SHARE),
            other => Err(KgError::InvalidAction(other.to_string())),
        }
    }
}

/// A taxonomy entry. Identity is the id; the label is display text only.
/// Values are obtained from a [`super::Taxonomy`], which validates membership.
#[derive(Clone, Debug)]
pub struct DataType {
    pub(super) id: String,
    pub(super) label: String,
}

impl DataType {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl PartialEq for DataType {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl Eq for DataType {}

impl Hash for DataType {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.id.hash(state);
    }
}

impl PartialOrd for DataType {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DataType {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.id.cmp(&other.id)
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// Where a triple came from.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    /// Sentence index in the segmented policy.
    Segment { index: usize },
    /// FlowDroid result file (by file name) and record ordinal within it.
    Flow { file: String, record: usize },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Segment { index } => write!(f, "policy sentence #{index}"),
            Provenance::Flow { file, record } => write!(f, "{file}#{record}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Triple {
    pub actor: Actor,
    pub action: Action,
    pub data: DataType,
    pub provenance: Provenance,
}

impl Triple {
    pub fn new(actor: Actor, action: Action, data: DataType, provenance: Provenance) -> Result<Self, KgError> {
        if let Provenance::Flow { file, .. } = &provenance {
            if file.trim().is_empty() {
                return Err(KgError::Empty("provenance file"));
            }
        }
        Ok(Self { actor, action, data, provenance })
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}, {}>", self.actor, self.action, self.data)
    }
}
