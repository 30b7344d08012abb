use std::collections::HashMap;
use std::path::Path;

use super::types::{Action, Actor, DataType, Verb};
use super::KgError;
use crate::text::{find_run, is_negation_cue, squash, words};

const TAXONOMY: &str = include_str!("../../data/taxonomy.tsv");
const DATA_SYNONYMS: &str = include_str!("../../data/data_synonyms.tsv");
const ACTION_SYNONYMS: &str = include_str!("../../data/action_synonyms.tsv");
const ACTOR_SYNONYMS: &str = include_str!("../../data/actor_synonyms.tsv");

pub const TAXONOMY_FILE: &str = "taxonomy.tsv";
pub const DATA_SYNONYMS_FILE: &str = "data_synonyms.tsv";
pub const ACTION_SYNONYMS_FILE: &str = "action_synonyms.tsv";
pub const ACTOR_SYNONYMS_FILE: &str = "actor_synonyms.tsv";

/// Two-column tab-separated rows, skipping blanks and `#` comments.
/// Returns `(line number, key, value)`.
pub(crate) fn parse_table(text: &str) -> Result<Vec<(usize, String, String)>, KgError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t').map(str::trim);
        match (cols.next(), cols.next(), cols.next()) {
            (Some(k), Some(v), None) if !k.is_empty() && !v.is_empty() => {
                rows.push((line_no, k.to_string(), v.to_string()))
            }
            _ => {
                return Err(KgError::Table {
                    line: line_no,
                    reason: format!("expected two tab-separated columns, got `{trimmed}`"),
                })
            }
        }
    }
    Ok(rows)
}

/// The closed list of data types every triple's data slot is drawn from.
#[derive(Clone, Debug)]
pub struct Taxonomy {
    entries: Vec<DataType>,
    index: HashMap<String, usize>,
}

impl Taxonomy {
    pub fn parse(text: &str) -> Result<Self, KgError> {
        let rows = parse_table(text).map_err(|e| match e {
            KgError::Table { line, reason } => KgError::Taxonomy { line, reason },
            other => other,
        })?;
        let mut entries = Vec::with_capacity(rows.len());
        let mut index = HashMap::new();
        for (line, id, label) in rows {
            if id.chars().any(|c| !(c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')) {
                return Err(KgError::Taxonomy { line, reason: format!("id `{id}` must be lowercase snake_case") });
            }
            if index.insert(id.clone(), entries.len()).is_some() {
                return Err(KgError::Taxonomy { line, reason: format!("duplicate id `{id}`") });
            }
            entries.push(DataType { id, label });
        }
        if entries.is_empty() {
            return Err(KgError::Taxonomy { line: 0, reason: "taxonomy is empty".into() });
        }
        Ok(Self { entries, index })
    }

    pub fn load(path: &Path) -> Result<Self, KgError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, id: &str) -> Option<&DataType> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    pub fn data_type(&self, id: &str) -> Result<DataType, KgError> {
        self.get(id).cloned().ok_or_else(|| KgError::UnknownDataType(id.to_string()))
    }

    pub fn entries(&self) -> &[DataType] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        Self::parse(TAXONOMY).expect("built-in taxonomy parses")
    }
}

/// Result of mapping free text onto the taxonomy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DataMapping {
    Mapped(DataType),
    Unmapped(String),
}

impl DataMapping {
    pub fn mapped(self) -> Option<DataType> {
        match self {
            DataMapping::Mapped(d) => Some(d),
            DataMapping::Unmapped(_) => None,
        }
    }
}

struct Phrase<T> {
    words: Vec<String>,
    value: T,
}

/// Longest phrase first; among equals the table order is kept (stable sort).
fn sorted_phrases<T>(mut phrases: Vec<Phrase<T>>) -> Vec<Phrase<T>> {
    phrases.sort_by_key(|p| std::cmp::Reverse(p.words.len()));
    phrases
}

/// Taxonomy plus the synonym tables that map free text into the three
/// controlled vocabularies.
pub struct Vocabulary {
    taxonomy: Taxonomy,
    data_exact: HashMap<String, String>,
    data_phrases: Vec<Phrase<String>>,
    action_phrases: Vec<Phrase<Verb>>,
    actor_exact: HashMap<String, Actor>,
}

impl Vocabulary {
    pub fn from_tables(taxonomy: Taxonomy, data_synonyms: &str, action_synonyms: &str, actor_synonyms: &str) -> Result<Self, KgError> {
        let mut data_exact = HashMap::new();
        let mut data_phrases = Vec::new();
        let mut add_data = |phrase: &str, id: &str| {
            let key = squash(phrase);
            data_exact.entry(key).or_insert_with(|| id.to_string());
            data_phrases.push(Phrase { words: words(phrase), value: id.to_string() });
        };
        for entry in taxonomy.entries() {
            add_data(&entry.id, &entry.id);
            add_data(&entry.id.replace('_', " "), &entry.id);
            add_data(&entry.label, &entry.id);
        }
        for (line, phrase, id) in parse_table(data_synonyms)? {
            if taxonomy.get(&id).is_none() {
                return Err(KgError::Table { line, reason: format!("synonym `{phrase}` targets unknown data type `{id}`") });
            }
            add_data(&phrase, &id);
        }

        let mut action_phrases = Vec::new();
        for (line, phrase, verb) in parse_table(action_synonyms)? {
            let verb = match verb.as_str() {
                "collect" => Verb::Collect,
                "share" => Verb::Share,
                other => return Err(KgError::Table { line, reason: format!("unknown verb class `{other}`") }),
            };
            action_phrases.push(Phrase { words: words(&phrase), value: verb });
        }

        let mut actor_exact = HashMap::new();
        for (line, phrase, actor) in parse_table(actor_synonyms)? {
            let actor: Actor = actor.parse().map_err(|_| KgError::Table { line, reason: format!("bad actor `{actor}`") })?;
            actor_exact.insert(squash(&phrase), actor);
        }

        Ok(Self {
            taxonomy,
            data_exact,
            data_phrases: sorted_phrases(data_phrases),
            action_phrases: sorted_phrases(action_phrases),
            actor_exact,
        })
    }

    /// Loads `taxonomy.tsv` and the three synonym tables from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, KgError> {
        let read = |name: &str| std::fs::read_to_string(dir.join(name));
        Self::from_tables(
            Taxonomy::load(&dir.join(TAXONOMY_FILE))?,
            &read(DATA_SYNONYMS_FILE)?,
            &read(ACTION_SYNONYMS_FILE)?,
            &read(ACTOR_SYNONYMS_FILE)?,
        )
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    /// Maps free text onto a taxonomy entry: exact phrase first, then the
    /// longest table phrase contained in the text as a whole-word run.
    pub fn normalize_data_type(&self, raw: &str) -> Result<DataMapping, KgError> {
        let key = squash(raw);
        let key = key.trim_matches(|c: char| c.is_ascii_punctuation() && c != '_');
        if key.is_empty() {
            return Err(KgError::Empty("data type text"));
        }
        if let Some(id) = self.data_exact.get(key) {
            return Ok(DataMapping::Mapped(self.taxonomy.data_type(id)?));
        }
        let toks = words(key);
        for phrase in &self.data_phrases {
            if find_run(&toks, &phrase.words).is_some() {
                return Ok(DataMapping::Mapped(self.taxonomy.data_type(&phrase.value)?));
            }
        }
        Ok(DataMapping::Unmapped(raw.trim().to_string()))
    }

    /// Maps a verb phrase such as "never share" or "do not collect" to one of
    /// the four actions. `None` when no known verb occurs.
    pub fn normalize_action(&self, raw: &str) -> Option<Action> {
        if let Ok(action) = raw.parse::<Action>() {
            return Some(action);
        }
        let toks = words(&raw.replace(['_'], " "));
        let toks: Vec<String> = toks
            .into_iter()
            .flat_map(|w| match w.strip_prefix("not-") {
                Some(rest) => vec!["not".to_string(), rest.to_string()],
                None => vec![w],
            })
            .collect();
        let (pos, verb) = self
            .action_phrases
            .iter()
            .filter_map(|p| find_run(&toks, &p.words).map(|pos| (pos, p.value)))
            .min_by_key(|(pos, _)| *pos)?;
        let negated = toks[..pos].iter().any(|w| is_negation_cue(w));
        Some(Action { verb, negated })
    }

    /// Maps an actor phrase onto first party, the unnamed third party, or a
    /// named third party. Unknown names become named third parties.
    pub fn normalize_actor(&self, raw: &str) -> Option<Actor> {
        if let Ok(actor) = raw.parse::<Actor>() {
            // `third_party:<name>` still goes through the synonym table so
            // that e.g. "firebase analytics" and "firebase" agree.
            if let Actor::ThirdParty(Some(name)) = &actor {
                if let Some(known @ Actor::ThirdParty(Some(_))) = self.actor_exact.get(&squash(&name.as_str().replace('_', " "))) {
                    return Some(known.clone());
                }
            }
            return Some(actor);
        }
        let key = squash(raw);
        let key = key.trim_matches(|c: char| c.is_ascii_punctuation());
        if key.is_empty() {
            return None;
        }
        if let Some(actor) = self.actor_exact.get(key) {
            return Some(actor.clone());
        }
        for prefix in ["third-party:", "third party:", "third-party", "third party"] {
            if let Some(rest) = key.strip_prefix(prefix) {
                let rest = rest.trim().trim_start_matches(':').trim();
                return Some(match self.actor_exact.get(rest) {
                    Some(actor @ Actor::ThirdParty(_)) => actor.clone(),
                    _ => Actor::third_party(rest),
                });
            }
        }
        Some(Actor::third_party(key))
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tables(Taxonomy::default(), DATA_SYNONYMS, ACTION_SYNONYMS, ACTOR_SYNONYMS)
            .expect("built-in vocabulary tables parse")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::PartyName;

    #[test]
    fn builtin_taxonomy_has_fourteen_entries() {
        let tax = Taxonomy::default();
        assert_eq!(tax.len(), 14);
        let ids: Vec<_> = tax.entries().iter().map(|d| d.id()).collect();
        assert_eq!(
            ids,
            [
                "device_id", "advertising_id", "imei", "mac_address", "location", "contact", "phone_number",
                "email_address", "sim_serial", "android_id", "installed_apps", "sms", "call_log", "network_info"
            ]
        );
    }

    #[test]
    fn taxonomy_rejects_duplicates_and_empty() {
        assert!(matches!(Taxonomy::parse("a\tA\na\tB\n"), Err(KgError::Taxonomy { line: 2, .. })));
        assert!(Taxonomy::parse("# nothing\n").is_err());
        assert!(Taxonomy::parse("Bad Id\tx\n").is_err());
        assert!(Taxonomy::parse("only_one_column\n").is_err());
    }

    #[test]
    fn data_type_examples() {
        let v = Vocabulary::default();
        assert_eq!(v.normalize_data_type("GPS coordinates").unwrap().mapped().unwrap().id(), "location");
        assert_eq!(v.normalize_data_type("location").unwrap().mapped().unwrap().id(), "location");
        assert_eq!(
            v.normalize_data_type("favorite pizza topping").unwrap(),
            DataMapping::Unmapped("favorite pizza topping".into())
        );
        assert!(matches!(v.normalize_data_type("   "), Err(KgError::Empty(_))));
    }

    #[test]
    fn data_type_contained_phrase_prefers_longest() {
        let v = Vocabulary::default();
        assert_eq!(v.normalize_data_type("your e-mail address").unwrap().mapped().unwrap().id(), "email_address");
        assert_eq!(v.normalize_data_type("the device's SIM card serial number").unwrap().mapped().unwrap().id(), "sim_serial");
        assert_eq!(v.normalize_data_type("Email Address.").unwrap().mapped().unwrap().id(), "email_address");
    }

    #[test]
    fn canonical_ids_and_labels_are_fixed_points() {
        let v = Vocabulary::default();
        for entry in v.taxonomy().entries() {
            for text in [entry.id(), entry.label()] {
                let mapped = v.normalize_data_type(text).unwrap().mapped().unwrap();
                assert_eq!(mapped.id(), entry.id());
                let again = v.normalize_data_type(mapped.id()).unwrap().mapped().unwrap();
                assert_eq!(again, mapped);
            }
        }
    }

    #[test]
    fn synonyms_must_target_known_ids() {
        let err = Vocabulary::from_tables(Taxonomy::default(), "gps\tgeo\n", "", "");
        assert!(matches!(err, Err(KgError::Table { line: 1, .. })));
    }

    #[test]
    fn action_phrases() {
        let v = Vocabulary::default();
        assert_eq!(v.normalize_action("never share"), Some(Action::NOT_SHARE));
        assert_eq!(v.normalize_action("do not collect"), Some(Action::NOT_COLLECT));
        assert_eq!(v.normalize_action("don't sell"), Some(Action::NOT_SHARE));
        assert_eq!(v.normalize_action("disclose"), Some(Action::SHARE));
        assert_eq!(v.normalize_action("transmit"), Some(Action::SHARE));
        assert_eq!(v.normalize_action("gather"), Some(Action::COLLECT));
        assert_eq!(v.normalize_action("access"), Some(Action::COLLECT));
        assert_eq!(v.normalize_action("obtain"), Some(Action::COLLECT));
        assert_eq!(v.normalize_action("not-share"), Some(Action::NOT_SHARE));
        assert_eq!(v.normalize_action("not_collect"), Some(Action::NOT_COLLECT));
        assert_eq!(v.normalize_action("admire"), None);
    }

    #[test]
    fn actor_phrases() {
        let v = Vocabulary::default();
        assert_eq!(v.normalize_actor("we"), Some(Actor::FirstParty));
        assert_eq!(v.normalize_actor("First-party"), Some(Actor::FirstParty));
        assert_eq!(v.normalize_actor("advertising partners"), Some(Actor::ThirdParty(None)));
        assert_eq!(v.normalize_actor("third-party: Google AdMob"), Some(Actor::third_party("admob")));
        assert_eq!(v.normalize_actor("third party: AcmeAds"), Some(Actor::third_party("acmeads")));
        assert_eq!(v.normalize_actor("third_party:Firebase Analytics"), Some(Actor::third_party("firebase")));
        assert_eq!(v.normalize_actor("third_party:acme metrics"), Some(Actor::third_party("acme metrics")));
        assert_eq!(
            v.normalize_actor("Acme Metrics"),
            Some(Actor::ThirdParty(PartyName::new("acme_metrics")))
        );
        assert_eq!(v.normalize_actor("  "), None);
    }
}
