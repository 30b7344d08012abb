//! Versioned prompt templates.
//!
//! Templates live in `prompts/<name>.<version>.txt` and use `{{key}}`
//! placeholders. The built-in catalog embeds `v1`; a directory laid out the
//! same way can replace it. Every rendered prompt carries a `name@version`
//! id that the ledger records next to the exchange.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

pub const POLICY_EXTRACT: &str = "policy_extract";
pub const POLICY_REFORMAT: &str = "policy_reformat";
pub const POLICY_NEGATION: &str = "policy_negation";
pub const LEAK_MAP: &str = "leak_map";
pub const REPORT_POLISH: &str = "report_polish";
pub const BASELINE_FLOWS: &str = "baseline_flows";
pub const BASELINE_METHODS: &str = "baseline_methods";
pub const BASELINE_METHODS_REFORMAT: &str = "baseline_methods_reformat";
pub const BASELINE_JUDGE: &str = "baseline_judge";

pub const TEMPLATE_NAMES: [&str; 9] = [
    POLICY_EXTRACT,
    POLICY_REFORMAT,
    POLICY_NEGATION,
    LEAK_MAP,
    REPORT_POLISH,
    BASELINE_FLOWS,
    BASELINE_METHODS,
    BASELINE_METHODS_REFORMAT,
    BASELINE_JUDGE,
];

pub const DEFAULT_VERSION: &str = "v1";

const BUILTIN_V1: [(&str, &str); 9] = [
    (POLICY_EXTRACT, include_str!("../prompts/policy_extract.v1.txt")),
    (POLICY_REFORMAT, include_str!("../prompts/policy_reformat.v1.txt")),
    (POLICY_NEGATION, include_str!("../prompts/policy_negation.v1.txt")),
    (LEAK_MAP, include_str!("../prompts/leak_map.v1.txt")),
    (REPORT_POLISH, include_str!("../prompts/report_polish.v1.txt")),
    (BASELINE_FLOWS, include_str!("../prompts/baseline_flows.v1.txt")),
    (BASELINE_METHODS, include_str!("../prompts/baseline_methods.v1.txt")),
    (BASELINE_METHODS_REFORMAT, include_str!("../prompts/baseline_methods_reformat.v1.txt")),
    (BASELINE_JUDGE, include_str!("../prompts/baseline_judge.v1.txt")),
];

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no built-in prompt catalog for version `{0}`")]
    UnknownVersion(String),
    #[error("prompt template `{0}` not found in catalog")]
    MissingTemplate(String),
    #[error("template `{template}` has no value for placeholder `{key}`")]
    MissingValue { template: String, key: String },
    #[error("reading prompt template {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenderedPrompt {
    /// `name@version`.
    pub template: String,
    pub text: String,
}

#[derive(Clone, Debug)]
pub struct PromptCatalog {
    version: String,
    templates: BTreeMap<String, String>,
}

impl PromptCatalog {
    pub fn builtin(version: &str) -> Result<Self, PromptError> {
        if version != DEFAULT_VERSION {
            return Err(PromptError::UnknownVersion(version.to_string()));
        }
        Ok(Self {
            version: version.to_string(),
            templates: BUILTIN_V1.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        })
    }

    /// Loads every known template from `<dir>/<name>.<version>.txt`.
    pub fn from_dir(dir: &Path, version: &str) -> Result<Self, PromptError> {
        let mut templates = BTreeMap::new();
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.{version}.txt"));
            let text = std::fs::read_to_string(&path)
                .map_err(|source| PromptError::Io { path: path.display().to_string(), source })?;
            templates.insert(name.to_string(), text);
        }
        Ok(Self { version: version.to_string(), templates })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Substitutes every `{{key}}` placeholder. Values are inserted verbatim
    /// and are not rescanned for placeholders.
    pub fn render(&self, name: &str, values: &[(&str, &str)]) -> Result<RenderedPrompt, PromptError> {
        let template = self.templates.get(name).ok_or_else(|| PromptError::MissingTemplate(name.to_string()))?;
        let mut out = String::with_capacity(template.len());
        let mut rest = template.as_str();
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let Some(end) = after.find("}}") else {
                out.push_str(&rest[start..]);
                rest = "";
                break;
            };
            let key = &after[..end];
            let value = values
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::MissingValue { template: name.to_string(), key: key.to_string() })?;
            out.push_str(value);
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        Ok(RenderedPrompt { template: format!("{name}@{}", self.version), text: out })
    }
}

impl Default for PromptCatalog {
    fn default() -> Self {
        Self::builtin(DEFAULT_VERSION).expect("built-in catalog")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_placeholders_verbatim() {
        let catalog = PromptCatalog::default();
        let p = catalog.render(POLICY_EXTRACT, &[("segment", "We collect {{location}}.")]).unwrap();
        assert_eq!(p.template, "policy_extract@v1");
        assert!(p.text.contains("SENTENCE:\nWe collect {{location}}.\n"));
    }

    #[test]
    fn missing_value_and_template() {
        let catalog = PromptCatalog::default();
        assert!(matches!(catalog.render(POLICY_EXTRACT, &[]), Err(PromptError::MissingValue { .. })));
        assert!(matches!(catalog.render("nope", &[]), Err(PromptError::MissingTemplate(_))));
        assert!(matches!(PromptCatalog::builtin("v9"), Err(PromptError::UnknownVersion(_))));
    }

    #[test]
    fn every_builtin_template_has_placeholders_we_fill() {
        let catalog = PromptCatalog::default();
        let keys = ["segment", "reply", "sources", "sink", "sink_method", "report", "xml", "summary", "method", "policy"];
        let values: Vec<(&str, &str)> = keys.iter().map(|k| (*k, "x")).collect();
        for name in TEMPLATE_NAMES {
            let p = catalog.render(name, &values).unwrap();
            assert!(!p.text.contains("{{"), "{name} left a placeholder");
        }
    }

    #[test]
    fn directory_catalog_matches_builtin() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("prompts");
        let from_dir = PromptCatalog::from_dir(&dir, "v1").unwrap();
        assert_eq!(from_dir.templates, PromptCatalog::default().templates);
    }
}
