//! Deterministic policy/leak consistency check.
//!
//! For every leak triple the policy graph is scanned in document order. The
//! first policy triple whose actor covers the leak's actor and whose data type
//! is the same decides the verdict if its action is equal (consistent) or the
//! negation (contradicted). Policy triples with the same actor and data but an
//! unrelated action are skipped. A leak with no deciding policy triple is
//! undeclared.

use std::fmt;

use thiserror::Error;

use crate::kg::{actor_matches, KgKind, KnowledgeGraph, Triple};
use crate::llm::{LlmClient, Stage};
use crate::prompts::{self, PromptCatalog};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Consistent,
    Contradicted,
    Undeclared,
}

impl Outcome {
    /// Violation-positive binary label used for scoring.
    pub fn is_violation(self) -> bool {
        !matches!(self, Outcome::Consistent)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Consistent => "consistent",
            Outcome::Contradicted => "contradicted",
            Outcome::Undeclared => "undeclared",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub leak: Triple,
    pub outcome: Outcome,
    /// Present for consistent and contradicted verdicts.
    pub matched_policy: Option<Triple>,
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("expected a {expected} graph, got a {found} graph")]
    WrongKind { expected: KgKind, found: KgKind },
    #[error("reports are only rendered for violations; {0} is consistent")]
    ConsistentVerdict(String),
}

/// Whether `policy` decides `leak`, and how.
fn decide(policy: &Triple, leak: &Triple) -> Option<Outcome> {
    if !(actor_matches(&policy.actor, &leak.actor) && policy.data == leak.data) {
        return None;
    }
    if policy.action == leak.action {
        Some(Outcome::Consistent)
    } else if policy.action == leak.action.negate() {
        Some(Outcome::Contradicted)
    } else {
        None
    }
}

pub fn check_leak(leak: &Triple, policy: &KnowledgeGraph) -> Verdict {
    for p in policy {
        if let Some(outcome) = decide(p, leak) {
            return Verdict { leak: leak.clone(), outcome, matched_policy: Some(p.clone()) };
        }
    }
    Verdict { leak: leak.clone(), outcome: Outcome::Undeclared, matched_policy: None }
}

/// Two policy triples that would decide the same leak differently. The first
/// one (document order) wins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyConflict {
    pub first: Triple,
    pub second: Triple,
}

impl fmt::Display for PolicyConflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "policy contradicts itself: {} ({}) vs {} ({}); the first one is used",
            self.first, self.first.provenance, self.second, self.second.provenance
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckOutcome {
    pub verdicts: Vec<Verdict>,
    pub conflicts: Vec<PolicyConflict>,
}

/// One verdict per leak triple, in leak-graph order.
pub fn check_all(leaks: &KnowledgeGraph, policy: &KnowledgeGraph) -> Result<CheckOutcome, CheckError> {
    if leaks.kind() != KgKind::LeakKG {
        return Err(CheckError::WrongKind { expected: KgKind::LeakKG, found: leaks.kind() });
    }
    if policy.kind() != KgKind::PolicyKG {
        return Err(CheckError::WrongKind { expected: KgKind::PolicyKG, found: policy.kind() });
    }
    let mut verdicts = Vec::with_capacity(leaks.len());
    let mut conflicts: Vec<PolicyConflict> = Vec::new();
    for leak in leaks {
        let verdict = check_leak(leak, policy);
        if let Some(first) = &verdict.matched_policy {
            let later = policy
                .iter()
                .skip_while(|p| *p != first)
                .skip(1)
                .find(|p| decide(p, leak).is_some_and(|o| o != verdict.outcome));
            if let Some(second) = later {
                let conflict = PolicyConflict { first: first.clone(), second: second.clone() };
                if !conflicts.contains(&conflict) {
                    log::debug!("{conflict}");
                    conflicts.push(conflict);
                }
            }
        }
        verdicts.push(verdict);
    }
    Ok(CheckOutcome { verdicts, conflicts })
}

/// Natural-language explanation of one violation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    /// Deterministic template text, always present.
    pub template: String,
    /// Model rewrite of the template, when a client was supplied and answered.
    pub polished: Option<String>,
    pub warning: Option<String>,
}

impl Report {
    pub fn text(&self) -> String {
        match &self.polished {
            Some(p) => format!("{}\n\n{}\n", self.template.trim_end(), p.trim()),
            None => self.template.clone(),
        }
    }
}

fn describe(t: &Triple) -> String {
    format!("{} (actor {}, action {}, data {})", t, t.actor, t.action, t.data.label())
}

pub fn template_report(v: &Verdict) -> Result<String, CheckError> {
    let leak = &v.leak;
    let mut out = String::new();
    match (v.outcome, &v.matched_policy) {
        (Outcome::Consistent, _) => return Err(CheckError::ConsistentVerdict(leak.to_string())),
        (Outcome::Contradicted, Some(p)) => {
            out.push_str("Inconsistency: the observed data flow contradicts the privacy policy.\n");
            out.push_str(&format!("Observed flow: {} at {}.\n", describe(leak), leak.provenance));
            out.push_str(&format!("Policy statement: {} at {}.\n", describe(p), p.provenance));
            out.push_str(&format!(
                "The policy states `{}` for {} data by {}, but the code performs `{}`.\n",
                p.action,
                leak.data.label(),
                p.actor,
                leak.action
            ));
        }
        _ => {
            out.push_str("Inconsistency: the observed data flow is not declared in the privacy policy.\n");
            out.push_str(&format!("Observed flow: {} at {}.\n", describe(leak), leak.provenance));
            out.push_str("Policy statement: none.\n");
            out.push_str(&format!(
                "No policy statement covers {} data handled by {}.\n",
                leak.data.label(),
                leak.actor
            ));
        }
    }
    Ok(out)
}

/// Renders the template report and, with a model, a polished rewrite. A model
/// failure leaves the template-only report plus a warning.
pub fn render_report(v: &Verdict, model: Option<(&LlmClient, &PromptCatalog)>) -> Result<Report, CheckError> {
    let template = template_report(v)?;
    let mut report = Report { template, polished: None, warning: None };
    if let Some((client, catalog)) = model {
        let polished = catalog
            .render(prompts::REPORT_POLISH, &[("report", &report.template)])
            .map_err(|e| e.to_string())
            .and_then(|p| client.complete(Stage::Report, &p).map_err(|e| e.to_string()));
        match polished {
            Ok(exchange) => report.polished = Some(exchange.response),
            Err(e) => {
                let warning = format!("{}: report polishing failed ({e}); template only", v.leak.provenance);
                log::debug!("{warning}");
                report.warning = Some(warning);
            }
        }
    }
    Ok(report)
}
