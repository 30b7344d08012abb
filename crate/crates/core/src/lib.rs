//! Policy/code consistency checking for Android apps.
//!
//! Privacy policies and FlowDroid taint results are both turned into
//! `<actor, action, data>` knowledge graphs. A deterministic first-match
//! checker then compares every observed leak against the declared practices.
//! Language-model calls are confined to the extraction front ends (and the
//! optional report polishing) and go through a single ledgered client so
//! their token and time cost can be compared against an LLM-only baseline.

pub mod baseline;
pub mod checker;
pub mod eval;
pub mod kg;
pub mod leaks;
pub mod llm;
pub mod policy;
pub mod prompts;
pub mod verdict_file;

mod text;

pub use checker::{check_all, check_leak, render_report, CheckOutcome, Outcome, Report, Verdict};
pub use kg::{
    Action, Actor, DataMapping, DataType, KgKind, KnowledgeGraph, PartyName, Provenance, Taxonomy,
    Triple, Verb, Vocabulary,
};
pub use llm::{ChatExchange, CostReport, LlmClient, LlmConfig, Stage, UsageLedger};
