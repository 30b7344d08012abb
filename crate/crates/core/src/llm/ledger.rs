use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChatExchange, LlmError, Stage};

pub const LEDGER_SCHEMA_VERSION: u32 = 1;

/// Every exchange a run made, plus its end-to-end wall-clock time.
///
/// `wall_clock_ms` is measured start-to-finish and is kept apart from the
/// per-exchange `elapsed_ms`, whose sum only covers time spent waiting on the
/// model.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub schema_version: u32,
    pub wall_clock_ms: u64,
    pub exchanges: Vec<ChatExchange>,
}

impl UsageLedger {
    pub fn new(exchanges: Vec<ChatExchange>, wall_clock_ms: u64) -> Self {
        Self { schema_version: LEDGER_SCHEMA_VERSION, wall_clock_ms, exchanges }
    }

    pub fn total_tokens(&self) -> u64 {
        self.exchanges.iter().map(|e| e.prompt_tokens + e.completion_tokens).sum()
    }

    /// Concatenates ledgers of runs that together form one pipeline execution.
    pub fn merge<'a>(ledgers: impl IntoIterator<Item = &'a UsageLedger>) -> Self {
        let mut merged = UsageLedger::new(Vec::new(), 0);
        for l in ledgers {
            merged.exchanges.extend(l.exchanges.iter().cloned());
            merged.wall_clock_ms += l.wall_clock_ms;
        }
        merged
    }

    /// Canonical text form. Exchanges are sorted so that concurrent runs
    /// serialize identically regardless of completion order.
    pub fn to_text(&self) -> String {
        let mut canonical = self.clone();
        canonical.schema_version = LEDGER_SCHEMA_VERSION;
        canonical.exchanges.sort_by(|a, b| {
            (a.stage, &a.template, &a.prompt, &a.response, a.prompt_tokens, a.completion_tokens, a.elapsed_ms).cmp(&(
                b.stage,
                &b.template,
                &b.prompt,
                &b.response,
                b.prompt_tokens,
                b.completion_tokens,
                b.elapsed_ms,
            ))
        });
        let mut out = serde_json::to_string_pretty(&canonical).expect("ledger serializes");
        out.push('\n');
        out
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let ledger: UsageLedger = serde_json::from_str(text).map_err(|e| LlmError::Fixture(format!("ledger: {e}")))?;
        if ledger.schema_version != LEDGER_SCHEMA_VERSION {
            return Err(LlmError::Fixture(format!("unsupported ledger schema version {}", ledger.schema_version)));
        }
        Ok(ledger)
    }

    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        std::fs::write(path, self.to_text()).map_err(|e| LlmError::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StageTotals {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub elapsed_ms: u64,
}

impl StageTotals {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    fn add(&mut self, e: &ChatExchange) {
        self.calls += 1;
        self.prompt_tokens += e.prompt_tokens;
        self.completion_tokens += e.completion_tokens;
        self.elapsed_ms += e.elapsed_ms;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub stages: BTreeMap<Stage, StageTotals>,
    pub overall: StageTotals,
    pub wall_clock_ms: u64,
}

impl CostReport {
    /// Builds a report from bare totals, for comparing against published
    /// figures that have no per-exchange breakdown.
    pub fn from_totals(prompt_tokens: u64, completion_tokens: u64, elapsed_ms: u64, wall_clock_ms: u64) -> Self {
        Self {
            stages: BTreeMap::new(),
            overall: StageTotals { calls: 0, prompt_tokens, completion_tokens, elapsed_ms },
            wall_clock_ms,
        }
    }
}

pub fn ledger_totals(ledger: &UsageLedger) -> CostReport {
    let mut report = CostReport { wall_clock_ms: ledger.wall_clock_ms, ..Default::default() };
    for e in &ledger.exchanges {
        report.stages.entry(e.stage).or_default().add(e);
        report.overall.add(e);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exchange(stage: Stage, p: u64, c: u64, ms: u64) -> ChatExchange {
        ChatExchange {
            stage,
            template: "t@v1".into(),
            prompt: format!("prompt {p}"),
            response: format!("response {c}"),
            prompt_tokens: p,
            completion_tokens: c,
            elapsed_ms: ms,
        }
    }

    #[test]
    fn empty_ledger_is_all_zero() {
        let r = ledger_totals(&UsageLedger::default());
        assert_eq!(r.overall, StageTotals::default());
        assert!(r.stages.is_empty());
        assert_eq!(r.wall_clock_ms, 0);
    }

    #[test]
    fn two_exchanges_sum() {
        let ledger = UsageLedger::new(vec![exchange(Stage::PolicyRead, 10, 5, 3), exchange(Stage::Report, 20, 7, 4)], 9);
        let r = ledger_totals(&ledger);
        assert_eq!(r.overall.total_tokens(), 42);
        assert_eq!(r.overall.elapsed_ms, 7);
        assert_eq!(r.wall_clock_ms, 9);
        assert_eq!(r.stages[&Stage::Report].total_tokens(), 27);
    }

    #[test]
    fn text_form_is_order_independent() {
        let a = exchange(Stage::PolicyRead, 10, 5, 3);
        let b = exchange(Stage::PolicyRead, 20, 7, 4);
        let l1 = UsageLedger::new(vec![a.clone(), b.clone()], 1);
        let l2 = UsageLedger::new(vec![b, a], 1);
        assert_eq!(l1.to_text(), l2.to_text());
        assert_eq!(ledger_totals(&UsageLedger::parse(&l1.to_text()).unwrap()), ledger_totals(&l1));
    }

    fn arb_stage() -> impl Strategy<Value = Stage> {
        proptest::sample::select(Stage::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn stages_partition_the_total(items in proptest::collection::vec((arb_stage(), 0..5000u64, 0..5000u64, 0..9000u64), 0..40)) {
            let ledger = UsageLedger::new(items.iter().map(|&(s, p, c, ms)| exchange(s, p, c, ms)).collect(), 0);
            let r = ledger_totals(&ledger);
            let by_stage: u64 = r.stages.values().map(StageTotals::total_tokens).sum();
            prop_assert_eq!(by_stage, r.overall.total_tokens());
            prop_assert_eq!(r.overall.total_tokens(), ledger.total_tokens());
        }
    }
}
