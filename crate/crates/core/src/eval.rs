//! Scoring verdict files against ground truth, and cost comparison.
//!
//! Ground-truth files are tab-separated (tabs shown as `\t`):
//!
//! ```text
//! # policheck ground truth v1
//! file\trecord\tviolation
//! app01_net.xml\t0\ttrue
//! ```
//!
//! The first line is the version header. The column header line is optional.
//! Labels are `true`/`false` (also `1`/`0`, `yes`/`no`).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::Path;

use thiserror::Error;

use crate::llm::CostReport;
use crate::verdict_file::{FlowRef, VerdictRecord};

pub const GROUND_TRUTH_HEADER: &str = "# policheck ground truth v1";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ground truth must start with `{GROUND_TRUTH_HEADER}`")]
    MissingHeader,
    #[error("ground truth line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("ground truth labels {0} more than once")]
    DuplicateTruth(FlowRef),
    #[error("verdicts list {0} more than once")]
    DuplicateVerdict(FlowRef),
    #[error("no ground truth for {}", list(.0))]
    MissingTruth(Vec<FlowRef>),
    #[error("a cost comparison needs at least two columns")]
    TooFewColumns,
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

fn list(flows: &[FlowRef]) -> String {
    flows.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundTruth {
    labels: BTreeMap<FlowRef, bool>,
}

fn parse_label(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

impl GroundTruth {
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first.trim() == GROUND_TRUTH_HEADER => {}
            _ => return Err(EvalError::MissingHeader),
        }
        let mut labels = BTreeMap::new();
        for (i, raw) in lines {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
            if cols == ["file", "record", "violation"] {
                continue;
            }
            let [file, record, label] = cols[..] else {
                return Err(EvalError::Line { line, reason: format!("expected 3 tab-separated columns, found {}", cols.len()) });
            };
            let record = record
                .parse()
                .map_err(|_| EvalError::Line { line, reason: format!("bad record ordinal `{record}`") })?;
            let label = parse_label(label).ok_or_else(|| EvalError::Line { line, reason: format!("bad label `{label}`") })?;
            let flow = FlowRef { file: file.to_string(), record };
            if labels.insert(flow.clone(), label).is_some() {
                return Err(EvalError::DuplicateTruth(flow));
            }
        }
        Ok(Self { labels })
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn from_labels(labels: impl IntoIterator<Item = (FlowRef, bool)>) -> Self {
        Self { labels: labels.into_iter().collect() }
    }

    pub fn label(&self, flow: &FlowRef) -> Option<bool> {
        self.labels.get(flow).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{GROUND_TRUTH_HEADER}\nfile\trecord\tviolation\n");
        for (flow, label) in &self.labels {
            let _ = writeln!(out, "{}\t{}\t{}", flow.file, flow.record, label);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.true_pos += 1,
            (true, false) => self.false_pos += 1,
            (false, false) => self.true_neg += 1,
            (false, true) => self.false_neg += 1,
        }
    }
}

/// Result of scoring one verdict file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scored {
    pub counts: ConfusionCounts,
    /// Ground-truth entries no verdict refers to; they do not affect the counts.
    pub unscored_truth: Vec<FlowRef>,
}

/// Scores violation-positive predictions. Every verdict must have a label.
pub fn score(verdicts: &[VerdictRecord], truth: &GroundTruth) -> Result<Scored, EvalError> {
    let mut seen = HashSet::new();
    let mut missing = Vec::new();
    let mut counts = ConfusionCounts::default();
    for v in verdicts {
        if !seen.insert(&v.flow) {
            return Err(EvalError::DuplicateVerdict(v.flow.clone()));
        }
        match truth.label(&v.flow) {
            Some(actual) => counts.add(v.violation, actual),
            None => missing.push(v.flow.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingTruth(missing));
    }
    let unscored_truth = truth.labels.keys().filter(|f| !seen.contains(f)).cloned().collect();
    Ok(Scored { counts, unscored_truth })
}

/// Percentages at full precision; `None` where the ratio is 0/0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den != 0).then(|| 100.0 * num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let precision = ratio(c.true_pos, c.true_pos + c.false_pos);
    let recall = ratio(c.true_pos, c.true_pos + c.false_neg);
    // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn) when tp > 0. With tp = 0 both P
    // and R are 0 (or undefined) and the harmonic mean is 0/0.
    let f1 = match (precision, recall) {
        (Some(_), Some(_)) if c.true_pos > 0 => ratio(2 * c.true_pos, 2 * c.true_pos + c.false_pos + c.false_neg),
        _ => None,
    };
    Metrics { precision, recall, f1 }
}

/// Two-decimal percentage, or `undefined`.
pub fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.2}"))
}

/// Side-by-side metrics for several scored verdict files.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub columns: Vec<(String, ConfusionCounts, Metrics)>,
}

impl MetricsTable {
    pub fn new(columns: Vec<(String, ConfusionCounts)>) -> Self {
        Self { columns: columns.into_iter().map(|(n, c)| { let m = metrics(&c); (n, c, m) }).collect() }
    }

    fn rows(&self) -> Vec<(&'static str, Vec<String>)> {
        let col = |f: &dyn Fn(&ConfusionCounts, &Metrics) -> String| {
            self.columns.iter().map(|(_, c, m)| f(c, m)).collect::<Vec<_>>()
        };
        vec![
            ("TP", col(&|c, _| c.true_pos.to_string())),
            ("FP", col(&|c, _| c.false_pos.to_string())),
            ("TN", col(&|c, _| c.true_neg.to_string())),
            ("FN", col(&|c, _| c.false_neg.to_string())),
            ("Precision (%)", col(&|_, m| fmt_pct(m.precision))),
            ("Recall (%)", col(&|_, m| fmt_pct(m.recall))),
            ("F1 (%)", col(&|_, m| fmt_pct(m.f1))),
        ]
    }

    pub fn to_text(&self) -> String {
        let header: Vec<String> = self.columns.iter().map(|(n, _, _)| n.clone()).collect();
        render_aligned("Metric", &header, &self.rows())
    }

    pub fn to_csv(&self) -> String {
        let header: Vec<String> = self.columns.iter().map(|(n, _, _)| n.clone()).collect();
        render_csv("metric", &header, &self.rows())
    }
}

/// Cost table with reductions of every later column relative to the first.
#[derive(Clone, Debug, PartialEq)]
pub struct CostComparison {
    pub names: Vec<String>,
    pub rows: Vec<CostRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostRow {
    pub label: &'static str,
    pub values: Vec<f64>,
    /// Percent reduction per column; the first entry is always `None`.
    pub reductions: Vec<Option<f64>>,
    decimals: usize,
}

pub fn reduction(base: f64, value: f64) -> Option<f64> {
    (base != 0.0).then(|| (1.0 - value / base) * 100.0)
}

/// One-decimal reduction, or `undefined`.
pub fn fmt_reduction(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.1}"))
}

pub fn compare_costs(columns: &[(String, CostReport)]) -> Result<CostComparison, EvalError> {
    if columns.len() < 2 {
        return Err(EvalError::TooFewColumns);
    }
    let metric = |label, decimals, f: &dyn Fn(&CostReport) -> f64| {
        let values: Vec<f64> = columns.iter().map(|(_, c)| f(c)).collect();
        let base = values[0];
        let reductions = values.iter().enumerate().map(|(i, &v)| if i == 0 { None } else { reduction(base, v) }).collect();
        CostRow { label, values, reductions, decimals }
    };
    let rows = vec![
        metric("Prompt tokens", 0, &|c| c.overall.prompt_tokens as f64),
        metric("Completion tokens", 0, &|c| c.overall.completion_tokens as f64),
        metric("Total tokens", 0, &|c| c.overall.total_tokens() as f64),
        metric("Model time (s)", 1, &|c| c.overall.elapsed_ms as f64 / 1000.0),
        metric("Wall-clock time (s)", 1, &|c| c.wall_clock_ms as f64 / 1000.0),
    ];
    Ok(CostComparison { names: columns.iter().map(|(n, _)| n.clone()).collect(), rows })
}

impl CostComparison {
    pub fn row(&self, label: &str) -> Option<&CostRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    fn header(&self) -> Vec<String> {
        let mut h = self.names.clone();
        h.extend(self.names.iter().skip(1).map(|n| format!("{n} reduction (%)")));
        h
    }

    fn table(&self) -> Vec<(&'static str, Vec<String>)> {
        self.rows
            .iter()
            .map(|r| {
                let mut cells: Vec<String> = r.values.iter().map(|v| format!("{v:.*}", r.decimals)).collect();
                cells.extend(r.reductions.iter().skip(1).map(|&x| fmt_reduction(x)));
                (r.label, cells)
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        render_aligned("Cost", &self.header(), &self.table())
    }

    pub fn to_csv(&self) -> String {
        render_csv("cost", &self.header(), &self.table())
    }
}

fn render_aligned(corner: &str, header: &[String], rows: &[(&str, Vec<String>)]) -> String {
    let first = rows.iter().map(|(l, _)| l.len()).chain([corner.len()]).max().unwrap_or(0);
    let widths: Vec<usize> = header
        .iter()
        .enumerate()
        .map(|(i, h)| rows.iter().map(|(_, cells)| cells[i].len()).chain([h.len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{corner:<first$}");
    for (h, w) in header.iter().zip(&widths) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    for (label, cells) in rows {
        let _ = write!(out, "{label:<first$}");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_csv(corner: &str, header: &[String], rows: &[(&str, Vec<String>)]) -> String {
    let mut out = std::iter::once(corner.to_string()).chain(header.iter().map(|h| csv_field(h))).collect::<Vec<_>>().join(",");
    out.push('\n');
    for (label, cells) in rows {
        let line = std::iter::once(csv_field(label)).chain(cells.iter().map(|c| csv_field(c))).collect::<Vec<_>>().join(",");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

impl fmt::Display for ConfusionCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tp={} fp={} tn={} fn={}", self.true_pos, self.false_pos, self.true_neg, self.false_neg)
    }
}

/// Violation rate per file, handy for spotting apps that dominate the counts.
pub fn violations_by_file(verdicts: &[VerdictRecord]) -> BTreeMap<String, (usize, usize)> {
    let mut out: HashMap<&str, (usize, usize)> = HashMap::new();
    for v in verdicts {
        let e = out.entry(&v.flow.file).or_default();
        e.1 += 1;
        if v.violation {
            e.0 += 1;
        }
    }
    out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
