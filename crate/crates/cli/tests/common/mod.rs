//! Shared corpus helpers for the CLI tests and the fixture recorder.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use policheck_core::llm::{ChatRequest, Completion, Transport, TransportError};
use serde::Deserialize;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn corpus_dir() -> PathBuf {
    fixtures_dir().join("corpus")
}

pub fn replay_fixture() -> PathBuf {
    corpus_dir().join("replay.json")
}

pub fn truth_file() -> PathBuf {
    corpus_dir().join("groundtruth.tsv")
}

#[derive(Debug, Deserialize)]
struct Manifest {
    app: Vec<AppEntry>,
}

#[derive(Debug, Deserialize)]
struct AppEntry {
    name: String,
    policy: String,
    xml: Vec<String>,
    baseline_chunk_chars: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct App {
    pub name: String,
    pub policy: PathBuf,
    pub xml: Vec<PathBuf>,
    pub baseline_chunk_chars: Option<usize>,
}

pub fn corpus() -> Vec<App> {
    let text = std::fs::read_to_string(corpus_dir().join("corpus.toml")).expect("corpus manifest");
    let manifest: Manifest = toml::from_str(&text).expect("corpus manifest parses");
    manifest
        .app
        .into_iter()
        .map(|a| {
            let dir = corpus_dir().join(&a.name);
            App {
                policy: dir.join(&a.policy),
                xml: a.xml.iter().map(|x| dir.join(x)).collect(),
                name: a.name,
                baseline_chunk_chars: a.baseline_chunk_chars,
            }
        })
        .collect()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

/// Runs one CLI invocation in-process and returns its exit code.
pub fn policheck(args: &[String], transport: Option<Arc<dyn Transport>>) -> i32 {
    policheck_output(args, transport).0
}

/// Runs one CLI invocation in-process, capturing stdout and stderr.
pub fn policheck_output(args: &[String], transport: Option<Arc<dyn Transport>>) -> (i32, String, String) {
    let mut full = vec!["policheck".to_string()];
    full.extend(args.iter().cloned());
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = policheck_cli::run_with(full, transport, &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
}

/// One step of the corpus pipeline with the exit code it returned.
#[derive(Clone, Debug)]
pub struct Step {
    pub args: Vec<String>,
    pub code: i32,
}

/// read-policy, extract-leaks, check (with model-polished reports) and
/// baseline for every app, then evaluate over the whole corpus. `model`
/// holds the backend flags.
pub fn run_pipeline(out: &Path, model: &[String], transport: Option<Arc<dyn Transport>>) -> Vec<Step> {
    let mut steps = Vec::new();
    let mut run = |args: Vec<String>| {
        let code = policheck(&args, transport.clone());
        steps.push(Step { args, code });
    };
    let mut hybrid_verdicts = Vec::new();
    let mut baseline_verdicts = Vec::new();
    let mut hybrid_ledgers = Vec::new();
    let mut baseline_ledgers = Vec::new();
    for app in corpus() {
        let policy_kg = out.join(format!("{}.policy.json", app.name));
        let leak_kg = out.join(format!("{}.leaks.json", app.name));
        let verdicts = out.join(format!("{}.verdicts.json", app.name));
        let baseline = out.join(format!("{}.baseline.json", app.name));

        let mut args = vec!["read-policy".to_string(), s(&app.policy), "-o".into(), s(&policy_kg)];
        args.extend(model.iter().cloned());
        run(args);

        let mut args = vec!["extract-leaks".to_string(), "-o".into(), s(&leak_kg)];
        args.extend(app.xml.iter().map(|p| s(p)));
        run(args);

        let mut args = vec![
            "check".to_string(),
            "--policy".into(),
            s(&policy_kg),
            "--leaks".into(),
            s(&leak_kg),
            "-o".into(),
            s(&verdicts),
            "--llm-report".into(),
            "--report-dir".into(),
            s(&out.join("reports").join(&app.name)),
        ];
        args.extend(model.iter().cloned());
        run(args);

        let mut args = vec!["baseline".to_string(), "--policy".into(), s(&app.policy), "-o".into(), s(&baseline)];
        if let Some(n) = app.baseline_chunk_chars {
            args.extend(["--chunk-chars".to_string(), n.to_string()]);
        }
        args.extend(app.xml.iter().map(|p| s(p)));
        args.extend(model.iter().cloned());
        run(args);

        hybrid_verdicts.push(verdicts.clone());
        baseline_verdicts.push(baseline.clone());
        hybrid_ledgers.push(policy_kg.with_extension("ledger.json"));
        hybrid_ledgers.push(verdicts.with_extension("ledger.json"));
        baseline_ledgers.push(baseline.with_extension("ledger.json"));
    }
    let mut args = vec!["evaluate".to_string(), "--truth".into(), s(&truth_file()), "--csv-dir".into(), s(&out.join("eval"))];
    for v in &baseline_verdicts {
        args.extend(["--verdicts".to_string(), format!("baseline={}", s(v))]);
    }
    for v in &hybrid_verdicts {
        args.extend(["--verdicts".to_string(), format!("hybrid={}", s(v))]);
    }
    for l in &baseline_ledgers {
        args.extend(["--ledger".to_string(), format!("baseline={}", s(l))]);
    }
    for l in &hybrid_ledgers {
        args.extend(["--ledger".to_string(), format!("hybrid={}", s(l))]);
    }
    run(args);
    steps
}

pub fn replay_flags() -> Vec<String> {
    vec!["--backend".into(), "replay".into(), "--fixture".into(), s(&replay_fixture())]
}

/// A transport that fails the test if anything tries to reach the network.
pub struct PanickingTransport;

impl Transport for PanickingTransport {
    fn chat(&self, _request: &ChatRequest<'_>) -> Result<Completion, TransportError> {
        panic!("network access attempted under the replay backend");
    }
}

/// Relative path → file bytes for every file under `dir`.
pub fn snapshot(dir: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
