//! Exit-code contract and file outputs of every subcommand.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use common::{fixtures_dir, policheck, replay_fixture, replay_flags, run_pipeline, PanickingTransport};
use policheck_core::verdict_file::{RecordedOutcome, VerdictFile};
use policheck_core::{Action, Actor, KgKind, KnowledgeGraph, Provenance, Taxonomy, Triple};

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn args(items: &[&str]) -> Vec<String> {
    items.iter().map(|a| a.to_string()).collect()
}

fn flowdroid(name: &str) -> PathBuf {
    fixtures_dir().join("flowdroid").join(name)
}

fn app01() -> PathBuf {
    fixtures_dir().join("corpus/app01_sunnyday")
}

fn graph(kind: KgKind, items: &[(Actor, Action, &str)]) -> KnowledgeGraph {
    let taxonomy = Taxonomy::default();
    let mut kg = KnowledgeGraph::new(kind);
    for (i, (actor, action, data)) in items.iter().enumerate() {
        let provenance = match kind {
            KgKind::PolicyKG => Provenance::Segment { index: i },
            KgKind::LeakKG => Provenance::Flow { file: "app.xml".into(), record: i },
        };
        kg.insert(Triple::new(actor.clone(), *action, taxonomy.data_type(data).unwrap(), provenance).unwrap()).unwrap();
    }
    kg
}

fn write_graph(dir: &Path, name: &str, kg: &KnowledgeGraph) -> PathBuf {
    let path = dir.join(name);
    kg.save(&path).unwrap();
    path
}

#[test]
fn read_policy_missing_file_names_the_path() {
    let output = Command::new(env!("CARGO_BIN_EXE_policheck"))
        .args(["read-policy", "no/such/policy.txt", "--backend", "replay", "--fixture"])
        .arg(replay_fixture())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("no/such/policy.txt"));
}

#[test]
fn read_policy_needs_a_backend() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.json");
    let code = policheck(&args(&["read-policy", &s(&app01().join("policy.txt")), "-o", &s(&out)]), None);
    assert_eq!(code, 2);
    assert!(!out.exists());
}

#[test]
fn read_policy_replay_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("p{run}.json"));
        let mut a = args(&["read-policy", &s(&app01().join("policy.txt")), "-o", &s(&out)]);
        a.extend(replay_flags());
        assert_eq!(policheck(&a, Some(Arc::new(PanickingTransport))), 0);
        digests.push((std::fs::read(&out).unwrap(), std::fs::read(out.with_extension("ledger.json")).unwrap()));
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn unknown_backend_is_a_usage_error() {
    let a = args(&["read-policy", &s(&app01().join("policy.txt")), "--backend", "carrier-pigeon"]);
    assert_eq!(policheck(&a, None), 2);
}

#[test]
fn replay_without_fixture_is_a_usage_error() {
    let a = args(&["read-policy", &s(&app01().join("policy.txt")), "--backend", "replay"]);
    assert_eq!(policheck(&a, None), 2);
}

#[test]
fn bad_flags_exit_2_and_help_exits_0() {
    assert_eq!(policheck(&args(&["frobnicate"]), None), 2);
    assert_eq!(policheck(&args(&["check", "--policy"]), None), 2);
    assert_eq!(policheck(&args(&["--help"]), None), 0);
}

#[test]
fn extract_leaks_partial_failure_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("leaks.json");
    let a = args(&["extract-leaks", &s(&flowdroid("single_flow.xml")), &s(&flowdroid("malformed.xml")), "-o", &s(&out)]);
    assert_eq!(policheck(&a, None), 0);
    let kg = KnowledgeGraph::load_kind(&out, &Taxonomy::default(), KgKind::LeakKG).unwrap();
    assert_eq!(kg.len(), 1);
    assert_eq!(kg.triples()[0].provenance, Provenance::Flow { file: "single_flow.xml".into(), record: 0 });
}

#[test]
fn extract_leaks_all_malformed_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("leaks.json");
    let a = args(&["extract-leaks", &s(&flowdroid("malformed.xml")), "-o", &s(&out)]);
    assert_eq!(policheck(&a, None), 1);
    assert!(!out.exists());
}

#[test]
fn extract_leaks_missing_file_exits_2() {
    assert_eq!(policheck(&args(&["extract-leaks", "no/such/file.xml"]), None), 2);
}

#[test]
fn extract_leaks_prints_one_line_per_corpus_file() {
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<PathBuf> = common::corpus().into_iter().flat_map(|a| a.xml).collect();
    assert_eq!(files.len(), 17);
    let output = Command::new(env!("CARGO_BIN_EXE_policheck"))
        .arg("extract-leaks")
        .args(&files)
        .arg("-o")
        .arg(dir.path().join("all.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    for f in &files {
        assert_eq!(stdout.lines().filter(|l| l.starts_with(&format!("{}: ", f.display()))).count(), 1, "{stdout}");
    }
}

#[test]
fn check_disjoint_graphs_are_all_undeclared() {
    let dir = tempfile::tempdir().unwrap();
    let policy = write_graph(dir.path(), "p.json", &graph(KgKind::PolicyKG, &[(Actor::FirstParty, Action::COLLECT, "email_address")]));
    let leaks = write_graph(
        dir.path(),
        "l.json",
        &graph(KgKind::LeakKG, &[(Actor::FirstParty, Action::SHARE, "location"), (Actor::third_party("adnet"), Action::SHARE, "device_id")]),
    );
    let out = dir.path().join("v.json");
    assert_eq!(policheck(&args(&["check", "--policy", &s(&policy), "--leaks", &s(&leaks), "-o", &s(&out)]), None), 1);
    let file = VerdictFile::load(&out).unwrap();
    assert_eq!(file.verdicts.len(), 2);
    assert!(file.verdicts.iter().all(|v| v.violation && v.outcome == RecordedOutcome::Undeclared));
}

#[test]
fn check_consistent_graphs_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    let policy = write_graph(
        dir.path(),
        "p.json",
        &graph(KgKind::PolicyKG, &[(Actor::FirstParty, Action::SHARE, "location"), (Actor::ThirdParty(None), Action::SHARE, "device_id")]),
    );
    let leaks = write_graph(
        dir.path(),
        "l.json",
        &graph(KgKind::LeakKG, &[(Actor::FirstParty, Action::SHARE, "location"), (Actor::third_party("adnet"), Action::SHARE, "device_id")]),
    );
    let out = dir.path().join("v.json");
    let code = policheck(&args(&["check", "--policy", &s(&policy), "--leaks", &s(&leaks), "-o", &s(&out), "--report"]), None);
    assert_eq!(code, 0);
    assert_eq!(VerdictFile::load(&out).unwrap().violations(), 0);
    assert_eq!(std::fs::read_dir(dir.path().join("reports")).unwrap().count(), 0);
}

#[test]
fn check_writes_template_reports() {
    let dir = tempfile::tempdir().unwrap();
    let policy = write_graph(dir.path(), "p.json", &graph(KgKind::PolicyKG, &[(Actor::FirstParty, Action::NOT_SHARE, "location")]));
    let leaks = write_graph(
        dir.path(),
        "l.json",
        &graph(KgKind::LeakKG, &[(Actor::FirstParty, Action::SHARE, "location"), (Actor::FirstParty, Action::COLLECT, "imei")]),
    );
    let out = dir.path().join("v.json");
    let code = policheck(&args(&["check", "--policy", &s(&policy), "--leaks", &s(&leaks), "-o", &s(&out), "--report"]), None);
    assert_eq!(code, 1);
    let contradicted = std::fs::read_to_string(dir.path().join("reports/app.xml_0.txt")).unwrap();
    assert!(contradicted.contains("policy sentence #0"), "{contradicted}");
    let undeclared = std::fs::read_to_string(dir.path().join("reports/app.xml_1.txt")).unwrap();
    assert!(undeclared.contains("Policy statement: none."), "{undeclared}");

    let single = dir.path().join("single");
    let a = args(&["check", "--policy", &s(&policy), "--leaks", &s(&leaks), "-o", &s(&out), "--report", "--single-file", "--report-dir", &s(&single)]);
    assert_eq!(policheck(&a, None), 1);
    assert_eq!(std::fs::read_to_string(single.join("reports.txt")).unwrap().matches("Observed flow:").count(), 2);
}

#[test]
fn check_llm_report_without_backend_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let policy = write_graph(dir.path(), "p.json", &graph(KgKind::PolicyKG, &[]));
    let leaks = write_graph(dir.path(), "l.json", &graph(KgKind::LeakKG, &[(Actor::FirstParty, Action::SHARE, "location")]));
    let a = args(&["check", "--policy", &s(&policy), "--leaks", &s(&leaks), "--llm-report", "-o", &s(&dir.path().join("v.json"))]);
    assert_eq!(policheck(&a, None), 2);
}

#[test]
fn check_rejects_swapped_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let policy = write_graph(dir.path(), "p.json", &graph(KgKind::PolicyKG, &[(Actor::FirstParty, Action::SHARE, "location")]));
    let leaks = write_graph(dir.path(), "l.json", &graph(KgKind::LeakKG, &[(Actor::FirstParty, Action::SHARE, "location")]));
    let a = args(&["check", "--policy", &s(&leaks), "--leaks", &s(&policy), "-o", &s(&dir.path().join("v.json"))]);
    assert_eq!(policheck(&a, None), 2);
}

#[test]
fn check_missing_graph_exits_2() {
    let a = args(&["check", "--policy", "no/p.json", "--leaks", "no/l.json"]);
    assert_eq!(policheck(&a, None), 2);
}

fn write_truth(dir: &Path, rows: &[(&str, usize, bool)]) -> PathBuf {
    let mut text = String::from("# policheck ground truth v1\nfile\trecord\tviolation\n");
    for (f, r, v) in rows {
        text.push_str(&format!("{f}\t{r}\t{v}\n"));
    }
    let path = dir.join("truth.tsv");
    std::fs::write(&path, text).unwrap();
    path
}

fn verdicts_for(dir: &Path, name: &str, leaks: &[(Actor, Action, &str)], policy: &[(Actor, Action, &str)]) -> PathBuf {
    let p = write_graph(dir, &format!("{name}.p.json"), &graph(KgKind::PolicyKG, policy));
    let l = write_graph(dir, &format!("{name}.l.json"), &graph(KgKind::LeakKG, leaks));
    let out = dir.join(format!("{name}.v.json"));
    policheck(&args(&["check", "--policy", &s(&p), "--leaks", &s(&l), "-o", &s(&out)]), None);
    out
}

#[test]
fn evaluate_missing_truth_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let v = verdicts_for(dir.path(), "a", &[(Actor::FirstParty, Action::SHARE, "location"), (Actor::FirstParty, Action::SHARE, "imei")], &[]);
    let truth = write_truth(dir.path(), &[("app.xml", 0, true)]);
    let output = Command::new(env!("CARGO_BIN_EXE_policheck"))
        .args(["evaluate", "--truth", &s(&truth), "--verdicts", &format!("a={}", s(&v))])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("app.xml#1"));
}

#[test]
fn evaluate_two_columns_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let leaks = [(Actor::FirstParty, Action::SHARE, "location"), (Actor::FirstParty, Action::SHARE, "imei")];
    let strict = verdicts_for(dir.path(), "strict", &leaks, &[]);
    let lenient = verdicts_for(dir.path(), "lenient", &leaks, &[(Actor::FirstParty, Action::SHARE, "imei")]);
    let truth = write_truth(dir.path(), &[("app.xml", 0, true), ("app.xml", 1, false)]);
    let csv = dir.path().join("eval");
    let a = args(&[
        "evaluate",
        "--truth",
        &s(&truth),
        "--verdicts",
        &format!("strict={}", s(&strict)),
        "--verdicts",
        &format!("lenient={}", s(&lenient)),
        "--csv-dir",
        &s(&csv),
    ]);
    assert_eq!(policheck(&a, None), 0);
    let metrics = std::fs::read_to_string(csv.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,strict,lenient\n"), "{metrics}");
    assert!(metrics.contains("Precision (%),50.00,100.00"), "{metrics}");
    assert!(!csv.join("costs.csv").exists());
}

#[test]
fn evaluate_undefined_metric_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let v = verdicts_for(dir.path(), "a", &[(Actor::FirstParty, Action::SHARE, "location")], &[(Actor::FirstParty, Action::SHARE, "location")]);
    let truth = write_truth(dir.path(), &[("app.xml", 0, false)]);
    let a = args(&["evaluate", "--truth", &s(&truth), "--verdicts", &format!("a={}", s(&v))]);
    assert_eq!(policheck(&a, None), 1);
}

#[test]
fn evaluate_bad_truth_header_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let v = verdicts_for(dir.path(), "a", &[(Actor::FirstParty, Action::SHARE, "location")], &[]);
    let truth = dir.path().join("truth.tsv");
    std::fs::write(&truth, "app.xml\t0\ttrue\n").unwrap();
    let a = args(&["evaluate", "--truth", &s(&truth), "--verdicts", &format!("a={}", s(&v))]);
    assert_eq!(policheck(&a, None), 2);
}

#[test]
fn config_file_is_merged_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(replay_fixture(), dir.path().join("replay.json")).unwrap();
    let config = dir.path().join("policheck.toml");
    std::fs::write(&config, "backend = \"replay\"\nfixture = \"replay.json\"\nparallelism = 0\nout_dir = \"out\"\n").unwrap();
    let policy = s(&app01().join("policy.txt"));

    // parallelism = 0 in the file is invalid on its own.
    assert_eq!(policheck(&args(&["read-policy", &policy, "--config", &s(&config)]), None), 2);

    let a = args(&["read-policy", &policy, "--config", &s(&config), "--parallelism", "2"]);
    assert_eq!(policheck(&a, Some(Arc::new(PanickingTransport))), 0);
    assert!(dir.path().join("out/policy.policy.json").is_file());
    assert!(dir.path().join("out/policy.policy.ledger.json").is_file());
}

#[test]
fn config_file_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("policheck.toml");
    std::fs::write(&config, "api_key = \"sk-nope\"\n").unwrap();
    let a = args(&["read-policy", &s(&app01().join("policy.txt")), "--config", &s(&config)]);
    assert_eq!(policheck(&a, None), 2);
}

#[test]
fn replay_pipeline_never_touches_the_transport() {
    let dir = tempfile::tempdir().unwrap();
    let steps = run_pipeline(dir.path(), &replay_flags(), Some(Arc::new(PanickingTransport)));
    for step in &steps {
        assert!(step.code < 2, "{:?} exited {}", step.args, step.code);
    }
    for app in common::corpus() {
        for sidecar in ["policy.ledger.json", "verdicts.ledger.json", "baseline.ledger.json"] {
            assert!(dir.path().join(format!("{}.{sidecar}", app.name)).is_file(), "{} {sidecar}", app.name);
        }
    }
    assert!(dir.path().join("eval/costs.csv").is_file());
}
