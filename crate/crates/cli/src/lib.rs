//! The `policheck` command line.
//!
//! Exit codes: 0 success with no violations, 1 violations found (or every
//! input failed, or the run failed), 2 usage or configuration error.

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use policheck_core::baseline::{run_baseline, Baseline};
use policheck_core::checker::{check_all, render_report, Outcome};
use policheck_core::eval::{compare_costs, metrics, score, GroundTruth, MetricsTable};
use policheck_core::kg::{KgError, KgKind, KnowledgeGraph, Vocabulary};
use policheck_core::leaks::{extract_leak_kg, Classifier, RuleTables};
use policheck_core::llm::{ledger_totals, BackendKind, HttpTransport, LlmClient, Transport, UsageLedger, API_KEY_ENV};
use policheck_core::policy::{strip_html, PolicyReader};
use policheck_core::prompts::PromptCatalog;
use policheck_core::verdict_file::VerdictFile;
use thiserror::Error;

use config::{GlobalArgs, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad config, missing input files.
    #[error("{0}")]
    Usage(String),
    /// The command ran but could not finish.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

/// Where commands write their human-readable output.
pub struct Console<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

macro_rules! out {
    ($con:expr) => {{
        let _ = writeln!($con.out);
    }};
    ($con:expr, $($arg:tt)*) => {{
        let _ = writeln!($con.out, $($arg)*);
    }};
}

macro_rules! put {
    ($con:expr, $($arg:tt)*) => {{
        let _ = write!($con.out, $($arg)*);
    }};
}

macro_rules! err {
    ($con:expr, $($arg:tt)*) => {{
        let _ = writeln!($con.err, $($arg)*);
    }};
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

/// What a successful command found.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Clean,
    Violations,
    AllInputsFailed,
    UndefinedMetric,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Clean => 0,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "policheck", version, about = "Check Android app data flows against privacy policies")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a policy graph from a privacy policy text
    ReadPolicy(ReadPolicyArgs),
    /// Build a leak graph from FlowDroid result files
    ExtractLeaks(ExtractLeaksArgs),
    /// Check a leak graph against a policy graph
    Check(CheckArgs),
    /// Run the model-only comparison pipeline
    Baseline(BaselineArgs),
    /// Score verdict files and compare cost ledgers
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct ReadPolicyArgs {
    pub policy: PathBuf,
    /// Output graph (`.json` or `.jsonl`)
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Remove HTML tags and collapse whitespace first
    #[arg(long)]
    pub strip_html: bool,
}

#[derive(Debug, Args)]
pub struct ExtractLeaksArgs {
    #[arg(required = true)]
    pub xml: Vec<PathBuf>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Ask the model to classify flows before falling back to the rule tables
    #[arg(long)]
    pub llm: bool,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub leaks: PathBuf,
    /// Output verdict file
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Write a template report per violation
    #[arg(long)]
    pub report: bool,
    /// Also have the model rewrite each report (needs a backend)
    #[arg(long)]
    pub llm_report: bool,
    /// Concatenate all reports into one file
    #[arg(long)]
    pub single_file: bool,
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Privacy policy text
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(required = true)]
    pub xml: Vec<PathBuf>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub strip_html: bool,
    /// Maximum characters of XML per stage-1 request
    #[arg(long)]
    pub chunk_chars: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth file
    #[arg(long)]
    pub truth: PathBuf,
    /// NAME=FILE; repeating a NAME merges the files into one column
    #[arg(long = "verdicts", value_name = "NAME=FILE", required = true)]
    pub verdicts: Vec<String>,
    /// NAME=FILE ledger; repeating a NAME merges the ledgers. The first NAME is the reference column.
    #[arg(long = "ledger", value_name = "NAME=FILE")]
    pub ledgers: Vec<String>,
    /// Also write metrics.csv (and costs.csv) here
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
}

/// Loaded tables, prompts and (optionally) a model client.
pub struct Context {
    pub config: RunConfig,
    pub vocab: Vocabulary,
    pub rules: RuleTables,
    pub catalog: PromptCatalog,
    transport: Option<Arc<dyn Transport>>,
}

impl Context {
    pub fn new(config: RunConfig, transport: Option<Arc<dyn Transport>>) -> Result<Self, CliError> {
        let table_err = |e: KgError| CliError::Usage(format!("data tables: {e}"));
        let (vocab, rules) = match &config.data_dir {
            Some(dir) => (Vocabulary::from_dir(dir).map_err(table_err)?, RuleTables::from_dir(dir).map_err(table_err)?),
            None => (Vocabulary::default(), RuleTables::default()),
        };
        let catalog = match &config.prompt_dir {
            Some(dir) => PromptCatalog::from_dir(dir, &config.prompt_version),
            None => PromptCatalog::builtin(&config.prompt_version),
        }
        .map_err(|e| CliError::Usage(format!("prompts: {e}")))?;
        Ok(Self { config, vocab, rules, catalog, transport })
    }

    /// Model client for commands that need one. Fails with a usage error
    /// when no backend is configured.
    pub fn client(&self, purpose: &str) -> Result<LlmClient, CliError> {
        if self.config.backend.is_none() {
            return Err(CliError::Usage(format!("{purpose} needs a model backend (--backend live|replay|record)")));
        }
        // An injected transport is passed through even under replay, where
        // the client must never call it.
        let transport = match (&self.transport, self.config.llm.backend) {
            (Some(t), _) => Some(t.clone()),
            (None, BackendKind::Replay) => None,
            (None, _) => Some(Arc::new(HttpTransport::new(
                &self.config.llm.base_url,
                std::env::var(API_KEY_ENV).ok(),
                self.config.llm.timeout,
            )) as Arc<dyn Transport>),
        };
        LlmClient::new(self.config.llm.clone(), transport).map_err(|e| CliError::Usage(e.to_string()))
    }

    fn out_path(&self, explicit: &Option<PathBuf>, default_name: &str) -> Result<PathBuf, CliError> {
        let path = explicit.clone().unwrap_or_else(|| self.config.out_dir.join(default_name));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| failed(format!("{}: {e}", parent.display())))?;
        }
        Ok(path)
    }
}

/// `out.json` → `out.ledger.json`.
pub fn ledger_sidecar(out: &Path) -> PathBuf {
    out.with_extension("ledger.json")
}

fn finish_model_run(client: &LlmClient, out: &Path, con: &mut Console<'_>) -> Result<(), CliError> {
    let sidecar = ledger_sidecar(out);
    client.ledger().save(&sidecar).map_err(failed)?;
    client.save_fixture().map_err(failed)?;
    out!(con, "ledger: {}", sidecar.display());
    Ok(())
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} not found: {}", path.display())))
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "out".to_string(), |s| s.to_string_lossy().into_owned())
}

fn read_text(path: &Path, strip: bool) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| failed(format!("{}: {e}", path.display())))?;
    Ok(if strip { strip_html(&text) } else { text })
}

pub fn cmd_read_policy(ctx: &Context, args: &ReadPolicyArgs, con: &mut Console<'_>) -> Result<Status, CliError> {
    require_file(&args.policy, "policy file")?;
    let client = ctx.client("read-policy")?;
    let doc = read_text(&args.policy, args.strip_html)?;
    let out = ctx.out_path(&args.out, &format!("{}.policy.json", stem(&args.policy)))?;
    let read = PolicyReader::new(&client, &ctx.catalog, &ctx.vocab).read_policy(&doc).map_err(failed)?;
    for w in &read.warnings {
        err!(con, "warning: {w}");
    }
    read.kg.save(&out).map_err(failed)?;
    out!(con, "{}: {} segments, {} triples -> {}", args.policy.display(), read.segments, read.kg.len(), out.display());
    finish_model_run(&client, &out, con)?;
    Ok(Status::Clean)
}

pub fn cmd_extract_leaks(ctx: &Context, args: &ExtractLeaksArgs, con: &mut Console<'_>) -> Result<Status, CliError> {
    for p in &args.xml {
        require_file(p, "FlowDroid file")?;
    }
    let client = if args.llm { Some(ctx.client("extract-leaks --llm")?) } else { None };
    let classifier = match &client {
        Some(c) => Classifier::with_model(&ctx.rules, &ctx.vocab, c, &ctx.catalog),
        None => Classifier::rules_only(&ctx.rules, &ctx.vocab),
    };
    let extraction = extract_leak_kg(&args.xml, &classifier).map_err(failed)?;
    for f in &extraction.files {
        match &f.error {
            Some(e) => out!(con, "{}: failed ({e})", f.path.display()),
            None => out!(con, 
                "{}: {} records, {} record errors, {} classified, {} unclassifiable",
                f.path.display(),
                f.records,
                f.record_errors.len(),
                f.classified,
                f.unclassifiable
            ),
        }
    }
    for w in &extraction.warnings {
        err!(con, "warning: {w}");
    }
    if extraction.all_failed() {
        err!(con, "error: no input file could be parsed");
        return Ok(Status::AllInputsFailed);
    }
    let default_name = match args.xml.as_slice() {
        [one] => format!("{}.leaks.json", stem(one)),
        _ => "leaks.json".to_string(),
    };
    let out = ctx.out_path(&args.out, &default_name)?;
    extraction.kg.save(&out).map_err(failed)?;
    out!(con, "{} leak triples -> {}", extraction.kg.len(), out.display());
    if let Some(c) = &client {
        finish_model_run(c, &out, con)?;
    }
    Ok(Status::Clean)
}

fn load_graph(ctx: &Context, path: &Path, kind: KgKind) -> Result<KnowledgeGraph, CliError> {
    require_file(path, &format!("{} graph", kind.as_str()))?;
    KnowledgeGraph::load_kind(path, ctx.vocab.taxonomy(), kind).map_err(|e| match e {
        KgError::WrongGraph { .. } => CliError::Usage(format!("{}: {e}", path.display())),
        other => failed(format!("{}: {other}", path.display())),
    })
}

pub fn cmd_check(ctx: &Context, args: &CheckArgs, con: &mut Console<'_>) -> Result<Status, CliError> {
    let client = if args.llm_report { Some(ctx.client("check --llm-report")?) } else { None };
    let policy = load_graph(ctx, &args.policy, KgKind::PolicyKG)?;
    let leaks = load_graph(ctx, &args.leaks, KgKind::LeakKG)?;
    let outcome = check_all(&leaks, &policy).map_err(|e| CliError::Usage(e.to_string()))?;
    for c in &outcome.conflicts {
        err!(con, "warning: {c}");
    }
    let out = ctx.out_path(&args.out, "verdicts.json")?;
    VerdictFile::from_verdicts(&outcome.verdicts).map_err(failed)?.save(&out).map_err(failed)?;

    let count = |o: Outcome| outcome.verdicts.iter().filter(|v| v.outcome == o).count();
    out!(con, 
        "{} leaks: {} consistent, {} contradicted, {} undeclared -> {}",
        outcome.verdicts.len(),
        count(Outcome::Consistent),
        count(Outcome::Contradicted),
        count(Outcome::Undeclared),
        out.display()
    );

    if args.report || args.llm_report {
        let violations: Vec<_> = outcome.verdicts.iter().filter(|v| v.outcome.is_violation()).collect();
        let model = client.as_ref().map(|c| (c, &ctx.catalog));
        let render = |v: &&policheck_core::checker::Verdict| render_report(v, model);
        let reports = match &client {
            Some(c) => c.map_parallel(&violations, render),
            None => violations.iter().map(render).collect(),
        };
        let dir = args.report_dir.clone().unwrap_or_else(|| out.parent().unwrap_or(Path::new(".")).join("reports"));
        std::fs::create_dir_all(&dir).map_err(|e| failed(format!("{}: {e}", dir.display())))?;
        let mut combined = String::new();
        for (v, report) in violations.iter().zip(reports) {
            let report = report.map_err(failed)?;
            if let Some(w) = &report.warning {
                err!(con, "warning: {w}");
            }
            if args.single_file {
                if !combined.is_empty() {
                    combined.push_str("\n----\n\n");
                }
                combined.push_str(&report.text());
            } else {
                let name = v.leak.provenance.to_string().replace(['#', '/', '\\', ' '], "_");
                let path = dir.join(format!("{name}.txt"));
                std::fs::write(&path, report.text()).map_err(|e| failed(format!("{}: {e}", path.display())))?;
            }
        }
        if args.single_file {
            let path = dir.join("reports.txt");
            std::fs::write(&path, combined).map_err(|e| failed(format!("{}: {e}", path.display())))?;
        }
        out!(con, "{} reports -> {}", violations.len(), dir.display());
    }
    if let Some(c) = &client {
        finish_model_run(c, &out, con)?;
    }
    Ok(if outcome.verdicts.iter().any(|v| v.outcome.is_violation()) { Status::Violations } else { Status::Clean })
}

pub fn cmd_baseline(ctx: &Context, args: &BaselineArgs, con: &mut Console<'_>) -> Result<Status, CliError> {
    require_file(&args.policy, "policy file")?;
    for p in &args.xml {
        require_file(p, "FlowDroid file")?;
    }
    let client = ctx.client("baseline")?;
    let policy = read_text(&args.policy, args.strip_html)?;
    let out = ctx.out_path(&args.out, &format!("{}.baseline.json", stem(&args.policy)))?;
    let mut baseline = Baseline::new(&client, &ctx.catalog);
    if let Some(n) = args.chunk_chars {
        baseline = baseline.with_chunk_chars(n);
    }
    let run = run_baseline(&baseline, &args.xml, &policy).map_err(failed)?;
    for w in &run.warnings {
        err!(con, "warning: {w}");
    }
    run.verdicts.save(&out).map_err(failed)?;
    out!(con, 
        "{} methods judged, {} of {} records flagged -> {}",
        run.judgments.len(),
        run.verdicts.violations(),
        run.verdicts.verdicts.len(),
        out.display()
    );
    finish_model_run(&client, &out, con)?;
    Ok(if run.verdicts.violations() > 0 { Status::Violations } else { Status::Clean })
}

/// Parses repeated `NAME=FILE` flags into columns in first-seen order.
fn named_files(values: &[String], flag: &str) -> Result<Vec<(String, Vec<PathBuf>)>, CliError> {
    let mut columns: Vec<(String, Vec<PathBuf>)> = Vec::new();
    for v in values {
        let (name, file) = v
            .split_once('=')
            .filter(|(n, f)| !n.is_empty() && !f.is_empty())
            .ok_or_else(|| CliError::Usage(format!("--{flag} expects NAME=FILE, got `{v}`")))?;
        let path = PathBuf::from(file);
        require_file(&path, flag)?;
        match columns.iter_mut().find(|(n, _)| n == name) {
            Some((_, files)) => files.push(path),
            None => columns.push((name.to_string(), vec![path])),
        }
    }
    Ok(columns)
}

pub fn cmd_evaluate(_ctx: &Context, args: &EvaluateArgs, con: &mut Console<'_>) -> Result<Status, CliError> {
    require_file(&args.truth, "ground-truth file")?;
    let truth = GroundTruth::load(&args.truth).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut counts = Vec::new();
    for (name, files) in named_files(&args.verdicts, "verdicts")? {
        let mut verdicts = Vec::new();
        for f in &files {
            let file = VerdictFile::load(f).map_err(|e| CliError::Usage(format!("{}: {e}", f.display())))?;
            verdicts.extend(file.verdicts);
        }
        let scored = score(&verdicts, &truth).map_err(|e| CliError::Usage(format!("{name}: {e}")))?;
        if !scored.unscored_truth.is_empty() {
            err!(con, "note: {name}: {} ground-truth entries have no verdict and were not scored", scored.unscored_truth.len());
        }
        counts.push((name, scored.counts));
    }
    let table = MetricsTable::new(counts);
    put!(con, "{}", table.to_text());

    let ledger_columns = named_files(&args.ledgers, "ledger")?;
    let costs = if ledger_columns.is_empty() {
        None
    } else {
        let mut reports = Vec::new();
        for (name, files) in ledger_columns {
            let ledgers = files
                .iter()
                .map(|f| UsageLedger::load(f).map_err(|e| CliError::Usage(format!("{}: {e}", f.display()))))
                .collect::<Result<Vec<_>, _>>()?;
            reports.push((name, ledger_totals(&UsageLedger::merge(&ledgers))));
        }
        let cmp = compare_costs(&reports).map_err(|e| CliError::Usage(e.to_string()))?;
        out!(con);
        put!(con, "{}", cmp.to_text());
        Some(cmp)
    };

    if let Some(dir) = &args.csv_dir {
        std::fs::create_dir_all(dir).map_err(|e| failed(format!("{}: {e}", dir.display())))?;
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| failed(format!("{}: {e}", path.display())))
        };
        write("metrics.csv", table.to_csv())?;
        if let Some(cmp) = &costs {
            write("costs.csv", cmp.to_csv())?;
        }
    }

    let undefined = table.columns.iter().any(|(_, c, _)| {
        let m = metrics(c);
        m.precision.is_none() || m.recall.is_none() || m.f1.is_none()
    });
    if undefined {
        err!(con, "error: at least one metric is undefined");
        return Ok(Status::UndefinedMetric);
    }
    Ok(Status::Clean)
}

pub fn execute(cli: &Cli, transport: Option<Arc<dyn Transport>>, con: &mut Console<'_>) -> Result<Status, CliError> {
    let config = RunConfig::resolve(&cli.global)?;
    let ctx = Context::new(config, transport)?;
    match &cli.command {
        Command::ReadPolicy(a) => cmd_read_policy(&ctx, a, con),
        Command::ExtractLeaks(a) => cmd_extract_leaks(&ctx, a, con),
        Command::Check(a) => cmd_check(&ctx, a, con),
        Command::Baseline(a) => cmd_baseline(&ctx, a, con),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a, con),
    }
}

/// Parses `args` (including the program name) and runs the command with
/// the process's standard streams. `transport` replaces the HTTP transport
/// for live and record backends.
pub fn run<I, T>(args: I, transport: Option<Arc<dyn Transport>>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, transport, &mut std::io::stdout(), &mut std::io::stderr())
}

/// Like [`run`], writing human-readable output to `out` and `err`.
pub fn run_with<I, T>(args: I, transport: Option<Arc<dyn Transport>>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return 2;
            }
            let _ = write!(out, "{}", e.render());
            return 0;
        }
    };
    let mut con = Console { out, err };
    match execute(&cli, transport, &mut con) {
        Ok(status) => status.exit_code(),
        Err(e) => {
            let _ = writeln!(con.err, "error: {e}");
            e.exit_code()
        }
    }
}
