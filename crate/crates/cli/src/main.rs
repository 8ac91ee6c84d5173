use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use ged_evolve::evolution::{
    resume_evolution, run_evolution, CandidateGenerator, Checkpoint, EvolutionConfig, EvolutionError, LlmBackend,
    LlmConfig, SeededMutator,
};
use ged_evolve::harness::corpus::generate_records;
use ged_evolve::harness::{
    emr, infer, read_pairs, rmse, write_pairs, CorpusKind, EvalReport, GraphPair, HarnessError, InferOptions,
    PairRecord,
};
use ged_evolve::program::{ExternalRunner, PriorityProgram, ProgramId, ProgramKind, RunnerError, SandboxConfig};
use ged_evolve::selection::{evaluate_row, greedy_select, BoundTable, EnsembleManifest, SelectionError, TrainCorpus};
use ged_evolve::program::Builtin;
use ged_evolve::{exact_ged, Execution, GedValue, GraphError, Matcher, MatcherKind};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_BACKEND: u8 = 4;
const EXIT_INTERNAL: u8 = 5;

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CliResult<T = ()> = Result<T, Failure>;

fn fail(code: u8) -> impl FnOnce(anyhow::Error) -> Failure {
    move |error| Failure { code, error }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error: anyhow!(msg.into()),
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = match e {
            HarnessError::Runner(_) => EXIT_INTERNAL,
            _ => EXIT_DATA,
        };
        Failure { code, error: e.into() }
    }
}

impl From<SelectionError> for Failure {
    fn from(e: SelectionError) -> Self {
        let code = match e {
            SelectionError::Runner(_) => EXIT_INTERNAL,
            SelectionError::ZeroBudget | SelectionError::NoCandidates => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Failure { code, error: e.into() }
    }
}

impl From<EvolutionError> for Failure {
    fn from(e: EvolutionError) -> Self {
        let code = match e {
            EvolutionError::BackendUnavailable { .. } => EXIT_BACKEND,
            EvolutionError::Config(_) => EXIT_USAGE,
            EvolutionError::Runner(_) => EXIT_INTERNAL,
            EvolutionError::Selection(SelectionError::Runner(_)) => EXIT_INTERNAL,
            _ => EXIT_DATA,
        };
        Failure { code, error: e.into() }
    }
}

impl From<RunnerError> for Failure {
    fn from(e: RunnerError) -> Self {
        Failure {
            code: EXIT_INTERNAL,
            error: e.into(),
        }
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        Failure {
            code: EXIT_DATA,
            error: e.into(),
        }
    }
}

#[derive(Parser)]
#[command(name = "ged-evolve", version, about = "Graph edit distance bounds from evolved priority programs")]
struct Cli {
    /// TOML configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact distances for a pairs file (graphs up to the node limit).
    Oracle(OracleArgs),
    /// Write a seeded toy corpus with exact distances.
    Corpus(CorpusArgs),
    /// Evolve priority programs on a training corpus.
    Evolve(EvolveArgs),
    /// Greedy ensemble selection over a directory of programs.
    Select(SelectArgs),
    /// Predict distances with an ensemble.
    Infer(InferArgs),
    /// Score predictions against truths.
    Eval(EvalArgs),
    /// Timing report for exact search and ensemble inference.
    Bench(BenchArgs),
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Output pairs file with `true_ged` filled in; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = ged_evolve::DEFAULT_NODE_LIMIT)]
    node_limit: usize,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    kind: CorpusKind,
    #[arg(long, default_value_t = ged_evolve::harness::corpus::CORPUS_SEED)]
    seed: u64,
    #[arg(long, default_value_t = ged_evolve::harness::corpus::CORPUS_PAIRS)]
    pairs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Backend {
    Mutator,
    Llm,
}

#[derive(Args)]
struct EvolveArgs {
    /// Training pairs (truths, if present, are ignored).
    #[arg(long)]
    pairs: PathBuf,
    /// Output directory for the manifest, checkpoint and programs.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    backend: Option<Backend>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    matcher: Option<MatcherKind>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    /// Directory of `*.json` program records and `*.py` sources.
    #[arg(long)]
    programs: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    /// Output directory (or file) for the manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    matcher: Option<MatcherKind>,
}

#[derive(Args)]
struct InferArgs {
    /// Manifest file or directory containing `manifest.json`.
    #[arg(long)]
    ensemble: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    /// Defaults to the manifest's matcher.
    #[arg(long)]
    matcher: Option<MatcherKind>,
    /// Include the edit path for every pair.
    #[arg(long)]
    edit_paths: bool,
    /// Report file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// An inference report, or a JSON array of integers.
    #[arg(long)]
    predictions: PathBuf,
    /// A pairs file with `true_ged`, or a JSON array of integers.
    #[arg(long)]
    truths: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Ensemble to time; the builtin programs if absent.
    #[arg(long)]
    ensemble: Option<PathBuf>,
    #[arg(long, default_value_t = ged_evolve::DEFAULT_NODE_LIMIT)]
    node_limit: usize,
}

/// Configuration file layout.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    backend: Option<Backend>,
    evolution: EvolutionConfig,
    llm: LlmConfig,
    sandbox: SandboxConfig,
}

fn load_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(fail(EXIT_USAGE))?;
    toml::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(fail(EXIT_USAGE))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let config = load_config(cli.config.as_deref())?;
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        config.evolution.execution
    };
    match cli.command {
        Command::Oracle(a) => oracle(a, exec),
        Command::Corpus(a) => corpus(a),
        Command::Evolve(a) => evolve(a, config, exec),
        Command::Select(a) => select(a, &config, exec),
        Command::Infer(a) => infer_cmd(a, &config, exec),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a, &config),
    }
}

fn load(path: &Path) -> CliResult<(Vec<PairRecord>, Vec<GraphPair>)> {
    let records = read_pairs(path)?;
    let pairs = records.iter().map(PairRecord::to_pair).collect::<Result<Vec<_>, _>>()?;
    if pairs.is_empty() {
        return Err(Failure {
            code: EXIT_DATA,
            error: anyhow!("{} contains no pairs", path.display()),
        });
    }
    Ok((records, pairs))
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(fail(EXIT_DATA)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .context("writing stdout")
            .map_err(fail(EXIT_INTERNAL)),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

fn runner(config: &FileConfig) -> CliResult<ExternalRunner> {
    Ok(ExternalRunner::new(config.sandbox.clone())?)
}

fn oracle(a: OracleArgs, exec: Execution) -> CliResult {
    let (mut records, pairs) = load(&a.pairs)?;
    let truths = exec.map(&pairs, |p| exact_ged(&p.g1, &p.g2, a.node_limit).map(|(d, _)| d));
    for (record, truth) in records.iter_mut().zip(truths) {
        record.true_ged = Some(truth?);
    }
    match &a.out {
        Some(path) => write_pairs(path, &records)?,
        None => write_output(None, &ged_evolve::harness::io::format_pairs(&records))?,
    }
    Ok(())
}

fn corpus(a: CorpusArgs) -> CliResult {
    let records = generate_records(a.kind, a.seed, a.pairs);
    match &a.out {
        Some(path) => write_pairs(path, &records)?,
        None => write_output(None, &ged_evolve::harness::io::format_pairs(&records))?,
    }
    Ok(())
}

fn train_corpus(pairs: &[GraphPair]) -> CliResult<TrainCorpus> {
    Ok(TrainCorpus::new(pairs.iter().map(|p| (&p.g1, &p.g2)))?)
}

fn evolve(a: EvolveArgs, config: FileConfig, exec: Execution) -> CliResult {
    let (_, pairs) = load(&a.pairs)?;
    let corpus = train_corpus(&pairs)?;
    let mut evo = config.evolution.clone();
    evo.execution = exec;
    if let Some(v) = a.seed {
        evo.seed = v;
    }
    if let Some(v) = a.budget {
        evo.budget = v;
    }
    if let Some(v) = a.patience {
        evo.patience = v;
    }
    if let Some(v) = a.max_iterations {
        evo.max_iterations = v;
    }
    if let Some(kind) = a.matcher {
        evo.matcher.kind = kind;
    }
    fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))
        .map_err(fail(EXIT_DATA))?;
    evo.checkpoint_path = Some(a.out.join("checkpoint.json"));

    let runner = runner(&config)?;
    let backend = a.backend.or(config.backend).unwrap_or(Backend::Mutator);
    let mut generator: Box<dyn CandidateGenerator> = match backend {
        Backend::Mutator => Box::new(SeededMutator::new(evo.seed)),
        Backend::Llm => Box::new(LlmBackend::new(config.llm.clone())),
    };
    let outcome = match &a.resume {
        Some(path) => {
            let cp = Checkpoint::load(path)?;
            resume_evolution(cp, &evo, &corpus, generator.as_mut(), &runner)?
        }
        None => run_evolution(&evo, &corpus, generator.as_mut(), &runner)?,
    };

    outcome.manifest.save(&a.out.join("manifest.json")).map_err(Failure::from)?;
    let programs_dir = a.out.join("programs");
    fs::create_dir_all(&programs_dir)
        .with_context(|| format!("creating {}", programs_dir.display()))
        .map_err(fail(EXIT_DATA))?;
    for (id, program) in &outcome.state.programs {
        write_output(Some(&programs_dir.join(format!("{id}.json"))), &to_json(program))?;
    }
    let log = serde_json::json!({
        "stop": outcome.stop,
        "trace": outcome.state.trace,
        "iterations": outcome.state.log,
    });
    write_output(Some(&a.out.join("run_log.json")), &to_json(&log))?;
    eprintln!(
        "stopped ({:?}) after {} iterations in {:.1}s: objective {}, {} programs selected from {}",
        outcome.stop,
        outcome.state.iteration,
        outcome.elapsed.as_secs_f64(),
        outcome.state.ensemble.j(),
        outcome.state.ensemble.len(),
        outcome.state.programs.len()
    );
    Ok(())
}

/// Reads a program directory in file-name order. JSON records keep their
/// ids; Python sources get ids after the largest one seen.
fn read_programs(dir: &Path) -> CliResult<Vec<PriorityProgram>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))
        .map_err(fail(EXIT_DATA))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "py")))
        .collect();
    files.sort();
    let mut programs = Vec::new();
    let mut sources = Vec::new();
    for path in files {
        let text = fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(fail(EXIT_DATA))?;
        if path.extension().is_some_and(|e| e == "py") {
            sources.push(text);
        } else {
            let p: PriorityProgram = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(fail(EXIT_DATA))?;
            programs.push(p);
        }
    }
    let first = programs.iter().map(|p| p.id.0 + 1).max().unwrap_or(0);
    for (next, source) in (first..).zip(sources) {
        programs.push(PriorityProgram::new(ProgramId(next), ProgramKind::python(source), 0));
    }
    Ok(programs)
}

fn select(a: SelectArgs, config: &FileConfig, exec: Execution) -> CliResult {
    let programs = read_programs(&a.programs)?;
    if programs.is_empty() {
        return Err(usage(format!("no programs in {}", a.programs.display())));
    }
    let (_, pairs) = load(&a.pairs)?;
    let corpus = train_corpus(&pairs)?;
    let runner = runner(config)?;
    let mut matcher = config.evolution.matcher;
    if let Some(kind) = a.matcher {
        matcher.kind = kind;
    }
    let budget = a.budget.unwrap_or(config.evolution.budget);
    let mut table = BoundTable::for_corpus(&corpus);
    for p in &programs {
        match evaluate_row(p, &corpus, &runner, &matcher, exec)? {
            Ok(row) => table.insert(p.id, row)?,
            Err(r) => log::warn!("program {} discarded: pair {}: {}", p.id, r.pair, r.outcome.summary()),
        }
    }
    let ids: Vec<ProgramId> = table.ids().collect();
    let ensemble = greedy_select(&ids, budget, &table)?;
    let manifest =
        EnsembleManifest::from_ensemble(&ensemble, |id| programs.iter().find(|p| p.id == id), matcher, budget)?;
    if a.out.extension().is_none() {
        fs::create_dir_all(&a.out)
            .with_context(|| format!("creating {}", a.out.display()))
            .map_err(fail(EXIT_DATA))?;
    }
    manifest.save(&a.out)?;
    eprintln!(
        "selected {} of {} programs, objective {}",
        ensemble.len(),
        table.len(),
        ensemble.j()
    );
    Ok(())
}

fn load_manifest(path: &Path) -> CliResult<EnsembleManifest> {
    Ok(EnsembleManifest::load(path)?)
}

fn infer_cmd(a: InferArgs, config: &FileConfig, exec: Execution) -> CliResult {
    let manifest = load_manifest(&a.ensemble)?;
    let (_, pairs) = load(&a.pairs)?;
    let mut matcher = manifest.matcher;
    if let Some(kind) = a.matcher {
        matcher.kind = kind;
    }
    let programs: Vec<PriorityProgram> = manifest.programs.iter().map(|e| e.program.clone()).collect();
    let mut report = infer(
        &programs,
        &pairs,
        &matcher,
        &runner(config)?,
        exec,
        InferOptions {
            edit_paths: a.edit_paths,
        },
    )?;
    report.manifest = Some(a.ensemble.display().to_string());
    write_output(a.out.as_deref(), &to_json(&report))?;
    if report.errors > 0 {
        eprintln!("{} pairs had no successful program", report.errors);
    }
    Ok(())
}

/// Integers from a JSON array, a report, or a pairs file.
fn read_values(path: &Path, truths: bool) -> CliResult<Vec<Option<GedValue>>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(fail(EXIT_DATA))?;
    if let Ok(values) = serde_json::from_str::<Vec<GedValue>>(&text) {
        return Ok(values.into_iter().map(Some).collect());
    }
    if !truths {
        if let Ok(report) = serde_json::from_str::<EvalReport>(&text) {
            return Ok(report.predictions());
        }
    }
    let records = ged_evolve::harness::io::parse_pairs(&text)
        .map_err(|e| Failure {
            code: EXIT_DATA,
            error: anyhow!("{}: not an integer array, report or pairs file: {e}", path.display()),
        })?;
    Ok(records.into_iter().map(|r| r.true_ged).collect())
}

fn eval(a: EvalArgs) -> CliResult {
    let preds = read_values(&a.predictions, false)?;
    let truths = read_values(&a.truths, true)?;
    if preds.len() != truths.len() {
        return Err(Failure {
            code: EXIT_DATA,
            error: anyhow!("{} predictions for {} truths", preds.len(), truths.len()),
        });
    }
    let (p, t): (Vec<GedValue>, Vec<GedValue>) = preds
        .iter()
        .zip(&truths)
        .filter_map(|(p, t)| Some(((*p)?, (*t)?)))
        .unzip();
    let summary = serde_json::json!({
        "pairs": preds.len(),
        "scored": p.len(),
        "rmse": rmse(&p, &t)?,
        "emr": emr(&p, &t)?,
    });
    write_output(None, &to_json(&summary))
}

fn bench(a: BenchArgs, config: &FileConfig) -> CliResult {
    let (_, pairs) = load(&a.pairs)?;
    let (programs, matcher) = match &a.ensemble {
        Some(path) => {
            let m = load_manifest(path)?;
            (m.programs.into_iter().map(|e| e.program).collect::<Vec<_>>(), m.matcher)
        }
        None => (
            [Builtin::Zero, Builtin::LabelPassthrough, Builtin::degree_neighbor()]
                .into_iter()
                .enumerate()
                .map(|(k, b)| PriorityProgram::new(ProgramId(k as u64), b.into(), 0))
                .collect(),
            Matcher::default(),
        ),
    };
    let runner = runner(config)?;
    let mut rows = Vec::new();
    for exec in [Execution::Sequential, Execution::Parallel] {
        let started = Instant::now();
        let truths = exec.map(&pairs, |p| exact_ged(&p.g1, &p.g2, a.node_limit).map(|(d, _)| d));
        let oracle_secs = started.elapsed().as_secs_f64();
        truths.into_iter().collect::<Result<Vec<_>, _>>()?;
        let report = infer(&programs, &pairs, &matcher, &runner, exec, InferOptions::default())?;
        info!("{exec:?}: oracle {oracle_secs:.3}s, inference {:.3}s", report.timing.total_seconds);
        rows.push(serde_json::json!({
            "execution": exec,
            "oracle_seconds": oracle_secs,
            "inference_seconds": report.timing.total_seconds,
            "inference_seconds_per_pair": report.timing.total_seconds / pairs.len() as f64,
            "max_pair_seconds": report.timing.max_pair_seconds,
        }));
    }
    let summary = serde_json::json!({
        "pairs": pairs.len(),
        "programs": programs.len(),
        "matcher": matcher,
        "parallel_available": Execution::parallel_available(),
        "runs": rows,
    });
    write_output(None, &to_json(&summary))
}
