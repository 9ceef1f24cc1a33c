//! `incsynth` command-line tool.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use incsynth::automaton::{translate, TranslateError};
use incsynth::compose::{BuildError, Limits};
use incsynth::crossing::gen_crossing;
use incsynth::formula::{parse_checked, Formula};
use incsynth::incremental::{
    run_with, single_pass, verify_policy, AgentOrder, Outcome, RunConfig, RunError, VerifyError,
};
use incsynth::models::{load_system, save_system, ModelError, System};
use incsynth::mrp::{clamp_report, simulate, MrpError, PolicyFile, ViConfig};

use report::BenchReport;

#[derive(Parser)]
#[command(name = "incsynth", version, about = "Incremental policy synthesis for co-safe LTL missions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a policy, incrementally or in a single pass.
    Synth(SynthArgs),
    /// Write the pedestrian-crossing benchmark and its mission.
    GenCrossing(GenArgs),
    /// Evaluate a stored policy against the full system.
    Verify(VerifyArgs),
    /// Compile a formula to its automaton.
    Translate(TranslateArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct FormulaSource {
    /// File holding the formula text.
    #[arg(long = "formula", value_name = "PATH")]
    path: Option<PathBuf>,
    /// Formula given inline.
    #[arg(long = "formula-str", value_name = "TEXT")]
    text: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    #[command(flatten)]
    formula: FormulaSource,
    /// Stop as soon as a policy reaches this probability.
    #[arg(long)]
    threshold: Option<f64>,
    /// Agent order: raf (random) or saf (smallest first).
    #[arg(long, default_value = "saf")]
    order: AgentOrder,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Compose every agent at once instead of iterating.
    #[arg(long)]
    single_pass: bool,
    /// Agents added per iteration.
    #[arg(long, default_value_t = 1)]
    batch: usize,
    /// Value iteration tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Cap on explicit states in any constructed model.
    #[arg(long, default_value_t = Limits::default().max_states)]
    max_states: usize,
    /// Stop after this many iterations and keep the best policy so far.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Skip action pruning between iterations.
    #[arg(long)]
    no_minimize: bool,
    #[arg(long, value_name = "PATH")]
    emit_policy: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    trace_csv: Option<PathBuf>,
    /// Write the run report as JSON.
    #[arg(long, value_name = "PATH")]
    report_json: Option<PathBuf>,
    /// Print per-iteration and per-stage details.
    #[arg(long)]
    stats: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    pedestrians: u32,
    /// System file to write; the formula goes next to it with an `.ltl`
    /// extension unless `--formula-out` is given.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[arg(long, value_name = "PATH")]
    formula_out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    #[command(flatten)]
    formula: FormulaSource,
    #[arg(long, value_name = "PATH")]
    policy: PathBuf,
    /// Also estimate the probability from this many simulated runs.
    #[arg(long, value_name = "RUNS")]
    simulate: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    horizon: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Args)]
struct TranslateArgs {
    #[command(flatten)]
    formula: FormulaSource,
    /// Write the automaton in Graphviz format.
    #[arg(long, value_name = "PATH")]
    dot: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Cap(#[from] BuildError),
    #[error(transparent)]
    Numeric(MrpError),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Write { .. } => 2,
            CliError::Cap(_) | CliError::Numeric(MrpError::NotConverged { .. }) => 3,
            CliError::Numeric(_) => 2,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<TranslateError> for CliError {
    fn from(e: TranslateError) -> Self {
        match e {
            TranslateError::TooManyStates { .. } => CliError::Input(e.to_string()),
            TranslateError::NotCoSafe(_) => CliError::Input(e.to_string()),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Build(b) => CliError::Cap(b),
            RunError::Mrp(m) => CliError::Numeric(m),
            RunError::Translate(t) => t.into(),
            RunError::BadThreshold(_) | RunError::BadBatch => CliError::Input(e.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Run(r) => r.into(),
            VerifyError::UnknownAgent(_) => CliError::Input(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::GenCrossing(a) => gen(a),
        Command::Verify(a) => verify(a),
        Command::Translate(a) => translate_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Write { path: path.display().to_string(), source })
}

/// Reads the formula and checks its atoms against `sys` when given.
fn load_formula(src: &FormulaSource, sys: Option<&System>) -> Result<Formula, CliError> {
    let text = match (&src.path, &src.text) {
        (Some(p), _) => read(p)?,
        (None, Some(t)) => t.clone(),
        (None, None) => unreachable!("clap requires one source"),
    };
    let parsed = match sys {
        Some(sys) => parse_checked(text.trim(), sys.num_agents(), sys.env.propositions()),
        None => Formula::parse(text.trim()),
    };
    parsed.map_err(|e| CliError::Input(format!("formula: {e}")))
}

fn synth(a: SynthArgs) -> Result<u8, CliError> {
    let sys = load_system(&a.model)?;
    let f = load_formula(&a.formula, Some(&sys))?;
    if a.tol.is_nan() || a.tol <= 0.0 {
        return Err(CliError::Input(format!("tolerance must be positive, got {}", a.tol)));
    }
    let vi = ViConfig { tol: a.tol, ..ViConfig::default() };
    let limits = Limits { max_states: a.max_states };
    let t0 = Instant::now();

    if a.single_pass {
        let sp = single_pass(&sys, &f, vi, limits)?;
        let report = BenchReport::single_pass(&sp, t0.elapsed());
        print!("{}", report.summary(a.stats));
        if let Some(p) = &a.emit_policy {
            write(p, &sp.best.to_file(&sys).to_json())?;
        }
        if let Some(p) = &a.report_json {
            write(p, &report.to_json())?;
        }
        let ok = a.threshold.is_none_or(|thr| sp.value() >= thr);
        return Ok(if ok { 0 } else { 1 });
    }

    let cfg = RunConfig {
        threshold: a.threshold,
        order: a.order,
        seed: a.seed,
        batch: a.batch,
        vi,
        limits,
        minimize: !a.no_minimize,
        check_minimization: false,
    };
    let max_iter = a.max_iterations.unwrap_or(usize::MAX);
    let res = run_with(&sys, &f, &cfg, |t| {
        if t.iteration >= max_iter {
            std::ops::ControlFlow::Break(())
        } else {
            std::ops::ControlFlow::Continue(())
        }
    })?;
    let report = BenchReport::incremental(&res, t0.elapsed());
    print!("{}", report.summary(a.stats));
    for w in res.monotonicity_violations() {
        eprintln!("warning: {w}");
    }
    if let Some(p) = &a.trace_csv {
        write(p, &res.to_csv())?;
    }
    if let Some(p) = &a.report_json {
        write(p, &report.to_json())?;
    }
    if let (Some(p), Some(best)) = (&a.emit_policy, &res.best) {
        write(p, &best.to_file(&sys).to_json())?;
    }
    Ok(match res.outcome {
        Outcome::Fail => 1,
        Outcome::Success | Outcome::ExhaustedAnytime => 0,
    })
}

fn gen(a: GenArgs) -> Result<u8, CliError> {
    if a.pedestrians == 0 {
        return Err(CliError::Input("at least one pedestrian is required".into()));
    }
    let (sys, f) = gen_crossing(a.pedestrians);
    save_system(&sys, &a.out)?;
    let fpath = a.formula_out.unwrap_or_else(|| a.out.with_extension("ltl"));
    write(&fpath, &format!("{f}\n"))?;
    println!("system:  {}", a.out.display());
    println!("formula: {}", fpath.display());
    Ok(0)
}

fn verify(a: VerifyArgs) -> Result<u8, CliError> {
    let sys = load_system(&a.model)?;
    let f = load_formula(&a.formula, Some(&sys))?;
    let text = read(&a.policy)?;
    let pol = PolicyFile::from_json(&text).map_err(|e| CliError::Input(format!("policy: {e}")))?;
    let vi = ViConfig { tol: a.tol, ..ViConfig::default() };
    let v = verify_policy(&sys, &f, &pol, vi, Limits::default())?;
    println!("probability: {:.6}", clamp_report(v.value));
    println!("chain: {}", v.chain.size());
    if let Some(runs) = a.simulate {
        let est = simulate(&v.chain, runs, a.horizon, a.seed);
        println!(
            "simulated: {:.6} +/- {:.6} ({} runs, {} undecided at horizon {})",
            est.estimate, est.stderr, est.runs, est.undecided, a.horizon
        );
    }
    Ok(0)
}

fn translate_cmd(a: TranslateArgs) -> Result<u8, CliError> {
    let f = load_formula(&a.formula, None)?;
    let dfa = translate(&f)?;
    println!("formula: {f}");
    println!("states: {}", dfa.num_states());
    for q in 0..dfa.num_states() {
        let mark = if dfa.is_accepting(q) { " (accepting)" } else { "" };
        let init = if q == dfa.initial() { " (initial)" } else { "" };
        println!("q{q}{init}{mark}: {}", dfa.state_name(q));
        for (g, t) in dfa.edges(q) {
            println!("  --[{g}]--> q{t}");
        }
    }
    if let Some(p) = &a.dot {
        write(p, &dfa.to_dot())?;
    }
    Ok(0)
}
