//! Command-line front end.
//!
//! Exit codes: 0 success, 2 parse or configuration error, 3 no convergence,
//! 4 I/O error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{build_working, read_dataset, read_instances, DataError, WorkingDataset};
use crate::driver::{
    experiment_pdm_vs_pfm, train, Algorithm, RunConfig, TrainError, Variant, DEFAULT_ETA,
};
use crate::model::Model;
use crate::oracle::{gilbert_gamma_d, verify_sandwich, OracleResult};
use crate::report::{self, DatasetSummary, Report};
use crate::schedule::{ActiveSetConfig, Presentation, DEFAULT_MAX_EPOCHS};
use crate::state::StateError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Largest dataset `--oracle` accepts.
pub const ORACLE_MAX_PATTERNS: usize = 100_000;
pub const ORACLE_TOL: f64 = 1e-10;
pub const ORACLE_MAX_ITER: u64 = 10_000_000;

#[derive(Debug, Parser)]
#[command(name = "pdm", version, about = "Large-margin perceptron training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model.
    Train(TrainArgs),
    /// Train a dynamic-margin model, then a fixed-margin one aiming at the
    /// margin it reached.
    Experiment(TrainArgs),
    /// Classify patterns with a saved model.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Pdm,
    PdmSucc,
    Pfm,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Pdm => Algorithm::Pdm,
            AlgoArg::PdmSucc => Algorithm::PdmSucc,
            AlgoArg::Pfm => Algorithm::Pfm,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Sparse text data, `-` for stdin.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub algo: AlgoArg,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    pub eta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_EPOCHS)]
    pub max_epochs: u64,
    /// Only this label value is positive.
    #[arg(long)]
    pub positive_label: Option<f64>,
    /// Track the consecutive-ratio identity on every update.
    #[arg(long)]
    pub instrument_eq6: bool,
    /// Compute the maximum margin and check the run against it.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub out_model: Option<PathBuf>,
    /// Defaults to stdout.
    #[arg(long)]
    pub out_report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Sparse text data, labels optional, `-` for stdin.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub positive_label: Option<f64>,
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub msg: String,
}

impl Failure {
    fn config(msg: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, msg: msg.into() }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        Self {
            code: EXIT_IO,
            msg: format!("{}: {e}", path.display()),
        }
    }
}

fn data_failure(path: &Path, e: DataError) -> Failure {
    match e {
        DataError::Io(e) => Failure::io(path, e),
        other => Failure::config(format!("{}: {other}", path.display())),
    }
}

fn open(path: &Path) -> Result<Box<dyn BufRead>, Failure> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).map_err(|e| Failure::io(path, e))?;
    Ok(Box::new(BufReader::new(f)))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn load_working(args: &TrainArgs) -> Result<WorkingDataset, Failure> {
    let patterns = read_dataset(open(&args.data)?, args.positive_label).map_err(|e| data_failure(&args.data, e))?;
    build_working(&patterns, args.delta, args.rho, args.scale).map_err(|e| data_failure(&args.data, e))
}

fn run_config(args: &TrainArgs) -> RunConfig {
    RunConfig {
        algorithm: args.algo.into(),
        epsilon: args.epsilon,
        beta: args.beta,
        eta: args.eta,
        presentation: Presentation::ActiveSets(ActiveSetConfig {
            seed: args.seed,
            ..ActiveSetConfig::default()
        }),
        multiple_updates: true,
        instrument_eq6: args.instrument_eq6,
        max_epochs: args.max_epochs,
    }
}

fn oracle_for(ds: &WorkingDataset) -> Result<OracleResult, Failure> {
    if ds.len() > ORACLE_MAX_PATTERNS {
        return Err(Failure::config(format!(
            "--oracle supports at most {ORACLE_MAX_PATTERNS} patterns, got {}",
            ds.len()
        )));
    }
    gilbert_gamma_d(ds, ORACLE_TOL, ORACLE_MAX_ITER).map_err(|e| Failure::config(format!("oracle: {e}")))
}

/// Accuracy a run promises relative to the maximum margin.
fn promised_epsilon(cfg: &RunConfig, gamma_d: f64) -> f64 {
    match cfg.algorithm {
        Algorithm::Pfm => (1.0 - cfg.beta.unwrap_or(0.0) / gamma_d).clamp(0.0, 1.0),
        _ => cfg.epsilon.unwrap_or(1.0),
    }
}

fn emit(report: &Report, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), Failure> {
    let text = report::to_json(report);
    match out {
        Some(p) => write_file(p, &text),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::io(Path::new("<stdout>"), e)),
    }
}

fn not_converged(
    args: &TrainArgs,
    ds: &WorkingDataset,
    algorithm: Algorithm,
    e: TrainError,
    stdout: &mut dyn Write,
) -> Failure {
    match e {
        TrainError::NotConverged { epochs, updates } => {
            let r = report::failure_report(&DatasetSummary::of(ds), args.seed, algorithm, epochs, updates);
            if let Err(f) = emit(&r, args.out_report.as_deref(), stdout) {
                return f;
            }
            Failure {
                code: EXIT_NOT_CONVERGED,
                msg: format!("{algorithm}: no convergence after {epochs} epochs ({updates} updates)"),
            }
        }
        TrainError::State(e @ StateError::LambdaOverflow { .. }) => Failure {
            code: EXIT_NOT_CONVERGED,
            msg: format!("{algorithm}: no convergence, {e}"),
        },
        other => Failure::config(other.to_string()),
    }
}

fn cmd_train(args: &TrainArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let cfg = run_config(args);
    cfg.validate().map_err(|e| Failure::config(e.to_string()))?;
    let ds = load_working(args)?;
    let oracle = if args.oracle { Some(oracle_for(&ds)?) } else { None };
    let run = match train(&ds, &cfg) {
        Ok(r) => r,
        Err(e) => return Err(not_converged(args, &ds, cfg.algorithm, e, stdout)),
    };
    let summary = DatasetSummary::of(&ds);
    let mut rep = report::train_report(&summary, args.seed, &run.report, oracle.as_ref().map(|o| o.gamma_d));
    if let Some(o) = &oracle {
        let est = run.report.after_run_estimate;
        let v = verify_sandwich(
            run.report.gamma_prime_d,
            est.is_finite().then_some(est),
            o,
            promised_epsilon(&cfg, o.gamma_d),
            1e-8,
        );
        report::insert_oracle(&mut rep, o, &v);
    }
    if let Some(p) = &args.out_model {
        write_file(p, &Model::from_training(&ds, &run.state, &run.report, args.seed).to_text())?;
    }
    emit(&rep, args.out_report.as_deref(), stdout)
}

fn cmd_experiment(args: &TrainArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let variant = match args.algo {
        AlgoArg::Pdm => Variant::Plain,
        AlgoArg::PdmSucc => Variant::Succ,
        AlgoArg::Pfm => return Err(Failure::config("experiment takes --algo pdm or pdm-succ")),
    };
    let cfg = run_config(args);
    cfg.validate().map_err(|e| Failure::config(e.to_string()))?;
    let eps = cfg.epsilon.expect("validated");
    let ds = load_working(args)?;
    let oracle = if args.oracle { Some(oracle_for(&ds)?) } else { None };
    let exp = match experiment_pdm_vs_pfm(&ds, eps, variant, &cfg) {
        Ok(e) => e,
        Err(e) => return Err(not_converged(args, &ds, cfg.algorithm, e, stdout)),
    };
    let rep = report::experiment_report(&DatasetSummary::of(&ds), args.seed, &exp, oracle.as_ref().map(|o| o.gamma_d));
    if let Some(p) = &args.out_model {
        let d = &exp.dynamic;
        write_file(p, &Model::from_training(&ds, &d.state, &d.report, args.seed).to_text())?;
    }
    emit(&rep, args.out_report.as_deref(), stdout)
}

fn cmd_predict(args: &PredictArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.model).map_err(|e| Failure::io(&args.model, e))?;
    let model = Model::from_text(&text).map_err(|e| Failure::config(format!("{}: {e}", args.model.display())))?;
    let xs = read_instances(open(&args.data)?, args.positive_label).map_err(|e| data_failure(&args.data, e))?;
    let mut out = String::with_capacity(3 * xs.len());
    let mut errors = 0usize;
    let mut labeled = 0usize;
    for x in &xs {
        let y = model.predict(&x.pattern);
        if x.labeled {
            labeled += 1;
            if y as f64 != x.pattern.label().sign() {
                errors += 1;
            }
        }
        out.push_str(if y > 0 { "+1\n" } else { "-1\n" });
    }
    stdout
        .write_all(out.as_bytes())
        .map_err(|e| Failure::io(Path::new("<stdout>"), e))?;
    if labeled > 0 {
        let _ = writeln!(
            stderr,
            "errors {errors}/{labeled} rate {}",
            errors as f64 / labeled as f64
        );
    }
    Ok(())
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_CONFIG;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
    };
    let res = match &cli.command {
        Command::Train(a) => cmd_train(a, stdout),
        Command::Experiment(a) => cmd_experiment(a, stdout),
        Command::Predict(a) => cmd_predict(a, stdout, stderr),
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "pdm: {}", f.msg);
            f.code
        }
    }
}
