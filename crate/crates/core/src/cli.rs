//! Command-line front end. [`main`] parses arguments and returns the
//! process exit code: 0 on success, 1 on invalid input or a failed check,
//! 2 on a numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::{self, oracle_passed, ExperimentKind, ExperimentSpec, Table, GATE_SUMMARY};
use crate::io::{apply_setting, parse_config, parse_matrix_csv, table_to_csv, table_to_json};
use crate::rng::{sample_gaussian, sample_uniform_scaled, RngStream};
use crate::spectral::spectral_report;
use crate::transformer::{softmax_attention, AttentionMatrix};

/// Default output directory when `--out` is not given.
pub const OUT_DIR_ENV: &str = "TSELAB_OUT_DIR";

/// Pass fraction the theorem gate must reach.
pub const GATE_THRESHOLD: f64 = 0.95;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tselab", version, about = "Token-similarity escalation in random transformer blocks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Similarity, ξ₁/ξ₂ and r per block and step through a post-norm stack.
    Escalate(RunArgs),
    /// Observed and estimated r for value weights redrawn at fixed inputs.
    FixedInput(RunArgs),
    /// Norm growth in a pre-norm stack against a post-norm one.
    Prenorm(RunArgs),
    /// Diversity of a de-escalated stack for each τ.
    Deescalate(RunArgs),
    /// Concentration of η with growing width.
    Eta(RunArgs),
    /// Monte-Carlo check of E[ξᵢ], or of the lower bound on E[r].
    Oracle(OracleArgs),
    /// δ and |λ₂| of a row-stochastic matrix.
    Spectral(SpectralArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    fn render(self, table: &Table) -> String {
        match self {
            Format::Csv => table_to_csv(table),
            Format::Json => table_to_json(table) + "\n",
        }
    }
}

#[derive(Debug, Clone, Args, Default)]
pub struct RunArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// De-escalation strength; for `deescalate` this replaces the τ list.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to $TSELAB_OUT_DIR, else the table goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Flat `key = value` settings applied before command-line flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Any other setting, as `key=value`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Check the lower bound on E[r] instead of E[ξᵢ].
    #[arg(long)]
    pub theorem_gate: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SpectralArgs {
    /// CSV file holding an n × n row-stochastic matrix.
    #[arg(conflicts_with = "random", required_unless_present = "random")]
    pub input: Option<PathBuf>,
    /// Analyse a softmax attention matrix of this size instead.
    #[arg(long, value_name = "N")]
    pub random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Token width of the random input.
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    /// Accepted deviation of row sums from 1.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

/// Echoed into `manifest.json`, which is written after every other file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub spec: ExperimentSpec,
    pub seed: u64,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<PathBuf>,
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Convergence { .. } | Error::NonFinite { .. } | Error::Overflow { .. } => EXIT_NUMERICAL,
        _ => EXIT_INVALID,
    }
}

/// Defaults, then the config file, then flags.
pub fn build_spec(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::defaults(kind);
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)?;
        for (k, v) in parse_config(&text)? {
            apply_setting(&mut spec, &k, &v)?;
        }
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("--set expects KEY=VALUE, found '{kv}'")))?;
        apply_setting(&mut spec, k.trim(), v.trim())?;
    }
    let cfg = &mut spec.cfg;
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.d {
        cfg.d = v;
    }
    if let Some(v) = args.heads {
        cfg.heads = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.tau {
        cfg.tau = v;
        spec.extra.taus = vec![v];
    }
    if let Some(v) = args.depth {
        spec.depth = v;
    }
    if let Some(v) = args.trials {
        spec.trials = v;
    }
    spec.validate()?;
    Ok(spec)
}

fn out_dir(args: &RunArgs) -> Option<PathBuf> {
    args.out.clone().or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes the table to `dir` (then the manifest) or to `stdout`.
fn emit(spec: &ExperimentSpec, table: &Table, args: &RunArgs, started: u128, stdout: &mut dyn Write) -> Result<()> {
    let body = args.format.render(table);
    let Some(dir) = out_dir(args) else {
        stdout.write_all(body.as_bytes())?;
        return Ok(());
    };
    fs::create_dir_all(&dir)?;
    let manifest_path = dir.join("manifest.json");
    if manifest_path.exists() {
        fs::remove_file(&manifest_path)?;
    }
    let table_path = dir.join(format!("{}.{}", spec.kind.name(), args.format.extension()));
    write_atomic(&table_path, &body)?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        spec: spec.clone(),
        seed: spec.cfg.seed,
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        outputs: vec![table_path.clone()],
    };
    write_atomic(&manifest_path, &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"))?;
    writeln!(stdout, "wrote {}", table_path.display())?;
    Ok(())
}

/// Runs one experiment subcommand; `Ok(false)` means the run completed but
/// its check failed.
fn run_experiment(kind: ExperimentKind, args: &RunArgs, stdout: &mut dyn Write) -> Result<bool> {
    let started = unix_ms();
    let spec = build_spec(kind, args)?;
    let table = experiments::run(&spec)?;
    emit(&spec, &table, args, started, stdout)?;
    Ok(match kind {
        ExperimentKind::OracleExpectedXi => oracle_passed(&table),
        ExperimentKind::TheoremGate => table.mean(0, GATE_SUMMARY, "pass_fraction") >= GATE_THRESHOLD,
        _ => true,
    })
}

/// Builds the matrix `spectral` analyses.
fn spectral_input(args: &SpectralArgs) -> Result<AttentionMatrix> {
    match (&args.input, args.random) {
        (_, Some(n)) => {
            if n == 0 || args.d == 0 {
                return Err(Error::InvalidParameter("--random and --d must be positive".into()));
            }
            let mut rng = RngStream::new(args.seed, 0);
            let x = sample_gaussian(&mut rng, n, args.d, 1.0)?;
            let scale = 1.0 / (args.d as f64).sqrt();
            let wq = sample_uniform_scaled(&mut rng, args.d, args.d, scale)?;
            let wk = sample_uniform_scaled(&mut rng, args.d, args.d, scale)?;
            softmax_attention(&x, &wq, &wk, args.d)
        }
        (Some(path), None) => {
            let text = fs::read_to_string(path)?;
            AttentionMatrix::with_tolerance(parse_matrix_csv(&text)?, args.tolerance)
        }
        (None, None) => Err(Error::InvalidParameter("give an input file or --random N".into())),
    }
}

#[derive(Serialize)]
struct SpectralOutput {
    n: usize,
    row_sum_residual: f64,
    stochastic: bool,
    delta: f64,
    lambda2_modulus: f64,
    spectral_gap: f64,
    spectral_gap_sym: f64,
}

fn run_spectral(args: &SpectralArgs, stdout: &mut dyn Write) -> Result<()> {
    let p = spectral_input(args)?;
    let report = spectral_report(&p)?;
    let out = SpectralOutput {
        n: p.n(),
        row_sum_residual: p.row_sum_residual(),
        stochastic: true,
        delta: report.delta,
        lambda2_modulus: report.lambda2_modulus,
        spectral_gap: 1.0 - report.lambda2_modulus,
        spectral_gap_sym: report.spectral_gap_sym,
    };
    match args.format {
        Format::Json => writeln!(stdout, "{}", serde_json::to_string_pretty(&out).expect("report serializes"))?,
        Format::Csv => {
            writeln!(stdout, "quantity,value")?;
            writeln!(stdout, "n,{}", out.n)?;
            writeln!(stdout, "row_sum_residual,{:?}", out.row_sum_residual)?;
            writeln!(stdout, "stochastic,{}", out.stochastic)?;
            writeln!(stdout, "delta,{:?}", out.delta)?;
            writeln!(stdout, "lambda2_modulus,{:?}", out.lambda2_modulus)?;
            writeln!(stdout, "spectral_gap,{:?}", out.spectral_gap)?;
            writeln!(stdout, "spectral_gap_sym,{:?}", out.spectral_gap_sym)?;
        }
    }
    Ok(())
}

/// Executes a parsed command, writing results to `stdout` and diagnostics to
/// `stderr`; returns the exit code.
pub fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Escalate(a) => run_experiment(ExperimentKind::EscalationFig2, a, stdout),
        Command::FixedInput(a) => run_experiment(ExperimentKind::FixedInputFig3, a, stdout),
        Command::Prenorm(a) => run_experiment(ExperimentKind::PrenormFig4, a, stdout),
        Command::Deescalate(a) => run_experiment(ExperimentKind::DeescalateFig5, a, stdout),
        Command::Eta(a) => run_experiment(ExperimentKind::EtaConcentrationFig6, a, stdout),
        Command::Oracle(o) => {
            let kind = if o.theorem_gate { ExperimentKind::TheoremGate } else { ExperimentKind::OracleExpectedXi };
            run_experiment(kind, &o.run, stdout)
        }
        Command::Spectral(s) => run_spectral(s, stdout).map(|()| true),
    };
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            let _ = writeln!(stderr, "error: check failed: at least one cell did not pass");
            EXIT_INVALID
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli, stdout, stderr),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = stderr.write_all(rendered.as_bytes());
            } else {
                let _ = stdout.write_all(rendered.as_bytes());
            }
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = main(std::iter::once("tselab").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, _, err) = run(&["escalate", "--bogus", "1"]);
        assert_eq!(code, EXIT_INVALID);
        assert!(err.contains("--bogus"));
    }

    #[test]
    fn invalid_combination_is_validation_error() {
        let (code, _, err) = run(&["escalate", "--d", "10", "--heads", "3"]);
        assert_eq!(code, EXIT_INVALID);
        assert!(err.contains("heads"), "{err}");
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        fs::write(&cfg, "n = 5\nd = 12\nheads = 2\n").unwrap();
        let args = RunArgs { config: Some(cfg), n: Some(7), ..Default::default() };
        let spec = build_spec(ExperimentKind::EscalationFig2, &args).unwrap();
        assert_eq!((spec.cfg.n, spec.cfg.d, spec.cfg.heads), (7, 12, 2));
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("spectral"));
    }
}
