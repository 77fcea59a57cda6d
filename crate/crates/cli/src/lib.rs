//! Argument parsing, config validation and output for the `padic-spectra` binary.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use padic_spectra::output::{self, Document, Format, Row, SpectrumConfig, ValidateConfig, ZetaConfig};
use padic_spectra::{DepthClosure, Error, FieldParams};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PADIC_SPECTRA_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Validation(_) => EXIT_VALIDATION,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::SeriesNotConverged { .. } | Error::BracketFailure { .. } | Error::NotConverged(_) => {
                CliError::Numerical(e.to_string())
            }
            Error::SeminormViolation { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "padic-spectra", version, about = "Spectra, zeta values and seminorm checks for forward-derivative operators on local-field ball trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate p^(2m/e) lambda_n with multiplicities.
    Spectrum(SpectrumArgs),
    /// Cross-check the spectrum, seminorms and Hilbert-Schmidt norms.
    Validate(ValidateArgs),
    /// Evaluate the operator zeta function on a grid of s.
    Zeta(ZetaArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClosureArg {
    Transparent,
    Dirichlet,
    Truncate,
}

impl From<ClosureArg> for DepthClosure {
    fn from(c: ClosureArg) -> Self {
        match c {
            ClosureArg::Transparent => DepthClosure::Transparent,
            ClosureArg::Dirichlet => DepthClosure::Dirichlet,
            ClosureArg::Truncate => DepthClosure::Truncate,
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Residue characteristic.
    #[arg(long)]
    pub p: u32,
    /// Ramification index.
    #[arg(long, default_value_t = 1)]
    pub e: u32,
    /// Residue degree.
    #[arg(long, default_value_t = 1)]
    pub f: u32,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
    /// Output file; defaults to $PADIC_SPECTRA_OUT_DIR/<command>.<ext>, else stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

impl Common {
    fn params(&self) -> Result<FieldParams, CliError> {
        Ok(FieldParams::new(self.p, self.e, self.f)?)
    }
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 3)]
    pub m_max: u32,
    #[arg(long, default_value_t = 5)]
    pub n_max: usize,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Window depth N (default 10 for p^f <= 3, else 6).
    #[arg(long)]
    pub depth: Option<u32>,
    /// Number of eigenvalues compared.
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Relative tolerance for the eigenvalue comparison.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = ClosureArg::Transparent)]
    pub closure: ClosureArg,
    /// Skip the depth N+2 drift solve.
    #[arg(long)]
    pub no_drift: bool,
    #[arg(long, default_value_t = 8)]
    pub seminorm_depth: u32,
    /// Compare against the spectrum in this JSON file (as written by `spectrum`).
    #[arg(long)]
    pub spectrum_json: Option<PathBuf>,
    /// Test mode: scale the lowest computed eigenvalue by 1 + REL.
    #[arg(long, value_name = "REL")]
    pub corrupt_eigenvalue: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ZetaArgs {
    #[command(flatten)]
    pub common: Common,
    /// Real parts of s, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub s: Vec<f64>,
    /// Imaginary part shared by every grid point.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub s_im: f64,
    /// Number of roots summed, comma separated for several truncations.
    #[arg(long, value_delimiter = ',', default_value = "20")]
    pub n_roots: Vec<usize>,
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn spectrum_config(a: &SpectrumArgs) -> Result<SpectrumConfig, CliError> {
    let params = a.common.params()?;
    if a.n_max > 60 {
        return Err(config("--n-max must be at most 60"));
    }
    Ok(SpectrumConfig {
        params,
        m_max: a.m_max,
        n_max: a.n_max,
        seed: a.common.seed,
    })
}

fn validate_config(a: &ValidateArgs) -> Result<ValidateConfig, CliError> {
    let params = a.common.params()?;
    let mut cfg = ValidateConfig::default_for(params);
    if let Some(d) = a.depth {
        if !(2..=24).contains(&d) {
            return Err(config("--depth must be in 2..=24"));
        }
        cfg.depth = d;
    }
    if a.k == 0 {
        return Err(config("--k must be positive"));
    }
    if !(a.tol > 0.0 && a.tol < 1.0) {
        return Err(config("--tol must lie in (0, 1)"));
    }
    if !(1..=24).contains(&a.seminorm_depth) {
        return Err(config("--seminorm-depth must be in 1..=24"));
    }
    if let Some(c) = a.corrupt_eigenvalue {
        if !c.is_finite() {
            return Err(config("--corrupt-eigenvalue must be finite"));
        }
    }
    cfg.k = a.k;
    cfg.tol = a.tol;
    cfg.closure = a.closure.into();
    cfg.drift = !a.no_drift;
    cfg.seminorm_depth = a.seminorm_depth;
    cfg.seed = a.common.seed;
    cfg.corrupt = a.corrupt_eigenvalue;
    if let Some(path) = &a.spectrum_json {
        let text = std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
        let table = output::spectrum_table_from_json(&text)?;
        if table.params != params {
            return Err(config("--spectrum-json was computed for different parameters"));
        }
        cfg.spectrum = Some(table);
    }
    Ok(cfg)
}

fn zeta_config(a: &ZetaArgs) -> Result<ZetaConfig, CliError> {
    let params = a.common.params()?;
    if a.s.iter().any(|s| !s.is_finite()) || !a.s_im.is_finite() {
        return Err(config("--s values must be finite"));
    }
    if let Some(&s) = a.s.iter().find(|&&s| s <= 0.0) {
        return Err(config(format!("s = {s} lies outside Re s > 0")));
    }
    if a.n_roots.iter().any(|&n| n == 0 || n > 60) {
        return Err(config("--n-roots values must be in 1..=60"));
    }
    Ok(ZetaConfig {
        params,
        s: a.s.iter().map(|&re| Complex64::new(re, a.s_im)).collect(),
        n_roots: a.n_roots.clone(),
        seed: a.common.seed,
    })
}

fn destination(common: &Common, command: &str) -> Option<PathBuf> {
    if let Some(p) = &common.out {
        return Some(p.clone());
    }
    let dir = std::env::var_os(OUT_DIR_ENV)?;
    let ext = match common.format {
        FormatArg::Json => "json",
        FormatArg::Csv => "csv",
    };
    Some(Path::new(&dir).join(format!("{command}.{ext}")))
}

fn emit<R: Row>(doc: &Document<R>, common: &Common) -> Result<(), CliError> {
    let text = output::render(doc, common.format.into());
    match destination(common, &doc.command) {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| config(format!("{}: {e}", parent.display())))?;
            }
            std::fs::write(&path, text).map_err(|e| config(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Runs a parsed command; the output is written before a validation
/// failure is reported.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Spectrum(a) => {
            let doc = output::run_spectrum(&spectrum_config(a)?)?;
            emit(&doc, &a.common)
        }
        Command::Validate(a) => {
            let doc = output::run_validate(&validate_config(a)?)?;
            emit(&doc, &a.common)?;
            let failed: Vec<&str> = doc
                .results
                .iter()
                .filter(|r| !r.passed)
                .map(|r| r.check.as_str())
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Validation(format!("{} check(s) failed: {}", failed.len(), failed.join(", "))))
            }
        }
        Command::Zeta(a) => {
            let doc = output::run_zeta(&zeta_config(a)?)?;
            emit(&doc, &a.common)
        }
    }
}

/// Parses `args`, runs, reports any error as one line on stderr, and returns
/// the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{line}");
            return EXIT_CONFIG;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
