//! Command-line front end: ingests sampled records, runs synthesis, spectrum,
//! and block-fitting pipelines, and emits machine-readable reports and
//! plot-ready CSV data.
//!
//! Exit codes: 0 success (including per-block model mismatches), 1 usage
//! error, 2 I/O error, 3 inadmissible parameters. Every fatal error prints a
//! single `error: <category>: <reason>` line to stderr.

use afms::estimator::Diagnostics;
use afms::model::{synthesize_bessel, synthesize_noisy, SignalBlock};
use afms::pf::product_function;
use afms::spectral::dft_magnitude_of;
use afms::{fit_block, AfmsError, AfmsParams, FitConfig};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Parser)]
#[command(
    name = "afms",
    version,
    about = "Synthesis and block-wise parameter estimation of AFMS signals",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a signal from a JSON parameter file and write it as CSV.
    Synth(SynthArgs),
    /// Tile a record into blocks, fit the model per block, emit a report.
    Fit(FitArgs),
    /// Write the DFT magnitude spectrum of a record or its product function.
    Spectrum(SpectrumArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// JSON file with the model parameters (keys: A, omega_c, theta, k_f,
    /// omega_f, k_a, omega_a, theta_a, theta_b, s; optional r, default -1).
    params_file: PathBuf,
    /// Number of samples (odd).
    #[arg(long)]
    length: usize,
    /// Sample rate in Hz (labels the output; the model works in rad/sample).
    #[arg(long, default_value_t = 500.0)]
    rate: f64,
    /// Standard deviation of additive white Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Noise generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Also synthesize via the truncated Bessel expansion with this M, write
    /// it to a `.bessel` sibling of --out, and print the max deviation.
    #[arg(long, value_name = "M")]
    bessel: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    /// Input record: CSV with one value per line, or `time,value` lines;
    /// `#` comment lines and blank lines are skipped.
    input: PathBuf,
    /// Block length in samples (odd).
    #[arg(long, default_value_t = 41)]
    block_len: usize,
    /// Distance between consecutive block starts; defaults to --block-len
    /// (non-overlapping tiling).
    #[arg(long)]
    stride: Option<usize>,
    /// Sample rate in Hz, used for the report's Hz-denominated fields.
    #[arg(long, default_value_t = 500.0)]
    rate: f64,
    /// JSON file with fit-configuration overrides; missing keys keep their
    /// defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the run report (JSON) to this path instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for per-block original/regenerated CSV pairs.
    #[arg(long)]
    plots: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Input record (same CSV format as `fit`).
    input: PathBuf,
    /// Transform the product function of the record instead of the record.
    #[arg(long)]
    pf: bool,
    /// Zero-padded DFT length (raised to the record length when smaller).
    #[arg(long, default_value_t = 4096)]
    pad: usize,
    /// Sample rate in Hz for the frequency_hz output column.
    #[arg(long, default_value_t = 500.0)]
    rate: f64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Fatal CLI error: category fixes the exit code, the message is printed as
/// one `error: <category>: <reason>` line.
enum CliError {
    Usage(String),
    Io(String),
    Params(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Params(_) => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => format!("error: usage: {m}"),
            CliError::Io(m) => format!("error: io: {m}"),
            CliError::Params(m) => format!("error: params: {m}"),
        }
    }
}

/// Maps model/estimator errors on fatal (non-per-block) paths: admissibility
/// violations exit 3, length/shape preconditions exit 1, the rest exit 2.
fn from_afms(e: AfmsError) -> CliError {
    match e {
        AfmsError::InvalidParams(_) | AfmsError::OutOfEnvelope(_) => {
            CliError::Params(e.to_string())
        }
        AfmsError::InvalidLength(_) => CliError::Usage(e.to_string()),
        other => CliError::Io(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(args) => run_synth(&args),
        Command::Fit(args) => run_fit(&args),
        Command::Spectrum(args) => run_spectrum(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

// ---------------------------------------------------------------------------
// CSV input/output

/// Reads a sample record: one value per line, or two comma-separated columns
/// `time,value` with the time ignored. `#` comments and blank lines skipped.
fn read_signal(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let field = match fields.as_slice() {
            [v] => v,
            [_, v] => v,
            _ => {
                return Err(CliError::Io(format!(
                    "{}:{}: expected 1 or 2 columns, got {}",
                    path.display(),
                    i + 1,
                    fields.len()
                )))
            }
        };
        let v: f64 = field.trim().parse().map_err(|e| {
            CliError::Io(format!(
                "{}:{}: cannot parse {:?} as a number: {e}",
                path.display(),
                i + 1,
                field.trim()
            ))
        })?;
        values.push(v);
    }
    Ok(values)
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// One value per line after a `#` header; `{}` formatting keeps full
/// round-trip precision.
fn signal_csv(header: &str, samples: &[f64]) -> String {
    let mut out = String::with_capacity(16 + 20 * samples.len());
    let _ = writeln!(out, "# {header}");
    for v in samples {
        let _ = writeln!(out, "{v}");
    }
    out
}

// ---------------------------------------------------------------------------
// synth

fn read_params(path: &Path) -> Result<AfmsParams, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Io(format!("{}: invalid parameter file: {e}", path.display())))
}

/// `signal.csv` → `signal.bessel.csv` alongside it.
fn bessel_sibling(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut name = format!("{stem}.bessel");
    if let Some(ext) = out.extension() {
        name.push('.');
        name.push_str(&ext.to_string_lossy());
    }
    out.with_file_name(name)
}

fn run_synth(args: &SynthArgs) -> Result<(), CliError> {
    let params = read_params(&args.params_file)?;
    let block = synthesize_noisy(&params, args.length, args.rate, args.noise, args.seed)
        .map_err(from_afms)?;
    let header = format!(
        "afms synth: length={} rate_hz={} noise={} seed={}",
        args.length, args.rate, args.noise, args.seed
    );
    write_file(&args.out, &signal_csv(&header, &block.samples))?;
    eprintln!(
        "synth: wrote {} samples to {}",
        block.len(),
        args.out.display()
    );
    if let Some(m) = args.bessel {
        let expansion =
            synthesize_bessel(&params, args.length, m, args.rate).map_err(from_afms)?;
        let sibling = bessel_sibling(&args.out);
        let header = format!(
            "afms synth (bessel expansion M={m}): length={} rate_hz={}",
            args.length, args.rate
        );
        write_file(&sibling, &signal_csv(&header, &expansion.samples))?;
        // The expansion is noise-free; compare against the clean signal.
        let clean = afms::model::synthesize(&params, args.length, args.rate)
            .map_err(from_afms)?;
        let dev = clean
            .samples
            .iter()
            .zip(&expansion.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        println!("max deviation direct vs bessel (M={m}): {dev:.6e}");
        eprintln!("synth: wrote bessel expansion to {}", sibling.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// fit

/// Run report: one record per block in start-sample order, plus the exact
/// configuration, an input digest, and the tool version.
#[derive(Serialize)]
struct RunReport {
    version: String,
    input_digest: String,
    config: ReportConfig,
    blocks: Vec<BlockRecord>,
}

#[derive(Serialize)]
struct ReportConfig {
    input: String,
    block_len: usize,
    stride: usize,
    rate_hz: f64,
    fit: FitConfig,
}

#[derive(Serialize)]
struct BlockRecord {
    index: usize,
    start_sample: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<ReportParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nrmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<Diagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<BlockError>,
}

#[derive(Serialize)]
struct BlockError {
    stage: String,
    detail: String,
}

/// Estimated parameters with the three frequencies duplicated in Hz; the
/// model itself never touches Hz.
#[derive(Serialize)]
struct ReportParams {
    #[serde(rename = "A")]
    a: f64,
    omega_c: f64,
    theta: f64,
    k_f: f64,
    omega_f: f64,
    k_a: f64,
    omega_a: f64,
    theta_a: f64,
    theta_b: f64,
    s: f64,
    r: f64,
    f_c_hz: f64,
    f_a_hz: f64,
    f_f_hz: f64,
}

impl ReportParams {
    fn new(p: &AfmsParams, rate_hz: f64) -> Self {
        let hz = |w: f64| w * rate_hz / TWO_PI;
        ReportParams {
            a: p.a,
            omega_c: p.omega_c,
            theta: p.theta,
            k_f: p.k_f,
            omega_f: p.omega_f,
            k_a: p.k_a,
            omega_a: p.omega_a,
            theta_a: p.theta_a,
            theta_b: p.theta_b,
            s: p.s,
            r: p.r,
            f_c_hz: hz(p.omega_c),
            f_a_hz: hz(p.omega_a),
            f_f_hz: hz(p.omega_f),
        }
    }
}

/// Per-block failures are model mismatches, not run failures: every error is
/// folded into the report under a stage name. Errors raised before the staged
/// pipeline begins (e.g. a block too short for the LP order) get "precheck".
fn block_error(e: AfmsError) -> BlockError {
    match e {
        AfmsError::Stage { stage, detail } => BlockError { stage, detail },
        other => BlockError {
            stage: "precheck".into(),
            detail: other.to_string(),
        },
    }
}

fn read_fit_config(path: Option<&PathBuf>) -> Result<FitConfig, CliError> {
    match path {
        None => Ok(FitConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Io(format!("{}: invalid config file: {e}", p.display())))
        }
    }
}

fn sha256_hex(path: &Path) -> Result<String, CliError> {
    let bytes =
        fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn run_fit(args: &FitArgs) -> Result<(), CliError> {
    if args.block_len == 0 || args.block_len % 2 == 0 {
        return Err(CliError::Usage(format!(
            "--block-len must be odd, got {}",
            args.block_len
        )));
    }
    let stride = args.stride.unwrap_or(args.block_len);
    if stride == 0 {
        return Err(CliError::Usage("--stride must be positive".into()));
    }
    let config = read_fit_config(args.config.as_ref())?;
    let samples = read_signal(&args.input)?;
    if samples.len() < args.block_len {
        return Err(CliError::Io(format!(
            "{}: record has {} samples; one block needs {}",
            args.input.display(),
            samples.len(),
            args.block_len
        )));
    }
    if let Some(dir) = &args.plots {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }

    let mut blocks = Vec::new();
    let mut ok_count = 0usize;
    let mut index = 0usize;
    let mut start = 0usize;
    while start + args.block_len <= samples.len() {
        let slice = samples[start..start + args.block_len].to_vec();
        let block = SignalBlock::from_samples(slice, args.rate).map_err(from_afms)?;
        if let Some(dir) = &args.plots {
            let path = dir.join(format!("block_{index:03}_original.csv"));
            write_file(&path, &plot_csv(start, &block.samples))?;
        }
        let record = match fit_block(&block, &config) {
            Ok(fit) => {
                ok_count += 1;
                eprintln!(
                    "block {index} @ sample {start}: ok, nrmse {:.3e}",
                    fit.nrmse
                );
                if let Some(dir) = &args.plots {
                    let path = dir.join(format!("block_{index:03}_regenerated.csv"));
                    write_file(&path, &plot_csv(start, &fit.regenerated.samples))?;
                }
                BlockRecord {
                    index,
                    start_sample: start,
                    params: Some(ReportParams::new(&fit.params, args.rate)),
                    nrmse: Some(fit.nrmse),
                    diagnostics: Some(fit.diagnostics),
                    error: None,
                }
            }
            Err(e) => {
                let be = block_error(e);
                eprintln!(
                    "block {index} @ sample {start}: error at stage '{}': {}",
                    be.stage, be.detail
                );
                BlockRecord {
                    index,
                    start_sample: start,
                    params: None,
                    nrmse: None,
                    diagnostics: None,
                    error: Some(be),
                }
            }
        };
        blocks.push(record);
        index += 1;
        start += stride;
    }

    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        input_digest: sha256_hex(&args.input)?,
        config: ReportConfig {
            input: args.input.display().to_string(),
            block_len: args.block_len,
            stride,
            rate_hz: args.rate,
            fit: config,
        },
        blocks,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Io(format!("report serialization: {e}")))?;
    match &args.report {
        Some(path) => {
            write_file(path, &format!("{json}\n"))?;
            eprintln!(
                "fit: {ok_count}/{index} blocks ok; report written to {}",
                path.display()
            );
        }
        None => {
            println!("{json}");
            eprintln!("fit: {ok_count}/{index} blocks ok");
        }
    }
    Ok(())
}

/// Plot-ready CSV: absolute sample index and value.
fn plot_csv(start: usize, samples: &[f64]) -> String {
    let mut out = String::with_capacity(24 + 26 * samples.len());
    out.push_str("# sample_index,value\n");
    for (j, v) in samples.iter().enumerate() {
        let _ = writeln!(out, "{},{v}", start + j);
    }
    out
}

// ---------------------------------------------------------------------------
// spectrum

fn run_spectrum(args: &SpectrumArgs) -> Result<(), CliError> {
    let mut samples = read_signal(&args.input)?;
    if samples.is_empty() {
        return Err(CliError::Io(format!(
            "{}: record has no samples",
            args.input.display()
        )));
    }
    let label = if args.pf {
        if samples.len() % 2 == 0 {
            samples.pop();
            eprintln!(
                "warning: even-length record; trimmed to {} samples for the product function",
                samples.len()
            );
        }
        let block = SignalBlock::from_samples(samples, args.rate).map_err(from_afms)?;
        samples = product_function(&block).map_err(from_afms)?.values;
        "product function"
    } else {
        "signal"
    };
    let pad = args.pad.max(samples.len());
    let spectrum = dft_magnitude_of(&samples, pad).map_err(from_afms)?;
    let mut out = String::with_capacity(32 + 60 * spectrum.grid.len());
    out.push_str("# frequency_hz,frequency_rad_per_sample,magnitude\n");
    for (w, m) in spectrum.grid.iter().zip(&spectrum.magnitude) {
        let _ = writeln!(out, "{},{w},{m}", w * args.rate / TWO_PI);
    }
    write_file(&args.out, &out)?;
    eprintln!(
        "spectrum: wrote {} {label} bins to {}",
        spectrum.grid.len(),
        args.out.display()
    );
    Ok(())
}
