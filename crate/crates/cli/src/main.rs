//! `csi-breath`: simulate CSI recordings, estimate breathing rate, check the ratio model.
//!
//! Failures print one JSON object to stderr (`{"error": code, "message": ..., "line"?: n}`)
//! and exit nonzero.

use clap::{Args, Parser, Subcommand};
use csi_breath::config::{self, ConfigError, Overrides, RunConfig};
use csi_breath::rate::{RateError, RateEstimator};
use csi_breath::record::{
    check_results, read_record_file, sidecar_path, write_record_file, write_results, write_sidecar, RecordError,
    RecordHeader, TruthSidecar, FORMAT_VERSION,
};
use csi_breath::sim::{synthesize, SimError};
use csi_breath::verify::{verify_model, CheckStatus, VerifyError};
use serde_json::json;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "csi-breath", version, about = "CSI-ratio breathing-rate toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a CSI record and its ground-truth sidecar (`<out>.truth.json`).
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate breathing rate per window; writes one JSON object per line.
    Estimate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Check circle fit, rotation direction and arc length of the ratio model.
    VerifyModel {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Replaces `verify.seed` from the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate a result stream written by `estimate`.
    CheckResults {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Args)]
struct OverrideArgs {
    /// Projection angle step, radians or `pi/N`.
    #[arg(long)]
    theta_step: Option<String>,
    /// Fraction of the best BNR a subcarrier needs to join the fusion.
    #[arg(long)]
    gate: Option<String>,
    /// Breathing band in bpm, `MIN-MAX`.
    #[arg(long)]
    band: Option<String>,
}

impl OverrideArgs {
    fn parse(&self) -> Result<Overrides, ConfigError> {
        Ok(Overrides {
            theta_step: self.theta_step.as_deref().map(config::parse_theta_step).transpose()?,
            gate: self.gate.as_deref().map(config::parse_gate).transpose()?,
            band: self.band.as_deref().map(config::parse_band).transpose()?,
        })
    }
}

struct Failure {
    code: &'static str,
    message: String,
    line: Option<usize>,
    exit: u8,
}

impl Failure {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            line: None,
            exit: 1,
        }
    }

    fn report(&self) -> ExitCode {
        let mut rec = json!({ "error": self.code, "message": self.message });
        if let Some(line) = self.line {
            rec["line"] = json!(line);
        }
        eprintln!("{rec}");
        ExitCode::from(self.exit)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Read { .. } => "io",
            ConfigError::Toml(_) => "invalid_config",
            ConfigError::Override { .. } => "invalid_override",
        };
        let mut f = Failure::new(code, e.to_string());
        if code == "invalid_override" {
            f.exit = 2;
        }
        f
    }
}

impl From<RecordError> for Failure {
    fn from(e: RecordError) -> Self {
        let code = match e {
            RecordError::Io(_) => "io",
            RecordError::Parse { .. } => "malformed_record",
            RecordError::IncompleteFrame { .. } => "incomplete_frame",
            RecordError::Frame { .. } => "invalid_frame",
            RecordError::Json(_) => "invalid_json",
        };
        Failure {
            line: e.line(),
            ..Failure::new(code, e.to_string())
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::InvalidScene(_) => "invalid_scene",
            _ => "invalid_simulation",
        };
        Failure::new(code, e.to_string())
    }
}

impl From<RateError> for Failure {
    fn from(e: RateError) -> Self {
        Failure::new("estimation_failed", e.to_string())
    }
}

impl From<VerifyError> for Failure {
    fn from(e: VerifyError) -> Self {
        Failure::new("verification_error", e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new("io", e.to_string())
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, ConfigError> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::new("io", format!("cannot create {}: {e}", path.display())))
}

fn simulate(config: Option<&Path>, seed: u64, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let scene = cfg.scene.build(seed)?;
    let sim = synthesize(&scene, cfg.duration_s, &cfg.motion, seed)?;
    let header = RecordHeader {
        version: FORMAT_VERSION,
        sample_rate: scene.sample_rate,
        antennas: 2,
        subcarriers: scene.channels.len(),
        carrier_frequency: scene.carrier_frequency,
    };
    write_record_file(out, &header, &sim.frames)?;
    write_sidecar(&sidecar_path(out), &TruthSidecar::new(seed, &sim))?;
    Ok(())
}

fn estimate(input: &Path, config: Option<&Path>, out: &Path, overrides: &OverrideArgs) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    cfg.apply(&overrides.parse()?);
    let record = read_record_file(input).map_err(|e| match e {
        RecordError::Io(io) => Failure::new("io", format!("cannot read {}: {io}", input.display())),
        other => other.into(),
    })?;
    let estimator = RateEstimator::new(cfg.estimator, record.header.sample_rate)?;
    let windows = estimator.estimate(&record.frames)?;
    let mut w = create(out)?;
    write_results(&mut w, &windows)?;
    w.flush()?;
    Ok(())
}

fn verify(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.verify.seed = seed;
    }
    let report = verify_model(&cfg.scene, &cfg.verify)?;
    let mut w = create(out)?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Failure::new("io", e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    if report.passed {
        return Ok(());
    }
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| c.status == CheckStatus::Fail)
        .map(|c| c.name.as_str())
        .collect();
    Err(Failure {
        exit: 3,
        ..Failure::new("verification_failed", format!("failed checks: {}", failed.join(", ")))
    })
}

fn check(input: &Path) -> Result<(), Failure> {
    let file = File::open(input).map_err(|e| Failure::new("io", format!("cannot read {}: {e}", input.display())))?;
    let records = check_results(BufReader::new(file))?;
    println!("{}", json!({ "valid": true, "windows": records.len() }));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            return Failure {
                exit: 2,
                ..Failure::new("usage", first)
            }
            .report();
        }
    };
    let result = match &cli.command {
        Command::Simulate { config, seed, out } => simulate(config.as_deref(), *seed, out),
        Command::Estimate {
            input,
            config,
            out,
            overrides,
        } => estimate(input, config.as_deref(), out, overrides),
        Command::VerifyModel { config, out, seed } => verify(config.as_deref(), *seed, out),
        Command::CheckResults { input } => check(input),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
