//! Subcommand dispatch shared by the binary and the integration tests.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{Experiment, ExperimentConfig, Overrides, ValidationReport};
use crate::experiments;
use crate::output::{OutputError, RunMeta, Writer};
use crate::runner::Runner;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "herald", version, about = "Sweeps of a heralded single-photon source model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Monte Carlo metrics versus pump power.
    PowerSweep,
    /// Klyshko efficiency versus idler gate delay.
    DelayScan,
    /// Port fractions and suppressions versus coupler stem length.
    WdmSweep,
    /// Phase-matched wavelengths versus poling period and temperature.
    QpmCurves,
    /// Exact slot probabilities and metrics versus pump power.
    OracleTable,
    /// Validate and calibrate the configuration, then exit.
    ValidateConfig,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration; the built-in laboratory defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Pulses per sweep point and repeat.
    #[arg(long, global = true, value_name = "N")]
    pub pulses: Option<u64>,
    #[arg(long, global = true, value_name = "N")]
    pub repeats: Option<u32>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Also write SVG charts.
    #[arg(long, global = true)]
    pub plots: bool,
}

impl CommonArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            pulses: self.pulses,
            repeats: self.repeats,
            out_dir: self.out.clone(),
            workers: self.workers,
            plots: self.plots,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(ValidationReport),
    #[error("simulation failed: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<herald_core::Error> for CliError {
    fn from(e: herald_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<OutputError> for CliError {
    fn from(e: OutputError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Reads the config (or the defaults), applies overrides and prepares it.
pub fn load(config: Option<&Path>, overrides: &Overrides) -> Result<Experiment, CliError> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::from_file(p),
        None => ExperimentConfig::from_toml(crate::config::DEFAULT_CONFIG),
    }
    .map_err(CliError::Config)?;
    overrides.apply(&mut cfg);
    cfg.prepare().map_err(CliError::Config)
}

/// What a command produced, for the console summary.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

pub fn execute(command: Command, exp: &Experiment) -> Result<Outcome, CliError> {
    let run = &exp.config.run;
    let meta = RunMeta {
        seed: run.seed,
        pulses: run.pulses,
        repeats: run.repeats,
    };
    let rep_hz = exp.model.pump.repetition_rate_hz;
    let mut notes = Vec::new();
    if command == Command::ValidateConfig {
        notes.push("configuration is valid".into());
        if let Some(c) = &exp.calibration {
            notes.push(format!(
                "calibrated: residual signal transmission {:.4}, trigger background {:.1} /s/uW, idler background {:.0} /s + {:.1} /s/uW ({} iterations)",
                c.residual_transmission, c.trigger_cps_per_uw, c.idler_cps, c.idler_cps_per_uw, c.iterations
            ));
        }
        return Ok(Outcome { files: Vec::new(), notes });
    }
    let runner = || Runner::new(run.workers).map_err(|e| CliError::Runtime(e.to_string()));
    let mut w = Writer::new(&run.out_dir, run.plots)?;
    match command {
        Command::PowerSweep => {
            let rows = experiments::power_sweep(exp, &runner()?)?;
            w.power_sweep(&rows, rep_hz, meta)?;
        }
        Command::DelayScan => {
            let profiles = experiments::delay_scan(exp, &runner()?)?;
            for p in profiles.iter().filter(|p| p.gate_missed) {
                notes.push(format!("warning: delay grid misses the idler gate at {} uW", p.power_uw));
            }
            w.delay_scan(&profiles, rep_hz, meta)?;
        }
        Command::WdmSweep => {
            let sweep = experiments::wdm_sweep(exp)?;
            if let Some(r) = sweep.optimum.map(|i| &sweep.rows[i]) {
                notes.push(format!(
                    "optimum stem length {} um: eta_s {:.4}, eta_i {:.4}",
                    r.stem_length_um, r.eta_signal, r.eta_idler
                ));
            }
            w.wdm_sweep(&sweep)?;
        }
        Command::QpmCurves => {
            let curves = experiments::qpm_curves(exp)?;
            let op = &curves.operating_point;
            notes.push(format!(
                "phase-matched at signal {:.3} nm, idler {:.3} nm",
                op.signal_wavelength_nm, op.idler_wavelength_nm
            ));
            w.qpm_curves(&curves)?;
        }
        Command::OracleTable => {
            let rows = experiments::oracle_table(exp)?;
            w.oracle_table(&rows)?;
        }
        Command::ValidateConfig => unreachable!("handled above"),
    }
    Ok(Outcome { files: w.written, notes })
}

/// Full invocation: load, run, report. Returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = load(cli.common.config.as_deref(), &cli.common.overrides()).and_then(|exp| execute(cli.command, &exp));
    match result {
        Ok(out) => {
            for n in &out.notes {
                println!("{n}");
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
