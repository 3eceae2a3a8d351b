use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use omx_core::harness::{self, ExperimentConfig};
use omx_core::OmxError;

#[derive(Parser)]
#[command(name = "omx", version, about = "Optomechanical displacement sensing through shaped scattering media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, default_value = "omx_out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Record driven frame sequences for each configured input.
    Simulate(Common),
    /// Measure the transmission matrix with Hadamard phase stepping.
    Calibrate(Common),
    /// Focus onto an optical grain by phase conjugation.
    Focus(Common),
    /// Evaluate the configured estimators on simulated frames.
    Estimate(Common),
    /// Balanced-mask shot-noise audit.
    NoiseAudit(Common),
    /// Consolidate artifacts into a run report and figure data.
    Report(Common),
}

fn load(c: &Common) -> Result<ExperimentConfig, OmxError> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String, OmxError> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = load(&c)?;
            harness::cmd_simulate(&cfg, &c.out)?;
            Ok(format!("frames written to {}", c.out.display()))
        }
        Command::Calibrate(c) => {
            let cfg = load(&c)?;
            let r = harness::cmd_calibrate(&cfg, &c.out)?;
            Ok(format!(
                "calibrated {}x{} TM, {} low-signal rows, min row correlation {:.6}",
                r.n_out,
                r.n_in,
                r.n_low_signal,
                r.min_row_correlation.unwrap_or(f64::NAN)
            ))
        }
        Command::Focus(c) => {
            let cfg = load(&c)?;
            let f = harness::cmd_focus(&cfg, &c.out)?;
            Ok(format!(
                "grain {:.5}, enhancement {:.2}, phase_only {}",
                f.grain_size, f.enhancement, f.phase_only
            ))
        }
        Command::Estimate(c) => {
            let cfg = load(&c)?;
            let est = harness::cmd_estimate(&cfg, &c.out)?;
            let mut s = String::new();
            for e in &est {
                for r in &e.reports {
                    s.push_str(&format!(
                        "{:>9} {:>9}  mu {:.4e}  snr {:.4e}  projection {:+.4}\n",
                        r.input, r.label, r.mu, r.snr, r.projection
                    ));
                }
            }
            Ok(s.trim_end().to_string())
        }
        Command::NoiseAudit(c) => {
            let cfg = load(&c)?;
            let a = harness::cmd_noise_audit(&cfg, &c.out)?;
            Ok(format!(
                "audit slope {:.4} +/- {:.4} over {} frames",
                a.result.slope, a.result.slope_ci95, a.n_frames
            ))
        }
        Command::Report(c) => {
            let cfg = load(&c)?;
            let r = harness::cmd_report(&cfg, &c.out)?;
            Ok(format!(
                "report written, improvement {}",
                r.improvement.map_or("n/a".to_string(), |x| format!("{x:.2}"))
            ))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("omx: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
