use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use derfleet_cli::commands;
use derfleet_cli::{Format, Overrides, RunConfig};
use derfleet_core::PolicyKind;

#[derive(Parser)]
#[command(
    name = "derfleet",
    version,
    about = "Dispatch and survival analysis for energy-constrained DER fleets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate each selected policy and write traces and summaries.
    Simulate(Common),
    /// Run two or more policies on the same scenario (optionally over a seed sweep).
    Compare {
        #[command(flatten)]
        common: Common,
        /// Number of consecutive seeds to sweep, starting at --seed.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Check feasibility of the request with the max-flow oracle.
    Feasible {
        #[command(flatten)]
        common: Common,
        /// Truncation horizon in hours (default: end of the signal).
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Draw a fleet and request from the scenario block and write them as CSV.
    GenScenario(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Scenario seed (overrides the file).
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated list of op, lpf, pop.
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<PolicyKind>>,
    /// Output directory (overrides the file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trace format: csv or json.
    #[arg(long)]
    format: Option<Format>,
    /// Hours within which times-to-go count as equal.
    #[arg(long = "tolerance-group")]
    tolerance_group: Option<f64>,
    /// Bisection tolerance of the oracle, hours.
    #[arg(long = "tolerance-bisect")]
    tolerance_bisect: Option<f64>,
    /// Uniformly resampled state rows per trace (0 disables).
    #[arg(long)]
    samples: Option<usize>,
}

impl Common {
    fn load(&self, seeds: Option<usize>) -> Result<RunConfig> {
        let overrides = Overrides {
            seed: self.seed,
            policies: self.policy.clone(),
            out: self.out.clone(),
            format: self.format,
            group_tolerance: self.tolerance_group,
            bisect_tolerance: self.tolerance_bisect,
            samples: self.samples,
            seeds,
        };
        RunConfig::load(&self.config, &overrides)
    }
}

fn fmt_h(v: f64) -> String {
    format!("{v:.4}")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = common.load(None)?;
            for s in commands::simulate(&cfg)? {
                println!(
                    "{:<4} time_to_failure_h={} survived={} delivered_kwh={}",
                    s.policy,
                    fmt_h(s.time_to_failure_h),
                    s.survived,
                    fmt_h(s.delivered_energy_kwh)
                );
            }
        }
        Command::Compare { common, seeds } => {
            let cfg = common.load(seeds)?;
            let report = commands::compare(&cfg)?;
            println!("seed {}", report.seed);
            for r in &report.rows {
                println!(
                    "{:<4} time_to_failure_h={} survived={}",
                    r.policy,
                    fmt_h(r.time_to_failure_h),
                    r.survived
                );
            }
            if let Some(stats) = &report.sweep {
                println!("policy runs mean_h min_h max_h strictly_greatest");
                for s in stats {
                    println!(
                        "{:<6} {} {} {} {} {:.3}",
                        s.policy,
                        s.runs,
                        fmt_h(s.mean_h),
                        fmt_h(s.min_h),
                        fmt_h(s.max_h),
                        s.strictly_greatest_fraction
                    );
                }
            }
        }
        Command::Feasible { common, horizon } => {
            let cfg = common.load(None)?;
            let r = commands::feasible(&cfg, horizon)?;
            println!(
                "{}",
                serde_json::json!({
                    "horizon_h": r.horizon_h,
                    "feasible": r.feasible,
                    "time_to_failure_h": r.time_to_failure_h,
                    "total_demand_kwh": r.total_demand_kwh,
                    "max_flow_kwh": r.max_flow_kwh,
                })
            );
        }
        Command::GenScenario(common) => {
            let cfg = common.load(None)?;
            let (fleet, signal) = commands::gen_scenario(&cfg)?;
            println!(
                "{} devices, {} segments written to {}",
                fleet.len(),
                signal.segment_count(),
                cfg.out_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
