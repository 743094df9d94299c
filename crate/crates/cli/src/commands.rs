//! Subcommand implementations. Each returns its report so callers (and
//! tests) can inspect results without re-reading the files written.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{ensure, Context, Result};
use derfleet_core::engine::{simulate_with, SimOptions};
use derfleet_core::export::{
    write_available_power_csv, write_events_csv, write_signal_csv, write_states_csv, TraceSummary,
};
use derfleet_core::oracle::feasibility_certificate;
use derfleet_core::{
    available_power_trajectory, oracle_time_to_failure, Fleet, Policy, PolicyKind, ReferenceSignal, SimulationTrace,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Format, RunConfig};

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

pub fn run_policy(
    cfg: &RunConfig,
    fleet: &Fleet,
    signal: &ReferenceSignal,
    kind: PolicyKind,
) -> Result<SimulationTrace> {
    let opts = SimOptions {
        group_tolerance: cfg.tolerances.group,
        empty_tolerance: cfg.tolerances.empty,
        ..SimOptions::default()
    };
    let policy = Policy::new(kind, cfg.tolerances.group);
    Ok(simulate_with(fleet, &fleet.initial_state(), signal, &policy, &opts)?)
}

fn write_samples_csv(path: &Path, trace: &SimulationTrace, fleet: &Fleet, count: usize) -> Result<()> {
    let mut out = create(path)?;
    let header: Vec<String> = std::iter::once("time_h".to_string())
        .chain(fleet.devices().iter().map(|d| format!("x_{}", d.id)))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (t, state) in trace.resample(fleet, count) {
        let row: Vec<String> = std::iter::once(t.to_string())
            .chain(state.times_to_go.iter().map(|x| x.to_string()))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Runs each selected policy once and writes, per policy, the event log and
/// state samples (`csv`) or the full trace (`json`), the available-power step
/// data and a summary JSON.
pub fn simulate(cfg: &RunConfig) -> Result<Vec<TraceSummary>> {
    let (fleet, signal) = cfg.instantiate(cfg.seed)?;
    let dir = &cfg.out_dir;
    prepare_dir(dir)?;
    let mut out = create(&dir.join("signal.csv"))?;
    write_signal_csv(&mut out, &signal)?;
    out.flush()?;

    let mut summaries = Vec::new();
    for &kind in &cfg.policies {
        let trace = run_policy(cfg, &fleet, &signal, kind)?;
        let name = kind.name();
        match cfg.format {
            Format::Csv => {
                let mut out = create(&dir.join(format!("{name}_events.csv")))?;
                write_events_csv(&mut out, &trace, &fleet)?;
                out.flush()?;
                let mut out = create(&dir.join(format!("{name}_states.csv")))?;
                write_states_csv(&mut out, &trace, &fleet)?;
                out.flush()?;
            }
            Format::Json => write_json(&dir.join(format!("{name}_trace.json")), &trace)?,
        }
        let mut out = create(&dir.join(format!("{name}_available_power.csv")))?;
        write_available_power_csv(&mut out, &trace, &fleet)?;
        out.flush()?;
        if cfg.samples > 0 {
            write_samples_csv(&dir.join(format!("{name}_samples.csv")), &trace, &fleet, cfg.samples)?;
        }
        let summary = TraceSummary::new(name, &trace, &fleet);
        write_json(&dir.join(format!("{name}_summary.json")), &summary)?;
        summaries.push(summary);
    }
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub time_to_failure_h: f64,
    pub survived: bool,
    pub delivered_energy_kwh: f64,
    pub depletions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub seed: u64,
    /// Time to failure per selected policy, in selection order.
    pub times_to_failure_h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepStat {
    pub policy: String,
    pub runs: usize,
    pub mean_h: f64,
    pub min_h: f64,
    pub max_h: f64,
    /// Fraction of seeds where this policy lasted strictly longer than every
    /// other selected policy.
    pub strictly_greatest_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub rows: Vec<ComparisonRow>,
    pub sweep: Option<Vec<SweepStat>>,
}

/// Time to failure of every selected policy on the scenario drawn from each
/// seed `cfg.seed .. cfg.seed + cfg.seeds`. Seeds run in parallel; rows come
/// back in seed order.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    (0..cfg.seeds as u64)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.seed + k;
            let (fleet, signal) = cfg.instantiate(seed)?;
            let times_to_failure_h = cfg
                .policies
                .iter()
                .map(|&kind| Ok(run_policy(cfg, &fleet, &signal, kind)?.time_to_failure()))
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow {
                seed,
                times_to_failure_h,
            })
        })
        .collect()
}

pub fn sweep_stats(policies: &[PolicyKind], rows: &[SweepRow]) -> Vec<SweepStat> {
    let runs = rows.len();
    policies
        .iter()
        .enumerate()
        .map(|(j, kind)| {
            let values: Vec<f64> = rows.iter().map(|r| r.times_to_failure_h[j]).collect();
            let strictly = rows
                .iter()
                .filter(|r| {
                    r.times_to_failure_h
                        .iter()
                        .enumerate()
                        .all(|(i, &v)| i == j || r.times_to_failure_h[j] > v)
                })
                .count();
            SweepStat {
                policy: kind.name().to_string(),
                runs,
                mean_h: values.iter().sum::<f64>() / runs as f64,
                min_h: values.iter().cloned().fold(f64::INFINITY, f64::min),
                max_h: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                strictly_greatest_fraction: strictly as f64 / runs as f64,
            }
        })
        .collect()
}

/// Reference and available power of every policy on one time grid: all
/// breakpoints, depletion instants and failure instants.
fn write_figure_csv(
    path: &Path,
    signal: &ReferenceSignal,
    fleet: &Fleet,
    runs: &[(PolicyKind, SimulationTrace)],
) -> Result<()> {
    let steps: Vec<Vec<(f64, f64)>> = runs
        .iter()
        .map(|(_, tr)| available_power_trajectory(tr, fleet))
        .collect();
    let mut times: Vec<f64> = signal.breakpoints().to_vec();
    times.push(signal.horizon());
    for ((_, tr), st) in runs.iter().zip(&steps) {
        times.extend(st.iter().map(|(t, _)| *t));
        times.extend(tr.failure_time);
    }
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut out = create(path)?;
    let mut header = vec!["time_h".to_string(), "reference_kw".to_string()];
    header.extend(runs.iter().map(|(k, _)| format!("available_{k}_kw")));
    writeln!(out, "{}", header.join(","))?;
    for &t in &times {
        let mut row = vec![t.to_string(), signal.value_at(t)?.to_string()];
        for st in &steps {
            let k = st.partition_point(|(s, _)| *s <= t);
            row.push(st[k.max(1) - 1].1.to_string());
        }
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Runs every selected policy on one shared scenario and writes the
/// comparison table, the data behind the available-power figure, and, for
/// multi-seed runs, the per-seed sweep and its summary.
pub fn compare(cfg: &RunConfig) -> Result<ComparisonReport> {
    let mut distinct = cfg.policies.clone();
    distinct.sort();
    distinct.dedup();
    ensure!(distinct.len() >= 2, "compare needs at least two distinct policies");

    let (fleet, signal) = cfg.instantiate(cfg.seed)?;
    let runs = cfg
        .policies
        .iter()
        .map(|&kind| Ok((kind, run_policy(cfg, &fleet, &signal, kind)?)))
        .collect::<Result<Vec<_>>>()?;

    let dir = &cfg.out_dir;
    prepare_dir(dir)?;
    let mut out = create(&dir.join("signal.csv"))?;
    write_signal_csv(&mut out, &signal)?;
    out.flush()?;
    for (kind, trace) in &runs {
        let mut out = create(&dir.join(format!("{kind}_available_power.csv")))?;
        write_available_power_csv(&mut out, trace, &fleet)?;
        out.flush()?;
    }
    write_figure_csv(&dir.join("figure.csv"), &signal, &fleet, &runs)?;

    let rows: Vec<ComparisonRow> = runs
        .iter()
        .map(|(kind, tr)| ComparisonRow {
            policy: kind.name().to_string(),
            time_to_failure_h: tr.time_to_failure(),
            survived: tr.survived(),
            delivered_energy_kwh: tr.delivered_energy,
            depletions: tr.event_counts().depletion,
        })
        .collect();

    let sweep_stats = if cfg.seeds > 1 {
        let rows = sweep(cfg)?;
        let stats = sweep_stats(&cfg.policies, &rows);
        let mut out = create(&dir.join("sweep.csv"))?;
        let mut header = vec!["seed".to_string()];
        header.extend(cfg.policies.iter().map(|k| format!("ttf_{k}_h")));
        writeln!(out, "{}", header.join(","))?;
        for r in &rows {
            let mut line = vec![r.seed.to_string()];
            line.extend(r.times_to_failure_h.iter().map(|v| v.to_string()));
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        let mut out = create(&dir.join("sweep_summary.csv"))?;
        writeln!(out, "policy,runs,mean_h,min_h,max_h,strictly_greatest_fraction")?;
        for s in &stats {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.policy, s.runs, s.mean_h, s.min_h, s.max_h, s.strictly_greatest_fraction
            )?;
        }
        out.flush()?;
        Some(stats)
    } else {
        None
    };

    let report = ComparisonReport {
        seed: cfg.seed,
        rows,
        sweep: sweep_stats,
    };
    match cfg.format {
        Format::Csv => {
            let mut out = create(&dir.join("comparison.csv"))?;
            writeln!(out, "policy,time_to_failure_h,survived,delivered_energy_kwh,depletions")?;
            for r in &report.rows {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    r.policy, r.time_to_failure_h, r.survived, r.delivered_energy_kwh, r.depletions
                )?;
            }
            out.flush()?;
        }
        Format::Json => write_json(&dir.join("comparison.json"), &report)?,
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub horizon_h: f64,
    pub feasible: bool,
    pub total_demand_kwh: f64,
    pub max_flow_kwh: f64,
    pub segment_demand_kwh: Vec<f64>,
    pub segment_unmet_kwh: Vec<f64>,
    pub time_to_failure_h: f64,
    pub bisect_tolerance_h: f64,
    /// `certificate_kwh[i][k]`: energy device `i` delivers in segment `k`.
    pub certificate_kwh: Vec<Vec<f64>>,
}

/// Decides feasibility of the request truncated at `horizon` (default: the
/// signal's horizon) and bisects the time to failure.
pub fn feasible(cfg: &RunConfig, horizon: Option<f64>) -> Result<FeasibilityReport> {
    let (fleet, signal) = cfg.instantiate(cfg.seed)?;
    let state = fleet.initial_state();
    let horizon = horizon.unwrap_or(signal.horizon());
    let (ok, instance, solution) = feasibility_certificate(&fleet, &state, &signal, horizon)?;
    let segment_unmet_kwh = instance
        .demands
        .iter()
        .enumerate()
        .map(|(k, d)| (d - solution.flows.iter().map(|row| row[k]).sum::<f64>()).max(0.0))
        .collect();
    let report = FeasibilityReport {
        horizon_h: horizon,
        feasible: ok,
        total_demand_kwh: instance.total_demand(),
        max_flow_kwh: solution.value,
        segment_demand_kwh: instance.demands.clone(),
        segment_unmet_kwh,
        time_to_failure_h: oracle_time_to_failure(&fleet, &state, &signal, cfg.tolerances.bisect)?,
        bisect_tolerance_h: cfg.tolerances.bisect,
        certificate_kwh: solution.flows,
    };
    prepare_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("feasibility.json"), &report)?;
    Ok(report)
}

/// Writes the fleet (`fleet.csv`) and request (`signal.csv`) drawn for the
/// configured seed.
pub fn gen_scenario(cfg: &RunConfig) -> Result<(Fleet, ReferenceSignal)> {
    let (fleet, signal) = cfg.instantiate(cfg.seed)?;
    prepare_dir(&cfg.out_dir)?;
    let mut out = create(&cfg.out_dir.join("fleet.csv"))?;
    writeln!(out, "id,max_power_kw,energy_kwh,time_to_go_h")?;
    for d in fleet.devices() {
        writeln!(
            out,
            "{},{},{},{}",
            d.id,
            d.max_power,
            d.extractable_energy,
            d.time_to_go()
        )?;
    }
    out.flush()?;
    let mut out = create(&cfg.out_dir.join("signal.csv"))?;
    write_signal_csv(&mut out, &signal)?;
    out.flush()?;
    Ok((fleet, signal))
}
