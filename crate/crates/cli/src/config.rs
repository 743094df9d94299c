//! Run configuration: a TOML file plus command-line overrides.
//!
//! ```toml
//! seed = 7
//! policies = ["op", "lpf", "pop"]
//!
//! # fleet: either inline devices or a [scenario] block
//! [[devices]]
//! max_power = 1.0        # kW
//! energy = 2.0           # kWh extractable
//!
//! [[devices]]
//! max_power = 2.0
//! stored_energy = 1.25   # kWh, scaled by efficiency
//! efficiency = 0.8
//!
//! # signal: either inline segments or a [scenario] block
//! [signal]
//! segments = [[2.0, 1.0], [10.0, 3.0]]   # [duration_h, power_kw]
//!
//! [scenario]             # random fleet and/or hourly request
//! preset = "high-variance"   # or "low-variance"; fields below override
//! n = 1000
//! ttg_range = [0.0, 10.0]
//! power_range = [0.0, 1.5]
//! reference_mean = 200.0
//! reference_std = 80.0
//! step = 1.0
//! horizon = 24.0
//!
//! [tolerances]
//! group = 1e-9
//! empty = 1e-12
//! bisect = 1e-9
//!
//! [output]
//! dir = "out"
//! format = "csv"         # or "json"
//! samples = 0
//!
//! [sweep]
//! seeds = 1              # compare over seeds seed, seed+1, ...
//! ```
//!
//! A `[scenario]` block supplies whichever of fleet and signal is not given
//! inline. Exactly one source must exist for each.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use derfleet_core::{sample_scenario, Device, Fleet, PolicyKind, ReferenceSignal, ScenarioSpec};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub policies: Option<Vec<String>>,
    pub devices: Option<Vec<DeviceEntry>>,
    pub signal: Option<SignalEntry>,
    pub scenario: Option<ScenarioEntry>,
    pub tolerances: Option<ToleranceEntry>,
    pub output: Option<OutputEntry>,
    pub sweep: Option<SweepEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceEntry {
    pub id: Option<usize>,
    pub max_power: f64,
    pub energy: Option<f64>,
    pub stored_energy: Option<f64>,
    pub efficiency: Option<f64>,
    pub time_to_go: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalEntry {
    pub segments: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub preset: Option<String>,
    pub n: Option<usize>,
    pub ttg_range: Option<(f64, f64)>,
    pub power_range: Option<(f64, f64)>,
    pub reference_mean: Option<f64>,
    pub reference_std: Option<f64>,
    pub step: Option<f64>,
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceEntry {
    pub group: Option<f64>,
    pub empty: Option<f64>,
    pub bisect: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputEntry {
    pub dir: Option<PathBuf>,
    pub format: Option<String>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub seeds: Option<usize>,
}

/// Values given on the command line; each replaces its config counterpart.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub policies: Option<Vec<PolicyKind>>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub group_tolerance: Option<f64>,
    pub bisect_tolerance: Option<f64>,
    pub samples: Option<usize>,
    pub seeds: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(anyhow!("unknown format {other:?}, expected csv or json")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub group: f64,
    pub empty: f64,
    pub bisect: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            group: derfleet_core::DEFAULT_GROUP_TOLERANCE,
            empty: derfleet_core::engine::DEFAULT_EMPTY_TOLERANCE,
            bisect: derfleet_core::oracle::DEFAULT_BISECTION_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FleetSource {
    Inline(Fleet),
    Scenario(ScenarioSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalSource {
    Inline(ReferenceSignal),
    Scenario(ScenarioSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub fleet: FleetSource,
    pub signal: SignalSource,
    pub policies: Vec<PolicyKind>,
    pub tolerances: Tolerances,
    pub out_dir: PathBuf,
    pub format: Format,
    pub samples: usize,
    pub seed: u64,
    pub seeds: usize,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, overrides).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text)?;
        Self::from_file(file, overrides)
    }

    pub fn from_file(file: ConfigFile, overrides: &Overrides) -> Result<Self> {
        let seed = overrides.seed.or(file.seed).unwrap_or(0);
        let scenario = file.scenario.as_ref().map(|s| scenario_spec(s, seed)).transpose()?;

        let fleet = match (&file.devices, &scenario) {
            (Some(devices), _) => FleetSource::Inline(inline_fleet(devices)?),
            (None, Some(spec)) => FleetSource::Scenario(spec.clone()),
            (None, None) => bail!("no fleet: give [[devices]] entries or a [scenario] block"),
        };
        let signal = match (&file.signal, &scenario) {
            (Some(sig), _) => SignalSource::Inline(
                ReferenceSignal::from_durations(&sig.segments).context("invalid [signal] segments")?,
            ),
            (None, Some(spec)) => SignalSource::Scenario(spec.clone()),
            (None, None) => bail!("no signal: give [signal] segments or a [scenario] block"),
        };
        if file.devices.is_some() && file.signal.is_some() && file.scenario.is_some() {
            bail!("[scenario] is unused when both [[devices]] and [signal] are given");
        }

        let policies = match &overrides.policies {
            Some(p) => p.clone(),
            None => match &file.policies {
                Some(names) => names
                    .iter()
                    .map(|n| n.parse())
                    .collect::<Result<Vec<PolicyKind>, _>>()?,
                None => PolicyKind::ALL.to_vec(),
            },
        };
        ensure!(!policies.is_empty(), "at least one policy must be selected");

        let t = file.tolerances.unwrap_or_default();
        let defaults = Tolerances::default();
        let tolerances = Tolerances {
            group: overrides.group_tolerance.or(t.group).unwrap_or(defaults.group),
            empty: t.empty.unwrap_or(defaults.empty),
            bisect: overrides.bisect_tolerance.or(t.bisect).unwrap_or(defaults.bisect),
        };
        for (name, v) in [
            ("group", tolerances.group),
            ("empty", tolerances.empty),
            ("bisect", tolerances.bisect),
        ] {
            ensure!(v.is_finite() && v > 0.0, "tolerance {name} must be > 0, got {v}");
        }

        let out = file.output.unwrap_or_default();
        let format = match (overrides.format, out.format) {
            (Some(f), _) => f,
            (None, Some(s)) => s.parse()?,
            (None, None) => Format::Csv,
        };
        let seeds = overrides.seeds.or(file.sweep.and_then(|s| s.seeds)).unwrap_or(1);
        ensure!(seeds >= 1, "sweep seeds must be >= 1");

        Ok(Self {
            fleet,
            signal,
            policies,
            tolerances,
            out_dir: overrides
                .out
                .clone()
                .or(out.dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            format,
            samples: overrides.samples.or(out.samples).unwrap_or(0),
            seed,
            seeds,
        })
    }

    /// Fleet and signal for `seed`; inline sources ignore the seed.
    pub fn instantiate(&self, seed: u64) -> Result<(Fleet, ReferenceSignal)> {
        let sampled = match (&self.fleet, &self.signal) {
            (FleetSource::Scenario(spec), _) | (_, SignalSource::Scenario(spec)) => {
                Some(sample_scenario(&ScenarioSpec { seed, ..spec.clone() })?)
            }
            _ => None,
        };
        let fleet = match &self.fleet {
            FleetSource::Inline(f) => f.clone(),
            FleetSource::Scenario(_) => sampled.as_ref().unwrap().0.clone(),
        };
        let signal = match &self.signal {
            SignalSource::Inline(s) => s.clone(),
            SignalSource::Scenario(_) => sampled.as_ref().unwrap().1.clone(),
        };
        Ok((fleet, signal))
    }
}

fn scenario_spec(entry: &ScenarioEntry, seed: u64) -> Result<ScenarioSpec> {
    let base = match entry.preset.as_deref() {
        None | Some("high-variance") => ScenarioSpec::high_variance(seed),
        Some("low-variance") => ScenarioSpec::low_variance(seed),
        Some(other) => bail!("unknown scenario preset {other:?}, expected high-variance or low-variance"),
    };
    let spec = ScenarioSpec {
        n: entry.n.unwrap_or(base.n),
        ttg_range: entry.ttg_range.unwrap_or(base.ttg_range),
        power_range: entry.power_range.unwrap_or(base.power_range),
        reference_mean: entry.reference_mean.unwrap_or(base.reference_mean),
        reference_std: entry.reference_std.unwrap_or(base.reference_std),
        step: entry.step.unwrap_or(base.step),
        horizon: entry.horizon.unwrap_or(base.horizon),
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

fn inline_fleet(entries: &[DeviceEntry]) -> Result<Fleet> {
    ensure!(!entries.is_empty(), "fleet must contain at least one device");
    let devices = entries
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let id = e.id.unwrap_or(k + 1);
            let device = match (e.energy, e.stored_energy, e.time_to_go) {
                (Some(energy), None, None) => {
                    ensure!(
                        e.efficiency.is_none(),
                        "device {id}: efficiency only applies to stored_energy"
                    );
                    Device::new(id, e.max_power, energy)?
                }
                (None, Some(stored), None) => {
                    Device::from_stored(id, e.max_power, stored, e.efficiency.unwrap_or(1.0))?
                }
                (None, None, Some(ttg)) => {
                    ensure!(ttg.is_finite() && ttg >= 0.0, "device {id}: time_to_go must be >= 0");
                    Device::from_time_to_go(id, e.max_power, ttg)?
                }
                _ => bail!("device {id}: give exactly one of energy, stored_energy or time_to_go"),
            };
            Ok(device)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Fleet::new(devices)?)
}
