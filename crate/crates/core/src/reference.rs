//! Piecewise-constant power requests and seeded scenario generation.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{Device, Fleet};

/// Stepwise power request. Segment `k` covers `[breakpoints[k], end_k)` where
/// `end_k` is the next breakpoint, or `horizon` for the last segment. The
/// request is zero from `horizon` onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSignal {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub power: f64,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

impl ReferenceSignal {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::InvalidSignal(format!(
                "need one value per breakpoint and at least one segment, got {} breakpoints and {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidSignal("first breakpoint must be 0".into()));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) || !horizon.is_finite() {
            return Err(Error::InvalidSignal("breakpoints and horizon must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) || horizon <= *breakpoints.last().unwrap() {
            return Err(Error::InvalidSignal(
                "breakpoints must be strictly increasing and end before the horizon".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidSignal(format!(
                "request values must be finite and >= 0, got {v}"
            )));
        }
        Ok(Self {
            breakpoints,
            values,
            horizon,
        })
    }

    /// Signal from consecutive `(duration, power)` pairs starting at t = 0.
    pub fn from_durations(segments: &[(f64, f64)]) -> Result<Self> {
        let mut breakpoints = Vec::with_capacity(segments.len());
        let mut values = Vec::with_capacity(segments.len());
        let mut t = 0.0;
        for &(duration, power) in segments {
            if duration.is_nan() || duration <= 0.0 {
                return Err(Error::InvalidSignal(format!(
                    "segment duration must be > 0, got {duration}"
                )));
            }
            breakpoints.push(t);
            values.push(power);
            t += duration;
        }
        Self::new(breakpoints, values, t)
    }

    pub fn constant(power: f64, horizon: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![power], horizon)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn segment_count(&self) -> usize {
        self.values.len()
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        (0..self.values.len()).map(move |k| Segment {
            start: self.breakpoints[k],
            end: self.breakpoints.get(k + 1).copied().unwrap_or(self.horizon),
            power: self.values[k],
        })
    }

    /// Request at time `t`, right-continuous at breakpoints and zero from the
    /// horizon onward.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::InvalidInput(format!("time must be >= 0, got {t}")));
        }
        if t >= self.horizon {
            return Ok(0.0);
        }
        let k = self.breakpoints.partition_point(|&b| b <= t) - 1;
        Ok(self.values[k])
    }

    /// Equal to `self` on `[0, t)` and zero afterwards. The horizon is kept.
    pub fn truncate(&self, t: f64) -> Self {
        if t >= self.horizon {
            return self.clone();
        }
        let t = t.max(0.0);
        let mut breakpoints = Vec::new();
        let mut values = Vec::new();
        for seg in self.segments().take_while(|s| s.start < t) {
            breakpoints.push(seg.start);
            values.push(seg.power);
        }
        breakpoints.push(t);
        values.push(0.0);
        if t == 0.0 {
            breakpoints.truncate(1);
            values.truncate(1);
        }
        Self {
            breakpoints,
            values,
            horizon: self.horizon,
        }
    }

    /// Delivered energy required over `[0, t)`, in kWh.
    pub fn energy_until(&self, t: f64) -> f64 {
        self.segments()
            .map(|s| s.power * (s.end.min(t) - s.start).max(0.0))
            .sum()
    }
}

/// Randomised fleet and reference, following the hourly-stepped scenario
/// protocol. Draw order from one ChaCha8 stream seeded with `seed`: all
/// times-to-go, then all max powers, then the request values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    /// Uniform bounds on the initial time-to-go, hours.
    pub ttg_range: (f64, f64),
    /// Uniform bounds on the max power, kW.
    pub power_range: (f64, f64),
    pub reference_mean: f64,
    pub reference_std: f64,
    pub step: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// 1000 devices, U(0,10) h, U(0,1.5) kW, hourly N(200, 80) kW over a day.
    pub fn high_variance(seed: u64) -> Self {
        Self {
            n: 1000,
            ttg_range: (0.0, 10.0),
            power_range: (0.0, 1.5),
            reference_mean: 200.0,
            reference_std: 80.0,
            step: 1.0,
            horizon: 24.0,
            seed,
        }
    }

    /// As [`ScenarioSpec::high_variance`] with N(200, 20) kW requests.
    pub fn low_variance(seed: u64) -> Self {
        Self {
            reference_std: 20.0,
            ..Self::high_variance(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.n == 0 {
            return bad("n must be >= 1".into());
        }
        let (tl, th) = self.ttg_range;
        if !(tl.is_finite() && th.is_finite() && 0.0 <= tl && tl <= th) {
            return bad(format!(
                "time-to-go bounds must satisfy 0 <= low <= high, got ({tl}, {th})"
            ));
        }
        let (pl, ph) = self.power_range;
        if !(pl.is_finite() && ph.is_finite() && 0.0 <= pl && pl <= ph && ph > 0.0) {
            return bad(format!(
                "power bounds must satisfy 0 <= low <= high, high > 0, got ({pl}, {ph})"
            ));
        }
        if !(self.reference_mean.is_finite() && self.reference_std.is_finite() && self.reference_std >= 0.0) {
            return bad("reference mean must be finite and std >= 0".into());
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad(format!("step must be > 0, got {}", self.step));
        }
        let k = self.segment_count();
        if !(self.horizon > 0.0 && k >= 1 && (k as f64 * self.step - self.horizon).abs() <= 1e-9 * self.horizon) {
            return bad(format!(
                "horizon {} must be a positive multiple of step {}",
                self.horizon, self.step
            ));
        }
        Ok(())
    }

    pub fn segment_count(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }
}

fn uniform(low: f64, high: f64) -> Option<Uniform<f64>> {
    (high > low).then(|| Uniform::new(low, high))
}

/// Draws a fleet and an hourly-stepped request from `spec`. Negative request
/// draws are clamped to zero. A zero max-power draw is redrawn.
pub fn sample_scenario(spec: &ScenarioSpec) -> Result<(Fleet, ReferenceSignal)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let ttg_dist = uniform(spec.ttg_range.0, spec.ttg_range.1);
    let ttgs: Vec<f64> = (0..spec.n)
        .map(|_| ttg_dist.map_or(spec.ttg_range.0, |d| d.sample(&mut rng)))
        .collect();

    let power_dist = uniform(spec.power_range.0, spec.power_range.1);
    let powers: Vec<f64> = (0..spec.n)
        .map(|_| match power_dist {
            None => spec.power_range.0,
            Some(d) => loop {
                let p = d.sample(&mut rng);
                if p > 0.0 {
                    break p;
                }
            },
        })
        .collect();

    let k = spec.segment_count();
    let values: Vec<f64> = if spec.reference_std > 0.0 {
        let normal =
            Normal::new(spec.reference_mean, spec.reference_std).map_err(|e| Error::InvalidScenario(e.to_string()))?;
        (0..k).map(|_| normal.sample(&mut rng).max(0.0)).collect()
    } else {
        vec![spec.reference_mean.max(0.0); k]
    };

    let devices = powers
        .iter()
        .zip(&ttgs)
        .enumerate()
        .map(|(i, (&p, &x))| Device::from_time_to_go(i + 1, p, x))
        .collect::<Result<Vec<_>>>()?;
    let breakpoints = (0..k).map(|j| j as f64 * spec.step).collect();
    let signal = ReferenceSignal::new(breakpoints, values, spec.horizon)?;
    Ok((Fleet::new(devices)?, signal))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_step() -> ReferenceSignal {
        ReferenceSignal::from_durations(&[(1.0, 5.0), (1.0, 3.0)]).unwrap()
    }

    #[test]
    fn value_at_examples() {
        let s = two_step();
        assert_eq!(s.value_at(1.0).unwrap(), 3.0);
        assert_eq!(s.value_at(0.5).unwrap(), 5.0);
        assert_eq!(s.value_at(2.5).unwrap(), 0.0);
        assert_eq!(s.value_at(2.0).unwrap(), 0.0);
        assert!(s.value_at(-0.1).is_err());
    }

    #[test]
    fn truncate_examples() {
        let s = ReferenceSignal::constant(4.0, 2.0).unwrap();
        let t = s.truncate(1.0);
        assert_eq!(t.value_at(0.5).unwrap(), 4.0);
        assert_eq!(t.value_at(1.0).unwrap(), 0.0);
        assert_eq!(t.value_at(1.5).unwrap(), 0.0);

        let z = s.truncate(0.0);
        assert_eq!(z.values(), &[0.0]);
        assert_eq!(z.value_at(0.0).unwrap(), 0.0);

        assert_eq!(s.truncate(5.0), s);
        assert_eq!(s.truncate(2.0), s);
    }

    #[test]
    fn truncate_mid_segment_of_many() {
        let s = two_step();
        let t = s.truncate(1.5);
        assert_eq!(t.breakpoints(), &[0.0, 1.0, 1.5]);
        assert_eq!(t.values(), &[5.0, 3.0, 0.0]);
        assert_eq!(t.energy_until(10.0), 6.5);
    }

    #[test]
    fn rejects_malformed_signals() {
        assert!(ReferenceSignal::new(vec![0.5], vec![1.0], 2.0).is_err());
        assert!(ReferenceSignal::new(vec![0.0, 0.0], vec![1.0, 1.0], 2.0).is_err());
        assert!(ReferenceSignal::new(vec![0.0], vec![-1.0], 2.0).is_err());
        assert!(ReferenceSignal::new(vec![0.0], vec![1.0, 2.0], 2.0).is_err());
        assert!(ReferenceSignal::new(vec![0.0], vec![1.0], 0.0).is_err());
        assert!(ReferenceSignal::from_durations(&[(0.0, 1.0)]).is_err());
    }

    #[test]
    fn preset_scenarios_have_expected_shape() {
        for spec in [ScenarioSpec::high_variance(3), ScenarioSpec::low_variance(3)] {
            let (fleet, signal) = sample_scenario(&spec).unwrap();
            assert_eq!(fleet.len(), 1000);
            assert_eq!(signal.segment_count(), 24);
            assert_eq!(signal.horizon(), 24.0);
            for d in fleet.devices() {
                assert!(d.max_power > 0.0 && d.max_power < 1.5);
                let x = d.time_to_go();
                assert!((0.0..10.0 + 1e-12).contains(&x));
            }
            assert!(signal.values().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn degenerate_scenario() {
        let spec = ScenarioSpec {
            n: 1,
            ttg_range: (1.0, 1.0),
            power_range: (2.0, 2.0),
            reference_mean: 0.0,
            reference_std: 0.0,
            step: 1.0,
            horizon: 3.0,
            seed: 0,
        };
        let (fleet, signal) = sample_scenario(&spec).unwrap();
        assert_eq!(fleet.len(), 1);
        assert_eq!(fleet.devices()[0].max_power, 2.0);
        assert_eq!(fleet.devices()[0].time_to_go(), 1.0);
        assert!(signal.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scenario_is_deterministic() {
        let a = sample_scenario(&ScenarioSpec::high_variance(11)).unwrap();
        let b = sample_scenario(&ScenarioSpec::high_variance(11)).unwrap();
        let c = sample_scenario(&ScenarioSpec::high_variance(12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_scenarios() {
        let base = ScenarioSpec::high_variance(0);
        assert!(sample_scenario(&ScenarioSpec { n: 0, ..base.clone() }).is_err());
        assert!(sample_scenario(&ScenarioSpec {
            ttg_range: (2.0, 1.0),
            ..base.clone()
        })
        .is_err());
        assert!(sample_scenario(&ScenarioSpec {
            step: 0.0,
            ..base.clone()
        })
        .is_err());
        assert!(sample_scenario(&ScenarioSpec { horizon: 23.5, ..base }).is_err());
    }

    #[test]
    fn reference_mean_converges() {
        // k = 24 * 400 hourly draws; clamping at 0 is a 2.5-sigma event at (200, 80).
        let spec = ScenarioSpec {
            n: 1,
            horizon: 9600.0,
            ..ScenarioSpec::high_variance(5)
        };
        let (_, signal) = sample_scenario(&spec).unwrap();
        let k = signal.segment_count() as f64;
        let mean = signal.values().iter().sum::<f64>() / k;
        assert!((mean - 200.0).abs() <= 3.0 * 80.0 / k.sqrt(), "mean {mean}");
    }
}
