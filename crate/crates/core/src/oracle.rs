//! Feasibility oracle independent of the simulation engine.
//!
//! For a piecewise-constant request truncated at `T`, a dispatch exists iff
//! the transportation network
//!
//! ```text
//! source --E_i--> device i --p̄_i Δ_k--> segment k --P_k Δ_k--> sink
//! ```
//!
//! carries a flow saturating every segment. Inside a constant segment any
//! admissible time-varying dispatch can be replaced by its average, so
//! per-segment energies lose nothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{Fleet, FleetState};
use crate::reference::ReferenceSignal;

mod maxflow;

pub use maxflow::FlowNetwork;

/// Default bisection tolerance on the time to failure, hours.
pub const DEFAULT_BISECTION_TOLERANCE: f64 = 1e-9;

/// Relative slack on total demand when deciding saturation.
const SATURATION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowInstance {
    /// Extractable energy per device, kWh.
    pub supplies: Vec<f64>,
    /// Requested energy per segment, kWh.
    pub demands: Vec<f64>,
    /// `capacities[i][k]`: most energy device `i` can deliver in segment `k`.
    pub capacities: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    pub value: f64,
    /// `flows[i][k]`: energy device `i` delivers in segment `k`, kWh.
    pub flows: Vec<Vec<f64>>,
}

impl FlowInstance {
    /// Network for `signal` restricted to `[0, horizon)`; the segment
    /// containing `horizon` is split there and zero-length pieces dropped.
    pub fn build(fleet: &Fleet, state: &FleetState, signal: &ReferenceSignal, horizon: f64) -> Result<Self> {
        fleet.check_state(state)?;
        if horizon.is_infinite() {
            return Err(Error::Unsupported(
                "the request must be truncated to a finite horizon".into(),
            ));
        }
        if horizon.is_nan() || horizon < 0.0 {
            return Err(Error::InvalidInput(format!("horizon must be >= 0, got {horizon}")));
        }
        let pieces: Vec<(f64, f64)> = signal
            .segments()
            .filter_map(|s| {
                let d = s.end.min(horizon) - s.start;
                (d > 0.0).then_some((d, s.power))
            })
            .collect();
        let supplies = state.energies(fleet);
        let demands = pieces.iter().map(|(d, p)| d * p).collect();
        let capacities = fleet
            .devices()
            .iter()
            .zip(&state.times_to_go)
            .map(|(dev, &x)| {
                pieces
                    .iter()
                    .map(|(d, _)| if x > 0.0 { dev.max_power * d } else { 0.0 })
                    .collect()
            })
            .collect();
        Ok(Self {
            supplies,
            demands,
            capacities,
        })
    }

    pub fn total_demand(&self) -> f64 {
        self.demands.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: &f64| v.is_finite() && *v >= 0.0;
        if !(self.supplies.iter().all(ok) && self.demands.iter().all(ok)) {
            return Err(Error::InvalidInput(
                "supplies and demands must be finite and >= 0".into(),
            ));
        }
        if self.capacities.len() != self.supplies.len()
            || self
                .capacities
                .iter()
                .any(|row| row.len() != self.demands.len() || !row.iter().all(ok))
        {
            return Err(Error::InvalidInput(
                "capacities must be a devices x segments matrix of finite values >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn is_saturated(&self, solution: &FlowSolution) -> bool {
        let demand = self.total_demand();
        solution.value >= demand - SATURATION_SLACK * demand.max(1.0)
    }
}

/// Maximum flow through `instance`.
pub fn max_flow(instance: &FlowInstance) -> Result<FlowSolution> {
    instance.validate()?;
    let n = instance.supplies.len();
    let m = instance.demands.len();
    let source = 0;
    let sink = n + m + 1;
    let mut net = FlowNetwork::new(n + m + 2);
    for (i, &s) in instance.supplies.iter().enumerate() {
        net.add_edge(source, 1 + i, s);
    }
    let links: Vec<Vec<Option<usize>>> = instance
        .capacities
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(k, &cap)| (cap > 0.0).then(|| net.add_edge(1 + i, 1 + n + k, cap)))
                .collect()
        })
        .collect();
    for (k, &d) in instance.demands.iter().enumerate() {
        net.add_edge(1 + n + k, sink, d);
    }
    let value = net.run(source, sink);
    let flows = links
        .iter()
        .map(|row| row.iter().map(|e| e.map_or(0.0, |e| net.flow(e))).collect())
        .collect();
    Ok(FlowSolution { value, flows })
}

/// Whether the request truncated at `horizon` can be met from `state`.
pub fn feasible(fleet: &Fleet, state: &FleetState, signal: &ReferenceSignal, horizon: f64) -> Result<bool> {
    Ok(feasibility_certificate(fleet, state, signal, horizon)?.0)
}

/// Feasibility decision together with the maximum flow that decided it.
pub fn feasibility_certificate(
    fleet: &Fleet,
    state: &FleetState,
    signal: &ReferenceSignal,
    horizon: f64,
) -> Result<(bool, FlowInstance, FlowSolution)> {
    let instance = FlowInstance::build(fleet, state, signal, horizon)?;
    let solution = max_flow(&instance)?;
    Ok((instance.is_saturated(&solution), instance, solution))
}

/// Supremum of the horizons whose truncated request is feasible, found by
/// bisection over `[0, signal.horizon()]` to within `tolerance`. Returns the
/// largest horizon verified feasible.
pub fn oracle_time_to_failure(
    fleet: &Fleet,
    state: &FleetState,
    signal: &ReferenceSignal,
    tolerance: f64,
) -> Result<f64> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "bisection tolerance must be > 0, got {tolerance}"
        )));
    }
    let end = signal.horizon();
    if feasible(fleet, state, signal, end)? {
        return Ok(end);
    }
    let (mut lo, mut hi) = (0.0, end);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if feasible(fleet, state, signal, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(p: &[f64], x: &[f64]) -> (Fleet, FleetState) {
        let f = Fleet::from_powers_and_ttg(p, x).unwrap();
        let s = f.initial_state();
        (f, s)
    }

    #[test]
    fn max_flow_examples() {
        let one = FlowInstance {
            supplies: vec![2.0],
            demands: vec![1.0],
            capacities: vec![vec![1.0]],
        };
        assert_eq!(max_flow(&one).unwrap().value, 1.0);

        let short = FlowInstance {
            supplies: vec![1.0, 1.0],
            demands: vec![3.0],
            capacities: vec![vec![1.0], vec![1.0]],
        };
        let sol = max_flow(&short).unwrap();
        assert_eq!(sol.value, 2.0);
        assert!(!short.is_saturated(&sol));
    }

    #[test]
    fn rejects_malformed_instance() {
        let bad = FlowInstance {
            supplies: vec![1.0],
            demands: vec![1.0, 2.0],
            capacities: vec![vec![1.0]],
        };
        assert!(max_flow(&bad).is_err());
    }

    #[test]
    fn feasibility_examples() {
        let (f, s) = setup(&[1.0, 1.0], &[2.0, 1.0]);
        let one = ReferenceSignal::constant(1.0, 100.0).unwrap();
        assert!(feasible(&f, &s, &one, 3.0).unwrap());
        assert!(!feasible(&f, &s, &one, 3.01).unwrap());

        let two = ReferenceSignal::constant(2.0, 100.0).unwrap();
        assert!(feasible(&f, &s, &two, 1.0).unwrap());
        assert!(!feasible(&f, &s, &two, 1.01).unwrap());

        let zero = ReferenceSignal::constant(0.0, 100.0).unwrap();
        for t in [0.0, 1.0, 50.0, 100.0, 1e6] {
            assert!(feasible(&f, &s, &zero, t).unwrap());
        }
        assert!(matches!(
            feasible(&f, &s, &one, f64::INFINITY),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn certificate_flow_meets_demand() {
        let (f, s) = setup(&[1.0, 2.0], &[2.0, 1.0]);
        let sig = ReferenceSignal::from_durations(&[(2.0, 1.0), (10.0, 3.0)]).unwrap();
        let (ok, inst, sol) = feasibility_certificate(&f, &s, &sig, 8.0 / 3.0 - 1e-6).unwrap();
        assert!(ok);
        for (k, d) in inst.demands.iter().enumerate() {
            let delivered: f64 = sol.flows.iter().map(|row| row[k]).sum();
            assert!((delivered - d).abs() <= 1e-9);
        }
        for (i, row) in sol.flows.iter().enumerate() {
            assert!(row.iter().sum::<f64>() <= inst.supplies[i] + 1e-9);
        }
    }

    #[test]
    fn bisection_examples() {
        let tol = DEFAULT_BISECTION_TOLERANCE;
        let (f, s) = setup(&[1.0, 2.0], &[2.0, 1.0]);
        let sig = ReferenceSignal::from_durations(&[(2.0, 1.0), (10.0, 3.0)]).unwrap();
        let theta = oracle_time_to_failure(&f, &s, &sig, tol).unwrap();
        assert!((theta - 8.0 / 3.0).abs() <= 2.0 * tol, "{theta}");

        let (f, s) = setup(&[1.0], &[0.0]);
        let one = ReferenceSignal::constant(1.0, 24.0).unwrap();
        assert!(oracle_time_to_failure(&f, &s, &one, tol).unwrap() <= tol);

        let (f, s) = setup(&[1.0, 1.0], &[5.0, 5.0]);
        let theta = oracle_time_to_failure(&f, &s, &one, tol).unwrap();
        assert!((theta - 10.0).abs() <= 2.0 * tol);

        let zero = ReferenceSignal::constant(0.0, 24.0).unwrap();
        assert_eq!(oracle_time_to_failure(&f, &s, &zero, tol).unwrap(), 24.0);
        assert!(oracle_time_to_failure(&f, &s, &zero, 0.0).is_err());
    }

    #[test]
    fn over_power_first_segment_fails_immediately() {
        let (f, s) = setup(&[1.0, 1.0], &[5.0, 5.0]);
        let sig = ReferenceSignal::constant(2.5, 24.0).unwrap();
        assert!(oracle_time_to_failure(&f, &s, &sig, 1e-9).unwrap() <= 1e-9);
    }
}
