//! Randomised instances, alternative admissible policies and trajectory
//! checks used to verify the optimal policy's dominance properties.
//!
//! Every alternative here meets the request exactly whenever the non-empty
//! devices can, so it fulfils the reference up to its own failure time and
//! is a valid competitor for the optimal trajectory.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::engine::{EventKind, SimulationTrace};
use crate::fleet::{group_state, max_available_power, Fleet, FleetState, DEFAULT_GROUP_TOLERANCE};
use crate::policies::{fill_in_order, DispatchDecision, DispatchPolicy};
use crate::reference::ReferenceSignal;

/// Parameters of small random instances.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub max_devices: usize,
    pub ttg_range: (f64, f64),
    pub power_range: (f64, f64),
    pub max_segments: usize,
    pub duration_range: (f64, f64),
    /// Request values are drawn from `U(0, request_factor * Σp̄)`.
    pub request_factor: f64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            max_devices: 6,
            ttg_range: (0.0, 5.0),
            power_range: (0.1, 2.0),
            max_segments: 8,
            duration_range: (0.1, 2.0),
            request_factor: 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub fleet: Fleet,
    pub signal: ReferenceSignal,
}

impl Instance {
    pub fn state(&self) -> FleetState {
        self.fleet.initial_state()
    }
}

pub fn random_instance<R: Rng>(rng: &mut R, spec: &InstanceSpec) -> Instance {
    let n = rng.gen_range(1..=spec.max_devices);
    let ttg: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(spec.ttg_range.0..spec.ttg_range.1))
        .collect();
    let powers: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(spec.power_range.0..spec.power_range.1))
        .collect();
    let total: f64 = powers.iter().sum();
    let k = rng.gen_range(1..=spec.max_segments);
    let segments: Vec<(f64, f64)> = (0..k)
        .map(|_| {
            (
                rng.gen_range(spec.duration_range.0..spec.duration_range.1),
                rng.gen_range(0.0..spec.request_factor * total),
            )
        })
        .collect();
    Instance {
        fleet: Fleet::from_powers_and_ttg(&powers, &ttg).expect("valid random fleet"),
        signal: ReferenceSignal::from_durations(&segments).expect("valid random signal"),
    }
}

/// Greedy fill in a fixed priority order.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityOrder {
    pub order: Vec<usize>,
}

impl PriorityOrder {
    pub fn random<R: Rng>(rng: &mut R, n: usize) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self { order }
    }

    /// Highest max power first.
    pub fn highest_power_first(fleet: &Fleet) -> Self {
        let mut order: Vec<usize> = (0..fleet.len()).collect();
        order.sort_by(|&a, &b| fleet.max_power(b).total_cmp(&fleet.max_power(a)).then(a.cmp(&b)));
        Self { order }
    }
}

impl DispatchPolicy for PriorityOrder {
    fn decide(&self, state: &FleetState, fleet: &Fleet, request: f64) -> DispatchDecision {
        DispatchDecision::from_powers(fill_in_order(state, fleet, request, &self.order), request)
    }
}

/// Water-filling with fixed positive weights: `u_i = min(p̄_i, λ w_i)` over
/// the non-empty devices with `λ` chosen so the request is met.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFill {
    pub weights: Vec<f64>,
}

impl WeightedFill {
    pub fn random<R: Rng>(rng: &mut R, n: usize) -> Self {
        Self {
            weights: (0..n).map(|_| rng.gen_range(0.05..1.0)).collect(),
        }
    }
}

impl DispatchPolicy for WeightedFill {
    fn decide(&self, state: &FleetState, fleet: &Fleet, request: f64) -> DispatchDecision {
        let n = fleet.len();
        let mut powers = vec![0.0; n];
        let mut active: Vec<usize> = (0..n).filter(|&i| state.get(i) > 0.0).collect();
        if max_available_power(state, fleet) <= request {
            for &i in &active {
                powers[i] = fleet.max_power(i);
            }
            return DispatchDecision::from_powers(powers, request);
        }
        // devices saturate in order of p̄_i / w_i
        active.sort_by(|&a, &b| {
            (fleet.max_power(a) / self.weights[a]).total_cmp(&(fleet.max_power(b) / self.weights[b]))
        });
        let mut remaining = request;
        let mut weight_left: f64 = active.iter().map(|&i| self.weights[i]).sum();
        for (k, &i) in active.iter().enumerate() {
            let level = remaining / weight_left;
            let cap = fleet.max_power(i);
            if level * self.weights[i] >= cap {
                powers[i] = cap;
                remaining -= cap;
                weight_left -= self.weights[i];
            } else {
                for &j in &active[k..] {
                    powers[j] = level * self.weights[j];
                }
                break;
            }
        }
        DispatchDecision::from_powers(powers, request)
    }
}

/// Five alternative policies for one instance: highest power first, two
/// random priority orders and two random weightings.
pub fn alternatives<R: Rng>(rng: &mut R, fleet: &Fleet) -> Vec<Box<dyn DispatchPolicy>> {
    let n = fleet.len();
    vec![
        Box::new(PriorityOrder::highest_power_first(fleet)),
        Box::new(PriorityOrder::random(rng, n)),
        Box::new(PriorityOrder::random(rng, n)),
        Box::new(WeightedFill::random(rng, n)),
        Box::new(WeightedFill::random(rng, n)),
    ]
}

/// Alternative times-to-go at or below this are counted as empty when
/// comparing supports across trajectories.
pub const SUPPORT_SLACK: f64 = 1e-9;

fn all_times(a: &SimulationTrace, b: &SimulationTrace, until: f64) -> Vec<f64> {
    let mut times: Vec<f64> = a
        .samples
        .iter()
        .chain(&b.samples)
        .map(|s| s.time)
        .chain(a.events.iter().chain(&b.events).map(|e| e.time))
        .filter(|&t| t <= until)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// Groups of the initial state under the default grouping tolerance,
/// lowest time-to-go first.
fn ascending_initial_groups(fleet: &Fleet, x0: &FleetState) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = group_state(x0, fleet, DEFAULT_GROUP_TOLERANCE)
        .expect("trace state matches fleet")
        .groups
        .into_iter()
        .map(|g| g.members)
        .collect();
    groups.reverse();
    groups
}

/// First time the optimal trajectory merges a device of `set` with one
/// outside it, or infinity.
fn merge_time(optimal: &SimulationTrace, set: &[bool]) -> f64 {
    optimal
        .events
        .iter()
        .find(|e| match &e.kind {
            EventKind::Equalisation { devices } => devices.iter().any(|&i| set[i]) && devices.iter().any(|&i| !set[i]),
            _ => false,
        })
        .map_or(f64::INFINITY, |e| e.time)
}

/// Compares the optimal trajectory against an alternative one over the
/// alternative's lifetime and returns a description of every violation of:
///
/// * support inclusion,
/// * available-power dominance,
/// * truncated weighted-energy dominance: for the union `Q_r` of the `r`
///   lowest initial groups, `Σ_{Q_r} p̄_i x_i` is at least as large under the
///   optimal trajectory, for as long as that trajectory keeps `Q_r` apart
///   from the devices above it. Once they merge the comparison no longer
///   holds in general.
pub fn dominance_violations(fleet: &Fleet, optimal: &SimulationTrace, other: &SimulationTrace) -> Vec<String> {
    let mut out = Vec::new();
    let until = other.time_to_failure().min(optimal.time_to_failure());
    let scale = optimal.initial_state().total_energy(fleet).max(1.0);
    let mut in_set = vec![false; fleet.len()];
    let lowest: Vec<(Vec<usize>, f64)> = ascending_initial_groups(fleet, optimal.initial_state())
        .into_iter()
        .map(|g| {
            for &i in &g {
                in_set[i] = true;
            }
            (g, merge_time(optimal, &in_set))
        })
        .collect();
    for t in all_times(optimal, other, until) {
        let zo = optimal.state_at(fleet, t);
        let za = other.state_at(fleet, t);
        for i in 0..fleet.len() {
            if za.get(i) > SUPPORT_SLACK && zo.get(i) <= 0.0 {
                out.push(format!(
                    "t={t}: device {} empty under OP but not under alternative",
                    i + 1
                ));
            }
        }
        let (mut eo, mut ea) = (0.0, 0.0);
        for (r, (g, merged_at)) in lowest.iter().enumerate() {
            for &i in g {
                eo += fleet.max_power(i) * zo.get(i);
                ea += fleet.max_power(i) * za.get(i);
            }
            if t <= *merged_at && eo < ea - 1e-9 * scale {
                out.push(format!(
                    "t={t}: truncated energy over {} lowest groups {eo} < {ea}",
                    r + 1
                ));
            }
        }
        let mut za_support = za.clone();
        for x in &mut za_support.times_to_go {
            if *x <= SUPPORT_SLACK {
                *x = 0.0;
            }
        }
        let (po, pa) = (max_available_power(&zo, fleet), max_available_power(&za_support, fleet));
        if po < pa - 1e-12 * pa.max(1.0) {
            out.push(format!("t={t}: available power {po} < {pa}"));
        }
    }
    out
}

/// Structural checks on a single trace: nonnegativity, energy balance and
/// single terminal failure. For the optimal policy also order preservation,
/// tie persistence and the event count bound.
pub fn trace_violations(
    fleet: &Fleet,
    trace: &SimulationTrace,
    segments: usize,
    optimal: bool,
    group_tolerance: f64,
) -> Vec<String> {
    let mut out = Vec::new();
    for s in &trace.samples {
        if s.state.times_to_go.iter().any(|&x| x < -1e-12) {
            out.push(format!("t={}: negative time-to-go", s.time));
        }
    }
    let x0 = trace.initial_state();
    let x_end = trace.final_state();
    let used: f64 = (0..fleet.len())
        .map(|i| fleet.max_power(i) * (x0.get(i) - x_end.get(i)))
        .sum();
    let gap = (used - trace.delivered_energy).abs();
    if gap > 1e-9 * used.abs().max(trace.delivered_energy.abs()) && gap > 1e-12 {
        out.push(format!(
            "energy balance: state says {used}, dispatch says {}",
            trace.delivered_energy
        ));
    }
    let counts = trace.event_counts();
    if counts.failure > 1
        || (counts.failure == 1 && !matches!(trace.events.last().map(|e| e.kind.name()), Some("failure")))
    {
        out.push("failure must be unique and final".into());
    }
    for w in trace.events.windows(2) {
        if w[1].time < w[0].time {
            out.push(format!("events out of order at t={}", w[1].time));
        }
    }
    if optimal {
        let n = fleet.len();
        let bound = (n - 1) + n + segments + 1;
        let total = counts.equalisation + counts.depletion + counts.segment_change + counts.failure;
        if total > bound {
            out.push(format!("{total} events exceed bound {bound}"));
        }
        let mut group_of = vec![0; n];
        for (g, members) in ascending_initial_groups(fleet, x0).iter().enumerate() {
            for &i in members {
                group_of[i] = g;
            }
        }
        for s in &trace.samples {
            for i in 0..n {
                for j in 0..n {
                    let (a, b) = (s.state.get(i), s.state.get(j));
                    if group_of[i] > group_of[j] && a < b - group_tolerance {
                        out.push(format!(
                            "t={}: order of devices {} and {} flipped",
                            s.time,
                            i + 1,
                            j + 1
                        ));
                    }
                    if group_of[i] == group_of[j] && (a - b).abs() > group_tolerance {
                        out.push(format!("t={}: tie between {} and {} broken", s.time, i + 1, j + 1));
                    }
                }
            }
        }
    }
    out
}
