//! Greedy feedback dispatch laws.
//!
//! Every policy maps `(fleet, state, request)` to a per-device power vector
//! inside the box `0 <= u_i <= p̄_i`, with `u_i = 0` for empty devices. When
//! the request exceeds the available power the policy saturates and reports
//! the difference as shortfall instead of failing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fleet::{group_indices, max_available_power, Fleet, FleetState, GroupedState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchDecision {
    /// Power per device, kW.
    pub powers: Vec<f64>,
    /// Total delivered power, kW.
    pub delivered: f64,
    /// Unmet part of the request, kW.
    pub shortfall: f64,
}

impl DispatchDecision {
    pub fn from_powers(powers: Vec<f64>, request: f64) -> Self {
        let delivered: f64 = powers.iter().sum();
        Self {
            powers,
            delivered,
            shortfall: (request - delivered).max(0.0),
        }
    }

    /// Discharge rate of device `i` in hours of time-to-go per hour.
    pub fn rate(&self, fleet: &Fleet, i: usize) -> f64 {
        self.powers[i] / fleet.max_power(i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Optimal policy: discharge the devices with the most time-to-go first.
    Op,
    /// Lowest Power First.
    Lpf,
    /// Proportion of Power.
    Pop,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Op, PolicyKind::Lpf, PolicyKind::Pop];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Op => "op",
            PolicyKind::Lpf => "lpf",
            PolicyKind::Pop => "pop",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "op" => Ok(PolicyKind::Op),
            "lpf" => Ok(PolicyKind::Lpf),
            "pop" => Ok(PolicyKind::Pop),
            other => Err(Error::InvalidInput(format!(
                "unknown policy {other:?}, expected one of op, lpf, pop"
            ))),
        }
    }
}

/// A feedback law the engine can simulate.
pub trait DispatchPolicy {
    fn decide(&self, state: &FleetState, fleet: &Fleet, request: f64) -> DispatchDecision;

    /// Whether the decision depends on the ordering of times-to-go, so the
    /// engine must stop when two groups meet. Policies that only look at the
    /// support return `false`.
    fn equalises(&self) -> bool {
        false
    }

    /// Tolerance under which times-to-go are treated as equal.
    fn group_tolerance(&self) -> f64 {
        0.0
    }
}

/// A [`PolicyKind`] together with the grouping tolerance OP needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Policy {
    pub kind: PolicyKind,
    pub group_tolerance: f64,
}

impl Policy {
    pub fn new(kind: PolicyKind, group_tolerance: f64) -> Self {
        Self { kind, group_tolerance }
    }
}

impl DispatchPolicy for Policy {
    fn decide(&self, state: &FleetState, fleet: &Fleet, request: f64) -> DispatchDecision {
        dispatch(self.kind, state, fleet, request, self.group_tolerance)
    }

    fn equalises(&self) -> bool {
        self.kind == PolicyKind::Op
    }

    fn group_tolerance(&self) -> f64 {
        self.group_tolerance
    }
}

/// Groups the non-empty devices for [`op_dispatch`].
pub fn op_groups(state: &FleetState, fleet: &Fleet, tolerance: f64) -> GroupedState {
    let nonempty = (0..state.len()).filter(|&i| state.get(i) > 0.0).collect();
    group_indices(state, fleet, nonempty, tolerance)
}

/// Optimal dispatch on a grouped state.
///
/// Groups are filled in descending time-to-go order: each group runs at full
/// power while the cumulative aggregate power stays within the request, the
/// marginal group takes the remainder as a common fraction of its members'
/// max powers, and the rest stay idle. `grouped` is expected to hold only
/// non-empty devices (see [`op_groups`]); any empty member is forced to 0.
pub fn op_dispatch(grouped: &GroupedState, state: &FleetState, fleet: &Fleet, request: f64) -> DispatchDecision {
    let mut powers = vec![0.0; fleet.len()];
    let mut before = 0.0;
    for group in &grouped.groups {
        let fraction = if before + group.aggregate_power <= request {
            1.0
        } else if before >= request {
            0.0
        } else {
            (request - before) / group.aggregate_power
        };
        if fraction > 0.0 {
            for &i in &group.members {
                if state.get(i) > 0.0 {
                    powers[i] = fraction * fleet.max_power(i);
                }
            }
        }
        before += group.aggregate_power;
    }
    DispatchDecision::from_powers(powers, request)
}

/// Lowest Power First: fill devices in ascending max power, ties by device id.
pub fn lpf_dispatch(state: &FleetState, fleet: &Fleet, request: f64) -> DispatchDecision {
    let devices = fleet.devices();
    let mut order: Vec<usize> = (0..fleet.len()).collect();
    order.sort_by(|&a, &b| {
        devices[a]
            .max_power
            .total_cmp(&devices[b].max_power)
            .then(devices[a].id.cmp(&devices[b].id))
            .then(a.cmp(&b))
    });
    DispatchDecision::from_powers(fill_in_order(state, fleet, request, &order), request)
}

/// Greedy fill in a fixed device order, skipping empty devices.
pub fn fill_in_order(state: &FleetState, fleet: &Fleet, request: f64, order: &[usize]) -> Vec<f64> {
    let mut powers = vec![0.0; fleet.len()];
    let mut remaining = request;
    for &i in order {
        if remaining <= 0.0 {
            break;
        }
        if state.get(i) > 0.0 {
            let u = fleet.max_power(i).min(remaining);
            powers[i] = u;
            remaining = (remaining - u).max(0.0);
        }
    }
    powers
}

/// Proportion of Power: every non-empty device runs at the same fraction
/// `request / P̄` of its max power, capped at 1.
pub fn pop_dispatch(state: &FleetState, fleet: &Fleet, request: f64) -> DispatchDecision {
    let available = max_available_power(state, fleet);
    let mut powers = vec![0.0; fleet.len()];
    if available > 0.0 {
        for (i, u) in powers.iter_mut().enumerate() {
            if state.get(i) > 0.0 {
                let p = fleet.max_power(i);
                *u = p.min(p * request / available);
            }
        }
    }
    DispatchDecision::from_powers(powers, request)
}

pub fn dispatch(
    kind: PolicyKind,
    state: &FleetState,
    fleet: &Fleet,
    request: f64,
    group_tolerance: f64,
) -> DispatchDecision {
    match kind {
        PolicyKind::Op => op_dispatch(&op_groups(state, fleet, group_tolerance), state, fleet, request),
        PolicyKind::Lpf => lpf_dispatch(state, fleet, request),
        PolicyKind::Pop => pop_dispatch(state, fleet, request),
    }
}
