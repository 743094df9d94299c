//! Exact event-driven simulation of the closed loop `ẋ = -P⁻¹u`.
//!
//! Between events every policy here holds a constant dispatch, so each
//! time-to-go decreases linearly at rate `u_i / p̄_i`. The engine jumps from
//! event to event in closed form:
//!
//! * depletion: a discharging device reaches zero,
//! * equalisation (ordering-aware policies only): a faster-discharging group
//!   catches up with the group below it and the two merge,
//! * segment change: the request steps to a new value,
//! * failure: the request exceeds the power of the non-empty devices.
//!
//! Events sharing a timestamp are applied in the order depletion,
//! equalisation, segment change, after which the policy is evaluated once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{max_available_power, Fleet, FleetState, DEFAULT_GROUP_TOLERANCE};
use crate::policies::{op_groups, DispatchDecision, DispatchPolicy, Policy, PolicyKind};
use crate::reference::ReferenceSignal;

/// Times-to-go at or below this many hours are treated as empty.
pub const DEFAULT_EMPTY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub group_tolerance: f64,
    pub empty_tolerance: f64,
    /// Relative slack on the request before a shortfall counts as failure.
    pub shortfall_slack: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            group_tolerance: DEFAULT_GROUP_TOLERANCE,
            empty_tolerance: DEFAULT_EMPTY_TOLERANCE,
            shortfall_slack: 1e-12,
        }
    }
}

impl SimOptions {
    fn is_shortfall(&self, decision: &DispatchDecision, request: f64) -> bool {
        decision.shortfall > self.shortfall_slack * request.max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Adjacent groups met; `devices` lists every member of the merged group.
    Equalisation {
        devices: Vec<usize>,
    },
    /// Devices that reached zero at this instant.
    Depletion {
        devices: Vec<usize>,
    },
    SegmentChange {
        request: f64,
    },
    Failure {
        request: f64,
        available: f64,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Equalisation { .. } => "equalisation",
            EventKind::Depletion { .. } => "depletion",
            EventKind::SegmentChange { .. } => "segment_change",
            EventKind::Failure { .. } => "failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// State and dispatch in force from `time` until the next sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub state: FleetState,
    pub dispatch: DispatchDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub events: Vec<Event>,
    pub samples: Vec<Sample>,
    /// Instant the request first exceeded the available power, if it did
    /// before the horizon.
    pub failure_time: Option<f64>,
    pub horizon: f64,
    /// Energy delivered over the run, kWh.
    pub delivered_energy: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub equalisation: usize,
    pub depletion: usize,
    pub segment_change: usize,
    pub failure: usize,
}

impl SimulationTrace {
    /// Time to failure, or the horizon when the run survived it.
    pub fn time_to_failure(&self) -> f64 {
        self.failure_time.unwrap_or(self.horizon)
    }

    pub fn survived(&self) -> bool {
        self.failure_time.is_none()
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.time)
    }

    pub fn initial_state(&self) -> &FleetState {
        &self.samples[0].state
    }

    pub fn final_state(&self) -> &FleetState {
        &self.samples.last().expect("trace has at least one sample").state
    }

    pub fn event_counts(&self) -> EventCounts {
        let mut c = EventCounts::default();
        for e in &self.events {
            match e.kind {
                EventKind::Equalisation { .. } => c.equalisation += 1,
                EventKind::Depletion { .. } => c.depletion += 1,
                EventKind::SegmentChange { .. } => c.segment_change += 1,
                EventKind::Failure { .. } => c.failure += 1,
            }
        }
        c
    }

    /// State at time `t`, interpolated linearly between samples and held
    /// constant after the last one.
    pub fn state_at(&self, fleet: &Fleet, t: f64) -> FleetState {
        let k = self.samples.partition_point(|s| s.time <= t).max(1) - 1;
        let s = &self.samples[k];
        let dt = (t - s.time).max(0.0);
        if k + 1 == self.samples.len() || dt == 0.0 {
            return s.state.clone();
        }
        let times_to_go = s
            .state
            .times_to_go
            .iter()
            .enumerate()
            .map(|(i, x)| (x - s.dispatch.rate(fleet, i) * dt).max(0.0))
            .collect();
        FleetState { times_to_go }
    }

    /// `count + 1` evenly spaced states over `[0, end_time]`.
    pub fn resample(&self, fleet: &Fleet, count: usize) -> Vec<(f64, FleetState)> {
        let end = self.end_time();
        let count = count.max(1);
        (0..=count)
            .map(|j| {
                let t = end * j as f64 / count as f64;
                (t, self.state_at(fleet, t))
            })
            .collect()
    }
}

/// Outcome of one [`advance`] step.
#[derive(Debug, Clone, PartialEq)]
pub struct Advance {
    pub state: FleetState,
    pub elapsed: f64,
    pub events: Vec<EventKind>,
    pub dispatch: DispatchDecision,
}

/// Holds the policy's dispatch for `request` constant and moves the state to
/// the earliest depletion, equalisation or the end of `budget`.
///
/// The dispatch must meet the request; check the shortfall first.
pub fn advance(
    state: &FleetState,
    fleet: &Fleet,
    policy: &dyn DispatchPolicy,
    request: f64,
    budget: f64,
) -> Result<Advance> {
    advance_with(
        state,
        fleet,
        policy,
        request,
        budget,
        &SimOptions {
            group_tolerance: policy.group_tolerance(),
            ..SimOptions::default()
        },
    )
}

fn advance_with(
    state: &FleetState,
    fleet: &Fleet,
    policy: &dyn DispatchPolicy,
    request: f64,
    budget: f64,
    opts: &SimOptions,
) -> Result<Advance> {
    fleet.check_state(state)?;
    let dispatch = policy.decide(state, fleet, request);
    step(state, fleet, policy, dispatch, request, budget, opts)
}

fn step(
    state: &FleetState,
    fleet: &Fleet,
    policy: &dyn DispatchPolicy,
    dispatch: DispatchDecision,
    request: f64,
    budget: f64,
    opts: &SimOptions,
) -> Result<Advance> {
    if budget.is_nan() || budget <= 0.0 {
        return Err(Error::InvalidInput(format!("advance budget must be > 0, got {budget}")));
    }
    if opts.is_shortfall(&dispatch, request) {
        return Err(Error::InvalidInput(format!(
            "request {request} kW exceeds available power {} kW",
            max_available_power(state, fleet)
        )));
    }
    let x = &state.times_to_go;
    let n = x.len();
    let mut rates: Vec<f64> = (0..n).map(|i| dispatch.rate(fleet, i)).collect();

    let groups = if policy.equalises() {
        let g = op_groups(state, fleet, opts.group_tolerance).groups;
        // members of a group share one rate so ties stay exact
        for grp in &g {
            let r = grp.members.iter().map(|&i| rates[i]).sum::<f64>() / grp.members.len() as f64;
            for &i in &grp.members {
                rates[i] = r;
            }
        }
        g
    } else {
        Vec::new()
    };

    let depletion_dt = |i: usize| (rates[i] > 0.0 && x[i] > 0.0).then(|| x[i] / rates[i]);
    let meeting_dt = |upper: usize, lower: usize| {
        let (a, b) = (&groups[upper], &groups[lower]);
        let (ra, rb) = (rates[a.members[0]], rates[b.members[0]]);
        (ra > rb).then(|| (a.ttg - b.ttg) / (ra - rb))
    };

    let mut dt = budget;
    for i in 0..n {
        if let Some(d) = depletion_dt(i) {
            dt = dt.min(d);
        }
    }
    for j in 1..groups.len() {
        if let Some(d) = meeting_dt(j - 1, j) {
            dt = dt.min(d);
        }
    }

    let mut next: Vec<f64> = (0..n).map(|i| (x[i] - rates[i] * dt).max(0.0)).collect();
    let mut events = Vec::new();

    let mut depleted = Vec::new();
    for i in 0..n {
        if x[i] > 0.0 && (depletion_dt(i).is_some_and(|d| d <= dt) || next[i] <= opts.empty_tolerance) {
            next[i] = 0.0;
            depleted.push(i);
        }
    }
    if !depleted.is_empty() {
        events.push(EventKind::Depletion { devices: depleted });
    }

    // Runs of adjacent groups that met at this instant are snapped together.
    let mut j = 1;
    while j < groups.len() {
        if !meeting_dt(j - 1, j).is_some_and(|d| d <= dt) {
            j += 1;
            continue;
        }
        let first = j - 1;
        while j < groups.len() && meeting_dt(j - 1, j).is_some_and(|d| d <= dt) {
            j += 1;
        }
        let mut devices: Vec<usize> = groups[first..j]
            .iter()
            .flat_map(|g| g.members.iter().copied())
            .collect();
        devices.sort_unstable();
        let common = devices.iter().map(|&i| next[i]).fold(f64::INFINITY, f64::min);
        for &i in &devices {
            next[i] = common;
        }
        events.push(EventKind::Equalisation { devices });
    }

    Ok(Advance {
        state: FleetState { times_to_go: next },
        elapsed: dt,
        events,
        dispatch,
    })
}

/// Simulates one of the built-in policies with default tolerances except the
/// grouping tolerance.
pub fn simulate(
    fleet: &Fleet,
    state0: &FleetState,
    signal: &ReferenceSignal,
    kind: PolicyKind,
    group_tolerance: f64,
) -> Result<SimulationTrace> {
    let opts = SimOptions {
        group_tolerance,
        ..SimOptions::default()
    };
    simulate_with(fleet, state0, signal, &Policy::new(kind, group_tolerance), &opts)
}

/// Runs `policy` against `signal` until failure or the horizon.
pub fn simulate_with(
    fleet: &Fleet,
    state0: &FleetState,
    signal: &ReferenceSignal,
    policy: &dyn DispatchPolicy,
    opts: &SimOptions,
) -> Result<SimulationTrace> {
    fleet.check_state(state0)?;
    let mut state = state0.clone();
    for x in &mut state.times_to_go {
        if *x <= opts.empty_tolerance {
            *x = 0.0;
        }
    }

    let mut events = Vec::new();
    let mut samples = Vec::new();
    let mut delivered_energy = 0.0;
    let mut t = 0.0;

    for seg in signal.segments() {
        t = seg.start;
        events.push(Event {
            time: t,
            kind: EventKind::SegmentChange { request: seg.power },
        });
        loop {
            let decision = policy.decide(&state, fleet, seg.power);
            if opts.is_shortfall(&decision, seg.power) {
                let available = max_available_power(&state, fleet);
                events.push(Event {
                    time: t,
                    kind: EventKind::Failure {
                        request: seg.power,
                        available,
                    },
                });
                samples.push(Sample {
                    time: t,
                    state,
                    dispatch: decision,
                });
                return Ok(SimulationTrace {
                    events,
                    samples,
                    failure_time: Some(t),
                    horizon: signal.horizon(),
                    delivered_energy,
                });
            }
            let remaining = seg.end - t;
            if remaining <= 0.0 {
                break;
            }
            let next = step(&state, fleet, policy, decision, seg.power, remaining, opts)?;
            delivered_energy += next.dispatch.delivered * next.elapsed;
            samples.push(Sample {
                time: t,
                state,
                dispatch: next.dispatch,
            });
            t = if next.elapsed >= remaining {
                seg.end
            } else {
                t + next.elapsed
            };
            state = next.state;
            events.extend(next.events.into_iter().map(|kind| Event { time: t, kind }));
            if t >= seg.end {
                break;
            }
        }
    }

    let idle = DispatchDecision::from_powers(vec![0.0; fleet.len()], 0.0);
    samples.push(Sample {
        time: t,
        state,
        dispatch: idle,
    });
    Ok(SimulationTrace {
        events,
        samples,
        failure_time: None,
        horizon: signal.horizon(),
        delivered_energy,
    })
}

/// Time to failure of a built-in policy with default tolerances; the horizon
/// when the request is met throughout.
pub fn time_to_failure(fleet: &Fleet, state0: &FleetState, signal: &ReferenceSignal, kind: PolicyKind) -> Result<f64> {
    Ok(simulate(fleet, state0, signal, kind, DEFAULT_GROUP_TOLERANCE)?.time_to_failure())
}

/// Step function of the maximum available power: one `(time, kW)` point at
/// the start and one wherever the value changes.
pub fn available_power_trajectory(trace: &SimulationTrace, fleet: &Fleet) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for s in &trace.samples {
        let p = max_available_power(&s.state, fleet);
        match out.last() {
            Some(&(_, last)) if last == p => {}
            Some(&(t, _)) if t == s.time => *out.last_mut().unwrap() = (t, p),
            _ => out.push((s.time, p)),
        }
    }
    out
}
