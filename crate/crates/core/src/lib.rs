//! Dispatch of energy-constrained, discharge-only distributed resources.
//!
//! The crate is organised around the quantities a fleet aggregator needs:
//!
//! * [`fleet`]: devices, times-to-go and the grouping used by the optimal policy.
//! * [`reference`]: piecewise-constant power requests and seeded scenario generation.
//! * [`policies`]: the optimal greedy feedback law plus the LPF and PoP baselines.
//! * [`engine`]: exact event-driven simulation of the closed loop.
//! * [`oracle`]: an independent max-flow feasibility check and time-to-failure bisection.
//! * [`export`]: CSV and JSON writers for traces and signals.

pub mod check;
pub mod engine;
pub mod error;
pub mod export;
pub mod fleet;
pub mod oracle;
pub mod policies;
pub mod reference;

pub use engine::{
    advance, available_power_trajectory, simulate, simulate_with, time_to_failure, Advance, Event, EventKind,
    SimOptions, SimulationTrace,
};
pub use error::{Error, Result};
pub use fleet::{
    group_state, max_available_power, support, Device, Fleet, FleetState, Group, GroupedState, DEFAULT_GROUP_TOLERANCE,
};
pub use oracle::{feasible, oracle_time_to_failure, FlowInstance};
pub use policies::{
    dispatch, lpf_dispatch, op_dispatch, pop_dispatch, DispatchDecision, DispatchPolicy, Policy, PolicyKind,
};
pub use reference::{sample_scenario, ReferenceSignal, ScenarioSpec};
