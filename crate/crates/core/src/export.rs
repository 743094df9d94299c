//! CSV and JSON writers for traces and signals.
//!
//! Columns:
//!
//! * events: `time_h,kind,payload` where the payload is `;`-separated
//!   device ids for equalisation/depletion, `request_kw=<v>` for segment
//!   changes and `request_kw=<v>;available_kw=<v>` for failure.
//! * states: `time_h,x_1..x_n,u_1..u_n` (one row per sample).
//! * signal: `t_start,t_end,power_kw`.
//! * available power: `time_h,available_kw` (step function, value holds until
//!   the next row).
//!
//! Floats use Rust's shortest round-trip formatting, so output is stable.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::engine::{available_power_trajectory, EventCounts, EventKind, SimulationTrace};
use crate::fleet::Fleet;
use crate::reference::ReferenceSignal;

fn ids(fleet: &Fleet, positions: &[usize]) -> String {
    let mut s = String::new();
    for (k, &i) in positions.iter().enumerate() {
        if k > 0 {
            s.push(';');
        }
        let _ = write!(s, "{}", fleet.devices()[i].id);
    }
    s
}

pub fn write_events_csv<W: Write>(mut out: W, trace: &SimulationTrace, fleet: &Fleet) -> io::Result<()> {
    writeln!(out, "time_h,kind,payload")?;
    for e in &trace.events {
        let payload = match &e.kind {
            EventKind::Equalisation { devices } | EventKind::Depletion { devices } => ids(fleet, devices),
            EventKind::SegmentChange { request } => format!("request_kw={request}"),
            EventKind::Failure { request, available } => {
                format!("request_kw={request};available_kw={available}")
            }
        };
        writeln!(out, "{},{},{}", e.time, e.kind.name(), payload)?;
    }
    Ok(())
}

pub fn write_states_csv<W: Write>(mut out: W, trace: &SimulationTrace, fleet: &Fleet) -> io::Result<()> {
    let mut header = String::from("time_h");
    for d in fleet.devices() {
        let _ = write!(header, ",x_{}", d.id);
    }
    for d in fleet.devices() {
        let _ = write!(header, ",u_{}", d.id);
    }
    writeln!(out, "{header}")?;
    for s in &trace.samples {
        let mut row = s.time.to_string();
        for x in &s.state.times_to_go {
            let _ = write!(row, ",{x}");
        }
        for u in &s.dispatch.powers {
            let _ = write!(row, ",{u}");
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

pub fn write_signal_csv<W: Write>(mut out: W, signal: &ReferenceSignal) -> io::Result<()> {
    writeln!(out, "t_start,t_end,power_kw")?;
    for s in signal.segments() {
        writeln!(out, "{},{},{}", s.start, s.end, s.power)?;
    }
    Ok(())
}

pub fn write_available_power_csv<W: Write>(mut out: W, trace: &SimulationTrace, fleet: &Fleet) -> io::Result<()> {
    writeln!(out, "time_h,available_kw")?;
    for (t, p) in available_power_trajectory(trace, fleet) {
        writeln!(out, "{t},{p}")?;
    }
    Ok(())
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub policy: String,
    pub devices: usize,
    pub horizon_h: f64,
    pub survived: bool,
    pub failure_time_h: Option<f64>,
    pub time_to_failure_h: f64,
    pub delivered_energy_kwh: f64,
    pub initial_energy_kwh: f64,
    pub final_energy_kwh: f64,
    pub event_counts: EventCounts,
}

impl TraceSummary {
    pub fn new(policy: &str, trace: &SimulationTrace, fleet: &Fleet) -> Self {
        Self {
            policy: policy.to_string(),
            devices: fleet.len(),
            horizon_h: trace.horizon,
            survived: trace.survived(),
            failure_time_h: trace.failure_time,
            time_to_failure_h: trace.time_to_failure(),
            delivered_energy_kwh: trace.delivered_energy,
            initial_energy_kwh: trace.initial_state().total_energy(fleet),
            final_energy_kwh: trace.final_state().total_energy(fleet),
            event_counts: trace.event_counts(),
        }
    }
}
