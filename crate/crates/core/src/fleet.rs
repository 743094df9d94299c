//! Devices, fleet state and the state-derived quantities every policy consumes.
//!
//! A device is described by its maximum discharge power `p̄` (kW) and its
//! extractable energy `E` (kWh). The simulator works on times-to-go
//! `x = E / p̄` (hours): how long the device could run at full power.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance (hours) under which two times-to-go are considered equal.
pub const DEFAULT_GROUP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    /// Label of the device, conventionally its 1-based position in the fleet.
    pub id: usize,
    /// Maximum discharge power in kW. Always strictly positive.
    pub max_power: f64,
    /// Energy deliverable to the grid in kWh, after discharge losses.
    pub extractable_energy: f64,
    /// Discharge efficiency in (0, 1].
    pub efficiency: f64,
    /// Stored energy in kWh, when the device was specified that way.
    pub stored_energy: Option<f64>,
}

impl Device {
    pub fn new(id: usize, max_power: f64, extractable_energy: f64) -> Result<Self> {
        check_power(id, max_power)?;
        if !(extractable_energy.is_finite() && extractable_energy >= 0.0) {
            return Err(Error::InvalidDevice {
                id,
                reason: format!("extractable energy must be finite and >= 0, got {extractable_energy}"),
            });
        }
        Ok(Self {
            id,
            max_power,
            extractable_energy,
            efficiency: 1.0,
            stored_energy: None,
        })
    }

    /// Builds a device from its stored energy; the extractable energy is
    /// `efficiency * stored_energy`.
    pub fn from_stored(id: usize, max_power: f64, stored_energy: f64, efficiency: f64) -> Result<Self> {
        if !(efficiency.is_finite() && efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::InvalidDevice {
                id,
                reason: format!("efficiency must lie in (0, 1], got {efficiency}"),
            });
        }
        if !(stored_energy.is_finite() && stored_energy >= 0.0) {
            return Err(Error::InvalidDevice {
                id,
                reason: format!("stored energy must be finite and >= 0, got {stored_energy}"),
            });
        }
        let mut device = Self::new(id, max_power, efficiency * stored_energy)?;
        device.efficiency = efficiency;
        device.stored_energy = Some(stored_energy);
        Ok(device)
    }

    /// Builds a device from its time-to-go; used by scenario generation.
    pub fn from_time_to_go(id: usize, max_power: f64, time_to_go: f64) -> Result<Self> {
        check_power(id, max_power)?;
        Self::new(id, max_power, time_to_go * max_power)
    }

    pub fn time_to_go(&self) -> f64 {
        self.extractable_energy / self.max_power
    }
}

fn check_power(id: usize, max_power: f64) -> Result<()> {
    if max_power.is_finite() && max_power > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidDevice {
            id,
            reason: format!("max power must be finite and > 0, got {max_power}"),
        })
    }
}

/// Time-to-go of a single device, in hours.
pub fn time_to_go(device: &Device) -> f64 {
    device.time_to_go()
}

/// A non-empty collection of devices. Device positions (0-based) are the
/// indices used by [`FleetState`] and every dispatch vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Device>", into = "Vec<Device>")]
pub struct Fleet {
    devices: Vec<Device>,
}

impl Fleet {
    pub fn new(devices: Vec<Device>) -> Result<Self> {
        if devices.is_empty() {
            return Err(Error::EmptyFleet);
        }
        for d in &devices {
            check_power(d.id, d.max_power)?;
            if !(d.extractable_energy.is_finite() && d.extractable_energy >= 0.0) {
                return Err(Error::InvalidDevice {
                    id: d.id,
                    reason: "extractable energy must be finite and >= 0".into(),
                });
            }
        }
        Ok(Self { devices })
    }

    /// Fleet from parallel slices of max powers and times-to-go, ids 1..=n.
    pub fn from_powers_and_ttg(max_powers: &[f64], times_to_go: &[f64]) -> Result<Self> {
        if max_powers.len() != times_to_go.len() {
            return Err(Error::LengthMismatch {
                expected: max_powers.len(),
                found: times_to_go.len(),
            });
        }
        let devices = max_powers
            .iter()
            .zip(times_to_go)
            .enumerate()
            .map(|(i, (&p, &x))| Device::from_time_to_go(i + 1, p, x))
            .collect::<Result<Vec<_>>>()?;
        Self::new(devices)
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn max_power(&self, index: usize) -> f64 {
        self.devices[index].max_power
    }

    pub fn max_powers(&self) -> Vec<f64> {
        self.devices.iter().map(|d| d.max_power).collect()
    }

    pub fn total_power(&self) -> f64 {
        self.devices.iter().map(|d| d.max_power).sum()
    }

    /// Initial state built from each device's extractable energy.
    pub fn initial_state(&self) -> FleetState {
        FleetState {
            times_to_go: self.devices.iter().map(Device::time_to_go).collect(),
        }
    }

    pub fn check_state(&self, state: &FleetState) -> Result<()> {
        if state.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: state.len(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<Device>> for Fleet {
    type Error = Error;

    fn try_from(devices: Vec<Device>) -> Result<Self> {
        Self::new(devices)
    }
}

impl From<Fleet> for Vec<Device> {
    fn from(fleet: Fleet) -> Self {
        fleet.devices
    }
}

/// Vector of times-to-go (hours), one entry per device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetState {
    pub times_to_go: Vec<f64>,
}

impl FleetState {
    pub fn new(times_to_go: Vec<f64>) -> Result<Self> {
        if let Some((i, x)) = times_to_go
            .iter()
            .enumerate()
            .find(|(_, x)| !(x.is_finite() && **x >= 0.0))
        {
            return Err(Error::InvalidState(format!(
                "time-to-go of device {} must be finite and >= 0, got {x}",
                i + 1
            )));
        }
        Ok(Self { times_to_go })
    }

    pub fn len(&self) -> usize {
        self.times_to_go.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_to_go.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.times_to_go[index]
    }

    /// Stored-energy view: `p̄_i * x_i` per device, in kWh.
    pub fn energies(&self, fleet: &Fleet) -> Vec<f64> {
        self.times_to_go
            .iter()
            .zip(fleet.devices())
            .map(|(x, d)| x * d.max_power)
            .collect()
    }

    pub fn total_energy(&self, fleet: &Fleet) -> f64 {
        self.energies(fleet).iter().sum()
    }
}

/// Devices sharing a time-to-go value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    /// Representative time-to-go: the mean over members.
    pub ttg: f64,
    /// Member positions, ascending.
    pub members: Vec<usize>,
    /// Sum of the members' max powers (kW).
    pub aggregate_power: f64,
}

/// Groups ordered by strictly descending time-to-go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedState {
    pub groups: Vec<Group>,
}

impl GroupedState {
    pub fn count(&self) -> usize {
        self.groups.len()
    }
}

/// Partitions the devices into groups of equal time-to-go.
///
/// Devices are sorted by descending time-to-go and a new group starts
/// whenever the gap to the previous device exceeds `tolerance`, so ties
/// chain transitively.
pub fn group_state(state: &FleetState, fleet: &Fleet, tolerance: f64) -> Result<GroupedState> {
    fleet.check_state(state)?;
    if tolerance.is_nan() || tolerance < 0.0 {
        return Err(Error::InvalidInput(format!(
            "grouping tolerance must be >= 0, got {tolerance}"
        )));
    }
    Ok(group_indices(state, fleet, (0..state.len()).collect(), tolerance))
}

/// Groups only the given device positions. Assumes lengths were checked.
pub(crate) fn group_indices(state: &FleetState, fleet: &Fleet, mut order: Vec<usize>, tolerance: f64) -> GroupedState {
    let x = &state.times_to_go;
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));

    let mut groups: Vec<Group> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut last = f64::NAN;
    for i in order {
        if !current.is_empty() && last - x[i] > tolerance {
            groups.push(finish_group(std::mem::take(&mut current), x, fleet));
        }
        current.push(i);
        last = x[i];
    }
    if !current.is_empty() {
        groups.push(finish_group(current, x, fleet));
    }
    GroupedState { groups }
}

fn finish_group(mut members: Vec<usize>, x: &[f64], fleet: &Fleet) -> Group {
    members.sort_unstable();
    let ttg = members.iter().map(|&i| x[i]).sum::<f64>() / members.len() as f64;
    let aggregate_power = members.iter().map(|&i| fleet.max_power(i)).sum();
    Group {
        ttg,
        members,
        aggregate_power,
    }
}

/// Sum of max powers over non-empty devices.
pub fn max_available_power(state: &FleetState, fleet: &Fleet) -> f64 {
    state
        .times_to_go
        .iter()
        .zip(fleet.devices())
        .filter(|(x, _)| **x > 0.0)
        .fold(0.0, |acc, (_, d)| acc + d.max_power)
}

/// Positions of the non-empty devices, ascending.
pub fn support(state: &FleetState) -> Vec<usize> {
    state
        .times_to_go
        .iter()
        .enumerate()
        .filter(|(_, x)| **x > 0.0)
        .map(|(i, _)| i)
        .collect()
}
