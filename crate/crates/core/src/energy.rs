//! Vehicle physics, per-arc energy coefficients and battery bookkeeping.
//!
//! Energy figures are kWh throughout. The discretized battery model measures
//! charge in integer level units of `battery_capacity / levels` kWh.

use serde::{Deserialize, Serialize};

use crate::instance::{ArcSpec, CostParams, ErsCostBasis};

pub const JOULES_PER_KWH: f64 = 3.6e6;
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Physical description of one road segment and the truck driving it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcPhysicalParams {
    /// Segment length in metres.
    pub distance: f64,
    /// Road slope in radians.
    pub slope: f64,
    /// Cruising speed in m/s.
    pub speed: f64,
    pub drag_coeff: f64,
    /// Frontal area in m².
    pub frontal_area: f64,
    /// Air density in kg/m³.
    pub air_density: f64,
    pub rolling_resistance: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    /// Battery-to-wheel efficiency factor.
    pub efficiency: f64,
}

fn default_gravity() -> f64 {
    STANDARD_GRAVITY
}

impl ArcPhysicalParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.distance > 0.0) {
            return Err(format!("distance must be positive, got {}", self.distance));
        }
        if !(self.speed > 0.0) {
            return Err(format!("speed must be positive, got {}", self.speed));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(format!("efficiency must lie in (0, 1], got {}", self.efficiency));
        }
        Ok(())
    }
}

/// Mechanical power in watts at acceleration `accel` and speed `speed`.
pub fn mechanical_power(accel: f64, speed: f64, mass: f64, params: &ArcPhysicalParams) -> f64 {
    let p = params;
    mass * accel * speed
        + mass * p.gravity * speed * p.slope.sin()
        + 0.5 * p.drag_coeff * p.frontal_area * p.air_density * speed.powi(3)
        + mass * p.gravity * p.rolling_resistance * p.slope.cos() * speed
}

/// Linear battery-energy model `alpha * mass + beta` of one arc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcCoefficients {
    /// kWh per kg.
    pub alpha: f64,
    /// kWh.
    pub beta: f64,
    /// Set when the mass term is negative (steep descent with regeneration).
    pub regenerative: bool,
}

/// Battery energy coefficients for cruising the arc at constant speed.
pub fn arc_coefficients(params: &ArcPhysicalParams) -> ArcCoefficients {
    let p = params;
    let alpha =
        p.efficiency * p.distance * p.gravity * (p.slope.sin() + p.rolling_resistance * p.slope.cos()) / JOULES_PER_KWH;
    let beta = p.efficiency * p.distance * 0.5 * p.drag_coeff * p.frontal_area * p.air_density * p.speed.powi(2)
        / JOULES_PER_KWH;
    ArcCoefficients { alpha, beta, regenerative: alpha < 0.0 }
}

/// Battery energy needed to traverse `arc` with total mass `mass`.
pub fn required_battery_energy(arc: &ArcSpec, mass: f64) -> f64 {
    arc.alpha * mass + arc.beta
}

/// Mechanical energy the combustion engine must supply for a battery deficit.
pub fn fuel_energy_from_deficit(deficit_battery_kwh: f64, efficiency: f64) -> f64 {
    deficit_battery_kwh / efficiency
}

/// Rounds half away from zero, the convention for all level conversions.
pub fn round_half_away(x: f64) -> i64 {
    x.round() as i64
}

/// kWh expressed in battery level units, rounded to the nearest level.
pub fn energy_to_levels(kwh: f64, levels: u32, battery_capacity: f64) -> i64 {
    round_half_away(kwh * levels as f64 / battery_capacity)
}

/// Required energy of an arc at a given mass, in battery level units.
pub fn discretize_energy(arc: &ArcSpec, mass: f64, levels: u32, battery_capacity: f64) -> i64 {
    energy_to_levels(required_battery_energy(arc, mass), levels, battery_capacity)
}

/// How the battery state of charge is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BatteryModel {
    /// Exact kWh bookkeeping.
    #[default]
    Continuous,
    /// Integer level units; supplied and required energy rounded per arc.
    Discretized { levels: u32 },
}

/// Energy flows of one arc traversal, all in kWh.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Transit {
    pub required: f64,
    pub supplied: f64,
    pub battery_before: f64,
    pub battery_after: f64,
    /// Battery energy still missing after the battery hit zero.
    pub deficit: f64,
    /// Mechanical energy supplied by fuel (`deficit / efficiency`).
    pub fuel_energy: f64,
}

impl Transit {
    pub fn battery_drawn(&self) -> f64 {
        (self.battery_before - self.battery_after).max(0.0)
    }

    /// ERS energy spent directly on propulsion.
    pub fn ers_propulsion(&self) -> f64 {
        self.supplied.min(self.required.max(0.0))
    }
}

/// Per-category travel cost of a traversal.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TravelCost {
    pub ers: f64,
    pub battery: f64,
    pub fuel: f64,
}

impl TravelCost {
    pub fn total(&self) -> f64 {
        self.ers + self.battery + self.fuel
    }
}

impl std::ops::AddAssign for TravelCost {
    fn add_assign(&mut self, rhs: Self) {
        self.ers += rhs.ers;
        self.battery += rhs.battery;
        self.fuel += rhs.fuel;
    }
}

/// Battery update in kWh: `b' = min(max(b + s - r, 0), B)`.
pub fn continuous_transit(arc: &ArcSpec, mass: f64, battery: f64, battery_capacity: f64, efficiency: f64) -> Transit {
    let required = required_battery_energy(arc, mass);
    let supplied = arc.supplied_energy;
    let unbounded = battery + supplied - required;
    let deficit = (-unbounded).max(0.0);
    Transit {
        required,
        supplied,
        battery_before: battery,
        battery_after: unbounded.clamp(0.0, battery_capacity),
        deficit,
        fuel_energy: fuel_energy_from_deficit(deficit, efficiency),
    }
}

/// Battery update in level units; returns the new level with the transit
/// reported back in kWh.
pub fn discrete_transit(
    arc: &ArcSpec,
    mass: f64,
    level: u32,
    levels: u32,
    battery_capacity: f64,
    efficiency: f64,
) -> (u32, Transit) {
    let unit = battery_capacity / levels as f64;
    let required = discretize_energy(arc, mass, levels, battery_capacity);
    let supplied = energy_to_levels(arc.supplied_energy, levels, battery_capacity);
    let unbounded = level as i64 + supplied - required;
    let after = unbounded.clamp(0, levels as i64) as u32;
    let deficit = (-unbounded).max(0) as f64 * unit;
    let transit = Transit {
        required: required as f64 * unit,
        supplied: supplied as f64 * unit,
        battery_before: level as f64 * unit,
        battery_after: after as f64 * unit,
        deficit,
        fuel_energy: fuel_energy_from_deficit(deficit, efficiency),
    };
    (after, transit)
}

/// Prices a traversal.
///
/// Battery draw is charged at the electricity price and fuel at the fuel price.
/// ERS energy is charged either in full (`Supplied`) or only for the part that
/// propels the truck (`Consumed`), so battery charge is paid for when drawn.
pub fn travel_cost(transit: &Transit, costs: &CostParams) -> TravelCost {
    let ers_energy = match costs.ers_cost_basis {
        ErsCostBasis::Supplied => transit.supplied,
        ErsCostBasis::Consumed => transit.ers_propulsion(),
    };
    TravelCost {
        ers: costs.electricity * ers_energy,
        battery: costs.electricity * transit.battery_drawn(),
        fuel: costs.fuel * transit.fuel_energy,
    }
}
