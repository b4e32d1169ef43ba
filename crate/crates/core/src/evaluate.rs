//! Exact and sampled costing of fixed plans, and optimality-gap statistics.
//!
//! Travel is deterministic once the plan is fixed; only lost sales are random.
//! Retailers evolve independently under a fixed plan, so the exact evaluator
//! propagates one inventory distribution per retailer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{continuous_transit, discrete_transit, energy_to_levels, travel_cost, BatteryModel, TravelCost};
use crate::instance::{Instance, NodeId};
use crate::milp::{Plan, PlanError};

/// Two-sided 99% normal quantile.
const Z_99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub ers_energy: f64,
    pub battery: f64,
    pub fuel: f64,
    pub penalty: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.ers_energy + self.battery + self.fuel + self.penalty
    }

    fn add_travel(&mut self, c: &TravelCost) {
        self.ers_energy += c.ers;
        self.battery += c.battery;
        self.fuel += c.fuel;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluationMethod {
    Exact,
    MonteCarlo { samples: usize, seed: u64, std_error: f64, ci_halfwidth: f64 },
}

/// One period of a plan's deterministic vehicle trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanPeriod {
    pub period: usize,
    pub position: NodeId,
    pub load_up: u32,
    pub delivered: u32,
    /// Battery at the start of the period, kWh.
    pub battery: f64,
    /// Vehicle mass after loading/delivery, kg.
    pub weight: f64,
    /// Cargo after loading/delivery, units.
    pub cargo: u32,
    /// Energy needed for this period's transit, kWh.
    pub required_energy: f64,
    pub travel_cost: f64,
    pub expected_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub expected_total_cost: f64,
    pub breakdown: CostBreakdown,
    /// `expected_shortage[c][t]`: expected lost units of retailer `c` in period `t + 1`.
    pub expected_shortage: Vec<Vec<f64>>,
    pub periods: Vec<PlanPeriod>,
    pub method: EvaluationMethod,
}

/// Deterministic travel part of a plan.
fn trace_travel(plan: &Plan, instance: &Instance, battery_model: BatteryModel) -> (Vec<PlanPeriod>, TravelCost) {
    let vehicle = &instance.vehicle;
    let capacity = vehicle.battery_capacity;
    let cargo = plan.cargo_profile(instance.start.load);
    let mut periods = Vec::with_capacity(plan.horizon());
    let mut total = TravelCost::default();

    let mut battery = instance.start.battery;
    let mut level = match battery_model {
        BatteryModel::Discretized { levels } => energy_to_levels(battery, levels, capacity) as u32,
        BatteryModel::Continuous => 0,
    };
    if let BatteryModel::Discretized { levels } = battery_model {
        battery = level as f64 * capacity / levels as f64;
    }

    for t in 0..plan.horizon() {
        let node = plan.route[t];
        let cargo_t = cargo[t] as u32;
        let weight = vehicle.mass(cargo_t);
        let delivered = plan.deliveries.iter().map(|d| d[t]).sum();
        let mut row = PlanPeriod {
            period: t + 1,
            position: node,
            load_up: plan.loads[t],
            delivered,
            battery,
            weight,
            cargo: cargo_t,
            required_energy: 0.0,
            travel_cost: 0.0,
            expected_penalty: 0.0,
        };
        if t + 1 < plan.horizon() {
            let arc = instance.network.arc(node, plan.route[t + 1]).expect("validated plans only use existing arcs");
            let transit = match battery_model {
                BatteryModel::Continuous => continuous_transit(arc, weight, battery, capacity, vehicle.efficiency),
                BatteryModel::Discretized { levels } => {
                    let (next, transit) = discrete_transit(arc, weight, level, levels, capacity, vehicle.efficiency);
                    level = next;
                    transit
                }
            };
            let cost = travel_cost(&transit, &instance.costs);
            row.required_energy = transit.required;
            row.travel_cost = cost.total();
            total += cost;
            battery = transit.battery_after;
        }
        periods.push(row);
    }
    (periods, total)
}

/// Exact expected cost of a plan.
pub fn exact_plan_cost(
    plan: &Plan,
    instance: &Instance,
    battery_model: BatteryModel,
) -> Result<EvaluationReport, PlanError> {
    plan.validate(instance)?;
    let (mut periods, travel) = trace_travel(plan, instance, battery_model);
    let penalty = instance.costs.penalty;

    let mut expected_shortage = Vec::with_capacity(instance.retailer_count());
    for (c, retailer) in instance.retailers.iter().enumerate() {
        let cap = retailer.capacity as usize;
        let mut dist = vec![0.0; cap + 1];
        dist[retailer.initial_inventory as usize] = 1.0;
        let mut shortage = Vec::with_capacity(plan.horizon());
        for t in 0..plan.horizon() {
            let demand = instance.demand(c, t + 1);
            let delivered = plan.deliveries[c][t] as usize;
            let mut next = vec![0.0; cap + 1];
            let mut lost = 0.0;
            for (inv, &p) in dist.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                // Anything above capacity is wasted.
                let stock = (inv + delivered).min(cap);
                lost += p * demand.loss(stock as f64);
                for (d, q) in demand.support() {
                    next[stock.saturating_sub(d as usize)] += p * q;
                }
            }
            periods[t].expected_penalty += penalty * lost;
            shortage.push(lost);
            dist = next;
        }
        expected_shortage.push(shortage);
    }

    let mut breakdown = CostBreakdown::default();
    breakdown.add_travel(&travel);
    breakdown.penalty = penalty * expected_shortage.iter().flatten().sum::<f64>();
    Ok(EvaluationReport {
        expected_total_cost: breakdown.total(),
        breakdown,
        expected_shortage,
        periods,
        method: EvaluationMethod::Exact,
    })
}

/// Sample-average cost of a plan with a 99% confidence half-width.
pub fn monte_carlo_plan_cost(
    plan: &Plan,
    instance: &Instance,
    battery_model: BatteryModel,
    samples: usize,
    seed: u64,
) -> Result<EvaluationReport, PlanError> {
    plan.validate(instance)?;
    let samples = samples.max(1);
    let (mut periods, travel) = trace_travel(plan, instance, battery_model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let retailers = instance.retailer_count();
    let horizon = plan.horizon();
    let p = instance.costs.penalty;

    let mut shortage_sum = vec![vec![0.0; horizon]; retailers];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut inventory = vec![0u32; retailers];
    for _ in 0..samples {
        for (inv, r) in inventory.iter_mut().zip(&instance.retailers) {
            *inv = r.initial_inventory;
        }
        let mut lost_units = 0.0;
        for t in 0..horizon {
            for (c, r) in instance.retailers.iter().enumerate() {
                let stock = (inventory[c] + plan.deliveries[c][t]).min(r.capacity);
                let demand = instance.demand(c, t + 1).sample(rng.gen::<f64>());
                let lost = demand.saturating_sub(stock);
                inventory[c] = stock.saturating_sub(demand);
                shortage_sum[c][t] += lost as f64;
                lost_units += lost as f64;
            }
        }
        let cost = p * lost_units;
        sum += cost;
        sum_sq += cost * cost;
    }

    let n = samples as f64;
    let mean_penalty = sum / n;
    let variance = if samples > 1 { ((sum_sq - n * mean_penalty * mean_penalty) / (n - 1.0)).max(0.0) } else { 0.0 };
    let std_error = (variance / n).sqrt();
    let expected_shortage: Vec<Vec<f64>> =
        shortage_sum.into_iter().map(|row| row.into_iter().map(|s| s / n).collect()).collect();
    for (t, row) in periods.iter_mut().enumerate() {
        row.expected_penalty = p * expected_shortage.iter().map(|r| r[t]).sum::<f64>();
    }

    let mut breakdown = CostBreakdown::default();
    breakdown.add_travel(&travel);
    breakdown.penalty = mean_penalty;
    Ok(EvaluationReport {
        expected_total_cost: breakdown.total(),
        breakdown,
        expected_shortage,
        periods,
        method: EvaluationMethod::MonteCarlo { samples, seed, std_error, ci_halfwidth: Z_99 * std_error },
    })
}

/// Relative tolerance below which a heuristic cost under the optimum is noise.
pub const GAP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GapError {
    #[error("percentage error undefined: optimal cost is {optimal}, heuristic cost {heuristic}")]
    Undefined { heuristic: f64, optimal: f64 },
    #[error("heuristic cost {heuristic} is below the optimum {optimal}: consistency failure")]
    BelowOptimum { heuristic: f64, optimal: f64 },
}

/// `100 * (heuristic - optimal) / optimal`.
///
/// Both costs zero counts as a zero gap. A heuristic cheaper than the optimum
/// beyond [`GAP_TOLERANCE`] is reported as an error.
pub fn percentage_error(heuristic_cost: f64, optimal_cost: f64) -> Result<f64, GapError> {
    let scale = optimal_cost.abs().max(1.0);
    if heuristic_cost < optimal_cost - GAP_TOLERANCE * scale {
        return Err(GapError::BelowOptimum { heuristic: heuristic_cost, optimal: optimal_cost });
    }
    if optimal_cost <= 0.0 {
        if heuristic_cost.abs() <= GAP_TOLERANCE {
            return Ok(0.0);
        }
        return Err(GapError::Undefined { heuristic: heuristic_cost, optimal: optimal_cost });
    }
    Ok(100.0 * (heuristic_cost - optimal_cost) / optimal_cost)
}

/// Mean, median and sample standard deviation of a set of gaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub std_dev: f64,
}

impl GapStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        let std_dev =
            if n > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        Some(Self { count: n, mean, median, std_dev })
    }
}
