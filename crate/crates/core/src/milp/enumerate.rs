use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::plan::Plan;
use crate::energy::{continuous_transit, discrete_transit, energy_to_levels, travel_cost, BatteryModel};
use crate::evaluate::exact_plan_cost;
use crate::instance::{Instance, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnumerationOptions {
    pub battery: BatteryModel,
    /// Largest number of search nodes before giving up.
    pub node_budget: u64,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self { battery: BatteryModel::Continuous, node_budget: 200_000_000 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnumerationError {
    #[error("search stopped after {explored} nodes (budget {budget}); the full tree has up to {estimate:.3e} nodes")]
    BudgetExceeded { explored: u64, budget: u64, estimate: f64 },
    #[error("node {node} has no outgoing arc")]
    DeadEnd { node: NodeId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationResult {
    pub plan: Plan,
    pub cost: f64,
    pub explored: u64,
}

const PRUNE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy)]
enum Charge {
    Kwh(f64),
    Level(u32),
}

struct Search<'a> {
    instance: &'a Instance,
    /// Battery levels; only read when the charge is in level units.
    levels: u32,
    budget: u64,
    explored: u64,
    route: Vec<NodeId>,
    quantity: Vec<u32>,
    best_cost: f64,
    best: Option<(Vec<NodeId>, Vec<u32>)>,
    /// Retailer stock distributions, one block of `capacity + 1` per retailer and depth.
    stock: Vec<Vec<Vec<f64>>>,
}

impl Search<'_> {
    /// Advances every retailer by one period; returns the expected penalty.
    fn advance_retailers(&mut self, t: usize, node: NodeId, q: u32) -> f64 {
        let instance = self.instance;
        let served = instance.network.retailer_index(node);
        let mut penalty = 0.0;
        for (c, r) in instance.retailers.iter().enumerate() {
            let cap = r.capacity as usize;
            let delivered = if served == Some(c) { q as usize } else { 0 };
            let demand = instance.demand(c, t + 1);
            let mut next = vec![0.0; cap + 1];
            for (inv, &p) in self.stock[t][c].iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let y = (inv + delivered).min(cap);
                penalty += p * demand.loss(y as f64);
                for (d, pd) in demand.support() {
                    next[y.saturating_sub(d as usize)] += p * pd;
                }
            }
            self.stock[t + 1][c] = next;
        }
        penalty * instance.costs.penalty
    }

    fn visit(&mut self, t: usize, node: NodeId, cargo: u32, charge: Charge, cost: f64) -> Result<(), EnumerationError> {
        let instance = self.instance;
        let horizon = instance.horizon;
        let last = t + 1 == horizon;
        let network = &instance.network;
        let (lo, hi, is_depot) = if node == network.depot() {
            if last {
                (0, 0, true)
            } else {
                (0, instance.vehicle.load_capacity - cargo, true)
            }
        } else if let Some(c) = network.retailer_index(node) {
            // Delivering everything possible in the last period never costs more.
            let top = cargo.min(instance.retailers[c].capacity);
            (if last { top } else { 0 }, top, false)
        } else {
            (0, 0, false)
        };
        for q in lo..=hi {
            self.explored += 1;
            if self.explored > self.budget {
                return Err(EnumerationError::BudgetExceeded {
                    explored: self.explored,
                    budget: self.budget,
                    estimate: tree_estimate(instance),
                });
            }
            let cargo_after = if is_depot { cargo + q } else { cargo - q };
            self.route[t] = node;
            self.quantity[t] = q;
            let cost_here = cost + self.advance_retailers(t, node, q);
            if cost_here >= self.best_cost - PRUNE_TOLERANCE {
                continue;
            }
            if last {
                self.best_cost = cost_here;
                self.best = Some((self.route.clone(), self.quantity.clone()));
                continue;
            }
            let successors = network.successors(node);
            if successors.is_empty() {
                return Err(EnumerationError::DeadEnd { node });
            }
            let mass = instance.vehicle.mass(cargo_after);
            let vehicle = &instance.vehicle;
            for &next in successors {
                let arc = network.arc(node, next).expect("successor has an arc");
                let (transit, after) = match charge {
                    Charge::Level(level) => {
                        let (after, transit) = discrete_transit(
                            arc,
                            mass,
                            level,
                            self.levels,
                            vehicle.battery_capacity,
                            vehicle.efficiency,
                        );
                        (transit, Charge::Level(after))
                    }
                    Charge::Kwh(b) => {
                        let transit = continuous_transit(arc, mass, b, vehicle.battery_capacity, vehicle.efficiency);
                        let after = transit.battery_after;
                        (transit, Charge::Kwh(after))
                    }
                };
                let travel = travel_cost(&transit, &instance.costs).total();
                let next_cost = cost_here + travel;
                if next_cost >= self.best_cost - PRUNE_TOLERANCE {
                    continue;
                }
                self.visit(t + 1, next, cargo_after, after, next_cost)?;
            }
        }
        Ok(())
    }
}

/// Crude upper bound on the number of search nodes.
fn tree_estimate(instance: &Instance) -> f64 {
    let network = &instance.network;
    let branching = (0..network.node_count()).map(|n| network.successors(n).len()).max().unwrap_or(1) as f64;
    let quantities = (instance.vehicle.load_capacity + 1) as f64;
    (branching * quantities).powi(instance.horizon as i32)
}

/// Exhaustive branch-and-bound over static plans.
///
/// Among plans of equal cost the first in depth-first order wins, where each
/// period tries quantities in increasing order and then successors in
/// increasing node order.
pub fn enumerate_optimal_plan(
    instance: &Instance,
    options: &EnumerationOptions,
) -> Result<EnumerationResult, EnumerationError> {
    let horizon = instance.horizon;
    let vehicle = &instance.vehicle;
    let charge = match options.battery {
        BatteryModel::Continuous => Charge::Kwh(instance.start.battery),
        BatteryModel::Discretized { levels } => Charge::Level(
            energy_to_levels(instance.start.battery, levels, vehicle.battery_capacity).clamp(0, levels as i64) as u32,
        ),
    };
    let mut stock = vec![Vec::new(); horizon + 1];
    stock[0] = instance
        .retailers
        .iter()
        .map(|r| {
            let mut dist = vec![0.0; r.capacity as usize + 1];
            dist[r.initial_inventory as usize] = 1.0;
            dist
        })
        .collect();
    for row in stock.iter_mut().skip(1) {
        *row = vec![Vec::new(); instance.retailer_count()];
    }
    let mut search = Search {
        instance,
        levels: match options.battery {
            BatteryModel::Discretized { levels } => levels,
            BatteryModel::Continuous => 0,
        },
        budget: options.node_budget,
        explored: 0,
        route: vec![0; horizon],
        quantity: vec![0; horizon],
        best_cost: f64::INFINITY,
        best: None,
        stock,
    };
    search.visit(0, instance.start.node, instance.start.load, charge, 0.0)?;
    let (route, quantity) = search.best.expect("the search always completes one plan");
    let depot = instance.network.depot();
    let loads = route.iter().zip(&quantity).map(|(&n, &q)| if n == depot { q } else { 0 }).collect();
    let deliveries = instance
        .retailers
        .iter()
        .map(|r| route.iter().zip(&quantity).map(|(&n, &q)| if n == r.node { q } else { 0 }).collect())
        .collect();
    let mut plan = Plan { route, loads, deliveries, predicted_cost: None };
    let cost =
        exact_plan_cost(&plan, instance, options.battery).expect("enumerated plans are feasible").expected_total_cost;
    debug_assert!((cost - search.best_cost).abs() < 1e-6 * cost.abs().max(1.0));
    plan.predicted_cost = Some(cost);
    Ok(EnumerationResult { plan, cost, explored: search.explored })
}

/// A uniformly random feasible plan: random walk plus random quantities.
pub fn random_plan(instance: &Instance, rng: &mut impl Rng) -> Plan {
    let horizon = instance.horizon;
    let network = &instance.network;
    let mut plan = Plan::idle(instance);
    let mut node = instance.start.node;
    let mut cargo = instance.start.load;
    for t in 0..horizon {
        plan.route[t] = node;
        if node == network.depot() {
            let q = rng.gen_range(0..=instance.vehicle.load_capacity - cargo);
            plan.loads[t] = q;
            cargo += q;
        } else if let Some(c) = network.retailer_index(node) {
            let q = rng.gen_range(0..=cargo.min(instance.retailers[c].capacity));
            plan.deliveries[c][t] = q;
            cargo -= q;
        }
        let successors = network.successors(node);
        if t + 1 < horizon && !successors.is_empty() {
            node = successors[rng.gen_range(0..successors.len())];
        }
    }
    plan
}
