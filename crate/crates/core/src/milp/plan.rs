use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, NodeId};

/// Constraint family a plan can violate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("plan covers {got} periods, horizon is {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("delivery schedule lists {got} retailers, instance has {expected}")]
    WrongRetailerCount { expected: usize, got: usize },
    #[error("one-position: route starts at {got}, vehicle starts at {expected}")]
    WrongStart { expected: NodeId, got: NodeId },
    #[error("one-position: period {period} has {count} positions")]
    Position { period: usize, count: usize },
    #[error("transit link: period {period} transit disagrees with the route")]
    TransitLink { period: usize },
    #[error("adjacency: no arc from {from} to {to} after period {period}")]
    NotAdjacent { period: usize, from: NodeId, to: NodeId },
    #[error("depot loading: {load} units loaded at node {node} in period {period}")]
    LoadAwayFromDepot { period: usize, node: NodeId, load: u32 },
    #[error("retailer delivery: {quantity} units for retailer {retailer} in period {period} while at node {node}")]
    DeliveryAwayFromRetailer { period: usize, retailer: NodeId, node: NodeId, quantity: u32 },
    #[error("retailer delivery: {quantity} units exceed capacity {capacity} of retailer {retailer}")]
    DeliveryAboveCapacity { period: usize, retailer: NodeId, quantity: u32, capacity: u32 },
    #[error("vehicle capacity: cargo {cargo} outside [0, {capacity}] in period {period}")]
    Cargo { period: usize, cargo: i64, capacity: u32 },
    #[error("integrality: {name} = {value}")]
    Integrality { name: String, value: f64 },
}

/// A static plan: the route and every load/delivery fixed up front.
///
/// Index `t` of each vector is period `t + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// Vehicle position at the start of each period.
    pub route: Vec<NodeId>,
    /// Units loaded at the depot in each period.
    pub loads: Vec<u32>,
    /// `deliveries[c][t]`: units handed to retailer `c` (instance order).
    pub deliveries: Vec<Vec<u32>>,
    /// Objective value reported by whatever produced the plan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_cost: Option<f64>,
}

impl Plan {
    /// Stay at the start node and do nothing.
    pub fn idle(instance: &Instance) -> Self {
        let horizon = instance.horizon;
        Self {
            route: vec![instance.start.node; horizon],
            loads: vec![0; horizon],
            deliveries: vec![vec![0; horizon]; instance.retailer_count()],
            predicted_cost: None,
        }
    }

    pub fn horizon(&self) -> usize {
        self.route.len()
    }

    /// Vehicle cargo after the load/delivery of each period.
    pub fn cargo_profile(&self, initial_load: u32) -> Vec<i64> {
        let mut cargo = initial_load as i64;
        (0..self.route.len())
            .map(|t| {
                cargo += self.loads[t] as i64;
                cargo -= self.deliveries.iter().map(|d| d[t] as i64).sum::<i64>();
                cargo
            })
            .collect()
    }

    /// Total units loaded over the horizon.
    pub fn total_load(&self) -> u32 {
        self.loads.iter().sum()
    }

    pub fn validate(&self, instance: &Instance) -> Result<(), PlanError> {
        let horizon = instance.horizon;
        let network = &instance.network;
        for len in [self.route.len(), self.loads.len()] {
            if len != horizon {
                return Err(PlanError::WrongLength { expected: horizon, got: len });
            }
        }
        if self.deliveries.len() != instance.retailer_count() {
            return Err(PlanError::WrongRetailerCount {
                expected: instance.retailer_count(),
                got: self.deliveries.len(),
            });
        }
        if let Some(d) = self.deliveries.iter().find(|d| d.len() != horizon) {
            return Err(PlanError::WrongLength { expected: horizon, got: d.len() });
        }
        if self.route[0] != instance.start.node {
            return Err(PlanError::WrongStart { expected: instance.start.node, got: self.route[0] });
        }
        for (t, pair) in self.route.windows(2).enumerate() {
            if !network.is_adjacent(pair[0], pair[1]) {
                return Err(PlanError::NotAdjacent { period: t + 1, from: pair[0], to: pair[1] });
            }
        }
        for (t, (&node, &load)) in self.route.iter().zip(&self.loads).enumerate() {
            if load > 0 && node != network.depot() {
                return Err(PlanError::LoadAwayFromDepot { period: t + 1, node, load });
            }
        }
        for (c, retailer) in instance.retailers.iter().enumerate() {
            for (t, &quantity) in self.deliveries[c].iter().enumerate() {
                if quantity == 0 {
                    continue;
                }
                if self.route[t] != retailer.node {
                    return Err(PlanError::DeliveryAwayFromRetailer {
                        period: t + 1,
                        retailer: retailer.node,
                        node: self.route[t],
                        quantity,
                    });
                }
                if quantity > retailer.capacity {
                    return Err(PlanError::DeliveryAboveCapacity {
                        period: t + 1,
                        retailer: retailer.node,
                        quantity,
                        capacity: retailer.capacity,
                    });
                }
            }
        }
        let capacity = instance.vehicle.load_capacity;
        for (t, cargo) in self.cargo_profile(instance.start.load).into_iter().enumerate() {
            if cargo < 0 || cargo > capacity as i64 {
                return Err(PlanError::Cargo { period: t + 1, cargo, capacity });
            }
        }
        Ok(())
    }

    /// Retailer nodes in order of first delivery, e.g. for route summaries.
    pub fn delivery_order(&self, instance: &Instance) -> Vec<NodeId> {
        let mut order = Vec::new();
        for t in 0..self.horizon() {
            for (c, r) in instance.retailers.iter().enumerate() {
                if self.deliveries[c][t] > 0 && !order.contains(&r.node) {
                    order.push(r.node);
                }
            }
        }
        order
    }
}
