//! Exact stochastic dynamic program over (position, cargo, battery level, retailer stock).
//!
//! States reachable from the start are found by a forward pass; values are then
//! filled backwards into dense per-period tables. Expected future value is taken
//! one retailer axis at a time, which is valid because retailer demands are
//! independent.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{discrete_transit, energy_to_levels, travel_cost};
use crate::instance::{Instance, NodeId};

/// Values within this distance are treated as ties, broken lexicographically.
const TIE_TOLERANCE: f64 = 1e-9;
const NO_ACTION: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SdpState {
    pub position: NodeId,
    pub vehicle_inventory: u32,
    pub battery_level: u32,
    pub retailer_inventory: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SdpAction {
    pub next: NodeId,
    pub load_up: u32,
    pub delivery: u32,
}

impl SdpAction {
    fn pack(self) -> u64 {
        ((self.next as u64) << 40) | ((self.load_up as u64) << 20) | self.delivery as u64
    }

    fn unpack(code: u64) -> Self {
        Self {
            next: (code >> 40) as NodeId,
            load_up: ((code >> 20) & 0xF_FFFF) as u32,
            delivery: (code & 0xF_FFFF) as u32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpConfig {
    pub battery_levels: u32,
    /// Upper bound on the dense table size summed over periods.
    pub max_states: usize,
}

impl Default for SdpConfig {
    fn default() -> Self {
        Self { battery_levels: 20, max_states: 50_000_000 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("state space of {estimated} states exceeds the cap of {cap}")]
    TooLarge { estimated: u128, cap: usize },
    #[error("node {node} has no outgoing arc in period {period}")]
    DeadEnd { node: NodeId, period: usize },
    #[error("battery levels must be at least 1")]
    NoLevels,
    #[error("demand trace has {got} entries for retailer {retailer}, expected {expected}")]
    TraceLength { retailer: usize, expected: usize, got: usize },
    #[error("state {state:?} in period {period} is outside the policy table")]
    UnknownState { period: usize, state: SdpState },
}

/// Mixed-radix indexing of the dense state space.
#[derive(Debug, Clone)]
struct Layout {
    cargo_dim: usize,
    battery_dim: usize,
    retailer_dims: Vec<usize>,
    /// Stride of each retailer axis inside one slice.
    retailer_strides: Vec<usize>,
    slice_len: usize,
    slices: usize,
}

impl Layout {
    fn new(instance: &Instance, levels: u32) -> Self {
        let retailer_dims: Vec<usize> = instance.retailers.iter().map(|r| r.capacity as usize + 1).collect();
        let mut retailer_strides = vec![0; retailer_dims.len()];
        let mut stride = 1;
        for c in (0..retailer_dims.len()).rev() {
            retailer_strides[c] = stride;
            stride *= retailer_dims[c];
        }
        let cargo_dim = instance.vehicle.load_capacity as usize + 1;
        let battery_dim = levels as usize + 1;
        Self {
            cargo_dim,
            battery_dim,
            retailer_dims,
            retailer_strides,
            slice_len: stride,
            slices: instance.network.node_count() * cargo_dim * battery_dim,
        }
    }

    fn size(&self) -> usize {
        self.slices * self.slice_len
    }

    fn slice(&self, position: NodeId, cargo: u32, level: u32) -> usize {
        (position * self.cargo_dim + cargo as usize) * self.battery_dim + level as usize
    }

    fn stock_index(&self, stock: &[u32]) -> usize {
        stock.iter().zip(&self.retailer_strides).map(|(&s, &m)| s as usize * m).sum()
    }

    fn index(&self, state: &SdpState) -> Option<usize> {
        if state.vehicle_inventory as usize >= self.cargo_dim
            || state.battery_level as usize >= self.battery_dim
            || state.retailer_inventory.len() != self.retailer_dims.len()
            || state.retailer_inventory.iter().zip(&self.retailer_dims).any(|(&s, &d)| s as usize >= d)
        {
            return None;
        }
        let slice = self.slice(state.position, state.vehicle_inventory, state.battery_level);
        (slice < self.slices).then(|| slice * self.slice_len + self.stock_index(&state.retailer_inventory))
    }

    fn state(&self, index: usize) -> SdpState {
        let slice = index / self.slice_len;
        let mut rest = index % self.slice_len;
        let retailer_inventory = self
            .retailer_strides
            .iter()
            .map(|&m| {
                let s = rest / m;
                rest %= m;
                s as u32
            })
            .collect();
        SdpState {
            position: slice / (self.cargo_dim * self.battery_dim),
            vehicle_inventory: ((slice / self.battery_dim) % self.cargo_dim) as u32,
            battery_level: (slice % self.battery_dim) as u32,
            retailer_inventory,
        }
    }
}

/// Feasible actions of `state` in `period`, in lexicographic order.
///
/// Deliveries may exceed the retailer's free space; the surplus is discarded.
/// This keeps every static plan inside the action set.
pub fn enumerate_actions(instance: &Instance, period: usize, state: &SdpState) -> Vec<SdpAction> {
    let network = &instance.network;
    let last = period >= instance.horizon;
    let nexts: Vec<NodeId> = if last { vec![state.position] } else { network.successors(state.position).to_vec() };
    let mut quantities = Vec::new();
    if state.position == network.depot() {
        for load in 0..=instance.vehicle.load_capacity.saturating_sub(state.vehicle_inventory) {
            quantities.push((load, 0));
        }
    } else if let Some(c) = network.retailer_index(state.position) {
        for delivery in 0..=state.vehicle_inventory.min(instance.retailers[c].capacity) {
            quantities.push((0, delivery));
        }
    } else {
        quantities.push((0, 0));
    }
    let mut actions = Vec::with_capacity(nexts.len() * quantities.len());
    for &next in &nexts {
        for &(load_up, delivery) in &quantities {
            actions.push(SdpAction { next, load_up, delivery });
        }
    }
    actions
}

/// Cargo and retailer stock right after the action's load/delivery.
fn post_decision(instance: &Instance, state: &SdpState, action: &SdpAction) -> (u32, Vec<u32>) {
    let cargo = state.vehicle_inventory + action.load_up - action.delivery;
    let mut stock = state.retailer_inventory.clone();
    if let Some(c) = instance.network.retailer_index(state.position) {
        stock[c] = (stock[c] + action.delivery).min(instance.retailers[c].capacity);
    }
    (cargo, stock)
}

/// Travel cost and battery level after the transit, or no transit in the last period.
fn transit_step(
    instance: &Instance,
    levels: u32,
    period: usize,
    state: &SdpState,
    action: &SdpAction,
    cargo: u32,
) -> (f64, u32, f64) {
    if period >= instance.horizon {
        return (0.0, state.battery_level, 0.0);
    }
    let arc = instance.network.arc(state.position, action.next).expect("action follows an arc");
    let mass = instance.vehicle.mass(cargo);
    let (level, transit) = discrete_transit(
        arc,
        mass,
        state.battery_level,
        levels,
        instance.vehicle.battery_capacity,
        instance.vehicle.efficiency,
    );
    (travel_cost(&transit, &instance.costs).total(), level, transit.required)
}

/// Travel cost plus expected lost-sales penalty of one period.
pub fn immediate_cost(instance: &Instance, levels: u32, period: usize, state: &SdpState, action: &SdpAction) -> f64 {
    let (cargo, stock) = post_decision(instance, state, action);
    let (travel, _, _) = transit_step(instance, levels, period, state, action, cargo);
    let penalty: f64 = stock.iter().enumerate().map(|(c, &y)| instance.demand(c, period).loss(y as f64)).sum::<f64>()
        * instance.costs.penalty;
    travel + penalty
}

/// Successor states of the next period with their probabilities; empty in the last period.
pub fn transitions(
    instance: &Instance,
    levels: u32,
    period: usize,
    state: &SdpState,
    action: &SdpAction,
) -> Vec<(SdpState, f64)> {
    if period >= instance.horizon {
        return Vec::new();
    }
    let (cargo, stock) = post_decision(instance, state, action);
    let (_, level, _) = transit_step(instance, levels, period, state, action, cargo);
    let mut out = vec![(Vec::new(), 1.0)];
    for (c, &y) in stock.iter().enumerate() {
        let mut next = Vec::new();
        for (prefix, p) in &out {
            for (d, q) in instance.demand(c, period).support() {
                let mut s: Vec<u32> = prefix.clone();
                s.push(y.saturating_sub(d));
                next.push((s, p * q));
            }
        }
        out = next;
    }
    out.into_iter()
        .map(|(retailer_inventory, p)| {
            (SdpState { position: action.next, vehicle_inventory: cargo, battery_level: level, retailer_inventory }, p)
        })
        .collect()
}

/// Precomputed transit outcome for one (arc, cargo, battery level).
#[derive(Debug, Clone, Copy)]
struct Step {
    level: u32,
    cost: f64,
}

/// Per-solve lookup tables shared by the forward and backward passes.
struct Tables {
    /// `successors[node]`: arc slot offset and successor list.
    successors: Vec<(usize, Vec<NodeId>)>,
    /// `steps[(slot * cargo_dim + cargo) * battery_dim + level]`.
    steps: Vec<Step>,
    /// `penalty[t][c][y]` with `t` zero-based.
    penalty: Vec<Vec<Vec<f64>>>,
    /// `demand[t][c]`: support of retailer demand.
    demand: Vec<Vec<Vec<(u32, f64)>>>,
    start_level: u32,
}

impl Tables {
    fn new(instance: &Instance, layout: &Layout, levels: u32) -> Self {
        let network = &instance.network;
        let vehicle = &instance.vehicle;
        let mut successors = Vec::with_capacity(network.node_count());
        let mut slot = 0;
        for node in 0..network.node_count() {
            let list = network.successors(node).to_vec();
            successors.push((slot, list.clone()));
            slot += list.len();
        }
        let mut steps = Vec::with_capacity(slot * layout.cargo_dim * layout.battery_dim);
        for (node, (_, list)) in successors.iter().enumerate() {
            for &next in list {
                let arc = network.arc(node, next).expect("successor has an arc");
                for cargo in 0..layout.cargo_dim as u32 {
                    let mass = vehicle.mass(cargo);
                    for level in 0..layout.battery_dim as u32 {
                        let (after, transit) =
                            discrete_transit(arc, mass, level, levels, vehicle.battery_capacity, vehicle.efficiency);
                        steps.push(Step { level: after, cost: travel_cost(&transit, &instance.costs).total() });
                    }
                }
            }
        }
        let p = instance.costs.penalty;
        let penalty = (1..=instance.horizon)
            .map(|t| {
                instance
                    .retailers
                    .iter()
                    .enumerate()
                    .map(|(c, r)| (0..=r.capacity).map(|y| p * instance.demand(c, t).loss(y as f64)).collect())
                    .collect()
            })
            .collect();
        let demand = (1..=instance.horizon)
            .map(|t| (0..instance.retailer_count()).map(|c| instance.demand(c, t).support().collect()).collect())
            .collect();
        let start_level =
            energy_to_levels(instance.start.battery, levels, vehicle.battery_capacity).clamp(0, levels as i64) as u32;
        Self { successors, steps, penalty, demand, start_level }
    }

    fn step(&self, layout: &Layout, node: NodeId, k: usize, cargo: u32, level: u32) -> Step {
        let slot = self.successors[node].0 + k;
        self.steps[(slot * layout.cargo_dim + cargo as usize) * layout.battery_dim + level as usize]
    }
}

/// Optimal values and decisions for every reachable state.
#[derive(Debug, Clone)]
pub struct Policy {
    layout: Layout,
    levels: u32,
    initial: SdpState,
    /// `values[t]`: NaN marks states unreachable in period `t + 1`.
    values: Vec<Vec<f64>>,
    actions: Vec<Vec<u64>>,
}

impl Policy {
    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn initial_state(&self) -> &SdpState {
        &self.initial
    }

    /// Optimal expected cost from the initial state.
    pub fn expected_cost(&self) -> f64 {
        self.value(1, &self.initial).expect("initial state is always stored")
    }

    pub fn value(&self, period: usize, state: &SdpState) -> Option<f64> {
        let i = self.layout.index(state)?;
        let v = *self.values.get(period.checked_sub(1)?)?.get(i)?;
        (!v.is_nan()).then_some(v)
    }

    pub fn action(&self, period: usize, state: &SdpState) -> Option<SdpAction> {
        let i = self.layout.index(state)?;
        let code = *self.actions.get(period.checked_sub(1)?)?.get(i)?;
        (code != NO_ACTION).then(|| SdpAction::unpack(code))
    }

    /// Every stored state of a period, in index order.
    pub fn reachable_states(&self, period: usize) -> Vec<SdpState> {
        self.values[period - 1]
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .map(|(i, _)| self.layout.state(i))
            .collect()
    }

    pub fn reachable_count(&self) -> usize {
        self.values.iter().map(|v| v.iter().filter(|x| !x.is_nan()).count()).sum()
    }

    /// Follows the policy under a realized demand trace, `demands[c][t]`.
    pub fn replay(&self, instance: &Instance, demands: &[Vec<u32>]) -> Result<Trajectory, SdpError> {
        let horizon = self.horizon();
        for (c, d) in demands.iter().enumerate() {
            if d.len() != horizon {
                return Err(SdpError::TraceLength { retailer: c, expected: horizon, got: d.len() });
            }
        }
        if demands.len() != instance.retailer_count() {
            return Err(SdpError::TraceLength { retailer: demands.len(), expected: horizon, got: 0 });
        }
        let unit = instance.vehicle.battery_capacity / self.levels as f64;
        let mut state = self.initial.clone();
        let mut rows = Vec::with_capacity(horizon);
        for t in 1..=horizon {
            let action =
                self.action(t, &state).ok_or_else(|| SdpError::UnknownState { period: t, state: state.clone() })?;
            let (cargo, stock) = post_decision(instance, &state, &action);
            let (travel, level, required) = transit_step(instance, self.levels, t, &state, &action, cargo);
            let mut lost = 0;
            let after: Vec<u32> = stock
                .iter()
                .enumerate()
                .map(|(c, &y)| {
                    lost += demands[c][t - 1].saturating_sub(y);
                    y.saturating_sub(demands[c][t - 1])
                })
                .collect();
            rows.push(TraceRow {
                period: t,
                position: state.position,
                battery: state.battery_level as f64 * unit,
                load_up: action.load_up,
                delivery: action.delivery,
                cargo,
                weight: instance.vehicle.mass(cargo),
                required_energy: if t < horizon { required } else { 0.0 },
                retailer_inventory: after.clone(),
                travel_cost: travel,
                penalty_cost: lost as f64 * instance.costs.penalty,
            });
            state = SdpState {
                position: action.next,
                vehicle_inventory: cargo,
                battery_level: level,
                retailer_inventory: after,
            };
        }
        Ok(Trajectory { initial: self.initial.clone(), rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub period: usize,
    pub position: NodeId,
    /// Battery at the start of the period, kWh.
    pub battery: f64,
    pub load_up: u32,
    pub delivery: u32,
    /// Cargo after loading/delivery.
    pub cargo: u32,
    pub weight: f64,
    pub required_energy: f64,
    /// Retailer stock at the end of the period.
    pub retailer_inventory: Vec<u32>,
    pub travel_cost: f64,
    pub penalty_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: SdpState,
    pub rows: Vec<TraceRow>,
}

impl Trajectory {
    pub fn total_cost(&self) -> f64 {
        self.rows.iter().map(|r| r.travel_cost + r.penalty_cost).sum()
    }
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols = self.rows.len();
        let mut line = |label: &str, initial: String, values: Vec<String>| {
            let mut s = format!("{label:<24}{initial:>8}");
            for v in values {
                s.push_str(&format!("{v:>8}"));
            }
            writeln!(f, "{}", s.trim_end())
        };
        line("Period", "0".into(), (1..=cols).map(|t| t.to_string()).collect())?;
        line("Position", String::new(), self.rows.iter().map(|r| r.position.to_string()).collect())?;
        line("Battery level", String::new(), self.rows.iter().map(|r| fmt_num(r.battery)).collect())?;
        line("Vehicle load-up", String::new(), self.rows.iter().map(|r| r.load_up.to_string()).collect())?;
        line(
            "Vehicle inventory",
            self.initial.vehicle_inventory.to_string(),
            self.rows.iter().map(|r| r.cargo.to_string()).collect(),
        )?;
        line("Weight", String::new(), self.rows.iter().map(|r| fmt_num(r.weight)).collect())?;
        line("Required energy", String::new(), self.rows.iter().map(|r| fmt_num(r.required_energy)).collect())?;
        line("Delivery", String::new(), self.rows.iter().map(|r| r.delivery.to_string()).collect())?;
        for c in 0..self.initial.retailer_inventory.len() {
            line(
                &format!("Retailer {} inventory", c + 1),
                self.initial.retailer_inventory[c].to_string(),
                self.rows.iter().map(|r| r.retailer_inventory[c].to_string()).collect(),
            )?;
        }
        line("Travel cost", String::new(), self.rows.iter().map(|r| fmt_num(r.travel_cost)).collect())?;
        line("Penalty cost", String::new(), self.rows.iter().map(|r| fmt_num(r.penalty_cost)).collect())?;
        writeln!(f, "Total cost {}", fmt_num(self.total_cost()))
    }
}

fn fmt_num(x: f64) -> String {
    if (x - x.round()).abs() < 1e-9 {
        format!("{}", x.round() as i64)
    } else {
        format!("{x:.2}")
    }
}

/// Visits each state index of a slice whose retailer stock lies in the product of `images`.
fn for_each_product(layout: &Layout, images: &[Vec<u32>], mut visit: impl FnMut(usize)) {
    let n = images.len();
    let mut pos = vec![0usize; n];
    loop {
        let offset: usize = (0..n).map(|c| images[c][pos[c]] as usize * layout.retailer_strides[c]).sum();
        visit(offset);
        let mut c = n;
        loop {
            if c == 0 {
                return;
            }
            c -= 1;
            pos[c] += 1;
            if pos[c] < images[c].len() {
                break;
            }
            pos[c] = 0;
        }
    }
}

/// Splits a within-slice offset into per-retailer stock.
fn decode_stock(layout: &Layout, mut offset: usize, out: &mut [u32]) {
    for (c, &m) in layout.retailer_strides.iter().enumerate() {
        out[c] = (offset / m) as u32;
        offset %= m;
    }
}

/// Solves the recursion from the instance's start state.
pub fn solve_backward(instance: &Instance, config: &SdpConfig) -> Result<Policy, SdpError> {
    let levels = config.battery_levels;
    if levels == 0 {
        return Err(SdpError::NoLevels);
    }
    let horizon = instance.horizon;
    let layout = Layout::new(instance, levels);
    let estimated = layout.size() as u128 * horizon as u128;
    if estimated > config.max_states as u128 {
        return Err(SdpError::TooLarge { estimated, cap: config.max_states });
    }
    let tables = Tables::new(instance, &layout, levels);
    let depot = instance.network.depot();
    let retailer_at: Vec<Option<usize>> =
        (0..instance.network.node_count()).map(|n| instance.network.retailer_index(n)).collect();
    let capacity = instance.vehicle.load_capacity;
    let retailer_caps: Vec<u32> = instance.retailers.iter().map(|r| r.capacity).collect();
    let size = layout.size();

    let initial = SdpState {
        position: instance.start.node,
        vehicle_inventory: instance.start.load,
        battery_level: tables.start_level,
        retailer_inventory: instance.retailers.iter().map(|r| r.initial_inventory).collect(),
    };
    let start = layout.index(&initial).expect("validated start state fits the layout");

    // Visits the actions of one state, passing the post-decision slice, the
    // within-slice stock offset, the packed action and its travel cost.
    let visit_actions = |t: usize, index: usize, f: &mut dyn FnMut(usize, usize, u64, f64)| -> Result<(), SdpError> {
        let slice = index / layout.slice_len;
        let offset = index % layout.slice_len;
        let pos = slice / (layout.cargo_dim * layout.battery_dim);
        let cargo = ((slice / layout.battery_dim) % layout.cargo_dim) as u32;
        let level = (slice % layout.battery_dim) as u32;
        let last = t == horizon;
        let (loads, deliveries, retailer) = if pos == depot {
            (capacity - cargo, 0, None)
        } else if let Some(c) = retailer_at[pos] {
            (0, cargo.min(retailer_caps[c]), Some(c))
        } else {
            (0, 0, None)
        };
        let succ = &tables.successors[pos].1;
        let next_count = if last { 1 } else { succ.len() };
        if next_count == 0 {
            return Err(SdpError::DeadEnd { node: pos, period: t });
        }
        for k in 0..next_count {
            let next = if last { pos } else { succ[k] };
            for load in 0..=loads {
                for delivery in 0..=deliveries {
                    let after = cargo + load - delivery;
                    let mut y_offset = offset;
                    if let Some(c) = retailer {
                        let m = layout.retailer_strides[c];
                        let stock = (offset / m) % layout.retailer_dims[c];
                        let y = (stock as u32 + delivery).min(retailer_caps[c]) as usize;
                        y_offset = offset - stock * m + y * m;
                    }
                    let (next_level, cost) = if last {
                        (level, 0.0)
                    } else {
                        let step = tables.step(&layout, pos, k, after, level);
                        (step.level, step.cost)
                    };
                    let code = SdpAction { next, load_up: load, delivery }.pack();
                    f(layout.slice(next, after, next_level), y_offset, code, cost);
                }
            }
        }
        Ok(())
    };

    // Forward reachability: pre-decision states per period and post-decision marks.
    let mut reachable = vec![vec![false; size]; horizon];
    let mut post = vec![vec![false; size]; horizon.saturating_sub(1)];
    reachable[0][start] = true;
    let mut stock = vec![0u32; layout.retailer_dims.len()];
    for t in 1..horizon {
        let (before, rest) = reachable.split_at_mut(t);
        let current = &before[t - 1];
        let marks = &mut post[t - 1];
        for index in (0..size).filter(|&i| current[i]) {
            visit_actions(t, index, &mut |slice, y, _, _| marks[slice * layout.slice_len + y] = true)?;
        }
        let next = &mut rest[0];
        let demand = &tables.demand[t - 1];
        for slice in 0..layout.slices {
            let base = slice * layout.slice_len;
            for y in 0..layout.slice_len {
                if !marks[base + y] {
                    continue;
                }
                decode_stock(&layout, y, &mut stock);
                let images: Vec<Vec<u32>> = stock
                    .iter()
                    .enumerate()
                    .map(|(c, &s)| {
                        let mut img: Vec<u32> = demand[c].iter().map(|&(d, _)| s.saturating_sub(d)).collect();
                        img.sort_unstable();
                        img.dedup();
                        img
                    })
                    .collect();
                for_each_product(&layout, &images, |offset| next[base + offset] = true);
            }
        }
    }
    drop(post);

    let mut values: Vec<Vec<f64>> = Vec::with_capacity(horizon);
    let mut actions: Vec<Vec<u64>> = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        values.push(Vec::new());
        actions.push(Vec::new());
    }
    let mut future: Option<Vec<f64>> = None;
    for t in (1..=horizon).rev() {
        let penalty = &tables.penalty[t - 1];
        let expectation = future.as_ref().map(|v| expected_values(&layout, v, &tables.demand[t - 1]));
        let indices: Vec<usize> = (0..size).filter(|&i| reachable[t - 1][i]).collect();
        let results: Result<Vec<(usize, f64, u64)>, SdpError> = indices
            .par_iter()
            .map(|&index| {
                let mut best = f64::INFINITY;
                let mut best_code = NO_ACTION;
                let mut y_stock = vec![0u32; layout.retailer_dims.len()];
                visit_actions(t, index, &mut |slice, y, code, travel| {
                    decode_stock(&layout, y, &mut y_stock);
                    let mut value = travel;
                    for (c, &s) in y_stock.iter().enumerate() {
                        value += penalty[c][s as usize];
                    }
                    if let Some(g) = &expectation {
                        value += g[slice * layout.slice_len + y];
                    }
                    if value < best - TIE_TOLERANCE {
                        best = value;
                        best_code = code;
                    }
                })?;
                Ok((index, best, best_code))
            })
            .collect();
        let mut v = vec![f64::NAN; size];
        let mut a = vec![NO_ACTION; size];
        for (index, value, code) in results? {
            v[index] = value;
            a[index] = code;
        }
        future = Some(v.clone());
        values[t - 1] = v;
        actions[t - 1] = a;
    }

    Ok(Policy { layout, levels, initial, values, actions })
}

/// `E[V(slice, max(y - d, 0))]` for every entry, one retailer axis at a time.
///
/// Entries whose successors include unreachable states come out NaN; they are
/// never read by reachable states.
fn expected_values(layout: &Layout, next_values: &[f64], demand: &[Vec<(u32, f64)>]) -> Vec<f64> {
    let mut current = next_values.to_vec();
    let mut scratch = vec![0.0; current.len()];
    for (c, support) in demand.iter().enumerate() {
        let stride = layout.retailer_strides[c];
        let dim = layout.retailer_dims[c];
        scratch.par_chunks_mut(layout.slice_len).zip(current.par_chunks(layout.slice_len)).for_each(|(out, src)| {
            for offset in 0..layout.slice_len {
                let s = (offset / stride) % dim;
                let base = offset - s * stride;
                let mut acc = 0.0;
                for &(d, p) in support {
                    acc += p * src[base + s.saturating_sub(d as usize) * stride];
                }
                out[offset] = acc;
            }
        });
        std::mem::swap(&mut current, &mut scratch);
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::example_file;
    use crate::instance::DemandModel;

    fn example() -> Instance {
        Instance::from_file(example_file()).unwrap()
    }

    #[test]
    fn table1_optimum() {
        let inst = example();
        let policy = solve_backward(&inst, &SdpConfig::default()).unwrap();
        assert_eq!(policy.expected_cost(), 25.0);
        let trace = policy.replay(&inst, &[vec![1; 4], vec![1; 4]]).unwrap();
        let route: Vec<NodeId> = trace.rows.iter().map(|r| r.position).collect();
        assert_eq!(route, vec![0, 4, 1, 2]);
        let battery: Vec<f64> = trace.rows.iter().map(|r| r.battery).collect();
        assert_eq!(battery, vec![0.0, 11.0, 2.0, 0.0]);
        let travel: Vec<f64> = trace.rows.iter().map(|r| r.travel_cost).collect();
        assert_eq!(travel, vec![9.0, 9.0, 7.0, 0.0]);
        assert_eq!(trace.total_cost(), 25.0);
    }

    #[test]
    fn initial_actions_include_table1_choice() {
        let inst = example();
        let s = SdpState { position: 0, vehicle_inventory: 0, battery_level: 0, retailer_inventory: vec![2, 3] };
        let actions = enumerate_actions(&inst, 1, &s);
        assert!(actions.contains(&SdpAction { next: 4, load_up: 3, delivery: 0 }));
        assert!(actions.iter().all(|a| a.delivery == 0));
        assert_eq!(immediate_cost(&inst, 20, 1, &s, &SdpAction { next: 4, load_up: 3, delivery: 0 }), 9.0);
        let full = SdpState { vehicle_inventory: 4, ..s };
        assert!(enumerate_actions(&inst, 1, &full).iter().all(|a| a.load_up == 0));
    }

    #[test]
    fn zero_demand_costs_nothing() {
        let inst = example()
            .modified(|f| {
                for r in &mut f.retailers {
                    r.demand = vec![DemandModel::deterministic(0); 4];
                }
            })
            .unwrap();
        let policy = solve_backward(&inst, &SdpConfig::default()).unwrap();
        assert_eq!(policy.expected_cost(), 0.0);
        let trace = policy.replay(&inst, &[vec![0; 4], vec![0; 4]]).unwrap();
        assert!(trace.rows.iter().all(|r| r.penalty_cost == 0.0));
    }

    #[test]
    fn certain_shortage_costs_penalty() {
        let inst = example();
        let s = SdpState { position: 3, vehicle_inventory: 0, battery_level: 0, retailer_inventory: vec![0, 3] };
        let a = SdpAction { next: 3, load_up: 0, delivery: 0 };
        assert_eq!(immediate_cost(&inst, 20, 4, &s, &a), 25.0);
    }

    #[test]
    fn state_cap_is_enforced() {
        let config = SdpConfig { battery_levels: 20, max_states: 10 };
        assert!(matches!(solve_backward(&example(), &config), Err(SdpError::TooLarge { .. })));
    }

    #[test]
    fn layout_round_trips() {
        let inst = example();
        let layout = Layout::new(&inst, 20);
        let s = SdpState { position: 3, vehicle_inventory: 2, battery_level: 17, retailer_inventory: vec![4, 1] };
        assert_eq!(layout.state(layout.index(&s).unwrap()), s);
    }
}
