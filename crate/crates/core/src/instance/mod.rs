//! Road network, vehicle, retailers and the full problem instance.

mod generator;

pub use generator::{generate_instance, DemandPattern, GeneratorConfig, Topology, TopologyEdge};

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{DemandDistribution, DemandError};

pub type NodeId = usize;

/// Default truncation point of Poisson demand in instance files.
pub const DEFAULT_POISSON_TRUNCATION: u32 = 8;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}, field `{field}`: {message}")]
    Parse { line: usize, column: usize, field: String, message: String },
    #[error("invalid instance: {0}")]
    Validation(#[from] ValidationError),
    #[error("generator: {0}")]
    Generator(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum ValidationError {
    #[error("network has no nodes")]
    EmptyNetwork,
    #[error("{what} refers to node {node}, but the network has {node_count} nodes")]
    NodeOutOfRange { what: String, node: NodeId, node_count: usize },
    #[error("depot {0} is also listed as a retailer")]
    DepotIsRetailer(NodeId),
    #[error("retailer node {0} listed twice")]
    DuplicateRetailer(NodeId),
    #[error("instance has no retailers")]
    NoRetailers,
    #[error("arc ({from}, {to}) listed twice")]
    DuplicateArc { from: NodeId, to: NodeId },
    #[error("arc ({from}, {to}): {message}")]
    InvalidArc { from: NodeId, to: NodeId, message: String },
    #[error("vehicle: {0}")]
    InvalidVehicle(String),
    #[error("costs: {0}")]
    InvalidCosts(String),
    #[error("horizon must be at least one period")]
    ZeroHorizon,
    #[error("retailer at node {node}: initial inventory {initial} exceeds capacity {capacity}")]
    InitialInventoryExceedsCapacity { node: NodeId, initial: u32, capacity: u32 },
    #[error("retailer at node {node}: {got} demand periods given, horizon is {expected}")]
    DemandLength { node: NodeId, expected: usize, got: usize },
    #[error("retailer at node {node}, period {period}: {source}")]
    InvalidDemand { node: NodeId, period: usize, source: DemandError },
    #[error("retailers section does not match network retailers {0:?}")]
    RetailerMismatch(Vec<NodeId>),
    #[error("initial vehicle load {load} exceeds capacity {capacity}")]
    InitialLoadExceedsCapacity { load: u32, capacity: u32 },
    #[error("start battery {battery} kWh outside [0, {capacity}]")]
    StartBatteryOutOfRange { battery: f64, capacity: f64 },
    #[error("arc ({from}, {to}) needs {energy} kWh at mass {mass} kg; negative requirements need `allow_regen`")]
    RegenerativeArc { from: NodeId, to: NodeId, mass: f64, energy: f64 },
}

/// Directed road segment with its battery-energy model `alpha * M + beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcSpec {
    pub from: NodeId,
    pub to: NodeId,
    /// kWh per kg of total vehicle mass.
    pub alpha: f64,
    /// kWh.
    pub beta: f64,
    /// Energy delivered by the electric road, 0 on ordinary roads.
    #[serde(default)]
    pub supplied_energy: f64,
}

impl ArcSpec {
    /// Implicit self-loop used when the vehicle stays put.
    pub fn stay(node: NodeId) -> Self {
        Self { from: node, to: node, alpha: 0.0, beta: 0.0, supplied_energy: 0.0 }
    }

    pub fn is_ers(&self) -> bool {
        self.supplied_energy > 0.0
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub node_count: usize,
    #[serde(default)]
    pub depot: NodeId,
    pub retailers: Vec<NodeId>,
    pub arcs: Vec<ArcSpec>,
    #[serde(default = "default_true")]
    pub allow_stay: bool,
}

/// Directed road graph with a depot and retailer nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    node_count: usize,
    depot: NodeId,
    retailers: Vec<NodeId>,
    arcs: Vec<ArcSpec>,
    allow_stay: bool,
    arc_index: HashMap<(NodeId, NodeId), usize>,
    successors: Vec<Vec<NodeId>>,
    stay_arcs: Vec<ArcSpec>,
}

impl RoadNetwork {
    pub fn new(
        node_count: usize,
        depot: NodeId,
        retailers: Vec<NodeId>,
        arcs: Vec<ArcSpec>,
        allow_stay: bool,
    ) -> Result<Self, ValidationError> {
        if node_count == 0 {
            return Err(ValidationError::EmptyNetwork);
        }
        let check = |what: String, node: NodeId| {
            if node >= node_count {
                Err(ValidationError::NodeOutOfRange { what, node, node_count })
            } else {
                Ok(())
            }
        };
        check("depot".into(), depot)?;
        for (i, &r) in retailers.iter().enumerate() {
            check(format!("retailer {i}"), r)?;
            if r == depot {
                return Err(ValidationError::DepotIsRetailer(r));
            }
            if retailers[..i].contains(&r) {
                return Err(ValidationError::DuplicateRetailer(r));
            }
        }
        let mut arc_index = HashMap::with_capacity(arcs.len());
        for (k, arc) in arcs.iter().enumerate() {
            check(format!("arc {k} origin"), arc.from)?;
            check(format!("arc {k} destination"), arc.to)?;
            let invalid =
                |message: &str| ValidationError::InvalidArc { from: arc.from, to: arc.to, message: message.into() };
            if ![arc.alpha, arc.beta, arc.supplied_energy].iter().all(|v| v.is_finite()) {
                return Err(invalid("coefficients must be finite"));
            }
            if arc.supplied_energy < 0.0 {
                return Err(invalid("supplied energy must be non-negative"));
            }
            if arc.from == arc.to && allow_stay {
                return Err(invalid("explicit self-loops clash with allow_stay"));
            }
            if arc_index.insert((arc.from, arc.to), k).is_some() {
                return Err(ValidationError::DuplicateArc { from: arc.from, to: arc.to });
            }
        }
        let mut successors = vec![Vec::new(); node_count];
        for arc in &arcs {
            successors[arc.from].push(arc.to);
        }
        for (node, succ) in successors.iter_mut().enumerate() {
            if allow_stay {
                succ.push(node);
            }
            succ.sort_unstable();
        }
        Ok(Self {
            node_count,
            depot,
            retailers,
            stay_arcs: (0..node_count).map(ArcSpec::stay).collect(),
            arcs,
            allow_stay,
            arc_index,
            successors,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn depot(&self) -> NodeId {
        self.depot
    }

    pub fn retailers(&self) -> &[NodeId] {
        &self.retailers
    }

    pub fn arcs(&self) -> &[ArcSpec] {
        &self.arcs
    }

    pub fn allow_stay(&self) -> bool {
        self.allow_stay
    }

    /// Every traversable arc including implicit stays, sorted by (from, to).
    pub fn traversable_arcs(&self) -> Vec<&ArcSpec> {
        (0..self.node_count)
            .flat_map(|from| self.successors[from].iter().map(move |&to| (from, to)))
            .map(|(from, to)| self.arc(from, to).expect("successors have arcs"))
            .collect()
    }

    /// The arc taken when moving from `from` to `to`, including implicit stays.
    pub fn arc(&self, from: NodeId, to: NodeId) -> Option<&ArcSpec> {
        if from == to && self.allow_stay {
            return self.stay_arcs.get(from);
        }
        self.arc_index.get(&(from, to)).map(|&k| &self.arcs[k])
    }

    /// Adjacency indicator: an arc exists, or `from == to` with staying allowed.
    pub fn is_adjacent(&self, from: NodeId, to: NodeId) -> bool {
        self.arc(from, to).is_some()
    }

    /// Moves available from `node`, sorted by destination.
    pub fn successors(&self, node: NodeId) -> &[NodeId] {
        &self.successors[node]
    }

    /// Position of `node` in the retailer list.
    pub fn retailer_index(&self, node: NodeId) -> Option<usize> {
        self.retailers.iter().position(|&r| r == node)
    }

    /// Fewest arc traversals from `source` to every node (`None` if unreachable).
    pub fn hop_distances(&self, source: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &self.successors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn to_file(&self) -> NetworkFile {
        NetworkFile {
            node_count: self.node_count,
            depot: self.depot,
            retailers: self.retailers.clone(),
            arcs: self.arcs.clone(),
            allow_stay: self.allow_stay,
        }
    }
}

fn default_weight_per_unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    /// Empty vehicle mass in kg.
    pub unladen_weight: f64,
    /// Cargo capacity in inventory units.
    pub load_capacity: u32,
    /// Battery capacity in kWh.
    pub battery_capacity: f64,
    /// Battery-to-wheel efficiency in (0, 1].
    pub efficiency: f64,
    /// Mass of one inventory unit in kg.
    #[serde(default = "default_weight_per_unit")]
    pub weight_per_unit: f64,
}

impl VehicleSpec {
    /// Total mass carrying `load` units.
    pub fn mass(&self, load: u32) -> f64 {
        self.unladen_weight + self.weight_per_unit * load as f64
    }

    pub fn max_mass(&self) -> f64 {
        self.mass(self.load_capacity)
    }

    fn validate(&self) -> Result<(), ValidationError> {
        let bad = |m: String| Err(ValidationError::InvalidVehicle(m));
        if !(self.unladen_weight > 0.0) {
            return bad(format!("unladen weight must be positive, got {}", self.unladen_weight));
        }
        if self.load_capacity == 0 {
            return bad("load capacity must be positive".into());
        }
        if !(self.battery_capacity > 0.0 && self.battery_capacity.is_finite()) {
            return bad(format!("battery capacity must be positive, got {}", self.battery_capacity));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return bad(format!("efficiency must lie in (0, 1], got {}", self.efficiency));
        }
        if !(self.weight_per_unit > 0.0 && self.weight_per_unit.is_finite()) {
            return bad(format!("weight per unit must be positive, got {}", self.weight_per_unit));
        }
        Ok(())
    }
}

/// Demand of one period as written in instance files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DemandModel {
    Poisson {
        poisson_mean: f64,
        #[serde(default = "default_truncation")]
        truncate_at: u32,
    },
    Normal {
        normal_mean: f64,
        normal_sd: f64,
        #[serde(default = "default_bucket")]
        bucket_width: u32,
    },
    Pmf {
        pmf: Vec<f64>,
    },
}

fn default_truncation() -> u32 {
    DEFAULT_POISSON_TRUNCATION
}

fn default_bucket() -> u32 {
    1
}

impl DemandModel {
    pub fn deterministic(value: u32) -> Self {
        DemandModel::Pmf { pmf: DemandDistribution::point_mass(value).pmf().to_vec() }
    }

    pub fn distribution(&self) -> Result<DemandDistribution, DemandError> {
        match self {
            DemandModel::Poisson { poisson_mean, truncate_at } => {
                DemandDistribution::truncated_poisson(*poisson_mean, *truncate_at)
            }
            DemandModel::Normal { normal_mean, normal_sd, bucket_width } => {
                DemandDistribution::discretized_normal(*normal_mean, *normal_sd, *bucket_width)
            }
            DemandModel::Pmf { pmf } => DemandDistribution::from_pmf(pmf.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetailerSpec {
    pub node: NodeId,
    pub capacity: u32,
    pub initial_inventory: u32,
    /// One entry per period of the horizon.
    pub demand: Vec<DemandModel>,
}

/// How electric-road energy is priced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErsCostBasis {
    /// Every traversed electric arc is paid in full.
    Supplied,
    /// Only energy spent on propulsion is paid; battery charge is paid when drawn.
    #[default]
    Consumed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Price per kWh of grid or battery electricity.
    pub electricity: f64,
    /// Price per kWh of mechanical energy from fuel.
    pub fuel: f64,
    /// Cost per unit of lost sales.
    pub penalty: f64,
    #[serde(default)]
    pub ers_cost_basis: ErsCostBasis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSpec {
    pub node: NodeId,
    #[serde(default)]
    pub load: u32,
    /// Initial state of charge in kWh.
    #[serde(default)]
    pub battery: f64,
}

/// On-disk layout of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub network: NetworkFile,
    pub vehicle: VehicleSpec,
    pub retailers: Vec<RetailerSpec>,
    pub costs: CostParams,
    pub horizon: usize,
    pub start: StartSpec,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_regen: bool,
}

/// A validated problem instance. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub network: RoadNetwork,
    pub vehicle: VehicleSpec,
    /// Ordered as `network.retailers()`.
    pub retailers: Vec<RetailerSpec>,
    pub costs: CostParams,
    pub horizon: usize,
    pub start: StartSpec,
    pub allow_regen: bool,
    demand: Vec<Vec<DemandDistribution>>,
}

impl TryFrom<InstanceFile> for Instance {
    type Error = ValidationError;

    fn try_from(file: InstanceFile) -> Result<Self, Self::Error> {
        Instance::from_file(file)
    }
}

impl Serialize for Instance {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_file().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = InstanceFile::deserialize(deserializer)?;
        Instance::from_file(file).map_err(serde::de::Error::custom)
    }
}

impl Instance {
    pub fn from_file(file: InstanceFile) -> Result<Self, ValidationError> {
        let net = file.network;
        let network = RoadNetwork::new(net.node_count, net.depot, net.retailers, net.arcs, net.allow_stay)?;
        if network.retailers().is_empty() {
            return Err(ValidationError::NoRetailers);
        }
        file.vehicle.validate()?;
        let costs = file.costs;
        if ![costs.electricity, costs.fuel, costs.penalty].iter().all(|c| c.is_finite() && *c >= 0.0) {
            return Err(ValidationError::InvalidCosts("prices and penalty must be finite and non-negative".into()));
        }
        if file.horizon == 0 {
            return Err(ValidationError::ZeroHorizon);
        }

        // Retailer records are matched to the network's retailer list by node.
        let mut retailers = Vec::with_capacity(network.retailers().len());
        for &node in network.retailers() {
            let spec = file
                .retailers
                .iter()
                .find(|r| r.node == node)
                .ok_or_else(|| ValidationError::RetailerMismatch(network.retailers().to_vec()))?;
            retailers.push(spec.clone());
        }
        if file.retailers.len() != retailers.len() {
            return Err(ValidationError::RetailerMismatch(network.retailers().to_vec()));
        }

        let mut demand = Vec::with_capacity(retailers.len());
        for r in &retailers {
            if r.initial_inventory > r.capacity {
                return Err(ValidationError::InitialInventoryExceedsCapacity {
                    node: r.node,
                    initial: r.initial_inventory,
                    capacity: r.capacity,
                });
            }
            if r.demand.len() != file.horizon {
                return Err(ValidationError::DemandLength {
                    node: r.node,
                    expected: file.horizon,
                    got: r.demand.len(),
                });
            }
            let periods = r
                .demand
                .iter()
                .enumerate()
                .map(|(t, m)| {
                    m.distribution().map_err(|source| ValidationError::InvalidDemand {
                        node: r.node,
                        period: t + 1,
                        source,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            demand.push(periods);
        }

        let start = file.start;
        if start.node >= network.node_count() {
            return Err(ValidationError::NodeOutOfRange {
                what: "start".into(),
                node: start.node,
                node_count: network.node_count(),
            });
        }
        if start.load > file.vehicle.load_capacity {
            return Err(ValidationError::InitialLoadExceedsCapacity {
                load: start.load,
                capacity: file.vehicle.load_capacity,
            });
        }
        if !(start.battery >= 0.0 && start.battery <= file.vehicle.battery_capacity) {
            return Err(ValidationError::StartBatteryOutOfRange {
                battery: start.battery,
                capacity: file.vehicle.battery_capacity,
            });
        }

        if !file.allow_regen {
            for arc in network.arcs() {
                if arc.alpha < 0.0 || arc.beta < 0.0 {
                    let (mass, energy) = [file.vehicle.mass(0), file.vehicle.max_mass()]
                        .into_iter()
                        .map(|m| (m, arc.alpha * m + arc.beta))
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .unwrap_or_default();
                    if energy < 0.0 {
                        return Err(ValidationError::RegenerativeArc { from: arc.from, to: arc.to, mass, energy });
                    }
                    return Err(ValidationError::InvalidArc {
                        from: arc.from,
                        to: arc.to,
                        message: "alpha and beta must be non-negative without allow_regen".into(),
                    });
                }
            }
        }

        Ok(Self {
            name: file.name,
            network,
            vehicle: file.vehicle,
            retailers,
            costs,
            horizon: file.horizon,
            start,
            allow_regen: file.allow_regen,
            demand,
        })
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            name: self.name.clone(),
            network: self.network.to_file(),
            vehicle: self.vehicle.clone(),
            retailers: self.retailers.clone(),
            costs: self.costs,
            horizon: self.horizon,
            start: self.start.clone(),
            allow_regen: self.allow_regen,
        }
    }

    /// Rebuilds the instance after editing its file representation.
    pub fn modified(&self, edit: impl FnOnce(&mut InstanceFile)) -> Result<Self, ValidationError> {
        let mut file = self.to_file();
        edit(&mut file);
        Self::from_file(file)
    }

    pub fn retailer_count(&self) -> usize {
        self.retailers.len()
    }

    /// Demand distribution of `retailer` (index) in `period` (1-based).
    pub fn demand(&self, retailer: usize, period: usize) -> &DemandDistribution {
        &self.demand[retailer][period - 1]
    }

    pub fn demand_series(&self, retailer: usize) -> &[DemandDistribution] {
        &self.demand[retailer]
    }

    pub fn is_deterministic(&self) -> bool {
        self.demand.iter().flatten().all(DemandDistribution::is_deterministic)
    }

    /// Retailer nodes that cannot be reached from the start within the horizon.
    pub fn unreachable_retailers(&self) -> Vec<NodeId> {
        let dist = self.network.hop_distances(self.start.node);
        self.network.retailers().iter().copied().filter(|&r| dist[r].is_none_or(|d| d >= self.horizon)).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("instance serialization is infallible");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: InstanceFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            InstanceError::Parse { line: inner.line(), column: inner.column(), field, message: inner.to_string() }
        })?;
        Ok(Self::from_file(file)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InstanceError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| InstanceError::Io { path: path.display().to_string(), source })
    }
}

/// Reads and validates an instance file.
pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance, InstanceError> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|source| InstanceError::Io { path: path.display().to_string(), source })?;
    Instance::from_json(&text)
}
