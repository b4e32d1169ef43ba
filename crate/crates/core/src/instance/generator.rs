//! Random test-bed instances on the four benchmark road topologies.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    ArcSpec, CostParams, DemandModel, ErsCostBasis, Instance, InstanceError, InstanceFile, NetworkFile, NodeId,
    RetailerSpec, StartSpec, VehicleSpec,
};

/// Edge of a topology sketch; `ers` marks an electrified road.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyEdge {
    pub from: NodeId,
    pub to: NodeId,
    #[serde(default)]
    pub ers: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    T1,
    T2,
    T3,
    T4,
    Custom {
        node_count: usize,
        edges: Vec<TopologyEdge>,
        #[serde(default)]
        bidirectional: bool,
    },
}

const fn e(from: NodeId, to: NodeId, ers: bool) -> TopologyEdge {
    TopologyEdge { from, to, ers }
}

// Roads of T1 are two-way; T2 to T4 are one-way.
const T1_EDGES: &[TopologyEdge] = &[
    e(0, 1, false),
    e(1, 3, true),
    e(1, 11, false),
    e(2, 3, false),
    e(4, 6, false),
    e(7, 13, false),
    e(8, 13, false),
    e(10, 11, true),
    e(0, 2, false),
    e(0, 7, false),
    e(0, 12, true),
    e(1, 5, false),
    e(2, 4, false),
    e(2, 6, false),
    e(4, 7, true),
    e(5, 9, false),
    e(8, 9, true),
    e(8, 12, false),
    e(9, 10, false),
];

const T2_EDGES: &[TopologyEdge] = &[
    e(0, 1, false),
    e(1, 2, true),
    e(1, 3, true),
    e(2, 4, false),
    e(2, 8, true),
    e(3, 4, false),
    e(3, 9, true),
    e(4, 0, false),
    e(4, 1, true),
    e(4, 5, false),
    e(5, 6, false),
    e(6, 0, false),
    e(6, 1, true),
    e(6, 7, true),
    e(7, 5, true),
    e(8, 1, false),
    e(9, 7, false),
];

const T3_EDGES: &[TopologyEdge] = &[
    e(1, 5, true),
    e(0, 2, true),
    e(0, 4, false),
    e(2, 0, false),
    e(0, 1, false),
    e(0, 3, true),
    e(1, 2, false),
    e(1, 4, true),
    e(2, 6, false),
    e(3, 2, false),
    e(3, 8, true),
    e(4, 0, false),
    e(4, 2, false),
    e(4, 5, false),
    e(4, 9, true),
    e(5, 1, false),
    e(5, 8, true),
    e(6, 5, false),
    e(6, 7, true),
    e(7, 2, false),
    e(7, 4, true),
    e(7, 5, false),
    e(8, 0, false),
    e(8, 6, false),
    e(9, 0, true),
    e(9, 5, false),
    e(9, 8, false),
];

const T4_EDGES: &[TopologyEdge] = &[
    e(0, 2, false),
    e(2, 3, true),
    e(4, 3, true),
    e(0, 3, false),
    e(1, 4, false),
    e(4, 6, true),
    e(5, 6, false),
    e(0, 1, false),
    e(0, 4, true),
    e(1, 3, false),
    e(1, 7, true),
    e(2, 0, false),
    e(2, 4, false),
    e(2, 5, true),
    e(3, 4, false),
    e(3, 9, true),
    e(4, 1, false),
    e(5, 1, true),
    e(6, 2, false),
    e(6, 4, false),
    e(7, 3, true),
    e(8, 0, false),
    e(8, 1, false),
    e(8, 4, false),
    e(8, 5, true),
    e(9, 7, false),
    e(9, 8, false),
];

impl Topology {
    pub fn from_name(name: &str) -> Result<Self, InstanceError> {
        match name.to_ascii_uppercase().as_str() {
            "T1" => Ok(Topology::T1),
            "T2" => Ok(Topology::T2),
            "T3" => Ok(Topology::T3),
            "T4" => Ok(Topology::T4),
            _ => Err(InstanceError::Generator(format!("unknown topology `{name}`"))),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Topology::T1 => "T1",
            Topology::T2 => "T2",
            Topology::T3 => "T3",
            Topology::T4 => "T4",
            Topology::Custom { .. } => "custom",
        }
    }

    /// Node count and directed edge list.
    pub fn directed_edges(&self) -> (usize, Vec<TopologyEdge>) {
        let (n, edges, two_way): (usize, &[TopologyEdge], bool) = match self {
            Topology::T1 => (14, T1_EDGES, true),
            Topology::T2 => (10, T2_EDGES, false),
            Topology::T3 => (10, T3_EDGES, false),
            Topology::T4 => (10, T4_EDGES, false),
            Topology::Custom { node_count, edges, bidirectional } => (*node_count, edges.as_slice(), *bidirectional),
        };
        let mut out = Vec::with_capacity(edges.len() * 2);
        for edge in edges {
            out.push(*edge);
            if two_way {
                out.push(TopologyEdge { from: edge.to, to: edge.from, ers: edge.ers });
            }
        }
        (n, out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandPattern {
    D1,
    D2,
    D3,
    /// Poisson means per retailer per period.
    Custom(Vec<Vec<f64>>),
}

impl DemandPattern {
    pub fn from_name(name: &str) -> Result<Self, InstanceError> {
        match name.to_ascii_uppercase().as_str() {
            "D1" => Ok(DemandPattern::D1),
            "D2" => Ok(DemandPattern::D2),
            "D3" => Ok(DemandPattern::D3),
            _ => Err(InstanceError::Generator(format!("unknown demand pattern `{name}`"))),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            DemandPattern::D1 => "D1",
            DemandPattern::D2 => "D2",
            DemandPattern::D3 => "D3",
            DemandPattern::Custom(_) => "custom",
        }
    }

    /// Poisson means of retailer `index` (0-based), one per period.
    pub fn means(&self, index: usize) -> Vec<f64> {
        let table: [&[f64]; 2] = match self {
            DemandPattern::D1 => [&[2.0; 9], &[2.0; 9]],
            DemandPattern::D2 => {
                [&[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 5.0], &[5.0, 4.0, 4.0, 3.0, 3.0, 2.0, 2.0, 1.0, 1.0]]
            }
            DemandPattern::D3 => {
                [&[1.0, 1.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 1.0], &[1.0, 1.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 1.0]]
            }
            DemandPattern::Custom(rows) => return rows[index % rows.len()].clone(),
        };
        table[index % 2].to_vec()
    }
}

/// Template for [`generate_instance`]. Defaults follow the benchmark test bed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub topology: Topology,
    /// Explicit retailer nodes; drawn at random when empty.
    pub retailers: Vec<NodeId>,
    pub retailer_count: usize,
    pub demand_pattern: DemandPattern,
    /// Replace every demand by a point mass at its rounded mean.
    pub deterministic_demand: bool,
    pub penalty: f64,
    /// Initial stock per retailer (cycled when shorter than the retailer list).
    pub initial_inventory: Vec<u32>,
    pub horizon: usize,
    pub retailer_capacity: u32,
    pub vehicle_capacity: u32,
    pub battery_capacity: f64,
    pub unladen_weight: f64,
    pub weight_per_unit: f64,
    pub efficiency: f64,
    pub electricity_cost: f64,
    pub fuel_cost: f64,
    pub ers_cost_basis: ErsCostBasis,
    pub truncate_at: u32,
    /// kWh per kg, sampled uniformly per road.
    pub alpha_range: (f64, f64),
    /// kWh, sampled uniformly per road.
    pub beta_range: (f64, f64),
    /// Electric roads supply this multiple of their own full-load requirement.
    pub ers_supply_factor: f64,
    pub allow_stay: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            topology: Topology::T1,
            retailers: Vec::new(),
            retailer_count: 2,
            demand_pattern: DemandPattern::D1,
            deterministic_demand: false,
            penalty: 10.0,
            initial_inventory: vec![0, 0],
            horizon: 9,
            retailer_capacity: 8,
            vehicle_capacity: 10,
            battery_capacity: 150.0,
            unladen_weight: 12_000.0,
            weight_per_unit: 1_000.0,
            efficiency: 1.0,
            electricity_cost: 1.0,
            fuel_cost: 3.0,
            ers_cost_basis: ErsCostBasis::Consumed,
            truncate_at: 8,
            alpha_range: (0.0005, 0.002),
            beta_range: (1.0, 5.0),
            ers_supply_factor: 2.0,
            allow_stay: true,
        }
    }
}

/// Builds a reproducible instance from `config`; the same seed gives the same
/// instance.
pub fn generate_instance(config: &GeneratorConfig, seed: u64) -> Result<Instance, InstanceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (node_count, edges) = config.topology.directed_edges();
    let depot = 0;
    let max_mass = config.unladen_weight + config.weight_per_unit * config.vehicle_capacity as f64;

    // One draw per road so both directions of a two-way road agree.
    let mut arcs: Vec<ArcSpec> = Vec::with_capacity(edges.len());
    for edge in &edges {
        if arcs.iter().any(|a| a.from == edge.from && a.to == edge.to) {
            continue;
        }
        let twin = arcs.iter().find(|a| a.from == edge.to && a.to == edge.from).cloned();
        let (alpha, beta) = match twin {
            Some(t) => (t.alpha, t.beta),
            None => (
                rng.gen_range(config.alpha_range.0..=config.alpha_range.1),
                rng.gen_range(config.beta_range.0..=config.beta_range.1),
            ),
        };
        let supplied_energy = if edge.ers { config.ers_supply_factor * (alpha * max_mass + beta) } else { 0.0 };
        arcs.push(ArcSpec { from: edge.from, to: edge.to, alpha, beta, supplied_energy });
    }

    let mut network =
        NetworkFile { node_count, depot, retailers: config.retailers.clone(), arcs, allow_stay: config.allow_stay };
    let probe = super::RoadNetwork::new(node_count, depot, Vec::new(), network.arcs.clone(), config.allow_stay)?;
    let hops = probe.hop_distances(depot);
    let reachable = |n: NodeId| hops.get(n).copied().flatten().is_some_and(|d| d < config.horizon);

    if network.retailers.is_empty() && config.retailer_count > 0 {
        let candidates: Vec<NodeId> = (0..node_count).filter(|&n| n != depot && reachable(n)).collect();
        if candidates.len() < config.retailer_count {
            return Err(InstanceError::Generator(format!(
                "only {} nodes reachable within the horizon, {} retailers requested",
                candidates.len(),
                config.retailer_count
            )));
        }
        let mut chosen: Vec<NodeId> = candidates.choose_multiple(&mut rng, config.retailer_count).copied().collect();
        chosen.sort_unstable();
        network.retailers = chosen;
    } else if let Some(&bad) = network.retailers.iter().find(|&&n| !reachable(n)) {
        return Err(InstanceError::Generator(format!(
            "retailer {bad} is not reachable from the depot within {} periods",
            config.horizon
        )));
    }

    let retailers = network
        .retailers
        .iter()
        .enumerate()
        .map(|(idx, &node)| {
            let means = config.demand_pattern.means(idx);
            let demand = (0..config.horizon)
                .map(|t| {
                    let mean = means[t % means.len()];
                    if config.deterministic_demand {
                        DemandModel::deterministic(mean.round() as u32)
                    } else {
                        DemandModel::Poisson { poisson_mean: mean, truncate_at: config.truncate_at }
                    }
                })
                .collect();
            let initial = if config.initial_inventory.is_empty() {
                0
            } else {
                config.initial_inventory[idx % config.initial_inventory.len()]
            };
            RetailerSpec { node, capacity: config.retailer_capacity, initial_inventory: initial, demand }
        })
        .collect();

    let file = InstanceFile {
        name: format!("{}-{}-seed{seed}", config.topology.label(), config.demand_pattern.label()),
        network,
        vehicle: VehicleSpec {
            unladen_weight: config.unladen_weight,
            load_capacity: config.vehicle_capacity,
            battery_capacity: config.battery_capacity,
            efficiency: config.efficiency,
            weight_per_unit: config.weight_per_unit,
        },
        retailers,
        costs: CostParams {
            electricity: config.electricity_cost,
            fuel: config.fuel_cost,
            penalty: config.penalty,
            ers_cost_basis: config.ers_cost_basis,
        },
        horizon: config.horizon,
        start: StartSpec { node: depot, load: 0, battery: 0.0 },
        allow_regen: false,
    };
    Ok(Instance::from_file(file)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let config = GeneratorConfig { topology: Topology::T2, penalty: 10.0, ..Default::default() };
        let a = generate_instance(&config, 1).unwrap().to_json();
        let b = generate_instance(&config, 1).unwrap().to_json();
        assert_eq!(a, b);
        let c = generate_instance(&config, 2).unwrap().to_json();
        assert_ne!(a, c);
    }

    #[test]
    fn d2_means_follow_the_table() {
        let config = GeneratorConfig {
            topology: Topology::T1,
            demand_pattern: DemandPattern::D2,
            penalty: 20.0,
            ..Default::default()
        };
        let inst = generate_instance(&config, 7).unwrap();
        let means: Vec<f64> = inst.retailers[0]
            .demand
            .iter()
            .map(|m| match m {
                DemandModel::Poisson { poisson_mean, truncate_at: 8 } => *poisson_mean,
                other => panic!("unexpected demand model {other:?}"),
            })
            .collect();
        assert_eq!(means, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 5.0]);
        assert_eq!(inst.retailers[0].capacity, 8);
        assert_eq!(inst.vehicle.load_capacity, 10);
        assert_eq!(inst.horizon, 9);
        assert_eq!(inst.costs.penalty, 20.0);
    }

    #[test]
    fn generated_retailers_are_reachable() {
        for topology in [Topology::T1, Topology::T2, Topology::T3, Topology::T4] {
            for seed in 0..20 {
                let config = GeneratorConfig { topology: topology.clone(), horizon: 4, ..Default::default() };
                let inst = generate_instance(&config, seed).unwrap();
                assert!(inst.unreachable_retailers().is_empty(), "{} seed {seed}", topology.label());
            }
        }
    }

    #[test]
    fn ers_roads_supply_twice_full_load_need() {
        let inst = generate_instance(&GeneratorConfig::default(), 3).unwrap();
        let max_mass = inst.vehicle.max_mass();
        let ers: Vec<_> = inst.network.arcs().iter().filter(|a| a.is_ers()).collect();
        assert_eq!(ers.len(), 10);
        for a in ers {
            assert!((a.supplied_energy - 2.0 * (a.alpha * max_mass + a.beta)).abs() < 1e-9);
        }
    }

    #[test]
    fn custom_topology_without_retailers_fails_validation() {
        let config = GeneratorConfig {
            topology: Topology::Custom {
                node_count: 3,
                edges: vec![e(0, 1, false), e(1, 2, true)],
                bidirectional: true,
            },
            retailer_count: 0,
            ..Default::default()
        };
        assert!(matches!(
            generate_instance(&config, 1),
            Err(InstanceError::Validation(super::super::ValidationError::NoRetailers))
        ));
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(Topology::from_name("T9").is_err());
        assert!(DemandPattern::from_name("D7").is_err());
        assert_eq!(Topology::from_name("t3").unwrap(), Topology::T3);
    }
}
