//! Factorial gap study and fuel-cost sensitivity runs.
//!
//! Each benchmark cell generates an instance, solves it exactly with the SDP,
//! computes the best static plan with the enumeration oracle, and reports the
//! percentage excess of the plan's exact expected cost over the SDP optimum.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::BatteryModel;
use crate::evaluate::{exact_plan_cost, percentage_error, GapError, GapStats};
use crate::instance::{generate_instance, DemandPattern, GeneratorConfig, Instance, NodeId, Topology};
use crate::milp::{enumerate_optimal_plan, EnumerationOptions, Plan};
use crate::sdp::{solve_backward, SdpConfig};

/// Retailer nodes used for one factor level, per topology label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetailerSet {
    pub label: String,
    pub nodes: BTreeMap<String, Vec<NodeId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub name: String,
    pub topologies: Vec<Topology>,
    pub retailer_sets: Vec<RetailerSet>,
    pub initial_inventories: Vec<Vec<u32>>,
    pub penalties: Vec<f64>,
    pub demand_patterns: Vec<DemandPattern>,
    pub horizon: usize,
    #[serde(default = "default_levels")]
    pub battery_levels: u32,
    /// Arc parameters of topology `k` are drawn with seed `seed + k`.
    pub seed: u64,
    #[serde(default)]
    pub deterministic_demand: bool,
    /// Template for everything the factors do not set.
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default = "default_budget")]
    pub node_budget: u64,
    #[serde(default = "default_max_states")]
    pub max_states: usize,
    /// Cells solved concurrently; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
}

fn default_levels() -> u32 {
    20
}

fn default_budget() -> u64 {
    EnumerationOptions::default().node_budget
}

fn default_max_states() -> usize {
    SdpConfig::default().max_states
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl BenchConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| BenchError::Config(format!("{} at {}", e.inner(), e.path())))
    }

    /// Factor levels of every cell, in row order.
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut cells = Vec::new();
        for (k, topology) in self.topologies.iter().enumerate() {
            for set in &self.retailer_sets {
                for inventory in &self.initial_inventories {
                    for &penalty in &self.penalties {
                        for pattern in &self.demand_patterns {
                            cells.push(CellSpec {
                                index: cells.len(),
                                topology: topology.clone(),
                                topology_seed: self.seed + k as u64,
                                retailer_set: set.label.clone(),
                                retailers: set.nodes.get(topology.label()).cloned().unwrap_or_default(),
                                initial_inventory: inventory.clone(),
                                penalty,
                                demand_pattern: pattern.clone(),
                            });
                        }
                    }
                }
            }
        }
        cells
    }

    fn generator_for(&self, cell: &CellSpec) -> GeneratorConfig {
        GeneratorConfig {
            topology: cell.topology.clone(),
            retailers: cell.retailers.clone(),
            retailer_count: cell.retailers.len().max(self.generator.retailer_count),
            demand_pattern: cell.demand_pattern.clone(),
            deterministic_demand: self.deterministic_demand,
            penalty: cell.penalty,
            initial_inventory: cell.initial_inventory.clone(),
            horizon: self.horizon,
            ..self.generator.clone()
        }
    }

    pub fn instance(&self, cell: &CellSpec) -> Result<Instance, String> {
        generate_instance(&self.generator_for(cell), cell.topology_seed).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub index: usize,
    pub topology: Topology,
    pub topology_seed: u64,
    pub retailer_set: String,
    pub retailers: Vec<NodeId>,
    pub initial_inventory: Vec<u32>,
    pub penalty: f64,
    pub demand_pattern: DemandPattern,
}

impl CellSpec {
    pub fn inventory_label(&self) -> String {
        let parts: Vec<String> = self.initial_inventory.iter().map(|v| v.to_string()).collect();
        format!("({})", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: CellSpec,
    pub optimal_cost: Option<f64>,
    pub heuristic_cost: Option<f64>,
    pub gap_percent: Option<f64>,
    pub plan: Option<Plan>,
    pub error: Option<String>,
    /// The heuristic beat the exact optimum beyond tolerance.
    pub consistency_failure: bool,
    pub sdp_seconds: f64,
    pub heuristic_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PivotRow {
    pub factor: String,
    pub level: String,
    pub stats: Option<GapStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub name: String,
    pub cells: Vec<CellResult>,
    pub pivot: Vec<PivotRow>,
}

impl BenchReport {
    pub fn consistency_failures(&self) -> usize {
        self.cells.iter().filter(|c| c.consistency_failure).count()
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.cells.iter().filter_map(|c| c.gap_percent).collect()
    }

    /// Text table shaped like the published gap summary.
    pub fn render_pivot(&self) -> String {
        let mut out = format!("{:<20}{:<12}{:>8}{:>8}{:>8}{:>6}\n", "Factor", "Level", "MPE", "MdPE", "SD", "n");
        for row in &self.pivot {
            let _ = match &row.stats {
                Some(s) => writeln!(
                    out,
                    "{:<20}{:<12}{:>8.2}{:>8.2}{:>8.2}{:>6}",
                    row.factor, row.level, s.mean, s.median, s.std_dev, s.count
                ),
                None => writeln!(out, "{:<20}{:<12}{:>8}{:>8}{:>8}{:>6}", row.factor, row.level, "-", "-", "-", 0),
            };
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from(
            "cell,topology,retailer_set,initial_inventory,penalty,demand,optimal_cost,heuristic_cost,gap_percent,error\n",
        );
        let num = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6}"));
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},\"{}\",{},{},{},{},{},{}",
                c.cell.index,
                c.cell.topology.label(),
                c.cell.retailer_set,
                c.cell.inventory_label(),
                c.cell.penalty,
                c.cell.demand_pattern.label(),
                num(c.optimal_cost),
                num(c.heuristic_cost),
                num(c.gap_percent),
                c.error.as_deref().unwrap_or("").replace(',', ";"),
            );
        }
        out
    }
}

fn run_cell(config: &BenchConfig, cell: CellSpec) -> CellResult {
    let mut result = CellResult {
        cell,
        optimal_cost: None,
        heuristic_cost: None,
        gap_percent: None,
        plan: None,
        error: None,
        consistency_failure: false,
        sdp_seconds: 0.0,
        heuristic_seconds: 0.0,
    };
    let instance = match config.instance(&result.cell) {
        Ok(i) => i,
        Err(e) => {
            result.error = Some(format!("generation: {e}"));
            return result;
        }
    };
    let clock = Instant::now();
    let sdp =
        solve_backward(&instance, &SdpConfig { battery_levels: config.battery_levels, max_states: config.max_states });
    result.sdp_seconds = clock.elapsed().as_secs_f64();
    let optimal = match sdp {
        Ok(policy) => policy.expected_cost(),
        Err(e) => {
            result.error = Some(format!("sdp: {e}"));
            return result;
        }
    };
    result.optimal_cost = Some(optimal);

    let battery = BatteryModel::Discretized { levels: config.battery_levels };
    let clock = Instant::now();
    let heuristic = enumerate_optimal_plan(&instance, &EnumerationOptions { battery, node_budget: config.node_budget });
    result.heuristic_seconds = clock.elapsed().as_secs_f64();
    let plan = match heuristic {
        Ok(r) => r.plan,
        Err(e) => {
            result.error = Some(format!("heuristic: {e}"));
            return result;
        }
    };
    let cost = match exact_plan_cost(&plan, &instance, battery) {
        Ok(r) => r.expected_total_cost,
        Err(e) => {
            result.error = Some(format!("evaluation: {e}"));
            return result;
        }
    };
    result.heuristic_cost = Some(cost);
    result.plan = Some(plan);
    match percentage_error(cost, optimal) {
        Ok(gap) => result.gap_percent = Some(gap),
        Err(e @ GapError::BelowOptimum { .. }) => {
            result.consistency_failure = true;
            result.error = Some(e.to_string());
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    log::info!(
        "cell {} done: optimum {:.4}, heuristic {:.4} ({:.1}s + {:.1}s)",
        result.cell.index,
        optimal,
        cost,
        result.sdp_seconds,
        result.heuristic_seconds
    );
    result
}

fn pivot(cells: &[CellResult]) -> Vec<PivotRow> {
    let mut rows = Vec::new();
    let mut group = |factor: &str, key: &dyn Fn(&CellResult) -> String| {
        let mut levels: Vec<String> = Vec::new();
        for c in cells {
            let k = key(c);
            if !levels.contains(&k) {
                levels.push(k);
            }
        }
        for level in levels {
            let gaps: Vec<f64> = cells.iter().filter(|c| key(c) == level).filter_map(|c| c.gap_percent).collect();
            rows.push(PivotRow { factor: factor.into(), level, stats: GapStats::from_values(&gaps) });
        }
    };
    group("Network", &|c| c.cell.topology.label().to_string());
    group("Initial inventory", &|c| c.cell.inventory_label());
    group("Penalty cost", &|c| format!("{}", c.cell.penalty));
    group("Demand pattern", &|c| c.cell.demand_pattern.label().to_string());
    group("General", &|_| "all".to_string());
    rows
}

/// Runs every cell; per-cell failures are recorded and the run continues.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport, BenchError> {
    let cells = config.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    let results: Vec<CellResult> = pool.install(|| cells.into_par_iter().map(|cell| run_cell(config, cell)).collect());
    let pivot = pivot(&results);
    Ok(BenchReport { name: config.name.clone(), cells: results, pivot })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub fuel_cost: f64,
    pub penalty: f64,
    pub initial_inventory: Vec<u32>,
    pub total_load: u32,
    /// Units delivered per retailer over the horizon, instance order.
    pub deliveries: Vec<u32>,
    /// Retailer nodes in order of first delivery, `N/A` when nothing is delivered.
    pub visit_order: String,
    pub expected_cost: Option<f64>,
    pub plan: Option<Plan>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub instance: String,
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityReport {
    pub fn render(&self) -> String {
        let retailers = self.rows.first().map_or(0, |r| r.deliveries.len());
        let mut out = format!("{:>4}{:>10}{:>10}{:>14}{:>8}", "#", "Fuel", "Penalty", "Inventory", "Load");
        for c in 0..retailers {
            let _ = write!(out, "{:>8}", format!("R{}", c + 1));
        }
        let _ = writeln!(out, "{:>12}  Order", "Cost");
        for (k, r) in self.rows.iter().enumerate() {
            let inv: Vec<String> = r.initial_inventory.iter().map(|v| v.to_string()).collect();
            let _ = write!(
                out,
                "{:>4}{:>10.2}{:>10.2}{:>14}{:>8}",
                k + 1,
                r.fuel_cost,
                r.penalty,
                inv.join(","),
                r.total_load
            );
            for d in &r.deliveries {
                let _ = write!(out, "{d:>8}");
            }
            let cost = r.expected_cost.map_or("-".into(), |c| format!("{c:.3}"));
            let _ = writeln!(out, "{cost:>12}  {}", r.error.as_deref().unwrap_or(&r.visit_order));
        }
        out
    }
}

/// Re-plans `instance` for every (fuel cost, penalty, initial stock) combination.
pub fn fuel_sensitivity(
    instance: &Instance,
    fuel_costs: &[f64],
    penalties: &[f64],
    inventories: &[Vec<u32>],
    options: &EnumerationOptions,
) -> SensitivityReport {
    let mut combos = Vec::new();
    for inventory in inventories {
        for &penalty in penalties {
            for &fuel in fuel_costs {
                combos.push((fuel, penalty, inventory.clone()));
            }
        }
    }
    let rows = combos
        .into_par_iter()
        .map(|(fuel, penalty, inventory)| {
            let mut row = SensitivityRow {
                fuel_cost: fuel,
                penalty,
                initial_inventory: inventory.clone(),
                total_load: 0,
                deliveries: vec![0; instance.retailer_count()],
                visit_order: "N/A".into(),
                expected_cost: None,
                plan: None,
                error: None,
            };
            let variant = instance.modified(|f| {
                f.costs.fuel = fuel;
                f.costs.penalty = penalty;
                for (k, r) in f.retailers.iter_mut().enumerate() {
                    if !inventory.is_empty() {
                        r.initial_inventory = inventory[k % inventory.len()];
                    }
                }
            });
            let variant = match variant {
                Ok(v) => v,
                Err(e) => {
                    row.error = Some(e.to_string());
                    return row;
                }
            };
            match enumerate_optimal_plan(&variant, options) {
                Ok(result) => {
                    let plan = result.plan;
                    row.total_load = plan.total_load();
                    row.deliveries = plan.deliveries.iter().map(|d| d.iter().sum()).collect();
                    let order = plan.delivery_order(&variant);
                    if !order.is_empty() {
                        row.visit_order = order.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("-");
                    }
                    row.expected_cost = Some(result.cost);
                    row.plan = Some(plan);
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect();
    SensitivityReport { instance: instance.name.clone(), rows }
}
