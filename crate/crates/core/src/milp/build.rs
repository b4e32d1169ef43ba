use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{MilpModel, Sense, VarKind};
use super::plan::Plan;
use crate::demand::{piecewise_linearize, DemandDistribution, LossKind, PiecewiseLinearLoss};
use crate::energy::{discretize_energy, energy_to_levels, required_battery_energy};
use crate::instance::{ArcSpec, ErsCostBasis, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub segments: usize,
    /// Battery in level units with per-load energy tables instead of kWh.
    pub discretized: bool,
    pub battery_levels: u32,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { segments: 10, discretized: false, battery_levels: 20 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("segments must be at least 1")]
    NoSegments,
    #[error("battery levels must be at least 1")]
    NoLevels,
    #[error("arc {from}->{to} regenerates energy at some load; the static model does not support it")]
    Regenerative { from: usize, to: usize },
}

/// A built model plus what is needed to interpret its solutions.
#[derive(Debug, Clone)]
pub struct ErrpModel {
    pub model: MilpModel,
    pub options: ModelOptions,
    /// Piecewise loss bounds of cumulative demand, `loss[c][t]`.
    pub loss: Vec<Vec<PiecewiseLinearLoss>>,
    pub complementary: Vec<Vec<PiecewiseLinearLoss>>,
    /// Penalty-weighted sum of the largest loss linearization gaps.
    pub linearization_gap: f64,
}

/// Everything needed for the transit of one arc.
struct ArcTerms<'a> {
    arc: &'a ArcSpec,
    slot: usize,
}

fn arc_name(prefix: &str, arc: &ArcSpec, t: usize) -> String {
    format!("{prefix}_{}_{}_{t}", arc.from, arc.to)
}

/// Builds the static-plan model of an instance.
pub fn build_model(instance: &Instance, options: ModelOptions) -> Result<ErrpModel, BuildError> {
    if options.segments == 0 {
        return Err(BuildError::NoSegments);
    }
    if options.discretized && options.battery_levels == 0 {
        return Err(BuildError::NoLevels);
    }
    let unreachable = instance.unreachable_retailers();
    if !unreachable.is_empty() {
        log::warn!("retailers {unreachable:?} cannot be reached; they will never be served");
    }
    let network = &instance.network;
    let vehicle = &instance.vehicle;
    let costs = &instance.costs;
    let horizon = instance.horizon;
    let nodes = network.node_count();
    let capacity = vehicle.load_capacity as f64;
    let w_min = vehicle.mass(0);
    let w_max = vehicle.max_mass();
    let start_load = instance.start.load as f64;
    let battery_cap = vehicle.battery_capacity;
    let lambda = vehicle.efficiency;
    let levels = options.battery_levels;
    let unit = if options.discretized { battery_cap / levels as f64 } else { 1.0 };
    let battery_top = if options.discretized { levels as f64 } else { battery_cap };

    let arcs: Vec<ArcTerms> =
        network.traversable_arcs().into_iter().enumerate().map(|(slot, arc)| ArcTerms { arc, slot }).collect();
    let moves: Vec<&ArcTerms> = arcs.iter().filter(|a| a.arc.from != a.arc.to).collect();
    for a in &moves {
        if required_battery_energy(a.arc, w_min) < 0.0 || required_battery_energy(a.arc, w_max) < 0.0 {
            return Err(BuildError::Regenerative { from: a.arc.from, to: a.arc.to });
        }
    }
    // Per-arc requirement and supply in model battery units.
    let supply: Vec<f64> = arcs
        .iter()
        .map(|a| {
            if options.discretized {
                energy_to_levels(a.arc.supplied_energy, levels, battery_cap) as f64
            } else {
                a.arc.supplied_energy
            }
        })
        .collect();
    let level_need: Vec<Vec<f64>> = arcs
        .iter()
        .map(|a| {
            (0..=vehicle.load_capacity)
                .map(|n| discretize_energy(a.arc, vehicle.mass(n), levels, battery_cap) as f64)
                .collect()
        })
        .collect();
    let need_max = moves
        .iter()
        .map(|a| {
            if options.discretized {
                level_need[a.slot].iter().cloned().fold(0.0, f64::max)
            } else {
                required_battery_energy(a.arc, w_max)
            }
        })
        .fold(0.0, f64::max);
    let supply_max = supply.iter().cloned().fold(0.0, f64::max);

    let mut m = MilpModel::new(instance.name.clone());

    // Routing.
    let mut v = vec![vec![0; horizon + 1]; nodes];
    for (i, row) in v.iter_mut().enumerate() {
        for t in 1..=horizon {
            row[t] = m.add_var(format!("V_{i}_{t}"), VarKind::Binary, 0.0, 1.0);
        }
    }
    let mut tr: HashMap<(usize, usize), usize> = HashMap::new();
    for t in 1..horizon {
        for a in &arcs {
            tr.insert((a.slot, t), m.add_var(arc_name("T", a.arc, t), VarKind::Binary, 0.0, 1.0));
        }
    }
    m.add_constraint("start", vec![(v[instance.start.node][1], 1.0)], Sense::Eq, 1.0);
    for t in 1..=horizon {
        m.add_constraint(format!("one_position_{t}"), (0..nodes).map(|i| (v[i][t], 1.0)).collect(), Sense::Eq, 1.0);
    }
    for t in 1..horizon {
        for i in 0..nodes {
            let mut out: Vec<(usize, f64)> =
                arcs.iter().filter(|a| a.arc.from == i).map(|a| (tr[&(a.slot, t)], 1.0)).collect();
            out.push((v[i][t], -1.0));
            m.add_constraint(format!("depart_{i}_{t}"), out, Sense::Eq, 0.0);
            let mut inbound: Vec<(usize, f64)> =
                arcs.iter().filter(|a| a.arc.to == i).map(|a| (tr[&(a.slot, t)], 1.0)).collect();
            inbound.push((v[i][t + 1], -1.0));
            m.add_constraint(format!("arrive_{i}_{t}"), inbound, Sense::Eq, 0.0);
        }
    }

    // Loading, delivery, cargo and weight.
    let depot = network.depot();
    let mut load = vec![0; horizon + 1];
    for t in 1..=horizon {
        load[t] = m.add_var(format!("L_{t}"), VarKind::Integer, 0.0, capacity);
        m.add_constraint(format!("depot_load_{t}"), vec![(load[t], 1.0), (v[depot][t], -capacity)], Sense::Le, 0.0);
    }
    let mut q = vec![vec![0; horizon + 1]; instance.retailer_count()];
    for (c, r) in instance.retailers.iter().enumerate() {
        let k = r.capacity as f64;
        for t in 1..=horizon {
            q[c][t] = m.add_var(format!("Q_{}_{t}", r.node), VarKind::Integer, 0.0, k);
            m.add_constraint(
                format!("deliver_{}_{t}", r.node),
                vec![(q[c][t], 1.0), (v[r.node][t], -k)],
                Sense::Le,
                0.0,
            );
        }
    }
    let cargo_terms = |t: usize| -> Vec<(usize, f64)> {
        let mut terms = Vec::new();
        for k in 1..=t {
            terms.push((load[k], 1.0));
            for row in &q {
                terms.push((row[k], -1.0));
            }
        }
        terms
    };
    let mut weight = vec![0; horizon + 1];
    for t in 1..=horizon {
        let cargo = cargo_terms(t);
        m.add_constraint(format!("cargo_max_{t}"), cargo.clone(), Sense::Le, capacity - start_load);
        m.add_constraint(format!("cargo_min_{t}"), cargo.clone(), Sense::Ge, -start_load);
        weight[t] = m.add_var(format!("W_{t}"), VarKind::Continuous, w_min, w_max);
        let mut terms: Vec<(usize, f64)> = cargo.into_iter().map(|(x, a)| (x, -vehicle.weight_per_unit * a)).collect();
        terms.push((weight[t], 1.0));
        m.add_constraint(format!("weight_{t}"), terms, Sense::Eq, w_min + vehicle.weight_per_unit * start_load);
    }

    // Energy needed in each transit, in model battery units.
    let mut need: Vec<Vec<(usize, f64)>> = vec![Vec::new(); horizon + 1];
    let mut gain: Vec<Vec<(usize, f64)>> = vec![Vec::new(); horizon + 1];
    for t in 1..horizon {
        for a in &arcs {
            let x = tr[&(a.slot, t)];
            if supply[a.slot] != 0.0 {
                gain[t].push((x, supply[a.slot]));
            }
        }
        if options.discretized {
            let y: Vec<usize> = (0..=vehicle.load_capacity)
                .map(|n| m.add_var(format!("Y_{n}_{t}"), VarKind::Binary, 0.0, 1.0))
                .collect();
            m.add_constraint(format!("load_level_one_{t}"), y.iter().map(|&x| (x, 1.0)).collect(), Sense::Eq, 1.0);
            let mut level_terms: Vec<(usize, f64)> = y.iter().enumerate().map(|(n, &x)| (x, n as f64)).collect();
            level_terms.extend(cargo_terms(t).into_iter().map(|(x, a)| (x, -a)));
            m.add_constraint(format!("load_level_{t}"), level_terms, Sense::Eq, start_load);
            for a in &moves {
                let x = tr[&(a.slot, t)];
                for (n, &yn) in y.iter().enumerate() {
                    let eps = level_need[a.slot][n];
                    if eps == 0.0 {
                        continue;
                    }
                    let z = m.add_var(format!("Z_{}_{}_{n}_{t}", a.arc.from, a.arc.to), VarKind::Continuous, 0.0, 1.0);
                    let tag = format!("{}_{}_{n}_{t}", a.arc.from, a.arc.to);
                    m.add_constraint(format!("zt_{tag}"), vec![(z, 1.0), (x, -1.0)], Sense::Le, 0.0);
                    m.add_constraint(format!("zy_{tag}"), vec![(z, 1.0), (yn, -1.0)], Sense::Le, 0.0);
                    m.add_constraint(format!("zty_{tag}"), vec![(z, 1.0), (x, -1.0), (yn, -1.0)], Sense::Ge, -1.0);
                    need[t].push((z, eps));
                }
            }
        } else {
            for a in &moves {
                let x = tr[&(a.slot, t)];
                if a.arc.beta != 0.0 {
                    need[t].push((x, a.arc.beta));
                }
                if a.arc.alpha == 0.0 {
                    continue;
                }
                let p = m.add_var(arc_name("P", a.arc, t), VarKind::Continuous, 0.0, w_max);
                let tag = format!("{}_{}_{t}", a.arc.from, a.arc.to);
                let wt = weight[t];
                m.add_constraint(format!("prod_a_{tag}"), vec![(p, 1.0), (x, -w_max)], Sense::Le, 0.0);
                m.add_constraint(format!("prod_b_{tag}"), vec![(p, 1.0), (x, -w_min)], Sense::Ge, 0.0);
                m.add_constraint(format!("prod_c_{tag}"), vec![(p, 1.0), (wt, -1.0), (x, -w_min)], Sense::Le, -w_min);
                m.add_constraint(format!("prod_d_{tag}"), vec![(p, 1.0), (wt, -1.0), (x, -w_max)], Sense::Ge, -w_max);
                need[t].push((p, a.arc.alpha));
            }
        }
    }

    // Battery: b_t = min(max(bu_t, 0), top), split into deficit and overflow.
    let start_battery = if options.discretized {
        energy_to_levels(instance.start.battery, levels, battery_cap).clamp(0, levels as i64) as f64
    } else {
        instance.start.battery
    };
    let mut b = vec![0; horizon + 1];
    b[1] = m.add_var("b_1", VarKind::Continuous, start_battery, start_battery);
    let mut deficit = vec![0; horizon + 1];
    for t in 2..=horizon {
        b[t] = m.add_var(format!("b_{t}"), VarKind::Continuous, 0.0, battery_top);
        let bu = m.add_var(format!("bu_{t}"), VarKind::Continuous, -need_max, battery_top + supply_max);
        let mut flow = vec![(bu, 1.0), (b[t - 1], -1.0)];
        flow.extend(gain[t - 1].iter().map(|&(x, s)| (x, -s)));
        flow.extend(need[t - 1].iter().copied());
        m.add_constraint(format!("battery_flow_{t}"), flow, Sense::Eq, 0.0);

        let d = m.add_var(format!("Def_{t}"), VarKind::Continuous, 0.0, need_max);
        let zd = m.add_var(format!("Zd_{t}"), VarKind::Binary, 0.0, 1.0);
        let big_d = battery_top + supply_max;
        m.add_constraint(format!("deficit_lb_{t}"), vec![(d, 1.0), (bu, 1.0)], Sense::Ge, 0.0);
        m.add_constraint(format!("deficit_ub_{t}"), vec![(d, 1.0), (bu, 1.0), (zd, big_d)], Sense::Le, big_d);
        m.add_constraint(format!("deficit_on_{t}"), vec![(d, 1.0), (zd, -need_max)], Sense::Le, 0.0);

        let o = m.add_var(format!("Ovf_{t}"), VarKind::Continuous, 0.0, supply_max);
        let zx = m.add_var(format!("Zx_{t}"), VarKind::Binary, 0.0, 1.0);
        let big_o = battery_top + need_max;
        m.add_constraint(format!("overflow_lb_{t}"), vec![(o, 1.0), (bu, -1.0)], Sense::Ge, -battery_top);
        m.add_constraint(
            format!("overflow_ub_{t}"),
            vec![(o, 1.0), (bu, -1.0), (zx, big_o)],
            Sense::Le,
            big_o - battery_top,
        );
        m.add_constraint(format!("overflow_on_{t}"), vec![(o, 1.0), (zx, -supply_max)], Sense::Le, 0.0);
        m.add_constraint(
            format!("battery_clip_{t}"),
            vec![(b[t], 1.0), (bu, -1.0), (d, -1.0), (o, 1.0)],
            Sense::Eq,
            0.0,
        );
        deficit[t] = d;
    }
    let mut eb = vec![0; horizon];
    let mut ef = vec![0; horizon];
    for t in 1..horizon {
        // Battery energy drawn and fuel burnt during the transit leaving period t, kWh.
        eb[t] = m.add_var(format!("Eb_{t}"), VarKind::Continuous, 0.0, battery_cap);
        let zb = m.add_var(format!("Zb_{t}"), VarKind::Binary, 0.0, 1.0);
        let drop = vec![(eb[t], 1.0), (b[t], -unit), (b[t + 1], unit)];
        m.add_constraint(format!("drawn_lb_{t}"), drop.clone(), Sense::Ge, 0.0);
        let mut ub = drop;
        ub.push((zb, battery_cap));
        m.add_constraint(format!("drawn_ub_{t}"), ub, Sense::Le, battery_cap);
        m.add_constraint(format!("drawn_on_{t}"), vec![(eb[t], 1.0), (zb, -battery_cap)], Sense::Le, 0.0);
        ef[t] = m.add_var(format!("Ef_{t}"), VarKind::Continuous, 0.0, f64::INFINITY);
        m.add_constraint(format!("fuel_{t}"), vec![(ef[t], lambda), (deficit[t + 1], -unit)], Sense::Eq, 0.0);
    }

    // Travel objective.
    for t in 1..horizon {
        match costs.ers_cost_basis {
            ErsCostBasis::Consumed => {
                // Propulsion from ERS and battery is everything except the deficit.
                for &(x, a) in &need[t] {
                    m.add_objective(x, costs.electricity * unit * a);
                }
                m.add_objective(ef[t], costs.fuel - costs.electricity * lambda);
            }
            ErsCostBasis::Supplied => {
                for &(x, s) in &gain[t] {
                    m.add_objective(x, costs.electricity * unit * s);
                }
                m.add_objective(eb[t], costs.electricity);
                m.add_objective(ef[t], costs.fuel);
            }
        }
    }

    // Expected shortage and stock per retailer from cumulative demand.
    let mut loss_tables = Vec::with_capacity(instance.retailer_count());
    let mut comp_tables = Vec::with_capacity(instance.retailer_count());
    let mut linearization_gap = 0.0;
    for (c, r) in instance.retailers.iter().enumerate() {
        let node = r.node;
        let k = r.capacity as f64;
        let s0 = r.initial_inventory as f64;
        let cumulative = DemandDistribution::cumulative(instance.demand_series(c));
        let losses: Vec<PiecewiseLinearLoss> =
            cumulative.iter().map(|d| piecewise_linearize(d, options.segments, LossKind::Loss)).collect();
        let comps: Vec<PiecewiseLinearLoss> =
            cumulative.iter().map(|d| piecewise_linearize(d, options.segments, LossKind::Complementary)).collect();
        let mut ineg = vec![0; horizon + 1];
        let mut ipos = vec![0; horizon + 1];
        let mut ecap = vec![0; horizon + 1];
        // Upper bound of the effective cumulative stock x_t; x_t >= 0 always.
        let mut x_hi = vec![s0; horizon + 1];
        for t in 1..=horizon {
            x_hi[t] = s0 + t as f64 * k + cumulative[..t - 1].iter().map(|d| d.mean()).sum::<f64>();
            ineg[t] = m.add_var(format!("Ineg_{node}_{t}"), VarKind::Continuous, 0.0, f64::INFINITY);
            ipos[t] = m.add_var(format!("Ipos_{node}_{t}"), VarKind::Continuous, 0.0, f64::INFINITY);
            ecap[t] = m.add_var(format!("Ecap_{node}_{t}"), VarKind::Continuous, 0.0, f64::INFINITY);

            // Ecap_t = max(Ipos_{t-1} + Q_t - k, 0), Ipos_0 being the initial stock.
            let ze = m.add_var(format!("Ze_{node}_{t}"), VarKind::Binary, 0.0, 1.0);
            let mut excess = vec![(ecap[t], 1.0), (q[c][t], -1.0)];
            let mut offset = -k;
            if t == 1 {
                offset += s0;
            } else {
                excess.push((ipos[t - 1], -1.0));
            }
            let big_on = if t == 1 { s0 } else { x_hi[t - 1] };
            m.add_constraint(format!("spill_lb_{node}_{t}"), excess.clone(), Sense::Ge, offset);
            let mut ub = excess;
            ub.push((ze, k));
            m.add_constraint(format!("spill_ub_{node}_{t}"), ub, Sense::Le, offset + k);
            m.add_constraint(format!("spill_on_{node}_{t}"), vec![(ecap[t], 1.0), (ze, -big_on)], Sense::Le, 0.0);

            // x_t = s0 + sum Q_{<=t} + sum Ineg_{<t} - sum Ecap_{<=t}, as (terms, constant).
            let mut x_terms = Vec::new();
            for kk in 1..=t {
                x_terms.push((q[c][kk], 1.0));
                x_terms.push((ecap[kk], -1.0));
                if kk < t {
                    x_terms.push((ineg[kk], 1.0));
                }
            }
            let line_terms = |target: usize, slope: f64| -> Vec<(usize, f64)> {
                let mut terms = vec![(target, 1.0)];
                terms.extend(x_terms.iter().map(|&(x, a)| (x, -slope * a)));
                terms
            };

            let loss = &losses[t - 1];
            linearization_gap += costs.penalty * loss.max_gap;
            if loss.lines.len() == 1 {
                let line = loss.lines[0];
                m.add_constraint(
                    format!("shortage_{node}_{t}_0"),
                    line_terms(ineg[t], line.slope),
                    Sense::Eq,
                    line.intercept + line.slope * s0,
                );
            } else {
                let mut select = Vec::with_capacity(loss.lines.len());
                for (j, line) in loss.lines.iter().enumerate() {
                    let rhs = line.intercept + line.slope * s0;
                    let gap_at = |x: f64| loss.value(x) - line.at(x);
                    let big = gap_at(0.0).max(gap_at(x_hi[t])).max(0.0);
                    m.add_constraint(
                        format!("shortage_{node}_{t}_{j}"),
                        line_terms(ineg[t], line.slope),
                        Sense::Ge,
                        rhs,
                    );
                    let zs = m.add_var(format!("Zs_{node}_{t}_{j}"), VarKind::Binary, 0.0, 1.0);
                    let mut tight = line_terms(ineg[t], line.slope);
                    tight.push((zs, big));
                    m.add_constraint(format!("shortage_pick_{node}_{t}_{j}"), tight, Sense::Le, rhs + big);
                    select.push((zs, 1.0));
                }
                m.add_constraint(format!("shortage_one_{node}_{t}"), select, Sense::Eq, 1.0);
            }
            for (j, line) in comps[t - 1].lines.iter().enumerate() {
                m.add_constraint(
                    format!("stock_{node}_{t}_{j}"),
                    line_terms(ipos[t], line.slope),
                    Sense::Ge,
                    line.intercept + line.slope * s0,
                );
            }
            m.add_objective(ineg[t], costs.penalty);
        }
        loss_tables.push(losses);
        comp_tables.push(comps);
    }

    m.finish();
    debug_assert!(m.check().is_ok());
    Ok(ErrpModel { model: m, options, loss: loss_tables, complementary: comp_tables, linearization_gap })
}

impl ErrpModel {
    /// Variable values that encode `plan`, with every auxiliary set to its intended value.
    pub fn assignment(&self, instance: &Instance, plan: &Plan) -> Result<Vec<f64>, String> {
        plan.validate(instance).map_err(|e| e.to_string())?;
        let mut values: HashMap<String, f64> = HashMap::new();
        let horizon = instance.horizon;
        let vehicle = &instance.vehicle;
        let levels = self.options.battery_levels;
        let battery_cap = vehicle.battery_capacity;
        let discretized = self.options.discretized;
        let unit = if discretized { battery_cap / levels as f64 } else { 1.0 };
        let top = if discretized { levels as f64 } else { battery_cap };

        for t in 1..=horizon {
            values.insert(format!("V_{}_{t}", plan.route[t - 1]), 1.0);
            values.insert(format!("L_{t}"), plan.loads[t - 1] as f64);
        }
        for (c, r) in instance.retailers.iter().enumerate() {
            for t in 1..=horizon {
                values.insert(format!("Q_{}_{t}", r.node), plan.deliveries[c][t - 1] as f64);
            }
        }
        let cargo = plan.cargo_profile(instance.start.load);
        let mut battery = if discretized {
            energy_to_levels(instance.start.battery, levels, battery_cap).clamp(0, levels as i64) as f64
        } else {
            instance.start.battery
        };
        values.insert("b_1".into(), battery);
        for t in 1..=horizon {
            let w = vehicle.mass(cargo[t - 1] as u32);
            values.insert(format!("W_{t}"), w);
            if t == horizon {
                break;
            }
            let arc = instance.network.arc(plan.route[t - 1], plan.route[t]).expect("validated route");
            values.insert(arc_name("T", arc, t), 1.0);
            let (need, gain) = if discretized {
                values.insert(format!("Y_{}_{t}", cargo[t - 1]), 1.0);
                let eps = discretize_energy(arc, w, levels, battery_cap) as f64;
                if arc.from != arc.to && eps != 0.0 {
                    values.insert(format!("Z_{}_{}_{}_{t}", arc.from, arc.to, cargo[t - 1]), 1.0);
                }
                (eps, energy_to_levels(arc.supplied_energy, levels, battery_cap) as f64)
            } else {
                if arc.from != arc.to && arc.alpha != 0.0 {
                    values.insert(arc_name("P", arc, t), w);
                }
                (if arc.from == arc.to { 0.0 } else { required_battery_energy(arc, w) }, arc.supplied_energy)
            };
            let bu = battery + gain - need;
            let next = bu.clamp(0.0, top);
            values.insert(format!("bu_{}", t + 1), bu);
            values.insert(format!("b_{}", t + 1), next);
            let d = (-bu).max(0.0);
            let o = (bu - top).max(0.0);
            values.insert(format!("Def_{}", t + 1), d);
            values.insert(format!("Ovf_{}", t + 1), o);
            values.insert(format!("Zd_{}", t + 1), if bu < 0.0 { 1.0 } else { 0.0 });
            values.insert(format!("Zx_{}", t + 1), if bu > top { 1.0 } else { 0.0 });
            let drawn = unit * (battery - next);
            values.insert(format!("Eb_{t}"), drawn.max(0.0));
            values.insert(format!("Zb_{t}"), if drawn > 0.0 { 1.0 } else { 0.0 });
            values.insert(format!("Ef_{t}"), unit * d / vehicle.efficiency);
            battery = next;
        }

        for (c, r) in instance.retailers.iter().enumerate() {
            let node = r.node;
            let k = r.capacity as f64;
            let mut x = r.initial_inventory as f64;
            let mut ipos_prev = x;
            for t in 1..=horizon {
                let qt = plan.deliveries[c][t - 1] as f64;
                let e = (ipos_prev + qt - k).max(0.0);
                x += qt - e;
                let loss = &self.loss[c][t - 1];
                let short = loss.value(x);
                let stock = self.complementary[c][t - 1].value(x);
                values.insert(format!("Ecap_{node}_{t}"), e);
                values.insert(format!("Ze_{node}_{t}"), if e > 0.0 { 1.0 } else { 0.0 });
                values.insert(format!("Ineg_{node}_{t}"), short);
                values.insert(format!("Ipos_{node}_{t}"), stock);
                if loss.lines.len() > 1 {
                    values.insert(format!("Zs_{node}_{t}_{}", loss.active_line(x)), 1.0);
                }
                x += short;
                ipos_prev = stock;
            }
        }

        let mut out = vec![0.0; self.model.var_count()];
        for (name, value) in values {
            let id = self.model.var(&name).ok_or_else(|| format!("no variable {name}"))?;
            out[id] = value;
        }
        Ok(out)
    }
}
