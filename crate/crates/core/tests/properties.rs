use errp::demand::{piecewise_linearize, DemandDistribution, LossKind};
use errp::energy::{
    arc_coefficients, discretize_energy, mechanical_power, required_battery_energy, ArcPhysicalParams, JOULES_PER_KWH,
};
use errp::evaluate::{exact_plan_cost, percentage_error, GAP_TOLERANCE};
use errp::instance::{generate_instance, ArcSpec, DemandPattern, GeneratorConfig, Topology, TopologyEdge};
use errp::milp::{
    build_model, decode_plan, format_solution, parse_solution, random_plan, MilpModel, ModelOptions, SolveStatus,
};
use errp::sdp::{enumerate_actions, immediate_cost, solve_backward, transitions, SdpConfig, SdpState};
use errp::{BatteryModel, Instance};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LEVELS: u32 = 10;

/// Small connected two-way network with 1 or 2 retailers reachable in time.
fn tiny(seed: u64, deterministic: bool) -> Instance {
    (0..)
        .find_map(|k| tiny_attempt(seed.wrapping_add(k), deterministic))
        .expect("some seed yields a reachable instance")
}

fn tiny_attempt(seed: u64, deterministic: bool) -> Option<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = rng.gen_range(3..=5);
    let mut edges: Vec<TopologyEdge> =
        (1..nodes).map(|j| TopologyEdge { from: rng.gen_range(0..j), to: j, ers: rng.gen_bool(0.4) }).collect();
    if rng.gen_bool(0.5) {
        let (a, b) = (rng.gen_range(0..nodes), rng.gen_range(0..nodes));
        if a != b && !edges.iter().any(|e| (e.from, e.to) == (a, b) || (e.from, e.to) == (b, a)) {
            edges.push(TopologyEdge { from: a, to: b, ers: true });
        }
    }
    let horizon = rng.gen_range(2..=4);
    let count = rng.gen_range(1..=2).min(nodes - 1);
    let mut retailers = Vec::new();
    while retailers.len() < count {
        let n = rng.gen_range(1..nodes);
        if !retailers.contains(&n) {
            retailers.push(n);
        }
    }
    let means = (0..count).map(|_| (0..horizon).map(|_| rng.gen_range(0.3..2.0)).collect()).collect();
    let config = GeneratorConfig {
        topology: Topology::Custom { node_count: nodes, edges, bidirectional: true },
        retailers,
        retailer_count: count,
        demand_pattern: DemandPattern::Custom(means),
        deterministic_demand: deterministic,
        penalty: rng.gen_range(2.0..20.0),
        initial_inventory: vec![rng.gen_range(0..=2)],
        horizon,
        retailer_capacity: 3,
        vehicle_capacity: 3,
        truncate_at: 3,
        battery_capacity: 20.0,
        unladen_weight: 1_000.0,
        weight_per_unit: 500.0,
        alpha_range: (0.001, 0.004),
        beta_range: (0.5, 3.0),
        fuel_cost: rng.gen_range(1.0..5.0),
        ..GeneratorConfig::default()
    };
    generate_instance(&config, seed).ok()
}

fn poisson() -> impl Strategy<Value = DemandDistribution> {
    (0.1f64..8.0, 2u32..14).prop_map(|(mean, cap)| DemandDistribution::truncated_poisson(mean, cap).unwrap())
}

fn physical() -> impl Strategy<Value = ArcPhysicalParams> {
    (100.0f64..30_000.0, -0.06f64..0.06, 5.0f64..30.0, 0.4f64..1.0, 4.0f64..10.0, 0.004f64..0.015, 0.5f64..1.0)
        .prop_map(|(distance, slope, speed, drag_coeff, frontal_area, rolling_resistance, efficiency)| {
            ArcPhysicalParams {
                distance,
                slope,
                speed,
                drag_coeff,
                frontal_area,
                air_density: 1.2041,
                rolling_resistance,
                gravity: 9.81,
                efficiency,
            }
        })
}

fn states_equal_but(a: &SdpState, b: &SdpState) -> bool {
    a.position == b.position && a.vehicle_inventory == b.vehicle_inventory
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn loss_identity_holds(d in poisson(), q in -3.0f64..20.0) {
        prop_assert!((d.loss(q) - d.complementary_loss(q) - (d.mean() - q)).abs() <= 1e-9);
    }

    #[test]
    fn losses_are_convex_on_the_integer_grid(d in poisson()) {
        for q in -2..(d.max_value() as i32 + 3) {
            let q = q as f64;
            for f in [DemandDistribution::loss, DemandDistribution::complementary_loss] {
                let second = f(&d, q - 1.0) - 2.0 * f(&d, q) + f(&d, q + 1.0);
                prop_assert!(second >= -1e-12);
            }
        }
    }

    #[test]
    fn linearization_never_exceeds_the_loss(d in poisson(), segments in 1usize..12) {
        let top = d.max_value() as f64 + 3.0;
        for kind in [LossKind::Loss, LossKind::Complementary] {
            let pw = piecewise_linearize(&d, segments, kind);
            for i in 0..1000 {
                let q = -2.0 + (top + 2.0) * i as f64 / 999.0;
                let exact = match kind {
                    LossKind::Loss => d.loss(q),
                    LossKind::Complementary => d.complementary_loss(q),
                };
                prop_assert!(pw.value(q) <= exact + 1e-9, "{kind:?} at {q}: {} > {exact}", pw.value(q));
            }
        }
    }

    #[test]
    fn refinement_does_not_widen_the_gap(d in poisson()) {
        let gaps: Vec<f64> = [3, 5, 10].iter().map(|&s| piecewise_linearize(&d, s, LossKind::Loss).max_gap).collect();
        prop_assert!(gaps[1] <= gaps[0] + 1e-12 && gaps[2] <= gaps[1] + 1e-12, "{gaps:?}");
    }

    #[test]
    fn energy_paths_agree(p in physical(), mass in 2_000.0f64..44_000.0) {
        let c = arc_coefficients(&p);
        let via_power = p.efficiency * mechanical_power(0.0, p.speed, mass, &p) * (p.distance / p.speed) / JOULES_PER_KWH;
        prop_assert!((c.alpha * mass + c.beta - via_power).abs() < 1e-9);
    }

    #[test]
    fn energy_grows_with_mass(alpha in 0.0f64..0.01, beta in 0.0f64..10.0, m in 0.0f64..40_000.0, extra in 0.0f64..10_000.0) {
        let arc = ArcSpec { from: 0, to: 1, alpha, beta, supplied_energy: 0.0 };
        prop_assert!(required_battery_energy(&arc, m + extra) >= required_battery_energy(&arc, m));
    }

    #[test]
    fn discretization_is_within_half_a_level(alpha in 0.0f64..0.01, beta in 0.0f64..10.0, m in 0.0f64..40_000.0, levels in 1u32..50) {
        let arc = ArcSpec { from: 0, to: 1, alpha, beta, supplied_energy: 0.0 };
        let exact = required_battery_energy(&arc, m) * levels as f64 / 150.0;
        prop_assert!((discretize_energy(&arc, m, levels, 150.0) as f64 - exact).abs() <= 0.5 + 1e-9);
    }

    #[test]
    fn gaps_reject_beating_the_optimum(opt in 1.0f64..1e4, delta in 1e-3f64..1e3) {
        prop_assert!(percentage_error(opt - delta, opt).is_err());
        prop_assert!(percentage_error(opt + delta, opt).unwrap() > 0.0);
        prop_assert!(percentage_error(opt * (1.0 - GAP_TOLERANCE / 10.0), opt).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn generated_retailers_are_reachable(seed in any::<u64>(), topology in 0usize..4) {
        let topology = [Topology::T1, Topology::T2, Topology::T3, Topology::T4][topology].clone();
        let config = GeneratorConfig { topology, horizon: 6, ..GeneratorConfig::default() };
        let inst = generate_instance(&config, seed).unwrap();
        prop_assert!(inst.unreachable_retailers().is_empty());
    }

    #[test]
    fn bellman_equation_holds_at_every_state(seed in any::<u64>()) {
        let inst = tiny(seed, false);
        let policy = solve_backward(&inst, &SdpConfig { battery_levels: LEVELS, ..SdpConfig::default() }).unwrap();
        for t in 1..=inst.horizon {
            for s in policy.reachable_states(t) {
                let best = enumerate_actions(&inst, t, &s)
                    .iter()
                    .map(|a| {
                        let future: f64 = transitions(&inst, LEVELS, t, &s, a)
                            .iter()
                            .map(|(next, p)| p * policy.value(t + 1, next).expect("successor is stored"))
                            .sum();
                        immediate_cost(&inst, LEVELS, t, &s, a) + future
                    })
                    .fold(f64::INFINITY, f64::min);
                let v = policy.value(t, &s).unwrap();
                prop_assert!((v - best).abs() <= 1e-9 * v.abs().max(1.0), "t {t} {s:?}: {v} vs {best}");
            }
        }
    }

    #[test]
    fn sdp_optimum_bounds_every_static_plan(seed in any::<u64>()) {
        let inst = tiny(seed, false);
        let v1 = solve_backward(&inst, &SdpConfig { battery_levels: LEVELS, ..SdpConfig::default() }).unwrap().expected_cost();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..20 {
            let plan = random_plan(&inst, &mut rng);
            let cost = exact_plan_cost(&plan, &inst, BatteryModel::Discretized { levels: LEVELS }).unwrap().expected_total_cost;
            prop_assert!(v1 <= cost + 1e-9, "V1 {v1} above plan cost {cost}");
        }
    }

    #[test]
    fn value_is_monotone_in_stock_and_charge(seed in any::<u64>()) {
        let inst = tiny(seed, false);
        let policy = solve_backward(&inst, &SdpConfig { battery_levels: LEVELS, ..SdpConfig::default() }).unwrap();
        let battery_matters = inst.costs.fuel >= inst.costs.electricity;
        for t in 1..=inst.horizon {
            let states = policy.reachable_states(t);
            for a in &states {
                let va = policy.value(t, a).unwrap();
                for b in &states {
                    if !states_equal_but(a, b) {
                        continue;
                    }
                    let vb = policy.value(t, b).unwrap();
                    let more_stock = a.battery_level == b.battery_level
                        && a.retailer_inventory.iter().zip(&b.retailer_inventory).all(|(x, y)| x >= y);
                    let more_charge = battery_matters
                        && a.retailer_inventory == b.retailer_inventory
                        && a.battery_level >= b.battery_level;
                    if more_stock || more_charge {
                        prop_assert!(va <= vb + 1e-9, "t {t}: {a:?} = {va} vs {b:?} = {vb}");
                    }
                }
            }
        }
    }

    #[test]
    fn instance_survives_json_round_trip(seed in any::<u64>()) {
        let inst = tiny(seed, seed % 2 == 0);
        prop_assert_eq!(Instance::from_json(&inst.to_json()).unwrap(), inst);
    }

    #[test]
    fn random_plans_follow_roads(seed in any::<u64>()) {
        let inst = tiny(seed, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = random_plan(&inst, &mut rng);
        prop_assert!(plan.validate(&inst).is_ok());
        for w in plan.route.windows(2) {
            prop_assert!(inst.network.is_adjacent(w[0], w[1]));
        }
    }

    #[test]
    fn plan_survives_solution_round_trip(seed in any::<u64>()) {
        let inst = tiny(seed, false);
        let built = build_model(&inst, ModelOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = random_plan(&inst, &mut rng);
        let x = built.assignment(&inst, &plan).unwrap();
        prop_assert!(built.model.violations(&x, 1e-6).is_empty());
        let text = format_solution(SolveStatus::Optimal, Some(built.model.objective_value(&x)), &built.model, &x);
        let decoded = decode_plan(&parse_solution(&text, &built.model).unwrap(), &built.model, &inst).unwrap();
        prop_assert_eq!(decoded.route, plan.route);
        prop_assert_eq!(decoded.loads, plan.loads);
        prop_assert_eq!(decoded.deliveries, plan.deliveries);
    }

    #[test]
    fn lp_text_round_trips(seed in any::<u64>(), discretized in any::<bool>()) {
        let inst = tiny(seed, false);
        let built = build_model(&inst, ModelOptions { discretized, battery_levels: LEVELS, ..ModelOptions::default() }).unwrap();
        let text = built.model.to_lp_string();
        let parsed = MilpModel::parse_lp(&text).unwrap();
        prop_assert!(parsed.equivalent(&built.model));
        prop_assert!(MilpModel::parse_lp(&parsed.to_lp_string()).unwrap().equivalent(&parsed));
    }

    #[test]
    fn milp_objective_is_exact_for_certain_demand(seed in any::<u64>(), discretized in any::<bool>()) {
        let inst = tiny(seed, true);
        let battery = if discretized { BatteryModel::Discretized { levels: LEVELS } } else { BatteryModel::Continuous };
        let built = build_model(&inst, ModelOptions { discretized, battery_levels: LEVELS, ..ModelOptions::default() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5 {
            let plan = random_plan(&inst, &mut rng);
            let x = built.assignment(&inst, &plan).unwrap();
            let exact = exact_plan_cost(&plan, &inst, battery).unwrap().expected_total_cost;
            let obj = built.model.objective_value(&x);
            prop_assert!((obj - exact).abs() <= 1e-6 * exact.abs().max(1.0), "objective {obj} vs exact {exact}");
        }
    }

    #[test]
    fn breakdown_adds_up(seed in any::<u64>()) {
        let inst = tiny(seed, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = random_plan(&inst, &mut rng);
        let r = exact_plan_cost(&plan, &inst, BatteryModel::Continuous).unwrap();
        let b = &r.breakdown;
        prop_assert!((r.expected_total_cost - (b.ers_energy + b.battery + b.fuel + b.penalty)).abs() <= 1e-9);
        let per_period: f64 = r.periods.iter().map(|p| p.travel_cost + p.expected_penalty).sum();
        prop_assert!((per_period - r.expected_total_cost).abs() <= 1e-9 * r.expected_total_cost.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    /// Linearized losses under-approximate, so the model should never charge a
    /// plan more than its exact cost. The cumulative-demand shortage terms break
    /// this for stochastic demand; kept to document the gap.
    #[test]
    #[ignore = "does not hold: the MILP's lost-sales terms can overestimate the exact cost"]
    fn milp_objective_bounds_exact_cost_from_below(seed in any::<u64>()) {
        let inst = tiny(seed, false);
        let built = build_model(&inst, ModelOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = random_plan(&inst, &mut rng);
        let x = built.assignment(&inst, &plan).unwrap();
        let exact = exact_plan_cost(&plan, &inst, BatteryModel::Continuous).unwrap().expected_total_cost;
        prop_assert!(built.model.objective_value(&x) <= exact + 1e-6);
    }
}
