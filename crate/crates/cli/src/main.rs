use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use errp::bench::{fuel_sensitivity, run_benchmark, BenchConfig};
use errp::evaluate::{exact_plan_cost, monte_carlo_plan_cost, EvaluationMethod, EvaluationReport};
use errp::instance::{generate_instance, GeneratorConfig};
use errp::milp::{
    build_model, decode_plan, enumerate_optimal_plan, read_solution, EnumerationOptions, MilpModel, ModelOptions,
};
use errp::sdp::{solve_backward, SdpConfig};
use errp::{load_instance, BatteryModel, Instance, Plan};

#[derive(Parser)]
#[command(
    name = "errp",
    version,
    about = "Plan deliveries and energy use of a hybrid truck on an electric road network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance exactly by backward recursion.
    SolveSdp(SolveSdpArgs),
    /// Write the static-plan MILP in LP format.
    BuildMilp(BuildMilpArgs),
    /// Turn a solver's solution file into a plan.
    DecodePlan(DecodePlanArgs),
    /// Find the best static plan by exhaustive search.
    SolveEnum(SolveEnumArgs),
    /// Compute the expected cost of a plan.
    Evaluate(EvaluateArgs),
    /// Generate a random instance on one of the benchmark topologies.
    Generate(GenerateArgs),
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct SolveSdpArgs {
    #[arg(short, long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 20)]
    levels: u32,
    /// Refuse state spaces larger than this.
    #[arg(long, default_value_t = SdpConfig::default().max_states)]
    max_states: usize,
    /// Write a JSON summary (and the policy with --policy) here.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Include every reachable state and its decision in the JSON output.
    #[arg(long)]
    policy: bool,
}

#[derive(Args)]
struct ModelArgs {
    /// Linear pieces per loss function.
    #[arg(long, default_value_t = 10)]
    segments: usize,
    /// Use the battery-level formulation instead of kWh.
    #[arg(long)]
    discretized: bool,
    #[arg(long, default_value_t = 20)]
    levels: u32,
}

impl ModelArgs {
    fn options(&self) -> ModelOptions {
        ModelOptions { segments: self.segments, discretized: self.discretized, battery_levels: self.levels }
    }
}

#[derive(Args)]
struct BuildMilpArgs {
    #[arg(short, long)]
    instance: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct DecodePlanArgs {
    #[arg(short, long)]
    instance: PathBuf,
    /// The LP file the solution belongs to.
    #[arg(long)]
    lp: PathBuf,
    #[arg(short, long)]
    solution: PathBuf,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveEnumArgs {
    #[arg(short, long)]
    instance: PathBuf,
    /// Cost transits with this many battery levels instead of kWh.
    #[arg(long)]
    levels: Option<u32>,
    #[arg(long, default_value_t = EnumerationOptions::default().node_budget)]
    node_budget: u64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(short, long)]
    instance: PathBuf,
    #[arg(short, long)]
    plan: PathBuf,
    /// Estimate by simulation with this many samples.
    #[arg(long)]
    monte_carlo: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Battery levels for the discretized model; kWh when omitted.
    #[arg(long)]
    levels: Option<u32>,
    /// Print the per-period table as well.
    #[arg(long)]
    table: bool,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator settings as JSON; defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run a factorial gap study.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Re-plan one instance over a grid of fuel costs, penalties and initial stocks.
    Sensitivity(SensitivityArgs),
}

#[derive(Args)]
struct SensitivityArgs {
    #[arg(short, long)]
    instance: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    fuel_costs: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    penalties: Vec<f64>,
    /// Initial stocks, one `a,b,...` list per occurrence; the instance's own when omitted.
    #[arg(long = "inventory")]
    inventories: Vec<String>,
    #[arg(long)]
    levels: Option<u32>,
    #[arg(long, default_value_t = EnumerationOptions::default().node_budget)]
    node_budget: u64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn battery(levels: Option<u32>) -> BatteryModel {
    levels.map_or(BatteryModel::Continuous, |levels| BatteryModel::Discretized { levels })
}

fn load(path: &Path) -> Result<Instance> {
    load_instance(path).with_context(|| format!("loading instance {}", path.display()))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn solve_sdp(args: SolveSdpArgs) -> Result<()> {
    let instance = load(&args.instance)?;
    let policy = solve_backward(&instance, &SdpConfig { battery_levels: args.levels, max_states: args.max_states })?;
    println!("expected cost: {:.6}", policy.expected_cost());
    println!("reachable states: {}", policy.reachable_count());
    let trajectory = if instance.is_deterministic() {
        let demands: Vec<Vec<u32>> = (0..instance.retailer_count())
            .map(|c| instance.demand_series(c).iter().map(|d| d.max_value()).collect())
            .collect();
        let trajectory = policy.replay(&instance, &demands)?;
        println!("\n{trajectory}");
        Some(trajectory)
    } else {
        None
    };
    if let Some(out) = &args.out {
        let mut summary = serde_json::json!({
            "instance": instance.name,
            "battery_levels": policy.levels(),
            "expected_cost": policy.expected_cost(),
            "reachable_states": policy.reachable_count(),
            "trajectory": trajectory,
        });
        if args.policy {
            let periods: Vec<_> = (1..=policy.horizon())
                .map(|t| {
                    policy
                        .reachable_states(t)
                        .into_iter()
                        .map(|s| {
                            serde_json::json!({
                                "state": s,
                                "value": policy.value(t, &s),
                                "action": policy.action(t, &s),
                            })
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            summary["policy"] = serde_json::json!(periods);
        }
        fs::write(out, serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(())
}

fn build_milp(args: BuildMilpArgs) -> Result<()> {
    let instance = load(&args.instance)?;
    let built = build_model(&instance, args.model.options())?;
    built.model.write_lp(&args.out)?;
    let binaries = built.model.variables.iter().filter(|v| v.kind == errp::milp::VarKind::Binary).count();
    println!(
        "{} variables ({binaries} binary), {} constraints; linearization gap bound {:.6}",
        built.model.var_count(),
        built.model.constraints.len(),
        built.linearization_gap
    );
    Ok(())
}

fn decode(args: DecodePlanArgs) -> Result<()> {
    let instance = load(&args.instance)?;
    let model = MilpModel::read_lp(&args.lp).with_context(|| format!("reading {}", args.lp.display()))?;
    let solution = read_solution(&args.solution, &model)?;
    let plan = decode_plan(&solution, &model, &instance)?;
    write_or_print(args.out.as_deref(), &serde_json::to_string_pretty(&plan)?)
}

fn solve_enum(args: SolveEnumArgs) -> Result<()> {
    let instance = load(&args.instance)?;
    let options = EnumerationOptions { battery: battery(args.levels), node_budget: args.node_budget };
    let result = enumerate_optimal_plan(&instance, &options)?;
    eprintln!("best static plan: expected cost {:.6} ({} nodes explored)", result.cost, result.explored);
    write_or_print(args.out.as_deref(), &serde_json::to_string_pretty(&result.plan)?)
}

fn render_report(report: &EvaluationReport) -> String {
    let mut out = format!(
        "{:>6}{:>8}{:>8}{:>10}{:>10}{:>10}{:>8}{:>12}{:>10}{:>10}\n",
        "Period", "Node", "Load", "Delivered", "Battery", "Weight", "Cargo", "Required", "Travel", "Penalty"
    );
    for p in &report.periods {
        let _ = writeln!(
            out,
            "{:>6}{:>8}{:>8}{:>10}{:>10.3}{:>10.1}{:>8}{:>12.3}{:>10.3}{:>10.3}",
            p.period,
            p.position,
            p.load_up,
            p.delivered,
            p.battery,
            p.weight,
            p.cargo,
            p.required_energy,
            p.travel_cost,
            p.expected_penalty
        );
    }
    out
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let instance = load(&args.instance)?;
    let text = fs::read_to_string(&args.plan).with_context(|| format!("reading {}", args.plan.display()))?;
    let plan: Plan = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.plan.display()))?;
    let model = battery(args.levels);
    let report = match args.monte_carlo {
        Some(n) => monte_carlo_plan_cost(&plan, &instance, model, n, args.seed)?,
        None => exact_plan_cost(&plan, &instance, model)?,
    };
    let b = &report.breakdown;
    println!("expected total cost: {:.6}", report.expected_total_cost);
    println!(
        "  ERS energy {:.6}, battery {:.6}, fuel {:.6}, penalty {:.6}",
        b.ers_energy, b.battery, b.fuel, b.penalty
    );
    if let EvaluationMethod::MonteCarlo { samples, std_error, ci_halfwidth, .. } = report.method {
        println!("  {samples} samples, standard error {std_error:.6}, 99% half-width {ci_halfwidth:.6}");
    }
    if args.table {
        println!("\n{}", render_report(&report));
    }
    if let Some(out) = &args.out {
        fs::write(out, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let config: GeneratorConfig = match &args.config {
        Some(path) => {
            serde_json::from_str(&fs::read_to_string(path)?).with_context(|| format!("parsing {}", path.display()))?
        }
        None => GeneratorConfig::default(),
    };
    let instance = generate_instance(&config, args.seed)?;
    instance.save(&args.out)?;
    println!("wrote {} to {}", instance.name, args.out.display());
    Ok(())
}

fn bench_run(config: &Path, out: &Path) -> Result<bool> {
    let config = BenchConfig::load(config)?;
    fs::create_dir_all(out)?;
    let report = run_benchmark(&config)?;
    fs::write(out.join("results.json"), serde_json::to_string_pretty(&report)?)?;
    fs::write(out.join("cells.csv"), report.render_csv())?;
    let pivot = report.render_pivot();
    fs::write(out.join("summary.txt"), &pivot)?;
    println!("{pivot}");
    let failed: Vec<_> = report.cells.iter().filter(|c| c.error.is_some()).collect();
    for c in &failed {
        eprintln!("cell {}: {}", c.cell.index, c.error.as_deref().unwrap_or_default());
    }
    let inconsistent = report.consistency_failures();
    if inconsistent > 0 {
        eprintln!("{inconsistent} cells beat the exact optimum");
    }
    Ok(inconsistent == 0)
}

fn parse_inventory(text: &str) -> Result<Vec<u32>> {
    text.split(',').map(|v| v.trim().parse::<u32>().with_context(|| format!("bad inventory '{text}'"))).collect()
}

fn bench_sensitivity(args: SensitivityArgs) -> Result<()> {
    let instance = load(&args.instance)?;
    let inventories = if args.inventories.is_empty() {
        vec![instance.retailers.iter().map(|r| r.initial_inventory).collect()]
    } else {
        args.inventories.iter().map(|s| parse_inventory(s)).collect::<Result<Vec<_>>>()?
    };
    let options = EnumerationOptions { battery: battery(args.levels), node_budget: args.node_budget };
    let report = fuel_sensitivity(&instance, &args.fuel_costs, &args.penalties, &inventories, &options);
    let table = report.render();
    println!("{table}");
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("sensitivity.json"), serde_json::to_string_pretty(&report)?)?;
        fs::write(out.join("sensitivity.txt"), table)?;
    }
    if report.rows.iter().all(|r| r.error.is_some()) {
        bail!("every combination failed");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::SolveSdp(args) => solve_sdp(args)?,
        Command::BuildMilp(args) => build_milp(args)?,
        Command::DecodePlan(args) => decode(args)?,
        Command::SolveEnum(args) => solve_enum(args)?,
        Command::Evaluate(args) => evaluate(args)?,
        Command::Generate(args) => generate(args)?,
        Command::Bench(BenchCommand::Run { config, out }) => return bench_run(&config, &out),
        Command::Bench(BenchCommand::Sensitivity(args)) => bench_sensitivity(args)?,
    }
    Ok(true)
}

/// Joins the error chain, skipping causes a message already quotes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain().map(ToString::to_string) {
        if !out.ends_with(&cause) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&cause);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
