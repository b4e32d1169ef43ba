use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{MilpModel, VarKind};
use super::plan::{Plan, PlanError};
use crate::instance::Instance;

/// Distance from an integer accepted for binary and integer variables.
pub const INTEGRALITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Unknown,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

impl FromStr for SolveStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "optimal" => Ok(Self::Optimal),
            "feasible" => Ok(Self::Feasible),
            "infeasible" => Ok(Self::Infeasible),
            "unknown" => Ok(Self::Unknown),
            other => Err(format!("unknown status '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSolution {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    /// Indexed like the model's variables.
    pub values: Vec<f64>,
    pub gap: Option<f64>,
    pub runtime: Option<f64>,
    /// Variables missing from the file, defaulted to zero.
    pub missing: Vec<String>,
}

#[derive(Debug, Error)]
pub enum SolutionError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown variable '{name}'")]
    UnknownVariable { line: usize, name: String },
    #[error("integrality: {name} = {value}")]
    Integrality { name: String, value: f64 },
}

/// Parses a solution in the `STATUS <status> OBJ <value>` + `name value` format.
///
/// The header may continue with `GAP <g>` and `TIME <seconds>`.
pub fn parse_solution(text: &str, model: &MilpModel) -> Result<SolverSolution, SolutionError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (_, header) = lines.next().ok_or(SolutionError::Syntax { line: 1, message: "empty solution file".into() })?;
    let syntax = |line: usize, message: String| SolutionError::Syntax { line, message };
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.first().map(|t| t.to_ascii_uppercase()) != Some("STATUS".into()) || tokens.len() < 2 {
        return Err(syntax(1, "expected 'STATUS <status> OBJ <value>'".into()));
    }
    let status: SolveStatus = tokens[1].parse().map_err(|e| syntax(1, e))?;
    let mut objective = None;
    let mut gap = None;
    let mut runtime = None;
    for pair in tokens[2..].chunks(2) {
        let [key, value] = pair else {
            return Err(syntax(1, "header key without a value".into()));
        };
        let parsed = match value.to_ascii_lowercase().as_str() {
            "-" | "nan" | "none" => None,
            v => Some(v.parse::<f64>().map_err(|_| syntax(1, format!("bad number '{value}'")))?),
        };
        match key.to_ascii_uppercase().as_str() {
            "OBJ" => objective = parsed,
            "GAP" => gap = parsed,
            "TIME" => runtime = parsed,
            other => return Err(syntax(1, format!("unknown header key '{other}'"))),
        }
    }

    let mut values: Vec<f64> = vec![0.0; model.var_count()];
    let mut seen = vec![false; model.var_count()];
    for (k, line) in lines {
        let line_no = k + 1;
        let mut parts = line.split_whitespace();
        let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(syntax(line_no, format!("expected 'name value', got '{}'", line.trim())));
        };
        let id =
            model.var(name).ok_or_else(|| SolutionError::UnknownVariable { line: line_no, name: name.to_string() })?;
        values[id] = value.parse().map_err(|_| syntax(line_no, format!("bad number '{value}'")))?;
        seen[id] = true;
    }

    let mut missing = Vec::new();
    if status.has_solution() {
        for (v, (&x, &seen)) in model.variables.iter().zip(values.iter().zip(&seen)) {
            if !seen {
                missing.push(v.name.clone());
            }
            if v.kind != VarKind::Continuous && (x - x.round()).abs() > INTEGRALITY_TOLERANCE {
                return Err(SolutionError::Integrality { name: v.name.clone(), value: x });
            }
        }
        if !missing.is_empty() {
            log::warn!("{} variables missing from the solution were set to 0", missing.len());
        }
    }
    Ok(SolverSolution { status, objective, values, gap, runtime, missing })
}

pub fn read_solution(path: impl AsRef<Path>, model: &MilpModel) -> Result<SolverSolution, SolutionError> {
    parse_solution(&std::fs::read_to_string(path)?, model)
}

/// Renders values in the solution-file format.
pub fn format_solution(status: SolveStatus, objective: Option<f64>, model: &MilpModel, values: &[f64]) -> String {
    let mut out = format!(
        "STATUS {} OBJ {}\n",
        format!("{status:?}").to_lowercase(),
        objective.map_or("-".into(), |o| o.to_string())
    );
    for (v, x) in model.variables.iter().zip(values) {
        out.push_str(&format!("{} {x}\n", v.name));
    }
    out
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("solution status {0:?} carries no plan")]
    NoSolution(SolveStatus),
    #[error("model has no variable {0}")]
    MissingVariable(String),
    #[error("integrality: {name} = {value}")]
    Integrality { name: String, value: f64 },
    #[error(transparent)]
    Plan(#[from] PlanError),
}

fn read_var(model: &MilpModel, solution: &SolverSolution, name: &str) -> Result<f64, DecodeError> {
    let id = model.var(name).ok_or_else(|| DecodeError::MissingVariable(name.to_string()))?;
    Ok(solution.values[id])
}

fn integral(name: &str, value: f64) -> Result<u32, DecodeError> {
    if (value - value.round()).abs() > INTEGRALITY_TOLERANCE || value < -INTEGRALITY_TOLERANCE {
        return Err(DecodeError::Integrality { name: name.to_string(), value });
    }
    Ok(value.round() as u32)
}

/// Turns a solver assignment into a validated [`Plan`].
pub fn decode_plan(solution: &SolverSolution, model: &MilpModel, instance: &Instance) -> Result<Plan, DecodeError> {
    if !solution.status.has_solution() {
        return Err(DecodeError::NoSolution(solution.status));
    }
    let horizon = instance.horizon;
    let nodes = instance.network.node_count();
    let mut route = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mut here = Vec::new();
        for i in 0..nodes {
            let name = format!("V_{i}_{t}");
            if integral(&name, read_var(model, solution, &name)?)? == 1 {
                here.push(i);
            }
        }
        if here.len() != 1 {
            return Err(PlanError::Position { period: t, count: here.len() }.into());
        }
        route.push(here[0]);
    }
    for t in 1..horizon {
        for arc in instance.network.traversable_arcs() {
            let name = format!("T_{}_{}_{t}", arc.from, arc.to);
            let used = integral(&name, read_var(model, solution, &name)?)? == 1;
            let on_route = arc.from == route[t - 1] && arc.to == route[t];
            if used != on_route {
                return Err(PlanError::TransitLink { period: t }.into());
            }
        }
    }
    let loads = (1..=horizon)
        .map(|t| {
            let name = format!("L_{t}");
            integral(&name, read_var(model, solution, &name)?)
        })
        .collect::<Result<Vec<u32>, DecodeError>>()?;
    let deliveries = instance
        .retailers
        .iter()
        .map(|r| {
            (1..=horizon)
                .map(|t| {
                    let name = format!("Q_{}_{t}", r.node);
                    integral(&name, read_var(model, solution, &name)?)
                })
                .collect::<Result<Vec<u32>, DecodeError>>()
        })
        .collect::<Result<Vec<_>, DecodeError>>()?;
    let plan = Plan { route, loads, deliveries, predicted_cost: solution.objective };
    plan.validate(instance)?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::example_file;
    use crate::milp::{build_model, ModelOptions};

    fn setup() -> (Instance, MilpModel, Vec<f64>) {
        let inst = Instance::from_file(example_file()).unwrap();
        let built = build_model(&inst, ModelOptions::default()).unwrap();
        let plan = Plan {
            route: vec![0, 4, 1, 2],
            loads: vec![3, 0, 0, 0],
            deliveries: vec![vec![0, 0, 2, 0], vec![0, 0, 0, 1]],
            predicted_cost: None,
        };
        let x = built.assignment(&inst, &plan).unwrap();
        (inst, built.model, x)
    }

    #[test]
    fn round_trip_decodes_table1() {
        let (inst, model, x) = setup();
        let text = format_solution(SolveStatus::Optimal, Some(25.0), &model, &x);
        let solution = parse_solution(&text, &model).unwrap();
        assert_eq!(solution.objective, Some(25.0));
        assert!(solution.missing.is_empty());
        let plan = decode_plan(&solution, &model, &inst).unwrap();
        assert_eq!(plan.route, vec![0, 4, 1, 2]);
        assert_eq!(plan.loads, vec![3, 0, 0, 0]);
        assert_eq!(plan.deliveries, vec![vec![0, 0, 2, 0], vec![0, 0, 0, 1]]);
        assert_eq!(plan.predicted_cost, Some(25.0));
    }

    #[test]
    fn infeasible_status_needs_no_values() {
        let (_, model, _) = setup();
        let s = parse_solution("STATUS INFEASIBLE OBJ -\n", &model).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.missing.is_empty());
    }

    #[test]
    fn fractional_binary_is_rejected() {
        let (_, model, _) = setup();
        let err = parse_solution("STATUS optimal OBJ 1\nV_0_1 0.4\n", &model).unwrap_err();
        assert!(matches!(err, SolutionError::Integrality { .. }));
    }

    #[test]
    fn unknown_variable_is_rejected() {
        let (_, model, _) = setup();
        let err = parse_solution("STATUS optimal OBJ 1\nbogus 1\n", &model).unwrap_err();
        assert!(matches!(err, SolutionError::UnknownVariable { line: 2, .. }));
        assert!(parse_solution("STATUS great OBJ 1\n", &model).is_err());
    }

    #[test]
    fn two_positions_name_the_one_position_rule() {
        let (inst, model, mut x) = setup();
        x[model.var("V_3_2").unwrap()] = 1.0;
        let text = format_solution(SolveStatus::Feasible, Some(0.0), &model, &x);
        let err = decode_plan(&parse_solution(&text, &model).unwrap(), &model, &inst).unwrap_err();
        assert!(matches!(err, DecodeError::Plan(PlanError::Position { period: 2, count: 2 })));
        assert!(err.to_string().contains("one-position"));
    }

    #[test]
    fn missing_values_default_to_zero() {
        let (inst, model, _) = setup();
        let s = parse_solution(
            "STATUS optimal OBJ 0\nV_0_1 1\nV_0_2 1\nV_0_3 1\nV_0_4 1\nT_0_0_1 1\nT_0_0_2 1\nT_0_0_3 1\n",
            &model,
        );
        let s = s.unwrap();
        assert!(!s.missing.is_empty());
        match decode_plan(&s, &model, &inst) {
            Ok(plan) => assert_eq!(plan.route, vec![0; 4]),
            Err(e) => assert!(matches!(e, DecodeError::Plan(_)), "{e}"),
        }
    }
}
