use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64, tol: f64) -> bool {
        match self {
            Sense::Le => lhs <= rhs + tol,
            Sense::Ge => lhs >= rhs - tol,
            Sense::Eq => (lhs - rhs).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    /// Variable index and coefficient, each variable at most once.
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v]).sum()
    }
}

/// A minimization MILP with named variables and constraints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpModel {
    pub name: String,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, f64)>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    /// Adds a variable; binaries always get bounds `[0, 1]`.
    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> usize {
        let name = name.into();
        let (lower, upper) = if kind == VarKind::Binary { (0.0, 1.0) } else { (lower, upper) };
        let id = self.variables.len();
        let previous = self.index.insert(name.clone(), id);
        assert!(previous.is_none(), "duplicate variable {name}");
        self.variables.push(Variable { name, kind, lower, upper });
        id
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn var_count(&self) -> usize {
        self.variables.len()
    }

    /// Adds a constraint, merging repeated variables and dropping zero terms.
    pub fn add_constraint(&mut self, name: impl Into<String>, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        let terms = merge_terms(terms);
        self.constraints.push(Constraint { name: name.into(), terms, sense, rhs });
    }

    pub fn add_objective(&mut self, var: usize, coefficient: f64) {
        self.objective.push((var, coefficient));
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v]).sum()
    }

    fn normalize_objective(&mut self) {
        self.objective = merge_terms(std::mem::take(&mut self.objective));
    }

    pub(crate) fn finish(&mut self) {
        self.normalize_objective();
    }

    /// Names of constraints and bounds violated by `values`.
    pub fn violations(&self, values: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (v, x) in self.variables.iter().zip(values) {
            if *x < v.lower - tol || *x > v.upper + tol {
                out.push(format!("bound {} = {x}", v.name));
            }
            if v.kind != VarKind::Continuous && (x - x.round()).abs() > tol {
                out.push(format!("integrality {} = {x}", v.name));
            }
        }
        for c in &self.constraints {
            let lhs = c.lhs(values);
            if !c.sense.holds(lhs, c.rhs, tol * (1.0 + c.rhs.abs())) {
                out.push(format!("{}: {lhs} {} {}", c.name, c.sense.symbol(), c.rhs));
            }
        }
        out
    }

    /// Every constraint only refers to declared variables and binaries are `[0, 1]`.
    pub fn check(&self) -> Result<(), String> {
        let n = self.variables.len();
        for c in &self.constraints {
            if let Some(&(v, _)) = c.terms.iter().find(|(v, _)| *v >= n) {
                return Err(format!("constraint {} refers to undeclared variable {v}", c.name));
            }
        }
        for v in &self.variables {
            if v.kind == VarKind::Binary && (v.lower != 0.0 || v.upper != 1.0) {
                return Err(format!("binary {} has bounds [{}, {}]", v.name, v.lower, v.upper));
            }
            if v.lower > v.upper {
                return Err(format!("variable {} has empty domain", v.name));
            }
        }
        Ok(())
    }

    /// Renders the model in LP format.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        if !self.name.is_empty() {
            let _ = writeln!(out, "\\ {}", self.name);
        }
        out.push_str("Minimize\n obj:");
        write_expression(&mut out, &self.objective, &self.variables);
        out.push('\n');
        out.push_str("Subject To\n");
        for c in &self.constraints {
            let _ = write!(out, " {}:", c.name);
            write_expression(&mut out, &c.terms, &self.variables);
            let _ = writeln!(out, " {} {}", c.sense.symbol(), c.rhs);
        }
        out.push_str("Bounds\n");
        for v in &self.variables {
            if v.kind == VarKind::Binary {
                continue;
            }
            let _ = match (v.lower.is_finite(), v.upper.is_finite()) {
                (false, false) => writeln!(out, " {} free", v.name),
                (true, false) => writeln!(out, " {} >= {}", v.name, v.lower),
                (false, true) => writeln!(out, " -inf <= {} <= {}", v.name, v.upper),
                (true, true) if v.lower == v.upper => writeln!(out, " {} = {}", v.name, v.lower),
                (true, true) => writeln!(out, " {} <= {} <= {}", v.lower, v.name, v.upper),
            };
        }
        for (section, kind) in [("Generals", VarKind::Integer), ("Binaries", VarKind::Binary)] {
            let names: Vec<&str> = self.variables.iter().filter(|v| v.kind == kind).map(|v| v.name.as_str()).collect();
            if names.is_empty() {
                continue;
            }
            let _ = writeln!(out, "{section}");
            for chunk in names.chunks(8) {
                let _ = writeln!(out, " {}", chunk.join(" "));
            }
        }
        out.push_str("End\n");
        out
    }

    pub fn write_lp(&self, path: impl AsRef<Path>) -> Result<(), LpError> {
        std::fs::write(path, self.to_lp_string())?;
        Ok(())
    }

    pub fn read_lp(path: impl AsRef<Path>) -> Result<Self, LpError> {
        Self::parse_lp(&std::fs::read_to_string(path)?)
    }

    /// Parses the LP subset written by [`MilpModel::to_lp_string`].
    pub fn parse_lp(text: &str) -> Result<Self, LpError> {
        LpParser::default().parse(text)
    }

    /// Same variables, constraints and objective up to ordering.
    pub fn equivalent(&self, other: &Self) -> bool {
        if self.variables.len() != other.variables.len() || self.constraints.len() != other.constraints.len() {
            return false;
        }
        let map: Option<Vec<usize>> = self.variables.iter().map(|v| other.var(&v.name)).collect();
        let Some(map) = map else { return false };
        let same_vars = self.variables.iter().zip(&map).all(|(v, &o)| {
            let w = &other.variables[o];
            v.kind == w.kind && v.lower == w.lower && v.upper == w.upper
        });
        let canon = |terms: &[(usize, f64)], remap: &dyn Fn(usize) -> usize| {
            let mut t: Vec<(usize, f64)> = terms.iter().map(|&(v, a)| (remap(v), a)).collect();
            t.sort_by_key(|&(v, _)| v);
            t
        };
        let ident = |v: usize| v;
        let remap = |v: usize| map[v];
        if canon(&self.objective, &remap) != canon(&other.objective, &ident) {
            return false;
        }
        let others: HashMap<&str, &Constraint> = other.constraints.iter().map(|c| (c.name.as_str(), c)).collect();
        same_vars
            && self.constraints.iter().all(|c| {
                others.get(c.name.as_str()).is_some_and(|o| {
                    o.sense == c.sense && o.rhs == c.rhs && canon(&c.terms, &remap) == canon(&o.terms, &ident)
                })
            })
    }
}

fn merge_terms(terms: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for (v, a) in terms {
        match slot.get(&v) {
            Some(&i) => merged[i].1 += a,
            None => {
                slot.insert(v, merged.len());
                merged.push((v, a));
            }
        }
    }
    merged.retain(|&(_, a)| a != 0.0);
    merged
}

const TERMS_PER_LINE: usize = 8;

fn write_expression(out: &mut String, terms: &[(usize, f64)], variables: &[Variable]) {
    if terms.is_empty() {
        // An empty expression still needs a term for most readers.
        out.push_str(" 0 ");
        out.push_str(variables.first().map_or("__zero", |v| v.name.as_str()));
        return;
    }
    for (k, &(v, a)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if a < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", a.abs(), variables[v].name);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Generals,
    Binaries,
    End,
}

#[derive(Default)]
struct LpParser {
    model: MilpModel,
}

fn parse_number(token: &str) -> Option<f64> {
    match token.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        _ => token.parse().ok(),
    }
}

fn section_of(line: &str) -> Option<Section> {
    match line.to_ascii_lowercase().as_str() {
        "minimize" | "minimise" | "min" => Some(Section::Objective),
        "subject to" | "such that" | "st" | "s.t." => Some(Section::Constraints),
        "bounds" | "bound" => Some(Section::Bounds),
        "generals" | "general" | "gen" => Some(Section::Generals),
        "binaries" | "binary" | "bin" => Some(Section::Binaries),
        "end" => Some(Section::End),
        _ => None,
    }
}

impl LpParser {
    fn var_id(&mut self, name: &str) -> usize {
        match self.model.var(name) {
            Some(id) => id,
            None => self.model.add_var(name, VarKind::Continuous, 0.0, f64::INFINITY),
        }
    }

    fn parse(mut self, text: &str) -> Result<MilpModel, LpError> {
        let mut section = Section::Preamble;
        // Statements may span lines; each is (first line number, text).
        let mut statement: Option<(usize, String)> = None;
        let mut statements: Vec<(Section, usize, String)> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.split('\\').next().unwrap_or("");
            if line_no == 1 && raw.starts_with('\\') {
                self.model.name = raw.trim_start_matches('\\').trim().to_string();
                continue;
            }
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(next) = section_of(trimmed) {
                if let Some((n, s)) = statement.take() {
                    statements.push((section, n, s));
                }
                section = next;
                continue;
            }
            let continuation = line.starts_with("   ") && statement.is_some();
            if continuation {
                if let Some((_, s)) = statement.as_mut() {
                    s.push(' ');
                    s.push_str(trimmed);
                }
            } else {
                if let Some((n, s)) = statement.take() {
                    statements.push((section, n, s));
                }
                statement = Some((line_no, trimmed.to_string()));
            }
        }
        if let Some((n, s)) = statement.take() {
            statements.push((section, n, s));
        }

        for (section, line, text) in statements {
            let err = |message: String| LpError::Syntax { line, message };
            match section {
                Section::Preamble | Section::End => return Err(err(format!("unexpected text '{text}'"))),
                Section::Objective => {
                    let body = text.split_once(':').map_or(text.as_str(), |(_, b)| b);
                    let terms = self.parse_terms(body).map_err(err)?;
                    self.model.objective.extend(terms);
                }
                Section::Constraints => {
                    let (name, body) = text.split_once(':').ok_or_else(|| err("constraint without a name".into()))?;
                    let (sense, pos, width) = ["<=", ">=", "=<", "=>", "="]
                        .iter()
                        .find_map(|op| body.find(op).map(|p| (*op, p, op.len())))
                        .ok_or_else(|| err("constraint without a sense".into()))?;
                    let sense = match sense {
                        "<=" | "=<" => Sense::Le,
                        ">=" | "=>" => Sense::Ge,
                        _ => Sense::Eq,
                    };
                    let terms = self.parse_terms(&body[..pos]).map_err(err)?;
                    let rhs =
                        parse_number(body[pos + width..].trim()).ok_or_else(|| err("bad right-hand side".into()))?;
                    self.model.add_constraint(name.trim(), terms, sense, rhs);
                }
                Section::Bounds => self.parse_bound(&text).map_err(err)?,
                Section::Generals | Section::Binaries => {
                    for name in text.split_whitespace() {
                        let id = self.var_id(name);
                        let v = &mut self.model.variables[id];
                        if section == Section::Binaries {
                            v.kind = VarKind::Binary;
                            v.lower = 0.0;
                            v.upper = 1.0;
                        } else {
                            v.kind = VarKind::Integer;
                        }
                    }
                }
            }
        }
        self.model.normalize_objective();
        Ok(self.model)
    }

    fn parse_terms(&mut self, body: &str) -> Result<Vec<(usize, f64)>, String> {
        let mut terms = Vec::new();
        let mut sign = 1.0;
        let mut coefficient: Option<f64> = None;
        for token in body.split_whitespace() {
            match token {
                "+" => sign = 1.0,
                "-" => sign = -1.0,
                _ => {
                    if let Some(x) = parse_number(token).filter(|x| x.is_finite()) {
                        coefficient = Some(x);
                    } else {
                        let (s, name) = match token.strip_prefix('-') {
                            Some(rest) => (-1.0, rest),
                            None => (1.0, token.trim_start_matches('+')),
                        };
                        let id = self.var_id(name);
                        terms.push((id, sign * s * coefficient.unwrap_or(1.0)));
                        sign = 1.0;
                        coefficient = None;
                    }
                }
            }
        }
        if coefficient.is_some() {
            return Err("dangling coefficient".into());
        }
        Ok(terms)
    }

    fn parse_bound(&mut self, text: &str) -> Result<(), String> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let bad = || format!("unsupported bound '{text}'");
        match tokens.as_slice() {
            [name, free] if free.eq_ignore_ascii_case("free") => {
                let id = self.var_id(name);
                self.set_bounds(id, f64::NEG_INFINITY, f64::INFINITY);
            }
            [lo, "<=", name, "<=", hi] => {
                let (lo, hi) = (parse_number(lo).ok_or_else(bad)?, parse_number(hi).ok_or_else(bad)?);
                let id = self.var_id(name);
                self.set_bounds(id, lo, hi);
            }
            [name, op, value] => {
                let value = parse_number(value).ok_or_else(bad)?;
                let id = self.var_id(name);
                let (lo, hi) = (self.model.variables[id].lower, self.model.variables[id].upper);
                match *op {
                    ">=" => self.set_bounds(id, value, hi),
                    "<=" => self.set_bounds(id, lo, value),
                    "=" => self.set_bounds(id, value, value),
                    _ => return Err(bad()),
                }
            }
            _ => return Err(bad()),
        }
        Ok(())
    }

    fn set_bounds(&mut self, id: usize, lower: f64, upper: f64) {
        self.model.variables[id].lower = lower;
        self.model.variables[id].upper = upper;
    }
}
