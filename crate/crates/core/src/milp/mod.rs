//! Static-plan MILP: model construction, LP-file bridge, solution decoding and
//! an exhaustive oracle for small instances.
//!
//! No solver is embedded. Models are written in LP format for an external
//! solver and its answer is read back in a plain `name value` format.

mod build;
mod enumerate;
mod model;
mod plan;
mod solution;

pub use build::{build_model, BuildError, ErrpModel, ModelOptions};
pub use enumerate::{enumerate_optimal_plan, random_plan, EnumerationError, EnumerationOptions, EnumerationResult};
pub use model::{Constraint, LpError, MilpModel, Sense, VarKind, Variable};
pub use plan::{Plan, PlanError};
pub use solution::{
    decode_plan, format_solution, parse_solution, read_solution, DecodeError, SolutionError, SolveStatus,
    SolverSolution, INTEGRALITY_TOLERANCE,
};
