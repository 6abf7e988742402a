//! Linear and mixed-integer linear optimisation: a bounded-variable revised
//! simplex, best-first branch-and-bound and a fixed-format MPS writer.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`).
//!
//! ```
//! use mgplan_optim::{solve_milp, MilpOptions, MixedIntegerProgram, Sense};
//!
//! let mut p = MixedIntegerProgram::<f64>::new("knap");
//! let a = p.add_binary("a");
//! let b = p.add_binary("b");
//! p.set_cost(a, -3.0);
//! p.set_cost(b, -2.0);
//! p.add_row("cap", [(a, 1.0), (b, 1.0)], Sense::Le, 1.0);
//! let out = solve_milp(&p, &MilpOptions::default()).unwrap();
//! assert_eq!(out.objective, -3.0);
//! ```

mod branch;
mod error;
mod lu;
mod model;
mod mps;
mod outcome;
mod scalar;
mod simplex;

pub use branch::{solve_milp, Branching, MilpOptions};
pub use error::{MpsError, ProgramError, SolverError};
pub use model::{Constraint, MixedIntegerProgram, RowId, Sense, Var, Variable};
pub use mps::{export_mps, to_mps_string, write_mps};
pub use outcome::{SolveOutcome, SolveStats, SolveStatus};
pub use scalar::Scalar;
pub use simplex::{duality_gap, solve_lp, Basis, LpSolver, Tolerances, VarStatus};

pub type Program = MixedIntegerProgram<f64>;
pub type Outcome = SolveOutcome<f64>;
