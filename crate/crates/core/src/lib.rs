//! Microgrid investment planning with frequency-secure islanding.
//!
//! The planner picks generator and line investments that minimise investment
//! cost, expected grid-connected operating cost over representative days and
//! the worst-case load-shedding penalty of an unscheduled islanding event. A
//! frequency check then limits the grid exchange to what the built fleet can
//! lose without breaching RoCoF, nadir and steady-state limits, and the plan is
//! re-solved until no exchange needs correcting.
//!
//! ```no_run
//! use mgplan_core::{io, orchestrator::{run_three_stage, RunConfig}};
//!
//! let instance = io::cigre18();
//! let run = run_three_stage(&instance, &RunConfig::default()).unwrap();
//! println!("{:?}", run.solution.plan.built_generators);
//! ```
//!
//! The frequency model, the security guard and clustering are generic over
//! the scalar type; the planner works in `f64`.

pub mod error;
pub mod freq;
pub mod guard;
pub mod instance;
pub mod io;
pub mod orchestrator;
pub mod planner;
pub mod scenario;

pub use error::{FrequencyError, InstanceError, IoError, PlannerError, RunError, ScenarioError};
pub use instance::{GeneratorAsset, GeneratorKind, LineAsset, LoadSpec, PlanningInstance, RepresentativeDay};
pub use orchestrator::{run_three_stage, IterationRecord, RunConfig, RunResult, RunStatus};
pub use planner::{build_master, extract_solution, InvestmentPlan, MasterSolution};

pub type AggregateParams = freq::AggregateFrequencyParams<f64>;
pub type FleetUnit = freq::FleetUnit<f64>;
pub type Metrics = freq::FrequencyMetrics<f64>;
pub type Trajectory = freq::Trajectory<f64>;
pub type SecureLimit = guard::SecureLimit<f64>;
pub type Sensitivity = guard::Sensitivity<f64>;
pub type CorrectiveDeviation = guard::CorrectiveDeviation<f64>;
