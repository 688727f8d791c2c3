//! Mandatory lane-change planning for connected automated vehicles leaving a
//! dedicated lane inside a diverging zone, with a gap-acceptance baseline and
//! a small deterministic traffic simulator around both.

// `!(a >= b)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod error;
pub mod ga;
pub mod io;
pub mod kinematics;
pub mod metrics;
pub mod model;
pub mod planner;
pub mod scenario;
pub mod sim;
pub mod sts;

pub use error::{Error, Result};
pub use io::ScenarioSpec;
pub use metrics::{Metrics, SimulationLog};
pub use model::{kmh, to_kmh, DzConfig, Lane, Role, VehicleId, VehicleState};
pub use planner::{CostParams, PlannerOptions, PruningRule};
pub use scenario::{generate_scenario, GenerationTemplate};
pub use sim::{run, Planner, RunOutcome, Scenario, Simulation};
