//! Multi-seed experiments: every seed gets one generated scenario that is run
//! once per planner. Runs share nothing, so they spread over a thread pool
//! when the `parallel` feature is on.

use crate::error::Result;
use crate::scenario::{generate_from, GenerationTemplate};
use crate::sim::{run, Planner, RunOutcome, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub scenario: Scenario,
    pub pso: RunOutcome,
    pub ga: RunOutcome,
}

/// Runs the same scenario under both planners.
pub fn compare(scenario: &Scenario) -> Result<Comparison> {
    Ok(Comparison {
        pso: run(&scenario.with_planner(Planner::Pso))?,
        ga: run(&scenario.with_planner(Planner::Ga))?,
        scenario: scenario.clone(),
    })
}

fn compare_seed(base: &Scenario, template: &GenerationTemplate, seed: u64) -> Result<Comparison> {
    compare(&generate_from(base, seed, template)?)
}

/// One comparison per seed, in the order of `seeds`.
pub fn run_batch(
    base: &Scenario,
    template: &GenerationTemplate,
    seeds: &[u64],
    execution: Execution,
) -> Result<Vec<Comparison>> {
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            seeds
                .par_iter()
                .map(|&seed| compare_seed(base, template, seed))
                .collect()
        }
        _ => seeds
            .iter()
            .map(|&seed| compare_seed(base, template, seed))
            .collect(),
    }
}
