//! Many independent scenarios at once. Engines share nothing, so the
//! parallel runner returns exactly what the sequential one does.

use super::engine::{run, RunResult};
use super::scenario::{Scenario, ScenarioError};

pub fn run_many_seq(scenarios: Vec<Scenario>) -> Vec<Result<RunResult, ScenarioError>> {
    scenarios.into_iter().map(run).collect()
}

#[cfg(feature = "parallel")]
pub fn run_many(scenarios: Vec<Scenario>) -> Vec<Result<RunResult, ScenarioError>> {
    use rayon::prelude::*;
    scenarios.into_par_iter().map(run).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_many(scenarios: Vec<Scenario>) -> Vec<Result<RunResult, ScenarioError>> {
    run_many_seq(scenarios)
}
