//! Extended compact GA with BB-wise mutation, model-based fitness
//! inheritance, facetwise predictions and an experiment harness.

pub mod engine;
pub mod error;
pub mod facetwise;
pub mod genome;
pub mod harness;
pub mod inheritance;
pub mod mpm;
pub mod mutation;
pub mod problems;

pub use engine::{
    run, run_ecga, run_ecga_with_inheritance, run_observed, tournament_select, Algorithm,
    EvaluationLedger, GenerationRecord, RunConfig, RunResult, DEFAULT_TOURNAMENT_SIZE,
};
pub use error::{Error, Result};
pub use genome::{Genome, Individual, Population, Provenance, RandomSource};
pub use inheritance::{InheritanceSampling, SchemaFitnessTable};
pub use mpm::{greedy_model_search, MarginalProductModel, Partition};
pub use mutation::{bbwise_mutate, run_selectomutative};
pub use problems::{mk_trap, onemax, Problem, ProblemSpec};
