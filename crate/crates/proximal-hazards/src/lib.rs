//! Proximal two-stage estimation for right-censored time-to-event outcomes
//! under additive hazards models.
//!
//! Unmeasured confounding biases hazard-difference estimates from standard
//! survival regression. When a pair of negative-control proxies is available
//! -- an exposure-side proxy `Z` with no direct effect on the outcome and an
//! outcome-side proxy `W` not affected by the exposure, both associated with
//! the unmeasured confounder -- the bias can be corrected by a two-stage
//! regression: first regress each `W` on `(A, Z, X)` (linear, log-link,
//! additive-hazards, or cause-specific additive-hazards model, depending on
//! `W`'s type), then fit an additive-hazards regression of the outcome on
//! the exposure, the fitted first-stage predictors, and the measured
//! covariates. The exposure coefficient of the second stage estimates the
//! causal hazard difference.
//!
//! The crate provides:
//!
//! - [`data`]: dataset types, validation, and CSV ingestion;
//! - [`hazards`]: the semiparametric additive-hazards engine (Lin-Ying
//!   estimator) shared by both stages and by the comparator fits;
//! - [`first_stage`]: per-NCO first-stage regressions;
//! - [`two_stage`]: the two-stage pipeline, comparator fits, and proxy
//!   relevance diagnostics;
//! - [`inference`]: stacked sandwich covariance across both stages and the
//!   case bootstrap;
//! - [`sim`]: the data generator and Monte Carlo study harness.
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32`, `f64`);
//! concrete `f64` aliases are exported at the crate root.

pub mod data;
pub mod error;
pub mod first_stage;
pub mod hazards;
pub mod inference;
pub mod linalg;
pub mod scalar;
pub mod sim;
pub mod step;
pub mod two_stage;

pub use error::{Error, Result, Violation};

pub use data::{
    ingest_csv, validate, write_csv, CsvSchema, Nco, NcoBinding, NcoColumns, NcoKind, NcoSpec,
    ProximalDataset, Status, SurvivalOutcome,
};
pub use hazards::{
    ah_sandwich_covariance, estimating_system, fit_additive_hazards, negative_hazard_report,
    AhFit, Design,
};
pub use first_stage::{
    fit_competing_nco, fit_first_stage, fit_linear_nco, fit_loglinear_nco, fit_survival_nco,
    FirstStageFit,
};
pub use inference::{
    bootstrap_covariance, sandwich_covariance, stacked_system, wald_ci, BootstrapResult,
    StackedSystem,
};
pub use two_stage::{
    fully_adjusted_fit, naive_fit, p2sls_fit, p2sls_fit_with_threshold, relevance_diagnostics,
    relevance_from_parts, second_stage_design, RelevanceReport, TwoStageFit,
};
pub use sim::{
    default_grid, oracle_fit, run_cell, run_study, simulate_competing_dataset, simulate_dataset,
    write_study_csv, CellResult, CompetingSimConfig, MethodMetrics, SimConfig, SimulatedDataset,
    StudyMetrics,
};
pub use step::{StepEval, StepFunction};

/// `f64` concrete aliases for the main generic types.
pub type Mat64 = linalg::Mat<f64>;
pub type SurvivalOutcome64 = data::SurvivalOutcome<f64>;
pub type ProximalDataset64 = data::ProximalDataset<f64>;
pub type StepFunction64 = step::StepFunction<f64>;
pub type Design64 = hazards::Design<f64>;
pub type AhFit64 = hazards::AhFit<f64>;
pub type FirstStageFit64 = first_stage::FirstStageFit<f64>;
pub type TwoStageFit64 = two_stage::TwoStageFit<f64>;
pub type StackedSystem64 = inference::StackedSystem<f64>;
pub type SimulatedDataset64 = sim::SimulatedDataset<f64>;
