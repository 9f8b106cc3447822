//! Causal survival analysis for long-term incident-disease registries.
//!
//! The crate emulates a target trial comparing two initial-treatment
//! strategies (immediate transplant vs dialysis first) from registry data:
//!
//! - [`registry`]: record model, CSV ingestion, eligibility filtering,
//!   survival-time decomposition and descriptive tables.
//! - [`simlab`]: synthetic registry generator with known ground truth,
//!   including presets that reproduce classic registry bias phenomena
//!   (immortal time, calendar-trend informative censoring).
//! - [`nonparam`]: Kaplan-Meier, Aalen-Johansen cumulative incidence,
//!   log-rank test.
//! - [`coxmod`]: Cox proportional hazards by partial-likelihood
//!   Newton-Raphson with Efron ties and Breslow baseline hazard.
//! - [`standardize`]: g-formula standardization of arm-specific survival
//!   over a target covariate population, horizon tables and profile curves.
//! - [`weighting`]: logistic propensity model, positivity diagnostics and
//!   IPW-weighted Kaplan-Meier.
//! - [`missing`]: chained-equations multiple imputation of binary
//!   comorbidities, subject-level bootstrap, MI pooling.
//! - [`gestaft`]: g-estimation of structural accelerated failure time
//!   models with artificial-recensoring sensitivity sweeps.

pub mod coxmod;
pub mod gestaft;
mod linalg;
pub mod missing;
pub mod nonparam;
pub mod registry;
pub mod simlab;
pub mod standardize;
pub(crate) mod stats;
pub mod weighting;

/// Days per year used whenever day-resolution times are reported in years.
pub const DAYS_PER_YEAR: f64 = 365.25;

pub use registry::{Decomposition, SubjectRecord};
