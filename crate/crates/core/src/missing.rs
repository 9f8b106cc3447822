//! Chained-equations multiple imputation of the binary comorbidity flags,
//! a subject-level bootstrap engine, and pooling across completed sets.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coxmod::{Covariate, CovariateSpec, Term};
use crate::linalg;
use crate::registry::{Comorbidity, SubjectRecord};
use crate::weighting::{fit_logistic, WeightError};

#[derive(Debug, Error)]
pub enum ImputeError {
    #[error("missing values outside the comorbidity flags: column `{column}` for subject `{id}`")]
    UnsupportedMissing { column: String, id: String },
    #[error("comorbidity `{0}` is observed in a single class; its imputation model is not identifiable")]
    SingleClassFlag(&'static str),
    #[error("imputation model failed for `{flag}`: {source}")]
    ModelFailure {
        flag: &'static str,
        source: WeightError,
    },
    #[error("config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("need at least one replicate")]
    NoReplicates,
    #[error("empty input")]
    EmptyInput,
    #[error("all {0} replicates failed")]
    AllReplicatesFailed(usize),
    #[error("statistic failed on the original sample: {0}")]
    PointFailure(String),
    #[error("need at least two completed sets to pool")]
    TooFewSets,
    #[error("replicate matrices disagree in statistic dimension")]
    DimensionMismatch,
}

/// Chained-equations configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImputationConfig {
    /// Number of completed data sets.
    pub m: usize,
    /// Cycles over the incomplete flags per set.
    pub iterations: usize,
    /// Predictors beyond the other comorbidity flags.
    pub predictors: Vec<Covariate>,
    pub seed: u64,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        Self {
            m: 10,
            iterations: 10,
            predictors: vec![
                Covariate::Age,
                Covariate::Sex,
                Covariate::Region,
                Covariate::Pkd,
                Covariate::EntryYear,
                Covariate::Pkt,
                Covariate::EventFlag,
                Covariate::LogDays,
            ],
            seed: 20_260_801,
        }
    }
}

fn flag_covariate(c: Comorbidity) -> Covariate {
    match c {
        Comorbidity::Diabetes => Covariate::Diabetes,
        Comorbidity::Hypertension => Covariate::Hypertension,
        Comorbidity::Ihd => Covariate::Ihd,
        Comorbidity::Pad => Covariate::Pad,
        Comorbidity::Cvd => Covariate::Cvd,
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Proper chained-equations imputation: per incomplete flag, a logistic
/// model on the observed rows (configured predictors plus the other four
/// flags under their current completions), coefficients drawn from the
/// asymptotic normal of the fit, missing cells drawn Bernoulli. Flags are
/// cycled `iterations` times; the whole procedure is repeated per set with
/// an independent derived seed. Observed cells are never modified.
pub fn impute_chained(
    records: &[SubjectRecord],
    config: &ImputationConfig,
) -> Result<Vec<Vec<SubjectRecord>>, ImputeError> {
    if config.m < 2 {
        return Err(ImputeError::BadConfig("m must be at least 2".into()));
    }
    if config.iterations < 1 {
        return Err(ImputeError::BadConfig("iterations must be at least 1".into()));
    }
    if records.is_empty() {
        return Err(ImputeError::BadConfig("no records".into()));
    }
    if config.predictors.iter().any(|c| {
        matches!(
            c,
            Covariate::Diabetes
                | Covariate::Hypertension
                | Covariate::Ihd
                | Covariate::Pad
                | Covariate::Cvd
        )
    }) {
        return Err(ImputeError::BadConfig(
            "the comorbidity flags participate automatically; list only complete predictors"
                .into(),
        ));
    }
    // gfr is the only other optional field; it is not imputed here
    if config.predictors.contains(&Covariate::Gfr) {
        if let Some(r) = records.iter().find(|r| r.gfr.is_none()) {
            return Err(ImputeError::UnsupportedMissing {
                column: "gfr".into(),
                id: r.id.clone(),
            });
        }
    }

    // which flags actually need imputation, and observed prevalences
    let mut incomplete: Vec<Comorbidity> = Vec::new();
    let mut prevalence = [0.5_f64; 5];
    for (j, &flag) in Comorbidity::ALL.iter().enumerate() {
        let observed: Vec<bool> = records.iter().filter_map(|r| r.comorbidity(flag)).collect();
        let n_missing = records.len() - observed.len();
        if n_missing == 0 {
            continue;
        }
        if observed.is_empty() || observed.iter().all(|&v| v) || observed.iter().all(|&v| !v) {
            return Err(ImputeError::SingleClassFlag(flag.field_name()));
        }
        prevalence[j] = observed.iter().filter(|&&v| v).count() as f64 / observed.len() as f64;
        incomplete.push(flag);
    }

    if incomplete.is_empty() {
        return Ok(vec![records.to_vec(); config.m]);
    }

    let sets: Vec<Result<Vec<SubjectRecord>, ImputeError>> = (0..config.m)
        .into_par_iter()
        .map(|set_index| impute_one_set(records, config, &incomplete, &prevalence, set_index))
        .collect();
    sets.into_iter().collect()
}

fn impute_one_set(
    records: &[SubjectRecord],
    config: &ImputationConfig,
    incomplete: &[Comorbidity],
    prevalence: &[f64; 5],
    set_index: usize,
) -> Result<Vec<SubjectRecord>, ImputeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(
        config.seed ^ splitmix64(0xA11CE ^ set_index as u64),
    ));
    let mut completed: Vec<SubjectRecord> = records.to_vec();

    // the original missingness mask per flag
    let missing_mask: Vec<Vec<bool>> = Comorbidity::ALL
        .iter()
        .map(|&f| records.iter().map(|r| r.comorbidity(f).is_none()).collect())
        .collect();

    // initial fill from the observed prevalence
    for &flag in incomplete {
        let j = Comorbidity::ALL.iter().position(|&f| f == flag).unwrap();
        for (i, r) in completed.iter_mut().enumerate() {
            if missing_mask[j][i] {
                r.set_comorbidity(flag, Some(rng.random_bool(prevalence[j])));
            }
        }
    }

    for _cycle in 0..config.iterations {
        for &flag in incomplete {
            let j = Comorbidity::ALL.iter().position(|&f| f == flag).unwrap();

            // model spec: configured predictors plus the other four flags;
            // flags constant in the current completion would be collinear
            // with the intercept and are left out
            let mut spec = CovariateSpec::main_effects(&config.predictors);
            for &other in &Comorbidity::ALL {
                if other == flag {
                    continue;
                }
                let mut any_true = false;
                let mut any_false = false;
                for r in completed.iter() {
                    match r.comorbidity(other) {
                        Some(true) => any_true = true,
                        Some(false) => any_false = true,
                        None => {}
                    }
                }
                if any_true && any_false {
                    spec.terms.push(Term::Main(flag_covariate(other)));
                }
            }

            let observed_rows: Vec<SubjectRecord> = completed
                .iter()
                .enumerate()
                .filter(|(i, _)| !missing_mask[j][*i])
                .map(|(_, r)| r.clone())
                .collect();
            let labels: Vec<bool> = records
                .iter()
                .enumerate()
                .filter(|(i, _)| !missing_mask[j][*i])
                .map(|(_, r)| r.comorbidity(flag).expect("observed"))
                .collect();

            let fit = fit_logistic(&observed_rows, &labels, &spec).map_err(|source| {
                match source {
                    WeightError::Fit(crate::coxmod::FitError::SingleClass) => {
                        ImputeError::SingleClassFlag(flag.field_name())
                    }
                    WeightError::Fit(crate::coxmod::FitError::MissingValue { column, id }) => {
                        ImputeError::UnsupportedMissing { column, id }
                    }
                    other => ImputeError::ModelFailure {
                        flag: flag.field_name(),
                        source: other,
                    },
                }
            })?;

            // proper imputation: draw coefficients from N(beta, cov)
            let p = fit.coefficients.len();
            let drawn = match linalg::cholesky(&fit.covariance, p, 0.0) {
                Some(l) => {
                    let z: Vec<f64> = (0..p)
                        .map(|_| {
                            let u1: f64 = rng.random::<f64>().max(1e-12);
                            let u2: f64 = rng.random();
                            (-2.0 * u1.ln()).sqrt()
                                * (2.0 * std::f64::consts::PI * u2).cos()
                        })
                        .collect();
                    let mut beta = fit.coefficients.clone();
                    for a in 0..p {
                        for b in 0..=a {
                            beta[a] += l[a * p + b] * z[b];
                        }
                    }
                    beta
                }
                // degenerate covariance: fall back to the point estimate
                None => fit.coefficients.clone(),
            };

            let info = fit.info.clone();
            for i in 0..completed.len() {
                if !missing_mask[j][i] {
                    continue;
                }
                let row = info.encode_row(&completed[i]).map_err(|e| match e {
                    crate::coxmod::FitError::MissingValue { column, id } => {
                        ImputeError::UnsupportedMissing { column, id }
                    }
                    other => ImputeError::ModelFailure {
                        flag: flag.field_name(),
                        source: WeightError::Fit(other),
                    },
                })?;
                let eta = drawn[0] + linalg::dot(&drawn[1..], &row);
                let prob = 1.0 / (1.0 + (-eta).exp());
                completed[i].set_comorbidity(flag, Some(rng.random_bool(prob.clamp(1e-9, 1.0 - 1e-9))));
            }
        }
    }
    Ok(completed)
}

/// Subject-level bootstrap of an arbitrary vector statistic.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapResult {
    /// Statistic on the original sample.
    pub point: Vec<f64>,
    /// One row per successful replicate.
    pub replicates: Vec<Vec<f64>>,
    /// 2.5/97.5 percentile interval per coordinate.
    pub ci: Vec<(f64, f64)>,
    pub b_requested: usize,
    pub failures: usize,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let k = ((q * sorted.len() as f64) as usize).min(sorted.len() - 1);
    sorted[k]
}

fn percentile_ci(replicates: &[Vec<f64>], dim: usize) -> Vec<(f64, f64)> {
    (0..dim)
        .map(|d| {
            let mut column: Vec<f64> = replicates.iter().map(|r| r[d]).collect();
            column.sort_by(|a, b| a.total_cmp(b));
            (percentile(&column, 0.025), percentile(&column, 0.975))
        })
        .collect()
}

/// Resample subjects with replacement `b` times and evaluate `statistic`.
/// Draws are keyed to the id-sorted subject list, so permuting the input
/// row order does not change any replicate. Failed replicates are dropped
/// and counted.
pub fn bootstrap<F>(
    records: &[SubjectRecord],
    statistic: F,
    b: usize,
    seed: u64,
) -> Result<BootstrapResult, BootstrapError>
where
    F: Fn(&[SubjectRecord]) -> Result<Vec<f64>, String> + Sync,
{
    if b < 1 {
        return Err(BootstrapError::NoReplicates);
    }
    if records.is_empty() {
        return Err(BootstrapError::EmptyInput);
    }
    let point = statistic(records).map_err(BootstrapError::PointFailure)?;

    let mut by_id: Vec<&SubjectRecord> = records.iter().collect();
    by_id.sort_by(|a, b| a.id.cmp(&b.id));
    let n = by_id.len();

    let outcomes: Vec<Option<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(0xB007 ^ rep as u64)));
            let sample: Vec<SubjectRecord> = (0..n)
                .map(|_| by_id[rng.random_range(0..n)].clone())
                .collect();
            statistic(&sample).ok()
        })
        .collect();

    let replicates: Vec<Vec<f64>> = outcomes.into_iter().flatten().collect();
    let failures = b - replicates.len();
    if replicates.is_empty() {
        return Err(BootstrapError::AllReplicatesFailed(b));
    }
    let ci = percentile_ci(&replicates, point.len());
    Ok(BootstrapResult {
        point,
        replicates,
        ci,
        b_requested: b,
        failures,
    })
}

/// Pooled estimate across completed sets: per-set means plus a percentile
/// interval over the concatenated replicate pool.
#[derive(Debug, Clone, Serialize)]
pub struct PooledEstimate {
    pub point: Vec<f64>,
    pub ci: Vec<(f64, f64)>,
    pub per_set_points: Vec<Vec<f64>>,
    pub m: usize,
    /// Total replicates pooled over all sets.
    pub pooled_replicates: usize,
}

impl PooledEstimate {
    pub fn invariant_holds(&self) -> bool {
        self.point
            .iter()
            .enumerate()
            .all(|(d, p)| self.ci[d].0 <= *p && *p <= self.ci[d].1)
    }
}

/// Pool boot-within-impute results: point = mean of per-set points,
/// CI = percentiles of the concatenated replicate pool.
pub fn pool(per_set: &[BootstrapResult]) -> Result<PooledEstimate, BootstrapError> {
    if per_set.len() < 2 {
        return Err(BootstrapError::TooFewSets);
    }
    let dim = per_set[0].point.len();
    if per_set
        .iter()
        .any(|s| s.point.len() != dim || s.replicates.iter().any(|r| r.len() != dim))
    {
        return Err(BootstrapError::DimensionMismatch);
    }
    let m = per_set.len() as f64;
    let point: Vec<f64> = (0..dim)
        .map(|d| per_set.iter().map(|s| s.point[d]).sum::<f64>() / m)
        .collect();
    let pool: Vec<Vec<f64>> = per_set
        .iter()
        .flat_map(|s| s.replicates.iter().cloned())
        .collect();
    let ci = percentile_ci(&pool, dim);
    Ok(PooledEstimate {
        point,
        ci,
        per_set_points: per_set.iter().map(|s| s.point.clone()).collect(),
        m: per_set.len(),
        pooled_replicates: pool.len(),
    })
}

/// Rubin's rules over per-set points and variances, available as an
/// alternative to percentile pooling.
pub fn pool_rubin(points: &[Vec<f64>], variances: &[Vec<f64>]) -> Result<PooledEstimate, BootstrapError> {
    if points.len() < 2 || points.len() != variances.len() {
        return Err(BootstrapError::TooFewSets);
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) || variances.iter().any(|v| v.len() != dim) {
        return Err(BootstrapError::DimensionMismatch);
    }
    let m = points.len() as f64;
    let mut point = vec![0.0; dim];
    let mut ci = Vec::with_capacity(dim);
    for d in 0..dim {
        let mean = points.iter().map(|p| p[d]).sum::<f64>() / m;
        let within = variances.iter().map(|v| v[d]).sum::<f64>() / m;
        let between = points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let total = within + (1.0 + 1.0 / m) * between;
        point[d] = mean;
        let half = crate::stats::Z_95 * total.sqrt();
        ci.push((mean - half, mean + half));
    }
    Ok(PooledEstimate {
        point: point.clone(),
        ci,
        per_set_points: points.to_vec(),
        m: points.len(),
        pooled_replicates: 0,
    })
}

/// Average per-subject weights over completed sets (the pooling mode used
/// for IPW weights across imputations).
pub fn pool_weights(per_set_weights: &[Vec<f64>]) -> Result<Vec<f64>, BootstrapError> {
    if per_set_weights.is_empty() {
        return Err(BootstrapError::TooFewSets);
    }
    let n = per_set_weights[0].len();
    if per_set_weights.iter().any(|w| w.len() != n) {
        return Err(BootstrapError::DimensionMismatch);
    }
    let m = per_set_weights.len() as f64;
    Ok((0..n)
        .map(|i| per_set_weights.iter().map(|w| w[i]).sum::<f64>() / m)
        .collect())
}
