//! Propensity modelling and inverse-probability-of-treatment weighting:
//! logistic regression by IRLS, positivity/overlap diagnostics, ATE/ATT/ATNT
//! weights and weighted Kaplan-Meier curves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coxmod::{ConvergenceStep, CovariateSpec, DesignInfo, DesignMatrix, FitError};
use crate::linalg;
use crate::nonparam::{kaplan_meier, NonparamError, SurvivalCurve};
use crate::registry::{Rule, SubjectRecord};

#[derive(Debug, Error)]
pub enum WeightError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("propensity score outside (0,1) for subjects: {}", ids.join(", "))]
    DegeneratePropensity { ids: Vec<String> },
    #[error("non-positive weight for subject `{0}`")]
    NonPositiveWeight(String),
    #[error(transparent)]
    Nonparam(#[from] NonparamError),
    #[error("records and weights must have equal length")]
    LengthMismatch,
}

const MAX_ITER: usize = 60;

/// Convergence tolerance for the score max-norm. The score scales with n,
/// so the cutoff is scale-aware but never looser than 1e-8.
fn score_tol(n: usize) -> f64 {
    (1e-13 * n as f64).clamp(1e-10, 1e-8)
}
const BETA_LIMIT: f64 = 20.0;

/// A fitted logistic model. The design gains a leading intercept column on
/// top of the covariate spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticFit {
    pub info: DesignInfo,
    /// Intercept first, then one coefficient per design column.
    pub coefficients: Vec<f64>,
    pub columns: Vec<String>,
    /// Row-major (p+1) x (p+1) inverse observed information.
    pub covariance: Vec<f64>,
    pub trace: Vec<ConvergenceStep>,
    /// Set when a coefficient ran beyond the divergence guard, indicating
    /// separation; estimates are clamped, not trustworthy.
    pub separation: bool,
    pub n: usize,
}

impl LogisticFit {
    pub fn se(&self) -> Vec<f64> {
        let p = self.coefficients.len();
        (0..p)
            .map(|j| self.covariance[j * p + j].max(0.0).sqrt())
            .collect()
    }

    /// Fitted probability for one record.
    pub fn predict_proba(&self, record: &SubjectRecord) -> Result<f64, FitError> {
        let row = self.info.encode_row(record)?;
        let eta = self.coefficients[0] + linalg::dot(&self.coefficients[1..], &row);
        Ok(1.0 / (1.0 + (-eta).exp()))
    }

    /// Fitted probabilities for a record set.
    pub fn predict_all(&self, records: &[SubjectRecord]) -> Result<Vec<f64>, FitError> {
        records.iter().map(|r| self.predict_proba(r)).collect()
    }
}

/// Fit a logistic regression of `labels` on the spec's covariates by
/// iteratively reweighted least squares.
pub fn fit_logistic(
    records: &[SubjectRecord],
    labels: &[bool],
    spec: &CovariateSpec,
) -> Result<LogisticFit, WeightError> {
    if records.is_empty() {
        return Err(WeightError::Fit(FitError::EmptyInput));
    }
    if records.len() != labels.len() {
        return Err(WeightError::LengthMismatch);
    }
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(WeightError::Fit(FitError::SingleClass));
    }
    let info = DesignInfo::from_records(records, spec)?;
    let x = info.encode(records)?;
    fit_logistic_design(&info, &x, labels)
}

/// IRLS against a pre-built design (an intercept column is added here).
pub fn fit_logistic_design(
    info: &DesignInfo,
    x: &DesignMatrix,
    labels: &[bool],
) -> Result<LogisticFit, WeightError> {
    let n = x.n;
    let p = x.p + 1;
    if labels.len() != n {
        return Err(WeightError::LengthMismatch);
    }

    // design with intercept
    let mut xi = vec![0.0_f64; n * p];
    for i in 0..n {
        xi[i * p] = 1.0;
        xi[i * p + 1..(i + 1) * p].copy_from_slice(x.row(i));
    }
    if !linalg::has_full_column_rank(&xi, n, p) {
        return Err(WeightError::Fit(FitError::RankDeficient));
    }

    // fit on unit-RMS columns for conditioning; transform back afterwards
    let mut rms = vec![1.0_f64; p];
    for j in 1..p {
        let mut sum = 0.0;
        for i in 0..n {
            let v = xi[i * p + j];
            sum += v * v;
        }
        rms[j] = (sum / n as f64).sqrt().max(1e-300);
    }
    for i in 0..n {
        for j in 1..p {
            xi[i * p + j] /= rms[j];
        }
    }

    let mut beta = vec![0.0_f64; p];
    let mut trace = Vec::new();
    let mut separation = false;

    let loglik_at = |beta: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
        let mut ll = 0.0;
        let mut score = vec![0.0_f64; p];
        let mut information = vec![0.0_f64; p * p];
        for i in 0..n {
            let row = &xi[i * p..(i + 1) * p];
            let eta = linalg::dot(row, beta);
            let prob = 1.0 / (1.0 + (-eta).exp());
            let y = if labels[i] { 1.0 } else { 0.0 };
            ll += y * eta - ln_1p_exp(eta);
            let resid = y - prob;
            let w = (prob * (1.0 - prob)).max(1e-12);
            for a in 0..p {
                score[a] += resid * row[a];
                for b in 0..=a {
                    information[a * p + b] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in (a + 1)..p {
                information[a * p + b] = information[b * p + a];
            }
        }
        (ll, score, information)
    };

    let tol = score_tol(n);
    let (mut ll, mut score, mut information) = loglik_at(&beta);
    let mut converged = false;
    for iteration in 0..MAX_ITER {
        let score_norm = score.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        if score_norm < tol {
            converged = true;
            trace.push(ConvergenceStep {
                iteration,
                log_likelihood: ll,
                gradient_max_norm: score_norm,
                step_halvings: 0,
            });
            break;
        }
        let chol = linalg::cholesky(&information, p, 1e-12)
            .ok_or(WeightError::Fit(FitError::SingularInformation))?;
        let delta = linalg::cholesky_solve(&chol, &score, p);

        let mut scale = 1.0;
        let mut halvings = 0;
        let (next_beta, next_state) = loop {
            let cand: Vec<f64> = beta
                .iter()
                .zip(&delta)
                .map(|(b, d)| b + scale * d)
                .collect();
            let state = loglik_at(&cand);
            if state.0.is_finite() && state.0 >= ll - 1e-10 {
                break (cand, state);
            }
            halvings += 1;
            if halvings > 10 {
                break (cand, state);
            }
            scale *= 0.5;
        };
        beta = next_beta;
        (ll, score, information) = next_state;

        if beta.iter().zip(&rms).any(|(b, r)| (b / r).abs() > BETA_LIMIT) {
            separation = true;
            for (b, r) in beta.iter_mut().zip(&rms) {
                *b = b.clamp(-BETA_LIMIT * r, BETA_LIMIT * r);
            }
            let state = loglik_at(&beta);
            ll = state.0;
            score = state.1;
            information = state.2;
            trace.push(ConvergenceStep {
                iteration,
                log_likelihood: ll,
                gradient_max_norm: score.iter().fold(0.0_f64, |m, s| m.max(s.abs())),
                step_halvings: halvings,
            });
            break;
        }

        trace.push(ConvergenceStep {
            iteration,
            log_likelihood: ll,
            gradient_max_norm: score.iter().fold(0.0_f64, |m, s| m.max(s.abs())),
            step_halvings: halvings,
        });
    }

    if !converged && !separation {
        let score_norm = score.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        if score_norm >= tol {
            return Err(WeightError::Fit(FitError::NoConvergence {
                iterations: MAX_ITER,
                grad_norm: score_norm,
            }));
        }
    }

    let chol = linalg::cholesky(&information, p, 1e-12)
        .ok_or(WeightError::Fit(FitError::SingularInformation))?;
    let mut covariance = linalg::cholesky_inverse(&chol, p);
    for (b, r) in beta.iter_mut().zip(&rms) {
        *b /= r;
    }
    for i in 0..p {
        for j in 0..p {
            covariance[i * p + j] /= rms[i] * rms[j];
        }
    }

    let mut columns = Vec::with_capacity(p);
    columns.push("intercept".to_string());
    columns.extend(info.columns.iter().cloned());

    Ok(LogisticFit {
        info: info.clone(),
        coefficients: beta,
        columns,
        covariance,
        trace,
        separation,
        n,
    })
}

/// log(1 + e^x) without overflow.
fn ln_1p_exp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// A labelled subgroup checked for positivity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupSpec {
    pub label: String,
    #[serde(flatten)]
    pub rule: Rule,
}

/// Default positivity subgroups: the over-75 cell.
pub fn default_subgroups() -> Vec<SubgroupSpec> {
    vec![SubgroupSpec {
        label: "age>75".into(),
        rule: Rule::AgeOver { years: 75.0 },
    }]
}

#[derive(Debug, Clone, Serialize)]
pub struct SubgroupFlag {
    pub label: String,
    pub n: usize,
    pub mean_ps: f64,
    pub flagged: bool,
}

/// Per-arm propensity overlap diagnostics on shared histogram bins.
#[derive(Debug, Clone, Serialize)]
pub struct OverlapReport {
    pub epsilon: f64,
    /// Shared bin edges over [0, 1].
    pub bin_edges: Vec<f64>,
    pub hist_pkt: Vec<usize>,
    pub hist_dialysis: Vec<usize>,
    pub min_ps_pkt: f64,
    pub max_ps_pkt: f64,
    pub min_ps_dialysis: f64,
    pub max_ps_dialysis: f64,
    /// Subjects with PS < epsilon or PS > 1 - epsilon, per arm.
    pub extreme_pkt: usize,
    pub extreme_dialysis: usize,
    pub subgroups: Vec<SubgroupFlag>,
}

impl OverlapReport {
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,pkt,dialysis\n");
        for k in 0..self.hist_pkt.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.bin_edges[k],
                self.bin_edges[k + 1],
                self.hist_pkt[k],
                self.hist_dialysis[k]
            ));
        }
        out
    }
}

const HIST_BINS: usize = 50;

/// Positivity diagnostics: shared-bin PS histograms per arm, extremes and
/// configured subgroup flags (mean PS below `epsilon`).
pub fn positivity_report(
    fit: &LogisticFit,
    records: &[SubjectRecord],
    epsilon: f64,
    subgroups: &[SubgroupSpec],
) -> Result<OverlapReport, WeightError> {
    let ps = fit.predict_all(records)?;
    let bin_edges: Vec<f64> = (0..=HIST_BINS).map(|k| k as f64 / HIST_BINS as f64).collect();
    let mut hist_pkt = vec![0usize; HIST_BINS];
    let mut hist_dialysis = vec![0usize; HIST_BINS];
    let mut min_max = [(f64::INFINITY, f64::NEG_INFINITY); 2];
    let mut extreme = [0usize; 2];

    for (r, &p) in records.iter().zip(&ps) {
        let arm = usize::from(!r.pkt);
        let bin = ((p * HIST_BINS as f64) as usize).min(HIST_BINS - 1);
        if r.pkt {
            hist_pkt[bin] += 1;
        } else {
            hist_dialysis[bin] += 1;
        }
        min_max[arm].0 = min_max[arm].0.min(p);
        min_max[arm].1 = min_max[arm].1.max(p);
        if p < epsilon || p > 1.0 - epsilon {
            extreme[arm] += 1;
        }
    }

    let subgroups = subgroups
        .iter()
        .map(|spec| {
            let mut total = 0.0;
            let mut n = 0usize;
            for (r, &p) in records.iter().zip(&ps) {
                if spec.rule.excludes(r) {
                    total += p;
                    n += 1;
                }
            }
            let mean_ps = if n > 0 { total / n as f64 } else { f64::NAN };
            SubgroupFlag {
                label: spec.label.clone(),
                n,
                mean_ps,
                flagged: n > 0 && mean_ps < epsilon,
            }
        })
        .collect();

    Ok(OverlapReport {
        epsilon,
        bin_edges,
        hist_pkt,
        hist_dialysis,
        min_ps_pkt: min_max[0].0,
        max_ps_pkt: min_max[0].1,
        min_ps_dialysis: min_max[1].0,
        max_ps_dialysis: min_max[1].1,
        extreme_pkt: extreme[0],
        extreme_dialysis: extreme[1],
        subgroups,
    })
}

/// Target population of the weighted analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimand {
    Ate,
    Att,
    Atnt,
}

/// Inverse-probability-of-treatment weights. Stabilization multiplies by
/// the marginal probability of the subject's own arm.
pub fn ipw_weights(
    fit: &LogisticFit,
    records: &[SubjectRecord],
    estimand: Estimand,
    stabilized: bool,
) -> Result<Vec<f64>, WeightError> {
    let ps = fit.predict_all(records)?;
    let violators: Vec<String> = records
        .iter()
        .zip(&ps)
        .filter(|(_, &p)| !(p > 0.0 && p < 1.0))
        .map(|(r, _)| r.id.clone())
        .collect();
    if !violators.is_empty() {
        return Err(WeightError::DegeneratePropensity { ids: violators });
    }
    let p_treated = records.iter().filter(|r| r.pkt).count() as f64 / records.len() as f64;

    Ok(records
        .iter()
        .zip(&ps)
        .map(|(r, &p)| {
            let base = match estimand {
                Estimand::Ate => {
                    if r.pkt {
                        1.0 / p
                    } else {
                        1.0 / (1.0 - p)
                    }
                }
                Estimand::Att => {
                    if r.pkt {
                        1.0
                    } else {
                        p / (1.0 - p)
                    }
                }
                Estimand::Atnt => {
                    if r.pkt {
                        (1.0 - p) / p
                    } else {
                        1.0
                    }
                }
            };
            if stabilized {
                base * if r.pkt { p_treated } else { 1.0 - p_treated }
            } else {
                base
            }
        })
        .collect())
}

/// Weighted Kaplan-Meier per arm: (transplant arm, dialysis arm).
pub fn ipw_km(
    records: &[SubjectRecord],
    weights: &[f64],
) -> Result<(SurvivalCurve, SurvivalCurve), WeightError> {
    if records.len() != weights.len() {
        return Err(WeightError::LengthMismatch);
    }
    if let Some((r, _)) = records
        .iter()
        .zip(weights)
        .find(|(_, &w)| !(w > 0.0 && w.is_finite()))
    {
        return Err(WeightError::NonPositiveWeight(r.id.clone()));
    }
    let arm = |want: bool| -> Result<SurvivalCurve, WeightError> {
        let mut times = Vec::new();
        let mut events = Vec::new();
        let mut w = Vec::new();
        for (r, &wi) in records.iter().zip(weights) {
            if r.pkt == want {
                times.push(r.t_days as f64);
                events.push(r.event);
                w.push(wi);
            }
        }
        Ok(kaplan_meier(&times, &events, Some(&w))?)
    };
    Ok((arm(true)?, arm(false)?))
}
