//! Cox proportional hazards fitting by partial-likelihood Newton-Raphson
//! with Efron (default) or Breslow tie handling, Breslow baseline cumulative
//! hazard and subject-specific survival prediction.

mod design;

pub use design::{Covariate, CovariateSpec, DesignInfo, DesignMatrix, Term};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::registry::SubjectRecord;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("empty input")]
    EmptyInput,
    #[error("no events in the fitting set")]
    NoEvents,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("observed information is singular at the solution")]
    SingularInformation,
    #[error("monotone likelihood: coefficient for `{column}` diverged (|beta| > {limit})")]
    NonIdentifiable { column: String, limit: f64 },
    #[error("no convergence after {iterations} iterations (gradient max-norm {grad_norm:.3e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },
    #[error("fit has not converged")]
    NotConverged,
    #[error("missing value in column `{column}` for subject `{id}`")]
    MissingValue { column: String, id: String },
    #[error("unseen categorical level `{value}` in column `{column}`")]
    UnseenLevel { column: String, value: String },
    #[error("times, events and design must have equal length")]
    LengthMismatch,
    #[error("both outcome classes must be present")]
    SingleClass,
}

/// Tie handling for the partial likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMethod {
    #[default]
    Efron,
    Breslow,
}

/// Divergence guard: coefficients beyond this magnitude flag a monotone
/// likelihood (separation) rather than a usable estimate.
const BETA_LIMIT: f64 = 20.0;
const MAX_ITER: usize = 50;

/// Convergence cutoff for the score max-norm. Accumulated float noise in
/// the risk-set sums grows superlinearly with the number of event times,
/// so the cutoff widens accordingly; it stays at 1e-8 for small fits so a
/// monotone likelihood still walks its coefficient past the
/// non-identifiability guard instead of stalling into convergence.
fn gradient_tol(n_events: usize) -> f64 {
    1e-8 * (n_events as f64 / 100.0).max(1.0).powf(1.5)
}

/// One Newton-Raphson step of the convergence trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceStep {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub gradient_max_norm: f64,
    pub step_halvings: usize,
}

/// Nondecreasing step function, used for the Breslow cumulative hazard.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepFunction {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    /// Value at the latest step time <= `t`; 0 before the first step.
    pub fn at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&x| x <= t) {
            0 => 0.0,
            k => self.values[k - 1],
        }
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }
}

/// A converged Cox fit: coefficients, observed-information covariance,
/// Breslow baseline cumulative hazard and the encoding that produced the
/// design. Serializable for pipeline caching.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxFit {
    pub info: DesignInfo,
    pub beta: Vec<f64>,
    /// Row-major p x p inverse observed information.
    pub covariance: Vec<f64>,
    pub log_likelihood: f64,
    pub trace: Vec<ConvergenceStep>,
    /// Breslow baseline cumulative hazard at the distinct event times,
    /// referring to a subject at the centering point of the design.
    pub baseline: StepFunction,
    /// Label of the arm (or data slice) this model was fitted on.
    pub arm: String,
    pub ties: TieMethod,
    pub n: usize,
    pub n_events: usize,
    pub converged: bool,
}

/// Model-based survival curve for one covariate row.
#[derive(Debug, Clone, Serialize)]
pub struct PredictedSurvival {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
}

impl PredictedSurvival {
    pub fn survival_at(&self, t: f64) -> f64 {
        crate::nonparam::step_at(&self.times, &self.survival, t, 1.0)
    }
}

impl CoxFit {
    pub fn se(&self) -> Vec<f64> {
        let p = self.beta.len();
        (0..p)
            .map(|j| self.covariance[j * p + j].max(0.0).sqrt())
            .collect()
    }

    /// Breslow baseline cumulative hazard of a converged fit.
    pub fn baseline_cumhaz(&self) -> Result<&StepFunction, FitError> {
        if !self.converged {
            return Err(FitError::NotConverged);
        }
        Ok(&self.baseline)
    }

    /// Linear predictor (prognostic score) of one record under this model,
    /// relative to the design's centering point.
    pub fn linear_predictor(&self, record: &SubjectRecord) -> Result<f64, FitError> {
        let row = self.info.encode_row(record)?;
        Ok(linalg::dot(&self.beta, &row))
    }

    /// S(t | Z) = exp(-Lambda0(t) * exp(beta' Z)) evaluated on `grid`.
    pub fn predict_survival(
        &self,
        record: &SubjectRecord,
        grid: &[f64],
    ) -> Result<PredictedSurvival, FitError> {
        if !self.converged {
            return Err(FitError::NotConverged);
        }
        let risk = self.linear_predictor(record)?.exp();
        Ok(PredictedSurvival {
            times: grid.to_vec(),
            survival: grid
                .iter()
                .map(|&t| (-self.baseline.at(t) * risk).exp())
                .collect(),
        })
    }
}

/// Fit a Cox model for the registry outcome (follow-up days, death flag).
pub fn fit_cox(
    records: &[SubjectRecord],
    spec: &CovariateSpec,
    ties: TieMethod,
    arm: &str,
) -> Result<CoxFit, FitError> {
    let times: Vec<f64> = records.iter().map(|r| r.t_days as f64).collect();
    let events: Vec<bool> = records.iter().map(|r| r.event).collect();
    fit_cox_with_times(records, &times, &events, spec, ties, arm)
}

/// Fit a Cox model with caller-supplied times and events (used for
/// transformed-time g-estimation), encoding covariates from the records.
pub fn fit_cox_with_times(
    records: &[SubjectRecord],
    times: &[f64],
    events: &[bool],
    spec: &CovariateSpec,
    ties: TieMethod,
    arm: &str,
) -> Result<CoxFit, FitError> {
    let info = DesignInfo::from_records(records, spec)?;
    let x = info.encode(records)?;
    fit_cox_design(&info, &x, times, events, ties, arm)
}

/// Fit against a pre-built design. The design must be centered per `info`.
pub fn fit_cox_design(
    info: &DesignInfo,
    x: &DesignMatrix,
    times: &[f64],
    events: &[bool],
    ties: TieMethod,
    arm: &str,
) -> Result<CoxFit, FitError> {
    if times.len() != x.n || events.len() != x.n {
        return Err(FitError::LengthMismatch);
    }
    if x.n == 0 {
        return Err(FitError::EmptyInput);
    }
    let n_events = events.iter().filter(|&&e| e).count();
    if n_events == 0 {
        return Err(FitError::NoEvents);
    }
    if !linalg::has_full_column_rank(&x.x, x.n, x.p) {
        return Err(FitError::RankDeficient);
    }

    // fit on unit-RMS columns so tolerances and the information matrix are
    // well conditioned; coefficients transform back at the end
    let rms = column_rms(x);
    let xs = scaled_design(x, &rms);
    let x = &xs;

    let layout = RiskSetLayout::new(times, events);
    let p = x.p;
    let mut beta = vec![0.0_f64; p];
    let mut trace = Vec::new();
    let tol = gradient_tol(n_events);

    let (mut loglik, mut grad, mut information) = partial_likelihood(&layout, x, &beta, ties);
    let mut converged = false;

    for iteration in 0..MAX_ITER {
        let grad_norm = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        if grad_norm < tol {
            converged = true;
            trace.push(ConvergenceStep {
                iteration,
                log_likelihood: loglik,
                gradient_max_norm: grad_norm,
                step_halvings: 0,
            });
            break;
        }

        let chol = linalg::cholesky(&information, p, 1e-12)
            .ok_or(FitError::SingularInformation)?;
        let delta = linalg::cholesky_solve(&chol, &grad, p);

        // step-halving on likelihood decrease
        let mut scale = 1.0;
        let mut halvings = 0;
        let (new_beta, new_state) = loop {
            let cand: Vec<f64> = beta
                .iter()
                .zip(&delta)
                .map(|(b, d)| b + scale * d)
                .collect();
            let state = partial_likelihood(&layout, x, &cand, ties);
            if state.0.is_finite() && state.0 >= loglik - 1e-12 {
                break (cand, state);
            }
            halvings += 1;
            if halvings > 12 {
                break (cand, state);
            }
            scale *= 0.5;
        };
        beta = new_beta;
        (loglik, grad, information) = new_state;

        for (j, b) in beta.iter().enumerate() {
            // divergence guard on the raw coefficient scale
            if (b / rms[j]).abs() > BETA_LIMIT {
                return Err(FitError::NonIdentifiable {
                    column: info.columns[j].clone(),
                    limit: BETA_LIMIT,
                });
            }
        }

        trace.push(ConvergenceStep {
            iteration,
            log_likelihood: loglik,
            gradient_max_norm: grad.iter().fold(0.0_f64, |m, g| m.max(g.abs())),
            step_halvings: halvings,
        });
    }

    if !converged {
        let grad_norm = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        // a zero-gradient start (e.g. perfectly balanced data) converges at
        // iteration 0 and never enters the loop body
        if grad_norm < tol {
            converged = true;
        } else {
            return Err(FitError::NoConvergence {
                iterations: MAX_ITER,
                grad_norm,
            });
        }
    }

    let chol = linalg::cholesky(&information, p, 1e-12).ok_or(FitError::SingularInformation)?;
    let mut covariance = linalg::cholesky_inverse(&chol, p);
    // back to the raw column scale
    for (j, b) in beta.iter_mut().enumerate() {
        *b /= rms[j];
    }
    for i in 0..p {
        for j in 0..p {
            covariance[i * p + j] /= rms[i] * rms[j];
        }
    }
    let baseline = breslow_baseline(&layout, x, &scale_back(&beta, &rms));

    Ok(CoxFit {
        info: info.clone(),
        beta,
        covariance,
        log_likelihood: loglik,
        trace,
        baseline,
        arm: arm.to_string(),
        ties,
        n: x.n,
        n_events,
        converged,
    })
}

/// Root-mean-square per column; rank checking has already rejected zero
/// columns.
fn column_rms(x: &DesignMatrix) -> Vec<f64> {
    let mut rms = vec![0.0_f64; x.p];
    for i in 0..x.n {
        for (j, v) in x.row(i).iter().enumerate() {
            rms[j] += v * v;
        }
    }
    for r in rms.iter_mut() {
        *r = (*r / x.n as f64).sqrt().max(1e-300);
    }
    rms
}

fn scaled_design(x: &DesignMatrix, rms: &[f64]) -> DesignMatrix {
    let mut scaled = x.clone();
    for i in 0..x.n {
        for j in 0..x.p {
            scaled.x[i * x.p + j] /= rms[j];
        }
    }
    scaled
}

/// Raw-scale coefficients re-expressed against the scaled design.
fn scale_back(beta_raw: &[f64], rms: &[f64]) -> Vec<f64> {
    beta_raw.iter().zip(rms).map(|(b, r)| b * r).collect()
}

/// Subjects grouped by distinct time, ordered descending, so a single sweep
/// accumulates risk sets.
struct RiskSetLayout {
    /// Subject indices sorted by time descending.
    order: Vec<usize>,
    /// (start, end) slices of `order` per distinct time, descending; the
    /// flag marks whether any death occurs at that time.
    groups: Vec<(usize, usize, bool)>,
    times_desc: Vec<f64>,
    events: Vec<bool>,
}

impl RiskSetLayout {
    fn new(times: &[f64], events: &[bool]) -> Self {
        let n = times.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
        let mut groups = Vec::new();
        let mut times_desc = Vec::new();
        let mut k = 0;
        while k < n {
            let t = times[order[k]];
            let mut j = k;
            let mut any_death = false;
            while j < n && times[order[j]] == t {
                any_death |= events[order[j]];
                j += 1;
            }
            groups.push((k, j, any_death));
            times_desc.push(t);
            k = j;
        }
        Self {
            order,
            groups,
            times_desc,
            events: events.to_vec(),
        }
    }
}

/// Log partial likelihood, gradient and observed information at `beta`.
fn partial_likelihood(
    layout: &RiskSetLayout,
    x: &DesignMatrix,
    beta: &[f64],
    ties: TieMethod,
) -> (f64, Vec<f64>, Vec<f64>) {
    let p = x.p;
    let n = x.n;
    let mut eta = vec![0.0_f64; n];
    let mut w = vec![0.0_f64; n];
    for i in 0..n {
        eta[i] = linalg::dot(x.row(i), beta);
        w[i] = eta[i].exp();
    }

    let mut loglik = 0.0;
    let mut grad = vec![0.0_f64; p];
    let mut info = vec![0.0_f64; p * p];

    // risk-set accumulators, built up as times decrease
    let mut s0 = 0.0_f64;
    let mut s1 = vec![0.0_f64; p];
    let mut s2 = vec![0.0_f64; p * p];

    let mut d1 = vec![0.0_f64; p];
    let mut d2 = vec![0.0_f64; p * p];

    // events include the subjects dying at t in the risk set
    for &(start, end, any_death) in &layout.groups {
        for k in start..end {
            let i = layout.order[k];
            let wi = w[i];
            let xi = x.row(i);
            s0 += wi;
            for a in 0..p {
                s1[a] += wi * xi[a];
                let row = a * p;
                for b in 0..=a {
                    s2[row + b] += wi * xi[a] * xi[b];
                }
            }
        }
        if !any_death {
            continue;
        }

        // tied-death aggregates at this time
        let mut d0 = 0.0_f64;
        d1.fill(0.0);
        d2.fill(0.0);
        let mut d_count = 0.0_f64;
        for k in start..end {
            let i = layout.order[k];
            if !layout.events[i] {
                continue;
            }
            d_count += 1.0;
            loglik += eta[i];
            let wi = w[i];
            let xi = x.row(i);
            d0 += wi;
            for a in 0..p {
                d1[a] += wi * xi[a];
                grad[a] += xi[a];
                let row = a * p;
                for b in 0..=a {
                    d2[row + b] += wi * xi[a] * xi[b];
                }
            }
        }

        let steps = match ties {
            TieMethod::Breslow => 1,
            TieMethod::Efron => d_count as usize,
        };
        for l in 0..steps {
            let frac = match ties {
                TieMethod::Breslow => 0.0,
                TieMethod::Efron => l as f64 / d_count,
            };
            let mult = match ties {
                TieMethod::Breslow => d_count,
                TieMethod::Efron => 1.0,
            };
            let phi = s0 - frac * d0;
            loglik -= mult * phi.ln();
            let inv = 1.0 / phi;
            for a in 0..p {
                let psi_a = (s1[a] - frac * d1[a]) * inv;
                grad[a] -= mult * psi_a;
                let row = a * p;
                for b in 0..=a {
                    let psi_b = (s1[b] - frac * d1[b]) * inv;
                    let second = (s2[row + b] - frac * d2[row + b]) * inv;
                    info[row + b] += mult * (second - psi_a * psi_b);
                }
            }
        }
    }

    for a in 0..p {
        for b in (a + 1)..p {
            info[a * p + b] = info[b * p + a];
        }
    }
    (loglik, grad, info)
}

/// Breslow baseline cumulative hazard increments at each distinct death time.
fn breslow_baseline(layout: &RiskSetLayout, x: &DesignMatrix, beta: &[f64]) -> StepFunction {
    let n = x.n;
    let mut w = vec![0.0_f64; n];
    for i in 0..n {
        w[i] = linalg::dot(x.row(i), beta).exp();
    }
    let mut s0 = 0.0_f64;
    let mut times = Vec::new();
    let mut increments = Vec::new();
    for (g, &(start, end, any_death)) in layout.groups.iter().enumerate() {
        for k in start..end {
            s0 += w[layout.order[k]];
        }
        if any_death {
            let deaths = (start..end)
                .filter(|&k| layout.events[layout.order[k]])
                .count() as f64;
            times.push(layout.times_desc[g]);
            increments.push(deaths / s0);
        }
    }
    // groups were descending: reverse and accumulate
    times.reverse();
    increments.reverse();
    let mut cum = 0.0;
    let values = increments
        .iter()
        .map(|d| {
            cum += d;
            cum
        })
        .collect();
    StepFunction { times, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{Pkd, Sex};
    use chrono::NaiveDate;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn record(id: &str, age: f64, t_days: i64, event: bool) -> SubjectRecord {
        SubjectRecord {
            id: id.into(),
            entry_date: NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(),
            age,
            sex: Sex::Male,
            region: "Stockholm".into(),
            pkd: Pkd::Other,
            diabetes: None,
            hypertension: None,
            ihd: None,
            pad: None,
            cvd: None,
            gfr: None,
            pkt: false,
            t_switch_days: None,
            t_days,
            event,
        }
    }

    fn binary_spec(center: bool) -> CovariateSpec {
        // age carries the 0/1 exposure in these fixtures
        let mut spec = CovariateSpec::main_effects(&[Covariate::Age]);
        spec.center = center;
        spec
    }

    #[test]
    fn self_symmetric_data_gives_zero_coefficient() {
        let records = vec![
            record("a", 1.0, 10, true),
            record("b", 0.0, 10, true),
            record("c", 1.0, 20, false),
            record("d", 0.0, 20, false),
            record("e", 1.0, 30, true),
            record("f", 0.0, 30, true),
        ];
        let fit = fit_cox(&records, &binary_spec(true), TieMethod::Efron, "test").unwrap();
        assert!(fit.beta[0].abs() < 1e-10, "beta = {}", fit.beta[0]);
        assert!(fit.converged);
    }

    /// Log partial likelihood of the 4-subject fixture, computed directly
    /// from the 3-factor product; the oracle is independent of the fitter.
    fn hand_logpl(beta: f64) -> f64 {
        let e = beta.exp();
        (e / (2.0 * e + 2.0)).ln() + (1.0 / (e + 2.0)).ln() + (e / (e + 1.0)).ln()
    }

    #[test]
    fn four_subject_fit_matches_grid_maximization_oracle() {
        let records = vec![
            record("a", 1.0, 1, true),
            record("b", 0.0, 2, true),
            record("c", 1.0, 3, true),
            record("d", 0.0, 4, true),
        ];
        // coarse-to-fine grid search down to 1e-6 resolution
        let mut best = (-5.0, hand_logpl(-5.0));
        let mut lo = -5.0;
        let mut hi = 5.0;
        for step in [1e-2, 1e-4, 1e-6] {
            let mut b = lo;
            while b <= hi {
                let v = hand_logpl(b);
                if v > best.1 {
                    best = (b, v);
                }
                b += step;
            }
            lo = best.0 - 2.0 * step.max(1e-4);
            hi = best.0 + 2.0 * step.max(1e-4);
        }
        let fit = fit_cox(&records, &binary_spec(false), TieMethod::Efron, "test").unwrap();
        assert!(
            (fit.beta[0] - best.0).abs() < 1e-5,
            "fit {} vs oracle {}",
            fit.beta[0],
            best.0
        );
        assert!((fit.log_likelihood - best.1).abs() < 1e-9);
    }

    #[test]
    fn null_model_baseline_equals_nelson_aalen() {
        let records = vec![
            record("a", 0.0, 1, true),
            record("b", 0.0, 2, false),
            record("c", 0.0, 3, true),
            record("d", 0.0, 3, true),
            record("e", 0.0, 5, false),
        ];
        let spec = CovariateSpec::main_effects(&[]);
        let fit = fit_cox(&records, &spec, TieMethod::Efron, "test").unwrap();
        let base = fit.baseline_cumhaz().unwrap();
        // Nelson-Aalen: 1/5 at t=1, + 2/3 at t=3
        assert_eq!(base.times, vec![1.0, 3.0]);
        assert!((base.values[0] - 0.2).abs() < 1e-12);
        assert!((base.values[1] - (0.2 + 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn four_subject_breslow_baseline_matches_hand_computation() {
        let records = vec![
            record("a", 1.0, 1, true),
            record("b", 0.0, 2, true),
            record("c", 1.0, 3, true),
            record("d", 0.0, 4, true),
        ];
        let fit = fit_cox(&records, &binary_spec(false), TieMethod::Efron, "test").unwrap();
        let e = fit.beta[0].exp();
        let base = fit.baseline_cumhaz().unwrap();
        let expected = [
            1.0 / (2.0 * e + 2.0),
            1.0 / (e + 2.0),
            1.0 / (e + 1.0),
            1.0,
        ];
        let mut cum = 0.0;
        for (k, inc) in expected.iter().enumerate() {
            cum += inc;
            assert!(
                (base.values[k] - cum).abs() < 1e-10,
                "step {k}: {} vs {}",
                base.values[k],
                cum
            );
        }
    }

    #[test]
    fn efron_equals_breslow_without_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let records: Vec<SubjectRecord> = (0..60)
            .map(|i| {
                record(
                    &format!("s{i}"),
                    rng.random_range(0.0..10.0),
                    1000 + i, // all distinct
                    rng.random_bool(0.7),
                )
            })
            .collect();
        let a = fit_cox(&records, &binary_spec(true), TieMethod::Efron, "t").unwrap();
        let b = fit_cox(&records, &binary_spec(true), TieMethod::Breslow, "t").unwrap();
        assert!((a.beta[0] - b.beta[0]).abs() < 1e-12);
        assert!((a.log_likelihood - b.log_likelihood).abs() < 1e-9);
    }

    #[test]
    fn predict_at_zero_linear_predictor_is_baseline() {
        let records = vec![
            record("a", 1.0, 10, true),
            record("b", 0.0, 10, true),
            record("c", 1.0, 25, true),
            record("d", 0.0, 25, true),
        ];
        let fit = fit_cox(&records, &binary_spec(false), TieMethod::Efron, "t").unwrap();
        assert!(fit.beta[0].abs() < 1e-10);
        let grid = [5.0, 10.0, 25.0];
        let pred = fit.predict_survival(&record("x", 0.0, 1, false), &grid).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            assert!((pred.survival[i] - (-fit.baseline.at(t)).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_risk_squares_survival() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let records: Vec<SubjectRecord> = (0..80)
            .map(|i| {
                let age = rng.random_range(0.0..4.0);
                let t = (200.0 * (-(rng.random::<f64>().ln())) / (0.4 * age + 0.3_f64).exp()) as i64;
                record(&format!("s{i}"), age, t.max(1), true)
            })
            .collect();
        let fit = fit_cox(&records, &binary_spec(false), TieMethod::Efron, "t").unwrap();
        let beta = fit.beta[0];
        assert!(beta.abs() > 1e-3);
        let base_age = 1.0;
        let doubled_age = base_age + std::f64::consts::LN_2 / beta;
        let grid: Vec<f64> = (1..20).map(|i| i as f64 * 30.0).collect();
        let s1 = fit.predict_survival(&record("p", base_age, 1, false), &grid).unwrap();
        let s2 = fit
            .predict_survival(&record("q", doubled_age, 1, false), &grid)
            .unwrap();
        for i in 0..grid.len() {
            assert!(
                (s2.survival[i] - s1.survival[i] * s1.survival[i]).abs() < 1e-10,
                "t={}: {} vs {}",
                grid[i],
                s2.survival[i],
                s1.survival[i] * s1.survival[i]
            );
        }
    }

    #[test]
    fn predictions_invariant_to_centering() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let records: Vec<SubjectRecord> = (0..50)
            .map(|i| {
                record(
                    &format!("s{i}"),
                    rng.random_range(30.0..80.0),
                    rng.random_range(10..2000),
                    rng.random_bool(0.6),
                )
            })
            .collect();
        let centered = fit_cox(&records, &binary_spec(true), TieMethod::Efron, "t").unwrap();
        let raw = fit_cox(&records, &binary_spec(false), TieMethod::Efron, "t").unwrap();
        let grid: Vec<f64> = (1..=20).map(|i| i as f64 * 100.0).collect();
        for r in records.iter().take(5) {
            let a = centered.predict_survival(r, &grid).unwrap();
            let b = raw.predict_survival(r, &grid).unwrap();
            for i in 0..grid.len() {
                assert!((a.survival[i] - b.survival[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn prognostic_score_orders_survival() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let records: Vec<SubjectRecord> = (0..60)
            .map(|i| {
                record(
                    &format!("s{i}"),
                    rng.random_range(30.0..80.0),
                    rng.random_range(10..2000),
                    rng.random_bool(0.7),
                )
            })
            .collect();
        let fit = fit_cox(&records, &binary_spec(true), TieMethod::Efron, "t").unwrap();
        let grid: Vec<f64> = vec![500.0, 1000.0, 1500.0];
        for pair in records.windows(2) {
            let eta1 = fit.linear_predictor(&pair[0]).unwrap();
            let eta2 = fit.linear_predictor(&pair[1]).unwrap();
            if (eta1 - eta2).abs() < 1e-12 {
                continue;
            }
            let s1 = fit.predict_survival(&pair[0], &grid).unwrap();
            let s2 = fit.predict_survival(&pair[1], &grid).unwrap();
            for i in 0..grid.len() {
                if fit.baseline.at(grid[i]) > 0.0 {
                    assert_eq!(eta1 > eta2, s1.survival[i] < s2.survival[i]);
                }
            }
        }
    }

    #[test]
    fn fitted_likelihood_is_a_local_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let records: Vec<SubjectRecord> = (0..100)
            .map(|i| {
                record(
                    &format!("s{i}"),
                    rng.random_range(0.0..3.0),
                    rng.random_range(10..3000),
                    rng.random_bool(0.5),
                )
            })
            .collect();
        let spec = binary_spec(true);
        let info = DesignInfo::from_records(&records, &spec).unwrap();
        let x = info.encode(&records).unwrap();
        let times: Vec<f64> = records.iter().map(|r| r.t_days as f64).collect();
        let events: Vec<bool> = records.iter().map(|r| r.event).collect();
        let fit = fit_cox_design(&info, &x, &times, &events, TieMethod::Efron, "t").unwrap();
        let layout = RiskSetLayout::new(&times, &events);
        let (best, _, _) = partial_likelihood(&layout, &x, &fit.beta, TieMethod::Efron);
        for _ in 0..100 {
            let perturbed: Vec<f64> = fit
                .beta
                .iter()
                .map(|b| b + rng.random_range(-0.05..0.05))
                .collect();
            let (ll, _, _) = partial_likelihood(&layout, &x, &perturbed, TieMethod::Efron);
            assert!(ll <= best + 1e-10);
        }
    }

    #[test]
    fn recovers_log_hazard_ratio_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 2000;
        let mut records = Vec::with_capacity(n);
        for i in 0..n {
            let x = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            let rate = 0.1 * (x * std::f64::consts::LN_2).exp();
            let death: f64 = -rng.random::<f64>().ln() / rate;
            let censor: f64 = 25.0;
            let t = death.min(censor);
            records.push(record(
                &format!("s{i}"),
                x,
                ((t * 365.25) as i64).max(1),
                death <= censor,
            ));
        }
        let fit = fit_cox(&records, &binary_spec(true), TieMethod::Efron, "t").unwrap();
        let se = fit.se()[0];
        assert!(
            (fit.beta[0] - std::f64::consts::LN_2).abs() < 3.0 * se,
            "beta {} se {se}",
            fit.beta[0]
        );
    }

    #[test]
    fn separated_data_is_flagged_non_identifiable() {
        // exposure perfectly splits early deaths from late censorings
        let mut records = Vec::new();
        for i in 0..30 {
            records.push(record(&format!("a{i}"), 1.0, 10 + i, true));
            records.push(record(&format!("b{i}"), 0.0, 5000 + i, false));
        }
        let res = fit_cox(&records, &binary_spec(true), TieMethod::Efron, "t");
        assert!(
            matches!(res, Err(FitError::NonIdentifiable { .. }) | Err(FitError::NoEvents)),
            "expected divergence flag, got {res:?}"
        );
    }

    #[test]
    fn rank_deficient_design_is_rejected() {
        let records = vec![
            record("a", 1.0, 10, true),
            record("b", 2.0, 20, true),
            record("c", 3.0, 30, true),
        ];
        // age twice -> identical columns
        let mut spec = CovariateSpec::main_effects(&[Covariate::Age, Covariate::Age]);
        spec.center = false;
        let res = fit_cox(&records, &spec, TieMethod::Efron, "t");
        assert!(matches!(res, Err(FitError::RankDeficient)));
    }

    #[test]
    fn no_events_is_an_error() {
        let records = vec![record("a", 1.0, 10, false), record("b", 0.0, 20, false)];
        let res = fit_cox(&records, &binary_spec(true), TieMethod::Efron, "t");
        assert!(matches!(res, Err(FitError::NoEvents)));
    }

    #[test]
    fn exponential_null_baseline_tracks_true_hazard() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 20_000;
        let mut records = Vec::with_capacity(n);
        for i in 0..n {
            let death_years: f64 = -rng.random::<f64>().ln() / 0.1; // rate 0.1 per year
            let days = ((death_years * crate::DAYS_PER_YEAR).round() as i64).max(1);
            records.push(record(&format!("s{i}"), 0.0, days, true));
        }
        let spec = CovariateSpec::main_effects(&[]);
        let fit = fit_cox(&records, &spec, TieMethod::Efron, "t").unwrap();
        let base = fit.baseline_cumhaz().unwrap();
        let mut sup = 0.0_f64;
        for t in 1..=10 {
            let years = t as f64;
            sup = sup.max((base.at(years * crate::DAYS_PER_YEAR) - 0.1 * years).abs());
        }
        assert!(sup < 0.02, "sup error {sup}");
    }
}
