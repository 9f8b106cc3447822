//! Nonparametric survival estimation: (weighted) Kaplan-Meier with
//! Greenwood log-log confidence intervals, Aalen-Johansen cumulative
//! incidence for competing risks, and the log-rank test.

use serde::Serialize;
use thiserror::Error;

use crate::stats::{chi2_sf, Z_95};
use crate::DAYS_PER_YEAR;

#[derive(Debug, Error)]
pub enum NonparamError {
    #[error("empty input")]
    EmptyInput,
    #[error("times, events and weights must have equal length")]
    LengthMismatch,
    #[error("times must be finite and non-negative")]
    InvalidTime,
    #[error("weights must be positive and finite")]
    InvalidWeight,
    #[error("log-rank needs at least two groups")]
    SingleGroup,
    #[error("log-rank needs at least one event")]
    NoEvents,
}

/// Step-function survival estimate over the distinct event times.
///
/// The curve starts implicitly at S(0) = 1; `times` holds the distinct
/// death times in increasing order, with the estimate, Greenwood log-log
/// 95% bounds and the at-risk size just before each time.
#[derive(Debug, Clone, Serialize)]
pub struct SurvivalCurve {
    /// Distinct event times (same unit as the input, days throughout the crate).
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    /// Pointwise standard error of the survival estimate (Greenwood).
    pub se: Vec<f64>,
    /// Weighted number at risk just before each event time.
    pub at_risk: Vec<f64>,
    /// True when non-unit weights were supplied.
    pub weighted: bool,
}

impl SurvivalCurve {
    /// Step evaluation: the estimate at the latest event time <= `t`
    /// (1 before the first event time).
    pub fn survival_at(&self, t: f64) -> f64 {
        step_at(&self.times, &self.survival, t, 1.0)
    }

    pub fn se_at(&self, t: f64) -> f64 {
        step_at(&self.times, &self.se, t, 0.0)
    }

    pub fn ci_at(&self, t: f64) -> (f64, f64) {
        (
            step_at(&self.times, &self.ci_lower, t, 1.0),
            step_at(&self.times, &self.ci_upper, t, 1.0),
        )
    }

    /// Long-format CSV: time in days and years, estimate, bounds, at-risk.
    pub fn to_csv(&self, label: &str) -> String {
        let mut out =
            String::from("curve,time_days,time_years,estimate,lo,hi,at_risk\n");
        for i in 0..self.times.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                label,
                self.times[i],
                self.times[i] / DAYS_PER_YEAR,
                self.survival[i],
                self.ci_lower[i],
                self.ci_upper[i],
                self.at_risk[i]
            ));
        }
        out
    }
}

pub(crate) fn step_at(times: &[f64], values: &[f64], t: f64, before: f64) -> f64 {
    // position of the last time <= t
    match times.partition_point(|&x| x <= t) {
        0 => before,
        k => values[k - 1],
    }
}

fn validate_inputs(
    times: &[f64],
    events: &[bool],
    weights: Option<&[f64]>,
) -> Result<(), NonparamError> {
    if times.is_empty() {
        return Err(NonparamError::EmptyInput);
    }
    if events.len() != times.len() {
        return Err(NonparamError::LengthMismatch);
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(NonparamError::InvalidTime);
    }
    if let Some(w) = weights {
        if w.len() != times.len() {
            return Err(NonparamError::LengthMismatch);
        }
        if w.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(NonparamError::InvalidWeight);
        }
    }
    Ok(())
}

/// Grouped sweep over distinct observed times: at each time, the weighted
/// at-risk mass, weighted deaths and weighted censorings. Deaths take
/// precedence over censorings at tied times (both leave the risk set after
/// the time is processed).
fn sweep<F>(times: &[f64], events: &[bool], weights: Option<&[f64]>, mut visit: F)
where
    F: FnMut(f64, f64, f64, f64),
{
    let n = times.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let w = |i: usize| weights.map(|w| w[i]).unwrap_or(1.0);

    let mut at_risk: f64 = order.iter().map(|&i| w(i)).sum();
    let mut k = 0;
    while k < n {
        let t = times[order[k]];
        let mut deaths = 0.0;
        let mut censored = 0.0;
        let mut j = k;
        while j < n && times[order[j]] == t {
            if events[order[j]] {
                deaths += w(order[j]);
            } else {
                censored += w(order[j]);
            }
            j += 1;
        }
        visit(t, at_risk, deaths, censored);
        at_risk -= deaths + censored;
        k = j;
    }
}

/// Product-limit estimator. `weights`, when given, are treated as known
/// constants in both the estimate and the Greenwood variance.
pub fn kaplan_meier(
    times: &[f64],
    events: &[bool],
    weights: Option<&[f64]>,
) -> Result<SurvivalCurve, NonparamError> {
    validate_inputs(times, events, weights)?;

    let mut curve = SurvivalCurve {
        times: Vec::new(),
        survival: Vec::new(),
        ci_lower: Vec::new(),
        ci_upper: Vec::new(),
        se: Vec::new(),
        at_risk: Vec::new(),
        weighted: weights.is_some(),
    };

    let mut surv = 1.0_f64;
    let mut greenwood_sum = 0.0_f64;
    sweep(times, events, weights, |t, n_risk, deaths, _| {
        if deaths <= 0.0 {
            return;
        }
        surv *= 1.0 - deaths / n_risk;
        if n_risk > deaths {
            greenwood_sum += deaths / (n_risk * (n_risk - deaths));
        } else {
            greenwood_sum = f64::INFINITY;
        }
        let var = surv * surv * greenwood_sum;
        let se = var.sqrt();
        let (lo, hi) = loglog_ci(surv, greenwood_sum);
        curve.times.push(t);
        curve.survival.push(surv);
        curve.ci_lower.push(lo);
        curve.ci_upper.push(hi);
        curve.se.push(if se.is_finite() { se } else { 0.0 });
        curve.at_risk.push(n_risk);
    });

    Ok(curve)
}

/// 95% pointwise interval on the log(-log S) scale; collapses to the point
/// at S in {0, 1}.
fn loglog_ci(surv: f64, greenwood_sum: f64) -> (f64, f64) {
    if surv <= 0.0 || surv >= 1.0 || !greenwood_sum.is_finite() {
        return (surv.clamp(0.0, 1.0), surv.clamp(0.0, 1.0));
    }
    let log_s = surv.ln();
    // Var(log(-log S)) = Var(S) / (S log S)^2 = greenwood_sum / (log S)^2
    let se = greenwood_sum.sqrt() / log_s.abs();
    let theta = (-log_s).ln();
    let lo = (-((theta + Z_95 * se).exp())).exp();
    let hi = (-((theta - Z_95 * se).exp())).exp();
    (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0))
}

/// Aalen-Johansen cumulative incidence curves, one per competing event type.
#[derive(Debug, Clone, Serialize)]
pub struct CifCurves {
    /// Distinct times at which any event of any type occurred.
    pub times: Vec<f64>,
    /// Event-type codes in ascending order (0 = censored is excluded).
    pub event_types: Vec<u8>,
    /// `cif[k][i]` = cumulative incidence of `event_types[k]` at `times[i]`.
    pub cif: Vec<Vec<f64>>,
    /// All-cause Kaplan-Meier survival at `times[i]`.
    pub overall_survival: Vec<f64>,
}

impl CifCurves {
    pub fn cif_at(&self, event_type: u8, t: f64) -> f64 {
        match self.event_types.iter().position(|&e| e == event_type) {
            Some(k) => step_at(&self.times, &self.cif[k], t, 0.0),
            None => 0.0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("event_type,time_days,time_years,cumulative_incidence\n");
        for (k, &ty) in self.event_types.iter().enumerate() {
            for i in 0..self.times.len() {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    ty,
                    self.times[i],
                    self.times[i] / DAYS_PER_YEAR,
                    self.cif[k][i]
                ));
            }
        }
        out
    }
}

/// Aalen-Johansen estimator. `events` uses 0 for censoring and small
/// positive codes for competing event types; at each event time the
/// type-specific hazard multiplies the all-cause survival just before.
pub fn cumulative_incidence(times: &[f64], events: &[u8]) -> Result<CifCurves, NonparamError> {
    if times.is_empty() {
        return Err(NonparamError::EmptyInput);
    }
    if events.len() != times.len() {
        return Err(NonparamError::LengthMismatch);
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(NonparamError::InvalidTime);
    }

    let mut event_types: Vec<u8> = events.iter().copied().filter(|&e| e > 0).collect();
    event_types.sort_unstable();
    event_types.dedup();

    let n = times.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut curves = CifCurves {
        times: Vec::new(),
        event_types: event_types.clone(),
        cif: vec![Vec::new(); event_types.len()],
        overall_survival: Vec::new(),
    };

    let mut at_risk = n as f64;
    let mut surv = 1.0_f64;
    let mut cum = vec![0.0_f64; event_types.len()];

    let mut k = 0;
    while k < n {
        let t = times[order[k]];
        let mut per_type = vec![0.0_f64; event_types.len()];
        let mut total_events = 0.0;
        let mut censored = 0.0;
        let mut j = k;
        while j < n && times[order[j]] == t {
            let code = events[order[j]];
            if code == 0 {
                censored += 1.0;
            } else {
                let slot = event_types.iter().position(|&e| e == code).unwrap();
                per_type[slot] += 1.0;
                total_events += 1.0;
            }
            j += 1;
        }
        if total_events > 0.0 {
            for (slot, d) in per_type.iter().enumerate() {
                cum[slot] += surv * d / at_risk;
            }
            surv *= 1.0 - total_events / at_risk;
            curves.times.push(t);
            for (slot, c) in cum.iter().enumerate() {
                curves.cif[slot].push(*c);
            }
            curves.overall_survival.push(surv);
        }
        at_risk -= total_events + censored;
        k = j;
    }

    Ok(curves)
}

/// Log-rank test result.
#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    pub p: f64,
}

/// Standard (unweighted) log-rank test across groups labelled `0..k`.
pub fn log_rank(groups: &[usize], times: &[f64], events: &[bool]) -> Result<TestResult, NonparamError> {
    validate_inputs(times, events, None)?;
    if groups.len() != times.len() {
        return Err(NonparamError::LengthMismatch);
    }
    let n_groups = groups.iter().max().map(|m| m + 1).unwrap_or(0);
    if n_groups < 2 {
        return Err(NonparamError::SingleGroup);
    }
    if !events.iter().any(|&e| e) {
        return Err(NonparamError::NoEvents);
    }

    let n = times.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut at_risk = vec![0.0_f64; n_groups];
    for &g in groups {
        at_risk[g] += 1.0;
    }

    let df = n_groups - 1;
    let mut score = vec![0.0_f64; df];
    let mut var = vec![0.0_f64; df * df];

    let mut k = 0;
    while k < n {
        let t = times[order[k]];
        let mut deaths_g = vec![0.0_f64; n_groups];
        let mut removed_g = vec![0.0_f64; n_groups];
        let mut j = k;
        while j < n && times[order[j]] == t {
            let idx = order[j];
            removed_g[groups[idx]] += 1.0;
            if events[idx] {
                deaths_g[groups[idx]] += 1.0;
            }
            j += 1;
        }
        let n_total: f64 = at_risk.iter().sum();
        let d_total: f64 = deaths_g.iter().sum();
        if d_total > 0.0 && n_total > 1.0 {
            for g in 0..df {
                score[g] += deaths_g[g] - at_risk[g] * d_total / n_total;
            }
            // hypergeometric covariance of the per-group death counts
            let scale = d_total * (n_total - d_total) / (n_total * n_total * (n_total - 1.0));
            for g in 0..df {
                for h in 0..df {
                    let cov = if g == h {
                        at_risk[g] * (n_total - at_risk[g]) * scale
                    } else {
                        -at_risk[g] * at_risk[h] * scale
                    };
                    var[g * df + h] += cov;
                }
            }
        }
        for g in 0..n_groups {
            at_risk[g] -= removed_g[g];
        }
        k = j;
    }

    let statistic = match crate::linalg::cholesky(&var, df, 1e-300) {
        Some(l) => {
            let x = crate::linalg::cholesky_solve(&l, &score, df);
            crate::linalg::dot(&score, &x)
        }
        // degenerate variance (e.g. identical groups): statistic is zero
        None => 0.0,
    };
    Ok(TestResult {
        statistic: statistic.max(0.0),
        df,
        p: chi2_sf(statistic.max(0.0), df),
    })
}
