//! G-estimation of structural accelerated failure time models.
//!
//! The structural model scales the two phases of a dialysis-first
//! follow-up onto the immediate-transplant time scale: days without
//! transplant count `exp(-psi_w)` reference days, days after a delayed
//! transplant count `exp(-psi_r)`. Immediate-transplant subjects are
//! already on the reference scale and are left untouched. At the true
//! parameters the transformed time is independent of the received initial
//! treatment given the baseline confounders, so the coefficient of the
//! treatment term in a Cox model on transformed times is zero; the solver
//! inverts that estimating equation, with test-inversion confidence
//! intervals and optional artificial recensoring of the transformed times.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::coxmod::{
    fit_cox_design, Covariate, CovariateSpec, DesignInfo, DesignMatrix, FitError, Term, TieMethod,
};
use crate::registry::SubjectRecord;
use crate::DAYS_PER_YEAR;

#[derive(Debug, Error)]
pub enum GestError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("estimating statistic has no sign change over [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("no joint zero of the two-parameter estimating statistic in the bracket square")]
    NoJointZero,
    #[error("bracket is empty or inverted")]
    EmptyBracket,
    #[error("statistic unavailable everywhere on the search grid")]
    NothingEvaluable,
}

/// Solver tolerances: root location in psi and the Wald-z size accepted at
/// the reported solution.
const PSI_TOL: f64 = 1e-4;
const GRID_STEP: f64 = 0.02;
const COARSE_STEP_2P: f64 = 0.2;
const FINE_STEP_2P: f64 = 0.05;
const JOINT_Z_TOL: f64 = 0.05;
const Z_CRIT: f64 = 1.959963984540054;

/// Default search bracket, wide enough for exp(-psi) in roughly [0.37, 20].
pub const DEFAULT_BRACKET: (f64, f64) = (-3.0, 1.0);
pub const DEFAULT_RECENSOR_SWEEP_YEARS: [f64; 4] = [5.0, 10.0, 15.0, 20.0];

/// One coordinate of the estimating statistic.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StatCoord {
    pub beta: f64,
    pub se: f64,
    pub z: f64,
}

/// One evaluated grid point of the search trace.
#[derive(Debug, Clone, Serialize)]
pub struct TracePoint {
    pub psi_w: f64,
    pub psi_r: f64,
    /// Treatment-term coordinate; absent when the Cox fit failed here.
    pub pkt: Option<StatCoord>,
    /// Treatment-by-sex coordinate (two-parameter model only).
    pub pkt_sex: Option<StatCoord>,
}

/// Structural AFT estimate with its search trace.
#[derive(Debug, Clone, Serialize)]
pub struct AftEstimate {
    /// Point estimate(s): `[psi]` or `[psi_w, psi_r]`.
    pub psi: Vec<f64>,
    pub exp_neg_psi: Vec<f64>,
    /// Test-inversion 95% interval per parameter, on the psi scale.
    pub ci_psi: Vec<(f64, f64)>,
    /// The same intervals on the exp(-psi) reporting scale.
    pub ci_exp_neg_psi: Vec<(f64, f64)>,
    /// Wald z of each statistic coordinate at the solution.
    pub z_at_solution: Vec<f64>,
    pub events_retained: usize,
    pub recensor_years: Option<f64>,
    /// All sign-change roots found (one-parameter model); more than one
    /// flags the estimate as ambiguous.
    pub roots: Vec<f64>,
    pub ambiguous: bool,
    pub trace: Vec<TracePoint>,
}

impl AftEstimate {
    /// Reporting line on the exp(-psi) scale, e.g.
    /// `exp(-psi)=4.8 (95% CI 3.9, 5.8)`.
    pub fn report_line(&self) -> String {
        if self.psi.len() == 1 {
            format!(
                "exp(-psi)={:.1} (95% CI {:.1}, {:.1})",
                self.exp_neg_psi[0], self.ci_exp_neg_psi[0].0, self.ci_exp_neg_psi[0].1
            )
        } else {
            format!(
                "exp(-psi_w)={:.1} ({:.1},{:.1}), exp(-psi_r)={:.1} ({:.1},{:.1})",
                self.exp_neg_psi[0],
                self.ci_exp_neg_psi[0].0,
                self.ci_exp_neg_psi[0].1,
                self.exp_neg_psi[1],
                self.ci_exp_neg_psi[1].0,
                self.ci_exp_neg_psi[1].1
            )
        }
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("psi_w,psi_r,beta_pkt,se_pkt,z_pkt,beta_pkt_sex,se_pkt_sex,z_pkt_sex\n");
        let fmt = |c: &Option<StatCoord>| match c {
            Some(s) => format!("{},{},{}", s.beta, s.se, s.z),
            None => ",,".to_string(),
        };
        for p in &self.trace {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.psi_w,
                p.psi_r,
                fmt(&p.pkt),
                fmt(&p.pkt_sex)
            ));
        }
        out
    }
}

/// Transformed (time, event) of one record under the structural model, on
/// the immediate-transplant reference scale, in days. With `recensor_at`
/// (years), transformed times are capped there and capped subjects count
/// as censored.
pub fn transform_time(
    record: &SubjectRecord,
    psi_w: f64,
    psi_r: f64,
    recensor_at: Option<f64>,
) -> (f64, bool) {
    let time = if record.pkt {
        record.t_days as f64
    } else {
        let d = record.decompose();
        d.t_w as f64 * (-psi_w).exp() + d.t_r as f64 * (-psi_r).exp()
    };
    match recensor_at {
        Some(tau_years) => {
            let tau = tau_years * DAYS_PER_YEAR;
            if time > tau {
                (tau, false)
            } else {
                (time, record.event)
            }
        }
        None => (time, record.event),
    }
}

/// Precomputed design for repeated estimating-statistic evaluations: the
/// covariate encoding never changes with psi, only the times do.
pub struct GestModel<'a> {
    records: &'a [SubjectRecord],
    info: DesignInfo,
    x: DesignMatrix,
    pkt_col: usize,
    pkt_sex_col: Option<usize>,
    ties: TieMethod,
    recensor_years: Option<f64>,
}

impl<'a> GestModel<'a> {
    /// Build the engine. The fitted model regresses transformed time on the
    /// confounders plus a treatment term, and additionally treatment-by-sex
    /// for the two-parameter variant.
    pub fn new(
        records: &'a [SubjectRecord],
        confounders: &CovariateSpec,
        two_parameter: bool,
        recensor_years: Option<f64>,
        ties: TieMethod,
    ) -> Result<Self, GestError> {
        let mut spec = confounders.clone().with_term(Term::Main(Covariate::Pkt));
        if two_parameter {
            spec = spec.with_term(Term::Interaction(Covariate::Pkt, Covariate::Sex));
        }
        let info = DesignInfo::from_records(records, &spec)?;
        let x = info.encode(records)?;
        let pkt_col = info.column_index("pkt").expect("pkt term present");
        let pkt_sex_col = info.column_index("pkt*sex:female");
        Ok(Self {
            records,
            info,
            x,
            pkt_col,
            pkt_sex_col,
            ties,
            recensor_years,
        })
    }

    fn transformed(&self, psi_w: f64, psi_r: f64) -> (Vec<f64>, Vec<bool>, usize) {
        let mut times = Vec::with_capacity(self.records.len());
        let mut events = Vec::with_capacity(self.records.len());
        let mut retained = 0usize;
        for r in self.records {
            let (t, e) = transform_time(r, psi_w, psi_r, self.recensor_years);
            times.push(t);
            events.push(e);
            retained += usize::from(e);
        }
        (times, events, retained)
    }

    /// Events left after recensoring at the given parameters.
    pub fn events_retained(&self, psi_w: f64, psi_r: f64) -> usize {
        self.transformed(psi_w, psi_r).2
    }

    /// The estimating statistic at one parameter value; `None` when the
    /// Cox fit fails here (the solvers bracket around such points).
    pub fn statistic(&self, psi_w: f64, psi_r: f64) -> TracePoint {
        let (times, events, _) = self.transformed(psi_w, psi_r);
        let fit = match fit_cox_design(&self.info, &self.x, &times, &events, self.ties, "gest") {
            Ok(f) => f,
            Err(_) => {
                return TracePoint {
                    psi_w,
                    psi_r,
                    pkt: None,
                    pkt_sex: None,
                }
            }
        };
        let coord = |col: usize| {
            let beta = fit.beta[col];
            let se = fit.covariance[col * fit.beta.len() + col].max(0.0).sqrt();
            StatCoord {
                beta,
                se,
                z: if se > 0.0 { beta / se } else { f64::INFINITY },
            }
        };
        TracePoint {
            psi_w,
            psi_r,
            pkt: Some(coord(self.pkt_col)),
            pkt_sex: self.pkt_sex_col.map(coord),
        }
    }
}

/// The estimating statistic for external inspection: coefficient, SE and
/// Wald z of the treatment term (plus the treatment-by-sex coordinate when
/// `two_parameter`) at the given psi.
pub fn estimating_statistic(
    records: &[SubjectRecord],
    psi_w: f64,
    psi_r: f64,
    confounders: &CovariateSpec,
    two_parameter: bool,
) -> Result<TracePoint, GestError> {
    let model = GestModel::new(records, confounders, two_parameter, None, TieMethod::Efron)?;
    Ok(model.statistic(psi_w, psi_r))
}

fn grid_points(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

/// Bisect `f` for a sign change on [lo, hi] down to PSI_TOL; `f` returning
/// `None` nudges the midpoint.
fn bisect<F>(mut lo: f64, mut hi: f64, mut f_lo: f64, f: F) -> f64
where
    F: Fn(f64) -> Option<f64>,
{
    for _ in 0..64 {
        if (hi - lo).abs() < PSI_TOL {
            break;
        }
        let mut mid = 0.5 * (lo + hi);
        let mut value = f(mid);
        if value.is_none() {
            mid = lo + 0.6 * (hi - lo);
            value = f(mid);
        }
        let Some(v) = value else { break };
        if v == 0.0 {
            return mid;
        }
        if (v > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = v;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One-parameter g-estimation: root of beta_pkt(psi) = 0 over `bracket`
/// by a 0.02-step grid then bisection; the 95% CI inverts the Wald test
/// (|z| = 1.96) by bisection on each side. The returned trace holds every
/// grid evaluation.
pub fn solve_psi(
    records: &[SubjectRecord],
    confounders: &CovariateSpec,
    bracket: (f64, f64),
    recensor_years: Option<f64>,
) -> Result<AftEstimate, GestError> {
    let (lo, hi) = bracket;
    if !(lo < hi) {
        return Err(GestError::EmptyBracket);
    }
    let model = GestModel::new(records, confounders, false, recensor_years, TieMethod::Efron)?;

    let psis = grid_points(lo, hi, GRID_STEP);
    let trace: Vec<TracePoint> = psis
        .par_iter()
        .map(|&p| model.statistic(p, 0.0))
        .collect();

    let available: Vec<(f64, StatCoord)> = trace
        .iter()
        .filter_map(|t| t.pkt.map(|c| (t.psi_w, c)))
        .collect();
    if available.is_empty() {
        return Err(GestError::NothingEvaluable);
    }

    // roots of beta between consecutive evaluable grid points
    let beta_at = |psi: f64| model.statistic(psi, 0.0).pkt.map(|c| c.beta);
    let mut roots = Vec::new();
    for w in available.windows(2) {
        let (p0, c0) = w[0];
        let (p1, c1) = w[1];
        if c0.beta == 0.0 {
            roots.push(p0);
        } else if (c0.beta > 0.0) != (c1.beta > 0.0) {
            roots.push(bisect(p0, p1, c0.beta, beta_at));
        }
    }
    if let Some((p, c)) = available.last() {
        if c.beta == 0.0 {
            roots.push(*p);
        }
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 2.0 * PSI_TOL);
    if roots.is_empty() {
        return Err(GestError::NoSignChange { lo, hi });
    }

    // point estimate: the root with the smallest |z|
    let z_of = |psi: f64| model.statistic(psi, 0.0).pkt.map(|c| c.z);
    let psi_hat = roots
        .iter()
        .copied()
        .min_by(|a, b| {
            let za = z_of(*a).map(f64::abs).unwrap_or(f64::INFINITY);
            let zb = z_of(*b).map(f64::abs).unwrap_or(f64::INFINITY);
            za.total_cmp(&zb)
        })
        .expect("nonempty roots");
    let ambiguous = roots.len() > 1;

    let ci = invert_wald_ci(&available, psi_hat, (lo, hi), &z_of);
    let z_solution = z_of(psi_hat).unwrap_or(f64::NAN);
    let events = model.events_retained(psi_hat, 0.0);

    Ok(AftEstimate {
        psi: vec![psi_hat],
        exp_neg_psi: vec![(-psi_hat).exp()],
        ci_psi: vec![ci],
        ci_exp_neg_psi: vec![((-ci.1).exp(), (-ci.0).exp())],
        z_at_solution: vec![z_solution],
        events_retained: events,
        recensor_years,
        roots,
        ambiguous,
        trace,
    })
}

/// Invert |z(psi)| <= 1.96 around the root on both sides; endpoints fall
/// back to the bracket bounds when the level is never crossed inside it.
fn invert_wald_ci<F>(
    available: &[(f64, StatCoord)],
    psi_hat: f64,
    bracket: (f64, f64),
    z_of: &F,
) -> (f64, f64)
where
    F: Fn(f64) -> Option<f64>,
{
    let target = |psi: f64| z_of(psi).map(|z| z.abs() - Z_CRIT);

    // left endpoint: scan outward (descending psi) for |z| >= crit
    let mut left = bracket.0;
    let mut prev: Option<(f64, f64)> = None;
    for &(p, c) in available.iter().rev() {
        if p > psi_hat {
            continue;
        }
        let g = c.z.abs() - Z_CRIT;
        if g >= 0.0 {
            if let Some((p_in, _)) = prev {
                left = bisect(p, p_in, g, &target);
            } else {
                left = p;
            }
            break;
        }
        prev = Some((p, g));
    }
    // right endpoint
    let mut right = bracket.1;
    let mut prev: Option<(f64, f64)> = None;
    for &(p, c) in available.iter() {
        if p < psi_hat {
            continue;
        }
        let g = c.z.abs() - Z_CRIT;
        if g >= 0.0 {
            if let Some((p_in, _)) = prev {
                right = bisect(p_in, p, -1.0, &target);
            } else {
                right = p;
            }
            break;
        }
        prev = Some((p, g));
    }
    (left, right)
}

/// Two-parameter g-estimation: nested grid (0.2 then 0.05 steps) over the
/// bracket square, then alternating one-dimensional root solves of the
/// treatment coordinate in psi_w and the treatment-by-sex coordinate in
/// psi_r, until the joint Wald statistic satisfies max|z| < 0.05.
/// Per-parameter CIs invert max|z| <= 1.96 along each axis with the other
/// parameter held at its point estimate.
pub fn solve_psi_two(
    records: &[SubjectRecord],
    confounders: &CovariateSpec,
    bracket_w: (f64, f64),
    bracket_r: (f64, f64),
) -> Result<AftEstimate, GestError> {
    if !(bracket_w.0 < bracket_w.1) || !(bracket_r.0 < bracket_r.1) {
        return Err(GestError::EmptyBracket);
    }
    let model = GestModel::new(records, confounders, true, None, TieMethod::Efron)?;

    let joint = |t: &TracePoint| -> Option<f64> {
        match (&t.pkt, &t.pkt_sex) {
            (Some(a), Some(b)) => Some(a.z.abs().max(b.z.abs())),
            _ => None,
        }
    };

    let mut trace: Vec<TracePoint> = Vec::new();
    let coarse_w = grid_points(bracket_w.0, bracket_w.1, COARSE_STEP_2P);
    let coarse_r = grid_points(bracket_r.0, bracket_r.1, COARSE_STEP_2P);
    let pairs: Vec<(f64, f64)> = coarse_w
        .iter()
        .flat_map(|&w| coarse_r.iter().map(move |&r| (w, r)))
        .collect();
    let coarse: Vec<TracePoint> = pairs
        .par_iter()
        .map(|&(w, r)| model.statistic(w, r))
        .collect();
    let mut best = coarse
        .iter()
        .filter_map(|t| joint(t).map(|z| (t.psi_w, t.psi_r, z)))
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .ok_or(GestError::NothingEvaluable)?;
    trace.extend(coarse);

    // refine around the coarse winner
    let fine_w = grid_points(
        (best.0 - COARSE_STEP_2P).max(bracket_w.0),
        (best.0 + COARSE_STEP_2P).min(bracket_w.1),
        FINE_STEP_2P,
    );
    let fine_r = grid_points(
        (best.1 - COARSE_STEP_2P).max(bracket_r.0),
        (best.1 + COARSE_STEP_2P).min(bracket_r.1),
        FINE_STEP_2P,
    );
    let pairs: Vec<(f64, f64)> = fine_w
        .iter()
        .flat_map(|&w| fine_r.iter().map(move |&r| (w, r)))
        .collect();
    let fine: Vec<TracePoint> = pairs
        .par_iter()
        .map(|&(w, r)| model.statistic(w, r))
        .collect();
    if let Some(candidate) = fine
        .iter()
        .filter_map(|t| joint(t).map(|z| (t.psi_w, t.psi_r, z)))
        .min_by(|a, b| a.2.total_cmp(&b.2))
    {
        if candidate.2 < best.2 {
            best = candidate;
        }
    }
    trace.extend(fine);

    let (mut psi_w, mut psi_r, _) = best;
    let mut converged = false;
    for _round in 0..30 {
        // coordinate 0 (treatment) along psi_w
        if let Some(root) = coordinate_root(
            |p| model.statistic(p, psi_r).pkt.map(|c| c.beta),
            psi_w,
            bracket_w,
        ) {
            psi_w = root;
        }
        // coordinate 1 (treatment-by-sex) along psi_r
        if let Some(root) = coordinate_root(
            |p| model.statistic(psi_w, p).pkt_sex.map(|c| c.beta),
            psi_r,
            bracket_r,
        ) {
            psi_r = root;
        }
        let here = model.statistic(psi_w, psi_r);
        trace.push(here.clone());
        if let Some(z) = joint(&here) {
            if z < JOINT_Z_TOL {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(GestError::NoJointZero);
    }

    let solution = model.statistic(psi_w, psi_r);
    let z_w = solution.pkt.map(|c| c.z).unwrap_or(f64::NAN);
    let z_r = solution.pkt_sex.map(|c| c.z).unwrap_or(f64::NAN);

    // per-axis test inversion of the joint max-|z| statistic
    let axis_ci = |along_w: bool| -> (f64, f64) {
        let bracket = if along_w { bracket_w } else { bracket_r };
        let at = |p: f64| {
            let t = if along_w {
                model.statistic(p, psi_r)
            } else {
                model.statistic(psi_w, p)
            };
            joint(&t)
        };
        let center = if along_w { psi_w } else { psi_r };
        let scan: Vec<(f64, StatCoord)> = grid_points(bracket.0, bracket.1, GRID_STEP)
            .into_par_iter()
            .filter_map(|p| {
                at(p).map(|z| {
                    (
                        p,
                        StatCoord {
                            beta: 0.0,
                            se: 1.0,
                            z,
                        },
                    )
                })
            })
            .collect();
        invert_wald_ci(&scan, center, bracket, &|p: f64| at(p))
    };
    let ci_w = axis_ci(true);
    let ci_r = axis_ci(false);

    let events = records.iter().filter(|r| r.event).count();

    Ok(AftEstimate {
        psi: vec![psi_w, psi_r],
        exp_neg_psi: vec![(-psi_w).exp(), (-psi_r).exp()],
        ci_psi: vec![ci_w, ci_r],
        ci_exp_neg_psi: vec![
            ((-ci_w.1).exp(), (-ci_w.0).exp()),
            ((-ci_r.1).exp(), (-ci_r.0).exp()),
        ],
        z_at_solution: vec![z_w, z_r],
        events_retained: events,
        recensor_years: None,
        roots: vec![psi_w],
        ambiguous: false,
        trace,
    })
}

/// Root of a single statistic coordinate along one axis: expand a bracket
/// around `start` until the coordinate changes sign, then bisect.
fn coordinate_root<F>(f: F, start: f64, limits: (f64, f64)) -> Option<f64>
where
    F: Fn(f64) -> Option<f64>,
{
    let f0 = f(start)?;
    if f0 == 0.0 {
        return Some(start);
    }
    let mut span = 0.05;
    while span <= (limits.1 - limits.0) {
        let lo = (start - span).max(limits.0);
        let hi = (start + span).min(limits.1);
        for (a, b) in [(lo, start), (start, hi)] {
            let (fa, fb) = (f(a), f(b));
            if let (Some(fa), Some(fb)) = (fa, fb) {
                if (fa > 0.0) != (fb > 0.0) {
                    return Some(bisect(a, b, fa, &f));
                }
            }
        }
        if lo == limits.0 && hi == limits.1 {
            break;
        }
        span *= 2.0;
    }
    None
}

/// One row of the artificial-recensoring sensitivity sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    /// `None` is the uncensored reference row.
    pub cutoff_years: Option<f64>,
    pub psi: Option<f64>,
    pub exp_neg_psi: Option<f64>,
    pub ci_psi: Option<(f64, f64)>,
    pub ci_exp_neg_psi: Option<(f64, f64)>,
    pub events_retained: usize,
    /// Set when fewer than 50 events remain; the row is reported unsolved.
    pub low_events: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "cutoff_years,psi,exp_neg_psi,psi_lo,psi_hi,exp_lo,exp_hi,events_retained,low_events,error\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.cutoff_years.map(|c| c.to_string()).unwrap_or_default(),
                r.psi.map(|v| v.to_string()).unwrap_or_default(),
                r.exp_neg_psi.map(|v| v.to_string()).unwrap_or_default(),
                r.ci_psi.map(|c| c.0.to_string()).unwrap_or_default(),
                r.ci_psi.map(|c| c.1.to_string()).unwrap_or_default(),
                r.ci_exp_neg_psi.map(|c| c.0.to_string()).unwrap_or_default(),
                r.ci_exp_neg_psi.map(|c| c.1.to_string()).unwrap_or_default(),
                r.events_retained,
                r.low_events,
                r.error.as_deref().unwrap_or("")
            ));
        }
        out
    }
}

const MIN_SWEEP_EVENTS: usize = 50;

/// Re-estimate psi under artificial recensoring at each cutoff (plus the
/// uncensored row first, then cutoffs in decreasing order, so the
/// events-retained column is nonincreasing down the table). Cutoffs
/// leaving fewer than 50 events are flagged and skipped, not fatal.
pub fn recensoring_sweep(
    records: &[SubjectRecord],
    confounders: &CovariateSpec,
    cutoffs_years: &[f64],
    bracket: (f64, f64),
) -> Result<SweepTable, GestError> {
    let mut cutoffs: Vec<Option<f64>> = vec![None];
    let mut sorted: Vec<f64> = cutoffs_years.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    cutoffs.extend(sorted.into_iter().map(Some));

    let mut rows = Vec::with_capacity(cutoffs.len());
    for cutoff in cutoffs {
        // a-priori event count at psi = 0 (the untransformed scale)
        let retained_at_zero = records
            .iter()
            .filter(|r| {
                let (_, e) = transform_time(r, 0.0, 0.0, cutoff);
                e
            })
            .count();
        if retained_at_zero < MIN_SWEEP_EVENTS {
            rows.push(SweepRow {
                cutoff_years: cutoff,
                psi: None,
                exp_neg_psi: None,
                ci_psi: None,
                ci_exp_neg_psi: None,
                events_retained: retained_at_zero,
                low_events: true,
                error: None,
            });
            continue;
        }
        match solve_psi(records, confounders, bracket, cutoff) {
            Ok(estimate) => rows.push(SweepRow {
                cutoff_years: cutoff,
                psi: Some(estimate.psi[0]),
                exp_neg_psi: Some(estimate.exp_neg_psi[0]),
                ci_psi: Some(estimate.ci_psi[0]),
                ci_exp_neg_psi: Some(estimate.ci_exp_neg_psi[0]),
                events_retained: estimate.events_retained,
                low_events: false,
                error: None,
            }),
            Err(e) => rows.push(SweepRow {
                cutoff_years: cutoff,
                psi: None,
                exp_neg_psi: None,
                ci_psi: None,
                ci_exp_neg_psi: None,
                events_retained: retained_at_zero,
                low_events: false,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(SweepTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{Pkd, Sex};
    use crate::simlab::{preset, simulate_registry};
    use chrono::NaiveDate;

    fn record(pkt: bool, t_switch: Option<i64>, t_days: i64, event: bool) -> SubjectRecord {
        SubjectRecord {
            id: format!("r{pkt}{t_days}"),
            entry_date: NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(),
            age: 50.0,
            sex: Sex::Male,
            region: "Stockholm".into(),
            pkd: Pkd::Other,
            diabetes: None,
            hypertension: None,
            ihd: None,
            pad: None,
            cvd: None,
            gfr: None,
            pkt,
            t_switch_days: t_switch,
            t_days,
            event,
        }
    }

    fn confounders() -> CovariateSpec {
        CovariateSpec::main_effects(&[Covariate::Age, Covariate::Sex])
    }

    fn aft_cohort(n: usize, seed: u64) -> Vec<SubjectRecord> {
        let mut cfg = preset("aft_effect").unwrap();
        cfg.n = n;
        cfg.truth_mc_n = 10_000;
        simulate_registry(&cfg, seed).unwrap().0
    }

    #[test]
    fn zero_psi_is_identity() {
        for r in [
            record(true, None, 2800, false),
            record(false, Some(700), 2000, true),
            record(false, None, 400, true),
        ] {
            let (t, e) = transform_time(&r, 0.0, 0.0, None);
            assert_eq!(t, r.t_days as f64);
            assert_eq!(e, r.event);
        }
    }

    #[test]
    fn dialysis_days_scale_by_exp_neg_psi() {
        // 730 days without transplant, factor 2: 1460 reference days
        let r = record(false, None, 730, true);
        let (t, e) = transform_time(&r, -(2.0_f64.ln()), 0.0, None);
        assert!((t - 1460.0).abs() < 1e-9);
        assert!(e);
    }

    #[test]
    fn two_parameter_worked_arithmetic() {
        // 2 units without transplant and 4 after it, factors 5.6 and 0.7:
        // 2*5.6 + 4*0.7 = 14.0
        let r = record(false, Some(2), 6, true);
        let psi_w = -(5.6_f64.ln());
        let psi_r = -(0.7_f64.ln());
        let (t, _) = transform_time(&r, psi_w, psi_r, None);
        assert!((t - 14.0).abs() < 1e-9, "{t}");
    }

    #[test]
    fn immediate_transplant_time_is_reference_scale() {
        // psi_r scales only time after a *delayed* transplant
        let r = record(true, None, 2800, true);
        let (t, _) = transform_time(&r, -1.0, 0.5, None);
        assert_eq!(t, 2800.0);
    }

    #[test]
    fn recensoring_caps_time_and_event() {
        let r = record(false, None, 4000, true);
        let tau = 4000.0 / DAYS_PER_YEAR / 2.0;
        let (t, e) = transform_time(&r, 0.0, 0.0, Some(tau));
        assert!((t - tau * DAYS_PER_YEAR).abs() < 1e-9);
        assert!(!e);
        // cutoff beyond the transformed time is a no-op
        let (t2, e2) = transform_time(&r, 0.0, 0.0, Some(100.0));
        assert_eq!(t2, 4000.0);
        assert!(e2);
    }

    #[test]
    fn transform_is_monotone_in_each_part() {
        let psi_w = -0.8;
        let psi_r = 0.3;
        let mut last = 0.0;
        for t_w in [100, 500, 1000] {
            let r = record(false, Some(t_w), t_w + 300, true);
            let (t, _) = transform_time(&r, psi_w, psi_r, None);
            assert!(t > last, "t_w={t_w}: {t} <= {last}");
            last = t;
        }
        let mut last = 0.0;
        for t_r in [0, 100, 500, 1000] {
            let r = record(
                false,
                if t_r > 0 { Some(300) } else { None },
                300 + t_r,
                true,
            );
            let (t, _) = transform_time(&r, psi_w, psi_r, None);
            assert!(t > last, "t_r={t_r}: {t} <= {last}");
            last = t;
        }
    }

    #[test]
    fn independent_treatment_gives_null_statistic() {
        let mut cfg = preset("null_effect").unwrap();
        cfg.n = 4000;
        cfg.truth_mc_n = 10_000;
        let (records, _) = simulate_registry(&cfg, 31).unwrap();
        let stat = estimating_statistic(&records, 0.0, 0.0, &confounders(), false).unwrap();
        let c = stat.pkt.unwrap();
        assert!(c.z.abs() < 2.5, "z = {}", c.z);
        assert!(c.beta.abs() < 3.0 * c.se);
    }

    #[test]
    fn aft_data_has_negative_statistic_at_zero() {
        // with exp(-psi_w)=2, untransformed dialysis times understate the
        // reference-scale survival: the transplant arm looks protective
        let records = aft_cohort(4000, 17);
        let stat = estimating_statistic(&records, 0.0, 0.0, &confounders(), false).unwrap();
        let c = stat.pkt.unwrap();
        assert!(c.z < -3.0, "z = {}", c.z);
    }

    #[test]
    fn solve_recovers_doubling_effect() {
        let records = aft_cohort(6000, 23);
        let est = solve_psi(&records, &confounders(), DEFAULT_BRACKET, None).unwrap();
        let factor = est.exp_neg_psi[0];
        assert!((1.6..=2.4).contains(&factor), "exp(-psi) = {factor}");
        assert!(
            est.ci_exp_neg_psi[0].0 <= 2.0 && 2.0 <= est.ci_exp_neg_psi[0].1,
            "CI {:?} misses 2",
            est.ci_exp_neg_psi[0]
        );
        assert!(est.z_at_solution[0].abs() < JOINT_Z_TOL);
        assert!(!est.ambiguous);
        assert!(!est.trace.is_empty());
    }

    #[test]
    fn bracket_without_root_is_an_error() {
        let records = aft_cohort(2000, 29);
        let res = solve_psi(&records, &confounders(), (0.5, 1.0), None);
        assert!(matches!(res, Err(GestError::NoSignChange { .. })), "{res:?}");
    }

    #[test]
    fn scale_equivariance_of_the_estimate() {
        let records = aft_cohort(3000, 41);
        let doubled: Vec<SubjectRecord> = records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.t_days *= 2;
                r.t_switch_days = r.t_switch_days.map(|s| s * 2);
                r
            })
            .collect();
        let a = solve_psi(&records, &confounders(), DEFAULT_BRACKET, None).unwrap();
        let b = solve_psi(&doubled, &confounders(), DEFAULT_BRACKET, None).unwrap();
        assert!(
            (a.psi[0] - b.psi[0]).abs() < 1e-3,
            "{} vs {}",
            a.psi[0],
            b.psi[0]
        );
    }

    #[test]
    fn sweep_with_huge_cutoff_matches_uncensored() {
        let records = aft_cohort(3000, 47);
        let sweep = recensoring_sweep(&records, &confounders(), &[500.0], DEFAULT_BRACKET).unwrap();
        assert_eq!(sweep.rows.len(), 2);
        let full = &sweep.rows[0];
        let capped = &sweep.rows[1];
        assert_eq!(full.cutoff_years, None);
        assert!((full.psi.unwrap() - capped.psi.unwrap()).abs() < 2.0 * PSI_TOL);
        assert_eq!(full.events_retained, capped.events_retained);
    }

    #[test]
    fn sweep_events_nonincreasing_down_the_table() {
        let records = aft_cohort(4000, 53);
        let sweep = recensoring_sweep(
            &records,
            &confounders(),
            &DEFAULT_RECENSOR_SWEEP_YEARS,
            DEFAULT_BRACKET,
        )
        .unwrap();
        for w in sweep.rows.windows(2) {
            assert!(
                w[1].events_retained <= w[0].events_retained,
                "{:?} then {:?}",
                w[0].events_retained,
                w[1].events_retained
            );
        }
        // tiny cutoff leaves too few events and is flagged, not fatal
        let tiny = recensoring_sweep(&records, &confounders(), &[0.01], DEFAULT_BRACKET).unwrap();
        assert!(tiny.rows[1].low_events);
        assert!(tiny.rows[1].psi.is_none());
    }

    #[test]
    fn report_line_formats() {
        let est = AftEstimate {
            psi: vec![-(4.8_f64.ln())],
            exp_neg_psi: vec![4.8],
            ci_psi: vec![(-(5.8_f64.ln()), -(3.9_f64.ln()))],
            ci_exp_neg_psi: vec![(3.9, 5.8)],
            z_at_solution: vec![0.0],
            events_retained: 100,
            recensor_years: None,
            roots: vec![-(4.8_f64.ln())],
            ambiguous: false,
            trace: Vec::new(),
        };
        assert_eq!(est.report_line(), "exp(-psi)=4.8 (95% CI 3.9, 5.8)");
        let est2 = AftEstimate {
            psi: vec![-(5.6_f64.ln()), -(0.7_f64.ln())],
            exp_neg_psi: vec![5.6, 0.7],
            ci_psi: vec![(0.0, 0.0), (0.0, 0.0)],
            ci_exp_neg_psi: vec![(5.1, 6.6), (0.5, 0.9)],
            z_at_solution: vec![0.0, 0.0],
            events_retained: 100,
            recensor_years: None,
            roots: vec![],
            ambiguous: false,
            trace: Vec::new(),
        };
        assert_eq!(
            est2.report_line(),
            "exp(-psi_w)=5.6 (5.1,6.6), exp(-psi_r)=0.7 (0.5,0.9)"
        );
    }
}
