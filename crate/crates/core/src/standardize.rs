//! G-formula standardization: average the arm-specific model-based
//! survival over a target covariate population; horizon contrast tables
//! and prognostic-score profile curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coxmod::{fit_cox, CovariateSpec, CoxFit, FitError, PredictedSurvival, TieMethod};
use crate::missing::{bootstrap, BootstrapError, BootstrapResult};
use crate::nonparam::step_at;
use crate::registry::SubjectRecord;
use crate::DAYS_PER_YEAR;

#[derive(Debug, Error)]
pub enum StandardizeError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
    #[error("empty population")]
    EmptyPopulation,
    #[error("percentile {0} outside (0, 100]")]
    BadPercentile(f64),
    #[error("profile fits must share the fitting population")]
    PopulationMismatch,
}

/// Target covariate population of a standardized contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopulationTag {
    /// Full cohort (average treatment effect).
    Ate,
    /// Transplant-arm covariate distribution (effect among the treated).
    Att,
    /// Dialysis-arm covariate distribution (effect among the non-treated).
    Atnt,
    /// Caller-supplied row set.
    Custom,
}

impl PopulationTag {
    pub fn select<'a>(&self, records: &'a [SubjectRecord]) -> Vec<&'a SubjectRecord> {
        match self {
            PopulationTag::Ate | PopulationTag::Custom => records.iter().collect(),
            PopulationTag::Att => records.iter().filter(|r| r.pkt).collect(),
            PopulationTag::Atnt => records.iter().filter(|r| !r.pkt).collect(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PopulationTag::Ate => "ate",
            PopulationTag::Att => "att",
            PopulationTag::Atnt => "atnt",
            PopulationTag::Custom => "custom",
        }
    }
}

/// Pointwise bootstrap bands on a fixed evaluation grid.
#[derive(Debug, Clone, Serialize)]
pub struct ContrastBands {
    pub times: Vec<f64>,
    pub s1_lo: Vec<f64>,
    pub s1_hi: Vec<f64>,
    pub s0_lo: Vec<f64>,
    pub s0_hi: Vec<f64>,
    pub diff_lo: Vec<f64>,
    pub diff_hi: Vec<f64>,
    /// Replicates behind the bands (pooled over imputations when applicable).
    pub replicates: usize,
}

/// Standardized survival under each strategy over a target population,
/// with the pointwise difference.
#[derive(Debug, Clone, Serialize)]
pub struct StandardizedContrast {
    pub population: PopulationTag,
    /// Evaluation grid in days (union of both arms' event times by default).
    pub times: Vec<f64>,
    pub s1: Vec<f64>,
    pub s0: Vec<f64>,
    pub diff: Vec<f64>,
    pub bands: Option<ContrastBands>,
    pub population_size: usize,
}

impl StandardizedContrast {
    pub fn s1_at(&self, t_days: f64) -> f64 {
        step_at(&self.times, &self.s1, t_days, 1.0)
    }

    pub fn s0_at(&self, t_days: f64) -> f64 {
        step_at(&self.times, &self.s0, t_days, 1.0)
    }

    pub fn diff_at(&self, t_days: f64) -> f64 {
        step_at(&self.times, &self.diff, t_days, 0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("population,time_days,time_years,s1,s0,diff\n");
        for i in 0..self.times.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.population.label(),
                self.times[i],
                self.times[i] / DAYS_PER_YEAR,
                self.s1[i],
                self.s0[i],
                self.diff[i]
            ));
        }
        out
    }
}

/// Union of the two fitted baselines' event times, in days.
pub fn union_event_grid(fit_pkt: &CoxFit, fit_dialysis: &CoxFit) -> Vec<f64> {
    let mut grid: Vec<f64> = fit_pkt
        .baseline
        .times
        .iter()
        .chain(fit_dialysis.baseline.times.iter())
        .copied()
        .collect();
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    grid
}

/// Average arm-specific predicted survival over `population` on `grid`:
/// S_a(t) = n^-1 sum_i S_a(t | Z_i). The average is exact (no sampling);
/// chunked parallel sums keep the reduction order fixed.
pub fn standardized_curves(
    fit_pkt: &CoxFit,
    fit_dialysis: &CoxFit,
    population: &[&SubjectRecord],
    grid: &[f64],
) -> Result<StandardizedContrast, StandardizeError> {
    if population.is_empty() {
        return Err(StandardizeError::EmptyPopulation);
    }

    // per-subject relative risks under each model
    let risks: Vec<(f64, f64)> = population
        .iter()
        .map(|r| {
            Ok((
                fit_pkt.linear_predictor(r)?.exp(),
                fit_dialysis.linear_predictor(r)?.exp(),
            ))
        })
        .collect::<Result<_, FitError>>()?;

    // baseline cumulative hazards evaluated once per grid point
    let lambda1: Vec<f64> = grid.iter().map(|&t| fit_pkt.baseline.at(t)).collect();
    let lambda0: Vec<f64> = grid.iter().map(|&t| fit_dialysis.baseline.at(t)).collect();

    const CHUNK: usize = 512;
    let partials: Vec<(Vec<f64>, Vec<f64>)> = risks
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut s1 = vec![0.0_f64; grid.len()];
            let mut s0 = vec![0.0_f64; grid.len()];
            for &(r1, r0) in chunk {
                for k in 0..grid.len() {
                    s1[k] += (-lambda1[k] * r1).exp();
                    s0[k] += (-lambda0[k] * r0).exp();
                }
            }
            (s1, s0)
        })
        .collect();

    let n = population.len() as f64;
    let mut s1 = vec![0.0_f64; grid.len()];
    let mut s0 = vec![0.0_f64; grid.len()];
    for (p1, p0) in partials {
        for k in 0..grid.len() {
            s1[k] += p1[k];
            s0[k] += p0[k];
        }
    }
    for k in 0..grid.len() {
        s1[k] /= n;
        s0[k] /= n;
    }
    let diff: Vec<f64> = s1.iter().zip(&s0).map(|(a, b)| a - b).collect();

    Ok(StandardizedContrast {
        population: PopulationTag::Custom,
        times: grid.to_vec(),
        s1,
        s0,
        diff,
        bands: None,
        population_size: population.len(),
    })
}

/// Fit both arm models on `records` and standardize over the tagged
/// population, on the union-of-event-times grid.
pub fn standardize_cohort(
    records: &[SubjectRecord],
    confounders: &CovariateSpec,
    population: PopulationTag,
    ties: TieMethod,
) -> Result<(StandardizedContrast, CoxFit, CoxFit), StandardizeError> {
    let arm_pkt: Vec<SubjectRecord> = records.iter().filter(|r| r.pkt).cloned().collect();
    let arm_dial: Vec<SubjectRecord> = records.iter().filter(|r| !r.pkt).cloned().collect();
    let fit_pkt = fit_cox(&arm_pkt, confounders, ties, "pkt")?;
    let fit_dial = fit_cox(&arm_dial, confounders, ties, "dialysis")?;
    let grid = union_event_grid(&fit_pkt, &fit_dial);
    let rows = population.select(records);
    let mut contrast = standardized_curves(&fit_pkt, &fit_dial, &rows, &grid)?;
    contrast.population = population;
    Ok((contrast, fit_pkt, fit_dial))
}

/// Bootstrap the whole standardization pipeline (refit both Cox models per
/// resample) and attach percentile bands evaluated on `band_times`.
/// Returns the per-replicate matrix so callers can pool across imputations.
/// Replicate curves are standardized directly on the band grid; the full
/// union-of-event-times grid is only needed for the point estimate.
pub fn bootstrap_contrast(
    records: &[SubjectRecord],
    confounders: &CovariateSpec,
    population: PopulationTag,
    ties: TieMethod,
    band_times: &[f64],
    b: usize,
    seed: u64,
) -> Result<BootstrapResult, StandardizeError> {
    let confounders = confounders.clone();
    let band_times_owned = band_times.to_vec();
    let stat = move |rows: &[SubjectRecord]| -> Result<Vec<f64>, String> {
        let arm_pkt: Vec<SubjectRecord> = rows.iter().filter(|r| r.pkt).cloned().collect();
        let arm_dial: Vec<SubjectRecord> = rows.iter().filter(|r| !r.pkt).cloned().collect();
        let fit_pkt =
            fit_cox(&arm_pkt, &confounders, ties, "pkt").map_err(|e| e.to_string())?;
        let fit_dial =
            fit_cox(&arm_dial, &confounders, ties, "dialysis").map_err(|e| e.to_string())?;
        let rows_sel = population.select(rows);
        let contrast = standardized_curves(&fit_pkt, &fit_dial, &rows_sel, &band_times_owned)
            .map_err(|e| e.to_string())?;
        let mut out = Vec::with_capacity(3 * band_times_owned.len());
        out.extend_from_slice(&contrast.s1);
        out.extend_from_slice(&contrast.s0);
        out.extend_from_slice(&contrast.diff);
        Ok(out)
    };
    Ok(bootstrap(records, stat, b, seed)?)
}

/// Assemble bands from one or more bootstrap runs (one per completed set;
/// their replicate pools are concatenated).
pub fn bands_from_replicates(
    band_times: &[f64],
    runs: &[BootstrapResult],
) -> Result<ContrastBands, StandardizeError> {
    let g = band_times.len();
    let dim = 3 * g;
    let mut pool: Vec<&Vec<f64>> = Vec::new();
    for run in runs {
        if run.point.len() != dim {
            return Err(StandardizeError::Bootstrap(BootstrapError::DimensionMismatch));
        }
        pool.extend(run.replicates.iter());
    }
    if pool.is_empty() {
        return Err(StandardizeError::Bootstrap(BootstrapError::NoReplicates));
    }
    let mut column = vec![0.0_f64; pool.len()];
    let mut quantiles = |d: usize| -> (f64, f64) {
        for (i, row) in pool.iter().enumerate() {
            column[i] = row[d];
        }
        column.sort_by(|a, b| a.total_cmp(b));
        let lo = column[((0.025 * column.len() as f64) as usize).min(column.len() - 1)];
        let hi = column[((0.975 * column.len() as f64) as usize).min(column.len() - 1)];
        (lo, hi)
    };
    let mut bands = ContrastBands {
        times: band_times.to_vec(),
        s1_lo: Vec::with_capacity(g),
        s1_hi: Vec::with_capacity(g),
        s0_lo: Vec::with_capacity(g),
        s0_hi: Vec::with_capacity(g),
        diff_lo: Vec::with_capacity(g),
        diff_hi: Vec::with_capacity(g),
        replicates: pool.len(),
    };
    for k in 0..g {
        let (lo, hi) = quantiles(k);
        bands.s1_lo.push(lo);
        bands.s1_hi.push(hi);
    }
    for k in 0..g {
        let (lo, hi) = quantiles(g + k);
        bands.s0_lo.push(lo);
        bands.s0_hi.push(hi);
    }
    for k in 0..g {
        let (lo, hi) = quantiles(2 * g + k);
        bands.diff_lo.push(lo);
        bands.diff_hi.push(hi);
    }
    Ok(bands)
}

/// One row of the survival-probability table at a fixed horizon.
#[derive(Debug, Clone, Serialize)]
pub struct RiskRow {
    pub population: String,
    pub horizon_years: f64,
    pub s1: Option<f64>,
    pub s1_lo: Option<f64>,
    pub s1_hi: Option<f64>,
    pub s0: Option<f64>,
    pub s0_lo: Option<f64>,
    pub s0_hi: Option<f64>,
    pub diff: Option<f64>,
    pub diff_lo: Option<f64>,
    pub diff_hi: Option<f64>,
    /// Set when the horizon lies beyond the observed follow-up; no values
    /// are reported for such rows.
    pub extrapolated: bool,
}

/// Default report horizons in years.
pub const DEFAULT_HORIZONS_YEARS: [f64; 6] = [1.0, 5.0, 10.0, 15.0, 20.0, 25.0];

/// Evaluate the contrast at fixed horizons (left-continuous step
/// convention: the value at the latest event time at or before the
/// horizon). Horizons beyond the grid are flagged as extrapolation.
pub fn risk_difference_table(contrast: &StandardizedContrast, horizons_years: &[f64]) -> Vec<RiskRow> {
    let max_t = contrast.times.last().copied().unwrap_or(0.0);
    horizons_years
        .iter()
        .map(|&h| {
            let t = h * DAYS_PER_YEAR;
            if t > max_t {
                return RiskRow {
                    population: contrast.population.label().into(),
                    horizon_years: h,
                    s1: None,
                    s1_lo: None,
                    s1_hi: None,
                    s0: None,
                    s0_lo: None,
                    s0_hi: None,
                    diff: None,
                    diff_lo: None,
                    diff_hi: None,
                    extrapolated: true,
                };
            }
            let band = contrast.bands.as_ref().and_then(|b| {
                // horizons are included in the band grid by construction;
                // fall back to the nearest band time at or before t
                match b.times.partition_point(|&x| x <= t + 1e-9) {
                    0 => None,
                    k => Some((b, k - 1)),
                }
            });
            let (s1_lo, s1_hi, s0_lo, s0_hi, diff_lo, diff_hi) = match band {
                Some((b, k)) => (
                    Some(b.s1_lo[k]),
                    Some(b.s1_hi[k]),
                    Some(b.s0_lo[k]),
                    Some(b.s0_hi[k]),
                    Some(b.diff_lo[k]),
                    Some(b.diff_hi[k]),
                ),
                None => (None, None, None, None, None, None),
            };
            RiskRow {
                population: contrast.population.label().into(),
                horizon_years: h,
                s1: Some(contrast.s1_at(t)),
                s1_lo,
                s1_hi,
                s0: Some(contrast.s0_at(t)),
                s0_lo,
                s0_hi,
                diff: Some(contrast.diff_at(t)),
                diff_lo,
                diff_hi,
                extrapolated: false,
            }
        })
        .collect()
}

pub fn risk_table_csv(rows: &[RiskRow]) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut out = String::from(
        "population,horizon_years,s1,s1_lo,s1_hi,s0,s0_lo,s0_hi,diff,diff_lo,diff_hi,extrapolated\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.population,
            r.horizon_years,
            fmt(r.s1),
            fmt(r.s1_lo),
            fmt(r.s1_hi),
            fmt(r.s0),
            fmt(r.s0_lo),
            fmt(r.s0_hi),
            fmt(r.diff),
            fmt(r.diff_lo),
            fmt(r.diff_hi),
            r.extrapolated
        ));
    }
    out
}

/// Survival curves of two models at matched percentiles of their own
/// prognostic-score distributions, plus the per-subject score scatter.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileCurves {
    pub pairs: Vec<ProfilePair>,
    /// (subject id, score under model a, score under model b)
    pub scatter: Vec<(String, f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfilePair {
    pub percentile: f64,
    pub subject_a: String,
    pub subject_b: String,
    pub curve_a: PredictedSurvival,
    pub curve_b: PredictedSurvival,
}

pub const DEFAULT_PROFILE_PERCENTILES: [f64; 6] = [5.0, 25.0, 50.0, 75.0, 95.0, 100.0];

/// For each model, the subject at each percentile of its own
/// prognostic-score distribution and the model's survival curve for that
/// subject; scores of both models per subject for the comparison scatter.
pub fn profile_curves(
    fit_a: &CoxFit,
    fit_b: &CoxFit,
    population: &[SubjectRecord],
    percentiles: &[f64],
    grid: &[f64],
) -> Result<ProfileCurves, StandardizeError> {
    if population.is_empty() {
        return Err(StandardizeError::EmptyPopulation);
    }
    for &p in percentiles {
        if !(p > 0.0 && p <= 100.0) {
            return Err(StandardizeError::BadPercentile(p));
        }
    }
    let scores_a: Vec<f64> = population
        .iter()
        .map(|r| fit_a.linear_predictor(r))
        .collect::<Result<_, _>>()?;
    let scores_b: Vec<f64> = population
        .iter()
        .map(|r| fit_b.linear_predictor(r))
        .collect::<Result<_, _>>()?;

    let order_by = |scores: &[f64]| {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
        idx
    };
    let order_a = order_by(&scores_a);
    let order_b = order_by(&scores_b);
    // nearest-rank percentile
    let pick = |order: &[usize], p: f64| {
        let n = order.len();
        let k = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n) - 1;
        order[k]
    };

    let mut pairs = Vec::with_capacity(percentiles.len());
    for &p in percentiles {
        let ia = pick(&order_a, p);
        let ib = pick(&order_b, p);
        pairs.push(ProfilePair {
            percentile: p,
            subject_a: population[ia].id.clone(),
            subject_b: population[ib].id.clone(),
            curve_a: fit_a.predict_survival(&population[ia], grid)?,
            curve_b: fit_b.predict_survival(&population[ib], grid)?,
        });
    }

    let scatter = population
        .iter()
        .zip(scores_a.iter().zip(&scores_b))
        .map(|(r, (&a, &b))| (r.id.clone(), a, b))
        .collect();

    Ok(ProfileCurves { pairs, scatter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coxmod::Covariate;
    use crate::registry::{Pkd, Sex};
    use chrono::NaiveDate;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn record(id: &str, age: f64, pkt: bool, t_days: i64, event: bool) -> SubjectRecord {
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
            pkt,
            t_switch_days: None,
            t_days,
            event,
        }
    }

    fn cohort(n: usize, seed: u64) -> Vec<SubjectRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let age = rng.random_range(30.0..80.0);
                let pkt = rng.random_bool(0.4);
                let rate = 0.0004 * (0.02 * (age - 50.0_f64)).exp() * if pkt { 0.6 } else { 1.0 };
                let death = -rng.random::<f64>().ln() / rate;
                let censor = rng.random_range(1500.0..4000.0);
                let t = death.min(censor);
                record(
                    &format!("s{i}"),
                    age,
                    pkt,
                    (t as i64).max(1),
                    death <= censor,
                )
            })
            .collect()
    }

    fn age_spec() -> CovariateSpec {
        CovariateSpec::main_effects(&[Covariate::Age])
    }

    #[test]
    fn single_row_population_equals_prediction() {
        let records = cohort(400, 1);
        let (contrast, fit_pkt, fit_dial) =
            standardize_cohort(&records, &age_spec(), PopulationTag::Ate, TieMethod::Efron)
                .unwrap();
        let row = &records[7];
        let single = standardized_curves(
            &fit_pkt,
            &fit_dial,
            &[row],
            &contrast.times,
        )
        .unwrap();
        let p1 = fit_pkt.predict_survival(row, &contrast.times).unwrap();
        let p0 = fit_dial.predict_survival(row, &contrast.times).unwrap();
        for k in 0..contrast.times.len() {
            assert!((single.s1[k] - p1.survival[k]).abs() < 1e-12);
            assert!((single.s0[k] - p0.survival[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn two_equal_strata_average_to_midpoint() {
        // degenerate grid check: S = (0.9 + 0.5) / 2 at a point
        let records = cohort(300, 2);
        let (_, fit_pkt, fit_dial) =
            standardize_cohort(&records, &age_spec(), PopulationTag::Ate, TieMethod::Efron)
                .unwrap();
        let grid = union_event_grid(&fit_pkt, &fit_dial);
        let t_star = grid[grid.len() / 2];
        // pick two rows and find the exact mean by hand
        let a = &records[0];
        let b = &records[1];
        let sa = fit_pkt.predict_survival(a, &[t_star]).unwrap().survival[0];
        let sb = fit_pkt.predict_survival(b, &[t_star]).unwrap().survival[0];
        let merged = standardized_curves(&fit_pkt, &fit_dial, &[a, b], &[t_star]).unwrap();
        assert!((merged.s1[0] - 0.5 * (sa + sb)).abs() < 1e-12);
    }

    #[test]
    fn standardization_is_linear_in_subgroups() {
        let records = cohort(500, 3);
        let (_, fit_pkt, fit_dial) =
            standardize_cohort(&records, &age_spec(), PopulationTag::Ate, TieMethod::Efron)
                .unwrap();
        let grid: Vec<f64> = (1..=10).map(|k| k as f64 * 300.0).collect();
        let (young, old): (Vec<&SubjectRecord>, Vec<&SubjectRecord>) =
            records.iter().partition(|r| r.age < 55.0);
        let pooled: Vec<&SubjectRecord> = records.iter().collect();
        let c_all = standardized_curves(&fit_pkt, &fit_dial, &pooled, &grid).unwrap();
        let c_young = standardized_curves(&fit_pkt, &fit_dial, &young, &grid).unwrap();
        let c_old = standardized_curves(&fit_pkt, &fit_dial, &old, &grid).unwrap();
        let wy = young.len() as f64 / records.len() as f64;
        let wo = old.len() as f64 / records.len() as f64;
        for k in 0..grid.len() {
            let mix = wy * c_young.s1[k] + wo * c_old.s1[k];
            assert!((c_all.s1[k] - mix).abs() < 1e-12);
        }
    }

    #[test]
    fn curves_are_monotone_and_diff_consistent() {
        let records = cohort(400, 4);
        let (contrast, _, _) =
            standardize_cohort(&records, &age_spec(), PopulationTag::Ate, TieMethod::Efron)
                .unwrap();
        for w in contrast.s1.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        for w in contrast.s0.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        for k in 0..contrast.times.len() {
            assert!((contrast.diff[k] - (contrast.s1[k] - contrast.s0[k])).abs() < 1e-15);
            assert!(contrast.s1[k] >= 0.0 && contrast.s1[k] <= 1.0);
        }
    }

    #[test]
    fn ate_lies_between_att_and_atnt_where_ordered() {
        let records = cohort(600, 5);
        let mk = |tag| {
            standardize_cohort(&records, &age_spec(), tag, TieMethod::Efron)
                .unwrap()
                .0
        };
        let ate = mk(PopulationTag::Ate);
        let att = mk(PopulationTag::Att);
        let atnt = mk(PopulationTag::Atnt);
        for t in [500.0, 1000.0, 2000.0] {
            let (a, b, c) = (att.s1_at(t), ate.s1_at(t), atnt.s1_at(t));
            if a >= c {
                assert!(b <= a + 1e-9 && b >= c - 1e-9, "{a} {b} {c}");
            } else {
                assert!(b >= a - 1e-9 && b <= c + 1e-9, "{a} {b} {c}");
            }
        }
    }

    #[test]
    fn identical_fits_have_zero_difference() {
        let records = cohort(300, 6);
        let all: Vec<SubjectRecord> = records.clone();
        let fit = fit_cox(&all, &age_spec(), TieMethod::Efron, "all").unwrap();
        let rows: Vec<&SubjectRecord> = records.iter().collect();
        let grid = fit.baseline.times.clone();
        let contrast = standardized_curves(&fit, &fit, &rows, &grid).unwrap();
        for d in &contrast.diff {
            assert_eq!(*d, 0.0);
        }
        let table = risk_difference_table(&contrast, &[1.0, 3.0]);
        for row in table.iter().filter(|r| !r.extrapolated) {
            assert_eq!(row.diff, Some(0.0));
        }
    }

    #[test]
    fn horizon_beyond_followup_is_flagged() {
        let records = cohort(200, 7);
        let (contrast, _, _) =
            standardize_cohort(&records, &age_spec(), PopulationTag::Ate, TieMethod::Efron)
                .unwrap();
        let rows = risk_difference_table(&contrast, &[1.0, 90.0]);
        assert!(!rows[0].extrapolated);
        assert!(rows[1].extrapolated);
        assert_eq!(rows[1].s1, None);
    }

    #[test]
    fn left_continuous_horizon_convention() {
        // grid with events at 100 and 200 days: value at 150 days is the
        // value at 100 days
        let records = cohort(300, 8);
        let (contrast, _, _) =
            standardize_cohort(&records, &age_spec(), PopulationTag::Ate, TieMethod::Efron)
                .unwrap();
        let k = contrast.times.partition_point(|&t| t <= 150.0) - 1;
        assert_eq!(contrast.s1_at(150.0), contrast.s1[k]);
    }

    #[test]
    fn bootstrap_bands_bracket_point_curves() {
        let records = cohort(250, 9);
        let (mut contrast, _, _) =
            standardize_cohort(&records, &age_spec(), PopulationTag::Ate, TieMethod::Efron)
                .unwrap();
        let band_times: Vec<f64> = vec![365.25, 730.5, 1461.0];
        let run = bootstrap_contrast(
            &records,
            &age_spec(),
            PopulationTag::Ate,
            TieMethod::Efron,
            &band_times,
            60,
            42,
        )
        .unwrap();
        let bands = bands_from_replicates(&band_times, &[run]).unwrap();
        for (k, &t) in band_times.iter().enumerate() {
            let s1 = contrast.s1_at(t);
            assert!(
                bands.s1_lo[k] <= s1 + 0.05 && bands.s1_hi[k] >= s1 - 0.05,
                "band ({}, {}) vs point {s1}",
                bands.s1_lo[k],
                bands.s1_hi[k]
            );
        }
        contrast.bands = Some(bands);
        let table = risk_difference_table(&contrast, &[2.0]);
        assert!(table[0].s1_lo.is_some());
    }

    #[test]
    fn profile_identity_scatter_on_diagonal() {
        let records = cohort(200, 10);
        let fit = fit_cox(&records, &age_spec(), TieMethod::Efron, "all").unwrap();
        let grid: Vec<f64> = (1..=5).map(|k| k as f64 * 200.0).collect();
        let profiles = profile_curves(
            &fit,
            &fit,
            &records,
            &DEFAULT_PROFILE_PERCENTILES,
            &grid,
        )
        .unwrap();
        for (_, a, b) in &profiles.scatter {
            assert_eq!(a, b);
        }
        for pair in &profiles.pairs {
            assert_eq!(pair.subject_a, pair.subject_b);
            for k in 0..grid.len() {
                assert_eq!(pair.curve_a.survival[k], pair.curve_b.survival[k]);
            }
        }
    }

    #[test]
    fn bad_percentile_is_an_error() {
        let records = cohort(50, 11);
        let fit = fit_cox(&records, &age_spec(), TieMethod::Efron, "all").unwrap();
        let res = profile_curves(&fit, &fit, &records, &[0.0], &[100.0]);
        assert!(matches!(res, Err(StandardizeError::BadPercentile(_))));
        let res = profile_curves(&fit, &fit, &records, &[100.5], &[100.0]);
        assert!(matches!(res, Err(StandardizeError::BadPercentile(_))));
    }
}
