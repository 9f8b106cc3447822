//! Synthetic incident-registry generator with known ground truth.
//!
//! Subjects enter over a calendar window and are administratively censored
//! at a fixed date. Potential survival under immediate transplant is drawn
//! by exact inverse-transform sampling of a piecewise-constant hazard; the
//! dialysis-first outcome is derived from the same draw through the
//! structural time-scaling parameters, with delayed transplants arriving
//! from an independent exponential clock. Every run records the true
//! marginal survival curves (high-n Monte Carlo), the true scaling
//! parameters and the true treatment model, so estimators can be checked
//! against oracle values.

mod presets;

pub use presets::{preset, PRESET_NAMES};

use chrono::{Datelike, Days, NaiveDate};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{Pkd, Sex, SubjectRecord};
use crate::DAYS_PER_YEAR;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("degenerate config: {0}")]
    DegenerateConfig(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

/// Piecewise-constant hazard over follow-up time (years). `rates[k]`
/// applies on `[breaks[k-1], breaks[k])`, with the last rate open-ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseHazard {
    pub breaks: Vec<f64>,
    pub rates: Vec<f64>,
}

impl PiecewiseHazard {
    pub fn constant(rate: f64) -> Self {
        Self {
            breaks: Vec::new(),
            rates: vec![rate],
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.rates.len() != self.breaks.len() + 1 {
            return Err(SimError::DegenerateConfig(
                "piecewise hazard needs one more rate than breaks".into(),
            ));
        }
        if self.rates.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(SimError::DegenerateConfig("hazard rates must be positive".into()));
        }
        if self.breaks.iter().any(|b| !b.is_finite() || *b <= 0.0)
            || self.breaks.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(SimError::DegenerateConfig(
                "hazard breaks must be positive and increasing".into(),
            ));
        }
        Ok(())
    }

    /// Cumulative hazard at `t` years.
    pub fn cumulative(&self, t: f64) -> f64 {
        let mut h = 0.0;
        let mut start = 0.0;
        for (k, &b) in self.breaks.iter().enumerate() {
            if t <= b {
                return h + self.rates[k] * (t - start);
            }
            h += self.rates[k] * (b - start);
            start = b;
        }
        h + self.rates[self.breaks.len()] * (t - start)
    }

    /// Exact inverse of the cumulative hazard.
    pub fn invert(&self, h: f64) -> f64 {
        let mut acc = 0.0;
        let mut start = 0.0;
        for (k, &b) in self.breaks.iter().enumerate() {
            let seg = self.rates[k] * (b - start);
            if h <= acc + seg {
                return start + (h - acc) / self.rates[k];
            }
            acc += seg;
            start = b;
        }
        start + (h - acc) / self.rates[self.breaks.len()]
    }

    /// Hazard of `c * T` when `T` follows this hazard.
    pub fn scale_time(&self, c: f64) -> Self {
        Self {
            breaks: self.breaks.iter().map(|b| b * c).collect(),
            rates: self.rates.iter().map(|r| r / c).collect(),
        }
    }

    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.breaks.len() == other.breaks.len()
            && self
                .breaks
                .iter()
                .zip(&other.breaks)
                .all(|(a, b)| (a - b).abs() <= tol * a.abs().max(1.0))
            && self
                .rates
                .iter()
                .zip(&other.rates)
                .all(|(a, b)| (a - b).abs() <= tol * a.abs().max(1.0))
    }
}

/// Logistic generation model for one comorbidity flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComorbidityGen {
    pub base_logit: f64,
    pub per_year: f64,
    pub per_age_decade: f64,
}

impl ComorbidityGen {
    pub const fn flat(base_logit: f64) -> Self {
        Self {
            base_logit,
            per_year: 0.0,
            per_age_decade: 0.0,
        }
    }
}

/// Covariate-generation parameters. Ages are truncated normal; calendar
/// drifts are per elapsed entry year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateGen {
    pub age_mean: f64,
    pub age_sd: f64,
    pub age_drift_per_year: f64,
    pub age_min: f64,
    pub age_max: f64,
    pub p_female: f64,
    pub region_probs: Vec<(String, f64)>,
    pub pkd_probs: [f64; 6],
    /// diabetes, hypertension, ihd, pad, cvd
    pub comorbidity: [ComorbidityGen; 5],
    pub gfr_mean: f64,
    pub gfr_sd: f64,
}

impl Default for CovariateGen {
    fn default() -> Self {
        Self {
            age_mean: 60.0,
            age_sd: 15.0,
            age_drift_per_year: 0.0,
            age_min: 18.0,
            age_max: 95.0,
            p_female: 0.35,
            region_probs: vec![
                ("Stockholm".into(), 0.19),
                ("Uppsala-Orebro".into(), 0.23),
                ("Northern".into(), 0.10),
                ("Southern".into(), 0.18),
                ("Southeastern".into(), 0.12),
                ("Western".into(), 0.18),
            ],
            pkd_probs: [0.29, 0.18, 0.11, 0.08, 0.03, 0.31],
            comorbidity: [
                ComorbidityGen::flat(-0.5),
                ComorbidityGen::flat(1.3),
                ComorbidityGen::flat(-1.0),
                ComorbidityGen::flat(-1.9),
                ComorbidityGen::flat(-2.1),
            ],
            gfr_mean: 7.5,
            gfr_sd: 3.0,
        }
    }
}

/// Logit model for receiving immediate transplant. Age enters per decade
/// centered at 60, calendar year per elapsed year since the window start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentModel {
    pub intercept: f64,
    pub per_age_decade: f64,
    /// Additional logit drop for subjects older than 75.
    pub over_75_extra: f64,
    pub female: f64,
    pub per_year: f64,
    pub pkd: [f64; 6],
    pub comorbidity: [f64; 5],
}

impl TreatmentModel {
    pub fn intercept_only(intercept: f64) -> Self {
        Self {
            intercept,
            per_age_decade: 0.0,
            over_75_extra: 0.0,
            female: 0.0,
            per_year: 0.0,
            pkd: [0.0; 6],
            comorbidity: [0.0; 5],
        }
    }

    /// True propensity score for given covariates.
    pub fn propensity(&self, cov: &DrawnCovariates, years_since_start: f64) -> f64 {
        let mut lp = self.intercept
            + self.per_age_decade * (cov.age - 60.0) / 10.0
            + self.per_year * years_since_start
            + self.pkd[cov.pkd_index];
        if cov.age > 75.0 {
            lp += self.over_75_extra;
        }
        if cov.sex == Sex::Female {
            lp += self.female;
        }
        for (c, flag) in self.comorbidity.iter().zip(&cov.flags) {
            if *flag {
                lp += c;
            }
        }
        1.0 / (1.0 + (-lp).exp())
    }
}

/// Log hazard-ratio effects shared by both arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardEffects {
    pub per_age_decade: f64,
    pub female: f64,
    pub pkd: [f64; 6],
    pub comorbidity: [f64; 5],
}

impl HazardEffects {
    pub fn none() -> Self {
        Self {
            per_age_decade: 0.0,
            female: 0.0,
            pkd: [0.0; 6],
            comorbidity: [0.0; 5],
        }
    }

    fn log_multiplier(&self, cov: &DrawnCovariates) -> f64 {
        let mut lm = self.per_age_decade * (cov.age - 60.0) / 10.0 + self.pkd[cov.pkd_index];
        if cov.sex == Sex::Female {
            lm += self.female;
        }
        for (c, flag) in self.comorbidity.iter().zip(&cov.flags) {
            if *flag {
                lm += c;
            }
        }
        lm
    }
}

/// Complete data-generating configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub entry_start: NaiveDate,
    pub entry_end: NaiveDate,
    pub admin_censor_date: NaiveDate,
    pub covariates: CovariateGen,
    pub treatment: TreatmentModel,
    /// Baseline hazard for survival under immediate transplant.
    pub baseline_hazard_pkt: PiecewiseHazard,
    /// Baseline hazard for death while staying on dialysis; must equal the
    /// `psi_w` time-scaling of the transplant baseline so the structural
    /// model holds (presets construct it that way).
    pub baseline_hazard_dialysis: PiecewiseHazard,
    pub hazard_effects: HazardEffects,
    /// Multiplies the hazard per elapsed entry year (e.g. 0.97 = 3% yearly fall).
    pub calendar_trend_per_year: f64,
    /// Structural log time-scaling for days without transplant.
    pub psi_w: f64,
    /// Structural log time-scaling for days after a delayed transplant.
    pub psi_r: f64,
    /// Exponential rate of delayed transplant while on dialysis (per year).
    pub switch_rate_per_year: f64,
    /// Multiplies the switch rate for female subjects (transplant access
    /// differs across demographics; also what makes the two-parameter
    /// estimating equation informative).
    pub switch_rate_female_factor: f64,
    /// Comorbidity flags are recorded only from this entry year on.
    pub comorbidity_recorded_from: Option<i32>,
    /// Kidney function is recorded only from this entry year on.
    pub gfr_recorded_from: Option<i32>,
    /// Monte-Carlo size for the true marginal curves.
    pub truth_mc_n: usize,
    pub truth_grid_step_years: f64,
    pub truth_grid_max_years: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n == 0 {
            return Err(SimError::DegenerateConfig("n must be positive".into()));
        }
        if self.entry_start > self.entry_end {
            return Err(SimError::DegenerateConfig("entry window is empty".into()));
        }
        self.baseline_hazard_pkt.validate()?;
        self.baseline_hazard_dialysis.validate()?;
        let derived = self.baseline_hazard_pkt.scale_time(self.psi_w.exp());
        if !self.baseline_hazard_dialysis.approx_eq(&derived, 1e-9) {
            return Err(SimError::DegenerateConfig(
                "dialysis baseline must be the psi_w time-scaling of the transplant baseline"
                    .into(),
            ));
        }
        if !(self.calendar_trend_per_year > 0.0) {
            return Err(SimError::DegenerateConfig("calendar trend must be positive".into()));
        }
        if self.switch_rate_per_year < 0.0 {
            return Err(SimError::DegenerateConfig("switch rate must be non-negative".into()));
        }
        if !(self.switch_rate_female_factor > 0.0) {
            return Err(SimError::DegenerateConfig(
                "switch rate factor must be positive".into(),
            ));
        }
        if !(self.covariates.p_female > 0.0 && self.covariates.p_female < 1.0) {
            return Err(SimError::DegenerateConfig("p_female must be in (0,1)".into()));
        }
        let region_total: f64 = self.covariates.region_probs.iter().map(|(_, p)| p).sum();
        if (region_total - 1.0).abs() > 1e-9
            || self.covariates.region_probs.iter().any(|(_, p)| *p < 0.0)
        {
            return Err(SimError::DegenerateConfig("region probabilities must sum to 1".into()));
        }
        let pkd_total: f64 = self.covariates.pkd_probs.iter().sum();
        if (pkd_total - 1.0).abs() > 1e-9 || self.covariates.pkd_probs.iter().any(|p| *p < 0.0) {
            return Err(SimError::DegenerateConfig("pkd probabilities must sum to 1".into()));
        }
        if self.covariates.age_sd <= 0.0 || self.covariates.age_min >= self.covariates.age_max {
            return Err(SimError::DegenerateConfig("invalid age distribution".into()));
        }
        if self.truth_grid_step_years <= 0.0 || self.truth_grid_max_years <= 0.0 {
            return Err(SimError::DegenerateConfig("invalid truth grid".into()));
        }
        Ok(())
    }
}

/// Ground truth recorded at generation time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SimConfig,
    pub grid_years: Vec<f64>,
    /// True marginal survival under assignment to immediate transplant.
    pub s1: Vec<f64>,
    /// True marginal survival under assignment to dialysis first
    /// (delayed transplants included).
    pub s0: Vec<f64>,
    pub psi_w: f64,
    pub psi_r: f64,
    /// The true propensity model.
    pub treatment_model: TreatmentModel,
    pub truth_mc_n: usize,
    /// Monte-Carlo half-width the curves are documented to honour.
    pub mc_tolerance: f64,
}

impl GroundTruth {
    pub fn s1_at(&self, years: f64) -> f64 {
        grid_lookup(&self.grid_years, &self.s1, years)
    }

    pub fn s0_at(&self, years: f64) -> f64 {
        grid_lookup(&self.grid_years, &self.s0, years)
    }
}

fn grid_lookup(grid: &[f64], values: &[f64], t: f64) -> f64 {
    // nearest grid point at or below t
    match grid.partition_point(|&g| g <= t + 1e-12) {
        0 => 1.0,
        k => values[k - 1],
    }
}

/// Covariates drawn for one subject.
#[derive(Debug, Clone)]
pub struct DrawnCovariates {
    pub age: f64,
    pub sex: Sex,
    pub region_index: usize,
    pub pkd_index: usize,
    pub flags: [bool; 5],
    pub gfr: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn subject_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(stream) ^ splitmix64(index)))
}

fn draw_categorical(rng: &mut ChaCha8Rng, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, p) in probs.enumerate() {
        acc += p;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

fn draw_covariates(cfg: &SimConfig, rng: &mut ChaCha8Rng, years_since_start: f64) -> DrawnCovariates {
    let cov = &cfg.covariates;
    let age_mean = cov.age_mean + cov.age_drift_per_year * years_since_start;
    let normal = Normal::new(age_mean, cov.age_sd).expect("validated sd");
    let age = loop {
        let a = normal.sample(rng);
        if a >= cov.age_min && a <= cov.age_max {
            break a;
        }
    };
    let sex = if rng.random_bool(cov.p_female) {
        Sex::Female
    } else {
        Sex::Male
    };
    let region_index = draw_categorical(rng, cov.region_probs.iter().map(|(_, p)| *p));
    let pkd_index = draw_categorical(rng, cov.pkd_probs.iter().copied());
    let mut flags = [false; 5];
    for (j, gen) in cov.comorbidity.iter().enumerate() {
        let lp = gen.base_logit
            + gen.per_year * years_since_start
            + gen.per_age_decade * (age - 60.0) / 10.0;
        flags[j] = rng.random_bool(1.0 / (1.0 + (-lp).exp()));
    }
    let gfr_normal = Normal::new(cov.gfr_mean, cov.gfr_sd).expect("validated sd");
    let gfr = loop {
        let g = gfr_normal.sample(rng);
        if g > 0.0 {
            break g;
        }
    };
    DrawnCovariates {
        age,
        sex,
        region_index,
        pkd_index,
        flags,
        gfr,
    }
}

/// Potential outcomes for one subject: survival from onset under immediate
/// transplant, and the dialysis-first decomposition (switch time and the
/// post-switch residual), all in uncensored years.
struct PotentialOutcomes {
    t1_years: f64,
    /// Dialysis-first: (time without transplant, time after delayed transplant).
    t0_parts: (f64, f64),
}

fn draw_outcomes(
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    log_mult: f64,
    switch_rate: f64,
) -> PotentialOutcomes {
    // exact inverse-transform draw of T1 from the transplant-arm hazard
    let u: f64 = rng.random();
    let e = -(1.0 - u).ln();
    let t1_years = cfg.baseline_hazard_pkt.invert(e / log_mult.exp());

    // budget bookkeeping on the T1 scale: a dialysis year consumes
    // exp(-psi_w) of the budget, a post-switch year exp(-psi_r)
    let death_on_dialysis = t1_years * cfg.psi_w.exp();
    let switch = if switch_rate > 0.0 {
        let u2: f64 = rng.random();
        -(1.0 - u2).ln() / switch_rate
    } else {
        f64::INFINITY
    };
    let t0_parts = if switch < death_on_dialysis {
        let residual_budget = t1_years - switch * (-cfg.psi_w).exp();
        (switch, residual_budget * cfg.psi_r.exp())
    } else {
        (death_on_dialysis, 0.0)
    };
    PotentialOutcomes { t1_years, t0_parts }
}

fn subject_switch_rate(cfg: &SimConfig, cov: &DrawnCovariates) -> f64 {
    if cov.sex == Sex::Female {
        cfg.switch_rate_per_year * cfg.switch_rate_female_factor
    } else {
        cfg.switch_rate_per_year
    }
}

const COHORT_STREAM: u64 = 0x1;
const TRUTH_STREAM: u64 = 0x2;

fn generate_subject(cfg: &SimConfig, index: usize, window_days: u64) -> SubjectRecord {
    let mut rng = subject_rng(cfg.seed, COHORT_STREAM, index as u64);

    let offset = rng.random_range(0..=window_days);
    let entry_date = cfg
        .entry_start
        .checked_add_days(Days::new(offset))
        .expect("entry window in range");
    let years_since_start = f64::from(entry_date.year() - cfg.entry_start.year());

    let cov = draw_covariates(cfg, &mut rng, years_since_start);
    let ps = cfg.treatment.propensity(&cov, years_since_start);
    let pkt = rng.random_bool(ps.clamp(1e-12, 1.0 - 1e-12));

    let log_mult = cfg.hazard_effects.log_multiplier(&cov)
        + cfg.calendar_trend_per_year.ln() * years_since_start;
    let outcomes = draw_outcomes(cfg, &mut rng, log_mult, subject_switch_rate(cfg, &cov));

    let censor_days = (cfg.admin_censor_date - entry_date).num_days().max(0);
    let censor_years = censor_days as f64 / DAYS_PER_YEAR;

    let (total_years, switch_years) = if pkt {
        (outcomes.t1_years, None)
    } else {
        let (t_w, t_r) = outcomes.t0_parts;
        (t_w + t_r, if t_r > 0.0 { Some(t_w) } else { None })
    };

    let event = total_years <= censor_years;
    let t_days = if event {
        (total_years * DAYS_PER_YEAR).round() as i64
    } else {
        censor_days
    };
    let t_switch_days = match switch_years {
        Some(w) if w < total_years.min(censor_years) && t_days > 0 => {
            Some(((w * DAYS_PER_YEAR).round() as i64).clamp(1, t_days))
        }
        _ => None,
    };

    let recorded = |year_from: Option<i32>| match year_from {
        Some(y) => entry_date.year() >= y,
        None => true,
    };
    let flags_recorded = recorded(cfg.comorbidity_recorded_from);
    let flag = |j: usize| {
        if flags_recorded {
            Some(cov.flags[j])
        } else {
            None
        }
    };

    SubjectRecord {
        id: format!("S{index:06}"),
        entry_date,
        age: (cov.age * 10.0).round() / 10.0,
        sex: cov.sex,
        region: cfg.covariates.region_probs[cov.region_index].0.clone(),
        pkd: Pkd::ALL[cov.pkd_index],
        diabetes: flag(0),
        hypertension: flag(1),
        ihd: flag(2),
        pad: flag(3),
        cvd: flag(4),
        gfr: if recorded(cfg.gfr_recorded_from) {
            Some((cov.gfr * 10.0).round() / 10.0)
        } else {
            None
        },
        pkt,
        t_switch_days,
        t_days,
        event,
    }
}

/// Deterministic synthetic registry draw: records plus ground truth.
/// `seed` overrides the seed stored in the config.
pub fn simulate_registry(
    config: &SimConfig,
    seed: u64,
) -> Result<(Vec<SubjectRecord>, GroundTruth), SimError> {
    let mut cfg = config.clone();
    cfg.seed = seed;
    cfg.validate()?;

    let window_days = (cfg.entry_end - cfg.entry_start).num_days() as u64;
    let records: Vec<SubjectRecord> = (0..cfg.n)
        .into_par_iter()
        .map(|i| generate_subject(&cfg, i, window_days))
        .collect();

    let truth = ground_truth(&cfg);
    Ok((records, truth))
}

/// True marginal survival curves by Monte Carlo over the potential-outcome
/// world (no administrative censoring). Deterministic given the seed; the
/// per-block integer tallies make the reduction order irrelevant.
fn ground_truth(cfg: &SimConfig) -> GroundTruth {
    let steps = (cfg.truth_grid_max_years / cfg.truth_grid_step_years).round() as usize;
    let grid_years: Vec<f64> = (1..=steps)
        .map(|k| k as f64 * cfg.truth_grid_step_years)
        .collect();

    const BLOCK: usize = 10_000;
    let blocks = cfg.truth_mc_n.div_ceil(BLOCK);
    let window_days = (cfg.entry_end - cfg.entry_start).num_days() as u64;

    let tallies: Vec<(Vec<u64>, Vec<u64>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = subject_rng(cfg.seed, TRUTH_STREAM, b as u64);
            let mut hist1 = vec![0u64; grid_years.len() + 1];
            let mut hist0 = vec![0u64; grid_years.len() + 1];
            let in_block = BLOCK.min(cfg.truth_mc_n - b * BLOCK);
            for _ in 0..in_block {
                // entry drawn exactly as for the cohort: uniform over days
                let offset = rng.random_range(0..=window_days);
                let entry_date = cfg
                    .entry_start
                    .checked_add_days(Days::new(offset))
                    .expect("entry window in range");
                let years_since_start = f64::from(entry_date.year() - cfg.entry_start.year());
                let cov = draw_covariates(cfg, &mut rng, years_since_start);
                let log_mult = cfg.hazard_effects.log_multiplier(&cov)
                    + cfg.calendar_trend_per_year.ln() * years_since_start;
                let out = draw_outcomes(cfg, &mut rng, log_mult, subject_switch_rate(cfg, &cov));
                let t0 = out.t0_parts.0 + out.t0_parts.1;
                hist1[grid_years.partition_point(|&g| g < out.t1_years)] += 1;
                hist0[grid_years.partition_point(|&g| g < t0)] += 1;
            }
            (hist1, hist0)
        })
        .collect();

    let mut hist1 = vec![0u64; grid_years.len() + 1];
    let mut hist0 = vec![0u64; grid_years.len() + 1];
    for (h1, h0) in tallies {
        for (a, b) in hist1.iter_mut().zip(h1) {
            *a += b;
        }
        for (a, b) in hist0.iter_mut().zip(h0) {
            *a += b;
        }
    }

    // survival at grid[k] = fraction with T > grid[k] = mass in bins > k
    let n = cfg.truth_mc_n as f64;
    let suffix = |hist: &[u64]| {
        let mut out = Vec::with_capacity(grid_years.len());
        let mut above: u64 = hist.iter().sum();
        for k in 0..grid_years.len() {
            above -= hist[k];
            out.push(above as f64 / n);
        }
        out
    };

    let s1 = suffix(&hist1);
    let s0 = suffix(&hist0);
    GroundTruth {
        grid_years,
        s1,
        s0,
        psi_w: cfg.psi_w,
        psi_r: cfg.psi_r,
        treatment_model: cfg.treatment.clone(),
        truth_mc_n: cfg.truth_mc_n,
        mc_tolerance: 0.002,
        config: cfg.clone(),
    }
}
