//! Descriptive cohort tables: survival summary and covariate distributions
//! per observed treatment arm with between-arm differences.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Comorbidity, Pkd, RegistryError, Sex, SubjectRecord};
use crate::stats::Z_95;
use crate::DAYS_PER_YEAR;

#[derive(Debug, Clone)]
pub struct DescribeConfig {
    /// Bootstrap replicates for the difference-in-medians CI.
    pub bootstrap_b: usize,
    pub seed: u64,
}

impl Default for DescribeConfig {
    fn default() -> Self {
        Self {
            bootstrap_b: 200,
            seed: 1,
        }
    }
}

/// Per-arm summary of one covariate (or covariate level).
#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Summary {
    Continuous {
        median: f64,
        q1: f64,
        q3: f64,
        n: usize,
    },
    Count {
        n: usize,
        pct: f64,
    },
    NotAvailable,
}

/// Between-arm difference (PKT minus dialysis) with a 95% CI.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DiffEstimate {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovariateRow {
    pub covariate: String,
    pub level: Option<String>,
    pub overall: Summary,
    pub pkt: Summary,
    pub dialysis: Summary,
    /// Difference in medians (continuous) or proportions (categorical).
    pub difference: Option<DiffEstimate>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SurvivalSummaryRow {
    pub population: String,
    pub patients: usize,
    pub pct_of_cohort: f64,
    pub deaths: usize,
    pub pct_deaths_in_row: f64,
    pub median_followup_years: f64,
    pub total_person_years: f64,
    /// Deaths per person-year at risk (uses total person-years).
    pub crude_rate_per_year: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovariateTable {
    pub survival: Vec<SurvivalSummaryRow>,
    pub rows: Vec<CovariateRow>,
}

impl CovariateTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "covariate,level,overall,pkt,dialysis,difference,diff_lo,diff_hi,note\n",
        );
        for r in &self.rows {
            let fmt_summary = |s: &Summary| match s {
                Summary::Continuous { median, q1, q3, .. } => {
                    format!("{median:.1} ({q1:.1}-{q3:.1})")
                }
                Summary::Count { n, pct } => format!("{n} ({:.1}%)", pct * 100.0),
                Summary::NotAvailable => "not available".into(),
            };
            let (d, lo, hi) = match &r.difference {
                Some(d) => (
                    format!("{:.4}", d.estimate),
                    format!("{:.4}", d.lo),
                    format!("{:.4}", d.hi),
                ),
                None => (String::new(), String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.covariate,
                r.level.as_deref().unwrap_or(""),
                fmt_summary(&r.overall),
                fmt_summary(&r.pkt),
                fmt_summary(&r.dialysis),
                d,
                lo,
                hi,
                r.note.as_deref().unwrap_or("")
            ));
        }
        out
    }

    pub fn survival_csv(&self) -> String {
        let mut out = String::from(
            "population,patients,pct_of_cohort,deaths,pct_deaths_in_row,median_followup_years,total_person_years,crude_rate_per_year\n",
        );
        for r in &self.survival {
            out.push_str(&format!(
                "{},{},{:.4},{},{:.4},{:.4},{:.2},{:.4}\n",
                r.population,
                r.patients,
                r.pct_of_cohort,
                r.deaths,
                r.pct_deaths_in_row,
                r.median_followup_years,
                r.total_person_years,
                r.crude_rate_per_year
            ));
        }
        out
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    // linear interpolation between order statistics (R type 7)
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - h.floor()) * (sorted[hi] - sorted[lo])
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile(&v, 0.5)
}

fn continuous_summary(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary::NotAvailable;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Summary::Continuous {
        median: quantile(&v, 0.5),
        q1: quantile(&v, 0.25),
        q3: quantile(&v, 0.75),
        n: v.len(),
    }
}

/// Normal-approximation CI for a difference in proportions.
fn proportion_diff(n1: usize, k1: usize, n0: usize, k0: usize) -> Option<DiffEstimate> {
    if n1 == 0 || n0 == 0 {
        return None;
    }
    let p1 = k1 as f64 / n1 as f64;
    let p0 = k0 as f64 / n0 as f64;
    let se = (p1 * (1.0 - p1) / n1 as f64 + p0 * (1.0 - p0) / n0 as f64).sqrt();
    Some(DiffEstimate {
        estimate: p1 - p0,
        lo: p1 - p0 - Z_95 * se,
        hi: p1 - p0 + Z_95 * se,
    })
}

/// Bootstrap percentile CI for a difference in medians.
fn median_diff(a: &[f64], b: &[f64], cfg: &DescribeConfig) -> Option<DiffEstimate> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let point = median(a) - median(b);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut diffs = Vec::with_capacity(cfg.bootstrap_b);
    for _ in 0..cfg.bootstrap_b {
        let ra: Vec<f64> = (0..a.len()).map(|_| a[rng.random_range(0..a.len())]).collect();
        let rb: Vec<f64> = (0..b.len()).map(|_| b[rng.random_range(0..b.len())]).collect();
        diffs.push(median(&ra) - median(&rb));
    }
    diffs.sort_by(|x, y| x.total_cmp(y));
    let lo_idx = ((0.025 * cfg.bootstrap_b as f64) as usize).min(cfg.bootstrap_b - 1);
    let hi_idx = ((0.975 * cfg.bootstrap_b as f64) as usize).min(cfg.bootstrap_b - 1);
    Some(DiffEstimate {
        estimate: point,
        lo: diffs[lo_idx],
        hi: diffs[hi_idx],
    })
}

fn survival_row(population: &str, records: &[&SubjectRecord], cohort_n: usize) -> SurvivalSummaryRow {
    let deaths = records.iter().filter(|r| r.event).count();
    let total_py: f64 = records.iter().map(|r| r.years()).sum();
    let followups: Vec<f64> = records.iter().map(|r| r.years()).collect();
    SurvivalSummaryRow {
        population: population.to_string(),
        patients: records.len(),
        pct_of_cohort: if cohort_n > 0 {
            records.len() as f64 / cohort_n as f64
        } else {
            0.0
        },
        deaths,
        pct_deaths_in_row: if records.is_empty() {
            0.0
        } else {
            deaths as f64 / records.len() as f64
        },
        median_followup_years: if followups.is_empty() {
            0.0
        } else {
            median(&followups)
        },
        total_person_years: total_py,
        crude_rate_per_year: if total_py > 0.0 {
            deaths as f64 / total_py
        } else {
            0.0
        },
    }
}

struct ArmSplit<'a> {
    all: Vec<&'a SubjectRecord>,
    pkt: Vec<&'a SubjectRecord>,
    dialysis: Vec<&'a SubjectRecord>,
}

fn categorical_rows<'a, F>(
    name: &str,
    levels: &[String],
    split: &ArmSplit<'a>,
    value: F,
    rows: &mut Vec<CovariateRow>,
) where
    F: Fn(&SubjectRecord) -> String,
{
    for level in levels {
        let count = |arm: &[&SubjectRecord]| arm.iter().filter(|r| &value(r) == level).count();
        let (n_all, n_pkt, n_dial) = (count(&split.all), count(&split.pkt), count(&split.dialysis));
        let pct = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        rows.push(CovariateRow {
            covariate: name.to_string(),
            level: Some(level.clone()),
            overall: Summary::Count {
                n: n_all,
                pct: pct(n_all, split.all.len()),
            },
            pkt: Summary::Count {
                n: n_pkt,
                pct: pct(n_pkt, split.pkt.len()),
            },
            dialysis: Summary::Count {
                n: n_dial,
                pct: pct(n_dial, split.dialysis.len()),
            },
            difference: proportion_diff(split.pkt.len(), n_pkt, split.dialysis.len(), n_dial),
            note: None,
        });
    }
}

/// Build the descriptive covariate table: per-arm and overall summaries,
/// between-arm differences (normal approximation for proportions, bootstrap
/// percentile for medians), plus deaths / person-years / crude rates.
pub fn describe(
    records: &[SubjectRecord],
    cfg: &DescribeConfig,
) -> Result<CovariateTable, RegistryError> {
    if records.is_empty() {
        return Err(RegistryError::EmptyInput);
    }
    let split = ArmSplit {
        all: records.iter().collect(),
        pkt: records.iter().filter(|r| r.pkt).collect(),
        dialysis: records.iter().filter(|r| !r.pkt).collect(),
    };

    let survival = vec![
        survival_row("cohort", &split.all, records.len()),
        survival_row("pkt", &split.pkt, records.len()),
        survival_row("dialysis_first", &split.dialysis, records.len()),
    ];

    let mut rows = Vec::new();

    // age
    let ages = |arm: &[&SubjectRecord]| arm.iter().map(|r| r.age).collect::<Vec<_>>();
    rows.push(CovariateRow {
        covariate: "age".into(),
        level: None,
        overall: continuous_summary(&ages(&split.all)),
        pkt: continuous_summary(&ages(&split.pkt)),
        dialysis: continuous_summary(&ages(&split.dialysis)),
        difference: median_diff(&ages(&split.pkt), &ages(&split.dialysis), cfg),
        note: None,
    });

    // sex
    categorical_rows(
        "sex",
        &[Sex::Female.as_str().to_string(), Sex::Male.as_str().to_string()],
        &split,
        |r| r.sex.as_str().to_string(),
        &mut rows,
    );

    // region: observed levels, sorted for determinism
    let mut regions: Vec<String> = records.iter().map(|r| r.region.clone()).collect();
    regions.sort();
    regions.dedup();
    categorical_rows("region", &regions, &split, |r| r.region.clone(), &mut rows);

    // primary kidney disease
    let pkd_levels: Vec<String> = Pkd::ALL.iter().map(|p| p.code().to_string()).collect();
    categorical_rows("pkd", &pkd_levels, &split, |r| r.pkd.code().to_string(), &mut rows);

    // comorbidities: exhaustive yes/no/missing levels
    for c in Comorbidity::ALL {
        let all_missing = records.iter().all(|r| r.comorbidity(c).is_none());
        if all_missing {
            rows.push(CovariateRow {
                covariate: c.field_name().into(),
                level: None,
                overall: Summary::NotAvailable,
                pkt: Summary::NotAvailable,
                dialysis: Summary::NotAvailable,
                difference: None,
                note: Some("not available".into()),
            });
            continue;
        }
        let levels = ["yes".to_string(), "no".to_string(), "missing".to_string()];
        categorical_rows(
            c.field_name(),
            &levels,
            &split,
            move |r| match r.comorbidity(c) {
                Some(true) => "yes".into(),
                Some(false) => "no".into(),
                None => "missing".into(),
            },
            &mut rows,
        );
    }

    // kidney function
    let gfrs = |arm: &[&SubjectRecord]| arm.iter().filter_map(|r| r.gfr).collect::<Vec<_>>();
    let gfr_all = gfrs(&split.all);
    rows.push(CovariateRow {
        covariate: "gfr".into(),
        level: None,
        overall: continuous_summary(&gfr_all),
        pkt: continuous_summary(&gfrs(&split.pkt)),
        dialysis: continuous_summary(&gfrs(&split.dialysis)),
        difference: if gfr_all.is_empty() {
            None
        } else {
            median_diff(&gfrs(&split.pkt), &gfrs(&split.dialysis), cfg)
        },
        note: if gfr_all.is_empty() {
            Some("not available".into())
        } else {
            None
        },
    });

    // entry year
    let years = |arm: &[&SubjectRecord]| {
        arm.iter()
            .map(|r| f64::from(r.entry_year()))
            .collect::<Vec<_>>()
    };
    rows.push(CovariateRow {
        covariate: "entry_year".into(),
        level: None,
        overall: continuous_summary(&years(&split.all)),
        pkt: continuous_summary(&years(&split.pkt)),
        dialysis: continuous_summary(&years(&split.dialysis)),
        difference: median_diff(&years(&split.pkt), &years(&split.dialysis), cfg),
        note: None,
    });

    Ok(CovariateTable { survival, rows })
}

#[allow(dead_code)]
fn years_of(days: i64) -> f64 {
    days as f64 / DAYS_PER_YEAR
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn record(id: &str, pkt: bool, t_days: i64, event: bool, age: f64) -> SubjectRecord {
        SubjectRecord {
            id: id.into(),
            entry_date: NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(),
            age,
            sex: if id.len() % 2 == 0 { Sex::Female } else { Sex::Male },
            region: "Western".into(),
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

    #[test]
    fn crude_rate_is_deaths_over_person_years() {
        // five hand-built records: 2 deaths over 10 person-years -> 0.2
        let days = |y: f64| (y * DAYS_PER_YEAR).round() as i64;
        let records = vec![
            record("a", true, days(1.0), true, 50.0),
            record("b", true, days(2.0), true, 50.0),
            record("c", true, days(3.0), false, 50.0),
            record("d", true, days(2.5), false, 50.0),
            record("e", true, days(1.5), false, 50.0),
        ];
        let table = describe(&records, &DescribeConfig::default()).unwrap();
        let pkt = &table.survival[1];
        assert_eq!(pkt.deaths, 2);
        let total_py: f64 = records.iter().map(|r| r.years()).sum();
        assert_eq!(pkt.total_person_years, total_py);
        assert_eq!(pkt.crude_rate_per_year, 2.0 / total_py);
    }

    #[test]
    fn crude_rate_example_scale() {
        // 196 deaths over 9,800 person-years -> 0.02
        assert!((196.0_f64 / 9800.0 - 0.02).abs() < 1e-15);
    }

    #[test]
    fn identical_arms_have_zero_differences() {
        let mut records = Vec::new();
        for i in 0..40 {
            records.push(record(&format!("p{i}"), true, 300 + 10 * i, i % 3 == 0, 40.0 + i as f64));
            records.push(record(&format!("d{i}"), false, 300 + 10 * i, i % 3 == 0, 40.0 + i as f64));
        }
        let table = describe(&records, &DescribeConfig::default()).unwrap();
        for row in &table.rows {
            if let Some(d) = &row.difference {
                assert!(
                    d.estimate.abs() < 1e-12,
                    "{} diff {}",
                    row.covariate,
                    d.estimate
                );
                assert!(d.lo <= 0.0 && d.hi >= 0.0, "{}: CI should contain 0", row.covariate);
            }
        }
    }

    #[test]
    fn two_proportion_ci_matches_closed_form() {
        // planted prevalence 37.5% vs 35.0% at n=1,097 / 18,434
        let d = proportion_diff(1097, 411, 18434, 6452).unwrap();
        assert!((d.estimate - (411.0 / 1097.0 - 6452.0 / 18434.0)).abs() < 1e-12);
        let half = (d.hi - d.lo) / 2.0;
        assert!((half - 0.0295).abs() < 0.002, "half-width {half}");
    }

    #[test]
    fn all_missing_covariate_flagged() {
        let records = vec![record("a", true, 100, false, 50.0)];
        let table = describe(&records, &DescribeConfig::default()).unwrap();
        let gfr = table.rows.iter().find(|r| r.covariate == "gfr").unwrap();
        assert_eq!(gfr.note.as_deref(), Some("not available"));
        assert_eq!(gfr.overall, Summary::NotAvailable);
    }

    #[test]
    fn percentages_sum_to_one_within_arm() {
        let mut records = Vec::new();
        for i in 0..30 {
            let mut r = record(&format!("x{i}"), i % 4 == 0, 100 + i, i % 2 == 0, 55.0);
            r.diabetes = match i % 3 {
                0 => Some(true),
                1 => Some(false),
                _ => None,
            };
            records.push(r);
        }
        let table = describe(&records, &DescribeConfig::default()).unwrap();
        let total: f64 = table
            .rows
            .iter()
            .filter(|r| r.covariate == "diabetes")
            .map(|r| match &r.dialysis {
                Summary::Count { pct, .. } => *pct,
                _ => 0.0,
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(describe(&[], &DescribeConfig::default()).is_err());
    }
}
