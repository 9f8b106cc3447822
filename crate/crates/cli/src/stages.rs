//! Pipeline stages. Each stage reads records, writes its artifacts into the
//! run directory and hands its outputs to the next stage; `run_pipeline`
//! chains them in the analysis order: eligibility, description, propensity
//! and positivity, imputation, per-arm outcome models with standardization,
//! the IPW comparison, structural AFT g-estimation and the recensoring
//! sweep.

use registrial::coxmod::{fit_cox, CovariateSpec, Term};
use registrial::gestaft::{recensoring_sweep, solve_psi, solve_psi_two, AftEstimate, SweepTable};
use registrial::missing::{impute_chained, pool_weights, BootstrapResult};
use registrial::nonparam::{cumulative_incidence, kaplan_meier, log_rank, SurvivalCurve};
use registrial::registry::{
    apply_eligibility, describe, load_registry, write_registry, write_registry_sets, CsvSchema,
    DescribeConfig, SubjectRecord,
};
use registrial::simlab::{simulate_registry, GroundTruth};
use registrial::standardize::{
    bands_from_replicates, bootstrap_contrast, profile_curves, risk_difference_table,
    risk_table_csv, standardize_cohort, union_event_grid, PopulationTag,
    StandardizedContrast,
};
use registrial::weighting::{fit_logistic, ipw_km, ipw_weights, positivity_report, LogisticFit};
use registrial::DAYS_PER_YEAR;

use crate::artifacts::OutputDir;
use crate::config::{InputSpec, PipelineConfig};
use crate::error::CliError;

pub struct Cohort {
    pub records: Vec<SubjectRecord>,
    pub truth: Option<GroundTruth>,
}

/// Load the configured input. Synthetic cohorts are written next to the
/// other artifacts together with their ground-truth sidecar.
pub fn load_cohort(
    cfg: &PipelineConfig,
    out: &mut OutputDir,
    persist_input: bool,
) -> Result<Cohort, CliError> {
    match &cfg.input {
        InputSpec::Csv { path, schema } => {
            let file = std::fs::File::open(path)
                .map_err(|e| CliError::Data(format!("cannot open `{path}`: {e}")))?;
            let outcome = load_registry(file, schema)?;
            let records = outcome.into_strict()?;
            if records.is_empty() {
                return Err(CliError::Data(format!("`{path}` holds no records")));
            }
            Ok(Cohort {
                records,
                truth: None,
            })
        }
        _ => {
            let sim = cfg.sim_config()?.expect("synthetic input");
            let (records, truth) = simulate_registry(&sim, cfg.seeds.simulate)?;
            if persist_input {
                let mut buffer = Vec::new();
                write_registry(&records, &mut buffer, &CsvSchema::default())?;
                out.write("cohort.csv", &String::from_utf8_lossy(&buffer))?;
                out.write_json("ground_truth.json", &truth)?;
            }
            Ok(Cohort {
                records,
                truth: Some(truth),
            })
        }
    }
}

pub fn stage_eligibility(
    cfg: &PipelineConfig,
    records: &[SubjectRecord],
    out: &mut OutputDir,
) -> Result<Vec<SubjectRecord>, CliError> {
    let (kept, table) = apply_eligibility(records, &cfg.eligibility);
    out.write("exclusion.csv", &table.to_csv())?;
    out.write_json("exclusion.json", &table)?;
    if kept.is_empty() {
        return Err(CliError::Data("no records left after eligibility".into()));
    }
    Ok(kept)
}

fn arm_curve(records: &[SubjectRecord], keep: impl Fn(&SubjectRecord) -> bool) -> Result<SurvivalCurve, CliError> {
    let subset: Vec<&SubjectRecord> = records.iter().filter(|r| keep(r)).collect();
    if subset.is_empty() {
        return Err(CliError::Data("empty arm for Kaplan-Meier".into()));
    }
    let times: Vec<f64> = subset.iter().map(|r| r.t_days as f64).collect();
    let events: Vec<bool> = subset.iter().map(|r| r.event).collect();
    Ok(kaplan_meier(&times, &events, None)?)
}

/// Unadjusted survival description: per-arm KM (plus the delayed-transplant
/// subset, the classic immortal-time display), dialysis-arm competing
/// incidence and the log-rank test.
pub fn stage_describe(
    cfg: &PipelineConfig,
    records: &[SubjectRecord],
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let table = describe(
        records,
        &DescribeConfig {
            bootstrap_b: cfg.bootstrap_b,
            seed: cfg.seeds.describe,
        },
    )?;
    out.write("covariates.csv", &table.to_csv())?;
    out.write("survival_summary.csv", &table.survival_csv())?;
    out.write_json("covariates.json", &table)?;

    let km_pkt = arm_curve(records, |r| r.pkt)?;
    let km_dial = arm_curve(records, |r| !r.pkt)?;
    out.write("km_pkt.csv", &km_pkt.to_csv("pkt"))?;
    out.write("km_dialysis.csv", &km_dial.to_csv("dialysis"))?;
    if records.iter().any(|r| r.t_switch_days.is_some()) {
        let km_delayed = arm_curve(records, |r| !r.pkt && r.t_switch_days.is_some())?;
        out.write(
            "km_delayed_transplant.csv",
            &km_delayed.to_csv("delayed_transplant"),
        )?;
    }

    let groups: Vec<usize> = records.iter().map(|r| usize::from(!r.pkt)).collect();
    let times: Vec<f64> = records.iter().map(|r| r.t_days as f64).collect();
    let events: Vec<bool> = records.iter().map(|r| r.event).collect();
    let lr = log_rank(&groups, &times, &events)?;
    out.write_json("logrank.json", &lr)?;

    // dialysis arm: transplant (2) and death without transplant (1)
    let dial: Vec<&SubjectRecord> = records.iter().filter(|r| !r.pkt).collect();
    if !dial.is_empty() {
        let times: Vec<f64> = dial
            .iter()
            .map(|r| r.t_switch_days.unwrap_or(r.t_days) as f64)
            .collect();
        let codes: Vec<u8> = dial
            .iter()
            .map(|r| {
                if r.t_switch_days.is_some() {
                    2
                } else if r.event {
                    1
                } else {
                    0
                }
            })
            .collect();
        let cif = cumulative_incidence(&times, &codes)?;
        out.write("cif_dialysis.csv", &cif.to_csv())?;
    }
    Ok(())
}

pub fn stage_positivity(
    cfg: &PipelineConfig,
    records: &[SubjectRecord],
    out: &mut OutputDir,
) -> Result<LogisticFit, CliError> {
    let labels: Vec<bool> = records.iter().map(|r| r.pkt).collect();
    let fit = fit_logistic(records, &labels, &cfg.ps_spec)?;
    let report = positivity_report(&fit, records, cfg.epsilon, &cfg.ps_subgroups)?;
    out.write_json("ps_model.json", &fit)?;
    out.write_json("overlap.json", &report)?;
    out.write("ps_histogram.csv", &report.histogram_csv())?;
    Ok(fit)
}

/// Completed data sets: imputation when any modelled comorbidity is
/// missing, otherwise the single observed set.
pub fn stage_impute(
    cfg: &PipelineConfig,
    records: &[SubjectRecord],
    out: &mut OutputDir,
) -> Result<Vec<Vec<SubjectRecord>>, CliError> {
    let any_missing = records.iter().any(|r| {
        registrial::registry::Comorbidity::ALL
            .iter()
            .any(|&c| r.comorbidity(c).is_none())
    });
    if !any_missing {
        return Ok(vec![records.to_vec()]);
    }
    let sets = impute_chained(records, &cfg.imputation)?;
    let mut buffer = Vec::new();
    write_registry_sets(&sets, &mut buffer, &CsvSchema::default())?;
    out.write("imputed.csv", &String::from_utf8_lossy(&buffer))?;
    Ok(sets)
}

fn band_times(cfg: &PipelineConfig) -> Vec<f64> {
    let mut years: Vec<f64> = Vec::new();
    let steps = (cfg.band_max_years / cfg.band_step_years).floor() as usize;
    for k in 1..=steps {
        years.push(k as f64 * cfg.band_step_years);
    }
    years.extend(cfg.horizons_years.iter().copied());
    years.sort_by(|a, b| a.total_cmp(b));
    years.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    years.into_iter().map(|y| y * DAYS_PER_YEAR).collect()
}

/// Per-arm Cox models on every completed set, standardized to each target
/// population; points are averaged across sets and percentile bands pool
/// the per-set bootstrap replicates.
pub fn stage_standardize(
    cfg: &PipelineConfig,
    sets: &[Vec<SubjectRecord>],
    out: &mut OutputDir,
) -> Result<Vec<StandardizedContrast>, CliError> {
    let band = band_times(cfg);
    let mut contrasts = Vec::new();
    let mut all_rows = Vec::new();

    for &tag in &cfg.estimands {
        // pooled point curves: event times are shared across completed
        // sets, so per-set curves live on one common grid
        let mut pooled: Option<StandardizedContrast> = None;
        for set in sets {
            let (c, _, _) = standardize_cohort(set, &cfg.outcome_confounders, tag, cfg.ties)?;
            match &mut pooled {
                None => pooled = Some(c),
                Some(p) => {
                    if p.times != c.times {
                        return Err(CliError::Estimation(
                            "completed sets disagree on event times".into(),
                        ));
                    }
                    for k in 0..p.times.len() {
                        p.s1[k] += c.s1[k];
                        p.s0[k] += c.s0[k];
                        p.diff[k] += c.diff[k];
                    }
                }
            }
        }
        let mut contrast = pooled.expect("at least one set");
        let m = sets.len() as f64;
        if sets.len() > 1 {
            for k in 0..contrast.times.len() {
                contrast.s1[k] /= m;
                contrast.s0[k] /= m;
                contrast.diff[k] /= m;
            }
        }

        let runs: Vec<BootstrapResult> = sets
            .iter()
            .enumerate()
            .map(|(s, set)| {
                bootstrap_contrast(
                    set,
                    &cfg.outcome_confounders,
                    tag,
                    cfg.ties,
                    &band,
                    cfg.bootstrap_b,
                    cfg.seeds.bootstrap ^ ((s as u64 + 1) << 32),
                )
            })
            .collect::<Result<_, _>>()?;
        contrast.bands = Some(bands_from_replicates(&band, &runs)?);

        out.write(
            &format!("standardized_{}.csv", tag.label()),
            &contrast.to_csv(),
        )?;
        all_rows.extend(risk_difference_table(&contrast, &cfg.horizons_years));
        contrasts.push(contrast);
    }
    out.write("risk_table.csv", &risk_table_csv(&all_rows))?;
    Ok(contrasts)
}

/// Prognostic-profile sensitivity: the comorbidity-extended model against
/// the always-recorded covariate model on the transplant arm.
pub fn stage_profiles(
    cfg: &PipelineConfig,
    sets: &[Vec<SubjectRecord>],
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let set = &sets[0];
    let arm: Vec<SubjectRecord> = set.iter().filter(|r| r.pkt).cloned().collect();
    if arm.is_empty() {
        return Ok(());
    }
    let reduced = CovariateSpec::outcome_no_comorbidity();
    let fit_a = fit_cox(&arm, &reduced, cfg.ties, "pkt")?;
    let fit_b = fit_cox(&arm, &cfg.outcome_confounders, cfg.ties, "pkt")?;
    let grid = union_event_grid(&fit_a, &fit_b);
    let profiles = profile_curves(&fit_a, &fit_b, &arm, &cfg.profile_percentiles, &grid)?;

    let mut csv = String::from("percentile,model,subject,time_days,time_years,survival\n");
    for pair in &profiles.pairs {
        for (model, subject, curve) in [
            ("reduced", &pair.subject_a, &pair.curve_a),
            ("extended", &pair.subject_b, &pair.curve_b),
        ] {
            for k in 0..curve.times.len() {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    pair.percentile,
                    model,
                    subject,
                    curve.times[k],
                    curve.times[k] / DAYS_PER_YEAR,
                    curve.survival[k]
                ));
            }
        }
    }
    out.write("profile_curves.csv", &csv)?;

    let mut scatter = String::from("id,score_reduced,score_extended\n");
    for (id, a, b) in &profiles.scatter {
        scatter.push_str(&format!("{id},{a},{b}\n"));
    }
    out.write("prognostic_scores.csv", &scatter)?;
    Ok(())
}

/// Inverse-probability-weighted curves with weights averaged over the
/// completed sets, using the outcome confounders as the propensity model.
pub fn stage_ipw(
    cfg: &PipelineConfig,
    sets: &[Vec<SubjectRecord>],
    out: &mut OutputDir,
) -> Result<(SurvivalCurve, SurvivalCurve), CliError> {
    let mut per_set = Vec::with_capacity(sets.len());
    for set in sets {
        let labels: Vec<bool> = set.iter().map(|r| r.pkt).collect();
        let fit = fit_logistic(set, &labels, &cfg.outcome_confounders)?;
        per_set.push(ipw_weights(&fit, set, cfg.ipw_estimand, cfg.ipw_stabilized)?);
    }
    let weights = pool_weights(&per_set)?;

    let mut csv = String::from("id,weight\n");
    for (r, w) in sets[0].iter().zip(&weights) {
        csv.push_str(&format!("{},{}\n", r.id, w));
    }
    out.write("ipw_weights.csv", &csv)?;

    let (km1, km0) = ipw_km(&sets[0], &weights)?;
    out.write("ipw_km_pkt.csv", &km1.to_csv("ipw_pkt"))?;
    out.write("ipw_km_dialysis.csv", &km0.to_csv("ipw_dialysis"))?;
    Ok((km1, km0))
}

/// Structural AFT estimate and the artificial-recensoring sweep.
pub fn stage_gest(
    cfg: &PipelineConfig,
    records: &[SubjectRecord],
    out: &mut OutputDir,
) -> Result<(AftEstimate, SweepTable), CliError> {
    let estimate = if cfg.gest.two_parameter {
        solve_psi_two(
            records,
            &cfg.gest.confounders,
            cfg.gest.bracket,
            cfg.gest.bracket_r,
        )?
    } else {
        solve_psi(records, &cfg.gest.confounders, cfg.gest.bracket, None)?
    };
    out.write_json("aft_estimate.json", &estimate)?;
    out.write("aft_trace.csv", &estimate.trace_csv())?;
    out.write("aft_report.txt", &format!("{}\n", estimate.report_line()))?;

    let sweep = recensoring_sweep(
        records,
        &cfg.gest.confounders,
        &cfg.gest.cutoffs_years,
        cfg.gest.bracket,
    )?;
    out.write("sweep.csv", &sweep.to_csv())?;
    Ok((estimate, sweep))
}

/// A Figure-5-style comparison on the transplant arm: standardized vs
/// unadjusted KM vs IPW-weighted KM at yearly horizons.
fn write_comparison(
    cfg: &PipelineConfig,
    contrasts: &[StandardizedContrast],
    records: &[SubjectRecord],
    ipw_pkt: &SurvivalCurve,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let Some(ate) = contrasts
        .iter()
        .find(|c| c.population == PopulationTag::Ate)
    else {
        return Ok(());
    };
    let km_pkt = arm_curve(records, |r| r.pkt)?;
    let mut csv = String::from("years,standardized_s1,unadjusted_km_pkt,ipw_km_pkt\n");
    let max_years = cfg.band_max_years as usize;
    for y in 1..=max_years {
        let t = y as f64 * DAYS_PER_YEAR;
        csv.push_str(&format!(
            "{},{},{},{}\n",
            y,
            ate.s1_at(t),
            km_pkt.survival_at(t),
            ipw_pkt.survival_at(t)
        ));
    }
    out.write("comparison_pkt.csv", &csv)?;
    Ok(())
}

fn in_stage<T>(stage: &str, result: Result<T, CliError>) -> Result<T, CliError> {
    result.map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("[{stage}] {m}")),
        CliError::Estimation(m) => CliError::Estimation(format!("[{stage}] {m}")),
        CliError::Data(m) => CliError::Data(format!("[{stage}] {m}")),
    })
}

/// The full analysis pipeline in the documented order.
pub fn run_pipeline(cfg: &PipelineConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let cohort = in_stage("input", load_cohort(cfg, out, true))?;
    let analysis = in_stage("eligibility", stage_eligibility(cfg, &cohort.records, out))?;
    in_stage("describe", stage_describe(cfg, &analysis, out))?;
    in_stage("positivity", stage_positivity(cfg, &analysis, out).map(|_| ()))?;
    let sets = in_stage("impute", stage_impute(cfg, &analysis, out))?;
    let contrasts = in_stage("standardize", stage_standardize(cfg, &sets, out))?;
    let is_comorbidity = |c: &registrial::coxmod::Covariate| {
        matches!(
            c,
            registrial::coxmod::Covariate::Diabetes
                | registrial::coxmod::Covariate::Hypertension
                | registrial::coxmod::Covariate::Ihd
                | registrial::coxmod::Covariate::Pad
                | registrial::coxmod::Covariate::Cvd
        )
    };
    let uses_comorbidities = cfg.outcome_confounders.terms.iter().any(|t| match t {
        Term::Main(c) => is_comorbidity(c),
        Term::Interaction(a, b) => is_comorbidity(a) || is_comorbidity(b),
    });
    if uses_comorbidities {
        in_stage("profiles", stage_profiles(cfg, &sets, out))?;
    }
    let (ipw_pkt, _) = in_stage("ipw", stage_ipw(cfg, &sets, out))?;
    in_stage(
        "comparison",
        write_comparison(cfg, &contrasts, &analysis, &ipw_pkt, out),
    )?;
    in_stage("gest", stage_gest(cfg, &analysis, out).map(|_| ()))?;
    out.write_manifest(cfg)?;
    Ok(())
}

/// Point curves without bands for the lightweight `standardize` subcommand.
pub fn standardize_points_only(
    cfg: &PipelineConfig,
    records: &[SubjectRecord],
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for &tag in &cfg.estimands {
        let (contrast, fit_pkt, fit_dial) =
            standardize_cohort(records, &cfg.outcome_confounders, tag, cfg.ties)?;
        out.write(
            &format!("standardized_{}.csv", tag.label()),
            &contrast.to_csv(),
        )?;
        out.write_json(&format!("cox_pkt_{}.json", tag.label()), &fit_pkt)?;
        out.write_json(&format!("cox_dialysis_{}.json", tag.label()), &fit_dial)?;
        rows.extend(risk_difference_table(&contrast, &cfg.horizons_years));
    }
    out.write("risk_table.csv", &risk_table_csv(&rows))?;
    Ok(())
}
