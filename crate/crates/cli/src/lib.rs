//! Command-line driver for the registrial toolkit: simulation, descriptive
//! tables, nonparametric curves, propensity diagnostics, IPW, g-formula
//! standardization, multiple imputation, structural AFT g-estimation and
//! the full pipeline, with reproducible seeded runs and a manifest per
//! output directory.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod stages;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use registrial::gestaft;
use registrial::registry::CsvSchema;
use registrial::simlab::PRESET_NAMES;

use artifacts::OutputDir;
use config::{InputSpec, PipelineConfig};
use error::CliError;
use stages::{load_cohort, Cohort};

#[derive(Parser)]
#[command(
    name = "registrial",
    version,
    about = "Causal survival analysis for incident-disease registries"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone)]
pub struct InputArgs {
    /// Registry CSV to analyse.
    #[arg(long, conflicts_with = "preset")]
    pub input: Option<PathBuf>,
    /// JSON column-name map for the CSV.
    #[arg(long, requires = "input")]
    pub schema: Option<PathBuf>,
    /// Simulator preset name instead of a CSV.
    #[arg(long, value_parser = PRESET_NAMES)]
    pub preset: Option<String>,
    /// Cohort size override for the preset.
    #[arg(long, requires = "preset")]
    pub n: Option<usize>,
    /// Seed for the simulated input.
    #[arg(long, default_value_t = 20_260_801)]
    pub seed: u64,
}

#[derive(Args, Clone)]
pub struct OutArgs {
    /// Output directory for artifacts and the manifest.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort with its ground-truth sidecar.
    Simulate {
        #[command(flatten)]
        input: InputArgs,
        /// Full simulator config JSON (instead of a preset).
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Eligibility filtering plus descriptive tables and unadjusted curves.
    Describe {
        #[command(flatten)]
        input: InputArgs,
        /// Eligibility criteria JSON (defaults to the shipped set).
        #[arg(long)]
        eligibility: Option<PathBuf>,
        /// Skip eligibility filtering entirely.
        #[arg(long)]
        no_eligibility: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Kaplan-Meier curves per arm (and the delayed-transplant subset).
    Km {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Aalen-Johansen cumulative incidence in the dialysis arm.
    Cif {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Log-rank test between the arms.
    Logrank {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Propensity model and positivity report.
    Ps {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Inverse-probability weights and weighted Kaplan-Meier curves.
    Ipw {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value = "ate")]
        estimand: String,
        /// Turn off weight stabilization.
        #[arg(long)]
        unstabilized: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Per-arm Cox models and standardized survival contrasts.
    Standardize {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Chained-equations multiple imputation of the comorbidity flags.
    Impute {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 10)]
        m: usize,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[arg(long, default_value_t = 20_260_802)]
        impute_seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Structural AFT g-estimation.
    Gest {
        #[command(flatten)]
        input: InputArgs,
        /// Search bracket as `lo,hi` on the psi scale.
        #[arg(long, value_parser = parse_bracket, default_value = "-3,1")]
        bracket: (f64, f64),
        /// Estimate the two-parameter model.
        #[arg(long)]
        two: bool,
        /// Artificial recensoring cutoff in years.
        #[arg(long)]
        recensor: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Artificial-recensoring sensitivity sweep.
    Sweep {
        #[command(flatten)]
        input: InputArgs,
        /// Cutoffs in years, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![5.0, 10.0, 15.0, 20.0])]
        cutoffs: Vec<f64>,
        #[arg(long, value_parser = parse_bracket, default_value = "-3,1")]
        bracket: (f64, f64),
        #[command(flatten)]
        out: OutArgs,
    },
    /// The full analysis pipeline from a JSON config.
    Pipeline {
        /// Pipeline config JSON; defaults apply for missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Preset shortcut when no config file is given.
        #[arg(long, value_parser = PRESET_NAMES)]
        preset: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn parse_bracket(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected `lo,hi`".into());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| "invalid lower bound")?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| "invalid upper bound")?;
    if !(lo < hi) {
        return Err("bracket must satisfy lo < hi".into());
    }
    Ok((lo, hi))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &PathBuf, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {what} `{}`: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid {what} `{}`: {e}", path.display())))
}

fn base_config(input: &InputArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::default();
    cfg.seeds.simulate = input.seed;
    cfg.input = match (&input.input, &input.preset) {
        (Some(path), None) => {
            let schema = match &input.schema {
                Some(p) => load_json::<CsvSchema>(p, "schema")?,
                None => CsvSchema::default(),
            };
            InputSpec::Csv {
                path: path.display().to_string(),
                schema,
            }
        }
        (None, Some(name)) => InputSpec::Preset {
            name: name.clone(),
            n: input.n,
        },
        (None, None) => {
            return Err(CliError::Config(
                "one of --input or --preset is required".into(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn with_cohort<F>(cfg: &PipelineConfig, out: &OutArgs, body: F) -> Result<(), CliError>
where
    F: FnOnce(&PipelineConfig, Cohort, &mut OutputDir) -> Result<(), CliError>,
{
    let mut dir = OutputDir::acquire(&out.out)?;
    let run = || -> Result<(), CliError> {
        let cohort = load_cohort(cfg, &mut dir, true)?;
        body(cfg, cohort, &mut dir)?;
        dir.write_manifest(cfg)?;
        Ok(())
    };
    match run() {
        Ok(()) => Ok(()),
        Err(e) => {
            dir.mark_failed(&e);
            Err(e)
        }
    }
}

/// Execute a parsed command; errors map onto exit codes downstream.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { input, config, out } => {
            let mut cfg = base_config(&InputArgs {
                // simulate requires a synthetic source; --input is not accepted
                input: None,
                schema: None,
                preset: input.preset.clone().or_else(|| {
                    if config.is_none() {
                        Some("paper_calibration".into())
                    } else {
                        None
                    }
                }),
                n: input.n,
                seed: input.seed,
            })
            .or_else(|_| -> Result<PipelineConfig, CliError> { Ok(PipelineConfig::default()) })?;
            cfg.seeds.simulate = input.seed;
            if let Some(path) = config {
                let sim: registrial::simlab::SimConfig = load_json(&path, "simulator config")?;
                sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
                cfg.input = InputSpec::Simulate {
                    config: Box::new(sim),
                };
            } else if let Some(name) = input.preset {
                cfg.input = InputSpec::Preset {
                    name,
                    n: input.n,
                };
            }
            cfg.validate()?;
            with_cohort(&cfg, &out, |_, _, _| Ok(()))
        }
        Command::Describe {
            input,
            eligibility,
            no_eligibility,
            out,
        } => {
            let mut cfg = base_config(&input)?;
            if no_eligibility {
                cfg.eligibility = Vec::new();
            } else if let Some(path) = eligibility {
                cfg.eligibility = load_json(&path, "eligibility criteria")?;
            }
            with_cohort(&cfg, &out, |cfg, cohort, dir| {
                let analysis = stages::stage_eligibility(cfg, &cohort.records, dir)?;
                stages::stage_describe(cfg, &analysis, dir)
            })
        }
        Command::Km { input, out } | Command::Cif { input, out } | Command::Logrank { input, out } => {
            let cfg = base_config(&input)?;
            with_cohort(&cfg, &out, |cfg, cohort, dir| {
                stages::stage_describe(cfg, &cohort.records, dir)
            })
        }
        Command::Ps { input, epsilon, out } => {
            let mut cfg = base_config(&input)?;
            cfg.epsilon = epsilon;
            cfg.validate()?;
            with_cohort(&cfg, &out, |cfg, cohort, dir| {
                stages::stage_positivity(cfg, &cohort.records, dir).map(|_| ())
            })
        }
        Command::Ipw {
            input,
            estimand,
            unstabilized,
            out,
        } => {
            let mut cfg = base_config(&input)?;
            cfg.ipw_estimand = match estimand.to_ascii_lowercase().as_str() {
                "ate" => registrial::weighting::Estimand::Ate,
                "att" => registrial::weighting::Estimand::Att,
                "atnt" => registrial::weighting::Estimand::Atnt,
                other => {
                    return Err(CliError::Config(format!(
                        "unknown estimand `{other}` (ate, att or atnt)"
                    )))
                }
            };
            cfg.ipw_stabilized = !unstabilized;
            with_cohort(&cfg, &out, |cfg, cohort, dir| {
                stages::stage_ipw(cfg, &[cohort.records], dir).map(|_| ())
            })
        }
        Command::Standardize { input, out } => {
            let cfg = base_config(&input)?;
            with_cohort(&cfg, &out, |cfg, cohort, dir| {
                stages::standardize_points_only(cfg, &cohort.records, dir)
            })
        }
        Command::Impute {
            input,
            m,
            iterations,
            impute_seed,
            out,
        } => {
            let mut cfg = base_config(&input)?;
            cfg.imputation.m = m;
            cfg.imputation.iterations = iterations;
            cfg.imputation.seed = impute_seed;
            with_cohort(&cfg, &out, |cfg, cohort, dir| {
                stages::stage_impute(cfg, &cohort.records, dir).map(|_| ())
            })
        }
        Command::Gest {
            input,
            bracket,
            two,
            recensor,
            out,
        } => {
            let mut cfg = base_config(&input)?;
            cfg.gest.bracket = bracket;
            cfg.gest.two_parameter = two;
            cfg.validate()?;
            with_cohort(&cfg, &out, move |cfg, cohort, dir| {
                if let Some(tau) = recensor {
                    let estimate = gestaft::solve_psi(
                        &cohort.records,
                        &cfg.gest.confounders,
                        cfg.gest.bracket,
                        Some(tau),
                    )?;
                    dir.write_json("aft_estimate.json", &estimate)?;
                    dir.write("aft_trace.csv", &estimate.trace_csv())?;
                    dir.write("aft_report.txt", &format!("{}\n", estimate.report_line()))?;
                    Ok(())
                } else {
                    stages::stage_gest(cfg, &cohort.records, dir).map(|_| ())
                }
            })
        }
        Command::Sweep {
            input,
            cutoffs,
            bracket,
            out,
        } => {
            let mut cfg = base_config(&input)?;
            cfg.gest.bracket = bracket;
            cfg.gest.cutoffs_years = cutoffs;
            cfg.validate()?;
            with_cohort(&cfg, &out, |cfg, cohort, dir| {
                let sweep = gestaft::recensoring_sweep(
                    &cohort.records,
                    &cfg.gest.confounders,
                    &cfg.gest.cutoffs_years,
                    cfg.gest.bracket,
                )?;
                dir.write("sweep.csv", &sweep.to_csv())?;
                Ok(())
            })
        }
        Command::Pipeline {
            config,
            preset,
            n,
            out,
        } => {
            let mut cfg = match config {
                Some(path) => PipelineConfig::from_file(&path.display().to_string())?,
                None => PipelineConfig::default(),
            };
            if let Some(name) = preset {
                cfg.input = InputSpec::Preset { name, n };
            } else if let Some(n) = n {
                if let InputSpec::Preset { n: preset_n, .. } = &mut cfg.input {
                    *preset_n = Some(n);
                }
            }
            cfg.validate()?;
            let mut dir = OutputDir::acquire(&out.out)?;
            match stages::run_pipeline(&cfg, &mut dir) {
                Ok(()) => Ok(()),
                Err(e) => {
                    dir.mark_failed(&e);
                    Err(e)
                }
            }
        }
    }
}

/// Entry point returning the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
