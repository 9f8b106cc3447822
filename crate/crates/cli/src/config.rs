//! Pipeline configuration with full defaulting. The resolved config (all
//! defaults made explicit) is what gets echoed into the run manifest.

use serde::{Deserialize, Serialize};

use registrial::coxmod::{CovariateSpec, TieMethod};
use registrial::missing::ImputationConfig;
use registrial::registry::{default_criteria, CsvSchema, EligibilityCriterion};
use registrial::simlab::{preset, SimConfig};
use registrial::standardize::{DEFAULT_HORIZONS_YEARS, PopulationTag};
use registrial::weighting::{default_subgroups, Estimand, SubgroupSpec};

use crate::error::CliError;

/// Where the cohort comes from: a CSV file or a named simulator preset
/// (optionally with an inline full simulator config).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSpec {
    Csv {
        path: String,
        #[serde(default)]
        schema: CsvSchema,
    },
    Preset {
        name: String,
        #[serde(default)]
        n: Option<usize>,
    },
    Simulate {
        config: Box<SimConfig>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GestConfig {
    pub bracket: (f64, f64),
    pub cutoffs_years: Vec<f64>,
    /// Confounders for the transformed-time outcome model. Defaults to the
    /// always-recorded set, so g-estimation does not depend on imputation.
    pub confounders: CovariateSpec,
    pub two_parameter: bool,
    pub bracket_r: (f64, f64),
}

impl Default for GestConfig {
    fn default() -> Self {
        Self {
            bracket: registrial::gestaft::DEFAULT_BRACKET,
            cutoffs_years: registrial::gestaft::DEFAULT_RECENSOR_SWEEP_YEARS.to_vec(),
            confounders: CovariateSpec::outcome_no_comorbidity(),
            two_parameter: false,
            bracket_r: (-1.5, 1.5),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Seeds {
    pub simulate: u64,
    pub impute: u64,
    pub bootstrap: u64,
    pub describe: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            simulate: 20_260_801,
            impute: 20_260_802,
            bootstrap: 20_260_803,
            describe: 20_260_804,
        }
    }
}

/// Full pipeline configuration. Every field has a default; the resolved
/// form is embedded in the manifest so no default stays silent.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input: InputSpec,
    pub eligibility: Vec<EligibilityCriterion>,
    /// Confounders of the per-arm mortality models.
    pub outcome_confounders: CovariateSpec,
    /// Propensity model for the positivity assessment.
    pub ps_spec: CovariateSpec,
    /// Positivity threshold and flagged subgroups.
    pub epsilon: f64,
    pub ps_subgroups: Vec<SubgroupSpec>,
    pub imputation: ImputationConfig,
    /// Bootstrap replicates per completed set.
    pub bootstrap_b: usize,
    pub estimands: Vec<PopulationTag>,
    pub ipw_estimand: Estimand,
    pub ipw_stabilized: bool,
    pub horizons_years: Vec<f64>,
    pub profile_percentiles: Vec<f64>,
    pub gest: GestConfig,
    pub ties: TieMethod,
    pub seeds: Seeds,
    /// Band evaluation grid spacing for bootstrap CIs, in years.
    pub band_step_years: f64,
    pub band_max_years: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: InputSpec::Preset {
                name: "paper_calibration".into(),
                n: None,
            },
            eligibility: default_criteria(),
            outcome_confounders: CovariateSpec::outcome_default(),
            ps_spec: CovariateSpec::ps_default(),
            epsilon: 0.01,
            ps_subgroups: default_subgroups(),
            imputation: ImputationConfig::default(),
            bootstrap_b: 200,
            estimands: vec![PopulationTag::Ate, PopulationTag::Att, PopulationTag::Atnt],
            ipw_estimand: Estimand::Ate,
            ipw_stabilized: true,
            horizons_years: DEFAULT_HORIZONS_YEARS.to_vec(),
            profile_percentiles: registrial::standardize::DEFAULT_PROFILE_PERCENTILES.to_vec(),
            gest: GestConfig::default(),
            ties: TieMethod::Efron,
            seeds: Seeds::default(),
            band_step_years: 1.0,
            band_max_years: 30.0,
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &str) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config `{path}`: {e}")))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config `{path}`: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.bootstrap_b == 0 {
            return Err(CliError::Config("bootstrap_b must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(CliError::Config("epsilon must be in (0, 0.5)".into()));
        }
        if self.estimands.is_empty() {
            return Err(CliError::Config("at least one estimand required".into()));
        }
        if self.horizons_years.iter().any(|h| *h <= 0.0) {
            return Err(CliError::Config("horizons must be positive".into()));
        }
        if !(self.gest.bracket.0 < self.gest.bracket.1) {
            return Err(CliError::Config("gest bracket is empty".into()));
        }
        if self.band_step_years <= 0.0 || self.band_max_years <= 0.0 {
            return Err(CliError::Config("band grid must be positive".into()));
        }
        if let InputSpec::Preset { name, .. } = &self.input {
            preset(name).map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let InputSpec::Simulate { config } = &self.input {
            config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// The resolved simulator config when the input is synthetic.
    pub fn sim_config(&self) -> Result<Option<SimConfig>, CliError> {
        match &self.input {
            InputSpec::Csv { .. } => Ok(None),
            InputSpec::Preset { name, n } => {
                let mut cfg = preset(name).map_err(|e| CliError::Config(e.to_string()))?;
                if let Some(n) = n {
                    cfg.n = *n;
                }
                Ok(Some(cfg))
            }
            InputSpec::Simulate { config } => Ok(Some((**config).clone())),
        }
    }
}
