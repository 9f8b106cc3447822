//! Term-list covariate specification and design-matrix encoding.
//!
//! A [`CovariateSpec`] lists main effects and two-way interactions over the
//! registry fields. Fitting a spec against a record set produces a
//! [`DesignInfo`]: the resolved column layout, categorical levels and
//! centering constants, which then encodes any further rows identically.

use serde::{Deserialize, Serialize};

use super::FitError;
use crate::registry::{Comorbidity, Pkd, Sex, SubjectRecord};

/// Fields a model term can draw on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    Age,
    /// Indicator of age beyond 75, the registry's transplant-policy cliff.
    AgeOver75,
    Sex,
    Region,
    Pkd,
    Diabetes,
    Hypertension,
    Ihd,
    Pad,
    Cvd,
    Gfr,
    EntryYear,
    Pkt,
    /// Death indicator; used as an imputation-model predictor.
    EventFlag,
    /// log(follow-up days), floored at one day; imputation-model predictor.
    LogDays,
}

impl Covariate {
    fn name(&self) -> &'static str {
        match self {
            Covariate::Age => "age",
            Covariate::AgeOver75 => "age_over_75",
            Covariate::Sex => "sex",
            Covariate::Region => "region",
            Covariate::Pkd => "pkd",
            Covariate::Diabetes => "diabetes",
            Covariate::Hypertension => "hypertension",
            Covariate::Ihd => "ihd",
            Covariate::Pad => "pad",
            Covariate::Cvd => "cvd",
            Covariate::Gfr => "gfr",
            Covariate::EntryYear => "entry_year",
            Covariate::Pkt => "pkt",
            Covariate::EventFlag => "event",
            Covariate::LogDays => "log_days",
        }
    }

    fn comorbidity(&self) -> Option<Comorbidity> {
        match self {
            Covariate::Diabetes => Some(Comorbidity::Diabetes),
            Covariate::Hypertension => Some(Comorbidity::Hypertension),
            Covariate::Ihd => Some(Comorbidity::Ihd),
            Covariate::Pad => Some(Comorbidity::Pad),
            Covariate::Cvd => Some(Comorbidity::Cvd),
            _ => None,
        }
    }
}

/// A model term: a main effect (JSON: `"age"`) or a two-way interaction
/// (JSON: `["age", "sex"]`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Term {
    Main(Covariate),
    Interaction(Covariate, Covariate),
}

/// Ordered term list with encoding rules for the categoricals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub terms: Vec<Term>,
    /// Center all design columns at their fitting-set means.
    #[serde(default = "default_center")]
    pub center: bool,
    /// Reference category for primary kidney disease dummies.
    #[serde(default = "default_pkd_reference")]
    pub pkd_reference: Pkd,
    /// Reference region; defaults to Stockholm when observed, otherwise the
    /// first region in sorted order.
    #[serde(default)]
    pub region_reference: Option<String>,
}

fn default_center() -> bool {
    true
}

fn default_pkd_reference() -> Pkd {
    Pkd::DiabeticNephropathy
}

impl CovariateSpec {
    pub fn main_effects(covariates: &[Covariate]) -> Self {
        Self {
            terms: covariates.iter().copied().map(Term::Main).collect(),
            center: true,
            pkd_reference: default_pkd_reference(),
            region_reference: None,
        }
    }

    /// Default mortality-model confounders: age, sex, region, kidney
    /// disease, entry year and the five comorbidities.
    pub fn outcome_default() -> Self {
        Self::main_effects(&[
            Covariate::Age,
            Covariate::Sex,
            Covariate::Region,
            Covariate::Pkd,
            Covariate::EntryYear,
            Covariate::Diabetes,
            Covariate::Hypertension,
            Covariate::Ihd,
            Covariate::Pad,
            Covariate::Cvd,
        ])
    }

    /// Mortality-model confounders restricted to the always-recorded fields.
    pub fn outcome_no_comorbidity() -> Self {
        Self::main_effects(&[
            Covariate::Age,
            Covariate::Sex,
            Covariate::Region,
            Covariate::Pkd,
            Covariate::EntryYear,
        ])
    }

    /// Default propensity model: main effects (with the over-75 policy
    /// indicator) plus the age and sex interactions with kidney disease and
    /// calendar year.
    pub fn ps_default() -> Self {
        let mut spec = Self::main_effects(&[
            Covariate::Age,
            Covariate::AgeOver75,
            Covariate::Sex,
            Covariate::Region,
            Covariate::Pkd,
            Covariate::EntryYear,
        ]);
        spec.terms.extend([
            Term::Interaction(Covariate::Age, Covariate::Pkd),
            Term::Interaction(Covariate::Age, Covariate::EntryYear),
            Term::Interaction(Covariate::Sex, Covariate::Pkd),
            Term::Interaction(Covariate::Sex, Covariate::EntryYear),
        ]);
        spec
    }

    /// The spec with an added term, keeping the encoding rules.
    pub fn with_term(mut self, term: Term) -> Self {
        self.terms.push(term);
        self
    }
}

/// Resolved encoding for one fitting set: column names, categorical levels
/// and centering constants. Encodes any compatible row identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignInfo {
    pub spec: CovariateSpec,
    pub columns: Vec<String>,
    /// Centering constants per column (all zero when `spec.center` is off).
    pub means: Vec<f64>,
    region_levels: Vec<String>,
    region_reference: String,
    /// The over-75 indicator is dropped (like an unobserved factor level)
    /// when the fitting set lies entirely on one side of the threshold.
    #[serde(default)]
    age_over_75_present: bool,
}

/// A dense row-major design, already centered per its [`DesignInfo`].
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: Vec<f64>,
    pub n: usize,
    pub p: usize,
}

impl DesignMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }
}

/// Expanded value of one covariate for one record: the per-column values of
/// its dummy block (single element for numeric covariates).
fn covariate_block(
    c: Covariate,
    r: &SubjectRecord,
    info: &DesignInfo,
) -> Result<Vec<f64>, FitError> {
    let missing = |name: &str| FitError::MissingValue {
        column: name.to_string(),
        id: r.id.clone(),
    };
    Ok(match c {
        Covariate::Age => vec![r.age],
        Covariate::AgeOver75 => {
            if info.age_over_75_present {
                vec![if r.age > 75.0 { 1.0 } else { 0.0 }]
            } else {
                Vec::new()
            }
        }
        Covariate::Sex => vec![if r.sex == Sex::Female { 1.0 } else { 0.0 }],
        Covariate::Region => {
            let region = r.region.clone();
            if region != info.region_reference
                && !info.region_levels.iter().any(|l| *l == region)
            {
                return Err(FitError::UnseenLevel {
                    column: "region".into(),
                    value: region,
                });
            }
            info.region_levels
                .iter()
                .map(|l| if *l == region { 1.0 } else { 0.0 })
                .collect()
        }
        Covariate::Pkd => Pkd::ALL
            .iter()
            .filter(|p| **p != info.spec.pkd_reference)
            .map(|p| if *p == r.pkd { 1.0 } else { 0.0 })
            .collect(),
        Covariate::Diabetes
        | Covariate::Hypertension
        | Covariate::Ihd
        | Covariate::Pad
        | Covariate::Cvd => {
            let flag = c.comorbidity().expect("comorbidity covariate");
            match r.comorbidity(flag) {
                Some(v) => vec![if v { 1.0 } else { 0.0 }],
                None => return Err(missing(c.name())),
            }
        }
        Covariate::Gfr => match r.gfr {
            Some(g) => vec![g],
            None => return Err(missing("gfr")),
        },
        Covariate::EntryYear => vec![f64::from(r.entry_year())],
        Covariate::Pkt => vec![if r.pkt { 1.0 } else { 0.0 }],
        Covariate::EventFlag => vec![if r.event { 1.0 } else { 0.0 }],
        Covariate::LogDays => vec![(r.t_days.max(1) as f64).ln()],
    })
}

fn block_names(c: Covariate, info: &DesignInfo) -> Vec<String> {
    match c {
        Covariate::AgeOver75 => {
            if info.age_over_75_present {
                vec!["age_over_75".into()]
            } else {
                Vec::new()
            }
        }
        Covariate::Region => info
            .region_levels
            .iter()
            .map(|l| format!("region:{l}"))
            .collect(),
        Covariate::Pkd => Pkd::ALL
            .iter()
            .filter(|p| **p != info.spec.pkd_reference)
            .map(|p| format!("pkd:{}", p.code()))
            .collect(),
        Covariate::Sex => vec!["sex:female".into()],
        other => vec![other.name().into()],
    }
}

impl DesignInfo {
    /// Resolve the spec against a fitting set: discover region levels,
    /// lay out columns and compute centering means.
    pub fn from_records(
        records: &[SubjectRecord],
        spec: &CovariateSpec,
    ) -> Result<DesignInfo, FitError> {
        if records.is_empty() {
            return Err(FitError::EmptyInput);
        }
        let mut region_levels: Vec<String> = records.iter().map(|r| r.region.clone()).collect();
        region_levels.sort();
        region_levels.dedup();
        let region_reference = match &spec.region_reference {
            Some(r) => {
                if !region_levels.iter().any(|l| l == r) {
                    return Err(FitError::UnseenLevel {
                        column: "region".into(),
                        value: r.clone(),
                    });
                }
                r.clone()
            }
            None => {
                if region_levels.iter().any(|l| l == "Stockholm") {
                    "Stockholm".into()
                } else {
                    region_levels[0].clone()
                }
            }
        };
        region_levels.retain(|l| *l != region_reference);

        let over = records.iter().filter(|r| r.age > 75.0).count();
        let mut info = DesignInfo {
            spec: spec.clone(),
            columns: Vec::new(),
            means: Vec::new(),
            region_levels,
            region_reference,
            age_over_75_present: over > 0 && over < records.len(),
        };

        // column names
        for term in &spec.terms {
            match term {
                Term::Main(c) => info.columns.extend(block_names(*c, &info)),
                Term::Interaction(a, b) => {
                    for na in block_names(*a, &info) {
                        for nb in block_names(*b, &info) {
                            info.columns.push(format!("{na}*{nb}"));
                        }
                    }
                }
            }
        }

        // centering means over the fitting set
        let p = info.columns.len();
        info.means = vec![0.0; p];
        if spec.center {
            let mut sums = vec![0.0_f64; p];
            for r in records {
                let row = info.encode_raw(r)?;
                for (s, v) in sums.iter_mut().zip(&row) {
                    *s += v;
                }
            }
            let n = records.len() as f64;
            for (m, s) in info.means.iter_mut().zip(&sums) {
                *m = s / n;
            }
        }
        Ok(info)
    }

    /// Uncentered encoding of one record.
    fn encode_raw(&self, r: &SubjectRecord) -> Result<Vec<f64>, FitError> {
        let mut row = Vec::with_capacity(self.columns.len());
        for term in &self.spec.terms {
            match term {
                Term::Main(c) => row.extend(covariate_block(*c, r, self)?),
                Term::Interaction(a, b) => {
                    let ba = covariate_block(*a, r, self)?;
                    let bb = covariate_block(*b, r, self)?;
                    for va in &ba {
                        for vb in &bb {
                            row.push(va * vb);
                        }
                    }
                }
            }
        }
        Ok(row)
    }

    /// Centered encoding of one record.
    pub fn encode_row(&self, r: &SubjectRecord) -> Result<Vec<f64>, FitError> {
        let mut row = self.encode_raw(r)?;
        for (v, m) in row.iter_mut().zip(&self.means) {
            *v -= m;
        }
        Ok(row)
    }

    /// Centered design matrix for a record set.
    pub fn encode(&self, records: &[SubjectRecord]) -> Result<DesignMatrix, FitError> {
        let p = self.columns.len();
        let mut x = Vec::with_capacity(records.len() * p);
        for r in records {
            x.extend(self.encode_row(r)?);
        }
        Ok(DesignMatrix {
            x,
            n: records.len(),
            p,
        })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}
