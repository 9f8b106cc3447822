//! Registry data model, ingestion and descriptive summaries.
//!
//! One [`SubjectRecord`] per incident patient: baseline covariates measured
//! at treatment onset, the initial-treatment arm, an optional delayed
//! transplant switch time, follow-up and the death indicator. Times are
//! integer days from onset; they are reported in years only at the output
//! layer.

mod csv_io;
mod describe;
mod eligibility;

pub use csv_io::{
    load_registry, write_registry, write_registry_sets, CsvSchema, LoadOutcome, RowDiagnostic,
};
pub use describe::{
    describe, CovariateRow, CovariateTable, DescribeConfig, DiffEstimate, Summary,
    SurvivalSummaryRow,
};
pub use eligibility::{
    apply_eligibility, default_criteria, EligibilityCriterion, ExclusionRow, ExclusionTable, Rule,
};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::DAYS_PER_YEAR;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("required column `{0}` not found in header")]
    MissingColumn(String),
    #[error("input is empty")]
    EmptyInput,
    #[error("{count} of {total} rows rejected; first: {first}")]
    RejectedRows {
        count: usize,
        total: usize,
        first: String,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Sex at registry entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
        }
    }
}

/// Primary kidney disease category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pkd {
    DiabeticNephropathy,
    Glomerulonephritis,
    UremiaUnknown,
    Polycystic,
    Pyelonephritis,
    Other,
}

impl Pkd {
    pub const ALL: [Pkd; 6] = [
        Pkd::DiabeticNephropathy,
        Pkd::Glomerulonephritis,
        Pkd::UremiaUnknown,
        Pkd::Polycystic,
        Pkd::Pyelonephritis,
        Pkd::Other,
    ];

    /// Short code used in CSV files.
    pub fn code(&self) -> &'static str {
        match self {
            Pkd::DiabeticNephropathy => "DN",
            Pkd::Glomerulonephritis => "GN",
            Pkd::UremiaUnknown => "UNK",
            Pkd::Polycystic => "PKD",
            Pkd::Pyelonephritis => "PYELO",
            Pkd::Other => "OTHER",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Pkd::DiabeticNephropathy => "Diabetic nephropathy",
            Pkd::Glomerulonephritis => "Glomerulonephritis",
            Pkd::UremiaUnknown => "Uremia of unknown cause",
            Pkd::Polycystic => "Polycystic kidney disease",
            Pkd::Pyelonephritis => "Pyelonephritis",
            Pkd::Other => "Other",
        }
    }

    pub fn parse(s: &str) -> Option<Pkd> {
        let up = s.trim().to_ascii_uppercase();
        match up.as_str() {
            "DN" | "DIABETIC NEPHROPATHY" => Some(Pkd::DiabeticNephropathy),
            "GN" | "GLOMERULONEPHRITIS" => Some(Pkd::Glomerulonephritis),
            "UNK" | "UREMIA OF UNKNOWN CAUSE" | "UREMIA" => Some(Pkd::UremiaUnknown),
            "PKD" | "POLYCYSTIC KIDNEY DISEASE" | "POLYCYSTIC" => Some(Pkd::Polycystic),
            "PYELO" | "PYELONEPHRITIS" => Some(Pkd::Pyelonephritis),
            "OTHER" => Some(Pkd::Other),
            _ => None,
        }
    }
}

/// The five tri-state comorbidity flags carried by the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comorbidity {
    Diabetes,
    Hypertension,
    Ihd,
    Pad,
    Cvd,
}

impl Comorbidity {
    pub const ALL: [Comorbidity; 5] = [
        Comorbidity::Diabetes,
        Comorbidity::Hypertension,
        Comorbidity::Ihd,
        Comorbidity::Pad,
        Comorbidity::Cvd,
    ];

    pub fn field_name(&self) -> &'static str {
        match self {
            Comorbidity::Diabetes => "diabetes",
            Comorbidity::Hypertension => "hypertension",
            Comorbidity::Ihd => "ihd",
            Comorbidity::Pad => "pad",
            Comorbidity::Cvd => "cvd",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Comorbidity::Diabetes => "Diabetes",
            Comorbidity::Hypertension => "Hypertension",
            Comorbidity::Ihd => "Ischemic heart disease",
            Comorbidity::Pad => "Peripheral artery disease",
            Comorbidity::Cvd => "Cerebrovascular disease",
        }
    }
}

/// One registry entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    /// Date of treatment onset (time zero).
    pub entry_date: NaiveDate,
    /// Age in years at onset.
    pub age: f64,
    pub sex: Sex,
    pub region: String,
    pub pkd: Pkd,
    pub diabetes: Option<bool>,
    pub hypertension: Option<bool>,
    pub ihd: Option<bool>,
    pub pad: Option<bool>,
    pub cvd: Option<bool>,
    /// Kidney function (mL/min/1.73m²) when recorded.
    pub gfr: Option<f64>,
    /// Initial treatment: `true` = immediate transplant, `false` = dialysis first.
    pub pkt: bool,
    /// Days from onset to delayed transplant, for dialysis-first switchers.
    pub t_switch_days: Option<i64>,
    /// Observed follow-up in days.
    pub t_days: i64,
    /// `true` = death observed, `false` = censored.
    pub event: bool,
}

impl SubjectRecord {
    /// Check the record invariants, returning a short reason on violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.t_days < 0 {
            return Err("negative follow-up".into());
        }
        if !(self.age.is_finite() && self.age >= 0.0) {
            return Err("invalid age".into());
        }
        if let Some(g) = self.gfr {
            if !g.is_finite() || g < 0.0 {
                return Err("invalid gfr".into());
            }
        }
        match self.t_switch_days {
            Some(s) if self.pkt => {
                let _ = s;
                Err("switch recorded for initial-transplant subject".into())
            }
            Some(s) if s <= 0 => Err("non-positive switch time".into()),
            Some(s) if s > self.t_days => Err("switch after follow-up end".into()),
            _ => Ok(()),
        }
    }

    /// Calendar year of entry.
    pub fn entry_year(&self) -> i32 {
        self.entry_date.year()
    }

    /// Follow-up in years.
    pub fn years(&self) -> f64 {
        self.t_days as f64 / DAYS_PER_YEAR
    }

    pub fn comorbidity(&self, c: Comorbidity) -> Option<bool> {
        match c {
            Comorbidity::Diabetes => self.diabetes,
            Comorbidity::Hypertension => self.hypertension,
            Comorbidity::Ihd => self.ihd,
            Comorbidity::Pad => self.pad,
            Comorbidity::Cvd => self.cvd,
        }
    }

    pub fn set_comorbidity(&mut self, c: Comorbidity, value: Option<bool>) {
        match c {
            Comorbidity::Diabetes => self.diabetes = value,
            Comorbidity::Hypertension => self.hypertension = value,
            Comorbidity::Ihd => self.ihd = value,
            Comorbidity::Pad => self.pad = value,
            Comorbidity::Cvd => self.cvd = value,
        }
    }

    /// Split follow-up into time without initial transplant and time after
    /// (any) transplant.
    pub fn decompose(&self) -> Decomposition {
        let t_w = match self.t_switch_days {
            Some(s) => s,
            None => {
                if self.pkt {
                    0
                } else {
                    self.t_days
                }
            }
        };
        Decomposition {
            t_w,
            t_r: self.t_days - t_w,
        }
    }
}

/// Follow-up decomposition: `t_w` days without initial transplant plus
/// `t_r` days after transplant (immediate or delayed), summing to the
/// observed follow-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub t_w: i64,
    pub t_r: i64,
}

impl Decomposition {
    /// Whether the subject is on initial dialysis `u` days after onset.
    pub fn on_dialysis_at(&self, u: i64) -> bool {
        u < self.t_w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_record() -> SubjectRecord {
        SubjectRecord {
            id: "S1".into(),
            entry_date: NaiveDate::from_ymd_opt(1995, 3, 2).unwrap(),
            age: 47.0,
            sex: Sex::Female,
            region: "Western".into(),
            pkd: Pkd::Glomerulonephritis,
            diabetes: None,
            hypertension: None,
            ihd: None,
            pad: None,
            cvd: None,
            gfr: None,
            pkt: true,
            t_switch_days: None,
            t_days: 2800,
            event: false,
        }
    }

    #[test]
    fn decompose_with_switch() {
        let mut r = base_record();
        r.pkt = false;
        r.t_switch_days = Some(730);
        r.t_days = 3000;
        let d = r.decompose();
        assert_eq!(d, Decomposition { t_w: 730, t_r: 2270 });
        assert!(d.on_dialysis_at(0));
        assert!(d.on_dialysis_at(729));
        assert!(!d.on_dialysis_at(730));
    }

    #[test]
    fn decompose_pkt_has_no_pretransplant_time() {
        let r = base_record();
        assert_eq!(r.decompose(), Decomposition { t_w: 0, t_r: 2800 });
    }

    #[test]
    fn decompose_no_switch() {
        let mut r = base_record();
        r.pkt = false;
        r.t_days = 400;
        assert_eq!(r.decompose(), Decomposition { t_w: 400, t_r: 0 });
    }

    #[test]
    fn validate_rejects_switch_after_followup() {
        let mut r = base_record();
        r.pkt = false;
        r.t_switch_days = Some(900);
        r.t_days = 600;
        assert_eq!(r.validate().unwrap_err(), "switch after follow-up end");
    }

    #[test]
    fn validate_rejects_switch_on_pkt() {
        let mut r = base_record();
        r.t_switch_days = Some(100);
        assert!(r.validate().is_err());
    }
}
