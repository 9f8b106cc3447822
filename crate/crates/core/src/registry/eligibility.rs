//! Config-driven eligibility filtering with an auditable exclusion table.

use serde::{Deserialize, Serialize};

use super::{Pkd, SubjectRecord};

/// A single exclusion rule evaluated against one record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    /// Exclude subjects older than `years` at onset.
    AgeOver { years: f64 },
    /// Exclude subjects whose region is in the list (case-insensitive).
    RegionIn { regions: Vec<String> },
    /// Exclude subjects who died or were censored on the day of onset.
    SameDayOutcome,
    /// Exclude subjects without a recorded kidney function.
    MissingGfr,
    /// Exclude subjects with any unrecorded comorbidity flag.
    MissingComorbidity,
    /// Exclude the listed kidney-disease categories.
    PkdIn { categories: Vec<Pkd> },
    /// Exclude entries before the given calendar year.
    EntryBefore { year: i32 },
    /// Exclude entries in or after the given calendar year.
    EntryFrom { year: i32 },
}

impl Rule {
    pub fn excludes(&self, r: &SubjectRecord) -> bool {
        match self {
            Rule::AgeOver { years } => r.age > *years,
            Rule::RegionIn { regions } => regions
                .iter()
                .any(|g| g.eq_ignore_ascii_case(r.region.trim())),
            Rule::SameDayOutcome => r.t_days == 0,
            Rule::MissingGfr => r.gfr.is_none(),
            Rule::MissingComorbidity => super::Comorbidity::ALL
                .iter()
                .any(|&c| r.comorbidity(c).is_none()),
            Rule::PkdIn { categories } => categories.contains(&r.pkd),
            Rule::EntryBefore { year } => r.entry_year() < *year,
            Rule::EntryFrom { year } => r.entry_year() >= *year,
        }
    }
}

/// A labelled eligibility criterion. Criteria are applied in order; a record
/// is charged to the first criterion that excludes it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EligibilityCriterion {
    pub label: String,
    #[serde(flatten)]
    pub rule: Rule,
}

/// The default criteria shipped with the toolkit: over-75, foreign or
/// unknown region, and same-day death or censoring.
pub fn default_criteria() -> Vec<EligibilityCriterion> {
    vec![
        EligibilityCriterion {
            label: "age>75".into(),
            rule: Rule::AgeOver { years: 75.0 },
        },
        EligibilityCriterion {
            label: "foreign or unknown region".into(),
            rule: Rule::RegionIn {
                regions: vec!["Foreign".into(), "Unknown".into()],
            },
        },
        EligibilityCriterion {
            label: "died or censored on day of onset".into(),
            rule: Rule::SameDayOutcome,
        },
    ]
}

/// One exclusion-table row: counts are split by initial-treatment arm.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ExclusionRow {
    pub label: String,
    pub excluded_pkt: usize,
    pub excluded_dialysis: usize,
    pub remaining_pkt: usize,
    pub remaining_dialysis: usize,
}

/// Ordered record of how the analysis set was selected.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ExclusionTable {
    pub initial_pkt: usize,
    pub initial_dialysis: usize,
    pub rows: Vec<ExclusionRow>,
}

impl ExclusionTable {
    /// Remaining arm sizes after all criteria, equal to the analysis set.
    pub fn final_counts(&self) -> (usize, usize) {
        self.rows
            .last()
            .map(|r| (r.remaining_pkt, r.remaining_dialysis))
            .unwrap_or((self.initial_pkt, self.initial_dialysis))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "criterion,excluded_pkt,excluded_dialysis,remaining_pkt,remaining_dialysis\n",
        );
        out.push_str(&format!(
            "initial,0,0,{},{}\n",
            self.initial_pkt, self.initial_dialysis
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_quote(&r.label),
                r.excluded_pkt,
                r.excluded_dialysis,
                r.remaining_pkt,
                r.remaining_dialysis
            ));
        }
        out
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Apply the ordered criteria. Each record is excluded by at most the first
/// failing criterion; the table carries one row per criterion.
pub fn apply_eligibility(
    records: &[SubjectRecord],
    criteria: &[EligibilityCriterion],
) -> (Vec<SubjectRecord>, ExclusionTable) {
    let initial_pkt = records.iter().filter(|r| r.pkt).count();
    let initial_dialysis = records.len() - initial_pkt;

    let mut current: Vec<&SubjectRecord> = records.iter().collect();
    let mut rows = Vec::with_capacity(criteria.len());

    for criterion in criteria {
        let (excluded, kept): (Vec<&SubjectRecord>, Vec<&SubjectRecord>) =
            current.into_iter().partition(|r| criterion.rule.excludes(r));
        let excluded_pkt = excluded.iter().filter(|r| r.pkt).count();
        let remaining_pkt = kept.iter().filter(|r| r.pkt).count();
        rows.push(ExclusionRow {
            label: criterion.label.clone(),
            excluded_pkt,
            excluded_dialysis: excluded.len() - excluded_pkt,
            remaining_pkt,
            remaining_dialysis: kept.len() - remaining_pkt,
        });
        current = kept;
    }

    let filtered: Vec<SubjectRecord> = current.into_iter().cloned().collect();
    (
        filtered,
        ExclusionTable {
            initial_pkt,
            initial_dialysis,
            rows,
        },
    )
}
