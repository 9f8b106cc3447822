//! CSV ingestion and export with a configurable column-name map.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Pkd, RegistryError, Sex, SubjectRecord};

/// Canonical field keys in file column order.
const FIELDS: [&str; 16] = [
    "id",
    "entry_date",
    "age",
    "sex",
    "region",
    "pkd",
    "diabetes",
    "hypertension",
    "ihd",
    "pad",
    "cvd",
    "gfr",
    "pkt",
    "t_switch_days",
    "t_days",
    "event",
];

const REQUIRED: [&str; 9] = [
    "id",
    "entry_date",
    "age",
    "sex",
    "region",
    "pkd",
    "pkt",
    "t_days",
    "event",
];

/// Maps canonical field keys to the column names used by a particular file.
/// Unmapped keys default to the canonical name itself.
#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq, Eq)]
pub struct CsvSchema {
    #[serde(flatten)]
    pub columns: BTreeMap<String, String>,
}

impl CsvSchema {
    pub fn column_name<'a>(&'a self, field: &'a str) -> &'a str {
        self.columns.get(field).map(String::as_str).unwrap_or(field)
    }
}

/// One rejected row with its diagnostic.
#[derive(Debug, Clone, Serialize)]
pub struct RowDiagnostic {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub column: Option<String>,
    pub message: String,
}

impl std::fmt::Display for RowDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.column {
            Some(c) => write!(f, "row {}, column {}: {}", self.row, c, self.message),
            None => write!(f, "row {}: {}", self.row, self.message),
        }
    }
}

/// Result of a load: parsed records plus row-numbered diagnostics for any
/// rejected rows.
#[derive(Debug)]
pub struct LoadOutcome {
    pub records: Vec<SubjectRecord>,
    pub rejects: Vec<RowDiagnostic>,
}

impl LoadOutcome {
    /// Fail when any row was rejected.
    pub fn into_strict(self) -> Result<Vec<SubjectRecord>, RegistryError> {
        if let Some(first) = self.rejects.first() {
            return Err(RegistryError::RejectedRows {
                count: self.rejects.len(),
                total: self.records.len() + self.rejects.len(),
                first: first.to_string(),
            });
        }
        Ok(self.records)
    }
}

struct ColumnIndex {
    by_field: BTreeMap<&'static str, Option<usize>>,
}

fn index_columns(headers: &csv::StringRecord, schema: &CsvSchema) -> Result<ColumnIndex, RegistryError> {
    let mut by_field = BTreeMap::new();
    for field in FIELDS {
        let wanted = schema.column_name(field);
        let pos = headers.iter().position(|h| h.trim() == wanted);
        if pos.is_none() && REQUIRED.contains(&field) {
            return Err(RegistryError::MissingColumn(wanted.to_string()));
        }
        by_field.insert(field, pos);
    }
    Ok(ColumnIndex { by_field })
}

fn cell<'a>(record: &'a csv::StringRecord, idx: &ColumnIndex, field: &str) -> Option<&'a str> {
    idx.by_field
        .get(field)
        .copied()
        .flatten()
        .and_then(|p| record.get(p))
        .map(str::trim)
}

fn parse_tri_state(raw: Option<&str>) -> Result<Option<bool>, String> {
    match raw {
        None | Some("") => Ok(None),
        Some("0") => Ok(Some(false)),
        Some("1") => Ok(Some(true)),
        Some(other) => Err(format!("expected 0, 1 or empty, got `{other}`")),
    }
}

fn parse_flag(raw: &str) -> Result<bool, String> {
    match raw {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("expected 0 or 1, got `{other}`")),
    }
}

/// Load a registry from CSV. The header row is required; column names are
/// resolved through `schema`. Rows violating field formats or record
/// invariants are rejected with diagnostics rather than aborting the load.
pub fn load_registry<R: Read>(source: R, schema: &CsvSchema) -> Result<LoadOutcome, RegistryError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let idx = index_columns(&headers, schema)?;

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut seen_ids: BTreeMap<String, usize> = BTreeMap::new();

    for (row_number, row) in reader.records().enumerate() {
        let row_number = row_number + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejects.push(RowDiagnostic {
                    row: row_number,
                    column: None,
                    message: format!("malformed csv row: {e}"),
                });
                continue;
            }
        };

        match parse_row(&row, &idx, schema, row_number) {
            Ok(record) => {
                if let Some(first) = seen_ids.get(&record.id) {
                    rejects.push(RowDiagnostic {
                        row: row_number,
                        column: Some(schema.column_name("id").to_string()),
                        message: format!("duplicate id `{}` (first at row {first})", record.id),
                    });
                } else {
                    seen_ids.insert(record.id.clone(), row_number);
                    records.push(record);
                }
            }
            Err(d) => rejects.push(d),
        }
    }

    Ok(LoadOutcome { records, rejects })
}

fn parse_row(
    row: &csv::StringRecord,
    idx: &ColumnIndex,
    schema: &CsvSchema,
    row_number: usize,
) -> Result<SubjectRecord, RowDiagnostic> {
    let diag = |field: &str, message: String| RowDiagnostic {
        row: row_number,
        column: Some(schema.column_name(field).to_string()),
        message,
    };
    let required = |field: &'static str| {
        cell(row, idx, field)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| diag(field, "missing value".into()))
    };

    let id = required("id")?.to_string();
    let entry_raw = required("entry_date")?;
    let entry_date = NaiveDate::from_str(entry_raw)
        .map_err(|_| diag("entry_date", format!("invalid ISO-8601 date `{entry_raw}`")))?;
    let age: f64 = required("age")?
        .parse()
        .map_err(|_| diag("age", "invalid number".into()))?;
    let sex = match required("sex")?.to_ascii_lowercase().as_str() {
        "female" | "f" => Sex::Female,
        "male" | "m" => Sex::Male,
        other => return Err(diag("sex", format!("unknown sex `{other}`"))),
    };
    let region = required("region")?.to_string();
    let pkd_raw = required("pkd")?;
    let pkd = Pkd::parse(pkd_raw)
        .ok_or_else(|| diag("pkd", format!("unknown kidney-disease category `{pkd_raw}`")))?;

    let mut flags = [None; 5];
    for (slot, field) in ["diabetes", "hypertension", "ihd", "pad", "cvd"]
        .into_iter()
        .enumerate()
    {
        flags[slot] = parse_tri_state(cell(row, idx, field)).map_err(|m| diag(field, m))?;
    }

    let gfr = match cell(row, idx, "gfr") {
        None | Some("") => None,
        Some(v) => Some(
            v.parse::<f64>()
                .map_err(|_| diag("gfr", "invalid number".into()))?,
        ),
    };
    let pkt = parse_flag(required("pkt")?).map_err(|m| diag("pkt", m))?;
    let t_switch_days = match cell(row, idx, "t_switch_days") {
        None | Some("") => None,
        Some(v) => Some(
            v.parse::<i64>()
                .map_err(|_| diag("t_switch_days", "invalid integer".into()))?,
        ),
    };
    let t_days: i64 = required("t_days")?
        .parse()
        .map_err(|_| diag("t_days", "invalid integer".into()))?;
    let event = parse_flag(required("event")?).map_err(|m| diag("event", m))?;

    let record = SubjectRecord {
        id,
        entry_date,
        age,
        sex,
        region,
        pkd,
        diabetes: flags[0],
        hypertension: flags[1],
        ihd: flags[2],
        pad: flags[3],
        cvd: flags[4],
        gfr,
        pkt,
        t_switch_days,
        t_days,
        event,
    };
    record.validate().map_err(|m| RowDiagnostic {
        row: row_number,
        column: None,
        message: m,
    })?;
    Ok(record)
}

fn fmt_opt_bool(v: Option<bool>) -> String {
    match v {
        None => String::new(),
        Some(false) => "0".into(),
        Some(true) => "1".into(),
    }
}

fn record_fields(r: &SubjectRecord) -> [String; 16] {
    [
        r.id.clone(),
        r.entry_date.format("%Y-%m-%d").to_string(),
        r.age.to_string(),
        r.sex.as_str().to_string(),
        r.region.clone(),
        r.pkd.code().to_string(),
        fmt_opt_bool(r.diabetes),
        fmt_opt_bool(r.hypertension),
        fmt_opt_bool(r.ihd),
        fmt_opt_bool(r.pad),
        fmt_opt_bool(r.cvd),
        r.gfr.map(|g| g.to_string()).unwrap_or_default(),
        if r.pkt { "1" } else { "0" }.to_string(),
        r.t_switch_days.map(|s| s.to_string()).unwrap_or_default(),
        r.t_days.to_string(),
        if r.event { "1" } else { "0" }.to_string(),
    ]
}

/// Write several completed record sets into one CSV with a leading
/// set-index column.
pub fn write_registry_sets<W: Write>(
    sets: &[Vec<SubjectRecord>],
    sink: W,
    schema: &CsvSchema,
) -> Result<(), RegistryError> {
    let mut writer = csv::Writer::from_writer(sink);
    let mut header = vec!["imputation_set".to_string()];
    header.extend(FIELDS.iter().map(|f| schema.column_name(f).to_string()));
    writer.write_record(&header)?;
    for (k, set) in sets.iter().enumerate() {
        for r in set {
            let mut row = vec![(k + 1).to_string()];
            row.extend(record_fields(r));
            writer.write_record(&row)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Write records as CSV using `schema` for the column names. Field order is
/// the canonical one, so `write_registry` followed by `load_registry` with
/// the same schema round-trips byte-for-byte on the record level.
pub fn write_registry<W: Write>(
    records: &[SubjectRecord],
    sink: W,
    schema: &CsvSchema,
) -> Result<(), RegistryError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(FIELDS.iter().map(|f| schema.column_name(f)))?;
    for r in records {
        writer.write_record(record_fields(r))?;
    }
    writer.flush()?;
    Ok(())
}
