//! Parsing scored-defendant CSV files into a typed [`Dataset`].
//!
//! The default [`Schema`] matches the published two-year Broward County
//! file (`race`, `decile_score`, `two_year_recid`, `c_charge_degree`,
//! `priors_count`). Any file carrying the same information under other
//! column names can be audited by overriding the mapping.
//!
//! Parsing is strict by default: the first invalid row aborts with its
//! line number. With [`ParseOptions::skip_invalid`] invalid rows are
//! counted and reported in [`IngestStats`] instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// A COMPAS-style decile score, always in `1..=10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Decile(u8);

impl Decile {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 10;

    pub fn new(value: u8) -> Option<Self> {
        (Self::MIN..=Self::MAX).contains(&value).then_some(Decile(value))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// All ten deciles in ascending order.
    pub fn all() -> impl Iterator<Item = Decile> {
        (Self::MIN..=Self::MAX).map(Decile)
    }

    /// Zero-based position, for indexing per-decile arrays.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }
}

impl fmt::Display for Decile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Serialize for Decile {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.0)
    }
}

/// Observed two-year outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    NoRecid,
    Recid,
}

impl Outcome {
    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(Outcome::NoRecid),
            1 => Some(Outcome::Recid),
            _ => None,
        }
    }

    pub fn flag(self) -> u8 {
        match self {
            Outcome::NoRecid => 0,
            Outcome::Recid => 1,
        }
    }

    pub fn is_recid(self) -> bool {
        self == Outcome::Recid
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.flag().fmt(f)
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.flag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChargeDegree {
    Felony,
    Misdemeanor,
}

/// One scored defendant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub id: String,
    pub group: String,
    pub score: Decile,
    pub outcome: Outcome,
    pub charge_degree: ChargeDegree,
    pub priors: u32,
    /// Unmapped columns carried through verbatim.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

/// Column mapping plus optional row predicates applied at parse time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub id: String,
    pub group: String,
    pub score: String,
    pub outcome: String,
    pub charge_degree: String,
    pub priors: String,
    pub felony_code: String,
    pub misdemeanor_code: String,
    /// Unmapped columns to keep in [`Record::extra`]. `None` keeps all of them.
    pub passthrough: Option<Vec<String>>,
    /// Row predicates. Rows failing any predicate are excluded (not rejected).
    pub filters: Vec<RowPredicate>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            id: "id".into(),
            group: "race".into(),
            score: "decile_score".into(),
            outcome: "two_year_recid".into(),
            charge_degree: "c_charge_degree".into(),
            priors: "priors_count".into(),
            felony_code: "F".into(),
            misdemeanor_code: "M".into(),
            passthrough: None,
            filters: Vec::new(),
        }
    }
}

impl Schema {
    fn mapped_columns(&self) -> [(&'static str, &str); 6] {
        [
            ("id", &self.id),
            ("group", &self.group),
            ("score", &self.score),
            ("outcome", &self.outcome),
            ("charge_degree", &self.charge_degree),
            ("priors", &self.priors),
        ]
    }
}

/// A predicate over a raw (string) column.
///
/// `Range` parses the cell as a number; a cell that does not parse fails
/// the predicate, so the row is excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum RowPredicate {
    Range {
        column: String,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
    },
    Equals {
        column: String,
        value: String,
    },
    NotEquals {
        column: String,
        value: String,
    },
}

impl RowPredicate {
    pub fn column(&self) -> &str {
        match self {
            RowPredicate::Range { column, .. }
            | RowPredicate::Equals { column, .. }
            | RowPredicate::NotEquals { column, .. } => column,
        }
    }

    fn accepts(&self, cell: &str) -> bool {
        let cell = cell.trim();
        match self {
            RowPredicate::Range { min, max, .. } => match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    min.is_none_or(|lo| v >= lo) && max.is_none_or(|hi| v <= hi)
                }
                _ => false,
            },
            RowPredicate::Equals { value, .. } => cell == value,
            RowPredicate::NotEquals { value, .. } => cell != value,
        }
    }

    /// The screening-window and data-quality filters ProPublica applied in
    /// their own analysis of the two-year file. Off unless requested.
    pub fn propublica_preset() -> Vec<RowPredicate> {
        vec![
            RowPredicate::Range {
                column: "days_b_screening_arrest".into(),
                min: Some(-30.0),
                max: Some(30.0),
            },
            RowPredicate::NotEquals {
                column: "is_recid".into(),
                value: "-1".into(),
            },
            RowPredicate::NotEquals {
                column: "c_charge_degree".into(),
                value: "O".into(),
            },
            RowPredicate::NotEquals {
                column: "score_text".into(),
                value: "N/A".into(),
            },
        ]
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Count invalid rows instead of failing on the first one.
    pub skip_invalid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowDiagnostic {
    pub row: u64,
    pub column: Option<String>,
    pub message: String,
}

impl fmt::Display for RowDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.column {
            Some(c) => write!(f, "row {}, column `{}`: {}", self.row, c, self.message),
            None => write!(f, "row {}: {}", self.row, self.message),
        }
    }
}

/// Row accounting for one parse: `accepted + rejected + excluded == data_rows`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestStats {
    pub data_rows: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub excluded: u64,
    pub diagnostics: Vec<RowDiagnostic>,
}

/// Immutable, ordered collection of records in source order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
    schema: Schema,
}

impl Dataset {
    pub fn new(records: Vec<Record>, schema: Schema) -> Self {
        Dataset { records, schema }
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Record> {
        self.records.iter()
    }

    /// Distinct group labels in order of first appearance.
    pub fn groups(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.group.as_str()))
            .map(|r| r.group.clone())
            .collect()
    }

    pub fn contains_group(&self, group: &str) -> bool {
        self.records.iter().any(|r| r.group == group)
    }

    /// Records of one group, in source order.
    pub fn group_slice<'a>(&'a self, group: &'a str) -> impl Iterator<Item = &'a Record> + 'a {
        self.records.iter().filter(move |r| r.group == group)
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Record;
    type IntoIter = std::slice::Iter<'a, Record>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

struct ColumnIndex {
    id: usize,
    group: usize,
    score: usize,
    outcome: usize,
    charge_degree: usize,
    priors: usize,
    passthrough: Vec<(String, usize)>,
    filters: Vec<(usize, RowPredicate)>,
}

fn first_index(header: &csv::StringRecord, name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

impl ColumnIndex {
    fn resolve(header: &csv::StringRecord, schema: &Schema) -> Result<Self> {
        let mut mapped = BTreeSet::new();
        for (_, col) in schema.mapped_columns() {
            mapped.insert(first_index(header, col)?);
        }
        let passthrough = match &schema.passthrough {
            Some(cols) => cols
                .iter()
                .map(|c| Ok((c.clone(), first_index(header, c)?)))
                .collect::<Result<Vec<_>>>()?,
            None => {
                let mut seen = BTreeSet::new();
                header
                    .iter()
                    .enumerate()
                    .filter(|(i, h)| !mapped.contains(i) && seen.insert(h.trim()))
                    .filter(|(_, h)| !schema.mapped_columns().iter().any(|(_, m)| m == &h.trim()))
                    .map(|(i, h)| (h.trim().to_string(), i))
                    .collect()
            }
        };
        let filters = schema
            .filters
            .iter()
            .map(|p| Ok((first_index(header, p.column())?, p.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(ColumnIndex {
            id: first_index(header, &schema.id)?,
            group: first_index(header, &schema.group)?,
            score: first_index(header, &schema.score)?,
            outcome: first_index(header, &schema.outcome)?,
            charge_degree: first_index(header, &schema.charge_degree)?,
            priors: first_index(header, &schema.priors)?,
            passthrough,
            filters,
        })
    }
}

fn invalid(row: u64, column: &str, message: impl Into<String>) -> Error {
    Error::InvalidField {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn parse_record(
    row: u64,
    fields: &csv::StringRecord,
    cols: &ColumnIndex,
    schema: &Schema,
) -> Result<Record> {
    let cell = |i: usize| fields.get(i).unwrap_or("").trim();

    let group = cell(cols.group);
    if group.is_empty() {
        return Err(invalid(row, &schema.group, "empty group label"));
    }

    let raw = cell(cols.score);
    let score = raw
        .parse::<u8>()
        .ok()
        .and_then(Decile::new)
        .ok_or_else(|| invalid(row, &schema.score, format!("`{raw}` is not a decile in 1..=10")))?;

    let raw = cell(cols.outcome);
    let outcome = raw
        .parse::<u8>()
        .ok()
        .and_then(Outcome::from_flag)
        .ok_or_else(|| invalid(row, &schema.outcome, format!("`{raw}` is not 0 or 1")))?;

    let raw = cell(cols.charge_degree);
    let charge_degree = if raw == schema.felony_code {
        ChargeDegree::Felony
    } else if raw == schema.misdemeanor_code {
        ChargeDegree::Misdemeanor
    } else {
        return Err(invalid(
            row,
            &schema.charge_degree,
            format!(
                "`{raw}` is neither `{}` nor `{}`",
                schema.felony_code, schema.misdemeanor_code
            ),
        ));
    };

    let raw = cell(cols.priors);
    let priors = raw.parse::<u32>().map_err(|_| {
        invalid(row, &schema.priors, format!("`{raw}` is not a non-negative integer"))
    })?;

    let extra = cols
        .passthrough
        .iter()
        .map(|(name, i)| (name.clone(), cell(*i).to_string()))
        .collect();

    Ok(Record {
        id: cell(cols.id).to_string(),
        group: group.to_string(),
        score,
        outcome,
        charge_degree,
        priors,
        extra,
    })
}

/// Parse a UTF-8 CSV with a header row into a [`Dataset`].
pub fn parse_dataset<R: Read>(
    source: R,
    schema: &Schema,
    options: ParseOptions,
) -> Result<(Dataset, IngestStats)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(source);
    let header = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(csv_error(e, 1)),
    };
    if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
        return Err(Error::EmptyInput);
    }
    let cols = ColumnIndex::resolve(&header, schema)?;

    let mut stats = IngestStats::default();
    let mut records = Vec::new();
    let mut fields = csv::StringRecord::new();
    loop {
        let row = reader.position().line();
        let next = reader.read_record(&mut fields);
        let outcome = match next {
            Ok(false) => break,
            Ok(true) => {
                stats.data_rows += 1;
                if !cols
                    .filters
                    .iter()
                    .all(|(i, p)| p.accepts(fields.get(*i).unwrap_or("")))
                {
                    stats.excluded += 1;
                    continue;
                }
                parse_record(row, &fields, &cols, schema)
            }
            Err(e) => {
                stats.data_rows += 1;
                Err(csv_error(e, row))
            }
        };
        match outcome {
            Ok(record) => {
                stats.accepted += 1;
                records.push(record);
            }
            Err(e) if options.skip_invalid => {
                stats.rejected += 1;
                stats.diagnostics.push(diagnostic(row, &e));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((Dataset::new(records, schema.clone()), stats))
}

fn csv_error(e: csv::Error, row: u64) -> Error {
    let row = e.position().map_or(row, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::MalformedRow {
            row,
            message: format!("{kind:?}"),
        },
    }
}

fn diagnostic(row: u64, e: &Error) -> RowDiagnostic {
    match e {
        Error::InvalidField {
            row,
            column,
            message,
        } => RowDiagnostic {
            row: *row,
            column: Some(column.clone()),
            message: message.clone(),
        },
        Error::MalformedRow { row, message } => RowDiagnostic {
            row: *row,
            column: None,
            message: message.clone(),
        },
        other => RowDiagnostic {
            row,
            column: None,
            message: other.to_string(),
        },
    }
}

/// Write a dataset back out in its own schema's column layout. Extra
/// columns follow the mapped ones in sorted order.
pub fn write_dataset<W: Write>(dataset: &Dataset, sink: W) -> Result<()> {
    let schema = dataset.schema();
    let extras: BTreeSet<&str> = dataset
        .iter()
        .flat_map(|r| r.extra.keys().map(String::as_str))
        .collect();
    let mut writer = csv::Writer::from_writer(sink);
    let mut header: Vec<&str> = schema.mapped_columns().iter().map(|(_, c)| *c).collect();
    header.extend(extras.iter().copied());
    writer.write_record(&header).map_err(csv_write_error)?;
    for r in dataset {
        let degree = match r.charge_degree {
            ChargeDegree::Felony => schema.felony_code.as_str(),
            ChargeDegree::Misdemeanor => schema.misdemeanor_code.as_str(),
        };
        let mut row = vec![
            r.id.clone(),
            r.group.clone(),
            r.score.to_string(),
            r.outcome.to_string(),
            degree.to_string(),
            r.priors.to_string(),
        ];
        row.extend(
            extras
                .iter()
                .map(|k| r.extra.get(*k).cloned().unwrap_or_default()),
        );
        writer.write_record(&row).map_err(csv_write_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_write_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Io(std::io::Error::other(format!("{kind:?}"))),
    }
}

/// Keep only records whose group is in `groups`. An empty result is legal
/// but logged at warning level.
pub fn filter_cohort<S: AsRef<str>>(dataset: &Dataset, groups: &[S]) -> Result<Dataset> {
    if groups.is_empty() {
        return Err(Error::Config("cohort filter needs at least one group".into()));
    }
    let wanted: BTreeSet<&str> = groups.iter().map(AsRef::as_ref).collect();
    let records: Vec<Record> = dataset
        .iter()
        .filter(|r| wanted.contains(r.group.as_str()))
        .cloned()
        .collect();
    if records.is_empty() {
        log::warn!("cohort filter {wanted:?} matched no records");
    }
    Ok(Dataset::new(records, dataset.schema().clone()))
}
