//! Run metadata and dataset loading shared by the data-driven commands.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use log::{info, warn};
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use riskaudit::ingest::RowPredicate;
use riskaudit::{filter_cohort, parse_dataset, Dataset, IngestStats, ParseOptions, Schema};

use crate::args::{DataArgs, Preset};
use crate::{Coded, EXIT_PARSE};

#[derive(Debug, Serialize)]
pub struct DatasetInfo {
    pub path: PathBuf,
    pub sha256: String,
    pub data_rows: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub excluded: u64,
    pub cohort_rows: u64,
}

#[derive(Debug, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Seconds since the Unix epoch; only with `--timestamp`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<Schema>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cohort: Vec<String>,
    pub parameters: Map<String, Value>,
}

impl Metadata {
    pub fn new(command: &'static str, timestamp: bool) -> Self {
        Metadata {
            tool: "riskaudit",
            version: env!("CARGO_PKG_VERSION"),
            command,
            generated_at: timestamp.then(|| {
                SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs())
            }),
            dataset: None,
            schema: None,
            cohort: Vec::new(),
            parameters: Map::new(),
        }
    }

    pub fn with_data(mut self, loaded: &Loaded) -> Self {
        self.dataset = Some(DatasetInfo {
            path: loaded.path.clone(),
            sha256: loaded.sha256.clone(),
            data_rows: loaded.stats.data_rows,
            accepted: loaded.stats.accepted,
            rejected: loaded.stats.rejected,
            excluded: loaded.stats.excluded,
            cohort_rows: loaded.cohort.len() as u64,
        });
        self.schema = Some(loaded.cohort.schema().clone());
        self.cohort = loaded.groups.clone();
        self
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        let v = serde_json::to_value(value).expect("parameters serialise");
        self.parameters.insert(key.into(), v);
        self
    }
}

pub struct Loaded {
    pub path: PathBuf,
    pub sha256: String,
    pub stats: IngestStats,
    /// Records of the requested groups only.
    pub cohort: Dataset,
    pub groups: Vec<String>,
}

impl Loaded {
    pub fn b(&self) -> &str {
        &self.groups[0]
    }

    pub fn w(&self) -> &str {
        &self.groups[1]
    }
}

pub fn read_schema(path: Option<&Path>) -> Result<Schema> {
    let Some(path) = path else {
        return Ok(Schema::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading schema {}", path.display()))?;
    toml::from_str(&text).map_err(|e| {
        Coded {
            code: EXIT_PARSE,
            message: format!("schema {}: {e}", path.display()),
        }
        .into()
    })
}

fn build_schema(args: &DataArgs) -> Result<Schema> {
    let mut schema = read_schema(args.schema.as_deref())?;
    if let Some(Preset::Propublica) = args.preset {
        schema.filters.extend(RowPredicate::propublica_preset());
    }
    if let Some(c) = &args.group_column {
        schema.group = c.clone();
    }
    if let Some(c) = &args.score_column {
        schema.score = c.clone();
    }
    if let Some(c) = &args.outcome_column {
        schema.outcome = c.clone();
    }
    Ok(schema)
}

pub fn load(args: &DataArgs) -> Result<Loaded> {
    let schema = build_schema(args)?;
    load_with(&args.data, &schema, &args.groups, args.skip_invalid)
}

pub fn load_with(path: &Path, schema: &Schema, groups: &[String], skip_invalid: bool) -> Result<Loaded> {
    if groups.len() < 2 {
        return Err(crate::usage("--groups needs at least two labels"));
    }
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let sha256 = hex::encode(Sha256::digest(&bytes));
    let (dataset, stats) = parse_dataset(bytes.as_slice(), schema, ParseOptions { skip_invalid })
        .with_context(|| format!("parsing {}", path.display()))?;
    for d in &stats.diagnostics {
        warn!("{}: {d}", path.display());
    }
    info!(
        "{}: {} rows, {} accepted, {} rejected, {} excluded",
        path.display(),
        stats.data_rows,
        stats.accepted,
        stats.rejected,
        stats.excluded
    );
    let cohort = filter_cohort(&dataset, groups)?;
    for g in groups {
        if !cohort.contains_group(g) {
            warn!("group `{g}` has no records");
        }
    }
    Ok(Loaded {
        path: path.to_path_buf(),
        sha256,
        stats,
        cohort,
        groups: groups.to_vec(),
    })
}
