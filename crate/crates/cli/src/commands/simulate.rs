use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use riskaudit::simulate::{summarize, SimulationSummary};
use riskaudit::{write_dataset, PenaltyPolicy, SimConfig};

use crate::args::{Format, SimulateArgs};
use crate::meta::Metadata;
use crate::output::{self, csv_bytes, opt};

pub const DEFAULT_REPS: u64 = 100;

/// The TOML configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimFile {
    pub reps: u64,
    pub simulation: SimConfig,
    pub policy: PenaltyPolicy,
}

impl Default for SimFile {
    fn default() -> Self {
        SimFile {
            reps: DEFAULT_REPS,
            simulation: SimConfig::default(),
            policy: PenaltyPolicy::default(),
        }
    }
}

fn read_config(path: Option<&Path>) -> Result<SimFile> {
    let Some(path) = path else {
        return Ok(SimFile::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("config {}", path.display()))
}

#[derive(Debug, Serialize)]
struct SimulateDoc {
    metadata: Metadata,
    summary: SimulationSummary,
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut file = read_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        file.simulation.seed = seed;
    }
    if let Some(reps) = args.reps {
        file.reps = reps;
    }
    let p = file.policy;
    file.policy = PenaltyPolicy::new(
        args.t_low.unwrap_or(p.t_low()),
        args.t_high.unwrap_or(p.t_high()),
        args.threshold.unwrap_or(p.threshold()),
    )?;

    let summary = summarize(&file.simulation, &file.policy, file.reps)?;
    if let Some(path) = &args.export {
        let d = summary.model.generate(file.simulation.seed, 0)?;
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf)?;
        output::write_atomic(path, &buf)?;
    }

    let metadata = Metadata::new("simulate", args.output.timestamp)
        .param("config_file", args.config.as_deref())
        .param("config", &file);
    let doc = SimulateDoc { metadata, summary };
    let bytes = match args.output.format {
        Format::Json => output::json_bytes(&doc)?,
        Format::Csv => csv_bytes(
            &["threshold", "fpr_b", "fpr_w", "analytic_fpr_b", "analytic_fpr_w", "identity_gap", "fully_defined"],
            doc.summary.error_rates.iter().map(|e| {
                vec![
                    e.threshold.to_string(),
                    opt(e.fpr_b),
                    opt(e.fpr_w),
                    opt(e.analytic_fpr_b),
                    opt(e.analytic_fpr_w),
                    opt(e.identity_gap),
                    e.fully_defined.to_string(),
                ]
            }),
        )?,
    };
    output::emit(args.output.out.as_deref(), &bytes)
}
