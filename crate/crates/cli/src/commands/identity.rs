use anyhow::Result;
use serde::Serialize;

use riskaudit::rates::{identity_sweep, random_identity_check, IdentitySlice, RandomIdentitySummary};

use crate::args::IdentityArgs;
use crate::meta::{self, Metadata};
use crate::output::{self, csv_bytes, num};
use crate::{Coded, EXIT_DEGENERATE};

#[derive(Debug, Serialize)]
struct Sweep {
    slices: Vec<IdentitySlice>,
    checked: u64,
    max_abs_error: f64,
}

#[derive(Debug, Serialize)]
struct IdentityDoc {
    metadata: Metadata,
    tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<Sweep>,
    random: RandomIdentitySummary,
    passed: bool,
}

pub fn identity_check(args: &IdentityArgs) -> Result<()> {
    let mut metadata = Metadata::new("identity-check", args.output.timestamp)
        .param("random", args.random)
        .param("max_cell", args.max_cell)
        .param("seed", args.seed);
    let sweep = match &args.data {
        Some(path) => {
            let schema = meta::read_schema(args.schema.as_deref())?;
            let loaded = meta::load_with(path, &schema, &args.groups, args.skip_invalid)?;
            metadata = metadata.with_data(&loaded);
            let slices = identity_sweep(&loaded.cohort, 0..=10u8);
            let errors: Vec<f64> = slices.iter().filter_map(|s| s.comparison).map(|c| c.abs_error).collect();
            Some(Sweep {
                checked: errors.len() as u64,
                max_abs_error: errors.iter().copied().fold(0.0, f64::max),
                slices,
            })
        }
        None => None,
    };
    let random = random_identity_check(args.random, args.max_cell, args.seed);
    let passed = random.max_abs_error <= args.tolerance
        && sweep.as_ref().is_none_or(|s| s.max_abs_error <= args.tolerance);

    let doc = IdentityDoc {
        metadata,
        tolerance: args.tolerance,
        sweep,
        random,
        passed,
    };
    let bytes = match args.output.format {
        crate::args::Format::Json => output::json_bytes(&doc)?,
        crate::args::Format::Csv => {
            let slices = doc.sweep.as_ref().map_or(&[][..], |s| &s.slices[..]);
            csv_bytes(
                &["group", "threshold", "tn", "fp", "fn", "tp", "direct_fpr", "identity_fpr", "abs_error"],
                slices.iter().map(|s| {
                    let m = s.matrix;
                    let c = s.comparison;
                    vec![
                        s.group.clone(),
                        s.threshold.to_string(),
                        m.tn.to_string(),
                        m.fp.to_string(),
                        m.fn_.to_string(),
                        m.tp.to_string(),
                        c.map(|c| num(c.direct_fpr)).unwrap_or_default(),
                        c.map(|c| num(c.identity_fpr)).unwrap_or_default(),
                        c.map(|c| num(c.abs_error)).unwrap_or_default(),
                    ]
                }),
            )?
        }
    };
    output::emit(args.output.out.as_deref(), &bytes)?;
    if passed {
        Ok(())
    } else {
        Err(Coded {
            code: EXIT_DEGENERATE,
            message: format!("identity does not close within {}", args.tolerance),
        }
        .into())
    }
}
