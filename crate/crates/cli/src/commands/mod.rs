mod audit;
mod figures;
mod identity;
mod simulate;

pub use audit::{audit, calibration, impact};
pub use figures::figures;
pub use identity::identity_check;
pub use simulate::simulate;

use anyhow::Result;
use serde::Serialize;

use riskaudit::{ConfidenceLevel, GroupRates, PenaltyPolicy, Rate};

use crate::args::{AnalysisArgs, Format, OutputArgs, PolicyArgs};
use crate::output::{self, num};

pub(crate) fn level(a: &AnalysisArgs) -> Result<ConfidenceLevel> {
    ConfidenceLevel::new(a.confidence).map_err(|e| crate::usage(format!("--confidence: {e}")))
}

pub(crate) fn policy(p: &PolicyArgs, threshold: u8) -> Result<PenaltyPolicy> {
    Ok(PenaltyPolicy::new(p.t_low, p.t_high, threshold)?)
}

/// One JSON document, or one CSV table, to `--out` or stdout.
pub(crate) fn emit_single<T: Serialize>(out: &OutputArgs, doc: &T, table: impl FnOnce() -> Result<Vec<u8>>) -> Result<()> {
    let bytes = match out.format {
        Format::Json => output::json_bytes(doc)?,
        Format::Csv => table()?,
    };
    output::emit(out.out.as_deref(), &bytes)
}

pub(crate) const RATE_HEADER: [&str; 9] = [
    "group", "threshold", "metric", "value", "ci_low", "ci_high", "successes", "trials", "undefined",
];

/// Long-format rows of one group's rates at one threshold.
pub(crate) fn rate_rows(group: &str, threshold: u8, r: &GroupRates) -> Vec<Vec<String>> {
    [
        ("prevalence", &r.prevalence),
        ("ppv", &r.ppv),
        ("npv", &r.npv),
        ("fpr", &r.fpr),
        ("fnr", &r.fnr),
    ]
    .into_iter()
    .map(|(name, rate)| {
        let mut row = vec![group.to_string(), threshold.to_string(), name.to_string()];
        match rate {
            Rate::Defined(p) => row.extend([
                num(p.value),
                num(p.ci_low),
                num(p.ci_high),
                p.successes.to_string(),
                p.trials.to_string(),
                String::new(),
            ]),
            Rate::Undefined { undefined } => {
                row.extend(["", "", "", "", ""].map(String::from));
                row.push(undefined.to_string());
            }
        }
        row
    })
    .collect()
}
