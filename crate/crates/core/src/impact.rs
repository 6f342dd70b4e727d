//! Disparate impact of the two-level ("MinMax") penalty policy.
//!
//! Low-risk defendants receive `t_low`, high-risk defendants `t_high`. The
//! expected penalty gap between a group-b defendant with outcome `y1` and a
//! group-w defendant with outcome `y2` is
//! `(t_high - t_low) * (P(HR | b, y1) - P(HR | w, y2))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, Outcome};
use crate::rates::{coarsen, GroupRates, Rate, RiskClass, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct PenaltyPolicy {
    t_low: f64,
    t_high: f64,
    threshold: u8,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    t_low: f64,
    t_high: f64,
    #[serde(default = "default_threshold")]
    threshold: u8,
}

fn default_threshold() -> u8 {
    DEFAULT_THRESHOLD
}

impl TryFrom<RawPolicy> for PenaltyPolicy {
    type Error = Error;

    fn try_from(raw: RawPolicy) -> Result<Self> {
        PenaltyPolicy::new(raw.t_low, raw.t_high, raw.threshold)
    }
}

impl PenaltyPolicy {
    pub fn new(t_low: f64, t_high: f64, threshold: u8) -> Result<Self> {
        if !t_low.is_finite() || !t_high.is_finite() {
            return Err(Error::Config("penalties must be finite".into()));
        }
        if t_low > t_high {
            return Err(Error::Config(format!(
                "t_low ({t_low}) must not exceed t_high ({t_high})"
            )));
        }
        Ok(PenaltyPolicy {
            t_low,
            t_high,
            threshold,
        })
    }

    /// `t_low = 0`, `t_high = 1`: the expected penalty is the probability
    /// of incarceration.
    pub fn incarceration(threshold: u8) -> Self {
        PenaltyPolicy {
            t_low: 0.0,
            t_high: 1.0,
            threshold,
        }
    }

    pub fn t_low(&self) -> f64 {
        self.t_low
    }

    pub fn t_high(&self) -> f64 {
        self.t_high
    }

    pub fn threshold(&self) -> u8 {
        self.threshold
    }

    pub fn spread(&self) -> f64 {
        self.t_high - self.t_low
    }
}

impl Default for PenaltyPolicy {
    fn default() -> Self {
        PenaltyPolicy::incarceration(DEFAULT_THRESHOLD)
    }
}

pub fn minmax_penalty(class: RiskClass, policy: &PenaltyPolicy) -> f64 {
    match class {
        RiskClass::LowRisk => policy.t_low,
        RiskClass::HighRisk => policy.t_high,
    }
}

/// High-risk share within one (group, outcome) slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceHighRisk {
    pub group: String,
    pub outcome: Outcome,
    pub n: u64,
    pub high_risk: u64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactReport {
    pub policy: PenaltyPolicy,
    pub b: SliceHighRisk,
    pub w: SliceHighRisk,
    pub delta: f64,
}

pub(crate) fn slice_high_risk(
    dataset: &Dataset,
    group: &str,
    outcome: Outcome,
    threshold: u8,
) -> Result<SliceHighRisk> {
    let (mut n, mut high_risk) = (0u64, 0u64);
    for r in dataset.group_slice(group).filter(|r| r.outcome == outcome) {
        n += 1;
        if coarsen(r.score, threshold) == RiskClass::HighRisk {
            high_risk += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptySlice(format!(
            "no records with group `{group}` and outcome {outcome}"
        )));
    }
    Ok(SliceHighRisk {
        group: group.to_string(),
        outcome,
        n,
        high_risk,
        prob: high_risk as f64 / n as f64,
    })
}

/// Plug-in estimate of the expected penalty difference between a group-b
/// defendant with outcome `y1` and a group-w defendant with outcome `y2`.
pub fn delta_general(
    dataset: &Dataset,
    policy: &PenaltyPolicy,
    y1: Outcome,
    y2: Outcome,
    group_b: &str,
    group_w: &str,
) -> Result<ImpactReport> {
    let b = slice_high_risk(dataset, group_b, y1, policy.threshold)?;
    let w = slice_high_risk(dataset, group_w, y2, policy.threshold)?;
    Ok(ImpactReport {
        policy: *policy,
        delta: policy.spread() * (b.prob - w.prob),
        b,
        w,
    })
}

fn defined(rate: &Rate, what: &str) -> Result<f64> {
    rate.value().ok_or_else(|| match rate.undefined_reason() {
        Some(reason) => Error::Undefined(format!("{what} ({reason})")),
        None => Error::Undefined(what.to_string()),
    })
}

/// Penalty gap among non-recidivists: `(t_high - t_low) * (FPR_b - FPR_w)`.
pub fn delta_nonrecidivators(
    rates_b: &GroupRates,
    rates_w: &GroupRates,
    policy: &PenaltyPolicy,
) -> Result<f64> {
    let b = defined(&rates_b.fpr, "FPR of group b")?;
    let w = defined(&rates_w.fpr, "FPR of group w")?;
    Ok(policy.spread() * (b - w))
}

/// Penalty gap among recidivists: `(t_high - t_low) * (FNR_w - FNR_b)`.
pub fn delta_recidivators(
    rates_b: &GroupRates,
    rates_w: &GroupRates,
    policy: &PenaltyPolicy,
) -> Result<f64> {
    let b = defined(&rates_b.fnr, "FNR of group b")?;
    let w = defined(&rates_w.fnr, "FNR of group w")?;
    Ok(policy.spread() * (w - b))
}

/// How many times more likely a non-recidivist in group b is to be
/// incarcerated than one in group w, under `t_low = 0, t_high = 1`.
pub fn incarceration_ratio(rates_b: &GroupRates, rates_w: &GroupRates) -> Result<f64> {
    let b = defined(&rates_b.fpr, "FPR of group b")?;
    let w = defined(&rates_w.fpr, "FPR of group w")?;
    if w == 0.0 {
        return Err(Error::Undefined(
            "incarceration ratio: group w has FPR 0".into(),
        ));
    }
    Ok(b / w)
}
