//! Coarsened risk classes, confusion matrices and the rates derived from
//! them.
//!
//! A decile score is coarsened to [`RiskClass::HighRisk`] when it is
//! strictly greater than the threshold. Rates are reported as [`Rate`]
//! values: either a proportion with a Wilson score interval, or an explicit
//! undefined marker when the denominator is zero.

use std::fmt;
use std::ops::Add;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, Decile, Record};

/// Threshold used when none is given: high risk means decile > 4.
pub const DEFAULT_THRESHOLD: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskClass {
    LowRisk,
    HighRisk,
}

pub fn coarsen(score: Decile, threshold: u8) -> RiskClass {
    if score.get() > threshold {
        RiskClass::HighRisk
    } else {
        RiskClass::LowRisk
    }
}

/// Two-sided confidence level in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub fn new(level: f64) -> Result<Self> {
        if level > 0.0 && level < 1.0 {
            Ok(ConfidenceLevel(level))
        } else {
            Err(Error::Domain(format!(
                "confidence level must be in (0, 1), got {level}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Standard normal quantile for the two-sided interval.
    pub fn z(self) -> f64 {
        Normal::standard().inverse_cdf(0.5 + self.0 / 2.0)
    }
}

impl Default for ConfidenceLevel {
    fn default() -> Self {
        ConfidenceLevel(0.95)
    }
}

impl Serialize for ConfidenceLevel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
pub struct ConfusionMatrix {
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
}

impl ConfusionMatrix {
    pub fn new(tn: u64, fp: u64, fn_: u64, tp: u64) -> Self {
        ConfusionMatrix { tn, fp, fn_, tp }
    }

    /// Count records into cells. Empty input gives the zero matrix.
    pub fn tally<'a, I>(records: I, threshold: u8) -> Self
    where
        I: IntoIterator<Item = &'a Record>,
    {
        let mut m = ConfusionMatrix::default();
        for r in records {
            m.record(r, threshold);
        }
        m
    }

    pub fn record(&mut self, r: &Record, threshold: u8) {
        match (r.outcome.is_recid(), coarsen(r.score, threshold)) {
            (false, RiskClass::LowRisk) => self.tn += 1,
            (false, RiskClass::HighRisk) => self.fp += 1,
            (true, RiskClass::LowRisk) => self.fn_ += 1,
            (true, RiskClass::HighRisk) => self.tp += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn positives(&self) -> u64 {
        self.fn_ + self.tp
    }

    pub fn predicted_high(&self) -> u64 {
        self.fp + self.tp
    }

    pub fn predicted_low(&self) -> u64 {
        self.tn + self.fn_
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(self, o: ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tp: self.tp + o.tp,
        }
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = ConfusionMatrix>>(iter: I) -> Self {
        iter.fold(ConfusionMatrix::default(), Add::add)
    }
}

pub fn confusion_matrix(dataset: &Dataset, threshold: u8) -> Result<ConfusionMatrix> {
    if dataset.is_empty() {
        return Err(Error::EmptySlice(
            "cannot build a confusion matrix from an empty dataset".into(),
        ));
    }
    Ok(ConfusionMatrix::tally(dataset, threshold))
}

/// Why a rate has no value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UndefinedReason {
    EmptyStratum,
    NoNegatives,
    NoPositives,
    NoHighRisk,
    NoLowRisk,
}

impl fmt::Display for UndefinedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UndefinedReason::EmptyStratum => "empty stratum",
            UndefinedReason::NoNegatives => "no negatives",
            UndefinedReason::NoPositives => "no positives",
            UndefinedReason::NoHighRisk => "no high-risk predictions",
            UndefinedReason::NoLowRisk => "no low-risk predictions",
        })
    }
}

impl Serialize for UndefinedReason {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A proportion `successes / trials` with its confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub successes: u64,
    pub trials: u64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64, level: ConfidenceLevel) -> Result<Self> {
        let (ci_low, ci_high) = wilson_interval(successes, trials, level)?;
        Ok(Proportion {
            value: successes as f64 / trials as f64,
            ci_low,
            ci_high,
            successes,
            trials,
        })
    }

    pub fn overlaps(&self, other: &Proportion) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Rate {
    Defined(Proportion),
    Undefined { undefined: UndefinedReason },
}

impl Rate {
    /// `successes / trials`, or undefined with `reason` when `trials == 0`.
    pub fn from_counts(
        successes: u64,
        trials: u64,
        level: ConfidenceLevel,
        reason: UndefinedReason,
    ) -> Result<Self> {
        if trials == 0 {
            Ok(Rate::Undefined { undefined: reason })
        } else {
            Proportion::new(successes, trials, level).map(Rate::Defined)
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.proportion().map(|p| p.value)
    }

    pub fn proportion(&self) -> Option<&Proportion> {
        match self {
            Rate::Defined(p) => Some(p),
            Rate::Undefined { .. } => None,
        }
    }

    pub fn undefined_reason(&self) -> Option<UndefinedReason> {
        match self {
            Rate::Defined(_) => None,
            Rate::Undefined { undefined } => Some(*undefined),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRates {
    pub n: u64,
    pub level: ConfidenceLevel,
    pub matrix: ConfusionMatrix,
    pub prevalence: Rate,
    pub ppv: Rate,
    pub npv: Rate,
    pub fpr: Rate,
    pub fnr: Rate,
}

pub fn rates_from_matrix(m: &ConfusionMatrix, level: ConfidenceLevel) -> Result<GroupRates> {
    let n = m.total();
    if n == 0 {
        return Err(Error::EmptySlice("confusion matrix has no observations".into()));
    }
    use UndefinedReason::*;
    Ok(GroupRates {
        n,
        level,
        matrix: *m,
        prevalence: Rate::from_counts(m.positives(), n, level, EmptyStratum)?,
        ppv: Rate::from_counts(m.tp, m.predicted_high(), level, NoHighRisk)?,
        npv: Rate::from_counts(m.tn, m.predicted_low(), level, NoLowRisk)?,
        fpr: Rate::from_counts(m.fp, m.negatives(), level, NoNegatives)?,
        fnr: Rate::from_counts(m.fn_, m.positives(), level, NoPositives)?,
    })
}

/// Wilson score interval for a binomial proportion.
///
/// The bounds are pinned to 0 when there are no successes and to 1 when
/// every trial succeeds, and always bracket the point estimate.
pub fn wilson_interval(successes: u64, trials: u64, level: ConfidenceLevel) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::Domain("Wilson interval needs at least one trial".into()));
    }
    if successes > trials {
        return Err(Error::Domain(format!(
            "successes ({successes}) exceed trials ({trials})"
        )));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = level.z();
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = if successes == 0 { 0.0 } else { (centre - half).clamp(0.0, p) };
    let high = if successes == trials { 1.0 } else { (centre + half).clamp(p, 1.0) };
    Ok((low, high))
}

/// False positive rate implied by prevalence, PPV and FNR:
/// `p / (1 - p) * (1 - ppv) / ppv * (1 - fnr)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityFpr {
    pub value: f64,
    /// The inputs cannot come from any confusion matrix (`value > 1`).
    pub infeasible: bool,
}

pub fn fpr_from_identity(prevalence: f64, ppv: f64, fnr: f64) -> Result<IdentityFpr> {
    let open_unit = |x: f64| x > 0.0 && x < 1.0;
    if !open_unit(prevalence) {
        return Err(Error::Domain(format!("prevalence must be in (0, 1), got {prevalence}")));
    }
    if !open_unit(ppv) {
        return Err(Error::Domain(format!("PPV must be in (0, 1), got {ppv}")));
    }
    if !(0.0..=1.0).contains(&fnr) {
        return Err(Error::Domain(format!("FNR must be in [0, 1], got {fnr}")));
    }
    let value = prevalence / (1.0 - prevalence) * ((1.0 - ppv) / ppv) * (1.0 - fnr);
    Ok(IdentityFpr {
        value,
        infeasible: value > 1.0,
    })
}

/// Directly computed FPR next to the identity's value for one matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityComparison {
    pub direct_fpr: f64,
    pub identity_fpr: f64,
    pub abs_error: f64,
}

/// Compare the identity against the direct FPR, when all of prevalence,
/// PPV, FNR and FPR are defined and prevalence and PPV lie in (0, 1).
pub fn identity_comparison(m: &ConfusionMatrix) -> Option<IdentityComparison> {
    let n = m.total();
    if n == 0 || m.negatives() == 0 || m.positives() == 0 || m.predicted_high() == 0 {
        return None;
    }
    let prevalence = m.positives() as f64 / n as f64;
    let ppv = m.tp as f64 / m.predicted_high() as f64;
    let fnr = m.fn_ as f64 / m.positives() as f64;
    let direct_fpr = m.fp as f64 / m.negatives() as f64;
    let identity_fpr = fpr_from_identity(prevalence, ppv, fnr).ok()?.value;
    Some(IdentityComparison {
        direct_fpr,
        identity_fpr,
        abs_error: (identity_fpr - direct_fpr).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentitySlice {
    pub group: String,
    pub threshold: u8,
    pub matrix: ConfusionMatrix,
    /// `None` when some rate is undefined or prevalence/PPV sits on 0 or 1.
    pub comparison: Option<IdentityComparison>,
}

/// Identity check for every `(group, threshold)` pair in `thresholds`.
pub fn identity_sweep(
    dataset: &Dataset,
    thresholds: impl IntoIterator<Item = u8> + Clone,
) -> Vec<IdentitySlice> {
    let mut out = Vec::new();
    for group in dataset.groups() {
        for threshold in thresholds.clone() {
            let matrix = ConfusionMatrix::tally(dataset.group_slice(&group), threshold);
            out.push(IdentitySlice {
                group: group.clone(),
                threshold,
                matrix,
                comparison: identity_comparison(&matrix),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RandomIdentitySummary {
    pub requested: u64,
    pub checked: u64,
    pub max_abs_error: f64,
}

/// Identity check over `count` random confusion matrices with cells in
/// `0..=max_cell`, drawn from ChaCha20 seeded with `seed`.
pub fn random_identity_check(count: u64, max_cell: u64, seed: u64) -> RandomIdentitySummary {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut max_abs_error: f64 = 0.0;
    for _ in 0..count {
        let mut cell = || rng.random_range(0..=max_cell);
        let m = ConfusionMatrix::new(cell(), cell(), cell(), cell());
        if let Some(c) = identity_comparison(&m) {
            checked += 1;
            max_abs_error = max_abs_error.max(c.abs_error);
        }
    }
    RandomIdentitySummary {
        requested: count,
        checked,
        max_abs_error,
    }
}
