//! Calibration (test fairness) by decile, and the error-rate frontier that
//! calibration forces when base rates differ.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{ChargeDegree, Dataset, Decile, Record};
use crate::rates::{fpr_from_identity, ConfidenceLevel, Proportion};

/// Deciles with fewer observations than this are flagged low-confidence.
pub const DEFAULT_MIN_N: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationPoint {
    pub score: Decile,
    pub n: u64,
    pub recidivists: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl CalibrationPoint {
    fn proportion(&self) -> Proportion {
        Proportion {
            value: self.rate,
            ci_low: self.ci_low,
            ci_high: self.ci_high,
            successes: self.recidivists,
            trials: self.n,
        }
    }
}

/// Observed recidivism rate at each decile for one group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationCurve {
    pub group: String,
    pub level: ConfidenceLevel,
    pub points: Vec<CalibrationPoint>,
    /// Deciles with no records in this group.
    pub missing: Vec<Decile>,
}

impl CalibrationCurve {
    pub fn point(&self, score: Decile) -> Option<&CalibrationPoint> {
        self.points.iter().find(|p| p.score == score)
    }

    pub fn n(&self) -> u64 {
        self.points.iter().map(|p| p.n).sum()
    }
}

fn curve_from<'a>(
    group: &str,
    records: impl Iterator<Item = &'a Record>,
    level: ConfidenceLevel,
) -> Result<CalibrationCurve> {
    let mut n = [0u64; 10];
    let mut k = [0u64; 10];
    for r in records {
        n[r.score.index()] += 1;
        k[r.score.index()] += u64::from(r.outcome.flag());
    }
    let mut points = Vec::new();
    let mut missing = Vec::new();
    for s in Decile::all() {
        let (trials, successes) = (n[s.index()], k[s.index()]);
        if trials == 0 {
            missing.push(s);
            continue;
        }
        let p = Proportion::new(successes, trials, level)?;
        points.push(CalibrationPoint {
            score: s,
            n: trials,
            recidivists: successes,
            rate: p.value,
            ci_low: p.ci_low,
            ci_high: p.ci_high,
        });
    }
    Ok(CalibrationCurve {
        group: group.to_string(),
        level,
        points,
        missing,
    })
}

pub fn calibration_curve(
    dataset: &Dataset,
    group: &str,
    level: ConfidenceLevel,
) -> Result<CalibrationCurve> {
    if !dataset.contains_group(group) {
        return Err(Error::EmptySlice(format!("group `{group}` has no records")));
    }
    curve_from(group, dataset.group_slice(group), level)
}

/// Covariate used to split a calibration curve into strata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stratifier {
    ChargeDegree,
    /// A passthrough column, by name.
    Column(String),
}

impl Stratifier {
    fn key(&self, r: &Record) -> String {
        match self {
            Stratifier::ChargeDegree => match r.charge_degree {
                ChargeDegree::Felony => "felony".into(),
                ChargeDegree::Misdemeanor => "misdemeanor".into(),
            },
            Stratifier::Column(c) => r.extra.get(c).cloned().unwrap_or_default(),
        }
    }
}

/// Calibration curves for one group within each stratum of a covariate,
/// keyed by stratum value.
pub fn stratified_calibration(
    dataset: &Dataset,
    group: &str,
    level: ConfidenceLevel,
    by: &Stratifier,
) -> Result<BTreeMap<String, CalibrationCurve>> {
    if !dataset.contains_group(group) {
        return Err(Error::EmptySlice(format!("group `{group}` has no records")));
    }
    let mut strata: BTreeMap<String, Vec<&Record>> = BTreeMap::new();
    for r in dataset.group_slice(group) {
        strata.entry(by.key(r)).or_default().push(r);
    }
    strata
        .into_iter()
        .map(|(k, rs)| Ok((k, curve_from(group, rs.into_iter(), level)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecileStatus {
    /// Both groups observed and the intervals overlap.
    Overlapping,
    /// Both groups observed and the intervals are disjoint.
    Disjoint,
    /// Only one group has records at this decile.
    Incomparable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecileComparison {
    pub score: Decile,
    pub status: DecileStatus,
    pub rate_b: Option<f64>,
    pub rate_w: Option<f64>,
    /// `rate_b - rate_w` when both are present.
    pub gap: Option<f64>,
    pub n_b: u64,
    pub n_w: u64,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessReport {
    pub group_b: String,
    pub group_w: String,
    pub level: ConfidenceLevel,
    pub min_n: u64,
    pub deciles: Vec<DecileComparison>,
    pub non_overlapping: usize,
    pub incomparable: usize,
    pub low_confidence: usize,
}

pub fn test_fairness_report(curve_b: &CalibrationCurve, curve_w: &CalibrationCurve) -> FairnessReport {
    test_fairness_report_with(curve_b, curve_w, DEFAULT_MIN_N)
}

/// Per-decile comparison of two calibration curves. A decile is
/// low-confidence when either side has fewer than `min_n` records.
pub fn test_fairness_report_with(
    curve_b: &CalibrationCurve,
    curve_w: &CalibrationCurve,
    min_n: u64,
) -> FairnessReport {
    if curve_b.level != curve_w.level {
        log::warn!(
            "comparing curves at different confidence levels ({} vs {})",
            curve_b.level.get(),
            curve_w.level.get()
        );
    }
    let mut deciles = Vec::new();
    for s in Decile::all() {
        let (pb, pw) = (curve_b.point(s), curve_w.point(s));
        let status = match (pb, pw) {
            (None, None) => continue,
            (Some(b), Some(w)) if b.proportion().overlaps(&w.proportion()) => {
                DecileStatus::Overlapping
            }
            (Some(_), Some(_)) => DecileStatus::Disjoint,
            _ => DecileStatus::Incomparable,
        };
        let n_b = pb.map_or(0, |p| p.n);
        let n_w = pw.map_or(0, |p| p.n);
        deciles.push(DecileComparison {
            score: s,
            status,
            rate_b: pb.map(|p| p.rate),
            rate_w: pw.map(|p| p.rate),
            gap: pb.zip(pw).map(|(b, w)| b.rate - w.rate),
            n_b,
            n_w,
            low_confidence: n_b < min_n || n_w < min_n,
        });
    }
    let count = |st: DecileStatus| deciles.iter().filter(|d| d.status == st).count();
    FairnessReport {
        group_b: curve_b.group.clone(),
        group_w: curve_w.group.clone(),
        level: curve_b.level,
        min_n,
        non_overlapping: count(DecileStatus::Disjoint),
        incomparable: count(DecileStatus::Incomparable),
        low_confidence: deciles.iter().filter(|d| d.low_confidence).count(),
        deciles,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontierRow {
    pub fnr: f64,
    pub fpr_b: f64,
    pub fpr_w: f64,
    pub gap: f64,
    pub infeasible_b: bool,
    pub infeasible_w: bool,
}

/// FNR grid from 0 to 1 in steps of 0.05.
pub fn default_fnr_grid() -> Vec<f64> {
    (0..=20).map(|i| f64::from(i) / 20.0).collect()
}

/// FPR each group must have, at a shared PPV and FNR, given its prevalence.
pub fn impossibility_frontier(
    p_b: f64,
    p_w: f64,
    ppv: f64,
    fnr_grid: &[f64],
) -> Result<Vec<FrontierRow>> {
    fnr_grid
        .iter()
        .map(|&fnr| {
            let b = fpr_from_identity(p_b, ppv, fnr)?;
            let w = fpr_from_identity(p_w, ppv, fnr)?;
            Ok(FrontierRow {
                fnr,
                fpr_b: b.value,
                fpr_w: w.value,
                gap: b.value - w.value,
                infeasible_b: b.infeasible,
                infeasible_w: w.infeasible,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Outcome, Schema};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rec(group: &str, score: u8, outcome: u8) -> Record {
        Record {
            id: String::new(),
            group: group.into(),
            score: Decile::new(score).unwrap(),
            outcome: Outcome::from_flag(outcome).unwrap(),
            charge_degree: if score.is_multiple_of(2) {
                ChargeDegree::Felony
            } else {
                ChargeDegree::Misdemeanor
            },
            priors: 0,
            extra: Default::default(),
        }
    }

    fn ds(records: Vec<Record>) -> Dataset {
        Dataset::new(records, Schema::default())
    }

    #[test]
    fn decile_point_is_direct_proportion() {
        let d = ds(vec![rec("b", 5, 1), rec("b", 5, 1), rec("b", 5, 0), rec("b", 5, 0)]);
        let c = calibration_curve(&d, "b", ConfidenceLevel::default()).unwrap();
        assert_eq!(c.points.len(), 1);
        let p = &c.points[0];
        assert_eq!((p.score.get(), p.rate, p.n), (5, 0.5, 4));
        assert!(p.ci_low < 0.5 && p.ci_high > 0.5);
        assert_eq!(c.missing.len(), 9);
    }

    #[test]
    fn all_recidivists_rate_one() {
        let d = ds((1..=10).map(|s| rec("b", s, 1)).collect());
        let c = calibration_curve(&d, "b", ConfidenceLevel::default()).unwrap();
        assert!(c.points.iter().all(|p| p.rate == 1.0 && p.ci_high == 1.0));
        assert_eq!(c.n(), 10);
    }

    #[test]
    fn absent_group_is_named() {
        let d = ds(vec![rec("b", 5, 1)]);
        let err = calibration_curve(&d, "w", ConfidenceLevel::default()).unwrap_err();
        assert!(err.to_string().contains("`w`"));
    }

    #[test]
    fn identical_curves_have_zero_gaps() {
        let d = ds((1..=10).flat_map(|s| [rec("b", s, 1), rec("b", s, 0)]).collect());
        let c = calibration_curve(&d, "b", ConfidenceLevel::default()).unwrap();
        let r = test_fairness_report(&c, &c);
        assert_eq!(r.deciles.len(), 10);
        assert!(r.deciles.iter().all(|x| x.gap == Some(0.0)));
        assert_eq!(r.non_overlapping, 0);
        assert_eq!(r.low_confidence, 10);
    }

    #[test]
    fn disjoint_intervals_are_flagged() {
        let mut rs = Vec::new();
        for _ in 0..200 {
            rs.push(rec("b", 7, 1));
            rs.push(rec("w", 7, 0));
            rs.push(rec("b", 3, 1));
            rs.push(rec("w", 3, 1));
        }
        rs.push(rec("b", 9, 1));
        let d = ds(rs);
        let lvl = ConfidenceLevel::default();
        let r = test_fairness_report(
            &calibration_curve(&d, "b", lvl).unwrap(),
            &calibration_curve(&d, "w", lvl).unwrap(),
        );
        let at = |s: u8| r.deciles.iter().find(|x| x.score.get() == s).unwrap();
        assert_eq!(at(7).status, DecileStatus::Disjoint);
        assert_eq!(at(7).gap, Some(1.0));
        assert_eq!(at(3).status, DecileStatus::Overlapping);
        assert_eq!(at(9).status, DecileStatus::Incomparable);
        assert_eq!(at(9).gap, None);
        assert_eq!((r.non_overlapping, r.incomparable), (1, 1));
    }

    #[test]
    fn stratified_curves_partition_the_group() {
        let d = ds((1..=10).flat_map(|s| [rec("b", s, 1), rec("b", s, 0), rec("w", s, 0)]).collect());
        let strata =
            stratified_calibration(&d, "b", ConfidenceLevel::default(), &Stratifier::ChargeDegree)
                .unwrap();
        assert_eq!(strata.keys().collect::<Vec<_>>(), vec!["felony", "misdemeanor"]);
        assert_eq!(strata.values().map(CalibrationCurve::n).sum::<u64>(), 20);
    }

    #[test]
    fn frontier_examples() {
        let grid = default_fnr_grid();
        assert_eq!(grid.len(), 21);
        for row in impossibility_frontier(0.45, 0.45, 0.6, &grid).unwrap() {
            assert_eq!(row.gap, 0.0);
        }
        let rows = impossibility_frontier(0.51, 0.39, 0.5, &[0.5, 1.0]).unwrap();
        let expected = (0.51 / 0.49) / (0.39 / 0.61);
        assert_abs_diff_eq!(rows[0].fpr_b / rows[0].fpr_w, expected, epsilon = 1e-12);
        assert!(rows[0].gap > 0.0);
        assert_eq!((rows[1].fpr_b, rows[1].fpr_w, rows[1].gap), (0.0, 0.0, 0.0));
        assert!(impossibility_frontier(1.0, 0.3, 0.5, &grid).is_err());
    }

    proptest! {
        #[test]
        fn higher_prevalence_forces_higher_fpr(
            p_w in 0.01f64..0.98, dp in 0.001f64..0.5, ppv in 0.01f64..0.99, fnr in 0.0f64..0.999
        ) {
            let p_b = (p_w + dp).min(0.999);
            prop_assume!(p_b > p_w);
            let row = impossibility_frontier(p_b, p_w, ppv, &[fnr]).unwrap()[0];
            prop_assert!(row.fpr_b > row.fpr_w);
        }
    }
}
