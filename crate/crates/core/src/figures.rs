//! Long-format data series for the three audit figures: calibration by
//! decile, stratified false positive rates, and score histograms.

use serde::Serialize;

use crate::effectsize::ScoreDistribution;
use crate::fairness::CalibrationCurve;
use crate::subgroup::StratifiedRates;

/// One plotted point: `series` is the group label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureRow {
    pub series: String,
    pub x: String,
    pub y: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n: u64,
}

/// Recidivism rate per decile, one series per curve.
pub fn calibration_rows(curves: &[CalibrationCurve]) -> Vec<FigureRow> {
    curves
        .iter()
        .flat_map(|c| {
            c.points.iter().map(|p| FigureRow {
                series: c.group.clone(),
                x: p.score.to_string(),
                y: Some(p.rate),
                ci_low: Some(p.ci_low),
                ci_high: Some(p.ci_high),
                n: p.n,
            })
        })
        .collect()
}

/// FPR per prior-count bin; `n` is the number of non-recidivists.
/// Undefined cells keep their row with empty values.
pub fn stratified_rows(rates: &StratifiedRates) -> Vec<FigureRow> {
    let mut groups: Vec<&str> = rates.cells.iter().map(|c| c.group.as_str()).collect();
    groups.dedup();
    groups.sort_unstable();
    groups.dedup();
    groups
        .into_iter()
        .flat_map(|g| {
            rates.cells.iter().filter(move |c| c.group == g).map(|c| {
                let p = c.fpr.proportion();
                FigureRow {
                    series: c.group.clone(),
                    x: c.bin.to_string(),
                    y: p.map(|p| p.value),
                    ci_low: p.map(|p| p.ci_low),
                    ci_high: p.map(|p| p.ci_high),
                    n: c.matrix.negatives(),
                }
            })
        })
        .collect()
}

/// Decile masses, one series per histogram; `n` is the decile count.
pub fn histogram_rows(histograms: &[ScoreDistribution]) -> Vec<FigureRow> {
    histograms
        .iter()
        .flat_map(|h| {
            h.support
                .iter()
                .zip(h.mass.iter().zip(&h.counts))
                .map(|(s, (m, c))| FigureRow {
                    series: h.group.clone(),
                    x: s.to_string(),
                    y: Some(*m),
                    ci_low: None,
                    ci_high: None,
                    n: *c,
                })
        })
        .collect()
}
