use std::collections::BTreeMap;

use anyhow::{Context, Result};
use serde::Serialize;

use riskaudit::effectsize::{cohort_effect_size, overlap_bound_check, EffectSizeReport};
use riskaudit::fairness::{stratified_calibration, test_fairness_report_with, Stratifier};
use riskaudit::figures::{calibration_rows, histogram_rows, stratified_rows};
use riskaudit::{
    calibration_curve, delta_general, delta_nonrecidivators, delta_recidivators, incarceration_ratio,
    rates_from_matrix, score_histogram, stratified_fpr, CalibrationCurve, ConfidenceLevel, ConfusionMatrix,
    FairnessReport, GroupRates, ImpactReport, Outcome, PenaltyPolicy, StratifiedRates,
};

use super::{emit_single, level, policy, rate_rows, RATE_HEADER};
use crate::args::{AuditArgs, CalibrationArgs, Format, ImpactArgs, StratifyBy};
use crate::meta::{self, Loaded, Metadata};
use crate::output::{self, csv_bytes, num, opt};

#[derive(Debug, Serialize)]
struct GroupEntry {
    group: String,
    rates: GroupRates,
}

#[derive(Debug, Serialize)]
struct ThresholdRates {
    threshold: u8,
    groups: Vec<GroupEntry>,
}

#[derive(Debug, Serialize)]
struct ImpactSection {
    policy: PenaltyPolicy,
    /// Every (y1, y2) pairing of outcomes, b slice first.
    pairs: Vec<ImpactReport>,
    /// Closed forms from the error rates; `None` when a rate is undefined.
    corollary_nonrecidivators: Option<f64>,
    corollary_recidivators: Option<f64>,
    /// FPR_b / FPR_w.
    incarceration_ratio: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EffectSection {
    cohens_d: f64,
    tv_distance: f64,
    overlap_bound: Vec<EffectSizeReport>,
}

#[derive(Debug, Serialize)]
struct AuditBundle {
    metadata: Metadata,
    groups: Vec<GroupEntry>,
    threshold_sensitivity: Vec<ThresholdRates>,
    calibration: FairnessReport,
    impact: ImpactSection,
    effect_size: EffectSection,
    stratified: StratifiedRates,
}

fn group_rates(loaded: &Loaded, threshold: u8, level: ConfidenceLevel) -> Result<Vec<GroupEntry>> {
    loaded
        .groups
        .iter()
        .map(|g| {
            let m = ConfusionMatrix::tally(loaded.cohort.group_slice(g), threshold);
            let rates = rates_from_matrix(&m, level).with_context(|| format!("group `{g}`"))?;
            Ok(GroupEntry {
                group: g.clone(),
                rates,
            })
        })
        .collect()
}

const OUTCOME_PAIRS: [(Outcome, Outcome); 4] = [
    (Outcome::NoRecid, Outcome::NoRecid),
    (Outcome::Recid, Outcome::Recid),
    (Outcome::NoRecid, Outcome::Recid),
    (Outcome::Recid, Outcome::NoRecid),
];

fn impact_section(loaded: &Loaded, policy: PenaltyPolicy, level: ConfidenceLevel) -> Result<ImpactSection> {
    let pairs = OUTCOME_PAIRS
        .iter()
        .map(|&(y1, y2)| Ok(delta_general(&loaded.cohort, &policy, y1, y2, loaded.b(), loaded.w())?))
        .collect::<Result<Vec<_>>>()?;
    let rates = |g: &str| rates_from_matrix(&ConfusionMatrix::tally(loaded.cohort.group_slice(g), policy.threshold()), level);
    let (rb, rw) = (rates(loaded.b())?, rates(loaded.w())?);
    Ok(ImpactSection {
        policy,
        pairs,
        corollary_nonrecidivators: delta_nonrecidivators(&rb, &rw, &policy).ok(),
        corollary_recidivators: delta_recidivators(&rb, &rw, &policy).ok(),
        incarceration_ratio: incarceration_ratio(&rb, &rw).ok(),
    })
}

fn effect_section(loaded: &Loaded, policy: PenaltyPolicy) -> Result<EffectSection> {
    let cohort = cohort_effect_size(&loaded.cohort, loaded.b(), loaded.w())?;
    let overlap_bound = [Outcome::NoRecid, Outcome::Recid]
        .iter()
        .map(|&y| Ok(overlap_bound_check(&loaded.cohort, &policy, y, loaded.b(), loaded.w())?))
        .collect::<Result<Vec<_>>>()?;
    Ok(EffectSection {
        cohens_d: cohort.cohens_d,
        tv_distance: cohort.tv_distance,
        overlap_bound,
    })
}

fn curves(loaded: &Loaded, level: ConfidenceLevel) -> Result<Vec<CalibrationCurve>> {
    loaded
        .groups
        .iter()
        .map(|g| Ok(calibration_curve(&loaded.cohort, g, level)?))
        .collect()
}

fn impact_rows(section: &ImpactSection) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = section
        .pairs
        .iter()
        .map(|p| {
            vec![
                format!("delta_y{}_y{}", p.b.outcome.flag(), p.w.outcome.flag()),
                num(p.delta),
            ]
        })
        .collect();
    rows.push(vec!["corollary_nonrecidivators".into(), opt(section.corollary_nonrecidivators)]);
    rows.push(vec!["corollary_recidivators".into(), opt(section.corollary_recidivators)]);
    rows.push(vec!["incarceration_ratio".into(), opt(section.incarceration_ratio)]);
    rows
}

pub fn audit(args: &AuditArgs) -> Result<()> {
    let loaded = meta::load(&args.data)?;
    let level = level(&args.analysis)?;
    let t = args.analysis.threshold;
    let policy = policy(&args.policy, t)?;

    let groups = group_rates(&loaded, t, level)?;
    let threshold_sensitivity = (t.saturating_sub(1)..=(t + 1).min(10))
        .map(|s| {
            Ok(ThresholdRates {
                threshold: s,
                groups: group_rates(&loaded, s, level)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let curves = curves(&loaded, level)?;
    let calibration = test_fairness_report_with(&curves[0], &curves[1], riskaudit::fairness::DEFAULT_MIN_N);
    let impact = impact_section(&loaded, policy, level)?;
    let effect_size = effect_section(&loaded, policy)?;
    let stratified = stratified_fpr(&loaded.cohort, args.strata.degree, &args.strata.bins, t, level)?;

    let metadata = Metadata::new("audit", args.output.timestamp)
        .with_data(&loaded)
        .param("threshold", t)
        .param("confidence", level)
        .param("t_low", policy.t_low())
        .param("t_high", policy.t_high())
        .param("degree", args.strata.degree)
        .param("bins", &args.strata.bins);
    let bundle = AuditBundle {
        metadata,
        groups,
        threshold_sensitivity,
        calibration,
        impact,
        effect_size,
        stratified,
    };

    match args.output.format {
        Format::Json => output::emit(args.output.out.as_deref(), &output::json_bytes(&bundle)?),
        Format::Csv => {
            let dir = args
                .output
                .out
                .as_deref()
                .ok_or_else(|| crate::usage("--format csv writes several tables and needs --out DIR"))?;
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let rates = bundle
                .threshold_sensitivity
                .iter()
                .flat_map(|tr| tr.groups.iter().flat_map(move |g| rate_rows(&g.group, tr.threshold, &g.rates)));
            let histograms = loaded
                .groups
                .iter()
                .map(|g| Ok(score_histogram(&loaded.cohort, g, None)?))
                .collect::<Result<Vec<_>>>()?;
            let tables = [
                ("rates.csv", csv_bytes(&RATE_HEADER, rates)?),
                ("calibration.csv", output::figure_csv(&calibration_rows(&curves))?),
                ("impact.csv", csv_bytes(&["quantity", "value"], impact_rows(&bundle.impact))?),
                ("stratified.csv", output::figure_csv(&stratified_rows(&bundle.stratified))?),
                ("histogram.csv", output::figure_csv(&histogram_rows(&histograms))?),
                ("metadata.json", output::json_bytes(&bundle.metadata)?),
            ];
            for (name, bytes) in tables {
                output::write_atomic(&dir.join(name), &bytes)?;
            }
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
struct CalibrationDoc {
    metadata: Metadata,
    curves: Vec<CalibrationCurve>,
    report: FairnessReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    strata: Option<BTreeMap<String, Vec<CalibrationCurve>>>,
}

pub fn calibration(args: &CalibrationArgs) -> Result<()> {
    let loaded = meta::load(&args.data)?;
    let level = level(&args.analysis)?;
    let curves = curves(&loaded, level)?;
    let report = test_fairness_report_with(&curves[0], &curves[1], args.min_n);

    let stratifier = match (&args.stratify, &args.stratify_column) {
        (Some(StratifyBy::ChargeDegree), _) => Some(Stratifier::ChargeDegree),
        (None, Some(c)) => Some(Stratifier::Column(c.clone())),
        (None, None) => None,
    };
    let strata = match &stratifier {
        Some(by) => {
            let mut out: BTreeMap<String, Vec<CalibrationCurve>> = BTreeMap::new();
            for g in &loaded.groups {
                for (k, c) in stratified_calibration(&loaded.cohort, g, level, by)? {
                    out.entry(k).or_default().push(c);
                }
            }
            Some(out)
        }
        None => None,
    };

    let metadata = Metadata::new("calibration", args.output.timestamp)
        .with_data(&loaded)
        .param("confidence", level)
        .param("min_n", args.min_n);
    let doc = CalibrationDoc {
        metadata,
        curves,
        report,
        strata,
    };
    emit_single(&args.output, &doc, || output::figure_csv(&calibration_rows(&doc.curves)))
}

#[derive(Debug, Serialize)]
struct ImpactDoc {
    metadata: Metadata,
    #[serde(flatten)]
    impact: ImpactSection,
    effect_size: EffectSection,
}

pub fn impact(args: &ImpactArgs) -> Result<()> {
    let loaded = meta::load(&args.data)?;
    let level = level(&args.analysis)?;
    let policy = policy(&args.policy, args.analysis.threshold)?;
    let metadata = Metadata::new("impact", args.output.timestamp)
        .with_data(&loaded)
        .param("threshold", policy.threshold())
        .param("t_low", policy.t_low())
        .param("t_high", policy.t_high());
    let doc = ImpactDoc {
        metadata,
        impact: impact_section(&loaded, policy, level)?,
        effect_size: effect_section(&loaded, policy)?,
    };
    emit_single(&args.output, &doc, || csv_bytes(&["quantity", "value"], impact_rows(&doc.impact)))
}
