//! Auditing decile risk scores for calibration across groups, for the
//! error-rate imbalance that calibration implies when base rates differ,
//! and for the disparate impact of threshold-based penalty policies.
//!
//! The modules follow the audit pipeline:
//!
//! - [`ingest`]: CSV parsing and cohort filtering
//! - [`rates`]: coarsening, confusion matrices, rates with Wilson intervals
//! - [`fairness`]: calibration curves and the FPR frontier
//! - [`impact`]: penalty gaps under the two-level policy
//! - [`effectsize`]: Cohen's d, total variation, and the overlap bound
//! - [`subgroup`]: FPR by charge degree and prior-count bin
//! - [`simulate`]: calibrated synthetic populations
//! - [`figures`]: long-format series for plotting

pub mod effectsize;
pub mod error;
pub mod fairness;
pub mod figures;
pub mod impact;
pub mod ingest;
pub mod rates;
pub mod simulate;
pub mod subgroup;

pub use effectsize::{
    cohens_d, cohort_effect_size, overlap_bound_check, score_histogram, tv_distance,
    CohortEffectSize, EffectSizeReport, ScoreDistribution,
};
pub use error::{Error, ErrorCategory, Result};
pub use fairness::{
    calibration_curve, impossibility_frontier, test_fairness_report, CalibrationCurve,
    FairnessReport,
};
pub use impact::{
    delta_general, delta_nonrecidivators, delta_recidivators, incarceration_ratio,
    minmax_penalty, ImpactReport, PenaltyPolicy,
};
pub use ingest::{
    filter_cohort, parse_dataset, write_dataset, ChargeDegree, Dataset, Decile, IngestStats,
    Outcome, ParseOptions, Record, Schema,
};
pub use rates::{
    coarsen, confusion_matrix, fpr_from_identity, rates_from_matrix, wilson_interval,
    ConfidenceLevel, ConfusionMatrix, GroupRates, Rate, RiskClass, DEFAULT_THRESHOLD,
};
pub use simulate::{generate_population, monte_carlo_delta, SimConfig};
pub use subgroup::{stratified_fpr, DegreeFilter, PriorBins, StratifiedRates};

/// Group labels of the default two-race cohort, in (b, w) order.
pub const DEFAULT_GROUPS: [&str; 2] = ["African-American", "Caucasian"];
