//! Synthetic populations that are calibrated by construction.
//!
//! Every group shares one recidivism curve `q(s) = P(Y = 1 | S = s)`. Groups
//! differ only in how scores are distributed: each group's decile masses are
//! an exponential tilt of a shared base distribution,
//! `m(s) ∝ base(s) · exp(tilt · (s - 5.5))`, with the tilt solved so that
//! `Σ m(s) q(s)` equals the group's target prevalence.
//!
//! Random streams: replicate `r` draws from `ChaCha20Rng::seed_from_u64(seed)`
//! with `set_stream(r)`. Within a replicate, groups are drawn in config
//! order; each record draws its decile (`WeightedIndex` over the masses)
//! then its outcome (`Bernoulli(q(s))`).

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impact::{delta_general, PenaltyPolicy};
use crate::ingest::{ChargeDegree, Dataset, Decile, Outcome, Record, Schema};
use crate::rates::{fpr_from_identity, rates_from_matrix, ConfidenceLevel, ConfusionMatrix};

pub const DEFAULT_SEED: u64 = 20_161_017;
const PREVALENCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimGroup {
    pub label: String,
    pub n: u64,
    pub prevalence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    /// `q(s)` for deciles 1..=10, shared by every group.
    pub recid_prob: Vec<f64>,
    /// Untilted decile distribution, normalised internally.
    pub base_mass: Vec<f64>,
    pub groups: Vec<SimGroup>,
}

impl Default for SimConfig {
    /// Linear `q` from 0.1 to 0.9, uniform base, prevalences 0.51 and 0.39,
    /// 100 000 records per group.
    fn default() -> Self {
        SimConfig {
            seed: DEFAULT_SEED,
            recid_prob: (0..10).map(|i| 0.1 + 0.8 * f64::from(i) / 9.0).collect(),
            base_mass: vec![0.1; 10],
            groups: vec![
                SimGroup {
                    label: "African-American".into(),
                    n: 100_000,
                    prevalence: 0.51,
                },
                SimGroup {
                    label: "Caucasian".into(),
                    n: 100_000,
                    prevalence: 0.39,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolvedGroup {
    pub label: String,
    pub n: u64,
    pub target_prevalence: f64,
    pub implied_prevalence: f64,
    pub tilt: f64,
    pub mass: [f64; 10],
}

/// A validated config with per-group score masses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolvedModel {
    pub recid_prob: [f64; 10],
    pub groups: Vec<SolvedGroup>,
}

fn to_array(v: &[f64], what: &str) -> Result<[f64; 10]> {
    v.try_into()
        .map_err(|_| Error::Config(format!("`{what}` must have 10 entries, got {}", v.len())))
}

fn tilted(base: &[f64; 10], tilt: f64) -> [f64; 10] {
    let logw: Vec<f64> = base
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            if b > 0.0 {
                b.ln() + tilt * (i as f64 - 4.5)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut out = [0.0; 10];
    for (o, x) in out.iter_mut().zip(&w) {
        *o = x / total;
    }
    out
}

fn prevalence_of(mass: &[f64; 10], q: &[f64; 10]) -> f64 {
    mass.iter().zip(q).map(|(m, q)| m * q).sum()
}

impl SimConfig {
    pub fn solve(&self) -> Result<SolvedModel> {
        let q = to_array(&self.recid_prob, "recid_prob")?;
        if q.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("`recid_prob` entries must lie in [0, 1]".into()));
        }
        if q.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("`recid_prob` must be nondecreasing in the decile".into()));
        }
        let base = to_array(&self.base_mass, "base_mass")?;
        if base.iter().any(|b| !b.is_finite() || *b < 0.0) || base.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config(
                "`base_mass` entries must be non-negative with a positive sum".into(),
            ));
        }
        if self.groups.is_empty() {
            return Err(Error::Config("`groups` must not be empty".into()));
        }
        let support: Vec<f64> = (0..10).filter(|&i| base[i] > 0.0).map(|i| q[i]).collect();
        let q_min = support.iter().copied().fold(f64::INFINITY, f64::min);
        let q_max = support.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let mut groups = Vec::with_capacity(self.groups.len());
        for (i, g) in self.groups.iter().enumerate() {
            if g.label.is_empty() {
                return Err(Error::Config(format!("groups[{i}].label must not be empty")));
            }
            if self.groups[..i].iter().any(|o| o.label == g.label) {
                return Err(Error::Config(format!("duplicate group label `{}`", g.label)));
            }
            if g.n == 0 {
                return Err(Error::Config(format!("groups[{i}].n must be positive")));
            }
            let tilt = solve_tilt(&base, &q, g.prevalence, q_min, q_max)
                .map_err(|msg| Error::Config(format!("groups[{i}].prevalence: {msg}")))?;
            let mass = tilted(&base, tilt);
            groups.push(SolvedGroup {
                label: g.label.clone(),
                n: g.n,
                target_prevalence: g.prevalence,
                implied_prevalence: prevalence_of(&mass, &q),
                tilt,
                mass,
            });
        }
        Ok(SolvedModel {
            recid_prob: q,
            groups,
        })
    }
}

fn solve_tilt(
    base: &[f64; 10],
    q: &[f64; 10],
    target: f64,
    q_min: f64,
    q_max: f64,
) -> std::result::Result<f64, String> {
    if !target.is_finite() {
        return Err("must be a finite number".into());
    }
    if q_max == q_min {
        return if (target - q_min).abs() <= PREVALENCE_TOLERANCE {
            Ok(0.0)
        } else {
            Err(format!(
                "{target} is unattainable: recid_prob is constant at {q_min} on the base support"
            ))
        };
    }
    if target <= q_min || target >= q_max {
        return Err(format!(
            "{target} lies outside the attainable range ({q_min}, {q_max})"
        ));
    }
    let f = |t: f64| prevalence_of(&tilted(base, t), q) - target;
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    for _ in 0..60 {
        if f(lo) <= 0.0 {
            break;
        }
        lo *= 2.0;
    }
    for _ in 0..60 {
        if f(hi) >= 0.0 {
            break;
        }
        hi *= 2.0;
    }
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return Err(format!("{target} could not be bracketed by a finite tilt"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tilt = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    if f(tilt).abs() > PREVALENCE_TOLERANCE {
        return Err(format!(
            "{target} is too close to the edge of the attainable range ({q_min}, {q_max})"
        ));
    }
    Ok(tilt)
}

impl SolvedModel {
    pub fn group_index(&self, label: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.label == label)
    }

    fn outcome_weight(&self, s: usize, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::Recid => self.recid_prob[s],
            Outcome::NoRecid => 1.0 - self.recid_prob[s],
        }
    }

    /// Exact `P(S > threshold | Y = outcome, group)` under the model.
    pub fn high_risk_prob(&self, group: usize, outcome: Outcome, threshold: u8) -> Option<f64> {
        let mass = &self.groups.get(group)?.mass;
        let (mut num, mut den) = (0.0, 0.0);
        for (s, m) in mass.iter().enumerate() {
            let w = m * self.outcome_weight(s, outcome);
            den += w;
            if s + 1 > usize::from(threshold) {
                num += w;
            }
        }
        (den > 0.0).then(|| num / den)
    }

    /// Exact `P(Y = 1 | S > threshold, group)` under the model.
    pub fn ppv(&self, group: usize, threshold: u8) -> Option<f64> {
        let mass = &self.groups.get(group)?.mass;
        let (mut num, mut den) = (0.0, 0.0);
        for (s, m) in mass.iter().enumerate().skip(usize::from(threshold)) {
            num += m * self.recid_prob[s];
            den += m;
        }
        (den > 0.0).then(|| num / den)
    }

    pub fn fpr(&self, group: usize, threshold: u8) -> Option<f64> {
        self.high_risk_prob(group, Outcome::NoRecid, threshold)
    }

    pub fn fnr(&self, group: usize, threshold: u8) -> Option<f64> {
        self.high_risk_prob(group, Outcome::Recid, threshold).map(|p| 1.0 - p)
    }

    /// Population value of the MinMax penalty gap between groups 0 and 1.
    pub fn analytic_delta(&self, policy: &PenaltyPolicy, y1: Outcome, y2: Outcome) -> Option<f64> {
        let b = self.high_risk_prob(0, y1, policy.threshold())?;
        let w = self.high_risk_prob(1, y2, policy.threshold())?;
        Some(policy.spread() * (b - w))
    }

    /// Draw one replicate population.
    pub fn generate(&self, seed: u64, replicate: u64) -> Result<Dataset> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(replicate);
        let outcome_draws: Vec<Bernoulli> = self
            .recid_prob
            .iter()
            .map(|&q| Bernoulli::new(q).map_err(|e| Error::Config(e.to_string())))
            .collect::<Result<_>>()?;
        let total: u64 = self.groups.iter().map(|g| g.n).sum();
        let mut records = Vec::with_capacity(total as usize);
        for g in &self.groups {
            let scores =
                WeightedIndex::new(g.mass).map_err(|e| Error::Config(format!("{}: {e}", g.label)))?;
            for i in 0..g.n {
                let s = scores.sample(&mut rng);
                let y = outcome_draws[s].sample(&mut rng);
                records.push(Record {
                    id: format!("{}-{i}", g.label),
                    group: g.label.clone(),
                    score: Decile::new(s as u8 + 1).expect("index in 0..10"),
                    outcome: if y { Outcome::Recid } else { Outcome::NoRecid },
                    charge_degree: ChargeDegree::Misdemeanor,
                    priors: 0,
                    extra: Default::default(),
                });
            }
        }
        Ok(Dataset::new(records, Schema::default()))
    }
}

/// Replicate 0 of the configured population.
pub fn generate_population(cfg: &SimConfig) -> Result<Dataset> {
    cfg.solve()?.generate(cfg.seed, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloDelta {
    pub y1: Outcome,
    pub y2: Outcome,
    pub reps: u64,
    pub mean: f64,
    /// Standard error of the mean; `None` for a single replicate.
    pub std_error: Option<f64>,
    pub analytic: Option<f64>,
    pub per_rep: Vec<f64>,
}

impl MonteCarloDelta {
    fn from_reps(y1: Outcome, y2: Outcome, per_rep: Vec<f64>, analytic: Option<f64>) -> Self {
        let reps = per_rep.len() as u64;
        let mean = per_rep.iter().sum::<f64>() / reps as f64;
        let std_error = (reps >= 2).then(|| {
            let ss: f64 = per_rep.iter().map(|d| (d - mean) * (d - mean)).sum();
            (ss / (reps - 1) as f64).sqrt() / (reps as f64).sqrt()
        });
        MonteCarloDelta {
            y1,
            y2,
            reps,
            mean,
            std_error,
            analytic,
            per_rep,
        }
    }

    /// `(mean - analytic) / std_error`, when both exist and the SE is positive.
    pub fn z_score(&self) -> Option<f64> {
        let se = self.std_error.filter(|s| *s > 0.0)?;
        Some((self.mean - self.analytic?) / se)
    }
}

/// Monte Carlo penalty gaps between groups 0 and 1 for several outcome
/// pairs, sharing replicates. Replicates run in parallel; results are
/// stored per replicate and reduced in replicate order.
pub fn monte_carlo_deltas(
    cfg: &SimConfig,
    policy: &PenaltyPolicy,
    pairs: &[(Outcome, Outcome)],
    reps: u64,
) -> Result<Vec<MonteCarloDelta>> {
    if reps == 0 {
        return Err(Error::Config("`reps` must be at least 1".into()));
    }
    let model = cfg.solve()?;
    if model.groups.len() < 2 {
        return Err(Error::Config("penalty gaps need at least two groups".into()));
    }
    let (b, w) = (model.groups[0].label.as_str(), model.groups[1].label.as_str());
    let per_rep: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let d = model.generate(cfg.seed, rep)?;
            pairs
                .iter()
                .map(|&(y1, y2)| Ok(delta_general(&d, policy, y1, y2, b, w)?.delta))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(k, &(y1, y2))| {
            MonteCarloDelta::from_reps(
                y1,
                y2,
                per_rep.iter().map(|r| r[k]).collect(),
                model.analytic_delta(policy, y1, y2),
            )
        })
        .collect())
}

pub fn monte_carlo_delta(
    cfg: &SimConfig,
    policy: &PenaltyPolicy,
    y1: Outcome,
    y2: Outcome,
    reps: u64,
) -> Result<MonteCarloDelta> {
    Ok(monte_carlo_deltas(cfg, policy, &[(y1, y2)], reps)?.remove(0))
}

/// Per-decile empirical calibration of one replicate against `q(s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecileCalibration {
    pub score: Decile,
    pub q: f64,
    pub n_b: u64,
    pub n_w: u64,
    pub rate_b: Option<f64>,
    pub rate_w: Option<f64>,
    /// Standardised difference between the two groups' rates.
    pub z_between: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdErrorRates {
    pub threshold: u8,
    pub fpr_b: Option<f64>,
    pub fpr_w: Option<f64>,
    pub analytic_fpr_b: Option<f64>,
    pub analytic_fpr_w: Option<f64>,
    /// FPR gap implied by each group's exact prevalence, PPV and FNR.
    pub identity_gap: Option<f64>,
    /// Every rate of both groups is defined at this threshold.
    pub fully_defined: bool,
    pub sign_agrees: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub model: SolvedModel,
    pub seed: u64,
    pub policy: PenaltyPolicy,
    pub calibration: Vec<DecileCalibration>,
    pub error_rates: Vec<ThresholdErrorRates>,
    pub deltas: Vec<MonteCarloDelta>,
}

fn z_between(k_b: u64, n_b: u64, k_w: u64, n_w: u64) -> Option<f64> {
    if n_b == 0 || n_w == 0 {
        return None;
    }
    let (nb, nw) = (n_b as f64, n_w as f64);
    let diff = k_b as f64 / nb - k_w as f64 / nw;
    let pooled = (k_b + k_w) as f64 / (nb + nw);
    let se = (pooled * (1.0 - pooled) * (1.0 / nb + 1.0 / nw)).sqrt();
    if se == 0.0 {
        Some(if diff == 0.0 { 0.0 } else { f64::INFINITY })
    } else {
        Some(diff / se)
    }
}

/// Calibration and error-rate tables from replicate 0, plus Monte Carlo
/// penalty gaps for non-recidivists and recidivists.
pub fn summarize(cfg: &SimConfig, policy: &PenaltyPolicy, reps: u64) -> Result<SimulationSummary> {
    let model = cfg.solve()?;
    if model.groups.len() < 2 {
        return Err(Error::Config("the summary compares the first two groups".into()));
    }
    let d = model.generate(cfg.seed, 0)?;
    let (b, w) = (model.groups[0].label.clone(), model.groups[1].label.clone());

    let mut counts = [[(0u64, 0u64); 10]; 2];
    for r in &d {
        let g = if r.group == b { 0 } else if r.group == w { 1 } else { continue };
        let cell = &mut counts[g][r.score.index()];
        cell.0 += 1;
        cell.1 += u64::from(r.outcome.flag());
    }
    let calibration = Decile::all()
        .map(|s| {
            let (nb, kb) = counts[0][s.index()];
            let (nw, kw) = counts[1][s.index()];
            DecileCalibration {
                score: s,
                q: model.recid_prob[s.index()],
                n_b: nb,
                n_w: nw,
                rate_b: (nb > 0).then(|| kb as f64 / nb as f64),
                rate_w: (nw > 0).then(|| kw as f64 / nw as f64),
                z_between: z_between(kb, nb, kw, nw),
            }
        })
        .collect();

    let level = ConfidenceLevel::default();
    let mut error_rates = Vec::new();
    for t in 0..=10u8 {
        let mb = ConfusionMatrix::tally(d.group_slice(&b), t);
        let mw = ConfusionMatrix::tally(d.group_slice(&w), t);
        let rb = rates_from_matrix(&mb, level)?;
        let rw = rates_from_matrix(&mw, level)?;
        let all_defined = |r: &crate::rates::GroupRates| {
            [&r.prevalence, &r.ppv, &r.npv, &r.fpr, &r.fnr]
                .iter()
                .all(|x| x.value().is_some())
        };
        let identity_fpr = |g: usize| -> Option<f64> {
            let p = model.groups[g].implied_prevalence;
            fpr_from_identity(p, model.ppv(g, t)?, model.fnr(g, t)?).ok().map(|v| v.value)
        };
        let identity_gap = identity_fpr(0).zip(identity_fpr(1)).map(|(x, y)| x - y);
        let empirical_gap = rb.fpr.value().zip(rw.fpr.value()).map(|(x, y)| x - y);
        error_rates.push(ThresholdErrorRates {
            threshold: t,
            fpr_b: rb.fpr.value(),
            fpr_w: rw.fpr.value(),
            analytic_fpr_b: model.fpr(0, t),
            analytic_fpr_w: model.fpr(1, t),
            identity_gap,
            fully_defined: all_defined(&rb) && all_defined(&rw),
            sign_agrees: identity_gap
                .zip(empirical_gap)
                .map(|(a, e)| a.signum() == e.signum()),
        });
    }

    let deltas = monte_carlo_deltas(
        cfg,
        policy,
        &[(Outcome::NoRecid, Outcome::NoRecid), (Outcome::Recid, Outcome::Recid)],
        reps,
    )?;
    Ok(SimulationSummary {
        model,
        seed: cfg.seed,
        policy: *policy,
        calibration,
        error_rates,
        deltas,
    })
}
