//! Effect sizes between group score distributions: Cohen's d and the
//! discrete total variation distance, and the bound the latter places on
//! the MinMax penalty gap.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::impact::{delta_general, PenaltyPolicy};
use crate::ingest::{Dataset, Decile, Outcome};

/// Slack allowed when checking `delta <= spread * tv`.
pub const BOUND_TOLERANCE: f64 = 1e-12;

/// Normalised score histogram over an explicit support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreDistribution {
    pub group: String,
    /// `None` means all outcomes.
    pub outcome: Option<Outcome>,
    pub support: Vec<Decile>,
    pub counts: Vec<u64>,
    pub mass: Vec<f64>,
    pub n: u64,
}

impl ScoreDistribution {
    /// Build from raw probability masses, e.g. for constructed examples.
    pub fn from_masses(group: &str, support: Vec<Decile>, mass: Vec<f64>) -> Result<Self> {
        if support.len() != mass.len() {
            return Err(Error::Domain("support and mass lengths differ".into()));
        }
        if mass.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::Domain("masses must be finite and non-negative".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("masses sum to {total}, not 1")));
        }
        Ok(ScoreDistribution {
            group: group.to_string(),
            outcome: None,
            counts: vec![0; support.len()],
            support,
            mass,
            n: 0,
        })
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.mass)
            .map(|(s, m)| f64::from(s.get()) * m)
            .sum()
    }
}

pub fn score_histogram(
    dataset: &Dataset,
    group: &str,
    outcome: Option<Outcome>,
) -> Result<ScoreDistribution> {
    let mut counts = vec![0u64; 10];
    for r in dataset
        .group_slice(group)
        .filter(|r| outcome.is_none_or(|y| r.outcome == y))
    {
        counts[r.score.index()] += 1;
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        let which = outcome.map_or("any".to_string(), |y| y.to_string());
        return Err(Error::EmptySlice(format!(
            "no records with group `{group}` and outcome {which}"
        )));
    }
    Ok(ScoreDistribution {
        group: group.to_string(),
        outcome,
        support: Decile::all().collect(),
        mass: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        counts,
        n,
    })
}

/// Standardised mean difference `(mean(a) - mean(b)) / pooled_sd` with the
/// pooled variance weighted by `n - 1` per sample.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Domain("Cohen's d needs at least two values per sample".into()));
    }
    let (ma, ssa) = mean_and_ss(a);
    let (mb, ssb) = mean_and_ss(b);
    let pooled = ((ssa + ssb) / (a.len() + b.len() - 2) as f64).sqrt();
    if pooled <= 0.0 || !pooled.is_finite() {
        return Err(Error::Domain("pooled standard deviation is zero".into()));
    }
    Ok((ma - mb) / pooled)
}

/// Mean and sum of squared deviations.
fn mean_and_ss(xs: &[f64]) -> (f64, f64) {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (mean, xs.iter().map(|x| (x - mean) * (x - mean)).sum())
}

/// Half the L1 distance between two distributions on the same support.
pub fn tv_distance(p: &ScoreDistribution, q: &ScoreDistribution) -> Result<f64> {
    if p.support != q.support {
        return Err(Error::Domain(format!(
            "distributions for `{}` and `{}` have different supports",
            p.group, q.group
        )));
    }
    let l1: f64 = p.mass.iter().zip(&q.mass).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * l1).min(1.0))
}

fn scores_of(dataset: &Dataset, group: &str, outcome: Option<Outcome>) -> Vec<f64> {
    dataset
        .group_slice(group)
        .filter(|r| outcome.is_none_or(|y| r.outcome == y))
        .map(|r| f64::from(r.score.get()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectSizeReport {
    pub outcome: Outcome,
    pub policy: PenaltyPolicy,
    /// `None` when a slice is too small or constant.
    pub cohens_d: Option<f64>,
    pub tv_distance: f64,
    pub bound: f64,
    pub measured_delta: f64,
    pub bound_holds: bool,
}

/// Measured penalty gap among defendants with `outcome`, next to the bound
/// `spread * d_TV` of the outcome-conditional score distributions.
pub fn overlap_bound_check(
    dataset: &Dataset,
    policy: &PenaltyPolicy,
    outcome: Outcome,
    group_b: &str,
    group_w: &str,
) -> Result<EffectSizeReport> {
    let impact = delta_general(dataset, policy, outcome, outcome, group_b, group_w)?;
    let hb = score_histogram(dataset, group_b, Some(outcome))?;
    let hw = score_histogram(dataset, group_w, Some(outcome))?;
    let tv = tv_distance(&hb, &hw)?;
    let bound = policy.spread() * tv;
    Ok(EffectSizeReport {
        outcome,
        policy: *policy,
        cohens_d: cohens_d(
            &scores_of(dataset, group_b, Some(outcome)),
            &scores_of(dataset, group_w, Some(outcome)),
        )
        .ok(),
        tv_distance: tv,
        bound,
        measured_delta: impact.delta,
        bound_holds: impact.delta <= bound + BOUND_TOLERANCE,
    })
}

/// Effect sizes on the full (not outcome-conditional) group histograms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortEffectSize {
    pub group_b: String,
    pub group_w: String,
    pub cohens_d: f64,
    pub tv_distance: f64,
    pub histogram_b: ScoreDistribution,
    pub histogram_w: ScoreDistribution,
}

pub fn cohort_effect_size(dataset: &Dataset, group_b: &str, group_w: &str) -> Result<CohortEffectSize> {
    let histogram_b = score_histogram(dataset, group_b, None)?;
    let histogram_w = score_histogram(dataset, group_w, None)?;
    Ok(CohortEffectSize {
        group_b: group_b.to_string(),
        group_w: group_w.to_string(),
        cohens_d: cohens_d(&scores_of(dataset, group_b, None), &scores_of(dataset, group_w, None))?,
        tv_distance: tv_distance(&histogram_b, &histogram_w)?,
        histogram_b,
        histogram_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ChargeDegree, Record, Schema};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rec(group: &str, score: u8, outcome: u8) -> Record {
        Record {
            id: String::new(),
            group: group.into(),
            score: Decile::new(score).unwrap(),
            outcome: Outcome::from_flag(outcome).unwrap(),
            charge_degree: ChargeDegree::Felony,
            priors: 0,
            extra: Default::default(),
        }
    }

    fn dist(mass: &[f64]) -> ScoreDistribution {
        ScoreDistribution::from_masses("x", Decile::all().collect(), mass.to_vec()).unwrap()
    }

    #[test]
    fn point_mass_and_uniform_histograms() {
        let d = Dataset::new((0..4).map(|_| rec("b", 1, 0)).collect(), Schema::default());
        let h = score_histogram(&d, "b", None).unwrap();
        assert_eq!(h.mass[0], 1.0);
        assert!(h.mass[1..].iter().all(|&m| m == 0.0));

        let d = Dataset::new((1..=10).map(|s| rec("b", s, 0)).collect(), Schema::default());
        let h = score_histogram(&d, "b", None).unwrap();
        assert!(h.mass.iter().all(|&m| m == 0.1));
        assert!(score_histogram(&d, "b", Some(Outcome::Recid)).is_err());
    }

    #[test]
    fn cohens_d_closed_form() {
        assert_eq!(cohens_d(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        // means 1.5 and 3.5; each sample has SS = 1, pooled var = 2 / 6
        let d = cohens_d(&[1.0, 1.0, 2.0, 2.0], &[3.0, 3.0, 4.0, 4.0]).unwrap();
        assert_abs_diff_eq!(d, -2.0 / (1.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert!(cohens_d(&[2.0, 2.0], &[2.0, 2.0]).is_err());
        assert!(cohens_d(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn tv_examples() {
        let mut a = [0.0; 10];
        a[0] = 0.5;
        a[1] = 0.5;
        let mut b = [0.0; 10];
        b[8] = 1.0;
        assert_eq!(tv_distance(&dist(&a), &dist(&a)).unwrap(), 0.0);
        assert_eq!(tv_distance(&dist(&a), &dist(&b)).unwrap(), 1.0);

        let short = ScoreDistribution::from_masses(
            "y",
            vec![Decile::new(1).unwrap()],
            vec![1.0],
        )
        .unwrap();
        assert!(tv_distance(&dist(&a), &short).is_err());
        assert!(ScoreDistribution::from_masses("z", vec![Decile::new(1).unwrap()], vec![0.4]).is_err());
    }

    #[test]
    fn identical_distributions_have_zero_bound() {
        let rs: Vec<Record> = (1..=10)
            .flat_map(|s| [rec("b", s, 0), rec("w", s, 0), rec("b", s, 1), rec("w", s, 1)])
            .collect();
        let d = Dataset::new(rs, Schema::default());
        let p = PenaltyPolicy::new(0.0, 2.0, 4).unwrap();
        let r = overlap_bound_check(&d, &p, Outcome::NoRecid, "b", "w").unwrap();
        assert_eq!((r.bound, r.measured_delta), (0.0, 0.0));
        assert!(r.bound_holds);
        assert_eq!(r.cohens_d, Some(0.0));
    }

    #[test]
    fn two_decile_witness_is_tight() {
        // b all at 8, w all at 2: any threshold in 2..8 separates them fully.
        let mut rs = Vec::new();
        for _ in 0..5 {
            rs.push(rec("b", 8, 0));
            rs.push(rec("w", 2, 0));
        }
        let d = Dataset::new(rs, Schema::default());
        let p = PenaltyPolicy::new(1.0, 4.0, 4).unwrap();
        let r = overlap_bound_check(&d, &p, Outcome::NoRecid, "b", "w").unwrap();
        assert_eq!(r.tv_distance, 1.0);
        assert_abs_diff_eq!(r.measured_delta, r.bound, epsilon = 1e-12);
        assert_eq!(r.cohens_d, None);
    }

    fn arb_mass() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0u32..100, 10).prop_filter_map("non-zero", |w| {
            let t: u32 = w.iter().sum();
            (t > 0).then(|| w.iter().map(|&x| f64::from(x) / f64::from(t)).collect())
        })
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(a in arb_mass(), b in arb_mass(), c in arb_mass()) {
            let (a, b, c) = (dist_loose(&a), dist_loose(&b), dist_loose(&c));
            let ab = tv_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, tv_distance(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            let ac = tv_distance(&a, &c).unwrap();
            let cb = tv_distance(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }
    }

    fn dist_loose(mass: &[f64]) -> ScoreDistribution {
        ScoreDistribution {
            group: "x".into(),
            outcome: None,
            support: Decile::all().collect(),
            counts: vec![0; 10],
            mass: mass.to_vec(),
            n: 0,
        }
    }
}
