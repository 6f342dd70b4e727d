//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oracle::{BLACK, WHITE};
use riskaudit::figures::{calibration_rows, stratified_rows};
use riskaudit::{
    calibration_curve, coarsen, cohort_effect_size, delta_general, delta_nonrecidivators, delta_recidivators,
    filter_cohort, fpr_from_identity, minmax_penalty, overlap_bound_check, parse_dataset, rates_from_matrix,
    stratified_fpr, ChargeDegree, ConfidenceLevel, ConfusionMatrix, Dataset, Decile, DegreeFilter, Outcome,
    ParseOptions, PenaltyPolicy, PriorBins, Record, Schema, SimConfig,
};

type Verdict = Result<String, String>;
type Criterion = (u8, &'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cohort() -> Dataset {
    let file = std::fs::File::open(oracle::data_path()).expect("dataset under data/");
    let (d, _) = parse_dataset(file, &Schema::default(), ParseOptions::default()).unwrap();
    filter_cohort(&d, &[BLACK, WHITE]).unwrap()
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn rate(num: u64, den: u64) -> f64 {
    num as f64 / den as f64
}

/// FPR and FNR per group at threshold 4.
fn c1_error_rates() -> Verdict {
    let d = cohort();
    let rows = oracle::two_race(&oracle::load().valid);
    let lvl = ConfidenceLevel::default();
    let mut notes = Vec::new();
    for (race, fpr_t, fnr_t) in [(BLACK, 0.45, 0.28), (WHITE, 0.23, 0.48)] {
        let m = ConfusionMatrix::tally(d.group_slice(race), 4);
        let (tn, fp, fn_, tp) = oracle::matrix(&rows, race, 4);
        ensure(m == ConfusionMatrix::new(tn, fp, fn_, tp), || format!("{race}: matrix differs from oracle"))?;
        let r = rates_from_matrix(&m, lvl).unwrap();
        let (fpr, fnr) = (r.fpr.value().unwrap(), r.fnr.value().unwrap());
        ensure(fpr == rate(fp, tn + fp) && fnr == rate(fn_, fn_ + tp), || format!("{race}: rate arithmetic"))?;
        ensure(within(fpr, fpr_t, 0.02), || format!("{race} FPR {fpr:.4} vs {fpr_t}"))?;
        ensure(within(fnr, fnr_t, 0.02), || format!("{race} FNR {fnr:.4} vs {fnr_t}"))?;
        notes.push(format!("{race} FPR={fpr:.4} FNR={fnr:.4}"));
    }
    let mut sens = Vec::new();
    for t in [3u8, 5] {
        for race in [BLACK, WHITE] {
            let r = rates_from_matrix(&ConfusionMatrix::tally(d.group_slice(race), t), lvl).unwrap();
            sens.push(format!(
                "t={t} {race} {:.3}/{:.3}",
                r.fpr.value().unwrap(),
                r.fnr.value().unwrap()
            ));
        }
    }
    Ok(format!("{} (sensitivity FPR/FNR: {})", notes.join(", "), sens.join(", ")))
}

fn c2_prevalence() -> Verdict {
    let d = cohort();
    let rows = oracle::two_race(&oracle::load().valid);
    let mut notes = Vec::new();
    for (race, target) in [(BLACK, 0.51), (WHITE, 0.39)] {
        let r = rates_from_matrix(&ConfusionMatrix::tally(d.group_slice(race), 4), ConfidenceLevel::default()).unwrap();
        let p = r.prevalence.value().unwrap();
        let group: Vec<_> = rows.iter().filter(|r| r.race == race).collect();
        let expected = rate(group.iter().filter(|r| r.y == 1).count() as u64, group.len() as u64);
        ensure(p == expected, || format!("{race}: {p} vs oracle {expected}"))?;
        ensure(within(p, target, 0.02), || format!("{race} prevalence {p:.4} vs {target}"))?;
        notes.push(format!("{race} {p:.4}"));
    }
    Ok(notes.join(", "))
}

fn c3_effect_sizes() -> Verdict {
    let d = cohort();
    let e = cohort_effect_size(&d, BLACK, WHITE).map_err(|e| e.to_string())?;
    let rows = oracle::two_race(&oracle::load().valid);
    let mut tv = 0.0;
    let (hb, hw) = (oracle::by_decile(&rows, BLACK, None), oracle::by_decile(&rows, WHITE, None));
    let (nb, nw): (u64, u64) = (hb.iter().map(|x| x.0).sum(), hw.iter().map(|x| x.0).sum());
    for i in 0..10 {
        tv += 0.5 * (rate(hb[i].0, nb) - rate(hw[i].0, nw)).abs();
    }
    ensure(within(e.tv_distance, tv, 1e-12), || format!("TV {} vs oracle {tv}", e.tv_distance))?;
    ensure(within(e.cohens_d, 0.60, 0.02), || format!("d {:.4} vs 0.60", e.cohens_d))?;
    ensure(within(e.tv_distance, 0.245, 0.01), || format!("TV {:.4} vs 0.245", e.tv_distance))?;
    Ok(format!("d={:.4} TV={:.4}", e.cohens_d, e.tv_distance))
}

/// Direct FPR and the identity's value from the same four cells, or `None`
/// when PPV, FNR or FPR is undefined or PPV is zero.
fn identity_pair(tn: u64, fp: u64, fn_: u64, tp: u64) -> Option<(f64, f64)> {
    let (neg, pos, high, n) = (tn + fp, fn_ + tp, fp + tp, tn + fp + fn_ + tp);
    if neg == 0 || pos == 0 || high == 0 || tp == 0 {
        return None;
    }
    let (p, ppv, fnr) = (rate(pos, n), rate(tp, high), rate(fn_, pos));
    Some((rate(fp, neg), fpr_from_identity(p, ppv, fnr).unwrap().value))
}

fn c4_identity() -> Verdict {
    let rows = oracle::two_race(&oracle::load().valid);
    let mut real = 0;
    let mut worst: f64 = 0.0;
    for race in [BLACK, WHITE] {
        for t in 0..=10 {
            let (tn, fp, fn_, tp) = oracle::matrix(&rows, race, t);
            if let Some((direct, identity)) = identity_pair(tn, fp, fn_, tp) {
                real += 1;
                worst = worst.max((direct - identity).abs());
            }
        }
    }
    ensure(real == 20, || format!("{real} real slices with defined rates, expected 20"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let mut cell = || rng.random_range(1..=1_000u64);
        let (direct, identity) = identity_pair(cell(), cell(), cell(), cell()).expect("all cells positive");
        worst = worst.max((direct - identity).abs());
    }
    ensure(worst <= 1e-12, || format!("max error {worst:e}"))?;
    Ok(format!("{real} real slices + 10000 random matrices, max |error| = {worst:.2e}"))
}

fn random_dataset(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| Record {
            id: i.to_string(),
            group: if rng.random_bool(0.5) { "b" } else { "w" }.into(),
            score: Decile::new(rng.random_range(1..=10)).unwrap(),
            outcome: if rng.random_bool(0.45) { Outcome::Recid } else { Outcome::NoRecid },
            charge_degree: ChargeDegree::Felony,
            priors: 0,
            extra: Default::default(),
        })
        .collect();
    Dataset::new(records, Schema::default())
}

fn brute_force_mean(d: &Dataset, policy: &PenaltyPolicy, group: &str, y: Outcome) -> f64 {
    let p: Vec<f64> = d
        .iter()
        .filter(|r| r.group == group && r.outcome == y)
        .map(|r| minmax_penalty(coarsen(r.score, policy.threshold()), policy))
        .collect();
    p.iter().sum::<f64>() / p.len() as f64
}

/// Corollary and brute-force checks on one dataset. Dyadic policies must
/// match the per-record average bit for bit; others within 1e-12.
fn corollary_checks(d: &Dataset, b: &str, w: &str) -> Result<usize, String> {
    let lvl = ConfidenceLevel::default();
    let pairs = [
        (Outcome::NoRecid, Outcome::NoRecid),
        (Outcome::Recid, Outcome::Recid),
        (Outcome::NoRecid, Outcome::Recid),
        (Outcome::Recid, Outcome::NoRecid),
    ];
    let mut checks = 0;
    for t in 0..=10u8 {
        let rb = rates_from_matrix(&ConfusionMatrix::tally(d.group_slice(b), t), lvl).unwrap();
        let rw = rates_from_matrix(&ConfusionMatrix::tally(d.group_slice(w), t), lvl).unwrap();
        for (lo, hi, exact) in [(0.0, 1.0, true), (0.0, 8.0, true), (1.5, 7.25, false), (-3.0, 3.0, false)] {
            let policy = PenaltyPolicy::new(lo, hi, t).unwrap();
            for (y1, y2) in pairs {
                let g = delta_general(d, &policy, y1, y2, b, w).map_err(|e| e.to_string())?.delta;
                let brute = brute_force_mean(d, &policy, b, y1) - brute_force_mean(d, &policy, w, y2);
                let ok = if exact { g == brute } else { (g - brute).abs() <= 1e-12 };
                ensure(ok, || format!("t={t} ({lo},{hi}) {y1}{y2}: {g} vs brute {brute}"))?;
                checks += 1;
            }
            let g0 = delta_general(d, &policy, Outcome::NoRecid, Outcome::NoRecid, b, w).unwrap().delta;
            let g1 = delta_general(d, &policy, Outcome::Recid, Outcome::Recid, b, w).unwrap().delta;
            let c0 = delta_nonrecidivators(&rb, &rw, &policy).map_err(|e| e.to_string())?;
            let c1 = delta_recidivators(&rb, &rw, &policy).map_err(|e| e.to_string())?;
            ensure((g0 - c0).abs() <= 1e-12 && (g1 - c1).abs() <= 1e-12, || {
                format!("t={t} ({lo},{hi}): corollaries {c0},{c1} vs {g0},{g1}")
            })?;
            checks += 2;
        }
    }
    Ok(checks)
}

fn c5_corollaries() -> Verdict {
    let mut checks = corollary_checks(&cohort(), BLACK, WHITE)?;
    for seed in 0..100 {
        checks += corollary_checks(&random_dataset(seed, 400), "b", "w").map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(format!("real + 100 synthetic datasets, {checks} comparisons"))
}

fn histogram(d: &Dataset, group: &str, y: Outcome) -> [f64; 10] {
    let mut c = [0u64; 10];
    for r in d.iter().filter(|r| r.group == group && r.outcome == y) {
        c[usize::from(r.score.get()) - 1] += 1;
    }
    let n: u64 = c.iter().sum();
    c.map(|k| rate(k, n))
}

fn bound_sweep(d: &Dataset, b: &str, w: &str) -> Result<(usize, f64), String> {
    let mut checks = 0;
    let mut slack = f64::INFINITY;
    for y in [Outcome::NoRecid, Outcome::Recid] {
        let (hb, hw) = (histogram(d, b, y), histogram(d, w, y));
        let tv: f64 = (0..10).map(|i| 0.5 * (hb[i] - hw[i]).abs()).sum();
        for t in 0..=10u8 {
            for (lo, hi) in [(0.0, 1.0), (-1.0, 2.5)] {
                let policy = PenaltyPolicy::new(lo, hi, t).unwrap();
                let delta = delta_general(d, &policy, y, y, b, w).map_err(|e| e.to_string())?.delta;
                let bound = (hi - lo) * tv;
                ensure(delta.abs() <= bound + 1e-12, || format!("t={t} y={y}: |{delta}| > {bound}"))?;
                slack = slack.min(bound - delta.abs());
                checks += 1;
            }
        }
    }
    Ok((checks, slack))
}

fn c6_overlap_bound() -> Verdict {
    let (mut checks, mut slack) = bound_sweep(&cohort(), BLACK, WHITE)?;
    for seed in 100..200 {
        let (c, s) = bound_sweep(&random_dataset(seed, 300), "b", "w").map_err(|e| format!("seed {seed}: {e}"))?;
        checks += c;
        slack = slack.min(s);
    }
    // b: 3 at decile 3, 7 at decile 8; w mirrored. TV = 0.4, cut between them.
    let mut records = Vec::new();
    for (group, low, high) in [("b", 3, 7), ("w", 7, 3)] {
        for (score, k) in [(3u8, low), (8u8, high)] {
            for _ in 0..k {
                records.push(Record {
                    id: String::new(),
                    group: group.into(),
                    score: Decile::new(score).unwrap(),
                    outcome: Outcome::NoRecid,
                    charge_degree: ChargeDegree::Felony,
                    priors: 0,
                    extra: Default::default(),
                });
            }
        }
    }
    let witness = Dataset::new(records, Schema::default());
    let policy = PenaltyPolicy::new(0.0, 5.0, 5).unwrap();
    let r = overlap_bound_check(&witness, &policy, Outcome::NoRecid, "b", "w").map_err(|e| e.to_string())?;
    ensure((r.measured_delta - r.bound).abs() <= 1e-12, || format!("witness {} vs bound {}", r.measured_delta, r.bound))?;
    ensure(within(r.tv_distance, 0.4, 1e-12), || format!("witness TV {}", r.tv_distance))?;
    Ok(format!(
        "{checks} slices, min slack {slack:.3e}; witness delta={} bound={}",
        r.measured_delta, r.bound
    ))
}

fn c7_impossibility() -> Verdict {
    let cfg = SimConfig::default();
    ensure(cfg.groups.iter().all(|g| g.n == 100_000), || "default n".into())?;
    ensure(
        cfg.groups[0].prevalence == 0.51 && cfg.groups[1].prevalence == 0.39,
        || "default prevalences".into(),
    )?;
    let model = cfg.solve().map_err(|e| e.to_string())?;
    let d = model.generate(cfg.seed, 0).map_err(|e| e.to_string())?;
    let (b, w) = (cfg.groups[0].label.as_str(), cfg.groups[1].label.as_str());

    let mut n = [[0u64; 10]; 2];
    let mut k = [[0u64; 10]; 2];
    for r in d.iter() {
        let g = usize::from(r.group != b);
        n[g][r.score.index()] += 1;
        k[g][r.score.index()] += u64::from(r.outcome.is_recid());
    }
    let mut max_z: f64 = 0.0;
    for s in 0..10 {
        let p = rate(k[0][s] + k[1][s], n[0][s] + n[1][s]);
        let se = (p * (1.0 - p) * (1.0 / n[0][s] as f64 + 1.0 / n[1][s] as f64)).sqrt();
        let z = (rate(k[0][s], n[0][s]) - rate(k[1][s], n[1][s])) / se;
        ensure(z.abs() <= 3.0, || format!("decile {}: z = {z:.2}", s + 1))?;
        max_z = max_z.max(z.abs());
    }

    let mut defined = Vec::new();
    for t in 0..=10u8 {
        let cells: Vec<(u64, u64, u64, u64)> = [b, w]
            .iter()
            .map(|g| {
                let m = ConfusionMatrix::tally(d.group_slice(g), t);
                (m.tn, m.fp, m.fn_, m.tp)
            })
            .collect();
        let all_defined = cells.iter().all(|&(tn, fp, fn_, tp)| {
            tn + fp > 0 && fn_ + tp > 0 && fp + tp > 0 && tn + fn_ > 0
        });
        if !all_defined {
            continue;
        }
        let fpr = |c: (u64, u64, u64, u64)| rate(c.1, c.0 + c.1);
        let gap = fpr(cells[0]) - fpr(cells[1]);
        ensure(gap > 0.0, || format!("t={t}: FPR gap {gap}"))?;
        defined.push(t);
    }
    ensure(!defined.is_empty(), || "no threshold with defined rates".into())?;
    Ok(format!(
        "max |z| across deciles {max_z:.2}; FPR_b > FPR_w at thresholds {defined:?}"
    ))
}

fn c8_figures() -> Verdict {
    let d = cohort();
    let rows = oracle::two_race(&oracle::load().valid);
    let lvl = ConfidenceLevel::default();
    let curves = [BLACK, WHITE].map(|g| calibration_curve(&d, g, lvl).unwrap());
    let fig1 = calibration_rows(&curves);
    for race in [BLACK, WHITE] {
        let expected = oracle::by_decile(&rows, race, None);
        let series: Vec<_> = fig1.iter().filter(|r| r.series == race).collect();
        ensure(series.len() == 10, || format!("figure 1 {race}: {} rows", series.len()))?;
        for r in series {
            let (n, k) = expected[r.x.parse::<usize>().unwrap() - 1];
            ensure(r.n == n && r.y == Some(rate(k, n)), || format!("figure 1 {race} decile {}", r.x))?;
        }
    }

    let bins = PriorBins::default();
    let s = stratified_fpr(&d, DegreeFilter::Misdemeanor, &bins, 4, lvl).unwrap();
    let fig2 = stratified_rows(&s);
    ensure(fig2.len() == 10, || format!("figure 2: {} rows", fig2.len()))?;
    for r in &fig2 {
        let bin = bins.bins().iter().find(|b| b.to_string() == r.x).unwrap();
        let (mut neg, mut fp) = (0u64, 0u64);
        for o in rows
            .iter()
            .filter(|o| o.race == r.series && o.degree == "M" && o.y == 0 && bin.contains(o.priors))
        {
            neg += 1;
            fp += u64::from(o.decile > 4);
        }
        ensure(r.n == neg && r.y == (neg > 0).then(|| rate(fp, neg)), || {
            format!("figure 2 {} bin {}", r.series, r.x)
        })?;
    }
    let mut gaps = Vec::new();
    for bin in bins.bins() {
        let value = |g: &str| fig2.iter().find(|r| r.series == g && r.x == bin.to_string()).and_then(|r| r.y);
        if let (Some(fb), Some(fw)) = (value(BLACK), value(WHITE)) {
            ensure(fb > fw, || format!("bin {bin}: {fb:.3} <= {fw:.3}"))?;
            gaps.push(format!("{bin}: {fb:.3}>{fw:.3}"));
        }
    }
    ensure(gaps.len() >= 4, || "fewer than four bins comparable".into())?;
    Ok(format!("figure 1 and 2 exact; {}", gaps.join(", ")))
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_riskaudit"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn without_timestamp(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    v["metadata"].as_object_mut().unwrap().remove("generated_at");
    v
}

fn c9_determinism() -> Verdict {
    let sim = ["simulate", "--reps", "20"];
    let (a, b) = (run_cli(&sim)?, run_cli(&sim)?);
    ensure(a == b, || "simulate output differs between runs".into())?;

    let data = oracle::data_path().display().to_string();
    let audit = ["audit", "--data", data.as_str()];
    let (x, y) = (run_cli(&audit)?, run_cli(&audit)?);
    ensure(x == y, || "audit output differs between runs".into())?;
    let stamped = ["audit", "--data", data.as_str(), "--timestamp"];
    let (s1, s2) = (run_cli(&stamped)?, run_cli(&stamped)?);
    ensure(
        without_timestamp(&s1) == without_timestamp(&s2) && without_timestamp(&s1) == without_timestamp(&x),
        || "audit differs beyond the timestamp".into(),
    )?;
    Ok(format!("simulate {} bytes and audit {} bytes identical across runs", a.len(), x.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "error rates at threshold 4", c1_error_rates),
        (2, "prevalence", c2_prevalence),
        (3, "effect sizes", c3_effect_sizes),
        (4, "FPR identity closure", c4_identity),
        (5, "corollaries and brute force", c5_corollaries),
        (6, "overlap bound and witness", c6_overlap_bound),
        (7, "impossibility under calibration", c7_impossibility),
        (8, "figure 1 and 2 reproduction", c8_figures),
        (9, "determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS [{id}] {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL [{id}] {name}: {why}");
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
