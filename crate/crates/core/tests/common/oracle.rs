//! Counting oracle over the raw two-year CSV.
//!
//! Deliberately shares no code with the library: it splits lines with its
//! own quote-aware splitter and counts with plain loops over tuples.

#![allow(dead_code)]

use std::path::PathBuf;

pub const BLACK: &str = "African-American";
pub const WHITE: &str = "Caucasian";

pub fn data_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/compas-scores-two-years.csv")
}

#[derive(Debug, Clone)]
pub struct Row {
    pub race: String,
    pub decile: u32,
    pub y: u32,
    pub degree: String,
    pub priors: u32,
}

pub struct Counts {
    pub data_rows: usize,
    pub valid: Vec<Row>,
    pub invalid: usize,
}

fn split(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted && chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            '"' => quoted = !quoted,
            ',' if !quoted => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

pub fn load() -> Counts {
    let text = std::fs::read_to_string(data_path()).expect("dataset present under data/");
    let mut lines = text.lines();
    let header = split(lines.next().unwrap());
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (race, decile, y, degree, priors) = (
        col("race"),
        col("decile_score"),
        col("two_year_recid"),
        col("c_charge_degree"),
        col("priors_count"),
    );
    let mut counts = Counts {
        data_rows: 0,
        valid: Vec::new(),
        invalid: 0,
    };
    for line in lines.filter(|l| !l.is_empty()) {
        counts.data_rows += 1;
        let f = split(line);
        let dec: Option<u32> = f[decile].parse().ok().filter(|d| (1..=10).contains(d));
        let yy: Option<u32> = f[y].parse().ok().filter(|v| *v <= 1);
        let deg = f[degree].clone();
        let pr: Option<u32> = f[priors].parse().ok();
        match (dec, yy, pr) {
            (Some(d), Some(v), Some(p)) if (deg == "F" || deg == "M") && !f[race].is_empty() => {
                counts.valid.push(Row {
                    race: f[race].clone(),
                    decile: d,
                    y: v,
                    degree: deg,
                    priors: p,
                })
            }
            _ => counts.invalid += 1,
        }
    }
    counts
}

pub fn two_race(rows: &[Row]) -> Vec<Row> {
    rows.iter()
        .filter(|r| r.race == BLACK || r.race == WHITE)
        .cloned()
        .collect()
}

/// (tn, fp, fn, tp)
pub fn matrix(rows: &[Row], race: &str, threshold: u32) -> (u64, u64, u64, u64) {
    let mut m = (0, 0, 0, 0);
    for r in rows.iter().filter(|r| r.race == race) {
        let high = r.decile > threshold;
        match (r.y, high) {
            (0, false) => m.0 += 1,
            (0, true) => m.1 += 1,
            (_, false) => m.2 += 1,
            (_, true) => m.3 += 1,
        }
    }
    m
}

/// Per decile 1..=10: (n, recidivists).
pub fn by_decile(rows: &[Row], race: &str, y: Option<u32>) -> [(u64, u64); 10] {
    let mut out = [(0, 0); 10];
    for r in rows
        .iter()
        .filter(|r| r.race == race && y.is_none_or(|v| r.y == v))
    {
        out[(r.decile - 1) as usize].0 += 1;
        out[(r.decile - 1) as usize].1 += u64::from(r.y);
    }
    out
}

pub fn scores(rows: &[Row], race: &str) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.race == race)
        .map(|r| f64::from(r.decile))
        .collect()
}
