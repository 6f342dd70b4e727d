//! False positive rates stratified by charge degree and prior-count bin.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ingest::{ChargeDegree, Dataset, Record};
use crate::rates::{ConfidenceLevel, ConfusionMatrix, Rate, UndefinedReason};

/// Inclusive range of prior counts; `high == None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PriorBin {
    pub low: u32,
    pub high: Option<u32>,
}

impl PriorBin {
    pub fn contains(&self, priors: u32) -> bool {
        priors >= self.low && self.high.is_none_or(|h| priors <= h)
    }
}

impl fmt::Display for PriorBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.high {
            None => write!(f, "{}+", self.low),
            Some(h) if h == self.low => write!(f, "{h}"),
            Some(h) => write!(f, "{}-{}", self.low, h),
        }
    }
}

impl FromStr for PriorBin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let num = |t: &str| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::Config(format!("bad prior-count bin `{s}`")))
        };
        if let Some(lo) = s.strip_suffix('+') {
            return Ok(PriorBin { low: num(lo)?, high: None });
        }
        match s.split_once('-') {
            Some((lo, hi)) => {
                let (low, high) = (num(lo)?, num(hi)?);
                if high < low {
                    return Err(Error::Config(format!("empty prior-count bin `{s}`")));
                }
                Ok(PriorBin { low, high: Some(high) })
            }
            None => {
                let v = num(s)?;
                Ok(PriorBin { low: v, high: Some(v) })
            }
        }
    }
}

impl Serialize for PriorBin {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Ordered, disjoint bins covering every non-negative prior count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct PriorBins(Vec<PriorBin>);

impl PriorBins {
    /// Bins must start at 0, be contiguous, and end with an open bin.
    pub fn new(bins: Vec<PriorBin>) -> Result<Self> {
        let Some(first) = bins.first() else {
            return Err(Error::Config("at least one prior-count bin is required".into()));
        };
        if first.low != 0 {
            return Err(Error::Config(format!(
                "first bin `{first}` must start at 0"
            )));
        }
        for pair in bins.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            match a.high {
                None => {
                    return Err(Error::Config(format!(
                        "open-ended bin `{a}` must be the last bin"
                    )))
                }
                Some(h) if b.low <= h => {
                    return Err(Error::Config(format!("bins `{a}` and `{b}` overlap")))
                }
                Some(h) if b.low != h + 1 => {
                    return Err(Error::Config(format!(
                        "gap between bins `{a}` and `{b}`"
                    )))
                }
                _ => {}
            }
        }
        if bins.last().is_some_and(|b| b.high.is_some()) {
            return Err(Error::Config(
                "last bin must be open-ended (e.g. `11+`) to cover all prior counts".into(),
            ));
        }
        Ok(PriorBins(bins))
    }

    pub fn bins(&self) -> &[PriorBin] {
        &self.0
    }

    pub fn bin_of(&self, priors: u32) -> PriorBin {
        *self
            .0
            .iter()
            .find(|b| b.contains(priors))
            .expect("validated bins cover every prior count")
    }
}

impl Default for PriorBins {
    /// `0, 1-3, 4-6, 7-10, 11+`
    fn default() -> Self {
        "0,1-3,4-6,7-10,11+".parse().expect("default bins are valid")
    }
}

impl FromStr for PriorBins {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PriorBins::new(s.split(',').map(str::parse).collect::<Result<Vec<_>>>()?)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeFilter {
    #[default]
    Misdemeanor,
    Felony,
    All,
}

impl DegreeFilter {
    pub fn admits(self, degree: ChargeDegree) -> bool {
        match self {
            DegreeFilter::All => true,
            DegreeFilter::Felony => degree == ChargeDegree::Felony,
            DegreeFilter::Misdemeanor => degree == ChargeDegree::Misdemeanor,
        }
    }
}

impl FromStr for DegreeFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "misdemeanor" | "m" => Ok(DegreeFilter::Misdemeanor),
            "felony" | "f" => Ok(DegreeFilter::Felony),
            "all" => Ok(DegreeFilter::All),
            other => Err(Error::Config(format!("unknown charge degree filter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumCell {
    pub bin: PriorBin,
    pub group: String,
    /// All records in the stratum, both outcomes.
    pub n: u64,
    pub matrix: ConfusionMatrix,
    pub fpr: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTotal {
    pub group: String,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratifiedRates {
    pub degree: DegreeFilter,
    pub threshold: u8,
    pub level: ConfidenceLevel,
    pub bins: PriorBins,
    /// Ordered by bin, then by group label.
    pub cells: Vec<StratumCell>,
    pub group_totals: Vec<GroupTotal>,
}

impl StratifiedRates {
    pub fn cell(&self, bin: PriorBin, group: &str) -> Option<&StratumCell> {
        self.cells.iter().find(|c| c.bin == bin && c.group == group)
    }
}

pub fn stratified_fpr(
    dataset: &Dataset,
    degree: DegreeFilter,
    bins: &PriorBins,
    threshold: u8,
    level: ConfidenceLevel,
) -> Result<StratifiedRates> {
    let admitted: Vec<&Record> = dataset
        .iter()
        .filter(|r| degree.admits(r.charge_degree))
        .collect();
    let groups: BTreeSet<&str> = admitted.iter().map(|r| r.group.as_str()).collect();

    let mut cells = Vec::new();
    for &bin in bins.bins() {
        for &group in &groups {
            let matrix = ConfusionMatrix::tally(
                admitted
                    .iter()
                    .copied()
                    .filter(|r| r.group == group && bin.contains(r.priors)),
                threshold,
            );
            let n = matrix.total();
            let fpr = if n == 0 {
                Rate::Undefined {
                    undefined: UndefinedReason::EmptyStratum,
                }
            } else {
                Rate::from_counts(matrix.fp, matrix.negatives(), level, UndefinedReason::NoNegatives)?
            };
            cells.push(StratumCell {
                bin,
                group: group.to_string(),
                n,
                matrix,
                fpr,
            });
        }
    }
    let group_totals = groups
        .iter()
        .map(|&g| GroupTotal {
            group: g.to_string(),
            n: admitted.iter().filter(|r| r.group == g).count() as u64,
        })
        .collect();
    Ok(StratifiedRates {
        degree,
        threshold,
        level,
        bins: bins.clone(),
        cells,
        group_totals,
    })
}
