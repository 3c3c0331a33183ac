use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::special::{chi2_sf, f_sf, kolmogorov_sf};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {need} groups, got {got}")]
    TooFewGroups { need: usize, got: usize },
    #[error("group {group} has {size} observations; need at least {need}")]
    GroupTooSmall { group: usize, size: usize, need: usize },
    #[error("need at least {need} observations in total, got {got}")]
    TooFewObservations { need: usize, got: usize },
    #[error("zero variance within and between groups; F is undefined")]
    NoVariance,
    #[error("totals have zero variance; alpha is undefined")]
    ZeroTotalVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} {what}, got {got}")]
    Shape { what: &'static str, need: usize, got: usize },
    #[error("empty input")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Describe {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; NaN when `n < 2`.
    pub sd: f64,
    pub median: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (`n - 1` denominator).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn describe(xs: &[f64]) -> Describe {
    let n = xs.len();
    Describe {
        n,
        mean: if n == 0 { f64::NAN } else { mean(xs) },
        sd: if n < 2 { f64::NAN } else { variance(xs).sqrt() },
        median: median(xs),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub f: f64,
    pub df1: f64,
    pub df2: f64,
    pub p: f64,
}

pub fn one_way_anova(groups: &[&[f64]]) -> Result<Anova, StatsError> {
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::TooFewGroups { need: 2, got: k });
    }
    if let Some((i, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < 2) {
        return Err(StatsError::GroupTooSmall { group: i, size: g.len(), need: 2 });
    }
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = mean(g);
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    let df1 = (k - 1) as f64;
    let df2 = (n - k) as f64;
    if ssw == 0.0 {
        if ssb == 0.0 {
            return Err(StatsError::NoVariance);
        }
        return Ok(Anova { f: f64::INFINITY, df1, df2, p: 0.0 });
    }
    let f = (ssb / df1) / (ssw / df2);
    Ok(Anova { f, df1, df2, p: f_sf(f, df1, df2) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub df: f64,
    pub p: f64,
}

/// Mid-ranks (1-based) of `xs`, ties sharing their average rank; also
/// returns the tie term `Σ (t³ - t)`.
pub fn mid_ranks(xs: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<KruskalWallis, StatsError> {
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::TooFewGroups { need: 2, got: k });
    }
    if let Some((i, _)) = groups.iter().enumerate().find(|(_, g)| g.is_empty()) {
        return Err(StatsError::GroupTooSmall { group: i, size: 0, need: 1 });
    }
    let all: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let n = all.len();
    if n < 5 {
        return Err(StatsError::TooFewObservations { need: 5, got: n });
    }
    let df = (k - 1) as f64;
    let (ranks, ties) = mid_ranks(&all);
    let nf = n as f64;
    let correction = 1.0 - ties / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return Ok(KruskalWallis { h: 0.0, df, p: 1.0 });
    }
    let mut offset = 0;
    let mut s = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        s += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = ((12.0 / (nf * (nf + 1.0)) * s - 3.0 * (nf + 1.0)) / correction).max(0.0);
    Ok(KruskalWallis { h, df, p: chi2_sf(h, df) })
}

/// Cronbach's alpha over an items × raters matrix.
pub fn cronbach_alpha(matrix: &[Vec<f64>]) -> Result<f64, StatsError> {
    let items = matrix.len();
    if items < 2 {
        return Err(StatsError::Shape { what: "items", need: 2, got: items });
    }
    let k = matrix[0].len();
    if k < 2 {
        return Err(StatsError::Shape { what: "raters", need: 2, got: k });
    }
    if let Some(row) = matrix.iter().find(|r| r.len() != k) {
        return Err(StatsError::LengthMismatch(k, row.len()));
    }
    let totals: Vec<f64> = matrix.iter().map(|r| r.iter().sum()).collect();
    let total_var = variance(&totals);
    if total_var <= 0.0 {
        return Err(StatsError::ZeroTotalVariance);
    }
    let rater_var: f64 = (0..k).map(|j| variance(&matrix.iter().map(|r| r[j]).collect::<Vec<_>>())).sum();
    let kf = k as f64;
    Ok(kf / (kf - 1.0) * (1.0 - rater_var / total_var))
}

/// Binary confusion counts with 1 as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn add(&mut self, actual: u8, predicted: u8) {
        match (actual == 1, predicted == 1) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn add_all(&mut self, actual: &[u8], predicted: &[u8]) {
        for (&a, &p) in actual.iter().zip(predicted) {
            self.add(a, p);
        }
    }

    pub fn merged(&self, other: &Confusion) -> Confusion {
        Confusion {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2PR / (P + R)`, or 0 when `P + R = 0`.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1_score(predicted: &[u8], actual: &[u8]) -> Result<f64, StatsError> {
    if predicted.len() != actual.len() {
        return Err(StatsError::LengthMismatch(predicted.len(), actual.len()));
    }
    if predicted.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut c = Confusion::default();
    c.add_all(actual, predicted);
    Ok(c.f1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub d: f64,
    pub p: f64,
}

/// One-sample Kolmogorov–Smirnov test against `U(lo, hi)`.
pub fn ks_uniform(samples: &[f64], lo: f64, hi: f64) -> Result<KsTest, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let cdf = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        d = d.max((i as f64 + 1.0) / n - cdf).max(cdf - i as f64 / n);
    }
    let sn = n.sqrt();
    Ok(KsTest { d, p: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d) })
}
