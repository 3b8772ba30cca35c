//! Nonparametric tests: Wilcoxon signed-rank, Friedman, Kendall's W.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest effective sample size handled by exact enumeration.
pub const WILCOXON_EXACT_MAX_N: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    TwoSided,
    /// First sample tends to be larger.
    Greater,
    Less,
}

impl std::str::FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_sided" | "two-sided" => Ok(Alternative::TwoSided),
            "greater" => Ok(Alternative::Greater),
            "less" => Ok(Alternative::Less),
            other => Err(Error::InvalidArgument(format!("unknown alternative `{other}`"))),
        }
    }
}

/// Ascending average ranks (1-based) plus the sizes of tied groups.
pub fn rank_with_ties(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end share the average of ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        if end - start > 1 {
            ties.push(end - start);
        }
        start = end;
    }
    (ranks, ties)
}

fn tie_term(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences.
    pub statistic: f64,
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub exact: bool,
}

/// Number of sign assignments of ranks 1..=n giving each positive-rank sum.
fn signed_rank_counts(n: usize) -> Vec<f64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0.0; max + 1];
    counts[0] = 1.0;
    for r in 1..=n {
        for w in (r..=max).rev() {
            counts[w] += counts[w - r];
        }
    }
    counts
}

/// Paired Wilcoxon signed-rank test on `x - y`.
///
/// Zero differences are dropped and tied magnitudes share average ranks.
/// With at most [`WILCOXON_EXACT_MAX_N`] tie-free pairs the p-value is
/// exact; otherwise a normal approximation with tie and continuity
/// corrections is used.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64], alternative: Alternative) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Empty("paired samples"));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("paired differences"));
    }
    if diffs.is_empty() {
        return Err(Error::AllDifferencesZero);
    }
    let n = diffs.len();
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = rank_with_ties(&magnitudes);
    let w: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();

    if n <= WILCOXON_EXACT_MAX_N && ties.is_empty() {
        let counts = signed_rank_counts(n);
        let total = 2f64.powi(n as i32);
        let w_int = w.round() as usize;
        let lower: f64 = counts[..=w_int].iter().sum::<f64>() / total;
        let upper: f64 = counts[w_int..].iter().sum::<f64>() / total;
        let p = match alternative {
            Alternative::TwoSided => (2.0 * lower.min(upper)).min(1.0),
            Alternative::Greater => upper,
            Alternative::Less => lower,
        };
        return Ok(WilcoxonResult {
            statistic: w,
            p_value: p,
            n,
            exact: true,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&ties) / 48.0;
    let sd = var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = match alternative {
        Alternative::TwoSided => {
            let z = ((w - mean).abs() - 0.5).max(0.0) / sd;
            (2.0 * normal.sf(z)).min(1.0)
        }
        Alternative::Greater => normal.sf((w - mean - 0.5) / sd),
        Alternative::Less => normal.cdf((w - mean + 0.5) / sd),
    };
    Ok(WilcoxonResult {
        statistic: w,
        p_value: p,
        n,
        exact: false,
    })
}

/// Within-block ranks: rows are blocks (judges), columns are treatments.
#[derive(Debug, Clone, PartialEq)]
pub struct RankMatrix {
    ranks: Vec<Vec<f64>>,
    ties: Vec<Vec<usize>>,
    treatments: usize,
}

impl RankMatrix {
    pub fn from_blocks(blocks: &[Vec<f64>]) -> Result<Self> {
        let treatments = blocks.first().map_or(0, Vec::len);
        if treatments < 2 {
            return Err(Error::InvalidArgument("need at least 2 treatments".into()));
        }
        let mut ranks = Vec::with_capacity(blocks.len());
        let mut ties = Vec::with_capacity(blocks.len());
        for (i, row) in blocks.iter().enumerate() {
            if row.len() != treatments {
                return Err(Error::RaggedRow {
                    row: i,
                    expected: treatments,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("block values"));
            }
            let (r, t) = rank_with_ties(row);
            ranks.push(r);
            ties.push(t);
        }
        Ok(Self {
            ranks,
            ties,
            treatments,
        })
    }

    pub fn blocks(&self) -> usize {
        self.ranks.len()
    }

    pub fn treatments(&self) -> usize {
        self.treatments
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.ranks[i]
    }

    pub fn rank_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.treatments];
        for row in &self.ranks {
            sums.iter_mut().zip(row).for_each(|(s, r)| *s += r);
        }
        sums
    }

    fn total_tie_term(&self) -> f64 {
        self.ties.iter().map(|t| tie_term(t)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub blocks: usize,
    pub treatments: usize,
}

/// Friedman test with the tie correction.
pub fn friedman_test(ranks: &RankMatrix) -> Result<FriedmanResult> {
    let n = ranks.blocks();
    let k = ranks.treatments();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 blocks".into()));
    }
    let (nf, kf) = (n as f64, k as f64);
    let sum_sq: f64 = ranks.rank_sums().iter().map(|r| r * r).sum();
    let raw = 12.0 / (nf * kf * (kf + 1.0)) * sum_sq - 3.0 * nf * (kf + 1.0);
    let correction = 1.0 - ranks.total_tie_term() / (nf * (kf * kf * kf - kf));
    let df = k - 1;
    if correction <= 1e-12 {
        // every block is all ties
        return Ok(FriedmanResult {
            statistic: 0.0,
            df,
            p_value: 1.0,
            blocks: n,
            treatments: k,
        });
    }
    let statistic = (raw / correction).max(0.0);
    let chi2 = ChiSquared::new(df as f64).expect("df >= 1");
    Ok(FriedmanResult {
        statistic,
        df,
        p_value: chi2.sf(statistic),
        blocks: n,
        treatments: k,
    })
}

pub fn friedman_from_blocks(blocks: &[Vec<f64>]) -> Result<FriedmanResult> {
    friedman_test(&RankMatrix::from_blocks(blocks)?)
}

/// Kendall's coefficient of concordance with the tie correction.
///
/// Returns 0 when every block is entirely tied.
pub fn kendalls_w(ranks: &RankMatrix) -> Result<f64> {
    let m = ranks.blocks();
    let k = ranks.treatments();
    if k < 2 {
        return Err(Error::InvalidArgument("need at least 2 items".into()));
    }
    if m < 2 {
        return Err(Error::InvalidArgument("need at least 2 judges".into()));
    }
    let (mf, kf) = (m as f64, k as f64);
    let sums = ranks.rank_sums();
    let mean = sums.iter().sum::<f64>() / kf;
    let s: f64 = sums.iter().map(|r| (r - mean) * (r - mean)).sum();
    let denom = mf * mf * (kf * kf * kf - kf) - mf * ranks.total_tie_term();
    if denom <= 1e-12 {
        return Ok(0.0);
    }
    Ok((12.0 * s / denom).clamp(0.0, 1.0))
}

pub fn kendalls_w_from_blocks(blocks: &[Vec<f64>]) -> Result<f64> {
    kendalls_w(&RankMatrix::from_blocks(blocks)?)
}
