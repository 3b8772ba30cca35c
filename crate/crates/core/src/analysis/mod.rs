//! Post-hoc analysis of trial scores: relative improvement over random,
//! label-size alignment, aggregation, summaries and rank tests.

pub mod stats;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::qstrat::StrategyId;

pub use stats::{
    friedman_from_blocks, friedman_test, kendalls_w, kendalls_w_from_blocks, rank_with_ties, wilcoxon_signed_rank,
    Alternative, FriedmanResult, RankMatrix, WilcoxonResult, WILCOXON_EXACT_MAX_N,
};

/// Percent improvement of `f_q` over the random baseline `f_r`.
///
/// `Ok(None)` when `f_r` is zero: the record is undefined and callers drop it.
pub fn relative_improvement(f_q: f64, f_r: f64) -> Result<Option<f64>> {
    if !f_q.is_finite() || !f_r.is_finite() {
        return Err(Error::NonFinite("score"));
    }
    if f_q < 0.0 || f_r < 0.0 {
        return Err(Error::InvalidArgument(format!("negative score ({f_q}, {f_r})")));
    }
    if f_r == 0.0 {
        return Ok(None);
    }
    Ok(Some(100.0 * (f_q - f_r) / f_r))
}

/// Map a label-set size onto the nearest value of `target_grid`.
///
/// Equidistant sizes go to the smaller target. `source_grid` must contain
/// `n`; it only serves as a consistency check.
pub fn align_label_sizes(n: usize, source_grid: &[usize], target_grid: &[usize]) -> Result<usize> {
    if source_grid.is_empty() || target_grid.is_empty() {
        return Err(Error::Empty("label-size grid"));
    }
    if !source_grid.contains(&n) {
        return Err(Error::InvalidArgument(format!("size {n} is not on the source grid")));
    }
    let mut best = target_grid[0];
    for &t in target_grid {
        let (d, db) = (t.abs_diff(n), best.abs_diff(n));
        if d < db || (d == db && t < best) {
            best = t;
        }
    }
    Ok(best)
}

/// One test-set score of one trial iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePoint {
    pub pipeline: String,
    pub dataset: String,
    pub strategy: StrategyId,
    pub batch: usize,
    pub seed_size: usize,
    pub trial: usize,
    /// Labeled set size.
    pub n: usize,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementRecord {
    pub pipeline: String,
    pub strategy: StrategyId,
    pub dataset: String,
    pub batch: usize,
    pub seed_size: usize,
    pub trial: usize,
    /// Aligned label-set size.
    pub n: usize,
    /// Size before alignment.
    pub source_n: usize,
    pub delta: f64,
}

type ScoreKey = (String, String, usize, usize, usize, usize);

fn score_key(p: &ScorePoint) -> ScoreKey {
    (p.pipeline.clone(), p.dataset.clone(), p.batch, p.seed_size, p.trial, p.n)
}

/// Size grids per (b, s) setting and the target grid: the one of the
/// setting with the largest batch (then the largest seed).
fn grids(points: &[ScorePoint]) -> (BTreeMap<(usize, usize), Vec<usize>>, Vec<usize>) {
    let mut by_setting: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    for p in points {
        by_setting.entry((p.batch, p.seed_size)).or_default().insert(p.n);
    }
    let grids: BTreeMap<_, Vec<usize>> = by_setting.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect();
    let target = grids.iter().next_back().map(|(_, g)| g.clone()).unwrap_or_default();
    (grids, target)
}

/// Relative improvements of every non-random score over the random score
/// of the same (pipeline, dataset, b, s, trial, n), with sizes aligned to
/// the largest-batch grid.
///
/// Seed-set scores (`n == s`) are skipped: every strategy shares the seed
/// set there. Undefined improvements (random score of zero) are dropped.
pub fn improvement_records(points: &[ScorePoint]) -> Result<Vec<ImprovementRecord>> {
    let mut baseline: BTreeMap<ScoreKey, f64> = BTreeMap::new();
    for p in points.iter().filter(|p| p.strategy.is_random()) {
        baseline.insert(score_key(p), p.f1);
    }
    let (grids, target) = grids(points);
    let mut out = Vec::new();
    for p in points.iter().filter(|p| !p.strategy.is_random()) {
        let key = score_key(p);
        let f_r = *baseline.get(&key).ok_or_else(|| {
            Error::MissingBaseline(format!(
                "pipeline {} dataset {} b={} s={} trial {} n={}",
                p.pipeline, p.dataset, p.batch, p.seed_size, p.trial, p.n
            ))
        })?;
        if p.n == p.seed_size {
            continue;
        }
        let Some(delta) = relative_improvement(p.f1, f_r)? else {
            continue;
        };
        let n = align_label_sizes(p.n, &grids[&(p.batch, p.seed_size)], &target)?;
        out.push(ImprovementRecord {
            pipeline: p.pipeline.clone(),
            strategy: p.strategy,
            dataset: p.dataset.clone(),
            batch: p.batch,
            seed_size: p.seed_size,
            trial: p.trial,
            n,
            source_n: p.n,
            delta,
        });
    }
    Ok(out)
}

/// Random against an independently seeded random run: trial `i` is compared
/// with trial `(i + 1) mod m` of the same cell. A control, not an input to
/// the aggregates; `strategy` is [`StrategyId::Random`].
pub fn random_control_records(points: &[ScorePoint]) -> Result<Vec<ImprovementRecord>> {
    let mut cells: BTreeMap<(String, String, usize, usize, usize), BTreeMap<usize, f64>> = BTreeMap::new();
    for p in points.iter().filter(|p| p.strategy.is_random()) {
        cells
            .entry((p.pipeline.clone(), p.dataset.clone(), p.batch, p.seed_size, p.n))
            .or_default()
            .insert(p.trial, p.f1);
    }
    let (grids, target) = grids(points);
    let mut out = Vec::new();
    for ((pipeline, dataset, batch, seed_size, source_n), trials) in cells {
        if trials.len() < 2 {
            continue;
        }
        let ids: Vec<usize> = trials.keys().copied().collect();
        let n = align_label_sizes(source_n, &grids[&(batch, seed_size)], &target)?;
        for (i, &trial) in ids.iter().enumerate() {
            let other = ids[(i + 1) % ids.len()];
            if let Some(delta) = relative_improvement(trials[&trial], trials[&other])? {
                out.push(ImprovementRecord {
                    pipeline: pipeline.clone(),
                    strategy: StrategyId::Random,
                    dataset: dataset.clone(),
                    batch,
                    seed_size,
                    trial,
                    n,
                    source_n,
                    delta,
                });
            }
        }
    }
    Ok(out)
}

/// Keys held fixed in an expectation; `None` marginalizes that key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fixed {
    pub pipeline: Option<String>,
    pub strategy: Option<StrategyId>,
    pub dataset: Option<String>,
    pub batch_seed: Option<(usize, usize)>,
}

impl Fixed {
    pub fn matches(&self, r: &ImprovementRecord) -> bool {
        self.pipeline.as_ref().is_none_or(|p| *p == r.pipeline)
            && self.strategy.is_none_or(|q| q == r.strategy)
            && self.dataset.as_ref().is_none_or(|d| *d == r.dataset)
            && self.batch_seed.is_none_or(|bs| bs == (r.batch, r.seed_size))
    }
}

/// Uniform mean of δ over records matching `fixed` at aligned size `n`.
pub fn expected_improvement(records: &[ImprovementRecord], fixed: &Fixed, n: usize) -> Result<f64> {
    let (sum, count) = records
        .iter()
        .filter(|r| r.n == n && fixed.matches(r))
        .fold((0.0, 0usize), |(s, c), r| (s + r.delta, c + 1));
    if count == 0 {
        return Err(Error::Empty("matching improvement records"));
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlwaysOnSummary {
    pub count: usize,
    /// Percentage of strictly negative δ.
    pub pct_negative: f64,
    /// Mean over δ ≥ 0; `None` when no such δ exists.
    pub mean_nonneg: Option<f64>,
    pub mean: f64,
    pub std_nonneg: Option<f64>,
    pub std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Summary of always using one strategy: how often it loses to random, and
/// the mean (population std) gain overall and when it does not lose.
pub fn always_on_summary(deltas: &[f64]) -> Result<AlwaysOnSummary> {
    if deltas.is_empty() {
        return Err(Error::Empty("improvement values"));
    }
    if deltas.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("improvement values"));
    }
    let nonneg: Vec<f64> = deltas.iter().copied().filter(|d| *d >= 0.0).collect();
    let (mean, std) = mean_std(deltas);
    let (mean_nonneg, std_nonneg) = if nonneg.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&nonneg);
        (Some(m), Some(s))
    };
    Ok(AlwaysOnSummary {
        count: deltas.len(),
        pct_negative: 100.0 * (deltas.len() - nonneg.len()) as f64 / deltas.len() as f64,
        mean_nonneg,
        mean,
        std_nonneg,
        std,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariancePoint {
    pub batch: usize,
    pub seed_size: usize,
    pub n: usize,
    /// Mean over (pipeline, dataset) of the across-strategy variance.
    pub variance: f64,
    pub cells: usize,
}

/// Across-strategy variance of trial-averaged scores, per
/// (pipeline, dataset, b, s, n) cell, averaged over pipelines and datasets.
pub fn variance_profile(points: &[ScorePoint]) -> Result<Vec<VariancePoint>> {
    if points.is_empty() {
        return Err(Error::Empty("score points"));
    }
    type Cell = (usize, usize, usize, String, String);
    let mut sums: BTreeMap<Cell, BTreeMap<StrategyId, (f64, usize)>> = BTreeMap::new();
    for p in points {
        let e = sums
            .entry((p.batch, p.seed_size, p.n, p.pipeline.clone(), p.dataset.clone()))
            .or_default()
            .entry(p.strategy)
            .or_insert((0.0, 0));
        e.0 += p.f1;
        e.1 += 1;
    }
    let mut profile: BTreeMap<(usize, usize, usize), (f64, usize)> = BTreeMap::new();
    for ((b, s, n, h, d), by_strategy) in sums {
        if by_strategy.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "cell ({h}, {d}, b={b}, s={s}, n={n}) has fewer than 2 strategies"
            )));
        }
        let means: Vec<f64> = by_strategy.values().map(|(sum, c)| sum / *c as f64).collect();
        let var = mean_std(&means).1.powi(2);
        let e = profile.entry((b, s, n)).or_insert((0.0, 0));
        e.0 += var;
        e.1 += 1;
    }
    Ok(profile
        .into_iter()
        .map(|((batch, seed_size, n), (sum, cells))| VariancePoint {
            batch,
            seed_size,
            n,
            variance: sum / cells as f64,
            cells,
        })
        .collect())
}

/// Which factor's levels are the treatments in a rank comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Strategy,
    Pipeline,
}

impl Factor {
    pub fn as_str(self) -> &'static str {
        match self {
            Factor::Strategy => "strategy",
            Factor::Pipeline => "pipeline",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankComparison {
    pub factor: Factor,
    pub treatments: Vec<String>,
    pub blocks: usize,
    pub friedman: FriedmanResult,
    pub kendall_w: f64,
}

/// Matched blocks over the remaining keys (the other factor, dataset, b, s,
/// aligned n), each entry the trial-averaged δ of one treatment. Blocks
/// missing any treatment are dropped.
pub fn matched_blocks(records: &[ImprovementRecord], factor: Factor) -> (Vec<String>, Vec<Vec<f64>>) {
    let treatment = |r: &ImprovementRecord| match factor {
        Factor::Strategy => r.strategy.as_str().to_string(),
        Factor::Pipeline => r.pipeline.clone(),
    };
    let other = |r: &ImprovementRecord| match factor {
        Factor::Strategy => r.pipeline.clone(),
        Factor::Pipeline => r.strategy.as_str().to_string(),
    };
    let treatments: Vec<String> = records.iter().map(treatment).collect::<BTreeSet<_>>().into_iter().collect();
    let mut cells: BTreeMap<(String, String, usize, usize, usize), BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    for r in records {
        let e = cells
            .entry((other(r), r.dataset.clone(), r.batch, r.seed_size, r.n))
            .or_default()
            .entry(treatment(r))
            .or_insert((0.0, 0));
        e.0 += r.delta;
        e.1 += 1;
    }
    let blocks = cells
        .into_values()
        .filter(|c| c.len() == treatments.len())
        .map(|c| c.values().map(|(s, n)| s / *n as f64).collect())
        .collect();
    (treatments, blocks)
}

/// Friedman test and Kendall's W with `factor` as the treatment.
pub fn rank_comparison(records: &[ImprovementRecord], factor: Factor) -> Result<RankComparison> {
    let (treatments, blocks) = matched_blocks(records, factor);
    if treatments.len() < 2 {
        return Err(Error::InvalidArgument(format!("fewer than 2 {}s to compare", factor.as_str())));
    }
    let ranks = RankMatrix::from_blocks(&blocks)?;
    Ok(RankComparison {
        factor,
        blocks: ranks.blocks(),
        friedman: friedman_test(&ranks)?,
        kendall_w: kendalls_w(&ranks)?,
        treatments,
    })
}

/// Paired δ of two (b, s) settings matched on (pipeline, strategy, dataset,
/// trial, aligned n). Several source sizes mapping to one aligned size are
/// averaged first.
pub fn batch_setting_pairs(
    records: &[ImprovementRecord],
    first: (usize, usize),
    second: (usize, usize),
) -> (Vec<f64>, Vec<f64>) {
    type Key = (String, StrategyId, String, usize, usize);
    let collect = |setting: (usize, usize)| {
        let mut m: BTreeMap<Key, (f64, usize)> = BTreeMap::new();
        for r in records.iter().filter(|r| (r.batch, r.seed_size) == setting) {
            let e = m
                .entry((r.pipeline.clone(), r.strategy, r.dataset.clone(), r.trial, r.n))
                .or_insert((0.0, 0));
            e.0 += r.delta;
            e.1 += 1;
        }
        m
    };
    let a = collect(first);
    let b = collect(second);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (k, (sa, ca)) in &a {
        if let Some((sb, cb)) = b.get(k) {
            x.push(sa / *ca as f64);
            y.push(sb / *cb as f64);
        }
    }
    (x, y)
}
