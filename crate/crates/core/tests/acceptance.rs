//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use albench_core::analysis::{
    align_label_sizes, friedman_from_blocks, improvement_records, kendalls_w_from_blocks, random_control_records,
    variance_profile, wilcoxon_signed_rank, Alternative, ImprovementRecord,
};
use albench_core::dataset::{make_blobs, Matrix};
use albench_core::model::{fit_linear, platt_calibrate, Predictor, ProbabilityMatrix, TrainedModel};
use albench_core::qstrat::{kmeans, select_cal, select_margin, select_real, PoolState, StrategyId, StrategyParams};
use albench_core::runner::{always_on_table, export_report, run_matrix, MatrixConfig, ReportKind, ResultRow, ResultsTable, TrialKey};
use albench_core::trial::{iteration_count, run_trial_observed, ExperimentConfig};
use albench_core::{seed, PipelineSpec, Result};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- 1

/// Softmax over integer-weighted linear logits.
struct Softmax {
    weights: Vec<Vec<f64>>,
}

impl Predictor for Softmax {
    fn class_count(&self) -> usize {
        self.weights.len()
    }

    fn predict_proba(&self, features: &Matrix) -> Result<ProbabilityMatrix> {
        let rows: Vec<Vec<f64>> = features
            .iter_rows()
            .map(|x| {
                let logits: Vec<f64> = self.weights.iter().map(|w| w.iter().zip(x).map(|(a, b)| a * b).sum()).collect();
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let total: f64 = e.iter().sum();
                e.iter().map(|v| v / total).collect()
            })
            .collect();
        ProbabilityMatrix::from_rows(&rows)
    }
}

fn top_two_gap(p: &[f64]) -> f64 {
    let mut v = p.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v[0] - v[1]
}

/// Repeatedly take the best remaining candidate by a full scan.
fn brute_pick(keyed: &[(f64, usize)], b: usize, largest: bool) -> Vec<usize> {
    let mut left: Vec<(f64, usize)> = keyed.to_vec();
    let mut out = Vec::new();
    for _ in 0..b {
        let mut best = 0;
        for j in 1..left.len() {
            let (kj, ij) = left[j];
            let (kb, ib) = left[best];
            let better = if largest { kj > kb } else { kj < kb };
            if better || (kj == kb && ij < ib) {
                best = j;
            }
        }
        out.push(left.remove(best).1);
    }
    out.sort_unstable();
    out
}

fn proba_rows(model: &Softmax, x: &Matrix, idx: &[usize]) -> Vec<Vec<f64>> {
    let p = model.predict_proba(&x.select(idx)).unwrap();
    p.iter_rows().map(<[f64]>::to_vec).collect()
}

fn oracle_margin(model: &Softmax, x: &Matrix, unlabeled: &[usize], b: usize) -> Vec<usize> {
    let p = proba_rows(model, x, unlabeled);
    let keyed: Vec<(f64, usize)> = p.iter().zip(unlabeled).map(|(r, &i)| (top_two_gap(r), i)).collect();
    brute_pick(&keyed, b, false)
}

fn oracle_cal(model: &Softmax, x: &Matrix, labeled: &[usize], unlabeled: &[usize], b: usize, k: usize) -> Vec<usize> {
    let p_lab = proba_rows(model, x, labeled);
    let p_unl = proba_rows(model, x, unlabeled);
    let k = k.min(labeled.len());
    let keyed: Vec<(f64, usize)> = unlabeled
        .iter()
        .zip(&p_unl)
        .map(|(&i, q)| {
            let mut by_dist: Vec<(f64, usize, usize)> = labeled
                .iter()
                .enumerate()
                .map(|(pos, &j)| {
                    let d: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, c)| (a - c) * (a - c)).sum();
                    (d, j, pos)
                })
                .collect();
            by_dist.sort_by(|a, c| a.0.total_cmp(&c.0).then(a.1.cmp(&c.1)));
            let mut total = 0.0;
            for &(_, _, pos) in &by_dist[..k] {
                let mut kl = 0.0;
                for (&pi, &qi) in p_lab[pos].iter().zip(q) {
                    if pi > 0.0 {
                        kl += pi * (pi.max(1e-12).ln() - qi.max(1e-12).ln());
                    }
                }
                total += kl;
            }
            (total / k as f64, i)
        })
        .collect();
    brute_pick(&keyed, b, true)
}

fn oracle_real(model: &Softmax, x: &Matrix, unlabeled: &[usize], clusters: &[usize], b: usize) -> Vec<usize> {
    let p = proba_rows(model, x, unlabeled);
    let pred: Vec<usize> = p
        .iter()
        .map(|r| (0..r.len()).fold(0, |best, c| if r[c] > r[best] { c } else { best }))
        .collect();
    let k = clusters.iter().max().unwrap() + 1;
    let classes = model.class_count();
    let pseudo: Vec<usize> = (0..k)
        .map(|c| {
            let count = |cls: usize| (0..pred.len()).filter(|&u| clusters[u] == c && pred[u] == cls).count();
            (0..classes).fold(0, |best, cls| if count(cls) > count(best) { cls } else { best })
        })
        .collect();
    let errors: Vec<Vec<(f64, usize)>> = (0..k)
        .map(|c| {
            (0..pred.len())
                .filter(|&u| clusters[u] == c && pred[u] != pseudo[c])
                .map(|u| (p[u][pred[u]], unlabeled[u]))
                .collect()
        })
        .collect();
    let total: usize = errors.iter().map(Vec::len).sum();
    if total < b {
        let mut chosen: Vec<usize> = errors.iter().flatten().map(|e| e.1).collect();
        let rest: Vec<(f64, usize)> = (0..unlabeled.len())
            .filter(|&u| !chosen.contains(&unlabeled[u]))
            .map(|u| (top_two_gap(&p[u]), unlabeled[u]))
            .collect();
        chosen.extend(brute_pick(&rest, b - total, false));
        chosen.sort_unstable();
        return chosen;
    }
    // Hamilton apportionment: floors, then leftover seats by remainder.
    let mut quota: Vec<usize> = errors.iter().map(|e| b * e.len() / total).collect();
    let mut remainders: Vec<(usize, usize)> = errors.iter().enumerate().map(|(c, e)| (b * e.len() % total, c)).collect();
    remainders.sort_by(|a, c| c.0.cmp(&a.0).then(a.1.cmp(&c.1)));
    let leftover = b - quota.iter().sum::<usize>();
    for &(_, c) in &remainders[..leftover] {
        quota[c] += 1;
    }
    let mut chosen = Vec::new();
    for (c, e) in errors.iter().enumerate() {
        chosen.extend(brute_pick(e, quota[c], true));
    }
    chosen.sort_unstable();
    chosen
}

fn criterion_oracles() -> Outcome {
    let started = Instant::now();
    let mut rng = seed::rng(101);
    for case in 0..50 {
        let n = rng.gen_range(20..=200);
        let dim = rng.gen_range(1..=3);
        let classes = rng.gen_range(2..=4);
        // coarse integer grid: duplicate rows and exact ties are common
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(0..5) as f64).collect()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let model = Softmax {
            weights: (0..classes).map(|_| (0..dim).map(|_| rng.gen_range(-2..=2) as f64).collect()).collect(),
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let n_lab = rng.gen_range(1..n);
        let labeled = order[..n_lab].to_vec();
        let unlabeled = order[n_lab..].to_vec();
        let labels: Vec<usize> = labeled.iter().map(|_| rng.gen_range(0..classes)).collect();
        let pool = PoolState::new(labeled.clone(), labels, unlabeled.clone()).unwrap();
        let mut lab_sorted = labeled.clone();
        lab_sorted.sort_unstable();
        let mut unl_sorted = unlabeled.clone();
        unl_sorted.sort_unstable();
        let b = rng.gen_range(1..=unl_sorted.len().min(40));
        let cal_k = rng.gen_range(1..=8);
        let params = StrategyParams {
            real_clusters: rng.gen_range(1..=8),
            ..StrategyParams::default()
        };

        let got = ok(select_margin(&model, &x, &pool, b))?;
        ensure!(got == oracle_margin(&model, &x, &unl_sorted, b), "margin differs on pool {case}");

        let got = ok(select_cal(&model, &x, &pool, b, cal_k))?;
        ensure!(got == oracle_cal(&model, &x, &lab_sorted, &unl_sorted, b, cal_k), "CAL differs on pool {case}");

        let real_seed = rng.gen::<u64>();
        let got = ok(select_real(&model, &x, &pool, b, &params, &mut seed::rng(real_seed)))?;
        let clusters = ok(kmeans(&x.select(&unl_sorted), params.real_clusters, &mut seed::rng(real_seed)))?;
        ensure!(got == oracle_real(&model, &x, &unl_sorted, &clusters, b), "REAL differs on pool {case}");
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("50 pools, margin/CAL/REAL equal to brute force, {:.2}s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------- 2

/// (P(W+ >= w), P(W+ <= w)) by listing all 2^n sign patterns.
fn enumerate_tails(ranks: &[f64], w: f64) -> (f64, f64) {
    let n = ranks.len();
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        ge += u64::from(s >= w - 1e-9);
        le += u64::from(s <= w + 1e-9);
    }
    let total = (1u64 << n) as f64;
    (ge as f64 / total, le as f64 / total)
}

fn criterion_wilcoxon() -> Outcome {
    let mut rng = seed::rng(202);
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    while cases < 600 {
        let n = rng.gen_range(1..=10);
        let mut magnitudes: Vec<i64> = (1..=40).collect();
        magnitudes.shuffle(&mut rng);
        let d: Vec<i64> = magnitudes[..n].iter().map(|&m| if rng.gen() { m } else { -m }).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-100..100) as f64).collect();
        let x: Vec<f64> = y.iter().zip(&d).map(|(a, &b)| a + b as f64).collect();

        let mut abs: Vec<(i64, usize)> = d.iter().map(|v| v.abs()).zip(0..).collect();
        abs.sort_unstable();
        let mut rank_of = vec![0.0; n];
        for (r, &(_, i)) in abs.iter().enumerate() {
            rank_of[i] = (r + 1) as f64;
        }
        let w_plus: f64 = (0..n).filter(|&i| d[i] > 0).map(|i| rank_of[i]).sum();
        let ranks: Vec<f64> = (1..=n).map(|r| r as f64).collect();
        let (ge, le) = enumerate_tails(&ranks, w_plus);
        let expected = [
            (Alternative::Greater, ge),
            (Alternative::Less, le),
            (Alternative::TwoSided, (2.0 * ge.min(le)).min(1.0)),
        ];
        for (alt, want) in expected {
            let r = ok(wilcoxon_signed_rank(&x, &y, alt))?;
            ensure!(r.exact, "case {cases} (n={n}) not exact");
            let err = (r.p_value - want).abs();
            ensure!(err <= 1e-12, "case {cases} {alt:?}: p={} expected {want}", r.p_value);
            worst = worst.max(err);
        }
        cases += 1;
    }
    let p = ok(wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[0.0; 3], Alternative::TwoSided))?.p_value;
    ensure!((p - 0.25).abs() < 1e-12, "{{1,2,3}} two-sided p = {p}");
    Ok(format!("{cases} tie-free cases, max |dp| = {worst:e}; {{1,2,3}} -> {p}"))
}

// ---------------------------------------------------------------- 3

fn criterion_rank_stats() -> Outcome {
    let identical = vec![vec![1.0, 2.0, 3.0]; 4];
    let w = ok(kendalls_w_from_blocks(&identical))?;
    ensure!((w - 1.0).abs() < 1e-12, "W on identical rankings = {w}");

    let judges = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]];
    let w3 = ok(kendalls_w_from_blocks(&judges))?;
    ensure!((w3 - 0.1111).abs() < 1e-4, "3-judge W = {w3}");

    let f = ok(friedman_from_blocks(&identical))?;
    ensure!((f.statistic - 8.0).abs() < 1e-12 && f.df == 2, "Friedman = {} (df {})", f.statistic, f.df);

    let mut rng = seed::rng(303);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let m = rng.gen_range(2..=12);
        let k = rng.gen_range(2..=7);
        let blocks: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let mut v: Vec<f64> = (0..k).map(|i| i as f64 + rng.gen::<f64>() * 0.5).collect();
                v.shuffle(&mut rng);
                v
            })
            .collect();
        let chi = ok(friedman_from_blocks(&blocks))?.statistic;
        let w = ok(kendalls_w_from_blocks(&blocks))?;
        let err = (w - chi / (m as f64 * (k - 1) as f64)).abs();
        ensure!(err < 1e-9, "W = {w} but chi2/(m(k-1)) = {}", chi / (m as f64 * (k - 1) as f64));
        worst = worst.max(err);
    }
    Ok(format!("W=1, 3-judge W={w3:.4}, chi2=8 (df 2), W = chi2/(m(k-1)) within {worst:e} on 200 samples"))
}

// ---------------------------------------------------------------- 4

fn criterion_bookkeeping() -> Outcome {
    let mut rng = seed::rng(404);
    let pool = ok(make_blobs(2, 5, 2600, 3.0, &mut rng))?;
    let test = ok(make_blobs(2, 5, 250, 3.0, &mut rng))?;
    let (b, s) = (200, 200);
    let cfg = ExperimentConfig::new("blobs", PipelineSpec::linear(), StrategyId::Random, b, s, 17);
    let t_max = ok(cfg.iterations())?;
    ensure!(t_max == 24, "T = {t_max}");

    let mut seen = Vec::new();
    let run = ok(run_trial_observed(&cfg, &pool, &test, |t, state| {
        let labeled: BTreeSet<usize> = state.labeled().iter().copied().collect();
        let unlabeled: BTreeSet<usize> = state.unlabeled().iter().copied().collect();
        let ok = labeled.len() == s + t * b
            && state.labeled().len() == labeled.len()
            && labeled.is_disjoint(&unlabeled)
            && labeled.len() + unlabeled.len() == pool.len();
        seen.push((t, ok));
    }))?;
    ensure!(run.entries.len() == 25, "{} scores", run.entries.len());
    ensure!(seen.len() == 25 && seen.iter().enumerate().all(|(i, &(t, _))| i == t), "observed iterations {seen:?}");
    if let Some((t, _)) = seen.iter().find(|(_, good)| !good) {
        return Err(format!("labeled/unlabeled sets wrong at t = {t}"));
    }
    for (t, e) in run.entries.iter().enumerate() {
        ensure!(e.labeled == s + t * b, "entry {t} reports {} labeled", e.labeled);
    }
    let t500 = ok(iteration_count(500, 500, 5000))?;
    ensure!(t500 == 9, "T for b=s=500 is {t500}");
    Ok("b=s=200: 24 iterations, 25 scores, |X_L| = s + t*b and X_L, X_U disjoint at every t; b=s=500: T=9".into())
}

// ---------------------------------------------------------------- 5 and 7

const DESK_MATRIX: &str = "
datasets = blobs:3:10:1000:3.2:7, blobs:4:10:750:3.2:7
pipelines = linear, forest
strategies = random, margin, cal, dal, real
batch_seed = 50:50
trials = 5
max_labeled = 500
pool_size = 2000
test_size = 1000
";

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("albench-acceptance-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

struct DeskRun {
    table: ResultsTable,
    elapsed: Duration,
    sorted_csv: Vec<u8>,
}

fn desk_run(workers: usize) -> std::result::Result<DeskRun, String> {
    let mut cfg = ok(MatrixConfig::parse(DESK_MATRIX))?;
    cfg.output_dir = scratch_dir(&format!("w{workers}"));
    let started = Instant::now();
    let outcome = ok(run_matrix(&cfg, workers))?;
    let elapsed = started.elapsed();
    ensure!(outcome.failed == 0, "{} trials failed", outcome.failed);
    let sorted_csv = std::fs::read(cfg.output_dir.join(albench_core::runner::SORTED_RESULTS_FILE)).map_err(|e| e.to_string())?;
    let _ = std::fs::remove_dir_all(&cfg.output_dir);
    Ok(DeskRun {
        table: outcome.table,
        elapsed,
        sorted_csv,
    })
}

fn criterion_determinism(single: &DeskRun, parallel: &DeskRun) -> Outcome {
    ensure!(!single.table.rows.is_empty(), "no rows");
    ensure!(single.sorted_csv == parallel.sorted_csv, "sorted tables differ between 1 and 8 workers");
    Ok(format!(
        "{} rows, {} bytes identical for 1 and 8 workers",
        single.table.rows.len(),
        single.sorted_csv.len()
    ))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_al_effect(run: &DeskRun) -> Outcome {
    let points = run.table.score_points();
    let datasets: BTreeSet<&str> = points.iter().map(|p| p.dataset.as_str()).collect();
    let linear_f1 = |d: &str| {
        let v: Vec<f64> = points
            .iter()
            .filter(|p| p.dataset == d && p.pipeline == "linear" && p.strategy.is_random() && p.n == 500)
            .map(|p| p.f1)
            .collect();
        mean(&v)
    };
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for d in &datasets {
        let f = linear_f1(d);
        notes.push(format!("linear F1@500 {d} = {f:.3}"));
        if !(0.85..=0.95).contains(&f) {
            failures.push(format!("{d} linear F1 at 500 is {f:.3}, outside 0.85-0.95"));
        }
    }
    let easier = *datasets
        .iter()
        .max_by(|a, b| linear_f1(a).total_cmp(&linear_f1(b)))
        .ok_or("no datasets")?;

    let control = ok(random_control_records(&points))?;
    let at500: Vec<f64> = control.iter().filter(|r| r.n == 500).map(|r| r.delta).collect();
    let control_mean = mean(&at500);
    notes.push(format!("(a) random-vs-random mean delta@500 = {control_mean:.3}pp"));
    if control_mean.abs() >= 2.0 {
        failures.push(format!("(a) |mean delta| = {:.3}", control_mean.abs()));
    }

    let records = ok(improvement_records(&points))?;
    let margin: Vec<&ImprovementRecord> = records
        .iter()
        .filter(|r| r.strategy == StrategyId::Margin && r.dataset == easier)
        .collect();
    let margin_mean = mean(&margin.iter().map(|r| r.delta).collect::<Vec<_>>());
    let mut x = Vec::new();
    let mut y = Vec::new();
    for q in points.iter().filter(|p| p.strategy == StrategyId::Margin && p.dataset == easier && p.n > p.seed_size) {
        let r = points
            .iter()
            .find(|r| r.strategy.is_random() && r.dataset == q.dataset && r.pipeline == q.pipeline && r.trial == q.trial && r.n == q.n)
            .ok_or("missing random pair")?;
        x.push(q.f1);
        y.push(r.f1);
    }
    let p = ok(wilcoxon_signed_rank(&x, &y, Alternative::Greater))?.p_value;
    notes.push(format!("(b) margin on {easier}: mean delta {margin_mean:.3}%, one-sided p = {p:.3} over {} pairs", x.len()));
    if !(margin_mean > 0.0 && p < 0.1) {
        failures.push(format!("(b) margin does not beat random on {easier} (mean delta {margin_mean:.3}%, p = {p:.3})"));
    }

    let profile = ok(variance_profile(&points))?;
    let var_at = |n: usize| profile.iter().find(|v| v.n == n).map(|v| v.variance);
    let (v100, v500) = (var_at(100).ok_or("no n=100")?, var_at(500).ok_or("no n=500")?);
    notes.push(format!("(c) variance {v100:.6} at 100 -> {v500:.6} at 500"));
    if v500 >= v100 {
        failures.push("(c) variance does not shrink".into());
    }

    let secs = run.elapsed.as_secs_f64();
    notes.push(format!("single-worker runtime {secs:.0}s"));
    if secs >= 900.0 {
        failures.push(format!("runtime {secs:.0}s"));
    }
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(format!("{} [{}]", failures.join("; "), notes.join("; ")))
    }
}

// ---------------------------------------------------------------- 6

fn top_label_ece(p1: &[f64], y: &[usize]) -> f64 {
    // (sum of confidence, correct predictions, count) per bin
    let mut bins = [(0.0, 0.0, 0usize); 10];
    for (&p, &label) in p1.iter().zip(y) {
        let (conf, pred) = if p >= 0.5 { (p, 1) } else { (1.0 - p, 0) };
        let bin = ((conf * 10.0) as usize).min(9);
        bins[bin].0 += conf;
        bins[bin].1 += f64::from(u8::from(pred == label));
        bins[bin].2 += 1;
    }
    bins.iter()
        .filter(|b| b.2 > 0)
        .map(|&(conf, hits, _)| (conf - hits).abs() / p1.len() as f64)
        .sum()
}

fn logistic_data(rng: &mut seed::Rng, n: usize) -> (Matrix, Vec<usize>) {
    let w = [1.5, -1.0, 0.5, 2.0];
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let z: f64 = 0.3 + x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        y.push(usize::from(rng.gen::<f64>() < 1.0 / (1.0 + (-z).exp())));
        rows.push(x);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

fn criterion_calibration() -> Outcome {
    let (mut raw_total, mut platt_total) = (0.0, 0.0);
    for s in 0..10u64 {
        let mut rng = seed::rng(600 + s);
        let (x, y) = logistic_data(&mut rng, 2000);
        let idx = |r: std::ops::Range<usize>| r.collect::<Vec<_>>();
        let part = |r: std::ops::Range<usize>| (x.select(&idx(r.clone())), y[r].to_vec());
        let (train_x, train_y) = part(0..800);
        let (val_x, val_y) = part(800..1400);
        let (test_x, test_y) = part(1400..2000);

        let model = TrainedModel::Linear(ok(fit_linear(&train_x, &train_y, 2, 1.0))?);
        let raw = ok(model.scores(&test_x))?;
        let margins: Vec<f64> = raw.iter_rows().map(|r| r[1] - r[0]).collect();
        let (lo, hi) = margins.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &m| (l.min(m), h.max(m)));
        let minmax: Vec<f64> = margins.iter().map(|m| (m - lo) / (hi - lo)).collect();

        let calibrated = ok(platt_calibrate(model, &val_x, &val_y))?;
        let proba = ok(calibrated.predict_proba(&test_x))?;
        let platt: Vec<f64> = proba.iter_rows().map(|r| r[1]).collect();

        raw_total += top_label_ece(&minmax, &test_y);
        platt_total += top_label_ece(&platt, &test_y);
    }
    let (raw, platt) = (raw_total / 10.0, platt_total / 10.0);
    let reduction = 1.0 - platt / raw;
    ensure!(reduction >= 0.25, "ECE {raw:.4} -> {platt:.4}, reduction {:.1}%", 100.0 * reduction);
    Ok(format!("mean ECE {raw:.4} (min-max raw) -> {platt:.4} (Platt), {:.1}% lower", 100.0 * reduction))
}

// ---------------------------------------------------------------- 8

fn criterion_alignment() -> Outcome {
    let source: Vec<usize> = (1..=25).map(|i| 200 * i).collect();
    let target: Vec<usize> = (1..=10).map(|i| 500 * i).collect();
    let expected = [(800, 1000), (1000, 1000), (1200, 1000), (1400, 1500), (1600, 1500)];
    for (n, want) in expected {
        let got = ok(align_label_sizes(n, &source, &target))?;
        ensure!(got == want, "{n} -> {got}, expected {want}");
    }
    Ok("800->1000, 1000->1000, 1200->1000, 1400->1500, 1600->1500".into())
}

// ---------------------------------------------------------------- 9

fn criterion_report_format() -> Outcome {
    let rec = |strategy, pipeline: &str, n, delta| ImprovementRecord {
        pipeline: pipeline.into(),
        strategy,
        dataset: "d".into(),
        batch: 10,
        seed_size: 10,
        trial: 0,
        n,
        source_n: n,
        delta,
    };
    let fixture = vec![
        rec(StrategyId::Margin, "linear", 20, -1.0),
        rec(StrategyId::Margin, "linear", 30, 2.0),
        rec(StrategyId::Margin, "linear", 40, 0.0),
        rec(StrategyId::Cal, "forest", 20, 3.0),
        rec(StrategyId::Cal, "forest", 30, -2.0),
        rec(StrategyId::Cal, "forest", 40, 5.0),
    ];
    // computed by hand with population standard deviations
    let expected = "avg_for,pct_negative,mean_nonneg,mean,std_nonneg,std\n\
        Overall,33.33,2.5000,1.1667,1.8028,2.4095\n\
        margin,33.33,1.0000,0.3333,1.0000,1.2472\n\
        cal,33.33,4.0000,2.0000,1.0000,2.9439\n\
        forest,33.33,4.0000,2.0000,1.0000,2.9439\n\
        linear,33.33,1.0000,0.3333,1.0000,1.2472\n";
    let text = ok(always_on_table(&fixture))?;
    ensure!(text == expected, "always_on table:\n{text}");

    // the same margin deltas, derived from a results table
    let row = |strategy, iteration: i64, f1: f64| ResultRow {
        key: TrialKey {
            dataset: "d".into(),
            pipeline: "linear".into(),
            strategy,
            batch: 10,
            seed_size: 10,
            trial: 0,
        },
        iteration,
        n: 10 + 10 * iteration as usize,
        f1_macro: Some(f1),
        hyperparameters: String::new(),
        flags: String::new(),
        seed: 0,
        wall_ms: 0.0,
    };
    let mut rows = Vec::new();
    for (i, (r, m)) in [(0.5, 0.5), (0.5, 0.495), (0.5, 0.51), (0.5, 0.5)].into_iter().enumerate() {
        rows.push(row(StrategyId::Random, i as i64, r));
        rows.push(row(StrategyId::Margin, i as i64, m));
    }
    let exported = ok(export_report(&ResultsTable::new(rows), ReportKind::AlwaysOn))?;
    ensure!(
        exported.contains("Overall,33.33,1.0000,0.3333,1.0000,1.2472\n"),
        "export from results:\n{exported}"
    );
    Ok("6-row fixture matches the hand-computed table; {-1,2,0} -> 33.33/1.0000/0.3333".into())
}

// ---------------------------------------------------------------- driver

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .map_or_else(|| "panicked".into(), |m| format!("panicked: {m}"))),
    }
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "oracle equivalence", guarded(criterion_oracles)),
        (2, "wilcoxon exactness", guarded(criterion_wilcoxon)),
        (3, "rank statistics", guarded(criterion_rank_stats)),
        (4, "loop bookkeeping", guarded(criterion_bookkeeping)),
    ];

    let single = catch_unwind(|| desk_run(1)).unwrap_or_else(|_| Err("desk run panicked".into()));
    let eight = catch_unwind(|| desk_run(8)).unwrap_or_else(|_| Err("desk run panicked".into()));
    let determinism = match (&single, &eight) {
        (Ok(a), Ok(b)) => guarded(|| criterion_determinism(a, b)),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    results.push((5, "determinism", determinism));
    results.push((6, "calibration sanity", guarded(criterion_calibration)));
    let effect = match &single {
        Ok(run) => guarded(|| criterion_al_effect(run)),
        Err(e) => Err(e.clone()),
    };
    results.push((7, "qualitative AL effect", effect));
    results.push((8, "alignment fidelity", guarded(criterion_alignment)));
    results.push((9, "report formats", guarded(criterion_report_format)));

    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {reason}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
