//! Experiment matrices: expansion, concurrent execution with resume, the
//! results table and report export.

pub mod config;
pub mod reports;
pub mod results;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use crate::dataset::{load_table, make_blobs, stratified_indices, DatasetBundle};
use crate::error::{Error, Result};
use crate::seed;
use crate::trial::{iteration_count, run_trial};

pub use config::{expand_matrix, parse_pipeline, trial_seed, MatrixConfig, SplitSpec, TrialKey, TrialSpec};
pub use reports::{always_on_table, export_report, export_reports, ReportKind};
pub use results::{error_row, rows_for_run, Manifest, ResultRow, ResultsTable, ResultsWriter};

pub const RESULTS_FILE: &str = "results.csv";
pub const SORTED_RESULTS_FILE: &str = "results_sorted.csv";
pub const MANIFEST_FILE: &str = "manifest.tsv";

/// Load a dataset from a CSV path or build one from `blobs:C:D:N:S:SEED`
/// (classes, dimension, points per class, separation, seed).
pub fn resolve_dataset(token: &str) -> Result<DatasetBundle> {
    let mut bundle = if let Some(spec) = token.strip_prefix("blobs:") {
        let f: Vec<&str> = spec.split(':').collect();
        if f.len() != 5 {
            return Err(Error::Config(format!("`{token}`: expected blobs:C:D:N:S:SEED")));
        }
        let bad = || Error::Config(format!("`{token}`: expected blobs:C:D:N:S:SEED"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
        let separation: f64 = f[3].parse().map_err(|_| bad())?;
        let seed: u64 = f[4].parse().map_err(|_| bad())?;
        make_blobs(int(f[0])?, int(f[1])?, int(f[2])?, separation, &mut seed::rng(seed))?
    } else {
        load_table(token)?
    };
    bundle.id = token.to_string();
    Ok(bundle)
}

/// Stratified test sample, then a stratified pool from what is left.
pub fn split_pool_test(bundle: &DatasetBundle, split: &SplitSpec, base_seed: u64) -> Result<(DatasetBundle, DatasetBundle)> {
    let mut rng = seed::rng(seed::derive(seed::derive(base_seed, "split"), &bundle.id));
    let test_idx = stratified_indices(&bundle.labels, bundle.class_count, split.test_size, &mut rng)?;
    let mut in_test = vec![false; bundle.len()];
    test_idx.iter().for_each(|&i| in_test[i] = true);
    let rest: Vec<usize> = (0..bundle.len()).filter(|&i| !in_test[i]).collect();
    if rest.len() < split.pool_size {
        return Err(Error::Config(format!(
            "dataset `{}` has {} rows; pool_size {} plus test_size {} do not fit",
            bundle.id,
            bundle.len(),
            split.pool_size,
            split.test_size
        )));
    }
    let rest_labels: Vec<usize> = rest.iter().map(|&i| bundle.labels[i]).collect();
    let pool_local = stratified_indices(&rest_labels, bundle.class_count, split.pool_size, &mut rng)?;
    let pool_idx: Vec<usize> = pool_local.iter().map(|&j| rest[j]).collect();
    Ok((bundle.subset(&pool_idx), bundle.subset(&test_idx)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    pub finished: usize,
    pub pending: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOutcome {
    /// All rows of the matrix, sorted by primary key.
    pub table: ResultsTable,
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// Whether the rows of a trial are complete: either a single error row or
/// one row per iteration `0..=T`.
fn trial_complete(key: &TrialKey, rows: &[&ResultRow], max_labeled: usize) -> bool {
    if rows.len() == 1 && rows[0].is_error() {
        return true;
    }
    let Ok(t) = iteration_count(key.batch, key.seed_size, max_labeled) else {
        return false;
    };
    let iters: BTreeSet<i64> = rows.iter().map(|r| r.iteration).collect();
    rows.len() == t + 1 && iters.len() == t + 1 && iters.iter().copied().eq(0..=t as i64)
}

/// Run every trial of `config` on `workers` threads, writing into
/// `config.output_dir`.
///
/// Trials already listed in the manifest whose rows are all present are
/// skipped; leftover rows of unfinished trials are discarded first.
pub fn run_matrix(config: &MatrixConfig, workers: usize) -> Result<MatrixOutcome> {
    run_matrix_with_progress(config, workers, |_| {})
}

pub fn run_matrix_with_progress(
    config: &MatrixConfig,
    workers: usize,
    mut progress: impl FnMut(Progress),
) -> Result<MatrixOutcome> {
    if workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    let specs = expand_matrix(config)?;
    let out_dir: &Path = &config.output_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut data: BTreeMap<&str, (DatasetBundle, DatasetBundle)> = BTreeMap::new();
    for token in &config.datasets {
        let bundle = resolve_dataset(token)?;
        data.insert(token, split_pool_test(&bundle, &config.split, config.base_seed)?);
    }

    let results_path: PathBuf = out_dir.join(RESULTS_FILE);
    let manifest_path: PathBuf = out_dir.join(MANIFEST_FILE);
    let wanted: BTreeSet<&TrialKey> = specs.iter().map(|s| &s.key).collect();
    let listed: BTreeSet<TrialKey> = Manifest::read(&manifest_path)?.into_iter().collect();
    let previous = if results_path.exists() && !listed.is_empty() {
        ResultsTable::read(&results_path)?.rows
    } else {
        Vec::new()
    };
    let mut by_key: BTreeMap<&TrialKey, Vec<&ResultRow>> = BTreeMap::new();
    for r in &previous {
        by_key.entry(&r.key).or_default().push(r);
    }
    let done: BTreeSet<TrialKey> = by_key
        .iter()
        .filter(|(k, rows)| listed.contains(**k) && wanted.contains(**k) && trial_complete(k, rows, config.max_labeled))
        .map(|(k, _)| (*k).clone())
        .collect();
    let kept: Vec<ResultRow> = previous.iter().filter(|r| done.contains(&r.key)).cloned().collect();
    let mut writer = ResultsWriter::create(&results_path, &kept)?;
    let mut manifest = Manifest::create(&manifest_path, &done.iter().cloned().collect::<Vec<_>>())?;

    let pending: Vec<&TrialSpec> = specs.iter().filter(|s| !done.contains(&s.key)).collect();
    let skipped = specs.len() - pending.len();
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Vec<ResultRow>, bool)>();
    let mut new_rows = Vec::new();
    let mut failed = 0;
    let mut io_error = None;

    std::thread::scope(|scope| {
        for _ in 0..workers.min(pending.len().max(1)) {
            let tx = tx.clone();
            let (next, abort, pending, data) = (&next, &abort, &pending, &data);
            scope.spawn(move || loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(spec) = pending.get(i) else {
                    break;
                };
                let (pool, test) = &data[spec.key.dataset.as_str()];
                let outcome = catch_unwind(AssertUnwindSafe(|| run_trial(&spec.config, pool, test)));
                let (rows, ok) = match outcome {
                    Ok(Ok(run)) => (rows_for_run(&spec.key, &run), true),
                    Ok(Err(e)) => (vec![error_row(&spec.key, spec.config.trial_seed, &e.to_string())], false),
                    Err(panic) => {
                        let msg = panic
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "panic".into());
                        (vec![error_row(&spec.key, spec.config.trial_seed, &msg)], false)
                    }
                };
                if tx.send((i, rows, ok)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut finished = 0;
        for (i, rows, ok) in rx {
            if io_error.is_some() {
                continue;
            }
            let written = writer.append(&rows).and_then(|()| manifest.append(&pending[i].key));
            if let Err(e) = written {
                abort.store(true, Ordering::Relaxed);
                io_error = Some(e);
                continue;
            }
            finished += 1;
            failed += usize::from(!ok);
            new_rows.extend(rows);
            progress(Progress {
                finished,
                pending: pending.len(),
                failed,
            });
        }
    });
    if let Some(e) = io_error {
        return Err(e);
    }

    let mut rows = kept;
    rows.extend(new_rows);
    let table = ResultsTable::new(rows).sorted();
    table.check_unique()?;
    let sorted_path = out_dir.join(SORTED_RESULTS_FILE);
    std::fs::write(&sorted_path, table.to_canonical_csv()?).map_err(|e| Error::io(&sorted_path, e))?;
    Ok(MatrixOutcome {
        table,
        executed: pending.len(),
        skipped,
        failed,
    })
}
