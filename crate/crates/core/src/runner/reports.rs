use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analysis::{
    always_on_summary, batch_setting_pairs, expected_improvement, improvement_records, random_control_records,
    rank_comparison, variance_profile, wilcoxon_signed_rank, Alternative, Factor, Fixed, ImprovementRecord, ScorePoint,
};
use crate::error::{Error, Result};
use crate::qstrat::StrategyId;
use crate::runner::results::ResultsTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReportKind {
    DeltaCurves,
    HeatmapCells,
    AlwaysOn,
    VarianceProfile,
    Tests,
}

impl ReportKind {
    pub const ALL: [ReportKind; 5] = [
        ReportKind::DeltaCurves,
        ReportKind::HeatmapCells,
        ReportKind::AlwaysOn,
        ReportKind::VarianceProfile,
        ReportKind::Tests,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportKind::DeltaCurves => "delta_curves",
            ReportKind::HeatmapCells => "heatmap_cells",
            ReportKind::AlwaysOn => "always_on",
            ReportKind::VarianceProfile => "variance_profile",
            ReportKind::Tests => "tests",
        }
    }
}

impl FromStr for ReportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReportKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown report kind `{s}`")))
    }
}

/// Every (pipeline, dataset, b, s) holding a non-random strategy must also
/// hold random rows.
fn check_baselines(points: &[ScorePoint]) -> Result<()> {
    let cell = |p: &ScorePoint| (p.pipeline.clone(), p.dataset.clone(), p.batch, p.seed_size);
    let have: BTreeSet<_> = points.iter().filter(|p| p.strategy.is_random()).map(cell).collect();
    for p in points.iter().filter(|p| !p.strategy.is_random()) {
        if !have.contains(&cell(p)) {
            return Err(Error::MissingBaseline(format!(
                "pipeline {} dataset {} b={} s={}",
                p.pipeline, p.dataset, p.batch, p.seed_size
            )));
        }
    }
    Ok(())
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
}

fn delta_curves(records: &[ImprovementRecord], control: &[ImprovementRecord]) -> Result<String> {
    type Key = (String, String, String, usize, usize, usize, usize);
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for (r, label) in records
        .iter()
        .map(|r| (r, r.strategy.as_str()))
        .chain(control.iter().map(|r| (r, "random_control")))
    {
        groups
            .entry((r.pipeline.clone(), r.dataset.clone(), label.to_string(), r.batch, r.seed_size, r.source_n, r.n))
            .or_default()
            .push(r.delta);
    }
    let rows = groups
        .into_iter()
        .map(|((h, d, q, b, s, n, aligned), v)| {
            let (m, sd) = mean_std(&v);
            vec![h, d, q, b.to_string(), s.to_string(), n.to_string(), aligned.to_string(), m.to_string(), sd.to_string(), v.len().to_string()]
        })
        .collect();
    csv_text(
        &["pipeline", "dataset", "strategy", "b", "s", "n", "aligned_n", "mean_delta", "std_delta", "count"],
        rows,
    )
}

fn heatmap_cells(records: &[ImprovementRecord]) -> Result<String> {
    let cells: BTreeSet<(String, StrategyId, usize)> =
        records.iter().map(|r| (r.pipeline.clone(), r.strategy, r.n)).collect();
    let mut rows = Vec::new();
    for (h, q, n) in cells {
        let fixed = Fixed {
            pipeline: Some(h.clone()),
            strategy: Some(q),
            ..Fixed::default()
        };
        let count = records.iter().filter(|r| r.n == n && fixed.matches(r)).count();
        let mean = expected_improvement(records, &fixed, n)?;
        rows.push(vec![h, q.to_string(), n.to_string(), mean.to_string(), count.to_string()]);
    }
    csv_text(&["pipeline", "strategy", "n", "mean_delta", "count"], rows)
}

/// Always-ON table: one row for all records, then one per strategy and one
/// per pipeline. Percentages have 2 decimals, means and deviations 4.
pub fn always_on_table(records: &[ImprovementRecord]) -> Result<String> {
    let mut groups: Vec<(String, Vec<f64>)> = vec![("Overall".into(), records.iter().map(|r| r.delta).collect())];
    let strategies: BTreeSet<StrategyId> = records.iter().map(|r| r.strategy).collect();
    for q in strategies {
        groups.push((q.to_string(), records.iter().filter(|r| r.strategy == q).map(|r| r.delta).collect()));
    }
    let pipelines: BTreeSet<&str> = records.iter().map(|r| r.pipeline.as_str()).collect();
    for h in pipelines {
        groups.push((h.to_string(), records.iter().filter(|r| r.pipeline == h).map(|r| r.delta).collect()));
    }
    let mut rows = Vec::new();
    for (label, deltas) in groups {
        let s = always_on_summary(&deltas)?;
        rows.push(vec![
            label,
            format!("{:.2}", s.pct_negative),
            opt(s.mean_nonneg, 4),
            format!("{:.4}", s.mean),
            opt(s.std_nonneg, 4),
            format!("{:.4}", s.std),
        ]);
    }
    csv_text(&["avg_for", "pct_negative", "mean_nonneg", "mean", "std_nonneg", "std"], rows)
}

fn variance_table(points: &[ScorePoint]) -> Result<String> {
    let rows = variance_profile(points)?
        .into_iter()
        .map(|v| {
            vec![v.batch.to_string(), v.seed_size.to_string(), v.n.to_string(), v.variance.to_string(), v.cells.to_string()]
        })
        .collect();
    csv_text(&["b", "s", "n", "variance", "cells"], rows)
}

const TEST_HEADER: [&str; 9] = ["test", "factor", "subject", "statistic", "df", "p_value", "n", "treatments", "kendall_w"];

fn tests_table(points: &[ScorePoint], records: &[ImprovementRecord]) -> Result<String> {
    let mut rows: Vec<Vec<String>> = Vec::new();
    for factor in [Factor::Strategy, Factor::Pipeline] {
        let Ok(c) = rank_comparison(records, factor) else {
            continue;
        };
        rows.push(vec![
            "friedman".into(),
            factor.as_str().into(),
            c.treatments.join(";"),
            c.friedman.statistic.to_string(),
            c.friedman.df.to_string(),
            c.friedman.p_value.to_string(),
            c.blocks.to_string(),
            c.treatments.len().to_string(),
            c.kendall_w.to_string(),
        ]);
    }

    let settings: Vec<(usize, usize)> = records
        .iter()
        .map(|r| (r.batch, r.seed_size))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    for (i, &a) in settings.iter().enumerate() {
        for &b in &settings[i + 1..] {
            let (x, y) = batch_setting_pairs(records, a, b);
            if x.is_empty() {
                continue;
            }
            let subject = format!("{}:{} vs {}:{}", a.0, a.1, b.0, b.1);
            rows.push(wilcoxon_row("batch_seed", subject, &x, &y, Alternative::TwoSided));
        }
    }

    // each strategy against random on the same trials, per dataset
    type Key = (String, String, usize, usize, usize, usize);
    let mut random: BTreeMap<Key, f64> = BTreeMap::new();
    for p in points.iter().filter(|p| p.strategy.is_random() && p.n > p.seed_size) {
        random.insert((p.dataset.clone(), p.pipeline.clone(), p.batch, p.seed_size, p.trial, p.n), p.f1);
    }
    let mut paired: BTreeMap<(String, StrategyId), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in points.iter().filter(|p| !p.strategy.is_random() && p.n > p.seed_size) {
        let key = (p.dataset.clone(), p.pipeline.clone(), p.batch, p.seed_size, p.trial, p.n);
        if let Some(&r) = random.get(&key) {
            let e = paired.entry((p.dataset.clone(), p.strategy)).or_default();
            e.0.push(p.f1);
            e.1.push(r);
        }
    }
    for ((dataset, q), (x, y)) in paired {
        rows.push(wilcoxon_row("vs_random", format!("{q}|{dataset}"), &x, &y, Alternative::Greater));
    }
    csv_text(&TEST_HEADER, rows)
}

fn wilcoxon_row(factor: &str, subject: String, x: &[f64], y: &[f64], alt: Alternative) -> Vec<String> {
    let (stat, p) = match wilcoxon_signed_rank(x, y, alt) {
        Ok(r) => (r.statistic.to_string(), r.p_value.to_string()),
        Err(_) => (String::new(), String::new()),
    };
    let mut row = vec!["wilcoxon".into(), factor.into(), subject, stat, String::new(), p];
    row.extend([x.len().to_string(), "2".into(), String::new()]);
    row
}

/// Render one report as CSV text.
pub fn export_report(table: &ResultsTable, kind: ReportKind) -> Result<String> {
    let points = table.score_points();
    if points.is_empty() {
        return Err(Error::Empty("results table"));
    }
    check_baselines(&points)?;
    let records = improvement_records(&points)?;
    let need_records = || {
        if records.is_empty() {
            Err(Error::Empty("improvement records"))
        } else {
            Ok(())
        }
    };
    match kind {
        ReportKind::DeltaCurves => delta_curves(&records, &random_control_records(&points)?),
        ReportKind::HeatmapCells => {
            need_records()?;
            heatmap_cells(&records)
        }
        ReportKind::AlwaysOn => {
            need_records()?;
            always_on_table(&records)
        }
        ReportKind::VarianceProfile => variance_table(&points),
        ReportKind::Tests => tests_table(&points, &records),
    }
}

/// Write each requested report to `<dir>/<kind>.csv`.
pub fn export_reports(table: &ResultsTable, kinds: &[ReportKind], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for &kind in kinds {
        let path = dir.join(format!("{}.csv", kind.as_str()));
        let text = export_report(table, kind)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Parse an always-on CSV back into `(avg_for, [pct_negative, mean_nonneg,
/// mean, std_nonneg, std])`, absent cells as `None`.
pub fn parse_always_on(text: &str) -> Result<Vec<(String, [Option<f64>; 5])>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let mut vals = [None; 5];
        for (slot, cell) in vals.iter_mut().zip(rec.iter().skip(1)) {
            if !cell.is_empty() {
                *slot = Some(cell.parse().map_err(|_| Error::Parse(format!("bad number `{cell}`")))?);
            }
        }
        out.push((rec[0].to_string(), vals));
    }
    Ok(out)
}
