use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::analysis::ScorePoint;
use crate::error::{Error, Result};
use crate::runner::config::TrialKey;
use crate::trial::RunRecord;

pub const HEADER: [&str; 13] = [
    "dataset",
    "pipeline",
    "strategy",
    "b",
    "s",
    "trial",
    "iteration",
    "n",
    "f1_macro",
    "hyperparameters",
    "flags",
    "seed",
    "wall_ms",
];

pub const FLAG_RESEEDED: &str = "reseeded";
pub const FLAG_CALIBRATION_FALLBACK: &str = "calibration_fallback";
pub const FLAG_ERROR: &str = "error";

/// One results row. Failed trials leave a single row with `iteration` -1,
/// no score and an `error: ...` flag.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub key: TrialKey,
    pub iteration: i64,
    pub n: usize,
    pub f1_macro: Option<f64>,
    pub hyperparameters: String,
    /// `;`-separated.
    pub flags: String,
    pub seed: u64,
    pub wall_ms: f64,
}

impl ResultRow {
    pub fn is_error(&self) -> bool {
        self.iteration < 0
    }

    fn fields(&self, with_wall: bool) -> Vec<String> {
        let k = &self.key;
        let mut f = vec![
            k.dataset.clone(),
            k.pipeline.clone(),
            k.strategy.to_string(),
            k.batch.to_string(),
            k.seed_size.to_string(),
            k.trial.to_string(),
            self.iteration.to_string(),
            self.n.to_string(),
            self.f1_macro.map(|v| v.to_string()).unwrap_or_default(),
            self.hyperparameters.clone(),
            self.flags.clone(),
            self.seed.to_string(),
        ];
        if with_wall {
            f.push(format!("{:.3}", self.wall_ms));
        }
        f
    }

    fn from_record(r: &csv::StringRecord, line: usize) -> Result<Self> {
        if r.len() != HEADER.len() {
            return Err(Error::RaggedRow {
                row: line,
                expected: HEADER.len(),
                found: r.len(),
            });
        }
        let bad = |what: &str| Error::Parse(format!("results row {line}: bad {what}"));
        let int = |i: usize, what: &str| r[i].parse::<usize>().map_err(|_| bad(what));
        Ok(Self {
            key: TrialKey {
                dataset: r[0].to_string(),
                pipeline: r[1].to_string(),
                strategy: r[2].parse()?,
                batch: int(3, "b")?,
                seed_size: int(4, "s")?,
                trial: int(5, "trial")?,
            },
            iteration: r[6].parse().map_err(|_| bad("iteration"))?,
            n: int(7, "n")?,
            f1_macro: if r[8].is_empty() {
                None
            } else {
                Some(r[8].parse().map_err(|_| bad("f1_macro"))?)
            },
            hyperparameters: r[9].to_string(),
            flags: r[10].to_string(),
            seed: r[11].parse().map_err(|_| bad("seed"))?,
            wall_ms: r[12].parse().map_err(|_| bad("wall_ms"))?,
        })
    }
}

/// Rows of one finished trial.
pub fn rows_for_run(key: &TrialKey, run: &RunRecord) -> Vec<ResultRow> {
    run.entries
        .iter()
        .map(|e| {
            let mut flags = Vec::new();
            if run.reseeded {
                flags.push(FLAG_RESEEDED);
            }
            if e.calibration_fallback {
                flags.push(FLAG_CALIBRATION_FALLBACK);
            }
            ResultRow {
                key: key.clone(),
                iteration: e.iteration as i64,
                n: e.labeled,
                f1_macro: Some(e.f1_macro),
                hyperparameters: e.hyperparameters.clone(),
                flags: flags.join(";"),
                seed: run.config.trial_seed,
                wall_ms: e.wall_ms,
            }
        })
        .collect()
}

pub fn error_row(key: &TrialKey, seed: u64, message: &str) -> ResultRow {
    ResultRow {
        key: key.clone(),
        iteration: -1,
        n: 0,
        f1_macro: None,
        hyperparameters: String::new(),
        flags: format!("{FLAG_ERROR}: {}", message.replace(['\n', '\r'], " ")),
        seed,
        wall_ms: 0.0,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

fn row_order(a: &ResultRow, b: &ResultRow) -> std::cmp::Ordering {
    a.key.cmp(&b.key).then(a.iteration.cmp(&b.iteration))
}

impl ResultsTable {
    pub fn new(rows: Vec<ResultRow>) -> Self {
        Self { rows }
    }

    /// Sort by the primary key (dataset, pipeline, strategy, b, s, trial,
    /// iteration).
    pub fn sort(&mut self) {
        self.rows.sort_by(row_order);
    }

    pub fn sorted(mut self) -> Self {
        self.sort();
        self
    }

    /// Reject duplicate primary keys.
    pub fn check_unique(&self) -> Result<()> {
        let mut keys: Vec<(&TrialKey, i64)> = self.rows.iter().map(|r| (&r.key, r.iteration)).collect();
        keys.sort();
        for w in keys.windows(2) {
            if w[0] == w[1] {
                return Err(Error::Parse(format!(
                    "duplicate results row ({}, iteration {})",
                    w[0].0.to_line().replace('\t', ", "),
                    w[0].1
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        Self::render(&self.rows, true)
    }

    /// Sorted table without the wall-clock column; identical across runs of
    /// the same configuration.
    pub fn to_canonical_csv(&self) -> Result<String> {
        let mut rows: Vec<&ResultRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| row_order(a, b));
        Self::render(rows, false)
    }

    fn render<'a>(rows: impl IntoIterator<Item = &'a ResultRow>, with_wall: bool) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = if with_wall { &HEADER[..] } else { &HEADER[..12] };
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.fields(with_wall))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let header = reader.headers()?.clone();
        if header.iter().ne(HEADER.iter().copied()) {
            return Err(Error::Parse(format!("{}: unexpected header", path.display())));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            rows.push(ResultRow::from_record(&rec?, i + 2)?);
        }
        Ok(Self { rows })
    }

    /// Score points of all successful rows.
    pub fn score_points(&self) -> Vec<ScorePoint> {
        self.rows
            .iter()
            .filter_map(|r| {
                Some(ScorePoint {
                    pipeline: r.key.pipeline.clone(),
                    dataset: r.key.dataset.clone(),
                    strategy: r.key.strategy,
                    batch: r.key.batch,
                    seed_size: r.key.seed_size,
                    trial: r.key.trial,
                    n: r.n,
                    f1: r.f1_macro?,
                })
            })
            .collect()
    }
}

/// Appends rows to a results CSV, writing the header when the file is new.
pub struct ResultsWriter {
    writer: csv::Writer<File>,
    path: std::path::PathBuf,
}

impl ResultsWriter {
    pub fn create(path: impl AsRef<Path>, existing: &[ResultRow]) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(HEADER)?;
        for r in existing {
            writer.write_record(r.fields(true))?;
        }
        writer.flush().map_err(|e| Error::io(&path, e))?;
        Ok(Self { writer, path })
    }

    pub fn append(&mut self, rows: &[ResultRow]) -> Result<()> {
        for r in rows {
            self.writer.write_record(r.fields(true))?;
        }
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Completion manifest: one trial key per line, appended after the trial's
/// rows are on disk.
pub struct Manifest {
    file: File,
    path: std::path::PathBuf,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Vec<TrialKey>> {
        let path = path.as_ref();
        match std::fs::read_to_string(path) {
            Ok(text) => text.lines().filter(|l| !l.trim().is_empty()).map(TrialKey::from_line).collect(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn create(path: impl AsRef<Path>, existing: &[TrialKey]) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        for k in existing {
            writeln!(file, "{}", k.to_line()).map_err(|e| Error::io(&path, e))?;
        }
        file.sync_data().map_err(|e| Error::io(&path, e))?;
        Ok(Self { file, path })
    }

    pub fn append(&mut self, key: &TrialKey) -> Result<()> {
        writeln!(self.file, "{}", key.to_line()).map_err(|e| Error::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstrat::StrategyId;

    fn row(trial: usize, iteration: i64) -> ResultRow {
        ResultRow {
            key: TrialKey {
                dataset: "d,1".into(),
                pipeline: "linear".into(),
                strategy: StrategyId::Margin,
                batch: 10,
                seed_size: 10,
                trial,
            },
            iteration,
            n: 10,
            f1_macro: Some(0.1 + 0.2),
            hyperparameters: "C=0.1".into(),
            flags: String::new(),
            seed: u64::MAX,
            wall_ms: 1.25,
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("albench-results-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("r.csv");
        let mut t = ResultsTable::new(vec![row(1, 0), row(0, 1), row(0, 0)]);
        t.rows.push(error_row(&row(2, 0).key, 7, "bad\nthing, really"));
        t.write(&path).unwrap();
        let back = ResultsTable::read(&path).unwrap();
        assert_eq!(back, t);
        let sorted = back.sorted();
        assert_eq!(sorted.rows[0].iteration, 0);
        assert_eq!(sorted.rows[0].key.trial, 0);
        assert!(sorted.rows[3].is_error());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn canonical_form_ignores_order_and_timing() {
        let mut a = ResultsTable::new(vec![row(0, 0), row(0, 1)]);
        let mut b = ResultsTable::new(vec![row(0, 1), row(0, 0)]);
        a.rows[0].wall_ms = 99.0;
        b.rows[0].wall_ms = 3.0;
        assert_eq!(a.to_canonical_csv().unwrap(), b.to_canonical_csv().unwrap());
        assert!(ResultsTable::new(vec![row(0, 0), row(0, 0)]).check_unique().is_err());
    }
}
