//! Embedding datasets: CSV ingestion, label-stratified sampling and
//! validation splits, label entropy, and a synthetic blob generator.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Dense row-major matrix of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: rows * cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::RaggedRow {
                    row: i,
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Gather the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// One dataset: feature vectors with dense integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub id: String,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
    /// Original label strings, indexed by dense class id.
    pub class_names: Vec<String>,
}

impl DatasetBundle {
    pub fn new(
        id: impl Into<String>,
        features: Matrix,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        let class_names = (0..class_count).map(|c| c.to_string()).collect();
        Self::with_names(id, features, labels, class_count, class_names)
    }

    pub fn with_names(
        id: impl Into<String>,
        features: Matrix,
        labels: Vec<usize>,
        class_count: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.rows(),
                right: labels.len(),
            });
        }
        if features.cols() == 0 {
            return Err(Error::InvalidArgument("feature dimension must be > 0".into()));
        }
        if class_count < 2 {
            return Err(Error::TooFewClasses);
        }
        if class_names.len() != class_count {
            return Err(Error::LengthMismatch {
                left: class_names.len(),
                right: class_count,
            });
        }
        let counts = class_counts(&labels, class_count)?;
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::InvalidArgument(format!("class {c} has no instances")));
        }
        Ok(Self {
            id: id.into(),
            features,
            labels,
            class_count,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows at `indices` (kept in ascending order), keeping the class map.
    ///
    /// The subset may lack some classes, so the full-coverage invariant is
    /// not re-checked here.
    pub fn subset(&self, indices: &[usize]) -> DatasetBundle {
        DatasetBundle {
            id: self.id.clone(),
            features: self.features.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            class_names: self.class_names.clone(),
        }
    }
}

/// Instances per class; errors on an out-of-range label.
pub fn class_counts(labels: &[usize], class_count: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; class_count];
    for &y in labels {
        if y >= class_count {
            return Err(Error::InvalidArgument(format!(
                "label {y} outside 0..{class_count}"
            )));
        }
        counts[y] += 1;
    }
    Ok(counts)
}

/// Read a `label,feat_0,..,feat_{d-1}` CSV file.
///
/// Labels are re-encoded densely in first-appearance order; the original
/// strings are kept in `class_names`.
pub fn load_table(path: impl AsRef<Path>) -> Result<DatasetBundle> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(std::io::BufReader::new(file));

    let headers = reader.headers()?.clone();
    let dim = check_header(&headers)?;

    let mut names: Vec<String> = Vec::new();
    let mut lookup: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != dim + 1 {
            return Err(Error::RaggedRow {
                row,
                expected: dim,
                found: record.len().saturating_sub(1),
            });
        }
        let raw = record[0].trim();
        let next = names.len();
        let y = *lookup.entry(raw.to_string()).or_insert_with(|| {
            names.push(raw.to_string());
            next
        });
        labels.push(y);
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Parse(format!("row {row}, feat_{j}: non-numeric cell {cell:?}"))
            })?;
            data.push(v);
        }
    }
    if names.len() < 2 {
        return Err(Error::TooFewClasses);
    }
    let id = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    let features = Matrix::new(labels.len(), dim, data)?;
    let class_count = names.len();
    DatasetBundle::with_names(id, features, labels, class_count, names)
}

fn check_header(headers: &csv::StringRecord) -> Result<usize> {
    if headers.get(0).map(str::trim) != Some("label") {
        return Err(Error::Parse("first column must be `label`".into()));
    }
    let dim = headers.len() - 1;
    if dim == 0 {
        return Err(Error::Parse("no feature columns".into()));
    }
    for (j, h) in headers.iter().skip(1).enumerate() {
        if h.trim() != format!("feat_{j}") {
            return Err(Error::Parse(format!(
                "column {} must be `feat_{j}`, found {h:?}",
                j + 1
            )));
        }
    }
    Ok(dim)
}

/// Write a bundle in the format read by [`load_table`].
pub fn write_table(bundle: &DatasetBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["label".to_string()];
    header.extend((0..bundle.dim()).map(|j| format!("feat_{j}")));
    writer.write_record(&header)?;
    let mut record = Vec::with_capacity(bundle.dim() + 1);
    for (row, &y) in bundle.features.iter_rows().zip(&bundle.labels) {
        record.clear();
        record.push(bundle.class_names[y].clone());
        record.extend(row.iter().map(f64::to_string));
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Largest-remainder apportionment of `total` seats over `weights`.
///
/// Remainders are compared exactly in integer arithmetic; ties go to the
/// smaller index.
pub fn largest_remainder(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let total128 = total as u128;
    let sum128 = sum as u128;
    let mut seats: Vec<usize> = weights
        .iter()
        .map(|&w| (total128 * w as u128 / sum128) as usize)
        .collect();
    let assigned: usize = seats.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = total128 * weights[a] as u128 % sum128;
        let rb = total128 * weights[b] as u128 % sum128;
        rb.cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().take(total - assigned) {
        seats[c] += 1;
    }
    seats
}

fn members_by_class(labels: &[usize], class_count: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); class_count];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    members
}

/// Indices (ascending) of a label-stratified sample of `size` rows.
pub fn stratified_indices(
    labels: &[usize],
    class_count: usize,
    size: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if size > labels.len() {
        return Err(Error::SizeExceedsPopulation {
            requested: size,
            available: labels.len(),
        });
    }
    if size < class_count {
        return Err(Error::InvalidArgument(format!(
            "sample size {size} is smaller than the class count {class_count}"
        )));
    }
    let counts = class_counts(labels, class_count)?;
    let quotas = largest_remainder(size, &counts);
    let mut chosen = Vec::with_capacity(size);
    for (mut members, quota) in members_by_class(labels, class_count).into_iter().zip(quotas) {
        members.shuffle(rng);
        chosen.extend_from_slice(&members[..quota]);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Label-stratified sample of a bundle; row order of the source is kept.
pub fn stratified_sample(bundle: &DatasetBundle, size: usize, rng: &mut Rng) -> Result<DatasetBundle> {
    let idx = stratified_indices(&bundle.labels, bundle.class_count, size, rng)?;
    Ok(bundle.subset(&idx))
}

/// Entropy of the empirical class distribution, in base `class_count`.
pub fn label_entropy(labels: &[usize], class_count: usize) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    if class_count < 2 {
        return Err(Error::TooFewClasses);
    }
    let counts = class_counts(labels, class_count)?;
    let n = labels.len() as f64;
    let base = (class_count as f64).ln();
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln() / base
        })
        .sum();
    Ok(h.clamp(0.0, 1.0))
}

/// Stratified train/validation split of a labeled index set.
///
/// `labels[i]` is the class of `labeled_indices[i]`. The validation size is
/// `round(fraction * n)` (at least 1 when some class can spare a member),
/// apportioned by largest remainder, with every class keeping at least one
/// member in train.
pub fn split_validation(
    labeled_indices: &[usize],
    labels: &[usize],
    fraction: f64,
    rng: &mut Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if labeled_indices.is_empty() {
        return Err(Error::Empty("labeled set"));
    }
    if labeled_indices.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: labeled_indices.len(),
            right: labels.len(),
        });
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction {fraction} outside (0, 1)"
        )));
    }
    let class_count = labels.iter().max().map_or(0, |&m| m + 1);
    let counts = class_counts(labels, class_count)?;
    let capacity: Vec<usize> = counts.iter().map(|&c| c.saturating_sub(1)).collect();
    let spare: usize = capacity.iter().sum();

    let n = labeled_indices.len();
    let mut target = (fraction * n as f64).round() as usize;
    if target == 0 && spare > 0 {
        target = 1;
    }
    let target = target.min(spare);

    let mut quotas = largest_remainder(target, &counts);
    // Move seats from classes over capacity to classes with room, in the
    // same largest-remainder order.
    let mut excess = 0;
    for (q, &cap) in quotas.iter_mut().zip(&capacity) {
        if *q > cap {
            excess += *q - cap;
            *q = cap;
        }
    }
    let n128 = n as u128;
    let mut order: Vec<usize> = (0..class_count).collect();
    order.sort_by(|&a, &b| {
        let ra = target as u128 * counts[a] as u128 % n128;
        let rb = target as u128 * counts[b] as u128 % n128;
        rb.cmp(&ra).then(a.cmp(&b))
    });
    while excess > 0 {
        let mut moved = false;
        for &c in &order {
            if excess > 0 && quotas[c] < capacity[c] {
                quotas[c] += 1;
                excess -= 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }

    let mut train = Vec::with_capacity(n - target);
    let mut validation = Vec::with_capacity(target);
    for (c, mut members) in members_by_class(labels, class_count).into_iter().enumerate() {
        members.shuffle(rng);
        let (val, tr) = members.split_at(quotas[c]);
        validation.extend(val.iter().map(|&p| labeled_indices[p]));
        train.extend(tr.iter().map(|&p| labeled_indices[p]));
    }
    train.sort_unstable();
    validation.sort_unstable();
    Ok((train, validation))
}

/// Class means of a regular simplex with edge `separation`, embedded in
/// `dim` coordinates. Needs `dim >= class_count - 1`.
fn simplex_means(class_count: usize, dim: usize, separation: f64) -> Result<Vec<Vec<f64>>> {
    if dim + 1 < class_count {
        return Err(Error::InvalidArgument(format!(
            "{class_count} equidistant means need at least {} dimensions",
            class_count - 1
        )));
    }
    // Centered scaled basis vectors in R^C have mutual distance `separation`;
    // they span a (C-1)-dim subspace which Gram-Schmidt maps onto the first
    // C-1 coordinates.
    let c = class_count;
    let scale = separation / std::f64::consts::SQRT_2;
    let verts: Vec<Vec<f64>> = (0..c)
        .map(|i| {
            (0..c)
                .map(|j| scale * (if i == j { 1.0 } else { 0.0 } - 1.0 / c as f64))
                .collect()
        })
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in verts.iter().skip(1) {
        let mut u = v.clone();
        for b in &basis {
            let d: f64 = u.iter().zip(b).map(|(x, y)| x * y).sum();
            u.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            u.iter_mut().for_each(|x| *x /= norm);
            basis.push(u);
        }
    }
    Ok(verts
        .iter()
        .map(|v| {
            let mut m = vec![0.0; dim];
            for (k, b) in basis.iter().enumerate() {
                m[k] = v.iter().zip(b).map(|(x, y)| x * y).sum();
            }
            m
        })
        .collect())
}

/// Unit-variance Gaussian clusters whose means are pairwise `separation`
/// apart. Rows cycle through the classes (`row i` has class `i % C`).
pub fn make_blobs(
    class_count: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    rng: &mut Rng,
) -> Result<DatasetBundle> {
    if class_count < 2 {
        return Err(Error::TooFewClasses);
    }
    if dim == 0 || per_class == 0 {
        return Err(Error::InvalidArgument(
            "dim and per_class must be positive".into(),
        ));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "separation {separation} must be finite and non-negative"
        )));
    }
    let means = simplex_means(class_count, dim, separation)?;
    let n = class_count * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % class_count;
        labels.push(y);
        for &mu in &means[y] {
            let z: f64 = rng.sample(StandardNormal);
            data.push(mu + z);
        }
    }
    let id = format!("blobs-c{class_count}-d{dim}-s{separation}");
    DatasetBundle::new(id, Matrix::new(n, dim, data)?, labels, class_count)
}
