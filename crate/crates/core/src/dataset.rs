//! Dataset plumbing: the labeled regression/classification container, CSV
//! ingestion with a header row, the binary embedding-matrix format, seeded
//! train/test splitting, and opt-in per-column standardization.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::DesignMatrix;

/// Training pairs `(x_n, y_n)`: an N x M design matrix with an N-vector of
/// real targets (regression) or integer class labels stored as reals.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub features: DesignMatrix,
    pub targets: DVector<f64>,
}

impl LabeledDataset {
    pub fn new(features: DesignMatrix, targets: DVector<f64>) -> Result<Self> {
        if features.nrows() != targets.len() {
            return Err(Error::dims(features.nrows(), targets.len()));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite target".into()));
        }
        Ok(LabeledDataset { features, targets })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn feature_row(&self, i: usize) -> DVector<f64> {
        self.features.matrix().row(i).transpose()
    }

    /// Class labels as `usize`, validating that each target is a
    /// nonnegative integer.
    pub fn class_labels(&self) -> Result<Vec<usize>> {
        self.targets
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::InvalidInput(format!("target {v} is not a class index")))
                }
            })
            .collect()
    }

    /// Copy with one extra sample appended.
    pub fn with_sample(&self, x: &DVector<f64>, y: f64) -> Result<Self> {
        let features = self.features.stack_row(x)?;
        let mut targets = self.targets.as_slice().to_vec();
        targets.push(y);
        LabeledDataset::new(features, DVector::from_vec(targets))
    }

    /// Copy with row `held_out` removed, for leave-one-out loops.
    pub fn without_sample(&self, held_out: usize) -> Result<Self> {
        if self.len() < 2 {
            return Err(Error::InvalidInput(
                "cannot hold out a sample from a singleton set".into(),
            ));
        }
        let rows: Vec<Vec<f64>> = (0..self.len())
            .filter(|&i| i != held_out)
            .map(|i| self.features.matrix().row(i).iter().copied().collect())
            .collect();
        let targets: Vec<f64> = (0..self.len())
            .filter(|&i| i != held_out)
            .map(|i| self.targets[i])
            .collect();
        LabeledDataset::new(DesignMatrix::from_rows(&rows)?, DVector::from_vec(targets))
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidInput("empty subset".into()));
        }
        let rows: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| self.features.matrix().row(i).iter().copied().collect())
            .collect();
        let targets: Vec<f64> = indices.iter().map(|&i| self.targets[i]).collect();
        LabeledDataset::new(DesignMatrix::from_rows(&rows)?, DVector::from_vec(targets))
    }

    /// Seeded shuffle split; `test_fraction` of the rows go to the second set.
    pub fn split_random(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::InvalidInput(format!(
                "test fraction must be in [0, 1), got {test_fraction}"
            )));
        }
        let mut indices: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        let n_test = ((self.len() as f64) * test_fraction).round() as usize;
        let n_test = n_test.min(self.len().saturating_sub(1));
        let (test_idx, train_idx) = indices.split_at(n_test);
        Ok((self.subset(train_idx)?, self.subset(test_idx)?))
    }

    /// Distribution-shift split on one feature column: rows with
    /// `x[column] <= threshold` train, the rest test. The split column is
    /// kept in the features.
    pub fn split_by_column(&self, column: usize, threshold: f64) -> Result<(Self, Self)> {
        if column >= self.dim() {
            return Err(Error::InvalidInput(format!(
                "split column {column} out of range (M = {})",
                self.dim()
            )));
        }
        let train_idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.features.matrix()[(i, column)] <= threshold)
            .collect();
        let test_idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.features.matrix()[(i, column)] > threshold)
            .collect();
        if train_idx.is_empty() || test_idx.is_empty() {
            return Err(Error::InvalidInput(
                "split threshold leaves one side empty".into(),
            ));
        }
        Ok((self.subset(&train_idx)?, self.subset(&test_idx)?))
    }
}

/// Per-column affine map fitted on training data (zero mean, unit variance).
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &DesignMatrix) -> Self {
        let m = features.ncols();
        let n = features.nrows() as f64;
        let mut means = vec![0.0; m];
        let mut stds = vec![0.0; m];
        for j in 0..m {
            let col = features.matrix().column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            means[j] = mean;
            stds[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
        Standardizer { means, stds }
    }

    pub fn transform(&self, features: &DesignMatrix) -> Result<DesignMatrix> {
        if features.ncols() != self.means.len() {
            return Err(Error::dims(self.means.len(), features.ncols()));
        }
        let mut out = features.matrix().clone();
        for j in 0..out.ncols() {
            let mut col = out.column_mut(j);
            for v in col.iter_mut() {
                *v = (*v - self.means[j]) / self.stds[j];
            }
        }
        DesignMatrix::new(out)
    }

    pub fn transform_vector(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.means.len() {
            return Err(Error::dims(self.means.len(), x.len()));
        }
        Ok(DVector::from_fn(x.len(), |i, _| {
            (x[i] - self.means[i]) / self.stds[i]
        }))
    }
}

/// How the target column of a CSV file is chosen.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum TargetColumn {
    /// Right-most column is the target.
    #[default]
    Last,
    /// Column matched by header name.
    Named(String),
}

/// Load a headered numeric CSV into a labeled dataset. Non-numeric cells and
/// ragged rows are rejected with the offending 1-based file line.
pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumn) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.as_ref().display())))?;
    parse_csv(&text, target)
}

pub fn parse_csv(text: &str, target: &TargetColumn) -> Result<LabeledDataset> {
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty CSV".into()))?;
    let header: Vec<&str> = header_line.split(',').map(str::trim).collect();
    let n_cols = header.len();
    if n_cols < 2 {
        return Err(Error::InvalidInput(
            "CSV needs at least one feature column and one target column".into(),
        ));
    }
    let target_idx = match target {
        TargetColumn::Last => n_cols - 1,
        TargetColumn::Named(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("missing target column '{name}'")))?,
    };

    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (idx, line) in lines {
        let file_line = idx + 1; // enumerate is 0-based, lines are 1-based
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != n_cols {
            return Err(Error::InvalidInput(format!(
                "line {file_line}: expected {n_cols} columns, got {}",
                cells.len()
            )));
        }
        let mut row = Vec::with_capacity(n_cols - 1);
        for (j, cell) in cells.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                Error::InvalidInput(format!(
                    "line {file_line}: non-numeric cell '{cell}' in column '{}'",
                    header[j]
                ))
            })?;
            if j == target_idx {
                targets.push(value);
            } else {
                row.push(value);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("CSV has a header but no data rows".into()));
    }
    LabeledDataset::new(DesignMatrix::from_rows(&rows)?, DVector::from_vec(targets))
}

/// Load a headered numeric CSV where every column is a feature.
pub fn load_feature_csv(path: impl AsRef<Path>) -> Result<DesignMatrix> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.as_ref().display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty CSV".into()))?;
    let n_cols = header_line.split(',').count();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let file_line = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != n_cols {
            return Err(Error::InvalidInput(format!(
                "line {file_line}: expected {n_cols} columns, got {}",
                cells.len()
            )));
        }
        let row: Vec<f64> = cells
            .iter()
            .map(|cell| {
                cell.parse().map_err(|_| {
                    Error::InvalidInput(format!("line {file_line}: non-numeric cell '{cell}'"))
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    DesignMatrix::from_rows(&rows)
}

const EMBEDDING_MAGIC: &[u8; 4] = b"PNML";
const EMBEDDING_DTYPE_F64: u32 = 1;

/// Write a matrix in the binary embedding format: 16-byte header
/// (magic "PNML", u32 rows, u32 cols, u32 dtype = 1 for f64), then
/// little-endian f64 entries in row-major order.
pub fn write_embedding_matrix(mut w: impl Write, matrix: &DMatrix<f64>) -> Result<()> {
    let io_err = |e: std::io::Error| Error::InvalidInput(format!("embedding write: {e}"));
    w.write_all(EMBEDDING_MAGIC).map_err(io_err)?;
    w.write_all(&(matrix.nrows() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(matrix.ncols() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&EMBEDDING_DTYPE_F64.to_le_bytes()).map_err(io_err)?;
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            w.write_all(&matrix[(i, j)].to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Read a matrix in the binary embedding format.
pub fn read_embedding_matrix(mut r: impl Read) -> Result<DMatrix<f64>> {
    let io_err = |e: std::io::Error| Error::InvalidInput(format!("embedding read: {e}"));
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(io_err)?;
    if &header[0..4] != EMBEDDING_MAGIC {
        return Err(Error::InvalidInput("bad embedding magic, expected 'PNML'".into()));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let dtype = u32::from_le_bytes(header[12..16].try_into().unwrap());
    if dtype != EMBEDDING_DTYPE_F64 {
        return Err(Error::InvalidInput(format!("unsupported embedding dtype {dtype}")));
    }
    let mut data = vec![0u8; rows * cols * 8];
    r.read_exact(&mut data).map_err(io_err)?;
    let mut matrix = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let off = (i * cols + j) * 8;
            matrix[(i, j)] = f64::from_le_bytes(data[off..off + 8].try_into().unwrap());
        }
    }
    Ok(matrix)
}

/// Load a feature matrix from either format: binary if the file starts with
/// the "PNML" magic, headered CSV otherwise.
pub fn load_matrix_auto(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let bytes = std::fs::read(path.as_ref())
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.as_ref().display())))?;
    if bytes.len() >= 4 && &bytes[0..4] == EMBEDDING_MAGIC {
        read_embedding_matrix(bytes.as_slice())
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::InvalidInput("file is neither PNML binary nor UTF-8 CSV".into()))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty file".into()))?;
        let n_cols = header.split(',').count();
        let mut rows = Vec::new();
        for (idx, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|c| {
                    c.trim().parse().map_err(|_| {
                        Error::InvalidInput(format!("line {}: non-numeric cell '{c}'", idx + 1))
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != n_cols {
                return Err(Error::InvalidInput(format!("line {}: ragged row", idx + 1)));
            }
            rows.push(row);
        }
        Ok(DesignMatrix::from_rows(&rows)?.into_matrix())
    }
}

/// Load class labels from a single-column file (no header), one per line.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.as_ref().display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidInput(format!("line {}: bad label '{l}'", idx + 1)))
        })
        .collect()
}
