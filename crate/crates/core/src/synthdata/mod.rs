//! Synthetic targets and CSV ingestion.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Integer degrees of freedom up to this value draw the chi-square as a sum
/// of squared Gaussians.
const CHI_SUM_MAX: f64 = 32.0;

/// Standard deviations are floored here before dividing.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: expected {expected} fields, found {got}")]
    Ragged { line: u64, expected: usize, got: usize },
    #[error("no data rows")]
    Empty,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { generator: String, seed: u64 },
    File { path: PathBuf, sha256: String, dropped_rows: usize },
}

/// A finite `n × d` sample with optional column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub values: Array2<f64>,
    pub columns: Option<Vec<String>>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

/// How the second funnel coordinate reads `exp(0.5·x₁)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunnelScale {
    /// `x₂ ∼ N(0, exp(0.5·x₁))` with the second argument a variance.
    #[default]
    Variance,
    /// The second argument is a standard deviation.
    Std,
}

fn check_n(n: usize) -> Result<(), DataError> {
    if n == 0 {
        Err(DataError::InvalidParameter("sample size must be at least one".into()))
    } else {
        Ok(())
    }
}

/// One standard student-t draw as `N(0,1) / √(χ²_ν / ν)`.
pub fn student_t_draw<R: Rng + ?Sized>(rng: &mut R, nu: f64, chi: &ChiSquare) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z / (chi.sample(rng) / nu).sqrt()
}

/// Chi-square sampler choosing the sum-of-squares or Gamma route.
#[derive(Debug, Clone, Copy)]
pub enum ChiSquare {
    SumOfSquares(u32),
    Gamma(Gamma<f64>),
}

impl ChiSquare {
    pub fn new(nu: f64) -> Result<Self, DataError> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(DataError::InvalidParameter(format!("degrees of freedom must be positive, got {nu}")));
        }
        if nu.fract() == 0.0 && nu <= CHI_SUM_MAX {
            Ok(Self::SumOfSquares(nu as u32))
        } else {
            let g = Gamma::new(0.5 * nu, 2.0).map_err(|e| DataError::InvalidParameter(e.to_string()))?;
            Ok(Self::Gamma(g))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::SumOfSquares(k) => (0..*k)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    z * z
                })
                .sum(),
            Self::Gamma(g) => g.sample(rng),
        }
    }
}

/// `n` draws of `d` independent standard student-t coordinates.
pub fn gen_iid_t(nu: f64, dim: usize, n: usize, seed: u64) -> Result<Dataset, DataError> {
    check_n(n)?;
    if dim == 0 {
        return Err(DataError::InvalidParameter("dimension must be positive".into()));
    }
    let chi = ChiSquare::new(nu)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_simple_fn((n, dim), || student_t_draw(&mut rng, nu, &chi));
    Ok(Dataset {
        values,
        columns: None,
        provenance: Provenance::Synthetic { generator: format!("iid_t(nu={nu}, d={dim})"), seed },
    })
}

pub fn gen_bivariate_iid_t(nu: f64, n: usize, seed: u64) -> Result<Dataset, DataError> {
    gen_iid_t(nu, 2, n, seed)
}

pub fn gen_gaussian(dim: usize, n: usize, seed: u64) -> Result<Dataset, DataError> {
    check_n(n)?;
    if dim == 0 {
        return Err(DataError::InvalidParameter("dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_simple_fn((n, dim), || rng.sample(StandardNormal));
    Ok(Dataset {
        values,
        columns: None,
        provenance: Provenance::Synthetic { generator: format!("gaussian(d={dim})"), seed },
    })
}

/// Neal's funnel: `x₁ ∼ N(0, 1)`, `x₂ | x₁ ∼ N(0, exp(0.5·x₁))`.
pub fn gen_neals_funnel(n: usize, seed: u64) -> Result<Dataset, DataError> {
    gen_neals_funnel_with(n, seed, FunnelScale::Variance)
}

pub fn gen_neals_funnel_with(n: usize, seed: u64, scale: FunnelScale) -> Result<Dataset, DataError> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros((n, 2));
    let k = match scale {
        FunnelScale::Variance => 0.25,
        FunnelScale::Std => 0.5,
    };
    for mut row in values.rows_mut() {
        let x1: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        row[0] = x1;
        row[1] = (k * x1).exp() * e;
    }
    Ok(Dataset {
        values,
        columns: None,
        provenance: Provenance::Synthetic { generator: format!("funnel({scale:?})").to_lowercase(), seed },
    })
}

/// Reads a comma-separated numeric file. Rows holding NaN or infinite values
/// are dropped and counted.
pub fn load_csv(path: &Path, has_header: bool) -> Result<Dataset, DataError> {
    let io = |source| DataError::Io { path: path.to_path_buf(), source };
    let mut bytes = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(io)?;
    let sha256: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let columns = if has_header {
        let h = reader.headers().map_err(|e| csv_error(&e))?;
        Some(h.iter().map(str::to_string).collect::<Vec<_>>())
    } else {
        None
    };

    let mut flat = Vec::new();
    let mut width = columns.as_ref().map(Vec::len);
    let mut dropped = 0;
    let mut rows = 0;
    let mut row = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(DataError::Ragged { line, expected, got: record.len() });
        }
        row.clear();
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| DataError::Parse { line, message: format!("{field:?} is not a number") })?;
            row.push(v);
        }
        if row.iter().all(|v| v.is_finite()) {
            flat.extend_from_slice(&row);
            rows += 1;
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} rows with NaN or infinite values", path.display());
    }
    let width = match width {
        Some(w) if rows > 0 => w,
        _ => return Err(DataError::Empty),
    };
    let values = Array2::from_shape_vec((rows, width), flat).expect("rows × width values");
    Ok(Dataset {
        values,
        columns,
        provenance: Provenance::File { path: path.to_path_buf(), sha256, dropped_rows: dropped },
    })
}

fn csv_error(e: &csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    DataError::Parse { line, message: e.to_string() }
}

/// Writes `data` as CSV; values use the shortest decimal form that reads
/// back to the same `f64`.
pub fn write_csv(path: &Path, data: &Dataset) -> Result<(), DataError> {
    let io = |source| DataError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    if let Some(cols) = &data.columns {
        writeln!(w, "{}", cols.join(",")).map_err(io)?;
    }
    for row in data.values.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Per-column mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ColumnStats {
    /// Population statistics of `values`; standard deviations below
    /// [`STD_FLOOR`] are floored with a warning.
    pub fn from_values(values: &Array2<f64>) -> Result<Self, DataError> {
        if values.nrows() == 0 {
            return Err(DataError::Empty);
        }
        let mean = values.mean_axis(Axis(0)).expect("nonempty");
        let std: Array1<f64> = values.std_axis(Axis(0), 0.0);
        let std = std
            .iter()
            .enumerate()
            .map(|(j, &s)| {
                if s < STD_FLOOR {
                    log::warn!("column {j} is constant; flooring its standard deviation at {STD_FLOOR}");
                    STD_FLOOR
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean: mean.to_vec(), std })
    }
}

/// `(x − mean) / std` column by column with the given statistics.
pub fn standardize(stats: &ColumnStats, data: &Dataset) -> Result<Dataset, DataError> {
    if stats.mean.len() != data.ncols() {
        return Err(DataError::InvalidParameter(format!(
            "statistics cover {} columns, data has {}",
            stats.mean.len(),
            data.ncols()
        )));
    }
    let mut values = data.values.clone();
    for mut row in values.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - stats.mean[j]) / stats.std[j];
        }
    }
    Ok(Dataset { values, columns: data.columns.clone(), provenance: data.provenance.clone() })
}
