//! Data generation under the null and the spiked alternative, and the Hamiltonian.
//!
//! Under the alternative `Y = sqrt(β/N) u* v*ᵀ + W` with `W` i.i.d. standard normal;
//! under the null `Y = W`. The noise block is always drawn first from the stream, so a
//! spiked draw at β = 0 reproduces the null draw from the same seed.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::Prior;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_rows: usize,
    pub n_cols: usize,
    pub beta: f64,
}

impl ModelParams {
    pub fn new(n_rows: usize, n_cols: usize, beta: f64) -> Result<Self> {
        if n_rows == 0 {
            return Err(Error::param("n", "N must be at least 1"));
        }
        if n_cols == 0 {
            return Err(Error::param("m", "M must be at least 1"));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::param("beta", format!("beta must be finite and >= 0, got {beta}")));
        }
        Ok(ModelParams {
            n_rows,
            n_cols,
            beta,
        })
    }

    /// Aspect ratio M/N.
    pub fn alpha(&self) -> f64 {
        self.n_cols as f64 / self.n_rows as f64
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.cols + j] = x;
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    pub fn neg(&self) -> Matrix {
        self.scaled(-1.0)
    }

    /// `Y x` for `x` of length `cols`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Yᵀ x` for `x` of length `rows`.
    pub fn mul_t_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (o, a) in out.iter_mut().zip(self.row(i)) {
                    *o += xi * a;
                }
            }
        }
        out
    }

    /// `xᵀ Y z`.
    pub fn bilinear(&self, x: &[f64], z: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .filter(|(_, &xi)| xi != 0.0)
            .map(|(i, &xi)| xi * self.row(i).iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    Null,
    Spiked,
}

impl Hypothesis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Hypothesis::Null => "null",
            Hypothesis::Spiked => "spiked",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub data: Matrix,
    pub planted: Option<Planted>,
    pub hypothesis: Hypothesis,
    pub beta: f64,
    pub seed: u64,
}

impl Instance {
    pub fn n_rows(&self) -> usize {
        self.data.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.cols()
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            n_rows: self.n_rows(),
            n_cols: self.n_cols(),
            beta: self.beta,
        }
    }

    /// Wraps a user-supplied matrix as a null-tagged instance.
    pub fn from_matrix(data: Matrix) -> Self {
        Instance {
            data,
            planted: None,
            hypothesis: Hypothesis::Null,
            beta: 0.0,
            seed: 0,
        }
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix { rows, cols, data }
}

pub fn generate_null_with<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R, seed: u64) -> Instance {
    Instance {
        data: gaussian_matrix(params.n_rows, params.n_cols, rng),
        planted: None,
        hypothesis: Hypothesis::Null,
        beta: params.beta,
        seed,
    }
}

pub fn generate_null(params: &ModelParams, seed: u64) -> Instance {
    generate_null_with(params, &mut rng::stream(seed), seed)
}

/// Raw ingredients of a spiked draw; kept separate so several β values can share them.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeParts {
    pub noise: Matrix,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl SpikeParts {
    pub fn draw<R: Rng + ?Sized>(
        n_rows: usize,
        n_cols: usize,
        prior_u: &Prior,
        prior_v: &Prior,
        rng: &mut R,
    ) -> Result<Self> {
        prior_u.ensure_bounded()?;
        prior_v.ensure_bounded()?;
        let noise = gaussian_matrix(n_rows, n_cols, rng);
        let u = prior_u.sample(n_rows, rng)?;
        let v = prior_v.sample(n_cols, rng)?;
        Ok(SpikeParts { noise, u, v })
    }

    /// `Y = sqrt(β/N) u vᵀ + W`.
    pub fn assemble(&self, beta: f64, seed: u64) -> Instance {
        let n = self.noise.rows();
        let m = self.noise.cols();
        let scale = (beta / n as f64).sqrt();
        let mut data = self.noise.clone();
        if scale != 0.0 {
            for i in 0..n {
                let su = scale * self.u[i];
                for j in 0..m {
                    data.data[i * m + j] += su * self.v[j];
                }
            }
        }
        Instance {
            data,
            planted: Some(Planted {
                u: self.u.clone(),
                v: self.v.clone(),
            }),
            hypothesis: Hypothesis::Spiked,
            beta,
            seed,
        }
    }
}

pub fn generate_spiked_with<R: Rng + ?Sized>(
    params: &ModelParams,
    prior_u: &Prior,
    prior_v: &Prior,
    rng: &mut R,
    seed: u64,
) -> Result<Instance> {
    let parts = SpikeParts::draw(params.n_rows, params.n_cols, prior_u, prior_v, rng)?;
    Ok(parts.assemble(params.beta, seed))
}

pub fn generate_spiked(
    params: &ModelParams,
    prior_u: &Prior,
    prior_v: &Prior,
    seed: u64,
) -> Result<Instance> {
    generate_spiked_with(params, prior_u, prior_v, &mut rng::stream(seed), seed)
}

/// Returns `-H(u, v) = sqrt(β/N) uᵀYv - (β/2N) |u|²|v|²`.
pub fn hamiltonian(instance: &Instance, beta: f64, u: &[f64], v: &[f64]) -> Result<f64> {
    neg_hamiltonian(&instance.data, beta, u, v)
}

pub fn neg_hamiltonian(y: &Matrix, beta: f64, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != y.rows() || v.len() != y.cols() {
        return Err(Error::DimensionMismatch(format!(
            "u has length {}, v has length {}, Y is {}x{}",
            u.len(),
            v.len(),
            y.rows(),
            y.cols()
        )));
    }
    let n = y.rows() as f64;
    let uu: f64 = u.iter().map(|x| x * x).sum();
    let vv: f64 = v.iter().map(|x| x * x).sum();
    Ok((beta / n).sqrt() * y.bilinear(u, v) - beta / (2.0 * n) * uu * vv)
}

// ---------------------------------------------------------------------------
// Serialization: a JSON header plus the matrix as CSV or a little-endian f64 block.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFormat {
    Csv,
    F64le,
}

impl MatrixFormat {
    fn extension(&self) -> &'static str {
        match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::F64le => "bin",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceHeader {
    pub schema_version: u32,
    pub n: usize,
    pub m: usize,
    pub beta: f64,
    pub hypothesis: Hypothesis,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted: Option<Planted>,
    pub matrix_format: MatrixFormat,
    pub matrix_file: String,
}

/// Writes `<stem>.json` and `<stem>.csv` / `<stem>.bin`; returns the header path.
pub fn write_instance(instance: &Instance, stem: &Path, format: MatrixFormat) -> Result<PathBuf> {
    let matrix_path = stem.with_extension(format.extension());
    let header_path = stem.with_extension("json");
    let header = InstanceHeader {
        schema_version: 1,
        n: instance.n_rows(),
        m: instance.n_cols(),
        beta: instance.beta,
        hypothesis: instance.hypothesis,
        seed: instance.seed,
        planted: instance.planted.clone(),
        matrix_format: format,
        matrix_file: matrix_path
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string(),
    };
    let mut out = BufWriter::new(fs::File::create(&matrix_path)?);
    match format {
        MatrixFormat::Csv => {
            for i in 0..instance.n_rows() {
                let line: Vec<String> = instance.data.row(i).iter().map(|x| format!("{x:?}")).collect();
                writeln!(out, "{}", line.join(","))?;
            }
        }
        MatrixFormat::F64le => {
            for x in instance.data.as_slice() {
                out.write_all(&x.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    fs::write(&header_path, serde_json::to_string_pretty(&header)?)?;
    Ok(header_path)
}

pub fn read_instance(header_path: &Path) -> Result<Instance> {
    let header: InstanceHeader = serde_json::from_str(&fs::read_to_string(header_path)?)?;
    let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
    let matrix_path = dir.join(&header.matrix_file);
    let data = match header.matrix_format {
        MatrixFormat::Csv => {
            let text = fs::read_to_string(&matrix_path)?;
            let mut values = Vec::with_capacity(header.n * header.m);
            for (line_no, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
                let row: Vec<f64> = line
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", line_no + 1)))?;
                if row.len() != header.m {
                    return Err(Error::Format(format!(
                        "line {} has {} values, expected {}",
                        line_no + 1,
                        row.len(),
                        header.m
                    )));
                }
                values.extend(row);
            }
            values
        }
        MatrixFormat::F64le => {
            let bytes = fs::read(&matrix_path)?;
            if bytes.len() != 8 * header.n * header.m {
                return Err(Error::Format(format!(
                    "binary block has {} bytes, expected {}",
                    bytes.len(),
                    8 * header.n * header.m
                )));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect()
        }
    };
    let data = Matrix::from_row_major(header.n, header.m, data)
        .map_err(|e| Error::Format(e.to_string()))?;
    if header.planted.is_some() != (header.hypothesis == Hypothesis::Spiked) {
        return Err(Error::Format("planted factors present iff hypothesis is spiked".into()));
    }
    if let Some(p) = &header.planted {
        if p.u.len() != header.n || p.v.len() != header.m {
            return Err(Error::Format("planted factor lengths do not match N, M".into()));
        }
    }
    Ok(Instance {
        data,
        planted: header.planted,
        hypothesis: header.hypothesis,
        beta: header.beta,
        seed: header.seed,
    })
}
