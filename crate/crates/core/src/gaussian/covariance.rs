use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the positive-semidefinite check and for factor
/// reconstruction.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// A symmetric positive-semidefinite `d x d` matrix, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CovarianceFile", into = "CovarianceFile")]
pub struct CovarianceMatrix {
    dim: usize,
    entries: Vec<f64>,
}

/// JSON layout: `{"dim": d, "sigma": [[...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceFile {
    pub dim: usize,
    pub sigma: Vec<Vec<f64>>,
}

impl TryFrom<CovarianceFile> for CovarianceMatrix {
    type Error = Error;

    fn try_from(file: CovarianceFile) -> Result<Self> {
        if file.sigma.len() != file.dim {
            return Err(Error::DimensionDeclaration {
                declared: file.dim,
                actual: file.sigma.len(),
            });
        }
        CovarianceMatrix::from_rows(&file.sigma)
    }
}

impl From<CovarianceMatrix> for CovarianceFile {
    fn from(sigma: CovarianceMatrix) -> Self {
        CovarianceFile {
            dim: sigma.dim,
            sigma: sigma.rows(),
        }
    }
}

fn square_entries<R: AsRef<[f64]>>(rows: &[R]) -> Result<Vec<f64>> {
    let d = rows.len();
    let mut entries = Vec::with_capacity(d * d);
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != d {
            return Err(Error::NotSquare {
                rows: d,
                row: i + 1,
                len: row.len(),
            });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        entries.extend_from_slice(row);
    }
    Ok(entries)
}

impl CovarianceMatrix {
    /// Loads a covariance matrix from rows: symmetrises with `(S + S^T) / 2`
    /// and rejects matrices whose smallest eigenvalue is below
    /// `-PSD_TOLERANCE * max(1, spectral norm)`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        Self::from_row_major(dim, square_entries(rows)?)
    }

    pub fn from_row_major(dim: usize, mut entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::LengthMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        for i in 0..dim {
            for j in i + 1..dim {
                let avg = 0.5 * (entries[i * dim + j] + entries[j * dim + i]);
                entries[i * dim + j] = avg;
                entries[j * dim + i] = avg;
            }
        }
        let sigma = Self { dim, entries };
        let (min, norm) = sigma.eigen_extremes();
        let tolerance = PSD_TOLERANCE * norm.max(1.0);
        if min < -tolerance {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: min,
                tolerance,
            });
        }
        Ok(sigma)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        (0..dim).for_each(|i| entries[i * dim + i] = 1.0);
        Self { dim, entries }
    }

    /// `scale * I_d`.
    pub fn scaled_identity(dim: usize, scale: f64) -> Result<Self> {
        let mut entries = vec![0.0; dim * dim];
        (0..dim).for_each(|i| entries[i * dim + i] = scale);
        Self::from_row_major(dim, entries)
    }

    /// `factor^2 * self`; always PSD.
    pub fn scaled(&self, factor: f64) -> Self {
        let c2 = factor * factor;
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|x| x * c2).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `(i, j)`, 0-based.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim.max(1)).map(<[f64]>::to_vec).take(self.dim).collect()
    }

    /// `max_ij |S_ij|`.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `a^T S b`.
    pub fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|i| a[i] * (0..d).map(|j| self.get(i, j) * b[j]).sum::<f64>())
            .sum()
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    /// Smallest eigenvalue and spectral norm.
    fn eigen_extremes(&self) -> (f64, f64) {
        if self.dim == 0 {
            return (0.0, 0.0);
        }
        let eig = SymmetricEigen::new(self.to_matrix());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let norm = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        (min, norm)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen_extremes().0
    }
}

/// A square matrix `A` with `A A^T = S`; its columns `a_1..a_d` drive both
/// sampling (`Y = A z`) and the pairing form of tensor expectations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FactorFile", into = "FactorFile")]
pub struct CholeskyFactor {
    dim: usize,
    entries: Vec<f64>,
}

/// JSON layout: `{"dim": d, "factor": [[...], ...]}` (rows of `A`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorFile {
    pub dim: usize,
    pub factor: Vec<Vec<f64>>,
}

impl TryFrom<FactorFile> for CholeskyFactor {
    type Error = Error;

    fn try_from(file: FactorFile) -> Result<Self> {
        if file.factor.len() != file.dim {
            return Err(Error::DimensionDeclaration {
                declared: file.dim,
                actual: file.factor.len(),
            });
        }
        CholeskyFactor::from_rows(&file.factor)
    }
}

impl From<CholeskyFactor> for FactorFile {
    fn from(a: CholeskyFactor) -> Self {
        FactorFile {
            dim: a.dim,
            factor: a.rows(),
        }
    }
}

impl CholeskyFactor {
    /// Any square matrix is a valid factor of the covariance it induces.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        Ok(Self {
            dim,
            entries: square_entries(rows)?,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        (0..dim).for_each(|i| entries[i * dim + i] = 1.0);
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim.max(1)).map(<[f64]>::to_vec).take(self.dim).collect()
    }

    /// Column `j` (0-based), i.e. the vector `a_{j+1}`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, j)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|j| self.column(j)).collect()
    }

    /// `out = A z`.
    #[inline]
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.entries[i * d..(i + 1) * d];
            *o = row.iter().zip(z).map(|(a, b)| a * b).sum();
        }
    }

    /// `A A^T` as a covariance matrix.
    pub fn covariance(&self) -> Result<CovarianceMatrix> {
        let d = self.dim;
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                entries[i * d + j] = (0..d).map(|m| self.get(i, m) * self.get(j, m)).sum();
            }
        }
        CovarianceMatrix::from_row_major(d, entries)
    }

    /// `max_ij |(A A^T - S)_ij|`.
    pub fn residual(&self, sigma: &CovarianceMatrix) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let aat: f64 = (0..d).map(|m| self.get(i, m) * self.get(j, m)).sum();
                worst = worst.max((aat - sigma.get(i, j)).abs());
            }
        }
        worst
    }
}

/// Factors `S = A A^T`.
///
/// Strictly positive-definite matrices get the lower-triangular Cholesky
/// factor. When the smallest eigenvalue is within `PSD_TOLERANCE * max(1,
/// ||S||)` of zero (or Cholesky breaks down) the factor is `U diag(sqrt(l))`
/// from the symmetric eigendecomposition, with negative eigenvalues clamped
/// to zero.
pub fn cholesky_factor(sigma: &CovarianceMatrix) -> Result<CholeskyFactor> {
    let d = sigma.dim();
    if d == 0 {
        return Ok(CholeskyFactor {
            dim: 0,
            entries: Vec::new(),
        });
    }
    let matrix = sigma.to_matrix();
    let eig = SymmetricEigen::new(matrix.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let norm = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tolerance = PSD_TOLERANCE * norm.max(1.0);
    if min < -tolerance {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
            tolerance,
        });
    }

    let lower = if min > tolerance {
        Cholesky::new(matrix).map(|c| c.l())
    } else {
        None
    };
    let a = lower.unwrap_or_else(|| {
        let mut u = eig.eigenvectors.clone();
        for (j, lambda) in eig.eigenvalues.iter().enumerate() {
            let s = lambda.max(0.0).sqrt();
            u.column_mut(j).scale_mut(s);
        }
        u
    });

    let mut entries = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            entries.push(a[(i, j)]);
        }
    }
    let factor = CholeskyFactor { dim: d, entries };
    let residual = factor.residual(sigma);
    let bound = PSD_TOLERANCE * sigma.max_abs().max(1.0);
    if residual > bound {
        return Err(Error::Numerical(format!(
            "factor reconstruction residual {residual:e} exceeds {bound:e}"
        )));
    }
    Ok(factor)
}
