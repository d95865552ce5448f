//! Dense matrix storage shared by the Hamiltonian builders, the eigensolver
//! wrapper and the fidelity sums.
//!
//! Most operators in this crate are real symmetric (Dicke, GOE, Poisson), so
//! storage keeps a real variant and only promotes to complex when a complex
//! operand (GUE) is involved.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance used for the Hermiticity check.
pub const HERMITIAN_RTOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum Mat {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

impl Mat {
    pub fn nrows(&self) -> usize {
        match self {
            Mat::Real(m) => m.nrows(),
            Mat::Complex(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Mat::Real(m) => m.ncols(),
            Mat::Complex(m) => m.ncols(),
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        match self {
            Mat::Real(m) => Complex64::new(m[(i, j)], 0.0),
            Mat::Complex(m) => m[(i, j)],
        }
    }

    #[inline]
    pub fn abs_sq(&self, i: usize, j: usize) -> f64 {
        match self {
            Mat::Real(m) => m[(i, j)] * m[(i, j)],
            Mat::Complex(m) => m[(i, j)].norm_sqr(),
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self, Mat::Real(_))
    }

    pub fn to_complex(&self) -> DMatrix<Complex64> {
        match self {
            Mat::Real(m) => m.map(|x| Complex64::new(x, 0.0)),
            Mat::Complex(m) => m.clone(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            Mat::Real(m) => m.iter().fold(0.0, |acc, x| acc.max(x.abs())),
            Mat::Complex(m) => m.iter().fold(0.0, |acc, x| acc.max(x.norm())),
        }
    }

    pub fn frobenius(&self) -> f64 {
        match self {
            Mat::Real(m) => m.norm(),
            Mat::Complex(m) => m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
        }
    }

    /// `self * rhs`, staying real when both operands are real.
    pub fn mul(&self, rhs: &Mat) -> Mat {
        match (self, rhs) {
            (Mat::Real(a), Mat::Real(b)) => Mat::Real(a * b),
            _ => Mat::Complex(self.to_complex() * rhs.to_complex()),
        }
    }

    /// `self† * rhs`.
    pub fn adjoint_mul(&self, rhs: &Mat) -> Mat {
        match (self, rhs) {
            (Mat::Real(a), Mat::Real(b)) => Mat::Real(a.tr_mul(b)),
            _ => Mat::Complex(self.to_complex().ad_mul(&rhs.to_complex())),
        }
    }

    /// Column `j` as a complex vector.
    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.nrows()).map(|i| self.at(i, j)).collect()
    }
}

/// Dense Hermitian operator on a finite Hilbert space.
///
/// Construction checks `A_ij = conj(A_ji)` to [`HERMITIAN_RTOL`] relative to
/// the largest entry.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    mat: Mat,
}

impl HermitianMatrix {
    pub fn from_real(m: DMatrix<f64>) -> Result<Self> {
        Self::new(Mat::Real(m))
    }

    pub fn from_complex(m: DMatrix<Complex64>) -> Result<Self> {
        Self::new(Mat::Complex(m))
    }

    pub fn new(mat: Mat) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                found: mat.ncols(),
            });
        }
        let violation = hermiticity_violation(&mat);
        let scale = mat.max_abs().max(f64::MIN_POSITIVE);
        if violation > HERMITIAN_RTOL * scale {
            return Err(Error::NotHermitian {
                max_violation: violation,
            });
        }
        Ok(Self { mat })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: Mat::Real(DMatrix::identity(dim, dim)),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: Mat::Real(DMatrix::zeros(dim, dim)),
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self {
            mat: Mat::Real(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(
                values,
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn into_mat(self) -> Mat {
        self.mat
    }

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.mat.at(i, j)
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.max_abs()
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: f64, other: &HermitianMatrix) -> Result<HermitianMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let mat = match (&self.mat, &other.mat) {
            (Mat::Real(a), Mat::Real(b)) => Mat::Real(a + b * c),
            _ => Mat::Complex(self.mat.to_complex() + other.mat.to_complex() * Complex64::from(c)),
        };
        Ok(Self { mat })
    }

    /// Principal submatrix on the given indices.
    pub fn restrict(&self, indices: &[usize]) -> HermitianMatrix {
        let n = indices.len();
        let mat = match &self.mat {
            Mat::Real(m) => Mat::Real(DMatrix::from_fn(n, n, |i, j| m[(indices[i], indices[j])])),
            Mat::Complex(m) => {
                Mat::Complex(DMatrix::from_fn(n, n, |i, j| m[(indices[i], indices[j])]))
            }
        };
        Self { mat }
    }

    /// Short hex digest of the entries, used in error messages.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.dim() as u64).to_le_bytes());
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                let z = self.at(i, j);
                h.update(z.re.to_le_bytes());
                h.update(z.im.to_le_bytes());
            }
        }
        hex_string(&h.finalize()[..8])
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Largest `|A_ij - conj(A_ji)|`.
pub fn hermiticity_violation(mat: &Mat) -> f64 {
    let n = mat.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            let d = (mat.at(i, j) - mat.at(j, i).conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

/// Kronecker product `a ⊗ b` with the row index of `a` as the major index.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_hermitian() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(matches!(
            HermitianMatrix::from_real(m),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn complex_hermitian_accepted() {
        let i = Complex64::i();
        let m = DMatrix::from_row_slice(2, 2, &[1.0.into(), i, -i, 2.0.into()]);
        let h = HermitianMatrix::from_complex(m).unwrap();
        assert_eq!(h.at(0, 1), i);
    }

    #[test]
    fn kron_is_major_on_left_factor() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::identity(3, 3);
        let k = kron(&a, &b);
        assert_eq!(k[(0 * 3 + 1, 1 * 3 + 1)], 2.0);
        assert_eq!(k[(1 * 3 + 2, 0 * 3 + 2)], 3.0);
        assert_eq!(k[(0, 4)], 0.0);
    }

    #[test]
    fn restrict_picks_principal_submatrix() {
        let h = HermitianMatrix::diagonal(&[1.0, 2.0, 3.0, 4.0]);
        let r = h.restrict(&[1, 3]);
        assert_eq!(r.dim(), 2);
        assert_eq!(r.at(1, 1).re, 4.0);
    }
}
