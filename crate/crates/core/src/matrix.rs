//! Dense complex square matrices, Hermitian eigendecomposition and
//! definiteness classification.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default relative tolerance for definiteness and hermiticity decisions.
pub const DEFAULT_DEFINITENESS_TOL: f64 = 1e-9;

/// Reciprocal condition below which [`CMatrix::inverse`] reports `Singular`.
pub const SINGULAR_RCOND: f64 = 1e-13;

const JACOBI_MAX_SWEEPS: usize = 30;
const JACOBI_REL_OFF: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("matrix is singular (reciprocal condition {rcond:.3e} below {threshold:.1e})")]
    Singular { rcond: f64, threshold: f64 },
    #[error("matrix is not Hermitian (defect {defect:.3e} exceeds {tol:.1e})")]
    NotHermitian { defect: f64, tol: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// Dense `n x n` complex matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{}) [", self.n, self.n)?;
        for i in 0..self.n {
            write!(f, "  ")?;
            for j in 0..self.n {
                let z = self[(i, j)];
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "matrix dimension must be positive");
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, Complex64::new(1.0, 0.0))
    }

    /// `c * I`
    pub fn scalar(n: usize, c: Complex64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = c;
        }
        m
    }

    pub fn from_diag(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let d: Vec<Complex64> = diag.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_diag(&d)
    }

    /// Builds a matrix from row slices; panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "row {i} has wrong length");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    /// Row-major slice of length `n * n`.
    pub fn from_vec(n: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), n * n, "data length must be n*n");
        assert!(n > 0, "matrix dimension must be positive");
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&z| z * c).collect(),
        }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&z| z * c).collect(),
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(j, i)] = self[(i, j)].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// `(M + M*) / 2`
    pub fn hermitian_part(&self) -> Self {
        self.hermitian_sum().scale_real(0.5)
    }

    /// `M + M*`, the unhalved form used in certificate conditions.
    pub fn hermitian_sum(&self) -> Self {
        let n = self.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self[(i, j)] + self[(j, i)].conj();
            }
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `||M - M*||_F / (1 + ||M||_F)`
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self[(i, j)] - self[(j, i)].conj()).norm_sqr();
            }
        }
        acc.sqrt() / (1.0 + self.frobenius_norm())
    }

    pub fn lu(&self) -> Lu {
        Lu::factor(self)
    }

    pub fn determinant(&self) -> Complex64 {
        self.lu().determinant()
    }

    /// Inverse with the default singularity threshold [`SINGULAR_RCOND`].
    pub fn inverse(&self) -> Result<Inverse, MatrixError> {
        self.inverse_with_threshold(SINGULAR_RCOND)
    }

    /// Inverse, rejecting matrices whose reciprocal 1-norm condition number
    /// falls below `min_rcond`.
    pub fn inverse_with_threshold(&self, min_rcond: f64) -> Result<Inverse, MatrixError> {
        let lu = self.lu();
        let Some(inv) = lu.inverse() else {
            return Err(MatrixError::Singular {
                rcond: 0.0,
                threshold: min_rcond,
            });
        };
        let denom = self.norm_one() * inv.norm_one();
        let rcond = if denom.is_finite() && denom > 0.0 {
            1.0 / denom
        } else {
            0.0
        };
        if rcond < min_rcond {
            return Err(MatrixError::Singular {
                rcond,
                threshold: min_rcond,
            });
        }
        Ok(Inverse { matrix: inv, rcond })
    }

    /// Eigendecomposition of a Hermitian matrix with the default tolerance.
    pub fn eig_hermitian(&self) -> Result<HermitianEigen, MatrixError> {
        self.eig_hermitian_tol(DEFAULT_DEFINITENESS_TOL)
    }

    pub fn eig_hermitian_tol(&self, tol: f64) -> Result<HermitianEigen, MatrixError> {
        let defect = self.hermiticity_defect();
        if defect > tol {
            return Err(MatrixError::NotHermitian { defect, tol });
        }
        Ok(jacobi_eigen(&self.hermitian_part()))
    }

    /// Eigenvalues of the Hermitian part `(M + M*)/2`, ascending.
    pub fn hermitian_part_eigenvalues(&self) -> Vec<f64> {
        jacobi_eigen(&self.hermitian_part()).values
    }

    pub fn classify(&self, tol: f64) -> DefinitenessReport {
        classify_definiteness(self, tol)
    }

    /// Stacks `self` over `below` and returns the maximum absolute column
    /// sum of the `2n x n` block.
    pub fn stacked_norm_one(&self, below: &CMatrix) -> f64 {
        assert_eq!(self.n, below.n);
        (0..self.n)
            .map(|j| {
                (0..self.n)
                    .map(|i| self[(i, j)].norm() + below[(i, j)].norm())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;

    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch in add");
        CMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Add for CMatrix {
    type Output = CMatrix;

    fn add(self, rhs: CMatrix) -> CMatrix {
        &self + &rhs
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.n, rhs.n, "dimension mismatch in add");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;

    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch in sub");
        CMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Sub for CMatrix {
    type Output = CMatrix;

    fn sub(self, rhs: CMatrix) -> CMatrix {
        &self - &rhs
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;

    fn neg(self) -> CMatrix {
        CMatrix {
            n: self.n,
            data: self.data.iter().map(|z| -z).collect(),
        }
    }
}

impl Neg for CMatrix {
    type Output = CMatrix;

    fn neg(self) -> CMatrix {
        -&self
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch in mul");
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Mul for CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: CMatrix) -> CMatrix {
        &self * &rhs
    }
}

/// Result of a successful inversion.
#[derive(Debug, Clone)]
pub struct Inverse {
    pub matrix: CMatrix,
    /// Reciprocal of the 1-norm condition number.
    pub rcond: f64,
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl Lu {
    fn factor(m: &CMatrix) -> Self {
        let n = m.n;
        let mut lu = m.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut singular = false;
        for k in 0..n {
            let (piv, pmax) =
                (k..n)
                    .map(|i| (i, lu[i * n + k].norm()))
                    .fold(
                        (k, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pmax == 0.0 || !pmax.is_finite() {
                singular = true;
                continue;
            }
            if piv != k {
                for j in 0..n {
                    lu.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
                sign = -sign;
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in (k + 1)..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= f * u;
                }
            }
        }
        Self {
            n,
            lu,
            perm,
            sign,
            singular,
        }
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn determinant(&self) -> Complex64 {
        if self.singular {
            return Complex64::new(0.0, 0.0);
        }
        let n = self.n;
        (0..n).map(|i| self.lu[i * n + i]).product::<Complex64>() * self.sign
    }

    /// Solves `A x = b` for one right-hand side.
    fn solve_vec(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[i * n + k];
                x[i] = x[i] - l * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let u = self.lu[i * n + k];
                x[i] = x[i] - u * x[k];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }

    pub fn inverse(&self) -> Option<CMatrix> {
        if self.singular {
            return None;
        }
        let n = self.n;
        let mut inv = CMatrix::zeros(n);
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
            e[j] = Complex64::new(1.0, 0.0);
            let col = self.solve_vec(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv.is_finite().then_some(inv)
    }
}

/// Eigenvalues (ascending) and unitary eigenvector matrix (columns).
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// `V diag(values) V*`
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.vectors.dim();
        let mut scaled = self.vectors.clone();
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] *= self.values[j];
            }
        }
        &scaled * &self.vectors.adjoint()
    }
}

/// Cyclic complex Jacobi on a matrix assumed exactly Hermitian.
fn jacobi_eigen(h: &CMatrix) -> HermitianEigen {
    let n = h.dim();
    let mut a = h.clone();
    let mut v = CMatrix::identity(n);
    let target = JACOBI_REL_OFF * h.frobenius_norm();

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let b = a[(p, q)];
                let bn = b.norm();
                if bn == 0.0 {
                    continue;
                }
                let phase = b / bn;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = 0.5 * (2.0 * bn).atan2(aqq - app);
                let (s, c) = theta.sin_cos();
                // G = diag(1, conj(phase)) * [[c, s], [-s, c]] restricted to (p, q)
                let gpp = Complex64::new(c, 0.0);
                let gpq = Complex64::new(s, 0.0);
                let gqp = -phase.conj() * s;
                let gqq = phase.conj() * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * gpp + akq * gqp;
                    a[(k, q)] = akp * gpq + akq * gqq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = gpp.conj() * apk + gqp.conj() * aqk;
                    a[(q, k)] = gpq.conj() * apk + gqq.conj() * aqk;
                }
                a[(p, q)] = Complex64::new(0.0, 0.0);
                a[(q, p)] = Complex64::new(0.0, 0.0);
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * gpp + vkq * gqp;
                    v[(k, q)] = vkp * gpq + vkq * gqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, col)] = v[(k, src)];
        }
    }
    HermitianEigen { values, vectors }
}

fn off_diagonal_norm(a: &CMatrix) -> f64 {
    let n = a.dim();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Definiteness {
    #[serde(rename = "PD")]
    PositiveDefinite,
    #[serde(rename = "PSD")]
    PositiveSemidefinite,
    #[serde(rename = "ND")]
    NegativeDefinite,
    #[serde(rename = "NSD")]
    NegativeSemidefinite,
    Indefinite,
    NotHermitian,
}

impl fmt::Display for Definiteness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Definiteness::PositiveDefinite => "PD",
            Definiteness::PositiveSemidefinite => "PSD",
            Definiteness::NegativeDefinite => "ND",
            Definiteness::NegativeSemidefinite => "NSD",
            Definiteness::Indefinite => "INDEFINITE",
            Definiteness::NotHermitian => "NOT_HERMITIAN",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefinitenessReport {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub hermiticity_defect: f64,
    pub classification: Definiteness,
    pub tolerance_used: f64,
}

impl DefinitenessReport {
    /// `1 + max(|min_eigenvalue|, |max_eigenvalue|)`
    pub fn scale(&self) -> f64 {
        spectral_scale(self.min_eigenvalue, self.max_eigenvalue)
    }

    /// True for PD and PSD labels, and for the zero matrix.
    pub fn is_psd(&self) -> bool {
        self.classification != Definiteness::NotHermitian
            && self.min_eigenvalue >= -self.tolerance_used * self.scale()
    }

    pub fn is_pd(&self) -> bool {
        self.classification == Definiteness::PositiveDefinite
    }

    pub fn is_nsd(&self) -> bool {
        self.classification != Definiteness::NotHermitian
            && self.max_eigenvalue <= self.tolerance_used * self.scale()
    }
}

pub fn spectral_scale(min: f64, max: f64) -> f64 {
    1.0 + min.abs().max(max.abs())
}

/// Classifies the Hermitian part of `m`; reports `NotHermitian` without an
/// eigen-solve when the hermiticity defect exceeds `tol`.
pub fn classify_definiteness(m: &CMatrix, tol: f64) -> DefinitenessReport {
    let defect = m.hermiticity_defect();
    if defect > tol {
        return DefinitenessReport {
            min_eigenvalue: f64::NAN,
            max_eigenvalue: f64::NAN,
            hermiticity_defect: defect,
            classification: Definiteness::NotHermitian,
            tolerance_used: tol,
        };
    }
    let eig = jacobi_eigen(&m.hermitian_part());
    let (min, max) = (eig.min(), eig.max());
    let margin = tol * spectral_scale(min, max);
    let classification = if min > margin {
        Definiteness::PositiveDefinite
    } else if min >= -margin {
        Definiteness::PositiveSemidefinite
    } else if max < -margin {
        Definiteness::NegativeDefinite
    } else if max <= margin {
        Definiteness::NegativeSemidefinite
    } else {
        Definiteness::Indefinite
    };
    DefinitenessReport {
        min_eigenvalue: min,
        max_eigenvalue: max,
        hermiticity_defect: defect,
        classification,
        tolerance_used: tol,
    }
}

/// Shorthand for a complex number.
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn i() -> Complex64 {
        c64(0.0, 1.0)
    }

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        (a - b).frobenius_norm() <= tol
    }

    #[test]
    fn hermitian_part_examples() {
        let m = CMatrix::from_real_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]);
        let expected = CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(m.hermitian_part(), expected);

        let h = CMatrix::from_rows(&[
            vec![c64(2.0, 0.0), c64(1.0, -3.0)],
            vec![c64(1.0, 3.0), c64(-1.0, 0.0)],
        ]);
        assert_eq!(h.hermitian_part(), h);

        let m = CMatrix::from_rows(&[vec![i()]]);
        assert_eq!(m.hermitian_part(), CMatrix::zeros(1));
    }

    #[test]
    fn trace_examples() {
        assert_eq!(CMatrix::identity(3).trace(), c64(3.0, 0.0));
        let m = CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert_eq!(m.trace(), c64(0.0, 0.0));
    }

    #[test]
    fn adjoint_examples() {
        let m = CMatrix::from_rows(&[vec![i(), c64(0.0, 0.0)], vec![c64(2.0, 0.0), c64(0.0, 0.0)]]);
        let expected = CMatrix::from_rows(&[
            vec![-i(), c64(2.0, 0.0)],
            vec![c64(0.0, 0.0), c64(0.0, 0.0)],
        ]);
        assert_eq!(m.adjoint(), expected);
        assert_eq!(m.adjoint().adjoint(), m);
        let h = CMatrix::from_rows(&[
            vec![c64(1.0, 0.0), c64(0.0, 2.0)],
            vec![c64(0.0, -2.0), c64(5.0, 0.0)],
        ]);
        assert_eq!(h.adjoint(), h);
    }

    #[test]
    fn inverse_examples() {
        let id = CMatrix::identity(3);
        assert!(close(&id.inverse().unwrap().matrix, &id, 0.0));

        let d = CMatrix::from_real_diag(&[2.0, 4.0]);
        let di = d.inverse().unwrap();
        assert!(close(
            &di.matrix,
            &CMatrix::from_real_diag(&[0.5, 0.25]),
            1e-15
        ));
        assert!((di.rcond - 0.5).abs() < 1e-15);

        let m = CMatrix::from_real_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        let expected = CMatrix::from_real_rows(&[vec![1.0, -1.0], vec![0.0, 1.0]]);
        assert!(close(&m.inverse().unwrap().matrix, &expected, 1e-15));
    }

    #[test]
    fn inverse_rejects_singular_and_ill_conditioned() {
        let z = CMatrix::zeros(2);
        assert!(matches!(z.inverse(), Err(MatrixError::Singular { .. })));
        let rank1 = CMatrix::from_real_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(rank1.inverse(), Err(MatrixError::Singular { .. })));
        let nearly = CMatrix::from_real_diag(&[1.0, 1e-15]);
        assert!(matches!(
            nearly.inverse(),
            Err(MatrixError::Singular { .. })
        ));
        assert!(CMatrix::from_real_diag(&[1.0, 1e-12]).inverse().is_ok());
    }

    #[test]
    fn inverse_residual_is_small() {
        let m = CMatrix::from_rows(&[
            vec![c64(1.0, 0.5), c64(-2.0, 0.0), c64(0.3, 1.0)],
            vec![c64(0.0, -1.0), c64(4.0, 0.2), c64(1.0, 0.0)],
            vec![c64(2.0, 0.0), c64(0.1, 0.1), c64(-1.0, 3.0)],
        ]);
        let inv = m.inverse().unwrap();
        let resid = (&(&m * &inv.matrix) - &CMatrix::identity(3)).frobenius_norm();
        assert!(resid <= 1e-10 / inv.rcond * 1e-3, "residual {resid}");
    }

    #[test]
    fn determinant_examples() {
        assert_eq!(CMatrix::identity(4).determinant(), c64(1.0, 0.0));
        let t = 0.5;
        assert_eq!(
            CMatrix::from_real_diag(&[1.0 - t]).determinant(),
            c64(0.5, 0.0)
        );
        assert_eq!(CMatrix::zeros(3).determinant(), c64(0.0, 0.0));
        let swap = CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(swap.determinant(), c64(-1.0, 0.0));
    }

    #[test]
    fn eig_hermitian_examples() {
        let e = CMatrix::from_real_diag(&[2.0, 1.0])
            .eig_hermitian()
            .unwrap();
        assert_eq!(e.values, vec![1.0, 2.0]);
        let e = CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])
            .eig_hermitian()
            .unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_hermitian_rejects_non_hermitian() {
        let m = CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert!(matches!(
            m.eig_hermitian(),
            Err(MatrixError::NotHermitian { .. })
        ));
    }

    #[test]
    fn eig_hermitian_complex_reconstruction() {
        let h = CMatrix::from_rows(&[
            vec![c64(2.0, 0.0), c64(1.0, -1.0), c64(0.0, 0.5)],
            vec![c64(1.0, 1.0), c64(-1.0, 0.0), c64(0.25, 0.0)],
            vec![c64(0.0, -0.5), c64(0.25, 0.0), c64(3.0, 0.0)],
        ]);
        let e = h.eig_hermitian().unwrap();
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let vvh = &e.vectors * &e.vectors.adjoint();
        assert!((&vvh - &CMatrix::identity(3)).frobenius_norm() <= 1e-10);
        assert!((&e.reconstruct() - &h).frobenius_norm() <= 1e-10 * (1.0 + h.frobenius_norm()));
    }

    #[test]
    fn classify_examples() {
        let r = classify_definiteness(&CMatrix::identity(3), DEFAULT_DEFINITENESS_TOL);
        assert_eq!(r.classification, Definiteness::PositiveDefinite);

        let r = classify_definiteness(&CMatrix::zeros(2), DEFAULT_DEFINITENESS_TOL);
        assert_eq!(r.classification, Definiteness::PositiveSemidefinite);
        assert_eq!(r.min_eigenvalue, 0.0);
        assert!(r.is_psd() && r.is_nsd());

        let r = classify_definiteness(
            &CMatrix::from_real_diag(&[1.0, -1.0]),
            DEFAULT_DEFINITENESS_TOL,
        );
        assert_eq!(r.classification, Definiteness::Indefinite);

        let r = classify_definiteness(
            &CMatrix::from_real_diag(&[-1.0, -2.0]),
            DEFAULT_DEFINITENESS_TOL,
        );
        assert_eq!(r.classification, Definiteness::NegativeDefinite);
        let r = classify_definiteness(
            &CMatrix::from_real_diag(&[0.0, -2.0]),
            DEFAULT_DEFINITENESS_TOL,
        );
        assert_eq!(r.classification, Definiteness::NegativeSemidefinite);

        let m = CMatrix::from_real_rows(&[vec![1.0, 3.0], vec![0.0, 1.0]]);
        let r = classify_definiteness(&m, DEFAULT_DEFINITENESS_TOL);
        assert_eq!(r.classification, Definiteness::NotHermitian);
        assert!(r.hermiticity_defect > r.tolerance_used);
    }
}
