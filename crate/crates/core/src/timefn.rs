//! Matrix-valued functions of time built from a closed basis of scalar
//! terms, so that derivatives are exact.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::CMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimeFnError {
    #[error("entry table has {rows} rows, expected a square table of dimension {n}")]
    Shape { n: usize, rows: usize },
    #[error("pieces must start at strictly increasing times")]
    UnorderedPieces,
    #[error("piece dimensions disagree: {0} vs {1}")]
    PieceDimension(usize, usize),
    #[error("basis term parameter is not finite")]
    NonFiniteParameter,
    #[error("function has no pieces")]
    Empty,
}

/// One of the scalar building blocks `t^k`, `sin(w t)`, `cos(w t)`, `exp(a t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BasisKind {
    Const,
    Poly(u32),
    Sin(f64),
    Cos(f64),
    Exp(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarBasisTerm {
    pub kind: BasisKind,
    pub coeff: Complex64,
}

impl ScalarBasisTerm {
    pub fn new(kind: BasisKind, coeff: Complex64) -> Self {
        Self { kind, coeff }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(BasisKind::Const, Complex64::new(c, 0.0))
    }

    pub fn poly(k: u32, c: f64) -> Self {
        Self::new(BasisKind::Poly(k), Complex64::new(c, 0.0))
    }

    pub fn sin(omega: f64, c: f64) -> Self {
        Self::new(BasisKind::Sin(omega), Complex64::new(c, 0.0))
    }

    pub fn cos(omega: f64, c: f64) -> Self {
        Self::new(BasisKind::Cos(omega), Complex64::new(c, 0.0))
    }

    pub fn exp(a: f64, c: f64) -> Self {
        Self::new(BasisKind::Exp(a), Complex64::new(c, 0.0))
    }

    fn is_well_formed(&self) -> bool {
        let param_ok = match self.kind {
            BasisKind::Const | BasisKind::Poly(_) => true,
            BasisKind::Sin(w) | BasisKind::Cos(w) => w.is_finite(),
            BasisKind::Exp(a) => a.is_finite(),
        };
        param_ok && self.coeff.re.is_finite() && self.coeff.im.is_finite()
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        let basis = match self.kind {
            BasisKind::Const => 1.0,
            BasisKind::Poly(k) => t.powi(k as i32),
            BasisKind::Sin(w) => (w * t).sin(),
            BasisKind::Cos(w) => (w * t).cos(),
            BasisKind::Exp(a) => (a * t).exp(),
        };
        self.coeff * basis
    }

    /// Exact derivative as another basis term; `None` when it vanishes.
    pub fn derivative(&self) -> Option<ScalarBasisTerm> {
        let (kind, factor) = match self.kind {
            BasisKind::Const | BasisKind::Poly(0) => return None,
            BasisKind::Poly(1) => (BasisKind::Const, 1.0),
            BasisKind::Poly(k) => (BasisKind::Poly(k - 1), k as f64),
            BasisKind::Sin(w) => (BasisKind::Cos(w), w),
            BasisKind::Cos(w) => (BasisKind::Sin(w), -w),
            BasisKind::Exp(a) => (BasisKind::Exp(a), a),
        };
        if factor == 0.0 {
            return None;
        }
        Some(ScalarBasisTerm::new(kind, self.coeff * factor))
    }

    fn conj(&self) -> Self {
        Self::new(self.kind, self.coeff.conj())
    }
}

/// A finite sum of basis terms.
pub type EntryTerms = Vec<ScalarBasisTerm>;

/// One smooth segment of a piecewise function, valid from `start` until the
/// next piece begins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub start: f64,
    /// Row-major `n x n` table of entry sums.
    pub entries: Vec<EntryTerms>,
}

/// Piecewise matrix function of `t`. Evaluation is right-continuous at
/// breakpoints; before the first piece's start the first piece is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixTimeFn {
    n: usize,
    pieces: Vec<Piece>,
}

impl MatrixTimeFn {
    /// Single smooth piece from a row-major table of `n * n` entry sums.
    pub fn from_entries(n: usize, entries: Vec<EntryTerms>) -> Result<Self, TimeFnError> {
        Self::piecewise(
            n,
            vec![Piece {
                start: f64::NEG_INFINITY,
                entries,
            }],
        )
    }

    pub fn piecewise(n: usize, pieces: Vec<Piece>) -> Result<Self, TimeFnError> {
        if pieces.is_empty() {
            return Err(TimeFnError::Empty);
        }
        for p in &pieces {
            if p.entries.len() != n * n {
                return Err(TimeFnError::Shape {
                    n,
                    rows: p.entries.len(),
                });
            }
            if p.entries.iter().flatten().any(|t| !t.is_well_formed()) {
                return Err(TimeFnError::NonFiniteParameter);
            }
        }
        if pieces.windows(2).any(|w| !(w[0].start < w[1].start)) {
            return Err(TimeFnError::UnorderedPieces);
        }
        Ok(Self { n, pieces })
    }

    pub fn constant(m: &CMatrix) -> Self {
        let n = m.dim();
        let entries = m
            .as_slice()
            .iter()
            .map(|&c| {
                if c == Complex64::new(0.0, 0.0) {
                    vec![]
                } else {
                    vec![ScalarBasisTerm::new(BasisKind::Const, c)]
                }
            })
            .collect();
        Self::from_entries(n, entries).expect("constant table is well formed")
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(&CMatrix::zeros(n))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(&CMatrix::identity(n))
    }

    /// `f(t) * I` for a scalar sum `f`.
    pub fn scalar_times_identity(n: usize, terms: EntryTerms) -> Self {
        let mut entries = vec![vec![]; n * n];
        for i in 0..n {
            entries[i * n + i] = terms.clone();
        }
        Self::from_entries(n, entries).expect("diagonal table is well formed")
    }

    /// Diagonal function with the given entry sums on the diagonal.
    pub fn diagonal(diag: Vec<EntryTerms>) -> Self {
        let n = diag.len();
        let mut entries = vec![vec![]; n * n];
        for (i, d) in diag.into_iter().enumerate() {
            entries[i * n + i] = d;
        }
        Self::from_entries(n, entries).expect("diagonal table is well formed")
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Times at which the definition switches.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces.iter().skip(1).map(|p| p.start).collect()
    }

    pub fn is_breakpoint(&self, t: f64) -> bool {
        self.pieces.iter().skip(1).any(|p| p.start == t)
    }

    fn piece_at(&self, t: f64) -> &Piece {
        let idx = self.pieces.partition_point(|p| p.start <= t);
        &self.pieces[idx.saturating_sub(1)]
    }

    pub fn eval(&self, t: f64) -> CMatrix {
        let piece = self.piece_at(t);
        let data = piece
            .entries
            .iter()
            .map(|terms| terms.iter().map(|term| term.eval(t)).sum())
            .collect();
        CMatrix::from_vec(self.n, data)
    }

    /// Exact derivative at `t`; one-sided (from the right) at breakpoints.
    pub fn deriv(&self, t: f64) -> CMatrix {
        let piece = self.piece_at(t);
        let data = piece
            .entries
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .filter_map(ScalarBasisTerm::derivative)
                    .map(|d| d.eval(t))
                    .sum()
            })
            .collect();
        CMatrix::from_vec(self.n, data)
    }

    /// The derivative as a function in its own right.
    pub fn derivative(&self) -> MatrixTimeFn {
        let pieces = self
            .pieces
            .iter()
            .map(|p| Piece {
                start: p.start,
                entries: p
                    .entries
                    .iter()
                    .map(|terms| {
                        terms
                            .iter()
                            .filter_map(ScalarBasisTerm::derivative)
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        MatrixTimeFn { n: self.n, pieces }
    }

    /// Pointwise conjugate transpose; the basis functions are real for real
    /// `t`, so only coefficients are conjugated.
    pub fn adjoint(&self) -> MatrixTimeFn {
        let n = self.n;
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                let mut entries = vec![vec![]; n * n];
                for i in 0..n {
                    for j in 0..n {
                        entries[j * n + i] =
                            p.entries[i * n + j].iter().map(|t| t.conj()).collect();
                    }
                }
                Piece {
                    start: p.start,
                    entries,
                }
            })
            .collect();
        MatrixTimeFn { n, pieces }
    }

    pub fn scale(&self, alpha: Complex64) -> MatrixTimeFn {
        let pieces = self
            .pieces
            .iter()
            .map(|p| Piece {
                start: p.start,
                entries: p
                    .entries
                    .iter()
                    .map(|terms| {
                        terms
                            .iter()
                            .map(|t| ScalarBasisTerm::new(t.kind, t.coeff * alpha))
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        MatrixTimeFn { n: self.n, pieces }
    }

    /// Sum of two functions over the union of their breakpoints.
    pub fn add(&self, other: &MatrixTimeFn) -> Result<MatrixTimeFn, TimeFnError> {
        if self.n != other.n {
            return Err(TimeFnError::PieceDimension(self.n, other.n));
        }
        let mut starts: Vec<f64> = self
            .pieces
            .iter()
            .chain(&other.pieces)
            .map(|p| p.start)
            .collect();
        starts.sort_by(f64::total_cmp);
        starts.dedup();
        let pieces = starts
            .into_iter()
            .map(|start| {
                let a = self.piece_at(start);
                let b = other.piece_at(start);
                let entries = a
                    .entries
                    .iter()
                    .zip(&b.entries)
                    .map(|(x, y)| x.iter().chain(y).copied().collect())
                    .collect();
                Piece { start, entries }
            })
            .collect();
        Ok(MatrixTimeFn { n: self.n, pieces })
    }

    /// True when every coefficient is real, so the function is real-valued
    /// for real `t`.
    pub fn is_real_valued(&self) -> bool {
        self.pieces
            .iter()
            .flat_map(|p| p.entries.iter().flatten())
            .all(|t| t.coeff.im == 0.0)
    }

    pub fn is_hermitian_valued(&self, grid: &[f64], tol: f64) -> HermitianCheck {
        let mut worst_defect = 0.0;
        let mut worst_t = grid.first().copied().unwrap_or(0.0);
        for &t in grid {
            let d = self.eval(t).hermiticity_defect();
            if d > worst_defect {
                worst_defect = d;
                worst_t = t;
            }
        }
        HermitianCheck {
            hermitian: worst_defect <= tol,
            worst_defect,
            worst_t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermitianCheck {
    pub hermitian: bool,
    pub worst_defect: f64,
    pub worst_t: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::c64;

    fn entry_fn(terms: EntryTerms) -> MatrixTimeFn {
        MatrixTimeFn::from_entries(1, vec![terms]).unwrap()
    }

    #[test]
    fn eval_examples() {
        let id = MatrixTimeFn::identity(3);
        assert_eq!(id.eval(7.25), CMatrix::identity(3));
        let sq = entry_fn(vec![ScalarBasisTerm::poly(2, 1.0)]);
        assert_eq!(sq.eval(2.0)[(0, 0)], c64(4.0, 0.0));
        let f = entry_fn(vec![
            ScalarBasisTerm::sin(1.0, 1.0),
            ScalarBasisTerm::constant(3.0),
        ]);
        assert_eq!(f.eval(0.0)[(0, 0)], c64(3.0, 0.0));
    }

    #[test]
    fn deriv_examples() {
        assert_eq!(MatrixTimeFn::identity(2).deriv(1.3), CMatrix::zeros(2));
        let sq = entry_fn(vec![ScalarBasisTerm::poly(2, 1.0)]);
        assert_eq!(sq.deriv(3.0)[(0, 0)], c64(6.0, 0.0));
        let e = entry_fn(vec![
            ScalarBasisTerm::exp(-2.0, 3.0),
            ScalarBasisTerm::cos(2.0, 1.0),
        ]);
        let t: f64 = 0.7;
        let expected = -6.0 * (-2.0 * t).exp() - 2.0 * (2.0 * t).sin();
        assert!((e.deriv(t)[(0, 0)].re - expected).abs() < 1e-14);
    }

    #[test]
    fn piecewise_is_right_continuous() {
        let f = MatrixTimeFn::piecewise(
            1,
            vec![
                Piece {
                    start: 0.0,
                    entries: vec![vec![ScalarBasisTerm::constant(1.0)]],
                },
                Piece {
                    start: 2.0,
                    entries: vec![vec![ScalarBasisTerm::poly(1, 5.0)]],
                },
            ],
        )
        .unwrap();
        assert_eq!(f.eval(1.999)[(0, 0)], c64(1.0, 0.0));
        assert_eq!(f.eval(2.0)[(0, 0)], c64(10.0, 0.0));
        assert_eq!(f.deriv(2.0)[(0, 0)], c64(5.0, 0.0));
        assert_eq!(f.deriv(1.0)[(0, 0)], c64(0.0, 0.0));
        assert_eq!(f.breakpoints(), vec![2.0]);
        assert!(f.is_breakpoint(2.0) && !f.is_breakpoint(0.0));
        // before the first start the first piece applies
        assert_eq!(f.eval(-1.0)[(0, 0)], c64(1.0, 0.0));
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(
            MatrixTimeFn::from_entries(2, vec![vec![]; 3]),
            Err(TimeFnError::Shape { .. })
        ));
        let bad = vec![
            Piece {
                start: 1.0,
                entries: vec![vec![]],
            },
            Piece {
                start: 1.0,
                entries: vec![vec![]],
            },
        ];
        assert_eq!(
            MatrixTimeFn::piecewise(1, bad),
            Err(TimeFnError::UnorderedPieces)
        );
        assert_eq!(
            MatrixTimeFn::from_entries(1, vec![vec![ScalarBasisTerm::sin(f64::NAN, 1.0)]]),
            Err(TimeFnError::NonFiniteParameter)
        );
    }

    #[test]
    fn hermitian_valued_examples() {
        let grid: Vec<f64> = (0..10).map(|k| k as f64 * 0.5).collect();
        assert!(
            MatrixTimeFn::identity(2)
                .is_hermitian_valued(&grid, 1e-12)
                .hermitian
        );

        let upper = MatrixTimeFn::from_entries(
            2,
            vec![vec![], vec![ScalarBasisTerm::poly(1, 1.0)], vec![], vec![]],
        )
        .unwrap();
        let check = upper.is_hermitian_valued(&grid, 1e-12);
        assert!(!check.hermitian);
        assert!(check.worst_t > 0.0);

        let it = ScalarBasisTerm::new(BasisKind::Poly(1), c64(0.0, 1.0));
        let minus_it = ScalarBasisTerm::new(BasisKind::Poly(1), c64(0.0, -1.0));
        let h = MatrixTimeFn::from_entries(
            2,
            vec![
                vec![ScalarBasisTerm::constant(1.0)],
                vec![it],
                vec![minus_it],
                vec![ScalarBasisTerm::constant(1.0)],
            ],
        )
        .unwrap();
        assert!(h.is_hermitian_valued(&grid, 1e-12).hermitian);
    }

    #[test]
    fn derivative_closure_and_second_derivative() {
        let f = entry_fn(vec![
            ScalarBasisTerm::poly(3, 1.0),
            ScalarBasisTerm::sin(2.0, 1.0),
            ScalarBasisTerm::exp(0.5, 2.0),
        ]);
        let d2 = f.derivative().derivative();
        let t: f64 = 1.1;
        let expected = 6.0 * t - 4.0 * (2.0 * t).sin() + 0.5 * (0.5 * t).exp();
        assert!((d2.eval(t)[(0, 0)].re - expected).abs() < 1e-12);
        assert_eq!(f.derivative().deriv(t), d2.eval(t));
    }

    #[test]
    fn adjoint_conjugates_and_transposes() {
        let f = MatrixTimeFn::from_entries(
            2,
            vec![
                vec![],
                vec![ScalarBasisTerm::new(BasisKind::Exp(0.1), c64(1.0, 2.0))],
                vec![],
                vec![ScalarBasisTerm::constant(3.0)],
            ],
        )
        .unwrap();
        let t = 0.4;
        assert_eq!(f.adjoint().eval(t), f.eval(t).adjoint());
        assert_eq!(f.adjoint().deriv(t), f.deriv(t).adjoint());
    }

    #[test]
    fn real_valued_detection() {
        assert!(entry_fn(vec![ScalarBasisTerm::cos(1.0, 2.0)]).is_real_valued());
        let complex = entry_fn(vec![ScalarBasisTerm::new(BasisKind::Const, c64(0.0, 1e-3))]);
        assert!(!complex.is_real_valued());
    }
}
