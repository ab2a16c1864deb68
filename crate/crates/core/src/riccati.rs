//! Problem and certificate data, the right-hand side of
//! `Z' + Z P Z + Q Z + Z R + S = 0`, and the change of variables
//! `Z = U (L + Λ)` with its derived coefficients.

use thiserror::Error;

use crate::matrix::{CMatrix, Inverse};
use crate::timefn::MatrixTimeFn;

/// Reciprocal condition below which `U(t)` is treated as singular.
pub const U_SINGULAR_RCOND: f64 = 1e-10;

/// Default number of check points per unit time.
pub const DEFAULT_GRID_DENSITY: f64 = 64.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiccatiError {
    #[error("coefficient {name} has dimension {actual}, expected {expected}")]
    DimensionMismatch {
        name: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("horizon {horizon} must exceed start time {t0}")]
    EmptyInterval { t0: f64, horizon: f64 },
    #[error("U(t) is singular at t = {t}")]
    SingularU { t: f64 },
    #[error("mu must be a real-valued 1x1 function")]
    InvalidMu,
    #[error("certificate parameter {0} must be positive and finite")]
    InvalidParameter(&'static str),
}

/// Coefficients and time window of `Z' + Z P(t) Z + Q(t) Z + Z R(t) + S(t) = 0`.
#[derive(Debug, Clone)]
pub struct RiccatiProblem {
    n: usize,
    pub p: MatrixTimeFn,
    pub q: MatrixTimeFn,
    pub r: MatrixTimeFn,
    pub s: MatrixTimeFn,
    pub t0: f64,
    pub horizon: f64,
}

impl RiccatiProblem {
    pub fn new(
        p: MatrixTimeFn,
        q: MatrixTimeFn,
        r: MatrixTimeFn,
        s: MatrixTimeFn,
        t0: f64,
        horizon: f64,
    ) -> Result<Self, RiccatiError> {
        let n = p.dim();
        for (name, f) in [("Q", &q), ("R", &r), ("S", &s)] {
            if f.dim() != n {
                return Err(RiccatiError::DimensionMismatch {
                    name,
                    expected: n,
                    actual: f.dim(),
                });
            }
        }
        if !(horizon > t0) || !t0.is_finite() || !horizon.is_finite() {
            return Err(RiccatiError::EmptyInterval { t0, horizon });
        }
        Ok(Self {
            n,
            p,
            q,
            r,
            s,
            t0,
            horizon,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self, RiccatiError> {
        Self::new(
            self.p.clone(),
            self.q.clone(),
            self.r.clone(),
            self.s.clone(),
            self.t0,
            horizon,
        )
    }

    /// Sorted breakpoints of all coefficients strictly inside `(t0, horizon)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut bps: Vec<f64> = [&self.p, &self.q, &self.r, &self.s]
            .iter()
            .flat_map(|f| f.breakpoints())
            .filter(|&b| b > self.t0 && b < self.horizon)
            .collect();
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        bps
    }

    /// `Z' = -(Z P Z + Q Z + Z R + S)`
    pub fn rhs(&self, t: f64, z: &CMatrix) -> CMatrix {
        let zp = z * &self.p.eval(t);
        let mut out = &zp * z;
        out += &(&self.q.eval(t) * z);
        out += &(z * &self.r.eval(t));
        out += &self.s.eval(t);
        -out
    }
}

/// The certificate `(U, Λ, μ)` with its check-grid settings. When `mu` is
/// `None`, the condition on `R` extracts `μ` from the data.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub u: MatrixTimeFn,
    pub lambda: MatrixTimeFn,
    pub mu: Option<MatrixTimeFn>,
    pub grid_density: f64,
    pub tol: f64,
}

impl Certificate {
    pub fn new(
        u: MatrixTimeFn,
        lambda: MatrixTimeFn,
        mu: Option<MatrixTimeFn>,
        grid_density: f64,
        tol: f64,
    ) -> Result<Self, RiccatiError> {
        if lambda.dim() != u.dim() {
            return Err(RiccatiError::DimensionMismatch {
                name: "Lambda",
                expected: u.dim(),
                actual: lambda.dim(),
            });
        }
        if let Some(mu) = &mu {
            if mu.dim() != 1 || !mu.is_real_valued() {
                return Err(RiccatiError::InvalidMu);
            }
        }
        if !(grid_density > 0.0 && grid_density.is_finite()) {
            return Err(RiccatiError::InvalidParameter("grid_density"));
        }
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(RiccatiError::InvalidParameter("tol"));
        }
        Ok(Self {
            u,
            lambda,
            mu,
            grid_density,
            tol,
        })
    }

    /// `U = I`, `Λ = 0`, `μ` extracted; the certificate behind the classical
    /// comparison regime.
    pub fn trivial(n: usize) -> Self {
        Self::new(
            MatrixTimeFn::identity(n),
            MatrixTimeFn::zeros(n),
            None,
            DEFAULT_GRID_DENSITY,
            crate::matrix::DEFAULT_DEFINITENESS_TOL,
        )
        .expect("identity certificate is valid")
    }

    pub fn dim(&self) -> usize {
        self.u.dim()
    }

    pub fn check_dims(&self, prob: &RiccatiProblem) -> Result<(), RiccatiError> {
        if self.dim() != prob.dim() {
            return Err(RiccatiError::DimensionMismatch {
                name: "U",
                expected: prob.dim(),
                actual: self.dim(),
            });
        }
        Ok(())
    }

    pub fn u_inverse(&self, t: f64) -> Result<Inverse, RiccatiError> {
        self.u
            .eval(t)
            .inverse_with_threshold(U_SINGULAR_RCOND)
            .map_err(|_| RiccatiError::SingularU { t })
    }

    /// Check times: `t0 + k / density` up to the horizon, the horizon
    /// itself, and every coefficient breakpoint in between.
    pub fn grid(&self, prob: &RiccatiProblem) -> Vec<f64> {
        check_grid(
            prob.t0,
            prob.horizon,
            self.grid_density,
            &self.breakpoints_in(prob),
        )
    }

    fn breakpoints_in(&self, prob: &RiccatiProblem) -> Vec<f64> {
        let mut bps = prob.breakpoints();
        for f in [Some(&self.u), Some(&self.lambda), self.mu.as_ref()]
            .into_iter()
            .flatten()
        {
            bps.extend(
                f.breakpoints()
                    .into_iter()
                    .filter(|&b| b > prob.t0 && b < prob.horizon),
            );
        }
        bps
    }
}

pub fn check_grid(t0: f64, horizon: f64, density: f64, extra: &[f64]) -> Vec<f64> {
    let count = ((horizon - t0) * density).floor() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|k| t0 + k as f64 / density).collect();
    grid.retain(|&t| t <= horizon);
    if grid.last().is_none_or(|&t| t < horizon) {
        grid.push(horizon);
    }
    grid.extend_from_slice(extra);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Coefficients of the transformed equation
/// `L' + L A L + Q_UΛ L + L R_UΛ + S_UΛ = 0` at one time, with `A = P U`.
#[derive(Debug, Clone)]
pub struct TransformedCoefficients {
    pub a: CMatrix,
    pub q: CMatrix,
    pub r: CMatrix,
    pub s: CMatrix,
}

impl TransformedCoefficients {
    /// `L' + L A L + Q L + L R + S` for a candidate derivative `dl`.
    pub fn residual(&self, l: &CMatrix, dl: &CMatrix) -> CMatrix {
        let mut out = dl.clone();
        out += &(&(l * &self.a) * l);
        out += &(&self.q * l);
        out += &(l * &self.r);
        out += &self.s;
        out
    }
}

/// Transformed problem evaluated on demand from a certificate and a problem.
#[derive(Debug, Clone, Copy)]
pub struct TransformedProblem<'a> {
    pub cert: &'a Certificate,
    pub prob: &'a RiccatiProblem,
}

impl<'a> TransformedProblem<'a> {
    pub fn new(cert: &'a Certificate, prob: &'a RiccatiProblem) -> Self {
        Self { cert, prob }
    }

    pub fn eval(&self, t: f64) -> Result<TransformedCoefficients, RiccatiError> {
        Ok(TransformedCoefficients {
            a: &self.prob.p.eval(t) * &self.cert.u.eval(t),
            q: q_ul(self.cert, self.prob, t)?,
            r: r_ul(self.cert, self.prob, t),
            s: s_ul(self.cert, self.prob, t)?,
        })
    }
}

/// `S_UΛ = Λ' + Λ P U Λ + [U⁻¹U' + U⁻¹ Q U] Λ + Λ R + U⁻¹ S`
pub fn s_ul(cert: &Certificate, prob: &RiccatiProblem, t: f64) -> Result<CMatrix, RiccatiError> {
    let u_inv = cert.u_inverse(t)?.matrix;
    let u = cert.u.eval(t);
    let du = cert.u.deriv(t);
    let lam = cert.lambda.eval(t);
    let dlam = cert.lambda.deriv(t);
    let pu = &prob.p.eval(t) * &u;

    let bracket = &(&u_inv * &du) + &(&(&u_inv * &prob.q.eval(t)) * &u);
    let mut out = dlam;
    out += &(&(&lam * &pu) * &lam);
    out += &(&bracket * &lam);
    out += &(&lam * &prob.r.eval(t));
    out += &(&u_inv * &prob.s.eval(t));
    Ok(out)
}

/// `Q_UΛ = U⁻¹U' + U⁻¹ Q U + Λ P U`
pub fn q_ul(cert: &Certificate, prob: &RiccatiProblem, t: f64) -> Result<CMatrix, RiccatiError> {
    let u_inv = cert.u_inverse(t)?.matrix;
    let u = cert.u.eval(t);
    let mut out = &u_inv * &cert.u.deriv(t);
    out += &(&(&u_inv * &prob.q.eval(t)) * &u);
    out += &(&(&cert.lambda.eval(t) * &prob.p.eval(t)) * &u);
    Ok(out)
}

/// `R_UΛ = R + P U Λ`
pub fn r_ul(cert: &Certificate, prob: &RiccatiProblem, t: f64) -> CMatrix {
    let pu = &prob.p.eval(t) * &cert.u.eval(t);
    &prob.r.eval(t) + &(&pu * &cert.lambda.eval(t))
}

/// `L = U⁻¹ Z − Λ`
pub fn transform_solution(
    cert: &Certificate,
    t: f64,
    z: &CMatrix,
) -> Result<CMatrix, RiccatiError> {
    let u_inv = cert.u_inverse(t)?.matrix;
    Ok(&(&u_inv * z) - &cert.lambda.eval(t))
}

/// `Z = U (L + Λ)`
pub fn untransform_solution(cert: &Certificate, t: f64, l: &CMatrix) -> CMatrix {
    &cert.u.eval(t) * &(l + &cert.lambda.eval(t))
}
