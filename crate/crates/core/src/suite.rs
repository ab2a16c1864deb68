//! Bundled problems with hand-built certificates, plus one problem that
//! escapes in finite time. Used by the tests, the CLI examples and the
//! browser demo.

use serde::Serialize;

use crate::certify::Verdict;
use crate::config::RunConfig;
use crate::matrix::DEFAULT_DEFINITENESS_TOL;
use crate::matrix::{c64, CMatrix};
use crate::riccati::{Certificate, RiccatiProblem, DEFAULT_GRID_DENSITY};
use crate::timefn::{MatrixTimeFn, Piece, ScalarBasisTerm};

pub const SUITE_HORIZON: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Certified(Verdict),
    Escapes,
}

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub problem: RiccatiProblem,
    pub certificate: Certificate,
    pub z0: CMatrix,
    pub expect: Expectation,
    /// `P ≥ 0`, `S ≤ 0` Hermitian and `R = Q*`.
    pub comparison_class: bool,
}

impl SuiteEntry {
    pub fn to_config(&self) -> RunConfig {
        RunConfig::from_parts(self.name, &self.problem, Some(&self.certificate), &self.z0)
    }

    pub fn is_certified(&self) -> bool {
        matches!(self.expect, Expectation::Certified(_))
    }
}

fn k(m: CMatrix) -> MatrixTimeFn {
    MatrixTimeFn::constant(&m)
}

fn real(rows: &[Vec<f64>]) -> MatrixTimeFn {
    k(CMatrix::from_real_rows(rows))
}

fn scalar(x: f64) -> MatrixTimeFn {
    k(CMatrix::from_real_diag(&[x]))
}

fn identity_cert(n: usize) -> Certificate {
    Certificate::trivial(n)
}

fn problem(
    p: MatrixTimeFn,
    q: MatrixTimeFn,
    r: MatrixTimeFn,
    s: MatrixTimeFn,
    horizon: f64,
) -> RiccatiProblem {
    RiccatiProblem::new(p, q, r, s, 0.0, horizon).expect("bundled problem is well formed")
}

fn cert(u: MatrixTimeFn, lambda: MatrixTimeFn) -> Certificate {
    Certificate::new(
        u,
        lambda,
        None,
        DEFAULT_GRID_DENSITY,
        DEFAULT_DEFINITENESS_TOL,
    )
    .expect("bundled certificate is well formed")
}

pub fn tanh_2x2() -> SuiteEntry {
    let n = 2;
    SuiteEntry {
        name: "tanh_2x2",
        summary: "Z' + Z^2 - I = 0; Z(t) = tanh-like flow towards I",
        problem: problem(
            MatrixTimeFn::identity(n),
            MatrixTimeFn::zeros(n),
            MatrixTimeFn::zeros(n),
            k(CMatrix::identity(n).scale_real(-1.0)),
            SUITE_HORIZON,
        ),
        certificate: identity_cert(n),
        z0: CMatrix::identity(n).scale_real(0.5),
        expect: Expectation::Certified(Verdict::CertifiedStrict),
        comparison_class: true,
    }
}

pub fn skew_source() -> SuiteEntry {
    SuiteEntry {
        name: "skew_source",
        summary: "non-Hermitian S with S + S* = -2I",
        problem: problem(
            MatrixTimeFn::identity(2),
            MatrixTimeFn::zeros(2),
            MatrixTimeFn::zeros(2),
            real(&[vec![-1.0, 2.0], vec![-2.0, -1.0]]),
            SUITE_HORIZON,
        ),
        certificate: identity_cert(2),
        z0: CMatrix::identity(2),
        expect: Expectation::Certified(Verdict::CertifiedStrict),
        comparison_class: false,
    }
}

/// `P = diag(1, (1+i) e^{t/10})` with `U = P*`; `R` is chosen so that the
/// log-derivative of `U` is absorbed by `μ = -0.1`.
pub fn growing_p_adjoint() -> SuiteEntry {
    let p = MatrixTimeFn::diagonal(vec![
        vec![ScalarBasisTerm::constant(1.0)],
        vec![ScalarBasisTerm::new(
            crate::timefn::BasisKind::Exp(0.1),
            c64(1.0, 1.0),
        )],
    ]);
    let u = p.adjoint();
    SuiteEntry {
        name: "growing_p_adjoint",
        summary: "U = P* with complex exponentially growing P",
        problem: problem(
            p,
            MatrixTimeFn::zeros(2),
            k(CMatrix::from_real_diag(&[-0.1, 0.0])),
            k(CMatrix::identity(2).scale_real(-1.0)),
            SUITE_HORIZON,
        ),
        certificate: cert(u, MatrixTimeFn::zeros(2)),
        z0: CMatrix::identity(2),
        expect: Expectation::Certified(Verdict::CertifiedStrict),
        comparison_class: false,
    }
}

/// `Λ = 0.5 I + 0.2 J` with `J` the rotation generator and `R = -0.4 J`.
pub fn rotating_lambda() -> SuiteEntry {
    let lambda = real(&[vec![0.5, 0.2], vec![-0.2, 0.5]]);
    SuiteEntry {
        name: "rotating_lambda",
        summary: "non-Hermitian Lambda balanced by a skew R",
        problem: problem(
            MatrixTimeFn::identity(2),
            MatrixTimeFn::zeros(2),
            real(&[vec![0.0, -0.4], vec![0.4, 0.0]]),
            k(CMatrix::identity(2).scale_real(-1.0)),
            SUITE_HORIZON,
        ),
        certificate: cert(MatrixTimeFn::identity(2), lambda),
        z0: CMatrix::identity(2),
        expect: Expectation::Certified(Verdict::CertifiedStrict),
        comparison_class: false,
    }
}

/// `q = r = sin t`, `s = -3`, `Λ = 0.5 + 0.25 cos t`.
pub fn oscillating_scalar() -> SuiteEntry {
    let sin =
        || MatrixTimeFn::from_entries(1, vec![vec![ScalarBasisTerm::sin(1.0, 1.0)]]).expect("1x1");
    let lambda = MatrixTimeFn::from_entries(
        1,
        vec![vec![
            ScalarBasisTerm::constant(0.5),
            ScalarBasisTerm::cos(1.0, 0.25),
        ]],
    )
    .expect("1x1");
    SuiteEntry {
        name: "oscillating_scalar",
        summary: "time-varying scalar problem with time-varying Lambda",
        problem: problem(scalar(1.0), sin(), sin(), scalar(-3.0), SUITE_HORIZON),
        certificate: cert(MatrixTimeFn::identity(1), lambda),
        z0: CMatrix::identity(1),
        expect: Expectation::Certified(Verdict::CertifiedStrict),
        comparison_class: true,
    }
}

pub fn complex_drift() -> SuiteEntry {
    let p = CMatrix::from_rows(&[
        vec![c64(2.0, 0.0), c64(0.0, 1.0)],
        vec![c64(0.0, -1.0), c64(1.0, 0.0)],
    ]);
    let q = CMatrix::from_rows(&[
        vec![c64(0.3, 0.5), c64(1.0, 0.0)],
        vec![c64(0.0, -0.2), c64(-0.1, 0.0)],
    ]);
    let s = CMatrix::from_real_rows(&[vec![-1.0, -0.5], vec![-0.5, -2.0]]);
    SuiteEntry {
        name: "complex_drift",
        summary: "complex Q with R = Q*, Hermitian P > 0 and S < 0",
        problem: problem(k(p), k(q.clone()), k(q.adjoint()), k(s), SUITE_HORIZON),
        certificate: identity_cert(2),
        z0: CMatrix::identity(2).scale_real(0.5),
        expect: Expectation::Certified(Verdict::CertifiedStrict),
        comparison_class: true,
    }
}

/// `S` switches at `t = 5` and `t = 20`; the middle piece is not Hermitian.
pub fn switched_source() -> SuiteEntry {
    let c = ScalarBasisTerm::constant;
    let none = Vec::new;
    let s = MatrixTimeFn::piecewise(
        2,
        vec![
            Piece {
                start: 0.0,
                entries: vec![vec![c(-1.0)], none(), none(), vec![c(-1.0)]],
            },
            Piece {
                start: 5.0,
                entries: vec![vec![c(-2.0)], vec![c(1.0)], vec![c(-1.0)], vec![c(-1.0)]],
            },
            Piece {
                start: 20.0,
                entries: vec![
                    vec![c(-1.0), ScalarBasisTerm::sin(0.5, 0.5)],
                    none(),
                    none(),
                    vec![c(-0.5)],
                ],
            },
        ],
    )
    .expect("piecewise S");
    SuiteEntry {
        name: "switched_source",
        summary: "piecewise S with breakpoints, started on the cone boundary",
        problem: problem(
            MatrixTimeFn::identity(2),
            MatrixTimeFn::zeros(2),
            MatrixTimeFn::zeros(2),
            s,
            SUITE_HORIZON,
        ),
        certificate: identity_cert(2),
        z0: CMatrix::zeros(2),
        expect: Expectation::Certified(Verdict::CertifiedNonstrict),
        comparison_class: false,
    }
}

/// 4x4 problem with singular `P ≥ 0`, damping `Q` and `R = Q*`.
pub fn damped_4x4() -> SuiteEntry {
    let q = [
        vec![0.5, 0.1, 0.0, 0.0],
        vec![0.0, 0.5, 0.2, 0.0],
        vec![0.0, 0.0, 0.5, 0.1],
        vec![0.1, 0.0, 0.0, 0.5],
    ];
    let qt: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| q[j][i]).collect()).collect();
    let mut s = vec![vec![0.0; 4]; 4];
    for (i, row) in s.iter_mut().enumerate() {
        row[i] = -1.0;
    }
    s[0][1] = -0.25;
    s[1][0] = -0.25;
    SuiteEntry {
        name: "damped_4x4",
        summary: "4x4 with rank-deficient P and damping drift",
        problem: problem(
            k(CMatrix::from_real_diag(&[1.0, 0.0, 2.0, 0.5])),
            real(&q),
            real(&qt),
            real(&s),
            SUITE_HORIZON,
        ),
        certificate: identity_cert(4),
        z0: CMatrix::zeros(4),
        expect: Expectation::Certified(Verdict::CertifiedNonstrict),
        comparison_class: true,
    }
}

/// `z' - z^2 = 0`, `z(0) = 1`: `z = 1/(1 - t)` escapes at `t = 1`.
pub fn scalar_blowup() -> SuiteEntry {
    SuiteEntry {
        name: "scalar_blowup",
        summary: "z' - z^2 = 0 from z(0) = 1, escapes at t = 1",
        problem: problem(scalar(-1.0), scalar(0.0), scalar(0.0), scalar(0.0), 2.0),
        certificate: identity_cert(1),
        z0: CMatrix::identity(1),
        expect: Expectation::Escapes,
        comparison_class: false,
    }
}

pub fn all() -> Vec<SuiteEntry> {
    vec![
        tanh_2x2(),
        skew_source(),
        growing_p_adjoint(),
        rotating_lambda(),
        oscillating_scalar(),
        complex_drift(),
        switched_source(),
        damped_4x4(),
        scalar_blowup(),
    ]
}

pub fn certified() -> Vec<SuiteEntry> {
    all().into_iter().filter(SuiteEntry::is_certified).collect()
}

pub fn by_name(name: &str) -> Option<SuiteEntry> {
    all().into_iter().find(|e| e.name == name)
}
