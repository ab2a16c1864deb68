//! Seeded randomized checks of the trace and congruence identities the
//! certificate machinery relies on.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::{CMatrix, DEFAULT_DEFINITENESS_TOL};

pub const LEMMA_THRESHOLD: f64 = 1e-10;
pub const DEFAULT_TRIALS: usize = 1000;
pub const MAX_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaSuite {
    TraceCommutes,
    PsdTraceNonnegative,
    CongruencePreservesPsd,
    UnitaryCongruence,
}

impl LemmaSuite {
    pub const ALL: [LemmaSuite; 4] = [
        LemmaSuite::TraceCommutes,
        LemmaSuite::PsdTraceNonnegative,
        LemmaSuite::CongruencePreservesPsd,
        LemmaSuite::UnitaryCongruence,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LemmaSuite::TraceCommutes => "tr(M1 M2) = tr(M2 M1)",
            LemmaSuite::PsdTraceNonnegative => "tr(H1 H2) >= 0 for H1, H2 >= 0",
            LemmaSuite::CongruencePreservesPsd => "V H V* >= 0 for H >= 0",
            LemmaSuite::UnitaryCongruence => "W H W* keeps spectrum and class",
        }
    }

    fn stream(&self) -> u64 {
        *self as u64 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub suite: LemmaSuite,
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    pub worst_residual: f64,
    pub worst_dim: usize,
    pub threshold: f64,
}

impl LemmaReport {
    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

pub fn random_matrix<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let data = (0..n * n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    CMatrix::from_vec(n, data)
}

/// `A A*` with `A` random, optionally rank deficient.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let mut a = random_matrix(rng, n);
    if n > 1 && rng.gen_bool(0.25) {
        let col = rng.gen_range(0..n);
        let mut data = a.into_vec();
        for i in 0..n {
            data[i * n + col] = Complex64::new(0.0, 0.0);
        }
        a = CMatrix::from_vec(n, data);
    }
    &a * &a.adjoint()
}

pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    random_matrix(rng, n).hermitian_part()
}

/// Eigenvector basis of a random Hermitian matrix.
pub fn random_unitary<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    random_hermitian(rng, n)
        .eig_hermitian()
        .expect("Hermitian by construction")
        .vectors
}

fn trial<R: Rng>(suite: LemmaSuite, rng: &mut R, n: usize) -> (f64, bool) {
    match suite {
        LemmaSuite::TraceCommutes => {
            let m1 = random_matrix(rng, n);
            let m2 = random_matrix(rng, n);
            let a = (&m1 * &m2).trace();
            let b = (&m2 * &m1).trace();
            ((a - b).norm() / (1.0 + a.norm()), true)
        }
        LemmaSuite::PsdTraceNonnegative => {
            let h1 = random_psd(rng, n);
            let h2 = random_psd(rng, n);
            let tr = (&h1 * &h2).trace();
            let bound = 1.0 + h1.frobenius_norm() * h2.frobenius_norm();
            ((-tr.re).max(tr.im.abs()).max(0.0) / bound, true)
        }
        LemmaSuite::CongruencePreservesPsd => {
            let v = random_matrix(rng, n);
            let h = random_psd(rng, n);
            let vhv = &(&v * &h) * &v.adjoint();
            let min = vhv.hermitian_part_eigenvalues()[0];
            let vn = v.frobenius_norm();
            ((-min).max(0.0) / (1.0 + vn * vn * h.frobenius_norm()), true)
        }
        LemmaSuite::UnitaryCongruence => {
            let h = match rng.gen_range(0..3) {
                0 => random_psd(rng, n),
                1 => random_psd(rng, n).scale_real(-1.0),
                _ => random_hermitian(rng, n),
            };
            let w = random_unitary(rng, n);
            let whw = (&(&w * &h) * &w.adjoint()).hermitian_part();
            let a = h.hermitian_part_eigenvalues();
            let b = whw.hermitian_part_eigenvalues();
            let diff = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            let same_class = h.classify(DEFAULT_DEFINITENESS_TOL).classification
                == whw.classify(DEFAULT_DEFINITENESS_TOL).classification;
            (diff / (1.0 + h.frobenius_norm()), same_class)
        }
    }
}

/// Runs one suite. Each suite draws from its own stream of the seeded
/// generator, so results do not depend on which other suites run.
pub fn run_suite(suite: LemmaSuite, seed: u64, trials: usize) -> LemmaReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(suite.stream());
    let mut report = LemmaReport {
        suite,
        name: suite.name().to_string(),
        trials,
        failures: 0,
        worst_residual: 0.0,
        worst_dim: 0,
        threshold: LEMMA_THRESHOLD,
    };
    for _ in 0..trials {
        let n = rng.gen_range(1..=MAX_DIM);
        let (residual, consistent) = trial(suite, &mut rng, n);
        if !(residual <= LEMMA_THRESHOLD) || !consistent {
            report.failures += 1;
        }
        if !(residual <= report.worst_residual) {
            report.worst_residual = residual;
            report.worst_dim = n;
        }
    }
    report
}

pub fn run_all(seed: u64, trials: usize) -> Vec<LemmaReport> {
    LemmaSuite::ALL
        .iter()
        .map(|&s| run_suite(s, seed, trials))
        .collect()
}
