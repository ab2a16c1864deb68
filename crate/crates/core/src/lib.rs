//! Matrix Riccati differential equations `Z' + Z P Z + Q Z + Z R + S = 0`:
//! adaptive integration with blowup detection, the linear companion system
//! and its Radon continuation, and numerical verification of global
//! existence certificates `(U, Λ, μ)`.

pub mod certify;
pub mod config;
pub mod integrate;
pub mod lemmas;
pub mod matrix;
pub mod riccati;
pub mod suite;
pub mod timefn;

pub use certify::{CertReport, MonitorVerdict, Verdict};
pub use config::RunConfig;
pub use integrate::{IntegratorOptions, LinearFlow, Trajectory, TrajectoryStatus};
pub use matrix::{CMatrix, Definiteness, DefinitenessReport};
pub use riccati::{Certificate, RiccatiProblem};
pub use timefn::{BasisKind, MatrixTimeFn, ScalarBasisTerm};
