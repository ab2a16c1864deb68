//! Grid-based verification of the certificate hypotheses, classification of
//! initial values, monitoring of the guaranteed invariant along computed
//! trajectories, and the classical comparison bound `0 ≤ Z ≤ Z̃`.
//!
//! Every verdict produced here means "hypotheses verified numerically on a
//! finite grid with a stated tolerance"; none of it is an analytic proof.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{
    integrate_lyapunov, integrate_riccati, IntegrateError, IntegratorOptions, LyapunovProblem,
    Trajectory, TrajectoryStatus,
};
use crate::matrix::{c64, spectral_scale, CMatrix};
use crate::riccati::{
    check_grid, s_ul, transform_solution, Certificate, RiccatiError, RiccatiProblem,
    U_SINGULAR_RCOND,
};
use crate::timefn::MatrixTimeFn;

/// Default tolerance for the invariant monitor, looser than the condition
/// checks because it absorbs integration error.
pub const DEFAULT_MONITOR_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("P(t) is singular at t = {t}")]
    SingularP { t: f64 },
    #[error("hypothesis violated: {hypothesis} (at t = {t})")]
    HypothesisViolation { hypothesis: String, t: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionOneReport {
    pub pass: bool,
    /// Largest hermiticity defect of `P U` on the grid.
    pub worst_hermiticity_defect: f64,
    /// Smallest eigenvalue of the Hermitian part of `P U` on the grid.
    pub worst_min_eigenvalue: f64,
    pub worst_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTwoReport {
    pub pass: bool,
    /// Largest `||D(t) − μ(t) I||_F` on the grid.
    pub worst_residual: f64,
    pub worst_t: f64,
    pub mu_supplied: bool,
    /// `(t, μ)` per grid point: supplied values, or the real part of the
    /// diagonal mean of `D(t)` when extracted.
    pub mu_samples: Vec<(f64, f64)>,
    /// Extraction diagnostics (zero when `μ` is supplied).
    pub worst_off_diagonal: f64,
    pub worst_diagonal_spread: f64,
    pub worst_mu_imag: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionThreeReport {
    pub pass: bool,
    /// Largest eigenvalue of `S_UΛ + S_UΛ*` on the grid.
    pub worst_max_eigenvalue: f64,
    pub worst_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InitialClass {
    Strict,
    Nonstrict,
    Fail,
}

impl fmt::Display for InitialClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitialClass::Strict => "STRICT",
            InitialClass::Nonstrict => "NONSTRICT",
            InitialClass::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConditionReport {
    pub class: InitialClass,
    /// Smallest eigenvalue of `U⁻¹Z0 + Z0*U⁻* − Λ(t0) − Λ*(t0)`.
    pub gap_min_eigenvalue: f64,
    /// Smallest eigenvalue of `U⁻¹(t0) + U⁻*(t0)`.
    pub u_inverse_sum_min_eigenvalue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    CertifiedStrict,
    CertifiedNonstrict,
    NotCertified,
}

impl Verdict {
    pub fn is_certified(&self) -> bool {
        !matches!(self, Verdict::NotCertified)
    }

    pub fn branch(&self) -> Option<InitialClass> {
        match self {
            Verdict::CertifiedStrict => Some(InitialClass::Strict),
            Verdict::CertifiedNonstrict => Some(InitialClass::Nonstrict),
            Verdict::NotCertified => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::CertifiedStrict => "CERTIFIED_STRICT",
            Verdict::CertifiedNonstrict => "CERTIFIED_NONSTRICT",
            Verdict::NotCertified => "NOT_CERTIFIED",
        })
    }
}

/// Outcome of the three coefficient conditions, independent of `Z0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionsReport {
    pub condition_i: Option<ConditionOneReport>,
    pub condition_ii: Option<ConditionTwoReport>,
    pub condition_iii: Option<ConditionThreeReport>,
    /// First grid time where `U(t)` failed inversion, if any.
    pub singular_u_at: Option<f64>,
}

impl ConditionsReport {
    pub fn all_pass(&self) -> bool {
        self.singular_u_at.is_none()
            && self.condition_i.as_ref().is_some_and(|c| c.pass)
            && self.condition_ii.as_ref().is_some_and(|c| c.pass)
            && self.condition_iii.as_ref().is_some_and(|c| c.pass)
    }

    /// Names of the failed hypotheses, in order.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(t) = self.singular_u_at {
            out.push(format!("SINGULAR_U at t={t}"));
        }
        if self.condition_i.as_ref().is_some_and(|c| !c.pass) {
            out.push("condition_I".into());
        }
        if self.condition_ii.as_ref().is_some_and(|c| !c.pass) {
            out.push("condition_II".into());
        }
        if self.condition_iii.as_ref().is_some_and(|c| !c.pass) {
            out.push("condition_III".into());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub conditions: ConditionsReport,
    pub initial_condition: Option<InitialConditionReport>,
    pub verdict: Verdict,
    pub failed: Vec<String>,
    pub t0: f64,
    pub horizon: f64,
    pub grid_points: usize,
    pub grid_density: f64,
    pub tol: f64,
    pub statement: String,
}

fn grid_for(cert: &Certificate, prob: &RiccatiProblem) -> Result<Vec<f64>, RiccatiError> {
    cert.check_dims(prob)?;
    Ok(cert.grid(prob))
}

/// `P(t) U(t)` Hermitian and positive semidefinite on the grid.
pub fn check_condition_i(
    cert: &Certificate,
    prob: &RiccatiProblem,
) -> Result<ConditionOneReport, RiccatiError> {
    let grid = grid_for(cert, prob)?;
    let tol = cert.tol;
    let mut report = ConditionOneReport {
        pass: true,
        worst_hermiticity_defect: 0.0,
        worst_min_eigenvalue: f64::INFINITY,
        worst_t: prob.t0,
    };
    for &t in &grid {
        cert.u_inverse(t)?;
        let pu = &prob.p.eval(t) * &cert.u.eval(t);
        let defect = pu.hermiticity_defect();
        let eig = pu.hermitian_part_eigenvalues();
        let (min, max) = (eig[0], *eig.last().unwrap());
        let ok = defect <= tol && min >= -tol * spectral_scale(min, max);
        if defect > report.worst_hermiticity_defect {
            report.worst_hermiticity_defect = defect;
        }
        if min < report.worst_min_eigenvalue {
            report.worst_min_eigenvalue = min;
            if report.pass {
                report.worst_t = t;
            }
        }
        if !ok && report.pass {
            report.pass = false;
            report.worst_t = t;
        }
    }
    Ok(report)
}

/// `D(t) = R − (U⁻¹QU)* − PU(Λ* − Λ) − (U⁻¹U')*`, which condition II
/// requires to equal `μ(t) I` with real `μ`.
pub fn condition_ii_defect(
    cert: &Certificate,
    prob: &RiccatiProblem,
    t: f64,
) -> Result<CMatrix, RiccatiError> {
    let u_inv = cert.u_inverse(t)?.matrix;
    let u = cert.u.eval(t);
    let lam = cert.lambda.eval(t);
    let conj_q = (&(&u_inv * &prob.q.eval(t)) * &u).adjoint();
    let pu_skew = &(&prob.p.eval(t) * &u) * &(&lam.adjoint() - &lam);
    let log_deriv = (&u_inv * &cert.u.deriv(t)).adjoint();
    Ok(&(&(&prob.r.eval(t) - &conj_q) - &pu_skew) - &log_deriv)
}

pub fn check_condition_ii(
    cert: &Certificate,
    prob: &RiccatiProblem,
) -> Result<ConditionTwoReport, RiccatiError> {
    let grid = grid_for(cert, prob)?;
    let n = prob.dim();
    let mut report = ConditionTwoReport {
        pass: true,
        worst_residual: 0.0,
        worst_t: prob.t0,
        mu_supplied: cert.mu.is_some(),
        mu_samples: Vec::with_capacity(grid.len()),
        worst_off_diagonal: 0.0,
        worst_diagonal_spread: 0.0,
        worst_mu_imag: 0.0,
    };
    for &t in &grid {
        let d = condition_ii_defect(cert, prob, t)?;
        let mu = match &cert.mu {
            Some(mu) => mu.eval(t)[(0, 0)].re,
            None => {
                let mean = d.trace() / n as f64;
                let mut off = 0.0;
                let mut spread: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            off += d[(i, j)].norm_sqr();
                        }
                    }
                    spread = spread.max((d[(i, i)] - mean).norm());
                }
                report.worst_off_diagonal = report.worst_off_diagonal.max(off.sqrt());
                report.worst_diagonal_spread = report.worst_diagonal_spread.max(spread);
                report.worst_mu_imag = report.worst_mu_imag.max(mean.im.abs());
                mean.re
            }
        };
        report.mu_samples.push((t, mu));
        let residual = (&d - &CMatrix::scalar(n, c64(mu, 0.0))).frobenius_norm();
        if residual > report.worst_residual {
            report.worst_residual = residual;
            report.worst_t = t;
        }
    }
    report.pass = report.worst_residual <= cert.tol;
    Ok(report)
}

/// `S_UΛ(t) + S_UΛ*(t) ≤ 0` on the grid.
pub fn check_condition_iii(
    cert: &Certificate,
    prob: &RiccatiProblem,
) -> Result<ConditionThreeReport, RiccatiError> {
    let grid = grid_for(cert, prob)?;
    let mut report = ConditionThreeReport {
        pass: true,
        worst_max_eigenvalue: f64::NEG_INFINITY,
        worst_t: prob.t0,
    };
    for &t in &grid {
        let sum = s_ul(cert, prob, t)?.hermitian_sum();
        let eig = sum.hermitian_part_eigenvalues();
        let (min, max) = (eig[0], *eig.last().unwrap());
        if max > report.worst_max_eigenvalue {
            report.worst_max_eigenvalue = max;
            if report.pass {
                report.worst_t = t;
            }
        }
        if max > cert.tol * spectral_scale(min, max) && report.pass {
            report.pass = false;
            report.worst_t = t;
        }
    }
    Ok(report)
}

/// `U⁻¹Z + Z*U⁻* − Λ(s) − Λ*(s)` at time `t`.
fn gap_matrix(u_inv: &CMatrix, z: &CMatrix, lambda_at: &CMatrix) -> CMatrix {
    let uz = u_inv * z;
    &uz.hermitian_sum() - &lambda_at.hermitian_sum()
}

/// Classifies `Z0` as inside the open cone (STRICT), on its closure with
/// `U⁻¹(t0) + U⁻*(t0) > 0` (NONSTRICT), or outside (FAIL).
pub fn check_initial_condition(
    cert: &Certificate,
    prob: &RiccatiProblem,
    z0: &CMatrix,
) -> Result<InitialConditionReport, RiccatiError> {
    cert.check_dims(prob)?;
    let t0 = prob.t0;
    let u_inv = cert.u_inverse(t0)?.matrix;
    let gap = gap_matrix(&u_inv, z0, &cert.lambda.eval(t0));
    let g = gap.classify(cert.tol);
    let u_sum = u_inv.hermitian_sum().classify(cert.tol);
    let class = if g.is_pd() {
        InitialClass::Strict
    } else if g.is_psd() && u_sum.is_pd() {
        InitialClass::Nonstrict
    } else {
        InitialClass::Fail
    };
    Ok(InitialConditionReport {
        class,
        gap_min_eigenvalue: g.min_eigenvalue,
        u_inverse_sum_min_eigenvalue: u_sum.min_eigenvalue,
    })
}

fn record_singular<T>(
    res: Result<T, RiccatiError>,
    singular: &mut Option<f64>,
) -> Result<Option<T>, RiccatiError> {
    match res {
        Ok(v) => Ok(Some(v)),
        Err(RiccatiError::SingularU { t }) => {
            *singular = Some(singular.map_or(t, |s| s.min(t)));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Runs conditions I-III; a singular `U(t)` is recorded rather than raised.
pub fn check_conditions(
    cert: &Certificate,
    prob: &RiccatiProblem,
) -> Result<ConditionsReport, RiccatiError> {
    cert.check_dims(prob)?;
    let mut report = ConditionsReport {
        condition_i: None,
        condition_ii: None,
        condition_iii: None,
        singular_u_at: None,
    };
    report.condition_i = record_singular(check_condition_i(cert, prob), &mut report.singular_u_at)?;
    report.condition_ii =
        record_singular(check_condition_ii(cert, prob), &mut report.singular_u_at)?;
    report.condition_iii =
        record_singular(check_condition_iii(cert, prob), &mut report.singular_u_at)?;
    Ok(report)
}

/// Full hypothesis check for one initial value.
pub fn certify(
    cert: &Certificate,
    prob: &RiccatiProblem,
    z0: &CMatrix,
) -> Result<CertReport, RiccatiError> {
    let conditions = check_conditions(cert, prob)?;
    let initial_condition = match check_initial_condition(cert, prob, z0) {
        Ok(r) => Some(r),
        Err(RiccatiError::SingularU { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(assemble_report(cert, prob, conditions, initial_condition))
}

fn assemble_report(
    cert: &Certificate,
    prob: &RiccatiProblem,
    conditions: ConditionsReport,
    initial_condition: Option<InitialConditionReport>,
) -> CertReport {
    let mut failed = conditions.failures();
    let class = initial_condition
        .as_ref()
        .map_or(InitialClass::Fail, |r| r.class);
    if class == InitialClass::Fail {
        failed.push("initial_condition".into());
    }
    let verdict = match (conditions.all_pass(), class) {
        (true, InitialClass::Strict) => Verdict::CertifiedStrict,
        (true, InitialClass::Nonstrict) => Verdict::CertifiedNonstrict,
        _ => Verdict::NotCertified,
    };
    log::debug!("certificate verdict {verdict}, failed {failed:?}");
    let grid = cert.grid(prob);
    let statement = format!(
        "hypotheses verified numerically on a grid of {} points ({} per unit time) over [{}, {}] with tolerance {:e}",
        grid.len(),
        cert.grid_density,
        prob.t0,
        prob.horizon,
        cert.tol
    );
    CertReport {
        conditions,
        initial_condition,
        verdict,
        failed,
        t0: prob.t0,
        horizon: prob.horizon,
        grid_points: grid.len(),
        grid_density: cert.grid_density,
        tol: cert.tol,
        statement,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t: f64,
    /// Smallest eigenvalue of `U⁻¹Z + Z*U⁻* − Λ(t) − Λ*(t)`.
    pub gap_min_eigenvalue: f64,
    /// Same with `Λ(t) + Λ*(t0)` on the right.
    pub gap_min_eigenvalue_t0_variant: f64,
    /// Smallest eigenvalue of `L + L*`, `L = U⁻¹Z − Λ`.
    pub l_hermitian_min: f64,
    pub scale: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MonitorVerdict {
    Holds,
    Violated { first_t: f64 },
    NotCertified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorOutcome {
    pub verdict: MonitorVerdict,
    pub records: Vec<MonitorRecord>,
    /// Samples skipped because `U(t)` failed inversion.
    pub skipped: Vec<f64>,
    /// Smallest `gap_min_eigenvalue / scale` seen.
    pub worst_relative_margin: f64,
    pub tol: f64,
}

/// Checks the certified sign of the gap matrix at every trajectory sample.
/// `branch = None` marks an uncertified problem: nothing is claimed.
pub fn monitor_invariant(
    cert: &Certificate,
    traj: &Trajectory,
    branch: Option<InitialClass>,
    tol: f64,
) -> MonitorOutcome {
    let Some(branch) = branch.filter(|b| *b != InitialClass::Fail) else {
        return MonitorOutcome {
            verdict: MonitorVerdict::NotCertified,
            records: vec![],
            skipped: vec![],
            worst_relative_margin: f64::NAN,
            tol,
        };
    };
    let lambda_t0 = cert.lambda.eval(traj.t_start());
    let mut records = Vec::with_capacity(traj.times.len());
    let mut skipped = Vec::new();
    let mut first_violation = None;
    let mut worst = f64::INFINITY;
    for (&t, z) in traj.times.iter().zip(&traj.z) {
        let Ok(inv) = cert.u.eval(t).inverse_with_threshold(U_SINGULAR_RCOND) else {
            skipped.push(t);
            continue;
        };
        let lam = cert.lambda.eval(t);
        let g = gap_matrix(&inv.matrix, z, &lam).hermitian_part_eigenvalues();
        let (min, max) = (g[0], *g.last().unwrap());
        let scale = spectral_scale(min, max);
        let g0 = {
            let uz = &inv.matrix * z;
            let m = &uz.hermitian_sum() - &(&lam + &lambda_t0.adjoint());
            m.hermitian_part_eigenvalues()[0]
        };
        let l = &(&inv.matrix * z) - &lam;
        let l_min = l.hermitian_sum().hermitian_part_eigenvalues()[0];
        let violation = match branch {
            InitialClass::Strict => !(min > -tol * scale),
            _ => !(min >= -tol * scale),
        };
        if violation && first_violation.is_none() {
            log::warn!("invariant violated at t = {t}: min eigenvalue {min:e}, scale {scale:e}");
            first_violation = Some(t);
        }
        worst = worst.min(min / scale);
        records.push(MonitorRecord {
            t,
            gap_min_eigenvalue: min,
            gap_min_eigenvalue_t0_variant: g0,
            l_hermitian_min: l_min,
            scale,
            violation,
        });
    }
    let verdict = match first_violation {
        Some(first_t) => MonitorVerdict::Violated { first_t },
        None => MonitorVerdict::Holds,
    };
    MonitorOutcome {
        verdict,
        records,
        skipped,
        worst_relative_margin: worst,
        tol,
    }
}

/// Certificate with `U = P*`, valid when `P(t)` is invertible on the grid.
/// `Λ` defaults to zero and `μ` to extraction.
pub fn p_adjoint_certificate(
    prob: &RiccatiProblem,
    lambda: Option<MatrixTimeFn>,
    mu: Option<MatrixTimeFn>,
    grid_density: f64,
    tol: f64,
) -> Result<Certificate, CertifyError> {
    let n = prob.dim();
    let grid = check_grid(prob.t0, prob.horizon, grid_density, &prob.breakpoints());
    for &t in &grid {
        if prob
            .p
            .eval(t)
            .inverse_with_threshold(U_SINGULAR_RCOND)
            .is_err()
        {
            return Err(CertifyError::SingularP { t });
        }
    }
    let lambda = lambda.unwrap_or_else(|| MatrixTimeFn::zeros(n));
    Ok(Certificate::new(
        prob.p.adjoint(),
        lambda,
        mu,
        grid_density,
        tol,
    )?)
}

/// Residuals of the transformed equation for `L = U⁻¹Z − Λ` along a
/// trajectory, with `L'` taken by central differences of the dense output.
/// Returns `(t, ||residual||_F / (1 + ||L||²))` per interior sample.
pub fn transformed_residuals(
    cert: &Certificate,
    prob: &RiccatiProblem,
    traj: &Trajectory,
    fd_step: f64,
) -> Result<Vec<(f64, f64)>, RiccatiError> {
    let tp = crate::riccati::TransformedProblem::new(cert, prob);
    let l_at = |t: f64| -> Result<Option<CMatrix>, RiccatiError> {
        match traj.eval(t) {
            Some(z) => transform_solution(cert, t, &z).map(Some),
            None => Ok(None),
        }
    };
    let mut bps = prob.breakpoints();
    for f in [&cert.u, &cert.lambda] {
        bps.extend(f.breakpoints());
    }
    let mut out = Vec::new();
    for &t in &traj.times {
        if bps.iter().any(|&b| (b - t).abs() <= fd_step) {
            continue;
        }
        let (Some(lm), Some(l), Some(lp)) = (l_at(t - fd_step)?, l_at(t)?, l_at(t + fd_step)?)
        else {
            continue;
        };
        let dl = (&lp - &lm).scale_real(0.5 / fd_step);
        let res = tp.eval(t)?.residual(&l, &dl);
        let ln = l.frobenius_norm();
        out.push((t, res.frobenius_norm() / (1.0 + ln * ln)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSample {
    pub t: f64,
    /// Smallest eigenvalue of `Z(t)` (Hermitian part).
    pub z_min_eigenvalue: f64,
    /// Smallest eigenvalue of `Z̃(t) − Z(t)`.
    pub gap_min_eigenvalue: f64,
    pub z_scale: f64,
    pub gap_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub holds: bool,
    pub samples: Vec<ComparisonSample>,
    /// Smallest `z_min_eigenvalue / z_scale`.
    pub worst_z_margin: f64,
    /// Smallest `gap_min_eigenvalue / gap_scale`.
    pub worst_gap_margin: f64,
    pub riccati_status: TrajectoryStatus,
    pub lyapunov_status: TrajectoryStatus,
    pub tol: f64,
}

/// Checks `P ≥ 0`, `S ≤ 0` (both Hermitian) and `R = Q*` on the grid.
pub fn check_comparison_hypotheses(
    prob: &RiccatiProblem,
    grid_density: f64,
    tol: f64,
) -> Result<(), CertifyError> {
    let violation = |hypothesis: &str, t: f64| CertifyError::HypothesisViolation {
        hypothesis: hypothesis.to_string(),
        t,
    };
    for t in check_grid(prob.t0, prob.horizon, grid_density, &prob.breakpoints()) {
        if !prob.p.eval(t).classify(tol).is_psd() {
            return Err(violation("P Hermitian positive semidefinite", t));
        }
        if !prob.s.eval(t).classify(tol).is_nsd() {
            return Err(violation("S Hermitian negative semidefinite", t));
        }
        let r = prob.r.eval(t);
        if (&r - &prob.q.eval(t).adjoint()).frobenius_norm() > tol * (1.0 + r.frobenius_norm()) {
            return Err(violation("R = Q*", t));
        }
    }
    Ok(())
}

/// Verifies `0 ≤ Z(t) ≤ Z̃(t)` where `Z̃` solves `Z' + A*Z + ZA + S = 0`
/// with `A = Q*`, after checking `P ≥ 0`, `S ≤ 0`, `R = Q*` and `Z0 ≥ 0`
/// on the grid.
pub fn compare_with_lyapunov(
    prob: &RiccatiProblem,
    z0: &CMatrix,
    opts: &IntegratorOptions,
    grid_density: f64,
    tol: f64,
) -> Result<ComparisonReport, CertifyError> {
    let violation = |hypothesis: &str, t: f64| CertifyError::HypothesisViolation {
        hypothesis: hypothesis.to_string(),
        t,
    };
    if z0.dim() != prob.dim() {
        return Err(IntegrateError::DimensionMismatch {
            expected: prob.dim(),
            actual: z0.dim(),
        }
        .into());
    }
    if !z0.classify(tol).is_psd() {
        return Err(violation("Z0 Hermitian positive semidefinite", prob.t0));
    }
    check_comparison_hypotheses(prob, grid_density, tol)?;
    let riccati = integrate_riccati(prob, z0, opts)?;
    let lyap = LyapunovProblem {
        a: prob.q.adjoint(),
        s: prob.s.clone(),
        t0: prob.t0,
        horizon: prob.horizon,
    };
    let upper = integrate_lyapunov(&lyap, z0, opts)?;

    let mut samples = Vec::with_capacity(riccati.times.len());
    let mut worst_z = f64::INFINITY;
    let mut worst_gap = f64::INFINITY;
    for (k, &t) in riccati.times.iter().enumerate() {
        let Some(zt) = upper.z.get(k).filter(|_| upper.times[k] == t) else {
            break;
        };
        let z = &riccati.z[k];
        let ze = z.hermitian_part_eigenvalues();
        let ge = (zt - z).hermitian_part_eigenvalues();
        let z_scale = spectral_scale(ze[0], *ze.last().unwrap());
        let gap_scale = spectral_scale(ge[0], *ge.last().unwrap());
        worst_z = worst_z.min(ze[0] / z_scale);
        worst_gap = worst_gap.min(ge[0] / gap_scale);
        samples.push(ComparisonSample {
            t,
            z_min_eigenvalue: ze[0],
            gap_min_eigenvalue: ge[0],
            z_scale,
            gap_scale,
        });
    }
    let holds = riccati.status.is_completed() && worst_z >= -tol && worst_gap >= -tol;
    Ok(ComparisonReport {
        holds,
        samples,
        worst_z_margin: worst_z,
        worst_gap_margin: worst_gap,
        riccati_status: riccati.status,
        lyapunov_status: upper.status,
        tol,
    })
}

/// Initial values `base + α · direction` for each `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialFamily {
    pub base: CMatrix,
    pub direction: CMatrix,
    pub alphas: Vec<f64>,
}

impl InitialFamily {
    pub fn member(&self, alpha: f64) -> CMatrix {
        &self.base + &self.direction.scale_real(alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub alpha: f64,
    pub initial: Option<InitialClass>,
    pub certified: bool,
    pub status: TrajectoryStatus,
    pub t_escape: Option<f64>,
    pub t_end: f64,
}

/// Classifies and integrates every member of the family. Rows come back in
/// parameter order; with `parallel` they are computed on scoped threads.
pub fn scan_initial_values(
    cert: &Certificate,
    prob: &RiccatiProblem,
    family: &InitialFamily,
    opts: &IntegratorOptions,
    parallel: bool,
) -> Result<Vec<ScanRow>, CertifyError> {
    let conditions = check_conditions(cert, prob)?;
    let conditions_pass = conditions.all_pass();
    let row = |alpha: f64| -> Result<ScanRow, CertifyError> {
        let z0 = family.member(alpha);
        let initial = match check_initial_condition(cert, prob, &z0) {
            Ok(r) => Some(r.class),
            Err(RiccatiError::SingularU { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let certified = conditions_pass && initial.is_some_and(|c| c != InitialClass::Fail);
        let traj = integrate_riccati(prob, &z0, opts)?;
        Ok(ScanRow {
            alpha,
            initial,
            certified,
            status: traj.status,
            t_escape: traj.status.escape_time(),
            t_end: traj.t_end(),
        })
    };
    if !parallel || family.alphas.len() < 2 {
        return family.alphas.iter().map(|&a| row(a)).collect();
    }
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(family.alphas.len());
    let chunk = family.alphas.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = family
            .alphas
            .chunks(chunk)
            .map(|part| scope.spawn(|| part.iter().map(|&a| row(a)).collect::<Result<Vec<_>, _>>()))
            .collect();
        let mut rows = Vec::with_capacity(family.alphas.len());
        for h in handles {
            rows.extend(h.join().expect("scan worker panicked")?);
        }
        Ok(rows)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timefn::ScalarBasisTerm;

    fn c(m: CMatrix) -> MatrixTimeFn {
        MatrixTimeFn::constant(&m)
    }

    fn neg_id(n: usize) -> MatrixTimeFn {
        c(CMatrix::identity(n).scale_real(-1.0))
    }

    fn problem(
        p: MatrixTimeFn,
        q: MatrixTimeFn,
        r: MatrixTimeFn,
        s: MatrixTimeFn,
        horizon: f64,
    ) -> RiccatiProblem {
        RiccatiProblem::new(p, q, r, s, 0.0, horizon).unwrap()
    }

    fn tanh2(horizon: f64) -> RiccatiProblem {
        problem(
            MatrixTimeFn::identity(2),
            MatrixTimeFn::zeros(2),
            MatrixTimeFn::zeros(2),
            neg_id(2),
            horizon,
        )
    }

    #[test]
    fn condition_i_examples() {
        let cert = Certificate::trivial(2);
        assert!(check_condition_i(&cert, &tanh2(1.0)).unwrap().pass);

        let nilpotent = c(CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]));
        let prob = problem(
            nilpotent,
            MatrixTimeFn::zeros(2),
            MatrixTimeFn::zeros(2),
            neg_id(2),
            1.0,
        );
        let r = check_condition_i(&cert, &prob).unwrap();
        assert!(!r.pass);
        assert!(r.worst_hermiticity_defect > cert.tol);

        let p = MatrixTimeFn::diagonal(vec![
            vec![ScalarBasisTerm::exp(-1.0, 1.0)],
            vec![ScalarBasisTerm::constant(1.0)],
        ]);
        let prob = problem(
            p,
            MatrixTimeFn::zeros(2),
            MatrixTimeFn::zeros(2),
            neg_id(2),
            5.0,
        );
        let r = check_condition_i(&cert, &prob).unwrap();
        assert!(r.pass);
        assert!(r.worst_min_eigenvalue > 0.0);
    }

    #[test]
    fn condition_ii_examples() {
        let cert = Certificate::trivial(2);
        let two = c(CMatrix::identity(2).scale_real(2.0));
        let prob = problem(
            MatrixTimeFn::identity(2),
            MatrixTimeFn::zeros(2),
            two,
            neg_id(2),
            1.0,
        );
        let r = check_condition_ii(&cert, &prob).unwrap();
        assert!(r.pass);
        assert!(r.mu_samples.iter().all(|&(_, mu)| (mu - 2.0).abs() < 1e-15));

        let q = CMatrix::from_rows(&[
            vec![c64(0.5, 1.0), c64(-2.0, 0.3)],
            vec![c64(0.0, 1.0), c64(3.0, 0.0)],
        ]);
        let prob = problem(
            MatrixTimeFn::identity(2),
            c(q.clone()),
            c(q.adjoint()),
            neg_id(2),
            1.0,
        );
        let r = check_condition_ii(&cert, &prob).unwrap();
        assert!(r.pass);
        assert!(r.mu_samples.iter().all(|&(_, mu)| mu.abs() < 1e-15));

        let r_bad = c(CMatrix::from_real_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]));
        let prob = problem(
            MatrixTimeFn::identity(2),
            MatrixTimeFn::zeros(2),
            r_bad,
            neg_id(2),
            1.0,
        );
        let r = check_condition_ii(&cert, &prob).unwrap();
        assert!(!r.pass);
        assert!((r.worst_off_diagonal - 1.0).abs() < 1e-15);
    }

    #[test]
    fn condition_ii_rejects_complex_mu_and_uses_supplied_mu() {
        let cert = Certificate::trivial(1);
        let r = c(CMatrix::from_diag(&[c64(0.5, 1e-3)]));
        let prob = problem(
            MatrixTimeFn::identity(1),
            MatrixTimeFn::zeros(1),
            r,
            neg_id(1),
            1.0,
        );
        let rep = check_condition_ii(&cert, &prob).unwrap();
        assert!(!rep.pass);
        assert!((rep.worst_mu_imag - 1e-3).abs() < 1e-15);

        let mu = Some(c(CMatrix::from_real_diag(&[0.25])));
        let cert = Certificate::new(
            MatrixTimeFn::identity(1),
            MatrixTimeFn::zeros(1),
            mu,
            8.0,
            1e-9,
        )
        .unwrap();
        let r = c(CMatrix::from_real_diag(&[0.25]));
        let prob = problem(
            MatrixTimeFn::identity(1),
            MatrixTimeFn::zeros(1),
            r,
            neg_id(1),
            1.0,
        );
        assert!(check_condition_ii(&cert, &prob).unwrap().pass);
        let r = c(CMatrix::from_real_diag(&[0.5]));
        let prob = problem(
            MatrixTimeFn::identity(1),
            MatrixTimeFn::zeros(1),
            r,
            neg_id(1),
            1.0,
        );
        let rep = check_condition_ii(&cert, &prob).unwrap();
        assert!(!rep.pass && (rep.worst_residual - 0.25).abs() < 1e-15);
    }

    #[test]
    fn condition_iii_examples() {
        let cert = Certificate::trivial(2);
        assert!(check_condition_iii(&cert, &tanh2(1.0)).unwrap().pass);

        let skew = c(CMatrix::from_real_rows(&[vec![0.0, 2.0], vec![-2.0, 0.0]]));
        let prob = problem(
            MatrixTimeFn::identity(2),
            MatrixTimeFn::zeros(2),
            MatrixTimeFn::zeros(2),
            skew,
            1.0,
        );
        assert!(check_condition_iii(&cert, &prob).unwrap().pass);

        let upper = c(CMatrix::from_real_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]));
        let prob = problem(
            MatrixTimeFn::identity(2),
            MatrixTimeFn::zeros(2),
            MatrixTimeFn::zeros(2),
            upper,
            1.0,
        );
        let r = check_condition_iii(&cert, &prob).unwrap();
        assert!(!r.pass && (r.worst_max_eigenvalue - 2.0).abs() < 1e-12);

        let prob = problem(
            MatrixTimeFn::identity(2),
            MatrixTimeFn::zeros(2),
            MatrixTimeFn::zeros(2),
            MatrixTimeFn::identity(2),
            1.0,
        );
        assert!(!check_condition_iii(&cert, &prob).unwrap().pass);
    }

    #[test]
    fn initial_condition_examples() {
        let cert = Certificate::trivial(2);
        let prob = tanh2(1.0);
        let class = |z: CMatrix| check_initial_condition(&cert, &prob, &z).unwrap().class;
        assert_eq!(class(CMatrix::identity(2)), InitialClass::Strict);
        assert_eq!(class(CMatrix::zeros(2)), InitialClass::Nonstrict);
        assert_eq!(
            class(CMatrix::identity(2).scale_real(-1.0)),
            InitialClass::Fail
        );
        assert_eq!(
            class(CMatrix::identity(2).scale_real(1e-6)),
            InitialClass::Strict
        );
    }

    #[test]
    fn nonstrict_requires_positive_u_inverse_sum() {
        // U = -I: the gap is zero for Z0 = 0 but U⁻¹ + U⁻* = -2I
        let cert = Certificate::new(neg_id(1), MatrixTimeFn::zeros(1), None, 8.0, 1e-9).unwrap();
        let prob = problem(
            MatrixTimeFn::identity(1),
            MatrixTimeFn::zeros(1),
            MatrixTimeFn::zeros(1),
            neg_id(1),
            1.0,
        );
        let r = check_initial_condition(&cert, &prob, &CMatrix::zeros(1)).unwrap();
        assert_eq!(r.class, InitialClass::Fail);
    }

    #[test]
    fn singular_u_is_recorded_in_report() {
        // U(t) = 1 - t vanishes at the grid point t = 1
        let u = MatrixTimeFn::from_entries(
            1,
            vec![vec![
                ScalarBasisTerm::constant(1.0),
                ScalarBasisTerm::poly(1, -1.0),
            ]],
        )
        .unwrap();
        let cert = Certificate::new(u, MatrixTimeFn::zeros(1), None, 8.0, 1e-9).unwrap();
        let prob = problem(
            MatrixTimeFn::identity(1),
            MatrixTimeFn::zeros(1),
            MatrixTimeFn::zeros(1),
            neg_id(1),
            2.0,
        );
        let report = certify(&cert, &prob, &CMatrix::identity(1)).unwrap();
        assert_eq!(report.verdict, Verdict::NotCertified);
        assert_eq!(report.conditions.singular_u_at, Some(1.0));
        assert!(report.failed[0].starts_with("SINGULAR_U"));
    }

    #[test]
    fn monitor_tanh_strict_and_nonstrict() {
        let prob = tanh2(50.0);
        let cert = Certificate::trivial(2);
        let opts = IntegratorOptions {
            output_step: 0.05,
            ..Default::default()
        };

        let z0 = CMatrix::identity(2).scale_real(0.5);
        let report = certify(&cert, &prob, &z0).unwrap();
        assert_eq!(report.verdict, Verdict::CertifiedStrict);
        let traj = integrate_riccati(&prob, &z0, &opts).unwrap();
        assert!(traj.status.is_completed());
        let out = monitor_invariant(&cert, &traj, report.verdict.branch(), DEFAULT_MONITOR_TOL);
        assert_eq!(out.verdict, MonitorVerdict::Holds);
        // Z = z(t) I with z increasing from 1/2 to 1, so min eig of Z + Z* >= 1
        assert!(out
            .records
            .iter()
            .all(|r| r.gap_min_eigenvalue >= 1.0 - 1e-9));

        let report = certify(&cert, &prob, &CMatrix::zeros(2)).unwrap();
        assert_eq!(report.verdict, Verdict::CertifiedNonstrict);
        let traj = integrate_riccati(&prob, &CMatrix::zeros(2), &opts).unwrap();
        let out = monitor_invariant(&cert, &traj, report.verdict.branch(), DEFAULT_MONITOR_TOL);
        assert_eq!(out.verdict, MonitorVerdict::Holds);
        assert!(out.records.iter().all(|r| r.gap_min_eigenvalue >= -1e-9));
    }

    #[test]
    fn monitor_is_gated_on_certification() {
        let one = |x: f64| c(CMatrix::from_real_diag(&[x]));
        let prob = problem(one(-1.0), one(0.0), one(0.0), one(0.0), 2.0);
        let cert = Certificate::trivial(1);
        let report = certify(&cert, &prob, &CMatrix::identity(1)).unwrap();
        assert_eq!(report.verdict, Verdict::NotCertified);
        assert!(report.failed.contains(&"condition_I".to_string()));
        let traj =
            integrate_riccati(&prob, &CMatrix::identity(1), &IntegratorOptions::default()).unwrap();
        let out = monitor_invariant(&cert, &traj, report.verdict.branch(), DEFAULT_MONITOR_TOL);
        assert_eq!(out.verdict, MonitorVerdict::NotCertified);
        assert!(out.records.is_empty());
    }

    #[test]
    fn p_adjoint_examples() {
        let prob = tanh2(2.0);
        let cert = p_adjoint_certificate(&prob, None, None, 16.0, 1e-9).unwrap();
        let trivial = Certificate::trivial(2);
        for t in [0.0, 0.7, 2.0] {
            assert_eq!(cert.u.eval(t), trivial.u.eval(t));
        }

        let two = c(CMatrix::identity(2).scale_real(2.0));
        let prob = problem(
            two,
            MatrixTimeFn::zeros(2),
            MatrixTimeFn::zeros(2),
            neg_id(2),
            2.0,
        );
        let cert = p_adjoint_certificate(&prob, None, None, 16.0, 1e-9).unwrap();
        assert!(check_condition_i(&cert, &prob).unwrap().pass);

        let p = MatrixTimeFn::diagonal(vec![
            vec![ScalarBasisTerm::constant(1.0)],
            vec![ScalarBasisTerm::exp(-1.0, 1.0)],
        ]);
        let prob = problem(
            p,
            MatrixTimeFn::zeros(2),
            MatrixTimeFn::zeros(2),
            neg_id(2),
            3.0,
        );
        let cert = p_adjoint_certificate(&prob, None, None, 16.0, 1e-9).unwrap();
        let r = check_condition_i(&cert, &prob).unwrap();
        assert!(r.pass);
        // P P* = diag(1, e^{-2t}); smallest eigenvalue on [0, 3] is e^{-6}
        assert!((r.worst_min_eigenvalue - (-6f64).exp()).abs() < 1e-14);

        let singular = MatrixTimeFn::from_entries(
            1,
            vec![vec![
                ScalarBasisTerm::constant(1.0),
                ScalarBasisTerm::poly(1, -1.0),
            ]],
        )
        .unwrap();
        let prob = problem(
            singular,
            MatrixTimeFn::zeros(1),
            MatrixTimeFn::zeros(1),
            neg_id(1),
            2.0,
        );
        assert!(matches!(
            p_adjoint_certificate(&prob, None, None, 4.0, 1e-9),
            Err(CertifyError::SingularP { t }) if t == 1.0
        ));
    }

    #[test]
    fn comparison_examples() {
        let opts = IntegratorOptions {
            output_step: 0.05,
            ..Default::default()
        };
        let report =
            compare_with_lyapunov(&tanh2(10.0), &CMatrix::zeros(2), &opts, 8.0, 1e-9).unwrap();
        assert!(report.holds);
        let last = report.samples.last().unwrap();
        // Z̃ − Z = (10 − tanh 10) I
        assert!((last.gap_min_eigenvalue - (10.0 - 10f64.tanh())).abs() < 1e-7);

        let zero = MatrixTimeFn::zeros(2);
        let prob = problem(
            MatrixTimeFn::identity(2),
            zero.clone(),
            zero.clone(),
            zero,
            3.0,
        );
        let report = compare_with_lyapunov(&prob, &CMatrix::zeros(2), &opts, 8.0, 1e-9).unwrap();
        assert!(report.holds);
        assert!(report
            .samples
            .iter()
            .all(|s| s.z_min_eigenvalue == 0.0 && s.gap_min_eigenvalue == 0.0));
    }

    #[test]
    fn comparison_rejects_violated_hypotheses() {
        let opts = IntegratorOptions::default();
        let one = |x: f64| c(CMatrix::from_real_diag(&[x]));
        let prob = problem(one(-1.0), one(0.0), one(0.0), one(-1.0), 1.0);
        let err = compare_with_lyapunov(&prob, &CMatrix::zeros(1), &opts, 4.0, 1e-9).unwrap_err();
        assert!(
            matches!(err, CertifyError::HypothesisViolation { ref hypothesis, .. } if hypothesis.starts_with("P"))
        );

        let prob = problem(one(1.0), one(0.0), one(0.0), one(1.0), 1.0);
        let err = compare_with_lyapunov(&prob, &CMatrix::zeros(1), &opts, 4.0, 1e-9).unwrap_err();
        assert!(
            matches!(err, CertifyError::HypothesisViolation { ref hypothesis, .. } if hypothesis.starts_with("S"))
        );

        let prob = problem(one(1.0), one(1.0), one(0.0), one(-1.0), 1.0);
        let err = compare_with_lyapunov(&prob, &CMatrix::zeros(1), &opts, 4.0, 1e-9).unwrap_err();
        assert!(
            matches!(err, CertifyError::HypothesisViolation { ref hypothesis, .. } if hypothesis == "R = Q*")
        );

        let prob = problem(one(1.0), one(0.0), one(0.0), one(-1.0), 1.0);
        let err = compare_with_lyapunov(
            &prob,
            &CMatrix::identity(1).scale_real(-1.0),
            &opts,
            4.0,
            1e-9,
        )
        .unwrap_err();
        assert!(
            matches!(err, CertifyError::HypothesisViolation { ref hypothesis, .. } if hypothesis.starts_with("Z0"))
        );
    }

    #[test]
    fn scan_examples() {
        let prob = tanh2(5.0);
        let cert = Certificate::trivial(2);
        let family = InitialFamily {
            base: CMatrix::zeros(2),
            direction: CMatrix::identity(2),
            alphas: vec![-1.0, 0.0, 1.0],
        };
        let opts = IntegratorOptions::default();
        let rows = scan_initial_values(&cert, &prob, &family, &opts, true).unwrap();
        let classes: Vec<_> = rows.iter().map(|r| r.initial.unwrap()).collect();
        assert_eq!(
            classes,
            vec![
                InitialClass::Fail,
                InitialClass::Nonstrict,
                InitialClass::Strict
            ]
        );
        assert_eq!(
            rows.iter().map(|r| r.certified).collect::<Vec<_>>(),
            vec![false, true, true]
        );
        assert!(rows[1..].iter().all(|r| r.status.is_completed()));
        assert_eq!(
            rows,
            scan_initial_values(&cert, &prob, &family, &opts, false).unwrap()
        );

        let one = |x: f64| c(CMatrix::from_real_diag(&[x]));
        let prob = problem(one(-1.0), one(0.0), one(0.0), one(0.0), 2.0);
        let family = InitialFamily {
            base: CMatrix::zeros(1),
            direction: CMatrix::identity(1),
            alphas: vec![0.5, 1.0, 2.0],
        };
        let rows =
            scan_initial_values(&Certificate::trivial(1), &prob, &family, &opts, true).unwrap();
        assert!(rows.iter().all(|r| !r.certified));
        for r in &rows {
            let t = r.t_escape.expect("positive data escapes");
            assert!((t - 1.0 / r.alpha).abs() < 1e-3);
        }
    }
}
