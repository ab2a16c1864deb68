//! Time integration of the Riccati equation, of its linear companion
//! system `Φ' = RΦ + PΨ, Ψ' = −SΦ − QΨ`, and of the Lyapunov-type
//! comparison equation.
//!
//! All three share one explicit Dormand-Prince 5(4) engine working on a
//! flat vector of complex entries, with the method's continuous extension
//! as dense output.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::CMatrix;
use crate::riccati::RiccatiProblem;
use crate::timefn::MatrixTimeFn;

/// Reciprocal conditioning of `Φ` below which Radon continuation stops.
pub const PHI_SINGULAR_RCOND: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("initial value has dimension {actual}, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("initial value contains non-finite entries")]
    NonFiniteInitialValue,
    #[error("step produced non-finite entries")]
    Overflow,
    #[error("invalid integrator option: {0}")]
    InvalidOption(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when absent.
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
    /// Smallest admissible step, relative to `1 + |t|`.
    pub h_min: f64,
    /// Frobenius norm above which a collapsing step is read as blowup.
    pub blowup_threshold: f64,
    /// Accepted-step size, relative to `1 + |t|`, that counts as collapsed.
    pub blowup_step: f64,
    pub max_steps: usize,
    /// Spacing of the recorded output grid.
    pub output_step: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-9,
            h_init: None,
            h_max: None,
            h_min: 1e-15,
            blowup_threshold: 1e8,
            blowup_step: 1e-10,
            max_steps: 2_000_000,
            output_step: 0.01,
        }
    }
}

impl IntegratorOptions {
    fn validate(&self) -> Result<(), IntegrateError> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.rtol) || !positive(self.atol) {
            return Err(IntegrateError::InvalidOption("tolerances must be positive"));
        }
        if !positive(self.output_step) {
            return Err(IntegrateError::InvalidOption(
                "output_step must be positive",
            ));
        }
        if !positive(self.h_min) || self.max_steps == 0 {
            return Err(IntegrateError::InvalidOption(
                "h_min and max_steps must be positive",
            ));
        }
        if self.h_init.is_some_and(|h| !positive(h)) || self.h_max.is_some_and(|h| !positive(h)) {
            return Err(IntegrateError::InvalidOption(
                "step bounds must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrajectoryStatus {
    Completed,
    /// Norm above threshold with collapsed step; `t_escape` is the last
    /// accepted time.
    Blowup {
        t_escape: f64,
    },
    PhiSingular {
        t: f64,
    },
    StepUnderflow {
        t: f64,
    },
    /// The step budget ran out before the horizon.
    StepLimit {
        t: f64,
    },
}

impl TrajectoryStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, TrajectoryStatus::Completed)
    }

    /// Escape time for blowup-like terminations.
    pub fn escape_time(&self) -> Option<f64> {
        match *self {
            TrajectoryStatus::Blowup { t_escape } => Some(t_escape),
            TrajectoryStatus::PhiSingular { t } => Some(t),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TrajectoryStatus::Completed => "COMPLETED",
            TrajectoryStatus::Blowup { .. } => "BLOWUP",
            TrajectoryStatus::PhiSingular { .. } => "PHI_SINGULAR",
            TrajectoryStatus::StepUnderflow { .. } => "STEP_UNDERFLOW",
            TrajectoryStatus::StepLimit { .. } => "STEP_LIMIT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleDiagnostics {
    pub norm: f64,
    /// Smallest eigenvalue of `Z + Z*`.
    pub min_hermitian_eig: f64,
    /// Size of the integration step covering the sample.
    pub step: f64,
}

/// Dormand-Prince continuous extension of one accepted step.
#[derive(Debug, Clone)]
struct Segment {
    t: f64,
    h: f64,
    r: [Vec<Complex64>; 5],
}

impl Segment {
    fn eval(&self, t: f64) -> Vec<Complex64> {
        let theta = ((t - self.t) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.r;
        (0..r1.len())
            .map(|i| r1[i] + (r2[i] + (r3[i] + (r4[i] + r5[i] * th1) * theta) * th1) * theta)
            .collect()
    }
}

/// Piecewise-polynomial interpolant over all accepted steps.
#[derive(Debug, Clone)]
pub struct DenseOutput {
    t0: f64,
    y0: Vec<Complex64>,
    segments: Vec<Segment>,
}

impl DenseOutput {
    pub fn t_start(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(self.t0, |s| s.t + s.h)
    }

    pub fn step_count(&self) -> usize {
        self.segments.len()
    }

    fn segment_index(&self, t: f64) -> Option<usize> {
        if self.segments.is_empty() || t < self.t0 || t > self.t_end() {
            return None;
        }
        let idx = self.segments.partition_point(|s| s.t + s.h < t);
        Some(idx.min(self.segments.len() - 1))
    }

    /// State at `t`, or `None` outside `[t_start, t_end]`.
    pub fn eval(&self, t: f64) -> Option<Vec<Complex64>> {
        if t == self.t0 {
            return Some(self.y0.clone());
        }
        self.segment_index(t).map(|i| self.segments[i].eval(t))
    }

    fn step_at(&self, t: f64) -> f64 {
        self.segment_index(t).map_or(0.0, |i| self.segments[i].h)
    }

    /// Accepted step boundaries, starting with `t_start`.
    pub fn mesh(&self) -> Vec<f64> {
        std::iter::once(self.t0)
            .chain(self.segments.iter().map(|s| s.t + s.h))
            .collect()
    }
}

/// Solution of the Riccati (or Lyapunov) equation on an output grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub z: Vec<CMatrix>,
    pub status: TrajectoryStatus,
    pub diagnostics: Vec<SampleDiagnostics>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    dense: Option<DenseOutput>,
    n: usize,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last(&self) -> &CMatrix {
        self.z.last().unwrap()
    }

    /// Dense-output value at any `t` inside the integrated range.
    pub fn eval(&self, t: f64) -> Option<CMatrix> {
        let dense = self.dense.as_ref()?;
        dense.eval(t).map(|v| CMatrix::from_vec(self.n, v))
    }

    pub fn dense(&self) -> Option<&DenseOutput> {
        self.dense.as_ref()
    }
}

/// Samples of `(Φ, Ψ)` and `det Φ` with dense output over the whole range.
#[derive(Debug, Clone)]
pub struct LinearFlow {
    pub times: Vec<f64>,
    pub phi: Vec<CMatrix>,
    pub psi: Vec<CMatrix>,
    pub det_phi: Vec<Complex64>,
    dense: DenseOutput,
    n: usize,
}

impl LinearFlow {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn t_start(&self) -> f64 {
        self.dense.t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.dense.t_end()
    }

    /// `(Φ(t), Ψ(t))` from the dense output.
    pub fn eval(&self, t: f64) -> Option<(CMatrix, CMatrix)> {
        let v = self.dense.eval(t)?;
        Some(split_blocks(self.n, v))
    }

    pub fn dense(&self) -> &DenseOutput {
        &self.dense
    }

    /// `Z = ΨΦ⁻¹` along the output grid, stopping with `PhiSingular` at the
    /// first singularity of `Φ`.
    pub fn to_trajectory(&self) -> Trajectory {
        let singular_at = first_phi_singularity(self);
        let mut times = Vec::new();
        let mut z = Vec::new();
        let mut diagnostics = Vec::new();
        let mut status = TrajectoryStatus::Completed;
        for &t in &self.times {
            if singular_at.is_some_and(|ts| t >= ts) {
                break;
            }
            match radon_continue(self, t) {
                Ok(zt) => {
                    diagnostics.push(diagnose(&zt, self.dense.step_at(t)));
                    times.push(t);
                    z.push(zt);
                }
                Err(RadonOutcome::PhiSingular { t }) => {
                    status = TrajectoryStatus::PhiSingular { t };
                    break;
                }
                Err(RadonOutcome::OutOfRange { .. }) => break,
            }
        }
        if let Some(ts) = singular_at {
            status = TrajectoryStatus::PhiSingular { t: ts };
        }
        Trajectory {
            times,
            z,
            status,
            diagnostics,
            accepted_steps: self.dense.step_count(),
            rejected_steps: 0,
            dense: None,
            n: self.n,
        }
    }
}

fn split_blocks(n: usize, v: Vec<Complex64>) -> (CMatrix, CMatrix) {
    let nn = n * n;
    let phi = CMatrix::from_vec(n, v[..nn].to_vec());
    let psi = CMatrix::from_vec(n, v[nn..].to_vec());
    (phi, psi)
}

fn diagnose(z: &CMatrix, step: f64) -> SampleDiagnostics {
    let eig = z.hermitian_sum().hermitian_part_eigenvalues();
    SampleDiagnostics {
        norm: z.frobenius_norm(),
        min_hermitian_eig: eig[0],
        step,
    }
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

type Rhs<'a> = dyn Fn(f64, &[Complex64]) -> Vec<Complex64> + 'a;

struct StepResult {
    y_new: Vec<Complex64>,
    k_last: Vec<Complex64>,
    err: Vec<Complex64>,
    dense_r5: Vec<Complex64>,
    k1: Vec<Complex64>,
}

fn lin(y: &[Complex64], h: f64, terms: &[(f64, &[Complex64])]) -> Vec<Complex64> {
    let mut out = y.to_vec();
    for &(a, k) in terms {
        if a == 0.0 {
            continue;
        }
        let ha = h * a;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += ki * ha;
        }
    }
    out
}

/// One Dormand-Prince step. `t_right` is the time used for the stages at
/// `t + h`, which may be nudged left of a coefficient breakpoint.
fn dopri_step(
    f: &Rhs,
    t: f64,
    y: &[Complex64],
    k1: Vec<Complex64>,
    h: f64,
    t_right: f64,
) -> StepResult {
    let k2 = f(t + C2 * h, &lin(y, h, &[(A21, &k1)]));
    let k3 = f(t + C3 * h, &lin(y, h, &[(A31, &k1), (A32, &k2)]));
    let k4 = f(
        t + C4 * h,
        &lin(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
    );
    let k5 = f(
        t + C5 * h,
        &lin(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = f(
        t_right,
        &lin(
            y,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ),
    );
    let y_new = lin(
        y,
        h,
        &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    let k7 = f(t_right, &y_new);
    let zero = vec![Complex64::new(0.0, 0.0); y.len()];
    let err = lin(
        &zero,
        h,
        &[
            (E1, &k1),
            (E3, &k3),
            (E4, &k4),
            (E5, &k5),
            (E6, &k6),
            (E7, &k7),
        ],
    );
    let dense_r5 = lin(
        &zero,
        h,
        &[
            (D1, &k1),
            (D3, &k3),
            (D4, &k4),
            (D5, &k5),
            (D6, &k6),
            (D7, &k7),
        ],
    );
    StepResult {
        y_new,
        k_last: k7,
        err,
        dense_r5,
        k1,
    }
}

fn all_finite(v: &[Complex64]) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn scaled_error(
    err: &[Complex64],
    y: &[Complex64],
    y_new: &[Complex64],
    opts: &IntegratorOptions,
) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y)
        .zip(y_new)
        .map(|((e, a), b)| {
            let sc = opts.atol + opts.rtol * a.norm().max(b.norm());
            (e.norm() / sc).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

fn initial_step(
    f: &Rhs,
    t0: f64,
    y0: &[Complex64],
    k1: &[Complex64],
    opts: &IntegratorOptions,
    span: f64,
) -> f64 {
    let sc: Vec<f64> = y0
        .iter()
        .map(|y| opts.atol + opts.rtol * y.norm())
        .collect();
    let rms = |v: &[Complex64]| {
        (v.iter()
            .zip(&sc)
            .map(|(x, s)| (x.norm() / s).powi(2))
            .sum::<f64>()
            / v.len() as f64)
            .sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(k1);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1 = lin(y0, h0, &[(1.0, k1)]);
    let k2 = f(t0 + h0, &y1);
    let diff: Vec<Complex64> = k2.iter().zip(k1).map(|(a, b)| (a - b) / h0).collect();
    let d2 = rms(&diff);
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

struct RawRun {
    dense: DenseOutput,
    status: TrajectoryStatus,
    rejected: usize,
}

/// Adaptive integration from `t0` to `t_end`. Breakpoints are hit exactly;
/// steps ending on one evaluate their last stages just to its left.
fn run_dopri(
    f: &Rhs,
    t0: f64,
    y0: Vec<Complex64>,
    t_end: f64,
    breakpoints: &[f64],
    opts: &IntegratorOptions,
    detect_blowup: bool,
) -> RawRun {
    let span = t_end - t0;
    let h_max = opts.h_max.unwrap_or(span).min(span);
    let mut t = t0;
    let mut y = y0.clone();
    let mut k1 = f(t, &y);
    let mut h = opts
        .h_init
        .unwrap_or_else(|| initial_step(f, t0, &y, &k1, opts, span))
        .min(h_max);
    let mut segments = Vec::new();
    let mut rejected = 0;
    let mut last_rejected = false;
    let mut bp_iter = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > t0 && b < t_end)
        .peekable();

    let status = loop {
        if t >= t_end {
            break TrajectoryStatus::Completed;
        }
        if segments.len() >= opts.max_steps {
            break TrajectoryStatus::StepLimit { t };
        }
        while bp_iter.peek().is_some_and(|&b| b <= t) {
            bp_iter.next();
        }
        let stop = bp_iter.peek().copied().unwrap_or(t_end);
        let mut h_try = h.min(stop - t);
        let hits_stop = t + h_try >= stop || (stop - t - h_try) <= 1e-14 * (1.0 + stop.abs());
        if hits_stop {
            h_try = stop - t;
        }
        let t_right = if hits_stop && stop < t_end {
            stop.next_down()
        } else {
            t + h_try
        };

        let h_floor = opts.h_min * (1.0 + t.abs());
        if h_try < h_floor && !hits_stop {
            let norm = vec_norm(&y);
            break if detect_blowup && norm > opts.blowup_threshold {
                TrajectoryStatus::Blowup { t_escape: t }
            } else {
                TrajectoryStatus::StepUnderflow { t }
            };
        }

        let step = dopri_step(f, t, &y, k1.clone(), h_try, t_right);
        let finite = all_finite(&step.y_new) && all_finite(&step.err);
        let err = if finite {
            scaled_error(&step.err, &y, &step.y_new, opts)
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            let t_new = if hits_stop { stop } else { t + h_try };
            let r2: Vec<Complex64> = step.y_new.iter().zip(&y).map(|(a, b)| a - b).collect();
            let r3: Vec<Complex64> = step
                .k1
                .iter()
                .zip(&r2)
                .map(|(k, d)| k * h_try - d)
                .collect();
            let r4: Vec<Complex64> = r2
                .iter()
                .zip(&step.k_last)
                .zip(&r3)
                .map(|((d, k), r)| d - k * h_try - r)
                .collect();
            segments.push(Segment {
                t,
                h: t_new - t,
                r: [y.clone(), r2, r3, r4, step.dense_r5],
            });
            t = t_new;
            y = step.y_new;
            k1 = if hits_stop && stop < t_end {
                f(t, &y)
            } else {
                step.k_last
            };

            if detect_blowup {
                let norm = vec_norm(&y);
                if norm > opts.blowup_threshold && h_try < opts.blowup_step * (1.0 + t.abs()) {
                    break TrajectoryStatus::Blowup { t_escape: t };
                }
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            let factor = if last_rejected {
                factor.min(1.0)
            } else {
                factor
            };
            // keep the pre-truncation step when we only shortened to hit a stop
            let base = if hits_stop { h.max(h_try) } else { h_try };
            h = (base * factor).min(h_max);
            last_rejected = false;
        } else {
            rejected += 1;
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)
            } else {
                0.2
            };
            h = h_try * factor;
            last_rejected = true;
        }
    };
    log::debug!(
        "dopri run [{t0}, {t_end}]: {} accepted, {rejected} rejected, {}",
        segments.len(),
        status.label()
    );
    RawRun {
        dense: DenseOutput { t0, y0, segments },
        status,
        rejected,
    }
}

fn output_grid(t0: f64, t_end: f64, dt: f64) -> Vec<f64> {
    let count = ((t_end - t0) / dt + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=count)
        .map(|k| t0 + k as f64 * dt)
        .filter(|&t| t <= t_end)
        .collect();
    if grid.last().is_none_or(|&t| t < t_end) {
        grid.push(t_end);
    }
    grid
}

fn check_initial(n: usize, z0: &CMatrix) -> Result<(), IntegrateError> {
    if z0.dim() != n {
        return Err(IntegrateError::DimensionMismatch {
            expected: n,
            actual: z0.dim(),
        });
    }
    if !z0.is_finite() {
        return Err(IntegrateError::NonFiniteInitialValue);
    }
    Ok(())
}

fn matrix_trajectory(n: usize, run: RawRun, t_target: f64, opts: &IntegratorOptions) -> Trajectory {
    let end = if run.status.is_completed() {
        t_target
    } else {
        run.dense.t_end()
    };
    let times = output_grid(run.dense.t_start(), end, opts.output_step);
    let mut z = Vec::with_capacity(times.len());
    let mut diagnostics = Vec::with_capacity(times.len());
    for &t in &times {
        let zt = CMatrix::from_vec(n, run.dense.eval(t).expect("output grid lies in range"));
        diagnostics.push(diagnose(&zt, run.dense.step_at(t)));
        z.push(zt);
    }
    Trajectory {
        times,
        z,
        status: run.status,
        diagnostics,
        accepted_steps: run.dense.step_count(),
        rejected_steps: run.rejected,
        dense: Some(run.dense),
        n,
    }
}

/// One embedded step of `Z' = rhs(t, Z)`; returns the fifth-order value and
/// `||Z5 − Z4||_F`.
pub fn step_rk(
    prob: &RiccatiProblem,
    t: f64,
    z: &CMatrix,
    h: f64,
) -> Result<(CMatrix, f64), IntegrateError> {
    if !(h > 0.0) {
        return Err(IntegrateError::InvalidOption("step must be positive"));
    }
    let n = prob.dim();
    check_initial(n, z)?;
    let f = riccati_rhs(prob);
    let y = z.as_slice().to_vec();
    let k1 = f(t, &y);
    let step = dopri_step(&f, t, &y, k1, h, t + h);
    if !all_finite(&step.y_new) || !all_finite(&step.err) {
        return Err(IntegrateError::Overflow);
    }
    Ok((CMatrix::from_vec(n, step.y_new), vec_norm(&step.err)))
}

fn riccati_rhs(prob: &RiccatiProblem) -> impl Fn(f64, &[Complex64]) -> Vec<Complex64> + '_ {
    let n = prob.dim();
    move |t, y| prob.rhs(t, &CMatrix::from_vec(n, y.to_vec())).into_vec()
}

/// Integrates the Riccati equation from `Z(t0) = z0` to the horizon,
/// terminating early on blowup.
pub fn integrate_riccati(
    prob: &RiccatiProblem,
    z0: &CMatrix,
    opts: &IntegratorOptions,
) -> Result<Trajectory, IntegrateError> {
    opts.validate()?;
    check_initial(prob.dim(), z0)?;
    let f = riccati_rhs(prob);
    let run = run_dopri(
        &f,
        prob.t0,
        z0.as_slice().to_vec(),
        prob.horizon,
        &prob.breakpoints(),
        opts,
        true,
    );
    Ok(matrix_trajectory(prob.dim(), run, prob.horizon, opts))
}

/// Integrates `Φ' = RΦ + PΨ, Ψ' = −SΦ − QΨ` with `Φ(t0) = I, Ψ(t0) = z0`.
pub fn integrate_linear_system(
    prob: &RiccatiProblem,
    z0: &CMatrix,
    opts: &IntegratorOptions,
) -> Result<LinearFlow, IntegrateError> {
    integrate_linear_system_from(prob, &CMatrix::identity(prob.dim()), z0, opts)
}

/// Linear system from arbitrary initial blocks `(Φ0, Ψ0)`.
pub fn integrate_linear_system_from(
    prob: &RiccatiProblem,
    phi0: &CMatrix,
    psi0: &CMatrix,
    opts: &IntegratorOptions,
) -> Result<LinearFlow, IntegrateError> {
    opts.validate()?;
    let n = prob.dim();
    check_initial(n, phi0)?;
    check_initial(n, psi0)?;
    let f = move |t: f64, y: &[Complex64]| {
        let (phi, psi) = split_blocks(n, y.to_vec());
        let dphi = &(&prob.r.eval(t) * &phi) + &(&prob.p.eval(t) * &psi);
        let dpsi = -(&(&prob.s.eval(t) * &phi) + &(&prob.q.eval(t) * &psi));
        let mut out = dphi.into_vec();
        out.extend(dpsi.into_vec());
        out
    };
    let mut y0 = phi0.as_slice().to_vec();
    y0.extend_from_slice(psi0.as_slice());
    let run = run_dopri(
        &f,
        prob.t0,
        y0,
        prob.horizon,
        &prob.breakpoints(),
        opts,
        false,
    );
    let end = run.dense.t_end();
    let times = output_grid(prob.t0, end, opts.output_step);
    let mut phi = Vec::with_capacity(times.len());
    let mut psi = Vec::with_capacity(times.len());
    let mut det_phi = Vec::with_capacity(times.len());
    for &t in &times {
        let (a, b) = split_blocks(n, run.dense.eval(t).expect("grid in range"));
        det_phi.push(a.determinant());
        phi.push(a);
        psi.push(b);
    }
    Ok(LinearFlow {
        times,
        phi,
        psi,
        det_phi,
        dense: run.dense,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadonOutcome {
    /// `Φ(t)` is numerically singular: the Riccati solution escapes here.
    PhiSingular {
        t: f64,
    },
    OutOfRange {
        t: f64,
    },
}

/// Conditioning of `Φ` relative to the full column block `[Φ; Ψ]`, which
/// keeps full rank along the flow. Zero when `Φ` is exactly singular.
pub fn phi_conditioning(phi: &CMatrix, psi: &CMatrix) -> f64 {
    match phi.lu().inverse() {
        Some(inv) => {
            let denom = inv.norm_one() * phi.stacked_norm_one(psi);
            if denom.is_finite() && denom > 0.0 {
                1.0 / denom
            } else {
                0.0
            }
        }
        None => 0.0,
    }
}

/// `Z(t) = Ψ(t) Φ(t)⁻¹` when `Φ(t)` is well conditioned.
pub fn radon_continue(flow: &LinearFlow, t: f64) -> Result<CMatrix, RadonOutcome> {
    let (phi, psi) = flow.eval(t).ok_or(RadonOutcome::OutOfRange { t })?;
    if phi_conditioning(&phi, &psi) < PHI_SINGULAR_RCOND {
        return Err(RadonOutcome::PhiSingular { t });
    }
    let inv = phi.lu().inverse().ok_or(RadonOutcome::PhiSingular { t })?;
    Ok(&psi * &inv)
}

/// First time at which `Φ` becomes singular, located either by the
/// conditioning threshold on a sub-sampled mesh or by a sign change of a
/// real-valued `det Φ` refined by bisection.
pub fn first_phi_singularity(flow: &LinearFlow) -> Option<f64> {
    const SUBSAMPLES: usize = 8;
    let measure = |t: f64| {
        let (phi, psi) = flow.eval(t)?;
        Some((phi_conditioning(&phi, &psi), phi.determinant()))
    };
    let mesh = flow.dense.mesh();
    let mut prev: Option<(f64, Complex64)> = None;
    for w in mesh.windows(2) {
        for k in 0..SUBSAMPLES {
            let t = w[0] + (w[1] - w[0]) * k as f64 / SUBSAMPLES as f64;
            let (cond, det) = measure(t)?;
            if cond < PHI_SINGULAR_RCOND {
                return Some(t);
            }
            if let Some((tp, dp)) = prev {
                let real = |d: Complex64| d.im.abs() <= 1e-8 * d.norm();
                if real(dp) && real(det) && dp.re.signum() != det.re.signum() {
                    return Some(bisect_det(flow, tp, t));
                }
            }
            prev = Some((t, det));
        }
    }
    let t = flow.t_end();
    let (cond, _) = measure(t)?;
    (cond < PHI_SINGULAR_RCOND).then_some(t)
}

fn bisect_det(flow: &LinearFlow, mut lo: f64, mut hi: f64) -> f64 {
    let det_re = |t: f64| flow.eval(t).map_or(0.0, |(phi, _)| phi.determinant().re);
    let sign_lo = det_re(lo).signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if det_re(mid).signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Relative mismatch between `det Φ(t)` and
/// `det Φ(t0) · exp(∫ tr[R + P Z])`, the integral taken by adaptive Simpson
/// quadrature on the Riccati dense output.
pub fn liouville_residual(
    prob: &RiccatiProblem,
    flow: &LinearFlow,
    traj: &Trajectory,
    t: f64,
) -> Option<f64> {
    let (phi_t, _) = flow.eval(t)?;
    let (phi_0, _) = flow.eval(prob.t0)?;
    if t > traj.t_end() + 1e-12 || traj.dense().is_none() {
        return None;
    }
    let integrand = |tau: f64| -> Complex64 {
        let z = traj
            .eval(tau.min(traj.t_end()))
            .expect("inside trajectory range");
        (&prob.r.eval(tau) + &(&prob.p.eval(tau) * &z)).trace()
    };
    let mut cuts = vec![prob.t0];
    cuts.extend(prob.breakpoints().into_iter().filter(|&b| b < t));
    cuts.push(t);
    let integral: Complex64 = cuts
        .windows(2)
        .map(|w| adaptive_simpson(&integrand, w[0], w[1], 1e-9))
        .sum();
    let lhs = phi_t.determinant();
    let rhs = phi_0.determinant() * integral.exp();
    let scale = lhs.norm().max(rhs.norm());
    Some(if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).norm() / scale
    })
}

/// Adaptive Simpson quadrature of a complex integrand.
pub fn adaptive_simpson<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, tol: f64) -> Complex64 {
    if b <= a {
        return Complex64::new(0.0, 0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (fa + fm * 4.0 + fb) * ((b - a) / 6.0);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> Complex64>(
    f: &F,
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    tol: f64,
    depth: u32,
) -> Complex64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (fa + flm * 4.0 + fm) * ((m - a) / 6.0);
    let right = (fm + frm * 4.0 + fb) * ((b - m) / 6.0);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Linear comparison equation `Z' + A* Z + Z A + S = 0` on `[t0, horizon]`.
#[derive(Debug, Clone)]
pub struct LyapunovProblem {
    pub a: MatrixTimeFn,
    pub s: MatrixTimeFn,
    pub t0: f64,
    pub horizon: f64,
}

pub fn integrate_lyapunov(
    prob: &LyapunovProblem,
    z0: &CMatrix,
    opts: &IntegratorOptions,
) -> Result<Trajectory, IntegrateError> {
    opts.validate()?;
    let n = prob.a.dim();
    check_initial(n, z0)?;
    if prob.s.dim() != n {
        return Err(IntegrateError::DimensionMismatch {
            expected: n,
            actual: prob.s.dim(),
        });
    }
    if !(prob.horizon > prob.t0) {
        return Err(IntegrateError::InvalidOption("horizon must exceed t0"));
    }
    let f = move |t: f64, y: &[Complex64]| {
        let z = CMatrix::from_vec(n, y.to_vec());
        let a = prob.a.eval(t);
        let mut out = &a.adjoint() * &z;
        out += &(&z * &a);
        out += &prob.s.eval(t);
        (-out).into_vec()
    };
    let mut bps: Vec<f64> = prob.a.breakpoints();
    bps.extend(prob.s.breakpoints());
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    let run = run_dopri(
        &f,
        prob.t0,
        z0.as_slice().to_vec(),
        prob.horizon,
        &bps,
        opts,
        true,
    );
    Ok(matrix_trajectory(n, run, prob.horizon, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::c64;
    use crate::timefn::{Piece, ScalarBasisTerm};

    fn scalar(x: f64) -> MatrixTimeFn {
        MatrixTimeFn::constant(&CMatrix::from_real_diag(&[x]))
    }

    fn scalar_problem(p: f64, q: f64, r: f64, s: f64, horizon: f64) -> RiccatiProblem {
        RiccatiProblem::new(scalar(p), scalar(q), scalar(r), scalar(s), 0.0, horizon).unwrap()
    }

    fn z1(x: f64) -> CMatrix {
        CMatrix::from_real_diag(&[x])
    }

    #[test]
    fn step_on_zero_problem_is_identity() {
        let n = 2;
        let prob = RiccatiProblem::new(
            MatrixTimeFn::zeros(n),
            MatrixTimeFn::zeros(n),
            MatrixTimeFn::zeros(n),
            MatrixTimeFn::zeros(n),
            0.0,
            1.0,
        )
        .unwrap();
        let z = CMatrix::from_rows(&[
            vec![c64(1.0, 2.0), c64(0.5, 0.0)],
            vec![c64(0.0, -1.0), c64(3.0, 0.0)],
        ]);
        let (next, err) = step_rk(&prob, 0.0, &z, 0.1).unwrap();
        assert_eq!(next, z);
        assert_eq!(err, 0.0);
    }

    #[test]
    fn step_matches_exponential_decay() {
        let prob = scalar_problem(0.0, 1.0, 0.0, 0.0, 1.0);
        let (next, _) = step_rk(&prob, 0.0, &z1(1.0), 0.1).unwrap();
        assert!((next[(0, 0)].re - (-0.1f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn step_error_scales_with_fifth_power() {
        let prob = scalar_problem(1.0, 0.0, 0.0, -1.0, 1.0);
        let z = z1(0.3);
        let (_, e1) = step_rk(&prob, 0.0, &z, 0.05).unwrap();
        let (_, e2) = step_rk(&prob, 0.0, &z, 0.025).unwrap();
        let ratio = e1 / e2;
        assert!((ratio - 32.0).abs() <= 0.2 * 32.0, "ratio {ratio}");
    }

    #[test]
    fn step_rejects_overflow() {
        let prob = scalar_problem(-1.0, 0.0, 0.0, 0.0, 1.0);
        assert_eq!(
            step_rk(&prob, 0.0, &z1(1e200), 1.0).unwrap_err(),
            IntegrateError::Overflow
        );
    }

    #[test]
    fn tanh_closed_form() {
        let prob = scalar_problem(1.0, 0.0, 0.0, -1.0, 1.0);
        let traj = integrate_riccati(&prob, &z1(0.0), &IntegratorOptions::default()).unwrap();
        assert!(traj.status.is_completed());
        assert!((traj.last()[(0, 0)].re - 0.7615941559).abs() < 1e-7);
        assert_eq!(traj.t_end(), 1.0);
        assert_eq!(traj.times[0], 0.0);
        assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn scalar_blowup_is_detected_near_one() {
        let prob = scalar_problem(-1.0, 0.0, 0.0, 0.0, 2.0);
        let traj = integrate_riccati(&prob, &z1(1.0), &IntegratorOptions::default()).unwrap();
        let TrajectoryStatus::Blowup { t_escape } = traj.status else {
            panic!("expected blowup, got {:?}", traj.status);
        };
        assert!((t_escape - 1.0).abs() < 1e-3);
        assert!(traj.last().frobenius_norm() >= 1e8);
        assert_eq!(traj.t_end(), t_escape);
    }

    #[test]
    fn large_but_finite_growth_is_not_blowup() {
        // z' = z, z(0) = 1 reaches e^25 ~ 7e10 without step collapse
        let prob = scalar_problem(0.0, -1.0, 0.0, 0.0, 25.0);
        let traj = integrate_riccati(&prob, &z1(1.0), &IntegratorOptions::default()).unwrap();
        assert!(traj.status.is_completed());
        let rel = (traj.last()[(0, 0)].re - 25f64.exp()).abs() / 25f64.exp();
        assert!(rel < 1e-7, "rel {rel}");
    }

    #[test]
    fn matrix_tanh_decouples() {
        let n = 2;
        let prob = RiccatiProblem::new(
            MatrixTimeFn::identity(n),
            MatrixTimeFn::zeros(n),
            MatrixTimeFn::zeros(n),
            MatrixTimeFn::identity(n).scale(c64(-1.0, 0.0)),
            0.0,
            5.0,
        )
        .unwrap();
        let traj =
            integrate_riccati(&prob, &CMatrix::zeros(n), &IntegratorOptions::default()).unwrap();
        let expected = CMatrix::identity(n).scale_real(5f64.tanh());
        let last = traj.last();
        for k in 0..4 {
            assert!((last.as_slice()[k] - expected.as_slice()[k]).norm() <= 1e-7);
        }
    }

    #[test]
    fn breakpoints_are_step_endpoints() {
        // s jumps from -1 to 0 at t = 1: z = tanh(t) then z' = -z^2
        let s = MatrixTimeFn::piecewise(
            1,
            vec![
                Piece {
                    start: 0.0,
                    entries: vec![vec![ScalarBasisTerm::constant(-1.0)]],
                },
                Piece {
                    start: 1.0,
                    entries: vec![vec![]],
                },
            ],
        )
        .unwrap();
        let prob = RiccatiProblem::new(scalar(1.0), scalar(0.0), scalar(0.0), s, 0.0, 3.0).unwrap();
        let traj = integrate_riccati(&prob, &z1(0.0), &IntegratorOptions::default()).unwrap();
        assert!(traj.dense().unwrap().mesh().contains(&1.0));
        let z_at_1 = 1f64.tanh();
        let expected = z_at_1 / (1.0 + z_at_1 * 2.0);
        assert!((traj.last()[(0, 0)].re - expected).abs() < 1e-9);
    }

    #[test]
    fn linear_flow_examples() {
        let n = 2;
        let zero = MatrixTimeFn::zeros(n);
        let prob =
            RiccatiProblem::new(zero.clone(), zero.clone(), zero.clone(), zero, 0.0, 2.0).unwrap();
        let z0 = CMatrix::from_real_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let flow = integrate_linear_system(&prob, &z0, &IntegratorOptions::default()).unwrap();
        assert_eq!(flow.phi.last().unwrap(), &CMatrix::identity(n));
        assert_eq!(flow.psi.last().unwrap(), &z0);

        let prob = scalar_problem(-1.0, 0.0, 0.0, 0.0, 2.0);
        let flow = integrate_linear_system(&prob, &z1(1.0), &IntegratorOptions::default()).unwrap();
        for (k, &t) in flow.times.iter().enumerate() {
            assert!((flow.phi[k][(0, 0)].re - (1.0 - t)).abs() < 1e-12);
            assert!((flow.psi[k][(0, 0)].re - 1.0).abs() < 1e-12);
            assert!((flow.det_phi[k].re - (1.0 - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn radon_examples() {
        let prob = scalar_problem(-1.0, 0.0, 0.0, 0.0, 2.0);
        let flow = integrate_linear_system(&prob, &z1(1.0), &IntegratorOptions::default()).unwrap();
        assert_eq!(radon_continue(&flow, 0.0).unwrap(), z1(1.0));
        assert!((radon_continue(&flow, 0.5).unwrap()[(0, 0)].re - 2.0).abs() < 1e-8);
        assert!(matches!(
            radon_continue(&flow, 1.0),
            Err(RadonOutcome::PhiSingular { .. })
        ));
        assert!(matches!(
            radon_continue(&flow, 3.0),
            Err(RadonOutcome::OutOfRange { .. })
        ));
        let ts = first_phi_singularity(&flow).unwrap();
        assert!((ts - 1.0).abs() < 1e-3);
        let traj = flow.to_trajectory();
        assert!(matches!(traj.status, TrajectoryStatus::PhiSingular { .. }));
        assert!(traj.t_end() < 1.0);
    }

    #[test]
    fn no_singularity_on_tanh_flow() {
        let prob = scalar_problem(1.0, 0.0, 0.0, -1.0, 10.0);
        let flow = integrate_linear_system(&prob, &z1(0.0), &IntegratorOptions::default()).unwrap();
        assert_eq!(first_phi_singularity(&flow), None);
        assert!(flow.to_trajectory().status.is_completed());
    }

    #[test]
    fn liouville_examples() {
        let n = 2;
        let zero = MatrixTimeFn::zeros(n);
        let prob =
            RiccatiProblem::new(zero.clone(), zero.clone(), zero.clone(), zero, 0.0, 1.0).unwrap();
        let opts = IntegratorOptions::default();
        let z0 = CMatrix::identity(n);
        let flow = integrate_linear_system(&prob, &z0, &opts).unwrap();
        let traj = integrate_riccati(&prob, &z0, &opts).unwrap();
        assert_eq!(liouville_residual(&prob, &flow, &traj, 1.0).unwrap(), 0.0);

        let prob = scalar_problem(-1.0, 0.0, 0.0, 0.0, 0.9);
        let flow = integrate_linear_system(&prob, &z1(1.0), &opts).unwrap();
        let traj = integrate_riccati(&prob, &z1(1.0), &opts).unwrap();
        assert!(liouville_residual(&prob, &flow, &traj, 0.5).unwrap() <= 1e-6);

        let prob = scalar_problem(1.0, 0.0, 0.0, -1.0, 1.0);
        let flow = integrate_linear_system(&prob, &z1(0.0), &opts).unwrap();
        let traj = integrate_riccati(&prob, &z1(0.0), &opts).unwrap();
        assert!(liouville_residual(&prob, &flow, &traj, 1.0).unwrap() <= 1e-6);
    }

    #[test]
    fn simpson_integrates_log() {
        let v = adaptive_simpson(&|t: f64| c64(-1.0 / (1.0 - t), 0.0), 0.0, 0.5, 1e-12);
        assert!((v.re - 0.5f64.ln()).abs() < 1e-11);
    }

    #[test]
    fn lyapunov_examples() {
        let opts = IntegratorOptions::default();
        let n = 2;
        let prob = LyapunovProblem {
            a: MatrixTimeFn::zeros(n),
            s: MatrixTimeFn::identity(n).scale(c64(-1.0, 0.0)),
            t0: 0.0,
            horizon: 3.0,
        };
        let traj = integrate_lyapunov(&prob, &CMatrix::zeros(n), &opts).unwrap();
        for (t, z) in traj.times.iter().zip(&traj.z) {
            assert!((z - &CMatrix::identity(n).scale_real(*t)).frobenius_norm() < 1e-12);
        }

        let prob = LyapunovProblem {
            a: scalar(1.0),
            s: scalar(0.0),
            t0: 0.0,
            horizon: 2.0,
        };
        let traj = integrate_lyapunov(&prob, &z1(1.0), &opts).unwrap();
        assert!((traj.last()[(0, 0)].re - (-4f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn lyapunov_preserves_hermitian() {
        let a = CMatrix::from_rows(&[
            vec![c64(0.5, 0.3), c64(-1.0, 0.2)],
            vec![c64(0.4, -0.1), c64(1.0, 0.0)],
        ]);
        let s = CMatrix::from_rows(&[
            vec![c64(-1.0, 0.0), c64(0.2, 0.5)],
            vec![c64(0.2, -0.5), c64(-2.0, 0.0)],
        ]);
        let z0 = CMatrix::from_rows(&[
            vec![c64(2.0, 0.0), c64(0.0, 1.0)],
            vec![c64(0.0, -1.0), c64(1.0, 0.0)],
        ]);
        let prob = LyapunovProblem {
            a: MatrixTimeFn::constant(&a),
            s: MatrixTimeFn::constant(&s),
            t0: 0.0,
            horizon: 2.0,
        };
        let traj = integrate_lyapunov(&prob, &z0, &IntegratorOptions::default()).unwrap();
        for z in &traj.z {
            assert!((z - &z.adjoint()).frobenius_norm() <= 1e-10);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let prob = scalar_problem(1.0, 0.0, 0.0, -1.0, 1.0);
        let opts = IntegratorOptions::default();
        assert!(matches!(
            integrate_riccati(&prob, &CMatrix::zeros(2), &opts),
            Err(IntegrateError::DimensionMismatch { .. })
        ));
        assert_eq!(
            integrate_riccati(&prob, &z1(f64::NAN), &opts).unwrap_err(),
            IntegrateError::NonFiniteInitialValue
        );
        let bad = IntegratorOptions { rtol: 0.0, ..opts };
        assert!(matches!(
            integrate_riccati(&prob, &z1(0.0), &bad),
            Err(IntegrateError::InvalidOption(_))
        ));
    }
}
