//! JSON run configuration: problem coefficients, optional certificate,
//! initial value, integrator options and scan family.
//!
//! Complex numbers are `[re, im]` pairs. Basis terms are
//! `{"kind": "SIN", "params": [2.0], "coeff": [1.0, 0.0]}`. A matrix
//! function is one of
//!
//! ```json
//! {"constant": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]}
//! {"entries": [[[term, ...], [term, ...]], [[...], [...]]]}
//! {"pieces": [{"start": 0.0, "entries": [...]}, {"start": 2.0, "entries": [...]}]}
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{p_adjoint_certificate, CertifyError, InitialFamily};
use crate::integrate::IntegratorOptions;
use crate::matrix::CMatrix;
use crate::matrix::DEFAULT_DEFINITENESS_TOL;
use crate::riccati::{Certificate, RiccatiError, RiccatiProblem, DEFAULT_GRID_DENSITY};
use crate::timefn::{BasisKind, EntryTerms, MatrixTimeFn, Piece, ScalarBasisTerm, TimeFnError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("PARSE_ERROR at line {line}, column {column}, field `{field}`: {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("DIM_MISMATCH in `{field}`: expected {expected}, found {actual}")]
    DimMismatch {
        field: String,
        expected: usize,
        actual: usize,
    },
    #[error("invalid value in `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(field: &str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.to_string(),
    }
}

fn dim_mismatch(field: String, expected: usize, actual: usize) -> ConfigError {
    ConfigError::DimMismatch {
        field,
        expected,
        actual,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    pub coeff: Complex64,
}

impl TermSpec {
    pub fn to_term(&self, field: &str) -> Result<ScalarBasisTerm, ConfigError> {
        let want = |k: usize| {
            if self.params.len() == k {
                Ok(())
            } else {
                Err(invalid(
                    field,
                    format!(
                        "{} takes {k} parameter(s), got {}",
                        self.kind,
                        self.params.len()
                    ),
                ))
            }
        };
        let kind = match self.kind.to_ascii_uppercase().as_str() {
            "CONST" => {
                want(0)?;
                BasisKind::Const
            }
            "POLY" => {
                want(1)?;
                let k = self.params[0];
                if !(k >= 0.0 && k.fract() == 0.0 && k <= u32::MAX as f64) {
                    return Err(invalid(
                        field,
                        format!("POLY degree must be a nonnegative integer, got {k}"),
                    ));
                }
                BasisKind::Poly(k as u32)
            }
            "SIN" => {
                want(1)?;
                BasisKind::Sin(self.params[0])
            }
            "COS" => {
                want(1)?;
                BasisKind::Cos(self.params[0])
            }
            "EXP" => {
                want(1)?;
                BasisKind::Exp(self.params[0])
            }
            other => return Err(invalid(field, format!("unknown basis kind {other:?}"))),
        };
        if !self.params.iter().all(|p| p.is_finite())
            || !self.coeff.re.is_finite()
            || !self.coeff.im.is_finite()
        {
            return Err(invalid(field, "non-finite parameter or coefficient"));
        }
        Ok(ScalarBasisTerm::new(kind, self.coeff))
    }
}

impl From<&ScalarBasisTerm> for TermSpec {
    fn from(t: &ScalarBasisTerm) -> Self {
        let (kind, params) = match t.kind {
            BasisKind::Const => ("CONST", vec![]),
            BasisKind::Poly(k) => ("POLY", vec![k as f64]),
            BasisKind::Sin(w) => ("SIN", vec![w]),
            BasisKind::Cos(w) => ("COS", vec![w]),
            BasisKind::Exp(a) => ("EXP", vec![a]),
        };
        TermSpec {
            kind: kind.to_string(),
            params,
            coeff: t.coeff,
        }
    }
}

/// Rows of entries, each entry a list of terms.
pub type EntriesSpec = Vec<Vec<Vec<TermSpec>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceSpec {
    pub start: f64,
    pub entries: EntriesSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixFnSpec {
    Constant(Vec<Vec<Complex64>>),
    Entries(EntriesSpec),
    Pieces(Vec<PieceSpec>),
}

fn square_rows<T>(rows: &[Vec<T>], n: usize, field: &str) -> Result<(), ConfigError> {
    if rows.len() != n {
        return Err(dim_mismatch(field.to_string(), n, rows.len()));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(dim_mismatch(format!("{field}[{i}]"), n, row.len()));
        }
    }
    Ok(())
}

fn build_entries(
    rows: &EntriesSpec,
    n: usize,
    field: &str,
) -> Result<Vec<EntryTerms>, ConfigError> {
    square_rows(rows, n, field)?;
    let mut out = Vec::with_capacity(n * n);
    for (i, row) in rows.iter().enumerate() {
        for (j, terms) in row.iter().enumerate() {
            let entry = terms
                .iter()
                .enumerate()
                .map(|(k, t)| t.to_term(&format!("{field}[{i}][{j}][{k}]")))
                .collect::<Result<Vec<_>, _>>()?;
            out.push(entry);
        }
    }
    Ok(out)
}

fn entries_spec(n: usize, entries: &[EntryTerms]) -> EntriesSpec {
    entries
        .chunks(n)
        .map(|row| {
            row.iter()
                .map(|e| e.iter().map(TermSpec::from).collect())
                .collect()
        })
        .collect()
}

impl MatrixFnSpec {
    pub fn build(&self, n: usize, field: &str) -> Result<MatrixTimeFn, ConfigError> {
        let timefn_err = |e: TimeFnError| invalid(field, e);
        match self {
            MatrixFnSpec::Constant(rows) => {
                let m = matrix_from_rows(rows, n, field)?;
                Ok(MatrixTimeFn::constant(&m))
            }
            MatrixFnSpec::Entries(rows) => {
                MatrixTimeFn::from_entries(n, build_entries(rows, n, &format!("{field}.entries"))?)
                    .map_err(timefn_err)
            }
            MatrixFnSpec::Pieces(pieces) => {
                let mut built = Vec::with_capacity(pieces.len());
                for (k, p) in pieces.iter().enumerate() {
                    built.push(Piece {
                        start: p.start,
                        entries: build_entries(
                            &p.entries,
                            n,
                            &format!("{field}.pieces[{k}].entries"),
                        )?,
                    });
                }
                MatrixTimeFn::piecewise(n, built).map_err(timefn_err)
            }
        }
    }
}

impl From<&MatrixTimeFn> for MatrixFnSpec {
    fn from(f: &MatrixTimeFn) -> Self {
        let n = f.dim();
        let pieces = f.pieces();
        if pieces.len() == 1 && pieces[0].start == f64::NEG_INFINITY {
            let all_const = pieces[0]
                .entries
                .iter()
                .all(|e| e.iter().all(|t| t.kind == BasisKind::Const));
            if all_const {
                return MatrixFnSpec::Constant(matrix_rows(&f.eval(0.0)));
            }
            return MatrixFnSpec::Entries(entries_spec(n, &pieces[0].entries));
        }
        MatrixFnSpec::Pieces(
            pieces
                .iter()
                .map(|p| PieceSpec {
                    start: p.start,
                    entries: entries_spec(n, &p.entries),
                })
                .collect(),
        )
    }
}

pub fn matrix_from_rows(
    rows: &[Vec<Complex64>],
    n: usize,
    field: &str,
) -> Result<CMatrix, ConfigError> {
    square_rows(rows, n, field)?;
    let m = CMatrix::from_rows(rows);
    if !m.is_finite() {
        return Err(invalid(field, "non-finite entry"));
    }
    Ok(m)
}

pub fn matrix_rows(m: &CMatrix) -> Vec<Vec<Complex64>> {
    m.as_slice().chunks(m.dim()).map(|r| r.to_vec()).collect()
}

fn default_t0() -> f64 {
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub n: usize,
    #[serde(default = "default_t0")]
    pub t0: f64,
    pub horizon: f64,
    #[serde(rename = "P")]
    pub p: MatrixFnSpec,
    #[serde(rename = "Q")]
    pub q: MatrixFnSpec,
    #[serde(rename = "R")]
    pub r: MatrixFnSpec,
    #[serde(rename = "S")]
    pub s: MatrixFnSpec,
}

impl ProblemSpec {
    pub fn build(&self) -> Result<RiccatiProblem, ConfigError> {
        let n = self.n;
        if n == 0 {
            return Err(invalid("problem.n", "dimension must be at least 1"));
        }
        let p = self.p.build(n, "problem.P")?;
        let q = self.q.build(n, "problem.Q")?;
        let r = self.r.build(n, "problem.R")?;
        let s = self.s.build(n, "problem.S")?;
        RiccatiProblem::new(p, q, r, s, self.t0, self.horizon)
            .map_err(|e| invalid("problem.horizon", e))
    }

    pub fn from_problem(prob: &RiccatiProblem) -> Self {
        ProblemSpec {
            n: prob.dim(),
            t0: prob.t0,
            horizon: prob.horizon,
            p: (&prob.p).into(),
            q: (&prob.q).into(),
            r: (&prob.r).into(),
            s: (&prob.s).into(),
        }
    }
}

fn default_density() -> f64 {
    DEFAULT_GRID_DENSITY
}

fn default_tol() -> f64 {
    DEFAULT_DEFINITENESS_TOL
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSpec {
    /// Omitted together with `u_is_p_adjoint: true` to take `U = P*`.
    #[serde(rename = "U", default, skip_serializing_if = "Option::is_none")]
    pub u: Option<MatrixFnSpec>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub u_is_p_adjoint: bool,
    /// Defaults to zero.
    #[serde(rename = "Lambda", default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<MatrixFnSpec>,
    /// 1x1 real function; extracted from the data when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<MatrixFnSpec>,
    #[serde(default = "default_density")]
    pub grid_density: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl CertificateSpec {
    pub fn build(&self, prob: &RiccatiProblem) -> Result<Certificate, ConfigError> {
        let n = prob.dim();
        let lambda = self
            .lambda
            .as_ref()
            .map(|l| l.build(n, "certificate.Lambda"))
            .transpose()?;
        let mu = self
            .mu
            .as_ref()
            .map(|m| m.build(1, "certificate.mu"))
            .transpose()?;
        let cert_err = |e: RiccatiError| match e {
            RiccatiError::InvalidMu => invalid("certificate.mu", e),
            RiccatiError::InvalidParameter(p) => invalid(&format!("certificate.{p}"), e),
            other => invalid("certificate", other),
        };
        match (&self.u, self.u_is_p_adjoint) {
            (Some(_), true) => Err(invalid(
                "certificate.U",
                "give either U or u_is_p_adjoint, not both",
            )),
            (None, false) => Err(invalid(
                "certificate.U",
                "missing (set u_is_p_adjoint: true to use U = P*)",
            )),
            (Some(u), false) => {
                let u = u.build(n, "certificate.U")?;
                let lambda = lambda.unwrap_or_else(|| MatrixTimeFn::zeros(n));
                Certificate::new(u, lambda, mu, self.grid_density, self.tol).map_err(cert_err)
            }
            (None, true) => p_adjoint_certificate(prob, lambda, mu, self.grid_density, self.tol)
                .map_err(|e| match e {
                    CertifyError::Riccati(r) => cert_err(r),
                    other => invalid("certificate.u_is_p_adjoint", other),
                }),
        }
    }

    pub fn from_certificate(cert: &Certificate) -> Self {
        CertificateSpec {
            u: Some((&cert.u).into()),
            u_is_p_adjoint: false,
            lambda: Some((&cert.lambda).into()),
            mu: cert.mu.as_ref().map(Into::into),
            grid_density: cert.grid_density,
            tol: cert.tol,
        }
    }
}

/// Family `base + α · direction` for `count` values of `α` evenly spaced
/// over `[from, to]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub base: Vec<Vec<Complex64>>,
    pub direction: Vec<Vec<Complex64>>,
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

pub fn linspace(from: f64, to: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![from],
        _ => (0..count)
            .map(|k| {
                if k + 1 == count {
                    to
                } else {
                    from + (to - from) * k as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

impl ScanSpec {
    pub fn build(&self, n: usize) -> Result<InitialFamily, ConfigError> {
        if self.count == 0 {
            return Err(invalid("scan.count", "must be at least 1"));
        }
        if !self.from.is_finite() || !self.to.is_finite() {
            return Err(invalid("scan.from", "range must be finite"));
        }
        Ok(InitialFamily {
            base: matrix_from_rows(&self.base, n, "scan.base")?,
            direction: matrix_from_rows(&self.direction, n, "scan.direction")?,
            alphas: linspace(self.from, self.to, self.count),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub problem: ProblemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSpec>,
    pub z0: Vec<Vec<Complex64>>,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

/// Validated, ready-to-run objects built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Run {
    pub problem: RiccatiProblem,
    pub certificate: Option<Certificate>,
    pub z0: CMatrix,
    pub options: IntegratorOptions,
    pub family: Option<InitialFamily>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::Parse {
                line: inner.line(),
                column: inner.column(),
                field,
                message: inner.to_string(),
            }
        })?;
        cfg.build()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Pretty JSON with purely numeric arrays kept on one line.
    pub fn to_json(&self) -> String {
        compact_numeric_arrays(&serde_json::to_string_pretty(self).expect("config serializes"))
    }

    pub fn build(&self) -> Result<Run, ConfigError> {
        let problem = self.problem.build()?;
        let n = problem.dim();
        let certificate = self
            .certificate
            .as_ref()
            .map(|c| c.build(&problem))
            .transpose()?;
        let z0 = matrix_from_rows(&self.z0, n, "z0")?;
        let o = &self.integrator;
        let positive = [
            ("integrator.rtol", o.rtol),
            ("integrator.atol", o.atol),
            ("integrator.h_min", o.h_min),
            ("integrator.blowup_threshold", o.blowup_threshold),
            ("integrator.blowup_step", o.blowup_step),
            ("integrator.output_step", o.output_step),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(field, "must be positive and finite"));
            }
        }
        let family = self.scan.as_ref().map(|s| s.build(n)).transpose()?;
        Ok(Run {
            problem,
            certificate,
            z0,
            options: *o,
            family,
        })
    }

    pub fn from_parts(
        name: &str,
        problem: &RiccatiProblem,
        certificate: Option<&Certificate>,
        z0: &CMatrix,
    ) -> Self {
        RunConfig {
            name: Some(name.to_string()),
            problem: ProblemSpec::from_problem(problem),
            certificate: certificate.map(CertificateSpec::from_certificate),
            z0: matrix_rows(z0),
            integrator: IntegratorOptions::default(),
            scan: None,
            output: None,
        }
    }
}

fn compact_numeric_arrays(pretty: &str) -> String {
    let numeric = |c: char| {
        c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E' | ',') || c.is_whitespace()
    };
    let mut out = String::with_capacity(pretty.len());
    let mut rest = pretty;
    while let Some(open) = rest.find('[') {
        out.push_str(&rest[..=open]);
        rest = &rest[open + 1..];
        if let Some(close) = rest.find(|c: char| !numeric(c)) {
            if rest[close..].starts_with(']') && rest[..close].chars().any(|c| c.is_ascii_digit()) {
                let items: Vec<&str> = rest[..close].split(',').map(str::trim).collect();
                out.push_str(&items.join(", "));
                rest = &rest[close..];
            }
        }
    }
    out.push_str(rest);
    out
}
