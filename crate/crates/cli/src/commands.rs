use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use riccati_core::certify::{
    certify as check_all, compare_with_lyapunov, monitor_invariant, scan_initial_values,
    CertReport, CertifyError, InitialClass, MonitorOutcome, MonitorVerdict,
};
use riccati_core::config::{linspace, ConfigError, Run, RunConfig};
use riccati_core::integrate::{integrate_riccati, IntegratorOptions, TrajectoryStatus};
use riccati_core::lemmas::run_all;
use riccati_core::riccati::Certificate;
use riccati_core::suite;

use crate::output::{csv_writer, num, open, opt_num, write_json};
use crate::{
    CertFlags, CertifyArgs, Common, CompareArgs, ExamplesArgs, IntegratorFlags, LemmaArgs,
    ScanArgs, SolveArgs,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_HYPOTHESIS: u8 = 1;
pub const EXIT_BLOWUP: u8 = 2;
pub const EXIT_OTHER_TERMINATION: u8 = 3;
pub const EXIT_ANOMALY: u8 = 4;
pub const EXIT_INPUT: u8 = 64;
pub const EXIT_INTERNAL: u8 = 70;

fn input_error(field: &str, message: impl ToString) -> anyhow::Error {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.to_string(),
    }
    .into()
}

struct Loaded {
    cfg: RunConfig,
    run: Run,
}

fn apply_integrator(opts: &mut IntegratorOptions, f: &IntegratorFlags) {
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut opts.rtol, f.rtol);
    set(&mut opts.atol, f.atol);
    set(&mut opts.h_min, f.h_min);
    set(&mut opts.blowup_threshold, f.blowup_threshold);
    set(&mut opts.blowup_step, f.blowup_step);
    set(&mut opts.output_step, f.output_step);
    if let Some(m) = f.max_steps {
        opts.max_steps = m;
    }
}

fn load(common: &Common) -> Result<Loaded> {
    let mut cfg = RunConfig::from_path(&common.config)?;
    if let Some(h) = common.horizon {
        cfg.problem.horizon = h;
    }
    apply_integrator(&mut cfg.integrator, &common.integrator);
    let run = cfg.build()?;
    Ok(Loaded { cfg, run })
}

fn with_cert_flags(cert: &Certificate, flags: &CertFlags) -> Result<Certificate> {
    Certificate::new(
        cert.u.clone(),
        cert.lambda.clone(),
        cert.mu.clone(),
        flags.grid_density.unwrap_or(cert.grid_density),
        flags.tol.unwrap_or(cert.tol),
    )
    .map_err(|e| input_error("certificate", e))
}

fn require_certificate(loaded: &Loaded, flags: &CertFlags) -> Result<Certificate> {
    match &loaded.run.certificate {
        Some(c) => with_cert_flags(c, flags),
        None => Err(input_error(
            "certificate",
            "section required by this command",
        )),
    }
}

fn csv_target(common: &Common, cfg: &RunConfig) -> Option<PathBuf> {
    common.out.clone().or_else(|| {
        cfg.output
            .as_ref()
            .and_then(|o| o.csv.clone())
            .map(PathBuf::from)
    })
}

pub fn status_line(status: &TrajectoryStatus, t_end: f64) -> String {
    match *status {
        TrajectoryStatus::Completed => format!("status: COMPLETED T={t_end:.3}"),
        TrajectoryStatus::Blowup { t_escape } => format!("status: BLOWUP T≈{t_escape:.3}"),
        TrajectoryStatus::PhiSingular { t }
        | TrajectoryStatus::StepUnderflow { t }
        | TrajectoryStatus::StepLimit { t } => format!("status: {} T={t:.3}", status.label()),
    }
}

pub fn solve(args: &SolveArgs) -> Result<u8> {
    let loaded = load(&args.common)?;
    let Run {
        problem,
        z0,
        options,
        ..
    } = &loaded.run;
    let traj = integrate_riccati(problem, z0, options)?;
    let target = csv_target(&args.common, &loaded.cfg);
    let (mut w, sink) = csv_writer(target.as_deref())?;

    let n = problem.dim();
    let mut header = vec!["t".to_string()];
    for i in 1..=n {
        for j in 1..=n {
            header.push(format!("z{i}{j}_re"));
            header.push(format!("z{i}{j}_im"));
        }
    }
    header.extend(["norm_f", "min_eig_z_plus_zh", "step"].map(String::from));
    w.write_record(&header)?;
    for ((t, z), d) in traj.times.iter().zip(&traj.z).zip(&traj.diagnostics) {
        let mut row = vec![num(*t)];
        for c in z.as_slice() {
            row.push(num(c.re));
            row.push(num(c.im));
        }
        row.extend([num(d.norm), num(d.min_hermitian_eig), num(d.step)]);
        w.write_record(&row)?;
    }
    w.flush()?;
    sink.note(&status_line(&traj.status, traj.t_end()));
    Ok(match traj.status {
        TrajectoryStatus::Completed => EXIT_OK,
        TrajectoryStatus::Blowup { .. } => EXIT_BLOWUP,
        _ => EXIT_OTHER_TERMINATION,
    })
}

#[derive(Debug, Serialize)]
struct MonitorSummary {
    verdict: MonitorVerdict,
    samples: usize,
    skipped: Vec<f64>,
    worst_relative_margin: f64,
    worst_t0_variant_min_eigenvalue: f64,
    worst_l_hermitian_min: f64,
    tol: f64,
}

impl From<&MonitorOutcome> for MonitorSummary {
    fn from(m: &MonitorOutcome) -> Self {
        let min = |f: fn(&riccati_core::certify::MonitorRecord) -> f64| {
            m.records.iter().map(f).fold(f64::INFINITY, f64::min)
        };
        MonitorSummary {
            verdict: m.verdict,
            samples: m.records.len(),
            skipped: m.skipped.clone(),
            worst_relative_margin: m.worst_relative_margin,
            worst_t0_variant_min_eigenvalue: min(|r| r.gap_min_eigenvalue_t0_variant),
            worst_l_hermitian_min: min(|r| r.l_hermitian_min),
            tol: m.tol,
        }
    }
}

#[derive(Debug, Serialize)]
struct CertifyOutput<'a> {
    name: Option<&'a str>,
    report: &'a CertReport,
    trajectory: Option<TrajectoryStatus>,
    monitor: Option<MonitorSummary>,
    outcome: &'static str,
}

fn pass(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

fn print_report(report: &CertReport) {
    let c = &report.conditions;
    if let Some(t) = c.singular_u_at {
        println!("SINGULAR_U at t={t}");
    }
    if let Some(r) = &c.condition_i {
        println!(
            "condition_I    {}  worst hermiticity defect {:.3e}, worst min eigenvalue of PU {:.6e} (t={})",
            pass(r.pass),
            r.worst_hermiticity_defect,
            r.worst_min_eigenvalue,
            r.worst_t
        );
    }
    if let Some(r) = &c.condition_ii {
        let (lo, hi) = r
            .mu_samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, m)| {
                (lo.min(m), hi.max(m))
            });
        println!(
            "condition_II   {}  worst residual {:.3e} (t={}), mu {} in [{lo:.6}, {hi:.6}]",
            pass(r.pass),
            r.worst_residual,
            r.worst_t,
            if r.mu_supplied {
                "supplied"
            } else {
                "extracted"
            }
        );
    }
    if let Some(r) = &c.condition_iii {
        println!(
            "condition_III  {}  worst max eigenvalue of S_UL + S_UL* {:.6e} (t={})",
            pass(r.pass),
            r.worst_max_eigenvalue,
            r.worst_t
        );
    }
    match &report.initial_condition {
        Some(ic) => println!(
            "initial value  {}  gap min eigenvalue {:.6e}, min eigenvalue of U^-1 + U^-* {:.6e}",
            ic.class, ic.gap_min_eigenvalue, ic.u_inverse_sum_min_eigenvalue
        ),
        None => println!("initial value  FAIL  U(t0) singular"),
    }
    println!("verdict        {}", report.verdict);
    if !report.failed.is_empty() {
        println!("failed         {}", report.failed.join(", "));
    }
    println!("note           {}", report.statement);
}

pub fn certify(args: &CertifyArgs) -> Result<u8> {
    let loaded = load(&args.common)?;
    let cert = require_certificate(&loaded, &args.cert)?;
    let Run {
        problem,
        z0,
        options,
        ..
    } = &loaded.run;
    let report = check_all(&cert, problem, z0)?;
    print_report(&report);

    let mut trajectory = None;
    let mut monitor = None;
    let outcome = if !report.verdict.is_certified() {
        "HYPOTHESIS_FAILED"
    } else if args.no_solve {
        "CERTIFIED_NOT_SOLVED"
    } else {
        let traj = integrate_riccati(problem, z0, options)?;
        let m = monitor_invariant(&cert, &traj, report.verdict.branch(), args.cert.monitor_tol);
        println!("{}", status_line(&traj.status, traj.t_end()));
        println!(
            "monitor        {}  {} samples, worst relative margin {:.6e}",
            match m.verdict {
                MonitorVerdict::Holds => "HOLDS".to_string(),
                MonitorVerdict::Violated { first_t } => format!("VIOLATED first at t={first_t}"),
                MonitorVerdict::NotCertified => "NOT_CERTIFIED".to_string(),
            },
            m.records.len(),
            m.worst_relative_margin
        );
        let ok = traj.status.is_completed() && m.verdict == MonitorVerdict::Holds;
        trajectory = Some(traj.status);
        monitor = Some(MonitorSummary::from(&m));
        if ok {
            "CERTIFIED_AND_HELD"
        } else {
            println!("SOLVER-ACCURACY ANOMALY: certified problem failed to complete or violated the invariant");
            "SOLVER_ACCURACY_ANOMALY"
        }
    };

    let json_target = args.common.out.clone().or_else(|| {
        loaded
            .cfg
            .output
            .as_ref()
            .and_then(|o| o.report.clone())
            .map(PathBuf::from)
    });
    if let Some(path) = json_target {
        let out = CertifyOutput {
            name: loaded.cfg.name.as_deref(),
            report: &report,
            trajectory,
            monitor,
            outcome,
        };
        write_json(&path, &out)?;
    }
    Ok(match outcome {
        "HYPOTHESIS_FAILED" => EXIT_HYPOTHESIS,
        "SOLVER_ACCURACY_ANOMALY" => EXIT_ANOMALY,
        _ => EXIT_OK,
    })
}

pub fn scan(args: &ScanArgs) -> Result<u8> {
    let loaded = load(&args.common)?;
    let cert = require_certificate(&loaded, &args.cert)?;
    let Some(mut family) = loaded.run.family.clone() else {
        return Err(input_error("scan", "section required by this command"));
    };
    if args.from.is_some() || args.to.is_some() || args.count.is_some() {
        let spec = loaded.cfg.scan.as_ref().expect("family implies scan spec");
        family.alphas = linspace(
            args.from.unwrap_or(spec.from),
            args.to.unwrap_or(spec.to),
            args.count.map_or(spec.count, |c| c as usize),
        );
    }
    let rows = scan_initial_values(
        &cert,
        &loaded.run.problem,
        &family,
        &loaded.run.options,
        !args.serial,
    )?;
    let (mut w, sink) = csv_writer(csv_target(&args.common, &loaded.cfg).as_deref())?;
    w.write_record([
        "alpha",
        "initial",
        "certified",
        "status",
        "t_escape",
        "t_end",
    ])?;
    for r in &rows {
        let initial = r
            .initial
            .map_or("SINGULAR_U".to_string(), |c: InitialClass| c.to_string());
        w.write_record([
            num(r.alpha),
            initial,
            r.certified.to_string(),
            r.status.label().to_string(),
            opt_num(r.t_escape),
            num(r.t_end),
        ])?;
    }
    w.flush()?;
    let certified = rows.iter().filter(|r| r.certified).count();
    let completed = rows.iter().filter(|r| r.status.is_completed()).count();
    sink.note(&format!(
        "scan: {} rows, {certified} certified, {completed} completed",
        rows.len()
    ));
    let unsound = rows.iter().any(|r| r.certified && !r.status.is_completed());
    if unsound {
        sink.note("SOLVER-ACCURACY ANOMALY: a certified initial value did not reach the horizon");
        return Ok(EXIT_ANOMALY);
    }
    Ok(EXIT_OK)
}

pub fn check_lemmas(args: &LemmaArgs) -> Result<u8> {
    let reports = run_all(args.seed, args.trials as usize);
    for r in &reports {
        println!(
            "{}  {:<36} worst residual {:.3e} (n={}), {} failures in {} trials",
            pass(r.pass()),
            r.name,
            r.worst_residual,
            r.worst_dim,
            r.failures,
            r.trials
        );
    }
    if let Some(path) = &args.out {
        write_json(path, &reports)?;
    }
    Ok(if reports.iter().all(|r| r.pass()) {
        EXIT_OK
    } else {
        EXIT_HYPOTHESIS
    })
}

pub fn compare(args: &CompareArgs) -> Result<u8> {
    let loaded = load(&args.common)?;
    let Run {
        problem,
        z0,
        options,
        certificate,
        ..
    } = &loaded.run;
    let density = args
        .grid_density
        .or(certificate.as_ref().map(|c| c.grid_density))
        .unwrap_or(riccati_core::riccati::DEFAULT_GRID_DENSITY);
    let tol = args
        .tol
        .or(certificate.as_ref().map(|c| c.tol))
        .unwrap_or(riccati_core::matrix::DEFAULT_DEFINITENESS_TOL);
    let report = match compare_with_lyapunov(problem, z0, options, density, tol) {
        Ok(r) => r,
        Err(CertifyError::HypothesisViolation { hypothesis, t }) => {
            println!("HYPOTHESIS_VIOLATION: {hypothesis} fails at t={t}");
            return Ok(EXIT_HYPOTHESIS);
        }
        Err(e) => return Err(e.into()),
    };
    let (mut w, sink) = csv_writer(csv_target(&args.common, &loaded.cfg).as_deref())?;
    w.write_record(["t", "z_min_eig", "gap_min_eig", "z_scale", "gap_scale"])?;
    for s in &report.samples {
        w.write_record([
            num(s.t),
            num(s.z_min_eigenvalue),
            num(s.gap_min_eigenvalue),
            num(s.z_scale),
            num(s.gap_scale),
        ])?;
    }
    w.flush()?;
    sink.note(&format!(
        "comparison {}: worst relative margins Z {:.3e}, Z~ - Z {:.3e}; riccati {}, comparison {}",
        if report.holds { "HOLDS" } else { "FAILS" },
        report.worst_z_margin,
        report.worst_gap_margin,
        report.riccati_status.label(),
        report.lyapunov_status.label()
    ));
    Ok(if report.holds {
        EXIT_OK
    } else {
        EXIT_HYPOTHESIS
    })
}

/// Bundled configurations, with scan sections where a family is natural.
pub fn bundled_configs() -> Vec<RunConfig> {
    suite::all()
        .into_iter()
        .map(|e| {
            let mut cfg = e.to_config();
            let n = e.problem.dim();
            let zeros = vec![vec![riccati_core::matrix::c64(0.0, 0.0); n]; n];
            let identity = riccati_core::config::matrix_rows(&riccati_core::CMatrix::identity(n));
            if e.name == "tanh_2x2" || e.name == "scalar_blowup" {
                cfg.scan = Some(riccati_core::config::ScanSpec {
                    base: zeros,
                    direction: identity,
                    from: -1.0,
                    to: 1.0,
                    count: 5,
                });
            }
            cfg
        })
        .collect()
}

pub fn examples(args: &ExamplesArgs) -> Result<u8> {
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    for cfg in bundled_configs() {
        let name = cfg.name.clone().expect("bundled configs are named");
        let path: PathBuf = Path::new(&args.out).join(format!("{name}.json"));
        let (mut w, _) = open(Some(&path))?;
        writeln!(w, "{}", cfg.to_json())?;
        println!("{}", path.display());
    }
    Ok(EXIT_OK)
}
