//! Subcommand implementations: each builds the configured model, runs a
//! pipeline from the core crate, and emits CSV.

use std::path::{Path, PathBuf};

use nalgebra::DVector;

use dde_bounds::boundary::{
    sweep, BoundaryEstimate, ProjectionMode, ReferenceProbe, ScalarBoundProbe,
    SweepConfig, YThresholdProbe,
};
use dde_bounds::bounds::{bilateral_bounds, integrate_majorant, BoundTrace};
use dde_bounds::cascade::solve_cascade;
use dde_bounds::dde::StepperConfig;
use dde_bounds::models::{cubic_residual_majorant, simulate_system};
use dde_bounds::spectral::{eigen_decompose, EigenData};
use dde_bounds::Error;

use crate::config::{ProjectionConfig, RunConfig};
use crate::output::{fmt_f64, write_csv, CsvFile, FileMeta};

/// Failure carrying the process exit code: 2 for configuration problems,
/// 3 for numerical ones.
#[derive(Debug)]
pub struct AppError {
    pub code: i32,
    pub message: String,
}

impl AppError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

fn numerical(e: Error) -> AppError {
    AppError::numerical(e.to_string())
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub k_depth: Option<usize>,
    pub horizon: Option<f64>,
    pub varpi: Option<f64>,
    pub phi_s: Option<[f64; 4]>,
}

/// Applies command-line overrides; the config hash is computed afterwards so
/// equal hashes identify equal effective runs.
pub fn effective_config(path: &Path, ov: &Overrides) -> Result<RunConfig, AppError> {
    let mut cfg = RunConfig::from_path(path).map_err(AppError::config)?;
    if let Some(k) = ov.k_depth {
        cfg.k_depth = k;
    }
    if let Some(t) = ov.horizon {
        cfg.horizon = t;
    }
    if let Some(v) = ov.varpi {
        cfg.varpi = v;
    }
    if let Some(p) = ov.phi_s {
        cfg.phi_s = Some(p);
    }
    cfg.validate().map_err(AppError::config)?;
    Ok(cfg)
}

fn stepper(cfg: &RunConfig) -> StepperConfig {
    StepperConfig::new(cfg.dt, cfg.horizon)
}

fn require_phi(cfg: &RunConfig) -> Result<DVector<f64>, AppError> {
    cfg.phi_s
        .map(|p| DVector::from_vec(p.to_vec()))
        .ok_or_else(|| AppError::config("phi_s required: set it in the config or pass --phi-s"))
}

fn base_meta(kind: &str, cfg: &RunConfig) -> FileMeta {
    FileMeta::new(kind, &cfg.config_hash())
        .with("model", cfg.model.label())
        .with("d", fmt_f64(cfg.params.d))
        .with("K", cfg.k_depth.to_string())
        .with("T", fmt_f64(cfg.horizon))
        .with("dt", fmt_f64(cfg.dt))
        .with("varpi", fmt_f64(cfg.varpi))
        .with("convention", cfg.majorant_convention.label())
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    Path::new(&cfg.output_dir).join(name)
}

fn decompose(cfg: &RunConfig) -> Result<EigenData, AppError> {
    eigen_decompose(&cfg.oscillator_params().system_matrix(), 1e-10).map_err(numerical)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<PathBuf, AppError> {
    let sys = cfg.build_system();
    sys.validate_on(0.0, cfg.horizon, 512)
        .map_err(|e| AppError::config(e.to_string()))?;
    let phi = require_phi(cfg)?;
    let traj = simulate_system(&sys, &phi, (0.0, cfg.horizon), &stepper(cfg)).map_err(numerical)?;

    let mut meta = base_meta("simulate", cfg);
    if let Some(t) = traj.escaped() {
        meta = meta.with("escaped_at", fmt_f64(t));
    }
    let mut columns = vec!["t".to_string()];
    columns.extend((1..=sys.dim).map(|i| format!("x{i}")));
    columns.push("norm".into());
    let col_refs: Vec<&str> = columns.iter().map(String::as_str).collect();

    let rows: Vec<Vec<String>> = traj
        .mesh()
        .iter()
        .zip(traj.states())
        .map(|(t, s)| {
            let mut row = vec![fmt_f64(*t)];
            row.extend(s.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(s.norm()));
            row
        })
        .collect();
    let path = out_path(cfg, "simulate.csv");
    write_csv(&path, &meta, &col_refs, &rows).map_err(AppError::config)?;
    Ok(path)
}

pub fn cmd_cascade(cfg: &RunConfig) -> Result<PathBuf, AppError> {
    let sys = cfg.build_system();
    let phi = require_phi(cfg)?;
    let cascade = solve_cascade(&sys, &phi, cfg.k_depth, (0.0, cfg.horizon), &stepper(cfg))
        .map_err(numerical)?;

    let meta = base_meta("cascade", cfg);
    let mut columns = vec!["t".to_string()];
    columns.extend((1..=cfg.k_depth).map(|k| format!("y{k}_norm")));
    columns.push("partial_sum_norm".into());
    let col_refs: Vec<&str> = columns.iter().map(String::as_str).collect();

    let y = cascade.approximation();
    let rows: Vec<Vec<String>> = y
        .mesh()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut row = vec![fmt_f64(*t)];
            for k in 0..cfg.k_depth {
                row.push(fmt_f64(cascade.iterates()[k].states()[i].norm()));
            }
            row.push(fmt_f64(y.states()[i].norm()));
            row
        })
        .collect();
    let path = out_path(cfg, "cascade.csv");
    write_csv(&path, &meta, &col_refs, &rows).map_err(AppError::config)?;
    Ok(path)
}

/// Runs the full bilateral-bound pipeline for one initial vector.
pub fn bounds_trace(cfg: &RunConfig, with_reference: bool) -> Result<BoundTrace, AppError> {
    if !cfg.model.has_majorant() {
        return Err(numerical(Error::UnsupportedNonlinearity));
    }
    let sys = cfg.build_system();
    let phi = require_phi(cfg)?;
    let eig = decompose(cfg)?;
    let step = stepper(cfg);
    let cascade =
        solve_cascade(&sys, &phi, cfg.k_depth, (0.0, cfg.horizon), &step).map_err(numerical)?;
    let maj = cubic_residual_majorant(
        &eig,
        &cfg.oscillator_params(),
        cfg.model.base(),
        &cascade,
        cfg.k_depth,
        cfg.majorant_convention.into(),
    )
    .map_err(numerical)?;
    let z = integrate_majorant(
        &maj,
        (&sys.delay0, &sys.f_delays[0]),
        (0.0, cfg.horizon),
        &step,
    )
    .map_err(numerical)?;
    if let Some(t) = z.escaped() {
        return Err(AppError::numerical(format!(
            "scalar residual bound blew up at t = {t}; the bound certifies nothing beyond"
        )));
    }
    let mut trace = bilateral_bounds(&cascade, &z, &eig).map_err(numerical)?;
    if with_reference {
        let reference =
            simulate_system(&sys, &phi, (0.0, cfg.horizon), &step).map_err(numerical)?;
        if reference.escaped().is_none() {
            trace.attach_reference(&reference).map_err(numerical)?;
        }
    }
    Ok(trace)
}

pub fn cmd_bounds(cfg: &RunConfig, with_reference: bool) -> Result<PathBuf, AppError> {
    let trace = bounds_trace(cfg, with_reference)?;
    let meta = base_meta("bounds", cfg);
    let mut columns = vec!["t", "lower", "upper", "z", "y_norm"];
    if trace.reference.is_some() {
        columns.push("reference");
    }
    let rows: Vec<Vec<String>> = (0..trace.mesh.len())
        .map(|i| {
            let mut row = vec![
                fmt_f64(trace.mesh[i]),
                fmt_f64(trace.lower[i]),
                fmt_f64(trace.upper[i]),
                fmt_f64(trace.z[i]),
                fmt_f64(trace.y_norm[i]),
            ];
            if let Some(r) = &trace.reference {
                row.push(fmt_f64(r[i]));
            }
            row
        })
        .collect();
    let path = out_path(cfg, "bounds.csv");
    write_csv(&path, &meta, &columns, &rows).map_err(AppError::config)?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodArg {
    Reference,
    Scalar,
    YThreshold,
    All,
}

impl std::str::FromStr for MethodArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(Self::Reference),
            "scalar" => Ok(Self::Scalar),
            "y_threshold" => Ok(Self::YThreshold),
            "all" => Ok(Self::All),
            other => Err(format!(
                "unknown method {other:?}; expected reference|scalar|y_threshold|all"
            )),
        }
    }
}

fn sweep_config(cfg: &RunConfig) -> SweepConfig {
    let s = &cfg.sweep;
    SweepConfig {
        theta_divisions: s.theta_divisions,
        ray_weights: (s.ray_weights[0], s.ray_weights[1]),
        rho_max: s.rho_max,
        tol_rho: s.tol_rho,
        seed_radius: s.seed_radius,
        projection: match s.projection_mode {
            ProjectionConfig::Slice => ProjectionMode::Slice,
            ProjectionConfig::MinOverTheta2 => ProjectionMode::MinOverTheta2,
        },
        theta2_fixed: s.theta2_fixed,
        theta2_divisions: s.theta2_divisions,
    }
}

/// Runs one boundary sweep for the given method and threshold.
pub fn boundary_estimate(
    cfg: &RunConfig,
    method: MethodArg,
    varpi: f64,
    eig: Option<&EigenData>,
) -> Result<BoundaryEstimate, AppError> {
    let sys = cfg.build_system();
    let step = stepper(cfg);
    let t_span = (0.0, cfg.horizon);
    let scfg = sweep_config(cfg);
    let params = cfg.oscillator_params();
    match method {
        MethodArg::Reference => {
            let probe = ReferenceProbe {
                sys: &sys,
                varpi,
                t_span,
                cfg: step,
            };
            sweep(&probe, &scfg).map_err(numerical)
        }
        MethodArg::Scalar => {
            if !cfg.model.has_majorant() {
                return Err(numerical(Error::UnsupportedNonlinearity));
            }
            let owned;
            let eig = match eig {
                Some(e) => e,
                None => {
                    owned = eigen_decompose(&params.system_matrix(), 1e-10).map_err(numerical)?;
                    &owned
                }
            };
            let probe = ScalarBoundProbe {
                sys: &sys,
                eig,
                params: &params,
                base: cfg.model.base(),
                convention: cfg.majorant_convention.into(),
                k_depth: cfg.k_depth,
                varpi,
                t_span,
                cfg: step,
            };
            sweep(&probe, &scfg).map_err(numerical)
        }
        MethodArg::YThreshold => {
            let probe = YThresholdProbe {
                sys: &sys,
                k_depth: cfg.k_depth,
                varpi,
                t_span,
                cfg: step,
            };
            sweep(&probe, &scfg).map_err(numerical)
        }
        MethodArg::All => unreachable!("expanded by the caller"),
    }
}

fn boundary_rows(est: &BoundaryEstimate, w1: f64) -> Vec<Vec<String>> {
    est.angles
        .iter()
        .map(|a| {
            let (rho, flag) = match a.outcome {
                dde_bounds::boundary::AngleOutcome::Resolved(r) => (Some(r), "resolved"),
                dde_bounds::boundary::AngleOutcome::NoExceedance => (None, "no_exceedance"),
                dde_bounds::boundary::AngleOutcome::SeedExceeded => (None, "seed_exceeded"),
            };
            vec![
                fmt_f64(a.theta1),
                fmt_f64(a.theta2),
                rho.map(fmt_f64).unwrap_or_default(),
                flag.to_string(),
                rho.map(|r| fmt_f64(r * w1 * a.theta1.cos())).unwrap_or_default(),
                rho.map(|r| fmt_f64(r * w1 * a.theta1.sin())).unwrap_or_default(),
            ]
        })
        .collect()
}

fn method_label(m: MethodArg) -> &'static str {
    match m {
        MethodArg::Reference => "reference",
        MethodArg::Scalar => "scalar",
        MethodArg::YThreshold => "y_threshold",
        MethodArg::All => "all",
    }
}

pub fn cmd_boundary(cfg: &RunConfig, method: MethodArg) -> Result<Vec<PathBuf>, AppError> {
    let methods: Vec<MethodArg> = match method {
        MethodArg::All => {
            let mut ms = vec![MethodArg::Reference];
            if cfg.model.has_majorant() {
                ms.push(MethodArg::Scalar);
            }
            ms.push(MethodArg::YThreshold);
            ms
        }
        one => vec![one],
    };
    let varpis: Vec<f64> = match &cfg.sweep.varpi_sweep {
        Some(list) if !list.is_empty() => list.clone(),
        _ => vec![cfg.varpi],
    };

    let eig = if methods.contains(&MethodArg::Scalar) {
        Some(decompose(cfg)?)
    } else {
        None
    };

    let columns = ["theta1", "theta2", "rho", "flag", "proj1", "proj2"];
    let mut written = Vec::new();
    for &m in &methods {
        for &varpi in &varpis {
            let est = boundary_estimate(cfg, m, varpi, eig.as_ref())?;
            let rows = boundary_rows(&est, cfg.sweep.ray_weights[0]);
            let meta = base_meta("boundary", cfg)
                .with("method", method_label(m))
                .with("sweep_varpi", fmt_f64(varpi))
                .with("tol_rho", fmt_f64(cfg.sweep.tol_rho))
                .with("unresolved", est.unresolved_count().to_string());
            let name = if varpis.len() == 1 {
                format!("boundary_{}.csv", method_label(m))
            } else {
                format!("boundary_{}_varpi{}.csv", method_label(m), fmt_f64(varpi))
            };
            let path = out_path(cfg, &name);
            write_csv(&path, &meta, &columns, &rows).map_err(AppError::config)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Compares two output files of the same kind and writes a metrics file.
pub fn cmd_compare(a: &Path, b: &Path, tol: f64, out: &Path) -> Result<(), AppError> {
    let fa = CsvFile::read(a).map_err(AppError::config)?;
    let fb = CsvFile::read(b).map_err(AppError::config)?;
    if fa.kind() != fb.kind() {
        return Err(AppError::config(format!(
            "cannot compare kind {} with kind {}",
            fa.kind(),
            fb.kind()
        )));
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut push = |metric: &str, key: &str, value: String| {
        rows.push(vec![metric.to_string(), key.to_string(), value]);
    };

    match fa.kind() {
        "bounds" => {
            let read = |f: &CsvFile| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), AppError> {
                Ok((
                    f.numeric_column("t").map_err(AppError::config)?,
                    f.numeric_column("lower").map_err(AppError::config)?,
                    f.numeric_column("upper").map_err(AppError::config)?,
                ))
            };
            let (ta, la, ua) = read(&fa)?;
            let (tb, lb, ub) = read(&fb)?;
            if ta.len() != tb.len() || ta.iter().zip(&tb).any(|(x, y)| x != y) {
                return Err(AppError::config("mismatched time grids"));
            }
            let gap = |l: &[f64], u: &[f64]| {
                l.iter().zip(u).map(|(l, u)| u - l).fold(0.0, f64::max)
            };
            let ga = gap(&la, &ua);
            let gb = gap(&lb, &ub);
            push("max_gap", "a", fmt_f64(ga));
            push("max_gap", "b", fmt_f64(gb));
            push("gap_ratio", "b_over_a", fmt_f64(if ga > 0.0 { gb / ga } else { f64::NAN }));
            let dev_u = ua
                .iter()
                .zip(&ub)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            let dev_l = la
                .iter()
                .zip(&lb)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            push("max_upper_deviation", "", fmt_f64(dev_u));
            push("max_lower_deviation", "", fmt_f64(dev_l));
            for (name, f, lower, upper) in [("a", &fa, &la, &ua), ("b", &fb, &lb, &ub)] {
                if f.columns.iter().any(|c| c == "reference") {
                    let r = f.numeric_column("reference").map_err(AppError::config)?;
                    let violations = r
                        .iter()
                        .zip(lower.iter().zip(upper.iter()))
                        .filter(|(r, (l, u))| **r < **l - tol || **r > **u + tol)
                        .count();
                    push("enclosure_violations", name, violations.to_string());
                }
            }
        }
        "boundary" => {
            let read = |f: &CsvFile| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), AppError> {
                Ok((
                    f.numeric_column("theta1").map_err(AppError::config)?,
                    f.numeric_column("theta2").map_err(AppError::config)?,
                    f.numeric_column("rho").map_err(AppError::config)?,
                ))
            };
            let (t1a, t2a, ra) = read(&fa)?;
            let (t1b, t2b, rb) = read(&fb)?;
            if t1a.len() != t1b.len()
                || t1a.iter().zip(&t1b).any(|(x, y)| x != y)
                || t2a.iter().zip(&t2b).any(|(x, y)| x != y)
            {
                return Err(AppError::config("mismatched angle grids"));
            }
            let mut max_dev: f64 = 0.0;
            let mut min_margin = f64::INFINITY;
            let mut max_rel: f64 = 0.0;
            let mut compared = 0usize;
            for i in 0..ra.len() {
                if ra[i].is_nan() || rb[i].is_nan() {
                    continue;
                }
                compared += 1;
                let dev = (ra[i] - rb[i]).abs();
                max_dev = max_dev.max(dev);
                min_margin = min_margin.min(ra[i] - rb[i]);
                let denom = ra[i].max(rb[i]);
                if denom > 0.0 {
                    max_rel = max_rel.max(dev / denom);
                }
                push("radial_margin", &fmt_f64(t1a[i]), fmt_f64(ra[i] - rb[i]));
            }
            push("angles_compared", "", compared.to_string());
            push("max_radial_deviation", "", fmt_f64(max_dev));
            push(
                "min_signed_margin",
                "a_minus_b",
                fmt_f64(if compared > 0 { min_margin } else { f64::NAN }),
            );
            push("max_relative_gap", "", fmt_f64(max_rel));
        }
        other => {
            return Err(AppError::config(format!(
                "compare does not support kind {other:?}"
            )));
        }
    }

    let hash = fa
        .meta
        .get("config_sha256")
        .cloned()
        .unwrap_or_default();
    let meta = FileMeta::new("compare", &hash)
        .with("kind_compared", fa.kind())
        .with("tol", fmt_f64(tol));
    write_csv(out, &meta, &["metric", "key", "value"], &rows).map_err(AppError::config)?;
    Ok(())
}
