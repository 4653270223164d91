//! Scalar residual equation integration and bilateral norm bounds.
//!
//! The residual norm bound `Z` solves a scalar delay equation with zero
//! history; the solution norm is then enclosed between `|Y_K| - |V| Z` and
//! `|Y_K| + |V| Z`, the lower envelope clamped at zero.

use nalgebra::DVector;

use crate::cascade::CascadeResult;
use crate::dde::{integrate, DdeRhs, History, Past, StepperConfig, Trajectory};
use crate::error::Error;
use crate::models::{Delay, DelaySystem, MajorantFn, MajorantSpec};
use crate::spectral::{g_norm, transformed_norm, EigenData};
use crate::Result;

/// Bilateral envelopes on the solution norm over a common mesh.
#[derive(Debug, Clone)]
pub struct BoundTrace {
    pub mesh: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Scalar residual bound at the nodes (clamped at zero).
    pub z: Vec<f64>,
    /// Norm of the cascade approximation at the nodes; zero for the baseline
    /// pipeline, which has no cascade.
    pub y_norm: Vec<f64>,
    /// Optional reference solution norm from direct simulation.
    pub reference: Option<Vec<f64>>,
    /// Cascade depth behind this trace; zero for the baseline pipeline.
    pub k_depth: usize,
}

impl BoundTrace {
    pub fn max_gap(&self) -> f64 {
        self.upper
            .iter()
            .zip(&self.lower)
            .map(|(u, l)| u - l)
            .fold(0.0, f64::max)
    }

    pub fn sup_upper(&self) -> f64 {
        self.upper.iter().fold(0.0f64, |a, &b| a.max(b))
    }

    /// First node where the upper envelope reaches `threshold`.
    pub fn first_upper_crossing(&self, threshold: f64) -> Option<f64> {
        self.mesh
            .iter()
            .zip(&self.upper)
            .find(|(_, u)| **u >= threshold)
            .map(|(t, _)| *t)
    }

    /// Samples `|x(t)|` from a reference trajectory on this trace's mesh.
    pub fn attach_reference(&mut self, reference: &Trajectory) -> Result<()> {
        let mut vals = Vec::with_capacity(self.mesh.len());
        for &t in &self.mesh {
            vals.push(reference.evaluate(t)?.norm());
        }
        self.reference = Some(vals);
        Ok(())
    }

    /// Nodes where the attached reference escapes `[lower - tol, upper + tol]`.
    pub fn enclosure_violations(&self, tol: f64) -> usize {
        let Some(reference) = &self.reference else {
            return 0;
        };
        reference
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .filter(|(r, (l, u))| **r < *l - tol || **r > *u + tol)
            .count()
    }
}

/// Assembles the envelopes from node values: `upper = |Y_K| + |V| Z` and
/// `lower = max(0, |Y_K| - |V| Z)`.
pub fn compose_bounds(
    mesh: Vec<f64>,
    y_norm: Vec<f64>,
    z: Vec<f64>,
    norm_v: f64,
    k_depth: usize,
) -> BoundTrace {
    let upper: Vec<f64> = y_norm.iter().zip(&z).map(|(y, zv)| y + norm_v * zv).collect();
    let lower: Vec<f64> = y_norm
        .iter()
        .zip(&z)
        .map(|(y, zv)| (y - norm_v * zv).max(0.0))
        .collect();
    BoundTrace {
        mesh,
        lower,
        upper,
        z,
        y_norm,
        reference: None,
        k_depth,
    }
}

struct MajorantRhs<'a> {
    maj: &'a MajorantSpec,
    h0: &'a Delay,
    h1: &'a Delay,
    buf: DVector<f64>,
}

impl DdeRhs for MajorantRhs<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn min_delay(&self) -> Option<f64> {
        Some(self.h0.lo().min(self.h1.lo()))
    }

    fn eval(&mut self, t: f64, x: &DVector<f64>, past: &Past<'_>, out: &mut DVector<f64>) {
        past.eval_into(t - self.h0.eval(t), &mut self.buf);
        let zd0 = self.buf[0].max(0.0);
        past.eval_into(t - self.h1.eval(t), &mut self.buf);
        let zd1 = self.buf[0].max(0.0);
        let m = self.maj;
        out[0] = (m.drift)(t) * x[0]
            + (m.lin_delay)(t) * zd0
            + (((m.c3)(t) * zd1 + (m.c2)(t)) * zd1 + (m.c1)(t)) * zd1
            + (m.offset)(t);
    }
}

/// Integrates the scalar residual equation with zero history.
///
/// The solution is nonnegative (nonnegative coefficients and forcing from a
/// zero start); an escape means the bound certifies nothing beyond the
/// blow-up time and callers treat it as threshold exceedance.
pub fn integrate_majorant(
    maj: &MajorantSpec,
    delays: (&Delay, &Delay),
    t_span: (f64, f64),
    cfg: &StepperConfig,
) -> Result<Trajectory> {
    let (h0, h1) = delays;
    let mut rhs = MajorantRhs {
        maj,
        h0,
        h1,
        buf: DVector::zeros(1),
    };
    let history = History::zero(1, h0.hi().max(h1.hi()));
    integrate(&mut rhs, &history, t_span, cfg)
}

/// Forms the bilateral bounds from a cascade and a residual-bound solution.
pub fn bilateral_bounds(
    cascade: &CascadeResult,
    z: &Trajectory,
    eig: &EigenData,
) -> Result<BoundTrace> {
    let y = cascade.approximation();
    if (y.t0() - z.t0()).abs() > 1e-12 || (y.end_time() - z.end_time()).abs() > 1e-12 {
        return Err(Error::MeshMismatch {
            a: y.end_time(),
            b: z.end_time(),
        });
    }
    let mesh: Vec<f64> = y.mesh().to_vec();
    let y_norm: Vec<f64> = y.states().iter().map(|s| s.norm()).collect();
    // Same stepping grid, so nodes resolve to stored values; tiny negative
    // roundoff in Z carries no information for a norm bound.
    let mut zv = Vec::with_capacity(mesh.len());
    for &t in &mesh {
        zv.push(z.evaluate(t)?[0].max(0.0));
    }
    Ok(compose_bounds(mesh, y_norm, zv, eig.norm_v, cascade.depth()))
}

struct BaselineRhs<'a> {
    sys: &'a DelaySystem,
    eig: &'a EigenData,
    l_f: &'a MajorantFn,
    /// Upper equation when true, lower otherwise.
    upper: bool,
    xi: Vec<f64>,
    buf: DVector<f64>,
    f_scratch: DVector<f64>,
}

impl BaselineRhs<'_> {
    fn forcing_norm(&mut self, t: f64) -> f64 {
        (self.sys.forcing)(t, &mut self.f_scratch);
        self.eig.transformed_state_norm(&self.f_scratch)
    }
}

impl DdeRhs for BaselineRhs<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn min_delay(&self) -> Option<f64> {
        Some(self.sys.h_min())
    }

    fn eval(&mut self, t: f64, x: &DVector<f64>, past: &Past<'_>, out: &mut DVector<f64>) {
        let g = self.sys.g_at(t);
        let gn = g_norm(self.eig, &g);

        self.xi[0] = x[0].max(0.0);
        for (i, d) in self.sys.f_delays.iter().enumerate() {
            past.eval_into(t - d.eval(t), &mut self.buf);
            self.xi[i + 1] = self.buf[0].max(0.0);
        }
        let mut l_val = self.l_f.eval(t, &self.xi);

        // The delayed linear term enters the majorant as |V^-1 E V| xi(h0).
        past.eval_into(t - self.sys.delay0.eval(t), &mut self.buf);
        let e = self.sys.e_at(t);
        l_val += transformed_norm(self.eig, &e) * self.buf[0].max(0.0);

        let forcing = self.forcing_norm(t);
        if self.upper {
            out[0] = (self.eig.alpha1 + gn) * x[0] + l_val + forcing;
        } else {
            out[0] = (self.eig.alphan - gn) * x[0] - (l_val + forcing);
        }
    }
}

/// Direct bilateral bounds from the transformed system without the cascade
/// refinement, for comparison runs.
///
/// `l_f` must be the eigen-majorant of the system nonlinearity (arity
/// 1 + number of nonlinearity delays); the delayed linear term is added
/// internally. The lower solution is clamped at zero from its first
/// crossing; below zero a norm bound is vacuous.
pub fn baseline_bounds(
    sys: &DelaySystem,
    eig: &EigenData,
    l_f: &MajorantFn,
    phi_s: &DVector<f64>,
    t_span: (f64, f64),
    cfg: &StepperConfig,
) -> Result<BoundTrace> {
    assert_eq!(
        l_f.arity(),
        1 + sys.f_delays.len(),
        "majorant arity must match the nonlinearity delays"
    );
    let phi_norm = eig.transformed_state_norm(phi_s);
    let history = History::constant(DVector::from_element(1, phi_norm), sys.h_bar());

    let run = |upper: bool| -> Result<Trajectory> {
        let mut rhs = BaselineRhs {
            sys,
            eig,
            l_f,
            upper,
            xi: vec![0.0; 1 + sys.f_delays.len()],
            buf: DVector::zeros(1),
            f_scratch: DVector::zeros(sys.dim),
        };
        integrate(&mut rhs, &history, t_span, cfg)
    };

    let z_up = run(true)?;
    if let Some(t) = z_up.escaped() {
        return Err(Error::NonFiniteState { t, stage: None });
    }
    let z_lo = run(false)?;
    if let Some(t) = z_lo.escaped() {
        return Err(Error::NonFiniteState { t, stage: None });
    }

    let mesh: Vec<f64> = z_up.mesh().to_vec();
    let mut upper = Vec::with_capacity(mesh.len());
    let mut lower = Vec::with_capacity(mesh.len());
    let mut z = Vec::with_capacity(mesh.len());
    let mut crossed = false;
    for (i, &t) in mesh.iter().enumerate() {
        let zu = z_up.states()[i][0];
        let zl = z_lo.evaluate(t)?[0];
        if zl <= 0.0 {
            crossed = true;
        }
        upper.push(eig.norm_v * zu);
        lower.push(if crossed { 0.0 } else { (zl / eig.norm_vinv).max(0.0) });
        z.push(zu.max(0.0));
    }
    let y_norm = vec![0.0; mesh.len()];
    Ok(BoundTrace {
        mesh,
        lower,
        upper,
        z,
        y_norm,
        reference: None,
        k_depth: 0,
    })
}
