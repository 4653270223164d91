//! Fixed-step integration of ODEs and DDEs by the method of steps.
//!
//! Classical RK4 with cubic Hermite dense output. Delayed arguments are
//! resolved against the partially built trajectory or the history function;
//! the step is required to stay at or below the smallest delay, so a step
//! never reads state that has not been computed yet and no extrapolation is
//! ever performed.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::Error;
use crate::Result;

/// Relative slack applied at domain edges so that floating-point roundoff in
/// delayed arguments (`t - h(t)` landing one ulp outside a boundary) does not
/// spuriously reject an evaluation.
fn edge_slack(t: f64) -> f64 {
    1e-9 * (1.0 + t.abs())
}

type HistoryFn = Arc<dyn Fn(f64, &mut DVector<f64>) + Send + Sync>;

/// Initial data on `[t0 - extent, t0]`.
#[derive(Clone)]
pub struct History {
    f: HistoryFn,
    extent: f64,
    dim: usize,
}

impl History {
    /// Constant history `phi(t) = value`.
    pub fn constant(value: DVector<f64>, extent: f64) -> Self {
        let dim = value.len();
        Self {
            f: Arc::new(move |_t, out: &mut DVector<f64>| out.copy_from(&value)),
            extent,
            dim,
        }
    }

    /// Identically zero history.
    pub fn zero(dim: usize, extent: f64) -> Self {
        Self::constant(DVector::zeros(dim), extent)
    }

    /// History given by an arbitrary function of time.
    pub fn from_fn<F>(dim: usize, extent: f64, f: F) -> Self
    where
        F: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(move |t, out: &mut DVector<f64>| out.copy_from(&f(t))),
            extent,
            dim,
        }
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval_into(&self, t: f64, out: &mut DVector<f64>) {
        (self.f)(t, out);
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.eval_into(t, &mut out);
        out
    }
}

/// Fixed-step integration parameters.
///
/// `rtol`/`atol` are carried as run metadata for validation configurations;
/// the integrator itself never adapts the step.
#[derive(Debug, Clone, Copy)]
pub struct StepperConfig {
    /// Fixed step size.
    pub step: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Default horizon carried by run configurations.
    pub max_t: f64,
}

impl StepperConfig {
    pub fn new(step: f64, max_t: f64) -> Self {
        Self {
            step,
            rtol: 1e-5,
            atol: 1e-6,
            max_t,
        }
    }
}

/// Read-only view of the already-computed part of a solution, used by right
/// sides to resolve delayed arguments while the trajectory is being built.
pub struct Past<'a> {
    t0: f64,
    mesh: &'a [f64],
    states: &'a [DVector<f64>],
    derivs: &'a [DVector<f64>],
    history: &'a History,
}

impl Past<'_> {
    /// Evaluates the partially built solution at `t`.
    ///
    /// Panics if `t` lies beyond the computed segment or below the history
    /// interval; both are construction errors that the `step <= min_delay`
    /// check rules out for conforming right sides.
    pub fn eval_into(&self, t: f64, out: &mut DVector<f64>) {
        eval_piecewise(
            self.t0,
            self.mesh,
            self.states,
            self.derivs,
            self.history,
            t,
            out,
        )
        .unwrap_or_else(|e| panic!("delayed argument outside computed domain: {e}"));
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.history.dim());
        self.eval_into(t, &mut out);
        out
    }
}

/// Right side of an ODE/DDE in the form `x' = rhs(t, x, past)`.
pub trait DdeRhs {
    fn dim(&self) -> usize;

    /// Smallest delay the right side ever reads through [`Past`], or `None`
    /// for a plain ODE.
    fn min_delay(&self) -> Option<f64>;

    fn eval(&mut self, t: f64, x: &DVector<f64>, past: &Past<'_>, out: &mut DVector<f64>);
}

/// Dense-output numerical solution on `[t0, T]` with history extension on
/// `[t0 - extent, t0]`.
#[derive(Clone)]
pub struct Trajectory {
    t0: f64,
    mesh: Vec<f64>,
    states: Vec<DVector<f64>>,
    derivs: Vec<DVector<f64>>,
    history: History,
    escaped: Option<f64>,
}

impl std::fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trajectory")
            .field("t0", &self.t0)
            .field("end", &self.end_time())
            .field("nodes", &self.mesh.len())
            .field("dim", &self.dim())
            .field("escaped", &self.escaped)
            .finish()
    }
}

impl Trajectory {
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn end_time(&self) -> f64 {
        *self.mesh.last().expect("trajectory has at least one node")
    }

    pub fn dim(&self) -> usize {
        self.history.dim()
    }

    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    /// Time at which integration aborted on a non-finite state, if it did.
    /// Callers treat an escaped trajectory as having left the region of
    /// interest (cubic nonlinearities blow up in finite time outside it).
    pub fn escaped(&self) -> Option<f64> {
        self.escaped
    }

    /// Evaluates the solution at `t`: stored state exactly at mesh nodes,
    /// cubic Hermite interpolation between them, history delegation on
    /// `[t0 - extent, t0]`.
    pub fn evaluate(&self, t: f64) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dim());
        self.evaluate_into(t, &mut out)?;
        Ok(out)
    }

    pub fn evaluate_into(&self, t: f64, out: &mut DVector<f64>) -> Result<()> {
        eval_piecewise(
            self.t0,
            &self.mesh,
            &self.states,
            &self.derivs,
            &self.history,
            t,
            out,
        )
    }

    /// Maximum Euclidean norm over mesh nodes. Infinite if the run escaped.
    pub fn max_norm(&self) -> f64 {
        if self.escaped.is_some() {
            return f64::INFINITY;
        }
        self.states.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    /// First mesh node whose state norm reaches `threshold`.
    pub fn first_crossing(&self, threshold: f64) -> Option<f64> {
        for (t, s) in self.mesh.iter().zip(&self.states) {
            if s.norm() >= threshold {
                return Some(*t);
            }
        }
        self.escaped
    }

    /// Node-wise sum of two trajectories on an identical mesh, with the given
    /// history extension. Summation is exact at nodes (stored values added).
    pub fn add(&self, other: &Trajectory, history: History) -> Result<Trajectory> {
        if self.mesh.len() != other.mesh.len() || self.end_time() != other.end_time() {
            return Err(Error::MeshMismatch {
                a: self.end_time(),
                b: other.end_time(),
            });
        }
        let states = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| a + b)
            .collect();
        let derivs = self
            .derivs
            .iter()
            .zip(&other.derivs)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Trajectory {
            t0: self.t0,
            mesh: self.mesh.clone(),
            states,
            derivs,
            history,
            escaped: self.escaped.or(other.escaped),
        })
    }
}

fn eval_piecewise(
    t0: f64,
    mesh: &[f64],
    states: &[DVector<f64>],
    derivs: &[DVector<f64>],
    history: &History,
    t: f64,
    out: &mut DVector<f64>,
) -> Result<()> {
    let lo = t0 - history.extent();
    let hi = if mesh.is_empty() { t0 } else { mesh[states.len() - 1] };
    let slack = edge_slack(t);
    if t < lo - slack || t > hi + slack {
        return Err(Error::OutOfDomain { t, lo, hi });
    }
    if t <= t0 {
        // At t0 itself prefer the stored node so node identity is exact.
        if !states.is_empty() && t == t0 {
            out.copy_from(&states[0]);
        } else {
            history.eval_into(t.max(lo), out);
        }
        return Ok(());
    }
    let n = states.len();
    // First index with node > t; the segment starts one before it.
    let idx = mesh[..n].partition_point(|&m| m <= t);
    let seg = idx.saturating_sub(1).min(n.saturating_sub(2));
    if t == mesh[seg] {
        out.copy_from(&states[seg]);
        return Ok(());
    }
    if seg + 1 < n && t >= mesh[seg + 1] {
        out.copy_from(&states[seg + 1]);
        return Ok(());
    }
    if n == 1 {
        out.copy_from(&states[0]);
        return Ok(());
    }
    let (ta, tb) = (mesh[seg], mesh[seg + 1]);
    let h = tb - ta;
    let s = (t - ta) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let (ya, yb) = (&states[seg], &states[seg + 1]);
    let (fa, fb) = (&derivs[seg], &derivs[seg + 1]);
    for i in 0..out.len() {
        out[i] = h00 * ya[i] + h10 * h * fa[i] + h01 * yb[i] + h11 * h * fb[i];
    }
    Ok(())
}

/// Integrates `rhs` over `t_span` with fixed-step RK4 and cubic Hermite dense
/// output. Delayed arguments resolve against the partially built trajectory
/// or `history`. On the first non-finite state the run aborts and the
/// truncated trajectory is returned flagged as escaped.
pub fn integrate<R: DdeRhs>(
    rhs: &mut R,
    history: &History,
    t_span: (f64, f64),
    cfg: &StepperConfig,
) -> Result<Trajectory> {
    let (t0, t_end) = t_span;
    let dt = cfg.step;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidConfig(format!("step must be positive, got {dt}")));
    }
    if t_end <= t0 {
        return Err(Error::InvalidConfig(format!(
            "horizon {t_end} must exceed start time {t0}"
        )));
    }
    if let Some(hmin) = rhs.min_delay() {
        if dt > hmin * (1.0 + 1e-12) {
            return Err(Error::StepExceedsMinDelay {
                step: dt,
                min_delay: hmin,
            });
        }
    }

    // Nodes computed as t0 + i*dt (not cumulated) so reruns are bitwise equal.
    let span = t_end - t0;
    let n_steps = (span / dt - 1e-9).floor() as usize + 1;
    let mut mesh = Vec::with_capacity(n_steps + 1);
    for i in 0..=n_steps {
        let t = t0 + i as f64 * dt;
        mesh.push(if t > t_end { t_end } else { t });
    }
    *mesh.last_mut().unwrap() = t_end;

    let dim = rhs.dim();
    let mut states: Vec<DVector<f64>> = Vec::with_capacity(mesh.len());
    let mut derivs: Vec<DVector<f64>> = Vec::with_capacity(mesh.len());
    let mut escaped = None;

    let mut x0 = DVector::zeros(dim);
    history.eval_into(t0, &mut x0);
    states.push(x0);

    let mut k1 = DVector::zeros(dim);
    let mut k2 = DVector::zeros(dim);
    let mut k3 = DVector::zeros(dim);
    let mut k4 = DVector::zeros(dim);
    let mut xs = DVector::zeros(dim);
    let mut xn = DVector::zeros(dim);

    {
        let past = Past {
            t0,
            mesh: &mesh[..1],
            states: &states,
            derivs: &derivs,
            history,
        };
        rhs.eval(t0, &states[0], &past, &mut k1);
    }
    if !k1.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState { t: t0, stage: None });
    }
    derivs.push(k1.clone());

    for i in 0..mesh.len() - 1 {
        let t = mesh[i];
        let h = mesh[i + 1] - t;
        k1.copy_from(&derivs[i]);

        {
            let past = Past {
                t0,
                mesh: &mesh[..states.len()],
                states: &states,
                derivs: &derivs,
                history,
            };
            xs.copy_from(&states[i]);
            xs.axpy(0.5 * h, &k1, 1.0);
            rhs.eval(t + 0.5 * h, &xs, &past, &mut k2);

            xs.copy_from(&states[i]);
            xs.axpy(0.5 * h, &k2, 1.0);
            rhs.eval(t + 0.5 * h, &xs, &past, &mut k3);

            xs.copy_from(&states[i]);
            xs.axpy(h, &k3, 1.0);
            rhs.eval(t + h, &xs, &past, &mut k4);
        }

        xn.copy_from(&states[i]);
        xn.axpy(h / 6.0, &k1, 1.0);
        xn.axpy(h / 3.0, &k2, 1.0);
        xn.axpy(h / 3.0, &k3, 1.0);
        xn.axpy(h / 6.0, &k4, 1.0);

        if !xn.iter().all(|v| v.is_finite()) {
            escaped = Some(mesh[i + 1]);
            break;
        }
        states.push(xn.clone());

        {
            let past = Past {
                t0,
                mesh: &mesh[..states.len()],
                states: &states,
                derivs: &derivs,
                history,
            };
            rhs.eval(mesh[i + 1], &states[i + 1], &past, &mut k1);
        }
        if !k1.iter().all(|v| v.is_finite()) {
            escaped = Some(mesh[i + 1]);
            states.pop();
            break;
        }
        derivs.push(k1.clone());
    }

    mesh.truncate(states.len());
    Ok(Trajectory {
        t0,
        mesh,
        states,
        derivs,
        history: history.clone(),
        escaped,
    })
}

/// Wraps a plain closure `f(t, x) -> dx` as an ODE right side.
pub struct OdeFn<F> {
    dim: usize,
    f: F,
}

impl<F> OdeFn<F>
where
    F: FnMut(f64, &DVector<f64>, &mut DVector<f64>),
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> DdeRhs for OdeFn<F>
where
    F: FnMut(f64, &DVector<f64>, &mut DVector<f64>),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn min_delay(&self) -> Option<f64> {
        None
    }

    fn eval(&mut self, t: f64, x: &DVector<f64>, _past: &Past<'_>, out: &mut DVector<f64>) {
        (self.f)(t, x, out)
    }
}

/// Wraps a closure `f(t, x, past) -> dx` with a declared minimum delay.
pub struct DelayFnRhs<F> {
    dim: usize,
    min_delay: f64,
    f: F,
}

impl<F> DelayFnRhs<F>
where
    F: FnMut(f64, &DVector<f64>, &Past<'_>, &mut DVector<f64>),
{
    pub fn new(dim: usize, min_delay: f64, f: F) -> Self {
        Self { dim, min_delay, f }
    }
}

impl<F> DdeRhs for DelayFnRhs<F>
where
    F: FnMut(f64, &DVector<f64>, &Past<'_>, &mut DVector<f64>),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn min_delay(&self) -> Option<f64> {
        Some(self.min_delay)
    }

    fn eval(&mut self, t: f64, x: &DVector<f64>, past: &Past<'_>, out: &mut DVector<f64>) {
        (self.f)(t, x, past, out)
    }
}
