//! Model catalog (coupled oscillator systems with delays) and majorant
//! construction for polynomial nonlinearities.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::cascade::CascadeResult;
use crate::error::Error;
use crate::spectral::{CMatrix, EigenData};
use crate::Result;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Writes the full matrix value at time `t` into the provided scratch.
pub type MatrixFn = Arc<dyn Fn(f64, &mut DMatrix<f64>) + Send + Sync>;
/// Writes the full vector value at time `t` into the provided scratch.
pub type VectorFn = Arc<dyn Fn(f64, &mut DVector<f64>) + Send + Sync>;

/// A (possibly time-varying) delay with its certified bounds.
#[derive(Clone)]
pub struct Delay {
    f: ScalarFn,
    lo: f64,
    hi: f64,
}

impl Delay {
    pub fn constant(h: f64) -> Self {
        assert!(h > 0.0, "delays must be strictly positive");
        Self {
            f: Arc::new(move |_| h),
            lo: h,
            hi: h,
        }
    }

    pub fn from_fn<F>(f: F, lo: f64, hi: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        assert!(lo > 0.0 && hi >= lo);
        Self {
            f: Arc::new(f),
            lo,
            hi,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }
}

/// Time-varying coefficient of a monomial.
#[derive(Clone)]
pub enum Coeff {
    Const(f64),
    Fn(ScalarFn),
}

impl Coeff {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Coeff::Const(c) => *c,
            Coeff::Fn(f) => f(t),
        }
    }
}

/// One monomial of a polynomial nonlinearity:
/// `coeff(t) * prod_j x_{comp_j}(arg slot_j)^pow_j` added to `out[row]`.
/// Slot 0 is the current state, slot `i >= 1` the state delayed by `h_i`.
#[derive(Clone)]
pub struct PolyTerm {
    pub row: usize,
    pub coeff: Coeff,
    pub factors: Vec<(usize, usize, u32)>,
}

/// Sum of monomials in current and delayed state components.
#[derive(Clone, Default)]
pub struct PolySum {
    pub terms: Vec<PolyTerm>,
    pub dim: usize,
    /// Number of argument slots: 1 (current) + number of nonlinearity delays.
    pub arity: usize,
}

impl PolySum {
    pub fn add_to(
        &self,
        t: f64,
        current: &DVector<f64>,
        delayed: &[DVector<f64>],
        out: &mut DVector<f64>,
    ) {
        for term in &self.terms {
            let mut v = term.coeff.eval(t);
            for &(slot, comp, pow) in &term.factors {
                let x = if slot == 0 {
                    current[comp]
                } else {
                    delayed[slot - 1][comp]
                };
                v *= x.powi(pow as i32);
            }
            out[term.row] += v;
        }
    }

    /// Norm majorant: each component factor `|x_c|` is replaced by the full
    /// norm argument of its slot and coefficients by their absolute values.
    pub fn majorant(&self) -> MajorantFn {
        self.weighted_majorant(None, 1.0)
    }

    /// Majorant of the eigenbasis-transformed nonlinearity: the factor for a
    /// component `c` picks up the row sum `kappa_c`, and the whole sum the
    /// `|V^-1|` prefactor from pulling the inverse eigenmatrix out.
    pub fn eigen_majorant(&self, eig: &EigenData) -> MajorantFn {
        self.weighted_majorant(Some(&eig.kappa), eig.norm_vinv)
    }

    fn weighted_majorant(&self, kappa: Option<&[f64]>, prefactor: f64) -> MajorantFn {
        let terms = self
            .terms
            .iter()
            .map(|term| {
                let mut scale = prefactor;
                let mut powers = vec![0u32; self.arity];
                for &(slot, comp, pow) in &term.factors {
                    if let Some(k) = kappa {
                        scale *= k[comp].powi(pow as i32);
                    }
                    powers[slot] += pow;
                }
                MajTerm {
                    coeff: term.coeff.clone(),
                    scale,
                    powers,
                }
            })
            .collect();
        MajorantFn {
            terms,
            arity: self.arity,
        }
    }
}

#[derive(Clone)]
struct MajTerm {
    coeff: Coeff,
    scale: f64,
    powers: Vec<u32>,
}

/// Scalar majorant `L(t, xi_0, ..., xi_m)`: monotone nondecreasing in each
/// norm argument and vanishing at zero.
#[derive(Clone)]
pub struct MajorantFn {
    terms: Vec<MajTerm>,
    arity: usize,
}

impl MajorantFn {
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn eval(&self, t: f64, xi: &[f64]) -> f64 {
        debug_assert_eq!(xi.len(), self.arity);
        let mut total = 0.0;
        for term in &self.terms {
            let mut v = term.coeff.eval(t).abs() * term.scale;
            for (slot, &pow) in term.powers.iter().enumerate() {
                if pow > 0 {
                    v *= xi[slot].powi(pow as i32);
                }
            }
            total += v;
        }
        total
    }
}

type ExtraFn = Arc<dyn Fn(f64, &DVector<f64>, &[DVector<f64>], &mut DVector<f64>) + Send + Sync>;

/// Nonlinearity `f(t, x(t), x(t-h_1), ..., x(t-h_m))`: a polynomial part and
/// optional extra terms (impulse- or saturation-like) with no majorant path.
#[derive(Clone)]
pub struct Nonlinearity {
    pub poly: PolySum,
    extra: Option<ExtraFn>,
}

impl Nonlinearity {
    pub fn polynomial(poly: PolySum) -> Self {
        Self { poly, extra: None }
    }

    pub fn with_extra<F>(poly: PolySum, extra: F) -> Self
    where
        F: Fn(f64, &DVector<f64>, &[DVector<f64>], &mut DVector<f64>) + Send + Sync + 'static,
    {
        Self {
            poly,
            extra: Some(Arc::new(extra)),
        }
    }

    pub fn has_majorant(&self) -> bool {
        self.extra.is_none()
    }

    pub fn add_to(
        &self,
        t: f64,
        current: &DVector<f64>,
        delayed: &[DVector<f64>],
        out: &mut DVector<f64>,
    ) {
        self.poly.add_to(t, current, delayed, out);
        if let Some(extra) = &self.extra {
            extra(t, current, delayed, out);
        }
    }

    pub fn eval(&self, t: f64, current: &DVector<f64>, delayed: &[DVector<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.poly.dim);
        self.add_to(t, current, delayed, &mut out);
        out
    }
}

/// Norm majorant of a nonlinearity, when one exists.
pub fn polynomial_majorant(f: &Nonlinearity) -> Result<MajorantFn> {
    if !f.has_majorant() {
        return Err(Error::UnsupportedNonlinearity);
    }
    Ok(f.poly.majorant())
}

/// Full delay system
/// `x' = (A + G(t)) x + E(t) x(t-h_0(t)) + f(t, x, x(t-h_1), ...) + F(t)`.
#[derive(Clone)]
pub struct DelaySystem {
    pub dim: usize,
    pub a: DMatrix<f64>,
    pub g: MatrixFn,
    pub e: MatrixFn,
    /// Delay of the linear `E` term.
    pub delay0: Delay,
    /// Delays feeding the nonlinearity.
    pub f_delays: Vec<Delay>,
    pub f: Nonlinearity,
    pub forcing: VectorFn,
    /// Forcing amplitude `F0` (the forcing direction has unit sup-norm).
    pub forcing_amplitude: f64,
}

impl DelaySystem {
    /// Upper bound over all delays.
    pub fn h_bar(&self) -> f64 {
        self.f_delays
            .iter()
            .map(Delay::hi)
            .fold(self.delay0.hi(), f64::max)
    }

    /// Lower bound over all delays.
    pub fn h_min(&self) -> f64 {
        self.f_delays
            .iter()
            .map(Delay::lo)
            .fold(self.delay0.lo(), f64::min)
    }

    pub fn g_at(&self, t: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        (self.g)(t, &mut m);
        m
    }

    pub fn e_at(&self, t: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        (self.e)(t, &mut m);
        m
    }

    pub fn forcing_at(&self, t: f64) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim);
        (self.forcing)(t, &mut v);
        v
    }

    /// Samples the delay bounds and forcing magnitude over a horizon.
    pub fn validate_on(&self, t0: f64, t_end: f64, samples: usize) -> Result<()> {
        if self.forcing_amplitude < 0.0 {
            return Err(Error::InvalidConfig("forcing amplitude must be >= 0".into()));
        }
        let mut all = vec![self.delay0.clone()];
        all.extend(self.f_delays.iter().cloned());
        for d in &all {
            if !(d.lo() > 0.0) {
                return Err(Error::InvalidConfig(
                    "delays must have positive lower bounds".into(),
                ));
            }
        }
        let mut fv = DVector::zeros(self.dim);
        for k in 0..=samples {
            let t = t0 + (t_end - t0) * k as f64 / samples as f64;
            for d in &all {
                let h = d.eval(t);
                if h < d.lo() - 1e-12 || h > d.hi() + 1e-12 {
                    return Err(Error::InvalidConfig(format!(
                        "delay value {h} at t = {t} escapes declared bounds [{}, {}]",
                        d.lo(),
                        d.hi()
                    )));
                }
            }
            (self.forcing)(t, &mut fv);
            if fv.norm() > self.forcing_amplitude * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "forcing norm {} at t = {t} exceeds amplitude {}",
                    fv.norm(),
                    self.forcing_amplitude
                )));
            }
        }
        Ok(())
    }
}

/// Which oscillator family the cubic terms act on: velocity components for
/// the Van der Pol-like system, position components for the Duffing-like one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OscillatorBase {
    VdpLike,
    DuffingLike,
}

impl OscillatorBase {
    /// Zero-based state components whose cubes drive rows 2 and 4.
    pub fn cubic_components(self) -> (usize, usize) {
        match self {
            OscillatorBase::VdpLike => (1, 3),
            OscillatorBase::DuffingLike => (0, 2),
        }
    }
}

/// Parameters of the two-oscillator model family.
///
/// `c1`, `c2` are the damping coefficients; `mu1`, `mu2` scale the cubic
/// terms on rows 2 and 4 and `mu3`, `mu4` the Gaussian/tanh extras on the
/// same rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorParams {
    pub c1: f64,
    pub c2: f64,
    pub omega1_sq: f64,
    pub omega2_sq: f64,
    pub d: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub r1: f64,
    pub r2: f64,
    pub s1: f64,
    pub s2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
    pub f0: f64,
    pub omega0: f64,
    pub h0: f64,
    pub h1: f64,
    pub q: f64,
    pub x_center: f64,
    pub k1: f64,
    pub k2: f64,
}

impl OscillatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega1_sq > 0.0 && self.omega2_sq > 0.0) {
            return Err(Error::InvalidConfig("stiffnesses must be positive".into()));
        }
        if !(self.q > 0.0) {
            return Err(Error::InvalidConfig("Gaussian width q must be positive".into()));
        }
        if !(self.h0 > 0.0 && self.h1 > 0.0) {
            return Err(Error::InvalidConfig("delays must be positive".into()));
        }
        if self.f0 < 0.0 {
            return Err(Error::InvalidConfig("forcing amplitude must be >= 0".into()));
        }
        Ok(())
    }

    pub fn system_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0,
                1.0,
                0.0,
                0.0,
                -(self.omega1_sq + self.d),
                -self.c1,
                self.d,
                0.0,
                0.0,
                0.0,
                0.0,
                1.0,
                self.d,
                0.0,
                -(self.omega2_sq + self.d),
                -self.c2,
            ],
        )
    }

    pub fn g21(&self, t: f64) -> f64 {
        self.a1 * (self.r1 * t).sin() + self.a2 * (self.r2 * t).sin()
    }

    pub fn g43(&self, t: f64) -> f64 {
        self.b1 * (self.s1 * t).sin() + self.b2 * (self.s2 * t).sin()
    }
}

fn linear_parts(p: &OscillatorParams) -> (DMatrix<f64>, MatrixFn, VectorFn) {
    let a = p.system_matrix();
    let pg = *p;
    let g: MatrixFn = Arc::new(move |t, m: &mut DMatrix<f64>| {
        m.fill(0.0);
        m[(1, 0)] = -pg.g21(t);
        m[(3, 2)] = -pg.g43(t);
    });
    let pf = *p;
    let forcing: VectorFn = Arc::new(move |t, v: &mut DVector<f64>| {
        v.fill(0.0);
        v[1] = pf.f0 * (pf.omega0 * t).sin();
    });
    (a, g, forcing)
}

fn cubic_poly(p: &OscillatorParams, base: OscillatorBase) -> PolySum {
    let (ca, cb) = base.cubic_components();
    PolySum {
        terms: vec![
            PolyTerm {
                row: 1,
                coeff: Coeff::Const(-p.mu1),
                factors: vec![(1, ca, 3)],
            },
            PolyTerm {
                row: 3,
                coeff: Coeff::Const(-p.mu2),
                factors: vec![(1, cb, 3)],
            },
        ],
        dim: 4,
        arity: 2,
    }
}

fn assemble(p: &OscillatorParams, f: Nonlinearity) -> DelaySystem {
    let (a, g, forcing) = linear_parts(p);
    DelaySystem {
        dim: 4,
        a,
        g: g.clone(),
        e: g,
        delay0: Delay::constant(p.h0),
        f_delays: vec![Delay::constant(p.h1)],
        f,
        forcing,
        forcing_amplitude: p.f0,
    }
}

/// Coupled Van der Pol-like oscillators: delayed cubes of the velocity
/// components feed rows 2 and 4; `E(t) = G(t)`.
pub fn build_vdp_system(p: &OscillatorParams) -> DelaySystem {
    assemble(p, Nonlinearity::polynomial(cubic_poly(p, OscillatorBase::VdpLike)))
}

/// Coupled Duffing-like oscillators: delayed cubes of the position
/// components feed rows 2 and 4; shares the linear part with the Van der
/// Pol-like variant.
pub fn build_duffing_system(p: &OscillatorParams) -> DelaySystem {
    assemble(p, Nonlinearity::polynomial(cubic_poly(p, OscillatorBase::DuffingLike)))
}

/// Normal density `exp(-(delta/q)^2 / 2) / (q sqrt(2 pi))`.
pub fn gaussian_bump(delta: f64, q: f64) -> f64 {
    (-0.5 * (delta / q) * (delta / q)).exp() / (q * (2.0 * PI).sqrt())
}

/// Adds impulse-like Gaussian terms, centered away from the origin, to the
/// cubic nonlinearity. No equilibrium remains at the origin, so only
/// boundedness analysis applies.
pub fn build_gaussian_variant(p: &OscillatorParams, base: OscillatorBase) -> DelaySystem {
    let (ca, cb) = base.cubic_components();
    let pc = *p;
    let extra = move |_t: f64, _x: &DVector<f64>, delayed: &[DVector<f64>], out: &mut DVector<f64>| {
        let xd = &delayed[0];
        out[1] += -pc.mu3 * gaussian_bump(xd[ca] - pc.x_center, pc.q);
        out[3] += -pc.mu4 * gaussian_bump(xd[cb] - pc.x_center, pc.q);
    };
    assemble(p, Nonlinearity::with_extra(cubic_poly(p, base), extra))
}

/// Adds saturation-like tanh terms to the cubic nonlinearity; the origin
/// stays an equilibrium.
pub fn build_tanh_variant(p: &OscillatorParams, base: OscillatorBase) -> DelaySystem {
    let (ca, cb) = base.cubic_components();
    let pc = *p;
    let extra = move |_t: f64, _x: &DVector<f64>, delayed: &[DVector<f64>], out: &mut DVector<f64>| {
        let xd = &delayed[0];
        out[1] += -pc.mu3 * (pc.k1 * xd[ca]).tanh();
        out[3] += -pc.mu4 * (pc.k2 * xd[cb]).tanh();
    };
    assemble(p, Nonlinearity::with_extra(cubic_poly(p, base), extra))
}

/// Right side of the full delay system for direct (reference) simulation.
pub struct SystemRhs<'a> {
    sys: &'a DelaySystem,
    g_scratch: DMatrix<f64>,
    e_scratch: DMatrix<f64>,
    vec_scratch: DVector<f64>,
    delayed: Vec<DVector<f64>>,
    f_acc: DVector<f64>,
}

impl<'a> SystemRhs<'a> {
    pub fn new(sys: &'a DelaySystem) -> Self {
        let n = sys.dim;
        Self {
            sys,
            g_scratch: DMatrix::zeros(n, n),
            e_scratch: DMatrix::zeros(n, n),
            vec_scratch: DVector::zeros(n),
            delayed: vec![DVector::zeros(n); sys.f_delays.len()],
            f_acc: DVector::zeros(n),
        }
    }
}

impl crate::dde::DdeRhs for SystemRhs<'_> {
    fn dim(&self) -> usize {
        self.sys.dim
    }

    fn min_delay(&self) -> Option<f64> {
        Some(self.sys.h_min())
    }

    fn eval(
        &mut self,
        t: f64,
        x: &DVector<f64>,
        past: &crate::dde::Past<'_>,
        out: &mut DVector<f64>,
    ) {
        out.gemv(1.0, &self.sys.a, x, 0.0);

        (self.sys.g)(t, &mut self.g_scratch);
        out.gemv(1.0, &self.g_scratch, x, 1.0);

        (self.sys.e)(t, &mut self.e_scratch);
        past.eval_into(t - self.sys.delay0.eval(t), &mut self.vec_scratch);
        out.gemv(1.0, &self.e_scratch, &self.vec_scratch, 1.0);

        for (i, d) in self.sys.f_delays.iter().enumerate() {
            past.eval_into(t - d.eval(t), &mut self.delayed[i]);
        }
        self.f_acc.fill(0.0);
        self.sys.f.add_to(t, x, &self.delayed, &mut self.f_acc);
        *out += &self.f_acc;

        (self.sys.forcing)(t, &mut self.vec_scratch);
        *out += &self.vec_scratch;
    }
}

/// Integrates the full system from a constant history.
pub fn simulate_system(
    sys: &DelaySystem,
    phi_s: &DVector<f64>,
    t_span: (f64, f64),
    cfg: &crate::dde::StepperConfig,
) -> Result<crate::dde::Trajectory> {
    let history = crate::dde::History::constant(phi_s.clone(), sys.h_bar());
    let mut rhs = SystemRhs::new(sys);
    crate::dde::integrate(&mut rhs, &history, t_span, cfg)
}

/// Linear-term convention for the scalar residual equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MajorantConvention {
    /// The coupled-oscillator reduction: drift `alpha1 + |V^-1 G V|` with the
    /// same perturbation norm on the delayed term (the models set `E = G`).
    #[default]
    Coupled,
    /// The general residual form: drift `alpha1 + |g(t)|` with `|V^-1 E V|`
    /// on the delayed term only.
    General,
}

/// Coefficients of the scalar residual equation
/// `Z' = drift(t) Z + lin_delay(t) Z(t-h0) + c3(t) Z^3(t-h1)
///       + c2(t) Z^2(t-h1) + c1(t) Z(t-h1) + offset(t)`.
///
/// The polynomial coefficients already embed their delayed partial-sum
/// arguments, so each is a plain function of `t`.
#[derive(Clone)]
pub struct MajorantSpec {
    pub drift: ScalarFn,
    pub lin_delay: ScalarFn,
    pub c3: ScalarFn,
    pub c2: ScalarFn,
    pub c1: ScalarFn,
    pub offset: ScalarFn,
}

/// Largest singular value of a small complex matrix by power iteration on
/// `M^H M` with a deterministic start vector.
pub(crate) fn power_norm2(m: &CMatrix) -> f64 {
    let n = m.ncols();
    let mh = m.adjoint();
    let mhm = &mh * m;
    let mut v = nalgebra::DVector::from_element(n, Complex::new(1.0, 0.0)).normalize();
    let mut prev = 0.0f64;
    for _ in 0..200 {
        let w = &mhm * &v;
        let rq = w.norm();
        if rq == 0.0 {
            return 0.0;
        }
        v = w.unscale(rq);
        if (rq - prev).abs() <= 1e-13 * rq.max(1.0) {
            return rq.sqrt();
        }
        prev = rq;
    }
    prev.sqrt()
}

/// The same norm with the imaginary parts of the diagonal removed first.
fn power_norm2_diag_real(m: &CMatrix) -> f64 {
    let mut m = m.clone();
    for j in 0..m.nrows() {
        let z = m[(j, j)];
        m[(j, j)] = Complex::new(z.re, 0.0);
    }
    power_norm2(&m)
}

/// Builds the scalar residual-equation coefficients for the cubic oscillator
/// models from a solved cascade of depth at least `K`.
///
/// For depth `K` the polynomial coefficients read the partial sums `Y_K` and
/// `Y_{K-1}` at the nonlinearity delay, and the offset adds the perturbation
/// forcing along the last iterate `y_K`. All cubic scales enter through
/// their absolute values.
pub fn cubic_residual_majorant(
    eig: &EigenData,
    p: &OscillatorParams,
    base: OscillatorBase,
    cascade: &CascadeResult,
    k_depth: usize,
    convention: MajorantConvention,
) -> Result<MajorantSpec> {
    if k_depth < 1 || cascade.depth() < k_depth {
        return Err(Error::MissingIterate {
            requested: k_depth,
            available: cascade.depth(),
        });
    }
    let (ca, cb) = base.cubic_components();
    let m1 = p.mu1.abs();
    let m2 = p.mu2.abs();
    let ka = eig.kappa[ca];
    let kb = eig.kappa[cb];

    let y_last = Arc::new(cascade.iterates()[k_depth - 1].clone());
    let sum_k = Arc::new(cascade.partial_sums()[k_depth - 1].clone());
    let sum_km1 = if k_depth >= 2 {
        Some(Arc::new(cascade.partial_sums()[k_depth - 2].clone()))
    } else {
        None
    };

    let h0 = Delay::constant(p.h0);
    let h1 = Delay::constant(p.h1);

    let c3_val = m1 * ka.powi(3) + m2 * kb.powi(3);
    let c3: ScalarFn = Arc::new(move |_| c3_val);

    let (sk, d1) = (sum_k.clone(), h1.clone());
    let c2: ScalarFn = Arc::new(move |t| {
        let y = sk
            .evaluate(t - d1.eval(t))
            .expect("partial sum covers the delayed time");
        3.0 * (m1 * ka * ka * y[ca].abs() + m2 * kb * kb * y[cb].abs())
    });

    let (sk, d1) = (sum_k.clone(), h1.clone());
    let c1: ScalarFn = Arc::new(move |t| {
        let y = sk
            .evaluate(t - d1.eval(t))
            .expect("partial sum covers the delayed time");
        3.0 * (m1 * ka * y[ca] * y[ca] + m2 * kb * y[cb] * y[cb])
    });

    let vinv = eig.vinv.clone();
    let pg = *p;
    let (sk, skm1, yk, d1c) = (sum_k, sum_km1, y_last, h1);
    let offset: ScalarFn = Arc::new(move |t| {
        let td = t - d1c.eval(t);
        let y = sk.evaluate(td).expect("partial sum covers the delayed time");
        let (pa, pb) = match &skm1 {
            Some(s) => {
                let yp = s.evaluate(td).expect("partial sum covers the delayed time");
                (yp[ca], yp[cb])
            }
            None => (0.0, 0.0),
        };
        let diff = m1 * (y[ca].powi(3) - pa.powi(3)).abs() + m2 * (y[cb].powi(3) - pb.powi(3)).abs();

        // |V^-1 G(t) (y_K(t) + y_K(t - h0))|; G only loads rows 2 and 4 from
        // the position components.
        let w_now = yk.evaluate(t).expect("iterate covers t");
        let w_del = yk
            .evaluate(t - h0.eval(t))
            .expect("iterate covers the delayed time");
        let gv1 = -pg.g21(t) * (w_now[0] + w_del[0]);
        let gv3 = -pg.g43(t) * (w_now[2] + w_del[2]);
        let mut acc = 0.0f64;
        for i in 0..4 {
            let z = vinv[(i, 1)] * gv1 + vinv[(i, 3)] * gv3;
            acc += z.norm_sqr();
        }
        diff + acc.sqrt()
    });

    // G(t) = -g21(t) E21 - g43(t) E43 with fixed sparsity, so the transformed
    // matrix is a two-parameter combination of precomputed blocks.
    let mut e21 = DMatrix::zeros(4, 4);
    e21[(1, 0)] = 1.0;
    let mut e43 = DMatrix::zeros(4, 4);
    e43[(3, 2)] = 1.0;
    let t21 = eig.transform(&e21);
    let t43 = eig.transform(&e43);

    let alpha1 = eig.alpha1;
    let pgl = *p;
    let (t21a, t43a) = (t21.clone(), t43.clone());
    let transformed_g: ScalarFn = Arc::new(move |t| {
        let m = &t21a * Complex::from(-pgl.g21(t)) + &t43a * Complex::from(-pgl.g43(t));
        power_norm2(&m)
    });

    let (drift, lin_delay): (ScalarFn, ScalarFn) = match convention {
        MajorantConvention::Coupled => {
            let f1 = transformed_g.clone();
            let f2 = transformed_g;
            (Arc::new(move |t| alpha1 + f1(t)), f2)
        }
        MajorantConvention::General => {
            let pgd = *p;
            let g_small: ScalarFn = Arc::new(move |t| {
                let m = &t21 * Complex::from(-pgd.g21(t)) + &t43 * Complex::from(-pgd.g43(t));
                power_norm2_diag_real(&m)
            });
            (Arc::new(move |t| alpha1 + g_small(t)), transformed_g)
        }
    };

    Ok(MajorantSpec {
        drift,
        lin_delay,
        c3,
        c2,
        c1,
        offset,
    })
}

#[cfg(test)]
pub(crate) fn test_params() -> OscillatorParams {
    OscillatorParams {
        c1: 0.4,
        c2: 0.2,
        omega1_sq: 1.0,
        omega2_sq: 4.0,
        d: 0.1,
        a1: 0.1,
        a2: 0.1,
        b1: 0.1,
        b2: 0.1,
        r1: 3.14,
        r2: 6.15,
        s1: 3.1,
        s2: 6.28,
        mu1: 1.0,
        mu2: 1.0,
        mu3: 0.0,
        mu4: 0.0,
        f0: 0.0,
        omega0: 5.43,
        h0: 1.0,
        h1: 1.0,
        q: 1.0,
        x_center: 7.0,
        k1: 1.0,
        k2: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{complex_norm2, eigen_decompose};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn system_matrix_entries() {
        let mut p = test_params();
        p.d = 0.25;
        let a = p.system_matrix();
        assert_eq!(a[(1, 0)], -(1.0 + 0.25));
        assert_eq!(a[(3, 2)], -(4.0 + 0.25));
        assert_eq!(a[(1, 2)], 0.25);
        assert_eq!(a[(3, 0)], 0.25);
        assert_eq!(a[(0, 1)], 1.0);
        assert_eq!(a[(2, 3)], 1.0);
    }

    #[test]
    fn vdp_cubic_substitution() {
        let mut p = test_params();
        p.mu1 = 1.0;
        p.mu2 = 0.0;
        let sys = build_vdp_system(&p);
        let x = DVector::zeros(4);
        let mut xd = DVector::zeros(4);
        xd[1] = 2.0;
        let f = sys.f.eval(0.0, &x, &[xd]);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], -8.0);
        assert_eq!(f[2], 0.0);
        assert_eq!(f[3], 0.0);
        // Vanishes at the origin.
        let z = sys.f.eval(0.3, &x, &[DVector::zeros(4)]);
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn duffing_cubic_substitution() {
        let mut p = test_params();
        p.mu1 = 2.0;
        p.mu2 = 0.0;
        let sys = build_duffing_system(&p);
        let x = DVector::zeros(4);
        let mut xd = DVector::zeros(4);
        xd[0] = -1.0;
        let f = sys.f.eval(0.0, &x, &[xd]);
        assert_eq!(f[1], 2.0);
        assert_eq!(f.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn variants_share_linear_part() {
        let p = test_params();
        let vdp = build_vdp_system(&p);
        let duf = build_duffing_system(&p);
        assert_eq!(vdp.a, duf.a);
        for k in 0..10 {
            let t = 0.7 * k as f64;
            assert_eq!(vdp.g_at(t), duf.g_at(t));
            assert_eq!(vdp.e_at(t), duf.e_at(t));
            assert_eq!(vdp.forcing_at(t), duf.forcing_at(t));
        }
        // E = G for this catalog.
        assert_eq!(vdp.g_at(1.3), vdp.e_at(1.3));
    }

    #[test]
    fn gaussian_bump_values() {
        assert_abs_diff_eq!(gaussian_bump(0.0, 1.0), 0.3989423, epsilon = 1e-7);
        assert_abs_diff_eq!(
            gaussian_bump(0.0, 1.0),
            1.0 / (2.0 * PI).sqrt(),
            epsilon = 1e-15
        );
        // Center 7 away from the origin: effectively inactive near zero.
        let far = gaussian_bump(7.0, 1.0);
        assert!(far < 1e-11 && far > 1e-12, "got {far}");
        // Large q kills the term pointwise.
        assert!(gaussian_bump(0.0, 1e9) < 1e-9);
    }

    #[test]
    fn gaussian_variant_has_no_origin_equilibrium() {
        let mut p = test_params();
        p.mu1 = -0.1;
        p.mu2 = -0.1;
        p.mu3 = -1.0;
        p.mu4 = -1.0;
        let sys = build_gaussian_variant(&p, OscillatorBase::VdpLike);
        let zero = DVector::zeros(4);
        let f = sys.f.eval(0.0, &zero, &[zero.clone()]);
        assert!(f.norm() > 0.0);
        assert!(f.norm() < 1e-10, "Gaussian tail near the origin is tiny");
        assert!(!sys.f.has_majorant());
    }

    #[test]
    fn tanh_variant_saturates() {
        let mut p = test_params();
        p.mu1 = -0.1;
        p.mu2 = -0.1;
        p.mu3 = -1.0;
        p.mu4 = -1.0;
        let sys = build_tanh_variant(&p, OscillatorBase::VdpLike);
        let zero = DVector::zeros(4);
        let f0 = sys.f.eval(0.0, &zero, &[zero.clone()]);
        assert_eq!(f0.norm(), 0.0, "origin stays an equilibrium");

        let mut huge = DVector::zeros(4);
        huge[1] = 1e3;
        let f = sys.f.eval(0.0, &zero, &[huge]);
        // Cubic dominates, but the tanh contribution saturates at -mu3.
        let cubic = -p.mu1 * 1e9;
        assert_abs_diff_eq!(f[1] - cubic, -p.mu3, epsilon = 1e-9);
    }

    #[test]
    fn accepts_saturation_parameter_set() {
        let mut p = test_params();
        p.mu1 = -0.1;
        p.mu2 = -0.1;
        p.mu3 = -1.0;
        p.mu4 = -1.0;
        p.h0 = 1.0;
        p.h1 = 10.0;
        p.k1 = 1.0;
        p.k2 = 1.0;
        p.validate().unwrap();
        let sys = build_tanh_variant(&p, OscillatorBase::VdpLike);
        sys.validate_on(0.0, 80.0, 200).unwrap();
        assert_eq!(sys.h_bar(), 10.0);
        assert_eq!(sys.h_min(), 1.0);
    }

    #[test]
    fn majorant_of_mixed_monomials() {
        // f = [a1(t) x1 x2^2(t-h1), a2(t) x1^3(t-h2)]
        let poly = PolySum {
            terms: vec![
                PolyTerm {
                    row: 0,
                    coeff: Coeff::Fn(Arc::new(|t: f64| t.cos())),
                    factors: vec![(0, 0, 1), (1, 1, 2)],
                },
                PolyTerm {
                    row: 1,
                    coeff: Coeff::Const(-2.0),
                    factors: vec![(2, 0, 3)],
                },
            ],
            dim: 2,
            arity: 3,
        };
        let f = Nonlinearity::polynomial(poly);
        let l = polynomial_majorant(&f).unwrap();
        let t = 0.8f64;
        let xi = [2.0, 3.0, 0.5];
        let expect = t.cos().abs() * 2.0 * 9.0 + 2.0 * 0.125;
        assert_abs_diff_eq!(l.eval(t, &xi), expect, epsilon = 1e-14);
        // L(t, 0) = 0.
        assert_eq!(l.eval(t, &[0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn linear_f_gives_linear_majorant() {
        let poly = PolySum {
            terms: vec![PolyTerm {
                row: 0,
                coeff: Coeff::Const(3.0),
                factors: vec![(1, 0, 1)],
            }],
            dim: 1,
            arity: 2,
        };
        let l = Nonlinearity::polynomial(poly).poly.majorant();
        assert_abs_diff_eq!(l.eval(0.0, &[0.0, 2.0]), 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(l.eval(0.0, &[0.0, 4.0]), 12.0, epsilon = 1e-14);
    }

    #[test]
    fn empty_f_gives_zero_majorant() {
        let f = Nonlinearity::polynomial(PolySum {
            terms: vec![],
            dim: 4,
            arity: 2,
        });
        let l = polynomial_majorant(&f).unwrap();
        assert_eq!(l.eval(1.0, &[5.0, 5.0]), 0.0);
    }

    #[test]
    fn non_polynomial_has_no_majorant() {
        let mut p = test_params();
        p.mu3 = -1.0;
        p.mu4 = -1.0;
        let sys = build_tanh_variant(&p, OscillatorBase::DuffingLike);
        assert!(matches!(
            polynomial_majorant(&sys.f),
            Err(Error::UnsupportedNonlinearity)
        ));
    }

    #[test]
    fn majorant_domination_sampled() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut p = test_params();
        p.mu1 = 60.0;
        p.mu2 = 60.0;
        for sys in [build_vdp_system(&p), build_duffing_system(&p)] {
            let l = polynomial_majorant(&sys.f).unwrap();
            for _ in 0..1000 {
                let t: f64 = rng.gen_range(0.0..40.0);
                let mut draw = || {
                    let mut v = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0f64));
                    let norm = v.norm();
                    if norm > 0.0 {
                        let target: f64 = rng.gen_range(0.0..10.0);
                        v *= target / norm;
                    }
                    v
                };
                let x = draw();
                let xd = draw();
                let fval = sys.f.eval(t, &x, &[xd.clone()]).norm();
                let bound = l.eval(t, &[x.norm(), xd.norm()]);
                assert!(
                    fval <= bound + 1e-12,
                    "domination violated: |f| = {fval}, L = {bound}"
                );
            }
        }
    }

    #[test]
    fn majorant_monotone_in_each_argument() {
        let p = test_params();
        let sys = build_vdp_system(&p);
        let l = polynomial_majorant(&sys.f).unwrap();
        let grid: Vec<f64> = (0..20).map(|k| 0.5 * k as f64).collect();
        for t in [0.0, 1.7, 9.3] {
            for w in grid.windows(2) {
                assert!(l.eval(t, &[1.0, w[1]]) >= l.eval(t, &[1.0, w[0]]));
                assert!(l.eval(t, &[w[1], 1.0]) >= l.eval(t, &[w[0], 1.0]));
            }
        }
    }

    #[test]
    fn perturbation_is_zero_mean() {
        let p = test_params();
        // Trapezoid average of g21 over [0, T] shrinks like 1/T.
        let avg = |t_end: f64| {
            let n = 20000;
            let dt = t_end / n as f64;
            let mut acc = 0.0;
            for i in 0..=n {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                acc += w * p.g21(i as f64 * dt);
            }
            (acc * dt / t_end).abs()
        };
        assert!(avg(200.0) < 1e-3);
        assert!(avg(200.0) < avg(10.0));
    }

    #[test]
    fn power_norm_matches_svd() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let m = CMatrix::from_fn(4, 4, |_, _| {
                Complex::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
            });
            let a = power_norm2(&m);
            let b = complex_norm2(&m);
            assert_abs_diff_eq!(a, b, epsilon = 1e-9 * b.max(1.0));
        }
    }

    #[test]
    fn eigen_majorant_carries_kappa_weights() {
        let p = test_params();
        let eig = eigen_decompose(&p.system_matrix(), 1e-10).unwrap();
        let sys = build_vdp_system(&p);
        let l = sys.f.poly.eigen_majorant(&eig);
        let xi = [0.0, 2.0];
        let expect = eig.norm_vinv
            * (p.mu1.abs() * eig.kappa[1].powi(3) + p.mu2.abs() * eig.kappa[3].powi(3))
            * 8.0;
        assert_abs_diff_eq!(l.eval(0.0, &xi), expect, epsilon = 1e-12);
    }

    #[test]
    fn validate_accepts_catalog_system() {
        let mut p = test_params();
        p.f0 = 0.3;
        let sys = build_vdp_system(&p);
        sys.validate_on(0.0, 40.0, 400).unwrap();
        assert_eq!(sys.h_bar(), 1.0);
        assert_eq!(sys.h_min(), 1.0);
    }
}
