//! Successive approximations: the cascade of linear constant-coefficient ODE
//! iterates whose partial sums approximate the delay system's solution.
//!
//! Every iterate is a plain ODE: its delay terms read already-computed
//! trajectories, never itself, so the integration needs no step/delay
//! coupling.

use nalgebra::{DMatrix, DVector};

use crate::dde::{integrate, DdeRhs, History, Past, StepperConfig, Trajectory};
use crate::error::Error;
use crate::models::DelaySystem;
use crate::spectral::EigenData;
use crate::Result;

/// Iterates `y_1..y_K` and partial sums `Y_1..Y_K`.
///
/// `y_1` extends into the history interval by the initial function, every
/// later iterate by zero; partial sums therefore extend by the initial
/// function. At mesh nodes `Y_k` is the exact floating-point sum of the
/// stored iterate states.
#[derive(Debug, Clone)]
pub struct CascadeResult {
    iterates: Vec<Trajectory>,
    partial_sums: Vec<Trajectory>,
    phi_s: DVector<f64>,
}

impl CascadeResult {
    pub fn depth(&self) -> usize {
        self.iterates.len()
    }

    pub fn iterates(&self) -> &[Trajectory] {
        &self.iterates
    }

    pub fn partial_sums(&self) -> &[Trajectory] {
        &self.partial_sums
    }

    pub fn phi_s(&self) -> &DVector<f64> {
        &self.phi_s
    }

    /// The deepest partial sum `Y_K`.
    pub fn approximation(&self) -> &Trajectory {
        self.partial_sums.last().expect("depth >= 1")
    }
}

struct CascadeRhs<'a> {
    sys: &'a DelaySystem,
    /// `y_{k-1}`, absent for the first iterate.
    prev: Option<&'a Trajectory>,
    /// `Y_{k-1}` feeding the nonlinearity, absent for the first iterate.
    sum_prev: Option<&'a Trajectory>,
    /// `Y_{k-2}`; its nonlinearity term is subtracted (taken as zero when
    /// absent, which also covers the second iterate).
    sum_prev2: Option<&'a Trajectory>,
    include_forcing: bool,
    g_scratch: DMatrix<f64>,
    e_scratch: DMatrix<f64>,
    vec_scratch: DVector<f64>,
    arg_cur: DVector<f64>,
    arg_delayed: Vec<DVector<f64>>,
    f_acc: DVector<f64>,
}

impl<'a> CascadeRhs<'a> {
    fn new(
        sys: &'a DelaySystem,
        prev: Option<&'a Trajectory>,
        sum_prev: Option<&'a Trajectory>,
        sum_prev2: Option<&'a Trajectory>,
        include_forcing: bool,
    ) -> Self {
        let n = sys.dim;
        Self {
            sys,
            prev,
            sum_prev,
            sum_prev2,
            include_forcing,
            g_scratch: DMatrix::zeros(n, n),
            e_scratch: DMatrix::zeros(n, n),
            vec_scratch: DVector::zeros(n),
            arg_cur: DVector::zeros(n),
            arg_delayed: vec![DVector::zeros(n); sys.f_delays.len()],
            f_acc: DVector::zeros(n),
        }
    }

    fn add_nonlinearity(&mut self, t: f64, source: &Trajectory, sign: f64, out: &mut DVector<f64>) {
        source
            .evaluate_into(t, &mut self.arg_cur)
            .expect("partial sum covers current time");
        for (i, d) in self.sys.f_delays.iter().enumerate() {
            source
                .evaluate_into(t - d.eval(t), &mut self.arg_delayed[i])
                .expect("partial sum covers delayed time");
        }
        self.f_acc.fill(0.0);
        self.sys
            .f
            .add_to(t, &self.arg_cur, &self.arg_delayed, &mut self.f_acc);
        out.axpy(sign, &self.f_acc, 1.0);
    }
}

impl DdeRhs for CascadeRhs<'_> {
    fn dim(&self) -> usize {
        self.sys.dim
    }

    fn min_delay(&self) -> Option<f64> {
        // Delayed terms read finished trajectories, never this iterate.
        None
    }

    fn eval(&mut self, t: f64, x: &DVector<f64>, _past: &Past<'_>, out: &mut DVector<f64>) {
        out.gemv(1.0, &self.sys.a, x, 0.0);
        if let Some(prev) = self.prev {
            (self.sys.g)(t, &mut self.g_scratch);
            prev.evaluate_into(t, &mut self.vec_scratch)
                .expect("previous iterate covers current time");
            out.gemv(1.0, &self.g_scratch, &self.vec_scratch, 1.0);

            (self.sys.e)(t, &mut self.e_scratch);
            prev.evaluate_into(t - self.sys.delay0.eval(t), &mut self.vec_scratch)
                .expect("previous iterate covers delayed time");
            out.gemv(1.0, &self.e_scratch, &self.vec_scratch, 1.0);
        }
        if let Some(sum_prev) = self.sum_prev {
            self.add_nonlinearity(t, sum_prev, 1.0, out);
        }
        if let Some(sum_prev2) = self.sum_prev2 {
            self.add_nonlinearity(t, sum_prev2, -1.0, out);
        }
        if self.include_forcing {
            (self.sys.forcing)(t, &mut self.vec_scratch);
            *out += &self.vec_scratch;
        }
    }
}

/// Solves the cascade for a constant history `phi_s` up to depth `k_depth`.
///
/// The first iterate solves the constant-coefficient system with the
/// external forcing; iterate `k >= 2` is forced by the perturbation and
/// delay terms along `y_{k-1}` plus the nonlinearity increment between
/// `Y_{k-1}` and `Y_{k-2}`.
pub fn solve_cascade(
    sys: &DelaySystem,
    phi_s: &DVector<f64>,
    k_depth: usize,
    t_span: (f64, f64),
    cfg: &StepperConfig,
) -> Result<CascadeResult> {
    assert!(k_depth >= 1, "cascade depth must be at least 1");
    let h_bar = sys.h_bar();
    let phi_history = History::constant(phi_s.clone(), h_bar);
    let zero_history = History::zero(sys.dim, h_bar);

    let mut iterates: Vec<Trajectory> = Vec::with_capacity(k_depth);
    let mut partial_sums: Vec<Trajectory> = Vec::with_capacity(k_depth);

    for k in 1..=k_depth {
        let traj = {
            let mut rhs = CascadeRhs::new(
                sys,
                iterates.last(),
                if k >= 2 { Some(&partial_sums[k - 2]) } else { None },
                if k >= 3 { Some(&partial_sums[k - 3]) } else { None },
                k == 1,
            );
            let history = if k == 1 { &phi_history } else { &zero_history };
            integrate(&mut rhs, history, t_span, cfg)?
        };
        if let Some(t) = traj.escaped() {
            return Err(Error::NonFiniteState { t, stage: Some(k) });
        }
        let sum = match partial_sums.last() {
            None => traj.clone(),
            Some(prev_sum) => prev_sum.add(&traj, phi_history.clone())?,
        };
        iterates.push(traj);
        partial_sums.push(sum);
    }

    Ok(CascadeResult {
        iterates,
        partial_sums,
        phi_s: phi_s.clone(),
    })
}

/// Outcome of the long-horizon decay check on `|Y_K|`.
#[derive(Debug, Clone)]
pub struct DecayReport {
    /// Max of `|Y_K|` over the trailing fraction of the horizon.
    pub tail_max: f64,
    /// Threshold the tail was compared against.
    pub threshold: f64,
    pub pass: bool,
    /// Decay rate `-alpha1`.
    pub eta: f64,
    /// Constant used for the forced threshold `C * F0`.
    pub c_used: f64,
    pub tail_start: f64,
}

/// Checks the decay envelope of the approximation tail: unforced solutions
/// must fall below `decay_tol`, forced ones below `C * F0`.
///
/// The default `C = 10 (1 + |V| |V^-1|) / eta` is a documented heuristic;
/// callers may pin their own constant.
pub fn check_decay(
    res: &CascadeResult,
    eig: &EigenData,
    f0: f64,
    tail_fraction: f64,
    decay_tol: f64,
    c: Option<f64>,
) -> Result<DecayReport> {
    if eig.alpha1 >= 0.0 {
        return Err(Error::NotHurwitz { alpha1: eig.alpha1 });
    }
    let eta = -eig.alpha1;
    let y = res.approximation();
    let t0 = y.t0();
    let t_end = y.end_time();
    let tail_start = t_end - (t_end - t0) * tail_fraction;
    let tail_max = y
        .mesh()
        .iter()
        .zip(y.states())
        .filter(|(t, _)| **t >= tail_start)
        .map(|(_, s)| s.norm())
        .fold(0.0, f64::max);
    let c_used = c.unwrap_or(10.0 * (1.0 + eig.norm_v * eig.norm_vinv) / eta);
    let threshold = if f0 == 0.0 { decay_tol } else { c_used * f0 };
    Ok(DecayReport {
        tail_max,
        threshold,
        pass: tail_max <= threshold,
        eta,
        c_used,
        tail_start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        build_vdp_system, test_params, Delay, DelaySystem, MatrixFn, Nonlinearity, PolySum,
        VectorFn,
    };
    use crate::spectral::eigen_decompose;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn cfg(step: f64, t_end: f64) -> StepperConfig {
        StepperConfig::new(step, t_end)
    }

    /// Linear scalar system x' = -x + g*x(t) coupling through the cascade.
    fn scalar_system(g_gain: f64) -> DelaySystem {
        let g: MatrixFn = Arc::new(move |_t, m: &mut DMatrix<f64>| {
            m.fill(0.0);
            m[(0, 0)] = g_gain;
        });
        let e: MatrixFn = Arc::new(|_t, m: &mut DMatrix<f64>| m.fill(0.0));
        let forcing: VectorFn = Arc::new(|_t, v: &mut DVector<f64>| v.fill(0.0));
        DelaySystem {
            dim: 1,
            a: DMatrix::from_element(1, 1, -1.0),
            g,
            e,
            delay0: Delay::constant(1.0),
            f_delays: vec![],
            f: Nonlinearity::polynomial(PolySum {
                terms: vec![],
                dim: 1,
                arity: 1,
            }),
            forcing,
            forcing_amplitude: 0.0,
        }
    }

    #[test]
    fn trivial_cascade_is_matrix_exponential() {
        let mut p = test_params();
        p.mu1 = 0.0;
        p.mu2 = 0.0;
        p.a1 = 0.0;
        p.a2 = 0.0;
        p.b1 = 0.0;
        p.b2 = 0.0;
        p.f0 = 0.0;
        let sys = build_vdp_system(&p);
        let phi = DVector::from_vec(vec![0.4, -0.2, 0.3, 0.1]);
        let res = solve_cascade(&sys, &phi, 3, (0.0, 10.0), &cfg(1e-3, 10.0)).unwrap();

        for t in [0.0, 1.5, 4.0, 10.0] {
            let want = (sys.a.clone() * t).exp() * &phi;
            let got = res.iterates()[0].evaluate(t).unwrap();
            assert!((got - &want).norm() <= 1e-8, "y1 misses the exponential at t={t}");
            let sum = res.approximation().evaluate(t).unwrap();
            assert!((sum - want).norm() <= 1e-8);
        }
        for k in 1..3 {
            assert_eq!(res.iterates()[k].max_norm(), 0.0, "iterate {k} must vanish");
        }
    }

    #[test]
    fn scalar_toy_second_iterate() {
        // y1 = e^-t, y2 solves y2' = -y2 + 0.1 e^-t from 0, so y2 = 0.1 t e^-t.
        let sys = scalar_system(0.1);
        let phi = DVector::from_element(1, 1.0);
        let res = solve_cascade(&sys, &phi, 2, (0.0, 6.0), &cfg(1e-3, 6.0)).unwrap();
        for t in [0.5, 1.0, 2.0, 5.0] {
            let y1 = res.iterates()[0].evaluate(t).unwrap()[0];
            let y2 = res.iterates()[1].evaluate(t).unwrap()[0];
            assert_abs_diff_eq!(y1, (-t).exp(), epsilon = 1e-6);
            assert_abs_diff_eq!(y2, 0.1 * t * (-t).exp(), epsilon = 1e-6);
        }
    }

    #[test]
    fn partial_sums_are_exact_nodewise() {
        let mut p = test_params();
        p.mu1 = 60.0;
        p.mu2 = 60.0;
        let sys = build_vdp_system(&p);
        let phi = DVector::from_vec(vec![0.05, 0.0, 0.05, 0.0]);
        let res = solve_cascade(&sys, &phi, 4, (0.0, 8.0), &cfg(1e-3, 8.0)).unwrap();
        for k in 1..4 {
            let prev = &res.partial_sums()[k - 1];
            let yk = &res.iterates()[k];
            let sum = &res.partial_sums()[k];
            for i in 0..sum.states().len() {
                for c in 0..4 {
                    let expect = prev.states()[i][c] + yk.states()[i][c];
                    assert_eq!(sum.states()[i][c].to_bits(), expect.to_bits());
                }
            }
        }
    }

    #[test]
    fn history_extensions() {
        let sys = scalar_system(0.1);
        let phi = DVector::from_element(1, 1.0);
        let res = solve_cascade(&sys, &phi, 2, (0.0, 3.0), &cfg(1e-2, 3.0)).unwrap();
        assert_eq!(res.iterates()[0].evaluate(-0.5).unwrap()[0], 1.0);
        assert_eq!(res.iterates()[1].evaluate(-0.5).unwrap()[0], 0.0);
        assert_eq!(res.approximation().evaluate(-0.5).unwrap()[0], 1.0);
    }

    #[test]
    fn linear_cascade_scales_with_history() {
        let mut p = test_params();
        p.mu1 = 0.0;
        p.mu2 = 0.0;
        let sys = build_vdp_system(&p);
        let phi = DVector::from_vec(vec![0.2, 0.1, -0.1, 0.3]);
        let res1 = solve_cascade(&sys, &phi, 3, (0.0, 5.0), &cfg(1e-3, 5.0)).unwrap();
        let res2 = solve_cascade(&sys, &(&phi * 2.0), 3, (0.0, 5.0), &cfg(1e-3, 5.0)).unwrap();
        for k in 0..3 {
            for (a, b) in res1.iterates()[k]
                .states()
                .iter()
                .zip(res2.iterates()[k].states())
            {
                let scaled = a * 2.0;
                let diff = (&scaled - b).norm();
                assert!(diff <= 1e-10 * scaled.norm().max(1e-30), "diff {diff}");
            }
        }
    }

    #[test]
    fn exponential_envelope_bounded() {
        let p = test_params();
        let sys = build_vdp_system(&p);
        let eig = eigen_decompose(&sys.a, 1e-10).unwrap();
        let eta = -eig.alpha1;
        let k_depth = 4;
        let phi = DVector::from_vec(vec![0.05, 0.05, 0.05, 0.05]);
        let res = solve_cascade(&sys, &phi, k_depth, (0.0, 40.0), &cfg(1e-3, 40.0)).unwrap();
        let y = res.approximation();
        let mut worst: f64 = 0.0;
        for (t, s) in y.mesh().iter().zip(y.states()) {
            let envelope = s.norm() * (eta * t).exp() / (1.0 + t).powi(k_depth as i32 - 1);
            worst = worst.max(envelope);
        }
        assert!(
            worst <= 1e3 * phi.norm(),
            "envelope factor {worst} is unexpectedly large"
        );
    }

    #[test]
    fn blow_up_reports_iterate_index() {
        // Iterates are linear ODEs, so escape happens only once the iterated
        // cubes overflow the float range, a few levels into the cascade.
        let mut p = test_params();
        p.mu1 = 60.0;
        p.mu2 = 60.0;
        let sys = build_vdp_system(&p);
        let phi = DVector::from_vec(vec![50.0, 50.0, 50.0, 50.0]);
        let err = solve_cascade(&sys, &phi, 8, (0.0, 20.0), &cfg(1e-2, 20.0)).unwrap_err();
        match err {
            Error::NonFiniteState { stage: Some(k), t } => {
                assert!(k >= 2, "blow-up at iterate {k}");
                assert!(t > 0.0 && t <= 20.0);
            }
            other => panic!("expected NonFiniteState with stage, got {other:?}"),
        }
    }

    #[test]
    fn decay_check_on_stable_scalar_toy() {
        // eta = 1 here, so the tail of e^-t over [48, 60] is far below 1e-6.
        let sys = scalar_system(0.1);
        let eig = eigen_decompose(&sys.a, 1e-10).unwrap();
        let phi = DVector::from_element(1, 1.0);
        let res = solve_cascade(&sys, &phi, 3, (0.0, 60.0), &cfg(1e-2, 60.0)).unwrap();
        let report = check_decay(&res, &eig, 0.0, 0.2, 1e-6, None).unwrap();
        assert!(report.pass, "tail_max = {}", report.tail_max);
        assert_abs_diff_eq!(report.eta, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn decay_check_on_stable_linear_system() {
        let mut p = test_params();
        p.mu1 = 0.0;
        p.mu2 = 0.0;
        let sys = build_vdp_system(&p);
        let eig = eigen_decompose(&sys.a, 1e-10).unwrap();
        // eta ~ 0.1: the tail scales like |phi| exp(-0.1 * 48) ~ 1e-2 |phi|.
        let phi = DVector::from_vec(vec![1e-3, 0.0, 1e-3, 0.0]);
        let res = solve_cascade(&sys, &phi, 4, (0.0, 60.0), &cfg(1e-3, 60.0)).unwrap();
        let report = check_decay(&res, &eig, 0.0, 0.2, 1e-4, None).unwrap();
        assert!(report.pass, "tail_max = {}", report.tail_max);
        assert_abs_diff_eq!(report.eta, 0.1, epsilon = 0.01);
    }

    #[test]
    fn decay_check_zero_history() {
        let p = test_params();
        let sys = build_vdp_system(&p);
        let eig = eigen_decompose(&sys.a, 1e-10).unwrap();
        let phi = DVector::zeros(4);
        let res = solve_cascade(&sys, &phi, 2, (0.0, 20.0), &cfg(1e-2, 20.0)).unwrap();
        let report = check_decay(&res, &eig, 0.0, 0.2, 1e-12, None).unwrap();
        assert_eq!(report.tail_max, 0.0);
        assert!(report.pass);
    }

    #[test]
    fn decay_check_rejects_unstable_matrix() {
        let sys = scalar_system(0.0);
        let mut unstable = sys.clone();
        unstable.a = DMatrix::from_element(1, 1, 0.5);
        let eig = eigen_decompose(&unstable.a, 1e-10).unwrap();
        let phi = DVector::from_element(1, 1.0);
        let res = solve_cascade(&unstable, &phi, 1, (0.0, 5.0), &cfg(1e-2, 5.0)).unwrap();
        assert!(matches!(
            check_decay(&res, &eig, 0.0, 0.2, 1e-6, None),
            Err(Error::NotHurwitz { .. })
        ));
    }
}
