//! Boundedness/stability domain boundary estimation: double-polar angular
//! sweep with radial binary search against one of three evaluators
//! (reference simulation, scalar-bound pipeline, partial-sum threshold).

use nalgebra::DVector;
use rayon::prelude::*;

use crate::bounds::{bilateral_bounds, integrate_majorant};
use crate::cascade::solve_cascade;
use crate::dde::StepperConfig;
use crate::error::Error;
use crate::models::{
    cubic_residual_majorant, simulate_system, DelaySystem, MajorantConvention, OscillatorBase,
    OscillatorParams,
};
use crate::spectral::EigenData;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Inside,
    Exceeded,
}

/// Outcome of one initial-vector evaluation.
#[derive(Debug, Clone)]
pub struct ProbeResult {
    pub verdict: Verdict,
    /// First time the criterion was violated, when exceeded.
    pub escape_time: Option<f64>,
    /// Largest norm observed (infinite after a blow-up).
    pub peak: f64,
    /// For unforced reference probes: whether the tail of the horizon fell
    /// below a tenth of the initial norm (decay versus mere non-escape).
    pub decayed: Option<bool>,
}

impl ProbeResult {
    pub fn inside(&self) -> bool {
        self.verdict == Verdict::Inside
    }
}

/// Maps double-polar coordinates to a 4-dimensional initial vector.
pub fn polar_to_state(r1: f64, theta1: f64, r2: f64, theta2: f64) -> DVector<f64> {
    DVector::from_vec(vec![
        r1 * theta1.cos(),
        r1 * theta1.sin(),
        r2 * theta2.cos(),
        r2 * theta2.sin(),
    ])
}

/// An initial-vector evaluator driven by the radial search.
pub trait BoundaryProbe: Sync {
    fn evaluate(&self, phi_s: &DVector<f64>) -> Result<ProbeResult>;
}

/// Direct simulation of the system; exceeded when the solution norm reaches
/// the threshold or the integration blows up.
pub struct ReferenceProbe<'a> {
    pub sys: &'a DelaySystem,
    pub varpi: f64,
    pub t_span: (f64, f64),
    pub cfg: StepperConfig,
}

impl BoundaryProbe for ReferenceProbe<'_> {
    fn evaluate(&self, phi_s: &DVector<f64>) -> Result<ProbeResult> {
        let traj = simulate_system(self.sys, phi_s, self.t_span, &self.cfg)?;
        let crossing = traj.first_crossing(self.varpi);
        let peak = traj.max_norm();
        let decayed = if self.sys.forcing_amplitude == 0.0 {
            let tail_start = self.t_span.1 - 0.1 * (self.t_span.1 - self.t_span.0);
            let tail_max = traj
                .mesh()
                .iter()
                .zip(traj.states())
                .filter(|(t, _)| **t >= tail_start)
                .map(|(_, s)| s.norm())
                .fold(0.0, f64::max);
            Some(traj.escaped().is_none() && tail_max <= 0.1 * phi_s.norm().max(f64::MIN_POSITIVE))
        } else {
            None
        };
        Ok(ProbeResult {
            verdict: if crossing.is_some() {
                Verdict::Exceeded
            } else {
                Verdict::Inside
            },
            escape_time: crossing,
            peak,
            decayed,
        })
    }
}

/// The conservative evaluator: cascade plus scalar residual bound; exceeded
/// when the upper envelope reaches the threshold or the scalar equation
/// blows up. Requires a polynomial nonlinearity.
pub struct ScalarBoundProbe<'a> {
    pub sys: &'a DelaySystem,
    pub eig: &'a EigenData,
    pub params: &'a OscillatorParams,
    pub base: OscillatorBase,
    pub convention: MajorantConvention,
    pub k_depth: usize,
    pub varpi: f64,
    pub t_span: (f64, f64),
    pub cfg: StepperConfig,
}

impl BoundaryProbe for ScalarBoundProbe<'_> {
    fn evaluate(&self, phi_s: &DVector<f64>) -> Result<ProbeResult> {
        if !self.sys.f.has_majorant() {
            return Err(Error::UnsupportedNonlinearity);
        }
        let cascade = match solve_cascade(self.sys, phi_s, self.k_depth, self.t_span, &self.cfg) {
            Ok(c) => c,
            Err(Error::NonFiniteState { t, .. }) => {
                return Ok(ProbeResult {
                    verdict: Verdict::Exceeded,
                    escape_time: Some(t),
                    peak: f64::INFINITY,
                    decayed: None,
                })
            }
            Err(e) => return Err(e),
        };
        let maj = cubic_residual_majorant(
            self.eig,
            self.params,
            self.base,
            &cascade,
            self.k_depth,
            self.convention,
        )?;
        let z = integrate_majorant(
            &maj,
            (&self.sys.delay0, &self.sys.f_delays[0]),
            self.t_span,
            &self.cfg,
        )?;
        if let Some(t) = z.escaped() {
            return Ok(ProbeResult {
                verdict: Verdict::Exceeded,
                escape_time: Some(t),
                peak: f64::INFINITY,
                decayed: None,
            });
        }
        let trace = bilateral_bounds(&cascade, &z, self.eig)?;
        let crossing = trace.first_upper_crossing(self.varpi);
        Ok(ProbeResult {
            verdict: if crossing.is_some() {
                Verdict::Exceeded
            } else {
                Verdict::Inside
            },
            escape_time: crossing,
            peak: trace.sup_upper(),
            decayed: None,
        })
    }
}

/// The transient evaluator: exceeded when the partial-sum norm `|Y_K|`
/// reaches the threshold. Works for every model, including those without a
/// majorant.
pub struct YThresholdProbe<'a> {
    pub sys: &'a DelaySystem,
    pub k_depth: usize,
    pub varpi: f64,
    pub t_span: (f64, f64),
    pub cfg: StepperConfig,
}

impl BoundaryProbe for YThresholdProbe<'_> {
    fn evaluate(&self, phi_s: &DVector<f64>) -> Result<ProbeResult> {
        let cascade = match solve_cascade(self.sys, phi_s, self.k_depth, self.t_span, &self.cfg) {
            Ok(c) => c,
            Err(Error::NonFiniteState { t, .. }) => {
                return Ok(ProbeResult {
                    verdict: Verdict::Exceeded,
                    escape_time: Some(t),
                    peak: f64::INFINITY,
                    decayed: None,
                })
            }
            Err(e) => return Err(e),
        };
        let y = cascade.approximation();
        let crossing = y.first_crossing(self.varpi);
        Ok(ProbeResult {
            verdict: if crossing.is_some() {
                Verdict::Exceeded
            } else {
                Verdict::Inside
            },
            escape_time: crossing,
            peak: y.max_norm(),
            decayed: None,
        })
    }
}

/// A ray in double-polar coordinates: the search scales a single factor
/// `rho` on fixed weights, `phi_s(rho) = polar(rho w1, theta1, rho w2, theta2)`.
#[derive(Debug, Clone, Copy)]
pub struct RayDirection {
    pub theta1: f64,
    pub theta2: f64,
    pub w1: f64,
    pub w2: f64,
}

impl RayDirection {
    pub fn state_at(&self, rho: f64) -> DVector<f64> {
        polar_to_state(rho * self.w1, self.theta1, rho * self.w2, self.theta2)
    }
}

/// Largest scale with an inside verdict along the ray: a doubling bracket
/// from the seed radius, then bisection to width `tol_rho`.
///
/// The bracket takes the first inside-to-exceeded transition it finds;
/// non-convex regions along the ray are not resolved beyond that.
pub fn radial_search<P: BoundaryProbe + ?Sized>(
    probe: &P,
    dir: &RayDirection,
    rho_max: f64,
    tol_rho: f64,
    seed: f64,
) -> Result<f64> {
    assert!(tol_rho > 0.0 && seed > 0.0 && rho_max > seed);
    if !probe.evaluate(&dir.state_at(seed))?.inside() {
        return Err(Error::SeedExceeded { seed });
    }
    let mut lo = seed;
    let mut hi = None;
    let mut rho = seed;
    while hi.is_none() {
        rho *= 2.0;
        if rho >= rho_max {
            if probe.evaluate(&dir.state_at(rho_max))?.inside() {
                return Err(Error::NoExceedanceFound { rho_max });
            }
            hi = Some(rho_max);
            break;
        }
        if probe.evaluate(&dir.state_at(rho))?.inside() {
            lo = rho;
        } else {
            hi = Some(rho);
        }
    }
    let mut hi = hi.expect("bracket established");
    while hi - lo > tol_rho {
        let mid = 0.5 * (lo + hi);
        if probe.evaluate(&dir.state_at(mid))?.inside() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// How per-angle radii are reduced to the plane picture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMode {
    /// Fixed second angle with zero second-radius weight: a plane slice.
    Slice,
    /// Sweep the second angle too and keep the per-`theta1` minimum radius
    /// (conservative envelope).
    MinOverTheta2,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Angles per full circle (96 gives the step pi/48).
    pub theta_divisions: usize,
    pub ray_weights: (f64, f64),
    pub rho_max: f64,
    pub tol_rho: f64,
    pub seed_radius: f64,
    pub projection: ProjectionMode,
    /// Second angle in slice mode.
    pub theta2_fixed: f64,
    /// Second-angle resolution in the full sweep.
    pub theta2_divisions: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            theta_divisions: 96,
            ray_weights: (1.0, 1.0),
            rho_max: 50.0,
            tol_rho: 1e-2,
            seed_radius: 1e-3,
            projection: ProjectionMode::Slice,
            theta2_fixed: 0.0,
            theta2_divisions: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleOutcome {
    Resolved(f64),
    /// Inside all the way to `rho_max`.
    NoExceedance,
    /// Already outside at the seed radius.
    SeedExceeded,
}

#[derive(Debug, Clone)]
pub struct AngleResult {
    pub theta1: f64,
    pub theta2: f64,
    pub outcome: AngleOutcome,
}

impl AngleResult {
    pub fn radius(&self) -> Option<f64> {
        match self.outcome {
            AngleOutcome::Resolved(r) => Some(r),
            _ => None,
        }
    }
}

/// Boundary radii per angle pair plus the plane projection.
#[derive(Debug, Clone)]
pub struct BoundaryEstimate {
    pub angles: Vec<AngleResult>,
    /// One `(phi_s1, phi_s2)` point per resolved first angle.
    pub projection: Vec<(f64, f64, f64)>,
    pub config: SweepConfig,
}

impl BoundaryEstimate {
    /// Radius for an exact first-angle value, when resolved (slice mode).
    pub fn radius_at(&self, theta1: f64) -> Option<f64> {
        self.angles
            .iter()
            .find(|a| a.theta1 == theta1)
            .and_then(AngleResult::radius)
    }

    pub fn unresolved_count(&self) -> usize {
        self.angles
            .iter()
            .filter(|a| a.radius().is_none())
            .count()
    }
}

/// Runs the radial search over the angular grid. Angle pairs are evaluated
/// concurrently and merged by index, so results are deterministic.
pub fn sweep<P: BoundaryProbe + ?Sized>(probe: &P, cfg: &SweepConfig) -> Result<BoundaryEstimate> {
    assert!(cfg.theta_divisions > 0);
    let two_pi = 2.0 * std::f64::consts::PI;
    let theta1s: Vec<f64> = (0..cfg.theta_divisions)
        .map(|i| two_pi * i as f64 / cfg.theta_divisions as f64)
        .collect();
    let theta2s: Vec<f64> = match cfg.projection {
        ProjectionMode::Slice => vec![cfg.theta2_fixed],
        ProjectionMode::MinOverTheta2 => (0..cfg.theta2_divisions)
            .map(|j| two_pi * j as f64 / cfg.theta2_divisions as f64)
            .collect(),
    };

    let pairs: Vec<(f64, f64)> = theta1s
        .iter()
        .flat_map(|&t1| theta2s.iter().map(move |&t2| (t1, t2)))
        .collect();

    let angles: Vec<AngleResult> = pairs
        .par_iter()
        .map(|&(theta1, theta2)| {
            let dir = RayDirection {
                theta1,
                theta2,
                w1: cfg.ray_weights.0,
                w2: cfg.ray_weights.1,
            };
            let outcome = match radial_search(probe, &dir, cfg.rho_max, cfg.tol_rho, cfg.seed_radius)
            {
                Ok(r) => Ok(AngleOutcome::Resolved(r)),
                Err(Error::NoExceedanceFound { .. }) => Ok(AngleOutcome::NoExceedance),
                Err(Error::SeedExceeded { .. }) => Ok(AngleOutcome::SeedExceeded),
                Err(e) => Err(e),
            }?;
            Ok(AngleResult {
                theta1,
                theta2,
                outcome,
            })
        })
        .collect::<Result<_>>()?;

    // Projection onto the first oscillator plane: per first angle, the
    // minimum resolved radius over the swept second angles.
    let mut projection = Vec::new();
    for &t1 in &theta1s {
        let min_r = angles
            .iter()
            .filter(|a| a.theta1 == t1)
            .filter_map(AngleResult::radius)
            .fold(f64::INFINITY, f64::min);
        if min_r.is_finite() {
            let w1 = cfg.ray_weights.0;
            projection.push((min_r * w1 * t1.cos(), min_r * w1 * t1.sin(), min_r));
        }
    }

    Ok(BoundaryEstimate {
        angles,
        projection,
        config: cfg.clone(),
    })
}
