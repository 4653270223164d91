//! Scratch exploration of boundary radii and probe timings.

use dde_bounds::boundary::{
    radial_search, BoundaryProbe, RayDirection, ReferenceProbe, ScalarBoundProbe, YThresholdProbe,
};
use dde_bounds::dde::StepperConfig;
use dde_bounds::models::{
    build_duffing_system, build_vdp_system, MajorantConvention, OscillatorBase, OscillatorParams,
};
use dde_bounds::spectral::{eigen_decompose, transformed_norm};
use std::time::Instant;

fn params(mu: f64, d: f64) -> OscillatorParams {
    OscillatorParams {
        c1: 0.4,
        c2: 0.2,
        omega1_sq: 1.0,
        omega2_sq: 4.0,
        d,
        a1: 0.1,
        a2: 0.1,
        b1: 0.1,
        b2: 0.1,
        r1: 3.14,
        r2: 6.15,
        s1: 3.1,
        s2: 6.28,
        mu1: mu,
        mu2: mu,
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

fn tanh_exploration() {
    let t_end = 80.0;
    let cfg = StepperConfig::new(1e-2, t_end);
    for (mu_cubic, mu_sat) in [(-0.1, -1.0), (0.1, 1.0), (-0.1, 1.0), (0.1, -1.0)] {
        let mut p = params(0.0, 0.1);
        p.mu1 = mu_cubic;
        p.mu2 = mu_cubic;
        p.mu3 = mu_sat;
        p.mu4 = mu_sat;
        p.h0 = 1.0;
        p.h1 = 10.0;
        let sys = dde_bounds::models::build_tanh_variant(&p, OscillatorBase::VdpLike);
        let probe = ReferenceProbe {
            sys: &sys,
            varpi: 50.0,
            t_span: (0.0, t_end),
            cfg,
        };
        print!("tanh vdp mu_c={mu_cubic:+.1} mu_s={mu_sat:+.1}: ");
        for rho in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0] {
            let dir = RayDirection {
                theta1: 0.0,
                theta2: 0.0,
                w1: 1.0,
                w2: 1.0,
            };
            match probe.evaluate(&dir.state_at(rho)) {
                Ok(r) => print!(
                    "{rho}:{}{} ",
                    if r.inside() { "in" } else { "OUT" },
                    if r.peak.is_finite() { format!("({:.1})", r.peak) } else { "(inf)".into() }
                ),
                Err(e) => print!("{rho}:ERR({e}) "),
            }
        }
        println!();
        // Boundary along one ray, then a coarse K agreement check.
        let dir = RayDirection {
            theta1: 0.0,
            theta2: 0.0,
            w1: 1.0,
            w2: 1.0,
        };
        let r_ref = radial_search(&probe, &dir, 100.0, 1e-2, 1e-3);
        let yk = |k: usize| YThresholdProbe {
            sys: &sys,
            k_depth: k,
            varpi: 50.0,
            t_span: (0.0, t_end),
            cfg,
        };
        let r6 = radial_search(&yk(6), &dir, 100.0, 1e-2, 1e-3);
        let r8 = radial_search(&yk(8), &dir, 100.0, 1e-2, 1e-3);
        println!("   r_ref={r_ref:?} r_y6={r6:?} r_y8={r8:?}");
    }
}

fn enclosure_exploration() {
    use dde_bounds::bounds::{bilateral_bounds, integrate_majorant};
    use dde_bounds::cascade::solve_cascade;
    use dde_bounds::models::{cubic_residual_majorant, simulate_system};

    let t_end = 40.0;
    let cfg = StepperConfig::new(1e-3, t_end);
    for (name, mu, rho_half, base) in [
        ("vdp", 1.0, 0.85, OscillatorBase::VdpLike),
        ("duffing", 1.0, 0.39, OscillatorBase::DuffingLike),
    ] {
        let p = params(mu, 0.1);
        let sys = if name == "vdp" {
            build_vdp_system(&p)
        } else {
            build_duffing_system(&p)
        };
        let eig = eigen_decompose(&sys.a, 1e-10).unwrap();
        for theta in [0.0f64, 1.0, 2.5] {
            let phi = dde_bounds::boundary::polar_to_state(rho_half, theta, 0.0, 0.0);
            let mut gaps = Vec::new();
            for k in [4usize, 6] {
                let cascade = solve_cascade(&sys, &phi, k, (0.0, t_end), &cfg).unwrap();
                let maj = cubic_residual_majorant(
                    &eig,
                    &p,
                    base,
                    &cascade,
                    k,
                    MajorantConvention::Coupled,
                )
                .unwrap();
                let z =
                    integrate_majorant(&maj, (&sys.delay0, &sys.f_delays[0]), (0.0, t_end), &cfg)
                        .unwrap();
                if let Some(t) = z.escaped() {
                    println!("{name} theta={theta} K={k}: majorant escaped at {t}");
                    continue;
                }
                let mut trace = bilateral_bounds(&cascade, &z, &eig).unwrap();
                let reference = simulate_system(&sys, &phi, (0.0, t_end), &cfg).unwrap();
                trace.attach_reference(&reference).unwrap();
                let viol = trace.enclosure_violations(1e-3);
                gaps.push(trace.max_gap());
                println!(
                    "{name} theta={theta} K={k}: violations={viol} max_gap={:.4e} sup_upper={:.3}",
                    trace.max_gap(),
                    trace.sup_upper()
                );
            }
            if gaps.len() == 2 {
                println!("   tightening ratio gap6/gap4 = {:.3}", gaps[1] / gaps[0]);
            }
        }
    }
}

fn main() {
    match std::env::args().nth(1).as_deref() {
        Some("tanh") => return tanh_exploration(),
        Some("enclosure") => return enclosure_exploration(),
        _ => {}
    }
    let d = 0.1;
    let p = params(1.0, d);
    let a = p.system_matrix();
    let eig = eigen_decompose(&a, 1e-10).unwrap();
    println!("alpha1 = {}, alphan = {}", eig.alpha1, eig.alphan);
    println!("norm_v = {}, norm_vinv = {}", eig.norm_v, eig.norm_vinv);
    println!("kappa = {:?}", eig.kappa);

    // Drift budget of the scalar equation: sup and average of |V^-1 G V|.
    let mut sup: f64 = 0.0;
    let mut avg = 0.0;
    let n = 4000;
    for i in 0..n {
        let t = 40.0 * i as f64 / n as f64;
        let mut g = nalgebra::DMatrix::zeros(4, 4);
        g[(1, 0)] = -p.g21(t);
        g[(3, 2)] = -p.g43(t);
        let v = transformed_norm(&eig, &g);
        sup = sup.max(v);
        avg += v / n as f64;
    }
    println!("|V^-1 G V|: sup = {sup:.4}, avg = {avg:.4}, eta = {}", -eig.alpha1);

    let t_end = 40.0;
    let dt = 1e-3;
    let cfg = StepperConfig::new(dt, t_end);

    for mu in [0.5, 1.0, 5.0, 60.0] {
        let p = params(mu, d);
        for (name, sys, base) in [
            ("vdp", build_vdp_system(&p), OscillatorBase::VdpLike),
            ("duffing", build_duffing_system(&p), OscillatorBase::DuffingLike),
        ] {
            let dir = RayDirection {
                theta1: 0.0,
                theta2: 0.0,
                w1: 1.0,
                w2: 0.0,
            };
            let reference = ReferenceProbe {
                sys: &sys,
                varpi: 50.0,
                t_span: (0.0, t_end),
                cfg,
            };
            let t0 = Instant::now();
            let r_ref = radial_search(&reference, &dir, 100.0, 1e-2, 1e-3);
            let ref_time = t0.elapsed();

            let scalar = ScalarBoundProbe {
                sys: &sys,
                eig: &eig,
                params: &p,
                base,
                convention: MajorantConvention::Coupled,
                k_depth: 6,
                varpi: 50.0,
                t_span: (0.0, t_end),
                cfg,
            };
            let t0 = Instant::now();
            let r_scalar = radial_search(&scalar, &dir, 100.0, 1e-2, 1e-3);
            let scalar_time = t0.elapsed();

            let transient = YThresholdProbe {
                sys: &sys,
                k_depth: 6,
                varpi: 50.0,
                t_span: (0.0, t_end),
                cfg,
            };
            let r_y = radial_search(&transient, &dir, 100.0, 1e-2, 1e-3);

            println!(
                "mu={mu:6.1} {name:8} r_ref={:?} ({ref_time:.2?})  r_scalar={:?} ({scalar_time:.2?})  r_y={:?}",
                r_ref.map(|r| (r * 1e4).round() / 1e4),
                r_scalar.map(|r| (r * 1e4).round() / 1e4),
                r_y.map(|r| (r * 1e4).round() / 1e4),
            );

            // One probe timing at a mid radius for budgeting.
            let t0 = Instant::now();
            let _ = scalar.evaluate(&dir.state_at(0.05));
            println!("   scalar probe at 0.05: {:.2?}", t0.elapsed());
        }
    }
}
