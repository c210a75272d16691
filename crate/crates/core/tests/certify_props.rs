mod common;

use hyrec::certify::{
    empirical_ugr, j1, predicted_ugr_bound, w_min, Certificate, CertificateReport, CertifyParams, EstimatorBox, KBox,
};
use hyrec::hybrid_sim::HybridState;
use hyrec::scenario::{bundled, load_scenario_str, Scenario, ScenarioFile};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn with_scaled_q(name: &str, factor: f64) -> Scenario {
    let mut file: ScenarioFile = toml::from_str(bundled::text(name).unwrap()).unwrap();
    let n = 2 * file.plant.a.len();
    let q = DMatrix::<f64>::identity(n, n) * factor;
    file.gains.q = Some(hyrec::linalg::to_rows(&q));
    load_scenario_str(&toml::to_string(&file).unwrap(), name, bundled::resolve).unwrap()
}

#[test]
fn constants_have_their_signs() {
    for name in bundled::NAMES {
        let sc = bundled::load(name).unwrap();
        let c = Certificate::compute(&sc.system).unwrap().constants;
        assert!(c.violations().is_empty(), "{name}: {:?}", c.violations());
        assert!(c.w_min > 0.0 && c.j1 > 0.0 && c.lambda_prime > 0.0 && c.lambda() > 0.0);
        assert!(c.m > 0.0 && c.gamma > 0.0 && c.lambda_c < 0.0);
        assert!(c.theta() > 0.0 && c.theta() < 1.0);
        assert_eq!(c.lambda_d, std::f64::consts::LN_2);
        assert_eq!(c.mu_ba, c.d_max + 1);
    }
}

#[test]
fn w_min_matches_the_optimization_oracle() {
    let mut rng = common::rng(3);
    for case in 0..50 {
        let nu = rng.random_range(1..=4);
        let p_out = rng.random_range(1..=nu.min(3));
        let p = common::random_spd(&mut rng, 2 * nu);
        let c = DMatrix::from_fn(p_out, nu, |_, _| rng.random_range(-1.0..1.0));
        let rhos: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
        let rho_min = rhos.iter().copied().fold(f64::INFINITY, f64::min);
        let closed = w_min(&p, &c, &rhos).unwrap();
        let oracle = common::w_min_oracle(&p, &c, rho_min, &mut rng);
        let rel = common::rel_err(closed, oracle);
        assert!(rel <= 1e-6, "case {case}: closed form {closed:e}, oracle {oracle:e}, rel {rel:e}");
    }
}

#[test]
fn w_min_of_the_robots_matches_the_oracle() {
    let sc = bundled::robots4();
    let cl = sc.closed_loop();
    let rho = sc.regions.iter().map(|r| r.jump_radius).fold(f64::INFINITY, f64::min);
    let oracle = common::w_min_oracle(&cl.p, &cl.plant.c, rho, &mut common::rng(5));
    let closed = Certificate::compute(&sc.system).unwrap().constants.w_min;
    assert!(common::rel_err(closed, oracle) <= 1e-6, "{closed:e} vs {oracle:e}");
}

#[test]
fn j1_matches_brute_force() {
    let mut rng = common::rng(4);
    for _ in 0..50 {
        let nu = rng.random_range(1..=6);
        let p = common::random_spd(&mut rng, 2 * nu);
        let pts: Vec<DVector<f64>> = (0..rng.random_range(2..=4))
            .map(|_| DVector::from_fn(nu, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let got = j1(&p, &pts).unwrap();
        assert!(common::rel_err(got, common::j1_oracle(&p, &pts)) <= 1e-12);
    }
}

#[test]
fn flow_derivative_matches_finite_differences() {
    let sc = bundled::robots4();
    let sys = &sc.system;
    let cert = Certificate::compute(sys).unwrap();
    let modes: Vec<_> = sys.constrained().jump_set().iter().copied().collect();
    let mut rng = common::rng(9);
    for k in 0..100 {
        let chi = modes[k % modes.len()];
        let zeta = DVector::from_fn(sys.zeta_dim(), |_, _| rng.random_range(-4.0..4.0));
        let f = sys.closed_loop().vector_field(&zeta, chi.o);
        let h = 1e-4 / f.norm().max(1e-12);
        let fd = (cert.v_h(sys, chi, &(&zeta + &f * h)) - cert.v_h(sys, chi, &(&zeta - &f * h))) / (2.0 * h);
        let analytic = cert.flow_derivative(sys, chi, &zeta);
        let identity = cert.flow_derivative_identity(sys, chi, &zeta);
        assert!(common::rel_err(analytic, fd) <= 1e-6, "point {k}: analytic {analytic:e}, fd {fd:e}");
        assert!(common::rel_err(identity, fd) <= 1e-6, "point {k}: identity {identity:e}, fd {fd:e}");
    }
}

fn report(sc: &Scenario, samples: usize) -> CertificateReport {
    let params = CertifyParams { samples, ..*sc.certify_params() };
    let mut starts: Vec<HybridState> = vec![sc.initial.clone()];
    starts.extend(sc.grid_states().into_iter().step_by(10));
    CertificateReport::run(&sc.name, &sc.system, &params, sc.sim(), &starts).unwrap()
}

#[test]
fn doubling_q_keeps_every_verdict() {
    for name in bundled::NAMES {
        let base = bundled::load(name).unwrap();
        let (one, two) = (with_scaled_q(name, 1.0), with_scaled_q(name, 2.0));
        let (c1, c2) = (
            Certificate::compute(&one.system).unwrap().constants,
            Certificate::compute(&two.system).unwrap().constants,
        );
        assert!(common::rel_err(c2.w_min, 2.0 * c1.w_min) < 1e-9);
        assert!(common::rel_err(c2.j1, 2.0 * c1.j1) < 1e-9);
        assert!(common::rel_err(c2.lambda_prime, c1.lambda_prime) < 1e-9);
        assert!(common::rel_err(c2.theta_lambda.lambda_hi, 0.5 * c1.theta_lambda.lambda_hi) < 1e-9);
        assert!(common::rel_err(c2.lambda(), 0.5 * c1.lambda()) < 1e-9);
        assert!(common::rel_err(c2.gamma, c1.gamma) < 1e-9);

        let samples = 20_000;
        let (r0, r1, r2) = (report(&base, samples), report(&one, samples), report(&two, samples));
        for r in [&r1, &r2] {
            assert_eq!(r.passed, r0.passed, "{name}");
            assert_eq!(r.flow.passed, r0.flow.passed, "{name}");
            assert_eq!(r.jump.passed, r0.jump.passed, "{name}");
            assert_eq!(r.restricted_time.passed, r0.restricted_time.passed, "{name}");
            assert_eq!(r.constant_violations, r0.constant_violations, "{name}");
        }
    }
}

#[test]
fn toy_hitting_times_respect_the_bound() {
    let sc = bundled::toy1();
    let cert = Certificate::compute(&sc.system).unwrap();
    let bound = predicted_ugr_bound(&sc.system, &cert, &KBox::cube(sc.certify_params().k_box, EstimatorBox::Tied)).unwrap();
    let mut rng = common::rng(21);
    let starts: Vec<HybridState> = (0..40)
        .map(|_| {
            let x = rng.random_range(-3.0..3.0);
            HybridState::new(sc.initial.chi, DVector::from_vec(vec![x, x]))
        })
        .collect();
    let report = empirical_ugr(&sc.system, &starts, &sc.policies, sc.sim(), 3, bound.t_hat).unwrap();
    assert!(report.passed(), "max hitting time {} vs bound {}", report.max_hitting_time, report.t_hat);
}

#[test]
fn independent_estimator_box_only_raises_the_bound() {
    let sc = bundled::robots4();
    let cert = Certificate::compute(&sc.system).unwrap();
    let tied = predicted_ugr_bound(&sc.system, &cert, &KBox::cube(3.0, EstimatorBox::Tied)).unwrap();
    let free = predicted_ugr_bound(&sc.system, &cert, &KBox::cube(3.0, EstimatorBox::Independent)).unwrap();
    assert!(free.v_u >= tied.v_u && free.t_hat >= tied.t_hat);
    // V_u dominates V_H at every corner of K with a tied estimate.
    let nu = sc.plant.nu();
    let mut rng = common::rng(2);
    for _ in 0..2000 {
        let xi = DVector::from_fn(nu, |_, _| if rng.random_bool(0.5) { 3.0 } else { -3.0 });
        let z = sc.system.stack(&xi, &xi);
        for &chi in sc.constrained().jump_set() {
            assert!(cert.v_h(&sc.system, chi, &z) <= tied.v_u * (1.0 + 1e-12));
        }
    }
}

#[test]
fn flow_check_rejects_lambda_below_its_interval() {
    let sc = bundled::robots4();
    let mut cert = Certificate::compute(&sc.system).unwrap();
    cert.constants.theta_lambda.lambda = cert.constants.theta_lambda.lambda_lo * 0.1;
    let params = CertifyParams { samples: 3000, ..*sc.certify_params() };
    let r = hyrec::certify::check_flow_condition(&sc.system, &cert, &params);
    assert!(!r.passed && r.violations > 0);
    assert!(r.witness.is_some_and(|w| w.margin <= 0.0));
}
