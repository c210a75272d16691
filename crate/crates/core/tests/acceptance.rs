//! Acceptance suite: one PASS/FAIL line per criterion, exit status nonzero
//! when any criterion fails.

mod common;

use std::time::{Duration, Instant};

use hyrec::automaton::BuchiAutomaton;
use hyrec::certify::{empirical_ugr, predicted_ugr_bound, Certificate, CertificateReport, CertifyParams, EstimatorBox, KBox, UgrReport};
use hyrec::constrain::ConstrainedAutomaton;
use hyrec::hybrid_sim::{BranchPolicy, HybridState};
use hyrec::plant::{lyapunov_residual, solve_lyapunov};
use hyrec::scenario::{bundled, Scenario};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const TABLE_LIMIT: Duration = Duration::from_secs(1);
const RUN_LIMIT: Duration = Duration::from_secs(10);
const SWEEP_LIMIT: Duration = Duration::from_secs(120);
const CERTIFY_LIMIT: Duration = Duration::from_secs(120);
const LEMMA_LIMIT: Duration = Duration::from_secs(30);
const NUMERICS_LIMIT: Duration = Duration::from_secs(60);
const SPECTRUM_LIMIT: Duration = Duration::from_secs(1);

const SWEEP_J_MAX: usize = 20;
const MIN_VISITS: usize = 3;
const CERTIFY_SAMPLES: usize = 100_000;
const CERTIFY_RADIUS: f64 = 10.0;
const LEMMA_AUTOMATA: usize = 200;
const LEMMA_MAX_STATES: usize = 12;
const LYAP_INSTANCES: usize = 100;
const LYAP_MAX_N: usize = 32;
const LYAP_REL_TOL: f64 = 1e-8;
const W_MIN_INSTANCES: usize = 50;
const W_MIN_REL_TOL: f64 = 1e-6;
const FD_POINTS: usize = 100;
const FD_REL_TOL: f64 = 1e-6;
const SPECTRUM_TOL: f64 = 1e-9;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let t = Instant::now();
    let mut o = f();
    let elapsed = t.elapsed();
    if elapsed > limit {
        o.ok = false;
        o.detail += &format!("; runtime {elapsed:.2?} exceeds {limit:.0?}");
    }
    (o, elapsed)
}

fn table_reproduction() -> Outcome {
    let expected = "\
(s,o) | delta_c(s,o) | G_c((s,o))
(s0,o2), (s2,o2), (s6,o2) | {s4} | {(s4,o3)}
(s1,o3), (s3,o3) | {s2} | {(s2,o2)}
(s4,o3) | {s5} | {(s5,o1)}
(s5,o1) | {s3, s6} | {(s3,o3), (s6,o2)}
";
    let ba: BuchiAutomaton = bundled::ROBOTS4_BA.parse().unwrap();
    let ca = ConstrainedAutomaton::new(ba.prune_infeasible().unwrap()).unwrap();
    let got = ca.to_table();
    if got == expected {
        outcome(true, "four rows match exactly")
    } else {
        outcome(false, format!("table differs:\n{got}"))
    }
}

fn run_reproduction(sc: &Scenario) -> Outcome {
    let mut params = *sc.sim();
    params.j_max = 7;
    let arc = match sc.system.simulate(&sc.initial, &BranchPolicy::Scripted(vec![6]), &params) {
        Ok(a) => a,
        Err(e) => return outcome(false, e.to_string()),
    };
    let states = arc.state_word();
    let obs = arc.observation_word();
    let ok = states.starts_with(&[0, 4, 5, 6, 4, 5, 6, 4]) && obs.starts_with(&[2, 3, 1, 2, 3, 1, 2]);
    outcome(ok, format!("states {states:?}, observations {obs:?}"))
}

fn sweep(sc: &Scenario, t_hat: f64) -> Result<(UgrReport, usize), String> {
    let mut params = *sc.sim();
    params.j_max = SWEEP_J_MAX;
    let grid = sc.grid_states();
    let policies = &sc.policies;
    let report = empirical_ugr(&sc.system, &grid, policies, &params, MIN_VISITS, t_hat).map_err(|e| e.to_string())?;
    Ok((report, grid.len()))
}

fn recurrence(report: &UgrReport, grid: usize, policies: usize) -> Outcome {
    let ok = grid == 81
        && policies >= 3
        && report.arcs.len() == grid * policies
        && report.all_hit
        && report.min_visits_ok
        && report.separations_ok
        && report.flagged.is_empty();
    outcome(
        ok,
        format!(
            "{} arcs ({grid} starts x {policies} policies), fewest visits {} (>= {MIN_VISITS}), widest gap {} (<= {})",
            report.arcs.len(),
            report.fewest_visits,
            report.max_separation,
            report.separation_bound
        ),
    )
}

fn certificate_suite(sc: &Scenario) -> Outcome {
    let params = CertifyParams { samples: CERTIFY_SAMPLES, box_radius: CERTIFY_RADIUS, ..*sc.certify_params() };
    let mut starts: Vec<HybridState> = vec![sc.initial.clone()];
    starts.extend(sc.grid_states());
    let r = match CertificateReport::run(&sc.name, &sc.system, &params, sc.sim(), &starts) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let c = &r.constants;
    let tl = &c.theta_lambda;
    let constants_ok = c.lambda_c < 0.0
        && c.lambda_d == std::f64::consts::LN_2
        && tl.lambda_lo < tl.lambda
        && tl.lambda < tl.lambda_hi
        && r.constant_violations.is_empty();
    let ok = r.passed
        && constants_ok
        && r.flow.passed
        && r.flow.min_margin > 0.0
        && r.jump.passed
        && r.jump.min_margin > 0.0
        && r.restricted_time.passed
        && r.restricted_time.margin > 0;
    outcome(
        ok,
        format!(
            "flow margin {:.3e} ({} samples), jump margin {:.3e}, restricted margin {} ({} runs), lambda {:.4e} in ({:.4e}, {:.4e})",
            r.flow.min_margin,
            r.flow.samples,
            r.jump.min_margin,
            r.restricted_time.margin,
            r.restricted_time.runs,
            tl.lambda,
            tl.lambda_lo,
            tl.lambda_hi
        ),
    )
}

fn lemma_suite() -> Outcome {
    let mut rng = common::rng(2024);
    let mut violations = Vec::new();
    let mut largest = 0;
    for i in 0..LEMMA_AUTOMATA {
        let ba = common::random_pruned_automaton(&mut rng, LEMMA_MAX_STATES);
        largest = largest.max(ba.states().len());
        match ConstrainedAutomaton::new(ba) {
            Ok(ca) => violations.extend(common::lemma_violations(&ca).into_iter().map(|v| format!("#{i}: {v}"))),
            Err(e) => violations.push(format!("#{i}: {e}")),
        }
    }
    outcome(
        violations.is_empty(),
        format!("{LEMMA_AUTOMATA} automata (up to {largest} states), {} violations {:?}", violations.len(), violations.first()),
    )
}

fn numerics(sc: &Scenario) -> Outcome {
    let mut rng = common::rng(77);
    let mut worst_lyap = 0.0f64;
    let mut indefinite = 0;
    for i in 0..LYAP_INSTANCES {
        let n = 1 + (i * 13) % LYAP_MAX_N;
        let f = common::random_hurwitz(&mut rng, n);
        let q = common::random_spd(&mut rng, n);
        match solve_lyapunov(&f, &q) {
            Ok(p) => {
                worst_lyap = worst_lyap.max(lyapunov_residual(&f, &p, &q) / q.norm());
                if p.cholesky().is_none() {
                    indefinite += 1;
                }
            }
            Err(_) => indefinite += 1,
        }
    }

    let mut worst_w = 0.0f64;
    for _ in 0..W_MIN_INSTANCES {
        let nu = rng.random_range(1..=4);
        let p_out = rng.random_range(1..=nu.min(3));
        let p = common::random_spd(&mut rng, 2 * nu);
        let c = DMatrix::from_fn(p_out, nu, |_, _| rng.random_range(-1.0..1.0));
        let rho = rng.random_range(0.05..1.0);
        let closed = hyrec::certify::w_min(&p, &c, &[rho]).unwrap();
        worst_w = worst_w.max(common::rel_err(closed, common::w_min_oracle(&p, &c, rho, &mut rng)));
    }

    let sys = &sc.system;
    let cert = Certificate::compute(sys).unwrap();
    let modes: Vec<_> = sys.constrained().jump_set().iter().copied().collect();
    let mut worst_fd = 0.0f64;
    for k in 0..FD_POINTS {
        let chi = modes[k % modes.len()];
        let zeta = DVector::from_fn(sys.zeta_dim(), |_, _| rng.random_range(-4.0..4.0));
        let f = sys.closed_loop().vector_field(&zeta, chi.o);
        let h = 1e-4 / f.norm().max(1e-12);
        let fd = (cert.v_h(sys, chi, &(&zeta + &f * h)) - cert.v_h(sys, chi, &(&zeta - &f * h))) / (2.0 * h);
        worst_fd = worst_fd.max(common::rel_err(cert.flow_derivative(sys, chi, &zeta), fd));
    }

    let ok = worst_lyap <= LYAP_REL_TOL && indefinite == 0 && worst_w <= W_MIN_REL_TOL && worst_fd <= FD_REL_TOL;
    outcome(
        ok,
        format!(
            "Lyapunov residual {worst_lyap:.2e} (P not PD: {indefinite}), w_min rel err {worst_w:.2e}, directional derivative rel err {worst_fd:.2e}"
        ),
    )
}

fn soundness(report: &UgrReport) -> Outcome {
    outcome(
        report.all_hit && report.max_hitting_time <= report.t_hat,
        format!("max hitting time t+j = {:.4} <= T_hat = {:.4e}", report.max_hitting_time, report.t_hat),
    )
}

/// Roots of the 2×2 characteristic polynomial `s² − tr s + det`.
fn roots2(m: &DMatrix<f64>) -> [(f64, f64); 2] {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        [(tr / 2.0 + disc.sqrt(), 0.0), (tr / 2.0 - disc.sqrt(), 0.0)]
    } else {
        [(tr / 2.0, (-disc).sqrt()), (tr / 2.0, -(-disc).sqrt())]
    }
}

fn spectrum(sc: &Scenario) -> Outcome {
    let cl = sc.closed_loop();
    let a_bk = &cl.plant.a - &cl.plant.b * &cl.k;
    let a_lc = &cl.plant.a - &cl.l * &cl.plant.c;
    let nu = sc.plant.nu();
    let mut worst = 0.0f64;
    let mut coupled = 0.0f64;
    for axis in 0..nu / 2 {
        let idx = [2 * axis, 2 * axis + 1];
        for (m, want) in [(&a_bk, [(-1.0, 0.5), (-1.0, -0.5)]), (&a_lc, [(-5.0, 0.0), (-5.0, 0.0)])] {
            let block = hyrec::linalg::submatrix(m, &idx, &idx);
            for (got, want) in roots2(&block).iter().zip(want) {
                worst = worst.max((got.0 - want.0).abs().max((got.1 - want.1).abs()));
            }
            for i in idx {
                for j in 0..nu {
                    if !idx.contains(&j) {
                        coupled = coupled.max(m[(i, j)].abs());
                    }
                }
            }
        }
    }
    outcome(
        worst <= SPECTRUM_TOL && coupled == 0.0,
        format!("{} axes, worst eigenvalue error {worst:.1e}, cross-axis coupling {coupled:e}", nu / 2),
    )
}

fn main() {
    let sc = bundled::robots4();
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut push = |n, name, (o, d): (Outcome, Duration)| results.push((n, name, o, d));

    push(1, "constrained table reproduction", timed(TABLE_LIMIT, table_reproduction));
    push(2, "scripted run reproduction", timed(RUN_LIMIT, || run_reproduction(&sc)));

    let t_hat = Certificate::compute(&sc.system)
        .and_then(|c| predicted_ugr_bound(&sc.system, &c, &KBox::cube(sc.certify_params().k_box, EstimatorBox::Tied)))
        .map(|b| b.t_hat)
        .unwrap_or(f64::NAN);
    let clock = Instant::now();
    let swept = sweep(&sc, t_hat);
    let sweep_time = clock.elapsed();
    let (c3, c7) = match &swept {
        Ok((report, grid)) => (recurrence(report, *grid, sc.policies.len()), soundness(report)),
        Err(e) => (outcome(false, e.clone()), outcome(false, e.clone())),
    };
    let with_limit = |mut o: Outcome| {
        if sweep_time > SWEEP_LIMIT {
            o.ok = false;
            o.detail += &format!("; runtime {sweep_time:.2?} exceeds {SWEEP_LIMIT:.0?}");
        }
        (o, sweep_time)
    };
    push(3, "acceptance by recurrence", with_limit(c3));
    push(4, "certificate suite", timed(CERTIFY_LIMIT, || certificate_suite(&sc)));
    push(5, "automaton lemma suite", timed(LEMMA_LIMIT, lemma_suite));
    push(6, "numerics", timed(NUMERICS_LIMIT, || numerics(&sc)));
    push(7, "hitting-time soundness", with_limit(c7));
    push(8, "closed-loop spectrum", timed(SPECTRUM_LIMIT, || spectrum(&sc)));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (n, name, o, d) in &results {
        let mark = if o.ok { "PASS" } else { "FAIL" };
        failed += usize::from(!o.ok);
        println!("criterion {n} {mark} {name} [{d:.2?}]: {}", o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
