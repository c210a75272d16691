//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use hyrec::automaton::BuchiAutomaton;
use hyrec::constrain::{AutomatonState, ConstrainedAutomaton};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random automaton with at most `max_states` states, already pruned.
/// When the draw has no reachable accepting cycle, the edges
/// `0 -o1-> a -o1-> 0` are added for the first accepting `a`.
pub fn random_pruned_automaton(rng: &mut ChaCha8Rng, max_states: usize) -> BuchiAutomaton {
    let n = rng.random_range(1..=max_states);
    let n_obs = rng.random_range(1..=4);
    let density = rng.random_range(0.1..0.6);
    let mut delta: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    for s in 0..n {
        for o in 1..=n_obs {
            for t in 0..n {
                if rng.random_bool(density / n as f64 * 2.0_f64.min(n as f64)) {
                    delta.entry((s, o)).or_default().insert(t);
                }
            }
        }
    }
    let mut accepting: BTreeSet<usize> = (0..n).filter(|_| rng.random_bool(0.3)).collect();
    if accepting.is_empty() {
        accepting.insert(rng.random_range(0..n));
    }
    let mut initial: BTreeSet<usize> = (0..n).filter(|_| rng.random_bool(0.2)).collect();
    initial.insert(0);

    let build = |delta: &BTreeMap<(usize, usize), BTreeSet<usize>>| {
        BuchiAutomaton::new(
            n,
            initial.iter().copied(),
            accepting.iter().copied(),
            n_obs,
            delta.iter().map(|(&(s, o), to)| (s, o, to.iter().copied().collect())),
        )
        .expect("generated automaton is well formed")
    };
    match build(&delta).prune_infeasible() {
        Ok(p) => p,
        Err(_) => {
            let a = *accepting.iter().next().unwrap();
            delta.entry((0, 1)).or_default().insert(a);
            delta.entry((a, 1)).or_default().insert(0);
            build(&delta).prune_infeasible().expect("repaired automaton has an accepting cycle")
        }
    }
}

/// Violations of the three automaton lemmas on one constrained automaton:
/// nonempty constrained observations, closure of the jump set under the
/// jump map, and `V_BA` decrease by at least one off accepting states with
/// `V_BA(g) ≤ d_max` on them.
pub fn lemma_violations(ca: &ConstrainedAutomaton) -> Vec<String> {
    let mut out = Vec::new();
    let base = ca.base();
    for &s in base.states() {
        if ca.constrained_observations(s).is_empty() {
            out.push(format!("O^C empty at s{s}"));
        }
    }
    let d_max = ca.d_max();
    for &chi in ca.jump_set() {
        let posts = match ca.jump_map(chi) {
            Ok(p) => p,
            Err(e) => {
                out.push(format!("jump map fails at {chi}: {e}"));
                continue;
            }
        };
        if posts.is_empty() {
            out.push(format!("empty jump map at {chi}"));
        }
        for g in posts {
            if !ca.jump_set().contains(&g) {
                out.push(format!("{chi} -> {g} leaves the jump set"));
            }
            let (v, vg) = (i64::from(ca.v_ba(chi)), i64::from(ca.v_ba(g)));
            if base.is_accepting(chi.s) {
                let mu_ba = 1 + i64::from(d_max);
                if vg - v > -1 + mu_ba {
                    out.push(format!("{chi} -> {g}: V_BA rises to {vg} > d_max {d_max}"));
                }
            } else if vg - v > -1 {
                out.push(format!("{chi} -> {g}: V_BA {v} -> {vg} does not decrease"));
            }
        }
    }
    out
}

/// Longest jump sequence from a mode of the jump set until an accepting
/// state, by exhaustive depth-first search (`None` on a cycle avoiding it).
pub fn longest_run_to_accepting(ca: &ConstrainedAutomaton) -> Option<usize> {
    fn go(ca: &ConstrainedAutomaton, chi: AutomatonState, path: &mut Vec<AutomatonState>) -> Option<usize> {
        if ca.base().is_accepting(chi.s) {
            return Some(0);
        }
        if path.contains(&chi) {
            return None;
        }
        path.push(chi);
        let mut best = 0;
        for g in ca.jump_map(chi).ok()? {
            best = best.max(go(ca, g, path)? + 1);
        }
        path.pop();
        Some(best)
    }
    let mut best = 0;
    for &chi in ca.jump_set() {
        if ca.base().is_accepting(chi.s) {
            continue;
        }
        best = best.max(go(ca, chi, &mut Vec::new())?);
    }
    Some(best)
}

/// `M − (max Re λ(M) + 1)·I` for a random `M`.
pub fn random_hurwitz(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let abscissa = m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    m - DMatrix::identity(n, n) * (abscissa + 1.0)
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(n, n) * 0.5
}

/// `min ζ̃ᵀPζ̃` over `ζ̃ = (e1, e2)` with `‖Ce1‖₂ = ρ`.
///
/// For a fixed output `y` the inner problem is an equality-constrained QP
/// solved from its full KKT system; the outer minimization over the sphere
/// `‖y‖ = ρ` is a multistart projected gradient descent with
/// central-difference gradients.
pub fn w_min_oracle(p: &DMatrix<f64>, c: &DMatrix<f64>, rho: f64, rng: &mut ChaCha8Rng) -> f64 {
    let n2 = p.nrows();
    let (py, nu) = (c.nrows(), c.ncols());
    let mut kkt = DMatrix::zeros(n2 + py, n2 + py);
    kkt.view_mut((0, 0), (n2, n2)).copy_from(&(p * 2.0));
    kkt.view_mut((n2, 0), (py, nu)).copy_from(c);
    kkt.view_mut((0, n2), (nu, py)).copy_from(&c.transpose());
    let lu = kkt.lu();
    let inner = |y: &DVector<f64>| {
        let mut rhs = DVector::zeros(n2 + py);
        rhs.rows_mut(n2, py).copy_from(y);
        let sol = lu.solve(&rhs).expect("KKT system is nonsingular");
        let z = sol.rows(0, n2).into_owned();
        (z.transpose() * p * &z)[(0, 0)]
    };
    let mut best = f64::INFINITY;
    for _ in 0..8 {
        let mut y = DVector::from_fn(py, |_, _| rng.random_range(-1.0..1.0));
        y *= rho / y.norm();
        let mut f = inner(&y);
        let mut step = 1.0;
        for _ in 0..4000 {
            let h = 1e-6 * rho;
            let grad = DVector::from_fn(py, |i, _| {
                let mut a = y.clone();
                let mut b = y.clone();
                a[i] += h;
                b[i] -= h;
                (inner(&a) - inner(&b)) / (2.0 * h)
            });
            // Tangential component on the sphere.
            let g = &grad - &y * (grad.dot(&y) / (rho * rho));
            if g.norm() < 1e-14 * f.max(1e-300) / rho {
                break;
            }
            let mut improved = false;
            while step > 1e-16 {
                let mut cand = &y - &g * step;
                cand *= rho / cand.norm();
                let fc = inner(&cand);
                if fc < f {
                    y = cand;
                    f = fc;
                    step *= 2.0;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        best = best.min(f);
    }
    best
}

/// Brute-force `max (ξ_a − ξ_b)ᵀ P_aa (ξ_a − ξ_b)` by explicit sums.
pub fn j1_oracle(p: &DMatrix<f64>, setpoints: &[DVector<f64>]) -> f64 {
    let nu = setpoints[0].len();
    let mut best = 0.0f64;
    for a in setpoints {
        for b in setpoints {
            let mut s = 0.0;
            for i in 0..nu {
                for j in 0..nu {
                    s += (a[i] - b[i]) * p[(i, j)] * (a[j] - b[j]);
                }
            }
            best = best.max(s);
        }
    }
    best
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
