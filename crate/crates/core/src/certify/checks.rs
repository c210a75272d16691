//! Sampled flow and jump inequalities and the restricted-time condition.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Certificate, CertifyError, CertifyParams};
use crate::constrain::{AutomatonState, ConstrainedAutomaton};
use crate::hybrid_sim::{HybridState, HybridSystem, SimError, SimParams, Termination};
use crate::linalg;

/// A sampled point where a check was tightest or failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub chi: AutomatonState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post: Option<AutomatonState>,
    pub zeta: Vec<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub passed: bool,
    /// Evaluated `(χ, ζ)` (and successor) combinations.
    pub samples: usize,
    pub violations: usize,
    pub min_margin: f64,
    /// Smallest margin relative to the size of the compared terms.
    pub min_relative_margin: f64,
    /// Tightest sample, or the first violation.
    pub witness: Option<Witness>,
    /// Flow check only: smallest `θV_H − V_BA` against its lower bound
    /// `θλw_min − (1−θ)d_max`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intermediate_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intermediate_bound: Option<f64>,
}

struct Tally {
    samples: usize,
    violations: usize,
    min_margin: f64,
    min_rel: f64,
    witness: Option<Witness>,
    first_violation: Option<Witness>,
}

impl Tally {
    fn new() -> Self {
        Self {
            samples: 0,
            violations: 0,
            min_margin: f64::INFINITY,
            min_rel: f64::INFINITY,
            witness: None,
            first_violation: None,
        }
    }

    fn record(&mut self, margin: f64, scale: f64, w: impl FnOnce() -> Witness) {
        self.samples += 1;
        let rel = margin / scale.max(f64::MIN_POSITIVE);
        self.min_rel = self.min_rel.min(rel);
        let violated = !(margin > 0.0);
        if violated {
            self.violations += 1;
        }
        if margin < self.min_margin || (violated && self.first_violation.is_none()) {
            let wit = w();
            if violated && self.first_violation.is_none() {
                self.first_violation = Some(wit.clone());
            }
            if margin < self.min_margin {
                self.min_margin = margin;
                self.witness = Some(wit);
            }
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            passed: self.violations == 0 && self.samples > 0,
            samples: self.samples,
            violations: self.violations,
            min_margin: self.min_margin,
            min_relative_margin: self.min_rel,
            witness: self.first_violation.or(self.witness),
            intermediate_min: None,
            intermediate_bound: None,
        }
    }
}

/// Per-observation geometry used by the samplers.
struct ModeGeometry {
    xi_o: DVector<f64>,
    rho: f64,
    c_pinv: DMatrix<f64>,
    /// `e2 = gain · e1` minimizes `W` over the estimator error.
    e2_gain: DMatrix<f64>,
    /// `S⁻¹Cᵀ(CS⁻¹Cᵀ)⁻¹`: smallest-`S`-norm `e1` with `Ce1 = y`.
    e1_from_y: DMatrix<f64>,
    /// Unit output direction of the largest eigenvalue of `CS⁻¹Cᵀ`.
    worst_dir: DVector<f64>,
}

fn geometry(system: &HybridSystem, cert: &Certificate) -> Result<BTreeMap<usize, ModeGeometry>, CertifyError> {
    let cl = system.closed_loop();
    let nu = cl.nu();
    let c = &cl.plant.c;
    let p = &cert.p;
    let pbb_inv = p.view((nu, nu), (nu, nu)).into_owned().try_inverse().ok_or(CertifyError::Singular("P_bb"))?;
    let pba = p.view((nu, 0), (nu, nu)).into_owned();
    let e2_gain = -(&pbb_inv * &pba);
    let s = p.view((0, 0), (nu, nu)) - p.view((0, nu), (nu, nu)) * &pbb_inv * &pba;
    let s_inv = s.try_inverse().ok_or(CertifyError::Singular("Schur complement"))?;
    let m = c * &s_inv * c.transpose();
    let m_inv = m.clone().try_inverse().ok_or(CertifyError::Singular("C S^-1 C^T"))?;
    let e1_from_y = &s_inv * c.transpose() * m_inv;
    let eig = ((&m + m.transpose()) * 0.5).symmetric_eigen();
    let imax = eig.eigenvalues.imax();
    let worst_dir = eig.eigenvectors.column(imax).into_owned();
    let c_pinv = linalg::right_inverse(c).ok_or(CertifyError::Singular("C C^T"))?;
    Ok(system
        .regions()
        .iter()
        .map(|(&o, r)| {
            (
                o,
                ModeGeometry {
                    xi_o: cl.setpoints[&o].xi.clone(),
                    rho: r.jump_radius,
                    c_pinv: c_pinv.clone(),
                    e2_gain: e2_gain.clone(),
                    e1_from_y: e1_from_y.clone(),
                    worst_dir: worst_dir.clone(),
                },
            )
        })
        .collect())
}

fn uniform_box(rng: &mut ChaCha8Rng, n: usize, r: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-r..=r))
}

fn unit_direction(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        let norm = v.norm();
        if norm > 1e-3 && norm <= 1.0 {
            return v / norm;
        }
    }
}

fn zeta_from_errors(system: &HybridSystem, xi_o: &DVector<f64>, e1: &DVector<f64>, e2: &DVector<f64>) -> DVector<f64> {
    let xi = xi_o + e1;
    let xi_hat = &xi - e2;
    system.stack(&xi, &xi_hat)
}

/// `⟨∇V_H, f_H⟩ ≤ λc V_H` on sampled points of `C_H`, plus the
/// intermediate bound `θV_H − V_BA ≥ θλw_min − (1−θ)d_max > 0`.
///
/// A third of the samples are uniform in a box of half-width `R` around
/// `(ξ_o, ξ_o)`, a third lie on or just outside the guard sphere, and a
/// third also put the estimator error at its `W`-minimizing value. Each
/// mode additionally gets the exact minimizer that attains `w_min`.
pub fn check_flow_condition(system: &HybridSystem, cert: &Certificate, params: &CertifyParams) -> CheckResult {
    let geo = match geometry(system, cert) {
        Ok(g) => g,
        Err(_) => return Tally::new().finish(),
    };
    let c = &cert.constants;
    let (theta, lambda) = (c.theta(), c.lambda());
    let bound = theta * lambda * c.w_min - (1.0 - theta) * f64::from(c.d_max);
    let nu = system.closed_loop().nu();
    let cmat = &system.closed_loop().plant.c;
    let p_out = cmat.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut tally = Tally::new();
    let mut inter_min = f64::INFINITY;
    let mut inter_ok = true;
    let by_obs = modes_by_observation(system.constrained());
    let per_obs = (params.samples / geo.len().max(1)).max(1);
    let r = params.box_radius;

    for (&o, g) in &geo {
        let Some(modes) = by_obs.get(&o) else { continue };
        let rho_min = geo.values().map(|g| g.rho).fold(f64::INFINITY, f64::min);
        for i in 0..=per_obs {
            let (e1, e2) = if i == per_obs {
                // Exact minimizer: the smallest jump radius along the worst
                // output direction, with both free parts at their optimum.
                let e1 = &g.e1_from_y * (&g.worst_dir * rho_min.max(g.rho));
                let e2 = &g.e2_gain * &e1;
                (e1, e2)
            } else {
                match i % 3 {
                    0 => {
                        let mut e1 = uniform_box(&mut rng, nu, r);
                        while (cmat * &e1).norm() < g.rho {
                            e1 = uniform_box(&mut rng, nu, r);
                        }
                        (e1, uniform_box(&mut rng, nu, r))
                    }
                    k => {
                        let radius = g.rho * (1.0 + rng.random_range(0.0..1e-3));
                        let target = unit_direction(&mut rng, p_out) * radius;
                        let scale = 10f64.powf(rng.random_range(-3.0..=0.0)) * r;
                        let mut e1 = uniform_box(&mut rng, nu, scale);
                        e1 += &g.c_pinv * (target - cmat * &e1);
                        let e2 = if k == 1 { uniform_box(&mut rng, nu, scale) } else { &g.e2_gain * &e1 };
                        (e1, e2)
                    }
                }
            };
            let zeta = zeta_from_errors(system, &g.xi_o, &e1, &e2);
            for &chi in modes {
                if system.guard_gap(chi, &zeta) < -1e-12 {
                    continue;
                }
                let w = cert.w(system, o, &zeta);
                let v_ba = f64::from(system.constrained().v_ba(chi));
                let v_h = v_ba + lambda * w;
                let e = system.closed_loop().error_coordinates(&zeta, o);
                let dq = lambda * linalg::quad_form(&cert.q, &e);
                let margin = dq + c.lambda_c * v_h;
                tally.record(margin, dq + c.lambda_c.abs() * v_h, || Witness {
                    chi,
                    post: None,
                    zeta: zeta.iter().copied().collect(),
                    margin,
                });
                let inter = theta * v_h - v_ba;
                inter_min = inter_min.min(inter);
                if inter < bound * (1.0 - 1e-9) {
                    inter_ok = false;
                }
            }
        }
    }
    let mut out = tally.finish();
    out.passed &= inter_ok && bound > 0.0;
    out.intermediate_min = Some(inter_min);
    out.intermediate_bound = Some(bound);
    out
}

/// `V_H(x⁺) ≤ 2V_H(x)` off the recurrent set and `≤ 2V_H(x) + μ_H` on it,
/// for every mode, every successor and sampled `ζ` in the jump ball
/// (including its center).
pub fn check_jump_condition(system: &HybridSystem, cert: &Certificate, params: &CertifyParams) -> CheckResult {
    let geo = match geometry(system, cert) {
        Ok(g) => g,
        Err(_) => return Tally::new().finish(),
    };
    let nu = system.closed_loop().nu();
    let cmat = &system.closed_loop().plant.c;
    let p_out = cmat.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e37_79b9);
    let mut tally = Tally::new();
    let by_obs = modes_by_observation(system.constrained());
    let per_obs = (params.samples / 10 / geo.len().max(1)).max(1);
    let r = params.box_radius;
    for (&o, g) in &geo {
        let Some(modes) = by_obs.get(&o) else { continue };
        for i in 0..=per_obs {
            let (e1, e2) = if i == 0 {
                (DVector::zeros(nu), DVector::zeros(nu))
            } else {
                let radius = g.rho * rng.random_range(0.0f64..=1.0).powf(1.0 / p_out as f64);
                let target = unit_direction(&mut rng, p_out) * radius;
                let scale = 10f64.powf(rng.random_range(-3.0..=0.0)) * r;
                let mut e1 = uniform_box(&mut rng, nu, scale);
                e1 += &g.c_pinv * (target - cmat * &e1);
                (e1, uniform_box(&mut rng, nu, scale))
            };
            let zeta = zeta_from_errors(system, &g.xi_o, &e1, &e2);
            for &chi in modes {
                if system.guard_gap(chi, &zeta) > 1e-12 {
                    continue;
                }
                let v_h = cert.v_h(system, chi, &zeta);
                let in_o = system.in_recurrent_set(chi, &zeta);
                let bound = if in_o { 2.0 * v_h + cert.mu_h(system, chi, &zeta) } else { 2.0 * v_h };
                let Ok(posts) = system.constrained().jump_map(chi) else { continue };
                for post in posts {
                    let v_plus = cert.v_h(system, post, &zeta);
                    let margin = bound - v_plus;
                    tally.record(margin, bound.abs() + v_plus.abs(), || Witness {
                        chi,
                        post: Some(post),
                        zeta: zeta.iter().copied().collect(),
                        margin,
                    });
                }
            }
        }
    }
    tally.finish()
}

fn modes_by_observation(ca: &ConstrainedAutomaton) -> BTreeMap<usize, Vec<AutomatonState>> {
    let mut out: BTreeMap<usize, Vec<AutomatonState>> = BTreeMap::new();
    for &chi in ca.jump_set() {
        out.entry(chi.o).or_default().push(chi);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestrictedTimeResult {
    pub passed: bool,
    pub d_max: u32,
    /// Longest jump sequence of the discrete constrained automaton before
    /// reaching an accepting mode, over all of its jump set.
    pub discrete_max_jumps: usize,
    /// Most jumps on any enumerated run of the restricted hybrid system.
    pub max_jumps: usize,
    pub runs: usize,
    /// `(d_max + 1) − max_jumps`.
    pub margin: i64,
    /// Smallest `M − γ(t+j) − λc t − λd j` over `j ≤ d_max` and a time grid.
    pub algebraic_min_slack: f64,
}

/// The restriction to the complement of the recurrent set can jump at
/// most `d_max` times, and with that many jumps
/// `λc t + λd j ≤ M − γ(t + j)` holds for every `t ≥ 0`.
///
/// Hybrid runs are enumerated exhaustively from each start point paired
/// with every mode of the jump set, to depth `d_max + 2` so that an
/// excess jump would be seen.
pub fn check_restricted_time_condition(
    system: &HybridSystem,
    cert: &Certificate,
    sim: &SimParams,
    starts: &[HybridState],
) -> Result<RestrictedTimeResult, CertifyError> {
    let ca = system.constrained();
    let d_max = ca.d_max();
    let discrete = discrete_restricted_depth(ca);

    let restricted = system.restrict_outside_recurrent_set();
    let depth = (d_max as usize + 2).min(crate::hybrid_sim::MAX_ENUMERATION_DEPTH);
    let mut max_jumps = 0;
    let mut runs = 0;
    let mut exceeded = false;
    for start in starts {
        for &chi in ca.jump_set() {
            let x0 = HybridState::new(chi, start.zeta.clone());
            let tree = match restricted.enumerate_runs(&x0, depth, sim) {
                Ok(t) => t,
                Err(SimError::InitialStateOutsideDomain(_)) => continue,
                Err(e) => return Err(e.into()),
            };
            for leaf in tree.leaves() {
                runs += 1;
                max_jumps = max_jumps.max(leaf.jump_count());
                if leaf.termination == Termination::JumpLimit {
                    exceeded = true;
                }
            }
        }
    }

    let c = &cert.constants;
    let mut slack = f64::INFINITY;
    let mut algebraic_ok = true;
    for j in 0..=d_max {
        for t in [0.0, 1e-3, 1.0, 10.0, 1e3, 1e6, 1e9] {
            let jf = f64::from(j);
            let s = c.m - c.gamma * (t + jf) - c.lambda_c * t - c.lambda_d * jf;
            let tol = 1e-9 * (1.0 + c.m + c.gamma * t + c.lambda_c.abs() * t);
            if s < -tol {
                algebraic_ok = false;
            }
            slack = slack.min(s);
        }
    }

    let bound = d_max as usize;
    let passed = discrete <= bound && max_jumps <= bound && !exceeded && algebraic_ok;
    Ok(RestrictedTimeResult {
        passed,
        d_max,
        discrete_max_jumps: discrete,
        max_jumps,
        runs,
        margin: i64::from(d_max) + 1 - max_jumps as i64,
        algebraic_min_slack: slack,
    })
}

/// Longest path in the constrained jump graph from any mode until an
/// accepting-lattice mode; `usize::MAX` on a cycle that avoids it.
fn discrete_restricted_depth(ca: &ConstrainedAutomaton) -> usize {
    fn longest(
        ca: &ConstrainedAutomaton,
        chi: AutomatonState,
        memo: &mut BTreeMap<AutomatonState, usize>,
        on_stack: &mut Vec<AutomatonState>,
    ) -> usize {
        if ca.in_recurrent_set_ba(chi) {
            return 0;
        }
        if let Some(&v) = memo.get(&chi) {
            return v;
        }
        if on_stack.contains(&chi) {
            return usize::MAX;
        }
        on_stack.push(chi);
        let mut best = 0usize;
        for post in ca.jump_map(chi).unwrap_or_default() {
            best = best.max(longest(ca, post, memo, on_stack).saturating_add(1));
        }
        on_stack.pop();
        memo.insert(chi, best);
        best
    }
    let mut memo = BTreeMap::new();
    let mut stack = Vec::new();
    ca.jump_set().iter().map(|&chi| longest(ca, chi, &mut memo, &mut stack)).max().unwrap_or(0)
}
