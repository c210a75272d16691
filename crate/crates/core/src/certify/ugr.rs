//! Hitting-time bound for the recurrent set and the empirical sweep that
//! checks it.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{Certificate, CertifyError};
use crate::hybrid_sim::{BranchPolicy, HybridArc, HybridState, HybridSystem, SimError, SimParams, Termination};
use crate::linalg;

/// Largest decoupled block whose vertices are enumerated.
const MAX_VERTEX_BLOCK: usize = 20;

/// How the estimate ranges over the compact set `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorBox {
    /// `ξ̂ = ξ`, as for simulations started with a perfect estimate.
    Tied,
    /// `ξ̂` ranges over the same box as `ξ`.
    Independent,
}

/// `K = [−a, a]^ν` for `ξ`, and the estimate as selected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KBox {
    pub half_width: f64,
    pub estimator: EstimatorBox,
}

impl KBox {
    pub fn cube(half_width: f64, estimator: EstimatorBox) -> Self {
        Self { half_width, estimator }
    }

    pub fn contains(&self, system: &HybridSystem, zeta: &DVector<f64>) -> bool {
        let nu = system.closed_loop().nu();
        let a = self.half_width;
        let inside = |v: f64| (-a..=a).contains(&v);
        match self.estimator {
            EstimatorBox::Tied => {
                zeta.rows(0, nu).iter().all(|&v| inside(v))
                    && zeta.rows(0, nu).iter().zip(zeta.rows(nu, nu).iter()).all(|(x, y)| x == y)
            }
            EstimatorBox::Independent => zeta.iter().all(|&v| inside(v)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UgrBound {
    /// `max V_H` over `D^C × K`.
    pub v_u: f64,
    /// `min(1, λw_min)`, a lower bound of `V_H` off the recurrent set.
    pub v_l: f64,
    /// `(M + ln V_u − ln V_l)/γ`.
    pub t_hat: f64,
    pub k_half_width: f64,
}

/// Exact maximum of `(Tv − c)ᵀP(Tv − c)` over `v ∈ [−a, a]^n`: the Hessian
/// splits into decoupled blocks and a convex quadratic attains its maximum
/// at a vertex of each block's sub-box. Entries negligible against the
/// largest one are dropped and bounded separately.
fn max_quadratic_on_box(h: &DMatrix<f64>, b: &DVector<f64>, k: f64, a: f64) -> Result<f64, CertifyError> {
    let n = h.nrows();
    let scale = h.amax();
    let cut = 1e-12 * scale;
    let mut sparse = h.clone();
    let mut dropped = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && sparse[(i, j)].abs() <= cut {
                dropped += sparse[(i, j)].abs();
                sparse[(i, j)] = 0.0;
            }
        }
    }
    let mut total = k + dropped * a * a;
    for block in linalg::decoupled_blocks(&sparse) {
        if block.len() > MAX_VERTEX_BLOCK {
            return Err(CertifyError::Degenerate(format!(
                "coupled block of size {} is too large for vertex enumeration",
                block.len()
            )));
        }
        let hb = linalg::submatrix(&sparse, &block, &block);
        let bb = DVector::from_fn(block.len(), |i, _| b[block[i]]);
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1u32 << block.len()) {
            let v = DVector::from_fn(block.len(), |i, _| if mask >> i & 1 == 1 { a } else { -a });
            best = best.max(linalg::quad_form(&hb, &v) - 2.0 * bb.dot(&v));
        }
        total += best;
    }
    Ok(total)
}

/// Maximum of `W(·, o)` over `K`.
pub(crate) fn w_max_on_box(system: &HybridSystem, cert: &Certificate, o: usize, kbox: &KBox) -> Result<f64, CertifyError> {
    let nu = system.closed_loop().nu();
    let xi_o = &system.closed_loop().setpoints[&o].xi;
    // ζ̃ = T v − c with c = (ξ_o, 0).
    let t = match kbox.estimator {
        EstimatorBox::Tied => {
            let mut t = DMatrix::zeros(2 * nu, nu);
            t.view_mut((0, 0), (nu, nu)).fill_with_identity();
            t
        }
        EstimatorBox::Independent => {
            let mut t = DMatrix::zeros(2 * nu, 2 * nu);
            t.view_mut((0, 0), (nu, nu)).fill_with_identity();
            t.view_mut((nu, 0), (nu, nu)).fill_with_identity();
            t.view_mut((nu, nu), (nu, nu)).copy_from(&-DMatrix::<f64>::identity(nu, nu));
            t
        }
    };
    let mut c = DVector::zeros(2 * nu);
    c.rows_mut(0, nu).copy_from(xi_o);
    let h = t.transpose() * &cert.p * &t;
    let h = (&h + h.transpose()) * 0.5;
    let b = t.transpose() * (&cert.p * &c);
    let k = linalg::quad_form(&cert.p, &c);
    max_quadratic_on_box(&h, &b, k, kbox.half_width)
}

/// `T̂` for initial conditions in `D^C × K`.
pub fn predicted_ugr_bound(system: &HybridSystem, cert: &Certificate, kbox: &KBox) -> Result<UgrBound, CertifyError> {
    if !(kbox.half_width > 0.0 && kbox.half_width.is_finite()) {
        return Err(CertifyError::Degenerate("K must have a positive finite half-width".into()));
    }
    let ca = system.constrained();
    let lambda = cert.lambda();
    let mut v_u = f64::NEG_INFINITY;
    for &o in system.regions().keys() {
        let Some(d) = ca.jump_set().iter().filter(|chi| chi.o == o).map(|&chi| ca.v_ba(chi)).max() else {
            continue;
        };
        v_u = v_u.max(f64::from(d) + lambda * w_max_on_box(system, cert, o, kbox)?);
    }
    let c = &cert.constants;
    let v_l = (lambda * c.w_min).min(1.0);
    let v_u = v_u.max(v_l);
    let t_hat = (c.m + v_u.ln() - v_l.ln()) / c.gamma;
    Ok(UgrBound { v_u, v_l, t_hat, k_half_width: kbox.half_width })
}

/// Visits of an arc to the recurrent set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Visits {
    /// `(t, j)` of the first sample in the recurrent set.
    pub first_hit: Option<(f64, usize)>,
    /// Every jump index whose interval holds a sample in the set.
    pub intervals: Vec<usize>,
    /// Largest gap between consecutive visited intervals.
    pub max_separation: usize,
}

impl Visits {
    pub fn hitting_time(&self) -> Option<f64> {
        self.first_hit.map(|(t, j)| t + j as f64)
    }
}

pub fn visits(system: &HybridSystem, arc: &HybridArc) -> Visits {
    let mut first_hit = None;
    let mut intervals: Vec<usize> = Vec::new();
    for (t, j, chi, zeta) in arc.points() {
        if system.in_recurrent_set(chi, zeta) {
            first_hit.get_or_insert((t, j));
            if intervals.last() != Some(&j) {
                intervals.push(j);
            }
        }
    }
    let max_separation = intervals.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);
    Visits { first_hit, intervals, max_separation }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArcOutcome {
    pub start: usize,
    pub policy: String,
    pub jumps: usize,
    pub termination: Termination,
    pub hitting_time: Option<f64>,
    pub visits: Visits,
    /// Neither reached the recurrent set nor stopped at the jump limit.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UgrReport {
    pub arcs: Vec<ArcOutcome>,
    pub max_hitting_time: f64,
    pub t_hat: f64,
    pub all_hit: bool,
    pub within_bound: bool,
    pub min_visits: usize,
    pub fewest_visits: usize,
    pub min_visits_ok: bool,
    pub max_separation: usize,
    pub separation_bound: usize,
    pub separations_ok: bool,
    pub flagged: Vec<usize>,
}

impl UgrReport {
    pub fn passed(&self) -> bool {
        self.all_hit && self.within_bound && self.min_visits_ok && self.separations_ok && self.flagged.is_empty()
    }
}

/// Simulates every start under every policy (in parallel) and compares
/// the hitting times with `t_hat`.
pub fn empirical_ugr(
    system: &HybridSystem,
    starts: &[HybridState],
    policies: &[BranchPolicy],
    sim: &SimParams,
    min_visits: usize,
    t_hat: f64,
) -> Result<UgrReport, SimError> {
    let jobs: Vec<(usize, &BranchPolicy)> =
        (0..starts.len()).flat_map(|i| policies.iter().map(move |p| (i, p))).collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ArcOutcome, SimError>>>> = Mutex::new(vec![None; jobs.len()]);
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(start, policy)) = jobs.get(idx) else { break };
                let out = system.simulate(&starts[start], policy, sim).map(|arc| {
                    let v = visits(system, &arc);
                    ArcOutcome {
                        start,
                        policy: policy.to_string(),
                        jumps: arc.jump_count(),
                        termination: arc.termination,
                        hitting_time: v.hitting_time(),
                        flagged: v.first_hit.is_none() && arc.termination != Termination::JumpLimit,
                        visits: v,
                    }
                });
                results.lock().expect("worker panicked")[idx] = Some(out);
            });
        }
    });
    let arcs = results
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<Result<Vec<_>, _>>()?;

    let separation_bound = system.constrained().d_max() as usize + 1;
    let max_hitting_time = arcs.iter().filter_map(|a| a.hitting_time).fold(0.0, f64::max);
    let all_hit = arcs.iter().all(|a| a.hitting_time.is_some());
    let fewest_visits = arcs.iter().map(|a| a.visits.intervals.len()).min().unwrap_or(0);
    let max_separation = arcs.iter().map(|a| a.visits.max_separation).max().unwrap_or(0);
    let flagged = arcs.iter().enumerate().filter(|(_, a)| a.flagged).map(|(i, _)| i).collect();
    Ok(UgrReport {
        max_hitting_time,
        t_hat,
        all_hit,
        within_bound: all_hit && max_hitting_time <= t_hat,
        min_visits,
        fewest_visits,
        min_visits_ok: fewest_visits >= min_visits,
        max_separation,
        separation_bound,
        separations_ok: max_separation <= separation_bound,
        flagged,
        arcs,
    })
}
