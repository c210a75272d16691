//! Exact propagation of affine flows `ζ̇ = Fζ + g` and detection of the
//! first entry into a Euclidean output ball.

use nalgebra::{DMatrix, DVector};

use super::SimError;

/// `e^{M h}` by scaling and squaring with a degree-13 Padé approximant.
pub fn matrix_exponential(m: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>, SimError> {
    if !(h >= 0.0) {
        return Err(SimError::NegativeStep(h));
    }
    let e = (m * h).exp();
    if e.iter().all(|x| x.is_finite()) {
        Ok(e)
    } else {
        Err(SimError::NonFinite)
    }
}

/// An affine vector field `Fζ + g`, stored as the augmented generator
/// `[[F, g], [0, 0]]` acting on `(ζ, 1)`.
#[derive(Debug, Clone)]
pub struct AffineFlow {
    dim: usize,
    augmented: DMatrix<f64>,
}

impl AffineFlow {
    pub fn new(f: &DMatrix<f64>, g: &DVector<f64>) -> Self {
        let n = f.nrows();
        assert!(f.is_square() && g.len() == n, "affine flow dimension mismatch");
        let mut augmented = DMatrix::zeros(n + 1, n + 1);
        augmented.view_mut((0, 0), (n, n)).copy_from(f);
        augmented.view_mut((0, n), (n, 1)).copy_from(g);
        Self { dim: n, augmented }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Transition matrix of the augmented system over a step `h`.
    pub fn transition(&self, h: f64) -> Result<DMatrix<f64>, SimError> {
        matrix_exponential(&self.augmented, h)
    }

    pub fn apply(&self, transition: &DMatrix<f64>, zeta: &DVector<f64>) -> DVector<f64> {
        let n = self.dim;
        let mut z = transition.view((0, 0), (n, n)) * zeta;
        z += transition.view((0, n), (n, 1));
        z
    }

    /// `ζ(h)` from `ζ(0) = zeta`.
    pub fn propagate(&self, zeta: &DVector<f64>, h: f64) -> Result<DVector<f64>, SimError> {
        Ok(self.apply(&self.transition(h)?, zeta))
    }
}

/// Scalar `φ(ζ) = ‖Hζ − y_o‖₂ − ρ_o` whose nonpositive set is the jump set.
#[derive(Debug, Clone)]
pub struct BallGuard {
    pub output: DMatrix<f64>,
    pub center: DVector<f64>,
    pub radius: f64,
}

impl BallGuard {
    pub fn gap(&self, zeta: &DVector<f64>) -> f64 {
        (&self.output * zeta - &self.center).norm() - self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSettings {
    pub h_step: f64,
    pub event_tol: f64,
    pub horizon: f64,
}

pub(crate) enum ScanOutcome {
    /// Entered the ball at offset `t` (relative to the scan start).
    Event { t: f64, zeta: DVector<f64> },
    /// Reached the horizon without entering.
    Exhausted,
    /// The sample callback refused a sample.
    Stopped,
}

/// Fixed-step scan for the first sign change of the guard followed by
/// bisection. Every accepted sample, including the event point, is passed
/// to `on_sample`, which may stop the scan by returning `false`.
pub(crate) fn scan_flow(
    flow: &AffineFlow,
    step: &DMatrix<f64>,
    guard: &BallGuard,
    zeta0: &DVector<f64>,
    settings: ScanSettings,
    mut on_sample: impl FnMut(f64, &DVector<f64>) -> bool,
) -> Result<ScanOutcome, SimError> {
    if guard.gap(zeta0) <= 0.0 {
        return Ok(ScanOutcome::Event { t: 0.0, zeta: zeta0.clone() });
    }
    let mut t = 0.0;
    let mut z = zeta0.clone();
    loop {
        let remaining = settings.horizon - t;
        if remaining <= 0.0 {
            return Ok(ScanOutcome::Exhausted);
        }
        let (h, z_next) = if remaining < settings.h_step {
            (remaining, flow.propagate(&z, remaining)?)
        } else {
            (settings.h_step, flow.apply(step, &z))
        };
        if !z_next.iter().all(|x| x.is_finite()) {
            return Err(SimError::NonFinite);
        }
        if guard.gap(&z_next) <= 0.0 {
            let (tau, z_event) = bisect(flow, guard, &z, h, settings.event_tol)?;
            let te = t + tau;
            if !on_sample(te, &z_event) {
                return Ok(ScanOutcome::Stopped);
            }
            return Ok(ScanOutcome::Event { t: te, zeta: z_event });
        }
        t = if remaining < settings.h_step { settings.horizon } else { t + h };
        z = z_next;
        if !on_sample(t, &z) {
            return Ok(ScanOutcome::Stopped);
        }
    }
}

/// Given `gap(z) > 0` and `gap(z(h)) ≤ 0`, localizes the crossing and
/// returns the point on the jump side.
///
/// Illinois regula falsi on the bracket, with a bisection step whenever the
/// bracket fails to halve. Stops once the jump-side gap is within rounding
/// of zero or the bracket is narrower than `event_tol`.
fn bisect(
    flow: &AffineFlow,
    guard: &BallGuard,
    z: &DVector<f64>,
    h: f64,
    event_tol: f64,
) -> Result<(f64, DVector<f64>), SimError> {
    let (mut lo, mut hi) = (0.0, h);
    let mut z_hi = flow.propagate(z, hi)?;
    let (mut f_lo, mut g_hi) = (guard.gap(z), guard.gap(&z_hi));
    let mut f_hi = g_hi;
    let scale = guard.radius.max(1.0) * 1e-13;
    let mut side = 0i8;
    for _ in 0..200 {
        if g_hi >= -scale || hi - lo <= event_tol {
            break;
        }
        let width = hi - lo;
        let mut mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(mid > lo && mid < hi) {
            mid = 0.5 * (lo + hi);
        }
        let z_mid = flow.propagate(z, mid)?;
        let g_mid = guard.gap(&z_mid);
        if g_mid <= 0.0 {
            hi = mid;
            z_hi = z_mid;
            g_hi = g_mid;
            f_hi = g_mid;
            if side == -1 {
                f_lo *= 0.5;
            }
            side = -1;
        } else {
            lo = mid;
            f_lo = g_mid;
            if side == 1 {
                f_hi *= 0.5;
            }
            side = 1;
        }
        if hi - lo > 0.5 * width {
            // Safeguard: follow up with a plain bisection step.
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let z_mid = flow.propagate(z, mid)?;
            let g_mid = guard.gap(&z_mid);
            if g_mid <= 0.0 {
                hi = mid;
                z_hi = z_mid;
                g_hi = g_mid;
                f_hi = g_mid;
            } else {
                lo = mid;
                f_lo = g_mid;
            }
            side = 0;
        }
    }
    Ok((hi, z_hi))
}

/// Time until the output `Hζ(t)` first enters `𝔹(y_o, ρ_o)`, scanning
/// `[0, horizon]` in steps of `h_step`; `None` if it never does.
pub fn detect_jump_entry(
    flow: &AffineFlow,
    guard: &BallGuard,
    zeta: &DVector<f64>,
    settings: ScanSettings,
) -> Result<Option<f64>, SimError> {
    let step = flow.transition(settings.h_step)?;
    Ok(match scan_flow(flow, &step, guard, zeta, settings, |_, _| true)? {
        ScanOutcome::Event { t, .. } => Some(t),
        ScanOutcome::Exhausted | ScanOutcome::Stopped => None,
    })
}
