//! The scalar constants behind `V_H = V_BA + λW` and its decrease rates.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::CertifyError;
use crate::linalg;

/// `(min_o ρ_o²) / λ_max(C S⁻¹ Cᵀ)` with `S` the Schur complement of the
/// estimator-error block of `P`: the minimum of `ζ̃ᵀPζ̃` over
/// `‖C(ξ − ξ_o)‖₂ ≥ ρ_o` with the estimator error free.
pub fn w_min(p: &DMatrix<f64>, c: &DMatrix<f64>, rhos: &[f64]) -> Result<f64, CertifyError> {
    let nu = c.ncols();
    assert_eq!(p.shape(), (2 * nu, 2 * nu), "P must be 2ν × 2ν");
    let paa = p.view((0, 0), (nu, nu));
    let pab = p.view((0, nu), (nu, nu));
    let pbb = p.view((nu, nu), (nu, nu)).into_owned();
    let pbb_inv = pbb.try_inverse().ok_or(CertifyError::Singular("P_bb"))?;
    let s = paa - pab * pbb_inv * pab.transpose();
    let s_inv = s.try_inverse().ok_or(CertifyError::Singular("Schur complement"))?;
    let m = c * s_inv * c.transpose();
    let (_, lmax) = linalg::sym_eig_range(&((&m + m.transpose()) * 0.5));
    let rho_min = rhos.iter().copied().fold(f64::INFINITY, f64::min);
    if !(rho_min > 0.0 && rho_min.is_finite()) {
        return Err(CertifyError::Degenerate("jump radii must be positive".into()));
    }
    Ok(rho_min * rho_min / lmax)
}

/// `max_{o,o′} (ξ_o − ξ_{o′})ᵀ P_aa (ξ_o − ξ_{o′})`.
pub fn j1(p: &DMatrix<f64>, setpoints: &[DVector<f64>]) -> Result<f64, CertifyError> {
    if setpoints.len() < 2 {
        return Err(CertifyError::Degenerate("J1 needs at least two observations".into()));
    }
    let nu = setpoints[0].len();
    let paa = p.view((0, 0), (nu, nu)).into_owned();
    let mut best = 0.0f64;
    for a in setpoints {
        for b in setpoints {
            best = best.max(linalg::quad_form(&paa, &(a - b)));
        }
    }
    if best <= 0.0 {
        return Err(CertifyError::Degenerate("two observations share a setpoint (J1 = 0)".into()));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaLambda {
    pub theta_min: f64,
    pub theta: f64,
    /// Open interval of admissible `λ`.
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub lambda: f64,
}

/// `θ` halfway between `θ_min = dJ₁/(dJ₁ + w)` and 1, then `λ` at the
/// geometric mean of `((1−θ)/θ · d/w, 1/J₁)`. With `d_max = 0` the lower
/// end is 0 and `λ` is half the upper end.
pub fn select_theta_lambda(d_max: u32, w_min: f64, j1: f64) -> ThetaLambda {
    assert!(w_min > 0.0 && j1 > 0.0, "w_min and J1 must be positive");
    let d = f64::from(d_max);
    let theta_min = d * j1 / (d * j1 + w_min);
    let theta = 0.5 * (1.0 + theta_min);
    let lambda_lo = (1.0 - theta) / theta * d / w_min;
    let lambda_hi = 1.0 / j1;
    let lambda = if d_max == 0 { 0.5 * lambda_hi } else { (lambda_lo * lambda_hi).sqrt() };
    assert!(lambda_lo < lambda && lambda < lambda_hi, "λ not interior to ({lambda_lo}, {lambda_hi})");
    ThetaLambda { theta_min, theta, lambda_lo, lambda_hi, lambda }
}

/// Every constant of the certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    pub d_max: u32,
    pub mu_ba: u32,
    pub w_min: f64,
    pub j1: f64,
    pub lambda_prime: f64,
    #[serde(flatten)]
    pub theta_lambda: ThetaLambda,
    pub lambda_c: f64,
    pub lambda_d: f64,
    pub m: f64,
    pub gamma: f64,
}

impl Constants {
    pub fn new(d_max: u32, w_min: f64, j1: f64, p: &DMatrix<f64>, q: &DMatrix<f64>) -> Self {
        let (q_min, _) = linalg::sym_eig_range(q);
        let (_, p_max) = linalg::sym_eig_range(p);
        let lambda_prime = q_min / p_max;
        let tl = select_theta_lambda(d_max, w_min, j1);
        let lambda_c = -lambda_prime * (1.0 - tl.theta);
        let lambda_d = std::f64::consts::LN_2;
        let m = (lambda_d - lambda_c) * f64::from(d_max);
        Self {
            d_max,
            mu_ba: 1 + d_max,
            w_min,
            j1,
            lambda_prime,
            theta_lambda: tl,
            lambda_c,
            lambda_d,
            m,
            gamma: -lambda_c,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.theta_lambda.lambda
    }

    pub fn theta(&self) -> f64 {
        self.theta_lambda.theta
    }

    /// Sign and interval conditions; empty when all hold.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let tl = &self.theta_lambda;
        let mut need = |ok: bool, what: &str| {
            if !ok {
                out.push(what.to_string());
            }
        };
        need(self.w_min > 0.0, "w_min > 0");
        need(self.j1 > 0.0, "J1 > 0");
        need(self.lambda_prime > 0.0, "lambda' > 0");
        need(tl.theta > 0.0 && tl.theta < 1.0, "0 < theta < 1");
        need(tl.theta > tl.theta_min, "theta > theta_min");
        need(tl.lambda_lo < tl.lambda && tl.lambda < tl.lambda_hi, "lambda inside its interval");
        need(self.lambda_c < 0.0, "lambda_c < 0");
        need(self.lambda_d == std::f64::consts::LN_2, "lambda_d = ln 2");
        need(self.m > 0.0 || self.d_max == 0, "M > 0");
        need(self.gamma > 0.0, "gamma > 0");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_lambda_by_hand() {
        let tl = select_theta_lambda(1, 1.0, 1.0);
        assert!((tl.theta_min - 0.5).abs() < 1e-15);
        assert!((tl.theta - 0.75).abs() < 1e-15);
        assert!((tl.lambda_lo - 1.0 / 3.0).abs() < 1e-15);
        assert!((tl.lambda_hi - 1.0).abs() < 1e-15);
        assert!((tl.lambda - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn large_w_min_limit() {
        let tl = select_theta_lambda(3, 1e12, 1.0);
        assert!(tl.theta_min < 1e-11);
        assert!((tl.theta - 0.5).abs() < 1e-11);
        assert!(tl.lambda_lo < 1e-11);
    }

    #[test]
    fn identity_quadratic() {
        let p = DMatrix::identity(2, 2);
        let c = DMatrix::from_element(1, 1, 1.0);
        assert!((w_min(&p, &c, &[0.5, 0.3]).unwrap() - 0.09).abs() < 1e-15);
        let sp = [DVector::from_element(1, 0.0), DVector::from_element(1, 2.0)];
        assert_eq!(j1(&p, &sp).unwrap(), 4.0);
        assert!(j1(&p, &sp[..1]).is_err());
        assert!(j1(&p, &[sp[0].clone(), sp[0].clone()]).is_err());
    }

    #[test]
    fn scalar_loop_schur() {
        // P for F̃ = [[−1, 1], [0, −1]]: S = 1/2 − (1/4)²/(3/4) = 5/12.
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.25, 0.75]);
        let c = DMatrix::from_element(1, 1, 1.0);
        let w = w_min(&p, &c, &[0.27]).unwrap();
        assert!((w - 0.27 * 0.27 * 5.0 / 12.0).abs() < 1e-15);
    }
}
