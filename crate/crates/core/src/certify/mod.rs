//! Recurrence certificate for the closed-loop hybrid system.
//!
//! `V_H(χ, ζ) = d(s) + λ ζ̃ᵀPζ̃` decreases at rate `λc < 0` during flow,
//! grows at most by the factor `e^{λd} = 2` across jumps away from the
//! recurrent set, and the restriction to the complement of that set can
//! jump at most `d_max` times. The checks below sample the flow and jump
//! sets and enumerate restricted runs to catch implementation errors; the
//! inequalities themselves hold by construction.

mod checks;
mod constants;
mod ugr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constrain::AutomatonState;
use crate::hybrid_sim::{HybridSystem, SimError};
use crate::linalg;

pub use checks::{
    check_flow_condition, check_jump_condition, check_restricted_time_condition, CheckResult, RestrictedTimeResult,
    Witness,
};
pub use constants::{j1, select_theta_lambda, w_min, Constants, ThetaLambda};
pub use ugr::{
    empirical_ugr, predicted_ugr_bound, visits, ArcOutcome, EstimatorBox, KBox, UgrBound, UgrReport, Visits,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("{0} is singular")]
    Singular(&'static str),
    #[error("degenerate certificate data: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Sampling knobs for the certificate checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyParams {
    /// Flow-set samples in total; the jump check uses a tenth of this.
    pub samples: usize,
    /// Half-width of the sampling box around each setpoint.
    pub box_radius: f64,
    /// Half-width of the compact set `K` for the hitting-time bound.
    pub k_box: f64,
    pub seed: u64,
}

impl Default for CertifyParams {
    fn default() -> Self {
        Self { samples: 100_000, box_radius: 10.0, k_box: 2.0, seed: 0 }
    }
}

/// The certificate: `P`, `Q` and every constant, bound to one system.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub constants: Constants,
}

impl Certificate {
    pub fn compute(system: &HybridSystem) -> Result<Self, CertifyError> {
        let cl = system.closed_loop();
        let rhos: Vec<f64> = system.regions().values().map(|r| r.jump_radius).collect();
        let w = w_min(&cl.p, &cl.plant.c, &rhos)?;
        let setpoints: Vec<DVector<f64>> = cl.setpoints.values().map(|sp| sp.xi.clone()).collect();
        let j = j1(&cl.p, &setpoints)?;
        let constants = Constants::new(system.constrained().d_max(), w, j, &cl.p, &cl.q);
        Ok(Self { p: cl.p.clone(), q: cl.q.clone(), constants })
    }

    pub fn lambda(&self) -> f64 {
        self.constants.lambda()
    }

    /// `W(ζ, o) = ζ̃ᵀPζ̃`.
    pub fn w(&self, system: &HybridSystem, o: usize, zeta: &DVector<f64>) -> f64 {
        linalg::quad_form(&self.p, &system.closed_loop().error_coordinates(zeta, o))
    }

    /// `V_H = d(s) + λW(ζ, o)`.
    pub fn v_h(&self, system: &HybridSystem, chi: AutomatonState, zeta: &DVector<f64>) -> f64 {
        f64::from(system.constrained().v_ba(chi)) + self.lambda() * self.w(system, chi.o, zeta)
    }

    /// `μ_H = d_max + λ(2W + 2J₁)` at the given point.
    pub fn mu_h(&self, system: &HybridSystem, chi: AutomatonState, zeta: &DVector<f64>) -> f64 {
        let c = &self.constants;
        f64::from(c.d_max) + self.lambda() * (2.0 * self.w(system, chi.o, zeta) + 2.0 * c.j1)
    }

    /// `⟨∇V_H, f_H⟩` computed from the physical vector field `Fζ + g_o`.
    pub fn flow_derivative(&self, system: &HybridSystem, chi: AutomatonState, zeta: &DVector<f64>) -> f64 {
        let cl = system.closed_loop();
        let nu = cl.nu();
        let e = cl.error_coordinates(zeta, chi.o);
        let f = cl.vector_field(zeta, chi.o);
        // ζ̃ = (ξ − ξ_o, ξ − ξ̂) so dζ̃/dt = (ξ̇, ξ̇ − ξ̂̇).
        let mut de = DVector::zeros(2 * nu);
        de.rows_mut(0, nu).copy_from(&f.rows(0, nu));
        de.rows_mut(nu, nu).copy_from(&(f.rows(0, nu) - f.rows(nu, nu)));
        2.0 * self.lambda() * e.dot(&(&self.p * de))
    }

    /// The same derivative through the Lyapunov identity: `−λζ̃ᵀQζ̃`.
    pub fn flow_derivative_identity(&self, system: &HybridSystem, chi: AutomatonState, zeta: &DVector<f64>) -> f64 {
        let e = system.closed_loop().error_coordinates(zeta, chi.o);
        -self.lambda() * linalg::quad_form(&self.q, &e)
    }
}

/// Everything the `certify` command reports.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub scenario: String,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub constants: Constants,
    pub constant_violations: Vec<String>,
    pub flow: CheckResult,
    pub jump: CheckResult,
    pub restricted_time: RestrictedTimeResult,
    pub ugr_bound: UgrBound,
    pub passed: bool,
}

impl CertificateReport {
    /// Computes the certificate and runs every check.
    pub fn run(name: &str, system: &HybridSystem, params: &CertifyParams, sim: &crate::hybrid_sim::SimParams, starts: &[crate::hybrid_sim::HybridState]) -> Result<Self, CertifyError> {
        let cert = Certificate::compute(system)?;
        let flow = check_flow_condition(system, &cert, params);
        let jump = check_jump_condition(system, &cert, params);
        let restricted_time = check_restricted_time_condition(system, &cert, sim, starts)?;
        let ugr_bound = predicted_ugr_bound(system, &cert, &KBox::cube(params.k_box, EstimatorBox::Tied))?;
        let constant_violations = cert.constants.violations();
        let passed = constant_violations.is_empty() && flow.passed && jump.passed && restricted_time.passed;
        Ok(Self {
            scenario: name.to_string(),
            p: linalg::to_rows(&cert.p),
            q: linalg::to_rows(&cert.q),
            constants: cert.constants,
            constant_violations,
            flow,
            jump,
            restricted_time,
            ugr_bound,
            passed,
        })
    }

    /// Fixed-width summary table.
    pub fn summary(&self) -> String {
        let c = &self.constants;
        let tl = &c.theta_lambda;
        let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let mut s = String::new();
        s.push_str(&format!("certificate for {}\n", self.scenario));
        s.push_str(&format!("  d_max      {}\n", c.d_max));
        s.push_str(&format!("  w_min      {:.6e}\n", c.w_min));
        s.push_str(&format!("  J1         {:.6e}\n", c.j1));
        s.push_str(&format!("  lambda'    {:.6e}\n", c.lambda_prime));
        s.push_str(&format!("  theta      {:.9} (theta_min {:.9})\n", tl.theta, tl.theta_min));
        s.push_str(&format!("  lambda     {:.6e} in ({:.6e}, {:.6e})\n", tl.lambda, tl.lambda_lo, tl.lambda_hi));
        s.push_str(&format!("  lambda_c   {:.6e}\n", c.lambda_c));
        s.push_str(&format!("  lambda_d   {:.6}\n", c.lambda_d));
        s.push_str(&format!("  M          {:.6}\n", c.m));
        s.push_str(&format!("  gamma      {:.6e}\n", c.gamma));
        s.push_str(&format!("  V_u / V_l  {:.6e} / {:.6e}\n", self.ugr_bound.v_u, self.ugr_bound.v_l));
        s.push_str(&format!("  T_hat      {:.6e}\n", self.ugr_bound.t_hat));
        s.push_str(&format!(
            "  constants  {}{}\n",
            mark(self.constant_violations.is_empty()),
            if self.constant_violations.is_empty() { String::new() } else { format!(" ({})", self.constant_violations.join(", ")) }
        ));
        for (name, r) in [("flow", &self.flow), ("jump", &self.jump)] {
            s.push_str(&format!(
                "  {:<10} {} over {} samples, min margin {:.3e}\n",
                name,
                mark(r.passed),
                r.samples,
                r.min_margin
            ));
        }
        let rt = &self.restricted_time;
        s.push_str(&format!(
            "  restricted {} max jumps {} <= d_max {} over {} runs, margin {}\n",
            mark(rt.passed),
            rt.max_jumps,
            rt.d_max,
            rt.runs,
            rt.margin
        ));
        s.push_str(&format!("  verdict    {}\n", mark(self.passed)));
        s
    }
}
