//! Linear plant `ξ̇ = Aξ + Bu, y = Cξ`, its setpoint targets, the
//! observer-based closed loop and its Lyapunov certificate.

mod lyapunov;
mod region;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::automaton::ObsId;
use crate::linalg;

pub use lyapunov::{lyapunov_residual, solve_lyapunov};
pub use region::{check_disjoint, Disjointness, Norm, Region, RegionBlock};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("plant dimensions inconsistent: {0}")]
    Dimension(String),
    #[error("steady-state system is singular")]
    SingularSteadyState,
    #[error("steady-state residual {0:e} exceeds tolerance")]
    SteadyStateResidual(f64),
    #[error("{matrix} is not Hurwitz: eigenvalue {eigenvalue}")]
    NotHurwitz { matrix: &'static str, eigenvalue: Complex<f64> },
    #[error("Lyapunov system is singular (closed loop not Hurwitz)")]
    SingularLyapunov,
    #[error("Lyapunov solution is not positive definite")]
    IndefiniteLyapunov,
    #[error("Lyapunov residual {0:e} exceeds tolerance")]
    LyapunovResidual(f64),
    #[error("region for o{observation}: {message}")]
    InvalidRegion { observation: ObsId, message: String },
    #[error("jump center of o{observation} is not inside its region")]
    CenterOutsideRegion { observation: ObsId },
    #[error("jump radius {rho} of o{observation} must lie in (0, {rho_max})")]
    JumpBallNotContained { observation: ObsId, rho: f64, rho_max: f64 },
    #[error("plant fails: {}", .0.join("; "))]
    Assumption(Vec<String>),
}

impl PlantError {
    /// Variant name, for machine-readable reports.
    pub fn code(&self) -> &'static str {
        match self {
            PlantError::Dimension(_) => "Dimension",
            PlantError::SingularSteadyState => "SingularSteadyState",
            PlantError::SteadyStateResidual(_) => "SteadyStateResidual",
            PlantError::NotHurwitz { .. } => "NotHurwitz",
            PlantError::SingularLyapunov => "SingularLyapunov",
            PlantError::IndefiniteLyapunov => "IndefiniteLyapunov",
            PlantError::LyapunovResidual(_) => "LyapunovResidual",
            PlantError::InvalidRegion { .. } => "InvalidRegion",
            PlantError::CenterOutsideRegion { .. } => "CenterOutsideRegion",
            PlantError::JumpBallNotContained { .. } => "JumpBallNotContained",
            PlantError::Assumption(_) => "Assumption",
        }
    }
}

/// Numerical thresholds for the plant checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Required `max Re λ ≤ −hurwitz`.
    pub hurwitz: f64,
    /// Relative singular-value cutoff for numerical rank.
    pub rank: f64,
    /// Largest accepted condition number of `[A B; C 0]`.
    pub condition: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { hurwitz: 1e-9, rank: 1e-10, condition: 1e12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

/// Outcome of the setpoint-control preconditions, one flag per condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assumption5Report {
    pub inputs_equal_outputs: bool,
    pub bordered_condition: f64,
    pub bordered_invertible: bool,
    pub controllability_rank: usize,
    pub controllable: bool,
    pub observability_rank: usize,
    pub observable: bool,
}

impl Assumption5Report {
    pub fn passed(&self) -> bool {
        self.inputs_equal_outputs && self.bordered_invertible && self.controllable && self.observable
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.inputs_equal_outputs {
            out.push("number of inputs differs from number of outputs".to_string());
        }
        if !self.bordered_invertible {
            out.push(format!("[A B; C 0] not invertible (cond {:e})", self.bordered_condition));
        }
        if !self.controllable {
            out.push(format!("(A,B) not controllable (rank {})", self.controllability_rank));
        }
        if !self.observable {
            out.push(format!("(A,C) not observable (rank {})", self.observability_rank));
        }
        out
    }
}

impl fmt::Display for Assumption5Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
        writeln!(f, "m = p                 {}", mark(self.inputs_equal_outputs))?;
        writeln!(
            f,
            "[A B; C 0] invertible {} (cond {:.3e})",
            mark(self.bordered_invertible),
            self.bordered_condition
        )?;
        writeln!(f, "(A,B) controllable    {} (rank {})", mark(self.controllable), self.controllability_rank)?;
        write!(f, "(A,C) observable      {} (rank {})", mark(self.observable), self.observability_rank)
    }
}

/// Steady-state pair `(ξ_o, u_o)` with `Aξ_o + Bu_o = 0`, `Cξ_o = y_o`.
#[derive(Debug, Clone, PartialEq)]
pub struct SetPoint {
    pub xi: DVector<f64>,
    pub u: DVector<f64>,
}

impl LinearPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self, PlantError> {
        let nu = a.nrows();
        if !a.is_square() {
            return Err(PlantError::Dimension(format!("A is {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != nu {
            return Err(PlantError::Dimension(format!("B has {} rows, expected {nu}", b.nrows())));
        }
        if c.ncols() != nu {
            return Err(PlantError::Dimension(format!("C has {} columns, expected {nu}", c.ncols())));
        }
        Ok(Self { a, b, c })
    }

    pub fn nu(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// `[A B; C 0]`.
    pub fn bordered(&self) -> DMatrix<f64> {
        let (nu, m, p) = (self.nu(), self.m(), self.p());
        let mut out = DMatrix::zeros(nu + p, nu + m);
        out.view_mut((0, 0), (nu, nu)).copy_from(&self.a);
        out.view_mut((0, nu), (nu, m)).copy_from(&self.b);
        out.view_mut((nu, 0), (p, nu)).copy_from(&self.c);
        out
    }

    /// `[B AB … A^{ν−1}B]`.
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let (nu, m) = (self.nu(), self.m());
        let mut out = DMatrix::zeros(nu, nu * m);
        let mut block = self.b.clone();
        for k in 0..nu {
            out.view_mut((0, k * m), (nu, m)).copy_from(&block);
            block = &self.a * block;
        }
        out
    }

    /// `[C; CA; …; CA^{ν−1}]`.
    pub fn observability_matrix(&self) -> DMatrix<f64> {
        let (nu, p) = (self.nu(), self.p());
        let mut out = DMatrix::zeros(nu * p, nu);
        let mut block = self.c.clone();
        for k in 0..nu {
            out.view_mut((k * p, 0), (p, nu)).copy_from(&block);
            block *= &self.a;
        }
        out
    }

    pub fn check_assumption5(&self, tol: &Tolerances) -> Assumption5Report {
        let inputs_equal_outputs = self.m() == self.p();
        let bordered_condition = linalg::condition_number(&self.bordered());
        let controllability_rank = linalg::numerical_rank(&self.controllability_matrix(), tol.rank);
        let observability_rank = linalg::numerical_rank(&self.observability_matrix(), tol.rank);
        Assumption5Report {
            inputs_equal_outputs,
            bordered_condition,
            bordered_invertible: inputs_equal_outputs && bordered_condition <= tol.condition,
            controllability_rank,
            controllable: controllability_rank == self.nu(),
            observability_rank,
            observable: observability_rank == self.nu(),
        }
    }

    /// Solves `[A B; C 0] (ξ_o, u_o) = (0, y_o)`.
    pub fn steady_state(&self, y: &DVector<f64>) -> Result<SetPoint, PlantError> {
        let (nu, m, p) = (self.nu(), self.m(), self.p());
        if m != p || y.len() != p {
            return Err(PlantError::Dimension(format!("target has length {}, p = {p}, m = {m}", y.len())));
        }
        let mut rhs = DVector::zeros(nu + p);
        rhs.rows_mut(nu, p).copy_from(y);
        let sol = self.bordered().lu().solve(&rhs).ok_or(PlantError::SingularSteadyState)?;
        let xi = sol.rows(0, nu).into_owned();
        let u = sol.rows(nu, m).into_owned();
        let residual = (&self.a * &xi + &self.b * &u).norm() + (&self.c * &xi - y).norm();
        if !(residual <= 1e-10 * (1.0 + y.norm())) {
            return Err(PlantError::SteadyStateResidual(residual));
        }
        Ok(SetPoint { xi, u })
    }
}

/// Observer-based output feedback `u = −K(ξ̂ − ξ_o) + u_o` closed around the
/// plant, in both the physical coordinates `ζ = (ξ, ξ̂)` and the error
/// coordinates `ζ̃ = (ξ − ξ_o, ξ − ξ̂)`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub plant: LinearPlant,
    pub k: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub setpoints: BTreeMap<ObsId, SetPoint>,
    /// `[[A, −BK], [LC, A − BK − LC]]`.
    pub f: DMatrix<f64>,
    /// `g_o = (BKξ_o + Bu_o, BKξ_o + Bu_o)` per observation.
    pub g: BTreeMap<ObsId, DVector<f64>>,
    /// `[[A − BK, BK], [0, A − LC]]`.
    pub f_tilde: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

impl ClosedLoop {
    /// Assembles the loop for every region's jump center and solves the
    /// Lyapunov equation for `Q` (identity when `None`).
    pub fn assemble(
        plant: &LinearPlant,
        k: &DMatrix<f64>,
        l: &DMatrix<f64>,
        regions: &[Region],
        q: Option<&DMatrix<f64>>,
        tol: &Tolerances,
    ) -> Result<Self, PlantError> {
        let (nu, m, p) = (plant.nu(), plant.m(), plant.p());
        if k.shape() != (m, nu) {
            return Err(PlantError::Dimension(format!("K is {:?}, expected ({m}, {nu})", k.shape())));
        }
        if l.shape() != (nu, p) {
            return Err(PlantError::Dimension(format!("L is {:?}, expected ({nu}, {p})", l.shape())));
        }
        let a_bk = &plant.a - &plant.b * k;
        let a_lc = &plant.a - l * &plant.c;
        check_hurwitz("A-BK", &a_bk, tol)?;
        check_hurwitz("A-LC", &a_lc, tol)?;

        let bk = &plant.b * k;
        let mut f = DMatrix::zeros(2 * nu, 2 * nu);
        f.view_mut((0, 0), (nu, nu)).copy_from(&plant.a);
        f.view_mut((0, nu), (nu, nu)).copy_from(&(-&bk));
        f.view_mut((nu, 0), (nu, nu)).copy_from(&(l * &plant.c));
        f.view_mut((nu, nu), (nu, nu)).copy_from(&(&a_bk - l * &plant.c));

        let mut f_tilde = DMatrix::zeros(2 * nu, 2 * nu);
        f_tilde.view_mut((0, 0), (nu, nu)).copy_from(&a_bk);
        f_tilde.view_mut((0, nu), (nu, nu)).copy_from(&bk);
        f_tilde.view_mut((nu, nu), (nu, nu)).copy_from(&a_lc);

        let mut setpoints = BTreeMap::new();
        let mut g = BTreeMap::new();
        for region in regions {
            let sp = plant.steady_state(&region.jump_center)?;
            let top = &bk * &sp.xi + &plant.b * &sp.u;
            let mut go = DVector::zeros(2 * nu);
            go.rows_mut(0, nu).copy_from(&top);
            go.rows_mut(nu, nu).copy_from(&top);
            g.insert(region.observation, go);
            setpoints.insert(region.observation, sp);
        }

        let q = q.cloned().unwrap_or_else(|| DMatrix::identity(2 * nu, 2 * nu));
        let p_mat = solve_lyapunov(&f_tilde, &q)?;
        let residual = lyapunov_residual(&f_tilde, &p_mat, &q);
        if residual > 1e-8 * q.norm() {
            return Err(PlantError::LyapunovResidual(residual));
        }
        Ok(Self { plant: plant.clone(), k: k.clone(), l: l.clone(), setpoints, f, g, f_tilde, q, p: p_mat })
    }

    pub fn nu(&self) -> usize {
        self.plant.nu()
    }

    /// Error coordinates `ζ̃ = (ξ − ξ_o, ξ − ξ̂)` for observation `o`.
    pub fn error_coordinates(&self, zeta: &DVector<f64>, o: ObsId) -> DVector<f64> {
        let nu = self.nu();
        let xi = zeta.rows(0, nu);
        let xi_hat = zeta.rows(nu, nu);
        let xo = &self.setpoints[&o].xi;
        let mut out = DVector::zeros(2 * nu);
        out.rows_mut(0, nu).copy_from(&(xi - xo));
        out.rows_mut(nu, nu).copy_from(&(xi - xi_hat));
        out
    }

    /// `W(ζ, o) = ζ̃ᵀ P ζ̃`.
    pub fn w(&self, zeta: &DVector<f64>, o: ObsId) -> f64 {
        linalg::quad_form(&self.p, &self.error_coordinates(zeta, o))
    }

    /// `Fζ + g_o`.
    pub fn vector_field(&self, zeta: &DVector<f64>, o: ObsId) -> DVector<f64> {
        &self.f * zeta + &self.g[&o]
    }

    /// Output `Cξ` of a closed-loop state.
    pub fn output(&self, zeta: &DVector<f64>) -> DVector<f64> {
        &self.plant.c * zeta.rows(0, self.nu())
    }
}

fn check_hurwitz(name: &'static str, m: &DMatrix<f64>, tol: &Tolerances) -> Result<(), PlantError> {
    let worst = linalg::spectrum(m)
        .into_iter()
        .max_by(|a, b| a.re.total_cmp(&b.re));
    match worst {
        Some(ev) if ev.re > -tol.hurwitz => Err(PlantError::NotHurwitz { matrix: name, eigenvalue: ev }),
        _ => Ok(()),
    }
}
