//! Continuous-time Lyapunov equation `P F + Fᵀ P = −Q` by vectorization.

use nalgebra::DMatrix;

use crate::plant::PlantError;

/// Solves `P F + Fᵀ P = −Q` for Hurwitz `F` and symmetric `Q ≻ 0`.
///
/// Column-major vectorization turns the equation into
/// `(I ⊗ Fᵀ + Fᵀ ⊗ I) vec(P) = −vec(Q)`, an `n² × n²` dense system solved
/// by LU. The result is symmetrized and checked for positive definiteness.
pub fn solve_lyapunov(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, PlantError> {
    let n = f.nrows();
    assert!(f.is_square() && q.shape() == (n, n), "dimension mismatch in Lyapunov solve");
    let ft = f.transpose();
    let nn = n * n;
    let mut kron = DMatrix::<f64>::zeros(nn, nn);
    // Column j of P maps to rows j*n..(j+1)*n of vec(P).
    for j in 0..n {
        for i in 0..n {
            for k in 0..n {
                // (I ⊗ Fᵀ): block (j, j) is Fᵀ.
                kron[(j * n + i, j * n + k)] += ft[(i, k)];
                // (Fᵀ ⊗ I): block (j, k) is F[k, j] · I.
                kron[(j * n + i, k * n + i)] += ft[(j, k)];
            }
        }
    }
    let rhs = -nalgebra::DVector::from_column_slice(q.as_slice());
    let x = kron.lu().solve(&rhs).ok_or(PlantError::SingularLyapunov)?;
    let p = DMatrix::from_column_slice(n, n, x.as_slice());
    let p = (&p + p.transpose()) * 0.5;
    if p.clone().cholesky().is_none() {
        return Err(PlantError::IndefiniteLyapunov);
    }
    Ok(p)
}

/// `‖P F + Fᵀ P + Q‖_F`.
pub fn lyapunov_residual(f: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (p * f + f.transpose() * p + q).norm()
}
