//! Small dense linear-algebra helpers shared by the plant, simulator and
//! certificate code.

use nalgebra::{Complex, DMatrix, DVector};

/// Index sets of the connected components of the symmetric sparsity graph
/// of `m` (an edge wherever `m[(i,j)]` or `m[(j,i)]` is nonzero).
pub fn decoupled_blocks(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut component = vec![usize::MAX; n];
    let mut blocks = Vec::new();
    for root in 0..n {
        if component[root] != usize::MAX {
            continue;
        }
        let id = blocks.len();
        let mut members = vec![root];
        component[root] = id;
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if component[j] == usize::MAX && (m[(i, j)] != 0.0 || m[(j, i)] != 0.0) {
                    component[j] = id;
                    members.push(j);
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        blocks.push(members);
    }
    blocks
}

pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Eigenvalues of a real square matrix.
///
/// The matrix is first split into decoupled diagonal blocks; 1×1 and 2×2
/// blocks use closed forms (so repeated real roots come out exact), larger
/// blocks go through a real Schur decomposition. Output is sorted by real
/// part, then imaginary part.
pub fn spectrum(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    assert!(m.is_square(), "spectrum of a non-square matrix");
    let mut out = Vec::with_capacity(m.nrows());
    for block in decoupled_blocks(m) {
        let sub = submatrix(m, &block, &block);
        match block.len() {
            1 => out.push(Complex::new(sub[(0, 0)], 0.0)),
            2 => {
                let (a, b, c, d) = (sub[(0, 0)], sub[(0, 1)], sub[(1, 0)], sub[(1, 1)]);
                let mid = 0.5 * (a + d);
                let half = 0.5 * (a - d);
                let disc = half * half + b * c;
                if disc >= 0.0 {
                    let r = disc.sqrt();
                    out.push(Complex::new(mid - r, 0.0));
                    out.push(Complex::new(mid + r, 0.0));
                } else {
                    let r = (-disc).sqrt();
                    out.push(Complex::new(mid, -r));
                    out.push(Complex::new(mid, r));
                }
            }
            _ => out.extend(sub.complex_eigenvalues().iter().copied()),
        }
    }
    out.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    out
}

/// Largest real part of the spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    spectrum(m).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Numerical rank: singular values at or below `rel_tol * σ_max` count as zero.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// 2-norm condition number (`inf` for singular or non-square input).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if !m.is_square() || m.is_empty() {
        return f64::INFINITY;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let (smin, smax) = (sv.min(), sv.max());
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn sym_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = m.clone().symmetric_eigenvalues();
    (ev.min(), ev.max())
}

/// `xᵀ M x`.
pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

/// Moore–Penrose right inverse `Cᵀ(CCᵀ)⁻¹` of a full-row-rank matrix.
pub fn right_inverse(c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let cct = c * c.transpose();
    cct.try_inverse().map(|inv| c.transpose() * inv)
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Row-major nested vectors, the layout used by scenario and report files.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return None;
    }
    Some(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}
