//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Thin SVD with singular values sorted in descending order.
#[derive(Debug, Clone)]
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// Thin SVD, sorted. Symmetric square inputs go through the symmetric
/// eigensolver: `M = W diag(mu) W^T` gives `U = W`, `s = |mu|`,
/// `V = W diag(sign mu)`. Everything else goes through faer, whose SVD stays
/// accurate on the rank-deficient flattenings produced here.
pub fn sorted_svd(m: &DMatrix<f64>) -> SortedSvd {
    if m.is_square() && is_symmetric(m, 1e-13) {
        return symmetric_svd(m);
    }
    general_svd(m)
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn general_svd(m: &DMatrix<f64>) -> SortedSvd {
    let Ok(svd) = to_faer(m).thin_svd() else {
        // non-finite input; propagate NaNs rather than panic
        let k = m.nrows().min(m.ncols());
        return SortedSvd {
            u: DMatrix::from_element(m.nrows(), k, f64::NAN),
            singular_values: vec![f64::NAN; k],
            v: DMatrix::from_element(m.ncols(), k, f64::NAN),
        };
    };
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = s.nrows();
    let values: Vec<f64> = (0..k).map(|i| s[i]).collect();
    let order = descending_order(&values);
    SortedSvd {
        u: DMatrix::from_fn(m.nrows(), k, |i, j| u[(i, order[j])]),
        singular_values: order.iter().map(|&i| values[i]).collect(),
        v: DMatrix::from_fn(m.ncols(), k, |i, j| v[(i, order[j])]),
    }
}

fn symmetric_svd(m: &DMatrix<f64>) -> SortedSvd {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    let order = descending_order(&abs);
    let u = select_columns(&eig.eigenvectors, &order);
    let mut v = u.clone();
    for (j, &i) in order.iter().enumerate() {
        if eig.eigenvalues[i] < 0.0 {
            v.column_mut(j).neg_mut();
        }
    }
    SortedSvd {
        u,
        singular_values: order.iter().map(|&i| abs[i]).collect(),
        v,
    }
}

/// Max entry of `|M - M^T|` relative to the max entry of `|M|`.
pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax();
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

pub fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    match to_faer(m).singular_values() {
        Ok(values) => values.iter().fold(0.0, |acc: f64, &v| acc.max(v)),
        Err(_) => f64::NAN,
    }
}

/// Moore-Penrose pseudo-inverse, dropping singular values at or below
/// `rel_tol * sigma_1`.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = sorted_svd(m);
    let top = svd.singular_values.first().copied().unwrap_or(0.0);
    let r = svd.singular_values.iter().take_while(|&&s| s > rel_tol * top).count();
    let inv = DVector::from_iterator(r, svd.singular_values[..r].iter().map(|s| 1.0 / s));
    svd.v.columns(0, r) * DMatrix::from_diagonal(&inv) * svd.u.columns(0, r).transpose()
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Orthonormal basis of the column span of a full-column-rank matrix.
pub fn orthonormal_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().qr().q()
}

/// Orthonormal basis of the column span, dropping directions whose
/// singular value is below `rel_tol * sigma_1`.
pub fn range_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = sorted_svd(m);
    let top = svd.singular_values.first().copied().unwrap_or(0.0);
    let r = svd
        .singular_values
        .iter()
        .take_while(|&&s| s > rel_tol * top)
        .count();
    svd.u.columns(0, r).into_owned()
}

/// `D x (D-1)` orthonormal basis of the complement of the nonzero vector `x`,
/// taken from the Householder reflector that maps `x` onto a multiple of `e_1`.
pub fn householder_complement(x: &DVector<f64>) -> DMatrix<f64> {
    let d = x.len();
    let norm = x.norm();
    let mut v = x / norm;
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign;
    let vv = v.norm_squared();
    let mut q = DMatrix::zeros(d, d.saturating_sub(1));
    for j in 1..d {
        // column j of I - 2 v v^T / (v^T v)
        let mut col = v.clone() * (-2.0 * v[j] / vv);
        col[j] += 1.0;
        q.set_column(j - 1, &col);
    }
    q
}

/// Least-squares solve of `G y = b` for symmetric positive definite `G`.
pub fn spd_solve(g: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    g.clone().cholesky().map(|c| c.solve(b))
}
