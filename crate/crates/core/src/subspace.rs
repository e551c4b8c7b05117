//! Component subspaces and the subspace power objective.
//!
//! A [`TensorSubspace`] is stored as a `D^n x K` matrix `U` with orthonormal
//! columns; the projector `U U^T` is never formed. For a unit vector `x`
//! the objective is `F(x) = ||U^T vec(x^{(x)n})||^2`, the squared norm of the
//! projection of `x^{(x)n}` onto the subspace.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result, SpmError};
use crate::linalg::{self, SortedSvd};
use crate::tensor::{self, checked_pow, flatten_matrix, kron, kron_power, DenseTensor, SymTensor, TensorData};

/// Tolerance on `||x|| = 1` accepted by the evaluation routines.
pub const UNIT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSubspace {
    dim: usize,
    half_order: usize,
    basis: DMatrix<f64>,
    singular_values: Option<Vec<f64>>,
}

/// How many leading singular vectors of the flattening to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankRule {
    /// Exactly this many.
    Fixed(usize),
    /// All singular values strictly above the threshold.
    Threshold(f64),
    /// Numerical rank: threshold `max(D^n, D^(m-n)) * eps * sigma_1`.
    Numerical,
}

/// Sorted thin SVD of `Reshape(T, [D^n, D^(m-n)])`.
#[derive(Debug, Clone)]
pub struct FlatteningSvd {
    dim: usize,
    order: usize,
    half_order: usize,
    svd: SortedSvd,
}

/// Spectral perturbation bound on the distance between the leading-`K`
/// subspaces of a matrix and its perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceErrorBound {
    /// `||M - M_hat||_2`.
    pub delta_m: f64,
    /// `sigma_K(M)`.
    pub sigma_k: f64,
    /// `delta_m / (sigma_k - delta_m)`.
    pub bound: f64,
}

/// Intermediate quantities of one objective evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub objective: f64,
    /// `P(x^n)` vectorized.
    pub projection: DVector<f64>,
    /// `P(x^n) . x^(n-1)`.
    pub pull: DVector<f64>,
    /// `||x^n - P(x^n)||^2`, accurate to relative precision even when tiny.
    pub residual: f64,
}

fn check_unit(x: &DVector<f64>, dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(invalid(format!("expected a vector of length {dim}, got {}", x.len())));
    }
    let norm = x.norm();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(invalid(format!("expected a unit vector, got norm {norm}")));
    }
    Ok(())
}

impl FlatteningSvd {
    pub fn compute(t: &SymTensor, n: usize) -> Result<Self> {
        let m = flatten_matrix(t, n)?;
        Ok(Self {
            dim: t.dim(),
            order: t.order(),
            half_order: n,
            svd: linalg::sorted_svd(&m),
        })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.svd.singular_values
    }

    pub fn half_order(&self) -> usize {
        self.half_order
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self, rule: RankRule) -> Result<usize> {
        let s = &self.svd.singular_values;
        let rows = self.svd.u.nrows();
        let k = match rule {
            RankRule::Fixed(k) => {
                if k == 0 || k > rows || k > s.len() {
                    return Err(invalid(format!(
                        "rank {k} outside 1..={}",
                        rows.min(s.len())
                    )));
                }
                return Ok(k);
            }
            RankRule::Threshold(alpha) => {
                if !(alpha > 0.0) {
                    return Err(invalid(format!("threshold must be positive, got {alpha}")));
                }
                let k = s.iter().filter(|&&v| v > alpha).count();
                if k == 0 {
                    return Err(SpmError::EmptySubspace { threshold: alpha });
                }
                k
            }
            RankRule::Numerical => {
                let big = rows.max(self.svd.v.nrows()) as f64;
                let alpha = big * f64::EPSILON * s.first().copied().unwrap_or(0.0);
                let k = s.iter().filter(|&&v| v > alpha).count();
                if k == 0 {
                    return Err(SpmError::EmptySubspace { threshold: alpha });
                }
                k
            }
        };
        Ok(k)
    }

    /// Span of the `k` leading left singular vectors.
    pub fn subspace(&self, k: usize) -> TensorSubspace {
        TensorSubspace {
            dim: self.dim,
            half_order: self.half_order,
            basis: self.svd.u.columns(0, k).into_owned(),
            singular_values: Some(self.svd.singular_values[..k].to_vec()),
        }
    }

    /// Factors of `(M_K^T)^+ = U_K diag(1/s) V_K^T` for the rank-`k` truncation.
    pub fn truncated_pinv(&self, k: usize) -> TruncatedPinv {
        TruncatedPinv {
            dim: self.dim,
            left_order: self.half_order,
            right_order: self.order - self.half_order,
            u: self.svd.u.columns(0, k).into_owned(),
            inv_s: DVector::from_iterator(k, self.svd.singular_values[..k].iter().map(|s| 1.0 / s)),
            v: self.svd.v.columns(0, k).into_owned(),
        }
    }
}

/// `(M_K^T)^+` kept in factored form: `U diag(inv_s) V^T`, mapping
/// `R^(D^(m-n))` into `R^(D^n)`.
#[derive(Debug, Clone)]
pub struct TruncatedPinv {
    pub dim: usize,
    /// `n`: the pseudo-inverse maps into `R^(D^n)`.
    pub left_order: usize,
    /// `m - n`.
    pub right_order: usize,
    pub u: DMatrix<f64>,
    pub inv_s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl TruncatedPinv {
    /// `(M_K^T)^+ y`.
    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        let c = self.v.tr_mul(y).component_mul(&self.inv_s);
        &self.u * c
    }

    /// `u^T (M_K^T)^+ y`.
    pub fn bilinear(&self, u: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let left = self.u.tr_mul(u);
        let right = self.v.tr_mul(y);
        left.component_mul(&self.inv_s).dot(&right)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.inv_s) * self.v.transpose()
    }
}

/// Leading left singular subspace of the `n`-flattening of `t`.
pub fn extract_subspace(t: &SymTensor, n: usize, rule: RankRule) -> Result<TensorSubspace> {
    let svd = FlatteningSvd::compute(t, n)?;
    let k = svd.rank(rule)?;
    Ok(svd.subspace(k))
}

impl TensorSubspace {
    /// Wraps an orthonormal basis (checked to 1e-10).
    pub fn from_basis(dim: usize, half_order: usize, basis: DMatrix<f64>) -> Result<Self> {
        let rows = checked_pow(dim, half_order)?;
        if basis.nrows() != rows {
            return Err(invalid(format!(
                "basis has {} rows, expected D^n = {rows}",
                basis.nrows()
            )));
        }
        let k = basis.ncols();
        if k == 0 || k > rows {
            return Err(invalid(format!("subspace rank {k} outside 1..={rows}")));
        }
        let gram_err = (basis.tr_mul(&basis) - DMatrix::identity(k, k)).amax();
        if gram_err > 1e-10 {
            return Err(invalid(format!("basis is not orthonormal (error {gram_err:e})")));
        }
        Ok(Self {
            dim,
            half_order,
            basis,
            singular_values: None,
        })
    }

    /// Noiseless subspace `span{a_i^{(x)n}}` for the columns of `a`,
    /// orthonormalized by QR. Requires linearly independent `a_i^{(x)n}`.
    pub fn from_components(a: &DMatrix<f64>, n: usize) -> Result<Self> {
        let kr = tensor::khatri_rao_power(a, n)?;
        if kr.ncols() > kr.nrows() {
            return Err(invalid("more components than D^n"));
        }
        Self::from_basis(a.nrows(), n, linalg::orthonormal_columns(&kr))
    }

    pub(crate) fn from_parts_unchecked(dim: usize, half_order: usize, basis: DMatrix<f64>) -> Self {
        Self {
            dim,
            half_order,
            basis,
            singular_values: None,
        }
    }

    pub fn with_singular_values(mut self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.rank() {
            return Err(invalid("one singular value per basis column required"));
        }
        self.singular_values = Some(values);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_order(&self) -> usize {
        self.half_order
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn singular_values(&self) -> Option<&[f64]> {
        self.singular_values.as_deref()
    }

    /// Basis column `j` as an order-`n` tensor.
    pub fn basis_tensor(&self, j: usize) -> DenseTensor {
        DenseTensor::new(vec![self.dim; self.half_order], self.basis.column(j).iter().copied().collect())
            .expect("basis rows equal D^n")
    }

    /// `U^T v` for a vectorized order-`n` tensor.
    pub fn coefficients(&self, v: &[f64]) -> DVector<f64> {
        self.basis.tr_mul(&DVector::from_column_slice(v))
    }

    /// Coefficients `w = U^T vec(T)` of the projection of `t`.
    pub fn project_coeffs<T: TensorData>(&self, t: &T) -> Result<DVector<f64>> {
        if t.shape() != vec![self.dim; self.half_order] {
            return Err(invalid(format!(
                "expected shape {:?}, got {:?}",
                vec![self.dim; self.half_order],
                t.shape()
            )));
        }
        Ok(self.coefficients(t.values()))
    }

    /// Projection `tensorize(U w)` of a tensor with coefficients `w`.
    pub fn reconstruct(&self, w: &DVector<f64>) -> DenseTensor {
        let v = &self.basis * w;
        DenseTensor::new(vec![self.dim; self.half_order], v.as_slice().to_vec()).expect("length D^n")
    }

    pub(crate) fn evaluate(&self, x: &DVector<f64>) -> Evaluation {
        let n = self.half_order;
        let xn = kron_power(x.as_slice(), n);
        let w = self.coefficients(&xn);
        let objective = w.norm_squared();
        let projection = &self.basis * w;
        let pull = contract_trailing(projection.as_slice(), &kron_power(x.as_slice(), n - 1), self.dim);
        let residual = xn.iter().zip(projection.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        Evaluation {
            objective,
            projection,
            pull,
            residual,
        }
    }

    /// `F(x) = ||P(x^{(x)n})||_F^2`.
    pub fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        check_unit(x, self.dim)?;
        Ok(self.objective_unchecked(x))
    }

    pub(crate) fn objective_unchecked(&self, x: &DVector<f64>) -> f64 {
        self.coefficients(&kron_power(x.as_slice(), self.half_order)).norm_squared()
    }

    /// `P(x^{(x)n}) . x^{(x)(n-1)}`.
    pub fn pull(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_unit(x, self.dim)?;
        Ok(self.evaluate(x).pull)
    }

    /// Riemannian gradient on the sphere: `2n P(x^n).x^(n-1) - 2n F(x) x`.
    pub fn riemannian_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_unit(x, self.dim)?;
        let e = self.evaluate(x);
        Ok(gradient_from(&e, x, self.half_order))
    }

    /// Riemannian Hessian quadratic form at `x` along the unit tangent `z`:
    /// `2n^2 ||P(x^(n-1) z)||^2 + 2n(n-1) <P(x^n), x^(n-2) z^2> - 2n F(x)`.
    pub fn riemannian_hessian_quadratic(&self, x: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
        check_unit(x, self.dim)?;
        check_unit(z, self.dim)?;
        let ip = x.dot(z);
        if ip.abs() > UNIT_TOL {
            return Err(invalid(format!("direction is not tangent: <x, z> = {ip:e}")));
        }
        let n = self.half_order;
        let nf = n as f64;
        let e = self.evaluate(x);
        let mixed = kron(&kron_power(x.as_slice(), n - 1), z.as_slice());
        let first = self.coefficients(&mixed).norm_squared();
        let second = if n >= 2 {
            let zz = kron(z.as_slice(), z.as_slice());
            let v = kron(&kron_power(x.as_slice(), n - 2), &zz);
            e.projection.iter().zip(&v).map(|(a, b)| a * b).sum()
        } else {
            0.0
        };
        Ok(2.0 * nf * nf * first + 2.0 * nf * (nf - 1.0) * second - 2.0 * nf * e.objective)
    }

    /// The Riemannian Hessian as a symmetric `D x D` matrix `H` with
    /// `z^T H z` equal to the quadratic form for every tangent `z`.
    pub fn hessian_form(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_unit(x, self.dim)?;
        let d = self.dim;
        let n = self.half_order;
        let nf = n as f64;
        let e = self.evaluate(x);
        let k = self.rank();

        // B[k, j] = <U_k, x^(n-1) (x) e_j>
        let xk = kron_power(x.as_slice(), n - 1);
        let mut b = DMatrix::zeros(k, d);
        for (kk, col) in self.basis.column_iter().enumerate() {
            let c = col.as_slice();
            for (jj, &xv) in xk.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for j in 0..d {
                    b[(kk, j)] += xv * c[jj * d + j];
                }
            }
        }
        let mut h = b.tr_mul(&b) * (2.0 * nf * nf);

        if n >= 2 {
            // C[i, j] = <P(x^n), x^(n-2) (x) e_i (x) e_j>
            let x2 = kron_power(x.as_slice(), n - 2);
            let p = e.projection.as_slice();
            let mut c = DMatrix::zeros(d, d);
            for (jj, &xv) in x2.iter().enumerate() {
                let block = &p[jj * d * d..(jj + 1) * d * d];
                for i in 0..d {
                    for j in 0..d {
                        c[(i, j)] += xv * block[i * d + j];
                    }
                }
            }
            h += c * (2.0 * nf * (nf - 1.0));
        }
        for i in 0..d {
            h[(i, i)] -= 2.0 * nf * e.objective;
        }
        Ok((&h + h.transpose()) * 0.5)
    }

    /// Largest eigenvalue of the Hessian restricted to the tangent space,
    /// using the Householder complement of `x` as tangent basis.
    pub fn max_tangent_hessian_eigenvalue(&self, x: &DVector<f64>) -> Result<f64> {
        if self.dim < 2 {
            return Err(invalid("the tangent space of S^0 is trivial"));
        }
        let h = self.hessian_form(x)?;
        let q = linalg::householder_complement(x);
        let restricted = q.tr_mul(&h) * &q;
        Ok(*linalg::symmetric_eigenvalues(&restricted).last().expect("D >= 2"))
    }
}

pub(crate) fn gradient_from(e: &Evaluation, x: &DVector<f64>, n: usize) -> DVector<f64> {
    let two_n = 2.0 * n as f64;
    (&e.pull - x * e.objective) * two_n
}

/// Contracts a vectorized order-`p` tensor with a vectorized order-`(p-1)`
/// tensor over the trailing indices, leaving the first index free.
pub(crate) fn contract_trailing(t: &[f64], s: &[f64], dim: usize) -> DVector<f64> {
    debug_assert_eq!(t.len(), s.len() * dim);
    DVector::from_iterator(
        dim,
        t.chunks_exact(s.len())
            .map(|row| row.iter().zip(s).map(|(a, b)| a * b).sum()),
    )
}

/// `||P_1 - P_2||_2` for two subspaces of the same tensor space.
///
/// Equal ranks: the sine of the largest principal angle, computed as
/// `||(I - U_1 U_1^T) U_2||_2`. Unequal ranks: spectral norm of the projector
/// difference restricted to `span[U_1, U_2]`.
pub fn subspace_distance(s1: &TensorSubspace, s2: &TensorSubspace) -> Result<f64> {
    if s1.dim != s2.dim || s1.half_order != s2.half_order {
        return Err(invalid(format!(
            "subspaces live in different spaces: (D={}, n={}) vs (D={}, n={})",
            s1.dim, s1.half_order, s2.dim, s2.half_order
        )));
    }
    let (u1, u2) = (&s1.basis, &s2.basis);
    if u1.ncols() == u2.ncols() {
        let residual = u2 - u1 * u1.tr_mul(u2);
        return Ok(linalg::spectral_norm(&residual).min(1.0));
    }
    let mut joint = DMatrix::zeros(u1.nrows(), u1.ncols() + u2.ncols());
    joint.columns_mut(0, u1.ncols()).copy_from(u1);
    joint.columns_mut(u1.ncols(), u2.ncols()).copy_from(u2);
    let q = linalg::range_basis(&joint, 1e-12);
    let x1 = q.tr_mul(u1);
    let x2 = q.tr_mul(u2);
    let diff = &x1 * x1.transpose() - &x2 * x2.transpose();
    let ev = linalg::symmetric_eigenvalues(&diff);
    Ok(ev.iter().fold(0.0_f64, |m, v| m.max(v.abs())).min(1.0))
}

/// Bound on the distance between the leading-`k` left singular subspaces
/// of `m` and `m_hat`: `delta / (sigma_k(m) - delta)` with
/// `delta = ||m - m_hat||_2`.
pub fn subspace_perturbation_bound(m: &DMatrix<f64>, m_hat: &DMatrix<f64>, k: usize) -> Result<SubspaceErrorBound> {
    if m.shape() != m_hat.shape() {
        return Err(invalid("matrices must have equal shapes"));
    }
    let s = linalg::sorted_svd(m).singular_values;
    if k == 0 || k > s.len() {
        return Err(invalid(format!("rank {k} outside 1..={}", s.len())));
    }
    let sigma_k = s[k - 1];
    let delta_m = linalg::spectral_norm(&(m - m_hat));
    if delta_m >= sigma_k {
        return Err(SpmError::BoundUndefined {
            delta: delta_m,
            sigma_k,
        });
    }
    Ok(SubspaceErrorBound {
        delta_m,
        sigma_k,
        bound: delta_m / (sigma_k - delta_m),
    })
}
