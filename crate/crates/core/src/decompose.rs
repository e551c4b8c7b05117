//! End-to-end symmetric CP decomposition by subspace power iterations with
//! pseudo-inverse deflation.
//!
//! Outline, for a tensor of order `m` and `n = ceil(m/2)`:
//!
//! 1. Take the rank-`K` truncated SVD of the `[D^n, D^(m-n)]` flattening;
//!    its left singular vectors span the working subspace.
//! 2. For each `k`, find a high-value maximizer of the objective on the
//!    current (deflated) subspace; from the second component on, polish it
//!    by ascent on the full subspace.
//! 3. Recover the weight from `1 / (vec(a^n)^T (M_K^T)^+ vec(a^(m-n)))`.
//! 4. Intersect the current subspace with the orthogonal complement of
//!    `(M_K^T)^+ vec(a^(m-n))`.

use nalgebra::{DMatrix, DVector};

use crate::ascent::{run_spm_ascent, solve_component, AscentConfig};
use crate::error::{invalid, Result, SpmError};
use crate::linalg;
use crate::rng::SpmRng;
use crate::subspace::{FlatteningSvd, RankRule, TensorSubspace, TruncatedPinv};
use crate::tensor::{kron_power, ComponentEnsemble, SymTensor};

/// Denominators of the weight formula below this magnitude are rejected.
pub const WEIGHT_DENOMINATOR_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    pub rank: usize,
    pub order: usize,
    /// `lambda_hat_k` in recovery order.
    pub weights: Vec<f64>,
    /// `a_hat_k` in recovery order.
    pub components: Vec<DVector<f64>>,
    /// Objective on the deflated subspace at the accepted point.
    pub objectives: Vec<f64>,
    pub restarts: Vec<usize>,
    /// `false` where the full-subspace refinement did not converge and the
    /// deflated-subspace point was kept.
    pub refined: Vec<bool>,
    /// Singular values of the flattening, all of them.
    pub singular_values: Vec<f64>,
}

impl DecompositionResult {
    pub fn to_ensemble(&self) -> Result<ComponentEnsemble> {
        let d = self.components.first().map_or(0, |c| c.len());
        let a = DMatrix::from_columns(&self.components);
        if a.nrows() != d {
            return Err(invalid("inconsistent component lengths"));
        }
        ComponentEnsemble::new(self.order, DVector::from_column_slice(&self.weights), a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    /// `permutation[i]` is the truth index matched to estimate `i`.
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
    /// `||s_i a_pi(i) - a_hat_i||`.
    pub direction_errors: Vec<f64>,
    /// `|s_i^m / lambda_pi(i) - 1 / lambda_hat_i|`.
    pub weight_errors: Vec<f64>,
    /// `|s_i^m lambda_hat_i - lambda_pi(i)| / |lambda_pi(i)|`.
    pub relative_weight_errors: Vec<f64>,
    /// Set when an estimate's best truth match was already taken.
    pub collision: bool,
}

/// Outcome of [`deflate_subspace`].
#[derive(Debug, Clone)]
pub struct Deflation {
    pub subspace: TensorSubspace,
    /// `false` when `v` was already orthogonal to the subspace.
    pub rank_dropped: bool,
}

/// `1 / (vec(a^n)^T (M_K^T)^+ vec(a^(m-n)))`.
pub fn weight_estimate(a_hat: &DVector<f64>, pinv: &TruncatedPinv) -> Result<f64> {
    if a_hat.len() != pinv.dim {
        return Err(invalid(format!(
            "component has length {}, expected {}",
            a_hat.len(),
            pinv.dim
        )));
    }
    let left = DVector::from_vec(kron_power(a_hat.as_slice(), pinv.left_order));
    let right = DVector::from_vec(kron_power(a_hat.as_slice(), pinv.right_order));
    let denom = pinv.bilinear(&left, &right);
    if !(denom.abs() >= WEIGHT_DENOMINATOR_FLOOR) {
        return Err(SpmError::WeightUndefined(denom));
    }
    Ok(1.0 / denom)
}

/// Orthonormal basis of `{u in span(S) : <u, v> = 0}`.
///
/// With `c = U^T v`, the new basis is `U Q` where the columns of `Q` span the
/// complement of `c` (a Householder reflector of `c`), so the rank drops by
/// exactly one. If `c` vanishes the subspace is returned unchanged.
pub fn deflate_subspace(s: &TensorSubspace, v: &DVector<f64>) -> Result<Deflation> {
    let basis = s.basis();
    if v.len() != basis.nrows() {
        return Err(invalid(format!(
            "deflation vector has length {}, expected {}",
            v.len(),
            basis.nrows()
        )));
    }
    let vnorm = v.norm();
    if vnorm == 0.0 {
        return Err(invalid("deflation vector must be nonzero"));
    }
    let c = basis.tr_mul(v);
    if c.norm() <= 1e-14 * vnorm {
        return Ok(Deflation {
            subspace: s.clone(),
            rank_dropped: false,
        });
    }
    if s.rank() == 1 {
        return Err(invalid("cannot deflate a one-dimensional subspace"));
    }
    let q = linalg::householder_complement(&c);
    let new_basis = basis * q;
    Ok(Deflation {
        subspace: TensorSubspace::from_parts_unchecked(s.dim(), s.half_order(), new_basis),
        rank_dropped: true,
    })
}

/// Decomposes `t_hat` into rank-one terms.
///
/// The number of terms comes from `rank_rule` applied to the flattening.
/// Fails with [`SpmError::NoComponentFound`] when some component cannot be
/// accepted within the restart budget.
pub fn decompose(
    t_hat: &SymTensor,
    cfg: &AscentConfig,
    rank_rule: RankRule,
    rng: &mut SpmRng,
) -> Result<DecompositionResult> {
    let m = t_hat.order();
    if m < 3 {
        return Err(invalid(format!("decomposition needs order >= 3, got {m}")));
    }
    cfg.validate()?;
    let n = m.div_ceil(2);
    let svd = FlatteningSvd::compute(t_hat, n)?;
    let k_total = svd.rank(rank_rule)?;
    let full = svd.subspace(k_total);
    let pinv = svd.truncated_pinv(k_total);

    let mut out = DecompositionResult {
        rank: k_total,
        order: m,
        weights: Vec::with_capacity(k_total),
        components: Vec::with_capacity(k_total),
        objectives: Vec::with_capacity(k_total),
        restarts: Vec::with_capacity(k_total),
        refined: Vec::with_capacity(k_total),
        singular_values: svd.singular_values().to_vec(),
    };
    let mut current = full.clone();
    for k in 0..k_total {
        let trace = solve_component(&current, cfg, rng)?;
        let (a_hat, refined) = if k == 0 {
            (trace.final_x.clone(), true)
        } else {
            match run_spm_ascent(&full, &trace.final_x, cfg) {
                Ok(r) if r.converged => (r.final_x, true),
                _ => (trace.final_x.clone(), false),
            }
        };
        let weight = weight_estimate(&a_hat, &pinv)?;
        if k + 1 < k_total {
            let v = pinv.apply(&DVector::from_vec(kron_power(a_hat.as_slice(), m - n)));
            current = deflate_subspace(&current, &v)?.subspace;
        }
        out.weights.push(weight);
        out.components.push(a_hat);
        out.objectives.push(trace.final_objective);
        out.restarts.push(trace.restarts_used);
        out.refined.push(refined);
    }
    Ok(out)
}

/// Greedy matching of estimated components to the truth by decreasing
/// `|<a_i, a_hat_j>|`, without reuse.
pub fn match_components(truth: &ComponentEnsemble, est: &DecompositionResult) -> Result<MatchReport> {
    let k = truth.rank();
    if est.components.len() != k {
        return Err(invalid(format!(
            "truth has {k} components, estimate has {}",
            est.components.len()
        )));
    }
    if est.components.iter().any(|c| c.len() != truth.dim()) {
        return Err(invalid("estimated components have the wrong dimension"));
    }
    let a = truth.components();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(k * k);
    for (j, e) in est.components.iter().enumerate() {
        let corr = a.tr_mul(e);
        for i in 0..k {
            pairs.push((corr[i].abs(), i, j));
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));

    let mut permutation = vec![usize::MAX; k];
    let mut taken = vec![false; k];
    let mut assigned = 0;
    for &(_, i, j) in &pairs {
        if permutation[j] == usize::MAX && !taken[i] {
            permutation[j] = i;
            taken[i] = true;
            assigned += 1;
            if assigned == k {
                break;
            }
        }
    }

    let mut collision = false;
    let mut report = MatchReport {
        permutation: permutation.clone(),
        signs: Vec::with_capacity(k),
        direction_errors: Vec::with_capacity(k),
        weight_errors: Vec::with_capacity(k),
        relative_weight_errors: Vec::with_capacity(k),
        collision: false,
    };
    let m = est.order as i32;
    for (j, e) in est.components.iter().enumerate() {
        let corr = a.tr_mul(e);
        let best = corr.iamax();
        if best != permutation[j] && corr[best].abs() > corr[permutation[j]].abs() {
            collision = true;
        }
        let i = permutation[j];
        let s = if corr[i] >= 0.0 { 1.0 } else { -1.0 };
        let dir = (a.column(i) * s - e).norm();
        let lambda = truth.weights()[i];
        let lambda_hat = est.weights[j];
        let sm = s.powi(m);
        report.signs.push(s);
        report.direction_errors.push(dir);
        report.weight_errors.push((sm / lambda - 1.0 / lambda_hat).abs());
        report.relative_weight_errors.push((sm * lambda_hat - lambda).abs() / lambda.abs());
    }
    report.collision = collision;
    Ok(report)
}

/// Error bounds for one recovered pair in terms of the flattening spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryBound {
    /// `Delta_M / (sigma_K - Delta_M)`.
    pub delta_hat: f64,
    /// Bound on `||s a_pi - a_hat||`: `sqrt(2 delta_hat / n)`.
    pub direction: f64,
    /// Bound on `|s^m / lambda_pi - 1 / lambda_hat|`:
    /// `2 sqrt(m/n) / sigma_K sqrt(delta_hat) + 4 delta_hat / sigma_K`.
    pub inverse_weight: f64,
}

/// Recovery error bounds given `Delta_M = ||M - M_hat||_2` and `sigma_K(M)`.
pub fn recovery_bound(delta_m: f64, sigma_k: f64, m: usize) -> Result<RecoveryBound> {
    if !(delta_m >= 0.0) || !(delta_m < sigma_k) {
        return Err(SpmError::BoundUndefined { delta: delta_m, sigma_k });
    }
    let n = m.div_ceil(2) as f64;
    let delta_hat = delta_m / (sigma_k - delta_m);
    Ok(RecoveryBound {
        delta_hat,
        direction: (2.0 * delta_hat / n).sqrt(),
        inverse_weight: 2.0 * (m as f64 / n).sqrt() / sigma_k * delta_hat.sqrt() + 4.0 * delta_hat / sigma_k,
    })
}

/// Lower bound `min_i |lambda_i| / sqrt(||G_n^{-1}|| ||G_{m-n}^{-1}||)` on
/// the `K`-th singular value of the flattening of a CP tensor.
pub fn sigma_k_lower_bound(e: &ComponentEnsemble) -> Result<f64> {
    let m = e.order();
    let n = m.div_ceil(2);
    let gn = crate::landscape::grammian(e.components(), n)?;
    let gm = crate::landscape::grammian(e.components(), m - n)?;
    let min_w = e.weights().iter().fold(f64::INFINITY, |acc, w| acc.min(w.abs()));
    Ok(min_w / (gn.inverse_norm() * gm.inverse_norm()).sqrt())
}

/// Bound on `||W^+ - W_hat_r^+||_2` for rank-`r` `W`, where `W_hat_r` is the
/// rank-`r` truncation of a perturbation with `||W - W_hat|| = delta < sigma_r`:
/// `delta / (sigma_r - delta) * (2 / sigma_r + 1 / (sigma_r - delta))`.
pub fn pinv_stability_bound(sigma_r: f64, delta: f64) -> Result<f64> {
    if !(delta >= 0.0) || !(delta < sigma_r) {
        return Err(SpmError::BoundUndefined { delta, sigma_k: sigma_r });
    }
    let gap = sigma_r - delta;
    Ok(delta / gap * (2.0 / sigma_r + 1.0 / gap))
}
