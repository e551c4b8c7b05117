//! Dense tensor algebra over `R^D`.
//!
//! Tensors are stored as full row-major arrays: the entry at
//! `(i_1, ..., i_m)` lives at `sum_k i_k * D^(m-k)`. Vectorizing a tensor is
//! therefore free, and reshaping to a `[D^n, D^(m-n)]` matrix is a pure
//! reinterpretation of the same buffer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{invalid, Result, SpmError};
use crate::rng::{self, SpmRng};

/// Highest tensor order supported by [`symmetrize`].
pub const MAX_ORDER: usize = 8;

/// Read access shared by [`SymTensor`] and [`DenseTensor`].
pub trait TensorData {
    fn shape(&self) -> Vec<usize>;
    fn values(&self) -> &[f64];
}

/// Order-`m` symmetric tensor over `R^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor {
    dim: usize,
    order: usize,
    data: Vec<f64>,
}

/// Tensor with arbitrary dimensions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

/// Weights `lambda_i` and unit components `a_i` (columns of a `D x K` matrix)
/// of the model `T = sum_i lambda_i a_i^{(x)m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentEnsemble {
    order: usize,
    weights: DVector<f64>,
    components: DMatrix<f64>,
}

pub(crate) fn checked_pow(dim: usize, order: usize) -> Result<usize> {
    let exp = u32::try_from(order).map_err(|_| invalid("tensor order overflows"))?;
    dim.checked_pow(exp)
        .ok_or_else(|| invalid(format!("{dim}^{order} entries overflow usize")))
}

#[inline]
fn decode(mut flat: usize, dim: usize, idx: &mut [usize]) {
    for slot in idx.iter_mut().rev() {
        *slot = flat % dim;
        flat /= dim;
    }
}

#[inline]
fn encode(idx: &[usize], dim: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

/// All permutations of `0..m` in lexicographic order.
pub(crate) fn permutations(m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..m).collect();
    loop {
        out.push(perm.clone());
        // next lexicographic permutation
        let Some(i) = (1..m).rev().find(|&i| perm[i - 1] < perm[i]) else {
            break;
        };
        let j = (i..m).rev().find(|&j| perm[j] > perm[i - 1]).unwrap();
        perm.swap(i - 1, j);
        perm[i..].reverse();
    }
    out
}

impl SymTensor {
    /// Wraps `data` after checking its length and sampling the symmetry
    /// invariant on 100 random index tuples.
    pub fn from_data(dim: usize, order: usize, data: Vec<f64>) -> Result<Self> {
        let t = Self::from_data_unchecked(dim, order, data)?;
        let mut rng = rng::seeded(0x5eed);
        if !t.sampled_symmetry(1e-12, 100, &mut rng) {
            return Err(invalid("tensor data is not symmetric"));
        }
        Ok(t)
    }

    /// Wraps `data` checking only its length. The caller guarantees symmetry.
    pub fn from_data_unchecked(dim: usize, order: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || order == 0 {
            return Err(invalid("dimension and order must be positive"));
        }
        let len = checked_pow(dim, order)?;
        if data.len() != len {
            return Err(invalid(format!(
                "expected {len} entries for D={dim}, m={order}, got {}",
                data.len()
            )));
        }
        Ok(Self { dim, order, data })
    }

    pub fn zeros(dim: usize, order: usize) -> Result<Self> {
        let len = checked_pow(dim, order)?;
        Self::from_data_unchecked(dim, order, vec![0.0; len])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        assert_eq!(idx.len(), self.order, "index arity must equal tensor order");
        self.data[encode(idx, self.dim)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            order: self.order,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    pub fn to_dense(&self) -> DenseTensor {
        DenseTensor {
            dims: vec![self.dim; self.order],
            data: self.data.clone(),
        }
    }

    /// Compares every entry with the entry at its sorted index tuple.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut idx = vec![0; self.order];
        for (flat, &v) in self.data.iter().enumerate() {
            decode(flat, self.dim, &mut idx);
            idx.sort_unstable();
            if (v - self.data[encode(&idx, self.dim)]).abs() > rel_tol * scale {
                return false;
            }
        }
        true
    }

    /// Checks `samples` random (index tuple, permutation) pairs. Differences
    /// are measured relative to the largest entry magnitude.
    pub fn sampled_symmetry(&self, rel_tol: f64, samples: usize, rng: &mut SpmRng) -> bool {
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 || self.order == 1 {
            return true;
        }
        let mut idx = vec![0; self.order];
        let mut permuted = vec![0; self.order];
        for _ in 0..samples {
            for slot in idx.iter_mut() {
                *slot = rng.random_range(0..self.dim);
            }
            permuted.copy_from_slice(&idx);
            // Fisher-Yates on the index tuple
            for i in (1..self.order).rev() {
                let j = rng.random_range(0..=i);
                permuted.swap(i, j);
            }
            let a = self.data[encode(&idx, self.dim)];
            let b = self.data[encode(&permuted, self.dim)];
            if (a - b).abs() > rel_tol * scale {
                return false;
            }
        }
        true
    }
}

impl TensorData for SymTensor {
    fn shape(&self) -> Vec<usize> {
        vec![self.dim; self.order]
    }
    fn values(&self) -> &[f64] {
        &self.data
    }
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(invalid("tensor dimensions must be positive"));
        }
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| invalid("tensor size overflows"))?;
        if data.len() != len {
            return Err(invalid(format!(
                "dims {dims:?} need {len} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Self {
            dims: vec![v.len()],
            data: v.as_slice().to_vec(),
        }
    }

    /// Row-major matrix as an order-2 tensor.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            data.extend(m.row(i).iter());
        }
        Self {
            dims: vec![r, c],
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Value of an order-0 tensor.
    pub fn scalar(&self) -> Option<f64> {
        self.dims.is_empty().then(|| self.data[0])
    }

    /// Order-2 tensor as a matrix.
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        match self.dims[..] {
            [r, c] => Ok(DMatrix::from_row_slice(r, c, &self.data)),
            _ => Err(invalid("only order-2 tensors convert to matrices")),
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.data)
    }

    pub fn reshape(&self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data.clone())
    }
}

impl TensorData for DenseTensor {
    fn shape(&self) -> Vec<usize> {
        self.dims.clone()
    }
    fn values(&self) -> &[f64] {
        &self.data
    }
}

impl ComponentEnsemble {
    /// Validates `K >= 1`, matching shapes and unit-norm columns (to 1e-12).
    pub fn new(order: usize, weights: DVector<f64>, components: DMatrix<f64>) -> Result<Self> {
        if order == 0 {
            return Err(invalid("order must be positive"));
        }
        if components.ncols() == 0 || components.nrows() == 0 {
            return Err(invalid("ensemble needs at least one component of positive dimension"));
        }
        if weights.len() != components.ncols() {
            return Err(invalid(format!(
                "{} weights for {} components",
                weights.len(),
                components.ncols()
            )));
        }
        for (j, col) in components.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(invalid(format!("component {j} has norm {norm}, expected 1")));
            }
        }
        Ok(Self {
            order,
            weights,
            components,
        })
    }

    /// Like [`ComponentEnsemble::new`] but rescales columns to unit norm first.
    pub fn normalized(order: usize, weights: DVector<f64>, mut components: DMatrix<f64>) -> Result<Self> {
        for mut col in components.column_iter_mut() {
            let norm = col.norm();
            if norm == 0.0 {
                return Err(invalid("zero component cannot be normalized"));
            }
            col /= norm;
        }
        Self::new(order, weights, components)
    }

    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rank(&self) -> usize {
        self.components.ncols()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn component(&self, i: usize) -> DVector<f64> {
        self.components.column(i).into_owned()
    }
}

/// `vec(a^{(x)p})` in row-major order, built by repeated Kronecker products.
pub fn kron_power(a: &[f64], p: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    for _ in 0..p {
        let mut next = Vec::with_capacity(out.len() * a.len());
        for &u in &out {
            next.extend(a.iter().map(|&v| u * v));
        }
        out = next;
    }
    out
}

/// `vec(u (x) v)` for vectorized tensors `u`, `v`.
pub fn kron(u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(u.len() * v.len());
    for &x in u {
        out.extend(v.iter().map(|&y| x * y));
    }
    out
}

/// Symmetric rank-one tensor `a^{(x)p}`.
///
/// Entries are products of the coordinates taken in sorted index order, so
/// every permutation of an index tuple reads back the identical float.
pub fn sym_outer_power(a: &DVector<f64>, p: usize) -> Result<SymTensor> {
    if p == 0 || a.is_empty() {
        return Err(invalid("outer power needs p >= 1 and a non-empty vector"));
    }
    let dim = a.len();
    let len = checked_pow(dim, p)?;
    let mut idx = vec![0; p];
    let data = (0..len)
        .map(|flat| {
            decode(flat, dim, &mut idx);
            idx.sort_unstable();
            idx.iter().map(|&i| a[i]).product()
        })
        .collect();
    SymTensor::from_data_unchecked(dim, p, data)
}

/// Orthogonal projection onto symmetric tensors: each entry becomes the
/// average of the input over all `m!` permutations of its index tuple.
///
/// The average is computed once per sorted index tuple and then scattered.
pub fn symmetrize(t: &DenseTensor) -> Result<SymTensor> {
    let dims = t.dims();
    let order = dims.len();
    if order == 0 {
        return Err(invalid("cannot symmetrize an order-0 tensor"));
    }
    let dim = dims[0];
    if dims.iter().any(|&d| d != dim) {
        return Err(invalid(format!("symmetrize needs equal dims, got {dims:?}")));
    }
    if order > MAX_ORDER {
        return Err(invalid(format!("orders above {MAX_ORDER} are not supported")));
    }
    let perms = permutations(order);
    let inv = 1.0 / perms.len() as f64;
    let data = t.data();
    let mut out = vec![0.0; data.len()];
    let mut idx = vec![0; order];
    let mut sorted = vec![0; order];
    let mut moved = vec![0; order];

    for flat in 0..data.len() {
        decode(flat, dim, &mut idx);
        if idx.windows(2).all(|w| w[0] <= w[1]) {
            let sum: f64 = perms
                .iter()
                .map(|perm| {
                    for (slot, &p) in moved.iter_mut().zip(perm) {
                        *slot = idx[p];
                    }
                    data[encode(&moved, dim)]
                })
                .sum();
            out[flat] = sum * inv;
        }
    }
    for flat in 0..data.len() {
        decode(flat, dim, &mut idx);
        sorted.copy_from_slice(&idx);
        sorted.sort_unstable();
        let canon = encode(&sorted, dim);
        if canon != flat {
            out[flat] = out[canon];
        }
    }
    SymTensor::from_data_unchecked(dim, order, out)
}

/// Frobenius inner product of two tensors of identical shape.
pub fn frobenius_inner<A: TensorData, B: TensorData>(t: &A, s: &B) -> Result<f64> {
    if t.shape() != s.shape() {
        return Err(invalid(format!(
            "shape mismatch {:?} vs {:?}",
            t.shape(),
            s.shape()
        )));
    }
    Ok(t.values().iter().zip(s.values()).map(|(a, b)| a * b).sum())
}

/// Contraction `T . S` over the trailing `order(S)` indices of `T`.
///
/// Equal orders give an order-0 tensor holding the Frobenius inner product.
pub fn contract<A: TensorData, B: TensorData>(t: &A, s: &B) -> Result<DenseTensor> {
    let t_dims = t.shape();
    let s_dims = s.shape();
    if s_dims.len() > t_dims.len() {
        return Err(invalid(format!(
            "cannot contract order {} by order {}",
            t_dims.len(),
            s_dims.len()
        )));
    }
    let keep = t_dims.len() - s_dims.len();
    if t_dims[keep..] != s_dims[..] {
        return Err(invalid(format!(
            "trailing dims {:?} do not match {:?}",
            &t_dims[keep..],
            s_dims
        )));
    }
    let inner = s.values().len();
    let sv = s.values();
    let data: Vec<f64> = t
        .values()
        .chunks_exact(inner)
        .map(|row| row.iter().zip(sv).map(|(a, b)| a * b).sum())
        .collect();
    DenseTensor::new(t_dims[..keep].to_vec(), data)
}

/// `Reshape(T, [D^n, D^(m-n)])`.
pub fn flatten(t: &SymTensor, n: usize) -> Result<DenseTensor> {
    if n == 0 || n >= t.order() {
        return Err(invalid(format!(
            "flattening index n={n} must satisfy 1 <= n < m={}",
            t.order()
        )));
    }
    let rows = checked_pow(t.dim(), n)?;
    let cols = checked_pow(t.dim(), t.order() - n)?;
    DenseTensor::new(vec![rows, cols], t.data().to_vec())
}

/// Inverse of [`flatten`]: reinterprets a matrix as an order-`order` tensor.
pub fn unflatten(m: &DenseTensor, dim: usize, order: usize) -> Result<SymTensor> {
    SymTensor::from_data_unchecked(dim, order, m.data().to_vec())
}

/// Flattening as a `D^n x D^(m-n)` matrix.
pub fn flatten_matrix(t: &SymTensor, n: usize) -> Result<DMatrix<f64>> {
    flatten(t, n)?.to_matrix()
}

/// Columnwise Khatri-Rao power: column `j` is `vec(a_j^{(x)n})`.
pub fn khatri_rao_power(a: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(invalid("Khatri-Rao power needs n >= 1"));
    }
    let rows = checked_pow(a.nrows(), n)?;
    let mut out = DMatrix::zeros(rows, a.ncols());
    for (j, col) in a.column_iter().enumerate() {
        let v = kron_power(col.as_slice(), n);
        out.column_mut(j).copy_from_slice(&v);
    }
    Ok(out)
}

/// `sum_i lambda_i a_i^{(x)m}`.
pub fn cp_synthesize(e: &ComponentEnsemble) -> SymTensor {
    let dim = e.dim();
    let order = e.order();
    let len = dim.pow(order as u32);
    let comps: Vec<DVector<f64>> = (0..e.rank()).map(|i| e.component(i)).collect();
    let mut data = vec![0.0; len];
    let mut idx = vec![0; order];
    // a sorted tuple encodes to the smallest flat index among its permutations
    for flat in 0..len {
        decode(flat, dim, &mut idx);
        idx.sort_unstable();
        let canon = encode(&idx, dim);
        data[flat] = if canon < flat {
            data[canon]
        } else {
            e.weights()
                .iter()
                .zip(&comps)
                .map(|(&lambda, a)| lambda * idx.iter().map(|&i| a[i]).product::<f64>())
                .sum()
        };
    }
    SymTensor::from_data_unchecked(dim, order, data).expect("length matches")
}

/// Adds iid `N(0, m! sigma^2)` noise to every entry and symmetrizes. Entries
/// with all-distinct indices of the symmetrized noise have variance `sigma^2`.
pub fn add_gaussian_noise(t: &SymTensor, sigma: f64, rng: &mut SpmRng) -> Result<SymTensor> {
    if !(sigma >= 0.0) {
        return Err(invalid(format!("noise level must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(t.clone());
    }
    let fact: f64 = (1..=t.order()).map(|k| k as f64).product();
    let sd = fact.sqrt() * sigma;
    let data = t
        .data()
        .iter()
        .map(|&v| v + sd * rng::standard_normal(rng))
        .collect();
    symmetrize(&DenseTensor::new(t.shape(), data)?)
}

impl From<SymTensor> for DenseTensor {
    fn from(t: SymTensor) -> Self {
        DenseTensor {
            dims: vec![t.dim; t.order],
            data: t.data,
        }
    }
}

impl TryFrom<DenseTensor> for SymTensor {
    type Error = SpmError;
    fn try_from(t: DenseTensor) -> Result<Self> {
        let dim = *t.dims.first().ok_or_else(|| invalid("order-0 tensor"))?;
        if t.dims.iter().any(|&d| d != dim) {
            return Err(invalid("unequal dims"));
        }
        SymTensor::from_data(dim, t.dims.len(), t.data)
    }
}
