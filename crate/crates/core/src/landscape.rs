//! Landscape diagnostics: Grammians, frame constants, superlevel thresholds,
//! criticality certificates, RIP checks and the spurious-maximizer
//! construction.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{invalid, Result, SpmError};
use crate::linalg;
use crate::rng::{self, SpmRng};
use crate::subspace::{subspace_distance, TensorSubspace};
use crate::tensor::{kron_power, SymTensor};

/// `(G_n)_ij = <a_i, a_j>^n` with its extreme eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Grammian {
    order: usize,
    matrix: DMatrix<f64>,
    min_eig: f64,
    max_eig: f64,
}

impl Grammian {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.max_eig
    }

    /// `||G^{-1}||_2 = 1 / mu_K`; infinite when `G` is singular.
    pub fn inverse_norm(&self) -> f64 {
        if self.min_eig > 0.0 {
            1.0 / self.min_eig
        } else {
            f64::INFINITY
        }
    }
}

fn check_unit_columns(a: &DMatrix<f64>) -> Result<()> {
    if a.ncols() == 0 || a.nrows() == 0 {
        return Err(invalid("component matrix must be nonempty"));
    }
    for (i, c) in a.column_iter().enumerate() {
        let norm = c.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("column {i} has norm {norm}, expected 1")));
        }
    }
    Ok(())
}

fn check_unit(x: &DVector<f64>, dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(invalid(format!("vector has length {}, expected {dim}", x.len())));
    }
    if (x.norm() - 1.0).abs() > 1e-10 {
        return Err(invalid(format!("vector must be unit norm, got {}", x.norm())));
    }
    Ok(())
}

pub fn grammian(a: &DMatrix<f64>, n: usize) -> Result<Grammian> {
    check_unit_columns(a)?;
    if n == 0 {
        return Err(invalid("Grammian order must be >= 1"));
    }
    let gram = a.tr_mul(a);
    let k = gram.nrows();
    let mut g = gram.map(|v| v.powi(n as i32));
    for i in 0..k {
        g[(i, i)] = 1.0;
        for j in 0..i {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    let ev = linalg::symmetric_eigenvalues(&g);
    Ok(Grammian {
        order: n,
        min_eig: ev[0],
        max_eig: ev[k - 1],
        matrix: g,
    })
}

/// Grammian below this smallest eigenvalue is treated as singular.
pub const GRAMMIAN_FLOOR: f64 = 1e-10;

/// `eta^T G_n^{-1} eta` with `eta = (A^T x)^{.n}`: the noiseless objective
/// computed without forming the tensor subspace.
pub fn objective_via_grammian(a: &DMatrix<f64>, g: &Grammian, x: &DVector<f64>) -> Result<f64> {
    let sigma = expansion_coefficients(a, g, x)?;
    let eta = correlations(a, x)?.map(|z| z.powi(g.order as i32));
    Ok(eta.dot(&sigma))
}

/// `zeta = A^T x`.
pub fn correlations(a: &DMatrix<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_unit(x, a.nrows())?;
    Ok(a.tr_mul(x))
}

/// `sigma = G_n^{-1} zeta^{.n}`: coefficients of the projection of
/// `x^{(x)n}` onto `span{a_i^{(x)n}}` in the rank-one basis.
pub fn expansion_coefficients(a: &DMatrix<f64>, g: &Grammian, x: &DVector<f64>) -> Result<DVector<f64>> {
    if g.matrix.nrows() != a.ncols() {
        return Err(invalid("Grammian size does not match the component count"));
    }
    if g.min_eig <= GRAMMIAN_FLOOR {
        return Err(SpmError::RankDeficient(g.min_eig));
    }
    let eta = correlations(a, x)?.map(|z| z.powi(g.order as i32));
    linalg::spd_solve(&g.matrix, &eta).ok_or(SpmError::RankDeficient(g.min_eig))
}

/// `<T, x^{(x)m}>`.
pub fn pm_objective(t: &SymTensor, x: &DVector<f64>) -> Result<f64> {
    check_unit(x, t.dim())?;
    let xm = kron_power(x.as_slice(), t.order());
    Ok(t.data().iter().zip(&xm).map(|(a, b)| a * b).sum())
}

/// Closed form of the noiseless objective for an equiangular ensemble with
/// `<a_i, a_j>^n = rho` off the diagonal:
/// `(1-rho)^{-1} ||zeta||_{2n}^{2n} - ((1-rho)^2 + K rho (1-rho))^{-1} rho M^2`,
/// `M = sum_i zeta_i^n`.
pub fn equiangular_objective(a: &DMatrix<f64>, n: usize, rho: f64, x: &DVector<f64>) -> Result<f64> {
    if !(rho < 1.0) {
        return Err(invalid(format!("equiangular constant must be < 1, got {rho}")));
    }
    let zeta = correlations(a, x)?;
    let k = a.ncols() as f64;
    let p2n: f64 = zeta.iter().map(|z| z.powi(2 * n as i32)).sum();
    let m: f64 = zeta.iter().map(|z| z.powi(n as i32)).sum();
    let one = 1.0 - rho;
    Ok(p2n / one - rho * m * m / (one * one + k * rho * one))
}

/// `max_{i != j} |<a_i, a_j>|`.
pub fn mutual_incoherence(a: &DMatrix<f64>) -> f64 {
    let g = a.tr_mul(a);
    let mut best = 0.0_f64;
    for j in 0..g.ncols() {
        for i in 0..j {
            best = best.max(g[(i, j)].abs());
        }
    }
    best
}

/// Interval estimate of `rho_s = sup_x sum_i |<x, a_i>|^s - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEstimate {
    pub s: usize,
    /// Best value found by maximization, minus one.
    pub lower: f64,
    /// `mu_1(G_{floor(s/2)}) - 1`.
    pub upper: f64,
    /// `max_i sum_{j != i} |<a_i, a_j>|^{floor(s/2)}`.
    pub gershgorin: f64,
    pub argmax: DVector<f64>,
    /// `true` when `lower` comes from the dense angular grid (D = 2).
    pub exact: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameConstants {
    pub entries: BTreeMap<usize, FrameEstimate>,
}

impl FrameConstants {
    pub fn get(&self, s: usize) -> Option<&FrameEstimate> {
        self.entries.get(&s)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,lower,upper,gershgorin,exact\n");
        for e in self.entries.values() {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{}\n",
                e.s, e.lower, e.upper, e.gershgorin, e.exact
            ));
        }
        out
    }
}

impl fmt::Display for FrameConstants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in self.entries.values() {
            writeln!(
                f,
                "rho_{}: [{:.6e}, {:.6e}]  gershgorin {:.6e}{}",
                e.s,
                e.lower,
                e.upper,
                e.gershgorin,
                if e.exact { "  (grid)" } else { "" }
            )?;
        }
        Ok(())
    }
}

fn frame_sum(a: &DMatrix<f64>, x: &DVector<f64>, s: usize) -> f64 {
    a.tr_mul(x).iter().map(|z| z.abs().powi(s as i32)).sum()
}

/// Fixed-point iteration `x <- grad g(x) / ||grad g(x)||` for the convex
/// `g(x) = sum_i |<x, a_i>|^s`; each step does not decrease `g`.
fn frame_ascent(a: &DMatrix<f64>, x0: DVector<f64>, s: usize, max_iters: usize) -> (DVector<f64>, f64) {
    let mut x = x0;
    let mut val = frame_sum(a, &x, s);
    for _ in 0..max_iters {
        let z = a.tr_mul(&x);
        let w = z.map(|v| v.signum() * v.abs().powi(s as i32 - 1));
        let g = a * w;
        let norm = g.norm();
        if norm == 0.0 {
            break;
        }
        let next = g / norm;
        let next_val = frame_sum(a, &next, s);
        let step = (&next - &x).norm();
        if next_val < val {
            break;
        }
        x = next;
        val = next_val;
        if step < 1e-14 {
            break;
        }
    }
    (x, val)
}

const FRAME_ITERS: usize = 2000;
const GRID_POINTS: usize = 1_000_000;

/// Estimates `rho_s` as an interval.
///
/// The lower end maximizes `g` from each column `a_i` (up to `budget` of
/// them) and from `budget` uniform starts. For `D = 2` a dense angular
/// grid followed by local refinement gives the supremum to high accuracy.
pub fn estimate_rho(a: &DMatrix<f64>, s: usize, budget: usize, rng: &mut SpmRng) -> Result<FrameEstimate> {
    check_unit_columns(a)?;
    if s < 2 {
        return Err(invalid(format!("frame constants need s >= 2, got {s}")));
    }
    let d = a.nrows();
    let k = a.ncols();
    let mut best_x = a.column(0).into_owned();
    let mut best = frame_sum(a, &best_x, s);
    let consider = |x: DVector<f64>, best: &mut f64, best_x: &mut DVector<f64>| {
        let (x, v) = frame_ascent(a, x, s, FRAME_ITERS);
        if v > *best {
            *best = v;
            *best_x = x;
        }
    };
    let exact = d == 2;
    if exact {
        let mut grid_best = (0.0, f64::NEG_INFINITY);
        for i in 0..GRID_POINTS {
            let t = std::f64::consts::PI * i as f64 / GRID_POINTS as f64;
            let (sn, cs) = t.sin_cos();
            let v: f64 = (0..k)
                .map(|j| (cs * a[(0, j)] + sn * a[(1, j)]).abs().powi(s as i32))
                .sum();
            if v > grid_best.1 {
                grid_best = (t, v);
            }
        }
        let (sn, cs) = grid_best.0.sin_cos();
        consider(DVector::from_vec(vec![cs, sn]), &mut best, &mut best_x);
    }
    for i in 0..k.min(budget.max(1)) {
        consider(a.column(i).into_owned(), &mut best, &mut best_x);
    }
    for _ in 0..budget {
        consider(rng::unit_sphere(d, rng), &mut best, &mut best_x);
    }

    let half = s / 2;
    let upper = grammian(a, half)?.max_eig - 1.0;
    let g1 = a.tr_mul(a);
    let gershgorin = (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i)
                .map(|j| g1[(i, j)].abs().powi(half as i32))
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    Ok(FrameEstimate {
        s,
        lower: best - 1.0,
        upper,
        gershgorin,
        argmax: best_x,
        exact,
    })
}

pub fn frame_constants(a: &DMatrix<f64>, orders: &[usize], budget: usize, rng: &mut SpmRng) -> Result<FrameConstants> {
    let mut out = FrameConstants::default();
    for &s in orders {
        out.entries.insert(s, estimate_rho(a, s, budget, rng)?);
    }
    Ok(out)
}

/// Superlevel thresholds above which second-order critical points are near components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSet {
    pub n: usize,
    /// `1/6 - n^2 rho_2 - (n^2 + n) rho_n`.
    pub tau: f64,
    /// `2 tau / (2 + 4 tau + 3 n^2)`, present when `tau > 0`.
    pub delta0: Option<f64>,
    /// `K ln^n(K) / D^n`.
    pub eps_k: f64,
    /// Level constant `C` of the overcomplete level `C eps_K + 5 Delta`.
    pub level_constant: Option<f64>,
}

impl ThresholdSet {
    /// `(2 + 2 tau + 3 n^2) / (2 tau) * delta`, present when `tau > 0`.
    pub fn det_level(&self, delta: f64) -> Option<f64> {
        if self.tau > 0.0 {
            let n2 = (self.n * self.n) as f64;
            Some((2.0 + 2.0 * self.tau + 3.0 * n2) / (2.0 * self.tau) * delta)
        } else {
            None
        }
    }

    /// `C eps_K + 5 delta` when a level constant was supplied.
    pub fn overcomplete_level(&self, delta: f64) -> Option<f64> {
        self.level_constant.map(|c| c * self.eps_k + 5.0 * delta)
    }

    pub fn with_level_constant(mut self, c: f64) -> Self {
        self.level_constant = Some(c);
        self
    }

    /// The deterministic level when available, else the overcomplete one.
    pub fn level(&self, delta: f64) -> Option<f64> {
        self.det_level(delta).or_else(|| self.overcomplete_level(delta))
    }
}

pub fn thresholds(rho2: f64, rho_n: f64, n: usize, d: usize, k: usize) -> ThresholdSet {
    let nf = n as f64;
    let tau = 1.0 / 6.0 - nf * nf * rho2 - (nf * nf + nf) * rho_n;
    let delta0 = (tau > 0.0).then(|| 2.0 * tau / (2.0 + 4.0 * tau + 3.0 * nf * nf));
    let eps_k = if k == 0 {
        0.0
    } else {
        let kf = k as f64;
        kf * kf.ln().powi(n as i32) / (d as f64).powi(n as i32)
    };
    ThresholdSet {
        n,
        tau,
        delta0,
        eps_k,
        level_constant: None,
    }
}

/// Index, sign and distance of the closest `s a_i`.
pub fn nearest_component(a: &DMatrix<f64>, x: &DVector<f64>) -> (usize, f64, f64) {
    let mut best = (0, 1.0, f64::INFINITY);
    for (i, col) in a.column_iter().enumerate() {
        let ip = col.dot(x);
        let s = if ip >= 0.0 { 1.0 } else { -1.0 };
        let dist = (col * s - x).norm();
        if dist < best.2 {
            best = (i, s, dist);
        }
    }
    best
}

/// Tolerances of [`certify_point_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyTolerances {
    pub gradient: f64,
    pub hessian: f64,
    /// Added to `sqrt(2 Delta / n)` before comparing distances.
    pub distance: f64,
}

impl Default for CertifyTolerances {
    fn default() -> Self {
        Self {
            gradient: 1e-6,
            hessian: 1e-6,
            distance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// No usable level: `tau <= 0` and no overcomplete constant.
    Disabled,
    /// Fails the first- or second-order check.
    NotCritical,
    /// Second-order critical but below the superlevel threshold.
    BelowLevel,
    /// In the superlevel set and within `sqrt(2 Delta / n)` of a component.
    Pass,
    /// In the superlevel set but too far from every component.
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Disabled => "disabled",
            Verdict::NotCritical => "not-critical",
            Verdict::BelowLevel => "below-level",
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalityReport {
    pub objective: f64,
    pub gradient_norm: f64,
    pub max_hessian_eigenvalue: f64,
    pub nearest_index: usize,
    pub nearest_sign: f64,
    pub nearest_distance: f64,
    /// Distance between the subspace and `span{a_i^{(x)n}}`.
    pub delta: f64,
    pub level: Option<f64>,
    pub first_order: bool,
    pub second_order: bool,
    pub verdict: Verdict,
    pub zeta: DVector<f64>,
    /// `G_n^{-1} zeta^{.n}`; `None` when the Grammian is singular.
    pub sigma: Option<DVector<f64>>,
}

impl CriticalityReport {
    pub fn to_csv(&self) -> String {
        let level = self.level.map_or(String::from("nan"), |l| format!("{l:.16e}"));
        format!(
            "objective,gradient_norm,max_hessian_eigenvalue,nearest_index,nearest_sign,nearest_distance,delta,level,verdict\n\
             {:.16e},{:.16e},{:.16e},{},{},{:.16e},{:.16e},{},{}\n",
            self.objective,
            self.gradient_norm,
            self.max_hessian_eigenvalue,
            self.nearest_index,
            self.nearest_sign,
            self.nearest_distance,
            self.delta,
            level,
            self.verdict
        )
    }
}

impl fmt::Display for CriticalityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "objective            {:.12e}", self.objective)?;
        writeln!(f, "gradient norm        {:.3e}", self.gradient_norm)?;
        writeln!(f, "max tangent Hessian  {:.6e}", self.max_hessian_eigenvalue)?;
        writeln!(
            f,
            "nearest component    {}{} at distance {:.6e}",
            if self.nearest_sign < 0.0 { "-a_" } else { "+a_" },
            self.nearest_index,
            self.nearest_distance
        )?;
        writeln!(f, "subspace distance    {:.6e}", self.delta)?;
        match self.level {
            Some(l) => writeln!(f, "superlevel threshold {l:.6e}")?,
            None => writeln!(f, "superlevel threshold unavailable")?,
        }
        write!(f, "verdict              {}", self.verdict)
    }
}

pub fn certify_point(
    s: &TensorSubspace,
    truth: &DMatrix<f64>,
    x: &DVector<f64>,
    thr: &ThresholdSet,
) -> Result<CriticalityReport> {
    certify_point_with(s, truth, x, thr, &CertifyTolerances::default())
}

/// Evaluates the first- and second-order conditions at `x` and checks the
/// superlevel-set conclusion: a second-order critical point above the level
/// lies within `sqrt(2 Delta / n)` of some `+-a_i`.
pub fn certify_point_with(
    s: &TensorSubspace,
    truth: &DMatrix<f64>,
    x: &DVector<f64>,
    thr: &ThresholdSet,
    tol: &CertifyTolerances,
) -> Result<CriticalityReport> {
    check_unit_columns(truth)?;
    if truth.nrows() != s.dim() {
        return Err(invalid("truth and subspace dimensions differ"));
    }
    let n = s.half_order();
    let objective = s.objective(x)?;
    let gradient_norm = s.riemannian_gradient(x)?.norm();
    let max_hessian_eigenvalue = s.max_tangent_hessian_eigenvalue(x)?;
    let (nearest_index, nearest_sign, nearest_distance) = nearest_component(truth, x);
    let reference = TensorSubspace::from_components(truth, n)?;
    let delta = subspace_distance(s, &reference)?;
    let level = thr.level(delta);
    let first_order = gradient_norm <= tol.gradient;
    let second_order = first_order && max_hessian_eigenvalue <= tol.hessian;
    let verdict = match level {
        None => Verdict::Disabled,
        Some(_) if !second_order => Verdict::NotCritical,
        Some(l) if objective < l => Verdict::BelowLevel,
        Some(_) => {
            if nearest_distance <= (2.0 * delta / n as f64).sqrt() + tol.distance {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
    };
    let g = grammian(truth, n)?;
    let sigma = expansion_coefficients(truth, &g, x).ok();
    Ok(CriticalityReport {
        objective,
        gradient_norm,
        max_hessian_eigenvalue,
        nearest_index,
        nearest_sign,
        nearest_distance,
        delta,
        level,
        first_order,
        second_order,
        verdict,
        zeta: truth.tr_mul(x),
        sigma,
    })
}

/// `span{sqrt(1 - delta^2) a^{(x)n} - delta b^{(x)n}}` for orthonormal `a, b`:
/// a one-dimensional subspace at distance `delta` from `span{a^{(x)n}}` on
/// which `b` is a strict local maximizer with value `delta^2`.
pub fn spurious_construction(a: &DVector<f64>, b: &DVector<f64>, delta: f64, n: usize) -> Result<TensorSubspace> {
    let d = a.len();
    check_unit(a, d)?;
    check_unit(b, d)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if n == 0 {
        return Err(invalid("order must be >= 1"));
    }
    let ip = a.dot(b);
    if ip.abs() > 1e-12 {
        return Err(invalid(format!("a and b must be orthogonal, <a, b> = {ip:e}")));
    }
    let c = (1.0 - delta * delta).sqrt();
    let an = kron_power(a.as_slice(), n);
    let bn = kron_power(b.as_slice(), n);
    let mut v = DVector::from_iterator(an.len(), an.iter().zip(&bn).map(|(x, y)| c * x - delta * y));
    v /= v.norm();
    TensorSubspace::from_basis(d, n, DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RipReport {
    pub p: usize,
    pub delta: f64,
    /// Largest `||A_p^T A_p - I||_2` found.
    pub max_deviation: f64,
    pub worst_subset: Vec<usize>,
    pub subsets_checked: usize,
    /// `true` when every subset was checked.
    pub exhaustive: bool,
    pub holds: bool,
}

const RIP_EXHAUSTIVE_LIMIT: f64 = 1e6;
const RIP_SAMPLES: usize = 10_000;

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn subset_deviation(gram: &DMatrix<f64>, idx: &[usize]) -> f64 {
    let p = idx.len();
    let sub = DMatrix::from_fn(p, p, |i, j| gram[(idx[i], idx[j])] - if i == j { 1.0 } else { 0.0 });
    if p == 1 {
        return sub[(0, 0)].abs();
    }
    linalg::symmetric_eigenvalues(&sub).iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let p = idx.len();
    let mut i = p;
    while i > 0 {
        i -= 1;
        if idx[i] < n - p + i {
            idx[i] += 1;
            for j in i + 1..p {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Checks `||A_p^T A_p - I||_2 <= delta` over all `p`-column submatrices
/// when there are at most `10^6` of them, otherwise over `10^4` random ones.
pub fn rip_check(a: &DMatrix<f64>, p: usize, delta: f64, rng: &mut SpmRng) -> Result<RipReport> {
    check_unit_columns(a)?;
    let k = a.ncols();
    if p == 0 || p > k {
        return Err(invalid(format!("subset size {p} outside 1..={k}")));
    }
    let gram = a.tr_mul(a);
    let exhaustive = binomial(k, p) <= RIP_EXHAUSTIVE_LIMIT;
    let mut worst = (0.0_f64, (0..p).collect::<Vec<_>>());
    let mut checked = 0;
    let mut visit = |idx: &[usize]| {
        let dev = subset_deviation(&gram, idx);
        checked += 1;
        if dev > worst.0 {
            worst = (dev, idx.to_vec());
        }
    };
    if exhaustive {
        let mut idx: Vec<usize> = (0..p).collect();
        loop {
            visit(&idx);
            if !next_combination(&mut idx, k) {
                break;
            }
        }
    } else {
        let mut pool: Vec<usize> = (0..k).collect();
        for _ in 0..RIP_SAMPLES {
            for i in 0..p {
                let j = rng.random_range(i..k);
                pool.swap(i, j);
            }
            let mut idx = pool[..p].to_vec();
            idx.sort_unstable();
            visit(&idx);
        }
    }
    Ok(RipReport {
        p,
        delta,
        max_deviation: worst.0,
        worst_subset: worst.1,
        subsets_checked: checked,
        exhaustive,
        holds: worst.0 <= delta,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RipPartition {
    /// Indices of the `p` largest `<a_i, x>^2`, in decreasing order.
    pub indices: Vec<usize>,
    pub in_set_sum: f64,
    /// `1 - delta <= in_set_sum <= 1 + delta`.
    pub in_set_ok: bool,
    pub max_off_set: f64,
    /// `max_off_set <= (1 + delta) / p`.
    pub off_set_ok: bool,
}

pub fn rip_partition(a: &DMatrix<f64>, x: &DVector<f64>, p: usize, delta: f64) -> Result<RipPartition> {
    let k = a.ncols();
    if p == 0 || p > k {
        return Err(invalid(format!("subset size {p} outside 1..={k}")));
    }
    let sq = correlations(a, x)?.map(|z| z * z);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| sq[j].total_cmp(&sq[i]));
    let indices = order[..p].to_vec();
    let in_set_sum: f64 = indices.iter().map(|&i| sq[i]).sum();
    let max_off_set = order[p..].iter().map(|&i| sq[i]).fold(0.0, f64::max);
    Ok(RipPartition {
        indices,
        in_set_sum,
        in_set_ok: (1.0 - delta..=1.0 + delta).contains(&in_set_sum),
        max_off_set,
        off_set_ok: max_off_set <= (1.0 + delta) / p as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ascent::{run_spm_ascent, AscentConfig};
    use crate::tensor::{cp_synthesize, ComponentEnsemble};
    use approx::assert_abs_diff_eq;

    fn mercedes() -> DMatrix<f64> {
        let angles = [0.0, 2.0 * std::f64::consts::PI / 3.0, 4.0 * std::f64::consts::PI / 3.0];
        DMatrix::from_fn(2, 3, |i, j| if i == 0 { angles[j].cos() } else { angles[j].sin() })
    }

    #[test]
    fn grammian_closed_forms() {
        let g = grammian(&DMatrix::identity(4, 4), 3).unwrap();
        assert_eq!(g.matrix(), &DMatrix::identity(4, 4));
        assert_abs_diff_eq!(g.min_eigenvalue(), 1.0, epsilon = 1e-15);

        let c: f64 = 0.6;
        let a = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, c, (1.0 - c * c).sqrt()]);
        let g = grammian(&a, 2).unwrap();
        assert_abs_diff_eq!(g.matrix()[(0, 1)], c * c, epsilon = 1e-15);
        assert_abs_diff_eq!(g.min_eigenvalue(), 1.0 - c * c, epsilon = 1e-14);
        assert_abs_diff_eq!(g.max_eigenvalue(), 1.0 + c * c, epsilon = 1e-14);

        let one = grammian(&DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]), 2).unwrap();
        assert_eq!(one.min_eigenvalue(), 1.0);
        assert!(grammian(&DMatrix::from_column_slice(2, 1, &[1.0, 1.0]), 2).is_err());
    }

    #[test]
    fn grammian_objective_matches_projector() {
        let mut r = rng::seeded(4);
        let a = rng::sphere_columns(8, 12, &mut r);
        let g = grammian(&a, 2).unwrap();
        let s = TensorSubspace::from_components(&a, 2).unwrap();
        for _ in 0..100 {
            let x = rng::unit_sphere(8, &mut r);
            let f1 = objective_via_grammian(&a, &g, &x).unwrap();
            let f2 = s.objective(&x).unwrap();
            assert_abs_diff_eq!(f1, f2, epsilon = 1e-9);
        }
        for i in 0..12 {
            assert_abs_diff_eq!(objective_via_grammian(&a, &g, &a.column(i).into_owned()).unwrap(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn grammian_objective_rank_one_and_singular() {
        let a = DMatrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0]);
        let g = grammian(&a, 3).unwrap();
        let x = DVector::from_vec(vec![0.0, 0.6, 0.8]);
        assert_abs_diff_eq!(objective_via_grammian(&a, &g, &x).unwrap(), 0.48_f64.powi(6), epsilon = 1e-15);

        let dup = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let g = grammian(&dup, 2).unwrap();
        assert!(matches!(
            objective_via_grammian(&dup, &g, &x.rows(0, 2).normalize()),
            Err(SpmError::RankDeficient(_))
        ));
    }

    #[test]
    fn pm_objective_values() {
        let a = DVector::from_vec(vec![0.0, 0.6, 0.8]);
        let t = crate::tensor::sym_outer_power(&a, 4).unwrap();
        assert_abs_diff_eq!(pm_objective(&t, &a).unwrap(), 1.0, epsilon = 1e-15);
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(pm_objective(&t, &x).unwrap(), 0.0, epsilon = 1e-15);
        let mut r = rng::seeded(3);
        let e = ComponentEnsemble::new(4, DVector::from_vec(vec![1.5, -0.5]), rng::sphere_columns(3, 2, &mut r)).unwrap();
        let t2 = cp_synthesize(&e);
        let y = rng::unit_sphere(3, &mut r);
        let sum = SymTensor::from_data(3, 4, t.data().iter().zip(t2.data()).map(|(u, v)| 2.0 * u + v).collect()).unwrap();
        assert_abs_diff_eq!(
            pm_objective(&sum, &y).unwrap(),
            2.0 * pm_objective(&t, &y).unwrap() + pm_objective(&t2, &y).unwrap(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn equiangular_identity() {
        // orthonormal: F = ||zeta||_4^4
        let mut r = rng::seeded(8);
        let a = DMatrix::identity(5, 3);
        let s = TensorSubspace::from_components(&a, 2).unwrap();
        for _ in 0..20 {
            let x = rng::unit_sphere(5, &mut r);
            let direct: f64 = (0..3).map(|i| x[i].powi(4)).sum();
            assert_abs_diff_eq!(equiangular_objective(&a, 2, 0.0, &x).unwrap(), direct, epsilon = 1e-14);
            assert_abs_diff_eq!(s.objective(&x).unwrap(), direct, epsilon = 1e-12);
        }
        // three lines at 120 degrees: squares span all 2x2 symmetric matrices, F == 1
        let a = mercedes();
        let s = TensorSubspace::from_components(&a, 2).unwrap();
        for _ in 0..20 {
            let x = rng::unit_sphere(2, &mut r);
            assert_abs_diff_eq!(equiangular_objective(&a, 2, 0.25, &x).unwrap(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(s.objective(&x).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rho_orthonormal_and_parseval() {
        let mut r = rng::seeded(1);
        for s in [2, 3, 4, 6] {
            let est = estimate_rho(&DMatrix::identity(4, 4), s, 10, &mut r).unwrap();
            assert_abs_diff_eq!(est.lower, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(est.upper, 0.0, epsilon = 1e-12);
        }
        let est = estimate_rho(&DMatrix::identity(2, 2), 2, 4, &mut r).unwrap();
        assert!(est.exact);
        assert_abs_diff_eq!(est.lower, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rho_is_monotone_and_bracketed() {
        let mut r = rng::seeded(6);
        let a = rng::sphere_columns(6, 15, &mut r);
        let fc = frame_constants(&a, &[2, 3, 4, 5, 6], 20, &mut r).unwrap();
        let mu = mutual_incoherence(&a);
        let mut prev = f64::INFINITY;
        for e in fc.entries.values() {
            assert!(e.lower >= 0.0);
            assert!(e.lower <= e.upper + 1e-9, "s={} {} > {}", e.s, e.lower, e.upper);
            assert!(e.upper <= e.gershgorin + 1e-9);
            assert!(e.lower <= 14.0 * mu.powi((e.s / 2) as i32) + 1e-9);
            assert!(e.lower <= prev + 1e-9);
            prev = e.lower;
        }
        assert!(fc.to_csv().lines().count() == 6);
        assert!(fc.to_string().contains("rho_4"));
    }

    #[test]
    fn mercedes_frame_constant_exact() {
        // sum_i cos^2(t - 2 pi i / 3) = 3/2 for every t
        let est = estimate_rho(&mercedes(), 2, 2, &mut rng::seeded(0)).unwrap();
        assert_abs_diff_eq!(est.lower, 0.5, epsilon = 1e-12);
        // sum_i cos^4 = 9/8
        let est = estimate_rho(&mercedes(), 4, 2, &mut rng::seeded(0)).unwrap();
        assert_abs_diff_eq!(est.lower, 0.125, epsilon = 1e-12);
    }

    #[test]
    fn threshold_values() {
        let t = thresholds(0.0, 0.0, 2, 10, 5);
        assert_abs_diff_eq!(t.tau, 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.delta0.unwrap(), 1.0 / 44.0, epsilon = 1e-15);
        assert_eq!(t.det_level(0.0), Some(0.0));
        let t = thresholds(0.0, 0.0, 2, 20, 100);
        assert_abs_diff_eq!(t.eps_k, 100.0 * 100f64.ln().powi(2) / 400.0, epsilon = 1e-12);
        assert!((t.eps_k - 5.30).abs() < 0.01);
        for n in 2..5 {
            let d0 = thresholds(0.001, 0.002, n, 10, 10).delta0.unwrap();
            assert!(d0 > 0.0 && d0 < 0.5);
        }
        let bad = thresholds(0.1, 0.1, 2, 10, 10);
        assert!(bad.tau < 0.0);
        assert_eq!(bad.delta0, None);
        assert_eq!(bad.level(0.1), None);
        assert_abs_diff_eq!(bad.with_level_constant(2.0).level(0.1).unwrap(), 2.0 * bad.eps_k + 0.5, epsilon = 1e-15);
    }

    #[test]
    fn certify_component_passes() {
        let mut r = rng::seeded(12);
        let a = rng::sphere_columns(6, 4, &mut r);
        let s = TensorSubspace::from_components(&a, 2).unwrap();
        let thr = thresholds(0.0, 0.0, 2, 6, 4);
        let rep = certify_point(&s, &a, &a.column(2).into_owned(), &thr).unwrap();
        assert!(rep.gradient_norm < 1e-12);
        assert_abs_diff_eq!(rep.objective, 1.0, epsilon = 1e-12);
        assert_eq!(rep.nearest_index, 2);
        assert!(rep.nearest_distance < 1e-15);
        assert!(rep.delta < 1e-12);
        assert_eq!(rep.verdict, Verdict::Pass);
        let sigma = rep.sigma.clone().unwrap();
        assert_abs_diff_eq!(sigma[2], 1.0, epsilon = 1e-10);
        assert!(rep.zeta.iter().all(|z| z.abs() <= 1.0 + 1e-15));
        assert!(rep.to_csv().contains("pass"));
        assert!(rep.to_string().contains("+a_2"));
    }

    #[test]
    fn certify_rejects_spurious_point() {
        let a = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let s = spurious_construction(&a, &b, 0.3, 2).unwrap();
        let truth = DMatrix::from_column_slice(3, 1, a.as_slice());
        let thr = thresholds(0.0, 0.0, 2, 3, 1);
        let rep = certify_point(&s, &truth, &b, &thr).unwrap();
        assert_abs_diff_eq!(rep.objective, 0.09, epsilon = 1e-12);
        assert!(rep.gradient_norm < 1e-12);
        assert!(rep.max_hessian_eigenvalue < 0.0);
        assert_abs_diff_eq!(rep.delta, 0.3, epsilon = 1e-12);
        assert_eq!(rep.verdict, Verdict::BelowLevel);
    }

    #[test]
    fn certify_converged_ascent_points() {
        let mut r = rng::seeded(31);
        let a = rng::sphere_columns(8, 10, &mut r);
        let s = TensorSubspace::from_components(&a, 2).unwrap();
        let thr = thresholds(0.0, 0.0, 2, 8, 10);
        let cfg = AscentConfig::default();
        for _ in 0..10 {
            let tr = run_spm_ascent(&s, &rng::unit_sphere(8, &mut r), &cfg).unwrap();
            if tr.converged && tr.final_objective > 0.5 {
                let rep = certify_point(&s, &a, &tr.final_x, &thr).unwrap();
                assert_eq!(rep.verdict, Verdict::Pass);
            }
        }
        let thr_off = thresholds(1.0, 1.0, 2, 8, 10);
        let rep = certify_point(&s, &a, &a.column(0).into_owned(), &thr_off).unwrap();
        assert_eq!(rep.verdict, Verdict::Disabled);
    }

    #[test]
    fn spurious_construction_properties() {
        let a = DVector::from_vec(vec![0.6, 0.8, 0.0, 0.0]);
        let b = DVector::from_vec(vec![-0.8, 0.6, 0.0, 0.0]);
        for n in [2, 3] {
            let reference = TensorSubspace::from_components(&DMatrix::from_column_slice(4, 1, a.as_slice()), n).unwrap();
            for delta in [0.1, 0.3, 0.5] {
                let s = spurious_construction(&a, &b, delta, n).unwrap();
                assert_eq!(s.rank(), 1);
                assert_abs_diff_eq!(subspace_distance(&reference, &s).unwrap(), delta, epsilon = 1e-10);
                assert_abs_diff_eq!(s.objective(&b).unwrap(), delta * delta, epsilon = 1e-12);
                assert_abs_diff_eq!(s.objective(&a).unwrap(), 1.0 - delta * delta, epsilon = 1e-12);
                assert!(s.riemannian_gradient(&b).unwrap().norm() <= 1e-12);
                let h = s.max_tangent_hessian_eigenvalue(&b).unwrap();
                assert!(h <= -2.0 * n as f64 * delta * delta + 1e-10);
            }
        }
        let bad = DVector::from_vec(vec![0.6, 0.8, 0.0, 0.0]);
        assert!(spurious_construction(&a, &bad, 0.3, 2).is_err());
        assert!(spurious_construction(&a, &b, 1.0, 2).is_err());
    }

    #[test]
    fn rip_examples() {
        let mut r = rng::seeded(2);
        let rep = rip_check(&DMatrix::identity(5, 5), 3, 1e-3, &mut r).unwrap();
        assert_eq!(rep.max_deviation, 0.0);
        assert!(rep.holds && rep.exhaustive);
        assert_eq!(rep.subsets_checked, 10);

        let a = rng::sphere_columns(6, 9, &mut r);
        assert!(rip_check(&a, 1, 1e-12, &mut r).unwrap().max_deviation < 1e-12);

        // four nearly collinear columns
        let eps = 0.05_f64;
        let cols: Vec<f64> = (0..4)
            .flat_map(|i| {
                let t = eps * i as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let a = DMatrix::from_column_slice(2, 4, &cols);
        let rep = rip_check(&a, 2, 0.1, &mut r).unwrap();
        assert!(!rep.holds);
        let worst = rep.worst_subset.clone();
        let ip = a.column(worst[0]).dot(&a.column(worst[1])).abs();
        assert_abs_diff_eq!(rep.max_deviation, ip, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.max_deviation, eps.cos(), epsilon = 1e-12);

        let big = rng::sphere_columns(10, 200, &mut r);
        let rep = rip_check(&big, 5, 0.5, &mut r).unwrap();
        assert!(!rep.exhaustive);
        assert_eq!(rep.subsets_checked, 10_000);
    }

    #[test]
    fn rip_partition_examples() {
        let a = DMatrix::identity(4, 4);
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let p = rip_partition(&a, &e1, 1, 0.1).unwrap();
        assert_eq!(p.indices, vec![0]);
        assert_abs_diff_eq!(p.in_set_sum, 1.0, epsilon = 1e-15);
        assert!(p.in_set_ok && p.off_set_ok);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let x = DVector::from_vec(vec![0.0, h, h, 0.0]);
        let p = rip_partition(&a, &x, 2, 0.1).unwrap();
        assert_abs_diff_eq!(p.in_set_sum, 1.0, epsilon = 1e-15);
        let mut idx = p.indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, vec![1, 2]);
    }

    #[test]
    fn rip_partition_off_set_oracle() {
        let mut r = rng::seeded(40);
        let a = rng::sphere_columns(40, 200, &mut r);
        let (p, delta) = (10, 0.5);
        for _ in 0..100 {
            let x = rng::unit_sphere(40, &mut r);
            let part = rip_partition(&a, &x, p, delta).unwrap();
            let mut sq: Vec<f64> = a.tr_mul(&x).iter().map(|z| z * z).collect();
            sq.sort_by(|u, v| v.total_cmp(u));
            assert_abs_diff_eq!(part.max_off_set, sq[p], epsilon = 1e-15);
            assert_abs_diff_eq!(part.in_set_sum, sq[..p].iter().sum::<f64>(), epsilon = 1e-13);
            assert!(part.off_set_ok);
        }
    }
}
