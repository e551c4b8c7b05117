//! Projected gradient ascent on the unit sphere.
//!
//! Both functionals optimized here have the form `f(x) = <pull(x), x>` with
//! Riemannian gradient `c * (pull(x) - f(x) x)`, where `c` is the degree of
//! homogeneity. One step is `x <- (x + gamma pull(x)) / ||x + gamma pull(x)||`.

use nalgebra::DVector;

use crate::error::{invalid, Result, SpmError};
use crate::rng::{self, SpmRng};
use crate::subspace::{self, TensorSubspace};
use crate::tensor::{kron_power, SymTensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AscentConfig {
    /// Step size.
    pub gamma: f64,
    pub max_iters: usize,
    /// Stop when `||x_{k+1} - x_k|| <= x_tol`.
    pub x_tol: f64,
    /// Stop when the Riemannian gradient norm is `<= grad_tol`.
    pub grad_tol: f64,
    /// Minimum objective for a run to be accepted as a component.
    pub accept_tau: f64,
    pub max_restarts: usize,
    /// Halve the step while it would decrease the objective.
    pub backtracking: bool,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self::for_half_order(2)
    }
}

impl AscentConfig {
    /// Defaults with `gamma = 1/(2n)`.
    pub fn for_half_order(n: usize) -> Self {
        Self {
            gamma: 1.0 / (2.0 * n.max(1) as f64),
            max_iters: 5000,
            x_tol: 1e-12,
            grad_tol: 1e-10,
            accept_tau: 0.5,
            max_restarts: 50,
            backtracking: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(invalid(format!("step size must be positive, got {}", self.gamma)));
        }
        if !(self.x_tol > 0.0) || !(self.grad_tol > 0.0) {
            return Err(invalid("tolerances must be positive"));
        }
        if !(0.0..=1.0).contains(&self.accept_tau) {
            return Err(invalid(format!("accept_tau must lie in [0, 1], got {}", self.accept_tau)));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentTrace {
    pub final_x: DVector<f64>,
    pub final_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
    pub objective_history: Vec<f64>,
    /// Riemannian gradient norm at `final_x`.
    pub final_gradient_norm: f64,
}

/// A homogeneous functional on the sphere, `f(x) = <pull(x), x>`.
trait SphereFunctional {
    fn dim(&self) -> usize;
    /// Degree of homogeneity; the Euclidean gradient is `degree * pull`.
    fn degree(&self) -> f64;
    fn value_and_pull(&self, x: &DVector<f64>) -> (f64, DVector<f64>);
}

struct SpmFunctional<'a>(&'a TensorSubspace);

impl SphereFunctional for SpmFunctional<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn degree(&self) -> f64 {
        2.0 * self.0.half_order() as f64
    }
    // 1 - ||r||^2 equals F on the sphere and, unlike ||U^T x^n||^2, resolves
    // changes far below machine epsilon near a maximizer.
    fn value_and_pull(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let e = self.0.evaluate(x);
        (1.0 - e.residual, e.pull)
    }
}

struct PmFunctional<'a>(&'a SymTensor);

impl SphereFunctional for PmFunctional<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn degree(&self) -> f64 {
        self.0.order() as f64
    }
    fn value_and_pull(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let xs = kron_power(x.as_slice(), self.0.order() - 1);
        let pull = subspace::contract_trailing(self.0.data(), &xs, self.0.dim());
        (pull.dot(x), pull)
    }
}

fn check_start(x0: &DVector<f64>, dim: usize) -> Result<()> {
    if x0.len() != dim {
        return Err(invalid(format!("start vector has length {}, expected {dim}", x0.len())));
    }
    if (x0.norm() - 1.0).abs() > subspace::UNIT_TOL {
        return Err(invalid(format!("start vector must be unit norm, got {}", x0.norm())));
    }
    Ok(())
}

fn normalized_step(x: &DVector<f64>, pull: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    let y = x + pull * gamma;
    let norm = y.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(SpmError::DegenerateStep);
    }
    Ok(y / norm)
}

// Consecutive halvings allowed before a step is declared stalled.
const MAX_HALVINGS: usize = 80;

fn ascend<F: SphereFunctional>(func: &F, x0: &DVector<f64>, cfg: &AscentConfig) -> Result<AscentTrace> {
    cfg.validate()?;
    check_start(x0, func.dim())?;
    let degree = func.degree();
    let mut x = x0.clone();
    let (mut f, mut pull) = func.value_and_pull(&x);
    let mut history = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_norm = ((&pull - &x * f) * degree).norm();

    while iterations < cfg.max_iters {
        if grad_norm <= cfg.grad_tol {
            converged = true;
            break;
        }
        let mut gamma = cfg.gamma;
        let mut halvings = 0;
        let (x_new, f_new, pull_new) = loop {
            let cand = normalized_step(&x, &pull, gamma)?;
            let (fc, pc) = func.value_and_pull(&cand);
            if !cfg.backtracking || fc >= f {
                break (cand, fc, pc);
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                // no ascent step at floating-point resolution
                return Ok(AscentTrace {
                    final_objective: f,
                    final_x: x,
                    iterations,
                    converged: false,
                    restarts_used: 0,
                    objective_history: history,
                    final_gradient_norm: grad_norm,
                });
            }
            gamma *= 0.5;
        };
        let step = (&x_new - &x).norm();
        x = x_new;
        f = f_new;
        pull = pull_new;
        grad_norm = ((&pull - &x * f) * degree).norm();
        history.push(f);
        iterations += 1;
        if step <= cfg.x_tol {
            converged = true;
            break;
        }
    }
    if !converged && grad_norm <= cfg.grad_tol {
        converged = true;
    }
    Ok(AscentTrace {
        final_x: x,
        final_objective: f,
        iterations,
        converged,
        restarts_used: 0,
        objective_history: history,
        final_gradient_norm: grad_norm,
    })
}

/// One projected gradient step for the subspace objective.
pub fn spm_step(s: &TensorSubspace, x: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    if !(gamma > 0.0) {
        return Err(invalid(format!("step size must be positive, got {gamma}")));
    }
    let pull = s.pull(x)?;
    normalized_step(x, &pull, gamma)
}

/// Iterates [`spm_step`] from `x0` until the iterate or gradient tolerance is
/// met or `max_iters` is reached.
pub fn run_spm_ascent(s: &TensorSubspace, x0: &DVector<f64>, cfg: &AscentConfig) -> Result<AscentTrace> {
    ascend(&SpmFunctional(s), x0, cfg)
}

/// Same ascent scheme on the power-method functional `<T, x^{(x)m}>`.
pub fn run_pm_ascent(t: &SymTensor, x0: &DVector<f64>, cfg: &AscentConfig) -> Result<AscentTrace> {
    if t.order() < 2 {
        return Err(invalid("power method needs order >= 2"));
    }
    ascend(&PmFunctional(t), x0, cfg)
}

/// Ascent from uniformly random starts until a run ends with objective at
/// least `accept_tau`, drawing at most `max_restarts` new starts.
pub fn solve_component(s: &TensorSubspace, cfg: &AscentConfig, rng: &mut SpmRng) -> Result<AscentTrace> {
    let x0 = rng::unit_sphere(s.dim(), rng);
    solve_component_from(s, &x0, cfg, rng)
}

/// [`solve_component`] with a caller-chosen first start.
pub fn solve_component_from(
    s: &TensorSubspace,
    x0: &DVector<f64>,
    cfg: &AscentConfig,
    rng: &mut SpmRng,
) -> Result<AscentTrace> {
    cfg.validate()?;
    let mut best: Option<AscentTrace> = None;
    let mut start = x0.clone();
    for attempt in 0..=cfg.max_restarts {
        if attempt > 0 {
            start = rng::unit_sphere(s.dim(), rng);
        }
        let mut trace = match run_spm_ascent(s, &start, cfg) {
            Ok(t) => t,
            Err(SpmError::DegenerateStep) => continue,
            Err(e) => return Err(e),
        };
        trace.restarts_used = attempt;
        if trace.final_objective >= cfg.accept_tau {
            return Ok(trace);
        }
        if best.as_ref().is_none_or(|b| trace.final_objective > b.final_objective) {
            best = Some(trace);
        }
    }
    let best = best.unwrap_or_else(|| AscentTrace {
        final_x: start.clone(),
        final_objective: s.objective_unchecked(&start),
        iterations: 0,
        converged: false,
        restarts_used: cfg.max_restarts,
        objective_history: Vec::new(),
        final_gradient_norm: f64::NAN,
    });
    Err(SpmError::NoComponentFound {
        tau: cfg.accept_tau,
        restarts: cfg.max_restarts,
        best: Box::new(best),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{cp_synthesize, sym_outer_power, ComponentEnsemble};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn random_subspace(d: usize, k: usize, n: usize, seed: u64) -> (DMatrix<f64>, TensorSubspace) {
        let mut r = rng::seeded(seed);
        let a = rng::sphere_columns(d, k, &mut r);
        let s = TensorSubspace::from_components(&a, n).unwrap();
        (a, s)
    }

    #[test]
    fn components_are_fixed_points() {
        let (a, s) = random_subspace(5, 6, 2, 1);
        for i in 0..6 {
            let x = a.column(i).into_owned();
            let y = spm_step(&s, &x, 0.25).unwrap();
            assert!((y - &x).amax() < 1e-13);
        }
    }

    #[test]
    fn orthogonal_start_is_fixed() {
        let s = TensorSubspace::from_components(&DMatrix::identity(3, 2), 2).unwrap();
        let x = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        assert_eq!(spm_step(&s, &x, 0.5).unwrap(), x);
    }

    #[test]
    fn rank_one_step_increases_correlation() {
        // span{a^2}, pull = <x, a>^3 a
        let a = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let s = TensorSubspace::from_components(&DMatrix::from_column_slice(3, 1, a.as_slice()), 2).unwrap();
        let x = DVector::from_vec(vec![0.9, (1.0 - 0.81_f64).sqrt(), 0.0]);
        let y = spm_step(&s, &x, 1.0).unwrap();
        let c = 0.9_f64;
        let expected = (c + c.powi(3)) / ((c + c.powi(3)).powi(2) + (1.0 - c * c)).sqrt();
        assert_abs_diff_eq!(y.dot(&a), expected, epsilon = 1e-14);
        assert!(y.dot(&a) > 0.9);
    }

    #[test]
    fn step_rejects_bad_input() {
        let s = TensorSubspace::from_components(&DMatrix::identity(3, 2), 2).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(spm_step(&s, &x, 0.0).is_err());
        assert!(spm_step(&s, &(x * 2.0), 0.5).is_err());
    }

    #[test]
    fn start_at_component_converges_immediately() {
        let (a, s) = random_subspace(6, 8, 2, 2);
        let t = run_spm_ascent(&s, &a.column(3).into_owned(), &AscentConfig::default()).unwrap();
        assert!(t.converged);
        assert!(t.iterations <= 2);
        assert_abs_diff_eq!(t.final_objective, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn backtracking_history_is_monotone() {
        let (_, s) = random_subspace(8, 20, 2, 3);
        let mut r = rng::seeded(4);
        let cfg = AscentConfig {
            gamma: 4.0,
            ..AscentConfig::default()
        };
        for _ in 0..50 {
            let x0 = rng::unit_sphere(8, &mut r);
            let t = run_spm_ascent(&s, &x0, &cfg).unwrap();
            assert!(t.objective_history.windows(2).all(|w| w[1] >= w[0]));
            assert!((t.final_x.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_symmetry_for_even_and_odd_n() {
        for n in [2usize, 3] {
            let (_, s) = random_subspace(5, 6, n, 10 + n as u64);
            let x0 = rng::unit_sphere(5, &mut rng::seeded(99));
            let cfg = AscentConfig::for_half_order(n);
            let p = run_spm_ascent(&s, &x0, &cfg).unwrap();
            let m = run_spm_ascent(&s, &(-&x0), &cfg).unwrap();
            assert_eq!(p.objective_history, m.objective_history);
            assert!((p.final_x + m.final_x).amax() < 1e-15);
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let (_, s) = random_subspace(6, 10, 2, 5);
        let cfg = AscentConfig::default();
        let a = solve_component(&s, &cfg, &mut rng::seeded(77)).unwrap();
        let b = solve_component(&s, &cfg, &mut rng::seeded(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_component_is_found() {
        let (a, s) = random_subspace(5, 1, 2, 6);
        let t = solve_component(&s, &AscentConfig::default(), &mut rng::seeded(1)).unwrap();
        assert!(t.restarts_used <= 1);
        assert_abs_diff_eq!(t.final_objective, 1.0, epsilon = 1e-10);
        assert!(t.final_x.dot(&a.column(0)).abs() > 1.0 - 1e-10);
    }

    #[test]
    fn vacuous_threshold_accepts_first_trace() {
        let (_, s) = random_subspace(6, 10, 2, 7);
        let cfg = AscentConfig {
            accept_tau: 0.0,
            max_iters: 3,
            ..AscentConfig::default()
        };
        let t = solve_component(&s, &cfg, &mut rng::seeded(2)).unwrap();
        assert_eq!(t.restarts_used, 0);
    }

    #[test]
    fn impossible_threshold_reports_best_trace() {
        let (_, s) = random_subspace(4, 2, 2, 8);
        let cfg = AscentConfig {
            accept_tau: 1.0,
            max_iters: 1,
            max_restarts: 3,
            ..AscentConfig::default()
        };
        match solve_component(&s, &cfg, &mut rng::seeded(3)) {
            Err(SpmError::NoComponentFound { restarts, best, .. }) => {
                assert_eq!(restarts, 3);
                assert!(best.final_objective < 1.0);
            }
            other => panic!("expected NoComponentFound, got {other:?}"),
        }
    }

    #[test]
    fn pm_on_rank_one_tensor() {
        let a = DVector::from_vec(vec![0.48, 0.6, 0.64]);
        let t = sym_outer_power(&a, 4).unwrap();
        let x0 = rng::unit_sphere(3, &mut rng::seeded(12));
        let tr = run_pm_ascent(&t, &x0, &AscentConfig::default()).unwrap();
        assert!(tr.converged);
        assert_abs_diff_eq!(tr.final_objective, 1.0, epsilon = 1e-10);
        assert!(tr.final_x.dot(&a).abs() > 1.0 - 1e-8);
    }

    #[test]
    fn pm_on_orthogonal_pair_finds_a_component() {
        let e = ComponentEnsemble::new(4, DVector::from_vec(vec![1.0, 1.0]), DMatrix::identity(2, 2)).unwrap();
        let t = cp_synthesize(&e);
        let x0 = DVector::from_vec(vec![0.8, 0.6]);
        let tr = run_pm_ascent(&t, &x0, &AscentConfig::default()).unwrap();
        assert!(tr.converged);
        let best = tr.final_x[0].abs().max(tr.final_x[1].abs());
        assert!(best > 1.0 - 1e-8);
    }
}
