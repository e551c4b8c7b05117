//! Random models and the experiment runners.
//!
//! Every `(cell, trial)` job draws from its own stream keyed by the seed, a
//! purpose tag and the cell parameters, so results do not depend on the
//! worker count or on which other cells are in the grid. Jobs run on a rayon
//! pool and are merged back in job order.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use spm_core::landscape::nearest_component;
use spm_core::rng::{self, SpmRng};
use spm_core::{
    add_gaussian_noise, cp_synthesize, decompose, extract_subspace, grammian, match_components,
    run_pm_ascent, run_spm_ascent, AscentConfig, ComponentEnsemble, RankRule, SymTensor, TensorSubspace,
};

use crate::error::{HarnessError, Result};
use crate::spec::{Cell, ExperimentKind, ExperimentSpec};
use crate::table::{linear_fit, ResultTable, Row};

const ENSEMBLE: u64 = 0;
const INITS: u64 = 1;
const NOISE: u64 = 2;
const DECOMPOSE: u64 = 3;
const FRAME: u64 = 4;
const SAMPLES: u64 = 5;

/// Environment variable overriding the number of worker threads.
pub const THREADS_ENV: &str = "SPM_THREADS";

/// Random ensemble: `a_i` uniform on the sphere and
/// `lambda_i = sqrt(D^m / K) * u_i` with `u_i ~ Unif[1/2, 2]`, so entries of
/// the synthesized tensor have variance of order one.
pub fn random_ensemble(d: usize, k: usize, m: usize, rng: &mut SpmRng) -> Result<ComponentEnsemble> {
    if d == 0 || k == 0 {
        return Err(HarnessError::Spec(format!("ensemble needs d, k >= 1, got d={d}, k={k}")));
    }
    let a = rng::sphere_columns(d, k, rng);
    let scale = ((d as f64).powi(m as i32) / k as f64).sqrt();
    let weights = DVector::from_fn(k, |_, _| scale * rng.random_range(0.5..=2.0));
    Ok(ComponentEnsemble::new(m, weights, a)?)
}

pub fn gen_random_ensemble(d: usize, k: usize, m: usize, seed: u64) -> Result<ComponentEnsemble> {
    random_ensemble(d, k, m, &mut rng::seeded(seed))
}

/// `a_1 = e_1`, `a_2 = cos(theta) e_1 + sin(theta) e_2`, unit weights.
pub fn correlated_pair(d: usize, m: usize, theta: f64) -> Result<ComponentEnsemble> {
    let mut a = DMatrix::zeros(d, 2);
    a[(0, 0)] = 1.0;
    a[(0, 1)] = theta.cos();
    a[(1, 1)] = theta.sin();
    Ok(ComponentEnsemble::new(m, DVector::from_element(2, 1.0), a)?)
}

fn stream(spec: &ExperimentSpec, tag: u64, cell: &Cell, trial: usize) -> SpmRng {
    rng::stream(
        spec.seed,
        &[tag, cell.d as u64, cell.k as u64, cell.m as u64, cell.n as u64, trial as u64],
    )
}

fn ascent_config(spec: &ExperimentSpec, cell: &Cell) -> AscentConfig {
    AscentConfig {
        gamma: spec.gamma_for(cell),
        accept_tau: spec.tau,
        max_iters: spec.max_iters,
        ..AscentConfig::for_half_order(cell.n)
    }
}

/// Ground truth and observed tensor of one trial.
fn trial_tensor(spec: &ExperimentSpec, cell: &Cell, trial: usize) -> Result<(ComponentEnsemble, SymTensor)> {
    let ens = match spec.theta {
        Some(theta) => correlated_pair(cell.d, cell.m, theta)?,
        None => random_ensemble(cell.d, cell.k, cell.m, &mut stream(spec, ENSEMBLE, cell, trial))?,
    };
    let clean = cp_synthesize(&ens);
    let t_hat = if cell.sigma > 0.0 {
        let mut noise = rng::stream(
            spec.seed,
            &[NOISE, cell.d as u64, cell.k as u64, cell.m as u64, trial as u64, cell.sigma.to_bits()],
        );
        add_gaussian_noise(&clean, cell.sigma, &mut noise)?
    } else {
        clean
    };
    Ok((ens, t_hat))
}

/// Runs `job` for every `(cell, trial)` pair on the worker pool and
/// concatenates the rows in job order.
fn run_jobs<F>(cells: &[Cell], trials: usize, job: F) -> Result<Vec<Row>>
where
    F: Fn(&Cell, usize) -> Result<Vec<Row>> + Sync,
{
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..trials).map(move |t| (c, t)))
        .collect();
    let parts = in_pool(|| {
        jobs.par_iter()
            .map(|&(c, t)| job(&cells[c], t))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(parts.into_iter().flatten().collect())
}

/// Runs `f` on a dedicated pool when `SPM_THREADS` is set, otherwise on the
/// global rayon pool.
pub fn in_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let threads: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&t| t > 0)
                .ok_or_else(|| HarnessError::Spec(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| HarnessError::Spec(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

fn row(cell: &Cell, trial: usize, index: usize, metric: &'static str, value: f64) -> Row {
    Row {
        cell: *cell,
        trial,
        index,
        metric,
        value,
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable> {
    match spec.kind {
        ExperimentKind::Recovery => run_fig_recovery(spec),
        ExperimentKind::Noise => run_fig_noise(spec),
        ExperimentKind::Deflation => run_fig_deflation(spec),
        ExperimentKind::Grammian => run_fig_grammian(spec),
        ExperimentKind::Init => run_fig_init(spec),
    }
}

/// SPM on the extracted subspace and PM on the tensor itself, both started
/// from the same points. Per run: `spm_objective`, `spm_converged`,
/// `spm_accepted`, `pm_error`, `pm_converged`; for accepted SPM runs also
/// `spm_error`, `spm_gradient_norm` and `spm_max_hessian`.
///
/// PM runs on `T / max_i lambda_i` so that the shared step size acts on the
/// same scale as for SPM; the rescaling leaves the maximizers unchanged.
pub fn run_fig_recovery(spec: &ExperimentSpec) -> Result<ResultTable> {
    let cells = spec.cells()?;
    let rows = run_jobs(&cells, spec.tensors, |cell, t| ascent_trial(spec, cell, t))?;
    Ok(ResultTable::new(ExperimentKind::Recovery, rows, false))
}

/// Same runs as [`run_fig_recovery`] over a noise sweep, plus log-log fits
/// of the mean `spm_error` and `pm_error` against `sigma` per `(d, k, m)`.
pub fn run_fig_noise(spec: &ExperimentSpec) -> Result<ResultTable> {
    let cells = spec.cells()?;
    let rows = run_jobs(&cells, spec.tensors, |cell, t| ascent_trial(spec, cell, t))?;
    let mut table = ResultTable::new(ExperimentKind::Noise, rows, false);

    let mut groups: Vec<Cell> = Vec::new();
    for c in &cells {
        let key = Cell { sigma: 0.0, ..*c };
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for g in groups {
        for metric in ["spm_error", "pm_error"] {
            let (xs, ys): (Vec<f64>, Vec<f64>) = table
                .summary
                .iter()
                .filter(|s| s.metric == metric && s.cell.sigma > 0.0 && Cell { sigma: 0.0, ..s.cell } == g)
                .filter(|s| s.mean > 0.0 && s.mean.is_finite())
                .map(|s| (s.cell.sigma.log10(), s.mean.log10()))
                .unzip();
            if let Some((slope, intercept)) = linear_fit(&xs, &ys) {
                table.fits.push(crate::table::Fit {
                    cell: g,
                    metric,
                    slope,
                    intercept,
                    points: xs.len(),
                });
            }
        }
    }
    Ok(table)
}

fn ascent_trial(spec: &ExperimentSpec, cell: &Cell, t: usize) -> Result<Vec<Row>> {
    let (ens, t_hat) = trial_tensor(spec, cell, t)?;
    let s = extract_subspace(&t_hat, cell.n, RankRule::Fixed(cell.k))?;
    let lambda_max = ens.weights().iter().fold(0.0_f64, |m, w| m.max(w.abs()));
    let t_pm = t_hat.scaled(1.0 / lambda_max);
    let cfg = ascent_config(spec, cell);
    let a = ens.components();
    let mut inits = stream(spec, INITS, cell, t);
    let mut rows = Vec::new();
    for i in 0..spec.inits {
        let x0 = rng::unit_sphere(cell.d, &mut inits);
        let spm = run_spm_ascent(&s, &x0, &cfg)?;
        let pm = run_pm_ascent(&t_pm, &x0, &cfg)?;
        let accepted = spm.final_objective >= spec.tau;
        rows.push(row(cell, t, i, "spm_objective", spm.final_objective));
        rows.push(row(cell, t, i, "spm_converged", flag(spm.converged)));
        rows.push(row(cell, t, i, "spm_accepted", flag(accepted)));
        if accepted {
            rows.push(row(cell, t, i, "spm_error", nearest_component(a, &spm.final_x).2));
            rows.push(row(cell, t, i, "spm_gradient_norm", s.riemannian_gradient(&spm.final_x)?.norm()));
            rows.push(row(cell, t, i, "spm_max_hessian", s.max_tangent_hessian_eigenvalue(&spm.final_x)?));
        }
        rows.push(row(cell, t, i, "pm_error", nearest_component(a, &pm.final_x).2));
        rows.push(row(cell, t, i, "pm_converged", flag(pm.converged)));
    }
    Ok(rows)
}

/// Full decomposition per tensor. Rows are indexed by recovery order
/// `1..=K`: `error` (direction), `weight_error` (relative), `objective`,
/// `refined`, and the first- and second-order residuals `gradient_norm` and
/// `max_hessian` on the undeflated subspace. Summaries are per index.
pub fn run_fig_deflation(spec: &ExperimentSpec) -> Result<ResultTable> {
    let cells = spec.cells()?;
    let rows = run_jobs(&cells, spec.tensors, |cell, t| {
        let (ens, t_hat) = trial_tensor(spec, cell, t)?;
        let cfg = ascent_config(spec, cell);
        let res = decompose(&t_hat, &cfg, RankRule::Fixed(cell.k), &mut stream(spec, DECOMPOSE, cell, t))?;
        let report = match_components(&ens, &res)?;
        let s = extract_subspace(&t_hat, cell.n, RankRule::Fixed(cell.k))?;
        let mut rows = Vec::with_capacity(6 * cell.k);
        for (j, a_hat) in res.components.iter().enumerate() {
            let idx = j + 1;
            rows.push(row(cell, t, idx, "error", report.direction_errors[j]));
            rows.push(row(cell, t, idx, "weight_error", report.relative_weight_errors[j]));
            rows.push(row(cell, t, idx, "objective", res.objectives[j]));
            rows.push(row(cell, t, idx, "refined", flag(res.refined[j])));
            rows.push(row(cell, t, idx, "gradient_norm", s.riemannian_gradient(a_hat)?.norm()));
            rows.push(row(cell, t, idx, "max_hessian", s.max_tangent_hessian_eigenvalue(a_hat)?));
        }
        Ok(rows)
    })?;
    Ok(ResultTable::new(ExperimentKind::Deflation, rows, true))
}

/// Smallest eigenvalue `min_eig` of the Grammian of `K` random unit vectors,
/// one row per trial.
pub fn run_fig_grammian(spec: &ExperimentSpec) -> Result<ResultTable> {
    let cells = spec.cells()?;
    let rows = run_jobs(&cells, spec.trials, |cell, t| {
        let a = rng::sphere_columns(cell.d, cell.k, &mut stream(spec, FRAME, cell, t));
        let g = grammian(&a, cell.n)?;
        Ok(vec![row(cell, t, 0, "min_eig", g.min_eigenvalue())])
    })?;
    Ok(ResultTable::new(ExperimentKind::Grammian, rows, false))
}

/// Objective at uniformly random points against noiseless random
/// subspaces: `objective` and `ratio = objective * D^n / K` per sample, and
/// a `control` row with the objective at `a_1` per tensor.
pub fn run_fig_init(spec: &ExperimentSpec) -> Result<ResultTable> {
    let cells = spec.cells()?;
    let rows = run_jobs(&cells, spec.tensors, |cell, t| {
        let a = rng::sphere_columns(cell.d, cell.k, &mut stream(spec, FRAME, cell, t));
        let s = TensorSubspace::from_components(&a, cell.n)?;
        let scale = (cell.d as f64).powi(cell.n as i32) / cell.k as f64;
        let mut samples = stream(spec, SAMPLES, cell, t);
        let mut rows = Vec::with_capacity(2 * spec.inits + 1);
        for i in 0..spec.inits {
            let f = s.objective(&rng::unit_sphere(cell.d, &mut samples))?;
            rows.push(row(cell, t, i, "objective", f));
            rows.push(row(cell, t, i, "ratio", f * scale));
        }
        rows.push(row(cell, t, 0, "control", s.objective(&a.column(0).into_owned())?));
        Ok(rows)
    })?;
    Ok(ResultTable::new(ExperimentKind::Init, rows, false))
}
