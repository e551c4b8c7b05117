//! `spm` subcommands.
//!
//! Exit codes: 0 on success, 1 on runtime failures (I/O, malformed input,
//! numerical failure), 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use nalgebra::DVector;
use spm_core::io::{decomposition_csv, load_ensemble, load_tensor, save_ensemble, save_subspace, save_tensor};
use spm_core::rng;
use spm_core::{
    add_gaussian_noise, certify_point, cp_synthesize, decompose, estimate_rho, extract_subspace, match_components,
    thresholds, AscentConfig, RankRule,
};

use crate::error::{HarnessError, Result};
use crate::experiments::{random_ensemble, run_experiment};
use crate::plot::render_svg;
use crate::spec::{ExperimentKind, ExperimentSpec};

#[derive(Debug, Parser)]
#[command(name = "spm", version, about = "Symmetric tensor decomposition by subspace power iteration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a random ensemble, write its tensor and the ensemble next to it
    /// (same path with extension `.spe`).
    Gen {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        m: usize,
        /// Entry-wise noise level.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decompose a tensor into rank-one terms and write them as CSV.
    Decompose {
        tensor: PathBuf,
        /// Number of components.
        #[arg(long, conflicts_with = "alpha")]
        k: Option<usize>,
        /// Keep singular values of the flattening above this threshold.
        #[arg(long)]
        alpha: Option<f64>,
        /// Minimum objective for accepting a component.
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        /// Step size, default 1/(2n).
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        /// Ground-truth ensemble to match against.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Also write the extracted subspace.
        #[arg(long)]
        dump_subspace: Option<PathBuf>,
    },
    /// Run an experiment grid and write CSV tables into a directory.
    Experiment {
        #[arg(value_parser = parse_kind)]
        id: ExperimentKind,
        #[arg(long)]
        spec: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write an SVG plot of the summary.
        #[arg(long)]
        plot: bool,
    },
    /// Check optimality conditions and the superlevel-set guarantee at a point
    /// (whitespace or comma separated coordinates, normalized on load).
    Certify {
        tensor: PathBuf,
        point: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Constant of the overcomplete level; without it only the
        /// deterministic level is used.
        #[arg(long)]
        level_constant: Option<f64>,
        /// Ascent starts for estimating the frame constants.
        #[arg(long, default_value_t = 64)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report as CSV.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn parse_kind(s: &str) -> std::result::Result<ExperimentKind, String> {
    s.parse().map_err(|_| {
        let ids: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.id()).collect();
        format!("expected one of {}", ids.join(", "))
    })
}

pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("spm: {e}");
            1
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen { d, k, m, sigma, seed, output } => gen(d, k, m, sigma, seed, &output),
        Command::Decompose {
            tensor,
            k,
            alpha,
            tau,
            gamma,
            seed,
            output,
            truth,
            dump_subspace,
        } => {
            let rule = match (k, alpha) {
                (Some(k), _) => RankRule::Fixed(k),
                (None, Some(a)) => RankRule::Threshold(a),
                (None, None) => RankRule::Numerical,
            };
            run_decompose(&tensor, rule, tau, gamma, seed, &output, truth.as_deref(), dump_subspace.as_deref())
        }
        Command::Experiment { id, spec, output, plot } => {
            let mut spec = ExperimentSpec::parse(id, &fs::read_to_string(&spec)?)?;
            if output.is_some() {
                spec.output = output;
            }
            let dir = spec
                .output
                .clone()
                .ok_or_else(|| HarnessError::Spec("no output directory: pass -o or set `output`".into()))?;
            run_and_write(&spec, &dir, plot)
        }
        Command::Certify {
            tensor,
            point,
            truth,
            level_constant,
            budget,
            seed,
            output,
        } => certify(&tensor, &point, &truth, level_constant, budget, seed, output.as_deref()),
    }
}

fn gen(d: usize, k: usize, m: usize, sigma: f64, seed: u64, output: &Path) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(HarnessError::Spec(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let companion = output.with_extension("spe");
    if companion == output {
        return Err(HarnessError::Spec("tensor output must not use the .spe extension".into()));
    }
    let mut r = rng::seeded(seed);
    let ens = random_ensemble(d, k, m, &mut r)?;
    let mut t = cp_synthesize(&ens);
    if sigma > 0.0 {
        t = add_gaussian_noise(&t, sigma, &mut r)?;
    }
    save_tensor(output, &t)?;
    save_ensemble(&companion, &ens)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_decompose(
    tensor: &Path,
    rule: RankRule,
    tau: f64,
    gamma: Option<f64>,
    seed: u64,
    output: &Path,
    truth: Option<&Path>,
    dump: Option<&Path>,
) -> Result<()> {
    let t = load_tensor(tensor)?;
    let n = t.order().div_ceil(2);
    let mut cfg = AscentConfig::for_half_order(n);
    cfg.accept_tau = tau;
    if let Some(g) = gamma {
        cfg.gamma = g;
    }
    let res = decompose(&t, &cfg, rule, &mut rng::seeded(seed))?;
    fs::write(output, decomposition_csv(&res))?;
    if let Some(path) = dump {
        save_subspace(path, &extract_subspace(&t, n, RankRule::Fixed(res.rank))?)?;
    }
    if let Some(path) = truth {
        let ens = load_ensemble(path)?;
        let report = match_components(&ens, &res)?;
        let max = |v: &[f64]| v.iter().fold(0.0_f64, |a, &b| a.max(b));
        println!(
            "matched {} components: max direction error {:.3e}, max relative weight error {:.3e}{}",
            res.rank,
            max(&report.direction_errors),
            max(&report.relative_weight_errors),
            if report.collision { " (ambiguous matching)" } else { "" }
        );
    }
    Ok(())
}

/// Runs `spec` and writes `<id>_raw.csv`, `<id>_summary.csv`, `<id>_fits.csv`
/// when there are fits, and `<id>.svg` with `plot`.
pub fn run_and_write(spec: &ExperimentSpec, dir: &Path, plot: bool) -> Result<()> {
    let table = run_experiment(spec)?;
    fs::create_dir_all(dir)?;
    let id = spec.kind.id();
    fs::write(dir.join(format!("{id}_raw.csv")), table.raw_csv())?;
    fs::write(dir.join(format!("{id}_summary.csv")), table.summary_csv())?;
    if !table.fits.is_empty() {
        fs::write(dir.join(format!("{id}_fits.csv")), table.fits_csv())?;
    }
    if plot {
        fs::write(dir.join(format!("{id}.svg")), render_svg(&table))?;
    }
    println!("{id}: {} rows, {} summary rows in {}", table.rows.len(), table.summary.len(), dir.display());
    Ok(())
}

fn read_point(path: &Path, dim: usize) -> Result<DVector<f64>> {
    let text = fs::read_to_string(path)?;
    let values = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| HarnessError::Spec(format!("{}: cannot parse `{s}`", path.display())))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != dim {
        return Err(HarnessError::Spec(format!(
            "{}: expected {dim} coordinates, found {}",
            path.display(),
            values.len()
        )));
    }
    let x = DVector::from_vec(values);
    let norm = x.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(HarnessError::Spec(format!("{}: point must be finite and nonzero", path.display())));
    }
    Ok(x / norm)
}

fn certify(
    tensor: &Path,
    point: &Path,
    truth: &Path,
    level_constant: Option<f64>,
    budget: usize,
    seed: u64,
    output: Option<&Path>,
) -> Result<()> {
    let t = load_tensor(tensor)?;
    let ens = load_ensemble(truth)?;
    if ens.dim() != t.dim() || ens.order() != t.order() {
        return Err(HarnessError::Spec("truth ensemble does not match the tensor shape".into()));
    }
    let n = t.order().div_ceil(2);
    let x = read_point(point, t.dim())?;
    let s = extract_subspace(&t, n, RankRule::Fixed(ens.rank()))?;
    let a = ens.components();
    let mut r = rng::seeded(seed);
    let rho2 = estimate_rho(a, 2, budget, &mut r)?.upper;
    let rho_n = if n == 2 { rho2 } else { estimate_rho(a, n, budget, &mut r)?.upper };
    let mut thr = thresholds(rho2, rho_n, n, t.dim(), ens.rank());
    if let Some(c) = level_constant {
        thr = thr.with_level_constant(c);
    }
    let report = certify_point(&s, a, &x, &thr)?;
    println!("{report}");
    if let Some(path) = output {
        fs::write(path, report.to_csv())?;
    }
    Ok(())
}
