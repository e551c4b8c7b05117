//! Flat `key = value` experiment specifications.
//!
//! One assignment per line, `#` starts a comment, list values are comma
//! separated. Axis keys (`d`, `k`, `m`, `n`, `sigma`) take lists and are
//! combined into cells either as a Cartesian product or, with `grid = zip`,
//! element-wise (length-one lists broadcast).
//!
//! ```text
//! d = 20, 40, 80
//! k_scale = 0.1      # K = round(0.1 * D^2)
//! n = 2
//! trials = 25
//! seed = 3
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Recovery,
    Noise,
    Deflation,
    Grammian,
    Init,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Recovery,
        ExperimentKind::Noise,
        ExperimentKind::Deflation,
        ExperimentKind::Grammian,
        ExperimentKind::Init,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::Recovery => "fig-recovery",
            ExperimentKind::Noise => "fig-noise",
            ExperimentKind::Deflation => "fig-deflation",
            ExperimentKind::Grammian => "fig-grammian",
            ExperimentKind::Init => "fig-init",
        }
    }

    /// Whether cells are parameterized by the tensor order `m` (otherwise by
    /// the half order `n` directly).
    pub fn uses_order(self) -> bool {
        matches!(
            self,
            ExperimentKind::Recovery | ExperimentKind::Noise | ExperimentKind::Deflation
        )
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| HarnessError::Spec(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    Product,
    Zip,
}

/// How `K` is chosen per cell.
#[derive(Debug, Clone, PartialEq)]
pub enum RankAxis {
    List(Vec<usize>),
    /// `K = round(scale * D^power)`.
    Scaled { scale: f64, power: f64 },
}

/// One point of the parameter grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub d: usize,
    pub k: usize,
    /// Tensor order; `2n` for experiments that only use the half order.
    pub m: usize,
    pub n: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub dims: Vec<usize>,
    pub ranks: RankAxis,
    pub orders: Vec<usize>,
    pub half_orders: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub grid: GridMode,
    /// Repetitions per cell for `fig-grammian`.
    pub trials: usize,
    pub tensors: usize,
    pub inits: usize,
    pub seed: u64,
    /// Step size; `None` means `1/(2n)`.
    pub gamma: Option<f64>,
    pub tau: f64,
    pub max_iters: usize,
    /// Replaces the random ensemble by `a_1 = e_1`, `a_2 = cos(theta) e_1 +
    /// sin(theta) e_2` with unit weights. Needs `k = 2`.
    pub theta: Option<f64>,
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Desk-scale defaults; `dims` and `ranks` still have to be set.
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            dims: Vec::new(),
            ranks: RankAxis::List(Vec::new()),
            orders: vec![4],
            half_orders: vec![2],
            sigmas: vec![0.0],
            grid: GridMode::Product,
            trials: 25,
            tensors: 20,
            inits: 5,
            seed: 0,
            gamma: None,
            tau: 0.5,
            max_iters: 5000,
            theta: None,
            output: None,
        }
    }

    pub fn parse(kind: ExperimentKind, text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| spec_err(lineno, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), (lineno, value.trim().to_string())).is_some() {
                return Err(spec_err(lineno, format!("duplicate key `{key}`")));
            }
        }

        let mut spec = Self::new(kind);
        let mut k_scale = None;
        let mut k_power = 2.0;
        for (key, (lineno, value)) in &entries {
            let lineno = *lineno;
            match key.as_str() {
                "experiment" => {
                    let named: ExperimentKind = value.parse()?;
                    if named != kind {
                        return Err(spec_err(lineno, format!("spec is for {named}, not {kind}")));
                    }
                }
                "d" => spec.dims = list(lineno, value)?,
                "k" => spec.ranks = RankAxis::List(list(lineno, value)?),
                "k_scale" => k_scale = Some(scalar(lineno, value)?),
                "k_power" => k_power = scalar(lineno, value)?,
                "m" => spec.orders = list(lineno, value)?,
                "n" => spec.half_orders = list(lineno, value)?,
                "sigma" => spec.sigmas = list(lineno, value)?,
                "grid" => {
                    spec.grid = match value.as_str() {
                        "product" => GridMode::Product,
                        "zip" => GridMode::Zip,
                        other => return Err(spec_err(lineno, format!("grid must be product or zip, got `{other}`"))),
                    }
                }
                "trials" => spec.trials = scalar(lineno, value)?,
                "tensors" => spec.tensors = scalar(lineno, value)?,
                "inits" => spec.inits = scalar(lineno, value)?,
                "seed" => spec.seed = scalar(lineno, value)?,
                "gamma" => spec.gamma = Some(scalar(lineno, value)?),
                "tau" => spec.tau = scalar(lineno, value)?,
                "max_iters" => spec.max_iters = scalar(lineno, value)?,
                "theta" => spec.theta = Some(scalar(lineno, value)?),
                "output" => spec.output = Some(PathBuf::from(value)),
                other => return Err(spec_err(lineno, format!("unknown key `{other}`"))),
            }
        }
        if let Some(scale) = k_scale {
            if entries.contains_key("k") {
                return Err(HarnessError::Spec("set either `k` or `k_scale`, not both".into()));
            }
            spec.ranks = RankAxis::Scaled { scale, power: k_power };
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(HarnessError::Spec(msg));
        if self.dims.is_empty() || self.dims.contains(&0) {
            return fail("`d` must list at least one positive dimension".into());
        }
        match &self.ranks {
            RankAxis::List(ks) if ks.is_empty() || ks.contains(&0) => {
                return fail("`k` must list at least one positive rank".into());
            }
            RankAxis::Scaled { scale, power } if !(*scale > 0.0) || !power.is_finite() => {
                return fail("`k_scale` must be positive and `k_power` finite".into());
            }
            _ => {}
        }
        if self.kind.uses_order() {
            if self.orders.is_empty() || self.orders.iter().any(|&m| m < 3) {
                return fail(format!("{} needs orders m >= 3", self.kind));
            }
        } else if self.half_orders.is_empty() || self.half_orders.contains(&0) {
            return fail("`n` must list positive half orders".into());
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return fail("noise levels must be finite and >= 0".into());
        }
        if self.trials == 0 || self.tensors == 0 || self.inits == 0 {
            return fail("trials, tensors and inits must be >= 1".into());
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return fail(format!("gamma must be positive, got {g}"));
            }
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        if self.max_iters == 0 {
            return fail("max_iters must be >= 1".into());
        }
        if self.theta.is_some() && self.dims.iter().any(|&d| d < 2) {
            return fail("theta needs d >= 2".into());
        }
        Ok(())
    }

    /// Expands the axes into cells, in row-major order of
    /// `(d, k, m or n, sigma)` for product grids.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let orders: Vec<(usize, usize)> = if self.kind.uses_order() {
            self.orders.iter().map(|&m| (m, m.div_ceil(2))).collect()
        } else {
            self.half_orders.iter().map(|&n| (2 * n, n)).collect()
        };
        let rank_for = |d: usize, i: usize| -> usize {
            match &self.ranks {
                RankAxis::List(ks) => ks[i],
                RankAxis::Scaled { scale, power } => ((scale * (d as f64).powf(*power)).round() as usize).max(1),
            }
        };
        let n_ranks = match &self.ranks {
            RankAxis::List(ks) => ks.len(),
            RankAxis::Scaled { .. } => 1,
        };
        let mut out = Vec::new();
        match self.grid {
            GridMode::Product => {
                for &d in &self.dims {
                    for ki in 0..n_ranks {
                        for &(m, n) in &orders {
                            for &sigma in &self.sigmas {
                                out.push(Cell { d, k: rank_for(d, ki), m, n, sigma });
                            }
                        }
                    }
                }
            }
            GridMode::Zip => {
                let lens = [self.dims.len(), n_ranks, orders.len(), self.sigmas.len()];
                let len = *lens.iter().max().expect("non-empty");
                if lens.iter().any(|&l| l != 1 && l != len) {
                    return Err(HarnessError::Spec(format!(
                        "zip grid needs axis lists of equal length or length 1, got {lens:?}"
                    )));
                }
                let at = |l: usize, i: usize| if l == 1 { 0 } else { i };
                for i in 0..len {
                    let d = self.dims[at(lens[0], i)];
                    let (m, n) = orders[at(lens[2], i)];
                    out.push(Cell {
                        d,
                        k: rank_for(d, at(lens[1], i)),
                        m,
                        n,
                        sigma: self.sigmas[at(lens[3], i)],
                    });
                }
            }
        }
        if self.theta.is_some() && out.iter().any(|c| c.k != 2) {
            return Err(HarnessError::Spec("theta needs k = 2".into()));
        }
        Ok(out)
    }

    /// Step size used in `cell`.
    pub fn gamma_for(&self, cell: &Cell) -> f64 {
        self.gamma.unwrap_or(1.0 / (2.0 * cell.n as f64))
    }
}

fn spec_err(lineno: usize, msg: String) -> HarnessError {
    HarnessError::Spec(format!("line {}: {msg}", lineno + 1))
}

fn scalar<T: FromStr>(lineno: usize, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| spec_err(lineno, format!("cannot parse `{value}`")))
}

fn list<T: FromStr>(lineno: usize, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| scalar(lineno, v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_comments_and_scaled_ranks() {
        let text = "# grammian sweep\nd = 20, 40\nk_scale = 0.1\nn = 2\ntrials = 3 # small\nseed = 9\n";
        let spec = ExperimentSpec::parse(ExperimentKind::Grammian, text).unwrap();
        assert_eq!(spec.dims, vec![20, 40]);
        assert_eq!(spec.trials, 3);
        assert_eq!(spec.seed, 9);
        let cells = spec.cells().unwrap();
        assert_eq!(cells.len(), 2);
        assert_eq!((cells[0].k, cells[1].k), (40, 160));
        assert_eq!((cells[0].m, cells[0].n), (4, 2));
    }

    #[test]
    fn product_and_zip_grids() {
        let text = "d = 10, 20\nk = 5, 6\nm = 4\nsigma = 0, 0.1\n";
        let spec = ExperimentSpec::parse(ExperimentKind::Noise, text).unwrap();
        assert_eq!(spec.cells().unwrap().len(), 8);
        let zipped = ExperimentSpec::parse(ExperimentKind::Noise, &format!("{text}grid = zip\n")).unwrap();
        let cells = zipped.cells().unwrap();
        assert_eq!(cells.len(), 2);
        assert_eq!((cells[1].d, cells[1].k, cells[1].sigma), (20, 6, 0.1));
        let bad = ExperimentSpec::parse(ExperimentKind::Noise, "d = 1, 2, 3\nk = 1, 2\ngrid = zip\n").unwrap();
        assert!(bad.cells().is_err());
    }

    #[test]
    fn rejects_malformed_specs() {
        let kind = ExperimentKind::Recovery;
        for text in [
            "d = 10\n",
            "k = 3\n",
            "d = 10\nk = 3\nbogus = 1\n",
            "d = 10\nk = 3\nd = 4\n",
            "d = 10\nk = 3\nsigma = -1\n",
            "d = 10\nk = 3\ntrials = 0\n",
            "d = 10\nk = 3\nm = 2\n",
            "d = ten\nk = 3\n",
            "d = 10\nk = 3\nexperiment = fig-init\n",
            "just words\n",
        ] {
            assert!(ExperimentSpec::parse(kind, text).is_err(), "accepted {text:?}");
        }
    }

    #[test]
    fn experiment_ids_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.id().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("fig-5".parse::<ExperimentKind>().is_err());
    }
}
