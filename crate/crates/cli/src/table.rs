//! Long-format result tables and their CSV form.

use std::fmt::Write as _;

use crate::spec::{Cell, ExperimentKind};

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub cell: Cell,
    pub trial: usize,
    /// Initialization, sample or recovery index within the trial.
    pub index: usize,
    pub metric: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub cell: Cell,
    pub metric: &'static str,
    /// Set when the summary is per recovery index.
    pub index: Option<usize>,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator), 0 for a single value.
    pub std: f64,
}

/// Least-squares line through `(log10 sigma, log10 mean)` over the positive
/// noise levels of one `(d, k, m)` group.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub cell: Cell,
    pub metric: &'static str,
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub experiment: ExperimentKind,
    pub rows: Vec<Row>,
    pub summary: Vec<SummaryRow>,
    pub fits: Vec<Fit>,
}

impl ResultTable {
    /// Builds the table and its summary. With `per_index` the summary is
    /// grouped by `(cell, metric, index)`, otherwise by `(cell, metric)`.
    /// Groups appear in order of first occurrence.
    pub fn new(experiment: ExperimentKind, rows: Vec<Row>, per_index: bool) -> Self {
        let summary = summarize(&rows, per_index);
        Self {
            experiment,
            rows,
            summary,
            fits: Vec::new(),
        }
    }

    pub fn summary_for(&self, cell: &Cell, metric: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.cell == *cell && s.metric == metric && s.index.is_none())
    }

    pub fn values(&self, cell: &Cell, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.cell == *cell && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out: Vec<Cell> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.cell) {
                out.push(r.cell);
            }
        }
        out
    }

    pub fn raw_csv(&self) -> String {
        let mut out = String::from("experiment,d,k,m,n,sigma,trial,index,metric,value\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.16e},{},{},{},{:.16e}",
                self.experiment,
                cell_cols(&r.cell),
                r.cell.m,
                r.cell.n,
                r.cell.sigma,
                r.trial,
                r.index,
                r.metric,
                r.value
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("experiment,d,k,m,n,sigma,metric,index,count,mean,std\n");
        for s in &self.summary {
            let index = s.index.map_or(String::new(), |i| i.to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{:.16e},{},{},{},{:.16e},{:.16e}",
                self.experiment,
                cell_cols(&s.cell),
                s.cell.m,
                s.cell.n,
                s.cell.sigma,
                s.metric,
                index,
                s.count,
                s.mean,
                s.std
            );
        }
        out
    }

    pub fn fits_csv(&self) -> String {
        let mut out = String::from("experiment,d,k,m,n,metric,slope,intercept,points\n");
        for f in &self.fits {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.16e},{:.16e},{}",
                self.experiment,
                cell_cols(&f.cell),
                f.cell.m,
                f.cell.n,
                f.metric,
                f.slope,
                f.intercept,
                f.points
            );
        }
        out
    }
}

fn cell_cols(c: &Cell) -> String {
    format!("{},{}", c.d, c.k)
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

fn summarize(rows: &[Row], per_index: bool) -> Vec<SummaryRow> {
    let mut keys: Vec<(Cell, &'static str, Option<usize>)> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let key = (r.cell, r.metric, per_index.then_some(r.index));
        match keys.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(r.value),
            None => {
                keys.push(key);
                groups.push(vec![r.value]);
            }
        }
    }
    keys.into_iter()
        .zip(groups)
        .map(|((cell, metric, index), values)| {
            let (mean, std) = mean_std(&values);
            SummaryRow {
                cell,
                metric,
                index,
                count: values.len(),
                mean,
                std,
            }
        })
        .collect()
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Parses a CSV produced by [`ResultTable::raw_csv`] back into
/// `(cell columns, metric, value)` triples keyed as strings.
pub fn parse_raw_csv(text: &str) -> Vec<(String, String, f64)> {
    text.lines()
        .skip(1)
        .filter_map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 10 {
                return None;
            }
            let key = cols[1..6].join(",");
            Some((key, cols[8].to_string(), cols[9].parse().ok()?))
        })
        .collect()
}
