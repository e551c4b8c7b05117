//! Single-file SVG line charts of summary tables.
//!
//! The summary CSV is embedded as a comment so the figure carries its data.

use std::fmt::Write as _;

use crate::spec::ExperimentKind;
use crate::table::{ResultTable, SummaryRow};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn plotted_metrics(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::Recovery | ExperimentKind::Noise => &["spm_error", "pm_error"],
        ExperimentKind::Deflation => &["error"],
        ExperimentKind::Grammian => &["min_eig"],
        ExperimentKind::Init => &["ratio"],
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Axis {
    Sigma,
    D,
    K,
    M,
    N,
    Index,
}

impl Axis {
    fn label(self) -> &'static str {
        match self {
            Axis::Sigma => "sigma",
            Axis::D => "D",
            Axis::K => "K",
            Axis::M => "m",
            Axis::N => "n",
            Axis::Index => "recovery index",
        }
    }

    fn of(self, s: &SummaryRow) -> f64 {
        match self {
            Axis::Sigma => s.cell.sigma,
            Axis::D => s.cell.d as f64,
            Axis::K => s.cell.k as f64,
            Axis::M => s.cell.m as f64,
            Axis::N => s.cell.n as f64,
            Axis::Index => s.index.unwrap_or(0) as f64,
        }
    }
}

/// Picks the x axis: the recovery index for per-index summaries, otherwise
/// the first cell parameter that varies.
fn x_axis(rows: &[&SummaryRow]) -> Axis {
    if rows.iter().any(|s| s.index.is_some()) {
        return Axis::Index;
    }
    for axis in [Axis::Sigma, Axis::D, Axis::K, Axis::M, Axis::N] {
        let first = rows.first().map(|s| axis.of(s));
        if rows.iter().any(|s| Some(axis.of(s)) != first) {
            return axis;
        }
    }
    Axis::D
}

struct Series {
    label: String,
    points: Vec<(f64, f64, f64)>,
}

fn scale(v: f64, log: bool) -> f64 {
    if log {
        v.log10()
    } else {
        v
    }
}

pub fn render_svg(table: &ResultTable) -> String {
    let metrics = plotted_metrics(table.experiment);
    let rows: Vec<&SummaryRow> = table
        .summary
        .iter()
        .filter(|s| metrics.contains(&s.metric) && s.mean.is_finite())
        .collect();
    let axis = x_axis(&rows);

    let mut series: Vec<Series> = Vec::new();
    for s in &rows {
        let mut label = s.metric.to_string();
        for (a, name, v) in [
            (Axis::D, "D", s.cell.d),
            (Axis::K, "K", s.cell.k),
            (Axis::M, "m", s.cell.m),
            (Axis::N, "n", s.cell.n),
        ] {
            if a != axis {
                let _ = write!(label, " {name}={v}");
            }
        }
        if axis != Axis::Sigma && s.cell.sigma > 0.0 {
            let _ = write!(label, " sigma={:e}", s.cell.sigma);
        }
        let p = (axis.of(s), s.mean, s.std);
        match series.iter_mut().find(|x| x.label == label) {
            Some(x) => x.points.push(p),
            None => series.push(Series { label, points: vec![p] }),
        }
    }

    let all: Vec<(f64, f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let log_x = axis == Axis::Sigma && all.iter().all(|p| p.0 > 0.0);
    let log_y = !all.is_empty() && all.iter().all(|p| p.1 > 0.0);
    let xs: Vec<f64> = all.iter().map(|p| scale(p.0, log_x)).collect();
    let ys: Vec<f64> = all
        .iter()
        .flat_map(|p| {
            let lo = if log_y { (p.1 - p.2).max(p.1 / 10.0) } else { p.1 - p.2 };
            [scale(lo, log_y), scale(p.1 + p.2, log_y)]
        })
        .collect();
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| MARGIN + (scale(x, log_x) - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (scale(y, log_y) - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, "<!-- data ({})\n{}-->", table.experiment, table.summary_csv().replace("--", "- -"));
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        table.experiment
    );
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r#"<path d="M{l},{t} L{l},{b} L{r},{b}" fill="none" stroke="black"/>"#);
    for (v, x, y, anchor, log) in [
        (x0, l, b + 16.0, "middle", log_x),
        (x1, r, b + 16.0, "middle", log_x),
        (y0, l - 6.0, b, "end", log_y),
        (y1, l - 6.0, t + 4.0, "end", log_y),
    ] {
        let shown = if log { format!("1e{v:.1}") } else { format!("{v:.3}") };
        let _ = writeln!(out, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{shown}</text>"#);
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0,
        axis.label()
    );

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y, _)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for &(x, y, sd) in &s.points {
            let lo = if log_y { (y - sd).max(y / 10.0) } else { y - sd };
            let _ = writeln!(
                out,
                r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{color}"/><circle cx="{0:.2}" cy="{3:.2}" r="2.5" fill="{color}"/>"#,
                px(x),
                py(lo),
                py(y + sd),
                py(y)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            l + 8.0,
            t + 14.0 * (i as f64 + 1.0),
            s.label
        );
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().filter(|x| x.is_finite()).fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}
