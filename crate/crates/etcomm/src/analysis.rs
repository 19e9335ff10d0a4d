//! Post-hoc analysis: observation PCA, gating timelines and learning curves.

use std::fmt::Write as _;
use std::path::Path;

use etcomm_core::eval::TrajectoryStep;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

// ---------------------------------------------------------------------------
// PCA

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors (as rows). Sweeps stop once the off-diagonal Frobenius norm
/// falls below `tol` times the matrix norm.
pub fn jacobi_eigen(matrix: &[Vec<f64>], tol: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let norm = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let limit = tol * norm.max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= limit {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut col: Vec<f64> = v.iter().map(|row| row[i]).collect();
            // sign convention: largest-magnitude entry positive
            let lead = col
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            col
        })
        .collect();
    (values, vectors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca2d {
    pub points: Vec<[f64; 2]>,
    /// Variance along the two retained axes.
    pub explained: [f64; 2],
    pub components: [Vec<f64>; 2],
    pub mean: Vec<f64>,
}

/// Projects mean-centered observations onto the top two eigenvectors of the
/// sample covariance. Constant data projects to the origin.
pub fn pca2d(observations: &[Vec<f64>]) -> AppResult<Pca2d> {
    if observations.len() < 3 {
        return Err(AppError::Analysis("PCA needs at least 3 observations".into()));
    }
    let d = observations[0].len();
    if d == 0 || observations.iter().any(|o| o.len() != d) {
        return Err(AppError::Analysis("observations must share a non-zero length".into()));
    }
    let n = observations.len() as f64;
    let mut mean = vec![0.0; d];
    for o in observations {
        mean.iter_mut().zip(o).for_each(|(m, x)| *m += x / n);
    }
    let mut cov = vec![vec![0.0; d]; d];
    for o in observations {
        for i in 0..d {
            let ci = o[i] - mean[i];
            for j in i..d {
                cov[i][j] += ci * (o[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= n - 1.0;
            cov[j][i] = cov[i][j];
        }
    }
    let (values, vectors) = jacobi_eigen(&cov, 1e-10);
    let axis = |k: usize| vectors.get(k).cloned().unwrap_or_else(|| vec![0.0; d]);
    let components = [axis(0), axis(1)];
    let points = observations
        .iter()
        .map(|o| {
            let c: Vec<f64> = o.iter().zip(&mean).map(|(x, m)| x - m).collect();
            let dot = |v: &[f64]| v.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
            [dot(&components[0]), dot(&components[1])]
        })
        .collect();
    let value = |k: usize| values.get(k).copied().unwrap_or(0.0).max(0.0);
    Ok(Pca2d {
        points,
        explained: [value(0), value(1)],
        components,
        mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaPoint {
    pub episode: u32,
    pub t: u32,
    pub pc1: f64,
    pub pc2: f64,
    pub gate: u8,
}

/// PCA of one agent's observations from a trajectory dump, each point paired
/// with that step's gate bit.
pub fn pca_points(steps: &[TrajectoryStep], agent: usize) -> AppResult<(Pca2d, Vec<PcaPoint>)> {
    let obs: Vec<Vec<f64>> = steps
        .iter()
        .map(|s| {
            s.observations
                .get(agent)
                .cloned()
                .ok_or_else(|| AppError::Analysis(format!("no agent {agent} in dump")))
        })
        .collect::<AppResult<_>>()?;
    let pca = pca2d(&obs)?;
    let points = steps
        .iter()
        .zip(&pca.points)
        .map(|(s, p)| PcaPoint {
            episode: s.episode,
            t: s.t,
            pc1: p[0],
            pc2: p[1],
            gate: s.gates[agent],
        })
        .collect();
    Ok((pca, points))
}

// ---------------------------------------------------------------------------
// Gating timeline

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub episode: u32,
    pub t: u32,
    pub agent: usize,
    pub gate: u8,
    pub reached_destination: bool,
    pub destination_moved: bool,
    pub prey_visible: bool,
}

pub fn gating_timeline(steps: &[TrajectoryStep]) -> Vec<TimelineRow> {
    steps
        .iter()
        .flat_map(|s| {
            s.gates.iter().enumerate().map(move |(agent, &gate)| {
                let info = s.info.get(agent).copied().unwrap_or_default();
                TimelineRow {
                    episode: s.episode,
                    t: s.t,
                    agent,
                    gate,
                    reached_destination: info.reached,
                    destination_moved: info.target_moved,
                    prey_visible: info.prey_visible,
                }
            })
        })
        .collect()
}

/// Sends per agent across a timeline.
pub fn trigger_counts(rows: &[TimelineRow]) -> Vec<u64> {
    let n = rows.iter().map(|r| r.agent + 1).max().unwrap_or(0);
    let mut counts = vec![0u64; n];
    for r in rows {
        counts[r.agent] += r.gate as u64;
    }
    counts
}

// ---------------------------------------------------------------------------
// Learning curves

/// A metric CSV as named numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub label: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path, label: &str) -> AppResult<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| AppError::format(path, e))?;
        let columns = r
            .headers()
            .map_err(|e| AppError::format(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| AppError::format(path, e))?;
            let row = rec
                .iter()
                .map(|v| v.trim().parse::<f64>().map_err(|e| AppError::format(path, format!("{v:?}: {e}"))))
                .collect::<AppResult<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Table {
            label: label.to_string(),
            columns,
            rows,
        })
    }

    pub fn column(&self, key: &str) -> AppResult<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == key).ok_or_else(|| {
            AppError::Analysis(format!(
                "no column `{key}` in {}; available: {}",
                self.label,
                self.columns.join(", ")
            ))
        })?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }
}

/// Axis range covering the data with a 5% margin on each side.
pub fn padded_range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    let pad = if span > 0.0 { 0.05 * span } else { 0.05 * lo.abs().max(1.0) };
    (lo - pad, hi + pad)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Curves of `key` against `step`, one polyline per table.
pub struct Curves {
    pub svg: String,
    /// `run,step,<key>` rows the figure was drawn from.
    pub merged_csv: String,
    pub y_range: (f64, f64),
}

pub fn render_curves(tables: &[Table], key: &str) -> AppResult<Curves> {
    if tables.is_empty() {
        return Err(AppError::Analysis("no metric tables given".into()));
    }
    let mut series = Vec::with_capacity(tables.len());
    for t in tables {
        let xs = t.column("step")?;
        let ys = t.column(key)?;
        series.push((t.label.as_str(), xs, ys));
    }
    let (x0, x1) = padded_range(series.iter().flat_map(|s| s.1.iter().copied()));
    let y_range = padded_range(series.iter().flat_map(|s| s.2.iter().copied()));
    let (y0, y1) = y_range;

    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (80.0, 180.0, 30.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.0}</text>"#,
            top + ph,
            top + ph + 5.0,
            top + ph + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"#,
            left - 5.0,
            left - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">step</text>"#,
        left + pw / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(key)
    );
    let mut merged = format!("run,step,{key}\n");
    for (i, (label, xs, ys)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter(|(_, y)| y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = top + 15.0 + 18.0 * i as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            escape(label)
        );
        for (x, y) in xs.iter().zip(ys) {
            let _ = writeln!(merged, "{},{},{}", csv_field(label), x, y);
        }
    }
    svg.push_str("</svg>\n");
    Ok(Curves {
        svg,
        merged_csv: merged,
        y_range,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
