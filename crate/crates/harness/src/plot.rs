//! `plot`: learning curves (mean ± std over seeds, one series per
//! algorithm) as standalone SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use symmrl_core::ppo::{Algo, IterationStats};

use crate::error::{HarnessError, Result};
use crate::report::read_train_csv;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn color(algo: Algo) -> &'static str {
    match algo {
        Algo::Ppo => "#1f77b4",
        Algo::PpoAug => "#ff7f0e",
        Algo::PpoEqic => "#2ca02c",
    }
}

/// A plotted metric and the file it goes to.
#[derive(Debug, Clone, Copy)]
pub struct Metric {
    pub column: &'static str,
    pub label: &'static str,
    get: fn(&IterationStats) -> f64,
}

pub const METRICS: [Metric; 2] = [
    Metric {
        column: "return_mean",
        label: "mean episodic return",
        get: |r| r.return_mean,
    },
    Metric {
        column: "policy_equiv_error",
        label: "policy equivariance error",
        get: |r| r.policy_equiv_error,
    },
];

/// One point of a curve: environment steps, mean and std over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub mean: f64,
    pub std: f64,
}

/// `train.csv` files under `dir`, in sorted path order.
pub fn find_reports(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| HarnessError::io(&d, e))? {
            let path = entry.map_err(|e| HarnessError::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "train.csv") {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

fn algo_of(header: &str, path: &Path) -> Result<Algo> {
    header
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("algo="))
        .and_then(|a| a.parse().ok())
        .ok_or_else(|| HarnessError::Malformed {
            path: path.to_path_buf(),
            what: "training report",
            message: "header has no algo".into(),
        })
}

/// Mean ± population std across runs, over the iterations all runs reached.
/// Points where any run is non-finite are dropped.
pub fn curve(runs: &[Vec<IterationStats>], get: fn(&IterationStats) -> f64) -> Vec<Point> {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .filter_map(|i| {
            let ys: Vec<f64> = runs.iter().map(|r| get(&r[i])).collect();
            if ys.iter().any(|y| !y.is_finite()) {
                return None;
            }
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            let std = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
            let x = runs.iter().map(|r| r[i].env_steps as f64).sum::<f64>() / n;
            Some(Point { x, mean, std })
        })
        .collect()
}

/// About five round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Renders one metric's curves.
pub fn render_svg(title: &str, series: &BTreeMap<Algo, Vec<Point>>) -> String {
    let pts = series.values().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.mean - p.std);
        y1 = y1.max(p.mean + p.std);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        let pad = y0.abs().max(1.0) * 0.05;
        y0 -= pad;
        y1 += pad;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{title}</text>"#, LEFT + pw / 2.0);
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, fmt_tick(t));
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, fmt_tick(t));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">environment steps</text>"#, LEFT + pw / 2.0, HEIGHT - 15.0);

    for (k, (algo, points)) in series.iter().enumerate() {
        let c = color(*algo);
        if !points.is_empty() {
            let upper = points.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.mean + p.std)));
            let lower = points.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.mean - p.std)));
            let band: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(s, r#"<polygon points="{}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
            let line: Vec<String> = points.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.mean))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, line.join(" "));
        }
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{algo}</text>"#, lx + 26.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Output path per metric: the first goes to `out`, the others to
/// `<stem>_<column>.svg` beside it.
pub fn output_paths(out: &Path) -> Vec<PathBuf> {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "plot".into());
    METRICS
        .iter()
        .enumerate()
        .map(|(i, m)| if i == 0 { out.to_path_buf() } else { out.with_file_name(format!("{stem}_{}.svg", m.column)) })
        .collect()
}

pub fn cmd_plot(input: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let reports = find_reports(input)?;
    let mut runs: BTreeMap<Algo, Vec<Vec<IterationStats>>> = BTreeMap::new();
    for path in &reports {
        let (header, rows) = read_train_csv(path)?;
        if rows.is_empty() {
            continue;
        }
        runs.entry(algo_of(&header, path)?).or_default().push(rows);
    }
    if runs.is_empty() {
        return Err(HarnessError::EmptyInput(format!("no non-empty train.csv under {}", input.display())));
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    let paths = output_paths(out);
    for (metric, path) in METRICS.iter().zip(&paths) {
        let series: BTreeMap<Algo, Vec<Point>> = runs.iter().map(|(a, r)| (*a, curve(r, metric.get))).collect();
        let svg = render_svg(metric.label, &series);
        fs::write(path, svg).map_err(|e| HarnessError::io(path, e))?;
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{write_train_csv, Header};

    fn row(i: usize, ret: f64) -> IterationStats {
        IterationStats {
            iteration: i,
            env_steps: 10 * i,
            return_mean: ret,
            return_std: 0.0,
            surrogate_loss: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
            approx_kl: 0.0,
            policy_equiv_error: 0.0,
            value_inv_error: 0.0,
        }
    }

    #[test]
    fn single_run_has_zero_width_band() {
        let c = curve(&[vec![row(1, 1.0), row(2, 2.0)]], |r| r.return_mean);
        assert_eq!(c, vec![Point { x: 10.0, mean: 1.0, std: 0.0 }, Point { x: 20.0, mean: 2.0, std: 0.0 }]);
    }

    #[test]
    fn three_runs_band_is_one_std() {
        let runs = vec![vec![row(1, 1.0)], vec![row(1, 2.0)], vec![row(1, 3.0)], ];
        let c = curve(&runs, |r| r.return_mean);
        assert_eq!(c[0].mean, 2.0);
        assert!((c[0].std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn nan_points_and_ragged_tails_are_dropped() {
        let runs = vec![vec![row(1, f64::NAN), row(2, 1.0), row(3, 1.0)], vec![row(1, 0.0), row(2, 3.0)]];
        let c = curve(&runs, |r| r.return_mean);
        assert_eq!(c, vec![Point { x: 20.0, mean: 2.0, std: 1.0 }]);
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(ticks(-3.0, 7.0), vec![-2.0, 0.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn empty_input_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_plot(dir.path(), &dir.path().join("p.svg")).unwrap_err();
        assert!(matches!(err, HarnessError::EmptyInput(_)));
    }

    #[test]
    fn writes_one_svg_per_metric_with_a_series_per_algorithm() {
        let dir = tempfile::tempdir().unwrap();
        for (algo, seed) in [(Algo::Ppo, 0), (Algo::Ppo, 1), (Algo::PpoEqic, 0)] {
            let d = dir.path().join(format!("{algo}/seed_{seed}"));
            fs::create_dir_all(&d).unwrap();
            let header = Header {
                kind: "train",
                algo,
                env: "mirror_goal".into(),
                seed: Some(seed),
                config_hash: "h".into(),
            };
            write_train_csv(&d.join("train.csv"), &header, &[row(1, seed as f64), row(2, 1.0)]).unwrap();
        }
        let paths = cmd_plot(dir.path(), &dir.path().join("out/curves.svg")).unwrap();
        assert_eq!(paths[1], dir.path().join("out/curves_policy_equiv_error.svg"));
        let svg = fs::read_to_string(&paths[0]).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">ppo<") && svg.contains(">ppoeqic<"));
    }
}
