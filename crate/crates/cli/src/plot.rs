//! Validation-PSNR convergence curves rendered as SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mixsr::training::LOG_HEADER;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    /// `(iteration, val_psnr)` with finite PSNR only.
    pub points: Vec<(f64, f64)>,
}

/// Reads `(iteration, val_psnr)` from a training log. Rows whose PSNR is
/// not finite (identical images) are skipped.
pub fn read_log(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let malformed = |line: usize, reason: String| CliError::MalformedLog {
        path: path.to_owned(),
        line,
        reason,
    };
    let text = fs::read_to_string(path).map_err(|e| mixsr::Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| malformed(1, e.to_string()))?;
    let expected: Vec<&str> = LOG_HEADER.split(',').collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(malformed(1, format!("expected header `{LOG_HEADER}`")));
    }
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| malformed(line, e.to_string()))?;
        let field = |k: usize| -> CliResult<f64> {
            record[k]
                .parse::<f64>()
                .map_err(|_| malformed(line, format!("`{}` is not a number", &record[k])))
        };
        let iteration = field(0)?;
        let psnr = field(3)?;
        if psnr.is_finite() {
            points.push((iteration, psnr));
        }
    }
    Ok(points)
}

/// Curve label for a log: the name of its run directory.
pub fn label_for(path: &Path) -> String {
    path.parent()
        .and_then(Path::file_name)
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// `((x_min, x_max), (y_min, y_max))` over all points, widened to a
/// non-zero span.
pub fn bounds(curves: &[Curve]) -> ((f64, f64), (f64, f64)) {
    let all = || curves.iter().flat_map(|c| c.points.iter().copied());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in all() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        return ((0.0, 1.0), (0.0, 1.0));
    }
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-9 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    ((x0, x1), (y0, y1))
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_Y: f64 = 40.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const TICKS: usize = 5;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_svg(curves: &[Curve], title: &str) -> String {
    let ((x0, x1), (y0, y1)) = bounds(curves);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - 2.0 * MARGIN_Y;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| MARGIN_Y + (y1 - y) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, MARGIN_LEFT + plot_w / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_Y}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(
            svg,
            r#"<text class="xtick" x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            HEIGHT - MARGIN_Y + 16.0,
            xv.round()
        );
        let _ = writeln!(
            svg,
            r#"<text class="ytick" x="{:.1}" y="{:.1}" text-anchor="end">{yv:.2}</text>"#,
            MARGIN_LEFT - 6.0,
            sy(yv) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">iteration</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 6.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">validation PSNR (dB)</text>"#,
        MARGIN_Y + plot_h / 2.0
    );
    for (k, curve) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = curve.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="curve" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN_Y + 16.0 + 18.0 * k as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text class="label" x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&curve.label));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Reads every log and writes one overlay plot. Labels default to the run
/// directory names.
pub fn plot_logs(logs: &[(String, PathBuf)], out: &Path, title: &str) -> CliResult<Vec<Curve>> {
    if logs.is_empty() {
        return Err(CliError::Usage("plot needs at least one log".into()));
    }
    let curves = logs
        .iter()
        .map(|(label, path)| {
            Ok(Curve {
                label: label.clone(),
                points: read_log(path)?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| mixsr::Error::io(parent, e))?;
    }
    fs::write(out, render_svg(&curves, title)).map_err(|e| mixsr::Error::io(out, e))?;
    Ok(curves)
}
