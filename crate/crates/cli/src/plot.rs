//! Minimal SVG line plots.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlotError {
    #[error("nothing to plot")]
    Empty,
    #[error("series `{0}` has mismatched x and y lengths")]
    Ragged(String),
    #[error("series `{0}` has no positive finite points for a log axis")]
    NoPositive(String),
    #[error("cannot write plot: {0}")]
    Io(String),
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct PlotOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;
const MAX_POINTS: usize = 2000;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn transform(v: f64, log: bool) -> Option<f64> {
    let t = if log { if v > 0.0 { v.log10() } else { return None } } else { v };
    t.is_finite().then_some(t)
}

pub fn render_svg(series: &[Series], opts: &PlotOptions) -> Result<String, PlotError> {
    if series.is_empty() || series.iter().all(|s| s.x.is_empty()) {
        return Err(PlotError::Empty);
    }
    let mut paths = Vec::with_capacity(series.len());
    for s in series {
        if s.x.len() != s.y.len() {
            return Err(PlotError::Ragged(s.name.clone()));
        }
        let stride = s.x.len().div_ceil(MAX_POINTS).max(1);
        let mut pts: Vec<(f64, f64)> = (0..s.x.len())
            .step_by(stride)
            .chain(std::iter::once(s.x.len().saturating_sub(1)))
            .filter_map(|i| Some((transform(*s.x.get(i)?, opts.log_x)?, transform(s.y[i], opts.log_y)?)))
            .collect();
        pts.dedup();
        if pts.is_empty() {
            return Err(PlotError::NoPositive(s.name.clone()));
        }
        paths.push(pts);
    }
    let all = paths.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let label = |v: f64, log: bool| if log { format!("1e{v:.1}") } else { format!("{v:.3e}") };

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(&opts.title));
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="{}">{}</text>"#, HEIGHT - MARGIN + 16.0, label(x0, opts.log_x));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, WIDTH - MARGIN, HEIGHT - MARGIN + 16.0, label(x1, opts.log_x));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 4.0, HEIGHT - MARGIN, label(y0, opts.log_y));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 4.0, MARGIN + 10.0, label(y1, opts.log_y));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 16.0, escape(&opts.x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(&opts.y_label)
    );
    if !opts.log_y && y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(out, r##"<line x1="{MARGIN}" x2="{0}" y1="{1:.2}" y2="{1:.2}" stroke="#999" stroke-dasharray="4 3"/>"##, WIDTH - MARGIN, py(0.0));
    }
    for (i, (s, pts)) in series.iter().zip(&paths).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for (j, &(x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if j == 0 { "M" } else { " L" }, px(x), py(y));
        }
        let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.2"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="{}" fill="{color}">{}</text>"#, MARGIN + 8.0, MARGIN + 16.0 * (i + 1) as f64, escape(&s.name));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render and write; nothing is written on error.
pub fn emit_plot(series: &[Series], opts: &PlotOptions, path: &Path) -> Result<(), PlotError> {
    let svg = render_svg(series, opts)?;
    std::fs::write(path, svg).map_err(|e| PlotError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Series {
        Series { name: "u".into(), x: vec![1.0, 10.0, 100.0], y: vec![1.0, 0.1, 0.01] }
    }

    #[test]
    fn renders_paths() {
        let svg = render_svg(&[line()], &PlotOptions { log_x: true, log_y: true, ..Default::default() }).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<path").count(), 1);
    }

    #[test]
    fn errors() {
        assert_eq!(render_svg(&[], &PlotOptions::default()), Err(PlotError::Empty));
        let bad = Series { name: "b".into(), x: vec![1.0], y: vec![] };
        assert_eq!(render_svg(&[bad], &PlotOptions::default()), Err(PlotError::Ragged("b".into())));
        let neg = Series { name: "n".into(), x: vec![1.0], y: vec![-1.0] };
        assert!(matches!(render_svg(&[neg], &PlotOptions { log_y: true, ..Default::default() }), Err(PlotError::NoPositive(_))));
    }
}
