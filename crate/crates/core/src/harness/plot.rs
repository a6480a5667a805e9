//! Static SVG figures: output against set point and tracking error, one
//! column per trace.

use std::fmt::Write as _;
use std::path::Path;

use super::trace::SimTrace;
use crate::error::{Error, Result};

const PANEL_W: f64 = 520.0;
const PANEL_H: f64 = 240.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 44.0;

struct Series<'a> {
    values: Vec<f64>,
    color: &'a str,
    label: &'a str,
}

/// Renders two panels per trace; errors on an empty input or empty trace.
pub fn render_svg(traces: &[SimTrace]) -> Result<String> {
    if traces.is_empty() {
        return Err(Error::Trace("no traces to plot".into()));
    }
    if let Some(t) = traces.iter().find(|t| t.is_empty()) {
        return Err(Error::Trace(format!("{} trace is empty", t.method.name())));
    }
    let cols = traces.len() as f64;
    let (w, h) = (cols * PANEL_W, 2.0 * PANEL_H);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for (c, t) in traces.iter().enumerate() {
        let x0 = c as f64 * PANEL_W;
        let steps: Vec<f64> = t.rows.iter().map(|r| r.k as f64).collect();
        panel(
            &mut s,
            x0,
            0.0,
            &format!("{}: output and desired output", t.method.name()),
            "output y",
            &steps,
            &[
                Series {
                    values: t.rows.iter().map(|r| r.y).collect(),
                    color: "#1f77b4",
                    label: "y",
                },
                Series {
                    values: t.rows.iter().map(|r| r.y_d).collect(),
                    color: "#d62728",
                    label: "y_d",
                },
            ],
        );
        panel(
            &mut s,
            x0,
            PANEL_H,
            &format!("{}: tracking error", t.method.name()),
            "error e",
            &steps,
            &[Series {
                values: t.rows.iter().map(|r| r.e).collect(),
                color: "#2ca02c",
                label: "e",
            }],
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes the figure and returns the number of panels drawn.
pub fn emit_plots(traces: &[SimTrace], path: &Path) -> Result<usize> {
    let svg = render_svg(traces)?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, svg)?;
    Ok(2 * traces.len())
}

fn panel(s: &mut String, x0: f64, y0: f64, title: &str, ylabel: &str, xs: &[f64], series: &[Series]) {
    let (pl, pt) = (x0 + MARGIN_L, y0 + MARGIN_T);
    let (pw, ph) = (PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
    let (xmin, xmax) = range(xs.iter().copied());
    let (ymin, ymax) = range(series.iter().flat_map(|se| se.values.iter().copied()));
    let sx = |x: f64| pl + (x - xmin) / (xmax - xmin) * pw;
    let sy = |y: f64| pt + ph - (y - ymin) / (ymax - ymin) * ph;

    let _ = writeln!(s, r#"<g class="panel">"#);
    let _ = writeln!(
        s,
        r#"<rect x="{pl:.2}" y="{pt:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#,
        pl + pw / 2.0,
        y0 + 20.0,
        escape(title)
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = xmin + f * (xmax - xmin);
        let yv = ymin + f * (ymax - ymin);
        let (tx, ty) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{tx:.2}" y1="{:.2}" x2="{tx:.2}" y2="{:.2}" stroke="black"/><text x="{tx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            pt + ph,
            pt + ph + 4.0,
            pt + ph + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ty:.2}" x2="{pl:.2}" y2="{ty:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            pl - 4.0,
            pl - 6.0,
            ty + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">step k</text>"#,
        pl + pw / 2.0,
        pt + ph + 34.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate({:.2},{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        x0 + 14.0,
        pt + ph / 2.0,
        escape(ylabel)
    );
    for (i, se) in series.iter().enumerate() {
        let mut d = String::with_capacity(se.values.len() * 16);
        for (j, (&x, &y)) in xs.iter().zip(&se.values).enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if j == 0 { "M" } else { " L" }, sx(x), sy(y));
        }
        let _ = writeln!(
            s,
            r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1"/>"#,
            se.color
        );
        let ly = pt + 12.0 + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            pl + pw - 60.0,
            pl + pw - 40.0,
            se.color,
            pl + pw - 36.0,
            ly + 4.0,
            escape(se.label)
        );
    }
    let _ = writeln!(s, "</g>");
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
