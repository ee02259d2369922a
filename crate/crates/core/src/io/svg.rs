//! Minimal SVG output: line plots with optional error bars, and 2D contour
//! drawings over a point cloud.

use std::fmt::Write as _;

use crate::geometry::{BoundingBox, PointCloud};
use crate::mesher::Contour2D;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Debug, Default)]
pub struct Series {
    pub name: String,
    /// `(x, y, half-width of an error bar)`.
    pub points: Vec<(f64, f64, Option<f64>)>,
}

#[derive(Clone, Debug, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LinePlot {
    pub fn to_svg(&self) -> String {
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &(x, y, e) in &s.points {
                if !(tx(x).is_finite() && y.is_finite()) {
                    continue;
                }
                let e = e.unwrap_or(0.0);
                xs = (xs.0.min(tx(x)), xs.1.max(tx(x)));
                ys = (ys.0.min(y - e), ys.1.max(y + e));
            }
        }
        if !xs.0.is_finite() {
            xs = (0.0, 1.0);
            ys = (0.0, 1.0);
        }
        if xs.1 - xs.0 < 1e-12 {
            xs = (xs.0 - 0.5, xs.1 + 0.5);
        }
        let pad = ((ys.1 - ys.0) * 0.05).max(1e-12);
        ys = (ys.0 - pad, ys.1 + pad);
        let px = |x: f64| MARGIN + (tx(x) - xs.0) / (xs.1 - xs.0) * (W - 2.0 * MARGIN);
        let py = |y: f64| H - MARGIN - (y - ys.0) / (ys.1 - ys.0) * (H - 2.0 * MARGIN);

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<path d="M{m} {t} L{m} {b} L{r} {b}" stroke="black" fill="none"/>"#,
            m = MARGIN,
            t = MARGIN,
            b = H - MARGIN,
            r = W - MARGIN
        );
        for (v, y) in [(ys.0, py(ys.0)), (ys.1, py(ys.1))] {
            let _ = writeln!(out, r#"<text x="{}" y="{y:.1}" text-anchor="end">{v:.4}</text>"#, MARGIN - 4.0);
        }
        for (v, x) in [(xs.0, MARGIN), (xs.1, W - MARGIN)] {
            let label = if self.log_x { 10f64.powf(v) } else { v };
            let _ = writeln!(
                out,
                r#"<text x="{x:.1}" y="{}" text-anchor="middle">{label:.4}</text>"#,
                H - MARGIN + 16.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            W / 2.0,
            H - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(&self.y_label)
        );
        for (si, s) in self.series.iter().enumerate() {
            let c = COLORS[si % COLORS.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|p| tx(p.0).is_finite() && p.1.is_finite())
                .map(|&(x, y, _)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" stroke="{c}" fill="none" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
            for &(x, y, e) in &s.points {
                if !(tx(x).is_finite() && y.is_finite()) {
                    continue;
                }
                let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, px(x), py(y));
                if let Some(e) = e {
                    let _ = writeln!(
                        out,
                        r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{c}"/>"#,
                        py(y - e),
                        py(y + e),
                        x = px(x)
                    );
                }
            }
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" fill="{c}">{}</text>"#,
                W - MARGIN - 120.0,
                MARGIN + 16.0 * si as f64,
                escape(&s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// The contour in blue over the cloud in black, framed by `view`.
pub fn contour_svg(contour: &Contour2D, cloud: Option<&PointCloud>, view: &BoundingBox) -> String {
    let size = 512.0;
    let (lo, hi) = (view.lower(), view.upper());
    let s = size / (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let px = |p: &[f64]| ((p[0] - lo[0]) * s, size - (p[1] - lo[1]) * s);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (a, b) in contour.segment_points() {
        let (x1, y1) = px(&a);
        let (x2, y2) = px(&b);
        let _ = writeln!(
            out,
            r##"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#1f77b4" stroke-width="1.5"/>"##
        );
    }
    if let Some(c) = cloud {
        for p in c.iter() {
            let (x, y) = px(p);
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="black"/>"#);
        }
    }
    out.push_str("</svg>\n");
    out
}
