//! Self-contained SVG plots.
//!
//! Boundary plots map data coordinates to pixels with
//! `px = PAD + (x - x_min) / (x_max - x_min) * SIZE` and
//! `py = PAD + (y_max - y) / (y_max - y_min) * SIZE`, so `y` grows upwards.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::Mlp;
use crate::tensor::Tensor;

pub const SIZE: f64 = 480.0;
pub const PAD: f64 = 20.0;

const REGION_FILL: [&str; 4] = ["#dbe8f6", "#f8e0d4", "#dcefd8", "#ece0f3"];
const POINT_FILL: [&str; 4] = ["#2166ac", "#b2182b", "#1b7837", "#762a83"];
const SERIES_STROKE: [&str; 6] = ["#2166ac", "#b2182b", "#1b7837", "#762a83", "#e08214", "#4d4d4d"];

/// Anything that can label a batch of 2-D points.
pub trait Classifier {
    fn classify(&self, points: &Tensor) -> Result<Vec<usize>>;
}

impl Classifier for Mlp {
    fn classify(&self, points: &Tensor) -> Result<Vec<usize>> {
        self.predict(points)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Viewport {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Viewport {
    /// Bounding box of `points` padded by 10% of the larger extent.
    pub fn around(points: &Tensor) -> Result<Self> {
        if points.shape().len() != 2 || points.cols() != 2 {
            return Err(Error::shape("viewport", format!("expected [N, 2] points, got {:?}", points.shape())));
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..points.rows() {
            let r = points.row(i);
            x0 = x0.min(r[0]);
            x1 = x1.max(r[0]);
            y0 = y0.min(r[1]);
            y1 = y1.max(r[1]);
        }
        let pad = 0.1 * (x1 - x0).max(y1 - y0).max(1e-9);
        Ok(Self {
            x_min: x0 - pad,
            x_max: x1 + pad,
            y_min: y0 - pad,
            y_max: y1 + pad,
        })
    }

    pub fn to_pixel(&self, p: [f64; 2]) -> [f64; 2] {
        [
            PAD + (p[0] - self.x_min) / (self.x_max - self.x_min) * SIZE,
            PAD + (self.y_max - p[1]) / (self.y_max - self.y_min) * SIZE,
        ]
    }
}

/// Clean point, interpolated example and PGD example of one input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trace {
    pub x: [f64; 2],
    pub x_adv: [f64; 2],
    pub x_pgd: [f64; 2],
}

fn px(v: f64) -> String {
    format!("{v:.3}")
}

/// Class regions on an `resolution x resolution` grid of cell centers (one
/// batched classifier call), the data points, and the optional traces as
/// `x -> x_adv -> x_pgd` polylines.
pub fn emit_boundary_svg(
    model: &dyn Classifier,
    points: &Tensor,
    labels: &[usize],
    traces: &[Trace],
    resolution: usize,
) -> Result<String> {
    if points.shape().len() != 2 || points.cols() != 2 {
        return Err(Error::shape("boundary plot", format!("input must be 2-D, got {:?}", points.shape())));
    }
    if labels.len() != points.rows() {
        return Err(Error::shape("boundary plot", format!("{} labels for {} points", labels.len(), points.rows())));
    }
    if resolution == 0 {
        return Err(Error::invalid("grid resolution must be positive"));
    }
    let vp = Viewport::around(points)?;
    let r = resolution;
    let (dx, dy) = ((vp.x_max - vp.x_min) / r as f64, (vp.y_max - vp.y_min) / r as f64);
    let mut grid = Vec::with_capacity(2 * r * r);
    for j in 0..r {
        for i in 0..r {
            grid.push(vp.x_min + (i as f64 + 0.5) * dx);
            grid.push(vp.y_max - (j as f64 + 0.5) * dy);
        }
    }
    let classes = model.classify(&Tensor::matrix(r * r, 2, grid)?)?;
    if classes.len() != r * r {
        return Err(Error::shape("boundary plot", "classifier returned the wrong number of labels"));
    }

    let total = SIZE + 2.0 * PAD;
    let cell = SIZE / r as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{t}" height="{t}" viewBox="0 0 {t} {t}">"#,
        t = px(total)
    );
    s.push_str("<g id=\"regions\" shape-rendering=\"crispEdges\">\n");
    for (k, &c) in classes.iter().enumerate() {
        let (i, j) = (k % r, k / r);
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            px(PAD + i as f64 * cell),
            px(PAD + j as f64 * cell),
            px(cell),
            px(cell),
            REGION_FILL[c % REGION_FILL.len()]
        );
    }
    s.push_str("</g>\n<g id=\"points\">\n");
    for (i, &c) in labels.iter().enumerate() {
        let p = vp.to_pixel([points.row(i)[0], points.row(i)[1]]);
        let _ = writeln!(
            s,
            r#"<circle cx="{}" cy="{}" r="2.5" fill="{}"/>"#,
            px(p[0]),
            px(p[1]),
            POINT_FILL[c % POINT_FILL.len()]
        );
    }
    s.push_str("</g>\n<g id=\"traces\" fill=\"none\" stroke=\"#222\" stroke-width=\"1.2\">\n");
    for t in traces {
        let [a, b, c] = [vp.to_pixel(t.x), vp.to_pixel(t.x_adv), vp.to_pixel(t.x_pgd)];
        let _ = writeln!(
            s,
            r#"<polyline points="{},{} {},{} {},{}"/>"#,
            px(a[0]),
            px(a[1]),
            px(b[0]),
            px(b[1]),
            px(c[0]),
            px(c[1])
        );
        let _ = writeln!(s, r##"<circle cx="{}" cy="{}" r="3" fill="#000"/>"##, px(b[0]), px(b[1]));
        let _ = writeln!(s, r##"<rect x="{}" y="{}" width="5" height="5" fill="#fff"/>"##, px(c[0] - 2.5), px(c[1] - 2.5));
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart of named `(x, y)` series sharing one set of axes.
pub fn line_plot_svg(title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, left, bottom, top, right) = (640.0, 400.0, 60.0, 40.0, 30.0, 150.0);
    let pts = series.iter().flat_map(|(_, v)| v.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let (pw, ph) = (w - left - right, h - top - bottom);
    let map = |x: f64, y: f64| (left + (x - x0) / (x1 - x0) * pw, top + (y1 - y) / (y1 - y0) * ph);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>"##
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (gx, _) = map(x0 + f * (x1 - x0), y0);
        let (_, gy) = map(x0, y0 + f * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{:.3}</text>"#, px(gx), px(top + ph + 16.0), x0 + f * (x1 - x0));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.4}</text>"#, px(left - 4.0), px(gy + 4.0), y0 + f * (y1 - y0));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, px(left + pw / 2.0), px(h - 6.0), escape(x_label));
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = SERIES_STROKE[k % SERIES_STROKE.len()];
        let coords: Vec<String> = pts
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| {
                let (a, b) = map(x, y);
                format!("{},{}", px(a), px(b))
            })
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, coords.join(" "));
        let ly = top + 14.0 * k as f64 + 8.0;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, px(left + pw + 10.0), px(left + pw + 30.0));
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, px(left + pw + 34.0), px(ly + 4.0), escape(name));
    }
    s.push_str("</svg>\n");
    s
}
