//! Minimal SVG line and scatter plots.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeriesKind {
    Line,
    Points,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub kind: SeriesKind,
    pub points: Vec<(f64, f64)>,
    /// 1 draws full colour, lower values fade towards white.
    pub brightness: f64,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            kind: SeriesKind::Line,
            points,
            brightness: 1.0,
        }
    }

    pub fn points(label: impl Into<String>, points: Vec<(f64, f64)>, brightness: f64) -> Self {
        Self {
            label: label.into(),
            kind: SeriesKind::Points,
            points,
            brightness,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plot {
    /// Suffix of the output file name.
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [(u8, u8, u8); 6] = [
    (31, 119, 180),
    (214, 39, 40),
    (44, 160, 44),
    (148, 103, 189),
    (255, 127, 14),
    (23, 190, 207),
];

fn colour(i: usize, brightness: f64) -> String {
    let (r, g, b) = PALETTE[i % PALETTE.len()];
    let b01 = brightness.clamp(0.0, 1.0);
    let fade = |c: u8| (255.0 - (255.0 - c as f64) * b01).round() as u8;
    format!("#{:02x}{:02x}{:02x}", fade(r), fade(g), fade(b))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

fn ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last)
        .map(|k| {
            let t = k as f64 * step;
            (t, format!("{t:.decimals$}"))
        })
        .collect()
}

/// Renders the plot as an SVG document; every line series becomes one
/// `<polyline>`.
pub fn render_svg(plot: &Plot) -> String {
    let (x0, x1) = range(plot.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = range(plot.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&plot.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for (t, label) in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{b5}" stroke="black"/><text x="{x:.2}" y="{b18}" text-anchor="middle">{label}</text>"#,
            b = TOP + ph,
            b5 = TOP + ph + 5.0,
            b18 = TOP + ph + 18.0,
        );
    }
    for (t, label) in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r#"<line x1="{l5}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{l8}" y="{y4:.2}" text-anchor="end">{label}</text>"#,
            l5 = LEFT - 5.0,
            l8 = LEFT - 8.0,
            y4 = y + 4.0,
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 12.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&plot.y_label)
    );

    for (i, series) in plot.series.iter().enumerate() {
        let c = colour(i, series.brightness);
        let pts = series.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite());
        match series.kind {
            SeriesKind::Line => {
                let coords: Vec<String> = pts.map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#,
                    coords.join(" ")
                );
            }
            SeriesKind::Points => {
                let _ = writeln!(s, r#"<g fill="{c}">"#);
                for p in pts {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="1.6"/>"#, sx(p.0), sy(p.1));
                }
                let _ = writeln!(s, "</g>");
            }
        }
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{c}"/><text x="{}" y="{ly}">{}</text>"#,
            ly - 9.0,
            lx + 15.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_svg(plot: &Plot, path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(plot)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
