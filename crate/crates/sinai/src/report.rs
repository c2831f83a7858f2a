//! Deterministic report emission: UTF-8 JSON with stable key order,
//! RFC 4180 CSV, and minimal static SVG plots. Reports never embed wall
//! clocks or durations, so identical configs yield byte-identical files.

use crate::error::{Result, SinaiError};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SinaiError::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, bytes).map_err(|e| SinaiError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    write_bytes(&path, &json_bytes(value)?)?;
    Ok(path)
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// RFC 4180 CSV accumulator (CRLF records, quoting only where required).
#[derive(Default)]
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new() -> Self {
        Csv::default()
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for f in fields {
            if !first {
                self.buf.push(',');
            }
            first = false;
            let f = f.as_ref();
            if f.contains([',', '"', '\n', '\r']) {
                self.buf.push('"');
                self.buf.push_str(&f.replace('"', "\"\""));
                self.buf.push('"');
            } else {
                self.buf.push_str(f);
            }
        }
        self.buf.push_str("\r\n");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf.into_bytes()
    }
}

pub fn write_csv(dir: &Path, name: &str, csv: Csv) -> Result<PathBuf> {
    let path = dir.join(name);
    write_bytes(&path, &csv.into_bytes())?;
    Ok(path)
}

/// Minimal SVG 1.1 canvas with polylines, rectangles and text.
pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64) {
        let pts: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{x:.2},{y:.2}"))
            .collect();
        self.body.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        self.body.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>\n"
        ));
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        self.body.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{r:.2}\" fill=\"{fill}\"/>\n"
        ));
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, content: &str) {
        self.body.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size:.1}\" font-family=\"monospace\">{}</text>\n",
            content.replace('&', "&amp;").replace('<', "&lt;")
        ));
    }

    pub fn finish(self) -> Vec<u8> {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.width, self.height, self.width, self.height, self.body
        )
        .into_bytes()
    }
}

/// Step plot of the potential with cover summits/bottoms marked.
pub fn potential_svg(
    pot: &crate::env::Potential,
    d: &crate::valleys::ValleyDecomposition,
) -> Vec<u8> {
    let (w, h) = (900.0, 420.0);
    let mut svg = Svg::new(w, h);
    let n = pot.values().len();
    let (mut smin, mut smax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in pot.values() {
        smin = smin.min(v);
        smax = smax.max(v);
    }
    let span = (smax - smin).max(1e-9);
    let x_of = |k: i64| 40.0 + (k - pot.lo()) as f64 / (n as f64 - 1.0) * (w - 80.0);
    let y_of = |s: f64| 20.0 + (smax - s) / span * (h - 60.0);
    let stride = (n / 2000).max(1);
    let points: Vec<(f64, f64)> = (0..n)
        .step_by(stride)
        .map(|j| {
            let k = pot.lo() + j as i64;
            (x_of(k), y_of(pot.values()[j]))
        })
        .collect();
    svg.polyline(&points, "#444444", 1.0);
    for &m in &d.m_upper {
        svg.circle(x_of(m), y_of(pot.s(m)), 4.0, "#c62828");
    }
    for &m in &d.m_lower {
        svg.circle(x_of(m), y_of(pot.s(m)), 4.0, "#1565c0");
    }
    svg.text(
        40.0,
        h - 14.0,
        12.0,
        &format!(
            "potential on [{}, {}], n_f = {}, Gamma_t = {:.3}",
            pot.lo(),
            pot.hi(),
            d.n_f,
            d.params.big_gamma
        ),
    );
    svg.finish()
}

/// First-passage density of the reflected Brownian motion to level 1,
/// by alternating series; used only for plot overlays.
fn one_sided_piece_density(t: f64) -> f64 {
    if t <= 1e-4 {
        return 0.0;
    }
    let mut acc = 0.0;
    for n in 0..60 {
        let a = (2 * n + 1) as f64;
        let term = a * std::f64::consts::PI / 2.0
            * (-a * a * std::f64::consts::PI * std::f64::consts::PI * t / 8.0).exp();
        acc += if n % 2 == 0 { term } else { -term };
        if term.abs() < 1e-14 {
            break;
        }
    }
    acc.max(0.0)
}

/// Density of the sum of two independent pieces (same-kind extrema gaps),
/// by numerical convolution on a fixed grid.
pub fn gap_density(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let steps = 400;
    let h = x / steps as f64;
    let mut acc = 0.0;
    for i in 1..steps {
        let s = i as f64 * h;
        acc += one_sided_piece_density(s) * one_sided_piece_density(x - s);
    }
    acc * h
}

/// Histogram of rescaled gaps with the limiting density overlaid.
pub fn gaps_histogram_svg(gaps: &[f64]) -> Vec<u8> {
    let (w, h) = (720.0, 420.0);
    let mut svg = Svg::new(w, h);
    if gaps.is_empty() {
        return svg.finish();
    }
    let xmax = 8.0f64;
    let bins = 64usize;
    let mut counts = vec![0usize; bins];
    let mut kept = 0usize;
    for &g in gaps {
        if g < xmax {
            counts[(g / xmax * bins as f64) as usize] += 1;
            kept += 1;
        }
    }
    let bin_w = xmax / bins as f64;
    let dens: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / kept.max(1) as f64 / bin_w)
        .collect();
    let ymax = dens.iter().cloned().fold(0.3f64, f64::max) * 1.1;
    let x_of = |x: f64| 50.0 + x / xmax * (w - 90.0);
    let y_of = |y: f64| 20.0 + (ymax - y) / ymax * (h - 70.0);
    for (i, &d) in dens.iter().enumerate() {
        let x0 = x_of(i as f64 * bin_w);
        let x1 = x_of((i + 1) as f64 * bin_w);
        svg.rect(x0, y_of(d), x1 - x0 - 0.5, y_of(0.0) - y_of(d), "#90caf9");
    }
    let curve: Vec<(f64, f64)> = (1..=240)
        .map(|i| {
            let x = i as f64 / 240.0 * xmax;
            (x_of(x), y_of(gap_density(x)))
        })
        .collect();
    svg.polyline(&curve, "#c62828", 1.5);
    svg.text(
        50.0,
        h - 16.0,
        12.0,
        &format!("rescaled same-kind extrema gaps, n = {}", gaps.len()),
    );
    svg.finish()
}
