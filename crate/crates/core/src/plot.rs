//! Minimal deterministic SVG line and scatter plots.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{MottError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    /// Piecewise constant, holding each value until the next x.
    Step,
    Scatter,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

#[derive(Debug, Clone, Default)]
pub struct Figure {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub series: Vec<Series>,
    /// Horizontal reference lines drawn across the plot area.
    pub hlines: Vec<f64>,
    /// Vertical reference lines.
    pub vlines: Vec<f64>,
}

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn bounds(it: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in it.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return None;
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return Some((lo - pad, hi + pad));
    }
    let pad = 0.03 * (hi - lo);
    Some((lo - pad, hi + pad))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Figure {
    pub fn new(title: &str, xlabel: &str, ylabel: &str) -> Self {
        Self {
            title: title.into(),
            xlabel: xlabel.into(),
            ylabel: ylabel.into(),
            ..Default::default()
        }
    }

    pub fn add(&mut self, label: &str, points: Vec<(f64, f64)>, style: Style) -> &mut Self {
        self.series.push(Series {
            label: label.into(),
            points,
            style,
        });
        self
    }

    pub fn render(&self) -> Result<String> {
        let xs = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).chain(self.vlines.iter().copied());
        let ys = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).chain(self.hlines.iter().copied());
        let (x0, x1) = bounds(xs).ok_or_else(|| MottError::domain("nothing to plot"))?;
        let (y0, y1) = bounds(ys).ok_or_else(|| MottError::domain("nothing to plot"))?;
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

        let mut o = String::new();
        let _ = writeln!(
            o,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(o, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(o, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(&self.title));
        let _ = writeln!(o, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);
        for k in 0..=4 {
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let fy = y0 + (y1 - y0) * k as f64 / 4.0;
            let _ = writeln!(o, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(fx), H - BOTTOM + 16.0, tick(fx));
            let _ = writeln!(o, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, sy(fy) + 4.0, tick(fy));
        }
        let _ = writeln!(o, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 10.0, escape(&self.xlabel));
        let _ = writeln!(
            o,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            TOP + ph / 2.0,
            escape(&self.ylabel)
        );
        for &v in &self.vlines {
            let _ = writeln!(o, r##"<line class="vline" x1="{0:.2}" y1="{TOP}" x2="{0:.2}" y2="{1}" stroke="#bbb" stroke-width="0.6"/>"##, sx(v), TOP + ph);
        }
        for &h in &self.hlines {
            let _ = writeln!(o, r##"<line class="hline" x1="{LEFT}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#bbb" stroke-width="0.6"/>"##, sy(h), LEFT + pw);
        }
        for (k, s) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            match s.style {
                Style::Scatter => {
                    for &(x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
                        let _ = writeln!(o, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#, sx(x), sy(y));
                    }
                }
                Style::Line | Style::Step => {
                    let mut d = String::new();
                    let mut prev: Option<f64> = None;
                    for &(x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
                        match prev {
                            None => {
                                let _ = write!(d, "M{:.2},{:.2}", sx(x), sy(y));
                            }
                            Some(py) if s.style == Style::Step => {
                                let _ = write!(d, " L{:.2},{:.2} L{:.2},{:.2}", sx(x), sy(py), sx(x), sy(y));
                            }
                            Some(_) => {
                                let _ = write!(d, " L{:.2},{:.2}", sx(x), sy(y));
                            }
                        }
                        prev = Some(y);
                    }
                    let _ = writeln!(o, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.2"/>"#);
                }
            }
            let _ = writeln!(
                o,
                r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
                LEFT + 8.0,
                TOP + 16.0 + 14.0 * k as f64,
                escape(&s.label)
            );
        }
        o.push_str("</svg>\n");
        Ok(o)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()?)?;
        Ok(())
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Reads a CSV with a header row and returns the named numeric columns.
pub fn read_columns(path: &Path, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| MottError::Config(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| MottError::Config(format!("column {name} not found in {}", path.display())))
    };
    let (cx, cy) = (col(x)?, col(y)?);
    let mut out = Vec::new();
    for (ln, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let parse = |c: usize| -> Result<f64> {
            f.get(c)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| MottError::Config(format!("bad number on line {} of {}", ln + 2, path.display())))
        };
        out.push((parse(cx)?, parse(cy)?));
    }
    Ok(out)
}
