//! Histogram and Gaussian KDE summaries for distribution plots.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{mean, quantile_sorted, sample_sd};
use crate::error::{Error, Result};

pub const KDE_POINTS: usize = 256;
pub const DEFAULT_BINS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// count / (n · width); zero-width single bins report the raw share.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub histogram: Vec<HistogramBin>,
    pub bandwidth: Option<f64>,
    /// (x, density) points of the KDE curve; empty for constant data.
    pub curve: Vec<(f64, f64)>,
    pub warning: Option<String>,
}

/// Silverman's rule of thumb: 0.9 · min(sd, IQR/1.34) · n^(−1/5).
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sd = sample_sd(values);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (values.len() as f64).powf(-0.2)
}

pub fn kde_at(values: &[f64], bandwidth: f64, x: f64) -> f64 {
    let norm = 1.0 / (values.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    values
        .iter()
        .map(|v| {
            let u = (x - v) / bandwidth;
            (-0.5 * u * u).exp()
        })
        .sum::<f64>()
        * norm
}

pub fn density_summary(values: &[f64], bins: usize) -> Result<DensitySummary> {
    if values.len() < 2 {
        return Err(Error::InsufficientData("density summary needs at least 2 values".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bin count must be positive".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("values must be finite".into()));
    }
    let n = values.len();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    if min == max {
        log::warn!("constant data: emitting a single bin and no density curve");
        return Ok(DensitySummary {
            n,
            min,
            max,
            histogram: vec![HistogramBin {
                lower: min,
                upper: max,
                count: n,
                density: 1.0,
            }],
            bandwidth: None,
            curve: Vec::new(),
            warning: Some("constant data; density curve skipped".into()),
        });
    }

    let width = (max - min) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = (((v - min) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lower: min + i as f64 * width,
            upper: if i + 1 == bins { max } else { min + (i + 1) as f64 * width },
            count,
            density: count as f64 / (n as f64 * width),
        })
        .collect();

    let h = silverman_bandwidth(values);
    let (lo, hi) = (min - 3.0 * h, max + 3.0 * h);
    let step = (hi - lo) / (KDE_POINTS - 1) as f64;
    let curve = (0..KDE_POINTS)
        .map(|i| {
            let x = lo + i as f64 * step;
            (x, kde_at(values, h, x))
        })
        .collect();

    Ok(DensitySummary {
        n,
        min,
        max,
        histogram,
        bandwidth: Some(h),
        curve,
        warning: None,
    })
}

pub fn trapezoid(curve: &[(f64, f64)]) -> f64 {
    curve
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}

/// Writes `group,x,density` rows for every curve point.
pub fn write_density_csv<W: Write>(groups: &[(String, DensitySummary)], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["group", "x", "density"])?;
    for (name, summary) in groups {
        for (x, y) in &summary.curve {
            writer.write_record([name.as_str(), &x.to_string(), &y.to_string()])?;
        }
    }
    writer.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Overlay of the groups' density curves as a standalone SVG document.
pub fn density_svg(groups: &[(String, DensitySummary)], title: &str) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let points = groups.iter().flat_map(|(_, s)| s.curve.iter());
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    if !x0.is_finite() || x1 <= x0 {
        x0 = 0.0;
        x1 = 1.0;
    }
    if y1 <= 0.0 {
        y1 = 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - y / y1 * (h - 2.0 * pad);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
        y = h - pad,
        x2 = w - pad
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{y}" stroke="black"/>"#,
        y = h - pad
    );
    for (label, x) in [(x0, pad), (x1, w - pad)] {
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{label:.2}</text>"#,
            h - pad + 16.0
        );
    }
    for (i, (name, summary)) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = summary
            .curve
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = pad + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            w - pad - 120.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean and SD alongside the density, handy for plot captions.
pub fn caption(values: &[f64]) -> String {
    format!("M = {:.2}, SD = {:.2}, n = {}", mean(values), sample_sd(values), values.len())
}
