//! Dependency-free SVG histograms with a density overlay and labelled
//! vertical markers.
//!
//! Bins follow the Freedman-Diaconis rule (at least 5 bins); the overlay is
//! a Gaussian kernel density with Silverman's bandwidth, scaled to counts.
//! The overlay is drawn only and never feeds any computation.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::screening::interpolated_quantile;
use crate::sigma::sample_sd;
use crate::types::{MeasurementSeries, QuantileTriple, ToleranceSpec};

pub const MIN_BINS: usize = 5;
const MAX_BINS: usize = 200;
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;
const KDE_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub label: String,
    pub x: f64,
    pub dashed: bool,
}

impl Marker {
    pub fn solid(label: &str, x: f64) -> Self {
        Marker { label: label.to_string(), x, dashed: false }
    }

    pub fn dashed(label: &str, x: f64) -> Self {
        Marker { label: label.to_string(), x, dashed: true }
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn freedman_diaconis_bins(values: &[f64]) -> usize {
    let s = sorted(values);
    let range = s[s.len() - 1] - s[0];
    let iqr = interpolated_quantile(&s, 0.75) - interpolated_quantile(&s, 0.25);
    let width = 2.0 * iqr / (s.len() as f64).cbrt();
    if width <= 0.0 || range <= 0.0 {
        return MIN_BINS;
    }
    ((range / width).ceil() as usize).clamp(MIN_BINS, MAX_BINS)
}

pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let s = sorted(values);
    let sd = sample_sd(&s);
    let iqr = interpolated_quantile(&s, 0.75) - interpolated_quantile(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (s.len() as f64).powf(-0.2)
}

fn kde(values: &[f64], bw: f64, x: f64) -> f64 {
    let norm = 1.0 / (values.len() as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    values.iter().map(|v| (-0.5 * ((x - v) / bw).powi(2)).exp()).sum::<f64>() * norm
}

/// Histogram of `values` with density overlay and vertical markers.
pub fn histogram_svg(values: &[f64], markers: &[Marker], title: &str) -> Result<Vec<u8>> {
    if values.len() < 2 {
        return Err(Error::TooFewSamples { got: values.len(), need: 2 });
    }
    let s = sorted(values);
    let (lo, hi) = (s[0], s[s.len() - 1]);
    if hi <= lo {
        return Err(Error::DegenerateRange);
    }
    let bins = freedman_diaconis_bins(&s);
    let bin_w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in &s {
        let i = (((v - lo) / bin_w) as usize).min(bins - 1);
        counts[i] += 1;
    }

    let mut x_min = lo;
    let mut x_max = hi;
    for m in markers.iter().filter(|m| m.x.is_finite()) {
        x_min = x_min.min(m.x);
        x_max = x_max.max(m.x);
    }
    let pad = 0.05 * (x_max - x_min);
    x_min -= pad;
    x_max += pad;

    let bw = silverman_bandwidth(&s);
    let density: Vec<(f64, f64)> = (0..KDE_POINTS)
        .map(|i| {
            let x = x_min + (x_max - x_min) * i as f64 / (KDE_POINTS - 1) as f64;
            let y = if bw > 0.0 { kde(&s, bw, x) * s.len() as f64 * bin_w } else { 0.0 };
            (x, y)
        })
        .collect();
    let y_max = counts.iter().map(|&c| c as f64).chain(density.iter().map(|p| p.1)).fold(1.0, f64::max) * 1.1;

    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + (x - x_min) / (x_max - x_min) * plot_w;
    let py = |y: f64| HEIGHT - MARGIN - y / y_max * plot_h;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{m:.2}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}" stroke="black"/>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for (i, &c) in counts.iter().enumerate() {
        let x0 = px(lo + i as f64 * bin_w);
        let x1 = px(lo + (i + 1) as f64 * bin_w);
        let y = py(c as f64);
        let _ = writeln!(
            svg,
            r##"<rect class="bar" x="{x0:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="#9ecae1" stroke="#3182bd"/>"##,
            w = x1 - x0,
            h = HEIGHT - MARGIN - y
        );
    }
    let points: Vec<String> = density.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    let _ = writeln!(
        svg,
        r##"<polyline class="density" fill="none" stroke="#08519c" stroke-width="1.5" points="{}"/>"##,
        points.join(" ")
    );
    for (k, m) in markers.iter().enumerate() {
        let x = px(m.x);
        let dash = if m.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            svg,
            r##"<line class="marker" data-label="{label}" x1="{x:.2}" y1="{top:.2}" x2="{x:.2}" y2="{b:.2}" stroke="#d62728"{dash}/>"##,
            label = escape(&m.label),
            top = MARGIN,
            b = HEIGHT - MARGIN
        );
        let _ = writeln!(
            svg,
            r#"<text class="marker-label" x="{x:.2}" y="{y:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            escape(&m.label),
            y = MARGIN - 6.0 - 12.0 * (k % 2) as f64
        );
    }
    let _ = writeln!(svg, "</svg>");
    Ok(svg.into_bytes())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Measurement histogram with markers for LSL, USL, the midpoint M (both
/// limits present), T, the mean and, when given, the three percentiles.
pub fn emit_histogram_svg(
    series: &MeasurementSeries,
    spec: &ToleranceSpec,
    quantiles: Option<&QuantileTriple>,
) -> Result<Vec<u8>> {
    let mut markers = Vec::new();
    if let Some(l) = spec.lsl() {
        markers.push(Marker::solid("LSL", l));
    }
    if let Some(u) = spec.usl() {
        markers.push(Marker::solid("USL", u));
    }
    if let Some(m) = spec.midpoint() {
        markers.push(Marker::dashed("M", m));
    }
    if let Some(t) = spec.target() {
        markers.push(Marker::solid("T", t));
    }
    markers.push(Marker::solid("mean", series.mean()));
    if let Some(q) = quantiles {
        markers.push(Marker::dashed("P0.135", q.p00135));
        markers.push(Marker::dashed("P50", q.p50));
        markers.push(Marker::dashed("P99.865", q.p99865));
    }
    histogram_svg(series.values(), &markers, "Measurement histogram")
}

/// Histogram of index ratios with dashed lines at the two ratio limits.
pub fn emit_ratio_histogram_svg(ratios: &[f64], lower: f64, upper: f64) -> Result<Vec<u8>> {
    let markers = [Marker::dashed(&lower.to_string(), lower), Marker::dashed(&upper.to_string(), upper)];
    histogram_svg(ratios, &markers, "Ratio histogram")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(svg: &[u8], needle: &str) -> usize {
        String::from_utf8_lossy(svg).matches(needle).count()
    }

    #[test]
    fn bin_rule() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        // IQR 499.5, width 2*499.5/10 = 99.9, range 999 -> 10 bins
        assert_eq!(freedman_diaconis_bins(&v), 10);
        assert_eq!(freedman_diaconis_bins(&[1.0, 2.0, 3.0]), MIN_BINS);
        assert_eq!(freedman_diaconis_bins(&[0.0, 0.0, 0.0, 0.0, 1.0]), MIN_BINS);
    }

    #[test]
    fn bandwidth_rule() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        // sd 1.5811, IQR/1.34 = 1.4925
        let h = silverman_bandwidth(&v);
        assert!((h - 0.9 * (2.0 / 1.34) * 5f64.powf(-0.2)).abs() < 1e-12);
    }

    #[test]
    fn markers_and_errors() {
        let s = MeasurementSeries::new(vec![4.60, 4.63, 4.61, 4.65, 4.62, 4.59]).unwrap();
        let spec = ToleranceSpec::bilateral(4.52, 4.72, Some(4.62)).unwrap();
        let svg = emit_histogram_svg(&s, &spec, None).unwrap();
        assert_eq!(count(&svg, r#"class="marker""#), 5);
        let q = QuantileTriple { p00135: 4.55, p50: 4.62, p99865: 4.68 };
        assert_eq!(count(&emit_histogram_svg(&s, &spec, Some(&q)).unwrap(), r#"class="marker""#), 8);
        assert_eq!(svg, emit_histogram_svg(&s, &spec, None).unwrap());

        let c = MeasurementSeries::new(vec![1.0; 5]).unwrap();
        assert_eq!(emit_histogram_svg(&c, &spec, None), Err(Error::DegenerateRange));

        let r = emit_ratio_histogram_svg(&[0.85, 0.95, 1.0, 1.02, 1.2], 0.9, 1.1).unwrap();
        assert_eq!(count(&r, r#"class="marker""#), 2);
        assert_eq!(count(&r, "stroke-dasharray"), 2);
    }

    #[test]
    fn bars_account_for_every_value() {
        let v: Vec<f64> = (0..37).map(|i| ((i * 13) % 37) as f64 * 0.1).collect();
        let svg = String::from_utf8(histogram_svg(&v, &[], "t").unwrap()).unwrap();
        assert_eq!(svg.matches(r#"class="bar""#).count(), freedman_diaconis_bins(&v));
    }
}
