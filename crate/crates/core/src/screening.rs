//! Pre-analysis screening: outlier flagging and the Anderson-Darling
//! normality test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::sigma::sample_sd;
use crate::types::{mean, MeasurementSeries};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_TUKEY_K: f64 = 1.5;
pub const MIN_AD_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum OutlierMethod {
    /// Flags values outside `[Q1 - k IQR, Q3 + k IQR]`.
    TukeyFence { k: f64 },
    /// Two-sided Grubbs test on the most extreme observation.
    Grubbs { alpha: f64 },
}

impl OutlierMethod {
    pub fn name(&self) -> &'static str {
        match self {
            OutlierMethod::TukeyFence { .. } => "TukeyFence",
            OutlierMethod::Grubbs { .. } => "Grubbs",
        }
    }
}

impl Default for OutlierMethod {
    fn default() -> Self {
        OutlierMethod::TukeyFence { k: DEFAULT_TUKEY_K }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlaggedValue {
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    #[serde(flatten)]
    pub method: OutlierMethod,
    pub flagged: Vec<FlaggedValue>,
}

impl OutlierReport {
    pub fn indices(&self) -> Vec<usize> {
        self.flagged.iter().map(|f| f.index).collect()
    }
}

/// Quantile by linear interpolation between order statistics at position
/// `1 + (n - 1) p` (1-based). `sorted` must be ascending and non-empty.
pub fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Flags outliers without modifying the series.
pub fn detect_outliers(series: &MeasurementSeries, method: OutlierMethod) -> Result<OutlierReport> {
    let x = series.values();
    let flagged = match method {
        OutlierMethod::TukeyFence { k } => {
            if x.len() < 4 {
                return Err(Error::TooFewSamples { got: x.len(), need: 4 });
            }
            let sorted = sorted_copy(x);
            let q1 = interpolated_quantile(&sorted, 0.25);
            let q3 = interpolated_quantile(&sorted, 0.75);
            let iqr = q3 - q1;
            let (lo, hi) = (q1 - k * iqr, q3 + k * iqr);
            x.iter()
                .enumerate()
                .filter(|(_, &v)| v < lo || v > hi)
                .map(|(index, &value)| FlaggedValue { index, value })
                .collect()
        }
        OutlierMethod::Grubbs { alpha } => {
            let n = x.len();
            if n < 3 {
                return Err(Error::TooFewSamples { got: n, need: 3 });
            }
            let m = mean(x);
            let s = sample_sd(x);
            if s == 0.0 {
                Vec::new()
            } else {
                let (index, dev) = x
                    .iter()
                    .map(|v| (v - m).abs())
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, d)| if d > best.1 { (i, d) } else { best });
                let g = dev / s;
                if g > grubbs_critical(n, alpha) {
                    vec![FlaggedValue { index, value: x[index] }]
                } else {
                    Vec::new()
                }
            }
        }
    };
    Ok(OutlierReport { method, flagged })
}

/// Two-sided Grubbs critical value
/// `(n-1)/sqrt(n) * sqrt(t^2 / (n - 2 + t^2))`, `t = t_{1 - alpha/(2n), n-2}`.
pub fn grubbs_critical(n: usize, alpha: f64) -> f64 {
    let nf = n as f64;
    let t = if n == 3 {
        // One degree of freedom: Cauchy quantile in closed form.
        (std::f64::consts::PI * (0.5 - alpha / (2.0 * nf))).tan()
    } else {
        StudentsT::new(0.0, 1.0, nf - 2.0).expect("df > 0").inverse_cdf(1.0 - alpha / (2.0 * nf))
    };
    (nf - 1.0) / nf.sqrt() * (t * t / (nf - 2.0 + t * t)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    pub a2: f64,
    pub a2_star: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub passed: bool,
}

/// Anderson-Darling test for normality with mean and variance estimated
/// from the sample.
pub fn anderson_darling_normality(series: &MeasurementSeries, alpha: f64) -> Result<NormalityResult> {
    let x = series.values();
    let n = x.len();
    if n < MIN_AD_SAMPLES {
        return Err(Error::TooFewSamples { got: n, need: MIN_AD_SAMPLES });
    }
    if series.is_constant() {
        return Err(Error::ConstantSeries);
    }
    let m = mean(x);
    let s = sample_sd(x);
    let z: Vec<f64> = sorted_copy(x).into_iter().map(|v| (v - m) / s).collect();
    let std_normal = Normal::standard();

    let nf = n as f64;
    let sum: f64 = (0..n)
        .map(|i| {
            let weight = 2.0 * (i + 1) as f64 - 1.0;
            // ln F(z_i) + ln(1 - F(z_{n+1-i})), using the survival function for the upper tail
            weight * (std_normal.cdf(z[i]).ln() + std_normal.sf(z[n - 1 - i]).ln())
        })
        .sum();
    let a2 = (-nf - sum / nf).max(0.0);
    let a2_star = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let p_value = anderson_darling_p_value(a2_star);
    Ok(NormalityResult { a2, a2_star, p_value, alpha, passed: p_value > alpha })
}

/// Case-3 (both parameters estimated) p-value from the adjusted statistic,
/// piecewise-exponential approximation of D'Agostino and Stephens.
pub fn anderson_darling_p_value(a2_star: f64) -> f64 {
    let a = a2_star;
    let p = if a < 0.2 {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    } else if a < 0.34 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else if a < 0.6 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a < 10.0 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else {
        3.7e-24
    };
    p.clamp(0.0, 1.0)
}
