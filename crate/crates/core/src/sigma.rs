//! Within- and overall standard-deviation estimators and the selection rule
//! that picks one from the data layout.
//!
//! Individuals (subgroup size 1): average moving range (AMR), median moving
//! range (MMR) and the square root of the mean squared successive
//! differences (SRMSSD). Subgrouped data: average range (R-bar), average
//! standard deviation (S-bar) and the pooled standard deviation.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::types::{mean, MeasurementSeries, SigmaEstimate, SigmaMethod};

pub const MIN_WINDOW: usize = 2;
pub const MAX_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChartConstant {
    /// Mean of the range of `w` standard normal observations.
    D2,
    /// Bias factor of the sample standard deviation.
    C4,
    D3,
    /// Median of the range of `w` standard normal observations.
    D4,
}

// Rows are w = 2..=10; columns d2, c4, d3, d4.
#[allow(clippy::approx_constant)]
const TABLE: [[f64; 4]; 9] = [
    [1.1284, 0.7979, 0.8525, 0.9539],
    [1.6926, 0.8862, 0.8884, 1.5878],
    [2.0588, 0.9213, 0.8798, 1.9783],
    [2.3259, 0.9400, 0.8641, 2.2569],
    [2.5344, 0.9515, 0.8480, 2.4717],
    [2.7044, 0.9594, 0.8332, 2.6455],
    [2.8472, 0.9650, 0.8198, 2.7908],
    [2.9700, 0.9693, 0.8078, 2.9154],
    [3.0775, 0.9727, 0.7971, 3.0242],
];

/// Tabulated control-chart constant for sample size `w` in `2..=10`.
pub fn control_chart_constant(name: ChartConstant, w: usize) -> Result<f64> {
    if !(MIN_WINDOW..=MAX_WINDOW).contains(&w) {
        return Err(Error::OutOfTable(w));
    }
    let col = match name {
        ChartConstant::D2 => 0,
        ChartConstant::C4 => 1,
        ChartConstant::D3 => 2,
        ChartConstant::D4 => 3,
    };
    Ok(TABLE[w - MIN_WINDOW][col])
}

/// Analytic `c4(n) = sqrt(2/(n-1)) * Gamma(n/2) / Gamma((n-1)/2)`, defined
/// for any `n >= 2`.
pub fn c4_analytic(n: usize) -> f64 {
    assert!(n >= 2, "c4 is defined for n >= 2");
    let n = n as f64;
    (2.0 / (n - 1.0)).sqrt() * (ln_gamma(n / 2.0) - ln_gamma((n - 1.0) / 2.0)).exp()
}

/// Sample standard deviation (divisor `n - 1`).
pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (values.len() as f64 - 1.0)).sqrt()
}

fn range(values: &[f64]) -> f64 {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo
}

/// Median with the mean-of-central-pair convention for even counts.
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Overall (long-term) standard deviation over every observation.
pub fn overall_sigma(series: &MeasurementSeries) -> Result<SigmaEstimate> {
    overall_sigma_of(series.values())
}

pub(crate) fn overall_sigma_of(values: &[f64]) -> Result<SigmaEstimate> {
    if values.len() < 2 {
        return Err(Error::TooFewSamples { got: values.len(), need: 2 });
    }
    Ok(SigmaEstimate::new(SigmaMethod::Overall, None, sample_sd(values)))
}

/// Moving ranges `max - min` over every window of `w` consecutive values.
pub fn moving_ranges(values: &[f64], w: usize) -> Result<Vec<f64>> {
    if !(MIN_WINDOW..=MAX_WINDOW).contains(&w) {
        return Err(Error::WindowOutOfRange(w));
    }
    if values.len() < w {
        return Err(Error::TooFewSamples { got: values.len(), need: w });
    }
    Ok(values.windows(w).map(range).collect())
}

fn individuals(series: &MeasurementSeries) -> Result<&[f64]> {
    if series.subgroup_size() != 1 {
        return Err(Error::SubgroupNotOne(series.subgroup_size()));
    }
    Ok(series.values())
}

/// Average moving range divided by `d2(w)`.
pub fn within_sigma_amr(series: &MeasurementSeries, w: usize) -> Result<SigmaEstimate> {
    let mr = moving_ranges(individuals(series)?, w)?;
    let d2 = control_chart_constant(ChartConstant::D2, w)?;
    Ok(SigmaEstimate::new(SigmaMethod::Amr, Some(w), mean(&mr) / d2))
}

/// Median moving range divided by `d4(w)`.
pub fn within_sigma_mmr(series: &MeasurementSeries, w: usize) -> Result<SigmaEstimate> {
    let mr = moving_ranges(individuals(series)?, w)?;
    let d4 = control_chart_constant(ChartConstant::D4, w)?;
    Ok(SigmaEstimate::new(SigmaMethod::Mmr, Some(w), median(&mr) / d4))
}

/// Unbiasing applied to the raw SRMSSD value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SrmssdUnbias {
    /// Divide by the analytic `c4(N)` at the total sample count.
    #[default]
    C4,
    None,
}

pub fn within_sigma_srmssd(series: &MeasurementSeries, unbias: SrmssdUnbias) -> Result<SigmaEstimate> {
    let x = individuals(series)?;
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, need: 2 });
    }
    let ssd: f64 = x.windows(2).map(|p| (p[1] - p[0]).powi(2)).sum();
    let raw = (ssd / (2.0 * (n as f64 - 1.0))).sqrt();
    let value = match unbias {
        SrmssdUnbias::C4 => raw / c4_analytic(n),
        SrmssdUnbias::None => raw,
    };
    Ok(SigmaEstimate::new(SigmaMethod::Srmssd, None, value))
}

fn equal_subgroups(series: &MeasurementSeries) -> Result<(usize, Vec<&[f64]>)> {
    let m = series.subgroup_size();
    if m < 2 {
        return Err(Error::SubgroupTooSmall(m));
    }
    if m > MAX_WINDOW {
        return Err(Error::SubgroupOutOfTable(m));
    }
    Ok((m, series.subgroups().collect()))
}

/// Mean subgroup range divided by `d2(m)`.
pub fn within_sigma_rbar(series: &MeasurementSeries) -> Result<SigmaEstimate> {
    let (m, groups) = equal_subgroups(series)?;
    let rbar = groups.iter().map(|g| range(g)).sum::<f64>() / groups.len() as f64;
    let d2 = control_chart_constant(ChartConstant::D2, m)?;
    Ok(SigmaEstimate::new(SigmaMethod::Rbar, None, rbar / d2))
}

/// Mean subgroup standard deviation divided by `c4(m)`.
pub fn within_sigma_sbar(series: &MeasurementSeries) -> Result<SigmaEstimate> {
    let (m, groups) = equal_subgroups(series)?;
    let sbar = groups.iter().map(|g| sample_sd(g)).sum::<f64>() / groups.len() as f64;
    let c4 = control_chart_constant(ChartConstant::C4, m)?;
    Ok(SigmaEstimate::new(SigmaMethod::Sbar, None, sbar / c4))
}

/// Pooled standard deviation of the series' subgroups.
pub fn within_sigma_pooled(series: &MeasurementSeries) -> Result<SigmaEstimate> {
    let groups: Vec<&[f64]> = series.subgroups().collect();
    pooled_sigma_of_groups(&groups)
}

/// Pooled standard deviation over explicit groups, which may differ in size.
pub fn pooled_sigma_of_groups(groups: &[&[f64]]) -> Result<SigmaEstimate> {
    let stats =
        groups
            .iter()
            .enumerate()
            .map(|(index, g)| {
                if g.len() < 2 {
                    Err(Error::GroupTooSmall { index, size: g.len() })
                } else {
                    Ok((g.len(), sample_sd(g)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
    pooled_sigma_from_stats(&stats)
}

/// `sqrt(sum (n_i - 1) s_i^2 / (sum n_i - k))` from `(n_i, s_i)` pairs.
pub fn pooled_sigma_from_stats(groups: &[(usize, f64)]) -> Result<SigmaEstimate> {
    if groups.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    if let Some((index, &(size, _))) = groups.iter().enumerate().find(|(_, (n, _))| *n < 2) {
        return Err(Error::GroupTooSmall { index, size });
    }
    let num: f64 = groups.iter().map(|&(n, s)| (n as f64 - 1.0) * s * s).sum();
    let den: f64 = groups.iter().map(|&(n, _)| n as f64 - 1.0).sum();
    Ok(SigmaEstimate::new(SigmaMethod::Pooled, None, (num / den).sqrt()))
}

/// Dispatches to the estimator named by `method`.
pub fn estimate(
    series: &MeasurementSeries,
    method: SigmaMethod,
    window: Option<usize>,
    unbias: SrmssdUnbias,
) -> Result<SigmaEstimate> {
    let window = || window.ok_or(Error::WindowOutOfRange(0));
    match method {
        SigmaMethod::Overall => overall_sigma(series),
        SigmaMethod::Amr => within_sigma_amr(series, window()?),
        SigmaMethod::Mmr => within_sigma_mmr(series, window()?),
        SigmaMethod::Srmssd => within_sigma_srmssd(series, unbias),
        SigmaMethod::Rbar => within_sigma_rbar(series),
        SigmaMethod::Sbar => within_sigma_sbar(series),
        SigmaMethod::Pooled => within_sigma_pooled(series),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigmaChoice {
    pub method: SigmaMethod,
    pub window: Option<usize>,
}

/// Picks the within estimator for a layout: AMR with `w = 2` for
/// individuals, pooled for subgroups, unless `override_choice` is given.
/// An override without a window for AMR/MMR gets `w = 2`.
pub fn select_sigma_method(subgroup_size: usize, _n: usize, override_choice: Option<SigmaChoice>) -> SigmaChoice {
    match override_choice {
        Some(SigmaChoice { method, window }) => {
            SigmaChoice { method, window: if method.uses_window() { Some(window.unwrap_or(2)) } else { None } }
        }
        None if subgroup_size <= 1 => SigmaChoice { method: SigmaMethod::Amr, window: Some(2) },
        None => SigmaChoice { method: SigmaMethod::Pooled, window: None },
    }
}
