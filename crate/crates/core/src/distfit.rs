//! Maximum-likelihood fitting of candidate families, ranking by information
//! criteria, and quantile evaluation for the percentile-based indices.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::function::gamma::{digamma, gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::sigma::sample_sd;
use crate::types::{mean, DistributionFit, Family, MeasurementSeries, QuantileTriple};

const NEWTON_TOL: f64 = 1e-10;
const MAX_ITER: usize = 200;

/// Smallest sample size at which the three-parameter Weibull joins the
/// default candidate set.
pub const WEIBULL3P_MIN_N: usize = 20;

/// Relative distance (as a fraction of the data range) kept between the
/// three-parameter Weibull location and the sample minimum.
pub const WEIBULL3P_LOCATION_OFFSET: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "AIC")]
    Aic,
    #[serde(rename = "BIC")]
    Bic,
    #[default]
    #[serde(rename = "AICc")]
    Aicc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationCriteria {
    pub aic: f64,
    pub bic: f64,
    /// `+inf` when `n <= k + 1`.
    pub aicc: f64,
}

pub fn information_criteria(loglik: f64, k: usize, n: usize) -> InformationCriteria {
    let kf = k as f64;
    let nf = n as f64;
    let aic = -2.0 * loglik + 2.0 * kf;
    let bic = -2.0 * loglik + kf * nf.ln();
    let aicc = if n > k + 1 { aic + 2.0 * kf * (kf + 1.0) / (nf - kf - 1.0) } else { f64::INFINITY };
    InformationCriteria { aic, bic, aicc }
}

impl DistributionFit {
    fn from_loglik(family: Family, params: Vec<f64>, n: usize, loglik: f64) -> Self {
        let ic = information_criteria(loglik, family.param_count(), n);
        DistributionFit { family, params, n, loglik, aic: ic.aic, bic: ic.bic, aicc: ic.aicc }
    }

    pub fn criterion(&self, c: Criterion) -> f64 {
        match c {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
            Criterion::Aicc => self.aicc,
        }
    }

    fn normal(&self) -> Normal {
        Normal::new(self.params[0], self.params[1]).expect("fitted normal has positive sd")
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let p = &self.params;
        match self.family {
            Family::Normal => self.normal().cdf(x),
            Family::LogNormal => {
                if x <= 0.0 {
                    0.0
                } else {
                    Normal::standard().cdf((x.ln() - p[0]) / p[1])
                }
            }
            Family::Exponential => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-p[0] * x).exp_m1()
                }
            }
            Family::Gamma => {
                if x <= 0.0 {
                    0.0
                } else {
                    gamma_lr(p[0], x / p[1])
                }
            }
            Family::Weibull2p | Family::Weibull3p => {
                let z = x - self.location();
                if z <= 0.0 {
                    0.0
                } else {
                    -(-(z / p[1]).powf(p[0])).exp_m1()
                }
            }
        }
    }

    /// Upper tail `1 - CDF(x)`, evaluated without cancellation.
    pub fn sf(&self, x: f64) -> f64 {
        let p = &self.params;
        match self.family {
            Family::Normal => self.normal().sf(x),
            Family::LogNormal => {
                if x <= 0.0 {
                    1.0
                } else {
                    Normal::standard().sf((x.ln() - p[0]) / p[1])
                }
            }
            Family::Exponential => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-p[0] * x).exp()
                }
            }
            Family::Gamma => {
                if x <= 0.0 {
                    1.0
                } else {
                    gamma_ur(p[0], x / p[1])
                }
            }
            Family::Weibull2p | Family::Weibull3p => {
                let z = x - self.location();
                if z <= 0.0 {
                    1.0
                } else {
                    (-(z / p[1]).powf(p[0])).exp()
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let p = &self.params;
        match self.family {
            Family::Normal => self.normal().pdf(x),
            Family::LogNormal => {
                if x <= 0.0 {
                    0.0
                } else {
                    Normal::standard().pdf((x.ln() - p[0]) / p[1]) / (x * p[1])
                }
            }
            Family::Exponential => {
                if x < 0.0 {
                    0.0
                } else {
                    p[0] * (-p[0] * x).exp()
                }
            }
            Family::Gamma => {
                if x <= 0.0 {
                    0.0
                } else {
                    let (k, theta) = (p[0], p[1]);
                    ((k - 1.0) * x.ln() - x / theta - ln_gamma(k) - k * theta.ln()).exp()
                }
            }
            Family::Weibull2p | Family::Weibull3p => {
                let z = x - self.location();
                if z <= 0.0 {
                    0.0
                } else {
                    let (k, lambda) = (p[0], p[1]);
                    let u = z / lambda;
                    k / lambda * u.powf(k - 1.0) * (-u.powf(k)).exp()
                }
            }
        }
    }

    fn location(&self) -> f64 {
        if self.family == Family::Weibull3p {
            self.params[2]
        } else {
            0.0
        }
    }

    /// Inverse CDF for `0 < p < 1`.
    pub fn quantile(&self, p: f64) -> f64 {
        assert!(p > 0.0 && p < 1.0, "quantile probability must lie in (0, 1)");
        let par = &self.params;
        match self.family {
            Family::Normal => self.normal().inverse_cdf(p),
            Family::LogNormal => (par[0] + par[1] * Normal::standard().inverse_cdf(p)).exp(),
            Family::Exponential => -(-p).ln_1p() / par[0],
            Family::Weibull2p | Family::Weibull3p => self.location() + par[1] * (-(-p).ln_1p()).powf(1.0 / par[0]),
            Family::Gamma => self.gamma_quantile(p),
        }
    }

    /// Bracketed Newton iteration on the CDF, falling back to bisection
    /// whenever a step leaves the bracket.
    fn gamma_quantile(&self, p: f64) -> f64 {
        let scale = self.params[1];
        let mut lo = 0.0;
        let mut hi = self.params[0] * scale;
        while self.cdf(hi) < p {
            lo = hi;
            hi *= 2.0;
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..500 {
            let err = self.cdf(x) - p;
            if err.abs() <= 1e-15 {
                break;
            }
            if err > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.pdf(x);
            let newton = if d > 0.0 { x - err / d } else { f64::NAN };
            x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        x
    }
}

pub fn quantile(fit: &DistributionFit, p: f64) -> f64 {
    fit.quantile(p)
}

pub fn quantile_triple(fit: &DistributionFit) -> QuantileTriple {
    QuantileTriple { p00135: fit.quantile(0.00135), p50: fit.quantile(0.5), p99865: fit.quantile(0.99865) }
}

/// Maximum-likelihood fit of one family.
pub fn fit_distribution(series: &MeasurementSeries, family: Family) -> Result<DistributionFit> {
    fit_values(series.values(), family)
}

pub(crate) fn fit_values(x: &[f64], family: Family) -> Result<DistributionFit> {
    let n = x.len();
    let k = family.param_count();
    if n < k + 1 {
        return Err(Error::TooFewSamples { got: n, need: k + 1 });
    }
    if family.requires_positive() {
        if let Some(&value) = x.iter().find(|&&v| v <= 0.0) {
            return Err(Error::SupportViolation { family, value });
        }
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::DegenerateData("constant series".into()));
    }
    match family {
        Family::Normal => Ok(fit_normal(x)),
        Family::LogNormal => Ok(fit_lognormal(x)),
        Family::Exponential => Ok(fit_exponential(x)),
        Family::Gamma => fit_gamma(x),
        Family::Weibull2p => {
            let (shape, scale, ll) = weibull2p_mle(x)?;
            Ok(DistributionFit::from_loglik(Family::Weibull2p, vec![shape, scale], n, ll))
        }
        Family::Weibull3p => fit_weibull3p(x),
    }
}

fn mle_sd(x: &[f64], m: f64) -> f64 {
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

fn normal_loglik(n: f64, sd: f64) -> f64 {
    -0.5 * n * (2.0 * std::f64::consts::PI * sd * sd).ln() - 0.5 * n
}

fn fit_normal(x: &[f64]) -> DistributionFit {
    let m = mean(x);
    let sd = mle_sd(x, m);
    let ll = normal_loglik(x.len() as f64, sd);
    DistributionFit::from_loglik(Family::Normal, vec![m, sd], x.len(), ll)
}

fn fit_lognormal(x: &[f64]) -> DistributionFit {
    let logs: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let m = mean(&logs);
    let sd = mle_sd(&logs, m);
    let ll = normal_loglik(x.len() as f64, sd) - logs.iter().sum::<f64>();
    DistributionFit::from_loglik(Family::LogNormal, vec![m, sd], x.len(), ll)
}

fn fit_exponential(x: &[f64]) -> DistributionFit {
    let n = x.len() as f64;
    let rate = 1.0 / mean(x);
    let ll = n * rate.ln() - n;
    DistributionFit::from_loglik(Family::Exponential, vec![rate], x.len(), ll)
}

/// Trigamma function via recurrence up to `x >= 12` and the asymptotic
/// series beyond.
pub(crate) fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv + inv2 / 2.0 + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0))))
}

/// Root of a strictly monotone function by Newton steps kept inside a
/// shrinking bracket `[lo, hi]`; bisection replaces any step that leaves it.
/// `f` returns `(value, derivative)`; `increasing` gives its direction.
fn safeguarded_newton(
    family: Family,
    mut lo: f64,
    mut hi: f64,
    mut x: f64,
    increasing: bool,
    f: impl Fn(f64) -> (f64, f64),
) -> Result<f64> {
    for _ in 0..MAX_ITER {
        let (val, der) = f(x);
        if val == 0.0 {
            return Ok(x);
        }
        if (val > 0.0) == increasing {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - val / der;
        let next = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= NEWTON_TOL * x.abs().max(1e-300) || hi - lo <= NEWTON_TOL * hi {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NonConvergence { family, iterations: MAX_ITER })
}

fn fit_gamma(x: &[f64]) -> Result<DistributionFit> {
    let n = x.len() as f64;
    let m = mean(x);
    let mean_log = x.iter().map(|v| v.ln()).sum::<f64>() / n;
    let s = m.ln() - mean_log;
    if s <= 0.0 {
        return Err(Error::DegenerateData("no spread on the log scale".into()));
    }
    // ln k - digamma(k) decreases from +inf to 0; bracket the root.
    let g = |k: f64| (k.ln() - digamma(k) - s, 1.0 / k - trigamma(k));
    let start = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    let (mut lo, mut hi) = (start, start);
    while g(lo).0 < 0.0 {
        lo /= 2.0;
    }
    while g(hi).0 > 0.0 {
        hi *= 2.0;
    }
    let shape = safeguarded_newton(Family::Gamma, lo, hi, start.clamp(lo, hi), false, g)?;
    let scale = m / shape;
    let ll = (shape - 1.0) * n * mean_log - n * m / scale - n * ln_gamma(shape) - n * shape * scale.ln();
    Ok(DistributionFit::from_loglik(Family::Gamma, vec![shape, scale], x.len(), ll))
}

/// Two-parameter Weibull MLE on strictly positive data; returns
/// `(shape, scale, loglik)`.
fn weibull2p_mle(x: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len() as f64;
    let c = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Work on y = x / max(x) in (0, 1] so y^k never overflows.
    let ly: Vec<f64> = x.iter().map(|v| (v / c).ln()).collect();
    let mean_ly = ly.iter().sum::<f64>() / n;
    let profile = |k: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &l in &ly {
            let w = (k * l).exp();
            s0 += w;
            s1 += w * l;
            s2 += w * l * l;
        }
        let val = s1 / s0 - 1.0 / k - mean_ly;
        let der = (s2 * s0 - s1 * s1) / (s0 * s0) + 1.0 / (k * k);
        (val, der)
    };
    let sd_ly = sample_sd(&ly);
    if sd_ly == 0.0 {
        return Err(Error::DegenerateData("constant series".into()));
    }
    let start = 1.2 / sd_ly;
    let (mut lo, mut hi) = (start, start);
    let mut guard = 0;
    while profile(lo).0 > 0.0 {
        lo /= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::NonConvergence { family: Family::Weibull2p, iterations: guard });
        }
    }
    while profile(hi).0 < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 || !hi.is_finite() {
            return Err(Error::NonConvergence { family: Family::Weibull2p, iterations: guard });
        }
    }
    let shape = safeguarded_newton(Family::Weibull2p, lo, hi, start.clamp(lo, hi), true, profile)?;
    let mean_pow = ly.iter().map(|l| (shape * l).exp()).sum::<f64>() / n;
    let scale = c * mean_pow.powf(1.0 / shape);
    // At the MLE sum (x/scale)^k = n. Writing ln(x/scale) through the
    // normalised logs avoids cancelling two terms of order n*k*ln(scale).
    let mean_log_ratio = mean_ly - mean_pow.ln() / shape;
    let ll = n * shape.ln() - n * scale.ln() + (shape - 1.0) * n * mean_log_ratio - n;
    Ok((shape, scale, ll))
}

/// Three-parameter Weibull by profile likelihood over the location, which
/// is parametrised as `min - range * exp(t)` and kept at least
/// `WEIBULL3P_LOCATION_OFFSET * range` below the sample minimum.
///
/// A coarse grid locates the best cell; the optimum is then refined by
/// bisection on the sign of the profile derivative, which is far better
/// conditioned than comparing likelihood values on flat profiles.
fn fit_weibull3p(x: &[f64]) -> Result<DistributionFit> {
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let location = |t: f64| min - range * t.exp();
    let inner = |t: f64| {
        let gamma = location(t);
        let shifted: Vec<f64> = x.iter().map(|v| v - gamma).collect();
        weibull2p_mle(&shifted).map(|r| (r, shifted))
    };
    let profile = |t: f64| inner(t).map(|(r, _)| r.2).unwrap_or(f64::NEG_INFINITY);
    // d loglik / dt at the inner MLE (envelope theorem): only the explicit
    // dependence on the location counts.
    let slope = |t: f64| -> Option<f64> {
        let ((k, lambda, _), z) = inner(t).ok()?;
        let mut inv_sum = 0.0;
        let mut pow_sum = 0.0;
        for &zi in &z {
            inv_sum += 1.0 / zi;
            pow_sum += ((k - 1.0) * (zi / lambda).ln()).exp();
        }
        let d_gamma = -(k - 1.0) * inv_sum + k / lambda * pow_sum;
        Some(d_gamma * -(range * t.exp()))
    };

    let t_lo = WEIBULL3P_LOCATION_OFFSET.ln();
    let t_hi = 1000f64.ln();
    const GRID: usize = 64;
    let step = (t_hi - t_lo) / GRID as f64;
    let grid: Vec<(f64, f64)> = (0..=GRID)
        .map(|i| {
            let t = t_lo + step * i as f64;
            (t, profile(t))
        })
        .collect();
    let (best_i, _) = grid
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &(_, ll))| if ll > acc.1 { (i, ll) } else { acc });
    if !grid[best_i].1.is_finite() {
        return Err(Error::NonConvergence { family: Family::Weibull3p, iterations: GRID });
    }

    let t_best = grid[best_i].0;
    let bracket = match slope(t_best) {
        Some(d) if d > 0.0 && best_i < GRID => Some((t_best, grid[best_i + 1].0)),
        Some(d) if d < 0.0 && best_i > 0 => Some((grid[best_i - 1].0, t_best)),
        _ => None,
    };
    let t_best = match bracket {
        None => t_best,
        Some((mut a, mut b)) => {
            let mut iterations = 0;
            while b - a > 4.0 * f64::EPSILON * b.abs().max(1.0) {
                iterations += 1;
                if iterations > MAX_ITER {
                    return Err(Error::NonConvergence { family: Family::Weibull3p, iterations });
                }
                let m = 0.5 * (a + b);
                match slope(m) {
                    Some(d) if d > 0.0 => a = m,
                    Some(d) if d < 0.0 => b = m,
                    Some(_) => {
                        a = m;
                        b = m;
                    }
                    None => return Err(Error::NonConvergence { family: Family::Weibull3p, iterations }),
                }
            }
            0.5 * (a + b)
        }
    };
    let gamma = location(t_best);
    let shifted: Vec<f64> = x.iter().map(|v| v - gamma).collect();
    let (shape, scale, ll) = weibull2p_mle(&shifted)?;
    Ok(DistributionFit::from_loglik(Family::Weibull3p, vec![shape, scale, gamma], x.len(), ll))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedFamily {
    pub family: Family,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedFits {
    pub criterion: Criterion,
    /// Ascending by criterion, then parameter count, then family order.
    pub fits: Vec<DistributionFit>,
    pub excluded: Vec<ExcludedFamily>,
}

impl RankedFits {
    pub fn best(&self) -> &DistributionFit {
        &self.fits[0]
    }
}

/// Default candidate set for a sample of size `n`: all families, with the
/// three-parameter Weibull only from `WEIBULL3P_MIN_N` observations.
pub fn default_candidates(n: usize) -> Vec<Family> {
    Family::ALL.into_iter().filter(|&f| f != Family::Weibull3p || n >= WEIBULL3P_MIN_N).collect()
}

pub fn select_best_distribution(
    series: &MeasurementSeries,
    candidates: &[Family],
    criterion: Criterion,
) -> Result<RankedFits> {
    rank_values(series.values(), candidates, criterion)
}

pub(crate) fn rank_values(x: &[f64], candidates: &[Family], criterion: Criterion) -> Result<RankedFits> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no candidate families given".into()));
    }
    let mut families = candidates.to_vec();
    families.sort();
    families.dedup();
    let mut fits = Vec::new();
    let mut excluded = Vec::new();
    for family in families {
        match fit_values(x, family) {
            Ok(fit) if fit.criterion(criterion).is_finite() => fits.push(fit),
            Ok(_) => excluded.push(ExcludedFamily { family, reason: "criterion is not finite".into() }),
            Err(e) => excluded.push(ExcludedFamily { family, reason: e.to_string() }),
        }
    }
    if fits.is_empty() {
        return Err(Error::NoFamilyFits);
    }
    sort_fits(&mut fits, criterion);
    Ok(RankedFits { criterion, fits, excluded })
}

fn sort_fits(fits: &mut [DistributionFit], criterion: Criterion) {
    fits.sort_by(|a, b| {
        a.criterion(criterion)
            .total_cmp(&b.criterion(criterion))
            .then(a.family.param_count().cmp(&b.family.param_count()))
            .then(a.family.cmp(&b.family))
    });
}
