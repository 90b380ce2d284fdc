//! Seeded simulation checks of the within estimators.
//!
//! Each estimator is applied to many in-control normal series with known
//! sigma; its average must land within a relative tolerance of the truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sigma::{estimate, SrmssdUnbias, MAX_WINDOW, MIN_WINDOW};
use crate::types::{MeasurementSeries, SigmaMethod};

pub const SEED_ENV: &str = "PCAP_SEED";
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_REPLICATIONS: usize = 50_000;
pub const DEFAULT_TOLERANCE: f64 = 0.02;

const TRUE_MEAN: f64 = 50.0;
const TRUE_SIGMA: f64 = 2.0;
const INDIVIDUALS: usize = 32;
const SUBGROUP_SIZE: usize = 5;
const SUBGROUPS: usize = 8;
/// Replications per independently seeded stream.
const CHUNK: usize = 1000;

/// Seed from `PCAP_SEED`, or `DEFAULT_SEED` when unset.
pub fn seed_from_env() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Err(_) => Ok(DEFAULT_SEED),
        Ok(s) => {
            s.trim().parse().map_err(|_| Error::InvalidConfig(format!("{SEED_ENV}={s:?} is not an unsigned integer")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnbiasednessCheck {
    pub method: SigmaMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    pub mean_estimate: f64,
    pub truth: f64,
    pub relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub replications: usize,
    pub tolerance: f64,
    pub checks: Vec<UnbiasednessCheck>,
    pub passed: bool,
}

fn estimators() -> Vec<(SigmaMethod, Option<usize>)> {
    let mut e = vec![(SigmaMethod::Overall, None)];
    for m in [SigmaMethod::Amr, SigmaMethod::Mmr] {
        e.extend((MIN_WINDOW..=MAX_WINDOW).map(|w| (m, Some(w))));
    }
    e.extend([
        (SigmaMethod::Srmssd, None),
        (SigmaMethod::Rbar, None),
        (SigmaMethod::Sbar, None),
        (SigmaMethod::Pooled, None),
    ]);
    e
}

/// Averages every estimator over `replications` simulated series.
/// Individuals estimators see 32 observations, subgroup estimators
/// 8 subgroups of 5.
pub fn unbiasedness(seed: u64, replications: usize, tolerance: f64) -> Result<SelftestReport> {
    if replications == 0 {
        return Err(Error::InvalidConfig("replications must be >= 1".into()));
    }
    let est = estimators();
    let chunks = replications.div_ceil(CHUNK);
    let partial = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let reps = CHUNK.min(replications - c * CHUNK);
            let mut sums = vec![0.0; est.len()];
            for _ in 0..reps {
                simulate_once(&mut rng, &est, &mut sums)?;
            }
            Ok(sums)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let mut sums = vec![0.0; est.len()];
    for chunk in &partial {
        for (s, v) in sums.iter_mut().zip(chunk) {
            *s += v;
        }
    }
    let checks: Vec<UnbiasednessCheck> = est
        .iter()
        .zip(sums)
        .map(|(&(method, window), sum)| {
            let mean_estimate = sum / replications as f64;
            let relative_error = (mean_estimate - TRUE_SIGMA).abs() / TRUE_SIGMA;
            UnbiasednessCheck {
                method,
                window,
                mean_estimate,
                truth: TRUE_SIGMA,
                relative_error,
                passed: relative_error <= tolerance,
            }
        })
        .collect();
    let passed = checks.iter().all(|c| c.passed);
    Ok(SelftestReport { seed, replications, tolerance, checks, passed })
}

fn simulate_once(rng: &mut ChaCha8Rng, est: &[(SigmaMethod, Option<usize>)], sums: &mut [f64]) -> Result<()> {
    let dist = Normal::new(TRUE_MEAN, TRUE_SIGMA).expect("valid normal");
    let individuals = MeasurementSeries::new(dist.sample_iter(&mut *rng).take(INDIVIDUALS).collect())?;
    let grouped = MeasurementSeries::with_subgroups(
        dist.sample_iter(&mut *rng).take(SUBGROUP_SIZE * SUBGROUPS).collect(),
        SUBGROUP_SIZE,
    )?;
    for (sum, &(method, window)) in sums.iter_mut().zip(est) {
        let series = match method {
            SigmaMethod::Rbar | SigmaMethod::Sbar | SigmaMethod::Pooled => &grouped,
            _ => &individuals,
        };
        *sum += estimate(series, method, window, SrmssdUnbias::C4)?.value;
    }
    Ok(())
}

pub fn run_selftest(seed: u64) -> Result<SelftestReport> {
    unbiasedness(seed, DEFAULT_REPLICATIONS, DEFAULT_TOLERANCE)
}
