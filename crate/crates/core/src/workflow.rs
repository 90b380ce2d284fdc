//! Per-dimension capability workflow, dataset fan-out and batch summaries.
//!
//! Order of stages: tolerance classification, outlier screening, normality
//! test, then either the normal path (dispersion estimates and the C/P
//! families) or the non-normal path (distribution fit, percentile triple,
//! CN family and ppm). Every decision is appended to the report trace.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distfit::{default_candidates, quantile_triple, rank_values, Criterion};
use crate::error::{Error, Result};
use crate::indices::{nonnormal_indices, normal_indices, ppm_nonconforming, ClassifiedSpec, IndexSet};
use crate::ingest::Dataset;
use crate::screening::{
    anderson_darling_normality, detect_outliers, interpolated_quantile, OutlierMethod, DEFAULT_ALPHA,
};
use crate::sigma::{
    estimate, overall_sigma, overall_sigma_of, pooled_sigma_of_groups, select_sigma_method, SigmaChoice, SrmssdUnbias,
    MAX_WINDOW, MIN_WINDOW,
};
use crate::types::{
    classify_tolerance, CapabilityReport, Family, MeasurementSeries, QuantileTriple, SigmaEstimate, SigmaMethod,
    ToleranceKind, ToleranceSpec, TraceEntry, DEFAULT_SYMMETRY_TOL, PATH_NODE,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Full,
    /// Cp, Cpk, Pp and Ppk only.
    Simplified,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierAction {
    /// Report flagged values; analyse the full series.
    #[default]
    Flag,
    /// Drop flagged values before any further stage.
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowConfig {
    pub mode: Mode,
    pub alpha: f64,
    /// `None` skips screening.
    pub outliers: Option<OutlierMethod>,
    pub outlier_action: OutlierAction,
    pub sigma_override: Option<SigmaChoice>,
    pub criterion: Criterion,
    /// `None` uses `default_candidates(n)`.
    pub candidates: Option<Vec<Family>>,
    pub symmetry_tol: f64,
    pub srmssd_unbias: SrmssdUnbias,
    /// Round both dispersion estimates to this many decimals before the
    /// indices are computed.
    pub sigma_decimals: Option<u32>,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        WorkflowConfig {
            mode: Mode::Full,
            alpha: DEFAULT_ALPHA,
            outliers: Some(OutlierMethod::default()),
            outlier_action: OutlierAction::Flag,
            sigma_override: None,
            criterion: Criterion::default(),
            candidates: None,
            symmetry_tol: DEFAULT_SYMMETRY_TOL,
            srmssd_unbias: SrmssdUnbias::C4,
            sigma_decimals: None,
        }
    }
}

impl WorkflowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.symmetry_tol >= 0.0 && self.symmetry_tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("symmetry_tol {} must be >= 0", self.symmetry_tol)));
        }
        match self.outliers {
            Some(OutlierMethod::TukeyFence { k }) if !(k > 0.0 && k.is_finite()) => {
                return Err(Error::InvalidConfig(format!("Tukey fence k {k} must be > 0")))
            }
            Some(OutlierMethod::Grubbs { alpha }) if !(alpha > 0.0 && alpha < 1.0) => {
                return Err(Error::InvalidConfig(format!("Grubbs alpha {alpha} outside (0, 1)")))
            }
            _ => {}
        }
        if let Some(SigmaChoice { method, window }) = self.sigma_override {
            if let Some(w) = window.filter(|_| method.uses_window()) {
                if !(MIN_WINDOW..=MAX_WINDOW).contains(&w) {
                    return Err(Error::WindowOutOfRange(w));
                }
            }
        }
        if matches!(&self.candidates, Some(c) if c.is_empty()) {
            return Err(Error::InvalidConfig("no candidate families given".into()));
        }
        Ok(())
    }
}

/// Values left after screening, with the subgroups they came from.
struct Screened {
    series: MeasurementSeries,
    /// Ragged subgroups when exclusion broke the original layout.
    ragged: Option<Vec<Vec<f64>>>,
}

fn screen(series: &MeasurementSeries, config: &WorkflowConfig, report: &mut CapabilityReport) -> Result<Screened> {
    let Some(method) = config.outliers else {
        report.trace.push(TraceEntry::new("outliers", "screening disabled", "skipped"));
        return Ok(Screened { series: series.clone(), ragged: None });
    };
    let outliers = detect_outliers(series, method)?;
    let flagged = outliers.indices();
    let predicate = format!("{} flagged {}", method.name(), flagged.len());
    report.outliers = Some(outliers);
    if flagged.is_empty() || config.outlier_action == OutlierAction::Flag {
        report.trace.push(TraceEntry::new("outliers", predicate, "flag"));
        return Ok(Screened { series: series.clone(), ragged: None });
    }
    report.trace.push(TraceEntry::new("outliers", predicate, "exclude"));
    let m = series.subgroup_size();
    let keep = |i: &usize| flagged.binary_search(i).is_err();
    let kept: Vec<f64> = (0..series.len()).filter(keep).map(|i| series.values()[i]).collect();
    if m == 1 {
        return Ok(Screened { series: MeasurementSeries::new(kept)?, ragged: None });
    }
    let ragged = (0..series.len() / m)
        .map(|g| (g * m..(g + 1) * m).filter(keep).map(|i| series.values()[i]).collect())
        .collect();
    Ok(Screened { series: MeasurementSeries::new(kept)?, ragged: Some(ragged) })
}

fn within_sigma(
    original: &MeasurementSeries,
    screened: &Screened,
    choice: SigmaChoice,
    unbias: SrmssdUnbias,
) -> Result<SigmaEstimate> {
    match &screened.ragged {
        None if original.subgroup_size() > 1 && screened.series.len() == original.len() => {
            estimate(original, choice.method, choice.window, unbias)
        }
        None => estimate(&screened.series, choice.method, choice.window, unbias),
        Some(groups) if choice.method == SigmaMethod::Pooled => {
            let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
            pooled_sigma_of_groups(&refs)
        }
        Some(_) => Err(Error::NotApplicable(
            "within sigma",
            format!("{:?} needs equal subgroups, which outlier exclusion removed", choice.method),
        )),
    }
}

/// Runs the workflow on one dimension. Stage failures are recorded in the
/// report (`error` plus a terminal trace entry) rather than returned.
pub fn analyze_dimension(
    id: &str,
    spec: &ToleranceSpec,
    series: &MeasurementSeries,
    config: &WorkflowConfig,
) -> CapabilityReport {
    let tolerance = classify_tolerance(spec, config.symmetry_tol);
    let mut report = CapabilityReport {
        dimension_id: id.to_string(),
        spec: *spec,
        tolerance,
        n: series.len(),
        mean: None,
        sigma_overall: None,
        sigma_within: None,
        outliers: None,
        normality: None,
        best_fit: None,
        quantiles: None,
        ppm_nonconforming: None,
        indices: Vec::new(),
        trace: vec![TraceEntry::new(
            "tolerance",
            format!("target present: {}", tolerance.has_target),
            format!("{:?}", tolerance.kind),
        )],
        error: None,
    };
    if let Err(e) = run(series, config, &mut report) {
        report.trace.push(TraceEntry::new("error", "stage failed", e.to_string()));
        report.error = Some(e.to_string());
    }
    report
}

fn run(series: &MeasurementSeries, config: &WorkflowConfig, report: &mut CapabilityReport) -> Result<()> {
    config.validate()?;
    let screened = screen(series, config, report)?;
    let x = &screened.series;
    report.n = x.len();
    let mu = x.mean();
    report.mean = Some(mu);

    let normality = anderson_darling_normality(x, config.alpha)?;
    report.normality = Some(normality);
    report.trace.push(TraceEntry::new(
        "normality",
        format!(
            "p-value {:.4} {} alpha {}",
            normality.p_value,
            if normality.passed { ">" } else { "<=" },
            config.alpha
        ),
        if normality.passed { "pass" } else { "fail" },
    ));
    let cs = ClassifiedSpec { spec: report.spec, class: report.tolerance };
    if normality.passed {
        normal_path(series, &screened, cs, mu, config, report)
    } else {
        nonnormal_path(x, cs, config, report)
    }
}

fn normal_path(
    original: &MeasurementSeries,
    screened: &Screened,
    cs: ClassifiedSpec,
    mu: f64,
    config: &WorkflowConfig,
    report: &mut CapabilityReport,
) -> Result<()> {
    let choice = select_sigma_method(original.subgroup_size(), screened.series.len(), config.sigma_override);
    let mut overall = overall_sigma(&screened.series)?;
    let mut within = within_sigma(original, screened, choice, config.srmssd_unbias)?;
    if let Some(d) = config.sigma_decimals {
        overall = overall.rounded(d);
        within = within.rounded(d);
    }
    report.trace.push(TraceEntry::new(
        "sigma_within",
        format!(
            "subgroup size {}, override {}",
            original.subgroup_size(),
            if config.sigma_override.is_some() { "given" } else { "none" }
        ),
        match choice.window {
            Some(w) => format!("{:?} w={w}", choice.method),
            None => format!("{:?}", choice.method),
        },
    ));
    report.sigma_overall = Some(overall);
    report.sigma_within = Some(within);

    let set = match config.mode {
        Mode::Full => IndexSet::Full,
        Mode::Simplified => IndexSet::Simplified,
    };
    report.trace.push(TraceEntry::new("index_set", "mode", format!("{:?}", config.mode).to_lowercase()));
    if set == IndexSet::Simplified && cs.class.kind == ToleranceKind::BilateralAsymmetric {
        report.trace.push(TraceEntry::new("warning", "asymmetric tolerance in simplified mode", "symmetric formulas"));
    }
    report.indices = normal_indices(cs, mu, within.value, set, false);
    report.indices.extend(normal_indices(cs, mu, overall.value, set, true));
    report.trace.push(TraceEntry::new(PATH_NODE, "normality passed", "normal"));
    Ok(())
}

fn empirical_triple(values: &[f64]) -> QuantileTriple {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    QuantileTriple {
        p00135: interpolated_quantile(&s, 0.00135),
        p50: interpolated_quantile(&s, 0.5),
        p99865: interpolated_quantile(&s, 0.99865),
    }
}

fn nonnormal_path(
    x: &MeasurementSeries,
    cs: ClassifiedSpec,
    config: &WorkflowConfig,
    report: &mut CapabilityReport,
) -> Result<()> {
    let candidates = config.candidates.clone().unwrap_or_else(|| default_candidates(x.len()));
    let q = match rank_values(x.values(), &candidates, config.criterion) {
        Ok(ranked) => {
            let best = ranked.best().clone();
            report.trace.push(TraceEntry::new(
                "fit",
                format!("lowest {:?} of {} candidates", config.criterion, ranked.fits.len()),
                format!("{:?}", best.family),
            ));
            let q = quantile_triple(&best);
            report.ppm_nonconforming = Some(ppm_nonconforming(&best, &cs.spec));
            report.best_fit = Some(best);
            q
        }
        Err(e) => {
            report.trace.push(TraceEntry::new(
                "warning",
                format!("no distribution fitted: {e}"),
                "empirical quantiles",
            ));
            empirical_triple(x.values())
        }
    };
    report.quantiles = Some(q);
    report.indices = nonnormal_indices(cs, &q);
    report.trace.push(TraceEntry::new(PATH_NODE, "normality failed", "nonnormal"));
    Ok(())
}

/// Analyses every dimension in parallel; reports keep dataset order.
pub fn analyze_dataset(dataset: &Dataset, config: &WorkflowConfig) -> Vec<CapabilityReport> {
    dataset.dimensions.par_iter().map(|d| analyze_dimension(&d.id, &d.spec, &d.series, config)).collect()
}

/// Default bin edges in percent, the last bin unbounded.
pub const DEFAULT_BIN_EDGES: [f64; 9] = [0.0, 5.0, 7.5, 10.0, 15.0, 20.0, 35.0, 50.0, f64::INFINITY];

/// How input values relate to the percent bin edges.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueScale {
    /// Values are fractions (0.05 falls on the 5% edge).
    #[default]
    Fraction,
    Percent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bin {
    /// Half-open `[lo, hi)` in percent.
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub total: usize,
    pub pct: f64,
    pub pct_cum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioStats {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub bins: Vec<Bin>,
    /// Extremes of the input values, unscaled.
    pub ratio_stats: RatioStats,
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Counts values into half-open percent bins with percentages and
/// cumulative percentages to two decimals.
pub fn batch_summary(values: &[f64], bin_edges: &[f64], scale: ValueScale) -> Result<BatchSummary> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if bin_edges.len() < 2 {
        return Err(Error::InvalidBinEdges("need at least two edges".into()));
    }
    if bin_edges.iter().any(|e| e.is_nan()) || bin_edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidBinEdges("edges must be strictly increasing".into()));
    }
    let factor = match scale {
        ValueScale::Fraction => 100.0,
        ValueScale::Percent => 1.0,
    };
    let mut counts = vec![0usize; bin_edges.len() - 1];
    for &v in values {
        let p = v * factor;
        let bin = bin_edges.windows(2).position(|w| p >= w[0] && p < w[1]).ok_or(Error::ValueOutOfBins(v))?;
        counts[bin] += 1;
    }
    let total = values.len();
    let mut cum = 0;
    let bins = counts
        .iter()
        .enumerate()
        .map(|(i, &count)| {
            cum += count;
            Bin {
                lo: bin_edges[i],
                hi: bin_edges[i + 1],
                count,
                total,
                pct: round2(100.0 * count as f64 / total as f64),
                pct_cum: round2(100.0 * cum as f64 / total as f64),
            }
        })
        .collect();
    let ratio_stats = RatioStats {
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(BatchSummary { bins, ratio_stats })
}

/// `|mean(sigma_w, w = 2..=10) - sigma_overall| / sigma_overall` for the
/// AMR or MMR family.
pub fn sigma_relative_error(series: &MeasurementSeries, family: SigmaMethod) -> Result<f64> {
    if !family.uses_window() {
        return Err(Error::NotApplicable("sigma relative error", format!("{family:?} has no window family")));
    }
    if series.len() < MAX_WINDOW {
        return Err(Error::TooFewSamples { got: series.len(), need: MAX_WINDOW });
    }
    let overall = overall_sigma(series)?.value;
    let mut sum = 0.0;
    for w in MIN_WINDOW..=MAX_WINDOW {
        sum += estimate(series, family, Some(w), SrmssdUnbias::C4)?.value;
    }
    let avg = sum / (MAX_WINDOW - MIN_WINDOW + 1) as f64;
    Ok((avg - overall).abs() / overall)
}

/// Column labels of `sigma_matrix_row`: overall, A2..A10, M2..M10.
pub fn sigma_matrix_columns() -> Vec<String> {
    let mut cols = vec!["overall".to_string()];
    cols.extend((MIN_WINDOW..=MAX_WINDOW).map(|w| format!("A{w}")));
    cols.extend((MIN_WINDOW..=MAX_WINDOW).map(|w| format!("M{w}")));
    cols
}

/// Overall sigma followed by every AMR and MMR window estimate.
pub fn sigma_matrix_row(series: &MeasurementSeries) -> Result<Vec<SigmaEstimate>> {
    let mut row = vec![overall_sigma_of(series.values())?];
    for method in [SigmaMethod::Amr, SigmaMethod::Mmr] {
        for w in MIN_WINDOW..=MAX_WINDOW {
            row.push(estimate(series, method, Some(w), SrmssdUnbias::C4)?);
        }
    }
    Ok(row)
}
