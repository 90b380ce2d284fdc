//! Shared domain vocabulary: tolerances, measurement series, dispersion
//! estimates, distribution fits and per-dimension reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indices::IndexValue;
use crate::screening::{NormalityResult, OutlierReport};

/// Relative tolerance used to decide whether a target coincides with the
/// midpoint of the specification range.
pub const DEFAULT_SYMMETRY_TOL: f64 = 1e-9;

/// Specification limits and optional target (nominal) value.
///
/// Target and nominal are treated as the same quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct ToleranceSpec {
    lsl: Option<f64>,
    usl: Option<f64>,
    target: Option<f64>,
}

#[derive(Deserialize)]
struct RawSpec {
    lsl: Option<f64>,
    usl: Option<f64>,
    target: Option<f64>,
}

impl TryFrom<RawSpec> for ToleranceSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        ToleranceSpec::new(raw.lsl, raw.usl, raw.target)
    }
}

impl ToleranceSpec {
    pub fn new(lsl: Option<f64>, usl: Option<f64>, target: Option<f64>) -> Result<Self> {
        for (name, v) in [("lsl", lsl), ("usl", usl), ("target", target)] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(Error::InvalidSpec(format!("{name} is not finite")));
                }
            }
        }
        match (lsl, usl) {
            (None, None) => return Err(Error::InvalidSpec("at least one of lsl/usl is required".into())),
            (Some(l), Some(u)) => {
                if l >= u {
                    return Err(Error::InvalidSpec(format!("lsl {l} must be below usl {u}")));
                }
                if let Some(t) = target {
                    if t < l || t > u {
                        return Err(Error::InvalidSpec(format!("target {t} outside [{l}, {u}]")));
                    }
                }
            }
            _ => {}
        }
        Ok(ToleranceSpec { lsl, usl, target })
    }

    pub fn bilateral(lsl: f64, usl: f64, target: Option<f64>) -> Result<Self> {
        Self::new(Some(lsl), Some(usl), target)
    }

    pub fn upper(usl: f64, target: Option<f64>) -> Result<Self> {
        Self::new(None, Some(usl), target)
    }

    pub fn lower(lsl: f64, target: Option<f64>) -> Result<Self> {
        Self::new(Some(lsl), None, target)
    }

    /// Builds a spec from a nominal value and its two tolerance legs
    /// (`lsl = T - tol_minus`, `usl = T + tol_plus`). A zero leg drops the
    /// corresponding limit, producing a unilateral spec.
    ///
    /// The sign of `tol_minus` is ignored so that both `0.1` and `-0.1` are
    /// accepted for the lower leg.
    pub fn from_nominal(target: f64, tol_plus: f64, tol_minus: f64) -> Result<Self> {
        if tol_plus < 0.0 {
            return Err(Error::InvalidSpec(format!("Tol+ must be >= 0, got {tol_plus}")));
        }
        let minus = tol_minus.abs();
        let usl = (tol_plus != 0.0).then_some(target + tol_plus);
        let lsl = (minus != 0.0).then_some(target - minus);
        Self::new(lsl, usl, Some(target))
    }

    pub fn lsl(&self) -> Option<f64> {
        self.lsl
    }

    pub fn usl(&self) -> Option<f64> {
        self.usl
    }

    pub fn target(&self) -> Option<f64> {
        self.target
    }

    /// `(USL + LSL) / 2`, only for bilateral specs.
    pub fn midpoint(&self) -> Option<f64> {
        Some((self.lsl? + self.usl?) / 2.0)
    }

    pub fn is_bilateral(&self) -> bool {
        self.lsl.is_some() && self.usl.is_some()
    }

    /// Applies `x -> a*x + b` (a > 0) to every limit and the target.
    pub fn affine(&self, a: f64, b: f64) -> Result<Self> {
        if a <= 0.0 {
            return Err(Error::InvalidSpec("affine scale must be positive".into()));
        }
        let map = |v: Option<f64>| v.map(|x| a * x + b);
        Self::new(map(self.lsl), map(self.usl), map(self.target))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ToleranceKind {
    BilateralSymmetric,
    BilateralAsymmetric,
    UnilateralUpper,
    UnilateralLower,
}

impl ToleranceKind {
    pub fn is_bilateral(self) -> bool {
        matches!(self, ToleranceKind::BilateralSymmetric | ToleranceKind::BilateralAsymmetric)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToleranceClass {
    pub kind: ToleranceKind,
    pub has_target: bool,
}

/// Classifies a spec as bilateral symmetric/asymmetric or unilateral.
///
/// A bilateral spec is symmetric when it has no target or when
/// `|T - M| <= symmetry_tol * (USL - LSL)`.
pub fn classify_tolerance(spec: &ToleranceSpec, symmetry_tol: f64) -> ToleranceClass {
    let has_target = spec.target.is_some();
    let kind = match (spec.lsl, spec.usl) {
        (Some(l), Some(u)) => match spec.target {
            Some(t) if (t - (l + u) / 2.0).abs() > symmetry_tol * (u - l) => ToleranceKind::BilateralAsymmetric,
            _ => ToleranceKind::BilateralSymmetric,
        },
        (None, Some(_)) => ToleranceKind::UnilateralUpper,
        (Some(_), None) => ToleranceKind::UnilateralLower,
        (None, None) => unreachable!("ToleranceSpec always carries a limit"),
    };
    ToleranceClass { kind, has_target }
}

/// Temporally ordered observations with a fixed subgroup layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries")]
pub struct MeasurementSeries {
    values: Vec<f64>,
    subgroup_size: usize,
}

#[derive(Deserialize)]
struct RawSeries {
    values: Vec<f64>,
    subgroup_size: usize,
}

impl TryFrom<RawSeries> for MeasurementSeries {
    type Error = Error;

    fn try_from(raw: RawSeries) -> Result<Self> {
        MeasurementSeries::with_subgroups(raw.values, raw.subgroup_size)
    }
}

impl MeasurementSeries {
    /// Individual observations (subgroup size 1).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_subgroups(values, 1)
    }

    pub fn with_subgroups(values: Vec<f64>, subgroup_size: usize) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooFewSamples { got: values.len(), need: 2 });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("value at index {pos} is not finite")));
        }
        if subgroup_size == 0 {
            return Err(Error::InvalidSeries("subgroup size must be >= 1".into()));
        }
        if !values.len().is_multiple_of(subgroup_size) {
            return Err(Error::InvalidSeries(format!(
                "{} values do not form whole subgroups of {}",
                values.len(),
                subgroup_size
            )));
        }
        Ok(MeasurementSeries { values, subgroup_size })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn subgroup_size(&self) -> usize {
        self.subgroup_size
    }

    /// Consecutive subgroups in collection order.
    pub fn subgroups(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.subgroup_size)
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|&v| v == self.values[0])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::with_subgroups(self.values.iter().map(|&v| f(v)).collect(), self.subgroup_size)
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SigmaMethod {
    Overall,
    #[serde(rename = "AMR")]
    Amr,
    #[serde(rename = "MMR")]
    Mmr,
    #[serde(rename = "SRMSSD")]
    Srmssd,
    Rbar,
    Sbar,
    Pooled,
}

impl SigmaMethod {
    pub fn uses_window(self) -> bool {
        matches!(self, SigmaMethod::Amr | SigmaMethod::Mmr)
    }
}

/// A standard deviation tagged with how it was estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub method: SigmaMethod,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub window: Option<usize>,
    pub value: f64,
}

impl SigmaEstimate {
    pub(crate) fn new(method: SigmaMethod, window: Option<usize>, value: f64) -> Self {
        debug_assert_eq!(window.is_some(), method.uses_window());
        debug_assert!(value >= 0.0);
        SigmaEstimate { method, window, value }
    }

    /// Same estimate rounded to `decimals` places.
    pub fn rounded(self, decimals: u32) -> Self {
        let scale = 10f64.powi(decimals as i32);
        SigmaEstimate { value: (self.value * scale).round() / scale, ..self }
    }
}

/// Candidate distribution families, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Normal,
    LogNormal,
    Exponential,
    Gamma,
    Weibull2p,
    Weibull3p,
}

impl Family {
    pub const ALL: [Family; 6] =
        [Family::Normal, Family::LogNormal, Family::Exponential, Family::Gamma, Family::Weibull2p, Family::Weibull3p];

    /// Number of free parameters.
    pub fn param_count(self) -> usize {
        match self {
            Family::Exponential => 1,
            Family::Normal | Family::LogNormal | Family::Gamma | Family::Weibull2p => 2,
            Family::Weibull3p => 3,
        }
    }

    pub fn requires_positive(self) -> bool {
        matches!(self, Family::LogNormal | Family::Exponential | Family::Gamma | Family::Weibull2p)
    }
}

/// A fitted distribution with its maximised log-likelihood and
/// information criteria.
///
/// Parameter layout per family:
/// Normal `[mean, sd]`, LogNormal `[meanlog, sdlog]`, Exponential `[rate]`,
/// Gamma `[shape, scale]`, Weibull2p `[shape, scale]`,
/// Weibull3p `[shape, scale, location]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionFit {
    pub family: Family,
    pub params: Vec<f64>,
    pub n: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub aicc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileTriple {
    pub p00135: f64,
    pub p50: f64,
    pub p99865: f64,
}

impl QuantileTriple {
    pub fn is_strict(&self) -> bool {
        self.p00135 < self.p50 && self.p50 < self.p99865
    }

    pub fn span(&self) -> f64 {
        self.p99865 - self.p00135
    }
}

/// Trace node recording which index path a report took.
pub const PATH_NODE: &str = "path";

/// One decision taken while walking the capability workflow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub node: String,
    pub predicate: String,
    pub branch: String,
}

impl TraceEntry {
    pub fn new(node: &str, predicate: impl Into<String>, branch: impl Into<String>) -> Self {
        TraceEntry { node: node.to_string(), predicate: predicate.into(), branch: branch.into() }
    }
}

/// Everything computed for one dimension.
///
/// Fields that depend on a workflow stage are `None` when that stage was
/// not reached (terminal error) or does not apply to the path taken.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapabilityReport {
    pub dimension_id: String,
    pub spec: ToleranceSpec,
    pub tolerance: ToleranceClass,
    pub n: usize,
    pub mean: Option<f64>,
    pub sigma_overall: Option<SigmaEstimate>,
    pub sigma_within: Option<SigmaEstimate>,
    pub outliers: Option<OutlierReport>,
    pub normality: Option<NormalityResult>,
    pub best_fit: Option<DistributionFit>,
    pub quantiles: Option<QuantileTriple>,
    pub ppm_nonconforming: Option<f64>,
    #[serde(serialize_with = "crate::indices::serialize_index_map")]
    pub indices: Vec<IndexValue>,
    pub trace: Vec<TraceEntry>,
    pub error: Option<String>,
}

impl CapabilityReport {
    pub fn index(&self, name: &str) -> Option<&IndexValue> {
        self.indices.iter().find(|iv| iv.name == name)
    }

    /// Value of a defined index, `None` if absent or undefined.
    pub fn index_value(&self, name: &str) -> Option<f64> {
        self.index(name).and_then(|iv| iv.value)
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }

    /// Branch of the terminal `path` trace entry (`normal` or `nonnormal`).
    pub fn path(&self) -> Option<&str> {
        self.trace.iter().find(|e| e.node == PATH_NODE).map(|e| e.branch.as_str())
    }
}
