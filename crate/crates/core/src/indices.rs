//! Capability and performance indices for normal data (from a location and
//! a dispersion) and for non-normal data (from a fitted quantile triple).
//!
//! Every operation returns an [`IndexValue`]; cases where an index is not
//! defined for the tolerance layout come back with a [`Reason`] instead of
//! an error.

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use crate::types::{
    classify_tolerance, DistributionFit, QuantileTriple, ToleranceClass, ToleranceKind, ToleranceSpec,
    DEFAULT_SYMMETRY_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    /// Potential (spread-only) indices need both limits.
    UnilateralCpUndefined,
    NoTarget,
    ZeroSigma,
    DegenerateQuantiles,
    /// Accompanies a value of exactly 0 from the starred zero branch.
    ZeroBeyondHalfTolerance,
    /// One-sided index on the side where the spec has no limit.
    MissingLimit,
}

impl Reason {
    pub fn code(self) -> &'static str {
        match self {
            Reason::UnilateralCpUndefined => "UNILATERAL_CP_UNDEFINED",
            Reason::NoTarget => "NO_TARGET",
            Reason::ZeroSigma => "ZERO_SIGMA",
            Reason::DegenerateQuantiles => "DEGENERATE_QUANTILES",
            Reason::ZeroBeyondHalfTolerance => "ZERO_BEYOND_HALF_TOLERANCE",
            Reason::MissingLimit => "MISSING_LIMIT",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexValue {
    pub name: String,
    pub value: Option<f64>,
    pub reason: Option<Reason>,
}

impl IndexValue {
    pub fn defined(name: &str, value: f64) -> Self {
        IndexValue { name: name.to_string(), value: Some(value), reason: None }
    }

    pub fn undefined(name: &str, reason: Reason) -> Self {
        IndexValue { name: name.to_string(), value: None, reason: Some(reason) }
    }

    fn zero_branch(name: &str) -> Self {
        IndexValue { name: name.to_string(), value: Some(0.0), reason: Some(Reason::ZeroBeyondHalfTolerance) }
    }

    pub fn is_defined(&self) -> bool {
        self.value.is_some()
    }

    pub fn renamed(self, name: &str) -> Self {
        IndexValue { name: name.to_string(), ..self }
    }

    /// The same value under its long-term name (`Cpk` becomes `Ppk`).
    pub fn long_term(self) -> Self {
        let name = match self.name.strip_prefix('C') {
            Some(rest) => format!("P{rest}"),
            None => self.name.clone(),
        };
        IndexValue { name, ..self }
    }
}

impl Serialize for IndexValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("IndexValue", 2)?;
        st.serialize_field("value", &self.value)?;
        st.serialize_field("reason", &self.reason)?;
        st.end()
    }
}

/// Serialises an ordered list of indices as a JSON object keyed by name.
pub fn serialize_index_map<S: Serializer>(indices: &[IndexValue], s: S) -> Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(indices.len()))?;
    for iv in indices {
        map.serialize_entry(&iv.name, iv)?;
    }
    map.end()
}

/// A spec together with its classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifiedSpec {
    pub spec: ToleranceSpec,
    pub class: ToleranceClass,
}

impl ClassifiedSpec {
    pub fn new(spec: ToleranceSpec, symmetry_tol: f64) -> Self {
        ClassifiedSpec { spec, class: classify_tolerance(&spec, symmetry_tol) }
    }

    fn kind(&self) -> ToleranceKind {
        self.class.kind
    }

    /// Whether the target-aware (starred) formulas should be used.
    fn starred(&self, respect_target: bool) -> bool {
        respect_target && self.kind() == ToleranceKind::BilateralAsymmetric
    }
}

impl From<ToleranceSpec> for ClassifiedSpec {
    fn from(spec: ToleranceSpec) -> Self {
        ClassifiedSpec::new(spec, DEFAULT_SYMMETRY_TOL)
    }
}

impl From<&ToleranceSpec> for ClassifiedSpec {
    fn from(spec: &ToleranceSpec) -> Self {
        ClassifiedSpec::from(*spec)
    }
}

fn bad_sigma(sigma: f64) -> bool {
    !(sigma > 0.0 && sigma.is_finite())
}

fn limits(spec: &ToleranceSpec) -> (f64, f64) {
    (spec.lsl().expect("bilateral spec"), spec.usl().expect("bilateral spec"))
}

/// Cp (both limits, spread only). With `respect_target` on an asymmetric
/// spec this is Cp*.
pub fn potential_index(spec: impl Into<ClassifiedSpec>, sigma: f64, respect_target: bool) -> IndexValue {
    let cs = spec.into();
    if cs.starred(respect_target) {
        return cp_star(cs, sigma);
    }
    if !cs.kind().is_bilateral() {
        return IndexValue::undefined("Cp", Reason::UnilateralCpUndefined);
    }
    if bad_sigma(sigma) {
        return IndexValue::undefined("Cp", Reason::ZeroSigma);
    }
    let (l, u) = limits(&cs.spec);
    IndexValue::defined("Cp", (u - l) / (6.0 * sigma))
}

/// Cpk, or `Cpu`/`Cpl` for one-sided specs. With `respect_target` on an
/// asymmetric spec this is Cpk* including its zero branches.
pub fn centering_index(spec: impl Into<ClassifiedSpec>, mu: f64, sigma: f64, respect_target: bool) -> IndexValue {
    let cs = spec.into();
    if cs.starred(respect_target) {
        return cpk_star(cs, mu, sigma);
    }
    let name = "Cpk";
    if bad_sigma(sigma) {
        return IndexValue::undefined(name, Reason::ZeroSigma);
    }
    let s = &cs.spec;
    let upper = s.usl().map(|u| (u - mu) / (3.0 * sigma));
    let lower = s.lsl().map(|l| (mu - l) / (3.0 * sigma));
    let v = match (lower, upper) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => unreachable!(),
    };
    IndexValue::defined(name, v)
}

/// `(Cpl, Cpu)`; the side without a limit is undefined.
pub fn one_sided(spec: impl Into<ClassifiedSpec>, mu: f64, sigma: f64) -> (IndexValue, IndexValue) {
    let cs = spec.into();
    if bad_sigma(sigma) {
        return (IndexValue::undefined("Cpl", Reason::ZeroSigma), IndexValue::undefined("Cpu", Reason::ZeroSigma));
    }
    let cpl = match cs.spec.lsl() {
        Some(l) => IndexValue::defined("Cpl", (mu - l) / (3.0 * sigma)),
        None => IndexValue::undefined("Cpl", Reason::MissingLimit),
    };
    let cpu = match cs.spec.usl() {
        Some(u) => IndexValue::defined("Cpu", (u - mu) / (3.0 * sigma)),
        None => IndexValue::undefined("Cpu", Reason::MissingLimit),
    };
    (cpl, cpu)
}

fn taguchi_denominator(mu: f64, sigma: f64, t: f64) -> f64 {
    3.0 * (sigma * sigma + (mu - t) * (mu - t)).sqrt()
}

/// Cpm. With `respect_target` on an asymmetric spec this is Cpm*.
pub fn taguchi_index(spec: impl Into<ClassifiedSpec>, mu: f64, sigma: f64, respect_target: bool) -> IndexValue {
    let cs = spec.into();
    if cs.starred(respect_target) {
        return cpm_star(cs, mu, sigma);
    }
    let name = "Cpm";
    let Some(t) = cs.spec.target() else {
        return IndexValue::undefined(name, Reason::NoTarget);
    };
    if bad_sigma(sigma) {
        return IndexValue::undefined(name, Reason::ZeroSigma);
    }
    let d = taguchi_denominator(mu, sigma, t);
    let num = match (cs.spec.lsl(), cs.spec.usl()) {
        (Some(l), Some(u)) => (u - l) / 2.0,
        (None, Some(u)) => u - t,
        (Some(l), None) => t - l,
        (None, None) => unreachable!(),
    };
    IndexValue::defined(name, num / d)
}

/// Cpmk, with numerator `min(USL - mu, mu - LSL)` on bilateral specs. With
/// `respect_target` on an asymmetric spec this is Cpmk*.
pub fn taguchi_centering_index(
    spec: impl Into<ClassifiedSpec>,
    mu: f64,
    sigma: f64,
    respect_target: bool,
) -> IndexValue {
    let cs = spec.into();
    if cs.starred(respect_target) {
        return cpmk_star(cs, mu, sigma);
    }
    let name = "Cpmk";
    let Some(t) = cs.spec.target() else {
        return IndexValue::undefined(name, Reason::NoTarget);
    };
    if bad_sigma(sigma) {
        return IndexValue::undefined(name, Reason::ZeroSigma);
    }
    let d = taguchi_denominator(mu, sigma, t);
    let num = match (cs.spec.lsl(), cs.spec.usl()) {
        (Some(l), Some(u)) => (u - mu).min(mu - l),
        (None, Some(u)) => u - mu,
        (Some(l), None) => mu - l,
        (None, None) => unreachable!(),
    };
    IndexValue::defined(name, num / d)
}

/// Checks shared by the starred indices: both limits, a target and a
/// usable sigma. Returns `(lsl, usl, target)`.
fn starred_inputs(name: &str, cs: &ClassifiedSpec, sigma: f64) -> Result<(f64, f64, f64), IndexValue> {
    if !cs.kind().is_bilateral() {
        return Err(IndexValue::undefined(name, Reason::UnilateralCpUndefined));
    }
    let Some(t) = cs.spec.target() else {
        return Err(IndexValue::undefined(name, Reason::NoTarget));
    };
    if bad_sigma(sigma) {
        return Err(IndexValue::undefined(name, Reason::ZeroSigma));
    }
    let (l, u) = limits(&cs.spec);
    Ok((l, u, t))
}

/// Cp*: the tighter of the two legs around the target.
pub fn cp_star(spec: impl Into<ClassifiedSpec>, sigma: f64) -> IndexValue {
    let cs = spec.into();
    match starred_inputs("Cp*", &cs, sigma) {
        Ok((l, u, t)) => IndexValue::defined("Cp*", ((u - t) / (3.0 * sigma)).min((t - l) / (3.0 * sigma))),
        Err(iv) => iv,
    }
}

/// `(Cpl*, Cpu*)` and whether either zero branch fired.
fn starred_legs(l: f64, u: f64, t: f64, mu: f64, sigma: f64) -> (f64, f64, bool) {
    let dev = (t - mu).abs();
    let lower_leg = t - l;
    let upper_leg = u - t;
    let (cpl, zl) =
        if dev > lower_leg { (0.0, true) } else { (lower_leg / (3.0 * sigma) * (1.0 - dev / lower_leg), false) };
    let (cpu, zu) =
        if dev > upper_leg { (0.0, true) } else { (upper_leg / (3.0 * sigma) * (1.0 - dev / upper_leg), false) };
    (cpl, cpu, zl || zu)
}

/// Cpk* = min(Cpl*, Cpu*), each leg floored at zero once the mean is
/// further from the target than that leg's length.
pub fn cpk_star(spec: impl Into<ClassifiedSpec>, mu: f64, sigma: f64) -> IndexValue {
    let cs = spec.into();
    match starred_inputs("Cpk*", &cs, sigma) {
        Ok((l, u, t)) => {
            let (cpl, cpu, zero) = starred_legs(l, u, t, mu, sigma);
            if zero {
                IndexValue::zero_branch("Cpk*")
            } else {
                IndexValue::defined("Cpk*", cpl.min(cpu))
            }
        }
        Err(iv) => iv,
    }
}

pub fn cpm_star(spec: impl Into<ClassifiedSpec>, mu: f64, sigma: f64) -> IndexValue {
    let cs = spec.into();
    match starred_inputs("Cpm*", &cs, sigma) {
        Ok((l, u, t)) => IndexValue::defined("Cpm*", (u - t).min(t - l) / taguchi_denominator(mu, sigma, t)),
        Err(iv) => iv,
    }
}

/// Cpmk* = min(Cpl*, Cpu*) / sqrt(1 + ((mu - T)/sigma)^2).
pub fn cpmk_star(spec: impl Into<ClassifiedSpec>, mu: f64, sigma: f64) -> IndexValue {
    let cs = spec.into();
    match starred_inputs("Cpmk*", &cs, sigma) {
        Ok((l, u, t)) => {
            let (cpl, cpu, zero) = starred_legs(l, u, t, mu, sigma);
            if zero {
                IndexValue::zero_branch("Cpmk*")
            } else {
                let z = (mu - t) / sigma;
                IndexValue::defined("Cpmk*", cpl.min(cpu) / (1.0 + z * z).sqrt())
            }
        }
        Err(iv) => iv,
    }
}

/// Which subset of the normal-path indices to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexSet {
    /// Cp, Cp*, Cpk, Cpl, Cpu, Cpk*, Cpm, Cpm*, Cpmk, Cpmk*.
    Full,
    /// Cp and Cpk only, always through the symmetric formulas.
    Simplified,
}

/// Normal-path indices for one dispersion estimate, in report order.
/// `long_term` renames the family to the P prefix (Pp, Ppk, Ppm, ...).
pub fn normal_indices(
    spec: impl Into<ClassifiedSpec>,
    mu: f64,
    sigma: f64,
    set: IndexSet,
    long_term: bool,
) -> Vec<IndexValue> {
    let cs = spec.into();
    let mut out = vec![potential_index(cs, sigma, false)];
    if set == IndexSet::Full {
        out.push(cp_star(cs, sigma));
    }
    out.push(centering_index(cs, mu, sigma, false));
    if set == IndexSet::Full {
        let (cpl, cpu) = one_sided(cs, mu, sigma);
        out.extend([
            cpl,
            cpu,
            cpk_star(cs, mu, sigma),
            taguchi_index(cs, mu, sigma, false),
            cpm_star(cs, mu, sigma),
            taguchi_centering_index(cs, mu, sigma, false),
            cpmk_star(cs, mu, sigma),
        ]);
    }
    if long_term {
        out.into_iter().map(IndexValue::long_term).collect()
    } else {
        out
    }
}

/// Percentile-based indices `[CNp, CNpk, CNpm, CNpmk]`.
///
/// Asymmetric bilateral specs use the same formulas as symmetric ones.
pub fn nonnormal_indices(spec: impl Into<ClassifiedSpec>, q: &QuantileTriple) -> Vec<IndexValue> {
    let cs = spec.into();
    const NAMES: [&str; 4] = ["CNp", "CNpk", "CNpm", "CNpmk"];
    if !q.is_strict() || !q.span().is_finite() {
        return NAMES.iter().map(|n| IndexValue::undefined(n, Reason::DegenerateQuantiles)).collect();
    }
    let (lo, med, hi) = (q.p00135, q.p50, q.p99865);
    let s = &cs.spec;
    let denom = |t: f64| 3.0 * ((q.span() / 6.0).powi(2) + (med - t).powi(2)).sqrt();

    let cnp = match (s.lsl(), s.usl()) {
        (Some(l), Some(u)) => IndexValue::defined("CNp", (u - l) / q.span()),
        _ => IndexValue::undefined("CNp", Reason::UnilateralCpUndefined),
    };
    let upper = s.usl().map(|u| (u - med) / (hi - med));
    let lower = s.lsl().map(|l| (med - l) / (med - lo));
    let cnpk = match (lower, upper) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => unreachable!(),
    };
    let cnpk = IndexValue::defined("CNpk", cnpk);
    let (cnpm, cnpmk) = match s.target() {
        None => (IndexValue::undefined("CNpm", Reason::NoTarget), IndexValue::undefined("CNpmk", Reason::NoTarget)),
        Some(t) => {
            let d = denom(t);
            let (pm, pmk) = match (s.lsl(), s.usl()) {
                (Some(l), Some(u)) => ((u - l) / 2.0, (u - med).min(med - l)),
                (None, Some(u)) => (u - t, u - med),
                (Some(l), None) => (t - l, med - l),
                (None, None) => unreachable!(),
            };
            (IndexValue::defined("CNpm", pm / d), IndexValue::defined("CNpmk", pmk / d))
        }
    };
    vec![cnp, cnpk, cnpm, cnpmk]
}

/// Expected nonconforming fraction outside the limits, in parts per
/// million. Absent limits contribute nothing.
pub fn ppm_nonconforming(fit: &DistributionFit, spec: &ToleranceSpec) -> f64 {
    let below = spec.lsl().map_or(0.0, |l| fit.cdf(l));
    let above = spec.usl().map_or(0.0, |u| fit.sf(u));
    1e6 * (below + above)
}
