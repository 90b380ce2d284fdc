//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if
//! any criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use pcap::distfit::{fit_distribution, quantile_triple};
use pcap::indices::{
    centering_index, cpk_star, cpmk_star, nonnormal_indices, normal_indices, potential_index, taguchi_centering_index,
    taguchi_index, IndexSet, IndexValue, Reason,
};
use pcap::ingest::{parse_dataset, Dataset};
use pcap::selftest::{unbiasedness, DEFAULT_REPLICATIONS, DEFAULT_SEED, DEFAULT_TOLERANCE};
use pcap::workflow::{
    analyze_dataset, batch_summary, sigma_matrix_columns, sigma_matrix_row, ValueScale, WorkflowConfig,
    DEFAULT_BIN_EDGES,
};
use pcap::{Family, MeasurementSeries, QuantileTriple, SigmaEstimate, ToleranceSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal, Normal, Weibull};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data");
const SIGMA_TOL: f64 = 0.0005;
const INDEX_TOL: f64 = 0.005;
const SIGMA_DECIMALS: u32 = 4;

type PropertyCheck = fn(&mut ChaCha8Rng) -> (usize, usize);
type CriterionCheck = fn() -> Outcome;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

/// `dimension -> column -> value` from a reference table.
fn table(name: &str) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut r = csv::Reader::from_path(format!("{DATA}/{name}")).expect("fixture");
    let header: Vec<String> = r.headers().unwrap().iter().map(str::to_string).collect();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            let cols =
                header[1..].iter().zip(rec.iter().skip(1)).map(|(h, v)| (h.clone(), v.parse().unwrap())).collect();
            (rec[0].to_string(), cols)
        })
        .collect()
}

fn dataset() -> Dataset {
    parse_dataset(&std::fs::read(format!("{DATA}/case_study.csv")).unwrap()).unwrap()
}

/// Per dimension: spec, mean and the 19 sigma columns.
fn sigma_rows(ds: &Dataset) -> Vec<(String, ToleranceSpec, f64, Vec<SigmaEstimate>)> {
    ds.dimensions
        .iter()
        .map(|d| (d.id.clone(), d.spec, d.series.mean(), sigma_matrix_row(&d.series).unwrap()))
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let ds = dataset();
    let rows = sigma_rows(&ds);
    let elapsed = start.elapsed();
    let reference = table("reference_sigma.csv");
    let cols = sigma_matrix_columns();
    let (mut ok, mut total, mut worst) = (0, 0, 0.0f64);
    for (id, _, _, row) in &rows {
        for (c, s) in cols.iter().zip(row) {
            let d = (s.value - reference[id][c]).abs();
            worst = worst.max(d);
            total += 1;
            ok += usize::from(d <= SIGMA_TOL);
        }
    }
    let fast = elapsed.as_secs_f64() < 1.0;
    outcome(
        ok == 171 && total == 171 && fast,
        format!(
            "{ok}/{total} sigma values within {SIGMA_TOL}, max diff {worst:.6}, {:.1} ms",
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

/// Compares Cp-type (`cp = true`) or Cpk-type indices against a table,
/// from sigma rounded to the reference decimals or unrounded.
fn index_table(cp: bool, rounded: bool) -> (usize, usize, Vec<String>) {
    let reference = table(if cp { "reference_cp.csv" } else { "reference_cpk.csv" });
    let cols = sigma_matrix_columns();
    let (mut ok, mut total, mut misses) = (0, 0, Vec::new());
    for (id, spec, mu, row) in sigma_rows(&dataset()) {
        for (c, s) in cols.iter().zip(&row) {
            let sigma = if rounded { s.rounded(SIGMA_DECIMALS).value } else { s.value };
            let iv = if cp { potential_index(spec, sigma, false) } else { centering_index(spec, mu, sigma, false) };
            let v = iv.value.unwrap();
            total += 1;
            if (v - reference[&id][c]).abs() <= INDEX_TOL {
                ok += 1;
            } else {
                misses.push(format!("{id}/{c}"));
            }
        }
    }
    (ok, total, misses)
}

fn miss_summary(misses: &[String]) -> String {
    let mut dims: BTreeMap<&str, usize> = BTreeMap::new();
    for m in misses {
        *dims.entry(m.split('/').next().unwrap()).or_default() += 1;
    }
    dims.iter().map(|(d, n)| format!("{d}:{n}")).collect::<Vec<_>>().join(" ")
}

fn criterion_index(cp: bool) -> Outcome {
    let (ok, total, misses) = index_table(cp, true);
    let (raw_ok, _, raw_misses) = index_table(cp, false);
    let mut detail = format!(
        "{ok}/{total} within {INDEX_TOL} from sigma rounded to {SIGMA_DECIMALS} dp; unrounded sigma {raw_ok}/{total}"
    );
    if !misses.is_empty() {
        detail += &format!("; rounded misses by dim [{}]", miss_summary(&misses));
    }
    if !raw_misses.is_empty() {
        detail += &format!("; unrounded misses by dim [{}]", miss_summary(&raw_misses));
    }
    outcome(ok == total, detail)
}

fn min_max(values: &[f64]) -> (f64, f64) {
    let s = batch_summary(values, &[0.0, f64::INFINITY], ValueScale::Percent).unwrap();
    (s.ratio_stats.min, s.ratio_stats.max)
}

fn criterion_4() -> Outcome {
    let mut all = Vec::new();
    let mut a2 = Vec::new();
    for (_, spec, _, row) in sigma_rows(&dataset()) {
        let pp = potential_index(spec, row[0].rounded(SIGMA_DECIMALS).value, false).value.unwrap();
        for (i, s) in row.iter().enumerate().skip(1) {
            let cp = potential_index(spec, s.rounded(SIGMA_DECIMALS).value, false).value.unwrap();
            all.push(cp / pp);
            if i == 1 {
                a2.push(cp / pp);
            }
        }
    }
    let (lo, hi) = min_max(&all);
    let (alo, ahi) = min_max(&a2);
    let ok = (lo - 0.657).abs() <= 0.01
        && (hi - 1.585).abs() <= 0.01
        && (alo - 0.841).abs() <= 0.005
        && (ahi - 1.193).abs() <= 0.005;
    outcome(ok, format!("Cp/Pp over {} pairs [{lo:.4}, {hi:.4}]; A2 only [{alo:.4}, {ahi:.4}]", all.len()))
}

fn criterion_5() -> Outcome {
    let mut ratios = Vec::new();
    for (_, _, _, row) in sigma_rows(&dataset()) {
        let overall = row[0].rounded(SIGMA_DECIMALS).value;
        ratios.extend(row[1..].iter().map(|s| s.rounded(SIGMA_DECIMALS).value / overall));
    }
    let (lo, hi) = min_max(&ratios);
    outcome(
        (lo - 0.631).abs() <= 0.01 && (hi - 1.521).abs() <= 0.01,
        format!("sigma_within/sigma_overall over {} pairs [{lo:.4}, {hi:.4}]", ratios.len()),
    )
}

fn criterion_6() -> Outcome {
    let reports = analyze_dataset(&dataset(), &WorkflowConfig::default());
    let passed: Vec<String> = reports
        .iter()
        .filter(|r| r.normality.is_some_and(|n| n.passed) && r.path() == Some("normal"))
        .map(|r| r.dimension_id.clone())
        .collect();
    let worst = reports.iter().filter_map(|r| r.normality).map(|n| n.p_value).fold(1.0, f64::min);
    outcome(
        passed.len() == 9 && reports.len() == 9,
        format!(
            "{}/{} dimensions pass Anderson-Darling at 0.05, smallest p-value {worst:.4}",
            passed.len(),
            reports.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let finite_edges: Vec<f64> = DEFAULT_BIN_EDGES.iter().copied().filter(|e| e.is_finite()).collect();
    let mut failures = 0;
    for trial in 0..1000 {
        let n = rng.random_range(1..=300);
        let percent = trial % 2 == 0;
        let values: Vec<f64> = (0..n)
            .map(|_| {
                let p = if rng.random_bool(0.2) {
                    finite_edges[rng.random_range(0..finite_edges.len())]
                } else {
                    rng.random_range(0.0..80.0)
                };
                if percent {
                    p
                } else {
                    p / 100.0
                }
            })
            .collect();
        let scale = if percent { ValueScale::Percent } else { ValueScale::Fraction };
        let got = batch_summary(&values, &DEFAULT_BIN_EDGES, scale).unwrap();

        // Brute force: a value belongs to bin k iff exactly k+1 edges lie at or below it.
        let factor = if percent { 1.0 } else { 100.0 };
        let mut counts = vec![0usize; DEFAULT_BIN_EDGES.len() - 1];
        for &v in &values {
            let below = DEFAULT_BIN_EDGES.iter().filter(|&&e| e <= v * factor).count();
            counts[below - 1] += 1;
        }
        let mut cum = 0;
        let mut ok = got.bins.len() == counts.len();
        for (b, &c) in got.bins.iter().zip(&counts) {
            cum += c;
            let pct = (100.0 * c as f64 / n as f64 * 100.0).round() / 100.0;
            let pct_cum = (100.0 * cum as f64 / n as f64 * 100.0).round() / 100.0;
            ok &= b.count == c && b.pct == pct && b.pct_cum == pct_cum;
        }
        ok &= got.bins.last().unwrap().pct_cum == 100.0;
        ok &= got.bins.windows(2).all(|w| w[0].pct_cum <= w[1].pct_cum);
        failures += usize::from(!ok);
    }
    outcome(failures == 0, format!("{} of 1000 seeded inputs match the brute-force oracle", 1000 - failures))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn same_index(a: &IndexValue, b: &IndexValue, tol: f64) -> bool {
    a.name == b.name
        && a.reason == b.reason
        && match (a.value, b.value) {
            (Some(x), Some(y)) => close(x, y, tol),
            (None, None) => true,
            _ => false,
        }
}

/// Bilateral spec with target inside, mean and sigma.
fn draw_case(rng: &mut ChaCha8Rng, mean_inside: bool) -> (ToleranceSpec, f64, f64) {
    let lsl = rng.random_range(-100.0..100.0);
    let width = rng.random_range(0.01..50.0);
    let usl = lsl + width;
    let target = if rng.random_bool(0.3) { (lsl + usl) / 2.0 } else { rng.random_range(lsl..=usl) };
    let mu = if mean_inside { rng.random_range(lsl..=usl) } else { rng.random_range(lsl - width..usl + width) };
    let sigma = width * rng.random_range(0.005..1.0);
    (ToleranceSpec::bilateral(lsl, usl, Some(target)).unwrap(), mu, sigma)
}

fn property_ordering(rng: &mut ChaCha8Rng) -> (usize, usize) {
    let mut bad = 0;
    for _ in 0..10_000 {
        let (spec, mu, sigma) = draw_case(rng, true);
        let v = |iv: IndexValue| iv.value.unwrap();
        let cp = v(potential_index(spec, sigma, false));
        let cpk = v(centering_index(spec, mu, sigma, false));
        let cpm = v(taguchi_index(spec, mu, sigma, false));
        let cpmk = v(taguchi_centering_index(spec, mu, sigma, false));
        let slack = 1e-12 * cp.abs().max(1.0);
        if !(cpmk <= cpk + slack && cpk <= cp + slack && cpm <= cp + slack) {
            bad += 1;
        }
    }
    (10_000 - bad, 10_000)
}

fn property_affine(rng: &mut ChaCha8Rng) -> (usize, usize) {
    let mut bad = 0;
    for _ in 0..2000 {
        let (spec, mu, sigma) = draw_case(rng, false);
        let a = rng.random_range(0.001..1000.0);
        let b = rng.random_range(-1000.0..1000.0);
        let moved = spec.affine(a, b).unwrap();
        let mut ok = true;
        for long in [false, true] {
            let x = normal_indices(spec, mu, sigma, IndexSet::Full, long);
            let y = normal_indices(moved, a * mu + b, a * sigma, IndexSet::Full, long);
            ok &= x.iter().zip(&y).all(|(p, q)| same_index(p, q, 1e-9));
        }
        let q = QuantileTriple { p00135: mu - 2.5 * sigma, p50: mu, p99865: mu + 3.5 * sigma };
        let qm = QuantileTriple { p00135: a * q.p00135 + b, p50: a * q.p50 + b, p99865: a * q.p99865 + b };
        let x = nonnormal_indices(spec, &q);
        let y = nonnormal_indices(moved, &qm);
        ok &= x.iter().zip(&y).all(|(p, q)| same_index(p, q, 1e-9));
        bad += usize::from(!ok);
    }
    (2000 - bad, 2000)
}

fn property_identity(rng: &mut ChaCha8Rng) -> (usize, usize) {
    let mut bad = 0;
    for _ in 0..10_000 {
        let (spec, mu, sigma) = draw_case(rng, false);
        let t = spec.target().unwrap();
        let cpk = centering_index(spec, mu, sigma, false).value.unwrap();
        let cpmk = taguchi_centering_index(spec, mu, sigma, false).value.unwrap();
        let z = (mu - t) / sigma;
        bad += usize::from(!close(cpmk, cpk / (1.0 + z * z).sqrt(), 1e-12));
    }
    (10_000 - bad, 10_000)
}

fn draw_sample(rng: &mut ChaCha8Rng, family: Family) -> Vec<f64> {
    let n = 60;
    let r = &mut *rng;
    match family {
        Family::Normal => {
            let d = Normal::new(r.random_range(-10.0..10.0), r.random_range(0.1..5.0)).unwrap();
            d.sample_iter(r).take(n).collect()
        }
        Family::LogNormal => {
            let d = LogNormal::new(r.random_range(-1.0..2.0), r.random_range(0.1..1.0)).unwrap();
            d.sample_iter(r).take(n).collect()
        }
        Family::Exponential => {
            let d = Exp::new(r.random_range(0.1..5.0)).unwrap();
            d.sample_iter(r).take(n).collect()
        }
        Family::Gamma => {
            let d = Gamma::new(r.random_range(0.5..20.0), r.random_range(0.1..3.0)).unwrap();
            d.sample_iter(r).take(n).collect()
        }
        Family::Weibull2p | Family::Weibull3p => {
            let shift = if family == Family::Weibull3p { r.random_range(-5.0..5.0) } else { 0.0 };
            let d = Weibull::new(r.random_range(0.5..5.0), r.random_range(0.7..5.0)).unwrap();
            d.sample_iter(r).take(n).map(|v: f64| v + shift).collect()
        }
    }
}

fn property_quantile_inversion(rng: &mut ChaCha8Rng) -> (usize, usize) {
    let ps = [1e-6, 0.00135, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 0.99865, 1.0 - 1e-6];
    let (mut ok, mut total) = (0, 0);
    for family in Family::ALL {
        for _ in 0..40 {
            let series = MeasurementSeries::new(draw_sample(rng, family)).unwrap();
            let fit = fit_distribution(&series, family).unwrap();
            for p in ps {
                total += 1;
                ok += usize::from((fit.cdf(fit.quantile(p)) - p).abs() <= 1e-9);
            }
        }
    }
    (ok, total)
}

fn property_normal_triple(rng: &mut ChaCha8Rng) -> (usize, usize) {
    let mut bad = 0;
    for _ in 0..2000 {
        let (spec, mu, sigma) = draw_case(rng, false);
        let q = QuantileTriple { p00135: mu - 3.0 * sigma, p50: mu, p99865: mu + 3.0 * sigma };
        let cn = nonnormal_indices(spec, &q);
        let pairs = [
            (&cn[0], potential_index(spec, sigma, false)),
            (&cn[1], centering_index(spec, mu, sigma, false)),
            (&cn[2], taguchi_index(spec, mu, sigma, false)),
            (&cn[3], taguchi_centering_index(spec, mu, sigma, false)),
        ];
        let ok = pairs.iter().all(|(a, b)| close(a.value.unwrap(), b.value.unwrap(), 1e-9));
        bad += usize::from(!ok);
    }
    // The fitted normal quantile triple must agree with mean +/- 3 sd.
    let series = MeasurementSeries::new(draw_sample(rng, Family::Normal)).unwrap();
    let fit = fit_distribution(&series, Family::Normal).unwrap();
    let q = quantile_triple(&fit);
    let (m, s) = (fit.params[0], fit.params[1]);
    let z = 2.999_976_992_703_490_8; // standard normal 0.99865 quantile
    let fitted_ok = close(q.p50, m, 1e-12) && close(q.p99865, m + z * s, 1e-9) && close(q.p00135, m - z * s, 1e-9);
    (2000 - bad + usize::from(fitted_ok), 2001)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut parts = Vec::new();
    let mut all_ok = true;
    let checks: [(&str, PropertyCheck); 5] = [
        ("ordering", property_ordering),
        ("affine", property_affine),
        ("identity", property_identity),
        ("quantile", property_quantile_inversion),
        ("normal-triple", property_normal_triple),
    ];
    for (name, check) in checks {
        let (ok, total) = check(&mut rng);
        all_ok &= ok == total;
        parts.push(format!("{name} {ok}/{total}"));
    }
    let sim = unbiasedness(DEFAULT_SEED, DEFAULT_REPLICATIONS, DEFAULT_TOLERANCE).unwrap();
    let worst = sim.checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    all_ok &= sim.passed;
    parts.push(format!(
        "unbiasedness {}/{} (max rel. error {:.4})",
        sim.checks.iter().filter(|c| c.passed).count(),
        sim.checks.len(),
        worst
    ));
    outcome(all_ok, parts.join(", "))
}

/// Literal piecewise leg: 0 beyond the leg, scaled linear decay otherwise.
fn oracle_leg(leg: f64, t: f64, mu: f64, sigma: f64) -> (f64, bool) {
    if (t - mu).abs() > leg {
        (0.0, true)
    } else {
        (leg / (3.0 * sigma) * (1.0 - (t - mu).abs() / leg), false)
    }
}

fn criterion_9() -> Outcome {
    let (lsl, usl) = (0.0, 10.0);
    let (mut cases, mut bad, mut zeros) = (0, 0, 0);
    for ti in 1..40 {
        let t = ti as f64 * 0.25;
        let spec = ToleranceSpec::bilateral(lsl, usl, Some(t)).unwrap();
        for mi in -60..=160 {
            let mu = mi as f64 * 0.1;
            for sigma in [0.3, 1.0, 2.5] {
                let (cpl, zl) = oracle_leg(t - lsl, t, mu, sigma);
                let (cpu, zu) = oracle_leg(usl - t, t, mu, sigma);
                let fired = zl || zu;
                let expect_k = cpl.min(cpu);
                let expect_mk = expect_k / (1.0 + ((mu - t) / sigma).powi(2)).sqrt();
                for (got, expect) in [(cpk_star(spec, mu, sigma), expect_k), (cpmk_star(spec, mu, sigma), expect_mk)] {
                    cases += 1;
                    let v = got.value.unwrap();
                    let flagged = got.reason == Some(Reason::ZeroBeyondHalfTolerance);
                    let ok =
                        flagged == fired && (!fired || v == 0.0) && (v - expect).abs() <= 1e-12 * expect.abs().max(1.0);
                    bad += usize::from(!ok);
                    zeros += usize::from(fired);
                }
            }
        }
    }
    outcome(
        bad == 0,
        format!("{} of {cases} grid points agree with the literal oracle ({zeros} in a zero branch)", cases - bad),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, CriterionCheck); 9] = [
        ("1 sigma matrix reproduction", criterion_1),
        ("2 Pp/Cp reproduction", || criterion_index(true)),
        ("3 Ppk/Cpk reproduction", || criterion_index(false)),
        ("4 Cp/Pp ratio endpoints", criterion_4),
        ("5 sigma ratio endpoints", criterion_5),
        ("6 normality gate", criterion_6),
        ("7 binning procedure", criterion_7),
        ("8 property suites", criterion_8),
        ("9 starred zero branches", criterion_9),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        println!("{} criterion {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
