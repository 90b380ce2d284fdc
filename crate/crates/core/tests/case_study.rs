use pcap::ingest::{csv_header, emit_report, emit_reports_json, parse_dataset, write_dataset, Dataset, Format};
use pcap::plot::emit_histogram_svg;
use pcap::workflow::{analyze_dataset, analyze_dimension, sigma_relative_error, WorkflowConfig};
use pcap::{MeasurementSeries, SigmaMethod, ToleranceKind, ToleranceSpec};

fn case_study() -> Dataset {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/case_study.csv");
    parse_dataset(&std::fs::read(path).unwrap()).unwrap()
}

fn reference_config() -> WorkflowConfig {
    WorkflowConfig { sigma_decimals: Some(4), ..Default::default() }
}

#[test]
fn case_study_ingest() {
    let ds = case_study();
    let ids: Vec<&str> = ds.dimensions.iter().map(|d| d.id.as_str()).collect();
    assert_eq!(ids, ["101", "102", "103", "104", "105", "106", "107", "108", "109"]);
    let d = ds.get("101").unwrap();
    assert_eq!(d.series.len(), 32);
    assert_eq!(d.spec.target(), Some(4.62));
    assert!((d.spec.lsl().unwrap() - 4.52).abs() < 1e-12);
    assert!((d.spec.usl().unwrap() - 4.72).abs() < 1e-12);
    assert_eq!(parse_dataset(&write_dataset(&ds)).unwrap(), ds);
}

#[test]
fn dim_101_full_mode() {
    let ds = case_study();
    let d = ds.get("101").unwrap();
    let r = analyze_dimension(&d.id, &d.spec, &d.series, &reference_config());
    assert_eq!(r.path(), Some("normal"));
    assert_eq!(r.tolerance.kind, ToleranceKind::BilateralSymmetric);
    for (name, want) in [("Pp", 1.689), ("Ppk", 1.329), ("Cp", 2.017), ("Cpk", 1.587)] {
        let got = r.index_value(name).unwrap();
        assert!((got - want).abs() <= 0.005, "{name}: {got} vs {want}");
    }
    assert_eq!(r.sigma_within.unwrap().method, SigmaMethod::Amr);
    assert_eq!(r.sigma_overall.unwrap().value, 0.0197);
}

#[test]
fn all_dimensions_take_the_normal_path() {
    let reports = analyze_dataset(&case_study(), &WorkflowConfig::default());
    assert_eq!(reports.len(), 9);
    for r in &reports {
        assert!(r.normality.unwrap().passed, "{}", r.dimension_id);
        assert_eq!(r.trace.iter().filter(|t| t.node == "path").count(), 1);
    }
}

#[test]
fn malformed_dimension_is_isolated() {
    let mut ds = case_study();
    ds.dimensions[4].series = MeasurementSeries::new(vec![23.58; 32]).unwrap();
    let reports = analyze_dataset(&ds, &WorkflowConfig::default());
    assert_eq!(reports.len(), 9);
    let errors: Vec<&str> = reports.iter().filter(|r| r.is_error()).map(|r| r.dimension_id.as_str()).collect();
    assert_eq!(errors, ["105"]);
    assert_eq!(reports[4].trace.last().unwrap().node, "error");
}

#[test]
fn relative_error_examples() {
    let ds = case_study();
    let e = sigma_relative_error(&ds.get("101").unwrap().series, SigmaMethod::Amr).unwrap();
    // Reference A2..A10 row averages 0.018367 against 0.0197, about 0.068.
    assert!((e - (0.0197f64 - 0.018367).abs() / 0.0197).abs() < 0.005, "{e}");
    // Reference M2..M10 row averages 0.048556 against 0.0434, about 0.119.
    let e = sigma_relative_error(&ds.get("102").unwrap().series, SigmaMethod::Mmr).unwrap();
    assert!((e - (0.048556f64 - 0.0434).abs() / 0.0434).abs() < 0.005, "{e}");
}

#[test]
fn json_report_shape() {
    let ds = case_study();
    let d = ds.get("101").unwrap();
    let r = analyze_dimension(&d.id, &d.spec, &d.series, &reference_config());
    let text = String::from_utf8(emit_report(&r, Format::Json)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["sigma_overall"]["method"], "Overall");
    assert_eq!(v["sigma_overall"]["value"], 0.0197);
    assert_eq!(v["indices"]["Cp"]["reason"], serde_json::Value::Null);
    assert!(v["indices"]["Cpk"]["value"].is_number());
    assert_eq!(emit_report(&r, Format::Json), emit_report(&r.clone(), Format::Json));

    let reports = analyze_dataset(&ds, &reference_config());
    assert_eq!(emit_reports_json(&reports), emit_reports_json(&analyze_dataset(&ds, &reference_config())));
}

#[test]
fn unilateral_csv_row() {
    let s = MeasurementSeries::new((0..20).map(|i| 1.0 + (i as f64 * 0.7).sin() * 0.01).collect()).unwrap();
    let r = analyze_dimension("u", &ToleranceSpec::upper(1.05, None).unwrap(), &s, &WorkflowConfig::default());
    let out = emit_report(&r, Format::CsvRow);
    let mut rd = csv::Reader::from_reader(out.as_slice());
    let header: Vec<String> = rd.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, csv_header());
    let row = rd.records().next().unwrap().unwrap();
    let col = |name: &str| &row[header.iter().position(|h| h == name).unwrap()];
    if r.path() == Some("normal") {
        assert_eq!(col("cp"), "");
        assert_eq!(col("cp_reason"), "UNILATERAL_CP_UNDEFINED");
    } else {
        assert_eq!(col("cnp_reason"), "UNILATERAL_CP_UNDEFINED");
    }
}

#[test]
fn dim_101_histogram_markers() {
    let ds = case_study();
    let d = ds.get("101").unwrap();
    let svg = String::from_utf8(emit_histogram_svg(&d.series, &d.spec, None).unwrap()).unwrap();
    assert_eq!(svg.matches(r#"<line class="marker""#).count(), 5);
    for label in ["LSL", "USL", "M", "T", "mean"] {
        assert!(svg.contains(&format!(r#"data-label="{label}""#)), "{label}");
    }
}
