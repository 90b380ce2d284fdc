//! Reading the tabular case-study layout and writing reports.
//!
//! Input layout: a header row `NO.,<id>,<id>,...`, the labelled rows `T`,
//! `Tol+` and `Tol-`, then one numbered row per sample in collection order.
//! Empty sample cells are skipped so dimensions may differ in length.

use std::collections::HashSet;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::indices::IndexValue;
use crate::types::{CapabilityReport, MeasurementSeries, ToleranceKind, ToleranceSpec};

/// The nominal value and the two tolerance legs as written in the file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToleranceLegs {
    pub target: f64,
    pub plus: f64,
    pub minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dimension {
    pub id: String,
    pub spec: ToleranceSpec,
    pub legs: ToleranceLegs,
    pub series: MeasurementSeries,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Dataset {
    pub dimensions: Vec<Dimension>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.dimensions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimensions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.id == id)
    }

    /// Re-reads every series as consecutive subgroups of size `m`.
    pub fn with_subgroup_size(mut self, m: usize) -> Result<Self> {
        for d in &mut self.dimensions {
            d.series = MeasurementSeries::with_subgroups(d.series.values().to_vec(), m)
                .map_err(|e| Error::InvalidSeries(format!("dimension {}: {e}", d.id)))?;
        }
        Ok(self)
    }
}

const HEADER: &str = "NO.";
const ROW_T: &str = "T";
const ROW_PLUS: &str = "Tol+";
const ROW_MINUS: &str = "Tol-";

fn number(text: &str, row: usize, col: usize) -> Result<f64> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumericCell { row, col, text: text.to_string() }),
    }
}

/// Parses the tabular layout. Row and column numbers in errors are 1-based.
pub fn parse_dataset(bytes: &[u8]) -> Result<Dataset> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(bytes);

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let line = rec.position().map_or(records.len() + 1, |p| p.line() as usize);
        records.push((line, rec));
    }
    let Some(((_, header), rows)) = records.split_first() else {
        return Err(Error::EmptyInput);
    };
    if header.get(0) != Some(HEADER) {
        return Err(Error::Csv(format!("first cell must be `{HEADER}`")));
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if ids.is_empty() {
        return Err(Error::Csv("header names no dimensions".into()));
    }
    let mut seen = HashSet::new();
    for id in &ids {
        if id.is_empty() {
            return Err(Error::Csv("empty dimension id in header".into()));
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateDimensionId(id.clone()));
        }
    }

    let width = ids.len();
    let mut tol: [Option<Vec<f64>>; 3] = [None, None, None];
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); width];
    for (line, rec) in rows {
        if rec.len() > width + 1 {
            return Err(Error::Csv(format!("line {line} has more cells than the header")));
        }
        let label = rec.get(0).unwrap_or("");
        let slot = match label {
            ROW_T => Some(0),
            ROW_PLUS => Some(1),
            ROW_MINUS => Some(2),
            _ => None,
        };
        match slot {
            Some(k) => {
                if tol[k].is_some() {
                    return Err(Error::Csv(format!("row `{label}` appears twice")));
                }
                let vals = (1..=width)
                    .map(|col| number(rec.get(col).unwrap_or(""), *line, col + 1))
                    .collect::<Result<Vec<_>>>()?;
                tol[k] = Some(vals);
            }
            None => {
                if label.parse::<u64>().is_err() {
                    return Err(Error::NonNumericCell { row: *line, col: 1, text: label.to_string() });
                }
                for (col, dst) in samples.iter_mut().enumerate() {
                    let cell = rec.get(col + 1).unwrap_or("");
                    if !cell.is_empty() {
                        dst.push(number(cell, *line, col + 2)?);
                    }
                }
            }
        }
    }
    let [t, plus, minus] = tol;
    let t = t.ok_or(Error::MissingToleranceRow(ROW_T))?;
    let plus = plus.ok_or(Error::MissingToleranceRow(ROW_PLUS))?;
    let minus = minus.ok_or(Error::MissingToleranceRow(ROW_MINUS))?;

    let dimensions = ids
        .into_iter()
        .zip(samples)
        .enumerate()
        .map(|(i, (id, values))| {
            let legs = ToleranceLegs { target: t[i], plus: plus[i], minus: minus[i] };
            let spec = ToleranceSpec::from_nominal(legs.target, legs.plus, legs.minus)
                .map_err(|e| Error::InvalidSpec(format!("dimension {id}: {e}")))?;
            let series =
                MeasurementSeries::new(values).map_err(|e| Error::InvalidSeries(format!("dimension {id}: {e}")))?;
            Ok(Dimension { id, spec, legs, series })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { dimensions })
}

/// Writes a dataset back in the input layout, numbers in shortest
/// round-trip form. `parse_dataset` of the output reproduces the dataset.
pub fn write_dataset(dataset: &Dataset) -> Vec<u8> {
    let mut out = String::new();
    let mut line = |label: &str, cells: Vec<String>| {
        out.push_str(label);
        for c in cells {
            out.push(',');
            out.push_str(&c);
        }
        out.push('\n');
    };
    let dims = &dataset.dimensions;
    line(HEADER, dims.iter().map(|d| d.id.clone()).collect());
    line(ROW_T, dims.iter().map(|d| d.legs.target.to_string()).collect());
    line(ROW_PLUS, dims.iter().map(|d| d.legs.plus.to_string()).collect());
    line(ROW_MINUS, dims.iter().map(|d| d.legs.minus.to_string()).collect());
    let rows = dims.iter().map(|d| d.series.len()).max().unwrap_or(0);
    for i in 0..rows {
        let cells = dims.iter().map(|d| d.series.values().get(i).map_or(String::new(), f64::to_string)).collect();
        line(&(i + 1).to_string(), cells);
    }
    out.into_bytes()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    /// Header line plus one data line; see [`csv_header`].
    CsvRow,
}

/// Index columns of the CSV layout, in order.
pub const CSV_INDEX_NAMES: [&str; 24] = [
    "Cp", "Cp*", "Cpk", "Cpl", "Cpu", "Cpk*", "Cpm", "Cpm*", "Cpmk", "Cpmk*", "Pp", "Pp*", "Ppk", "Ppl", "Ppu", "Ppk*",
    "Ppm", "Ppm*", "Ppmk", "Ppmk*", "CNp", "CNpk", "CNpm", "CNpmk",
];

const CSV_LEADING: [&str; 24] = [
    "dimension_id",
    "tolerance_kind",
    "has_target",
    "lsl",
    "usl",
    "target",
    "n",
    "mean",
    "sigma_overall",
    "sigma_within_method",
    "sigma_within_window",
    "sigma_within",
    "outlier_method",
    "outlier_indices",
    "a2",
    "a2_star",
    "p_value",
    "normality_passed",
    "best_fit",
    "p00135",
    "p50",
    "p99865",
    "ppm_nonconforming",
    "path",
];

/// `Cpk*` becomes `cpk_star`.
pub fn csv_column_name(index_name: &str) -> String {
    index_name.to_lowercase().replace('*', "_star")
}

pub fn csv_header() -> Vec<String> {
    let mut cols: Vec<String> = CSV_LEADING.iter().map(|s| s.to_string()).collect();
    for name in CSV_INDEX_NAMES {
        let c = csv_column_name(name);
        cols.push(format!("{c}_reason"));
        cols.insert(cols.len() - 1, c);
    }
    cols.push("error".into());
    cols
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Index values carry three decimals in CSV.
fn index_cell(iv: Option<&IndexValue>) -> (String, String) {
    match iv {
        None => (String::new(), String::new()),
        Some(iv) => {
            let value = iv.value.map_or(String::new(), |v| {
                let r = (v * 1000.0).round() / 1000.0;
                format!("{:.3}", if r == 0.0 { 0.0 } else { r })
            });
            (value, iv.reason.map_or(String::new(), |r| r.code().to_string()))
        }
    }
}

fn kind_name(kind: ToleranceKind) -> &'static str {
    match kind {
        ToleranceKind::BilateralSymmetric => "BilateralSymmetric",
        ToleranceKind::BilateralAsymmetric => "BilateralAsymmetric",
        ToleranceKind::UnilateralUpper => "UnilateralUpper",
        ToleranceKind::UnilateralLower => "UnilateralLower",
    }
}

/// The report flattened to the columns of [`csv_header`]. Indices the
/// report does not contain leave both their cells empty.
pub fn csv_row(r: &CapabilityReport) -> Vec<String> {
    let mut row = vec![
        r.dimension_id.clone(),
        kind_name(r.tolerance.kind).to_string(),
        r.tolerance.has_target.to_string(),
        opt(r.spec.lsl()),
        opt(r.spec.usl()),
        opt(r.spec.target()),
        r.n.to_string(),
        opt(r.mean),
        opt(r.sigma_overall.map(|s| s.value)),
        r.sigma_within.map_or(String::new(), |s| {
            serde_json::to_value(s.method).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
        }),
        opt(r.sigma_within.and_then(|s| s.window)),
        opt(r.sigma_within.map(|s| s.value)),
        r.outliers.as_ref().map_or(String::new(), |o| o.method.name().to_string()),
        r.outliers
            .as_ref()
            .map_or(String::new(), |o| o.indices().iter().map(usize::to_string).collect::<Vec<_>>().join(";")),
        opt(r.normality.as_ref().map(|n| n.a2)),
        opt(r.normality.as_ref().map(|n| n.a2_star)),
        opt(r.normality.as_ref().map(|n| n.p_value)),
        opt(r.normality.as_ref().map(|n| n.passed)),
        r.best_fit.as_ref().map_or(String::new(), |f| format!("{:?}", f.family)),
        opt(r.quantiles.map(|q| q.p00135)),
        opt(r.quantiles.map(|q| q.p50)),
        opt(r.quantiles.map(|q| q.p99865)),
        opt(r.ppm_nonconforming),
        r.path().unwrap_or("").to_string(),
    ];
    for name in CSV_INDEX_NAMES {
        let (v, reason) = index_cell(r.index(name));
        row.push(v);
        row.push(reason);
    }
    row.push(r.error.clone().unwrap_or_default());
    row
}

fn write_csv(rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

pub fn emit_report(report: &CapabilityReport, format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report serialises");
            out.push(b'\n');
            out
        }
        Format::CsvRow => write_csv([csv_header(), csv_row(report)]),
    }
}

/// All reports as one JSON array.
pub fn emit_reports_json(reports: &[CapabilityReport]) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(reports).expect("report serialises");
    out.push(b'\n');
    out
}

/// All reports as one CSV table with a single header line.
pub fn emit_reports_csv(reports: &[CapabilityReport]) -> Vec<u8> {
    write_csv(std::iter::once(csv_header()).chain(reports.iter().map(csv_row)))
}

/// A plain CSV table, e.g. the sigma comparison matrix.
pub fn write_table(header: &[String], rows: &[Vec<String>], out: &mut impl Write) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()
}
