//! `pcap`: process capability analysis from the command line.
//!
//! Exit codes: 0 success, 2 a dimension (or self-test check) failed,
//! 64 usage error, 65 malformed input data, 74 I/O error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pcap::distfit::{default_candidates, quantile_triple, select_best_distribution, RankedFits};
use pcap::ingest::{emit_reports_csv, emit_reports_json, parse_dataset, write_table, Dataset};
use pcap::plot::{emit_histogram_svg, emit_ratio_histogram_svg};
use pcap::screening::{OutlierMethod, DEFAULT_ALPHA, DEFAULT_TUKEY_K};
use pcap::selftest::{seed_from_env, unbiasedness, DEFAULT_REPLICATIONS, DEFAULT_TOLERANCE};
use pcap::sigma::{estimate, SigmaChoice, SrmssdUnbias, MAX_WINDOW, MIN_WINDOW};
use pcap::workflow::{
    analyze_dataset, batch_summary, sigma_relative_error, Mode, OutlierAction, ValueScale, WorkflowConfig,
    DEFAULT_BIN_EDGES,
};
use pcap::{Criterion, Family, QuantileTriple, SigmaMethod};
use serde::Serialize;

const EXIT_FAILED: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_IO: u8 = 74;

/// Process capability analysis of tabular measurement data.
///
/// Input files have a `NO.` header naming each dimension, then `T`, `Tol+`
/// and `Tol-` rows, then one row per sample.
#[derive(Parser, Debug)]
#[command(name = "pcap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full capability workflow on every dimension.
    Analyze(AnalyzeArgs),
    /// Print the dispersion comparison matrix (overall, AMR and MMR windows).
    Sigma(SigmaArgs),
    /// Rank candidate distributions per dimension.
    Fit(FitArgs),
    /// Bin the relative difference between averaged moving-range sigma and overall sigma.
    Summary(SummaryArgs),
    /// Seeded simulation check of the within estimators (seed from PCAP_SEED).
    Selftest(SelftestArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Full,
    Simplified,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SigmaArg {
    Amr,
    Mmr,
    Srmssd,
    Rbar,
    Sbar,
    Pooled,
    Overall,
}

impl SigmaArg {
    fn method(self) -> SigmaMethod {
        match self {
            SigmaArg::Amr => SigmaMethod::Amr,
            SigmaArg::Mmr => SigmaMethod::Mmr,
            SigmaArg::Srmssd => SigmaMethod::Srmssd,
            SigmaArg::Rbar => SigmaMethod::Rbar,
            SigmaArg::Sbar => SigmaMethod::Sbar,
            SigmaArg::Pooled => SigmaMethod::Pooled,
            SigmaArg::Overall => SigmaMethod::Overall,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OutliersArg {
    Tukey,
    Grubbs,
    Off,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ActionArg {
    Flag,
    Exclude,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CriterionArg {
    Aic,
    Bic,
    Aicc,
}

impl CriterionArg {
    fn criterion(self) -> Criterion {
        match self {
            CriterionArg::Aic => Criterion::Aic,
            CriterionArg::Bic => Criterion::Bic,
            CriterionArg::Aicc => Criterion::Aicc,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum UnbiasArg {
    C4,
    None,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum FamilyArg {
    Normal,
    Lognormal,
    Exponential,
    Gamma,
    Weibull2p,
    Weibull3p,
}

impl FamilyArg {
    fn family(self) -> Family {
        match self {
            FamilyArg::Normal => Family::Normal,
            FamilyArg::Lognormal => Family::LogNormal,
            FamilyArg::Exponential => Family::Exponential,
            FamilyArg::Gamma => Family::Gamma,
            FamilyArg::Weibull2p => Family::Weibull2p,
            FamilyArg::Weibull3p => Family::Weibull3p,
        }
    }
}

fn window(s: &str) -> Result<usize, String> {
    let w: usize = s.parse().map_err(|_| format!("{s:?} is not an integer"))?;
    if (MIN_WINDOW..=MAX_WINDOW).contains(&w) {
        Ok(w)
    } else {
        Err(format!("window {w} outside {MIN_WINDOW}..={MAX_WINDOW}"))
    }
}

#[derive(Clone, Debug)]
struct WindowSet(Vec<usize>);

/// `2`, `2..10` (inclusive) or `2,3,5`.
fn windows(s: &str) -> Result<WindowSet, String> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (window(a.trim())?, window(b.trim_start_matches('=').trim())?);
        if a > b {
            return Err(format!("empty window range {s:?}"));
        }
        return Ok(WindowSet((a..=b).collect()));
    }
    s.split(',').map(|w| window(w.trim())).collect::<Result<_, _>>().map(WindowSet)
}

#[derive(Clone, Copy, Debug)]
struct Decimals(Option<u32>);

fn decimals(s: &str) -> Result<Decimals, String> {
    if s == "off" {
        return Ok(Decimals(None));
    }
    match s.parse::<u32>() {
        Ok(d) if d <= 15 => Ok(Decimals(Some(d))),
        _ => Err(format!("{s:?} is neither 0..=15 nor off")),
    }
}

fn subgroup_size(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(m) if m >= 1 => Ok(m),
        _ => Err(format!("{s:?} is not a positive integer")),
    }
}

fn probability(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(p) if p > 0.0 && p < 1.0 => Ok(p),
        _ => Err(format!("{s:?} is not a probability in (0, 1)")),
    }
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Input CSV file.
    input: PathBuf,
    /// Workflow variant; simplified reports Cp, Cpk, Pp and Ppk only.
    #[arg(long, value_enum, default_value = "full")]
    mode: ModeArg,
    /// Significance level of the Anderson-Darling normality test.
    #[arg(long, default_value_t = DEFAULT_ALPHA, value_parser = probability)]
    alpha: f64,
    /// Within (short-term) sigma estimator. Default: AMR for individuals, pooled for subgroups.
    #[arg(long, value_enum)]
    sigma: Option<SigmaArg>,
    /// Moving-range window for AMR/MMR (2..=10). Alone it selects AMR.
    #[arg(long, value_parser = window)]
    mr_window: Option<usize>,
    /// Read each column as consecutive subgroups of this size.
    #[arg(long, value_parser = subgroup_size)]
    subgroup_size: Option<usize>,
    /// Outlier screening method.
    #[arg(long, value_enum, default_value = "tukey")]
    outliers: OutliersArg,
    /// Keep flagged outliers in the analysis or drop them.
    #[arg(long, value_enum, default_value = "flag")]
    outlier_action: ActionArg,
    /// Information criterion for ranking distribution fits.
    #[arg(long, value_enum, default_value = "aicc")]
    criterion: CriterionArg,
    /// Round sigma estimates to this many decimals before computing indices, or `off`.
    #[arg(long, default_value = "4", value_parser = decimals)]
    sigma_decimals: Decimals,
    /// Unbiasing of the SRMSSD estimator.
    #[arg(long, value_enum, default_value = "c4")]
    srmssd_unbias: UnbiasArg,
    /// JSON report path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the flattened CSV table here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write one SVG histogram per dimension plus a Cpk/Ppk ratio histogram into this directory.
    #[arg(long)]
    plots: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SigmaArgs {
    /// Input CSV file.
    input: PathBuf,
    /// Estimator families as columns: any of overall, amr, mmr.
    #[arg(long, value_delimiter = ',', default_value = "overall,amr,mmr")]
    methods: Vec<MatrixMethod>,
    /// Moving-range windows: `2`, `2..10` or `2,3,5` (each within 2..=10).
    #[arg(long, value_parser = windows, default_value = "2..10")]
    windows: WindowSet,
    /// Decimals printed per value.
    #[arg(long, default_value_t = 4)]
    decimals: usize,
    /// Output CSV path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MatrixMethod {
    Overall,
    Amr,
    Mmr,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Input CSV file.
    input: PathBuf,
    /// Information criterion used for ranking.
    #[arg(long, value_enum, default_value = "aicc")]
    criterion: CriterionArg,
    /// Candidate families (default: all; Weibull3p only from 20 samples).
    #[arg(long, value_enum, value_delimiter = ',')]
    families: Vec<FamilyArg>,
    /// Restrict to one dimension id.
    #[arg(long)]
    dimension: Option<String>,
    /// JSON output path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SummaryFamily {
    Amr,
    Mmr,
}

#[derive(Args, Debug)]
struct SummaryArgs {
    /// Input CSV file.
    input: PathBuf,
    /// Moving-range families to summarise.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "amr,mmr")]
    families: Vec<SummaryFamily>,
    /// Bin edges in percent, strictly increasing; `inf` closes the last bin.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BIN_EDGES.to_vec())]
    edges: Vec<f64>,
    /// Output format.
    #[arg(long, value_enum, default_value = "csv")]
    format: SummaryFormat,
    /// Output path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SummaryFormat {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    /// Simulated series per estimator.
    #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
    replications: usize,
    /// Allowed relative error of each estimator's mean.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
}

enum Failure {
    Usage(String),
    Data(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Io(m) => m,
        }
    }
}

type Outcome = Result<bool, Failure>;

fn read_dataset(path: &Path) -> Result<Dataset, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    parse_dataset(&bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| Failure::Io(format!("stdout: {e}")))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serialisable");
    out.push(b'\n');
    out
}

fn workflow_config(a: &AnalyzeArgs) -> WorkflowConfig {
    let sigma_override = match (a.sigma, a.mr_window) {
        (None, None) => None,
        (Some(s), w) => Some(SigmaChoice { method: s.method(), window: w }),
        (None, Some(w)) => Some(SigmaChoice { method: SigmaMethod::Amr, window: Some(w) }),
    };
    WorkflowConfig {
        mode: match a.mode {
            ModeArg::Full => Mode::Full,
            ModeArg::Simplified => Mode::Simplified,
        },
        alpha: a.alpha,
        outliers: match a.outliers {
            OutliersArg::Tukey => Some(OutlierMethod::TukeyFence { k: DEFAULT_TUKEY_K }),
            OutliersArg::Grubbs => Some(OutlierMethod::Grubbs { alpha: a.alpha }),
            OutliersArg::Off => None,
        },
        outlier_action: match a.outlier_action {
            ActionArg::Flag => OutlierAction::Flag,
            ActionArg::Exclude => OutlierAction::Exclude,
        },
        sigma_override,
        criterion: a.criterion.criterion(),
        sigma_decimals: a.sigma_decimals.0,
        srmssd_unbias: match a.srmssd_unbias {
            UnbiasArg::C4 => SrmssdUnbias::C4,
            UnbiasArg::None => SrmssdUnbias::None,
        },
        ..WorkflowConfig::default()
    }
}

/// File-name-safe form of a dimension id.
fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn write_plots(dir: &Path, dataset: &Dataset, reports: &[pcap::CapabilityReport]) -> Result<(), Failure> {
    let io_err = |p: &Path, e: io::Error| Failure::Io(format!("{}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (d, r) in dataset.dimensions.iter().zip(reports) {
        let q: Option<&QuantileTriple> = r.quantiles.as_ref();
        if let Ok(svg) = emit_histogram_svg(&d.series, &d.spec, q) {
            let p = dir.join(format!("{}.svg", file_stem(&d.id)));
            fs::write(&p, svg).map_err(|e| io_err(&p, e))?;
        }
    }
    let ratios: Vec<f64> = reports
        .iter()
        .filter_map(|r| Some(r.index_value("Cpk")? / r.index_value("Ppk")?))
        .filter(|v| v.is_finite())
        .collect();
    if let Ok(svg) = emit_ratio_histogram_svg(&ratios, 0.9, 1.1) {
        let p = dir.join("ratio_cpk_ppk.svg");
        fs::write(&p, svg).map_err(|e| io_err(&p, e))?;
    }
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Outcome {
    if let (Some(s), Some(_)) = (a.sigma, a.mr_window) {
        if !matches!(s, SigmaArg::Amr | SigmaArg::Mmr) {
            return Err(Failure::Usage("--mr-window applies only to --sigma amr or mmr".into()));
        }
    }
    let config = workflow_config(&a);
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let mut dataset = read_dataset(&a.input)?;
    if let Some(m) = a.subgroup_size {
        dataset = dataset.with_subgroup_size(m).map_err(|e| Failure::Usage(format!("--subgroup-size: {e}")))?;
    }
    let reports = analyze_dataset(&dataset, &config);
    write_output(a.out.as_deref(), &emit_reports_json(&reports))?;
    if let Some(p) = &a.csv {
        write_output(Some(p), &emit_reports_csv(&reports))?;
    }
    if let Some(dir) = &a.plots {
        write_plots(dir, &dataset, &reports)?;
    }
    for r in reports.iter().filter(|r| r.is_error()) {
        eprintln!("dimension {}: {}", r.dimension_id, r.error.as_deref().unwrap_or_default());
    }
    Ok(reports.iter().all(|r| !r.is_error()))
}

fn cmd_sigma(a: SigmaArgs) -> Outcome {
    let dataset = read_dataset(&a.input)?;
    let mut columns: Vec<(String, SigmaMethod, Option<usize>)> = Vec::new();
    let mut methods = a.methods.clone();
    methods.dedup();
    for m in [MatrixMethod::Overall, MatrixMethod::Amr, MatrixMethod::Mmr] {
        if !methods.contains(&m) {
            continue;
        }
        match m {
            MatrixMethod::Overall => columns.push(("overall".into(), SigmaMethod::Overall, None)),
            MatrixMethod::Amr => {
                columns.extend(a.windows.0.iter().map(|&w| (format!("A{w}"), SigmaMethod::Amr, Some(w))))
            }
            MatrixMethod::Mmr => {
                columns.extend(a.windows.0.iter().map(|&w| (format!("M{w}"), SigmaMethod::Mmr, Some(w))))
            }
        }
    }
    let mut header = vec!["NO.".to_string()];
    header.extend(columns.iter().map(|c| c.0.clone()));
    let mut rows = Vec::new();
    let mut all_ok = true;
    for d in &dataset.dimensions {
        let mut row = vec![d.id.clone()];
        for &(_, method, w) in &columns {
            match estimate(&d.series, method, w, SrmssdUnbias::C4) {
                Ok(s) => row.push(format!("{:.*}", a.decimals, s.value)),
                Err(e) => {
                    eprintln!("dimension {}: {e}", d.id);
                    all_ok = false;
                    row.push(String::new());
                }
            }
        }
        rows.push(row);
    }
    let mut buf = Vec::new();
    write_table(&header, &rows, &mut buf).expect("writing to memory");
    write_output(a.out.as_deref(), &buf)?;
    Ok(all_ok)
}

#[derive(Serialize)]
struct FitEntry {
    dimension_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    ranking: Option<RankedFits>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quantiles: Option<QuantileTriple>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn cmd_fit(a: FitArgs) -> Outcome {
    let dataset = read_dataset(&a.input)?;
    let dims: Vec<_> = match &a.dimension {
        Some(id) => vec![dataset.get(id).ok_or_else(|| Failure::Usage(format!("no dimension {id:?}")))?],
        None => dataset.dimensions.iter().collect(),
    };
    let entries: Vec<FitEntry> = dims
        .iter()
        .map(|d| {
            let candidates: Vec<Family> = if a.families.is_empty() {
                default_candidates(d.series.len())
            } else {
                a.families.iter().map(|f| f.family()).collect()
            };
            match select_best_distribution(&d.series, &candidates, a.criterion.criterion()) {
                Ok(r) => FitEntry {
                    dimension_id: d.id.clone(),
                    quantiles: Some(quantile_triple(r.best())),
                    ranking: Some(r),
                    error: None,
                },
                Err(e) => {
                    FitEntry { dimension_id: d.id.clone(), ranking: None, quantiles: None, error: Some(e.to_string()) }
                }
            }
        })
        .collect();
    write_output(a.out.as_deref(), &to_json(&entries))?;
    Ok(entries.iter().all(|e| e.error.is_none()))
}

fn cmd_summary(a: SummaryArgs) -> Outcome {
    let dataset = read_dataset(&a.input)?;
    let mut summaries = Vec::new();
    for fam in &a.families {
        let (name, method) = match fam {
            SummaryFamily::Amr => ("AMR", SigmaMethod::Amr),
            SummaryFamily::Mmr => ("MMR", SigmaMethod::Mmr),
        };
        let errors = dataset
            .dimensions
            .iter()
            .map(|d| {
                sigma_relative_error(&d.series, method).map_err(|e| Failure::Data(format!("dimension {}: {e}", d.id)))
            })
            .collect::<Result<Vec<f64>, Failure>>()?;
        let s = batch_summary(&errors, &a.edges, ValueScale::Fraction).map_err(|e| match e {
            pcap::Error::InvalidBinEdges(_) => Failure::Usage(format!("--edges: {e}")),
            e => Failure::Data(e.to_string()),
        })?;
        summaries.push((name, s));
    }
    let bytes = match a.format {
        SummaryFormat::Json => {
            let map: std::collections::BTreeMap<&str, _> = summaries.into_iter().collect();
            to_json(&map)
        }
        SummaryFormat::Csv => {
            let header: Vec<String> =
                ["family", "bin", "lo_pct", "hi_pct", "count", "total", "pct", "pct_cum", "min", "max"]
                    .map(String::from)
                    .to_vec();
            let rows: Vec<Vec<String>> = summaries
                .iter()
                .flat_map(|(name, s)| {
                    s.bins.iter().enumerate().map(move |(i, b)| {
                        vec![
                            name.to_string(),
                            (i + 1).to_string(),
                            b.lo.to_string(),
                            b.hi.to_string(),
                            b.count.to_string(),
                            b.total.to_string(),
                            format!("{:.2}", b.pct),
                            format!("{:.2}", b.pct_cum),
                            s.ratio_stats.min.to_string(),
                            s.ratio_stats.max.to_string(),
                        ]
                    })
                })
                .collect();
            let mut buf = Vec::new();
            write_table(&header, &rows, &mut buf).expect("writing to memory");
            buf
        }
    };
    write_output(a.out.as_deref(), &bytes)?;
    Ok(true)
}

fn cmd_selftest(a: SelftestArgs) -> Outcome {
    let seed = seed_from_env().map_err(|e| Failure::Usage(e.to_string()))?;
    let report = unbiasedness(seed, a.replications, a.tolerance).map_err(|e| Failure::Usage(e.to_string()))?;
    write_output(None, &to_json(&report))?;
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Sigma(a) => cmd_sigma(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Summary(a) => cmd_summary(a),
        Command::Selftest(a) => cmd_selftest(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(f) => {
            eprintln!("pcap: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
