//! Process capability analysis.
//!
//! Measurement series are screened for outliers, tested for normality and
//! then summarised either by the normal C/P index families (within and
//! overall dispersion) or, for non-normal data, by a fitted distribution and
//! the percentile-based CN family.
//!
//! ```
//! use pcap::{analyze_dimension, MeasurementSeries, ToleranceSpec, WorkflowConfig};
//!
//! let spec = ToleranceSpec::from_nominal(10.0, 0.5, -0.5).unwrap();
//! let series = MeasurementSeries::new(vec![
//!     10.02, 9.97, 10.05, 9.99, 10.01, 9.96, 10.03, 10.00, 9.98, 10.04,
//! ])
//! .unwrap();
//! let report = analyze_dimension("d1", &spec, &series, &WorkflowConfig::default());
//! assert_eq!(report.path(), Some("normal"));
//! assert!(report.index_value("Cpk").unwrap() > 1.33);
//! ```

pub mod distfit;
pub mod error;
pub mod indices;
pub mod ingest;
pub mod plot;
pub mod screening;
pub mod selftest;
pub mod sigma;
pub mod types;
pub mod workflow;

pub use distfit::{fit_distribution, quantile, quantile_triple, select_best_distribution, Criterion};
pub use error::{Error, Result};
pub use indices::{IndexValue, Reason};
pub use ingest::{parse_dataset, Dataset, Dimension};
pub use screening::{anderson_darling_normality, detect_outliers, OutlierMethod};
pub use types::{
    classify_tolerance, CapabilityReport, DistributionFit, Family, MeasurementSeries, QuantileTriple, SigmaEstimate,
    SigmaMethod, ToleranceKind, ToleranceSpec,
};
pub use workflow::{analyze_dataset, analyze_dimension, batch_summary, Mode, OutlierAction, WorkflowConfig};
