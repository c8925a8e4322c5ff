//! Experiment orchestration: rate studies, inequality checks, the
//! lower-bound construction, and the command-line front end.

pub mod checks;
pub mod cli;
pub mod config;
pub mod lowerbound;
pub mod oracle;
pub mod rates;

pub use config::Config;
pub use rates::{fit_log_slope, run_rate_study, theory_slopes, truth_field, RateStudy, ReportRecord, SlopeFit, SlopeSummary};
pub use checks::{run_checks, CheckReport};
pub use lowerbound::{build_hypercube_alternatives, kl_divergence, lower_bound_report, Hypercube, HypercubeSpec, LowerBoundReport};
pub use oracle::{oracle_check, OracleCheck};
