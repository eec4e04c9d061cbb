//! Simulation designs, comparison baselines, and evaluation metrics.

pub mod baselines;
pub mod design;
pub mod experiments;
pub mod metrics;

pub use baselines::{baseline_blm, baseline_blm_boxcox, baseline_bqr, baseline_gp, BaselineDraws};
pub use design::{gen_covariates, gen_response, SimDesign, SimTruth, TransformKind};
pub use metrics::{
    hpd_interval, metric_crps, metric_interval, metric_selection, quantile_calibration,
    MetricReport,
};
