//! Replicated simulation experiments: generate train/test pairs, run one
//! method, and score it. Shared by the CLI `simulate` subcommand and the
//! acceptance suite.

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::sbgp::{sbgp_run, SbgpConfig};
use crate::sblm::{sblm_run, SblmConfig};
use crate::sbqr::{sbqr_run, QrApproxSource, SbqrConfig};
use crate::simlab::baselines::{
    baseline_blm, baseline_blm_boxcox, baseline_bqr, baseline_gp, baseline_gp_boxcox,
};
use crate::simlab::design::{gen_covariates, gen_response, SimDesign};
use crate::simlab::metrics::{
    metric_crps, metric_interval, metric_selection, quantile_calibration, MetricReport,
};
use nalgebra::DMatrix;

/// Method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sblm,
    Blm,
    BlmBoxCox,
    Sbqr,
    Bqr,
    Sbgp,
    Gp,
    GpBoxCox,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "sblm" => Method::Sblm,
            "blm" => Method::Blm,
            "blm-boxcox" => Method::BlmBoxCox,
            "sbqr" => Method::Sbqr,
            "bqr" => Method::Bqr,
            "sbgp" => Method::Sbgp,
            "gp" => Method::Gp,
            "gp-boxcox" => Method::GpBoxCox,
            other => return Err(Error::Domain(format!("unknown method '{other}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Sblm => "sblm",
            Method::Blm => "blm",
            Method::BlmBoxCox => "blm-boxcox",
            Method::Sbqr => "sbqr",
            Method::Bqr => "bqr",
            Method::Sbgp => "sbgp",
            Method::Gp => "gp",
            Method::GpBoxCox => "gp-boxcox",
        }
    }
}

/// One experiment: a design, a method, and evaluation settings.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub design: SimDesign,
    pub method: Method,
    /// Quantile level for the quantile methods.
    pub tau: f64,
    pub num_draws: usize,
    /// Gibbs burn-in for the chain-based methods.
    pub burn_in: usize,
    pub test_size: usize,
    /// Predictive interval level.
    pub level: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(design: SimDesign, method: Method, seed: u64) -> Self {
        Self {
            design,
            method,
            tau: 0.5,
            num_draws: 1000,
            burn_in: 1000,
            test_size: 1000,
            level: 0.9,
            seed,
        }
    }
}

/// Run one replicate; `rep` indexes the substream so replicates are
/// independent and order-insensitive.
pub fn run_replicate(cfg: &ExperimentConfig, rep: u64) -> Result<MetricReport> {
    let mut rng = substream(cfg.seed, rep);
    let design = &cfg.design;
    let x_train = gen_covariates(design.n, design.p, &mut rng);
    let (dataset, _z, truth) = gen_response(&x_train, design, &mut rng)?;
    let x_test = gen_covariates(cfg.test_size, design.p, &mut rng);
    let (y_test_v, _) = truth.gen(&x_test, &mut rng);
    let y_test: Vec<f64> = y_test_v.iter().cloned().collect();
    let theta_true: Vec<f64> = truth.theta.iter().cloned().collect();

    let mut report = MetricReport {
        interval_width: f64::NAN,
        coverage: f64::NAN,
        crps: f64::NAN,
        tpr: f64::NAN,
        tnr: f64::NAN,
        quantile_calibration: f64::NAN,
    };

    let score_predictive = |report: &mut MetricReport, predictive: &DMatrix<f64>| -> Result<()> {
        report.crps = metric_crps(predictive, &y_test)?;
        let (w, c) = metric_interval(predictive, &y_test, cfg.level)?;
        report.interval_width = w;
        report.coverage = c;
        Ok(())
    };
    let score_selection = |report: &mut MetricReport, theta: &DMatrix<f64>| -> Result<()> {
        // drop the intercept column
        let coef = theta.columns(1, design.p).into_owned();
        let (tpr, tnr) = metric_selection(&coef, &theta_true, 0.95)?;
        report.tpr = tpr;
        report.tnr = tnr;
        Ok(())
    };

    match cfg.method {
        Method::Sblm => {
            let config = SblmConfig {
                num_draws: cfg.num_draws,
                ..SblmConfig::default()
            };
            let draws = sblm_run(&dataset, &config, &x_test, &mut rng)?;
            score_predictive(&mut report, &draws.predictive)?;
            score_selection(&mut report, &draws.theta)?;
        }
        Method::Blm => {
            let config = SblmConfig {
                num_draws: cfg.num_draws,
                ..SblmConfig::default()
            };
            let draws = baseline_blm(&dataset, &config, &x_test, &mut rng)?;
            score_predictive(&mut report, &draws.predictive)?;
            score_selection(&mut report, &draws.theta)?;
        }
        Method::BlmBoxCox => {
            let config = SblmConfig {
                num_draws: cfg.num_draws,
                ..SblmConfig::default()
            };
            let draws =
                baseline_blm_boxcox(&dataset, &config, cfg.burn_in.min(200), &x_test, &mut rng)?;
            score_predictive(&mut report, &draws.predictive)?;
            score_selection(&mut report, &draws.theta)?;
        }
        Method::Sbqr => {
            let config = SbqrConfig {
                tau: cfg.tau,
                num_draws: cfg.num_draws,
                burn_in: cfg.burn_in,
                approx_source: QrApproxSource::Prior,
                ..SbqrConfig::default()
            };
            let draws = sbqr_run(&dataset, &config, &x_test, &mut rng)?;
            score_predictive(&mut report, &draws.predictive)?;
            report.quantile_calibration =
                quantile_calibration(&draws.quantile_estimates, &y_test)?;
        }
        Method::Bqr => {
            let config = SbqrConfig {
                tau: cfg.tau,
                num_draws: cfg.num_draws,
                burn_in: cfg.burn_in,
                ..SbqrConfig::default()
            };
            let draws = baseline_bqr(&dataset, &config, &x_test, &mut rng)?;
            score_predictive(&mut report, &draws.predictive)?;
            report.quantile_calibration =
                quantile_calibration(draws.quantile_estimates.as_ref().unwrap(), &y_test)?;
        }
        Method::Sbgp => {
            let config = SbgpConfig {
                num_draws: cfg.num_draws,
                sample_f: false,
            };
            let draws = sbgp_run(&dataset, &x_test, &config, &mut rng)?;
            score_predictive(&mut report, &draws.predictive)?;
        }
        Method::Gp => {
            let config = SbgpConfig {
                num_draws: cfg.num_draws,
                sample_f: false,
            };
            let draws = baseline_gp(&dataset, &config, &x_test, &mut rng)?;
            score_predictive(&mut report, &draws.predictive)?;
        }
        Method::GpBoxCox => {
            let config = SbgpConfig {
                num_draws: cfg.num_draws,
                sample_f: false,
            };
            let draws =
                baseline_gp_boxcox(&dataset, &config, cfg.burn_in.min(200), &x_test, &mut rng)?;
            score_predictive(&mut report, &draws.predictive)?;
        }
    }
    Ok(report)
}

/// Run `replicates` independent replicates.
pub fn run_experiment(cfg: &ExperimentConfig, replicates: u64) -> Result<Vec<MetricReport>> {
    (0..replicates).map(|r| run_replicate(cfg, r)).collect()
}
