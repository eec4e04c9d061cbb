//! `sbr`: Monte Carlo samplers for semiparametric Bayesian regression.

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use sbr_cli::archive::{knot_table, push_knot_tables, ArchiveHeader, DrawArchive};
use sbr_cli::ingest::{ingest_csv, ingest_query_csv};
use sbr_cli::{config_hash, CliError, CliResult};
use sbr_core::rng::master;
use sbr_core::simlab::design::{SimDesign, TransformKind};
use sbr_core::simlab::experiments::{run_experiment, ExperimentConfig, Method};
use sbr_core::simlab::metrics::{hpd_interval, sample_quantile};
use sbr_core::transform::{fit_monotone_interpolant, ApproxSource};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "sbr",
    version,
    about = "Monte Carlo inference for regression models with an unknown monotone response transformation"
)]
struct Cli {
    /// Worker count; draws are independent substreams, so results are
    /// identical for any value (reserved for parallel builds).
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Semiparametric Bayesian linear regression.
    Sblm(SblmArgs),
    /// Semiparametric Bayesian quantile regression.
    Sbqr(SbqrArgs),
    /// Semiparametric Gaussian process regression.
    Sbgp(SbgpArgs),
    /// Replicated simulation experiments with metric reports.
    Simulate(SimulateArgs),
    /// Export one sampled transformation from a draw archive as CSV knots.
    TransformExport(ExportArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Training data CSV (header row required).
    #[arg(long)]
    data: PathBuf,
    /// Response column name.
    #[arg(long)]
    response: String,
    /// Comma-separated covariate columns; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Query points CSV; defaults to the training covariates.
    #[arg(long)]
    query: Option<PathBuf>,
    /// Master seed for the reproducible substream layout.
    #[arg(long)]
    seed: u64,
    /// Number of retained posterior draws.
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    /// Output directory (or $SBR_OUTPUT_DIR, or the working directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ApproxArg {
    /// Use the prior moments for the latent CDF components.
    Prior,
    /// Use the data-driven plug-in approximation.
    Plugin,
}

#[derive(Args, Clone)]
struct SblmArgs {
    #[command(flatten)]
    data: DataArgs,
    /// g-prior scale; defaults to the sample size.
    #[arg(long)]
    psi: Option<f64>,
    #[arg(long, value_enum, default_value_t = ApproxArg::Plugin)]
    approx: ApproxArg,
    /// Retain this many draws by sampling importance resampling.
    #[arg(long)]
    sir_keep: Option<usize>,
    /// Prior draws shared across importance-weight evaluations.
    #[arg(long, default_value_t = 1000)]
    s_prior: usize,
}

#[derive(Args, Clone)]
struct SbqrArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Quantile level in (0, 1).
    #[arg(long)]
    tau: f64,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    /// Monte Carlo size of the shared xi average in the components.
    #[arg(long, default_value_t = 100)]
    s_xi: usize,
    #[arg(long, value_enum, default_value_t = ApproxArg::Prior)]
    approx: ApproxArg,
}

#[derive(Args, Clone)]
struct SbgpArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Resample the latent field at the query points each draw.
    #[arg(long, default_value_t = false)]
    sample_f: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum DesignArg {
    Beta,
    Step,
    BoxCox,
    Identity,
}

#[derive(Args, Clone)]
struct SimulateArgs {
    /// True inverse transformation of the simulated data.
    #[arg(long, value_enum)]
    design: DesignArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    /// Method under evaluation (sblm, blm, blm-boxcox, sbqr, bqr, sbgp, gp,
    /// gp-boxcox).
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = 20)]
    replicates: u64,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1000)]
    test_size: usize,
    /// Predictive interval level.
    #[arg(long, default_value_t = 0.9)]
    level: f64,
    /// Multiplicative (heteroskedastic) latent errors.
    #[arg(long, default_value_t = false)]
    heteroskedastic: bool,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ExportArgs {
    /// Draw archive written by a model subcommand.
    #[arg(long)]
    archive: PathBuf,
    /// Draw index of the transformation to export.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Output CSV path.
    #[arg(long)]
    output: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if cli.workers == 0 {
        eprintln!("config error: --workers must be at least 1");
        std::process::exit(4);
    }
    let result = match cli.command {
        Command::Sblm(args) => run_sblm(args),
        Command::Sbqr(args) => run_sbqr(args),
        Command::Sbgp(args) => run_sbgp(args),
        Command::Simulate(args) => run_simulate(args),
        Command::TransformExport(args) => run_export(args),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}

fn output_dir(flag: &Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = flag
        .clone()
        .or_else(|| std::env::var_os("SBR_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load(
    data: &DataArgs,
) -> CliResult<(sbr_core::Dataset, Vec<String>, DMatrix<f64>)> {
    let (dataset, names) = ingest_csv(
        &data.data,
        &data.response,
        data.covariates.as_deref(),
    )?;
    let query = match &data.query {
        Some(path) => ingest_query_csv(path, &names)?,
        None => dataset.x.clone(),
    };
    Ok((dataset, names, query))
}

fn banner(model: &str, seed: u64, hash: &str) {
    println!("model={model} seed={seed} config-hash={hash}");
}

/// Summary CSV: posterior coefficient means with 95% HPD intervals, then the
/// equal-tailed 90% predictive interval per query point.
fn write_summary(
    path: &Path,
    coef_names: &[String],
    theta: Option<&DMatrix<f64>>,
    predictive: &DMatrix<f64>,
) -> CliResult<()> {
    let mut out = String::from("kind,name,mean,lower,upper\n");
    if let Some(theta) = theta {
        let mut col = vec![0.0; theta.nrows()];
        for j in 0..theta.ncols() {
            for (i, v) in col.iter_mut().enumerate() {
                *v = theta[(i, j)];
            }
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let (lo, hi) = hpd_interval(&col, 0.95)?;
            let name = if j == 0 {
                "intercept".to_string()
            } else {
                coef_names[j - 1].clone()
            };
            out.push_str(&format!("coefficient,{name},{mean},{lo},{hi}\n"));
        }
    }
    let mut col = vec![0.0; predictive.nrows()];
    for q in 0..predictive.ncols() {
        for (i, v) in col.iter_mut().enumerate() {
            *v = predictive[(i, q)];
        }
        col.sort_by(f64::total_cmp);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let lo = sample_quantile(&col, 0.05);
        let hi = sample_quantile(&col, 0.95);
        out.push_str(&format!("predictive,q{q},{mean},{lo},{hi}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Serialize)]
struct SblmHashedConfig<'a> {
    model: &'a str,
    data: String,
    response: &'a str,
    covariates: &'a Option<Vec<String>>,
    query: Option<String>,
    seed: u64,
    draws: usize,
    psi: Option<f64>,
    approx: ApproxArg,
    sir_keep: Option<usize>,
    s_prior: usize,
}

fn run_sblm(args: SblmArgs) -> CliResult<()> {
    use sbr_core::sblm::{sblm_run, sblm_run_sir, SblmConfig};
    let (dataset, names, query) = load(&args.data)?;
    let hash = config_hash(&SblmHashedConfig {
        model: "sblm",
        data: args.data.data.display().to_string(),
        response: &args.data.response,
        covariates: &args.data.covariates,
        query: args.data.query.as_ref().map(|p| p.display().to_string()),
        seed: args.data.seed,
        draws: args.data.draws,
        psi: args.psi,
        approx: args.approx,
        sir_keep: args.sir_keep,
        s_prior: args.s_prior,
    });
    let config = SblmConfig {
        psi: args.psi,
        approx_source: match args.approx {
            ApproxArg::Prior => ApproxSource::Prior,
            ApproxArg::Plugin => ApproxSource::LaplacePlugin,
        },
        num_draws: args.data.draws,
        sir_keep: args.sir_keep,
        s_prior: args.s_prior,
        ..SblmConfig::default()
    };
    let mut rng = master(args.data.seed);
    let dir = output_dir(&args.data.out)?;
    let mut archive = DrawArchive::new(ArchiveHeader {
        model: "sblm".into(),
        n: dataset.n() as u64,
        d: dataset.d() as u64,
        s: args.data.draws as u64,
        seed: args.data.seed,
        config_hash: hash.clone(),
    });
    let draws = if args.sir_keep.is_some() {
        let (full, adjusted) = sblm_run_sir(&dataset, &config, &query, &mut rng)?;
        archive.push_matrix("sir_theta", &adjusted.theta);
        archive.push_matrix("sir_predictive", &adjusted.predictive);
        full
    } else {
        sblm_run(&dataset, &config, &query, &mut rng)?
    };
    archive.push_matrix("theta", &draws.theta);
    archive.push_vector("sigma", &draws.sigma);
    archive.push_matrix("predictive", &draws.predictive);
    if let Some(w) = &draws.log_imp_weights {
        archive.push_vector("log_imp_weights", w);
    }
    push_knot_tables(&mut archive, &draws.g_draws);
    archive.write(&dir.join("sblm-draws.sbra"))?;
    write_summary(
        &dir.join("sblm-summary.csv"),
        &names,
        Some(&draws.theta),
        &draws.predictive,
    )?;
    banner("sblm", args.data.seed, &hash);
    Ok(())
}

#[derive(Serialize)]
struct SbqrHashedConfig<'a> {
    model: &'a str,
    data: String,
    response: &'a str,
    covariates: &'a Option<Vec<String>>,
    query: Option<String>,
    seed: u64,
    draws: usize,
    tau: f64,
    burn_in: usize,
    s_xi: usize,
    approx: ApproxArg,
}

fn run_sbqr(args: SbqrArgs) -> CliResult<()> {
    use sbr_core::sbqr::{sbqr_run, QrApproxSource, SbqrConfig};
    let (dataset, names, query) = load(&args.data)?;
    let hash = config_hash(&SbqrHashedConfig {
        model: "sbqr",
        data: args.data.data.display().to_string(),
        response: &args.data.response,
        covariates: &args.data.covariates,
        query: args.data.query.as_ref().map(|p| p.display().to_string()),
        seed: args.data.seed,
        draws: args.data.draws,
        tau: args.tau,
        burn_in: args.burn_in,
        s_xi: args.s_xi,
        approx: args.approx,
    });
    let config = SbqrConfig {
        tau: args.tau,
        s_xi: args.s_xi,
        num_draws: args.data.draws,
        burn_in: args.burn_in,
        approx_source: match args.approx {
            ApproxArg::Prior => QrApproxSource::Prior,
            ApproxArg::Plugin => QrApproxSource::PluginQr,
        },
        ..SbqrConfig::default()
    };
    let mut rng = master(args.data.seed);
    let draws = sbqr_run(&dataset, &config, &query, &mut rng)?;
    let dir = output_dir(&args.data.out)?;
    let mut archive = DrawArchive::new(ArchiveHeader {
        model: "sbqr".into(),
        n: dataset.n() as u64,
        d: dataset.d() as u64,
        s: args.data.draws as u64,
        seed: args.data.seed,
        config_hash: hash.clone(),
    });
    archive.push_matrix("theta", &draws.theta);
    archive.push_matrix("predictive", &draws.predictive);
    archive.push_vector("quantile_estimates", &draws.quantile_estimates);
    push_knot_tables(&mut archive, &draws.g_draws);
    archive.write(&dir.join("sbqr-draws.sbra"))?;
    write_summary(
        &dir.join("sbqr-summary.csv"),
        &names,
        Some(&draws.theta),
        &draws.predictive,
    )?;
    banner("sbqr", args.data.seed, &hash);
    Ok(())
}

#[derive(Serialize)]
struct SbgpHashedConfig<'a> {
    model: &'a str,
    data: String,
    response: &'a str,
    covariates: &'a Option<Vec<String>>,
    query: Option<String>,
    seed: u64,
    draws: usize,
    sample_f: bool,
}

fn run_sbgp(args: SbgpArgs) -> CliResult<()> {
    use sbr_core::sbgp::{sbgp_run, SbgpConfig};
    let (dataset, names, query) = load(&args.data)?;
    let hash = config_hash(&SbgpHashedConfig {
        model: "sbgp",
        data: args.data.data.display().to_string(),
        response: &args.data.response,
        covariates: &args.data.covariates,
        query: args.data.query.as_ref().map(|p| p.display().to_string()),
        seed: args.data.seed,
        draws: args.data.draws,
        sample_f: args.sample_f,
    });
    let config = SbgpConfig {
        num_draws: args.data.draws,
        sample_f: args.sample_f,
    };
    let mut rng = master(args.data.seed);
    let draws = sbgp_run(&dataset, &query, &config, &mut rng)?;
    let dir = output_dir(&args.data.out)?;
    let mut archive = DrawArchive::new(ArchiveHeader {
        model: "sbgp".into(),
        n: dataset.n() as u64,
        d: dataset.d() as u64,
        s: args.data.draws as u64,
        seed: args.data.seed,
        config_hash: hash.clone(),
    });
    archive.push_matrix("predictive", &draws.predictive);
    let p = &draws.fit.params;
    archive.push_vector(
        "fit_params",
        &[
            p.variance,
            p.range,
            p.smoothness,
            p.mean_const,
            p.noise_scale,
        ],
    );
    archive.push_vector("g_hat_knots_t", draws.g_hat.knots_t());
    archive.push_vector("g_hat_knots_g", draws.g_hat.knots_g());
    push_knot_tables(&mut archive, &draws.g_draws);
    archive.write(&dir.join("sbgp-draws.sbra"))?;
    write_summary(&dir.join("sbgp-summary.csv"), &names, None, &draws.predictive)?;
    banner("sbgp", args.data.seed, &hash);
    Ok(())
}

#[derive(Serialize)]
struct SimulateHashedConfig<'a> {
    model: &'a str,
    design: DesignArg,
    n: usize,
    p: usize,
    method: &'a str,
    replicates: u64,
    tau: f64,
    draws: usize,
    burn_in: usize,
    test_size: usize,
    level: f64,
    heteroskedastic: bool,
    seed: u64,
}

fn run_simulate(args: SimulateArgs) -> CliResult<()> {
    let method = Method::parse(&args.method)?;
    let hash = config_hash(&SimulateHashedConfig {
        model: "simulate",
        design: args.design,
        n: args.n,
        p: args.p,
        method: &args.method,
        replicates: args.replicates,
        tau: args.tau,
        draws: args.draws,
        burn_in: args.burn_in,
        test_size: args.test_size,
        level: args.level,
        heteroskedastic: args.heteroskedastic,
        seed: args.seed,
    });
    let design = SimDesign {
        n: args.n,
        p: args.p,
        transform_kind: match args.design {
            DesignArg::Beta => TransformKind::Beta,
            DesignArg::Step => TransformKind::Step,
            DesignArg::BoxCox => TransformKind::BoxCox,
            DesignArg::Identity => TransformKind::Identity,
        },
        heteroskedastic: args.heteroskedastic,
        error_sd: 1.0,
    };
    let config = ExperimentConfig {
        design,
        method,
        tau: args.tau,
        num_draws: args.draws,
        burn_in: args.burn_in,
        test_size: args.test_size,
        level: args.level,
        seed: args.seed,
    };
    let reports = run_experiment(&config, args.replicates)?;
    let dir = output_dir(&args.out)?;
    let mut csv_out =
        String::from("rep,crps,interval_width,coverage,tpr,tnr,quantile_calibration\n");
    for (rep, r) in reports.iter().enumerate() {
        csv_out.push_str(&format!(
            "{rep},{},{},{},{},{},{}\n",
            r.crps, r.interval_width, r.coverage, r.tpr, r.tnr, r.quantile_calibration
        ));
    }
    std::fs::write(dir.join("metrics.csv"), csv_out)?;
    let mean_of = |f: fn(&sbr_core::simlab::metrics::MetricReport) -> f64| -> f64 {
        reports.iter().map(f).sum::<f64>() / reports.len() as f64
    };
    let summary = serde_json::json!({
        "method": args.method,
        "replicates": args.replicates,
        "seed": args.seed,
        "config_hash": hash,
        "mean_crps": mean_of(|r| r.crps),
        "mean_interval_width": mean_of(|r| r.interval_width),
        "mean_coverage": mean_of(|r| r.coverage),
        "mean_tpr": mean_of(|r| r.tpr),
        "mean_tnr": mean_of(|r| r.tnr),
        "mean_quantile_calibration": mean_of(|r| r.quantile_calibration),
    });
    std::fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(&summary)
            .map_err(|e| CliError::Input(format!("metrics serialization: {e}")))?,
    )?;
    banner("simulate", args.seed, &hash);
    Ok(())
}

fn run_export(args: ExportArgs) -> CliResult<()> {
    let archive = DrawArchive::read(&args.archive)?;
    let (t, g) = knot_table(&archive, args.index)?;
    let map = fit_monotone_interpolant(&t, &g)?;
    std::fs::write(&args.output, map.to_csv())?;
    println!(
        "model={} draw={} knots={}",
        archive.header.model,
        args.index,
        t.len()
    );
    Ok(())
}
