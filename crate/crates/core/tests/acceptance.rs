//! End-to-end acceptance suite: calibration, selection, and oracle checks for
//! every model family at desk scale. These tests are heavier than the unit
//! suites (several minutes total) but run under the plain test harness.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use sbr_core::dist::{sample_gig, std_normal_cdf, std_normal_pdf};
use sbr_core::rng::{master, substream};
use sbr_core::sbgp::{gp_mle_fit, sbgp_run, SbgpConfig};
use sbr_core::sblm::{sblm_run, SblmConfig};
use sbr_core::sbqr::{sbqr_run, SbqrConfig};
use sbr_core::simlab::design::{
    gen_covariates, gen_response, SimDesign, TransformKind, TrueTransform,
};
use sbr_core::simlab::experiments::{run_replicate, ExperimentConfig, Method};
use sbr_core::simlab::metrics::{crps_single, metric_interval};
use sbr_core::transform::{
    compose_transform, invert_mixture, location_scale_map, sample_fy, sample_fz, CdfComponent,
    MixtureCdf, MonotoneMap,
};
use sbr_core::Dataset;

fn assert_monotone_on_grid(g: &MonotoneMap, lo: f64, hi: f64, points: usize) {
    let mut prev = f64::NEG_INFINITY;
    for k in 0..points {
        let t = lo + (hi - lo) * k as f64 / (points - 1) as f64;
        let v = g.forward(t);
        assert!(
            v >= prev,
            "monotonicity violation at t={t}: {v} < {prev}"
        );
        prev = v;
    }
}

/// Criterion 1: no monotonicity violations across 1000 sampled
/// transformations per model family on 1000-point grids.
#[test]
fn monotone_transform_draws_every_family() {
    let mut gen = master(1001);
    let design = SimDesign::new(50, 3, TransformKind::BoxCox);
    let x = gen_covariates(design.n, design.p, &mut gen);
    let (dataset, _, _) = gen_response(&x, &design, &mut gen).unwrap();
    let xq = DMatrix::zeros(1, 3);
    let y_lo = dataset.y.min();
    let y_hi = dataset.y.max();
    let pad = 0.1 * (y_hi - y_lo);

    let lm = sblm_run(
        &dataset,
        &SblmConfig {
            num_draws: 1000,
            ..Default::default()
        },
        &xq,
        &mut master(11),
    )
    .unwrap();
    assert_eq!(lm.g_draws.len(), 1000);
    for g in &lm.g_draws {
        assert_monotone_on_grid(g, y_lo - pad, y_hi + pad, 1000);
    }

    let qr = sbqr_run(
        &dataset,
        &SbqrConfig {
            tau: 0.1,
            num_draws: 1000,
            burn_in: 20,
            s_xi: 50,
            ..Default::default()
        },
        &xq,
        &mut master(13),
    )
    .unwrap();
    assert_eq!(qr.g_draws.len(), 1000);
    for g in &qr.g_draws {
        assert_monotone_on_grid(g, y_lo - pad, y_hi + pad, 1000);
    }

    let x1 = DMatrix::from_fn(dataset.n(), 1, |i, _| dataset.x[(i, 0)]);
    let d1 = Dataset::new(x1, dataset.y.clone()).unwrap();
    let gp = sbgp_run(
        &d1,
        &DMatrix::zeros(1, 1),
        &SbgpConfig {
            num_draws: 1000,
            sample_f: false,
        },
        &mut master(17),
    )
    .unwrap();
    assert_eq!(gp.g_draws.len(), 1000);
    for g in &gp.g_draws {
        assert_monotone_on_grid(g, y_lo - pad, y_hi + pad, 1000);
    }
}

/// Criterion 2: the location-scale identity. Rebuilding the transformation
/// from the shifted latent mixture must agree with shifting the original
/// transformation, knot by knot, within 1e-8.
#[test]
fn location_scale_identity_holds_exactly() {
    let mut rng = master(2002);
    for _ in 0..100 {
        let n = rng.gen_range(5..40);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let comps: Vec<CdfComponent> = (0..n)
            .map(|_| CdfComponent::Normal {
                mean: rng.gen_range(-2.0..2.0),
                sd: rng.gen_range(0.3..2.5),
            })
            .collect();
        let mu = rng.gen_range(-3.0..3.0);
        let sigma = rng.gen_range(0.2..4.0);
        let shifted: Vec<CdfComponent> = comps
            .iter()
            .map(|c| match c {
                CdfComponent::Normal { mean, sd } => CdfComponent::Normal {
                    mean: mu + sigma * mean,
                    sd: sigma * sd,
                },
                _ => unreachable!(),
            })
            .collect();
        let w = sbr_core::dist::sample_dirichlet_flat(n, &mut rng).unwrap();
        let fy = sample_fy(&y, &mut rng).unwrap();
        let fz = MixtureCdf::new(w.clone(), &comps).unwrap();
        let fz_shifted = MixtureCdf::new(w, &shifted).unwrap();
        let g = compose_transform(&fz, &fy, n).unwrap();
        let via_identity = location_scale_map(&g, mu, sigma).unwrap();
        let via_recompose = compose_transform(&fz_shifted, &fy, n).unwrap();
        for (a, b) in via_identity
            .knots_g()
            .iter()
            .zip(via_recompose.knots_g())
        {
            assert!(
                (a - b).abs() < 1e-8,
                "knot mismatch: {a} vs {b} (mu={mu}, sigma={sigma})"
            );
        }
    }
}

fn experiment(
    design: SimDesign,
    method: Method,
    tau: f64,
    seed: u64,
) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(design, method, seed);
    cfg.tau = tau;
    cfg
}

/// Criterion 3: variable selection on the beta design at (n, p) = (200, 50).
/// The semiparametric model recovers the support; the Gaussian model on the
/// untransformed response does not.
#[test]
fn beta_design_selection_separates_models() {
    let design = SimDesign::new(200, 50, TransformKind::Beta);
    let reps = 20;
    let cfg = experiment(design, Method::Sblm, 0.5, 3003);
    let (mut tpr, mut tnr) = (0.0, 0.0);
    for r in 0..reps {
        let report = run_replicate(&cfg, r).unwrap();
        tpr += report.tpr;
        tnr += report.tnr;
    }
    tpr /= reps as f64;
    tnr /= reps as f64;
    assert!(tpr >= 0.9, "semiparametric TPR {tpr} < 0.9");
    assert!(tnr >= 0.9, "semiparametric TNR {tnr} < 0.9");

    let cfg = experiment(design, Method::Blm, 0.5, 3003);
    let mut blm_tpr = 0.0;
    for r in 0..reps {
        blm_tpr += run_replicate(&cfg, r).unwrap().tpr;
    }
    blm_tpr /= reps as f64;
    assert!(
        blm_tpr <= 0.4,
        "untransformed linear model should miss the support, TPR {blm_tpr}"
    );
}

/// Criterion 4: 90% predictive intervals on the step design, (n, p) =
/// (50, 10): mean empirical coverage within [0.85, 0.95].
#[test]
fn step_design_predictive_coverage() {
    let design = SimDesign::new(50, 10, TransformKind::Step);
    let cfg = experiment(design, Method::Sblm, 0.5, 4004);
    let reps = 20;
    let mut coverage = 0.0;
    for r in 0..reps {
        coverage += run_replicate(&cfg, r).unwrap().coverage;
    }
    coverage /= reps as f64;
    assert!(
        (0.85..=0.95).contains(&coverage),
        "mean coverage {coverage} outside [0.85, 0.95]"
    );
}

fn hetero_boxcox(n: usize) -> SimDesign {
    SimDesign {
        heteroskedastic: true,
        ..SimDesign::new(n, 10, TransformKind::BoxCox)
    }
}

/// Criterion 5: extreme-quantile CRPS on the heteroskedastic box-cox design,
/// (n, p) = (50, 10), tau = 0.05: the untransformed quantile model is at
/// least 5x worse, and the semiparametric CRPS stays below 0.7.
#[test]
fn tail_quantile_crps_ratio() {
    let reps = 20;
    let cfg = experiment(hetero_boxcox(50), Method::Sbqr, 0.05, 5005);
    let mut crps_sbqr = 0.0;
    for r in 0..reps {
        crps_sbqr += run_replicate(&cfg, r).unwrap().crps;
    }
    crps_sbqr /= reps as f64;
    let cfg = experiment(hetero_boxcox(50), Method::Bqr, 0.05, 5005);
    let mut crps_bqr = 0.0;
    for r in 0..reps {
        crps_bqr += run_replicate(&cfg, r).unwrap().crps;
    }
    crps_bqr /= reps as f64;
    assert!(crps_sbqr <= 0.7, "semiparametric CRPS {crps_sbqr} > 0.7");
    assert!(
        crps_bqr / crps_sbqr >= 5.0,
        "CRPS ratio {} below 5 (sbqr {crps_sbqr}, bqr {crps_bqr})",
        crps_bqr / crps_sbqr
    );
}

/// Criterion 6: tail-quantile calibration at n = 200: the semiparametric
/// model's exceedance proportion sits near tau = 0.05, the untransformed
/// model's falls outside [0.02, 0.08] in at least 15 of 20 replicates.
#[test]
fn tail_quantile_calibration_at_n200() {
    let reps = 20;
    let cfg = experiment(hetero_boxcox(200), Method::Sbqr, 0.05, 6006);
    let mut calib = 0.0;
    for r in 0..reps {
        calib += run_replicate(&cfg, r).unwrap().quantile_calibration;
    }
    calib /= reps as f64;
    assert!(
        (0.02..=0.08).contains(&calib),
        "mean calibration {calib} outside [0.02, 0.08]"
    );

    let cfg = experiment(hetero_boxcox(200), Method::Bqr, 0.05, 6006);
    let mut outside = 0;
    for r in 0..reps {
        let c = run_replicate(&cfg, r).unwrap().quantile_calibration;
        if !(0.02..=0.08).contains(&c) {
            outside += 1;
        }
    }
    assert!(
        outside >= 15,
        "untransformed model calibrated in too many replicates ({outside}/20 outside)"
    );
}

fn load_lidar() -> (Vec<f64>, Vec<f64>) {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/lidar.csv");
    let text = std::fs::read_to_string(path).expect("data/lidar.csv present in-repo");
    let mut r = Vec::new();
    let mut y = Vec::new();
    for line in text.lines().skip(1) {
        let mut it = line.split(',');
        r.push(it.next().unwrap().parse().unwrap());
        y.push(it.next().unwrap().parse().unwrap());
    }
    (r, y)
}

/// Criterion 7: GP intervals on the lidar data over 20 random 80/20 splits:
/// coverage within [0.85, 0.95] and mean width within 25% of 0.258.
#[test]
fn lidar_splits_interval_calibration() {
    let (r, y) = load_lidar();
    let n = r.len();
    assert_eq!(n, 221);
    let (mut width_sum, mut cover_sum) = (0.0, 0.0);
    let reps = 20u64;
    for rep in 0..reps {
        let mut rng = substream(7007, rep);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let n_test = n / 5;
        let (test_idx, train_idx) = idx.split_at(n_test);
        let x_train = DMatrix::from_fn(train_idx.len(), 1, |i, _| r[train_idx[i]]);
        let y_train = DVector::from_fn(train_idx.len(), |i, _| y[train_idx[i]]);
        let x_test = DMatrix::from_fn(test_idx.len(), 1, |i, _| r[test_idx[i]]);
        let y_test: Vec<f64> = test_idx.iter().map(|&i| y[i]).collect();
        let dataset = Dataset::new(x_train, y_train).unwrap();
        let draws = sbgp_run(
            &dataset,
            &x_test,
            &SbgpConfig {
                num_draws: 500,
                sample_f: false,
            },
            &mut master(rep + 1),
        )
        .unwrap();
        let (w, c) = metric_interval(&draws.predictive, &y_test, 0.9).unwrap();
        width_sum += w;
        cover_sum += c;
    }
    let width = width_sum / reps as f64;
    let coverage = cover_sum / reps as f64;
    assert!(
        (0.85..=0.95).contains(&coverage),
        "lidar coverage {coverage} outside [0.85, 0.95]"
    );
    assert!(
        (width - 0.258).abs() <= 0.25 * 0.258,
        "lidar mean width {width} more than 25% from 0.258"
    );
}

fn ks_distance(a: &mut Vec<f64>, b: &mut Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut d: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    // compare the ECDFs only after consuming whole tie groups
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        let fa = i as f64 / a.len() as f64;
        let fb = j as f64 / b.len() as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

/// Criterion 8: the surrogate-likelihood correction barely moves the
/// posterior predictive at n = 50 (box-cox design): pooled KS distance
/// between unadjusted and SIR-adjusted draws below 0.05, ESS/S above 0.2.
#[test]
fn importance_correction_is_small() {
    let mut gen = master(8008);
    let design = SimDesign::new(50, 3, TransformKind::BoxCox);
    let x = gen_covariates(design.n, design.p, &mut gen);
    let (dataset, _, _) = gen_response(&x, &design, &mut gen).unwrap();
    let xq = gen_covariates(5, design.p, &mut gen);
    let cfg = SblmConfig {
        num_draws: 8000,
        sir_keep: Some(4000),
        s_prior: 500,
        ..Default::default()
    };
    let (full, adjusted) =
        sbr_core::sblm::sblm_run_sir(&dataset, &cfg, &xq, &mut master(88)).unwrap();
    let ess = full.ess.unwrap();
    assert!(
        ess / cfg.num_draws as f64 > 0.2,
        "ESS/S = {} too small",
        ess / cfg.num_draws as f64
    );
    for q in 0..xq.nrows() {
        let mut a: Vec<f64> = full.predictive.column(q).iter().cloned().collect();
        let mut b: Vec<f64> = adjusted.predictive.column(q).iter().cloned().collect();
        let d = ks_distance(&mut a, &mut b);
        assert!(
            d < 0.05,
            "KS distance {d} between adjusted and unadjusted at query {q}"
        );
    }
}

/// Criterion 9: oracle equivalences for the numerical workhorses.
#[test]
fn numerical_oracles_agree() {
    // mixture inversion vs plain bisection
    let mut rng = master(9009);
    let comps: Vec<CdfComponent> = (0..8)
        .map(|_| CdfComponent::Normal {
            mean: rng.gen_range(-3.0..3.0),
            sd: rng.gen_range(0.3..2.0),
        })
        .collect();
    let fz = sample_fz(&comps, &mut rng).unwrap();
    for &p in &[0.005, 0.05, 0.3, 0.5, 0.7, 0.95, 0.995] {
        let got = invert_mixture(&fz, p).unwrap();
        let (mut lo, mut hi) = (-1e3, 1e3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fz.evaluate(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((got - 0.5 * (lo + hi)).abs() < 1e-8);
    }

    // GIG sampler mean vs quadrature of the unnormalized density
    let (lambda, chi, psi) = (0.5, 1.3, 2.4);
    let density = |v: f64| -> f64 {
        v.powf(lambda - 1.0) * (-0.5 * (chi / v + psi * v)).exp()
    };
    let steps = 400_000;
    let hi = 60.0;
    let h = hi / steps as f64;
    let (mut mass, mut first) = (0.0, 0.0);
    for k in 1..=steps {
        let v = h * k as f64;
        let w = if k == steps { 0.5 } else { 1.0 };
        mass += w * density(v);
        first += w * v * density(v);
    }
    let oracle_mean = first / mass;
    let reps = 200_000;
    let mut mc = 0.0;
    for _ in 0..reps {
        mc += sample_gig(lambda, chi, psi, &mut rng).unwrap();
    }
    mc /= reps as f64;
    assert!(
        (mc - oracle_mean).abs() / oracle_mean < 0.01,
        "GIG mean {mc} vs quadrature {oracle_mean}"
    );

    // GP posterior variance diagonal vs a dense inverse at n = 50
    let x = DMatrix::from_fn(50, 1, |i, _| i as f64 / 49.0);
    let z: Vec<f64> = (0..50)
        .map(|i| (6.0 * x[(i, 0)]).sin() + 0.2 * rng.gen_range(-1.0..1.0))
        .collect();
    let fit = gp_mle_fit(&x, &z).unwrap();
    let v = fit.params.variance;
    let mut k = DMatrix::from_fn(50, 50, |i, j| {
        let d = (x[(i, 0)] - x[(j, 0)]).abs();
        v * {
            let u = d / fit.params.range;
            match fit.params.smoothness {
                s if s == 0.5 => (-u).exp(),
                s if s == 1.5 => {
                    let t = 3f64.sqrt() * u;
                    (1.0 + t) * (-t).exp()
                }
                _ => {
                    let t = 5f64.sqrt() * u;
                    (1.0 + t + t * t / 3.0) * (-t).exp()
                }
            }
        }
    });
    let mut m = k.clone();
    for i in 0..50 {
        k[(i, i)] += 1e-8 * v;
        m[(i, i)] += 1.0 + 1e-8 * v;
    }
    let dense = &k - &k * m.try_inverse().unwrap() * &k;
    for i in 0..50 {
        assert!(
            (fit.cov_diag[i] - dense[(i, i)].clamp(0.0, 1.0)).abs() < 1e-8,
            "cov diagonal mismatch at {i}"
        );
    }

    // CRPS estimator vs the closed form for a Gaussian forecast
    let (mu, sd, y) = (0.4, 1.7, 1.1);
    let zsc = (y - mu) / sd;
    let closed = sd
        * (zsc * (2.0 * std_normal_cdf(zsc) - 1.0) + 2.0 * std_normal_pdf(zsc)
            - 1.0 / std::f64::consts::PI.sqrt());
    let draws: Vec<f64> = (0..40_000)
        .map(|_| mu + sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let est = crps_single(&draws, y).unwrap();
    assert!(
        (est - closed).abs() / closed < 0.02,
        "CRPS {est} vs closed form {closed}"
    );
}

fn true_forward(transform: &TrueTransform, y: f64) -> f64 {
    // invert the (monotone) inverse transformation by bisection
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if transform.inverse(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Criterion 10: the posterior-mean transformation gets closer to the truth
/// as n grows: sup-norm error on the central 90% drops from n = 50 to
/// n = 400 in at least 16 of 20 paired replicates.
#[test]
fn transform_estimate_tightens_with_n() {
    let reps = 20u64;
    let mut improved = 0;
    for rep in 0..reps {
        let mut rng = substream(10010, rep);
        let design_big = SimDesign::new(400, 10, TransformKind::Step);
        let x_big = gen_covariates(400, 10, &mut rng);
        let (data_big, _, truth) = gen_response(&x_big, &design_big, &mut rng).unwrap();
        // paired small sample: same truth (and standardization), fresh noise
        let x_small = x_big.rows(0, 50).into_owned();
        let (y_small, _) = truth.gen(&x_small, &mut rng);
        let data_small = Dataset::new(x_small, y_small).unwrap();

        let cfg = SblmConfig {
            num_draws: 300,
            ..Default::default()
        };
        let xq = DMatrix::zeros(1, 10);
        // g is identified only up to the latent location and scale, so align
        // the posterior mean affinely to the standardized truth before
        // measuring the sup-norm of the remaining (shape) error.
        let sup_dist = |dataset: &Dataset, seed: u64| -> f64 {
            let draws = sblm_run(dataset, &cfg, &xq, &mut master(seed)).unwrap();
            let mut zs = Vec::with_capacity(60);
            let mut ghats = Vec::with_capacity(60);
            for k in 0..60 {
                let z_true = -1.645 + 2.0 * 1.645 * k as f64 / 59.0;
                let y = truth.transform.inverse(z_true);
                let ghat: f64 = draws.g_draws.iter().map(|g| g.forward(y)).sum::<f64>()
                    / draws.g_draws.len() as f64;
                zs.push(true_forward(&truth.transform, y));
                ghats.push(ghat);
            }
            let n = zs.len() as f64;
            let zbar = zs.iter().sum::<f64>() / n;
            let gbar = ghats.iter().sum::<f64>() / n;
            let szz: f64 = zs.iter().map(|z| (z - zbar).powi(2)).sum();
            let szg: f64 = zs
                .iter()
                .zip(&ghats)
                .map(|(z, g)| (z - zbar) * (g - gbar))
                .sum();
            let a = szg / szz;
            let b = gbar - a * zbar;
            zs.iter()
                .zip(&ghats)
                .map(|(z, g)| ((g - a * z - b) / a).abs())
                .fold(0.0f64, f64::max)
        };
        let d_small = sup_dist(&data_small, 300 + rep);
        let d_big = sup_dist(&data_big, 600 + rep);
        if d_big < d_small {
            improved += 1;
        }
    }
    assert!(
        improved >= 16,
        "sup-norm error only improved in {improved}/20 paired replicates"
    );
}
