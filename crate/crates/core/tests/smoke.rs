use nalgebra::DMatrix;
use sbr_core::rng::master;
use sbr_core::sblm::{sblm_run, SblmConfig};
use sbr_core::sbqr::{sbqr_run, SbqrConfig};
use sbr_core::sbgp::{sbgp_run, SbgpConfig};
use sbr_core::simlab::design::{gen_covariates, gen_response, SimDesign, TransformKind};
use sbr_core::Dataset;

#[test]
fn smoke_all_samplers() {
    let mut rng = master(7);
    let design = SimDesign::new(60, 4, TransformKind::BoxCox);
    let x = gen_covariates(design.n, design.p, &mut rng);
    let (dataset, _z, truth) = gen_response(&x, &design, &mut rng).unwrap();
    let xq = gen_covariates(20, design.p, &mut rng);
    let (y_test, _) = truth.gen(&xq, &mut rng);

    let cfg = SblmConfig { num_draws: 50, ..Default::default() };
    let draws = sblm_run(&dataset, &cfg, &xq, &mut rng).unwrap();
    assert_eq!(draws.predictive.nrows(), 50);
    assert!(draws.predictive.iter().all(|v| v.is_finite()));
    println!("sblm ok, pred[0,0]={}", draws.predictive[(0, 0)]);

    let qcfg = SbqrConfig { tau: 0.5, num_draws: 30, burn_in: 30, s_xi: 20, ..Default::default() };
    let qdraws = sbqr_run(&dataset, &qcfg, &xq, &mut rng).unwrap();
    assert!(qdraws.quantile_estimates.iter().all(|v| v.is_finite()));
    println!("sbqr ok, q[0]={}", qdraws.quantile_estimates[0]);

    let gcfg = SbgpConfig { num_draws: 20, sample_f: true };
    let d1 = Dataset::new(
        DMatrix::from_fn(dataset.n(), 1, |i, _| dataset.x[(i, 0)]),
        dataset.y.clone(),
    )
    .unwrap();
    let xq1 = DMatrix::from_fn(10, 1, |i, _| -1.0 + 0.2 * i as f64);
    let gdraws = sbgp_run(&d1, &xq1, &gcfg, &mut rng).unwrap();
    assert!(gdraws.predictive.iter().all(|v| v.is_finite()));
    println!("sbgp ok, nu={}", gdraws.fit.params.smoothness);
    let _ = y_test;
}
