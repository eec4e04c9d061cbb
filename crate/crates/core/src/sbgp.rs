//! Semiparametric Gaussian process regression.
//!
//! Matérn GP on the latent scale with hyperparameters fixed at their maximum
//! likelihood values. The latent CDF components are normal with plug-in
//! moments, so the predictive step never samples the function values unless
//! explicitly requested; the fast path draws `z ~ N(f_hat(x), sigma^2)`.

use crate::dist::sample_dirichlet_flat;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::transform::{
    compose_transform, fit_monotone_interpolant, sample_fy, CdfComponent, EmpiricalCdf,
    MixtureCdf, MonotoneMap,
};
use crate::Dataset;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

/// Matérn hyperparameters on the latent scale.
///
/// `variance` is the signal-to-noise variance ratio: the covariance matrix
/// of the latent field is `sigma^2 * variance * R(range)` with `R` the Matérn
/// correlation, so `K = variance * R` is measured in units of the noise
/// variance `sigma^2`. This makes `Sigma_f = (K^-1 + I)^-1` dimensionless.
#[derive(Debug, Clone, Copy)]
pub struct MaternParams {
    /// Signal variance ratio (signal variance over noise variance).
    pub variance: f64,
    /// Correlation range.
    pub range: f64,
    /// Smoothness, one of 0.5, 1.5, 2.5.
    pub smoothness: f64,
    /// Constant mean of the latent field.
    pub mean_const: f64,
    /// Noise scale sigma.
    pub noise_scale: f64,
}

impl MaternParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0 && self.range > 0.0 && self.noise_scale > 0.0) {
            return Err(Error::Domain(format!(
                "Matern scales must be positive (variance={}, range={}, noise={})",
                self.variance, self.range, self.noise_scale
            )));
        }
        if ![0.5, 1.5, 2.5].contains(&self.smoothness) {
            return Err(Error::Domain(format!(
                "smoothness must be one of 0.5, 1.5, 2.5, got {}",
                self.smoothness
            )));
        }
        Ok(())
    }
}

/// Matérn correlation for half-integer smoothness in closed form.
pub(crate) fn matern_corr(dist: f64, range: f64, smoothness: f64) -> f64 {
    let u = dist / range;
    if smoothness == 0.5 {
        (-u).exp()
    } else if smoothness == 1.5 {
        let s = 3f64.sqrt() * u;
        (1.0 + s) * (-s).exp()
    } else {
        let s = 5f64.sqrt() * u;
        (1.0 + s + s * s / 3.0) * (-s).exp()
    }
}

/// Isotropic Matérn covariance between two points.
pub fn matern_cov(x1: &[f64], x2: &[f64], params: &MaternParams) -> f64 {
    let dist = x1
        .iter()
        .zip(x2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    params.variance * matern_corr(dist, params.range, params.smoothness)
}

/// Fitted GP with the factors needed for prediction.
#[derive(Debug, Clone)]
pub struct GpFit {
    pub params: MaternParams,
    /// Posterior mean of the latent field at the training points.
    pub f_hat: DVector<f64>,
    /// Diagonal of `Sigma_f = (K^-1 + I)^-1` (dimensionless, in (0, 1]).
    pub cov_diag: DVector<f64>,
    /// Lower Cholesky factor of `K + I`.
    chol_l: DMatrix<f64>,
    /// `(K + I)^-1 (z - c 1)`, reused for cross-covariance prediction.
    alpha: DVector<f64>,
    /// Training inputs (needed for cross-covariances).
    x_train: DMatrix<f64>,
}

const JITTER_REL: f64 = 1e-8;

fn build_corr(x: &DMatrix<f64>, range: f64, smoothness: f64) -> DMatrix<f64> {
    let n = x.nrows();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let d = (x.row(i) - x.row(j)).norm();
            let v = matern_corr(d, range, smoothness);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Profile log marginal likelihood of `z` under `N(c 1, sigma^2 (v R + I))`,
/// with the mean `c` and scale `sigma^2` profiled out analytically by
/// generalized least squares. Returns `None` when the factorization fails.
fn profile_loglik(x: &DMatrix<f64>, z: &DVector<f64>, v: f64, range: f64, nu: f64) -> Option<f64> {
    let n = x.nrows();
    let mut m = build_corr(x, range, nu) * v;
    for i in 0..n {
        m[(i, i)] += 1.0 + JITTER_REL * v;
    }
    let chol = Cholesky::new(m)?;
    let ones = DVector::repeat(n, 1.0);
    let minv_one = chol.solve(&ones);
    let minv_z = chol.solve(z);
    let denom = ones.dot(&minv_one);
    if denom <= 0.0 {
        return None;
    }
    let c = ones.dot(&minv_z) / denom;
    let resid = z - &ones * c;
    let quad = resid.dot(&(&minv_z - &minv_one * c));
    if quad <= 0.0 {
        return None;
    }
    let sigma2 = quad / n as f64;
    let log_det: f64 = chol.l().diagonal().iter().map(|&d| 2.0 * d.ln()).sum();
    Some(-0.5 * (n as f64) * sigma2.ln() - 0.5 * log_det)
}

/// Minimal Nelder-Mead on R^2 with standard coefficients. Returns the best
/// vertex and whether the simplex size converged within `max_iter`.
fn nelder_mead_2d<F>(f: F, start: [f64; 2], scale: f64, max_iter: usize) -> ([f64; 2], f64, bool)
where
    F: Fn(&[f64; 2]) -> f64,
{
    let mut simplex = [
        start,
        [start[0] + scale, start[1]],
        [start[0], start[1] + scale],
    ];
    let mut fv = [f(&simplex[0]), f(&simplex[1]), f(&simplex[2])];
    let mut converged = false;
    for _ in 0..max_iter {
        // order ascending
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        simplex = [simplex[idx[0]], simplex[idx[1]], simplex[idx[2]]];
        fv = [fv[idx[0]], fv[idx[1]], fv[idx[2]]];
        let spread = (fv[2] - fv[0]).abs();
        let size = (0..2)
            .map(|k| (simplex[1][k] - simplex[0][k]).abs() + (simplex[2][k] - simplex[0][k]).abs())
            .fold(0.0f64, f64::max);
        if spread < 1e-10 && size < 1e-7 {
            converged = true;
            break;
        }
        let centroid = [
            0.5 * (simplex[0][0] + simplex[1][0]),
            0.5 * (simplex[0][1] + simplex[1][1]),
        ];
        let refl = [
            centroid[0] + (centroid[0] - simplex[2][0]),
            centroid[1] + (centroid[1] - simplex[2][1]),
        ];
        let fr = f(&refl);
        if fr < fv[0] {
            let exp = [
                centroid[0] + 2.0 * (centroid[0] - simplex[2][0]),
                centroid[1] + 2.0 * (centroid[1] - simplex[2][1]),
            ];
            let fe = f(&exp);
            if fe < fr {
                simplex[2] = exp;
                fv[2] = fe;
            } else {
                simplex[2] = refl;
                fv[2] = fr;
            }
        } else if fr < fv[1] {
            simplex[2] = refl;
            fv[2] = fr;
        } else {
            let contr = if fr < fv[2] {
                [
                    centroid[0] + 0.5 * (refl[0] - centroid[0]),
                    centroid[1] + 0.5 * (refl[1] - centroid[1]),
                ]
            } else {
                [
                    centroid[0] + 0.5 * (simplex[2][0] - centroid[0]),
                    centroid[1] + 0.5 * (simplex[2][1] - centroid[1]),
                ]
            };
            let fc = f(&contr);
            if fc < fv[2].min(fr) {
                simplex[2] = contr;
                fv[2] = fc;
            } else {
                // shrink toward the best vertex
                for k in 1..3 {
                    simplex[k] = [
                        simplex[0][0] + 0.5 * (simplex[k][0] - simplex[0][0]),
                        simplex[0][1] + 0.5 * (simplex[k][1] - simplex[0][1]),
                    ];
                    fv[k] = f(&simplex[k]);
                }
            }
        }
    }
    (simplex[0], fv[0], converged)
}

/// Maximum likelihood fit: profile marginal likelihood maximized over
/// `(ln variance-ratio, ln range)` by Nelder-Mead, once per smoothness in
/// {0.5, 1.5, 2.5}, keeping the best smoothness. Mean and noise scale come
/// from the profiling identities at the optimum.
pub fn gp_mle_fit(x: &DMatrix<f64>, z: &[f64]) -> Result<GpFit> {
    let n = x.nrows();
    if n < 10 {
        return Err(Error::InsufficientData(format!(
            "GP fit needs n >= 10, got {n}"
        )));
    }
    if z.len() != n {
        return Err(Error::Domain("z length must match the design".into()));
    }
    let zv = DVector::from_column_slice(z);
    // median pairwise distance on a subsample as the range starting point
    let mut dists: Vec<f64> = Vec::new();
    let stride = (n / 64).max(1);
    for i in (0..n).step_by(stride) {
        for j in ((i + stride)..n).step_by(stride) {
            dists.push((x.row(i) - x.row(j)).norm());
        }
    }
    dists.sort_by(f64::total_cmp);
    let d_med = dists[dists.len() / 2].max(1e-6);

    let mut best: Option<(f64, f64, f64, f64)> = None; // (loglik, v, range, nu)
    let mut any_converged = false;
    for &nu in &[0.5, 1.5, 2.5] {
        let obj = |p: &[f64; 2]| -> f64 {
            let (v, range) = (p[0].exp(), p[1].exp());
            if !(1e-8..=1e8).contains(&v) || !(1e-8..=1e8).contains(&range) {
                return f64::INFINITY;
            }
            match profile_loglik(x, &zv, v, range, nu) {
                Some(ll) => -ll,
                None => f64::INFINITY,
            }
        };
        let (p, neg_ll, converged) = nelder_mead_2d(obj, [0.0, d_med.ln()], 1.0, 500);
        any_converged |= converged;
        if neg_ll.is_finite() {
            let cand = (-neg_ll, p[0].exp(), p[1].exp(), nu);
            if best.map_or(true, |b| cand.0 > b.0) {
                best = Some(cand);
            }
        }
    }
    let (_, v, range, nu) = best.ok_or_else(|| {
        Error::Fit("marginal likelihood evaluation failed at every probe".into())
    })?;
    if !any_converged {
        return Err(Error::Fit(format!(
            "simplex search did not converge in 500 iterations (best v={v:.3e}, range={range:.3e}, nu={nu})"
        )));
    }

    // Recompute the profiled quantities and posterior moments at the optimum.
    let mut k = build_corr(x, range, nu) * v;
    let mut m = k.clone();
    for i in 0..n {
        m[(i, i)] += 1.0 + JITTER_REL * v;
    }
    let chol = Cholesky::new(m)
        .ok_or_else(|| Error::LinearAlgebra("K + I not positive definite at the optimum".into()))?;
    let ones = DVector::repeat(n, 1.0);
    let minv_one = chol.solve(&ones);
    let minv_z = chol.solve(&zv);
    let c = ones.dot(&minv_z) / ones.dot(&minv_one);
    let resid = &zv - &ones * c;
    let alpha = chol.solve(&resid);
    let sigma2 = resid.dot(&alpha) / n as f64;
    if !(sigma2 > 0.0) {
        return Err(Error::Numerical("nonpositive profiled noise variance".into()));
    }
    // Sigma_f diagonal: K - K (K+I)^-1 K, column by column through the factor.
    let chol_l = chol.l();
    for i in 0..n {
        k[(i, i)] += JITTER_REL * v;
    }
    let half = chol_l
        .solve_lower_triangular(&k)
        .ok_or_else(|| Error::LinearAlgebra("triangular solve failed".into()))?;
    let mut cov_diag = DVector::zeros(n);
    for i in 0..n {
        let col_norm2 = half.column(i).norm_squared();
        cov_diag[i] = (k[(i, i)] - col_norm2).clamp(0.0, 1.0);
    }
    let f_hat = &k * &alpha + &ones * c;
    let params = MaternParams {
        variance: v,
        range,
        smoothness: nu,
        mean_const: c,
        noise_scale: sigma2.sqrt(),
    };
    params.validate()?;
    Ok(GpFit {
        params,
        f_hat,
        cov_diag,
        chol_l,
        alpha,
        x_train: x.clone(),
    })
}

impl GpFit {
    /// Posterior mean of the latent field at new points.
    pub fn predict_mean(&self, xq: &DMatrix<f64>) -> DVector<f64> {
        let kq = self.cross_cov(xq);
        &kq * &self.alpha + DVector::repeat(xq.nrows(), self.params.mean_const)
    }

    /// Posterior covariance (dimensionless, units of sigma^2) at new points.
    pub fn predict_cov(&self, xq: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let m = xq.nrows();
        let kq = self.cross_cov(xq);
        let mut kqq = DMatrix::zeros(m, m);
        for i in 0..m {
            kqq[(i, i)] = self.params.variance * (1.0 + 2.0 * JITTER_REL);
            for j in (i + 1)..m {
                let d = (xq.row(i) - xq.row(j)).norm();
                let val =
                    self.params.variance * matern_corr(d, self.params.range, self.params.smoothness);
                kqq[(i, j)] = val;
                kqq[(j, i)] = val;
            }
        }
        let half = self
            .chol_l
            .solve_lower_triangular(&kq.transpose())
            .ok_or_else(|| Error::LinearAlgebra("triangular solve failed".into()))?;
        let cov = kqq - half.transpose() * half;
        Ok((&cov + cov.transpose()) * 0.5)
    }

    fn cross_cov(&self, xq: &DMatrix<f64>) -> DMatrix<f64> {
        let m = xq.nrows();
        let n = self.x_train.nrows();
        DMatrix::from_fn(m, n, |i, j| {
            let d = (xq.row(i) - self.x_train.row(j)).norm();
            self.params.variance * matern_corr(d, self.params.range, self.params.smoothness)
        })
    }
}

/// Per-observation latent CDF components: normal with mean `f_hat_i` and
/// variance `sigma^2 (1 + (Sigma_f)_ii)`.
pub fn sbgp_fzx_components(fit: &GpFit) -> Vec<CdfComponent> {
    let s2 = fit.params.noise_scale * fit.params.noise_scale;
    fit.f_hat
        .iter()
        .zip(fit.cov_diag.iter())
        .map(|(&m, &cd)| CdfComponent::Normal {
            mean: m,
            sd: (s2 * (1.0 + cd)).sqrt(),
        })
        .collect()
}

/// Configuration for the GP sampler.
#[derive(Debug, Clone)]
pub struct SbgpConfig {
    /// Number of Monte Carlo draws.
    pub num_draws: usize,
    /// Also sample the latent field at the query points each draw instead of
    /// plugging in its posterior mean (slower, wider intervals).
    pub sample_f: bool,
}

impl Default for SbgpConfig {
    fn default() -> Self {
        Self {
            num_draws: 1000,
            sample_f: false,
        }
    }
}

/// Posterior draws from the GP sampler.
#[derive(Debug, Clone)]
pub struct SbgpDraws {
    pub g_draws: Vec<MonotoneMap>,
    /// S x m posterior predictive draws at the query points.
    pub predictive: DMatrix<f64>,
    /// The plug-in fit on the transformed scale.
    pub fit: GpFit,
    /// The two-stage point-estimate transformation.
    pub g_hat: MonotoneMap,
}

/// Two-stage point-estimate transformation with the GP plug-in: stage one
/// maps through the standard normal latent CDF and fits the MLE on the
/// transformed data; stage two rebuilds the latent CDF from the fitted
/// components and recomposes.
fn sbgp_point_estimate(x: &DMatrix<f64>, y: &[f64]) -> Result<(MonotoneMap, GpFit)> {
    let n = y.len();
    let fy = EmpiricalCdf::flat(y)?;
    let scale = n as f64 / (n as f64 + 1.0);
    let g1_vals: Vec<f64> = fy
        .cumulative()
        .iter()
        .map(|&c| crate::dist::std_normal_quantile(scale * c))
        .collect();
    let g1 = fit_monotone_interpolant(fy.atoms(), &g1_vals)?;
    let fit1 = gp_mle_fit(x, &g1.forward_many(y))?;
    let components = sbgp_fzx_components(&fit1);
    let flat = vec![1.0 / n as f64; n];
    let fz = MixtureCdf::new(flat, &components)?;
    let g2 = compose_transform(&fz, &fy, n)?;
    let fit2 = gp_mle_fit(x, &g2.forward_many(y))?;
    Ok((g2, fit2))
}

/// Run the GP sampler: fixed plug-in fit, one transformation draw per Monte
/// Carlo sample, and predictive draws `z ~ N(f_hat(x), sigma^2)` (fast mode)
/// or with the latent field resampled per draw.
pub fn sbgp_run(
    dataset: &Dataset,
    query_points: &DMatrix<f64>,
    config: &SbgpConfig,
    rng: &mut Rng,
) -> Result<SbgpDraws> {
    let n = dataset.n();
    if query_points.ncols() != dataset.d() {
        return Err(Error::Domain(format!(
            "query points have {} columns, expected {}",
            query_points.ncols(),
            dataset.d()
        )));
    }
    let y: Vec<f64> = dataset.y.iter().cloned().collect();
    let (g_hat, fit) = sbgp_point_estimate(&dataset.x, &y)?;
    let components = sbgp_fzx_components(&fit);

    let m = query_points.nrows();
    let f_query = fit.predict_mean(query_points);
    let sigma = fit.params.noise_scale;
    let f_chol = if config.sample_f {
        let cov = fit.predict_cov(query_points)?;
        let mut covj = cov;
        let jit = JITTER_REL * fit.params.variance.max(1.0);
        for i in 0..m {
            covj[(i, i)] += jit;
        }
        Some(Cholesky::new(covj).ok_or_else(|| {
            Error::LinearAlgebra("query covariance not positive definite".into())
        })?)
    } else {
        None
    };

    let master: u64 = rng.gen();
    let mut g_draws = Vec::with_capacity(config.num_draws);
    let mut predictive = DMatrix::zeros(config.num_draws, m);
    for s in 0..config.num_draws {
        let mut rs = crate::rng::substream(master, s as u64);
        let alpha_x = sample_dirichlet_flat(n, &mut rs)?;
        let fz = MixtureCdf::new(alpha_x, &components)?;
        let fy = sample_fy(&y, &mut rs)?;
        let g = compose_transform(&fz, &fy, n)?;
        let f_draw = match &f_chol {
            Some(ch) => {
                let u = DVector::from_fn(m, |_, _| rs.sample::<f64, _>(StandardNormal));
                &f_query + (ch.l() * u) * sigma
            }
            None => f_query.clone(),
        };
        for q in 0..m {
            let ztilde = f_draw[q] + sigma * rs.sample::<f64, _>(StandardNormal);
            predictive[(s, q)] = g.inverse(ztilde);
        }
        g_draws.push(g);
    }
    Ok(SbgpDraws {
        g_draws,
        predictive,
        fit,
        g_hat,
    })
}
