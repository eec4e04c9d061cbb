//! Synthetic data generators for the simulation studies.

use crate::dist::{beta_quantile, std_normal_cdf};
use crate::error::{Error, Result};
use crate::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Exp1, StandardNormal};

/// Inverse transform applied to the standardized latent data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    /// Beta(0.1, 0.5) quantile of the latent normal CDF: y in [0,1], mass
    /// piled near zero.
    Beta,
    /// Monotone piecewise-linear map from cumulative exponential increments:
    /// positive y.
    Step,
    /// Inverse signed Box-Cox with exponent 0.5.
    BoxCox,
    /// No transformation.
    Identity,
}

/// A simulation scenario.
#[derive(Debug, Clone, Copy)]
pub struct SimDesign {
    pub n: usize,
    pub p: usize,
    pub transform_kind: TransformKind,
    /// Multiplicative errors `z = x'theta (1 + eps)` instead of additive.
    pub heteroskedastic: bool,
    pub error_sd: f64,
}

impl SimDesign {
    pub fn new(n: usize, p: usize, transform_kind: TransformKind) -> Self {
        Self {
            n,
            p,
            transform_kind,
            heteroskedastic: false,
            error_sd: 1.0,
        }
    }
}

/// Correlated Gaussian covariates: AR(1) dependence at lag correlation 0.75,
/// unit marginals, then one random column permutation.
pub fn gen_covariates(n: usize, p: usize, rng: &mut impl rand::Rng) -> DMatrix<f64> {
    let (mut x, perm) = gen_covariates_unpermuted(n, p, rng);
    apply_column_permutation(&mut x, &perm);
    x
}

/// The pre-permutation matrix together with the permutation that
/// [`gen_covariates`] would have applied (exposed for distribution checks).
pub fn gen_covariates_unpermuted(
    n: usize,
    p: usize,
    rng: &mut impl rand::Rng,
) -> (DMatrix<f64>, Vec<usize>) {
    let rho: f64 = 0.75;
    let innov_sd = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev: f64 = rng.sample(StandardNormal);
        x[(i, 0)] = prev;
        for j in 1..p {
            let e: f64 = rng.sample(StandardNormal);
            prev = rho * prev + innov_sd * e;
            x[(i, j)] = prev;
        }
    }
    let mut perm: Vec<usize> = (0..p).collect();
    perm.shuffle(rng);
    (x, perm)
}

fn apply_column_permutation(x: &mut DMatrix<f64>, perm: &[usize]) {
    let src = x.clone();
    for (dst_col, &src_col) in perm.iter().enumerate() {
        x.set_column(dst_col, &src.column(src_col));
    }
}

/// The (fixed) true inverse transformation of a replicate.
#[derive(Debug, Clone)]
pub enum TrueTransform {
    Identity,
    BoxCox {
        lambda: f64,
    },
    Beta,
    /// Knot locations on [-3, 3] and the cumulative exponential sums there.
    Step {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
}

impl TrueTransform {
    /// y = g^-1(z) for standardized latent z.
    pub fn inverse(&self, z: f64) -> f64 {
        match self {
            TrueTransform::Identity => z,
            TrueTransform::BoxCox { lambda } => {
                let u = lambda * z + 1.0;
                u.signum() * u.abs().powf(1.0 / lambda)
            }
            TrueTransform::Beta => {
                let p = std_normal_cdf(z).clamp(1e-14, 1.0 - 1e-14);
                beta_quantile(p, 0.1, 0.5).unwrap_or(0.5)
            }
            TrueTransform::Step { knots, values } => step_eval(knots, values, z),
        }
    }
}

/// Piecewise-linear interpolation through the cumulative sums; below the
/// first knot an exponential tail keeps the output positive, above the last
/// the final segment extends linearly.
fn step_eval(knots: &[f64], values: &[f64], z: f64) -> f64 {
    let k = knots.len();
    if z <= knots[0] {
        let slope = (values[1] - values[0]) / (knots[1] - knots[0]);
        return values[0] * (slope / values[0] * (z - knots[0])).exp();
    }
    if z >= knots[k - 1] {
        let slope = (values[k - 1] - values[k - 2]) / (knots[k - 1] - knots[k - 2]);
        return values[k - 1] + slope * (z - knots[k - 1]);
    }
    let j = knots.partition_point(|&t| t <= z) - 1;
    let frac = (z - knots[j]) / (knots[j + 1] - knots[j]);
    values[j] + frac * (values[j + 1] - values[j])
}

/// Construct the step transform: 10 standard exponential increments at
/// equally spaced points on [-3, 3], cumulatively summed.
pub fn sample_step_transform(rng: &mut impl rand::Rng) -> TrueTransform {
    let k = 10;
    let knots: Vec<f64> = (0..k)
        .map(|j| -3.0 + 6.0 * j as f64 / (k - 1) as f64)
        .collect();
    let mut acc = 0.0;
    let values: Vec<f64> = (0..k)
        .map(|_| {
            acc += rng.sample::<f64, _>(Exp1);
            acc
        })
        .collect();
    TrueTransform::Step { knots, values }
}

/// Everything needed to generate further data from the same replicate truth.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub theta: DVector<f64>,
    pub transform: TrueTransform,
    /// Sample center and scale of the training latent data; reused verbatim
    /// for test data so train and test share one transformation.
    pub center: f64,
    pub scale: f64,
    pub heteroskedastic: bool,
    pub error_sd: f64,
}

impl SimTruth {
    /// Raw (unstandardized) latent responses for a design matrix.
    fn latent_raw(&self, x: &DMatrix<f64>, rng: &mut impl rand::Rng) -> DVector<f64> {
        let lin = x * &self.theta;
        DVector::from_fn(x.nrows(), |i, _| {
            let eps: f64 = self.error_sd * rng.sample::<f64, _>(StandardNormal);
            if self.heteroskedastic {
                lin[i] * (1.0 + eps)
            } else {
                lin[i] + eps
            }
        })
    }

    /// Generate responses for new covariates under the stored truth.
    pub fn gen(&self, x: &DMatrix<f64>, rng: &mut impl rand::Rng) -> (DVector<f64>, DVector<f64>) {
        let raw = self.latent_raw(x, rng);
        let z = raw.map(|v| (v - self.center) / self.scale);
        let y = z.map(|v| self.transform.inverse(v));
        (y, z)
    }
}

/// Generate one training replicate: covariates, latent responses (centered
/// and scaled by their sample moments), observed responses through the true
/// inverse transformation, and the truth object for test-set generation.
pub fn gen_response(
    x: &DMatrix<f64>,
    design: &SimDesign,
    rng: &mut impl rand::Rng,
) -> Result<(Dataset, DVector<f64>, SimTruth)> {
    if design.p != x.ncols() || design.n != x.nrows() {
        return Err(Error::Domain("design and covariate shapes disagree".into()));
    }
    if !(design.error_sd > 0.0) {
        return Err(Error::Domain("error_sd must be positive".into()));
    }
    let p = design.p;
    let mut theta = DVector::zeros(p);
    for j in 0..p / 2 {
        theta[j] = 1.0;
    }
    let transform = match design.transform_kind {
        TransformKind::Identity => TrueTransform::Identity,
        TransformKind::BoxCox => TrueTransform::BoxCox { lambda: 0.5 },
        TransformKind::Beta => TrueTransform::Beta,
        TransformKind::Step => sample_step_transform(rng),
    };
    let mut truth = SimTruth {
        theta,
        transform,
        center: 0.0,
        scale: 1.0,
        heteroskedastic: design.heteroskedastic,
        error_sd: design.error_sd,
    };
    let raw = truth.latent_raw(x, rng);
    let mean = raw.mean();
    let sd = (raw.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / (design.n as f64 - 1.0))
        .sqrt()
        .max(1e-12);
    truth.center = mean;
    truth.scale = sd;
    let z = raw.map(|v| (v - mean) / sd);
    let y = z.map(|v| truth.transform.inverse(v));
    let dataset = Dataset::new(x.clone(), y)?;
    Ok((dataset, z, truth))
}
