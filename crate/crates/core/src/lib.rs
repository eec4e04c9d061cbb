//! Monte Carlo engine for semiparametric Bayesian regression.
//!
//! A monotone transformation `g` links the observed response `y` to a latent
//! variable `z` that follows a parametric regression model. The posterior of
//! `g` is targeted through the marginal distributions of the covariates and
//! the response, each modeled with the Bayesian bootstrap, which yields a
//! joint Monte Carlo sampler for `(g, theta, predictive)` without Gibbs
//! blocking between `g` and `theta`.
//!
//! Model families:
//! - [`sblm`]: Gaussian linear regression with a Zellner g-prior,
//! - [`sbqr`]: quantile regression via the asymmetric Laplace expansion,
//! - [`sbgp`]: Gaussian process regression with a Matern kernel.
//!
//! [`simlab`] provides the simulation designs, comparison baselines, and
//! evaluation metrics used by the test harness and the CLI.

pub mod dist;
pub mod error;
pub mod rng;
pub mod sbgp;
pub mod sblm;
pub mod sbqr;
pub mod simlab;
pub mod transform;

pub use error::{Error, Result};

use nalgebra::{DMatrix, DVector};

/// Paired regression data: covariate matrix (n x d, no intercept column)
/// and response vector.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Domain(format!(
                "covariate rows ({}) != response length ({})",
                x.nrows(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset contains non-finite values".into()));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }
}

/// Append a leading column of ones (intercept) to a design matrix.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = DMatrix::zeros(n, x.ncols() + 1);
    for i in 0..n {
        out[(i, 0)] = 1.0;
        for j in 0..x.ncols() {
            out[(i, j + 1)] = x[(i, j)];
        }
    }
    out
}
