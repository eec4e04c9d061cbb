//! Transformation machinery.
//!
//! A draw of the transformation is built from two Bayesian-bootstrap draws:
//! a Dirichlet-weighted empirical CDF of the response and a Dirichlet-weighted
//! mixture of per-observation latent CDFs. Composing the inverse of the
//! mixture with the rescaled empirical CDF gives monotone knot values, which
//! are then smoothed with a Fritsch-Carlson monotone cubic interpolant for
//! predictive inversion.

use crate::dist::{
    normal_pdf, sample_dirichlet_flat, std_normal_cdf, std_normal_quantile,
};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

// ---------------------------------------------------------------------------
// Empirical CDF of the response (Dirichlet-weighted step function)
// ---------------------------------------------------------------------------

/// Weighted step-function CDF on the observed response atoms. Tied values are
/// merged by summing their weights, so atoms are strictly increasing.
#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    cum: Vec<f64>,
}

impl EmpiricalCdf {
    /// Build from raw values and per-observation weights (summing to one).
    pub fn from_weighted(values: &[f64], weights: &[f64]) -> Result<Self> {
        if values.len() != weights.len() || values.is_empty() {
            return Err(Error::Domain(
                "values and weights must be non-empty and of equal length".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite response value".into()));
        }
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut atoms: Vec<f64> = Vec::with_capacity(values.len());
        let mut w: Vec<f64> = Vec::with_capacity(values.len());
        for &i in &idx {
            if let Some(last) = atoms.last() {
                if *last == values[i] {
                    *w.last_mut().unwrap() += weights[i];
                    continue;
                }
            }
            atoms.push(values[i]);
            w.push(weights[i]);
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("weights must sum to 1, got {total}")));
        }
        let mut cum = Vec::with_capacity(w.len());
        let mut acc = 0.0;
        for &wi in &w {
            acc += wi;
            cum.push(acc);
        }
        *cum.last_mut().unwrap() = total; // avoid rounding past the total
        Ok(Self {
            atoms,
            weights: w,
            cum,
        })
    }

    /// Flat-weight empirical CDF (weight 1/n on each observation).
    pub fn flat(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::from_weighted(values, &vec![1.0 / n as f64; n])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cumulative weight at each atom (value of the CDF there).
    pub fn cumulative(&self) -> &[f64] {
        &self.cum
    }

    /// Right-continuous evaluation: sum of weights of atoms <= t.
    pub fn evaluate(&self, t: f64) -> f64 {
        let k = self.atoms.partition_point(|&a| a <= t);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }
}

/// Bayesian-bootstrap draw of the response CDF: Dirichlet(1,...,1) weights on
/// the observed atoms, ties merged.
pub fn sample_fy(y: &[f64], rng: &mut impl rand::Rng) -> Result<EmpiricalCdf> {
    if y.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 observations, got {}",
            y.len()
        )));
    }
    let w = sample_dirichlet_flat(y.len(), rng)?;
    EmpiricalCdf::from_weighted(y, &w)
}

// ---------------------------------------------------------------------------
// Latent mixture CDF
// ---------------------------------------------------------------------------

/// Equal-weight mixture of normal CDFs (one per latent scenario).
#[derive(Debug, Clone)]
pub struct NormalMixture {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl NormalMixture {
    pub fn cdf(&self, t: f64) -> f64 {
        let s: f64 = self
            .means
            .iter()
            .zip(&self.sds)
            .map(|(&m, &sd)| std_normal_cdf((t - m) / sd))
            .sum();
        s / self.means.len() as f64
    }

    pub fn pdf(&self, t: f64) -> f64 {
        let s: f64 = self
            .means
            .iter()
            .zip(&self.sds)
            .map(|(&m, &sd)| normal_pdf(t, m, sd))
            .sum();
        s / self.means.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.means.iter().sum::<f64>() / self.means.len() as f64
    }

    pub fn var(&self) -> f64 {
        let m = self.mean();
        let second: f64 = self
            .means
            .iter()
            .zip(&self.sds)
            .map(|(&mu, &sd)| sd * sd + mu * mu)
            .sum::<f64>()
            / self.means.len() as f64;
        (second - m * m).max(0.0)
    }
}

/// CDF values precomputed on a uniform grid, with exact mixture evaluation
/// outside the grid. Linear interpolation keeps the evaluator continuous and
/// nondecreasing; used to amortize large per-observation mixtures.
#[derive(Debug, Clone)]
pub struct TabulatedCdf {
    lo: f64,
    step: f64,
    values: Vec<f64>,
    exact: NormalMixture,
}

impl TabulatedCdf {
    pub fn build(mixture: NormalMixture, lo: f64, hi: f64, points: usize) -> Self {
        let step = (hi - lo) / (points - 1) as f64;
        let values = (0..points)
            .map(|k| mixture.cdf(lo + step * k as f64))
            .collect();
        Self {
            lo,
            step,
            values,
            exact: mixture,
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let u = (t - self.lo) / self.step;
        if u < 0.0 || u >= (self.values.len() - 1) as f64 {
            return self.exact.cdf(t);
        }
        let k = u as usize;
        let frac = u - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    /// Derivative of the tabulated evaluator (piecewise constant).
    pub fn pdf(&self, t: f64) -> f64 {
        let u = (t - self.lo) / self.step;
        if u < 0.0 || u >= (self.values.len() - 1) as f64 {
            return self.exact.pdf(t);
        }
        let k = u as usize;
        (self.values[k + 1] - self.values[k]) / self.step
    }
}

/// A per-observation latent CDF evaluator.
#[derive(Debug, Clone)]
pub enum CdfComponent {
    Normal { mean: f64, sd: f64 },
    Mixture(NormalMixture),
    Tabulated(TabulatedCdf),
}

impl CdfComponent {
    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            CdfComponent::Normal { mean, sd } => std_normal_cdf((t - mean) / sd),
            CdfComponent::Mixture(m) => m.cdf(t),
            CdfComponent::Tabulated(tab) => tab.cdf(t),
        }
    }

    pub fn pdf(&self, t: f64) -> f64 {
        match self {
            CdfComponent::Normal { mean, sd } => normal_pdf(t, *mean, *sd),
            CdfComponent::Mixture(m) => m.pdf(t),
            CdfComponent::Tabulated(tab) => tab.pdf(t),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            CdfComponent::Normal { mean, .. } => *mean,
            CdfComponent::Mixture(m) => m.mean(),
            CdfComponent::Tabulated(tab) => tab.exact.mean(),
        }
    }

    pub fn var(&self) -> f64 {
        match self {
            CdfComponent::Normal { sd, .. } => sd * sd,
            CdfComponent::Mixture(m) => m.var(),
            CdfComponent::Tabulated(tab) => tab.exact.var(),
        }
    }
}

/// Dirichlet-weighted mixture over per-observation latent CDFs.
#[derive(Debug, Clone)]
pub struct MixtureCdf<'a> {
    weights: Vec<f64>,
    components: &'a [CdfComponent],
}

impl<'a> MixtureCdf<'a> {
    pub fn new(weights: Vec<f64>, components: &'a [CdfComponent]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("mixture needs at least one component".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::Domain(format!(
                "weights ({}) and components ({}) length mismatch",
                weights.len(),
                components.len()
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Domain(format!(
                "mixture weights must be nonnegative and sum to 1, got {total}"
            )));
        }
        Ok(Self {
            weights,
            components,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.components)
            .map(|(&w, c)| w * c.cdf(t))
            .sum()
    }

    pub fn density(&self, t: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.components)
            .map(|(&w, c)| w * c.pdf(t))
            .sum()
    }

    /// Weighted mixture mean.
    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(self.components)
            .map(|(&w, c)| w * c.mean())
            .sum()
    }

    /// Weighted mixture standard deviation.
    pub fn sd(&self) -> f64 {
        let m = self.mean();
        let second: f64 = self
            .weights
            .iter()
            .zip(self.components)
            .map(|(&w, c)| {
                let mu = c.mean();
                w * (c.var() + mu * mu)
            })
            .sum();
        (second - m * m).max(1e-300).sqrt()
    }

    /// Solve `evaluate(t) = p`. Bracket from the weighted moments with
    /// geometric expansion, then safeguarded Newton/bisection.
    pub fn invert(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "invert_mixture requires p in (0,1), got {p}"
            )));
        }
        let m = self.mean();
        let s = self.sd().max(1e-12);
        let mut lo = m - 8.0 * s;
        let mut hi = m + 8.0 * s;
        let mut width = 8.0 * s;
        while self.evaluate(lo) > p {
            width *= 2.0;
            lo = m - width;
        }
        while self.evaluate(hi) < p {
            width *= 2.0;
            hi = m + width;
        }
        Ok(self.solve_bracketed(p, lo, hi))
    }

    /// Like [`Self::invert`] but with a known lower bound (used when solving
    /// an increasing sequence of probabilities).
    fn invert_from(&self, p: f64, lo_hint: f64) -> f64 {
        let s = self.sd().max(1e-12);
        let mut hi = lo_hint + s;
        let mut width = s;
        while self.evaluate(hi) < p {
            width *= 2.0;
            hi = lo_hint + width;
        }
        self.solve_bracketed(p, lo_hint, hi)
    }

    fn solve_bracketed(&self, p: f64, mut lo: f64, mut hi: f64) -> f64 {
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.evaluate(x) - p;
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if f.abs() < 1e-13 || hi - lo < 1e-13 * (1.0 + x.abs()) {
                break;
            }
            let d = self.density(x);
            let newton = x - f / d;
            x = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        x
    }
}

/// Bayesian-bootstrap draw of the latent CDF: Dirichlet(1,...,1) weights over
/// the per-observation components.
pub fn sample_fz<'a>(
    components: &'a [CdfComponent],
    rng: &mut impl rand::Rng,
) -> Result<MixtureCdf<'a>> {
    if components.is_empty() {
        return Err(Error::Domain("empty component list".into()));
    }
    let w = sample_dirichlet_flat(components.len(), rng)?;
    MixtureCdf::new(w, components)
}

/// Solve `F.evaluate(t) = p` for a mixture CDF (exposed for oracles).
pub fn invert_mixture(f: &MixtureCdf<'_>, p: f64) -> Result<f64> {
    f.invert(p)
}

// ---------------------------------------------------------------------------
// Monotone map (Fritsch-Carlson interpolant)
// ---------------------------------------------------------------------------

/// Behavior of a [`MonotoneMap`] outside its knot range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    /// Queries clamp to the endpoint knots (predictive support is the
    /// observed response range).
    Clamp,
    /// Linear tails with the boundary interpolant slope.
    LinearTail,
}

/// A sampled transformation: monotone knots with a C1 monotone cubic Hermite
/// interpolant for forward and inverse evaluation.
#[derive(Debug, Clone)]
pub struct MonotoneMap {
    knots_t: Vec<f64>,
    knots_g: Vec<f64>,
    slopes: Vec<f64>,
    extension: Extension,
}

/// Fritsch-Carlson limited slopes for monotone data.
fn fritsch_carlson_slopes(t: &[f64], g: &[f64]) -> Vec<f64> {
    let n = t.len();
    let h: Vec<f64> = (0..n - 1).map(|i| t[i + 1] - t[i]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (g[i + 1] - g[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    // interior: weighted harmonic mean, zero across sign changes or flats
    for i in 1..n - 1 {
        let (dl, dr) = (delta[i - 1], delta[i]);
        if dl == 0.0 || dr == 0.0 || dl.signum() != dr.signum() {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / dl + w2 / dr);
        }
    }
    // one-sided three-point endpoint slopes with the usual limiters
    let endpoint = |h0: f64, h1: f64, del0: f64, del1: f64| -> f64 {
        let mut s = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
        if s.signum() != del0.signum() {
            s = 0.0;
        } else if del0.signum() != del1.signum() && s.abs() > 3.0 * del0.abs() {
            s = 3.0 * del0;
        }
        s
    };
    d[0] = endpoint(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = endpoint(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// Fit a monotone C1 cubic Hermite interpolant through monotone knots.
pub fn fit_monotone_interpolant(knots_t: &[f64], knots_g: &[f64]) -> Result<MonotoneMap> {
    fit_monotone_interpolant_ext(knots_t, knots_g, Extension::Clamp)
}

pub fn fit_monotone_interpolant_ext(
    knots_t: &[f64],
    knots_g: &[f64],
    extension: Extension,
) -> Result<MonotoneMap> {
    if knots_t.len() < 2 || knots_t.len() != knots_g.len() {
        return Err(Error::Domain(format!(
            "need >= 2 matching knots, got {} and {}",
            knots_t.len(),
            knots_g.len()
        )));
    }
    if knots_t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("knot locations must be strictly increasing".into()));
    }
    if knots_g.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("knot values must be nondecreasing".into()));
    }
    if knots_g.iter().any(|v| !v.is_finite()) || knots_t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("knots must be finite".into()));
    }
    let slopes = fritsch_carlson_slopes(knots_t, knots_g);
    Ok(MonotoneMap {
        knots_t: knots_t.to_vec(),
        knots_g: knots_g.to_vec(),
        slopes,
        extension,
    })
}

impl MonotoneMap {
    pub fn knots_t(&self) -> &[f64] {
        &self.knots_t
    }

    pub fn knots_g(&self) -> &[f64] {
        &self.knots_g
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn with_extension(mut self, extension: Extension) -> Self {
        self.extension = extension;
        self
    }

    fn n(&self) -> usize {
        self.knots_t.len()
    }

    /// Hermite evaluation inside cell `j` at location `t`.
    fn eval_cell(&self, j: usize, t: f64) -> f64 {
        let h = self.knots_t[j + 1] - self.knots_t[j];
        let s = (t - self.knots_t[j]) / h;
        let (g0, g1) = (self.knots_g[j], self.knots_g[j + 1]);
        let (d0, d1) = (self.slopes[j] * h, self.slopes[j + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        g0 * (2.0 * s3 - 3.0 * s2 + 1.0)
            + d0 * (s3 - 2.0 * s2 + s)
            + g1 * (-2.0 * s3 + 3.0 * s2)
            + d1 * (s3 - s2)
    }

    /// Forward evaluation g(t).
    pub fn forward(&self, t: f64) -> f64 {
        let n = self.n();
        if t <= self.knots_t[0] {
            return match self.extension {
                Extension::Clamp => self.knots_g[0],
                Extension::LinearTail => self.knots_g[0] + self.slopes[0] * (t - self.knots_t[0]),
            };
        }
        if t >= self.knots_t[n - 1] {
            return match self.extension {
                Extension::Clamp => self.knots_g[n - 1],
                Extension::LinearTail => {
                    self.knots_g[n - 1] + self.slopes[n - 1] * (t - self.knots_t[n - 1])
                }
            };
        }
        let j = self.knots_t.partition_point(|&k| k <= t) - 1;
        self.eval_cell(j, t)
    }

    pub fn forward_many(&self, ts: &[f64]) -> Vec<f64> {
        ts.iter().map(|&t| self.forward(t)).collect()
    }

    /// Inverse evaluation: `t` with `forward(t) = z`. Values of `z` outside
    /// the knot value range clamp to the endpoint knots (or follow the linear
    /// tails when that extension is selected).
    pub fn inverse(&self, z: f64) -> f64 {
        let n = self.n();
        if z <= self.knots_g[0] {
            return match self.extension {
                Extension::Clamp => self.knots_t[0],
                Extension::LinearTail => {
                    if self.slopes[0] > 0.0 {
                        self.knots_t[0] + (z - self.knots_g[0]) / self.slopes[0]
                    } else {
                        self.knots_t[0]
                    }
                }
            };
        }
        if z >= self.knots_g[n - 1] {
            return match self.extension {
                Extension::Clamp => self.knots_t[n - 1],
                Extension::LinearTail => {
                    if self.slopes[n - 1] > 0.0 {
                        self.knots_t[n - 1] + (z - self.knots_g[n - 1]) / self.slopes[n - 1]
                    } else {
                        self.knots_t[n - 1]
                    }
                }
            };
        }
        // locate the cell whose value range contains z
        let j = self
            .knots_g
            .partition_point(|&g| g <= z)
            .min(n - 1)
            .max(1)
            - 1;
        let (mut lo, mut hi) = (self.knots_t[j], self.knots_t[j + 1]);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.eval_cell(j, mid) < z {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 * (1.0 + lo.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Serialize as CSV: one header comment carrying the extension policy,
    /// then `knot_t,knot_g` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(match self.extension {
            Extension::Clamp => "# extension=clamp\n",
            Extension::LinearTail => "# extension=linear\n",
        });
        out.push_str("knot_t,knot_g\n");
        for (t, g) in self.knots_t.iter().zip(&self.knots_g) {
            out.push_str(&format!("{t:.17e},{g:.17e}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut extension = Extension::Clamp;
        let mut t = Vec::new();
        let mut g = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line == "knot_t,knot_g" {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if rest.trim() == "extension=linear" {
                    extension = Extension::LinearTail;
                }
                continue;
            }
            let mut parts = line.split(',');
            let (a, b) = (parts.next(), parts.next());
            match (a, b) {
                (Some(a), Some(b)) => {
                    t.push(a.trim().parse::<f64>().map_err(|e| {
                        Error::Domain(format!("bad knot value '{a}': {e}"))
                    })?);
                    g.push(b.trim().parse::<f64>().map_err(|e| {
                        Error::Domain(format!("bad knot value '{b}': {e}"))
                    })?);
                }
                _ => return Err(Error::Domain(format!("malformed knot row '{line}'"))),
            }
        }
        fit_monotone_interpolant_ext(&t, &g, extension)
    }
}

/// Compose a latent mixture draw with a response CDF draw into a sampled
/// transformation: knots at the response atoms, values
/// `Fz^-1( n/(n+1) * Fy(t_j) )`. The `n/(n+1)` rescale keeps the largest atom
/// finite; `n` is the sample size before tie merging.
pub fn compose_transform(
    fz: &MixtureCdf<'_>,
    fy: &EmpiricalCdf,
    n: usize,
) -> Result<MonotoneMap> {
    if n < 2 {
        return Err(Error::InsufficientData(format!("sample size {n} < 2")));
    }
    if fy.atoms().len() < 2 {
        return Err(Error::InsufficientData(
            "need at least 2 distinct response atoms".into(),
        ));
    }
    let scale = n as f64 / (n as f64 + 1.0);
    let mut knots_g = Vec::with_capacity(fy.atoms().len());
    let mut prev: Option<f64> = None;
    for &c in fy.cumulative() {
        let p = scale * c;
        let z = match prev {
            None => fz.invert(p)?,
            Some(lo) => fz.invert_from(p, lo),
        };
        // monotone by construction; guard against rounding inversions
        let z = match prev {
            Some(lo) if z < lo => lo,
            _ => z,
        };
        prev = Some(z);
        knots_g.push(z);
    }
    fit_monotone_interpolant(fy.atoms(), &knots_g)
}

/// Apply the location-scale law: the transformation that uses the latent
/// distribution of `mu + sigma * Z` is `mu + sigma * g`.
pub fn location_scale_map(g: &MonotoneMap, mu: f64, sigma: f64) -> Result<MonotoneMap> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!(
            "location_scale_map requires sigma > 0, got {sigma}"
        )));
    }
    let knots_g: Vec<f64> = g.knots_g.iter().map(|&v| mu + sigma * v).collect();
    fit_monotone_interpolant_ext(&g.knots_t, &knots_g, g.extension)
}

// ---------------------------------------------------------------------------
// Approximate posterior of theta used to build the latent components
// ---------------------------------------------------------------------------

/// Where the approximation of `p(theta | data)` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproxSource {
    /// The prior itself (always available, no extra computation).
    Prior,
    /// A data-driven plug-in (Laplace approximation or point-estimate fit).
    LaplacePlugin,
    /// A point mass at an estimate (zero covariance).
    PointMass,
}

/// Gaussian approximation N(mean, cov) of the theta posterior.
#[derive(Debug, Clone)]
pub struct ApproxPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub source: ApproxSource,
}

impl ApproxPosterior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, source: ApproxSource) -> Result<Self> {
        if cov.nrows() != cov.ncols() || cov.nrows() != mean.len() {
            return Err(Error::Domain("approximation dimensions mismatch".into()));
        }
        let scale = cov.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
        for i in 0..cov.nrows() {
            for j in (i + 1)..cov.ncols() {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::Domain("covariance must be symmetric".into()));
                }
            }
        }
        Ok(Self { mean, cov, source })
    }

    /// Quadratic form x' cov x.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        (&self.cov * x).dot(x)
    }
}

// ---------------------------------------------------------------------------
// Two-stage point estimate of the transformation
// ---------------------------------------------------------------------------

/// Two-stage fixed transformation: stage one composes the standard normal
/// latent CDF with the empirical response CDF and fits the approximation of
/// `p(theta | data)` on the transformed data; stage two rebuilds the latent
/// CDF as the flat average of the per-observation components implied by that
/// approximation and recomputes both.
///
/// `fzx_builder` maps an approximation to the per-observation latent CDFs;
/// `approx_update` fits the data-driven approximation from transformed
/// responses. When the prior is the requested source, `approx_update` is
/// never called and the prior is used throughout.
pub fn point_estimate_transform<FB, AU>(
    y: &[f64],
    prior: &ApproxPosterior,
    mut fzx_builder: FB,
    mut approx_update: AU,
) -> Result<(MonotoneMap, ApproxPosterior)>
where
    FB: FnMut(&ApproxPosterior) -> Result<Vec<CdfComponent>>,
    AU: FnMut(&[f64]) -> Result<ApproxPosterior>,
{
    let n = y.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("sample size {n} < 2")));
    }
    let fy = EmpiricalCdf::flat(y)?;
    let scale = n as f64 / (n as f64 + 1.0);

    // stage 1: standard normal latent CDF
    let g1_vals: Vec<f64> = fy
        .cumulative()
        .iter()
        .map(|&c| std_normal_quantile(scale * c))
        .collect();
    let g1 = fit_monotone_interpolant(fy.atoms(), &g1_vals)?;
    let approx1 = match prior.source {
        ApproxSource::Prior => prior.clone(),
        _ => approx_update(&g1.forward_many(y))?,
    };

    // stage 2: flat average of the implied per-observation components
    let components = fzx_builder(&approx1)?;
    let flat = vec![1.0 / components.len() as f64; components.len()];
    let fz = MixtureCdf::new(flat, &components)?;
    let g2 = compose_transform(&fz, &fy, n)?;
    let approx2 = match prior.source {
        ApproxSource::Prior => prior.clone(),
        _ => approx_update(&g2.forward_many(y))?,
    };
    Ok((g2, approx2))
}

// ---------------------------------------------------------------------------
// Sampling importance resampling
// ---------------------------------------------------------------------------

/// Effective sample size of a set of log importance weights.
pub fn effective_sample_size(log_weights: &[f64]) -> f64 {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return 0.0;
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for &lw in log_weights {
        let w = (lw - max).exp();
        sum += w;
        sum_sq += w * w;
    }
    sum * sum / sum_sq
}

/// Draw `s_star` indices with replacement, with probability proportional to
/// the (normalized) importance weights. Returns the index multiset and the
/// effective sample size of the weights.
pub fn sir_resample(
    log_weights: &[f64],
    s_star: usize,
    rng: &mut impl rand::Rng,
) -> Result<(Vec<usize>, f64)> {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let weights: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let ess = effective_sample_size(log_weights);
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in &weights {
        acc += w;
        cum.push(acc);
    }
    let total = acc;
    let indices = (0..s_star)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            cum.partition_point(|&c| c < u).min(weights.len() - 1)
        })
        .collect();
    Ok((indices, ess))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{std_normal_cdf, std_normal_quantile};
    use crate::rng::master;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng as _;

    #[test]
    fn empirical_cdf_merges_ties() {
        let f = EmpiricalCdf::from_weighted(&[2.0, 1.0, 2.0, 3.0], &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(f.atoms(), &[1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(f.weights()[1], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(f.evaluate(0.5), 0.0);
        assert_abs_diff_eq!(f.evaluate(2.0), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(f.evaluate(10.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn bootstrap_weights_average_to_flat() {
        let y = [0.0, 1.0, 2.0, 3.0, 4.0];
        let mut rng = master(11);
        let mut mean_w0 = 0.0;
        let reps = 4000;
        for _ in 0..reps {
            let f = sample_fy(&y, &mut rng).unwrap();
            mean_w0 += f.weights()[0];
        }
        mean_w0 /= reps as f64;
        // E[w_i] = 1/n for Dirichlet(1,...,1); MC error ~ sd/sqrt(R) ~ 0.0026
        assert_abs_diff_eq!(mean_w0, 0.2, epsilon = 0.01);
    }

    #[test]
    fn mixture_cdf_is_weighted_sum() {
        let comps = [
            CdfComponent::Normal { mean: -1.0, sd: 1.0 },
            CdfComponent::Normal { mean: 1.0, sd: 1.0 },
        ];
        let f = MixtureCdf::new(vec![0.3, 0.7], &comps).unwrap();
        // 0.3*Phi(1) + 0.7*Phi(-1) with Phi(1) = 0.8413447460685429
        let expect = 0.3 * 0.8413447460685429 + 0.7 * 0.15865525393145705;
        assert_abs_diff_eq!(f.evaluate(0.0), expect, epsilon = 1e-10);
    }

    #[test]
    fn invert_single_normal_hits_known_quantile() {
        let comps = [CdfComponent::Normal { mean: 0.0, sd: 1.0 }];
        let f = MixtureCdf::new(vec![1.0], &comps).unwrap();
        assert_abs_diff_eq!(f.invert(0.975).unwrap(), 1.959963984540054, epsilon = 1e-9);
        assert_abs_diff_eq!(f.invert(0.5).unwrap(), 0.0, epsilon = 1e-10);
        assert!(f.invert(0.0).is_err());
        assert!(f.invert(1.0).is_err());
    }

    /// Plain interval bisection, no smarts: the oracle for the mixture solver.
    fn bisect_oracle(f: &MixtureCdf<'_>, p: f64) -> f64 {
        let (mut lo, mut hi) = (-1e3, 1e3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f.evaluate(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn invert_matches_bisection_oracle() {
        let mut rng = master(23);
        for _ in 0..20 {
            let comps: Vec<CdfComponent> = (0..5)
                .map(|_| CdfComponent::Normal {
                    mean: rng.gen_range(-4.0..4.0),
                    sd: rng.gen_range(0.2..3.0),
                })
                .collect();
            let w = crate::dist::sample_dirichlet_flat(5, &mut rng).unwrap();
            let f = MixtureCdf::new(w, &comps).unwrap();
            for &p in &[0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99] {
                let got = invert_mixture(&f, p).unwrap();
                let want = bisect_oracle(&f, p);
                assert_abs_diff_eq!(got, want, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn compose_with_standard_normal_latent_matches_quantiles() {
        // flat weights on both sides: knot values must equal
        // Phi^-1( n/(n+1) * k/n ) at the sorted atoms
        let n = 12;
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() * 3.0 + i as f64 * 0.01).collect();
        let comps: Vec<CdfComponent> =
            (0..n).map(|_| CdfComponent::Normal { mean: 0.0, sd: 1.0 }).collect();
        let fz = MixtureCdf::new(vec![1.0 / n as f64; n], &comps).unwrap();
        let fy = EmpiricalCdf::flat(&y).unwrap();
        let g = compose_transform(&fz, &fy, n).unwrap();
        let scale = n as f64 / (n as f64 + 1.0);
        for (k, &gv) in g.knots_g().iter().enumerate() {
            let want = std_normal_quantile(scale * (k + 1) as f64 / n as f64);
            assert_abs_diff_eq!(gv, want, epsilon = 1e-8);
        }
    }

    #[test]
    fn compose_random_draw_is_finite_and_monotone() {
        let mut rng = master(31);
        let n = 30;
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let comps: Vec<CdfComponent> = (0..n)
            .map(|_| CdfComponent::Normal {
                mean: rng.gen_range(-2.0..2.0),
                sd: rng.gen_range(0.5..2.0),
            })
            .collect();
        for _ in 0..50 {
            let fz = sample_fz(&comps, &mut rng).unwrap();
            let fy = sample_fy(&y, &mut rng).unwrap();
            let g = compose_transform(&fz, &fy, n).unwrap();
            assert!(g.knots_g().iter().all(|v| v.is_finite()));
            assert!(g.knots_g().windows(2).all(|w| w[1] >= w[0]));
            // interpolated values stay inside the knot value range on a grid
            let (lo, hi) = (g.knots_t()[0], *g.knots_t().last().unwrap());
            for k in 0..=100 {
                let t = lo + (hi - lo) * k as f64 / 100.0;
                let v = g.forward(t);
                assert!(v >= g.knots_g()[0] - 1e-12 && v <= *g.knots_g().last().unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn interpolant_reproduces_linear_data_exactly() {
        let t = [0.0, 0.5, 1.2, 3.0];
        let g: Vec<f64> = t.iter().map(|&v| 2.0 * v - 1.0).collect();
        let m = fit_monotone_interpolant(&t, &g).unwrap();
        for k in 0..=60 {
            let x = 3.0 * k as f64 / 60.0;
            assert_abs_diff_eq!(m.forward(x), 2.0 * x - 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn interpolant_does_not_overshoot_flat_segment() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let g = [0.0, 1.0, 1.0, 2.0];
        let m = fit_monotone_interpolant(&t, &g).unwrap();
        for k in 0..=40 {
            let x = 1.0 + k as f64 / 40.0;
            let v = m.forward(x);
            assert!((1.0 - 1e-12..=1.0 + 1e-12).contains(&v), "overshoot at {x}: {v}");
        }
    }

    #[test]
    fn interpolant_tracks_cubic() {
        let t: Vec<f64> = (0..21).map(|k| -1.0 + k as f64 / 10.0).collect();
        let g: Vec<f64> = t.iter().map(|&v| v * v * v).collect();
        let m = fit_monotone_interpolant(&t, &g).unwrap();
        for k in 0..=200 {
            let x = -1.0 + k as f64 / 100.0;
            assert_abs_diff_eq!(m.forward(x), x * x * x, epsilon = 1e-2);
        }
    }

    #[test]
    fn interpolant_rejects_bad_knots() {
        assert!(fit_monotone_interpolant(&[0.0, 0.0], &[0.0, 1.0]).is_err());
        assert!(fit_monotone_interpolant(&[0.0, 1.0], &[1.0, 0.0]).is_err());
        assert!(fit_monotone_interpolant(&[0.0], &[0.0]).is_err());
    }

    #[test]
    fn inverse_round_trips_and_clamps() {
        let t = [0.0, 1.0, 2.5, 4.0];
        let g = [-2.0, -0.5, 0.7, 3.0];
        let m = fit_monotone_interpolant(&t, &g).unwrap();
        for k in 0..=40 {
            let x = 4.0 * k as f64 / 40.0;
            let z = m.forward(x);
            assert_abs_diff_eq!(m.inverse(z), x, epsilon = 1e-9);
        }
        // clamp outside the knot value range
        assert_abs_diff_eq!(m.inverse(-10.0), 0.0);
        assert_abs_diff_eq!(m.inverse(10.0), 4.0);
        assert_abs_diff_eq!(m.forward(-3.0), -2.0);
        assert_abs_diff_eq!(m.forward(9.0), 3.0);
        // linear tails continue with the boundary slope
        let lin = m.clone().with_extension(Extension::LinearTail);
        let s0 = (lin.forward(0.0 + 1e-7) - lin.forward(0.0)) / 1e-7;
        assert_abs_diff_eq!(lin.forward(-1.0), -2.0 - s0, epsilon = 1e-5);
        assert_abs_diff_eq!(lin.inverse(lin.forward(-1.0)), -1.0, epsilon = 1e-9);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = [0.0, 1.0, 2.5, 4.0];
        let g = [-2.0, -0.5, 0.7, 3.0];
        let m = fit_monotone_interpolant_ext(&t, &g, Extension::LinearTail).unwrap();
        let m2 = MonotoneMap::from_csv(&m.to_csv()).unwrap();
        assert_eq!(m.knots_t(), m2.knots_t());
        assert_eq!(m.knots_g(), m2.knots_g());
        assert_eq!(m2.extension(), Extension::LinearTail);
        assert!(MonotoneMap::from_csv("knot_t,knot_g\n1.0\n").is_err());
        assert!(MonotoneMap::from_csv("knot_t,knot_g\n1.0,abc\n").is_err());
    }

    #[test]
    fn location_scale_commutes_with_forward() {
        let t = [0.0, 1.0, 2.5, 4.0, 5.5];
        let g = [-2.0, -0.5, 0.7, 3.0, 3.2];
        let m = fit_monotone_interpolant(&t, &g).unwrap();
        let shifted = location_scale_map(&m, 1.5, 2.0).unwrap();
        for k in 0..=55 {
            let x = 5.5 * k as f64 / 55.0;
            assert_abs_diff_eq!(shifted.forward(x), 1.5 + 2.0 * m.forward(x), epsilon = 1e-12);
        }
        assert!(location_scale_map(&m, 0.0, 0.0).is_err());
    }

    #[test]
    fn point_estimate_prior_source_skips_update() {
        let n = 15;
        let y: Vec<f64> = (0..n).map(|i| (i as f64).sqrt()).collect();
        let prior = ApproxPosterior::new(
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            ApproxSource::Prior,
        )
        .unwrap();
        let comps: Vec<CdfComponent> =
            (0..n).map(|_| CdfComponent::Normal { mean: 0.0, sd: 1.0 }).collect();
        let (g, approx) = point_estimate_transform(
            &y,
            &prior,
            |_| Ok(comps.clone()),
            |_| panic!("prior source must not trigger the update"),
        )
        .unwrap();
        assert_eq!(approx.source, ApproxSource::Prior);
        // standard normal components: knots are rescaled normal quantiles
        let scale = n as f64 / (n as f64 + 1.0);
        for (k, &gv) in g.knots_g().iter().enumerate() {
            let want = std_normal_quantile(scale * (k + 1) as f64 / n as f64);
            assert_abs_diff_eq!(gv, want, epsilon = 1e-8);
        }
    }

    #[test]
    fn point_estimate_runs_update_twice_for_plugin() {
        let y: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let prior = ApproxPosterior::new(
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            ApproxSource::LaplacePlugin,
        )
        .unwrap();
        let comps: Vec<CdfComponent> =
            (0..10).map(|_| CdfComponent::Normal { mean: 0.0, sd: 1.0 }).collect();
        let mut calls = 0usize;
        let (_, approx) = point_estimate_transform(
            &y,
            &prior,
            |_| Ok(comps.clone()),
            |z| {
                calls += 1;
                assert!(z.iter().all(|v| v.is_finite()));
                ApproxPosterior::new(
                    DVector::zeros(1),
                    DMatrix::identity(1, 1),
                    ApproxSource::LaplacePlugin,
                )
            },
        )
        .unwrap();
        assert_eq!(calls, 2);
        assert_eq!(approx.source, ApproxSource::LaplacePlugin);
    }

    #[test]
    fn ess_of_flat_weights_is_the_count() {
        assert_abs_diff_eq!(effective_sample_size(&[0.0; 40]), 40.0, epsilon = 1e-10);
        // shifting all log weights changes nothing
        assert_abs_diff_eq!(effective_sample_size(&[500.0; 40]), 40.0, epsilon = 1e-10);
        // one dominant weight drives the ESS toward 1
        let mut lw = vec![0.0; 40];
        lw[0] = 40.0;
        assert!(effective_sample_size(&lw) < 1.0 + 1e-10);
        assert_eq!(effective_sample_size(&[f64::NEG_INFINITY; 3]), 0.0);
    }

    #[test]
    fn sir_respects_weights_and_excludes_zero_mass() {
        let mut rng = master(47);
        let lw = [2.0f64.ln(), 0.0, 0.0, f64::NEG_INFINITY];
        let reps = 20000;
        let mut count0 = 0usize;
        for _ in 0..reps {
            let (idx, ess) = sir_resample(&lw, 1, &mut rng).unwrap();
            assert_ne!(idx[0], 3);
            assert!(ess > 0.0);
            if idx[0] == 0 {
                count0 += 1;
            }
        }
        let freq = count0 as f64 / reps as f64;
        assert_abs_diff_eq!(freq, 0.5, epsilon = 0.02);
        assert!(matches!(
            sir_resample(&[f64::NEG_INFINITY; 2], 1, &mut rng),
            Err(Error::DegenerateWeights)
        ));
    }

    proptest! {
        #[test]
        fn forward_is_nondecreasing(
            raw in proptest::collection::vec(0.01f64..2.0, 3..12),
            seedling in 0u64..1000,
        ) {
            // build strictly increasing t and nondecreasing g from increments
            let mut t = vec![0.0];
            let mut g = vec![0.0];
            for (k, &d) in raw.iter().enumerate() {
                t.push(t.last().unwrap() + d);
                let gd = if (k + seedling as usize) % 3 == 0 { 0.0 } else { d * 1.7 };
                g.push(g.last().unwrap() + gd);
            }
            let m = fit_monotone_interpolant(&t, &g).unwrap();
            let hi = *t.last().unwrap();
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=300 {
                let x = -0.5 + (hi + 1.0) * k as f64 / 300.0;
                let v = m.forward(x);
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }
}
