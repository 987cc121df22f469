//! Spectral filtering for robust means, mixture mean/covariance, isotropic position and
//! robust Hermite coefficients.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{flatten, sqrt_and_inv_sqrt, unflatten, FlattenedSymmetric, Gaussian, GaussianMixture};
use crate::hermite::{factorial_f64, hermite_features};
use crate::poly::{monomials_of_degree, FloatPoly, Monomial};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Stop once the top eigenvalue is at most `cov_bound (1 + stop_c eps)`.
    pub stop_c: f64,
    pub max_iter: usize,
    /// Abort when removed mass exceeds `abort_factor * eps`.
    pub abort_factor: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { stop_c: 10.0, max_iter: 500, abort_factor: 4.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustEstimate {
    pub value: Vec<f64>,
    pub iterations: usize,
    pub removed_fraction: f64,
    /// Top eigenvalue of the weighted covariance at each iteration.
    pub spectral_trace: Vec<f64>,
    /// Final per-point weights in `[0, 1]`.
    pub weights: Vec<f64>,
}

fn weighted_moments(points: &[DVector<f64>], w: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let dim = points[0].len();
    let total: f64 = w.iter().sum();
    let mut mu = DVector::zeros(dim);
    for (p, &wi) in points.iter().zip(w) {
        if wi > 0.0 {
            mu.axpy(wi / total, p, 1.0);
        }
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for (p, &wi) in points.iter().zip(w) {
        if wi > 0.0 {
            let c = p - &mu;
            cov.ger(wi / total, &c, &c, 1.0);
        }
    }
    (mu, cov)
}

fn top_eigen(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let e = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let i = e.eigenvalues.imax();
    (e.eigenvalues[i], e.eigenvectors.column(i).into_owned())
}

/// Filter on arbitrary feature vectors whose inlier covariance is at most `cov_bound`.
///
/// Each round scores points by squared deviation along the top eigenvector and scales
/// weights by `1 - score / max score`.
pub fn filter_mean(points: &[Vec<f64>], eps: f64, cov_bound: f64, cfg: &FilterConfig) -> Result<RobustEstimate> {
    let n = points.len();
    let first = points.first().ok_or(Error::EmptyInput("no samples"))?;
    let dim = first.len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch { left: p.len(), right: dim });
    }
    if !(0.0..0.25).contains(&eps) {
        return Err(Error::InvalidArgument(format!("epsilon {eps} outside [0, 1/4)")));
    }
    if cov_bound <= 0.0 {
        return Err(Error::InvalidArgument("cov_bound must be positive".into()));
    }
    let pts: Vec<DVector<f64>> = points.iter().map(|p| DVector::from_column_slice(p)).collect();
    let mut w = vec![1.0; n];
    if eps == 0.0 {
        let (mu, cov) = weighted_moments(&pts, &w);
        let (lam, _) = top_eigen(&cov);
        return Ok(RobustEstimate {
            value: mu.iter().copied().collect(),
            iterations: 0,
            removed_fraction: 0.0,
            spectral_trace: vec![lam],
            weights: w,
        });
    }
    let threshold = cov_bound * (1.0 + cfg.stop_c * eps);
    let mut trace = Vec::new();
    for it in 0..cfg.max_iter {
        let (mu, cov) = weighted_moments(&pts, &w);
        let (lam, v) = top_eigen(&cov);
        trace.push(lam);
        let removed = 1.0 - w.iter().sum::<f64>() / n as f64;
        if lam <= threshold {
            return Ok(RobustEstimate {
                value: mu.iter().copied().collect(),
                iterations: it,
                removed_fraction: removed,
                spectral_trace: trace,
                weights: w,
            });
        }
        let scores: Vec<f64> = pts.iter().map(|p| (p - &mu).dot(&v).powi(2)).collect();
        let smax = scores.iter().zip(&w).filter(|(_, &wi)| wi > 0.0).map(|(s, _)| *s).fold(0.0, f64::max);
        if smax <= 0.0 {
            break;
        }
        for (wi, s) in w.iter_mut().zip(&scores) {
            *wi *= 1.0 - s / smax;
            if *wi < 1e-12 {
                *wi = 0.0;
            }
        }
        let removed = 1.0 - w.iter().sum::<f64>() / n as f64;
        if removed > cfg.abort_factor * eps {
            return Err(Error::FilterAbort { removed, limit: cfg.abort_factor * eps });
        }
    }
    let (mu, _) = weighted_moments(&pts, &w);
    Ok(RobustEstimate {
        value: mu.iter().copied().collect(),
        iterations: cfg.max_iter,
        removed_fraction: 1.0 - w.iter().sum::<f64>() / n as f64,
        spectral_trace: trace,
        weights: w,
    })
}

/// Robust mean when inliers have covariance at most `cov_bound * I`.
pub fn robust_mean_bounded_cov(samples: &[Vec<f64>], eps: f64, cov_bound: f64) -> Result<RobustEstimate> {
    robust_mean_with(samples, eps, cov_bound, &FilterConfig::default())
}

pub fn robust_mean_with(samples: &[Vec<f64>], eps: f64, cov_bound: f64, cfg: &FilterConfig) -> Result<RobustEstimate> {
    if let Some(first) = samples.first() {
        if samples.len() < 10 * first.len() {
            return Err(Error::InvalidArgument(format!("need n >= 10d, got n={}, d={}", samples.len(), first.len())));
        }
    }
    filter_mean(samples, eps, cov_bound, cfg)
}

/// Settings for the mixture mean/covariance estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureFilterConfig {
    pub filter: FilterConfig,
    /// Multiplies the Gaussian-case covariance bounds to allow for mixture tails.
    pub tail_factor: f64,
}

impl MixtureFilterConfig {
    /// Tail allowance growing with `1/delta`, clipped to `[2, 50]`.
    pub fn for_delta(delta: f64) -> Self {
        MixtureFilterConfig { filter: FilterConfig::default(), tail_factor: (2.0 / delta.max(1e-6)).clamp(2.0, 50.0) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MixtureMoments {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub pairs_used: usize,
    pub cov_estimate: RobustEstimate,
    pub mean_estimate: RobustEstimate,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Pairs the sample, filters `flatten(Y Y^T) / 2` for `Y = X - X'`, whitens, then filters
/// the mean.
pub fn robust_mixture_mean_cov(samples: &[Vec<f64>], eps: f64, delta: f64) -> Result<MixtureMoments> {
    robust_mixture_mean_cov_with(samples, eps, &MixtureFilterConfig::for_delta(delta))
}

pub fn robust_mixture_mean_cov_with(samples: &[Vec<f64>], eps: f64, cfg: &MixtureFilterConfig) -> Result<MixtureMoments> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::EmptyInput("need at least two samples"));
    }
    let d = samples[0].len();
    let half = n / 2;
    let ys: Vec<DVector<f64>> = (0..half)
        .map(|i| DVector::from_column_slice(&samples[2 * i]) - DVector::from_column_slice(&samples[2 * i + 1]))
        .collect();
    let pair_eps = (2.0 * eps).min(0.2499);

    // crude start: drop the pairs with the largest norms, then take the second moment
    let mut order: Vec<usize> = (0..half).collect();
    order.sort_by(|&a, &b| ys[a].norm_squared().partial_cmp(&ys[b].norm_squared()).unwrap());
    let keep = half - ((2.0 * pair_eps * half as f64).ceil() as usize).min(half.saturating_sub(1));
    let mut s0 = DMatrix::zeros(d, d);
    for &i in &order[..keep] {
        s0.ger(0.5 / keep as f64, &ys[i], &ys[i], 1.0);
    }
    s0 += DMatrix::identity(d, d) * 1e-12 * s0.trace().max(1e-300);
    let (s0_sqrt, s0_isqrt) = sqrt_and_inv_sqrt(&s0)?;

    // in whitened coordinates a Gaussian pair difference gives feature covariance about 4 I
    let feats: Vec<Vec<f64>> = ys
        .iter()
        .map(|y| {
            let z = &s0_isqrt * y;
            let m = &z * z.transpose() * 0.5;
            flatten(&m).map(|f| f.entries)
        })
        .collect::<Result<_>>()?;
    let cov_est = filter_mean(&feats, pair_eps, 4.0 * cfg.tail_factor, &cfg.filter)?;
    let white = unflatten(&FlattenedSymmetric { d, entries: cov_est.value.clone() })?;
    let sigma = &s0_sqrt * white * &s0_sqrt;
    let sigma = (&sigma + sigma.transpose()) * 0.5;

    let (sig_sqrt, sig_isqrt) = sqrt_and_inv_sqrt(&sigma)?;
    let whitened: Vec<Vec<f64>> =
        samples.iter().map(|x| (&sig_isqrt * DVector::from_column_slice(x)).iter().copied().collect()).collect();
    let mean_est = filter_mean(&whitened, eps, cfg.tail_factor.max(1.0), &cfg.filter)?;
    let mean = &sig_sqrt * DVector::from_column_slice(&mean_est.value);
    Ok(MixtureMoments {
        mean: mean.iter().copied().collect(),
        cov: to_rows(&sigma),
        pairs_used: half,
        cov_estimate: cov_est,
        mean_estimate: mean_est,
    })
}

/// `L(x) = linear (x - shift)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropicTransform {
    pub shift: Vec<f64>,
    pub linear: Vec<Vec<f64>>,
}

impl IsotropicTransform {
    fn lin(&self) -> DMatrix<f64> {
        let d = self.shift.len();
        DMatrix::from_fn(d, d, |i, j| self.linear[i][j])
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(x) - DVector::from_column_slice(&self.shift);
        (self.lin() * v).iter().copied().collect()
    }

    pub fn apply_all(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.apply(x)).collect()
    }

    pub fn invert(&self, y: &[f64]) -> Result<Vec<f64>> {
        let inv = self.lin().try_inverse().ok_or_else(|| Error::Singular("transform not invertible".into()))?;
        Ok((inv * DVector::from_column_slice(y) + DVector::from_column_slice(&self.shift)).iter().copied().collect())
    }

    pub fn transform_gaussian(&self, g: &Gaussian) -> Result<Gaussian> {
        let a = self.lin();
        let b = -(&a * DVector::from_column_slice(&self.shift));
        g.affine(&a, &b)
    }

    pub fn transform_mixture(&self, m: &GaussianMixture) -> Result<GaussianMixture> {
        let a = self.lin();
        let b = -(&a * DVector::from_column_slice(&self.shift));
        m.affine(&a, &b)
    }

    /// Maps a mixture learned in transformed coordinates back to the original ones.
    pub fn untransform_mixture(&self, m: &GaussianMixture) -> Result<GaussianMixture> {
        let inv = self.lin().try_inverse().ok_or_else(|| Error::Singular("transform not invertible".into()))?;
        m.affine(&inv, &DVector::from_column_slice(&self.shift))
    }
}

/// `L(x) = Sigma^{-1/2} (x - mu)`.
pub fn isotropic_transform(mu: &[f64], sigma: &[Vec<f64>]) -> Result<IsotropicTransform> {
    let d = mu.len();
    if sigma.len() != d {
        return Err(Error::DimensionMismatch { left: sigma.len(), right: d });
    }
    let s = DMatrix::from_fn(d, d, |i, j| sigma[i][j]);
    let (_, isq) = sqrt_and_inv_sqrt(&s)?;
    Ok(IsotropicTransform { shift: mu.to_vec(), linear: to_rows(&isq) })
}

/// How the Hermite filter picks its covariance bound (on Gaussian-normalized features).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum HermiteBound {
    Fixed(f64),
    /// `factor` times the top eigenvalue of the covariance after trimming the `2 eps`
    /// fraction of largest feature norms.
    Trimmed { factor: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermiteConfig {
    pub filter: FilterConfig,
    pub bound: HermiteBound,
    pub max_degree: u32,
}

impl Default for HermiteConfig {
    fn default() -> Self {
        HermiteConfig { filter: FilterConfig::default(), bound: HermiteBound::Trimmed { factor: 2.0 }, max_degree: 10 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HermiteEstimate {
    pub m: u32,
    pub monomials: Vec<Monomial>,
    /// Coefficients on the degree-`m` monomials.
    pub coefficients: Vec<f64>,
    /// Covariance bound used, in normalized units.
    pub cov_bound: f64,
    /// Final top eigenvalue in normalized units.
    pub achieved_bound: f64,
    pub estimate: RobustEstimate,
}

impl HermiteEstimate {
    pub fn polynomial(&self, d: usize) -> Result<FloatPoly> {
        Ok(FloatPoly::from_terms(d, self.monomials.iter().cloned().zip(self.coefficients.iter().copied()))?
            .with_cap(self.m.max(crate::poly::DEFAULT_DEGREE_CAP)))
    }
}

/// Standard deviation of the `X^alpha` feature under `N(0, I)`: `m! / sqrt(alpha!)`.
fn feature_scale(m: u32, mono: &Monomial) -> f64 {
    let af: f64 = mono.exponents().iter().map(|&a| factorial_f64(a)).product();
    factorial_f64(m) / af.sqrt()
}

/// Filters the stream `v_X(H_m(X, z_j))` of near-isotropic samples.
pub fn robust_hermite(samples: &[Vec<f64>], eps: f64, m: u32) -> Result<HermiteEstimate> {
    robust_hermite_with(samples, eps, m, &HermiteConfig::default())
}

pub fn robust_hermite_with(samples: &[Vec<f64>], eps: f64, m: u32, cfg: &HermiteConfig) -> Result<HermiteEstimate> {
    if m > cfg.max_degree {
        return Err(Error::DegreeCap { degree: m, cap: cfg.max_degree });
    }
    let first = samples.first().ok_or(Error::EmptyInput("no samples"))?;
    let d = first.len();
    let monos = monomials_of_degree(d, m);
    let scales: Vec<f64> = monos.iter().map(|a| feature_scale(m, a)).collect();
    let feats: Vec<Vec<f64>> = samples
        .iter()
        .map(|z| hermite_features(z, m, &monos).iter().zip(&scales).map(|(f, s)| f / s).collect())
        .collect();
    let cov_bound = match cfg.bound {
        HermiteBound::Fixed(b) => b,
        HermiteBound::Trimmed { factor } => factor * trimmed_top_eigen(&feats, 2.0 * eps).max(1.0),
    };
    let est = filter_mean(&feats, eps, cov_bound, &cfg.filter)?;
    let coefficients = est.value.iter().zip(&scales).map(|(v, s)| v * s).collect();
    Ok(HermiteEstimate {
        m,
        monomials: monos,
        coefficients,
        cov_bound,
        achieved_bound: *est.spectral_trace.last().unwrap_or(&0.0),
        estimate: est,
    })
}

fn trimmed_top_eigen(feats: &[Vec<f64>], frac: f64) -> f64 {
    let pts: Vec<DVector<f64>> = feats.iter().map(|p| DVector::from_column_slice(p)).collect();
    let w = vec![1.0; pts.len()];
    let (mu, _) = weighted_moments(&pts, &w);
    let mut order: Vec<usize> = (0..pts.len()).collect();
    let dist: Vec<f64> = pts.iter().map(|p| (p - &mu).norm_squared()).collect();
    order.sort_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap());
    let drop = (frac * pts.len() as f64).ceil() as usize;
    let keep = pts.len().saturating_sub(drop).max(1);
    let mut tw = vec![0.0; pts.len()];
    for &i in &order[..keep] {
        tw[i] = 1.0;
    }
    let (_, cov) = weighted_moments(&pts, &tw);
    top_eigen(&cov).0
}
