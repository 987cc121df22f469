//! Gaussians, mixtures, sampling, total variation estimates and closeness predicates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::IsoMixture;

/// `N(mean, cov)` with a cached Cholesky factor.
#[derive(Clone, Debug)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl PartialEq for Gaussian {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { left: m.nrows(), right: m.ncols() });
    }
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * (1.0 + m[(i, j)].abs()) {
                return Err(Error::InvalidArgument(format!("matrix not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch { left: mean.len(), right: cov.nrows() });
        }
        check_symmetric(&cov, 1e-9)?;
        let sym = (&cov + cov.transpose()) * 0.5;
        let chol = sym
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("covariance is not positive definite".into()))?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>();
        Ok(Gaussian { mean, cov: sym, chol: l, log_det })
    }

    pub fn from_vecs(mean: &[f64], cov: &[Vec<f64>]) -> Result<Self> {
        let d = mean.len();
        if cov.len() != d || cov.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { left: d, right: cov.len() });
        }
        Self::new(DVector::from_column_slice(mean), DMatrix::from_fn(d, d, |i, j| cov[i][j]))
    }

    pub fn standard(d: usize) -> Self {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d)).expect("identity is PD")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let diff = DVector::from_iterator(d, x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        let z = self.chol.solve_lower_triangular(&diff).expect("factor is nonsingular");
        -0.5 * (z.norm_squared() + self.log_det + d as f64 * (2.0 * std::f64::consts::PI).ln())
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.log_pdf(x).exp()
    }

    pub fn draw<R: rand::Rng>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        (&self.mean + &self.chol * z).iter().copied().collect()
    }

    /// `L(x) = A x + b` applied to the distribution.
    pub fn affine(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        Gaussian::new(a * &self.mean + b, a * &self.cov * a.transpose())
    }
}

/// Symmetric square root and inverse square root of a PD matrix.
pub fn sqrt_and_inv_sqrt(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let e = SymmetricEigen::new((m + m.transpose()) * 0.5);
    if e.eigenvalues.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
        return Err(Error::Singular("matrix is not positive definite".into()));
    }
    let v = &e.eigenvectors;
    let s = DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.sqrt()));
    let si = DMatrix::from_diagonal(&e.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok((v * s * v.transpose(), v * si * v.transpose()))
}

/// A finite mixture of Gaussians.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub components: Vec<Gaussian>,
    /// When set, each weight must be rational with denominator at most this.
    pub weight_denominator_bound: Option<u64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        Self::with_bounds(weights, components, 0.0, None)
    }

    pub fn with_bounds(weights: Vec<f64>, components: Vec<Gaussian>, w_min: f64, den: Option<u64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput("mixture has no components"));
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch { left: weights.len(), right: components.len() });
        }
        let d = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch { left: d, right: c.dim() });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        if weights.iter().any(|&w| w <= 0.0 || w < w_min) {
            return Err(Error::InvalidArgument(format!("weights must be positive and at least {w_min}")));
        }
        if let Some(a) = den {
            for &w in &weights {
                if !(1..=a).any(|q| ((w * q as f64) - (w * q as f64).round()).abs() < 1e-9) {
                    return Err(Error::InvalidArgument(format!("weight {w} has denominator above {a}")));
                }
            }
        }
        Ok(GaussianMixture { weights, components, weight_denominator_bound: den })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(w, g)| w.ln() + g.log_pdf(x))
            .collect();
        log_sum_exp(&terms)
    }

    /// Overall mean and covariance.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        let mut mu = DVector::zeros(d);
        for (w, g) in self.weights.iter().zip(&self.components) {
            mu += g.mean() * *w;
        }
        let mut cov = DMatrix::zeros(d, d);
        for (w, g) in self.weights.iter().zip(&self.components) {
            let dm = g.mean() - &mu;
            cov += (g.cov() + &dm * dm.transpose()) * *w;
        }
        (mu, cov)
    }

    pub fn affine(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        let comps = self.components.iter().map(|g| g.affine(a, b)).collect::<Result<Vec<_>>>()?;
        Ok(GaussianMixture { weights: self.weights.clone(), components: comps, weight_denominator_bound: self.weight_denominator_bound })
    }

    /// Isotropic-convention parameters: component `i` is `N(mu_i, I + Sigma_i)`.
    pub fn to_iso(&self) -> IsoMixture<f64> {
        let d = self.dim();
        IsoMixture {
            weights: self.weights.clone(),
            means: self.components.iter().map(|g| g.mean().iter().copied().collect()).collect(),
            sigmas: self
                .components
                .iter()
                .map(|g| (0..d).map(|i| (0..d).map(|j| g.cov()[(i, j)] - if i == j { 1.0 } else { 0.0 }).collect()).collect())
                .collect(),
        }
    }

    pub fn from_iso(iso: &IsoMixture<f64>) -> Result<Self> {
        let d = iso.dim();
        let comps = (0..iso.k())
            .map(|i| {
                let cov: Vec<Vec<f64>> = (0..d)
                    .map(|r| (0..d).map(|c| iso.sigmas[i][r][c] + if r == c { 1.0 } else { 0.0 }).collect())
                    .collect();
                Gaussian::from_vecs(&iso.means[i], &cov)
            })
            .collect::<Result<Vec<_>>>()?;
        let total: f64 = iso.weights.iter().sum();
        let w = iso.weights.iter().map(|w| w / total).collect();
        GaussianMixture::new(w, comps)
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Points drawn from a mixture; labels are kept for diagnostics only.
#[derive(Clone, Debug)]
pub struct LabeledSample {
    pub points: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl LabeledSample {
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

pub fn sample(mix: &GaussianMixture, n: usize, seed: u64) -> Result<LabeledSample> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = WeightedIndex::new(&mix.weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = pick.sample(&mut rng);
        points.push(mix.components[c].draw(&mut rng));
        labels.push(c);
    }
    Ok(LabeledSample { points, labels })
}

/// How to compute total variation distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TvMethod {
    /// Numeric integration; one dimension only.
    Closed1d,
    MonteCarlo { n: usize, seed: u64 },
}

/// A TV value with a standard error (zero for quadrature).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub value: f64,
    pub stderr: f64,
}

impl TvEstimate {
    /// Interval used for threshold comparisons: four standard errors.
    pub fn interval(&self) -> (f64, f64) {
        let h = 4.0 * self.stderr + 1e-12;
        ((self.value - h).max(0.0), (self.value + h).min(1.0))
    }
}

pub fn tv_distance(g1: &Gaussian, g2: &Gaussian, method: TvMethod) -> Result<TvEstimate> {
    if g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch { left: g1.dim(), right: g2.dim() });
    }
    match method {
        TvMethod::Closed1d => {
            if g1.dim() != 1 {
                return Err(Error::InvalidArgument("closed-form TV is one-dimensional".into()));
            }
            Ok(TvEstimate { value: tv_1d(g1, g2), stderr: 0.0 })
        }
        TvMethod::MonteCarlo { n, seed } => tv_monte_carlo(g1, g2, n, seed),
    }
}

// Composite Simpson on a window wide enough for both densities; symmetric in its inputs.
fn tv_1d(g1: &Gaussian, g2: &Gaussian) -> f64 {
    let (m1, m2) = (g1.mean()[0], g2.mean()[0]);
    let (s1, s2) = (g1.cov()[(0, 0)].sqrt(), g2.cov()[(0, 0)].sqrt());
    let lo = (m1 - 14.0 * s1).min(m2 - 14.0 * s2);
    let hi = (m1 + 14.0 * s1).max(m2 + 14.0 * s2);
    let f = |x: f64| (g1.pdf(&[x]) - g2.pdf(&[x])).abs();
    // crossings of the two densities are where |p - q| has kinks; integrate between them
    let mut cuts = vec![lo, hi];
    let a = 1.0 / (s2 * s2) - 1.0 / (s1 * s1);
    let b = 2.0 * (m1 / (s1 * s1) - m2 / (s2 * s2));
    let c = m2 * m2 / (s2 * s2) - m1 * m1 / (s1 * s1) + 2.0 * (s2 / s1).ln();
    if a.abs() < 1e-14 {
        if b.abs() > 1e-300 {
            cuts.push(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            cuts.push((-b + disc.sqrt()) / (2.0 * a));
            cuts.push((-b - disc.sqrt()) / (2.0 * a));
        }
    }
    cuts.retain(|x| x.is_finite() && *x >= lo && *x <= hi);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += simpson(&f, w[0], w[1], 4000);
    }
    (0.5 * total).clamp(0.0, 1.0)
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

// Importance sampling from (P+Q)/2: TV = E[|p - q| / (p + q)] = E[|tanh((log p - log q)/2)|].
fn tv_monte_carlo(g1: &Gaussian, g2: &Gaussian, n: usize, seed: u64) -> Result<TvEstimate> {
    if n < 2 {
        return Err(Error::InvalidArgument("Monte Carlo TV needs n >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for i in 0..n {
        let x = if i % 2 == 0 { g1.draw(&mut rng) } else { g2.draw(&mut rng) };
        let v = (0.5 * (g1.log_pdf(&x) - g2.log_pdf(&x))).tanh().abs();
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    Ok(TvEstimate { value: mean.clamp(0.0, 1.0), stderr: (var / n as f64).sqrt() })
}

/// `h(P, Q) = -log(1 - TV)`.
pub fn h_distance(tv: f64) -> f64 {
    -(1.0 - tv).max(f64::MIN_POSITIVE).ln()
}

/// `sqrt(dmu^T S1^{-1} dmu) + ||S1^{-1/2} S2 S1^{-1/2} - I||_F`, constant 1.
pub fn parameter_distance_bound(g1: &Gaussian, g2: &Gaussian) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch { left: g1.dim(), right: g2.dim() });
    }
    let (_, inv_sqrt) = sqrt_and_inv_sqrt(g1.cov())?;
    let dm = g2.mean() - g1.mean();
    let z = &inv_sqrt * dm;
    let m = &inv_sqrt * g2.cov() * &inv_sqrt - DMatrix::identity(g1.dim(), g1.dim());
    Ok(z.norm() + m.norm())
}

/// Which closeness condition failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClosenessFailure {
    Mean,
    Variance,
    Covariance,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Closeness {
    pub close: bool,
    /// Exact suprema over unit directions and the covariance-condition value.
    pub mean_ratio: f64,
    pub variance_ratio: f64,
    pub covariance_value: f64,
    pub failure: Option<(ClosenessFailure, Vec<f64>)>,
}

/// Generalized eigenpairs of `(a, b)` with `b` PD: `a v = lambda b v`, `v` in original coordinates.
fn generalized_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (_, bi) = sqrt_and_inv_sqrt(b)?;
    let m = &bi * a * &bi;
    let e = SymmetricEigen::new((&m + m.transpose()) * 0.5);
    Ok((e.eigenvalues, bi * e.eigenvectors))
}

fn unit(v: DVector<f64>) -> Vec<f64> {
    let n = v.norm();
    v.iter().map(|x| x / n).collect()
}

/// The three-condition closeness predicate with exact suprema via eigendecompositions.
pub fn c_closeness(g1: &Gaussian, g2: &Gaussian, c: f64) -> Result<Closeness> {
    if c <= 0.0 {
        return Err(Error::InvalidArgument("C must be positive".into()));
    }
    if g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch { left: g1.dim(), right: g2.dim() });
    }
    let d = g1.dim();
    let dm = g1.mean() - g2.mean();
    let s = g1.cov() + g2.cov();
    let sol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("covariance sum is singular".into()))?
        .solve(&dm);
    let mean_ratio = dm.dot(&sol);
    let mean_dir = if dm.norm() > 0.0 { unit(sol) } else { vec![0.0; d] };

    let (vals, vecs) = generalized_eigen(g1.cov(), g2.cov())?;
    let (mut imax, mut imin) = (0, 0);
    for i in 0..vals.len() {
        if vals[i] > vals[imax] {
            imax = i;
        }
        if vals[i] < vals[imin] {
            imin = i;
        }
    }
    let hi = vals[imax];
    let lo = vals[imin];
    let variance_ratio = hi.max(1.0 / lo);
    let var_dir = if hi >= 1.0 / lo { vecs.column(imax).into_owned() } else { vecs.column(imin).into_owned() };

    // spectral norm of I - S2^{-1/2} S1 S2^{-1/2}: eigenvalues are the generalized ones
    let covariance_value = vals.iter().map(|l| (1.0 - l).abs()).fold(0.0, f64::max).powi(2);
    let cov_dir = {
        let i = (0..vals.len()).max_by(|&a, &b| (1.0 - vals[a]).abs().partial_cmp(&(1.0 - vals[b]).abs()).unwrap()).unwrap();
        vecs.column(i).into_owned()
    };

    let failure = if mean_ratio > c {
        Some((ClosenessFailure::Mean, mean_dir))
    } else if variance_ratio > c {
        Some((ClosenessFailure::Variance, unit(var_dir)))
    } else if covariance_value > c {
        Some((ClosenessFailure::Covariance, unit(cov_dir)))
    } else {
        None
    };
    Ok(Closeness { close: failure.is_none(), mean_ratio, variance_ratio, covariance_value, failure })
}

/// Tri-state answer for tests that compare noisy estimates to thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Yes,
    No,
    Indeterminate,
}

#[derive(Clone, Debug, Serialize)]
pub struct WellConditioned {
    pub status: Status,
    pub tv: Vec<Vec<TvEstimate>>,
    /// Edges with `TV <= 1 - delta` (upper end of the interval decides).
    pub edges: Vec<(usize, usize)>,
    /// Pairs whose interval straddles a threshold.
    pub ambiguous: Vec<(usize, usize)>,
    pub connected: bool,
    pub failing_pair: Option<(usize, usize)>,
    pub min_weight_ok: bool,
}

pub fn well_conditioned(mix: &GaussianMixture, delta: f64, n_mc: usize, seed: u64) -> Result<WellConditioned> {
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::InvalidArgument("delta must lie in (0,1)".into()));
    }
    let k = mix.k();
    let empty = TvEstimate { value: 0.0, stderr: 0.0 };
    let mut tv = vec![vec![empty; k]; k];
    let mut edges = Vec::new();
    let mut ambiguous = Vec::new();
    let mut failing_pair = None;
    let mut separated_unknown = false;
    for i in 0..k {
        for j in i + 1..k {
            let method = if mix.dim() == 1 {
                TvMethod::Closed1d
            } else {
                TvMethod::MonteCarlo { n: n_mc, seed: seed.wrapping_add((i * k + j) as u64) }
            };
            let t = tv_distance(&mix.components[i], &mix.components[j], method)?;
            tv[i][j] = t;
            tv[j][i] = t;
            let (lo, hi) = t.interval();
            if hi <= 1.0 - delta {
                edges.push((i, j));
            } else if lo <= 1.0 - delta {
                ambiguous.push((i, j));
            }
            if hi < delta {
                failing_pair.get_or_insert((i, j));
            } else if lo < delta {
                separated_unknown = true;
                ambiguous.push((i, j));
            }
        }
    }
    let connected_with = |es: &[(usize, usize)]| {
        let mut seen = vec![false; k];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(a, b) in es {
                let v = if a == u { b } else if b == u { a } else { continue };
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    let connected = connected_with(&edges);
    let mut optimistic = edges.clone();
    optimistic.extend(ambiguous.iter().copied());
    let maybe_connected = connected_with(&optimistic);
    let min_weight_ok = mix.weights.iter().all(|&w| w >= delta);
    let status = if !min_weight_ok || failing_pair.is_some() || !maybe_connected {
        Status::No
    } else if connected && !separated_unknown {
        Status::Yes
    } else {
        Status::Indeterminate
    };
    Ok(WellConditioned { status, tv, edges, ambiguous, connected, failing_pair, min_weight_ok })
}

/// `(a11, 2 a12, ..., 2 a1d, a22, 2 a23, ..., add)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlattenedSymmetric {
    pub d: usize,
    pub entries: Vec<f64>,
}

pub fn flatten(m: &DMatrix<f64>) -> Result<FlattenedSymmetric> {
    check_symmetric(m, 1e-12)?;
    let d = m.nrows();
    let mut entries = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            entries.push(if i == j { m[(i, i)] } else { 2.0 * m[(i, j)] });
        }
    }
    Ok(FlattenedSymmetric { d, entries })
}

pub fn unflatten(f: &FlattenedSymmetric) -> Result<DMatrix<f64>> {
    let d = f.d;
    if f.entries.len() != d * (d + 1) / 2 {
        return Err(Error::DimensionMismatch { left: f.entries.len(), right: d * (d + 1) / 2 });
    }
    let mut m = DMatrix::zeros(d, d);
    let mut it = f.entries.iter();
    for i in 0..d {
        for j in i..d {
            let v = *it.next().unwrap();
            if i == j {
                m[(i, i)] = v;
            } else {
                m[(i, j)] = v / 2.0;
                m[(j, i)] = v / 2.0;
            }
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioLemmaReport {
    pub tv_ab: f64,
    pub tv_ac: f64,
    pub tv_bc: f64,
    /// `log(1 - tv_bc) / log(1 - tv_ac)`: the exponent actually needed.
    pub implied_exponent: f64,
    /// Fraction of `x ~ A` with `eps <= A(x)/B(x) <= 1/eps`.
    pub ratio_frequency: f64,
    pub precondition: bool,
    pub passed: bool,
}

/// Exponent `c(lambda)` used by the ratio check; recorded, not derived.
pub fn ratio_exponent(lambda: f64) -> f64 {
    lambda / 4.0
}

/// Checks that TV-far-from-A implies TV-far-from-B when A and B overlap, and samples
/// the probability-ratio event.
#[allow(clippy::too_many_arguments)]
pub fn ratio_lemma_check(
    a: &Gaussian,
    b: &Gaussian,
    c: &Gaussian,
    lambda: f64,
    ratio_eps: f64,
    n_mc: usize,
    seed: u64,
) -> Result<RatioLemmaReport> {
    let method = if a.dim() == 1 { TvMethod::Closed1d } else { TvMethod::MonteCarlo { n: n_mc, seed } };
    let tv_ab = tv_distance(a, b, method)?.value;
    let tv_ac = tv_distance(a, c, method)?.value;
    let tv_bc = tv_distance(b, c, method)?.value;
    let precondition = tv_ab <= 1.0 - lambda;
    let gap_ac = (1.0 - tv_ac).max(1e-300);
    let gap_bc = (1.0 - tv_bc).max(1e-300);
    let implied_exponent = if gap_ac >= 1.0 { f64::INFINITY } else { gap_bc.ln() / gap_ac.ln() };
    let cexp = ratio_exponent(lambda);
    let distance_ok = gap_bc <= gap_ac.powf(cexp) * (1.0 + 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let hits = (0..n_mc)
        .filter(|_| {
            let x = a.draw(&mut rng);
            let r = a.log_pdf(&x) - b.log_pdf(&x);
            r.abs() <= -ratio_eps.ln()
        })
        .count();
    let ratio_frequency = hits as f64 / n_mc.max(1) as f64;
    let ratio_ok = ratio_frequency >= 1.0 - ratio_eps.powf(cexp);
    Ok(RatioLemmaReport {
        tv_ab,
        tv_ac,
        tv_bc,
        implied_exponent,
        ratio_frequency,
        precondition,
        passed: precondition && distance_ok && ratio_ok,
    })
}

/// Largest `lambda_max(S^{-1/2} S_i S^{-1/2})` and `||S^{-1/2}(mu_i - mu_j)||` over components,
/// `S` the mixture covariance.
pub fn parameter_closeness_constants(mix: &GaussianMixture) -> Result<(f64, f64)> {
    let (_, s) = mix.moments();
    let (_, si) = sqrt_and_inv_sqrt(&s)?;
    let mut cov_ratio: f64 = 0.0;
    let mut mean_gap: f64 = 0.0;
    for (i, gi) in mix.components.iter().enumerate() {
        let m = &si * gi.cov() * &si;
        let e = SymmetricEigen::new((&m + m.transpose()) * 0.5);
        cov_ratio = cov_ratio.max(e.eigenvalues.max());
        for gj in &mix.components[i + 1..] {
            mean_gap = mean_gap.max((&si * (gi.mean() - gj.mean())).norm());
        }
    }
    Ok((cov_ratio, mean_gap))
}
