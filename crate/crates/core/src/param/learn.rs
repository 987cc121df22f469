use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LmConfig};
use super::subspace::{flatten_sym, hbar_vectors, hermite_vectors, recover_covariances, recover_means, solve_covariances, solve_means, unflatten_sym, Backend};
use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, GaussianMixture};
use crate::hermite::IsoMixture;
use crate::poly::{FloatPoly, Monomial};
use crate::pseudoexp::{build_parameter_program, default_hermite_count, GuessLimits, ParameterGuess};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloseCaseConfig {
    pub k: usize,
    pub d: usize,
    pub eps_prime: f64,
    pub limits: GuessLimits,
    /// Number of Hermite estimates matched; defaults to the per-`k` table.
    pub hermite_count: Option<u32>,
    /// Grid step of the recovery nets; defaults to `sqrt(eps')`.
    pub net_step: Option<f64>,
    pub candidate_cap: usize,
    pub starts: usize,
    pub seed: u64,
    /// Check each accepted parameter point against the symbolic parameter program.
    pub certify_program: bool,
    /// When nothing passes the residual test, keep this many best-residual fits, marked
    /// uncertified.
    #[serde(default)]
    pub fallback: usize,
}

impl CloseCaseConfig {
    pub fn new(k: usize, d: usize, eps_prime: f64) -> Self {
        CloseCaseConfig {
            k,
            d,
            eps_prime,
            limits: GuessLimits { delta: 2.0, c: 1.0, w_min: 0.1 },
            hermite_count: None,
            net_step: None,
            candidate_cap: 100_000,
            starts: 48,
            seed: 11,
            certify_program: false,
            fallback: 0,
        }
    }

    pub fn net_step(&self) -> f64 {
        self.net_step.unwrap_or_else(|| self.eps_prime.sqrt())
    }

    pub fn hermite_count(&self) -> Result<u32> {
        self.hermite_count.map(Ok).unwrap_or_else(|| default_hermite_count(self.k))
    }
}

/// One hypothesis mixture in the isotropic convention, with its fit to the estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub mixture: IsoMixture<f64>,
    /// `||v(h_p - hbar_p)||^2` for `p = 1..C`.
    pub hermite_residuals: Vec<f64>,
    pub provenance: String,
    pub score: Option<f64>,
}

impl Candidate {
    pub fn to_mixture(&self) -> Result<GaussianMixture> {
        GaussianMixture::from_iso(&self.mixture)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub candidates: Vec<Candidate>,
    pub diagnostics: Vec<String>,
}

impl CandidateList {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Sorts by serialized parameters and truncates to `cap`.
    pub fn canonicalize(&mut self, cap: usize) {
        let mut keyed: Vec<(String, Candidate)> =
            self.candidates.drain(..).map(|c| (serde_json::to_string(&c.mixture).unwrap_or_default(), c)).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        keyed.dedup_by(|a, b| a.0 == b.0);
        self.candidates = keyed.into_iter().take(cap).map(|(_, c)| c).collect();
    }
}

fn residual_norms(mix: &IsoMixture<f64>, target: &[Vec<f64>]) -> Result<Vec<f64>> {
    let h = hermite_vectors(mix, target.len() as u32)?;
    Ok(h.iter().zip(target).map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()).collect())
}

fn mat_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

/// `k = 1`: `h_1 = mu . X` and `h_2 = X^T Sigma X + (mu . X)^2`.
fn closed_form(hbar: &[FloatPoly], d: usize) -> IsoMixture<f64> {
    let unit = |a: usize, b: Option<usize>| {
        let mut e = vec![0u32; d];
        e[a] += 1;
        if let Some(b) = b {
            e[b] += 1;
        }
        Monomial::new(e)
    };
    let mu: Vec<f64> = (0..d).map(|a| hbar[0].coeff(&unit(a, None))).collect();
    let mut sigma = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in a..d {
            let c = hbar[1].coeff(&unit(a, Some(b)));
            if a == b {
                sigma[a][a] = c - mu[a] * mu[a];
            } else {
                sigma[a][b] = c / 2.0 - mu[a] * mu[b];
                sigma[b][a] = sigma[a][b];
            }
        }
    }
    IsoMixture { weights: vec![1.0], means: vec![mu], sigmas: vec![sigma] }
}

/// Parameters `theta = (logits, means, Cholesky factors of I + Sigma_i)`.
struct Layout {
    k: usize,
    d: usize,
}

impl Layout {
    fn tri(&self) -> usize {
        self.d * (self.d + 1) / 2
    }

    fn len(&self) -> usize {
        self.k + self.k * self.d + self.k * self.tri()
    }

    fn decode(&self, th: &[f64]) -> IsoMixture<f64> {
        let (k, d) = (self.k, self.d);
        let m = th[..k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = th[..k].iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let weights = e.iter().map(|x| x / s).collect();
        let means = (0..k).map(|i| th[k + i * d..k + (i + 1) * d].to_vec()).collect();
        let base = k + k * d;
        let sigmas = (0..k)
            .map(|i| {
                let l = &th[base + i * self.tri()..base + (i + 1) * self.tri()];
                let mut lm = DMatrix::zeros(d, d);
                let mut it = l.iter();
                for r in 0..d {
                    for c in 0..=r {
                        lm[(r, c)] = *it.next().unwrap();
                    }
                }
                let cov = &lm * lm.transpose() - DMatrix::identity(d, d);
                mat_to_rows(&cov)
            })
            .collect();
        IsoMixture { weights, means, sigmas }
    }

    fn start(&self, rng: &mut ChaCha8Rng, delta: f64) -> Vec<f64> {
        let mut th = Vec::with_capacity(self.len());
        for _ in 0..self.k {
            th.push(0.5 * rng.sample::<f64, _>(StandardNormal));
        }
        for _ in 0..self.k * self.d {
            th.push(rng.gen_range(-delta..=delta));
        }
        for _ in 0..self.k {
            for r in 0..self.d {
                for c in 0..=r {
                    let base = if r == c { 1.0 } else { 0.0 };
                    th.push(base + 0.3 * rng.sample::<f64, _>(StandardNormal));
                }
            }
        }
        th
    }
}

fn factorial(p: usize) -> f64 {
    (1..=p).map(|x| x as f64).product()
}

/// Best achievable `max_i max(|w_i - w~_pi(i)|, ||mu_i - mu~||, ||Sigma_i - Sigma~||_F)` over
/// permutations `pi`.
pub fn parameter_error(truth: &IsoMixture<f64>, cand: &IsoMixture<f64>) -> f64 {
    let k = truth.k();
    if cand.k() != k {
        return f64::INFINITY;
    }
    let comp = |i: usize, j: usize| {
        let dw = (truth.weights[i] - cand.weights[j]).abs();
        let dm = truth.means[i].iter().zip(&cand.means[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let ds = truth.sigmas[i]
            .iter()
            .flatten()
            .zip(cand.sigmas[j].iter().flatten())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        dw.max(dm).max(ds)
    };
    permutations(k).iter().map(|p| (0..k).map(|i| comp(i, p[i])).fold(0.0, f64::max)).fold(f64::INFINITY, f64::min)
}

pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Coefficients of a parameter point in orthonormal bases of the spans of its means and
/// flattened covariances, with those bases completed to `k` vectors.
pub fn guess_from_mixture(mix: &IsoMixture<f64>) -> (ParameterGuess, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let k = mix.k();
    let d = mix.dim();
    let split = |cols: Vec<Vec<f64>>, len: usize| {
        let basis = orthonormal_span(&cols, len, k);
        let coeffs: Vec<Vec<f64>> = cols.iter().map(|c| basis.iter().map(|b| b.iter().zip(c).map(|(x, y)| x * y).sum()).collect()).collect();
        (basis, coeffs)
    };
    let flat: Vec<Vec<f64>> = mix.sigmas.iter().map(|s| flatten_sym(&DMatrix::from_fn(d, d, |r, c| s[r][c]))).collect();
    let (u, a) = split(mix.means.clone(), d);
    let (v, b) = split(flat, d * (d + 1) / 2);
    (ParameterGuess { weights: mix.weights.clone(), mean_coeffs: a, cov_coeffs: b }, u, v)
}

/// `k` orthonormal vectors whose span contains the columns; coordinate directions pad
/// degenerate spans.
fn orthonormal_span(cols: &[Vec<f64>], len: usize, k: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut inputs: Vec<Vec<f64>> = cols.to_vec();
    for i in 0..len {
        let mut e = vec![0.0; len];
        e[i] = 1.0;
        inputs.push(e);
    }
    for v0 in inputs {
        if out.len() == k {
            break;
        }
        let scale = v0.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut v = v0;
        for u in &out {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 * scale.max(1e-300) && n > 1e-12 {
            out.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    out
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct LearnStats {
    pub starts: usize,
    pub accepted: usize,
    pub best_residual: f64,
}

/// Close-case learning from Hermite estimates `hbar[p-1]`, `p = 1..`.
pub fn close_case_learn(hbar: &[FloatPoly], cfg: &CloseCaseConfig) -> Result<CandidateList> {
    let c = cfg.hermite_count()? as usize;
    if hbar.len() < c {
        return Err(Error::InvalidArgument(format!("need {c} Hermite estimates, got {}", hbar.len())));
    }
    let hbar = &hbar[..c];
    let target = hbar_vectors(hbar, cfg.d);
    let bound = 100.0 * cfg.eps_prime;
    let mut list = CandidateList::default();
    list.diagnostics.push(format!("hermite_count={c} net_step={:.3e} eps_prime={:.3e}", cfg.net_step(), cfg.eps_prime));
    if cfg.k == 1 {
        let mix = closed_form(hbar, cfg.d);
        let res = residual_norms(&mix, &target)?;
        list.candidates.push(Candidate { mixture: mix, hermite_residuals: res, provenance: "closed-form".into(), score: None });
        return Ok(list);
    }
    let lay = Layout { k: cfg.k, d: cfg.d };
    let scale: Vec<f64> = (1..=c).map(|p| 1.0 / factorial(p).sqrt()).collect();
    let fit = |th: &[f64]| -> Vec<f64> {
        let mix = lay.decode(th);
        match hermite_vectors(&mix, c as u32) {
            Ok(h) => h
                .iter()
                .zip(&target)
                .zip(&scale)
                .flat_map(|((a, b), s)| a.iter().zip(b).map(move |(x, y)| s * (x - y)))
                .collect(),
            Err(_) => vec![f64::INFINITY],
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts: Vec<Vec<f64>> = (0..cfg.starts).map(|_| lay.start(&mut rng, cfg.limits.delta)).collect();
    let lm = LmConfig { max_iter: 400, ..LmConfig::default() };
    let results: Vec<(usize, IsoMixture<f64>)> =
        starts.par_iter().enumerate().map(|(i, s)| (i, lay.decode(&minimize(fit, s, &lm).0))).collect();
    let mut best = f64::INFINITY;
    let mut uncertified: Vec<(f64, usize, IsoMixture<f64>, Vec<f64>)> = Vec::new();
    for (i, mix) in results {
        let res = residual_norms(&mix, &target)?;
        let worst = res.iter().copied().fold(0.0, f64::max);
        best = best.min(worst);
        if mix.weights.iter().any(|&w| w < cfg.limits.w_min / 2.0) {
            continue;
        }
        if worst > bound {
            if worst.is_finite() {
                uncertified.push((worst, i, mix, res));
            }
            continue;
        }
        let mut provenance = format!("local-search start {i}");
        if cfg.certify_program {
            let (guess, u, v) = guess_from_mixture(&mix);
            let prog = build_parameter_program(&guess, hbar, cfg.eps_prime, cfg.k, cfg.d, None)?;
            let viol = prog.system.point_violation(&prog.point(&u, &v)?)?;
            if viol > 1e-9 {
                continue;
            }
            provenance.push_str(", program witness");
        }
        if list.candidates.iter().any(|c: &Candidate| parameter_error(&c.mixture, &mix) < 1e-6) {
            continue;
        }
        list.candidates.push(Candidate { mixture: mix, hermite_residuals: res, provenance, score: None });
    }
    list.diagnostics.push(format!("starts={} accepted={} best_residual={best:.3e}", cfg.starts, list.len()));
    if list.is_empty() && cfg.fallback > 0 {
        uncertified.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (worst, i, mix, res) in uncertified {
            if list.len() >= cfg.fallback {
                break;
            }
            if list.candidates.iter().any(|c| parameter_error(&c.mixture, &mix) < 1e-6) {
                continue;
            }
            let provenance = format!("local-search start {i}, uncertified (residual {worst:.3e})");
            list.candidates.push(Candidate { mixture: mix, hermite_residuals: res, provenance, score: None });
        }
        list.diagnostics.push(format!("fallback kept {} uncertified fits", list.len()));
    }
    list.canonicalize(cfg.candidate_cap);
    Ok(list)
}

/// The guess-driven route: for every guess solve the parameter program, grid the covariance
/// span, then solve and grid the means-only program for each covariance tuple.
pub fn learn_from_guesses(hbar: &[FloatPoly], guesses: &[ParameterGuess], cfg: &CloseCaseConfig, backend: Backend) -> Result<CandidateList> {
    let (k, d) = (cfg.k, cfg.d);
    let step = cfg.net_step();
    let target = hbar_vectors(hbar, d);
    let radius = 2.0 * cfg.limits.delta;
    let mut list = CandidateList::default();
    let mut rejected = 0;
    for (gi, g) in guesses.iter().enumerate() {
        let Some(cov_sol) = solve_covariances(g, hbar, cfg.eps_prime, d, backend)? else {
            rejected += 1;
            continue;
        };
        let cov_tuples = if cov_sol.pe.is_point() {
            vec![point_covariances(&cov_sol.pe, g, k, d)?]
        } else {
            recover_covariances(&cov_sol.bundle, k, d, step, radius, cfg.candidate_cap)?
        };
        for sig in cov_tuples {
            let Some(mean_sol) = solve_means(&g.weights, &g.mean_coeffs, &sig, hbar, cfg.eps_prime, d, backend)? else {
                continue;
            };
            let mean_tuples = if mean_sol.pe.is_point() {
                vec![point_means(&mean_sol.pe, g, k, d)?]
            } else {
                recover_means(&mean_sol.bundle, k, step, radius, cfg.candidate_cap)?
                    .into_iter()
                    .map(|t| t.into_iter().map(|v| v.iter().copied().collect()).collect())
                    .collect()
            };
            for means in mean_tuples {
                let mix = IsoMixture { weights: g.weights.clone(), means, sigmas: sig.iter().map(mat_to_rows).collect() };
                let res = residual_norms(&mix, &target)?;
                // grid points off the feasible set are dropped by the same closeness test
                if res.iter().any(|&r| r > 100.0 * cfg.eps_prime) {
                    continue;
                }
                let via = if cov_sol.used_sdp { "sdp" } else { "local search" };
                list.candidates.push(Candidate { mixture: mix, hermite_residuals: res, provenance: format!("guess {gi} via {via}"), score: None });
                if list.len() > cfg.candidate_cap {
                    return Err(Error::SizeCap { size: list.len(), cap: cfg.candidate_cap });
                }
            }
        }
    }
    list.diagnostics.push(format!("guesses={} rejected={rejected}", guesses.len()));
    list.canonicalize(cfg.candidate_cap);
    Ok(list)
}

fn point_covariances(pe: &crate::pseudoexp::PseudoExpectation, g: &ParameterGuess, k: usize, d: usize) -> Result<Vec<DMatrix<f64>>> {
    let flat = d * (d + 1) / 2;
    let n = pe.nvars();
    let coord = |idx: usize| {
        let mut e = vec![0u32; n];
        e[idx] = 1;
        pe.value(&Monomial::new(e))
    };
    (0..k)
        .map(|i| {
            let mut v = vec![0.0; flat];
            for j in 0..k {
                for (e, x) in v.iter_mut().enumerate() {
                    *x += g.cov_coeffs[i][j] * coord(k * d + j * flat + e)?;
                }
            }
            Ok(unflatten_sym(&v, d))
        })
        .collect()
}

fn point_means(pe: &crate::pseudoexp::PseudoExpectation, g: &ParameterGuess, k: usize, d: usize) -> Result<Vec<Vec<f64>>> {
    let n = pe.nvars();
    (0..k)
        .map(|i| {
            let mut m = vec![0.0; d];
            for j in 0..k {
                for (a, x) in m.iter_mut().enumerate() {
                    let mut e = vec![0u32; n];
                    e[j * d + a] = 1;
                    *x += g.mean_coeffs[i][j] * pe.value(&Monomial::new(e))?;
                }
            }
            Ok(m)
        })
        .collect()
}

/// Gaussian components of a candidate, for callers that work with densities.
pub fn candidate_components(c: &Candidate) -> Result<Vec<Gaussian>> {
    Ok(c.to_mixture()?.components)
}
