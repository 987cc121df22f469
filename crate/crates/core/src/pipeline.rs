//! The full algorithm: rough clustering, constant-accuracy learning, maximum-likelihood
//! reassignment with relearning over all partitions of the components, and a Scheffé
//! tournament on held-out samples.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{rough_cluster, RoughConfig};
use crate::error::{Error, Result};
use crate::gaussian::{tv_distance, Gaussian, GaussianMixture, TvMethod};
use crate::io::MixtureJson;
use crate::param::{close_case_learn, permutations, set_partitions, CloseCaseConfig};
use crate::poly::FloatPoly;
use crate::pseudoexp::{default_hermite_count, ClusteringMode, GuessLimits};
use crate::robust::{isotropic_transform, robust_hermite, robust_mixture_mean_cov};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub k: usize,
    /// Weight denominator bound `A`; when set, weight-snapped variants join the list.
    pub weight_denominator: Option<u64>,
    /// Lower bound on the TV distance between components; recorded only.
    pub b: f64,
    pub eps: f64,
    pub w_min: f64,
    /// Well-conditioning parameter used by the robust moment filters.
    pub delta: f64,
    /// Close-case parameter radius.
    pub big_delta: f64,
    pub c: f64,
    pub eps_prime: f64,
    pub net_step: Option<f64>,
    /// Clustering program degree and failure probability.
    pub t: u32,
    pub eta: f64,
    pub mode: ClusteringMode,
    pub d_grid: Vec<f64>,
    pub max_rounds: usize,
    /// Rows of the first part handed to rough clustering.
    pub cluster_sample: usize,
    /// Fractions of the three sample parts.
    pub split: [f64; 3],
    pub starts: usize,
    /// Uncertified close-case fits kept when nothing certifies.
    pub fallback: usize,
    pub candidate_cap: usize,
    /// Candidates entering the tournament after the likelihood screen.
    pub tournament_size: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: 2,
            weight_denominator: None,
            b: 0.5,
            eps: 0.05,
            w_min: 0.1,
            delta: 0.1,
            big_delta: 2.0,
            c: 1.0,
            eps_prime: 1e-2,
            net_step: None,
            t: 4,
            eta: 0.1,
            mode: ClusteringMode::Reduced,
            d_grid: vec![2.0, 8.0, 32.0],
            max_rounds: 40,
            cluster_sample: 60,
            split: [0.4, 0.4, 0.2],
            starts: 24,
            fallback: 2,
            candidate_cap: 1000,
            tournament_size: 24,
            mc_samples: 4000,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn new(k: usize, eps: f64) -> Self {
        RunConfig { k, eps, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&self.eps) {
            return Err(Error::InvalidArgument(format!("eps {} outside [0, 0.5)", self.eps)));
        }
        if self.split.iter().any(|&f| f <= 0.0) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("split fractions must be positive and sum to 1".into()));
        }
        if self.cluster_sample == 0 || self.candidate_cap == 0 || self.tournament_size == 0 || self.mc_samples < 2 || self.starts == 0 {
            return Err(Error::InvalidArgument("caps and budgets must be positive".into()));
        }
        Ok(())
    }
}

/// Result of assigning each sample to its most likely component.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reassignment {
    pub labels: Vec<usize>,
    pub parts: Vec<Vec<usize>>,
    /// Samples whose best log-density was shared by two components.
    pub ties: usize,
}

/// Argmax of log-density; ties go to the lowest index.
pub fn ml_reassign(samples: &[Vec<f64>], components: &[Gaussian]) -> Result<Reassignment> {
    if components.is_empty() {
        return Err(Error::EmptyInput("no components"));
    }
    let mut labels = Vec::with_capacity(samples.len());
    let mut parts = vec![Vec::new(); components.len()];
    let mut ties = 0;
    for (i, x) in samples.iter().enumerate() {
        let mut best = 0;
        let mut best_lp = f64::NEG_INFINITY;
        let mut tied = false;
        for (j, g) in components.iter().enumerate() {
            let lp = g.log_pdf(x);
            if lp > best_lp {
                best = j;
                best_lp = lp;
                tied = false;
            } else if lp == best_lp {
                tied = true;
            }
        }
        if tied {
            ties += 1;
        }
        labels.push(best);
        parts[best].push(i);
    }
    if ties > 0 {
        log::debug!("ml_reassign: {ties} ties broken toward the lowest index");
    }
    Ok(Reassignment { labels, parts, ties })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TournamentConfig {
    pub eps: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TournamentResult {
    pub winner: usize,
    pub wins: Vec<usize>,
    /// Largest gap between empirical and winner masses over its matches.
    pub winner_worst_gap: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Robust Scheffé tournament over the sets `{H_i > H_j}`.
///
/// For each pair the score `log H_i - log H_j` is trimmed at its empirical `eps` and
/// `1 - eps` quantiles, and the same window is applied to draws from both candidates.
/// The candidate whose conditional mass of `{score > 0}` is closer to the empirical one
/// wins the match.
pub fn hypothesis_test(samples: &[Vec<f64>], candidates: &[GaussianMixture], cfg: &TournamentConfig) -> Result<TournamentResult> {
    let m = candidates.len();
    if m == 0 {
        return Err(Error::EmptyInput("candidate list is empty"));
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput("no test samples"));
    }
    if m == 1 {
        return Ok(TournamentResult { winner: 0, wins: vec![0], winner_worst_gap: 0.0 });
    }
    let draws: Vec<Vec<Vec<f64>>> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, h)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
            let pick = rand::distributions::WeightedIndex::new(&h.weights).expect("validated weights");
            (0..cfg.mc_samples)
                .map(|_| {
                    let c = rand::distributions::Distribution::sample(&pick, &mut rng);
                    h.components[c].draw(&mut rng)
                })
                .collect()
        })
        .collect();
    // densities of every candidate at the empirical points and at every candidate's draws
    let emp: Vec<Vec<f64>> = candidates.par_iter().map(|h| samples.iter().map(|x| h.log_pdf(x)).collect()).collect();
    let at_draws: Vec<Vec<Vec<f64>>> =
        draws.par_iter().map(|ds| candidates.iter().map(|h| ds.iter().map(|x| h.log_pdf(x)).collect()).collect()).collect();
    let trim = cfg.eps.min(0.49);
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let outcomes: Vec<(usize, usize, bool, f64, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut scores: Vec<f64> = emp[i].iter().zip(&emp[j]).map(|(a, b)| a - b).collect();
            let mass = |s: &mut dyn Iterator<Item = f64>, lo: f64, hi: f64| {
                let (mut inside, mut pos) = (0usize, 0usize);
                for v in s {
                    if v >= lo && v <= hi {
                        inside += 1;
                        if v > 0.0 {
                            pos += 1;
                        }
                    }
                }
                if inside == 0 {
                    0.0
                } else {
                    pos as f64 / inside as f64
                }
            };
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            let (lo, hi) = if trim > 0.0 { (quantile(&sorted, trim), quantile(&sorted, 1.0 - trim)) } else { (f64::NEG_INFINITY, f64::INFINITY) };
            let p = mass(&mut scores.drain(..), lo, hi);
            let qi = mass(&mut at_draws[i][i].iter().zip(&at_draws[i][j]).map(|(a, b)| a - b), lo, hi);
            let qj = mass(&mut at_draws[j][i].iter().zip(&at_draws[j][j]).map(|(a, b)| a - b), lo, hi);
            let (gi, gj) = ((qi - p).abs(), (qj - p).abs());
            (i, j, gi <= gj, gi, gj)
        })
        .collect();
    let mut wins = vec![0usize; m];
    let mut worst = vec![0.0f64; m];
    for (i, j, i_wins, gi, gj) in outcomes {
        wins[if i_wins { i } else { j }] += 1;
        worst[i] = worst[i].max(gi);
        worst[j] = worst[j].max(gj);
    }
    let winner = (0..m).max_by(|&a, &b| wins[a].cmp(&wins[b]).then(b.cmp(&a))).unwrap_or(0);
    Ok(TournamentResult { winner, winner_worst_gap: worst[winner], wins })
}

/// `min over permutations pi of max_i (|w_i - w~_pi(i)| + TV(G_i, G~_pi(i)))`.
pub fn permuted_tv_error(truth: &GaussianMixture, est: &GaussianMixture, mc_samples: usize, seed: u64) -> Result<f64> {
    let k = truth.k();
    if est.k() != k {
        return Err(Error::DimensionMismatch { left: k, right: est.k() });
    }
    let mut cost = vec![vec![0.0; k]; k];
    for (i, row) in cost.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            let method = if truth.dim() == 1 { TvMethod::Closed1d } else { TvMethod::MonteCarlo { n: mc_samples, seed } };
            let tv = tv_distance(&truth.components[i], &est.components[j], method)?.value;
            *c = (truth.weights[i] - est.weights[j]).abs() + tv;
        }
    }
    Ok(permutations(k)
        .iter()
        .map(|p| (0..k).map(|i| cost[i][p[i]]).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min))
}

/// Empirical fit from known labels; the statistical floor the pipeline is compared with.
pub fn oracle_fit(samples: &[Vec<f64>], labels: &[usize], k: usize) -> Result<GaussianMixture> {
    let mut groups = vec![Vec::new(); k];
    for (x, &l) in samples.iter().zip(labels) {
        groups.get_mut(l).ok_or_else(|| Error::InvalidArgument(format!("label {l} out of range")))?.push(x.clone());
    }
    let n = samples.len() as f64;
    let comps = groups.iter().map(|g| empirical_gaussian(g)).collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = groups.iter().map(|g| g.len() as f64 / n).collect();
    GaussianMixture::new(normalize(weights), comps)
}

fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// Sample mean and covariance with a small ridge so tiny groups stay usable.
fn empirical_gaussian(points: &[Vec<f64>]) -> Result<Gaussian> {
    let first = points.first().ok_or(Error::EmptyInput("empty group"))?;
    let d = first.len();
    let n = points.len() as f64;
    let mut mu = DVector::zeros(d);
    for p in points {
        mu += DVector::from_column_slice(p) / n;
    }
    let mut cov = DMatrix::zeros(d, d);
    for p in points {
        let c = DVector::from_column_slice(p) - &mu;
        cov.ger(1.0 / n, &c, &c, 1.0);
    }
    let ridge = 1e-6 + 1e-3 * cov.trace() / d as f64;
    cov += DMatrix::identity(d, d) * ridge;
    Gaussian::new(mu, cov)
}

/// One learned hypothesis over a group of rows.
#[derive(Clone, Debug)]
struct Piece {
    mixture: GaussianMixture,
    provenance: String,
}

/// Learns a `kj`-component mixture from one group: robust mean and covariance for a single
/// component, otherwise close-case learning on robust Hermite estimates in isotropic position.
fn learn_group(points: &[Vec<f64>], kj: usize, eps: f64, cfg: &RunConfig, seed: u64) -> Result<Vec<Piece>> {
    let d = points[0].len();
    let mm = robust_mixture_mean_cov(points, eps, cfg.delta)?;
    if kj == 1 {
        let cov = DMatrix::from_fn(d, d, |i, j| mm.cov[i][j]);
        let g = Gaussian::new(DVector::from_column_slice(&mm.mean), cov)?;
        return Ok(vec![Piece { mixture: GaussianMixture::new(vec![1.0], vec![g])?, provenance: "robust mean/cov".into() }]);
    }
    let tr = isotropic_transform(&mm.mean, &mm.cov)?;
    let ys = tr.apply_all(points);
    let c = default_hermite_count(kj)?;
    let hbar = (1..=c).map(|m| robust_hermite(&ys, eps, m)?.polynomial(d)).collect::<Result<Vec<FloatPoly>>>()?;
    let mut cc = CloseCaseConfig::new(kj, d, cfg.eps_prime);
    cc.limits = GuessLimits { delta: cfg.big_delta, c: cfg.c, w_min: cfg.w_min };
    cc.net_step = cfg.net_step;
    cc.starts = cfg.starts;
    cc.seed = seed;
    cc.fallback = cfg.fallback;
    cc.candidate_cap = cfg.candidate_cap;
    let list = close_case_learn(&hbar, &cc)?;
    let mut out = Vec::new();
    for cand in &list.candidates {
        // fits whose covariances leave the PD cone are not densities; skip them
        let Ok(mix) = cand.to_mixture() else { continue };
        out.push(Piece { mixture: tr.untransform_mixture(&mix)?, provenance: format!("close-case k={kj} ({})", cand.provenance) });
    }
    Ok(out)
}

/// Concatenates group hypotheses with group weights; caps the product at `cap`.
fn combine(groups: &[(f64, &[Piece])], cap: usize) -> Vec<Piece> {
    let mut acc: Vec<(Vec<f64>, Vec<Gaussian>, Vec<String>)> = vec![(vec![], vec![], vec![])];
    for &(w, pieces) in groups {
        let mut next = Vec::new();
        'outer: for (ws, gs, pv) in &acc {
            for p in pieces {
                let mut ws = ws.clone();
                let mut gs = gs.clone();
                let mut pv = pv.clone();
                ws.extend(p.mixture.weights.iter().map(|x| x * w));
                gs.extend(p.mixture.components.iter().cloned());
                pv.push(p.provenance.clone());
                next.push((ws, gs, pv));
                if next.len() >= cap {
                    break 'outer;
                }
            }
        }
        acc = next;
    }
    acc.into_iter()
        .filter_map(|(ws, gs, pv)| {
            GaussianMixture::new(normalize(ws), gs).ok().map(|mixture| Piece { mixture, provenance: pv.join(" | ") })
        })
        .collect()
}

/// Compositions of `k` into `l` positive parts.
fn compositions(k: usize, l: usize) -> Vec<Vec<usize>> {
    if l == 0 {
        return if k == 0 { vec![vec![]] } else { vec![] };
    }
    if k < l {
        return vec![];
    }
    let mut out = Vec::new();
    for first in 1..=k - (l - 1) {
        for mut rest in compositions(k - first, l - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn fnv(parts: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for p in parts {
        for b in p.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// Group-learning jobs keyed by member rows and component count, learned once each.
fn learn_jobs(
    rows_of: &[Vec<f64>],
    jobs: &BTreeSet<(Vec<usize>, usize)>,
    cfg: &RunConfig,
    n_part: usize,
    log: &mut Vec<String>,
) -> BTreeMap<(Vec<usize>, usize), Vec<Piece>> {
    let list: Vec<&(Vec<usize>, usize)> = jobs.iter().collect();
    let results: Vec<Result<Vec<Piece>>> = list
        .par_iter()
        .map(|(members, kj)| {
            let pts: Vec<Vec<f64>> = members.iter().map(|&i| rows_of[i].clone()).collect();
            // outliers concentrate when a group is small; scale eps by the group's share
            let eps = (cfg.eps * n_part as f64 / members.len() as f64).min(0.24);
            let seed = fnv(&[cfg.seed, *kj as u64, members.len() as u64, members[0] as u64]);
            learn_group(&pts, *kj, eps, cfg, seed)
        })
        .collect();
    let mut out = BTreeMap::new();
    for (job, res) in list.into_iter().zip(results) {
        match res {
            Ok(p) if !p.is_empty() => {
                out.insert(job.clone(), p);
            }
            Ok(_) => log.push(format!("group of {} rows, k={}: no hypotheses", job.0.len(), job.1)),
            Err(e) => log.push(format!("group of {} rows, k={}: {e}", job.0.len(), job.1)),
        }
    }
    out
}

fn min_group(d: usize) -> usize {
    2 * (d + 2)
}

/// Nearest fraction `j/q` with `q <= a` to each weight, when the result still sums to one.
fn snap_weights(w: &[f64], a: u64) -> Option<Vec<f64>> {
    let snapped: Vec<f64> = w
        .iter()
        .map(|&x| {
            let mut best = (f64::INFINITY, x);
            for q in 1..=a {
                let v = (x * q as f64).round() / q as f64;
                if (v - x).abs() < best.0 && v > 0.0 {
                    best = ((v - x).abs(), v);
                }
            }
            best.1
        })
        .collect();
    ((snapped.iter().sum::<f64>() - 1.0).abs() < 1e-9).then_some(snapped)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseReport {
    pub name: String,
    pub rows: usize,
    pub candidates: usize,
    pub log: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateRecord {
    pub mixture: MixtureJson,
    pub provenance: String,
    /// Mean log-likelihood on the test part after trimming `2 eps` from each tail.
    pub trimmed_log_likelihood: f64,
    /// Tournament wins; `None` when screened out before the tournament.
    pub wins: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub config: RunConfig,
    pub n: usize,
    pub dim: usize,
    pub part_sizes: [usize; 3],
    pub phases: Vec<PhaseReport>,
    /// Canonically ordered; the winner indexes into this list.
    pub candidates: Vec<CandidateRecord>,
    pub winner: usize,
    /// Empirical quantities recorded along the way.
    pub constants: BTreeMap<String, f64>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub winner: GaussianMixture,
    pub candidates: Vec<GaussianMixture>,
    pub report: PipelineReport,
    /// Row indices of the three parts.
    pub parts: [Vec<usize>; 3],
}

/// Trim fraction per tail for the likelihood screen; twice `eps` so that a part holding a
/// little more than its share of outliers cannot swamp the mean.
fn screen_trim(eps: f64) -> f64 {
    (2.0 * eps).min(0.45)
}

fn trimmed_ll(mix: &GaussianMixture, samples: &[Vec<f64>], eps: f64) -> f64 {
    let mut ll: Vec<f64> = samples.iter().map(|x| mix.log_pdf(x)).collect();
    ll.sort_by(f64::total_cmp);
    // both tails: outliers can sit where a candidate puts a sharp component as easily as
    // where it puts no mass at all
    let drop = ((eps * ll.len() as f64).ceil() as usize).min((ll.len() - 1) / 2);
    let kept = &ll[drop..ll.len() - drop];
    kept.iter().sum::<f64>() / kept.len() as f64
}

fn single_component(samples: &[Vec<f64>], cfg: &RunConfig) -> Result<PipelineOutput> {
    let d = samples[0].len();
    let mm = robust_mixture_mean_cov(samples, cfg.eps, cfg.delta)?;
    let g = Gaussian::new(DVector::from_column_slice(&mm.mean), DMatrix::from_fn(d, d, |i, j| mm.cov[i][j]))?;
    let mix = GaussianMixture::new(vec![1.0], vec![g])?;
    let record = CandidateRecord {
        mixture: MixtureJson::from_mixture(&mix),
        provenance: "robust mean/cov".into(),
        trimmed_log_likelihood: trimmed_ll(&mix, samples, screen_trim(cfg.eps)),
        wins: Some(0),
    };
    let mut constants = BTreeMap::new();
    constants.insert("cov_filter_removed".into(), mm.cov_estimate.removed_fraction);
    constants.insert("mean_filter_removed".into(), mm.mean_estimate.removed_fraction);
    let report = PipelineReport {
        config: cfg.clone(),
        n: samples.len(),
        dim: d,
        part_sizes: [samples.len(), 0, 0],
        phases: vec![PhaseReport { name: "robust-moments".into(), rows: samples.len(), candidates: 1, log: vec![] }],
        candidates: vec![record],
        winner: 0,
        constants,
    };
    Ok(PipelineOutput { winner: mix.clone(), candidates: vec![mix], report, parts: [(0..samples.len()).collect(), vec![], vec![]] })
}

/// Runs the four phases on a seeded three-way split of `samples`.
pub fn full_pipeline(samples: &[Vec<f64>], cfg: &RunConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let first = samples.first().ok_or(Error::EmptyInput("no samples"))?;
    let d = first.len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(Error::InvalidArgument("samples have mixed dimensions".into()));
    }
    if cfg.k == 1 {
        return single_component(samples, cfg);
    }
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let na = (cfg.split[0] * n as f64).round() as usize;
    let nb = (cfg.split[1] * n as f64).round() as usize;
    let mut parts = [order[..na].to_vec(), order[na..na + nb].to_vec(), order[na + nb..].to_vec()];
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    if parts.iter().any(|p| p.len() < min_group(d)) {
        return Err(Error::InvalidArgument(format!("{n} samples are too few to split three ways")));
    }
    let part_a: Vec<Vec<f64>> = parts[0].iter().map(|&i| samples[i].clone()).collect();
    let part_b: Vec<Vec<f64>> = parts[1].iter().map(|&i| samples[i].clone()).collect();
    let part_c: Vec<Vec<f64>> = parts[2].iter().map(|&i| samples[i].clone()).collect();
    let mut phases = Vec::new();
    let mut constants = BTreeMap::new();
    let k = cfg.k;

    // phase 1: rough clustering on a subsample of the first part, extended to all of it
    let mut log = Vec::new();
    let sub_n = cfg.cluster_sample.min(part_a.len());
    let sub = &part_a[..sub_n];
    let mut rc = RoughConfig::new(k);
    rc.t = cfg.t;
    rc.delta = cfg.delta;
    rc.eps = cfg.eps;
    rc.eta = cfg.eta;
    rc.mode = cfg.mode;
    rc.d_grid = cfg.d_grid.clone();
    rc.max_rounds = cfg.max_rounds;
    rc.candidate_cap = cfg.candidate_cap;
    rc.seed = cfg.seed;
    let mut clusterings: BTreeSet<Vec<Vec<usize>>> = BTreeSet::new();
    clusterings.insert(vec![(0..sub_n).collect()]);
    match rough_cluster(sub, &rc) {
        Ok(res) => {
            let dg = &res.diagnostics;
            constants.insert("cluster_rounds".into(), dg.rounds as f64);
            constants.insert("cluster_solves".into(), dg.solves as f64);
            constants.insert("cluster_failed_solves".into(), dg.failed_solves as f64);
            if dg.inclusion_draws > 0 {
                constants.insert("cluster_clamp_rate".into(), dg.clamp_events as f64 / dg.inclusion_draws as f64);
            }
            if let Some(b) = dg.bound_used.first() {
                constants.insert("cluster_bound".into(), *b);
            }
            log.extend(dg.log.iter().cloned());
            for c in res.candidates {
                let mut subsets: Vec<Vec<usize>> = c.subsets.into_iter().filter(|s| !s.is_empty()).collect();
                subsets.iter_mut().for_each(|s| s.sort_unstable());
                subsets.sort();
                if !subsets.is_empty() && subsets.len() <= k {
                    clusterings.insert(subsets);
                }
            }
        }
        Err(e) => log.push(format!("rough clustering failed: {e}; continuing with the trivial clustering")),
    }
    let mut extended: BTreeSet<Vec<Vec<usize>>> = BTreeSet::new();
    for subsets in &clusterings {
        let fits: Result<Vec<Gaussian>> =
            subsets.iter().map(|s| empirical_gaussian(&s.iter().map(|&i| sub[i].clone()).collect::<Vec<_>>())).collect();
        let Ok(fits) = fits else { continue };
        let re = ml_reassign(&part_a, &fits)?;
        let groups: Vec<Vec<usize>> = re.parts.into_iter().filter(|p| p.len() >= min_group(d)).collect();
        if !groups.is_empty() {
            extended.insert(groups);
        }
    }
    phases.push(PhaseReport { name: "rough-clustering".into(), rows: sub_n, candidates: extended.len(), log });

    // phase 2: constant-accuracy learning on each extended clustering and allocation of k
    let mut log = Vec::new();
    let mut plans: Vec<(Vec<(Vec<usize>, usize)>, String)> = Vec::new();
    for groups in &extended {
        for comp in compositions(k, groups.len()) {
            let plan: Vec<(Vec<usize>, usize)> = groups.iter().cloned().zip(comp.iter().copied()).collect();
            plans.push((plan, format!("clusters {:?} allocation {:?}", groups.iter().map(|g| g.len()).collect::<Vec<_>>(), comp)));
        }
    }
    let jobs: BTreeSet<(Vec<usize>, usize)> = plans.iter().flat_map(|(p, _)| p.iter().cloned()).collect();
    let learned = learn_jobs(&part_a, &jobs, cfg, part_a.len(), &mut log);
    let mut rough: Vec<Piece> = Vec::new();
    for (plan, label) in &plans {
        let Some(groups) = plan.iter().map(|job| learned.get(job).map(|p| (job.0.len() as f64 / part_a.len() as f64, p.as_slice()))).collect::<Option<Vec<_>>>()
        else {
            continue;
        };
        for mut p in combine(&groups, cfg.candidate_cap) {
            p.provenance = format!("constant-accuracy: {label}: {}", p.provenance);
            rough.push(p);
        }
    }
    rough.truncate(cfg.candidate_cap);
    log.push(format!("{} learning jobs, {} hypotheses", jobs.len(), rough.len()));
    phases.push(PhaseReport { name: "constant-accuracy".into(), rows: part_a.len(), candidates: rough.len(), log });

    // phase 3: maximum-likelihood reassignment of the second part and relearning over every
    // partition of the components
    let mut log = Vec::new();
    let partitions = set_partitions(k);
    let mut plans: Vec<(Vec<(Vec<usize>, usize)>, String)> = Vec::new();
    let mut ties = 0;
    for (ri, r) in rough.iter().enumerate() {
        let re = ml_reassign(&part_b, &r.mixture.components)?;
        ties += re.ties;
        for labels in &partitions {
            let l = labels.iter().max().map_or(0, |m| m + 1);
            let mut plan = Vec::new();
            for g in 0..l {
                let comps: Vec<usize> = (0..k).filter(|&i| labels[i] == g).collect();
                let mut members: Vec<usize> = comps.iter().flat_map(|&i| re.parts[i].iter().copied()).collect();
                members.sort_unstable();
                plan.push((members, comps.len()));
            }
            if plan.iter().all(|(m, _)| m.len() >= min_group(d)) {
                plans.push((plan, format!("from hypothesis {ri}, partition {labels:?}")));
            }
        }
    }
    constants.insert("reassignment_ties".into(), ties as f64);
    let jobs: BTreeSet<(Vec<usize>, usize)> = plans.iter().flat_map(|(p, _)| p.iter().cloned()).collect();
    let learned = learn_jobs(&part_b, &jobs, cfg, part_b.len(), &mut log);
    let mut polished: Vec<Piece> = Vec::new();
    let mut seen_plans = BTreeSet::new();
    for (plan, label) in &plans {
        if !seen_plans.insert(plan.clone()) {
            continue;
        }
        let Some(groups) = plan.iter().map(|job| learned.get(job).map(|p| (job.0.len() as f64 / part_b.len() as f64, p.as_slice()))).collect::<Option<Vec<_>>>()
        else {
            continue;
        };
        for mut p in combine(&groups, cfg.candidate_cap) {
            p.provenance = format!("polished: {label}: {}", p.provenance);
            polished.push(p);
        }
    }
    polished.truncate(cfg.candidate_cap);
    log.push(format!("{} learning jobs, {} hypotheses", jobs.len(), polished.len()));
    phases.push(PhaseReport { name: "reassign-and-relearn".into(), rows: part_b.len(), candidates: polished.len(), log });

    // phase 4: canonical candidate list, likelihood screen, and the tournament
    let mut log = Vec::new();
    let total = polished.len() + rough.len();
    let mut pool: Vec<Piece> =
        polished.into_iter().chain(rough).filter(|p| p.mixture.k() == k && p.mixture.weights.iter().all(|&w| w >= cfg.w_min)).collect();
    log.push(format!("{} of {total} hypotheses respect k and w_min", pool.len()));
    if let Some(a) = cfg.weight_denominator {
        let snapped: Vec<Piece> = pool
            .iter()
            .filter_map(|p| {
                let w = snap_weights(&p.mixture.weights, a)?;
                let mixture = GaussianMixture::new(w, p.mixture.components.clone()).ok()?;
                Some(Piece { mixture, provenance: format!("{} (weights snapped to denominator <= {a})", p.provenance) })
            })
            .collect();
        pool.extend(snapped);
    }
    let mut keyed: Vec<(String, Piece)> =
        pool.into_iter().map(|p| (serde_json::to_string(&MixtureJson::from_mixture(&p.mixture)).unwrap_or_default(), p)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.dedup_by(|a, b| a.0 == b.0);
    keyed.truncate(cfg.candidate_cap);
    if keyed.is_empty() {
        let mut all_logs: Vec<String> = phases.iter().flat_map(|p| p.log.iter().cloned()).collect();
        all_logs.truncate(20);
        return Err(Error::NoCandidates(all_logs.join("; ")));
    }
    let candidates: Vec<GaussianMixture> = keyed.iter().map(|(_, p)| p.mixture.clone()).collect();
    let lls: Vec<f64> = candidates.par_iter().map(|m| trimmed_ll(m, &part_c, screen_trim(cfg.eps))).collect();
    let mut screen: Vec<usize> = (0..candidates.len()).filter(|&i| lls[i].is_finite()).collect();
    screen.sort_by(|&a, &b| lls[b].total_cmp(&lls[a]).then(a.cmp(&b)));
    screen.truncate(cfg.tournament_size);
    screen.sort_unstable();
    if screen.is_empty() {
        screen.push(0);
    }
    let entrants: Vec<GaussianMixture> = screen.iter().map(|&i| candidates[i].clone()).collect();
    let tc = TournamentConfig { eps: cfg.eps, mc_samples: cfg.mc_samples, seed: fnv(&[cfg.seed, 0x5eed]) };
    let t = hypothesis_test(&part_c, &entrants, &tc)?;
    let winner = screen[t.winner];
    constants.insert("tournament_winner_worst_gap".into(), t.winner_worst_gap);
    constants.insert("tournament_entrants".into(), entrants.len() as f64);
    log.push(format!("{} candidates, {} entered the tournament, winner {winner} with {} wins", candidates.len(), entrants.len(), t.wins[t.winner]));
    phases.push(PhaseReport { name: "hypothesis-test".into(), rows: part_c.len(), candidates: candidates.len(), log });

    let mut wins: Vec<Option<usize>> = vec![None; candidates.len()];
    for (slot, &i) in screen.iter().enumerate() {
        wins[i] = Some(t.wins[slot]);
    }
    let records = keyed
        .iter()
        .zip(&lls)
        .zip(&wins)
        .map(|(((_, p), &ll), &w)| CandidateRecord {
            mixture: MixtureJson::from_mixture(&p.mixture),
            provenance: p.provenance.clone(),
            trimmed_log_likelihood: ll,
            wins: w,
        })
        .collect();
    let report = PipelineReport {
        config: cfg.clone(),
        n,
        dim: d,
        part_sizes: [parts[0].len(), parts[1].len(), parts[2].len()],
        phases,
        candidates: records,
        winner,
        constants,
    };
    Ok(PipelineOutput { winner: candidates[winner].clone(), candidates, report, parts })
}
