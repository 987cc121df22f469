//! Rough clustering by pseudoexpectation sampling, plus the sample-condition checker and
//! the partition routines used to validate outcomes on synthetic instances.

use std::collections::{BTreeSet, HashSet};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{c_closeness, sqrt_and_inv_sqrt, tv_distance, Gaussian, GaussianMixture, TvMethod};
use crate::poly::{basis_size, monomials_of_degree, FloatPoly, Monomial};
use crate::pseudoexp::{build_clustering_program, solve, ClusteringConfig, ClusteringMode, Objective, PseudoExpectation, SolveSettings, DEFAULT_MONOMIAL_CAP};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoughConfig {
    pub k: usize,
    pub t: u32,
    pub delta: f64,
    pub eps: f64,
    pub eta: f64,
    pub mode: ClusteringMode,
    /// Values tried for the covariance bound; the first feasible one is used.
    pub d_grid: Vec<f64>,
    /// Hard cap on rounds per level on top of `100 k log(1/eta)`.
    pub max_rounds: usize,
    /// Largest list for which every subset is recursed on.
    pub subset_cap: usize,
    pub candidate_cap: usize,
    pub seed: u64,
}

impl RoughConfig {
    pub fn new(k: usize) -> Self {
        RoughConfig {
            k,
            t: 4,
            delta: 0.1,
            eps: 0.0,
            eta: 0.1,
            mode: ClusteringMode::Reduced,
            d_grid: vec![2.0, 8.0, 32.0],
            max_rounds: 40,
            subset_cap: 12,
            candidate_cap: 100_000,
            seed: 0,
        }
    }

    pub fn rounds(&self, k: usize) -> usize {
        let nominal = (100.0 * k as f64 * (1.0 / self.eta).ln()).ceil().max(1.0) as usize;
        nominal.min(self.max_rounds)
    }
}

/// Index sets over the input samples; they need not cover or partition them.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusteringCandidate {
    pub subsets: Vec<Vec<usize>>,
    pub provenance: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RoughDiagnostics {
    pub rounds: usize,
    pub solves: usize,
    pub failed_solves: usize,
    pub inclusion_draws: usize,
    pub clamp_events: usize,
    pub bound_used: Vec<f64>,
    pub degree_used: Vec<u32>,
    pub branches: usize,
    pub log: Vec<String>,
}

impl RoughDiagnostics {
    fn merge(&mut self, o: RoughDiagnostics) {
        self.rounds += o.rounds;
        self.solves += o.solves;
        self.failed_solves += o.failed_solves;
        self.inclusion_draws += o.inclusion_draws;
        self.clamp_events += o.clamp_events;
        self.bound_used.extend(o.bound_used);
        self.degree_used.extend(o.degree_used);
        self.branches += o.branches;
        self.log.extend(o.log);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RoughResult {
    pub candidates: Vec<ClusteringCandidate>,
    pub diagnostics: RoughDiagnostics,
}

fn wmono(n: usize, i: usize, j: Option<usize>) -> Monomial {
    let mut e = vec![0u32; n];
    e[i] += 1;
    if let Some(j) = j {
        e[j] += 1;
    }
    Monomial::new(e)
}

/// Inclusion ratios further than this outside `[0, 1]` are counted as clamp events; smaller
/// excursions are the normal slack of a low-degree relaxation solved to finite accuracy.
pub const CLAMP_TOL: f64 = 1e-2;

/// One draw of the sampling rule: anchor `i` with probability proportional to `E~[w_i]`, then
/// each `j` independently with probability `E~[w_i w_j] / E~[w_i]` clamped to `[0, 1]`.
/// Returns the anchor, the set, and how many probabilities needed clamping.
pub fn sample_set<R: Rng>(pe: &PseudoExpectation, n: usize, rng: &mut R) -> Result<Option<(usize, Vec<usize>, usize)>> {
    let ew: Vec<f64> = (0..n).map(|i| pe.value(&wmono(pe.nvars(), i, None)).map(|v| v.max(0.0))).collect::<Result<_>>()?;
    let total: f64 = ew.iter().sum();
    if total <= 0.0 {
        return Ok(None);
    }
    let mut u = rng.gen::<f64>() * total;
    let mut anchor = n - 1;
    for (i, &v) in ew.iter().enumerate() {
        if u < v {
            anchor = i;
            break;
        }
        u -= v;
    }
    let mut set = Vec::new();
    let mut clamps = 0;
    for j in 0..n {
        let raw = pe.value(&wmono(pe.nvars(), anchor, Some(j)))? / ew[anchor];
        if !(-CLAMP_TOL..=1.0 + CLAMP_TOL).contains(&raw) {
            clamps += 1;
        }
        if rng.gen::<f64>() < raw.clamp(0.0, 1.0) {
            set.push(j);
        }
    }
    Ok(Some((anchor, set, clamps)))
}

/// `E[|R|]` under the sampling rule for a fixed pseudoexpectation.
pub fn expected_set_size(pe: &PseudoExpectation, n: usize) -> Result<f64> {
    let nv = pe.nvars();
    let ew: Vec<f64> = (0..n).map(|i| pe.value(&wmono(nv, i, None)).map(|v| v.max(0.0))).collect::<Result<_>>()?;
    let total: f64 = ew.iter().sum();
    let mut s = 0.0;
    for i in 0..n {
        if ew[i] <= 0.0 {
            continue;
        }
        for j in 0..n {
            s += ew[i] / total * (pe.value(&wmono(nv, i, Some(j)))? / ew[i]).clamp(0.0, 1.0);
        }
    }
    Ok(s)
}

fn branch_seed(seed: u64, idx: &[usize], k: usize) -> u64 {
    // FNV-1a over the branch identity keeps branches independent of scheduling order
    let mut h: u64 = 0xcbf29ce484222325 ^ seed;
    for &i in idx.iter().chain(std::iter::once(&k)) {
        h ^= i as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Largest even degree `<= t` whose moment basis fits the monomial cap.
fn fitted_degree(n: usize, t: u32) -> u32 {
    let mut deg = t.max(2) & !1;
    while deg > 2 && basis_size(n, deg) > DEFAULT_MONOMIAL_CAP {
        deg -= 2;
    }
    deg
}

/// Clusterings tagged with the recursion path that produced them.
type Labeled = Vec<(String, Vec<Vec<usize>>)>;

/// Rough clustering of `samples` into candidate clusterings for `cfg.k` components.
pub fn rough_cluster(samples: &[Vec<f64>], cfg: &RoughConfig) -> Result<RoughResult> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples"));
    }
    if cfg.k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if cfg.mode == ClusteringMode::Full && samples.len() > crate::pseudoexp::FULL_MODE_MAX_N {
        return Err(Error::SizeCap { size: samples.len(), cap: crate::pseudoexp::FULL_MODE_MAX_N });
    }
    let idx: Vec<usize> = (0..samples.len()).collect();
    let (clusterings, diag) = recurse(samples, &idx, cfg.k, cfg, "root".into())?;
    let mut seen = HashSet::new();
    let mut candidates = Vec::new();
    for (path, c) in clusterings {
        let mut key: Vec<Vec<usize>> = c.iter().map(|s| s.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()).collect();
        key.sort();
        if seen.insert(key.clone()) {
            candidates.push(ClusteringCandidate { subsets: key, provenance: path });
        }
    }
    candidates.sort();
    candidates.truncate(cfg.candidate_cap);
    Ok(RoughResult { candidates, diagnostics: diag })
}

fn recurse(samples: &[Vec<f64>], idx: &[usize], k: usize, cfg: &RoughConfig, path: String) -> Result<(Labeled, RoughDiagnostics)> {
    let mut diag = RoughDiagnostics { branches: 1, ..Default::default() };
    let whole = (format!("{path}/whole"), vec![idx.to_vec()]);
    if k <= 1 || idx.len() < 2 * k {
        return Ok((vec![whole], diag));
    }
    let list = sample_round_sets(samples, idx, k, cfg, &mut diag)?;
    let m = list.len();
    let mut unions: Vec<Vec<usize>> = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |sel: &[usize]| {
        let u: BTreeSet<usize> = sel.iter().flat_map(|&r| list[r].iter().copied()).collect();
        if !u.is_empty() && u.len() < idx.len() && seen.insert(u.clone()) {
            unions.push(u.into_iter().collect());
        }
    };
    if m <= cfg.subset_cap {
        for mask in 1u64..(1u64 << m) {
            let sel: Vec<usize> = (0..m).filter(|&r| mask >> r & 1 == 1).collect();
            push(&sel);
        }
    } else {
        diag.log.push(format!("{path}: {m} sets, recursing on contiguous runs only"));
        for a in 0..m {
            for b in a..m {
                push(&(a..=b).collect::<Vec<_>>());
            }
        }
    }
    let branches: Vec<Result<(Labeled, RoughDiagnostics)>> = unions
        .par_iter()
        .enumerate()
        .map(|(ui, u)| {
            let inside: HashSet<usize> = u.iter().copied().collect();
            let rest: Vec<usize> = idx.iter().copied().filter(|i| !inside.contains(i)).collect();
            let mut out = Vec::new();
            let mut d = RoughDiagnostics::default();
            for kp in 1..k {
                let (left, dl) = recurse(samples, u, kp, cfg, format!("{path}/u{ui}k{kp}"))?;
                let (right, dr) = recurse(samples, &rest, k - kp, cfg, format!("{path}/c{ui}k{}", k - kp))?;
                d.merge(dl);
                d.merge(dr);
                for (pl, l) in &left {
                    for (_, r) in &right {
                        let mut c = l.clone();
                        c.extend(r.iter().cloned());
                        out.push((pl.clone(), c));
                    }
                }
            }
            Ok((out, d))
        })
        .collect();
    let mut result = vec![whole];
    for b in branches {
        let (cands, d) = b?;
        diag.merge(d);
        for pc in cands {
            result.push(pc);
            if result.len() > cfg.candidate_cap {
                return Err(Error::SizeCap { size: result.len(), cap: cfg.candidate_cap });
            }
        }
    }
    Ok((result, diag))
}

/// The sampling loop at one level; returns the list `L` in original indices.
fn sample_round_sets(samples: &[Vec<f64>], idx: &[usize], k: usize, cfg: &RoughConfig, diag: &mut RoughDiagnostics) -> Result<Vec<Vec<usize>>> {
    let sub: Vec<Vec<f64>> = idx.iter().map(|&i| samples[i].clone()).collect();
    let n = sub.len();
    let t = match cfg.mode {
        ClusteringMode::Reduced => fitted_degree(n, cfg.t),
        ClusteringMode::Full => cfg.t,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(branch_seed(cfg.seed, idx, k));
    let settings = SolveSettings::default();
    let objective = |covered: &[bool], nv: usize| {
        let mut f = FloatPoly::zero(nv);
        for i in (0..n).filter(|&i| !covered[i]) {
            f.add_term(wmono(nv, i, None), 1.0);
        }
        Objective::Maximize(f)
    };
    // pick the covariance bound from the grid
    let mut program = None;
    for &bound in &cfg.d_grid {
        let pc = ClusteringConfig { mode: cfg.mode, t, delta: cfg.delta, eps: cfg.eps, d_bound: bound };
        let prog = build_clustering_program(&sub, k, &pc)?;
        diag.solves += 1;
        match solve(&prog.system, &objective(&vec![false; n], prog.system.nvars()), &settings) {
            Ok(out) if out.is_feasible() => {
                diag.bound_used.push(bound);
                diag.degree_used.push(prog.system.degree);
                program = Some((prog, out));
                break;
            }
            Ok(_) => {}
            Err(e) => {
                diag.failed_solves += 1;
                diag.log.push(format!("bound {bound}: {e}"));
            }
        }
    }
    let Some((prog, first)) = program else {
        diag.log.push(format!("no feasible bound for n = {n}, k = {k}"));
        return Ok(vec![]);
    };
    let nv = prog.system.nvars();
    let mut covered = vec![false; n];
    let mut list: Vec<Vec<usize>> = Vec::new();
    let mut current = Some(first);
    for round in 0..cfg.rounds(k) {
        let out = match current.take() {
            Some(o) => o,
            None => {
                diag.solves += 1;
                match solve(&prog.system, &objective(&covered, nv), &settings) {
                    Ok(o) => o,
                    Err(e) => {
                        // the next round would pose the same problem again
                        diag.failed_solves += 1;
                        diag.log.push(format!("round {round}: {e}; stopping"));
                        break;
                    }
                }
            }
        };
        let Some(pe) = out.pseudoexpectation() else {
            diag.log.push(format!("round {round}: infeasible"));
            continue;
        };
        diag.rounds += 1;
        // once no pseudoexpectation puts half a point of mass outside L, more rounds only resample
        let uncovered: f64 = (0..n).filter(|&i| !covered[i]).map(|i| pe.value(&wmono(nv, i, None)).unwrap_or(0.0)).sum();
        if round > 0 && uncovered < 0.5 {
            diag.log.push(format!("stopped after {round} rounds: uncovered mass {uncovered:.3}"));
            break;
        }
        if let Some((_, set, clamps)) = sample_set(pe, n, &mut rng)? {
            diag.inclusion_draws += n;
            diag.clamp_events += clamps;
            for &j in &set {
                covered[j] = true;
            }
            list.push(set.into_iter().map(|j| idx[j]).collect());
        }
    }
    Ok(list)
}

/// Fraction of the `mask`ed points whose cluster disagrees with `labels` under the best
/// matching of subsets to labels; points in no subset count as errors, points in several
/// go to the first.
pub fn misclassification(candidate: &[Vec<usize>], labels: &[usize], mask: Option<&[bool]>, k: usize) -> f64 {
    let n = labels.len();
    let mut assign = vec![usize::MAX; n];
    for (s, set) in candidate.iter().enumerate() {
        for &i in set {
            if i < n && assign[i] == usize::MAX {
                assign[i] = s;
            }
        }
    }
    let considered: Vec<usize> = (0..n).filter(|&i| mask.map_or(true, |m| m[i])).collect();
    if considered.is_empty() {
        return 0.0;
    }
    let size = candidate.len().max(k);
    let mut best = usize::MAX;
    for perm in crate::param::permutations(size) {
        let wrong = considered.iter().filter(|&&i| assign[i] == usize::MAX || perm[assign[i]] != labels[i]).count();
        best = best.min(wrong);
    }
    best as f64 / considered.len() as f64
}

// ---------------------------------------------------------------------------------------
// sample conditions

const E_CONST: f64 = 4.0;
const F_CONST: f64 = 0.1;
const G_CONST: f64 = 4.0;
const PAIR_BUDGET: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionsConfig {
    pub delta: f64,
    pub psi: f64,
    pub t: u32,
    pub n_directions: usize,
    pub seed: u64,
}

impl Default for ConditionsConfig {
    fn default() -> Self {
        ConditionsConfig { delta: 0.1, psi: 0.1, t: 2, n_directions: 256, seed: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectionCheck {
    pub part: usize,
    /// Smallest observed `|E_a(v)| / (n/k)`, `|F_a(v)| / (n/k)^2`, `|G_a(A)| / (n/k)^2`.
    pub e_fraction: f64,
    pub f_fraction: f64,
    pub g_fraction: f64,
    pub worst_direction: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeterministicConditionsReport {
    pub partition: Vec<Vec<usize>>,
    /// `moment_residuals[i][s]` for `s = 0..=t`.
    pub moment_residuals: Vec<Vec<f64>>,
    pub moment_threshold: f64,
    pub condition1: bool,
    pub direction_checks: Vec<DirectionCheck>,
    /// Condition 2 over the sampled directions only; the supremum is not verifiable.
    pub condition2_sampled: bool,
}

fn double_factorial_odd(e: u32) -> f64 {
    // (e - 1)!! for even e
    (1..e).step_by(2).map(|x| x as f64).product()
}

fn multinomial(a: &Monomial) -> f64 {
    let s: u32 = a.exponents().iter().sum();
    let mut r: f64 = (1..=s).map(|x| x as f64).product();
    for &e in a.exponents() {
        r /= (1..=e).map(|x| x as f64).product::<f64>();
    }
    r
}

fn part_moments(pts: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = pts[0].len();
    let m = pts.len() as f64;
    let mut mu = DVector::zeros(d);
    for p in pts {
        mu += DVector::from_column_slice(p) / m;
    }
    let mut c = DMatrix::zeros(d, d);
    for p in pts {
        let z = DVector::from_column_slice(p) - &mu;
        c += &z * z.transpose() / m;
    }
    Ok((mu, c))
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        DVector::from_fn(d, |i, _| if i == 0 { 1.0 } else { 0.0 })
    }
}

/// Checks the moment condition exactly and the direction conditions on sampled directions.
/// `reference` supplies the true components; otherwise each part's empirical moments stand in.
pub fn check_deterministic_conditions(
    samples: &[Vec<f64>],
    partition: &[Vec<usize>],
    cfg: &ConditionsConfig,
    reference: Option<&[Gaussian]>,
) -> Result<DeterministicConditionsReport> {
    if partition.iter().any(|p| p.is_empty()) || partition.is_empty() {
        return Err(Error::EmptyInput("empty part"));
    }
    let d = samples[0].len();
    let k = partition.len();
    let n: usize = partition.iter().map(|p| p.len()).sum();
    let size = n as f64 / k as f64;
    let threshold = (d as f64).powi(-2 * cfg.t as i32) * cfg.delta;
    let mut residuals = Vec::with_capacity(k);
    for part in partition {
        let pts: Vec<Vec<f64>> = part.iter().map(|&i| samples[i].clone()).collect();
        let (mu, cov) = part_moments(&pts)?;
        let (_, inv) = sqrt_and_inv_sqrt(&cov)?;
        let z: Vec<DVector<f64>> = pts.iter().map(|p| &inv * (DVector::from_column_slice(p) - &mu)).collect();
        let mut per_s = Vec::new();
        for s in 0..=cfg.t {
            let mut r = 0.0;
            for a in monomials_of_degree(d, s) {
                let emp: f64 = z.iter().map(|zi| a.exponents().iter().enumerate().map(|(c, &e)| zi[c].powi(e as i32)).product::<f64>()).sum::<f64>() / size;
                let gauss = if a.exponents().iter().all(|e| e % 2 == 0) { a.exponents().iter().map(|&e| double_factorial_odd(e)).product() } else { 0.0 };
                r += multinomial(&a) * (emp - gauss).powi(2);
            }
            per_s.push(r);
        }
        residuals.push(per_s);
    }
    let condition1 = residuals.iter().flatten().all(|&r| r <= threshold);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let log_psi = (1.0 / cfg.psi).ln();
    let mut checks = Vec::new();
    for (a, part) in partition.iter().enumerate() {
        let pts: Vec<DVector<f64>> = part.iter().map(|&i| DVector::from_column_slice(&samples[i])).collect();
        let (mu, sig) = match reference {
            Some(r) => (r[a].mean().clone(), r[a].cov().clone()),
            None => part_moments(&part.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>())?,
        };
        let mut dirs: Vec<DVector<f64>> = (0..cfg.n_directions).map(|_| random_unit(&mut rng, d)).collect();
        dirs.extend((0..d).map(|i| DVector::from_fn(d, |r, _| if r == i { 1.0 } else { 0.0 })));
        let eig = SymmetricEigen::new(sig.clone());
        dirs.extend(eig.eigenvectors.column_iter().map(|c| c.into_owned()));
        // directions toward the farthest points are where planted outliers show up
        let mut far: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, p)| ((p - &mu).norm(), i)).collect();
        far.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for &(r, i) in far.iter().take(3) {
            if r > 0.0 {
                dirs.push((&pts[i] - &mu) / r);
            }
        }
        let m = pts.len();
        let pairs: Vec<(usize, usize)> = if m * m <= PAIR_BUDGET {
            (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).collect()
        } else {
            (0..PAIR_BUDGET).map(|_| (rng.gen_range(0..m), rng.gen_range(0..m))).collect()
        };
        let pair_scale = (m * m) as f64 / pairs.len() as f64;
        let (mut e_min, mut f_min, mut g_min) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut worst = dirs[0].clone();
        for v in &dirs {
            let var = (v.transpose() * &sig * v)[(0, 0)].max(1e-300);
            let proj: Vec<f64> = pts.iter().map(|p| p.dot(v)).collect();
            let mv = mu.dot(v);
            let e = proj.iter().filter(|&&x| (x - mv).powi(2) <= E_CONST * log_psi * var).count() as f64 / size;
            let f = pairs.iter().filter(|&&(i, j)| (proj[i] - proj[j]).powi(2) >= F_CONST * cfg.psi * var).count() as f64 * pair_scale / (size * size);
            if e < e_min {
                e_min = e;
                worst = v.clone();
            }
            f_min = f_min.min(f);
        }
        let mut mats: Vec<DMatrix<f64>> = dirs.iter().take(cfg.n_directions.min(64) + d).map(|v| v * v.transpose()).collect();
        for _ in 0..cfg.n_directions.min(64) {
            let b = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            mats.push((&b + b.transpose()) * 0.5);
        }
        for am in &mats {
            let center = 2.0 * (&sig.transpose() * am).trace();
            let width = G_CONST * log_psi * (&sig * am).norm();
            let g = pairs
                .iter()
                .filter(|&&(i, j)| {
                    let dlt = &pts[i] - &pts[j];
                    ((dlt.transpose() * am * &dlt)[(0, 0)] - center).abs() <= width
                })
                .count() as f64
                * pair_scale
                / (size * size);
            g_min = g_min.min(g);
        }
        checks.push(DirectionCheck { part: a, e_fraction: e_min, f_fraction: f_min, g_fraction: g_min, worst_direction: worst.iter().copied().collect() });
    }
    let need = 1.0 - cfg.psi;
    let condition2_sampled = checks.iter().all(|c| c.e_fraction >= need && c.f_fraction >= need && c.g_fraction >= need);
    Ok(DeterministicConditionsReport {
        partition: partition.to_vec(),
        moment_residuals: residuals,
        moment_threshold: threshold,
        condition1,
        direction_checks: checks,
        condition2_sampled,
    })
}

// ---------------------------------------------------------------------------------------
// partitions of the components

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosenessPartition {
    pub parts: Vec<Vec<usize>>,
    /// Cross-part pairs have `TV >= 1 - eps^kappa`; parts are connected by `TV <= 1 - eps^(c kappa)`.
    pub kappa: f64,
}

fn components(k: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut label: Vec<usize> = (0..k).collect();
    for i in 0..k {
        for j in i + 1..k {
            if edge(i, j) {
                let (a, b) = (label[i], label[j]);
                if a != b {
                    let (lo, hi) = (a.min(b), a.max(b));
                    label.iter_mut().filter(|l| **l == hi).for_each(|l| *l = lo);
                }
            }
        }
    }
    let mut parts: Vec<Vec<usize>> = Vec::new();
    let mut roots: Vec<usize> = label.clone();
    roots.sort();
    roots.dedup();
    for r in roots {
        parts.push((0..k).filter(|&i| label[i] == r).collect());
    }
    parts
}

/// Walks the scales `eps^(c^k), eps^(c^(k-1)), ...` (`0 < c < 1`), taking connected components
/// of the graph `TV <= 1 - eps^(c^j)` until every cross pair has `TV >= 1 - eps^(c^(j-1))`.
pub fn find_closeness_partition(mix: &GaussianMixture, eps: f64, c: f64, method: TvMethod) -> Result<ClosenessPartition> {
    if !(0.0 < c && c < 1.0) || !(0.0 < eps && eps < 1.0) {
        return Err(Error::InvalidArgument("need 0 < c < 1 and 0 < eps < 1".into()));
    }
    let k = mix.k();
    let mut overlap = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let m = match method {
                TvMethod::Closed1d if mix.dim() != 1 => TvMethod::MonteCarlo { n: 20_000, seed: 1 },
                other => other,
            };
            let tv = tv_distance(&mix.components[i], &mix.components[j], m)?.value;
            overlap[i][j] = 1.0 - tv;
            overlap[j][i] = 1.0 - tv;
        }
    }
    for j in (1..=k as i32).rev() {
        let f = eps.powf(c.powi(j));
        let parts = components(k, |a, b| overlap[a][b] >= f);
        let kappa = c.powi(j - 1);
        let cross_ok = parts.iter().enumerate().all(|(pi, p)| {
            parts.iter().skip(pi + 1).all(|q| p.iter().all(|&a| q.iter().all(|&b| overlap[a][b] <= eps.powf(kappa))))
        });
        if cross_ok {
            return Ok(ClosenessPartition { parts, kappa });
        }
    }
    Ok(ClosenessPartition { parts: vec![(0..k).collect()], kappa: 1.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparationCase {
    Mean,
    Variance,
    Covariance,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionSplit {
    pub s: Vec<usize>,
    pub t: Vec<usize>,
    pub case: SeparationCase,
    pub witness: Option<Vec<f64>>,
}

fn quad(v: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (v.transpose() * m * v)[(0, 0)]
}

/// Looks for a split `S, T` of the components with every cross pair not `C`-close and one of
/// the three separation mechanisms holding for all cross pairs. `None` when every pair is
/// `C`-close or no certified split exists.
pub fn exists_partition_diagnostic(mix: &GaussianMixture, c: f64) -> Result<Option<PartitionSplit>> {
    let k = mix.k();
    let g = &mix.components;
    let mut far = vec![vec![false; k]; k];
    let mut any = false;
    for i in 0..k {
        for j in i + 1..k {
            let cl = !c_closeness(&g[i], &g[j], c)?.close;
            far[i][j] = cl;
            far[j][i] = cl;
            any |= cl;
        }
    }
    if !any {
        return Ok(None);
    }
    let (_, sigma) = mix.moments();
    let kf = k as f64;
    for mask in 1u64..(1u64 << k) - 1 {
        let s: Vec<usize> = (0..k).filter(|&i| mask >> i & 1 == 1).collect();
        let t: Vec<usize> = (0..k).filter(|&i| mask >> i & 1 == 0).collect();
        if !s.iter().all(|&a| t.iter().all(|&b| far[a][b])) {
            continue;
        }
        let mut dirs: Vec<DVector<f64>> = Vec::new();
        for &a in &s {
            for &b in &t {
                let dm = g[a].mean() - g[b].mean();
                if let Some(ch) = (g[a].cov() + g[b].cov()).cholesky() {
                    dirs.push(ch.solve(&dm));
                }
                dirs.push(dm);
                if let Ok((_, inv)) = sqrt_and_inv_sqrt(g[b].cov()) {
                    let e = SymmetricEigen::new(&inv * g[a].cov() * &inv);
                    dirs.extend(e.eigenvectors.column_iter().map(|v| &inv * v));
                }
            }
        }
        dirs.retain(|v| v.norm() > 1e-300);
        for v in &dirs {
            let ok = s.iter().all(|&a| {
                t.iter().all(|&b| {
                    let proj = (g[a].mean() - g[b].mean()).dot(v);
                    proj > 0.0 && proj * proj >= (c * quad(v, &(g[a].cov() + g[b].cov()))).max(quad(v, &sigma) / (kf * kf))
                })
            });
            if ok {
                return Ok(Some(PartitionSplit { s, t, case: SeparationCase::Mean, witness: Some(unit(v)) }));
            }
        }
        for v in &dirs {
            let ok = s.iter().all(|&a| {
                t.iter().all(|&b| {
                    let va = quad(v, g[a].cov());
                    va / quad(v, g[b].cov()) >= c && va / quad(v, &sigma) >= kf.powf(-2.0 * c * kf)
                })
            });
            if ok {
                return Ok(Some(PartitionSplit { s, t, case: SeparationCase::Variance, witness: Some(unit(v)) }));
            }
        }
        let cov_ok = s.iter().all(|&a| {
            t.iter().all(|&b| {
                let Ok((sa, ia)) = sqrt_and_inv_sqrt(g[a].cov()) else { return false };
                let inner = DMatrix::identity(mix.dim(), mix.dim()) - &ia * g[b].cov() * &ia;
                let amat = &ia * &inner * &ia;
                let lhs = inner.norm_squared();
                let side = |m: &DMatrix<f64>| sqrt_and_inv_sqrt(m).map(|(r, _)| (&r * &amat * &r).norm()).unwrap_or(f64::INFINITY);
                let rhs = (&sa * &amat * &sa).norm().max(side(g[b].cov())).max(side(&sigma));
                lhs >= c * rhs
            })
        });
        if cov_ok {
            return Ok(Some(PartitionSplit { s, t, case: SeparationCase::Covariance, witness: None }));
        }
    }
    Ok(None)
}

fn unit(v: &DVector<f64>) -> Vec<f64> {
    let n = v.norm();
    v.iter().map(|x| x / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudoexp::dirac;

    fn two_blobs(per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            for _ in 0..per {
                pts.push(vec![100.0 * c as f64 + rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)]);
                labels.push(c);
            }
        }
        (pts, labels)
    }

    fn g(mean: &[f64], diag: &[f64]) -> Gaussian {
        let d = mean.len();
        Gaussian::from_vecs(mean, &(0..d).map(|i| (0..d).map(|j| if i == j { diag[i] } else { 0.0 }).collect()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn single_component_returns_whole_sample() {
        let (pts, _) = two_blobs(5, 1);
        let r = rough_cluster(&pts, &RoughConfig::new(1)).unwrap();
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.candidates[0].subsets, vec![(0..10).collect::<Vec<_>>()]);
    }

    #[test]
    fn separated_blobs_split_exactly() {
        let (pts, labels) = two_blobs(8, 2);
        let r = rough_cluster(&pts, &RoughConfig::new(2)).unwrap();
        let best = r.candidates.iter().map(|c| misclassification(&c.subsets, &labels, None, 2)).fold(1.0, f64::min);
        assert_eq!(best, 0.0, "{:?}", r.diagnostics.log);
        assert!(r.candidates.iter().any(|c| c.subsets.len() == 1));
    }

    #[test]
    fn indicator_set_size() {
        let members = [0usize, 2, 3];
        let mut x = vec![0.0; 6];
        members.iter().for_each(|&i| x[i] = 1.0);
        let pe = dirac(&x, 2);
        assert!((expected_set_size(&pe, 6).unwrap() - 3.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (anchor, set, clamps) = sample_set(&pe, 6, &mut rng).unwrap().unwrap();
        assert!(members.contains(&anchor));
        assert_eq!(set, members.to_vec());
        assert_eq!(clamps, 0);
    }

    #[test]
    fn solved_set_size_is_n_over_k() {
        let (pts, _) = two_blobs(6, 3);
        let prog = build_clustering_program(&pts, 2, &ClusteringConfig { t: 2, d_bound: 8.0, ..Default::default() }).unwrap();
        let out = solve(&prog.system, &Objective::Feasibility, &SolveSettings::default()).unwrap();
        let pe = out.pseudoexpectation().unwrap();
        let expect = expected_set_size(pe, 12).unwrap();
        assert!((expect - 6.0).abs() < 0.1, "{expect}");
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 4000;
        let total: usize = (0..draws).map(|_| sample_set(pe, 12, &mut rng).unwrap().unwrap().1.len()).sum();
        let mean = total as f64 / draws as f64;
        assert!((mean - expect).abs() < 0.15, "{mean} vs {expect}");
    }

    #[test]
    fn misclassification_counts() {
        let labels = [0, 0, 1, 1];
        assert_eq!(misclassification(&[vec![2, 3], vec![0, 1]], &labels, None, 2), 0.0);
        assert_eq!(misclassification(&[vec![0, 1, 2, 3]], &labels, None, 2), 0.5);
        assert_eq!(misclassification(&[vec![0, 2], vec![1]], &labels, Some(&[true, true, false, true]), 2), 2.0 / 3.0);
    }

    #[test]
    fn gaussian_sample_meets_moment_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec<f64>> = (0..10_000).map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal)]).collect();
        let part = vec![(0..10_000).collect::<Vec<_>>()];
        let cfg = ConditionsConfig { n_directions: 16, ..Default::default() };
        let r = check_deterministic_conditions(&pts, &part, &cfg, None).unwrap();
        assert!(r.condition1, "{:?}", r.moment_residuals);
        assert!(r.condition2_sampled, "{:?}", r.direction_checks);
        let r0 = check_deterministic_conditions(&pts, &part, &ConditionsConfig { t: 0, n_directions: 4, ..cfg }, None).unwrap();
        assert_eq!(r0.moment_residuals, vec![vec![0.0]]);
    }

    #[test]
    fn planted_points_break_direction_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut pts: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal)]).collect();
        for p in pts.iter_mut().take(20) {
            *p = vec![1000.0, 0.0];
        }
        let part = vec![(0..400).collect::<Vec<_>>()];
        let cfg = ConditionsConfig { psi: 0.01, n_directions: 16, ..Default::default() };
        let r = check_deterministic_conditions(&pts, &part, &cfg, None).unwrap();
        assert!(!r.condition2_sampled);
        let w = &r.direction_checks[0].worst_direction;
        assert!(w[0].abs() > 0.9, "{w:?}");
        assert!(r.direction_checks[0].e_fraction < 0.99);
    }

    #[test]
    fn closeness_partitions() {
        let far = GaussianMixture::new(vec![0.3, 0.3, 0.4], vec![g(&[0.0], &[1.0]), g(&[1000.0], &[1.0]), g(&[2000.0], &[1.0])]).unwrap();
        let p = find_closeness_partition(&far, 0.01, 0.5, TvMethod::Closed1d).unwrap();
        assert_eq!(p.parts, vec![vec![0], vec![1], vec![2]]);
        let mixed = GaussianMixture::new(vec![0.3, 0.3, 0.4], vec![g(&[0.0], &[1.0]), g(&[0.1], &[1.0]), g(&[100.0], &[1.0])]).unwrap();
        let p = find_closeness_partition(&mixed, 0.01, 0.5, TvMethod::Closed1d).unwrap();
        assert_eq!(p.parts, vec![vec![0, 1], vec![2]]);
        assert!(p.kappa >= 0.5f64.powi(3) && p.kappa <= 1.0);
    }

    #[test]
    fn separation_cases() {
        let close = GaussianMixture::new(vec![0.5, 0.5], vec![g(&[0.0, 0.0], &[1.0, 1.0]), g(&[0.1, 0.0], &[1.0, 1.0])]).unwrap();
        assert!(exists_partition_diagnostic(&close, 10.0).unwrap().is_none());

        let mean = GaussianMixture::new(vec![0.5, 0.5], vec![g(&[100.0, 0.0], &[1.0, 1.0]), g(&[0.0, 0.0], &[1.0, 1.0])]).unwrap();
        let s = exists_partition_diagnostic(&mean, 10.0).unwrap().unwrap();
        assert_eq!(s.case, SeparationCase::Mean);
        assert!(s.witness.unwrap()[0].abs() > 1.0 - 1e-9);

        let var = GaussianMixture::new(vec![0.5, 0.5], vec![g(&[0.0, 0.0], &[1.0, 1.0]), g(&[0.0, 0.0], &[1e6, 1.0])]).unwrap();
        let s = exists_partition_diagnostic(&var, 10.0).unwrap().unwrap();
        assert_eq!(s.case, SeparationCase::Variance);
        assert_eq!(s.s, vec![1]);
        assert!(s.witness.unwrap()[0].abs() > 1.0 - 1e-9);
    }
}
