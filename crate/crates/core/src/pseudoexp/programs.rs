//! Builders for the parameter-solving program, its means-only variant, and the clustering
//! program in reduced and full form.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::system::{ConstraintSystem, PolyMatrix};
use crate::error::{Error, Result};
use crate::gaussian::sqrt_and_inv_sqrt;
use crate::poly::{monomials_of_degree, FloatPoly, Monomial};

const CAP: u32 = 40;

/// Guessed coefficients expressing the mixture in unknown orthonormal bases:
/// `mu_i = sum_j a_ij u_j`, `Sigma_i = sum_j b_ij v_j` (flattened), weights `w_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterGuess {
    pub weights: Vec<f64>,
    pub mean_coeffs: Vec<Vec<f64>>,
    pub cov_coeffs: Vec<Vec<f64>>,
}

/// The admissible box for guesses: magnitude `delta`, separation `c`, minimum weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuessLimits {
    pub delta: f64,
    pub c: f64,
    pub w_min: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Coefficient rows are either identical or at least `c/2` apart, with norm at most `2 delta`.
pub fn valid_rows(rows: &[Vec<f64>], lim: &GuessLimits) -> bool {
    rows.iter().all(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt() <= 2.0 * lim.delta + 1e-12)
        && rows.iter().enumerate().all(|(i, a)| rows[i + 1..].iter().all(|b| a == b || dist(a, b) >= lim.c / 2.0 - 1e-12))
}

pub fn validate_guess(g: &ParameterGuess, k: usize, lim: &GuessLimits) -> Result<()> {
    let shape_ok = g.weights.len() == k
        && g.mean_coeffs.len() == k
        && g.cov_coeffs.len() == k
        && g.mean_coeffs.iter().chain(&g.cov_coeffs).all(|r| r.len() == k);
    if !shape_ok {
        return Err(Error::InvalidArgument(format!("guess does not have {k} components with {k} coefficients")));
    }
    if g.weights.iter().any(|&w| w < lim.w_min / 2.0) {
        return Err(Error::InvalidArgument("guessed weight below w_min/2".into()));
    }
    if !valid_rows(&g.mean_coeffs, lim) {
        return Err(Error::InvalidArgument("mean coefficients violate the separation or magnitude rule".into()));
    }
    if !valid_rows(&g.cov_coeffs, lim) {
        return Err(Error::InvalidArgument("covariance coefficients violate the separation or magnitude rule".into()));
    }
    Ok(())
}

/// Number of Hermite polynomials matched by the parameter program.
pub fn default_hermite_count(k: usize) -> Result<u32> {
    match k {
        1 => Ok(2),
        2 => Ok(6),
        3 => Ok(8),
        _ => Err(Error::InvalidArgument(format!("no default Hermite count for k = {k}"))),
    }
}

/// Hermite polynomials of a mixture whose mean and covariance forms are polynomials in
/// `nparam` parameters followed by the `d` coordinates of `X`. Returns, for each order
/// `1..=m_max`, the map from `X`-monomials to parameter polynomials.
fn symbolic_hermite(
    weights: &[f64],
    mean_forms: &[FloatPoly],
    sigma_forms: &[FloatPoly],
    nparam: usize,
    d: usize,
    m_max: u32,
) -> Result<Vec<BTreeMap<Monomial, FloatPoly>>> {
    let n = nparam + d;
    let mut h = vec![FloatPoly::zero(n).with_cap(CAP); m_max as usize + 1];
    for i in 0..weights.len() {
        let mut g: Vec<FloatPoly> = vec![FloatPoly::one(n).with_cap(CAP)];
        for m in 1..=m_max as usize {
            let mut next = mean_forms[i].checked_mul(&g[m - 1])?;
            if m >= 2 {
                next = next.checked_add(&sigma_forms[i].checked_mul(&g[m - 2])?.scale(&((m - 1) as f64)))?;
            }
            g.push(next);
        }
        for (hm, gm) in h.iter_mut().zip(&g) {
            *hm = hm.checked_add(&gm.scale(&weights[i]))?;
        }
    }
    let mut out = Vec::new();
    for hm in h.iter().skip(1) {
        let mut split: BTreeMap<Monomial, FloatPoly> = BTreeMap::new();
        for (mono, c) in hm.terms() {
            let e = mono.exponents();
            let xpart = Monomial::new(e[nparam..].to_vec());
            let ppart = e[..nparam].to_vec();
            split
                .entry(xpart)
                .or_insert_with(|| FloatPoly::zero(nparam).with_cap(CAP))
                .add_term(Monomial::new(ppart), *c);
        }
        out.push(split);
    }
    Ok(out)
}

/// `slack - ||v(h~_p - hbar_p)||^2`, a polynomial in the parameters.
fn closeness_inequality(sym: &BTreeMap<Monomial, FloatPoly>, hbar: &FloatPoly, p: u32, nparam: usize, slack: f64) -> Result<FloatPoly> {
    let d = hbar.dim();
    let mut out = FloatPoly::constant(nparam, slack).with_cap(CAP);
    for mono in monomials_of_degree(d, p) {
        let zero = FloatPoly::zero(nparam).with_cap(CAP);
        let coef = sym.get(&mono).unwrap_or(&zero);
        let diff = coef.checked_sub(&FloatPoly::constant(nparam, hbar.coeff(&mono)))?;
        out = out.checked_sub(&diff.checked_mul(&diff)?)?;
    }
    Ok(out.prune(0.0))
}

fn check_hbar(hbar: &[FloatPoly], d: usize) -> Result<()> {
    for (i, h) in hbar.iter().enumerate() {
        let p = i as u32 + 1;
        if h.dim() != d {
            return Err(Error::DimensionMismatch { left: h.dim(), right: d });
        }
        if !h.is_zero() && !h.is_homogeneous_of(p) {
            return Err(Error::InvalidArgument(format!("estimate {p} is not homogeneous of degree {p}")));
        }
    }
    if hbar.is_empty() {
        return Err(Error::EmptyInput("no Hermite estimates"));
    }
    Ok(())
}

/// Variables `u_1..u_k` in `R^d` then `v_1..v_k` in `R^D` (`D = d(d+1)/2`).
#[derive(Clone, Debug)]
pub struct ParameterProgram {
    pub system: ConstraintSystem,
    pub k: usize,
    pub d: usize,
    pub flat_dim: usize,
    pub hermite_count: u32,
}

impl ParameterProgram {
    pub fn u_var(&self, i: usize, a: usize) -> usize {
        i * self.d + a
    }

    pub fn v_var(&self, i: usize, e: usize) -> usize {
        self.k * self.d + i * self.flat_dim + e
    }

    /// Assignment of the program variables from explicit bases.
    pub fn point(&self, u: &[Vec<f64>], v: &[Vec<f64>]) -> Result<Vec<f64>> {
        if u.len() != self.k || v.len() != self.k {
            return Err(Error::DimensionMismatch { left: u.len().min(v.len()), right: self.k });
        }
        let mut x = Vec::with_capacity(self.system.nvars());
        for ui in u {
            if ui.len() != self.d {
                return Err(Error::DimensionMismatch { left: ui.len(), right: self.d });
            }
            x.extend_from_slice(ui);
        }
        for vi in v {
            if vi.len() != self.flat_dim {
                return Err(Error::DimensionMismatch { left: vi.len(), right: self.flat_dim });
            }
            x.extend_from_slice(vi);
        }
        Ok(x)
    }
}

fn var(n: usize, i: usize) -> FloatPoly {
    FloatPoly::var(n, i).with_cap(CAP)
}

fn orthonormal_constraints(sys: &mut ConstraintSystem, offset: usize, k: usize, len: usize) -> Result<()> {
    let n = sys.nvars();
    for i in 0..k {
        for j in i..k {
            let mut p = FloatPoly::zero(n).with_cap(CAP);
            for a in 0..len {
                p = p.checked_add(&var(n, offset + i * len + a).checked_mul(&var(n, offset + j * len + a))?)?;
            }
            if i == j {
                p = p.checked_sub(&FloatPoly::one(n))?;
            }
            sys.add_equality(p)?;
        }
    }
    Ok(())
}

/// Program over orthonormal bases `u`, `v` whose guessed mixture matches the estimates
/// `hbar[p-1]` (`p = 1..C`) to `||v(h~_p - hbar_p)||^2 <= 100 eps'`.
pub fn build_parameter_program(
    guess: &ParameterGuess,
    hbar: &[FloatPoly],
    eps_prime: f64,
    k: usize,
    d: usize,
    limits: Option<&GuessLimits>,
) -> Result<ParameterProgram> {
    let flat_dim = d * (d + 1) / 2;
    if let Some(l) = limits {
        validate_guess(guess, k, l)?;
    } else if guess.weights.len() != k {
        return Err(Error::DimensionMismatch { left: guess.weights.len(), right: k });
    }
    if k > d || k > flat_dim {
        return Err(Error::InvalidArgument(format!("{k} orthonormal vectors do not fit in dimension {d}")));
    }
    check_hbar(hbar, d)?;
    let c = hbar.len() as u32;
    let nparam = k * d + k * flat_dim;
    let n = nparam + d;
    let mut mean_forms = Vec::with_capacity(k);
    let mut sigma_forms = Vec::with_capacity(k);
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect();
    for i in 0..k {
        let mut mf = FloatPoly::zero(n).with_cap(CAP);
        let mut sf = FloatPoly::zero(n).with_cap(CAP);
        for j in 0..k {
            for a in 0..d {
                let t = var(n, j * d + a).checked_mul(&var(n, nparam + a))?.scale(&guess.mean_coeffs[i][j]);
                mf = mf.checked_add(&t)?;
            }
            for (e, &(a, b)) in pairs.iter().enumerate() {
                let xx = var(n, nparam + a).checked_mul(&var(n, nparam + b))?;
                let t = var(n, k * d + j * flat_dim + e).checked_mul(&xx)?.scale(&guess.cov_coeffs[i][j]);
                sf = sf.checked_add(&t)?;
            }
        }
        mean_forms.push(mf);
        sigma_forms.push(sf);
    }
    let sym = symbolic_hermite(&guess.weights, &mean_forms, &sigma_forms, nparam, d, c)?;
    let mut names: Vec<String> = (0..k).flat_map(|i| (0..d).map(move |a| format!("u{}_{}", i + 1, a + 1))).collect();
    names.extend((0..k).flat_map(|i| pairs.iter().map(move |(a, b)| format!("v{}_{}{}", i + 1, a + 1, b + 1))));
    let mut system = ConstraintSystem::new(names, 2 * c)?;
    orthonormal_constraints(&mut system, 0, k, d)?;
    orthonormal_constraints(&mut system, k * d, k, flat_dim)?;
    for p in 1..=c {
        system.add_inequality(closeness_inequality(&sym[p as usize - 1], &hbar[p as usize - 1], p, nparam, 100.0 * eps_prime)?)?;
    }
    Ok(ParameterProgram { system, k, d, flat_dim, hermite_count: c })
}

/// Means-only program: covariances are fixed numbers (`sigmas[i]` in the isotropic
/// convention), and only `u_1..u_k` remain.
pub fn build_means_program(
    weights: &[f64],
    mean_coeffs: &[Vec<f64>],
    sigmas: &[DMatrix<f64>],
    hbar: &[FloatPoly],
    eps_prime: f64,
    d: usize,
) -> Result<ParameterProgram> {
    let k = weights.len();
    if mean_coeffs.len() != k || sigmas.len() != k {
        return Err(Error::DimensionMismatch { left: mean_coeffs.len().min(sigmas.len()), right: k });
    }
    if k > d {
        return Err(Error::InvalidArgument(format!("{k} orthonormal vectors do not fit in dimension {d}")));
    }
    check_hbar(hbar, d)?;
    let c = hbar.len() as u32;
    let nparam = k * d;
    let n = nparam + d;
    let mut mean_forms = Vec::with_capacity(k);
    let mut sigma_forms = Vec::with_capacity(k);
    for i in 0..k {
        let mut mf = FloatPoly::zero(n).with_cap(CAP);
        for j in 0..k {
            for a in 0..d {
                mf = mf.checked_add(&var(n, j * d + a).checked_mul(&var(n, nparam + a))?.scale(&mean_coeffs[i][j]))?;
            }
        }
        let mut sf = FloatPoly::zero(n).with_cap(CAP);
        for a in 0..d {
            for b in 0..d {
                sf = sf.checked_add(&var(n, nparam + a).checked_mul(&var(n, nparam + b))?.scale(&sigmas[i][(a, b)]))?;
            }
        }
        mean_forms.push(mf);
        sigma_forms.push(sf);
    }
    let sym = symbolic_hermite(weights, &mean_forms, &sigma_forms, nparam, d, c)?;
    let names: Vec<String> = (0..k).flat_map(|i| (0..d).map(move |a| format!("u{}_{}", i + 1, a + 1))).collect();
    let mut system = ConstraintSystem::new(names, 2 * c)?;
    orthonormal_constraints(&mut system, 0, k, d)?;
    for p in 1..=c {
        system.add_inequality(closeness_inequality(&sym[p as usize - 1], &hbar[p as usize - 1], p, nparam, 100.0 * eps_prime)?)?;
    }
    Ok(ParameterProgram { system, k, d, flat_dim: 0, hermite_count: c })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusteringMode {
    Reduced,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub mode: ClusteringMode,
    pub t: u32,
    pub delta: f64,
    pub eps: f64,
    /// Reduced mode: bound on the selected set's covariance in units of the local scatter.
    pub d_bound: f64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig { mode: ClusteringMode::Reduced, t: 4, delta: 0.1, eps: 0.0, d_bound: 8.0 }
    }
}

/// Full mode may not exceed this many samples.
pub const FULL_MODE_MAX_N: usize = 20;

#[derive(Clone, Debug)]
pub struct ClusteringProgram {
    pub system: ConstraintSystem,
    pub config: ClusteringConfig,
    pub n: usize,
    pub k: usize,
    pub d: usize,
    /// Samples after whitening by the whole-sample mean and covariance (reduced mode).
    pub whitened: Vec<Vec<f64>>,
    /// Reduced mode: typical within-cluster scatter of the whitened samples.
    pub local_scatter: DMatrix<f64>,
}

fn mean_cov(xs: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mut m = vec![0.0; d];
    for x in xs {
        for a in 0..d {
            m[a] += x[a] / n;
        }
    }
    let mut c = DMatrix::zeros(d, d);
    for x in xs {
        for a in 0..d {
            for b in 0..d {
                c[(a, b)] += (x[a] - m[a]) * (x[b] - m[b]) / n;
            }
        }
    }
    (m, c)
}

/// Covariance of each point's neighbourhood (`m_nb` nearest neighbours plus itself); the
/// one with median trace stands for the within-cluster scale.
pub fn local_scatter(ys: &[Vec<f64>], m_nb: usize) -> DMatrix<f64> {
    let n = ys.len();
    let m_nb = m_nb.min(n.saturating_sub(1)).max(1);
    let mut covs: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let mut idx: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dist(&ys[i], &ys[j]), j)).collect();
            idx.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut pts: Vec<Vec<f64>> = vec![ys[i].clone()];
            pts.extend(idx[..m_nb].iter().map(|&(_, j)| ys[j].clone()));
            mean_cov(&pts).1
        })
        .collect();
    covs.sort_by(|a, b| a.trace().partial_cmp(&b.trace()).unwrap());
    covs.swap_remove(n / 2)
}

/// The clustering program for `samples`. Reduced mode keeps only `w`, with booleanity, the
/// size constraint, and a covariance bound on the selected set; full mode writes out every
/// constraint family with auxiliary variables for the derived quantities.
pub fn build_clustering_program(samples: &[Vec<f64>], k: usize, cfg: &ClusteringConfig) -> Result<ClusteringProgram> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::EmptyInput("no samples"));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} with n = {n}")));
    }
    if cfg.t % 2 != 0 {
        return Err(Error::InvalidArgument("t must be even".into()));
    }
    let d = samples[0].len();
    if samples.iter().any(|x| x.len() != d) {
        return Err(Error::InvalidArgument("ragged samples".into()));
    }
    match cfg.mode {
        ClusteringMode::Reduced => reduced_program(samples, k, cfg),
        ClusteringMode::Full => {
            if n > FULL_MODE_MAX_N {
                return Err(Error::SizeCap { size: n, cap: FULL_MODE_MAX_N });
            }
            full_program(samples, k, cfg)
        }
    }
}

fn reduced_program(samples: &[Vec<f64>], k: usize, cfg: &ClusteringConfig) -> Result<ClusteringProgram> {
    let n = samples.len();
    let d = samples[0].len();
    let (m, c) = mean_cov(samples);
    let (_, inv_sqrt) = sqrt_and_inv_sqrt(&(c + DMatrix::identity(d, d) * 1e-12))?;
    let whitened: Vec<Vec<f64>> = samples
        .iter()
        .map(|x| {
            let v = nalgebra::DVector::from_iterator(d, x.iter().zip(&m).map(|(a, b)| a - b));
            (&inv_sqrt * v).iter().copied().collect()
        })
        .collect();
    let scatter = local_scatter(&whitened, (n / (2 * k)).max(d + 1));
    let names: Vec<String> = (1..=n).map(|i| format!("w{i}")).collect();
    let mut system = ConstraintSystem::new(names, cfg.t.max(2))?;
    let size = n as f64 / k as f64;
    let w = |i: usize| var(n, i);
    for i in 0..n {
        system.add_equality(w(i).checked_mul(&w(i))?.checked_sub(&w(i))?)?;
    }
    let mut sum = FloatPoly::constant(n, -size).with_cap(CAP);
    for i in 0..n {
        sum = sum.checked_add(&w(i))?;
    }
    system.add_equality(sum)?;
    // D (1 + delta) S_loc - (k/n)^2 sum_{i<j} w_i w_j (Y_i - Y_j)(Y_i - Y_j)^T >= 0
    let scale = 1.0 / (size * size);
    let bound = cfg.d_bound * (1.0 + cfg.delta);
    let mut lmi: PolyMatrix = Vec::with_capacity(d);
    for a in 0..d {
        let mut row = Vec::with_capacity(d);
        for b in 0..d {
            let mut p = FloatPoly::constant(n, bound * scatter[(a, b)]).with_cap(CAP);
            for i in 0..n {
                for j in i + 1..n {
                    let coef = -scale * (whitened[i][a] - whitened[j][a]) * (whitened[i][b] - whitened[j][b]);
                    let mut mono = vec![0u32; n];
                    mono[i] = 1;
                    mono[j] = 1;
                    p.add_term(Monomial::new(mono), coef);
                }
            }
            row.push(p);
        }
        lmi.push(row);
    }
    // make the matrix exactly symmetric despite rounding in the products
    for a in 0..d {
        for b in 0..a {
            lmi[a][b] = lmi[b][a].clone();
        }
    }
    system.add_matrix_inequality(lmi)?;
    Ok(ClusteringProgram { system, config: *cfg, n, k, d, whitened, local_scatter: scatter })
}

/// Variable offsets of the full program.
struct FullVars {
    n: usize,
    d: usize,
}

impl FullVars {
    fn total(&self) -> usize {
        let (n, d) = (self.n, self.d);
        2 * n + n * d + d + d * (d + 1) / 2 + 2 * d * d + n * d
    }
    fn w(&self, i: usize) -> usize {
        i
    }
    fn z(&self, i: usize) -> usize {
        self.n + i
    }
    fn xp(&self, i: usize, a: usize) -> usize {
        2 * self.n + i * self.d + a
    }
    fn mu(&self, a: usize) -> usize {
        2 * self.n + self.n * self.d + a
    }
    fn s(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        // row-major upper triangle
        let before: usize = (0..a).map(|r| self.d - r).sum();
        self.mu(0) + self.d + before + (b - a)
    }
    fn root(&self, a: usize, b: usize) -> usize {
        self.mu(0) + self.d + self.d * (self.d + 1) / 2 + a * self.d + b
    }
    fn inv_root(&self, a: usize, b: usize) -> usize {
        self.root(0, 0) + self.d * self.d + a * self.d + b
    }
    fn y(&self, i: usize, a: usize) -> usize {
        self.inv_root(0, 0) + self.d * self.d + i * self.d + a
    }
}

/// Standard Gaussian moment `E[prod g_a^{beta_a}]`.
fn gaussian_moment(beta: &[u32]) -> f64 {
    beta.iter()
        .map(|&b| if b % 2 == 1 { 0.0 } else { (1..b).step_by(2).map(|x| x as f64).product::<f64>() })
        .product()
}

fn multinomial(beta: &[u32]) -> f64 {
    let s: u32 = beta.iter().sum();
    let mut out = (1..=s).map(|x| x as f64).product::<f64>();
    for &b in beta {
        out /= (1..=b).map(|x| x as f64).product::<f64>();
    }
    out
}

fn full_program(samples: &[Vec<f64>], k: usize, cfg: &ClusteringConfig) -> Result<ClusteringProgram> {
    let n = samples.len();
    let d = samples[0].len();
    let fv = FullVars { n, d };
    let nv = fv.total();
    let v = |i: usize| var(nv, i);
    let cst = |c: f64| FloatPoly::constant(nv, c).with_cap(CAP);
    let size = n as f64 / k as f64;
    let degree = (2 * (cfg.t + 1)).max(4);
    let mut names = Vec::with_capacity(nv);
    names.extend((1..=n).map(|i| format!("w{i}")));
    names.extend((1..=n).map(|i| format!("z{i}")));
    names.extend((1..=n).flat_map(|i| (1..=d).map(move |a| format!("xp{i}_{a}"))));
    names.extend((1..=d).map(|a| format!("mu{a}")));
    names.extend((1..=d).flat_map(|a| (a..=d).map(move |b| format!("s{a}{b}"))));
    names.extend((1..=d).flat_map(|a| (1..=d).map(move |b| format!("r{a}{b}"))));
    names.extend((1..=d).flat_map(|a| (1..=d).map(move |b| format!("p{a}{b}"))));
    names.extend((1..=n).flat_map(|i| (1..=d).map(move |a| format!("y{i}_{a}"))));
    let mut sys = ConstraintSystem::new(names, degree)?;

    // corruptions
    let mut zsum = cst(-(1.0 - cfg.eps) * size);
    for i in 0..n {
        sys.add_equality(v(fv.z(i)).checked_mul(&v(fv.z(i)))?.checked_sub(&v(fv.z(i)))?)?;
        for a in 0..d {
            let diff = cst(samples[i][a]).checked_sub(&v(fv.xp(i, a)))?;
            sys.add_equality(v(fv.z(i)).checked_mul(&diff)?)?;
        }
        zsum = zsum.checked_add(&v(fv.z(i)))?;
    }
    sys.add_equality(zsum)?;
    // subset
    let mut wsum = cst(-size);
    for i in 0..n {
        sys.add_equality(v(fv.w(i)).checked_mul(&v(fv.w(i)))?.checked_sub(&v(fv.w(i)))?)?;
        wsum = wsum.checked_add(&v(fv.w(i)))?;
    }
    sys.add_equality(wsum)?;
    // mu = (k/n) sum w_i X'_i ; centered X'_i - mu
    let centered = |i: usize, a: usize| v(fv.xp(i, a)).checked_sub(&v(fv.mu(a)));
    for a in 0..d {
        let mut p = v(fv.mu(a));
        for i in 0..n {
            p = p.checked_sub(&v(fv.w(i)).checked_mul(&v(fv.xp(i, a)))?.scale(&(1.0 / size)))?;
        }
        sys.add_equality(p)?;
    }
    // S = (k/n) sum w_i (X'_i - mu)(X'_i - mu)^T
    for a in 0..d {
        for b in a..d {
            let mut p = v(fv.s(a, b));
            for i in 0..n {
                let t = v(fv.w(i)).checked_mul(&centered(i, a)?)?.checked_mul(&centered(i, b)?)?;
                p = p.checked_sub(&t.scale(&(1.0 / size)))?;
            }
            sys.add_equality(p)?;
        }
    }
    // matrices: R^2 = S, (P R)^2 = P R, (P R) w_i (X'_i - mu) = w_i (X'_i - mu)
    let pr = |a: usize, b: usize| -> Result<FloatPoly> {
        let mut p = cst(0.0);
        for c in 0..d {
            p = p.checked_add(&v(fv.inv_root(a, c)).checked_mul(&v(fv.root(c, b)))?)?;
        }
        Ok(p)
    };
    for a in 0..d {
        for b in 0..d {
            let mut sq = v(fv.s(a, b)).scale(&-1.0);
            for c in 0..d {
                sq = sq.checked_add(&v(fv.root(a, c)).checked_mul(&v(fv.root(c, b)))?)?;
            }
            sys.add_equality(sq)?;
            let mut idem = pr(a, b)?.scale(&-1.0);
            for c in 0..d {
                idem = idem.checked_add(&pr(a, c)?.checked_mul(&pr(c, b)?)?)?;
            }
            sys.add_equality(idem)?;
        }
    }
    for i in 0..n {
        for a in 0..d {
            let mut p = v(fv.w(i)).checked_mul(&centered(i, a)?)?.scale(&-1.0);
            for b in 0..d {
                p = p.checked_add(&pr(a, b)?.checked_mul(&v(fv.w(i)))?.checked_mul(&centered(i, b)?)?)?;
            }
            sys.add_equality(p)?;
        }
    }
    // whitened points y_i = P (X'_i - mu)
    for i in 0..n {
        for a in 0..d {
            let mut p = v(fv.y(i, a));
            for b in 0..d {
                p = p.checked_sub(&v(fv.inv_root(a, b)).checked_mul(&centered(i, b)?)?)?;
            }
            sys.add_equality(p)?;
        }
    }
    // moments: ||(k/n) sum w_i y_i^{(x) s} - M_s||^2 <= delta d^{-2t}, for s <= t
    let slack = cfg.delta * (d as f64).powi(-2 * cfg.t as i32);
    for s in 0..=cfg.t {
        let mut ineq = cst(slack);
        for beta in monomials_of_degree(d, s) {
            let b = beta.exponents();
            let mut emp = cst(-gaussian_moment(b));
            for i in 0..n {
                let mut term = v(fv.w(i)).scale(&(1.0 / size));
                for (a, &e) in b.iter().enumerate() {
                    for _ in 0..e {
                        term = term.checked_mul(&v(fv.y(i, a)))?;
                    }
                }
                emp = emp.checked_add(&term)?;
            }
            ineq = ineq.checked_sub(&emp.checked_mul(&emp)?.scale(&multinomial(b)))?;
        }
        sys.add_inequality(ineq)?;
    }
    Ok(ClusteringProgram { system: sys, config: *cfg, n, k, d, whitened: samples.to_vec(), local_scatter: DMatrix::zeros(d, d) })
}

impl ClusteringProgram {
    /// Program variable for the membership weight of sample `i`.
    pub fn w_var(&self, i: usize) -> usize {
        i
    }

    /// The point that selects `members`. Full mode also needs the uncorrupted rows
    /// (`clean`, defaulting to the observed ones) and marks the first `(1-eps) n/k`
    /// members whose rows were untouched as kept.
    pub fn indicator_point(&self, members: &[usize], clean: Option<&[Vec<f64>]>) -> Result<Vec<f64>> {
        if members.iter().any(|&i| i >= self.n) {
            return Err(Error::InvalidArgument("member index out of range".into()));
        }
        match self.config.mode {
            ClusteringMode::Reduced => {
                let mut x = vec![0.0; self.n];
                for &i in members {
                    x[i] = 1.0;
                }
                Ok(x)
            }
            ClusteringMode::Full => {
                let (n, d) = (self.n, self.d);
                let observed = &self.whitened;
                let clean = clean.unwrap_or(observed);
                let fv = FullVars { n, d };
                let mut x = vec![0.0; fv.total()];
                let size = n as f64 / self.k as f64;
                let keep = ((1.0 - self.config.eps) * size).round() as usize;
                let mut kept = 0;
                for &i in members {
                    x[fv.w(i)] = 1.0;
                    if kept < keep && clean[i] == observed[i] {
                        x[fv.z(i)] = 1.0;
                        kept += 1;
                    }
                }
                for i in 0..n {
                    for a in 0..d {
                        x[fv.xp(i, a)] = clean[i][a];
                    }
                }
                let pts: Vec<Vec<f64>> = members.iter().map(|&i| clean[i].clone()).collect();
                let (mu, _) = mean_cov(&pts);
                let mut s = DMatrix::zeros(d, d);
                for p in &pts {
                    for a in 0..d {
                        for b in 0..d {
                            s[(a, b)] += (p[a] - mu[a]) * (p[b] - mu[b]) / size;
                        }
                    }
                }
                let (root, inv) = sqrt_and_inv_sqrt(&s)?;
                for a in 0..d {
                    x[fv.mu(a)] = mu[a];
                    for b in 0..d {
                        x[fv.s(a, b)] = s[(a, b)];
                        x[fv.root(a, b)] = root[(a, b)];
                        x[fv.inv_root(a, b)] = inv[(a, b)];
                    }
                }
                for i in 0..n {
                    for a in 0..d {
                        x[fv.y(i, a)] = (0..d).map(|b| inv[(a, b)] * (clean[i][b] - mu[b])).sum();
                    }
                }
                Ok(x)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudoexp::pe::dirac;

    #[test]
    fn scalar_parameter_program_shape() {
        let guess = ParameterGuess { weights: vec![1.0], mean_coeffs: vec![vec![1.5]], cov_coeffs: vec![vec![0.5]] };
        let h1 = FloatPoly::linear(&[1.5]);
        let h2 = FloatPoly::quadratic_form(&[vec![1.5 * 1.5 + 0.5]]);
        let prog = build_parameter_program(&guess, &[h1, h2], 1e-4, 1, 1, None).unwrap();
        assert_eq!(prog.system.nvars(), 2);
        assert_eq!(prog.system.equalities.len(), 2);
        assert_eq!(prog.system.inequalities.len(), 2);
        assert_eq!(prog.system.degree, 4);
        let x = prog.point(&[vec![1.0]], &[vec![1.0]]).unwrap();
        assert!(dirac(&x, 4).residuals(&prog.system).unwrap().max() < 1e-12);
        let bad = prog.point(&[vec![1.0]], &[vec![-1.0]]).unwrap();
        assert!(dirac(&bad, 4).residuals(&prog.system).unwrap().max() > 0.1);
    }

    #[test]
    fn guess_rules() {
        let lim = GuessLimits { delta: 2.0, c: 1.0, w_min: 0.2 };
        let ok = ParameterGuess { weights: vec![0.5, 0.5], mean_coeffs: vec![vec![1.0, 0.0], vec![1.0, 0.0]], cov_coeffs: vec![vec![0.0, 1.0], vec![1.0, 0.0]] };
        assert!(validate_guess(&ok, 2, &lim).is_ok());
        let mut close = ok.clone();
        close.mean_coeffs[1] = vec![1.2, 0.0];
        assert!(validate_guess(&close, 2, &lim).is_err());
        let mut light = ok.clone();
        light.weights[0] = 0.05;
        assert!(validate_guess(&light, 2, &lim).is_err());
    }

    #[test]
    fn booleanity_only_has_zero_one_points() {
        let samples: Vec<Vec<f64>> = (0..6).map(|i| vec![if i < 3 { 0.0 } else { 50.0 } + i as f64 * 0.1, 0.3 * i as f64]).collect();
        let prog = build_clustering_program(&samples, 2, &ClusteringConfig::default()).unwrap();
        let q = &prog.system.equalities[0];
        for x in [0.0, 1.0] {
            let mut p = vec![0.0; 6];
            p[0] = x;
            assert_eq!(q.eval(&p).unwrap(), 0.0);
        }
        let mut p = vec![0.0; 6];
        p[0] = 0.5;
        assert!(q.eval(&p).unwrap() != 0.0);
    }

    #[test]
    fn full_mode_indicator_witness() {
        let samples: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.2],
            vec![0.3, 1.1],
            vec![4.0, 0.0],
            vec![4.1, 0.5],
            vec![4.2, 1.3],
        ];
        let cfg = ClusteringConfig { mode: ClusteringMode::Full, t: 2, delta: 1e3, eps: 0.0, d_bound: 8.0 };
        let prog = build_clustering_program(&samples, 2, &cfg).unwrap();
        let x = prog.indicator_point(&[0, 1, 2], None).unwrap();
        let r = dirac(&x, prog.system.degree).residuals(&prog.system).unwrap();
        assert!(r.equalities.iter().all(|&e| e < 1e-9), "{:?}", r.equalities);
        assert!(r.inequalities.iter().all(|&e| e < 1e-9), "{:?}", r.inequalities);
    }
}
