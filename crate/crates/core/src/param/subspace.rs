use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LmConfig};
use crate::error::{Error, Result};
use crate::hermite::IsoMixture;
use crate::poly::{monomials_of_degree, FloatPoly, Monomial};
use crate::pseudoexp::{
    build_means_program, build_parameter_program, dirac, solve, Objective, ParameterGuess, ParameterProgram,
    PseudoExpectation, SolveSettings,
};

/// How a program is solved: the moment SDP, or a certified local search whose Dirac
/// pseudoexpectation is returned when a feasible point is found.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    Sdp,
    LocalSearch { starts: usize, seed: u64 },
    /// SDP when the relaxation fits the size caps, local search otherwise.
    Auto { starts: usize, seed: u64 },
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Auto { starts: 16, seed: 1 }
    }
}

/// Gram blocks `E~[x_i x_i^T]` of the recovered objects and their dominant subspaces.
#[derive(Clone, Debug)]
pub struct SubspaceBundle {
    pub matrices: Vec<DMatrix<f64>>,
    pub bases: Vec<DMatrix<f64>>,
    pub union_span: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct ProgramSolution {
    pub bundle: SubspaceBundle,
    pub pe: PseudoExpectation,
    pub used_sdp: bool,
}

pub fn flatten_sym(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * (d + 1) / 2);
    for a in 0..d {
        for b in a..d {
            v.push(if a == b { m[(a, a)] } else { 2.0 * m[(a, b)] });
        }
    }
    v
}

pub fn unflatten_sym(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut it = v.iter();
    for a in 0..d {
        for b in a..d {
            let x = *it.next().expect("flattened length");
            if a == b {
                m[(a, a)] = x;
            } else {
                m[(a, b)] = x / 2.0;
                m[(b, a)] = x / 2.0;
            }
        }
    }
    m
}

/// Coefficient vectors `v(h_p)` for `p = 1..=c`, in graded order.
pub fn hermite_vectors(mix: &IsoMixture<f64>, c: u32) -> Result<Vec<Vec<f64>>> {
    let d = mix.dim();
    let h = mix.hermite_all(c)?;
    Ok((1..=c).map(|p| monomials_of_degree(d, p).iter().map(|m| h[p as usize].coeff(m)).collect()).collect())
}

pub fn hbar_vectors(hbar: &[FloatPoly], d: usize) -> Vec<Vec<f64>> {
    hbar.iter().enumerate().map(|(i, h)| monomials_of_degree(d, i as u32 + 1).iter().map(|m| h.coeff(m)).collect()).collect()
}

/// Gram-Schmidt on `k` vectors of length `len` packed in `x`; degenerate inputs are nudged.
fn orthonormalize(x: &[f64], k: usize, len: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        let mut v: Vec<f64> = x[i * len..(i + 1) * len].to_vec();
        for u in &out {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (a, b) in v.iter_mut().zip(u) {
                *a -= p * b;
            }
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n < 1e-12 {
            v = vec![0.0; len];
            v[i % len] = 1.0;
            for u in &out {
                let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (a, b) in v.iter_mut().zip(u) {
                    *a -= p * b;
                }
            }
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= n);
        } else {
            v.iter_mut().for_each(|a| *a /= n);
        }
        out.push(v);
    }
    out
}

fn combine(coeffs: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let len = basis[0].len();
    let mut out = vec![0.0; len];
    for (c, b) in coeffs.iter().zip(basis) {
        for (o, x) in out.iter_mut().zip(b) {
            *o += c * x;
        }
    }
    out
}

fn top_subspace(ms: &[DMatrix<f64>], k: usize, rank_tol: f64) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
    let dim = ms[0].nrows();
    let mut bases = Vec::new();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for m in ms {
        let e = SymmetricEigen::new((m + m.transpose()) * 0.5);
        let mut idx: Vec<usize> = (0..dim).collect();
        idx.sort_by(|&a, &b| e.eigenvalues[b].partial_cmp(&e.eigenvalues[a]).unwrap());
        let top = e.eigenvalues[idx[0]].max(0.0);
        let keep: Vec<usize> = idx.into_iter().take(k).filter(|&i| e.eigenvalues[i] > rank_tol * top.max(1e-300)).collect();
        let b = DMatrix::from_fn(dim, keep.len(), |r, c| e.eigenvectors[(r, keep[c])]);
        cols.extend(b.column_iter().map(|c| c.into_owned()));
        bases.push(b);
    }
    let union = if cols.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        let stacked = DMatrix::from_columns(&cols);
        let svd = stacked.svd(true, false);
        let u = svd.u.expect("left vectors");
        let smax = svd.singular_values.max();
        let r = svd.singular_values.iter().filter(|&&s| s > 1e-8 * smax.max(1e-300)).count();
        u.columns(0, r).into_owned()
    };
    (bases, union)
}

fn gram_block(pe: &PseudoExpectation, coeffs: &[Vec<f64>], offset: usize, len: usize, nvars: usize) -> Result<Vec<DMatrix<f64>>> {
    let k = coeffs.len();
    let mut second = vec![vec![DMatrix::zeros(len, len); k]; k];
    for j in 0..k {
        for l in 0..k {
            for e in 0..len {
                for f in 0..len {
                    let mut ex = vec![0u32; nvars];
                    ex[offset + j * len + e] += 1;
                    ex[offset + l * len + f] += 1;
                    second[j][l][(e, f)] = pe.value(&Monomial::new(ex))?;
                }
            }
        }
    }
    Ok(coeffs
        .iter()
        .map(|row| {
            let mut m = DMatrix::zeros(len, len);
            for j in 0..k {
                for l in 0..k {
                    m += &second[j][l] * (row[j] * row[l]);
                }
            }
            m
        })
        .collect())
}

fn run_program<F>(prog: &ParameterProgram, backend: Backend, fit: F, nfree: usize) -> Result<Option<(PseudoExpectation, bool)>>
where
    F: Fn(&[f64]) -> (Vec<f64>, Vec<f64>),
{
    let try_sdp = |strict: bool| -> Result<Option<Option<(PseudoExpectation, bool)>>> {
        match solve(&prog.system, &Objective::Feasibility, &SolveSettings::default()) {
            Ok(out) => Ok(Some(out.pseudoexpectation().cloned().map(|pe| (pe, true)))),
            Err(Error::SizeCap { .. }) if !strict => Ok(None),
            Err(e) => Err(e),
        }
    };
    let (starts, seed) = match backend {
        Backend::Sdp => return Ok(try_sdp(true)?.flatten()),
        Backend::Auto { starts, seed } => {
            if let Some(r) = try_sdp(false)? {
                return Ok(r);
            }
            (starts, seed)
        }
        Backend::LocalSearch { starts, seed } => (starts, seed),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = LmConfig::default();
    for _ in 0..starts.max(1) {
        let x0: Vec<f64> = (0..nfree).map(|_| rng.sample(StandardNormal)).collect();
        let (x, _) = minimize(|x| fit(x).1, &x0, &cfg);
        let point = fit(&x).0;
        if prog.system.point_violation(&point)? <= 1e-9 {
            return Ok(Some((dirac(&point, prog.system.degree), false)));
        }
    }
    Ok(None)
}

/// Solves the parameter program for one guess and extracts `M_i = E~[S_i S_i^T]` with their
/// top-`k` eigenvectors. `None` means the guess was rejected.
pub fn solve_covariances(guess: &ParameterGuess, hbar: &[FloatPoly], eps_prime: f64, d: usize, backend: Backend) -> Result<Option<ProgramSolution>> {
    let k = guess.weights.len();
    let prog = build_parameter_program(guess, hbar, eps_prime, k, d, None)?;
    let flat = prog.flat_dim;
    let target = hbar_vectors(hbar, d);
    let c = hbar.len() as u32;
    let fit = |x: &[f64]| {
        let u = orthonormalize(&x[..k * d], k, d);
        let v = orthonormalize(&x[k * d..], k, flat);
        let means: Vec<Vec<f64>> = guess.mean_coeffs.iter().map(|a| combine(a, &u)).collect();
        let sigmas: Vec<Vec<Vec<f64>>> = guess
            .cov_coeffs
            .iter()
            .map(|b| {
                let m = unflatten_sym(&combine(b, &v), d);
                (0..d).map(|r| (0..d).map(|s| m[(r, s)]).collect()).collect()
            })
            .collect();
        let mix = IsoMixture { weights: guess.weights.clone(), means, sigmas };
        let res = match hermite_vectors(&mix, c) {
            Ok(h) => h.iter().flatten().zip(target.iter().flatten()).map(|(a, b)| a - b).collect(),
            Err(_) => vec![f64::INFINITY],
        };
        let mut point: Vec<f64> = u.concat();
        point.extend(v.concat());
        (point, res)
    };
    let Some((pe, used_sdp)) = run_program(&prog, backend, fit, k * d + k * flat)? else {
        return Ok(None);
    };
    let matrices = gram_block(&pe, &guess.cov_coeffs, k * d, flat, prog.system.nvars())?;
    let (bases, union_span) = top_subspace(&matrices, k, 1e-8);
    Ok(Some(ProgramSolution { bundle: SubspaceBundle { matrices, bases, union_span }, pe, used_sdp }))
}

/// Means-only program with fixed covariances (isotropic convention); bundle blocks are
/// `E~[mu_i mu_i^T]`.
pub fn solve_means(
    weights: &[f64],
    mean_coeffs: &[Vec<f64>],
    sigmas: &[DMatrix<f64>],
    hbar: &[FloatPoly],
    eps_prime: f64,
    d: usize,
    backend: Backend,
) -> Result<Option<ProgramSolution>> {
    let k = weights.len();
    let prog = build_means_program(weights, mean_coeffs, sigmas, hbar, eps_prime, d)?;
    let target = hbar_vectors(hbar, d);
    let c = hbar.len() as u32;
    let sig: Vec<Vec<Vec<f64>>> = sigmas.iter().map(|m| (0..d).map(|r| (0..d).map(|s| m[(r, s)]).collect()).collect()).collect();
    let fit = |x: &[f64]| {
        let u = orthonormalize(x, k, d);
        let means: Vec<Vec<f64>> = mean_coeffs.iter().map(|a| combine(a, &u)).collect();
        let mix = IsoMixture { weights: weights.to_vec(), means, sigmas: sig.clone() };
        let res = match hermite_vectors(&mix, c) {
            Ok(h) => h.iter().flatten().zip(target.iter().flatten()).map(|(a, b)| a - b).collect(),
            Err(_) => vec![f64::INFINITY],
        };
        (u.concat(), res)
    };
    let Some((pe, used_sdp)) = run_program(&prog, backend, fit, k * d)? else {
        return Ok(None);
    };
    let matrices = gram_block(&pe, mean_coeffs, 0, d, prog.system.nvars())?;
    let (bases, union_span) = top_subspace(&matrices, k, 1e-8);
    Ok(Some(ProgramSolution { bundle: SubspaceBundle { matrices, bases, union_span }, pe, used_sdp }))
}

/// Grid points `V g` over the bundle's union span with `|g_j| <= radius` on multiples of
/// `step`; every vector of norm at most `radius` in the span lies within `step sqrt(r) / 2`
/// of one of them.
pub fn span_grid(bundle: &SubspaceBundle, step: f64, radius: f64, cap: usize) -> Result<Vec<DVector<f64>>> {
    let r = bundle.union_span.ncols();
    let ax = super::net::axis(step, radius);
    let size = (ax.len() as f64).powi(r as i32);
    if size > cap as f64 {
        return Err(Error::SizeCap { size: size.min(usize::MAX as f64) as usize, cap });
    }
    let mut pts: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..r {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                ax.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    Ok(pts.into_iter().map(|g| &bundle.union_span * DVector::from_vec(g)).collect())
}

/// Candidate covariance tuples from the grid over the union span.
pub fn recover_covariances(bundle: &SubspaceBundle, k: usize, d: usize, step: f64, radius: f64, cap: usize) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let grid = span_grid(bundle, step, radius, cap)?;
    let total = (grid.len() as f64).powi(k as i32);
    if total > cap as f64 {
        return Err(Error::SizeCap { size: total.min(usize::MAX as f64) as usize, cap });
    }
    let mats: Vec<DMatrix<f64>> = grid.iter().map(|g| unflatten_sym(g.as_slice(), d)).collect();
    Ok(tuples(&mats, k))
}

/// Candidate mean tuples from the grid over the union span.
pub fn recover_means(bundle: &SubspaceBundle, k: usize, step: f64, radius: f64, cap: usize) -> Result<Vec<Vec<DVector<f64>>>> {
    let grid = span_grid(bundle, step, radius, cap)?;
    let total = (grid.len() as f64).powi(k as i32);
    if total > cap as f64 {
        return Err(Error::SizeCap { size: total.min(usize::MAX as f64) as usize, cap });
    }
    Ok(tuples(&grid, k))
}

fn tuples<T: Clone>(items: &[T], k: usize) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![vec![]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|t| {
                items.iter().map(move |x| {
                    let mut t2 = t.clone();
                    t2.push(x.clone());
                    t2
                })
            })
            .collect();
    }
    out
}

/// Trace of `M` on the orthogonal complement of the column span of `v`.
pub fn trace_off_subspace(m: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let q = if v.ncols() == 0 { DMatrix::zeros(n, 0) } else { v.clone().qr().q().columns(0, v.ncols().min(n)).into_owned() };
    let p = DMatrix::identity(n, n) - &q * q.transpose();
    (&p * m * &p).trace()
}
