//! Dense primal-dual interior-point solver for block-diagonal SDPs.
//!
//! Primal: minimize `<C, X>` subject to `<A_i, X> = b_i`, `X` PSD.
//! Dual: maximize `b^T y` subject to `sum_i y_i A_i + Z = C`, `Z` PSD.
//! Search direction is HKM with a Mehrotra predictor-corrector.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Sparse symmetric matrix over the block structure. An entry `(block, r, c, v)` adds
/// `v * X[r][c]` to `<A, X>`; off-diagonal entries are split evenly between `(r,c)` and `(c,r)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseSym {
    pub entries: Vec<(usize, usize, usize, f64)>,
}

impl SparseSym {
    pub fn new() -> Self {
        SparseSym { entries: Vec::new() }
    }

    pub fn add(&mut self, block: usize, r: usize, c: usize, v: f64) {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        self.entries.push((block, r, c, v));
    }

    /// Merges duplicate positions and drops zeros.
    pub fn compact(&mut self) {
        self.entries.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        let mut out: Vec<(usize, usize, usize, f64)> = Vec::with_capacity(self.entries.len());
        for e in self.entries.drain(..) {
            match out.last_mut() {
                Some(l) if (l.0, l.1, l.2) == (e.0, e.1, e.2) => l.3 += e.3,
                _ => out.push(e),
            }
        }
        out.retain(|e| e.3 != 0.0);
        self.entries = out;
    }


    /// Dot with a possibly non-symmetric matrix: uses its symmetric part.
    fn dot_sym(&self, x: &[DMatrix<f64>]) -> f64 {
        self.entries
            .iter()
            .map(|&(b, r, c, v)| if r == c { v * x[b][(r, r)] } else { 0.5 * v * (x[b][(r, c)] + x[b][(c, r)]) })
            .sum()
    }

    fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|&(_, r, c, v)| if r == c { v * v } else { 0.5 * v * v }).sum()
    }

    fn add_to(&self, scale: f64, out: &mut [DMatrix<f64>]) {
        for &(b, r, c, v) in &self.entries {
            if r == c {
                out[b][(r, r)] += scale * v;
            } else {
                out[b][(r, c)] += 0.5 * scale * v;
                out[b][(c, r)] += 0.5 * scale * v;
            }
        }
    }

    fn blocks(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.entries.iter().map(|e| e.0).collect();
        b.sort_unstable();
        b.dedup();
        b
    }
}

#[derive(Clone, Debug, Default)]
pub struct SdpProblem {
    pub blocks: Vec<usize>,
    pub c: SparseSym,
    pub a: Vec<SparseSym>,
    pub b: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SdpSettings {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub tol_infeas: f64,
    pub max_iter: usize,
    pub step_fraction: f64,
}

impl Default for SdpSettings {
    fn default() -> Self {
        SdpSettings { tol_feas: 1e-8, tol_gap: 1e-7, tol_infeas: 1e-8, max_iter: 120, step_fraction: 0.95 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SdpStatus {
    Optimal,
    /// No `X` satisfies the constraints; `y` is a certificate.
    PrimalInfeasible,
    /// The dual has no feasible point; `X` is an improving ray.
    DualInfeasible,
    /// Stopped with the best iterate; residuals tell how close it got.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: Vec<DMatrix<f64>>,
    pub y: Vec<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

fn frob_sq(ms: &[DMatrix<f64>]) -> f64 {
    ms.iter().map(|m| m.norm_squared()).sum()
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `alpha` with `x + alpha dx` PSD (infinite if never violated).
fn max_step(x: &[DMatrix<f64>], dx: &[DMatrix<f64>]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (xb, db) in x.iter().zip(dx) {
        let l = match xb.clone().cholesky() {
            Some(c) => c.l(),
            None => return 0.0,
        };
        let li = l.clone().try_inverse().unwrap_or_else(|| DMatrix::zeros(l.nrows(), l.ncols()));
        let w = sym(&(&li * db * li.transpose()));
        let lmin = SymmetricEigen::new(w).eigenvalues.min();
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    alpha
}

fn inverse_pd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// Drops linearly dependent constraints. A dependent row with an inconsistent right-hand
/// side means the linear system alone is infeasible.
fn independent_rows(p: &SdpProblem) -> (Vec<usize>, bool) {
    let m = p.a.len();
    let mut gram = DMatrix::zeros(m, m);
    // index entries by position for sparse dot products
    use std::collections::HashMap;
    let maps: Vec<HashMap<(usize, usize, usize), f64>> =
        p.a.iter().map(|a| a.entries.iter().map(|&(b, r, c, v)| ((b, r, c), v)).collect()).collect();
    for i in 0..m {
        for j in i..m {
            let (small, big) = if p.a[i].entries.len() <= p.a[j].entries.len() { (i, j) } else { (j, i) };
            let mut s = 0.0;
            for &(b, r, c, v) in &p.a[small].entries {
                if let Some(w) = maps[big].get(&(b, r, c)) {
                    s += v * w;
                }
            }
            gram[(i, j)] = s;
            gram[(j, i)] = s;
        }
    }
    // pivoted Cholesky on the Gram matrix
    let scale = (0..m).map(|i| gram[(i, i)]).fold(0.0, f64::max).max(1e-300);
    let tol = 1e-10 * scale;
    let mut keep = Vec::new();
    let mut l: Vec<Vec<f64>> = Vec::new();
    for i in 0..m {
        let mut row = Vec::with_capacity(keep.len());
        for (t, &k) in keep.iter().enumerate() {
            let mut s = gram[(i, k)];
            for u in 0..t {
                s -= row[u] * l[t][u];
            }
            row.push(s / l[t][t]);
        }
        let d = gram[(i, i)] - row.iter().map(|x| x * x).sum::<f64>();
        if d > tol {
            row.push(d.sqrt());
            l.push(row);
            keep.push(i);
        }
    }
    // consistency: project each dropped row's b onto the kept rows
    let mut consistent = true;
    if keep.len() < m {
        let k = keep.len();
        let gk = DMatrix::from_fn(k, k, |a, b| gram[(keep[a], keep[b])]);
        let bk = DVector::from_iterator(k, keep.iter().map(|&i| p.b[i]));
        if let Some(ch) = gk.clone().cholesky() {
            let coef_b = ch.solve(&bk);
            for i in (0..m).filter(|i| !keep.contains(i)) {
                let gi = DVector::from_iterator(k, keep.iter().map(|&kk| gram[(i, kk)]));
                let lam = ch.solve(&gi);
                let pred = lam.dot(&bk);
                let _ = &coef_b;
                if (pred - p.b[i]).abs() > 1e-7 * (1.0 + p.b[i].abs()) {
                    consistent = false;
                }
            }
        }
    }
    (keep, consistent)
}

/// Solves the block SDP.
pub fn solve_sdp(problem: &SdpProblem, settings: &SdpSettings) -> Result<SdpSolution> {
    if problem.a.len() != problem.b.len() {
        return Err(Error::DimensionMismatch { left: problem.a.len(), right: problem.b.len() });
    }
    for a in problem.a.iter().chain(std::iter::once(&problem.c)) {
        for &(b, r, c, _) in &a.entries {
            if b >= problem.blocks.len() || c >= problem.blocks[b] || r > c {
                return Err(Error::InvalidArgument(format!("entry ({b},{r},{c}) outside the block structure")));
            }
        }
    }
    let (keep, consistent) = independent_rows(problem);
    let sizes = &problem.blocks;
    let zero_blocks = || -> Vec<DMatrix<f64>> { sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect() };
    if !consistent {
        return Ok(SdpSolution {
            status: SdpStatus::PrimalInfeasible,
            x: zero_blocks(),
            y: vec![0.0; problem.a.len()],
            z: zero_blocks(),
            primal_obj: f64::NAN,
            dual_obj: f64::NAN,
            iterations: 0,
            primal_residual: f64::INFINITY,
            dual_residual: f64::NAN,
            gap: f64::NAN,
        });
    }
    let a: Vec<&SparseSym> = keep.iter().map(|&i| &problem.a[i]).collect();
    let b = DVector::from_iterator(keep.len(), keep.iter().map(|&i| problem.b[i]));
    let m = a.len();
    let n_total: usize = sizes.iter().sum();
    let a_blocks: Vec<Vec<usize>> = a.iter().map(|ai| ai.blocks()).collect();

    let apply_a = |x: &[DMatrix<f64>]| DVector::from_iterator(m, a.iter().map(|ai| ai.dot_sym(x)));
    let apply_at = |y: &DVector<f64>| {
        let mut out = zero_blocks();
        for (ai, yi) in a.iter().zip(y.iter()) {
            ai.add_to(*yi, &mut out);
        }
        out
    };
    let mut cmat = zero_blocks();
    problem.c.add_to(1.0, &mut cmat);
    let c_norm = frob_sq(&cmat).sqrt();
    let b_norm = b.norm();

    let a_norm_max = a.iter().map(|ai| ai.norm_sq().sqrt()).fold(0.0, f64::max);
    let xi = a
        .iter()
        .zip(b.iter())
        .map(|(ai, bi)| (1.0 + bi.abs()) / (1.0 + ai.norm_sq().sqrt()))
        .fold(10.0f64, f64::max)
        .max((n_total as f64).sqrt());
    let eta = 10f64.max((n_total as f64).sqrt()).max(a_norm_max).max(c_norm);
    let mut x: Vec<DMatrix<f64>> = sizes.iter().map(|&s| DMatrix::identity(s, s) * xi).collect();
    let mut z: Vec<DMatrix<f64>> = sizes.iter().map(|&s| DMatrix::identity(s, s) * eta).collect();
    let mut y = DVector::zeros(m);

    let mut status = SdpStatus::Stalled;
    let mut iterations = 0;
    let (mut pres, mut dres, mut gap) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for it in 0..settings.max_iter {
        iterations = it;
        let ax = apply_a(&x);
        let rp = &b - &ax;
        let aty = apply_at(&y);
        let rd: Vec<DMatrix<f64>> = (0..sizes.len()).map(|k| &cmat[k] - &aty[k] - &z[k]).collect();
        let pobj = inner(&cmat, &x);
        let dobj = b.dot(&y);
        let mu = inner(&x, &z) / n_total as f64;
        pres = rp.norm() / (1.0 + b_norm);
        dres = frob_sq(&rd).sqrt() / (1.0 + c_norm);
        gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        if pres <= settings.tol_feas && dres <= settings.tol_feas && gap <= settings.tol_gap {
            status = SdpStatus::Optimal;
            break;
        }
        // infeasibility certificates
        if dobj > 0.0 {
            let ray: Vec<DMatrix<f64>> = (0..sizes.len()).map(|k| &aty[k] + &z[k]).collect();
            if frob_sq(&ray).sqrt() / dobj < settings.tol_infeas {
                status = SdpStatus::PrimalInfeasible;
                break;
            }
        }
        if pobj < 0.0 && ax.norm() / (-pobj) < settings.tol_infeas {
            status = SdpStatus::DualInfeasible;
            break;
        }
        if !x.iter().chain(z.iter()).all(|m| m.iter().all(|v| v.is_finite())) {
            return Err(Error::SolverFailure("non-finite iterate".into()));
        }

        let zinv: Vec<DMatrix<f64>> = match z.iter().map(inverse_pd).collect::<Option<Vec<_>>>() {
            Some(v) => v,
            None => break,
        };
        // Schur complement M_ij = <A_i, X A_j Z^{-1}>
        let mut schur = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut g = zero_blocks();
            for &blk in &a_blocks[j] {
                let s = sizes[blk];
                let mut t = DMatrix::zeros(s, s);
                for &(bb, r, c, v) in &a[j].entries {
                    if bb != blk {
                        continue;
                    }
                    if r == c {
                        t.column_mut(r).axpy(v, &x[blk].column(r), 1.0);
                    } else {
                        t.column_mut(c).axpy(0.5 * v, &x[blk].column(r), 1.0);
                        t.column_mut(r).axpy(0.5 * v, &x[blk].column(c), 1.0);
                    }
                }
                g[blk] = t * &zinv[blk];
            }
            for i in 0..=j {
                if a_blocks[i].iter().any(|bl| a_blocks[j].contains(bl)) {
                    let v = a[i].dot_sym(&g);
                    schur[(i, j)] = v;
                    schur[(j, i)] = v;
                }
            }
        }
        let chol = {
            let mut reg = 0.0;
            let diag_max = (0..m).map(|i| schur[(i, i)]).fold(0.0, f64::max).max(1e-300);
            loop {
                let mut s = schur.clone();
                for i in 0..m {
                    s[(i, i)] += reg;
                }
                if let Some(c) = s.cholesky() {
                    break Some(c);
                }
                reg = if reg == 0.0 { 1e-14 * diag_max } else { reg * 100.0 };
                if reg > 1e-4 * diag_max {
                    break None;
                }
            }
        };
        let chol = match chol {
            Some(c) => c,
            None => break,
        };

        let xrdz: Vec<DMatrix<f64>> = (0..sizes.len()).map(|k| &x[k] * &rd[k] * &zinv[k]).collect();
        let a_xrdz = apply_a(&xrdz);
        let a_zinv = apply_a(&zinv);

        let direction = |sigma: f64, q: Option<&Vec<DMatrix<f64>>>| {
            let mut rhs = &b - &a_zinv * (sigma * mu) + &a_xrdz;
            if let Some(q) = q {
                rhs += apply_a(q);
            }
            let dy = chol.solve(&rhs);
            let atdy = apply_at(&dy);
            let dz: Vec<DMatrix<f64>> = (0..sizes.len()).map(|k| &rd[k] - &atdy[k]).collect();
            let dx: Vec<DMatrix<f64>> = (0..sizes.len())
                .map(|k| {
                    let mut d = &zinv[k] * (sigma * mu) - &x[k] - &x[k] * &dz[k] * &zinv[k];
                    if let Some(q) = q {
                        d -= &q[k];
                    }
                    sym(&d)
                })
                .collect();
            (dx, dy, dz)
        };

        let (dx_a, _, dz_a) = direction(0.0, None);
        let ap = (settings.step_fraction * max_step(&x, &dx_a)).min(1.0);
        let ad = (settings.step_fraction * max_step(&z, &dz_a)).min(1.0);
        let x_a: Vec<DMatrix<f64>> = (0..sizes.len()).map(|k| &x[k] + &dx_a[k] * ap).collect();
        let z_a: Vec<DMatrix<f64>> = (0..sizes.len()).map(|k| &z[k] + &dz_a[k] * ad).collect();
        let mu_aff = inner(&x_a, &z_a) / n_total as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let q: Vec<DMatrix<f64>> = (0..sizes.len()).map(|k| &dx_a[k] * &dz_a[k] * &zinv[k]).collect();
        let (dx, dy, dz) = direction(sigma, Some(&q));
        let ap = (settings.step_fraction * max_step(&x, &dx)).min(1.0);
        let ad = (settings.step_fraction * max_step(&z, &dz)).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            break;
        }
        for k in 0..sizes.len() {
            x[k] += &dx[k] * ap;
            z[k] += &dz[k] * ad;
        }
        y += dy * ad;
        iterations = it + 1;
    }
    let mut y_full = vec![0.0; problem.a.len()];
    for (t, &i) in keep.iter().enumerate() {
        y_full[i] = y[t];
    }
    Ok(SdpSolution {
        status,
        primal_obj: inner(&cmat, &x),
        dual_obj: b.dot(&y),
        x,
        y: y_full,
        z,
        iterations,
        primal_residual: pres,
        dual_residual: dres,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // min x11 + x22 s.t. x12 = 1 over 2x2 PSD: optimum 2 at X = [[1,1],[1,1]]
    #[test]
    fn tiny_sdp() {
        let mut c = SparseSym::new();
        c.add(0, 0, 0, 1.0);
        c.add(0, 1, 1, 1.0);
        let mut a = SparseSym::new();
        a.add(0, 0, 1, 1.0);
        let p = SdpProblem { blocks: vec![2], c, a: vec![a], b: vec![1.0] };
        let s = solve_sdp(&p, &SdpSettings::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.primal_obj - 2.0).abs() < 1e-6, "{}", s.primal_obj);
        assert!((s.x[0][(0, 1)] - 1.0).abs() < 1e-6);
    }

    // x11 = -1 has no PSD solution
    #[test]
    fn infeasible_detected() {
        let mut a = SparseSym::new();
        a.add(0, 0, 0, 1.0);
        let p = SdpProblem { blocks: vec![2], c: SparseSym::new(), a: vec![a], b: vec![-1.0] };
        let s = solve_sdp(&p, &SdpSettings::default()).unwrap();
        assert_eq!(s.status, SdpStatus::PrimalInfeasible);
    }

    #[test]
    fn dependent_rows_handled() {
        let mut c = SparseSym::new();
        c.add(0, 0, 0, 1.0);
        c.add(1, 0, 0, 1.0);
        let mut a1 = SparseSym::new();
        a1.add(0, 0, 0, 1.0);
        a1.add(1, 0, 0, 1.0);
        let a2 = a1.clone();
        let p = SdpProblem { blocks: vec![1, 1], c, a: vec![a1, a2], b: vec![3.0, 3.0] };
        let s = solve_sdp(&p, &SdpSettings::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.primal_obj - 3.0).abs() < 1e-6);
        let mut bad = p.clone();
        bad.b[1] = 4.0;
        assert_eq!(solve_sdp(&bad, &SdpSettings::default()).unwrap().status, SdpStatus::PrimalInfeasible);
    }
}
