use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermite::IsoMixture;
use crate::poly::MonomialBasis;

/// Result of comparing two mixtures through their Hermite polynomials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Equivalence {
    /// All Hermite coefficients agree; `matching[i]` is the component of the second
    /// mixture paired with component `i` of the first.
    Matching { matching: Vec<usize>, max_param_gap: f64 },
    /// First Hermite coefficient that differs by more than the tolerance.
    Divergence { m: u32, monomial_index: usize, left: f64, right: f64 },
    /// Hermite coefficients agree but no component pairing fits the tolerance.
    Unmatched { best_gap: f64 },
}

fn param_gap(a: &IsoMixture<f64>, i: usize, b: &IsoMixture<f64>, j: usize) -> f64 {
    let mut g = (a.weights[i] - b.weights[j]).abs();
    for (x, y) in a.means[i].iter().zip(&b.means[j]) {
        g = g.max((x - y).abs());
    }
    for (r, s) in a.sigmas[i].iter().zip(&b.sigmas[j]) {
        for (x, y) in r.iter().zip(s) {
            g = g.max((x - y).abs());
        }
    }
    g
}

fn best_matching(a: &IsoMixture<f64>, b: &IsoMixture<f64>) -> (Vec<usize>, f64) {
    let k = a.k();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = (perm.clone(), f64::INFINITY);
    permute(&mut perm, 0, &mut |p| {
        let gap = (0..k).map(|i| param_gap(a, i, b, p[i])).fold(0.0, f64::max);
        if gap < best.1 {
            best = (p.to_vec(), gap);
        }
    });
    best
}

fn permute(p: &mut Vec<usize>, start: usize, f: &mut impl FnMut(&[usize])) {
    if start == p.len() {
        f(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permute(p, start + 1, f);
        p.swap(start, i);
    }
}

/// Compares Hermite coefficient vectors up to `m_max`; on agreement pairs components
/// by their parameters.
pub fn mixture_equivalence_diagnostic(
    a: &IsoMixture<f64>,
    b: &IsoMixture<f64>,
    m_max: u32,
    tol: f64,
) -> Result<Equivalence> {
    if a.k() != b.k() {
        return Err(Error::InvalidArgument(format!("component counts differ: {} vs {}", a.k(), b.k())));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    if a.k() > 8 {
        return Err(Error::SizeCap { size: a.k(), cap: 8 });
    }
    let ha = a.hermite_all(m_max)?;
    let hb = b.hermite_all(m_max)?;
    let basis = MonomialBasis::new(a.dim(), m_max);
    for m in 0..=m_max as usize {
        let va = ha[m].vectorize_in(&basis)?.entries;
        let vb = hb[m].vectorize_in(&basis)?.entries;
        for (idx, (x, y)) in va.iter().zip(&vb).enumerate() {
            if (x - y).abs() > tol * (1.0 + x.abs().max(y.abs())) {
                return Ok(Equivalence::Divergence { m: m as u32, monomial_index: idx, left: *x, right: *y });
            }
        }
    }
    let (matching, gap) = best_matching(a, b);
    if gap <= tol.sqrt().max(tol) {
        Ok(Equivalence::Matching { matching, max_param_gap: gap })
    } else {
        Ok(Equivalence::Unmatched { best_gap: gap })
    }
}
