use serde::{Deserialize, Serialize};

use super::monomial::monomials_up_to;
use super::polynomial::FloatPoly;
use crate::error::{Error, Result};

/// Two sides of a coefficient-norm inequality `lhs <= rhs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormPair {
    pub lhs: f64,
    pub rhs: f64,
}

impl NormPair {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.lhs <= self.rhs + rel_tol * self.rhs.abs().max(1e-300)
    }
}

/// `||v(fg)||^2 / (||v(f)||^2 ||v(g)||^2)`.
pub fn product_norm_ratio(f: &FloatPoly, g: &FloatPoly) -> Result<f64> {
    if f.is_zero() || g.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let cap = f.cap().max(g.cap()).max(f.degree().unwrap_or(0) + g.degree().unwrap_or(0));
    let fg = f.clone().with_cap(cap).checked_mul(g)?;
    Ok(fg.norm_sq() / (f.norm_sq() * g.norm_sq()))
}

/// `(v(AB) . v(CD), ||v(AC)|| ||v(BD)||)`; the first never exceeds the second.
pub fn dot_product_pairing(a: &FloatPoly, b: &FloatPoly, c: &FloatPoly, d: &FloatPoly) -> Result<NormPair> {
    let widen = |p: &FloatPoly| p.clone().with_cap(64);
    let ab = widen(a).checked_mul(b)?;
    let cd = widen(c).checked_mul(d)?;
    let ac = widen(a).checked_mul(c)?;
    let bd = widen(b).checked_mul(d)?;
    Ok(NormPair { lhs: ab.dot(&cd)?, rhs: (ac.norm_sq() * bd.norm_sq()).sqrt() })
}

/// `(||v(f_1 + ... + f_m)||^2, m * sum ||v(f_i)||^2)`.
pub fn sum_bound(fs: &[FloatPoly]) -> Result<NormPair> {
    let first = fs.first().ok_or(Error::EmptyInput("sum_bound needs at least one polynomial"))?;
    let mut s = FloatPoly::zero(first.dim());
    let mut rhs = 0.0;
    for f in fs {
        s = s.checked_add(f)?;
        rhs += f.norm_sq();
    }
    Ok(NormPair { lhs: s.norm_sq(), rhs: fs.len() as f64 * rhs })
}

/// Largest number of ways a monomial of `fg` splits as (monomial of f) x (monomial of g)
/// when `deg f <= df`, `deg g <= dg`. By Cauchy-Schwarz
/// `||v(fg)||^2 <= N ||v(f)||^2 ||v(g)||^2` with this `N`.
pub fn factor_upper_constant(d: usize, df: u32, dg: u32) -> usize {
    let fs = monomials_up_to(d, df);
    monomials_up_to(d, df + dg)
        .iter()
        .map(|a| {
            fs.iter()
                .filter(|u| u.divides(a) && u.quotient_of(a).degree() <= dg)
                .count()
        })
        .max()
        .unwrap_or(1)
}
