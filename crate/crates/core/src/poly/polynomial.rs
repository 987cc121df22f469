use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use super::coeff::{Coeff, Rational};
use super::monomial::{Monomial, MonomialBasis};
use crate::error::{Error, Result};

/// Default ceiling on total degree; products beyond it are rejected.
pub const DEFAULT_DEGREE_CAP: u32 = 16;

/// Sparse multivariate polynomial in `x1..xd` over a coefficient field `C`.
///
/// Zero coefficients are never stored, so the zero polynomial has no terms. Equality
/// compares dimension and terms; the degree cap is a working limit, not part of the value.
#[derive(Clone, Debug)]
pub struct Polynomial<C: Coeff> {
    d: usize,
    cap: u32,
    terms: BTreeMap<Monomial, C>,
}

impl<C: Coeff> PartialEq for Polynomial<C> {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.terms == other.terms
    }
}

pub type RatPoly = Polynomial<Rational>;
pub type FloatPoly = Polynomial<f64>;

/// Dense coefficient vector under the fixed graded-lex order.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientVector<C> {
    pub d: usize,
    pub degree_bound: u32,
    pub entries: Vec<C>,
}

impl<C: Coeff> CoefficientVector<C> {
    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|c| c.to_f64().powi(2)).sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|c| c.to_f64()).collect()
    }
}

impl<C: Coeff> Polynomial<C> {
    pub fn zero(d: usize) -> Self {
        Polynomial { d, cap: DEFAULT_DEGREE_CAP, terms: BTreeMap::new() }
    }

    pub fn constant(d: usize, c: C) -> Self {
        Self::monomial(Monomial::one(d), c)
    }

    pub fn one(d: usize) -> Self {
        Self::constant(d, C::one())
    }

    pub fn var(d: usize, i: usize) -> Self {
        Self::monomial(Monomial::var(d, i), C::one())
    }

    pub fn monomial(m: Monomial, c: C) -> Self {
        let mut p = Self::zero(m.dim());
        p.cap = p.cap.max(m.degree());
        if !c.is_zero() {
            p.terms.insert(m, c);
        }
        p
    }

    /// Linear form `sum_i a_i x_i`.
    pub fn linear(a: &[C]) -> Self {
        let d = a.len();
        let mut p = Self::zero(d);
        for (i, c) in a.iter().enumerate() {
            p.add_term(Monomial::var(d, i), c.clone());
        }
        p
    }

    /// Quadratic form `x^T A x` for a symmetric `A` given row-major.
    pub fn quadratic_form(a: &[Vec<C>]) -> Self {
        let d = a.len();
        let mut p = Self::zero(d);
        for i in 0..d {
            for j in 0..d {
                let mut e = vec![0u32; d];
                e[i] += 1;
                e[j] += 1;
                p.add_term(Monomial::new(e), a[i][j].clone());
            }
        }
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (Monomial, C)>>(d: usize, terms: I) -> Result<Self> {
        let mut p = Self::zero(d);
        for (m, c) in terms {
            if m.dim() != d {
                return Err(Error::DimensionMismatch { left: m.dim(), right: d });
            }
            p.add_term(m, c);
        }
        p.check_cap()?;
        Ok(p)
    }

    pub fn with_cap(mut self, cap: u32) -> Self {
        self.cap = cap;
        self
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().next_back().map(|m| m.degree())
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &C)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> C {
        self.terms.get(m).cloned().unwrap_or_else(C::zero)
    }

    pub fn constant_term(&self) -> C {
        self.coeff(&Monomial::one(self.d))
    }

    /// Adds `c * m` in place, pruning an exact zero.
    pub fn add_term(&mut self, m: Monomial, c: C) {
        if c.is_zero() {
            return;
        }
        let deg = m.degree();
        match self.terms.get_mut(&m) {
            Some(v) => {
                let s = v.clone() + c;
                if s.is_zero() {
                    self.terms.remove(&m);
                } else {
                    *v = s;
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
        if deg > self.cap {
            self.cap = deg;
        }
    }

    fn check_cap(&self) -> Result<()> {
        match self.degree() {
            Some(deg) if deg > self.cap => Err(Error::DegreeCap { degree: deg, cap: self.cap }),
            _ => Ok(()),
        }
    }

    fn same_dim(&self, other: &Self) -> Result<()> {
        if self.d != other.d {
            Err(Error::DimensionMismatch { left: self.d, right: other.d })
        } else {
            Ok(())
        }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        let mut out = self.clone();
        out.cap = self.cap.max(other.cap);
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        let mut out = self.clone();
        out.cap = self.cap.max(other.cap);
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        Ok(out)
    }

    /// Distributive product; fails when the result would exceed the degree cap.
    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        let cap = self.cap.max(other.cap);
        if let (Some(a), Some(b)) = (self.degree(), other.degree()) {
            if a + b > cap {
                return Err(Error::DegreeCap { degree: a + b, cap });
            }
        }
        let mut out = Self::zero(self.d).with_cap(cap);
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.mul(m2), c1.clone() * c2.clone());
            }
        }
        Ok(out)
    }

    pub fn checked_pow(&self, e: u32) -> Result<Self> {
        let mut out = Self::one(self.d).with_cap(self.cap);
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                out = out.checked_mul(&base)?;
            }
            e >>= 1;
            if e > 0 {
                base = base.checked_mul(&base)?;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &C) -> Self {
        let mut out = Self::zero(self.d).with_cap(self.cap);
        if c.is_zero() {
            return out;
        }
        for (m, v) in &self.terms {
            out.terms.insert(m.clone(), v.clone() * c.clone());
        }
        out
    }

    /// Multiplies by a single monomial `c * m`.
    pub fn mul_monomial(&self, m: &Monomial, c: &C) -> Result<Self> {
        self.checked_mul(&Self::monomial(m.clone(), c.clone()).with_cap(self.cap))
    }

    pub fn eval(&self, x: &[C]) -> Result<C> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { left: x.len(), right: self.d });
        }
        let mut acc = C::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &e) in x.iter().zip(m.exponents()) {
                for _ in 0..e {
                    t = t * xi.clone();
                }
            }
            acc = acc + t;
        }
        Ok(acc)
    }

    /// Substitutes polynomial `subs[i]` (all in a common dimension) for `x_i`.
    pub fn compose(&self, subs: &[Self]) -> Result<Self> {
        if subs.len() != self.d {
            return Err(Error::DimensionMismatch { left: subs.len(), right: self.d });
        }
        let d2 = subs.first().map(|s| s.d).unwrap_or(0);
        let cap = subs.iter().map(|s| s.cap).max().unwrap_or(self.cap).max(self.cap);
        let mut out = Polynomial::zero(d2).with_cap(cap);
        for (m, c) in &self.terms {
            let mut t = Polynomial::constant(d2, c.clone()).with_cap(cap);
            for (s, &e) in subs.iter().zip(m.exponents()) {
                if e > 0 {
                    t = t.checked_mul(&s.checked_pow(e)?)?;
                }
            }
            out = out.checked_add(&t)?;
        }
        Ok(out)
    }

    /// Part of homogeneous degree exactly `deg`.
    pub fn homogeneous_part(&self, deg: u32) -> Self {
        let mut out = Self::zero(self.d).with_cap(self.cap);
        for (m, c) in &self.terms {
            if m.degree() == deg {
                out.terms.insert(m.clone(), c.clone());
            }
        }
        out
    }

    /// True when every stored term has total degree `deg` (vacuous for zero).
    pub fn is_homogeneous_of(&self, deg: u32) -> bool {
        self.terms.keys().all(|m| m.degree() == deg)
    }

    /// Leading term under graded lex.
    pub fn leading_term(&self) -> Option<(&Monomial, &C)> {
        self.terms.iter().next_back()
    }

    /// Multivariate division by a single divisor: `self = q * divisor + r` where no term
    /// of `r` is divisible by the divisor's leading monomial.
    pub fn div_rem(&self, divisor: &Self) -> Result<(Self, Self)> {
        self.same_dim(divisor)?;
        let (lm, lc) = match divisor.leading_term() {
            Some((m, c)) => (m.clone(), c.clone()),
            None => return Err(Error::ZeroPolynomial),
        };
        let mut q = Self::zero(self.d).with_cap(self.cap);
        let mut r = Self::zero(self.d).with_cap(self.cap);
        let mut p = self.clone();
        while let Some((m, c)) = p.leading_term().map(|(m, c)| (m.clone(), c.clone())) {
            if lm.divides(&m) {
                let t = Self::monomial(lm.quotient_of(&m), c / lc.clone()).with_cap(self.cap);
                p = p.checked_sub(&t.checked_mul(divisor)?)?;
                q = q.checked_add(&t)?;
            } else {
                p.terms.remove(&m);
                r.add_term(m, c);
            }
        }
        Ok((q, r))
    }

    pub fn vectorize(&self, degree_bound: u32) -> Result<CoefficientVector<C>> {
        let basis = MonomialBasis::new(self.d, degree_bound);
        self.vectorize_in(&basis)
    }

    pub fn vectorize_in(&self, basis: &MonomialBasis) -> Result<CoefficientVector<C>> {
        if basis.dim() != self.d {
            return Err(Error::DimensionMismatch { left: self.d, right: basis.dim() });
        }
        if let Some(deg) = self.degree() {
            if deg > basis.bound() {
                return Err(Error::DegreeTooLarge { degree: deg, bound: basis.bound() });
            }
        }
        let mut entries = vec![C::zero(); basis.len()];
        for (m, c) in &self.terms {
            entries[basis.index_of(m)?] = c.clone();
        }
        Ok(CoefficientVector { d: self.d, degree_bound: basis.bound(), entries })
    }

    /// Rebuilds a polynomial from a dense vector in `basis` order.
    pub fn from_vector(basis: &MonomialBasis, v: &[C]) -> Result<Self> {
        if v.len() != basis.len() {
            return Err(Error::DimensionMismatch { left: v.len(), right: basis.len() });
        }
        let mut p = Self::zero(basis.dim()).with_cap(basis.bound().max(DEFAULT_DEGREE_CAP));
        for (m, c) in basis.monomials().iter().zip(v) {
            p.add_term(m.clone(), c.clone());
        }
        Ok(p)
    }

    /// Squared coefficient norm `||v(p)||^2` in the coefficient field.
    pub fn norm_sq_exact(&self) -> C {
        self.terms.values().fold(C::zero(), |acc, c| acc + c.clone() * c.clone())
    }

    /// Squared coefficient norm as a double.
    pub fn norm_sq(&self) -> f64 {
        self.terms.values().map(|c| c.to_f64().powi(2)).sum()
    }

    /// Coefficient dot product `v(p) . v(q)`.
    pub fn dot(&self, other: &Self) -> Result<C> {
        self.same_dim(other)?;
        let mut acc = C::zero();
        for (m, c) in &self.terms {
            if let Some(c2) = other.terms.get(m) {
                acc = acc + c.clone() * c2.clone();
            }
        }
        Ok(acc)
    }

    pub fn map_coeffs<D: Coeff, F: Fn(&C) -> D>(&self, f: F) -> Polynomial<D> {
        let mut out = Polynomial::<D>::zero(self.d).with_cap(self.cap);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), f(c));
        }
        out
    }

    pub fn to_float(&self) -> FloatPoly {
        self.map_coeffs(|c| c.to_f64())
    }

    /// Embeds into `d2 >= d` variables, mapping `x_i` to `x_{offset+i}`.
    pub fn embed(&self, d2: usize, offset: usize) -> Result<Self> {
        if offset + self.d > d2 {
            return Err(Error::DimensionMismatch { left: offset + self.d, right: d2 });
        }
        let mut out = Self::zero(d2).with_cap(self.cap);
        for (m, c) in &self.terms {
            let mut e = vec![0u32; d2];
            e[offset..offset + self.d].copy_from_slice(m.exponents());
            out.terms.insert(Monomial::new(e), c.clone());
        }
        Ok(out)
    }

    /// Partial derivative in `x_i`.
    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.d).with_cap(self.cap);
        for (m, c) in &self.terms {
            let e = m.exponents()[i];
            if e > 0 {
                let mut ex = m.exponents().to_vec();
                ex[i] -= 1;
                out.add_term(Monomial::new(ex), c.clone() * C::from_i64(e as i64));
            }
        }
        out
    }
}

impl FloatPoly {
    /// Drops coefficients with magnitude at most `tol`.
    pub fn prune(&self, tol: f64) -> Self {
        let mut out = Self::zero(self.d).with_cap(self.cap);
        for (m, c) in &self.terms {
            if c.abs() > tol {
                out.terms.insert(m.clone(), *c);
            }
        }
        out
    }
}

// Operator sugar for code paths that already validated dimensions and caps.
// Each panics with the underlying error otherwise.

impl<'a, C: Coeff> Add for &'a Polynomial<C> {
    type Output = Polynomial<C>;
    fn add(self, rhs: Self) -> Polynomial<C> {
        self.checked_add(rhs).expect("polynomial addition")
    }
}

impl<'a, C: Coeff> Sub for &'a Polynomial<C> {
    type Output = Polynomial<C>;
    fn sub(self, rhs: Self) -> Polynomial<C> {
        self.checked_sub(rhs).expect("polynomial subtraction")
    }
}

impl<'a, C: Coeff> Mul for &'a Polynomial<C> {
    type Output = Polynomial<C>;
    fn mul(self, rhs: Self) -> Polynomial<C> {
        self.checked_mul(rhs).expect("polynomial multiplication")
    }
}

impl<'a, C: Coeff> Neg for &'a Polynomial<C> {
    type Output = Polynomial<C>;
    fn neg(self) -> Polynomial<C> {
        self.scale(&-C::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::coeff::rat;

    fn x(d: usize, i: usize) -> RatPoly {
        RatPoly::var(d, i)
    }

    fn c(d: usize, v: i64) -> RatPoly {
        RatPoly::constant(d, rat(v, 1))
    }

    #[test]
    fn add_examples() {
        assert!((&x(1, 0) + &(-&x(1, 0))).is_zero());
        let p = &(&x(1, 0) * &x(1, 0)) - &c(1, 1);
        assert_eq!(&p + &c(1, 1), &x(1, 0) * &x(1, 0));
        let s = &x(2, 0) + &x(2, 1);
        let r = &s + &(&x(2, 0) * &x(2, 1));
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn multiply_examples() {
        let a = &(&x(1, 0) - &c(1, 1)) * &(&x(1, 0) + &c(1, 1));
        assert_eq!(a, &(&x(1, 0) * &x(1, 0)) - &c(1, 1));
        let p = &x(2, 0) + &x(2, 1);
        assert_eq!(&c(2, 1) * &p, p);
        let sq = &p * &p;
        assert_eq!(sq.coeff(&Monomial::new(vec![1, 1])), rat(2, 1));
        assert_eq!(sq.coeff(&Monomial::new(vec![2, 0])), rat(1, 1));
    }

    #[test]
    fn cap_is_enforced() {
        let p = x(1, 0).checked_pow(9).unwrap();
        assert!(p.checked_mul(&p).unwrap_err().to_string().contains("cap"));
        let q = p.clone().with_cap(20);
        assert_eq!(q.checked_mul(&p).unwrap().degree(), Some(18));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(x(1, 0).checked_add(&x(2, 0)).is_err());
        assert!(x(1, 0).checked_mul(&x(2, 0)).is_err());
    }

    #[test]
    fn vectorize_examples() {
        let z = RatPoly::zero(2).vectorize(2).unwrap();
        assert!(z.entries.iter().all(|e| *e == rat(0, 1)));
        let p = &(&x(1, 0) * &x(1, 0)) - &c(1, 1);
        assert_eq!(p.vectorize(2).unwrap().entries, vec![rat(-1, 1), rat(0, 1), rat(1, 1)]);
        assert_eq!(x(1, 0).scale(&rat(3, 1)).norm_sq(), 9.0);
        assert!(p.vectorize(1).is_err());
    }

    #[test]
    fn division_recovers_factor() {
        let a = &(&x(2, 0) * &x(2, 1)) - &c(2, 3);
        let b = &(&x(2, 0) + &x(2, 1)) + &c(2, 1);
        let (q, r) = (&a * &b).div_rem(&b).unwrap();
        assert!(r.is_zero());
        assert_eq!(q, a);
    }

    #[test]
    fn compose_substitutes() {
        // (x^2 - y) at x = a + b, y = a b  ->  a^2 + a b + b^2
        let p = &(&x(2, 0) * &x(2, 0)) - &x(2, 1);
        let s = p.compose(&[&x(2, 0) + &x(2, 1), &x(2, 0) * &x(2, 1)]).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.coeff(&Monomial::new(vec![1, 1])), rat(1, 1));
    }
}
