//! Hermite polynomials: univariate, homogenized, multivariate, and the mixture moments
//! `h_m` both in closed form and from samples.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{monomials_of_degree, Coeff, FloatPoly, Monomial, Polynomial, RatPoly, Rational};

/// Probabilists' Hermite polynomial with integer coefficients, `coeffs[j]` on `x^j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HermiteUnivariate {
    pub m: u32,
    pub coeffs: Vec<BigInt>,
}

impl HermiteUnivariate {
    pub fn to_poly(&self) -> RatPoly {
        let mut p = RatPoly::zero(1).with_cap(self.m.max(1));
        for (j, c) in self.coeffs.iter().enumerate() {
            p.add_term(Monomial::new(vec![j as u32]), Rational::from_integer(c.clone()));
        }
        p
    }
}

/// `H_0 = 1`, `H_1 = x`, `H_m = x H_{m-1} - (m-1) H_{m-2}`.
pub fn hermite_univariate(m: u32) -> HermiteUnivariate {
    let mut prev: Vec<BigInt> = vec![BigInt::one()];
    if m == 0 {
        return HermiteUnivariate { m, coeffs: prev };
    }
    let mut cur: Vec<BigInt> = vec![BigInt::zero(), BigInt::one()];
    for k in 2..=m {
        let mut next = vec![BigInt::zero(); k as usize + 1];
        for (j, c) in cur.iter().enumerate() {
            next[j + 1] += c;
        }
        for (j, c) in prev.iter().enumerate() {
            next[j] -= c * BigInt::from(k - 1);
        }
        prev = std::mem::replace(&mut cur, next);
    }
    HermiteUnivariate { m, coeffs: cur }
}

/// `H_m(x, q)` with `q` standing for `y^2`: the term `x^{m-2j}` of `H_m` becomes
/// `x^{m-2j} q^j`. Variables are `(x, q)`.
pub fn hermite_homogenized_xq(m: u32) -> RatPoly {
    let h = hermite_univariate(m);
    let mut p = RatPoly::zero(2).with_cap(m.max(1));
    for (deg, c) in h.coeffs.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let j = (m as usize - deg) / 2;
        p.add_term(Monomial::new(vec![deg as u32, j as u32]), Rational::from_integer(c.clone()));
    }
    p
}

/// `H_m(x, y^2)` as a polynomial in `(x, y)`, e.g. `x^3 - 3 x y^2`.
pub fn hermite_homogenized(m: u32) -> RatPoly {
    let xq = hermite_homogenized_xq(m);
    let mut p = RatPoly::zero(2).with_cap(m.max(1));
    for (mono, c) in xq.terms() {
        let e = mono.exponents();
        p.add_term(Monomial::new(vec![e[0], 2 * e[1]]), c.clone());
    }
    p
}

/// `H_m(X, z) = H_m(z . X, ||X||^2)` over variables `(X_1..X_d, z_1..z_d)`.
pub fn hermite_multivariate(m: u32, d: usize) -> Result<RatPoly> {
    let cap = (2 * m).max(crate::poly::DEFAULT_DEGREE_CAP);
    let n = 2 * d;
    let mut dot = RatPoly::zero(n).with_cap(cap);
    let mut sq = RatPoly::zero(n).with_cap(cap);
    for i in 0..d {
        let mut e = vec![0u32; n];
        e[i] = 1;
        e[d + i] = 1;
        dot.add_term(Monomial::new(e), Rational::one());
        let mut e = vec![0u32; n];
        e[i] = 2;
        sq.add_term(Monomial::new(e), Rational::one());
    }
    hermite_homogenized_xq(m).with_cap(cap).compose(&[dot, sq])
}

/// Mixture parameters in the isotropic convention: component `i` is
/// `N(mu_i, I + Sigma_i)`, so `a_i(X) = mu_i . X` and `b_i(X) = X^T Sigma_i X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsoMixture<C> {
    pub weights: Vec<C>,
    pub means: Vec<Vec<C>>,
    pub sigmas: Vec<Vec<Vec<C>>>,
}

impl<C: Coeff> IsoMixture<C> {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map(|m| m.len()).unwrap_or(0)
    }

    pub fn mean_form(&self, i: usize) -> Polynomial<C> {
        Polynomial::linear(&self.means[i])
    }

    pub fn sigma_form(&self, i: usize) -> Polynomial<C> {
        Polynomial::quadratic_form(&self.sigmas[i])
    }

    /// `h_0, ..., h_{m_max}` from the generating function
    /// `sum_m h_m y^m / m! = sum_i w_i exp(a_i y + b_i y^2 / 2)`.
    ///
    /// With `g_m = m! [y^m] exp(a y + b y^2/2)` one has `g_m = a g_{m-1} + (m-1) b g_{m-2}`.
    pub fn hermite_all(&self, m_max: u32) -> Result<Vec<Polynomial<C>>> {
        let d = self.dim();
        let cap = m_max.max(crate::poly::DEFAULT_DEGREE_CAP);
        let mut h = vec![Polynomial::<C>::zero(d).with_cap(cap); m_max as usize + 1];
        for i in 0..self.k() {
            let a = self.mean_form(i).with_cap(cap);
            let b = self.sigma_form(i).with_cap(cap);
            let mut g: Vec<Polynomial<C>> = Vec::with_capacity(m_max as usize + 1);
            g.push(Polynomial::one(d).with_cap(cap));
            for m in 1..=m_max as usize {
                let mut next = a.checked_mul(&g[m - 1])?;
                if m >= 2 {
                    next = next.checked_add(&b.checked_mul(&g[m - 2])?.scale(&C::from_i64(m as i64 - 1)))?;
                }
                g.push(next);
            }
            for (hm, gm) in h.iter_mut().zip(&g) {
                *hm = hm.checked_add(&gm.scale(&self.weights[i]))?;
            }
        }
        Ok(h)
    }
}

/// The degree-`m` mixture Hermite polynomial `h_m` with its order.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureHermite<C: Coeff> {
    pub m: u32,
    pub polynomial: Polynomial<C>,
}

/// `h_m` of a mixture given in the isotropic convention.
pub fn mixture_hermite_closed_form<C: Coeff>(mix: &IsoMixture<C>, m: u32) -> Result<MixtureHermite<C>> {
    if mix.k() == 0 {
        return Err(Error::EmptyInput("mixture has no components"));
    }
    let h = mix.hermite_all(m)?;
    Ok(MixtureHermite { m, polynomial: h[m as usize].clone() })
}

/// `He_0(t), ..., He_m(t)` at a point.
pub fn hermite_values(t: f64, m: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(m + 1);
    v.push(1.0);
    if m >= 1 {
        v.push(t);
    }
    for j in 2..=m {
        v.push(t * v[j - 1] - (j as f64 - 1.0) * v[j - 2]);
    }
    v
}

/// Coefficients of `H_m(X, z)` on the degree-`m` monomials (graded-lex order).
///
/// Uses `exp(t z.X - t^2 ||X||^2 / 2) = prod_i exp(t z_i X_i - t^2 X_i^2 / 2)`, giving
/// coefficient `m!/alpha! prod_i He_{alpha_i}(z_i)` on `X^alpha`.
pub fn hermite_features(z: &[f64], m: u32, monos: &[Monomial]) -> Vec<f64> {
    let he: Vec<Vec<f64>> = z.iter().map(|&t| hermite_values(t, m as usize)).collect();
    let mfact = factorial_f64(m);
    monos
        .iter()
        .map(|mono| {
            let mut c = mfact;
            for (i, &a) in mono.exponents().iter().enumerate() {
                c *= he[i][a as usize] / factorial_f64(a);
            }
            c
        })
        .collect()
}

pub(crate) fn factorial_f64(n: u32) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// Sample average of `H_m(X, z_j)` as a polynomial in `X`.
pub fn empirical_hermite(samples: &[Vec<f64>], m: u32) -> Result<MixtureHermite<f64>> {
    let first = samples.first().ok_or(Error::EmptyInput("no samples"))?;
    let d = first.len();
    let monos = monomials_of_degree(d, m);
    let mut acc = vec![0.0; monos.len()];
    for z in samples {
        if z.len() != d {
            return Err(Error::DimensionMismatch { left: z.len(), right: d });
        }
        for (a, f) in acc.iter_mut().zip(hermite_features(z, m, &monos)) {
            *a += f;
        }
    }
    let n = samples.len() as f64;
    let poly = FloatPoly::from_terms(d, monos.into_iter().zip(acc.into_iter().map(|a| a / n)))?
        .with_cap(m.max(crate::poly::DEFAULT_DEGREE_CAP));
    Ok(MixtureHermite { m, polynomial: poly })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::rat;

    fn ints(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn univariate_examples() {
        assert_eq!(hermite_univariate(0).coeffs, ints(&[1]));
        assert_eq!(hermite_univariate(2).coeffs, ints(&[-1, 0, 1]));
        assert_eq!(hermite_univariate(5).coeffs, ints(&[0, 15, 0, -10, 0, 1]));
    }

    #[test]
    fn homogenized_examples() {
        let x = RatPoly::var(2, 0);
        let y = RatPoly::var(2, 1);
        assert_eq!(hermite_homogenized(1), x);
        assert_eq!(hermite_homogenized(2), &(&x * &x) - &(&y * &y));
        let three = RatPoly::constant(2, rat(3, 1));
        assert_eq!(hermite_homogenized(3), &(&(&x * &x) * &x) - &(&(&three * &x) * &(&y * &y)));
    }

    #[test]
    fn multivariate_m2_d2() {
        let h = hermite_multivariate(2, 2).unwrap();
        // (z1 X1 + z2 X2)^2 - (X1^2 + X2^2), variables (X1, X2, z1, z2)
        let v = |i| RatPoly::var(4, i);
        let dot = &(&v(0) * &v(2)) + &(&v(1) * &v(3));
        let expect = &(&dot * &dot) - &(&(&v(0) * &v(0)) + &(&v(1) * &v(1)));
        assert_eq!(h.with_cap(16), expect);
    }

    #[test]
    fn features_match_symbolic_form() {
        let z = [0.7, -1.3];
        let sym = hermite_multivariate(4, 2).unwrap().to_float();
        let monos = monomials_of_degree(2, 4);
        let feats = hermite_features(&z, 4, &monos);
        for (mono, f) in monos.iter().zip(feats) {
            // coefficient of X^mono: sum over z-monomials evaluated at z
            let mut c = 0.0;
            for (m, v) in sym.terms() {
                let e = m.exponents();
                if e[0] == mono.exponents()[0] && e[1] == mono.exponents()[1] {
                    c += v * z[0].powi(e[2] as i32) * z[1].powi(e[3] as i32);
                }
            }
            assert!((c - f).abs() < 1e-9, "{c} vs {f}");
        }
    }

    #[test]
    fn closed_form_examples() {
        let trivial = IsoMixture::<Rational> {
            weights: vec![rat(1, 1)],
            means: vec![vec![rat(0, 1), rat(0, 1)]],
            sigmas: vec![vec![vec![rat(0, 1); 2]; 2]],
        };
        let h = trivial.hermite_all(4).unwrap();
        assert_eq!(h[0], RatPoly::one(2));
        assert!(h[1..].iter().all(|p| p.is_zero()));
        let shifted = IsoMixture::<Rational> {
            weights: vec![rat(1, 1)],
            means: vec![vec![rat(2, 3), rat(-1, 5)]],
            sigmas: vec![vec![vec![rat(0, 1); 2]; 2]],
        };
        let h1 = mixture_hermite_closed_form(&shifted, 1).unwrap().polynomial;
        assert_eq!(h1, RatPoly::linear(&[rat(2, 3), rat(-1, 5)]));
    }

    #[test]
    fn empirical_examples() {
        let z = vec![vec![0.3, -0.4]];
        let e = empirical_hermite(&z, 3).unwrap().polynomial;
        let sym = hermite_multivariate(3, 2).unwrap().to_float();
        let at_z = sym
            .compose(&[
                FloatPoly::var(2, 0),
                FloatPoly::var(2, 1),
                FloatPoly::constant(2, 0.3),
                FloatPoly::constant(2, -0.4),
            ])
            .unwrap();
        assert!(e.checked_sub(&at_z).unwrap().norm_sq() < 1e-24);
        let zeros = vec![vec![0.0, 0.0]; 5];
        let e2 = empirical_hermite(&zeros, 2).unwrap().polynomial;
        let expect = FloatPoly::quadratic_form(&[vec![-1.0, 0.0], vec![0.0, -1.0]]);
        assert_eq!(e2.with_cap(16), expect);
        assert!(empirical_hermite(&[], 2).is_err());
    }
}
