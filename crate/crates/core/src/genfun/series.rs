use crate::error::{Error, Result};
use crate::hermite::IsoMixture;
use crate::poly::{Coeff, Polynomial};

/// Truncated power series in `y` with polynomial coefficients in `X`.
#[derive(Clone, Debug, PartialEq)]
pub struct FormalSeries<C: Coeff> {
    pub coeffs: Vec<Polynomial<C>>,
}

impl<C: Coeff> FormalSeries<C> {
    pub fn zero(d: usize, truncation: usize, cap: u32) -> Self {
        FormalSeries { coeffs: vec![Polynomial::zero(d).with_cap(cap); truncation + 1] }
    }

    pub fn truncation(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].dim()
    }

    /// Series of `w exp(a y + b y^2 / 2)`, using `m c_m = a c_{m-1} + b c_{m-2}`.
    pub fn exp_component(w: &C, a: &Polynomial<C>, b: &Polynomial<C>, truncation: usize, cap: u32) -> Result<Self> {
        let d = a.dim();
        let a = a.clone().with_cap(cap);
        let b = b.clone().with_cap(cap);
        let mut c: Vec<Polynomial<C>> = Vec::with_capacity(truncation + 1);
        c.push(Polynomial::constant(d, w.clone()).with_cap(cap));
        for m in 1..=truncation {
            let mut next = a.checked_mul(&c[m - 1])?;
            if m >= 2 {
                next = next.checked_add(&b.checked_mul(&c[m - 2])?)?;
            }
            c.push(next.scale(&(C::one() / C::from_i64(m as i64))));
        }
        Ok(FormalSeries { coeffs: c })
    }

    /// `F(y) = sum_i w_i exp(mu_i(X) y + Sigma_i(X) y^2 / 2)`.
    pub fn mixture(mix: &IsoMixture<C>, truncation: usize, cap: u32) -> Result<Self> {
        let mut s = Self::zero(mix.dim(), truncation, cap);
        for i in 0..mix.k() {
            let t = Self::exp_component(&mix.weights[i], &mix.mean_form(i), &mix.sigma_form(i), truncation, cap)?;
            s = s.checked_add(&t)?;
        }
        Ok(s)
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        if self.coeffs.len() != other.coeffs.len() {
            return Err(Error::InvalidArgument("series truncations differ".into()));
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.checked_add(b))
            .collect::<Result<_>>()?;
        Ok(FormalSeries { coeffs })
    }

    pub fn scale(&self, c: &C) -> Self {
        FormalSeries { coeffs: self.coeffs.iter().map(|p| p.scale(c)).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|p| p.is_zero())
    }
}

/// `d/dy - (c(X) + y d(X))`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffOperator<C: Coeff> {
    pub c: Polynomial<C>,
    pub d: Polynomial<C>,
}

impl<C: Coeff> DiffOperator<C> {
    pub fn new(c: Polynomial<C>, d: Polynomial<C>) -> Self {
        DiffOperator { c, d }
    }

    /// Operator matching component `i` of a mixture.
    pub fn for_component(mix: &IsoMixture<C>, i: usize) -> Self {
        DiffOperator { c: mix.mean_form(i), d: mix.sigma_form(i) }
    }
}

/// Applies an operator termwise: output coefficient `m` is
/// `(m+1) s_{m+1} - c s_m - d s_{m-1}`; the truncation drops by one.
pub fn apply_operator<C: Coeff>(op: &DiffOperator<C>, s: &FormalSeries<C>) -> Result<FormalSeries<C>> {
    let t = s.truncation();
    if t < 1 {
        return Err(Error::TruncationExhausted);
    }
    let mut out = Vec::with_capacity(t);
    for m in 0..t {
        let mut v = s.coeffs[m + 1].scale(&C::from_i64(m as i64 + 1));
        v = v.checked_sub(&op.c.checked_mul(&s.coeffs[m])?)?;
        if m >= 1 {
            v = v.checked_sub(&op.d.checked_mul(&s.coeffs[m - 1])?)?;
        }
        out.push(v);
    }
    Ok(FormalSeries { coeffs: out })
}

/// `P(y, X) exp(a(X) y + b(X) y^2 / 2)` with `prefactor[j]` the coefficient of `y^j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpComponentSeries<C: Coeff> {
    pub prefactor: Vec<Polynomial<C>>,
    pub a: Polynomial<C>,
    pub b: Polynomial<C>,
}

impl<C: Coeff> ExpComponentSeries<C> {
    pub fn new(weight: C, a: Polynomial<C>, b: Polynomial<C>) -> Self {
        let d = a.dim();
        let cap = a.cap().max(b.cap());
        let mut s = ExpComponentSeries { prefactor: vec![Polynomial::constant(d, weight).with_cap(cap)], a, b };
        s.trim();
        s
    }

    fn trim(&mut self) {
        while self.prefactor.last().map(|p| p.is_zero()).unwrap_or(false) {
            self.prefactor.pop();
        }
    }

    /// y-degree of the prefactor, `None` once it has been annihilated.
    pub fn degree(&self) -> Option<usize> {
        if self.prefactor.is_empty() {
            None
        } else {
            Some(self.prefactor.len() - 1)
        }
    }

    pub fn leading(&self) -> Option<&Polynomial<C>> {
        self.prefactor.last()
    }

    pub fn is_zero(&self) -> bool {
        self.prefactor.is_empty()
    }

    /// Value at `y = 0`: the prefactor's constant coefficient.
    pub fn at_zero(&self) -> Polynomial<C> {
        self.prefactor.first().cloned().unwrap_or_else(|| Polynomial::zero(self.a.dim()))
    }

    /// Expands `P e^{...}` to a truncated series.
    pub fn to_series(&self, truncation: usize, cap: u32) -> Result<FormalSeries<C>> {
        let e = FormalSeries::exp_component(&C::one(), &self.a, &self.b, truncation, cap)?;
        let mut out = FormalSeries::zero(self.a.dim(), truncation, cap);
        for (j, p) in self.prefactor.iter().enumerate() {
            for m in j..=truncation {
                out.coeffs[m] = out.coeffs[m].checked_add(&p.checked_mul(&e.coeffs[m - j])?)?;
            }
        }
        Ok(out)
    }
}

/// `(d/dy - c - y d)(P e^{a y + b y^2/2}) = (P' + (a-c) P + (b-d) y P) e^{a y + b y^2/2}`.
///
/// Leading behaviour: if `(c,d) = (a,b)` the degree drops by one and the leading
/// coefficient becomes `deg * L`; if `d != b` the degree rises by one with leading
/// coefficient `L (b - d)`; if `d = b`, `c != a` the degree is kept with `L (a - c)`.
pub fn apply_operator_exp<C: Coeff>(op: &DiffOperator<C>, comp: &ExpComponentSeries<C>) -> Result<ExpComponentSeries<C>> {
    let d = comp.a.dim();
    let cap = comp.a.cap().max(comp.b.cap()).max(op.c.cap()).max(op.d.cap());
    let amc = comp.a.checked_sub(&op.c)?.with_cap(cap);
    let bmd = comp.b.checked_sub(&op.d)?.with_cap(cap);
    let n = comp.prefactor.len();
    let mut q = vec![Polynomial::zero(d).with_cap(cap); n + 1];
    for (j, p) in comp.prefactor.iter().enumerate() {
        if j >= 1 {
            q[j - 1] = q[j - 1].checked_add(&p.scale(&C::from_i64(j as i64)))?;
        }
        if !amc.is_zero() {
            q[j] = q[j].checked_add(&amc.checked_mul(p)?)?;
        }
        if !bmd.is_zero() {
            q[j + 1] = q[j + 1].checked_add(&bmd.checked_mul(p)?)?;
        }
    }
    let mut out = ExpComponentSeries { prefactor: q, a: comp.a.clone(), b: comp.b.clone() };
    out.trim();
    Ok(out)
}

/// Predicted `(degree, leading coefficient)` after one operator, from the three rules.
pub fn predict_leading<C: Coeff>(
    op: &DiffOperator<C>,
    comp: &ExpComponentSeries<C>,
) -> Result<Option<(usize, Polynomial<C>)>> {
    let (deg, lead) = match (comp.degree(), comp.leading()) {
        (Some(g), Some(l)) => (g, l),
        _ => return Ok(None),
    };
    let same_b = op.d == comp.b;
    let same_a = op.c == comp.a;
    if same_a && same_b {
        if deg == 0 {
            Ok(None)
        } else {
            Ok(Some((deg - 1, lead.scale(&C::from_i64(deg as i64)))))
        }
    } else if !same_b {
        Ok(Some((deg + 1, lead.checked_mul(&comp.b.checked_sub(&op.d)?)?)))
    } else {
        Ok(Some((deg, lead.checked_mul(&comp.a.checked_sub(&op.c)?)?)))
    }
}
