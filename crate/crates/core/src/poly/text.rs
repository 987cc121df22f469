use std::fmt;

use super::coeff::Coeff;
use super::monomial::Monomial;
use super::polynomial::Polynomial;
use crate::error::{Error, Result};

// Text form: `coeff * x1^a1 x2^a2 ... xd^ad` terms joined by ` + `, graded-lex ascending.
impl<C: Coeff> fmt::Display for Polynomial<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{} *", c.fmt_coeff())?;
            for (i, e) in m.exponents().iter().enumerate() {
                write!(f, " x{}^{}", i + 1, e)?;
            }
        }
        Ok(())
    }
}

impl<C: Coeff> Polynomial<C> {
    /// Parses the text form written by `Display`. Variables omitted from a term have
    /// exponent zero, and a term may be a bare coefficient.
    pub fn parse(s: &str, d: usize) -> Result<Self> {
        let s = s.trim();
        if s == "0" || s.is_empty() {
            return Ok(Self::zero(d));
        }
        let mut terms = Vec::new();
        for raw in s.split(" + ") {
            let (coeff, rest) = match raw.split_once('*') {
                Some((c, r)) => (c.trim(), r.trim()),
                None => (raw.trim(), ""),
            };
            let c = C::parse_coeff(coeff).ok_or_else(|| Error::Parse(format!("coefficient `{coeff}`")))?;
            let mut e = vec![0u32; d];
            for factor in rest.split_whitespace() {
                let (v, pow) = factor.split_once('^').unwrap_or((factor, "1"));
                let idx: usize = v
                    .strip_prefix('x')
                    .and_then(|i| i.parse().ok())
                    .filter(|i| *i >= 1 && *i <= d)
                    .ok_or_else(|| Error::Parse(format!("variable `{v}`")))?;
                let pow: u32 = pow.parse().map_err(|_| Error::Parse(format!("exponent `{pow}`")))?;
                e[idx - 1] += pow;
            }
            terms.push((Monomial::new(e), c));
        }
        let deg = terms.iter().map(|(m, _)| m.degree()).max().unwrap_or(0);
        let mut p = Self::zero(d).with_cap(deg.max(super::DEFAULT_DEGREE_CAP));
        for (m, c) in terms {
            p.add_term(m, c);
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use crate::poly::{rat, RatPoly};

    #[test]
    fn roundtrip() {
        let x = RatPoly::var(2, 0);
        let y = RatPoly::var(2, 1);
        let p = &(&(&x * &x).scale(&rat(-3, 2)) + &y) + &RatPoly::constant(2, rat(7, 1));
        let s = p.to_string();
        assert_eq!(s, "7 * x1^0 x2^0 + 1 * x1^0 x2^1 + -3/2 * x1^2 x2^0");
        assert_eq!(RatPoly::parse(&s, 2).unwrap(), p);
        assert_eq!(RatPoly::parse("0", 3).unwrap(), RatPoly::zero(3));
        assert!(RatPoly::parse("1 * x4^1", 2).is_err());
    }
}
