use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::system::ConstraintSystem;
use crate::error::{Error, Result};
use crate::poly::{basis_size, monomials_up_to, FloatPoly, Monomial, MonomialBasis};

/// Largest monomial basis a pseudoexpectation table may hold.
pub const DEFAULT_MONOMIAL_CAP: usize = 3000;

#[derive(Clone, Debug)]
enum Repr {
    Table { basis: MonomialBasis, values: Vec<f64> },
    /// Point evaluation, kept lazy so that large systems can still be checked.
    Point(Vec<f64>),
}

/// A linear functional on polynomials of degree at most `degree`.
#[derive(Clone, Debug)]
pub struct PseudoExpectation {
    nvars: usize,
    degree: u32,
    repr: Repr,
}

/// Per-constraint violations of a pseudoexpectation.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Residuals {
    pub normalization: f64,
    pub psd: f64,
    pub equalities: Vec<f64>,
    pub inequalities: Vec<f64>,
    pub matrix_inequalities: Vec<f64>,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.equalities
            .iter()
            .chain(&self.inequalities)
            .chain(&self.matrix_inequalities)
            .fold(self.normalization.max(self.psd), |a, &b| a.max(b))
    }
}

fn neg_min_eig(m: DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    (-SymmetricEigen::new(m).eigenvalues.min()).max(0.0)
}

/// Point evaluation at `point`, truncated at `degree`.
pub fn dirac(point: &[f64], degree: u32) -> PseudoExpectation {
    PseudoExpectation { nvars: point.len(), degree, repr: Repr::Point(point.to_vec()) }
}

impl PseudoExpectation {
    /// Builds a table-backed functional; `values` follow the order of `basis`.
    pub fn from_table(basis: MonomialBasis, values: Vec<f64>) -> Result<Self> {
        if basis.len() != values.len() {
            return Err(Error::DimensionMismatch { left: basis.len(), right: values.len() });
        }
        Ok(PseudoExpectation { nvars: basis.dim(), degree: basis.bound(), repr: Repr::Table { basis, values } })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn is_point(&self) -> bool {
        matches!(self.repr, Repr::Point(_))
    }

    pub fn value(&self, m: &Monomial) -> Result<f64> {
        if m.dim() != self.nvars {
            return Err(Error::DimensionMismatch { left: m.dim(), right: self.nvars });
        }
        if m.degree() > self.degree {
            return Err(Error::DegreeTooLarge { degree: m.degree(), bound: self.degree });
        }
        match &self.repr {
            Repr::Table { basis, values } => Ok(values[basis.index_of(m)?]),
            Repr::Point(x) => Ok(m.exponents().iter().zip(x).map(|(&e, v)| v.powi(e as i32)).product()),
        }
    }

    pub fn eval(&self, p: &FloatPoly) -> Result<f64> {
        let mut s = 0.0;
        for (m, c) in p.terms() {
            s += c * self.value(m)?;
        }
        Ok(s)
    }

    /// Moment values in graded order over all monomials of degree at most `degree`.
    pub fn moments(&self) -> Result<Vec<(Monomial, f64)>> {
        match &self.repr {
            Repr::Table { basis, values } => Ok(basis.monomials().iter().cloned().zip(values.iter().copied()).collect()),
            Repr::Point(_) => {
                let size = basis_size(self.nvars, self.degree);
                if size > DEFAULT_MONOMIAL_CAP * 100 {
                    return Err(Error::SizeCap { size, cap: DEFAULT_MONOMIAL_CAP * 100 });
                }
                monomials_up_to(self.nvars, self.degree).into_iter().map(|m| Ok((m.clone(), self.value(&m)?))).collect()
            }
        }
    }

    /// `E~[p m_a m_b]` over monomials of degree at most `half`.
    pub fn localizing_matrix(&self, p: &FloatPoly, half: u32) -> Result<DMatrix<f64>> {
        let monos = monomials_up_to(self.nvars, half);
        let s = monos.len();
        let mut out = DMatrix::zeros(s, s);
        for a in 0..s {
            for b in a..s {
                let mut v = 0.0;
                for (g, c) in p.terms() {
                    v += c * self.value(&monos[a].mul(&monos[b]).mul(g))?;
                }
                out[(a, b)] = v;
                out[(b, a)] = v;
            }
        }
        Ok(out)
    }

    pub fn moment_matrix(&self) -> Result<DMatrix<f64>> {
        self.localizing_matrix(&FloatPoly::one(self.nvars), self.degree / 2)
    }

    /// Violations of every constraint of `sys`, including the moment-matrix PSD condition.
    pub fn residuals(&self, sys: &ConstraintSystem) -> Result<Residuals> {
        if sys.nvars() != self.nvars {
            return Err(Error::DimensionMismatch { left: sys.nvars(), right: self.nvars });
        }
        let t = sys.degree.min(self.degree);
        let mut r = Residuals { normalization: (self.value(&Monomial::one(self.nvars))? - 1.0).abs(), ..Default::default() };
        match &self.repr {
            Repr::Point(x) => {
                // every moment product factors through the point, so each family reduces to
                // the scalar violation times the largest monomial it gets multiplied by
                let inf = x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
                for q in &sys.equalities {
                    let e = t.saturating_sub(q.degree().unwrap_or(0));
                    r.equalities.push(q.eval(x)?.abs() * inf.powi(e as i32));
                }
                for p in &sys.inequalities {
                    let half = t.saturating_sub(p.degree().unwrap_or(0)) / 2;
                    r.inequalities.push((-p.eval(x)?).max(0.0) * square_sum(x, half));
                }
            }
            Repr::Table { .. } => {
                r.psd = neg_min_eig(self.moment_matrix()?);
                for q in &sys.equalities {
                    let e = t.saturating_sub(q.degree().unwrap_or(0));
                    let mut worst: f64 = 0.0;
                    for m in monomials_up_to(self.nvars, e) {
                        worst = worst.max(self.eval(&q.mul_monomial(&m, &1.0)?)?.abs());
                    }
                    r.equalities.push(worst);
                }
                for p in &sys.inequalities {
                    let half = t.saturating_sub(p.degree().unwrap_or(0)) / 2;
                    r.inequalities.push(neg_min_eig(self.localizing_matrix(p, half)?));
                }
            }
        }
        for m in &sys.matrix_inequalities {
            let k = m.len();
            let mut vals = DMatrix::zeros(k, k);
            for i in 0..k {
                for j in 0..k {
                    vals[(i, j)] = self.eval(&m[i][j])?;
                }
            }
            r.matrix_inequalities.push(neg_min_eig(vals));
        }
        Ok(r)
    }
}

/// `sum over monomials m of degree <= h of m(x)^2`.
fn square_sum(x: &[f64], h: u32) -> f64 {
    let h = h as usize;
    let mut c = vec![0.0; h + 1];
    c[0] = 1.0;
    for v in x {
        let z = v * v;
        for j in 1..=h {
            c[j] += z * c[j - 1];
        }
    }
    c.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_at_origin() {
        let pe = dirac(&[0.0, 0.0], 4);
        assert_eq!(pe.value(&Monomial::one(2)).unwrap(), 1.0);
        for (m, v) in pe.moments().unwrap() {
            assert_eq!(v, if m.degree() == 0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn dirac_moment_matrix_rank_one() {
        let pe = dirac(&[0.6, -0.8], 4);
        let mm = pe.moment_matrix().unwrap();
        let ev = SymmetricEigen::new(mm).eigenvalues;
        let mut v: Vec<f64> = ev.iter().copied().collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(v[0] > 1.0);
        assert!(v[1..].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn sphere_point_zero_residual() {
        let mut sys = ConstraintSystem::with_vars(2, 4).unwrap();
        let (x, y) = (FloatPoly::var(2, 0), FloatPoly::var(2, 1));
        let p = &(&(&x * &x) + &(&y * &y)) - &FloatPoly::one(2);
        sys.add_equality(p).unwrap();
        let r = dirac(&[0.6, 0.8], 4).residuals(&sys).unwrap();
        assert!(r.max() < 1e-15, "{r:?}");
    }

    #[test]
    fn square_sum_matches_enumeration() {
        let x: [f64; 3] = [0.5, -1.5, 2.0];
        let direct: f64 = monomials_up_to(3, 3)
            .iter()
            .map(|m| m.exponents().iter().zip(&x).map(|(&e, v)| v.powi(e as i32)).product::<f64>().powi(2))
            .sum();
        assert!((square_sum(&x, 3) - direct).abs() < 1e-9);
    }
}
