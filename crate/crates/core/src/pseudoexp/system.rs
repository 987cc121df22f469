use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::FloatPoly;

/// A symmetric matrix of polynomials `P`; the constraint it encodes is `E~[P] >= 0` in the
/// PSD order (a linear matrix inequality on the moments).
pub type PolyMatrix = Vec<Vec<FloatPoly>>;

/// Polynomial constraints over named indeterminates, truncated at even degree `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSystem {
    pub variables: Vec<String>,
    pub equalities: Vec<FloatPoly>,
    pub inequalities: Vec<FloatPoly>,
    pub matrix_inequalities: Vec<PolyMatrix>,
    pub degree: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SystemJson {
    variables: Vec<String>,
    degree: u32,
    equalities: Vec<String>,
    inequalities: Vec<String>,
    #[serde(default)]
    matrix_inequalities: Vec<Vec<Vec<String>>>,
}

impl ConstraintSystem {
    pub fn new(variables: Vec<String>, degree: u32) -> Result<Self> {
        if degree % 2 != 0 {
            return Err(Error::InvalidArgument(format!("degree {degree} must be even")));
        }
        Ok(ConstraintSystem { variables, equalities: vec![], inequalities: vec![], matrix_inequalities: vec![], degree })
    }

    /// Variables named `x1..xn`.
    pub fn with_vars(n: usize, degree: u32) -> Result<Self> {
        Self::new((1..=n).map(|i| format!("x{i}")).collect(), degree)
    }

    pub fn nvars(&self) -> usize {
        self.variables.len()
    }

    fn check_poly(&self, p: &FloatPoly) -> Result<()> {
        if p.dim() != self.nvars() {
            return Err(Error::DimensionMismatch { left: p.dim(), right: self.nvars() });
        }
        let deg = p.degree().unwrap_or(0);
        if deg > self.degree {
            return Err(Error::DegreeTooLarge { degree: deg, bound: self.degree });
        }
        Ok(())
    }

    pub fn add_equality(&mut self, p: FloatPoly) -> Result<()> {
        self.check_poly(&p)?;
        self.equalities.push(p);
        Ok(())
    }

    pub fn add_inequality(&mut self, p: FloatPoly) -> Result<()> {
        self.check_poly(&p)?;
        self.inequalities.push(p);
        Ok(())
    }

    pub fn add_matrix_inequality(&mut self, m: PolyMatrix) -> Result<()> {
        let r = m.len();
        for (i, row) in m.iter().enumerate() {
            if row.len() != r {
                return Err(Error::DimensionMismatch { left: row.len(), right: r });
            }
            for (j, p) in row.iter().enumerate() {
                self.check_poly(p)?;
                if *p != m[j][i] {
                    return Err(Error::InvalidArgument("matrix inequality must be symmetric".into()));
                }
            }
        }
        self.matrix_inequalities.push(m);
        Ok(())
    }

    /// Worst violation of each constraint family at a point: `|q(x)|`, `max(0, -p(x))`, and
    /// `max(0, -lambda_min(P(x)))`.
    pub fn point_violation(&self, x: &[f64]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for q in &self.equalities {
            worst = worst.max(q.eval(x)?.abs());
        }
        for p in &self.inequalities {
            worst = worst.max(-p.eval(x)?);
        }
        for m in &self.matrix_inequalities {
            let r = m.len();
            let mut vals = nalgebra::DMatrix::zeros(r, r);
            for i in 0..r {
                for j in 0..r {
                    vals[(i, j)] = m[i][j].eval(x)?;
                }
            }
            worst = worst.max(-nalgebra::SymmetricEigen::new(vals).eigenvalues.min());
        }
        Ok(worst.max(0.0))
    }

    /// JSON debug form with constraints in the polynomial text format.
    pub fn to_json(&self) -> Result<String> {
        let s = SystemJson {
            variables: self.variables.clone(),
            degree: self.degree,
            equalities: self.equalities.iter().map(|p| p.to_string()).collect(),
            inequalities: self.inequalities.iter().map(|p| p.to_string()).collect(),
            matrix_inequalities: self
                .matrix_inequalities
                .iter()
                .map(|m| m.iter().map(|row| row.iter().map(|p| p.to_string()).collect()).collect())
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&s)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: SystemJson = serde_json::from_str(text)?;
        let n = s.variables.len();
        let mut sys = ConstraintSystem::new(s.variables, s.degree)?;
        for e in &s.equalities {
            sys.add_equality(FloatPoly::parse(e, n)?)?;
        }
        for e in &s.inequalities {
            sys.add_inequality(FloatPoly::parse(e, n)?)?;
        }
        for m in &s.matrix_inequalities {
            let pm = m.iter().map(|row| row.iter().map(|e| FloatPoly::parse(e, n)).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
            sys.add_matrix_inequality(pm)?;
        }
        Ok(sys)
    }
}
