use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::pe::PseudoExpectation;
use super::system::ConstraintSystem;
use crate::error::Result;
use crate::poly::{monomials_up_to, FloatPoly};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CheckConfig {
    pub pairs: usize,
    pub seed: u64,
    pub tol: f64,
    /// Terms per random test polynomial; keeps products cheap on large bases.
    pub max_terms: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { pairs: 100, seed: 7, tol: 1e-6, max_terms: 12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub normalization: f64,
    pub psd_violation: f64,
    pub constraint_residual: f64,
    pub cauchy_schwarz_failures: usize,
    pub cauchy_schwarz_worst: f64,
    pub passed: bool,
}

/// Validates a pseudoexpectation from first principles: `E~[1] = 1`, PSD moment matrix,
/// constraint residuals, and Cauchy-Schwarz on random pairs of degree `t/2` polynomials.
/// Uses only polynomial products and `eval`, never the solver's data.
pub fn check_pseudoexpectation(pe: &PseudoExpectation, sys: &ConstraintSystem, cfg: &CheckConfig) -> Result<CheckReport> {
    let res = pe.residuals(sys)?;
    let n = pe.nvars();
    let half = sys.degree.min(pe.degree()) / 2;
    let monos = monomials_up_to(n, half);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let random_poly = |rng: &mut ChaCha8Rng| {
        let mut p = FloatPoly::zero(n);
        let terms = cfg.max_terms.min(monos.len());
        for _ in 0..terms {
            let m = &monos[rng.gen_range(0..monos.len())];
            p.add_term(m.clone(), rng.sample(StandardNormal));
        }
        p
    };
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.pairs {
        let f = random_poly(&mut rng);
        let g = random_poly(&mut rng);
        let fg = pe.eval(&f.checked_mul(&g)?)?;
        let ff = pe.eval(&f.checked_mul(&f)?)?;
        let gg = pe.eval(&g.checked_mul(&g)?)?;
        let scale = f.norm_sq().sqrt() * g.norm_sq().sqrt();
        let excess = (fg.abs() - ff.max(0.0).sqrt() * gg.max(0.0).sqrt()) / scale.max(1e-300);
        worst = worst.max(excess);
        if excess > cfg.tol {
            failures += 1;
        }
    }
    let constraint_residual =
        res.equalities.iter().chain(&res.inequalities).chain(&res.matrix_inequalities).fold(0.0f64, |a, &b| a.max(b));
    let passed = res.normalization <= cfg.tol && res.psd <= cfg.tol && constraint_residual <= cfg.tol && failures == 0;
    Ok(CheckReport {
        normalization: res.normalization,
        psd_violation: res.psd,
        constraint_residual,
        cauchy_schwarz_failures: failures,
        cauchy_schwarz_worst: worst,
        passed,
    })
}
