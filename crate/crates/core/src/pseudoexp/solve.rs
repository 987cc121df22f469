use std::collections::HashMap;

use serde::Serialize;

use super::pe::{PseudoExpectation, DEFAULT_MONOMIAL_CAP};
use super::system::ConstraintSystem;
use crate::error::{Error, Result};
use crate::poly::{basis_size, monomials_up_to, FloatPoly, Monomial, MonomialBasis};
use crate::sdp::{solve_sdp, SdpProblem, SdpSettings, SdpStatus, SparseSym};

#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    /// Feasibility; the solver returns the point minimizing the moment-matrix trace.
    Feasibility,
    Maximize(FloatPoly),
    Minimize(FloatPoly),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolveSettings {
    pub sdp: SdpSettings,
    pub monomial_cap: usize,
    /// Largest Schur complement (number of linear constraints) attempted.
    pub max_constraints: usize,
    pub feasibility_tol: f64,
    pub gap_tol: f64,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings { sdp: SdpSettings::default(), monomial_cap: DEFAULT_MONOMIAL_CAP, max_constraints: 4000, feasibility_tol: 1e-6, gap_tol: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub status: SdpStatus,
    pub iterations: usize,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub gap: f64,
    pub n_constraints: usize,
    pub block_sizes: Vec<usize>,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub enum SolveOutcome {
    Feasible { pe: PseudoExpectation, report: SolveReport },
    Infeasible { report: SolveReport },
}

impl SolveOutcome {
    pub fn pseudoexpectation(&self) -> Option<&PseudoExpectation> {
        match self {
            SolveOutcome::Feasible { pe, .. } => Some(pe),
            SolveOutcome::Infeasible { .. } => None,
        }
    }

    pub fn report(&self) -> &SolveReport {
        match self {
            SolveOutcome::Feasible { report, .. } | SolveOutcome::Infeasible { report } => report,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, SolveOutcome::Feasible { .. })
    }
}

/// The moment relaxation laid out as a primal SDP whose first block is the moment matrix.
struct Layout {
    full: MonomialBasis,
    /// For each monomial of the full basis, the moment-matrix entry that stands for it.
    rep: Vec<(usize, usize)>,
    problem: SdpProblem,
}

fn moment_expr(rep: &[(usize, usize)], full: &MonomialBasis, p: &FloatPoly, shift: &Monomial, scale: f64, out: &mut SparseSym) -> Result<()> {
    for (g, c) in p.terms() {
        let (i, j) = rep[full.index_of(&g.mul(shift))?];
        out.add(0, i, j, scale * c);
    }
    Ok(())
}

fn layout(sys: &ConstraintSystem, obj: &Objective, cap: usize) -> Result<Layout> {
    let n = sys.nvars();
    let t = sys.degree;
    let size = basis_size(n, t);
    if size > cap {
        return Err(Error::SizeCap { size, cap });
    }
    let full = MonomialBasis::new(n, t);
    let half = monomials_up_to(n, t / 2);
    let s = half.len();
    let mut rep = vec![(usize::MAX, usize::MAX); full.len()];
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut hankel = Vec::new();
    for i in 0..s {
        for j in i..s {
            let idx = full.index_of(&half[i].mul(&half[j]))?;
            if rep[idx].0 == usize::MAX {
                rep[idx] = (i, j);
            } else {
                hankel.push((i, j, rep[idx]));
            }
        }
    }
    let mut blocks = vec![s];
    let mut one = SparseSym::new();
    one.add(0, 0, 0, 1.0);
    a.push(one);
    b.push(1.0);
    for (i, j, (ri, rj)) in hankel {
        let mut row = SparseSym::new();
        row.add(0, i, j, 1.0);
        row.add(0, ri, rj, -1.0);
        a.push(row);
        b.push(0.0);
    }
    let unit = Monomial::one(n);
    for q in &sys.equalities {
        let e = t - q.degree().unwrap_or(0);
        for m in monomials_up_to(n, e) {
            let mut row = SparseSym::new();
            moment_expr(&rep, &full, q, &m, 1.0, &mut row)?;
            row.compact();
            if !row.entries.is_empty() {
                a.push(row);
                b.push(0.0);
            }
        }
    }
    for p in &sys.inequalities {
        let h = (t - p.degree().unwrap_or(0)) / 2;
        let loc = monomials_up_to(n, h);
        let blk = blocks.len();
        blocks.push(loc.len());
        for i in 0..loc.len() {
            for j in i..loc.len() {
                let mut row = SparseSym::new();
                row.add(blk, i, j, 1.0);
                moment_expr(&rep, &full, p, &loc[i].mul(&loc[j]), -1.0, &mut row)?;
                row.compact();
                a.push(row);
                b.push(0.0);
            }
        }
    }
    for pm in &sys.matrix_inequalities {
        let blk = blocks.len();
        blocks.push(pm.len());
        for i in 0..pm.len() {
            for j in i..pm.len() {
                let mut row = SparseSym::new();
                row.add(blk, i, j, 1.0);
                moment_expr(&rep, &full, &pm[i][j], &unit, -1.0, &mut row)?;
                row.compact();
                a.push(row);
                b.push(0.0);
            }
        }
    }
    let mut c = SparseSym::new();
    match obj {
        Objective::Feasibility => {
            for i in 0..s {
                c.add(0, i, i, 1.0);
            }
        }
        Objective::Maximize(f) => moment_expr(&rep, &full, f, &unit, -1.0, &mut c)?,
        Objective::Minimize(f) => moment_expr(&rep, &full, f, &unit, 1.0, &mut c)?,
    }
    c.compact();
    Ok(Layout { full, rep, problem: SdpProblem { blocks, c, a, b } })
}

/// Solves for a degree-`t` pseudoexpectation satisfying `sys` and optimizing `obj`.
pub fn solve(sys: &ConstraintSystem, obj: &Objective, settings: &SolveSettings) -> Result<SolveOutcome> {
    if let Objective::Maximize(f) | Objective::Minimize(f) = obj {
        if f.dim() != sys.nvars() {
            return Err(Error::DimensionMismatch { left: f.dim(), right: sys.nvars() });
        }
    }
    let lay = layout(sys, obj, settings.monomial_cap)?;
    if lay.problem.a.len() > settings.max_constraints {
        return Err(Error::SizeCap { size: lay.problem.a.len(), cap: settings.max_constraints });
    }
    let sol = solve_sdp(&lay.problem, &settings.sdp)?;
    let mut report = SolveReport {
        status: sol.status,
        iterations: sol.iterations,
        primal_obj: sol.primal_obj,
        dual_obj: sol.dual_obj,
        gap: sol.gap,
        n_constraints: lay.problem.a.len(),
        block_sizes: lay.problem.blocks.clone(),
        residual: f64::NAN,
    };
    match sol.status {
        SdpStatus::PrimalInfeasible => return Ok(SolveOutcome::Infeasible { report }),
        SdpStatus::DualInfeasible => return Err(Error::SolverFailure("objective unbounded on the relaxation".into())),
        _ => {}
    }
    let values: Vec<f64> = lay.rep.iter().map(|&(i, j)| sol.x[0][(i, j)]).collect();
    let pe = PseudoExpectation::from_table(lay.full, values)?;
    let res = pe.residuals(sys)?;
    report.residual = res.max();
    let ok = report.residual <= settings.feasibility_tol && (sol.gap <= settings.gap_tol || matches!(obj, Objective::Feasibility));
    if sol.status == SdpStatus::Optimal || ok {
        if report.residual > settings.feasibility_tol {
            log::warn!("pseudoexpectation residual {:.3e} above tolerance", report.residual);
        }
        Ok(SolveOutcome::Feasible { pe, report })
    } else {
        Err(Error::SolverFailure(format!(
            "no convergence after {} iterations (residual {:.2e}, gap {:.2e})",
            sol.iterations, report.residual, sol.gap
        )))
    }
}

/// Indexes the moment of every monomial that `solve` would represent; used by callers that
/// need to read Gram blocks without going through polynomials.
pub fn moment_index(pe: &PseudoExpectation) -> Result<HashMap<Monomial, f64>> {
    Ok(pe.moments()?.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> FloatPoly {
        FloatPoly::var(1, 0)
    }

    fn c(v: f64) -> FloatPoly {
        FloatPoly::constant(1, v)
    }

    #[test]
    fn sphere_maximize() {
        let mut sys = ConstraintSystem::with_vars(1, 2).unwrap();
        sys.add_equality(&(&x() * &x()) - &c(1.0)).unwrap();
        let out = solve(&sys, &Objective::Maximize(x()), &SolveSettings::default()).unwrap();
        let pe = out.pseudoexpectation().unwrap();
        assert!((pe.eval(&x()).unwrap() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn negative_square_infeasible() {
        let mut sys = ConstraintSystem::with_vars(1, 2).unwrap();
        sys.add_equality(&(&x() * &x()) + &c(1.0)).unwrap();
        assert!(!solve(&sys, &Objective::Feasibility, &SolveSettings::default()).unwrap().is_feasible());
    }

    #[test]
    fn boolean_mean_in_unit_interval() {
        let mut sys = ConstraintSystem::with_vars(1, 2).unwrap();
        sys.add_equality(&(&x() * &x()) - &x()).unwrap();
        for obj in [Objective::Maximize(x()), Objective::Minimize(x())] {
            let out = solve(&sys, &obj, &SolveSettings::default()).unwrap();
            let v = out.pseudoexpectation().unwrap().eval(&x()).unwrap();
            assert!((-1e-6..=1.0 + 1e-6).contains(&v), "{v}");
        }
    }

    #[test]
    fn size_cap() {
        let sys = ConstraintSystem::with_vars(30, 4).unwrap();
        assert!(matches!(solve(&sys, &Objective::Feasibility, &SolveSettings::default()), Err(Error::SizeCap { .. })));
    }
}
