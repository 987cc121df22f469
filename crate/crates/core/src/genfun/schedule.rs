use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which parameter set an operator is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpSide {
    True,
    Hyp,
}

impl OpSide {
    pub fn flip(self) -> Self {
        match self {
            OpSide::True => OpSide::Hyp,
            OpSide::Hyp => OpSide::True,
        }
    }
}

/// The three elimination patterns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EliminationCase {
    /// Only the covariances are used to separate components.
    Covariance,
    /// Hypothesis and truth share covariances; means differ.
    Mean,
    /// The first `j` covariances coincide with the `k`-th, on both sides.
    General { j: usize },
}

/// Which series the schedule is applied to: the hypothesis series (target is the
/// hypothesis' last component) or the true series (roles swapped).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ApplyTo {
    Hypothesis,
    Truth,
}

/// `D^{exponent}` for component `index` (0-based) of the given side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub side: OpSide,
    pub index: usize,
    pub exponent: u64,
}

/// Operator product written outermost first; application runs right to left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSchedule {
    pub k: usize,
    pub case: EliminationCase,
    pub apply_to: ApplyTo,
    pub steps: Vec<ScheduleStep>,
}

impl OperatorSchedule {
    /// Steps in the order they act on the series.
    pub fn application_order(&self) -> impl Iterator<Item = &ScheduleStep> {
        self.steps.iter().rev()
    }

    pub fn total_exponent(&self) -> u64 {
        self.steps.iter().map(|s| s.exponent).sum()
    }

    /// Exponent of the last-component operator that finishes the elimination.
    pub fn final_exponent(&self) -> u64 {
        self.steps[0].exponent
    }
}

/// Exponent of the final operator for `k` components.
pub fn final_exponent(k: usize, case: EliminationCase) -> Result<u64> {
    let k = k as u32;
    let full = (1u64 << (2 * k - 1)) - 1;
    Ok(match case {
        EliminationCase::Covariance => full,
        EliminationCase::Mean => full - (1u64 << (k - 1)),
        EliminationCase::General { j } => {
            if j as u32 >= k {
                return Err(Error::InvalidArgument(format!("general pattern needs j < k, got j={j}, k={k}")));
            }
            full - (0..j as u32).map(|i| 1u64 << (k + i)).sum::<u64>()
        }
    })
}

/// The operator product for `k` components, written outermost first.
///
/// Applied to the hypothesis series it reads
/// `D~_k^E D~_{k-1}^{2^{2k-2}} ... D~_1^{2^k} D_k^{2^{k-1}} ... D_1^1`; for the true
/// series the tilde and plain operators swap.
pub fn build_schedule(k: usize, case: EliminationCase, apply_to: ApplyTo) -> Result<OperatorSchedule> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > 6 {
        return Err(Error::InvalidArgument(format!("k={k} gives exponents beyond any practical run")));
    }
    let e = final_exponent(k, case)?;
    let (outer, inner) = match apply_to {
        ApplyTo::Hypothesis => (OpSide::Hyp, OpSide::True),
        ApplyTo::Truth => (OpSide::True, OpSide::Hyp),
    };
    let mut steps = vec![ScheduleStep { side: outer, index: k - 1, exponent: e }];
    for i in (0..k - 1).rev() {
        steps.push(ScheduleStep { side: outer, index: i, exponent: 1u64 << (k + i) });
    }
    for i in (0..k).rev() {
        steps.push(ScheduleStep { side: inner, index: i, exponent: 1u64 << i });
    }
    Ok(OperatorSchedule { k, case, apply_to, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exps(s: &OperatorSchedule) -> Vec<(OpSide, usize, u64)> {
        s.steps.iter().map(|t| (t.side, t.index, t.exponent)).collect()
    }

    #[test]
    fn k1_covariance() {
        let s = build_schedule(1, EliminationCase::Covariance, ApplyTo::Hypothesis).unwrap();
        assert_eq!(exps(&s), vec![(OpSide::Hyp, 0, 1), (OpSide::True, 0, 1)]);
    }

    #[test]
    fn k2_covariance() {
        let s = build_schedule(2, EliminationCase::Covariance, ApplyTo::Hypothesis).unwrap();
        assert_eq!(
            exps(&s),
            vec![(OpSide::Hyp, 1, 7), (OpSide::Hyp, 0, 4), (OpSide::True, 1, 2), (OpSide::True, 0, 1)]
        );
        assert_eq!(s.total_exponent(), 14);
    }

    #[test]
    fn final_exponents() {
        assert_eq!(final_exponent(3, EliminationCase::Covariance).unwrap(), 31);
        assert_eq!(final_exponent(3, EliminationCase::Mean).unwrap(), 27);
        assert_eq!(final_exponent(3, EliminationCase::General { j: 0 }).unwrap(), 31);
        assert_eq!(final_exponent(3, EliminationCase::General { j: 1 }).unwrap(), 23);
        assert_eq!(final_exponent(3, EliminationCase::General { j: 2 }).unwrap(), 7);
        assert!(final_exponent(2, EliminationCase::General { j: 2 }).is_err());
    }

    #[test]
    fn truth_side_swaps_roles() {
        let s = build_schedule(2, EliminationCase::Mean, ApplyTo::Truth).unwrap();
        assert_eq!(s.steps[0].side, OpSide::True);
        assert_eq!(s.steps[3].side, OpSide::Hyp);
        assert_eq!(s.final_exponent(), 5);
    }
}
