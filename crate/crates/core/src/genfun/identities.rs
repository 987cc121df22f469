use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::Rng;
use serde::Serialize;

use super::schedule::{build_schedule, final_exponent, ApplyTo, EliminationCase, OpSide, OperatorSchedule};
use super::series::{apply_operator, apply_operator_exp, predict_leading, DiffOperator, ExpComponentSeries, FormalSeries};
use crate::error::{Error, Result};
use crate::hermite::IsoMixture;
use crate::poly::{rat, RatPoly, Rational};

type RatMix = IsoMixture<Rational>;

/// Outcome of one elimination run.
#[derive(Clone, Debug)]
pub struct EliminationReport {
    pub schedule: OperatorSchedule,
    /// `y^0` coefficient after running the schedule on the series.
    pub lhs: RatPoly,
    /// Closed-form product with the operationally derived constant.
    pub rhs: RatPoly,
    pub equal: bool,
    /// Product of the degree factors collected while the final operator strips the
    /// target component down to degree zero.
    pub constant: BigInt,
    /// Leading-coefficient rules agreed with the actual prefactor at every step.
    pub bookkeeping_ok: bool,
    /// Every non-target component was annihilated.
    pub others_annihilated: bool,
    /// Summing the per-component prefactors at `y = 0` reproduces `lhs`.
    pub components_agree: bool,
}

impl EliminationReport {
    pub fn passed(&self) -> bool {
        self.equal && self.bookkeeping_ok && self.others_annihilated && self.components_agree
    }
}

fn check_shapes(truth: &RatMix, hyp: &RatMix) -> Result<()> {
    if truth.k() == 0 {
        return Err(Error::EmptyInput("mixture has no components"));
    }
    if truth.k() != hyp.k() {
        return Err(Error::InvalidArgument(format!("component counts differ: {} vs {}", truth.k(), hyp.k())));
    }
    if truth.dim() != hyp.dim() {
        return Err(Error::DimensionMismatch { left: truth.dim(), right: hyp.dim() });
    }
    Ok(())
}

fn check_case(truth: &RatMix, hyp: &RatMix, case: EliminationCase) -> Result<()> {
    let k = truth.k();
    match case {
        EliminationCase::Covariance => Ok(()),
        EliminationCase::Mean => {
            if truth.sigmas != hyp.sigmas {
                return Err(Error::InvalidArgument("mean case needs identical covariances".into()));
            }
            Ok(())
        }
        EliminationCase::General { j } => {
            if j >= k {
                return Err(Error::InvalidArgument(format!("general pattern needs j < k, got j={j}")));
            }
            for m in [truth, hyp] {
                if (0..j).any(|i| m.sigmas[i] != m.sigmas[k - 1]) {
                    return Err(Error::InvalidArgument(
                        "general case needs the first j covariances equal to the last".into(),
                    ));
                }
            }
            Ok(())
        }
    }
}

fn capped(p: RatPoly, cap: u32) -> RatPoly {
    p.with_cap(cap)
}

fn operators(mix: &RatMix, cap: u32) -> Vec<DiffOperator<Rational>> {
    (0..mix.k())
        .map(|i| DiffOperator::new(capped(mix.mean_form(i), cap), capped(mix.sigma_form(i), cap)))
        .collect()
}

fn expanded_ops<'a>(
    sched: &OperatorSchedule,
    true_ops: &'a [DiffOperator<Rational>],
    hyp_ops: &'a [DiffOperator<Rational>],
) -> Vec<&'a DiffOperator<Rational>> {
    let mut out = Vec::new();
    for st in sched.application_order() {
        let op = match st.side {
            OpSide::True => &true_ops[st.index],
            OpSide::Hyp => &hyp_ops[st.index],
        };
        for _ in 0..st.exponent {
            out.push(op);
        }
    }
    out
}

fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// The closed-form right-hand side with constant `c`.
fn closed_form_rhs(
    own: &RatMix,
    other: &RatMix,
    case: EliminationCase,
    c: &BigInt,
    cap: u32,
) -> Result<RatPoly> {
    let k = own.k();
    let d = own.dim();
    let s = |m: &RatMix, i: usize| capped(m.sigma_form(i), cap);
    let mu = |m: &RatMix, i: usize| capped(m.mean_form(i), cap);
    let last = k - 1;
    let mut out = RatPoly::constant(d, Rational::from_integer(c.clone()) * own.weights[last].clone()).with_cap(cap);
    let pow2 = |e: usize| 1u32 << e;
    match case {
        EliminationCase::Covariance => {
            for i in 0..k {
                out = out.checked_mul(&s(own, last).checked_sub(&s(other, i))?.checked_pow(pow2(i))?)?;
            }
            for i in 0..last {
                out = out.checked_mul(&s(own, last).checked_sub(&s(own, i))?.checked_pow(pow2(k + i))?)?;
            }
        }
        EliminationCase::Mean => {
            out = out.checked_mul(&mu(own, last).checked_sub(&mu(other, last))?.checked_pow(pow2(last))?)?;
            for i in 0..last {
                let diff = s(own, last).checked_sub(&s(own, i))?;
                out = out.checked_mul(&diff.checked_pow(pow2(i))?)?;
                out = out.checked_mul(&diff.checked_pow(pow2(k + i))?)?;
            }
        }
        EliminationCase::General { j } => {
            for i in 0..k {
                out = out.checked_mul(&s(own, last).checked_sub(&s(other, i))?.checked_pow(pow2(i))?)?;
            }
            for i in 0..j {
                out = out.checked_mul(&mu(own, last).checked_sub(&mu(own, i))?.checked_pow(pow2(k + i))?)?;
            }
            for i in j..last {
                out = out.checked_mul(&s(own, last).checked_sub(&s(own, i))?.checked_pow(pow2(k + i))?)?;
            }
        }
    }
    Ok(out)
}

/// Runs an elimination schedule exactly and compares with the closed form.
///
/// The series route computes the left side literally. In parallel each component is
/// tracked as `P e^{a y + b y^2/2}` and the leading-coefficient rules are checked at
/// every operator, which also yields the constant in front of the closed form.
pub fn verify_elimination(
    truth: &RatMix,
    hyp: &RatMix,
    case: EliminationCase,
    apply_to: ApplyTo,
) -> Result<EliminationReport> {
    check_shapes(truth, hyp)?;
    check_case(truth, hyp, case)?;
    let k = truth.k();
    let d = truth.dim();
    let sched = build_schedule(k, case, apply_to)?;
    let n = sched.total_exponent() as usize;
    let trunc = n + 2;
    let cap = (2 * trunc + 8) as u32;
    let true_ops = operators(truth, cap);
    let hyp_ops = operators(hyp, cap);
    let ops = expanded_ops(&sched, &true_ops, &hyp_ops);
    let (own, other) = match apply_to {
        ApplyTo::Hypothesis => (hyp, truth),
        ApplyTo::Truth => (truth, hyp),
    };

    let mut series = FormalSeries::mixture(own, trunc, cap)?;
    for op in &ops {
        series = apply_operator(op, &series)?;
    }
    let lhs = series.coeffs[0].clone();

    let mut bookkeeping_ok = true;
    let mut others_annihilated = true;
    let mut constant = BigInt::one();
    let mut sum_at_zero = RatPoly::zero(d).with_cap(cap);
    let final_start = n - sched.final_exponent() as usize;
    for i in 0..k {
        let mut comp = ExpComponentSeries::new(
            own.weights[i].clone(),
            capped(own.mean_form(i), cap),
            capped(own.sigma_form(i), cap),
        );
        for (step, op) in ops.iter().enumerate() {
            let predicted = predict_leading(op, &comp)?;
            let deg_before = comp.degree();
            let same = op.c == comp.a && op.d == comp.b;
            comp = apply_operator_exp(op, &comp)?;
            let actual = comp.degree().zip(comp.leading().cloned());
            if predicted != actual {
                bookkeeping_ok = false;
            }
            if i == k - 1 && step >= final_start && same {
                if let Some(g) = deg_before {
                    constant *= BigInt::from(g as u64);
                }
            }
        }
        if i != k - 1 && !comp.is_zero() {
            others_annihilated = false;
        }
        sum_at_zero = sum_at_zero.checked_add(&comp.at_zero())?;
    }
    let components_agree = sum_at_zero == lhs;
    let rhs = closed_form_rhs(own, other, case, &constant, cap)?;
    let equal = lhs == rhs;
    Ok(EliminationReport {
        schedule: sched,
        lhs,
        rhs,
        equal,
        constant,
        bookkeeping_ok,
        others_annihilated,
        components_agree,
    })
}

/// `E!` for the final exponent `E`; the constant the closed form carries.
pub fn expected_constant(k: usize, case: EliminationCase) -> Result<BigInt> {
    Ok(factorial(final_exponent(k, case)?))
}

/// Applies `D_k^{2^{k-1}} ... D_1^1`, built from `op_mix`, to the series of
/// `series_mix` and returns the first `survivors` output coefficients.
pub fn null_operator_residual(series_mix: &RatMix, op_mix: &RatMix, survivors: usize) -> Result<Vec<RatPoly>> {
    check_shapes(series_mix, op_mix)?;
    if survivors == 0 {
        return Err(Error::InvalidArgument("need at least one surviving coefficient".into()));
    }
    let k = op_mix.k();
    let n = (1usize << k) - 1;
    let trunc = survivors - 1 + n;
    let cap = (2 * trunc + 8) as u32;
    let ops = operators(op_mix, cap);
    let mut s = FormalSeries::mixture(series_mix, trunc, cap)?;
    for (i, op) in ops.iter().enumerate() {
        for _ in 0..(1usize << i) {
            s = apply_operator(op, &s)?;
        }
    }
    Ok(s.coeffs)
}

/// True iff the product of a mixture's own operators kills its series through
/// `survivors` coefficients.
pub fn verify_null_operator(mix: &RatMix, survivors: usize) -> Result<bool> {
    Ok(null_operator_residual(mix, mix, survivors)?.iter().all(|p| p.is_zero()))
}

/// Writes the elimination left side as a combination of Hermite differences.
#[derive(Clone, Debug)]
pub struct DecompositionReport {
    /// `P_m`: the left side equals `sum_m P_m h_m` of the series it is applied to.
    pub multipliers: Vec<RatPoly>,
    pub lhs: RatPoly,
    /// `lhs - sum_m P_m (h_m(own) - h_m(other))`; zero when the identity holds.
    pub residual: RatPoly,
}

/// Pulls the `y^0` functional back through the schedule.
///
/// If the output is read as `sum_j lambda_j out_j`, the same number in terms of the
/// input coefficients is `sum_j (j lambda_{j-1} - c lambda_j - d lambda_{j+1}) s_j`.
/// With `s_j = h_j / j!` this gives `P_j = lambda_j / j!`.
pub fn identity_decomposition_check(
    truth: &RatMix,
    hyp: &RatMix,
    case: EliminationCase,
    apply_to: ApplyTo,
) -> Result<DecompositionReport> {
    check_shapes(truth, hyp)?;
    check_case(truth, hyp, case)?;
    let d = truth.dim();
    let sched = build_schedule(truth.k(), case, apply_to)?;
    let n = sched.total_exponent() as usize;
    let cap = (2 * n + 8) as u32;
    let true_ops = operators(truth, cap);
    let hyp_ops = operators(hyp, cap);
    let ops = expanded_ops(&sched, &true_ops, &hyp_ops);
    let zero = RatPoly::zero(d).with_cap(cap);

    let mut lambda = vec![RatPoly::one(d).with_cap(cap)];
    for op in ops.iter().rev() {
        let len = lambda.len() + 1;
        let mut next = vec![zero.clone(); len];
        for (j, slot) in next.iter_mut().enumerate() {
            let mut v = zero.clone();
            if j >= 1 {
                v = v.checked_add(&lambda[j - 1].scale(&Rational::from_integer(BigInt::from(j))))?;
            }
            if j < lambda.len() {
                v = v.checked_sub(&op.c.checked_mul(&lambda[j])?)?;
            }
            if j + 1 < lambda.len() {
                v = v.checked_sub(&op.d.checked_mul(&lambda[j + 1])?)?;
            }
            *slot = v;
        }
        lambda = next;
    }
    let mut fact = Rational::one();
    let mut multipliers = Vec::with_capacity(lambda.len());
    for (j, l) in lambda.iter().enumerate() {
        if j >= 1 {
            fact = fact * rat(j as i64, 1);
        }
        multipliers.push(l.scale(&(Rational::one() / fact.clone())));
    }

    let (own, other) = match apply_to {
        ApplyTo::Hypothesis => (hyp, truth),
        ApplyTo::Truth => (truth, hyp),
    };
    let m_max = (multipliers.len() - 1) as u32;
    let h_own = own.hermite_all(m_max)?;
    let h_other = other.hermite_all(m_max)?;
    let mut lhs = zero.clone();
    let mut diff_sum = zero.clone();
    for (m, p) in multipliers.iter().enumerate() {
        let ho = capped(h_own[m].clone(), cap);
        let ht = capped(h_other[m].clone(), cap);
        lhs = lhs.checked_add(&p.checked_mul(&ho)?)?;
        diff_sum = diff_sum.checked_add(&p.checked_mul(&ho.checked_sub(&ht)?)?)?;
    }
    let residual = lhs.checked_sub(&diff_sum)?;
    Ok(DecompositionReport { multipliers, lhs, residual })
}

/// Reorders both mixtures so that the components sharing the target's covariance come
/// first and the target comes last. Returns the reordered pair and the number `j` of
/// covariance mates. Both sides must share the same equality pattern.
pub fn arrange_general(truth: &RatMix, hyp: &RatMix, target: usize) -> Result<(RatMix, RatMix, usize)> {
    check_shapes(truth, hyp)?;
    let k = truth.k();
    if target >= k {
        return Err(Error::InvalidArgument(format!("target {target} out of range")));
    }
    let mates: Vec<usize> = (0..k).filter(|&i| i != target && truth.sigmas[i] == truth.sigmas[target]).collect();
    let hyp_mates: Vec<usize> = (0..k).filter(|&i| i != target && hyp.sigmas[i] == hyp.sigmas[target]).collect();
    if mates != hyp_mates {
        return Err(Error::InvalidArgument("covariance equality patterns differ between the mixtures".into()));
    }
    let mut order = mates.clone();
    order.extend((0..k).filter(|i| *i != target && !mates.contains(i)));
    order.push(target);
    let permute = |m: &RatMix| IsoMixture {
        weights: order.iter().map(|&i| m.weights[i].clone()).collect(),
        means: order.iter().map(|&i| m.means[i].clone()).collect(),
        sigmas: order.iter().map(|&i| m.sigmas[i].clone()).collect(),
    };
    Ok((permute(truth), permute(hyp), mates.len()))
}

/// Parameters for random exact instances.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct InstanceSpec {
    pub k: usize,
    pub d: usize,
    /// Numerators are drawn from `-range..=range`.
    pub range: i64,
    /// Denominators are drawn from `1..=max_den`.
    pub max_den: i64,
}

fn random_rat<R: Rng>(rng: &mut R, spec: &InstanceSpec) -> Rational {
    rat(rng.gen_range(-spec.range..=spec.range), rng.gen_range(1..=spec.max_den))
}

/// Symmetric, diagonally dominant (hence PSD) rational matrix.
pub fn random_sigma<R: Rng>(rng: &mut R, spec: &InstanceSpec) -> Vec<Vec<Rational>> {
    let d = spec.d;
    let mut s = vec![vec![Rational::zero(); d]; d];
    for i in 0..d {
        for j in i + 1..d {
            let v = random_rat(rng, spec);
            s[i][j] = v.clone();
            s[j][i] = v;
        }
    }
    for i in 0..d {
        let off: Rational = (0..d).filter(|&j| j != i).fold(Rational::zero(), |acc, j| acc + num_traits::Signed::abs(&s[i][j]));
        s[i][i] = off + num_traits::Signed::abs(&random_rat(rng, spec));
    }
    s
}

fn random_weights<R: Rng>(rng: &mut R, k: usize) -> Vec<Rational> {
    let raw: Vec<i64> = (0..k).map(|_| rng.gen_range(1..=9)).collect();
    let total: i64 = raw.iter().sum();
    raw.into_iter().map(|r| rat(r, total)).collect()
}

fn random_mixture<R: Rng>(rng: &mut R, spec: &InstanceSpec) -> RatMix {
    IsoMixture {
        weights: random_weights(rng, spec.k),
        means: (0..spec.k).map(|_| (0..spec.d).map(|_| random_rat(rng, spec)).collect()).collect(),
        sigmas: (0..spec.k).map(|_| random_sigma(rng, spec)).collect(),
    }
}

/// A random `(truth, hypothesis)` pair satisfying the preconditions of `case`.
pub fn random_instance<R: Rng>(rng: &mut R, spec: &InstanceSpec, case: EliminationCase) -> (RatMix, RatMix) {
    let truth = random_mixture(rng, spec);
    let mut hyp = random_mixture(rng, spec);
    let mut truth = truth;
    match case {
        EliminationCase::Covariance => {}
        EliminationCase::Mean => hyp.sigmas = truth.sigmas.clone(),
        EliminationCase::General { j } => {
            let last = spec.k - 1;
            for i in 0..j.min(last) {
                truth.sigmas[i] = truth.sigmas[last].clone();
                hyp.sigmas[i] = hyp.sigmas[last].clone();
            }
        }
    }
    (truth, hyp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mix1(w: Rational, mu: i64, s: i64) -> RatMix {
        IsoMixture { weights: vec![w], means: vec![vec![rat(mu, 1)]], sigmas: vec![vec![vec![rat(s, 1)]]] }
    }

    #[test]
    fn k1_covariance_closed_form() {
        // one-dimensional: lhs = w~ (s~ - s) x^2
        let truth = mix1(rat(1, 1), 1, 2);
        let hyp = mix1(rat(1, 1), 3, 5);
        let r = verify_elimination(&truth, &hyp, EliminationCase::Covariance, ApplyTo::Hypothesis).unwrap();
        assert!(r.passed());
        let x = RatPoly::var(1, 0);
        assert_eq!(r.lhs, (&x * &x).scale(&rat(3, 1)));
        assert_eq!(r.constant, BigInt::one());
    }

    #[test]
    fn k1_mean_sign_on_truth_side() {
        let truth = mix1(rat(1, 1), 1, 2);
        let hyp = mix1(rat(1, 1), 4, 2);
        let h = verify_elimination(&truth, &hyp, EliminationCase::Mean, ApplyTo::Hypothesis).unwrap();
        let t = verify_elimination(&truth, &hyp, EliminationCase::Mean, ApplyTo::Truth).unwrap();
        assert!(h.passed() && t.passed());
        assert_eq!(h.lhs, RatPoly::var(1, 0).scale(&rat(3, 1)));
        assert_eq!(t.lhs, RatPoly::var(1, 0).scale(&rat(-3, 1)));
    }

    #[test]
    fn k2_constant_is_5040() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = InstanceSpec { k: 2, d: 2, range: 5, max_den: 3 };
        let (t, h) = random_instance(&mut rng, &spec, EliminationCase::Covariance);
        let r = verify_elimination(&t, &h, EliminationCase::Covariance, ApplyTo::Hypothesis).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.constant, BigInt::from(5040));
        assert_eq!(expected_constant(2, EliminationCase::Covariance).unwrap(), BigInt::from(5040));
    }

    #[test]
    fn all_cases_k2_both_sides() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = InstanceSpec { k: 2, d: 2, range: 4, max_den: 3 };
        for case in [EliminationCase::Covariance, EliminationCase::Mean, EliminationCase::General { j: 1 }] {
            let (t, h) = random_instance(&mut rng, &spec, case);
            for side in [ApplyTo::Hypothesis, ApplyTo::Truth] {
                let r = verify_elimination(&t, &h, case, side).unwrap();
                assert!(r.passed(), "{case:?} {side:?}");
                assert_eq!(r.constant, expected_constant(2, case).unwrap());
                let dec = identity_decomposition_check(&t, &h, case, side).unwrap();
                assert!(dec.residual.is_zero());
                assert_eq!(dec.lhs, r.lhs);
            }
        }
    }

    #[test]
    fn null_operator_and_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = InstanceSpec { k: 2, d: 2, range: 4, max_den: 2 };
        let (t, _) = random_instance(&mut rng, &spec, EliminationCase::Covariance);
        assert!(verify_null_operator(&t, 8).unwrap());
        let mut bad = t.clone();
        bad.means[0][1] = bad.means[0][1].clone() + rat(1, 7);
        assert!(!null_operator_residual(&t, &bad, 8).unwrap().iter().all(|p| p.is_zero()));
    }

    #[test]
    fn general_case_preconditions_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = InstanceSpec { k: 2, d: 1, range: 4, max_den: 2 };
        let (t, h) = random_instance(&mut rng, &spec, EliminationCase::Covariance);
        assert!(verify_elimination(&t, &h, EliminationCase::Mean, ApplyTo::Hypothesis).is_err());
    }

    #[test]
    fn arrange_moves_mates_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = InstanceSpec { k: 3, d: 2, range: 9, max_den: 3 };
        let (mut t, mut h) = random_instance(&mut rng, &spec, EliminationCase::Covariance);
        t.sigmas[1] = t.sigmas[0].clone();
        h.sigmas[1] = h.sigmas[0].clone();
        let (t2, h2, j) = arrange_general(&t, &h, 0).unwrap();
        assert_eq!(j, 1);
        assert_eq!(t2.sigmas[0], t2.sigmas[2]);
        assert_eq!(h2.means[2], h.means[0]);
    }
}
