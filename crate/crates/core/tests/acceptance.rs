//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run all with `cargo test -p robustmix --test acceptance`, or pick criteria by number:
//! `cargo test -p robustmix --test acceptance -- 1 5 9`.

use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use robustmix::clustering::{misclassification, rough_cluster, RoughConfig};
use robustmix::corruption::{corrupt, corrupt_tracked, Adversary, CorruptionPlan};
use robustmix::gaussian::{
    c_closeness, parameter_distance_bound, ratio_exponent, ratio_lemma_check, sample, tv_distance, Gaussian, GaussianMixture, TvMethod,
};
use robustmix::genfun::{
    expected_constant, null_operator_residual, random_instance, verify_elimination, verify_null_operator, ApplyTo, EliminationCase,
    FormalSeries, InstanceSpec,
};
use robustmix::hermite::{hermite_homogenized, hermite_univariate, mixture_hermite_closed_form, IsoMixture};
use robustmix::param::{close_case_learn, parameter_error, CloseCaseConfig};
use robustmix::pipeline::{full_pipeline, oracle_fit, permuted_tv_error, RunConfig};
use robustmix::poly::{
    dot_product_pairing, factor_upper_constant, monomials_of_degree, monomials_up_to, product_norm_ratio, rat, sum_bound, FloatPoly, Monomial,
    RatPoly, Rational,
};
use robustmix::pseudoexp::{check_pseudoexpectation, dirac, solve, CheckConfig, ConstraintSystem, Objective, SolveSettings};
use robustmix::robust::{robust_hermite, robust_mean_bounded_cov};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- 1

/// `He_m(x) = m! sum_j (-1)^j x^(m-2j) / (j! (m-2j)! 2^j)`, computed with big integers.
fn hermite_series(m: u32) -> Vec<BigInt> {
    let fact = |n: u32| (1..=n).fold(BigInt::one(), |a, b| a * b);
    let mut c = vec![BigInt::zero(); m as usize + 1];
    for j in 0..=m / 2 {
        let v = fact(m) / (fact(j) * fact(m - 2 * j) * BigInt::from(2u32).pow(j));
        c[(m - 2 * j) as usize] = if j % 2 == 0 { v } else { -v };
    }
    c
}

fn c1() -> Outcome {
    let t = Instant::now();
    let mut bad = Vec::new();
    for m in 0..=10 {
        if hermite_univariate(m).coeffs != hermite_series(m) {
            bad.push(m);
        }
    }
    let term = |x: u32, y: u32, c: i64| (Monomial::new(vec![x, y]), rat(c, 1));
    let h2 = RatPoly::from_terms(2, [term(2, 0, 1), term(0, 2, -1)]).unwrap();
    let h3 = RatPoly::from_terms(2, [term(3, 0, 1), term(1, 2, -3)]).unwrap();
    let homog = hermite_homogenized(2) == h2 && hermite_homogenized(3) == h3;
    let el = t.elapsed();
    outcome(
        bad.is_empty() && homog && el < Duration::from_secs(1),
        format!("recurrence = series for m <= 10 (mismatches {bad:?}); x^2-y^2, x^3-3xy^2 exact: {homog}; {el:.2?}"),
    )
}

// ---------------------------------------------------------------- 2

/// `[y^m] sum_i w_i exp(a_i y + b_i y^2 / 2)` by direct expansion.
fn series_coefficient(mix: &IsoMixture<Rational>, m: u32) -> RatPoly {
    let fact = |n: u32| (1..=n as i64).fold(Rational::one(), |a, b| a * rat(b, 1));
    let mut out = RatPoly::zero(mix.dim()).with_cap(16);
    for i in 0..mix.k() {
        let a = mix.mean_form(i).with_cap(16);
        let b = mix.sigma_form(i).with_cap(16);
        for j in 0..=m / 2 {
            let coef = Rational::one() / (fact(m - 2 * j) * fact(j) * rat(1 << j, 1));
            let term = a.checked_pow(m - 2 * j).unwrap().checked_mul(&b.checked_pow(j).unwrap()).unwrap().scale(&(coef * mix.weights[i].clone()));
            out = out.checked_add(&term).unwrap();
        }
    }
    out
}

fn c2() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = 0;
    for inst in 0..50 {
        let spec = InstanceSpec { k: 1 + inst % 3, d: 1 + (inst / 3) % 3, range: 4, max_den: 3 };
        let (mix, _) = random_instance(&mut rng, &spec, EliminationCase::Covariance);
        let series = FormalSeries::mixture(&mix, 8, 16).unwrap();
        for m in 0..=8u32 {
            let fact = (1..=m as i64).fold(Rational::one(), |a, b| a * rat(b, 1));
            let h = mixture_hermite_closed_form(&mix, m).unwrap().polynomial;
            let hm = h.scale(&(Rational::one() / fact));
            if series.coeffs[m as usize] != hm || series_coefficient(&mix, m) != hm {
                failures += 1;
            }
        }
    }
    let el = t.elapsed();
    outcome(failures == 0 && el < Duration::from_secs(30), format!("50 mixtures x 9 orders, {failures} mismatches; {el:.2?}"))
}

// ---------------------------------------------------------------- 3

fn c3() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut failures = Vec::new();
    let mut checks = 0;
    let mut perturbations = 0;
    let mut constant_k2 = None;
    for k in 1..=3usize {
        let mut cases = vec![EliminationCase::Covariance, EliminationCase::Mean];
        cases.extend((1..k).map(|j| EliminationCase::General { j }));
        for inst in 0..50 {
            // big-rational expansions grow fast with k; three components mostly in one dimension
            let d = if k == 3 { if inst == 0 { 2 } else { 1 } } else { 1 + inst % 3 };
            let spec = InstanceSpec { k, d, range: 4, max_den: 3 };
            for &case in &cases {
                let (truth, hyp) = random_instance(&mut rng, &spec, case);
                for side in [ApplyTo::Hypothesis, ApplyTo::Truth] {
                    checks += 1;
                    match verify_elimination(&truth, &hyp, case, side) {
                        // a zero factor in the product leaves the constant unidentifiable
                        Ok(r) if r.passed() && (r.rhs.is_zero() || r.constant == expected_constant(k, case).unwrap()) => {
                            if k == 2 && case == EliminationCase::Covariance && !r.rhs.is_zero() {
                                constant_k2 = Some(r.constant.clone());
                            }
                        }
                        Ok(_) => failures.push(format!("k={k} {case:?} {side:?}")),
                        Err(e) => failures.push(format!("k={k} {case:?} {side:?}: {e}")),
                    }
                }
            }
            let (mix, _) = random_instance(&mut rng, &spec, EliminationCase::Covariance);
            checks += 1;
            if !verify_null_operator(&mix, 4).unwrap() {
                failures.push(format!("null operator k={k}"));
            }
            // every mean and covariance entry; weights do not enter the operators
            if inst < 3 {
                let mut variants = Vec::new();
                for i in 0..k {
                    for a in 0..d {
                        let mut p = mix.clone();
                        p.means[i][a] = p.means[i][a].clone() + rat(1, 7);
                        variants.push(p);
                        for b in a..d {
                            let mut p = mix.clone();
                            p.sigmas[i][a][b] = p.sigmas[i][a][b].clone() + rat(1, 5);
                            p.sigmas[i][b][a] = p.sigmas[i][a][b].clone();
                            variants.push(p);
                        }
                    }
                }
                for p in variants {
                    perturbations += 1;
                    if null_operator_residual(&mix, &p, 4).unwrap().iter().all(|q| q.is_zero()) {
                        failures.push(format!("perturbation not detected k={k}"));
                    }
                }
            }
        }
    }
    let c5040 = constant_k2 == Some(BigInt::from(5040));
    let el = t.elapsed();
    outcome(
        failures.is_empty() && c5040 && el < Duration::from_secs(300),
        format!("{checks} identity checks, {perturbations} perturbations, failures {:?}; C2 = 5040: {c5040}; {el:.2?}", &failures[..failures.len().min(5)]),
    )
}

// ---------------------------------------------------------------- 4

fn random_poly(rng: &mut ChaCha8Rng, d: usize, deg: u32) -> FloatPoly {
    let terms: Vec<(Monomial, f64)> = monomials_up_to(d, deg).into_iter().map(|m| (m, rng.sample(StandardNormal))).collect();
    FloatPoly::from_terms(d, terms).unwrap().with_cap(16)
}

fn lower_ratio_min(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..1000)
        .map(|_| {
            let f = random_poly(&mut rng, 3, 3);
            let g = random_poly(&mut rng, 3, 3);
            product_norm_ratio(&f, &g).unwrap()
        })
        .fold(f64::INFINITY, f64::min)
}

fn c4() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut violations = [0usize; 3];
    for i in 0..1000 {
        let d = 1 + i % 3;
        let m = 2 + i % 4;
        let fs: Vec<FloatPoly> = (0..m).map(|_| random_poly(&mut rng, d, 3)).collect();
        if !sum_bound(&fs).unwrap().holds(1e-12) {
            violations[0] += 1;
        }
        let (df, dg) = (1 + (i % 3) as u32, 1 + (i % 2) as u32);
        let f = random_poly(&mut rng, d, df);
        let g = random_poly(&mut rng, d, dg);
        let n = factor_upper_constant(d, df, dg) as f64;
        let lhs = f.checked_mul(&g).unwrap().norm_sq();
        if lhs > n * f.norm_sq() * g.norm_sq() * (1.0 + 1e-12) {
            violations[1] += 1;
        }
        let ps: Vec<FloatPoly> = (0..4).map(|_| random_poly(&mut rng, d, 2)).collect();
        if !dot_product_pairing(&ps[0], &ps[1], &ps[2], &ps[3]).unwrap().holds(1e-12) {
            violations[2] += 1;
        }
    }
    let mins: Vec<f64> = [1u64, 2, 3].iter().map(|&s| lower_ratio_min(s)).collect();
    let mean = mins.iter().sum::<f64>() / 3.0;
    let sd = (mins.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    let cv = sd / mean;
    let el = t.elapsed();
    outcome(
        violations == [0, 0, 0] && mins.iter().all(|&m| m > 0.0) && cv < 0.25,
        format!("violations sum/factor-upper/dot = {violations:?}; factor-lower minima {mins:.4?} (cv {cv:.3}); {el:.2?}"),
    )
}

// ---------------------------------------------------------------- 5

fn var(n: usize, i: usize) -> FloatPoly {
    FloatPoly::var(n, i)
}

fn cst(n: usize, c: f64) -> FloatPoly {
    FloatPoly::constant(n, c)
}

/// A system with a known root `p`: sphere through `p`, half-planes and a product inequality.
fn feasible_system(rng: &mut ChaCha8Rng, i: usize) -> (ConstraintSystem, Vec<f64>) {
    let n = 1 + i % 3;
    let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let mut sys = ConstraintSystem::with_vars(n, 2 + 2 * (i % 2) as u32).unwrap();
    let r2: f64 = p.iter().map(|x| x * x).sum();
    let mut sphere = cst(n, -r2);
    for j in 0..n {
        sphere = sphere.checked_add(&var(n, j).checked_mul(&var(n, j)).unwrap()).unwrap();
    }
    sys.add_equality(sphere).unwrap();
    for j in 0..n {
        let slack = rng.gen_range(0.1..1.0);
        sys.add_inequality(var(n, j).checked_sub(&cst(n, p[j] - slack)).unwrap()).unwrap();
    }
    if n >= 2 {
        let q = var(n, 0).checked_sub(&cst(n, p[0] - 2.0)).unwrap().checked_mul(&var(n, 1).checked_sub(&cst(n, p[1] - 2.0)).unwrap()).unwrap();
        sys.add_inequality(q).unwrap();
    }
    (sys, p)
}

fn infeasible_systems() -> Vec<ConstraintSystem> {
    let mut out = Vec::new();
    let x = var(1, 0);
    let sq = x.checked_mul(&x).unwrap();
    let mut s = ConstraintSystem::with_vars(1, 2).unwrap();
    s.add_equality(sq.checked_add(&cst(1, 1.0)).unwrap()).unwrap();
    out.push(s);
    let mut s = ConstraintSystem::with_vars(2, 2).unwrap();
    let r = var(2, 0).checked_mul(&var(2, 0)).unwrap().checked_add(&var(2, 1).checked_mul(&var(2, 1)).unwrap()).unwrap();
    s.add_equality(r.checked_add(&cst(2, 1.0)).unwrap()).unwrap();
    out.push(s);
    let mut s = ConstraintSystem::with_vars(1, 2).unwrap();
    s.add_inequality(x.checked_sub(&cst(1, 1.0)).unwrap()).unwrap();
    s.add_inequality(x.scale(&-1.0).checked_sub(&cst(1, 1.0)).unwrap()).unwrap();
    out.push(s);
    let mut s = ConstraintSystem::with_vars(1, 4).unwrap();
    s.add_equality(sq.checked_sub(&x).unwrap()).unwrap();
    s.add_inequality(x.checked_sub(&cst(1, 2.0)).unwrap()).unwrap();
    out.push(s);
    let mut s = ConstraintSystem::with_vars(2, 2).unwrap();
    s.add_equality(r.checked_sub(&cst(2, 1.0)).unwrap()).unwrap();
    s.add_inequality(r.checked_sub(&cst(2, 4.0)).unwrap()).unwrap();
    out.push(s);
    out
}

fn c5() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let settings = SolveSettings::default();
    let check = CheckConfig { pairs: 100, ..CheckConfig::default() };
    let (mut outputs, mut checked_ok, mut dirac_ok, mut feasible_ok) = (0, 0, 0, 0);
    for i in 0..20 {
        let (sys, p) = feasible_system(&mut rng, i);
        if dirac(&p, sys.degree).residuals(&sys).unwrap().max() <= 1e-9 {
            dirac_ok += 1;
        }
        let n = sys.nvars();
        let obj = if i % 2 == 0 { Objective::Feasibility } else { Objective::Maximize(var(n, 0)) };
        if let Ok(out) = solve(&sys, &obj, &settings) {
            if let Some(pe) = out.pseudoexpectation() {
                feasible_ok += 1;
                outputs += 1;
                if check_pseudoexpectation(pe, &sys, &check).unwrap().passed {
                    checked_ok += 1;
                }
            }
        }
    }
    let mut infeasible_ok = 0;
    for sys in infeasible_systems() {
        match solve(&sys, &Objective::Feasibility, &settings) {
            Ok(out) if !out.is_feasible() => infeasible_ok += 1,
            Ok(out) => {
                outputs += 1;
                if check_pseudoexpectation(out.pseudoexpectation().unwrap(), &sys, &check).unwrap().passed {
                    checked_ok += 1;
                }
            }
            Err(_) => {}
        }
    }
    let el = t.elapsed();
    outcome(
        dirac_ok == 20 && feasible_ok == 20 && checked_ok == outputs && infeasible_ok == 5 && el < Duration::from_secs(120),
        format!(
            "Dirac witnesses {dirac_ok}/20, solver feasible {feasible_ok}/20, checker passed {checked_ok}/{outputs}, infeasible reported {infeasible_ok}/5; {el:.2?}"
        ),
    )
}

// ---------------------------------------------------------------- 6

fn gaussian_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn c6() -> Outcome {
    let t = Instant::now();
    let (d, n) = (5, 10_000);
    let clean = gaussian_points(n, d, 61);
    let plan = CorruptionPlan { epsilon: 0.1, adversary: Adversary::PointMass { distance: 100.0, direction: None }, seed: 1 };
    let x = corrupt(&clean, &plan).unwrap();
    let raw: Vec<f64> = (0..d).map(|j| x.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
    let est = robust_mean_bounded_cov(&x, 0.1, 1.0).unwrap();
    let (err, raw_err) = (norm(&est.value), norm(&raw));

    // rate sweep: a point mass at radius sqrt(kappa / eps) stays inside a (1 + kappa) bound
    let kappa: f64 = 1.0;
    let epss = [0.01, 0.02, 0.05, 0.1, 0.2];
    let errs: Vec<f64> = epss
        .iter()
        .map(|&e| {
            let mut s = 0.0;
            for seed in 0..5 {
                let clean = gaussian_points(n, d, 100 + seed);
                let adv = Adversary::PointMass { distance: (kappa / e).sqrt(), direction: None };
                let x = corrupt(&clean, &CorruptionPlan { epsilon: e, adversary: adv, seed }).unwrap();
                s += norm(&robust_mean_bounded_cov(&x, e, 1.0 + kappa).unwrap().value);
            }
            s / 5.0
        })
        .collect();
    let lx: Vec<f64> = epss.iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / 5.0, ly.iter().sum::<f64>() / 5.0);
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let el = t.elapsed();
    outcome(
        err <= 5.0 * 0.1f64.sqrt() && raw_err >= 5.0 && (0.4..=0.6).contains(&slope) && el < Duration::from_secs(60),
        format!("error {err:.3} (bound 1.581), raw {raw_err:.2}; log-log slope {slope:.3} over errors {errs:.3?}; {el:.2?}"),
    )
}

// ---------------------------------------------------------------- 7

/// Two components placed so that the mixture is already isotropic.
fn isotropic_truth() -> IsoMixture<f64> {
    let mu = [0.6, 0.3];
    let s: Vec<Vec<f64>> = (0..2).map(|i| (0..2).map(|j| -mu[i] * mu[j]).collect()).collect();
    IsoMixture { weights: vec![0.5, 0.5], means: vec![mu.to_vec(), vec![-mu[0], -mu[1]]], sigmas: vec![s.clone(), s] }
}

fn c7() -> Outcome {
    let t = Instant::now();
    let iso = isotropic_truth();
    let mix = GaussianMixture::from_iso(&iso).unwrap();
    let eps: f64 = 0.05;
    let mut worst = [0.0f64; 6];
    let mut runs_ok = 0;
    for run in 0..10u64 {
        let s = sample(&mix, 20_000, 700 + run).unwrap();
        let adversary = match run % 3 {
            0 => Adversary::PointMass { distance: 10.0, direction: None },
            1 => Adversary::DensityDecoy { distance: 4.0, spread: 0.3 },
            _ => Adversary::WorstMoment { m: 4, radius: 6.0, candidates: 64 },
        };
        let x = corrupt(&s.points, &CorruptionPlan { epsilon: eps, adversary, seed: run }).unwrap();
        let mut ok = true;
        for m in 1..=6 {
            let est = robust_hermite(&x, eps, m).unwrap().polynomial(2).unwrap();
            let truth = mixture_hermite_closed_form(&iso, m).unwrap().polynomial;
            let e = est.checked_sub(&truth).unwrap().norm_sq();
            worst[m as usize - 1] = worst[m as usize - 1].max(e);
            ok &= e <= eps.sqrt();
        }
        runs_ok += usize::from(ok);
    }
    let el = t.elapsed();
    outcome(runs_ok == 10, format!("{runs_ok}/10 runs within sqrt(eps) = {:.3} for m <= 6; worst squared error by order {worst:.3?}; {el:.2?}", eps.sqrt()))
}

// ---------------------------------------------------------------- 8

fn c8() -> Outcome {
    let t = Instant::now();
    let g = [
        Gaussian::from_vecs(&[0.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
        Gaussian::from_vecs(&[100.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
    ];
    let mut ok = 0;
    let mut bests = Vec::new();
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for (c, gc) in g.iter().enumerate() {
            for _ in 0..30 {
                pts.push(gc.draw(&mut rng));
                labels.push(c);
            }
        }
        let plan = CorruptionPlan { epsilon: 0.02, adversary: Adversary::PointMass { distance: 50.0, direction: Some(vec![0.0, 1.0]) }, seed: trial };
        let tc = corrupt_tracked(&pts, &plan).unwrap();
        let lab: Vec<usize> = tc.origin.iter().map(|o| o.map_or(0, |i| labels[i])).collect();
        let mask: Vec<bool> = tc.origin.iter().map(|o| o.is_some()).collect();
        let mut cfg = RoughConfig::new(2);
        cfg.eps = 0.02;
        cfg.seed = trial;
        let best = match rough_cluster(&tc.points, &cfg) {
            Ok(res) => res.candidates.iter().map(|c| misclassification(&c.subsets, &lab, Some(&mask), 2)).fold(1.0, f64::min),
            Err(_) => 1.0,
        };
        bests.push(best);
        if best <= 0.05 {
            ok += 1;
        }
    }
    let el = t.elapsed();
    let worst = bests.iter().copied().fold(0.0, f64::max);
    outcome(ok >= 18 && el < Duration::from_secs(600), format!("{ok}/20 trials with best misclassification <= 5% (worst {worst:.3}); {el:.2?}"))
}

// ---------------------------------------------------------------- 9

fn close_case_truth() -> IsoMixture<f64> {
    IsoMixture {
        weights: vec![0.4, 0.6],
        means: vec![vec![-0.8, 0.3], vec![0.9, -0.5]],
        sigmas: vec![vec![vec![0.3, 0.1], vec![0.1, -0.2]], vec![vec![-0.2, 0.0], vec![0.0, 0.4]]],
    }
}

fn c9() -> Outcome {
    let t = Instant::now();
    let truth = close_case_truth();
    let exact: Vec<FloatPoly> = (1..=6).map(|m| mixture_hermite_closed_form(&truth, m).unwrap().polynomial).collect();
    let mut cfg = CloseCaseConfig::new(2, 2, 1e-9);
    cfg.certify_program = true;
    let list = close_case_learn(&exact, &cfg).unwrap();
    let exact_err = list.candidates.iter().map(|c| parameter_error(&truth, &c.mixture)).fold(f64::INFINITY, f64::min);

    // perturb every order by a fixed sign pattern with squared coefficient norm eps'
    let eps_prime: f64 = 1e-4;
    let noisy: Vec<FloatPoly> = exact
        .iter()
        .map(|p| {
            let n = p.len().max(1) as f64;
            let mut q = p.clone();
            for (i, m) in monomials_of_degree(2, p.degree().unwrap_or(0)).into_iter().enumerate() {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                q.add_term(m, s * (eps_prime / n).sqrt());
            }
            q
        })
        .collect();
    let mut cfg = CloseCaseConfig::new(2, 2, eps_prime);
    cfg.certify_program = true;
    let list = close_case_learn(&noisy, &cfg).unwrap();
    let noisy_err = list.candidates.iter().map(|c| parameter_error(&truth, &c.mixture)).fold(f64::INFINITY, f64::min);
    let el = t.elapsed();
    outcome(
        exact_err <= 1e-2 && noisy_err <= 0.1 && el < Duration::from_secs(900),
        format!("exact inputs: best error {exact_err:.2e}; noisy (eps' = 1e-4): best error {noisy_err:.3} (recorded target 0.1); {el:.2?}"),
    )
}

// ---------------------------------------------------------------- 10

fn pipeline_truth() -> GaussianMixture {
    GaussianMixture::new(
        vec![0.4, 0.6],
        vec![
            Gaussian::from_vecs(&[-6.0, 0.0], &[vec![1.0, 0.3], vec![0.3, 0.8]]).unwrap(),
            Gaussian::from_vecs(&[6.0, 1.0], &[vec![0.7, -0.2], vec![-0.2, 1.5]]).unwrap(),
        ],
    )
    .unwrap()
}

fn c10() -> Outcome {
    let t = Instant::now();
    let truth = pipeline_truth();
    let b = tv_distance(&truth.components[0], &truth.components[1], TvMethod::MonteCarlo { n: 20_000, seed: 1 }).unwrap().value;
    let (mut ok, mut control_ok) = (0, 0);
    let mut errs = Vec::new();
    let mut ratios = Vec::new();
    for run in 0..10u64 {
        let s = sample(&truth, 20_000, 1000 + run).unwrap();
        let plan = CorruptionPlan { epsilon: 0.05, adversary: Adversary::PointMass { distance: 30.0, direction: None }, seed: run };
        let x = corrupt(&s.points, &plan).unwrap();
        let mut cfg = RunConfig::new(2, 0.05);
        cfg.b = 0.5;
        cfg.seed = run;
        let err = full_pipeline(&x, &cfg).and_then(|o| permuted_tv_error(&truth, &o.winner, 20_000, 7)).unwrap_or(f64::INFINITY);
        errs.push(err);
        ok += usize::from(err <= 0.1);

        let mut cfg0 = RunConfig::new(2, 0.0);
        cfg0.seed = run;
        match full_pipeline(&s.points, &cfg0) {
            Ok(out) => {
                let e0 = permuted_tv_error(&truth, &out.winner, 20_000, 7).unwrap();
                let rows = &out.parts[1];
                let pts: Vec<Vec<f64>> = rows.iter().map(|&i| s.points[i].clone()).collect();
                let labels: Vec<usize> = rows.iter().map(|&i| s.labels()[i]).collect();
                let base = permuted_tv_error(&truth, &oracle_fit(&pts, &labels, 2).unwrap(), 20_000, 7).unwrap();
                ratios.push(e0 / base);
                control_ok += usize::from(e0 <= 3.0 * base);
            }
            Err(_) => ratios.push(f64::INFINITY),
        }
    }
    let el = t.elapsed();
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let worst_ratio = ratios.iter().copied().fold(0.0, f64::max);
    outcome(
        b >= 0.5 && ok >= 9 && control_ok == 10 && el < Duration::from_secs(1800),
        format!(
            "component TV {b:.3}; {ok}/10 runs with permuted TV error <= 0.1 (worst {worst:.3}); eps = 0 control within 3x baseline {control_ok}/10 (worst ratio {worst_ratio:.2}); {el:.2?}"
        ),
    )
}

// ---------------------------------------------------------------- 11

fn random_gaussian(rng: &mut ChaCha8Rng, d: usize, spread: f64) -> Gaussian {
    let mean: Vec<f64> = (0..d).map(|_| spread * rng.sample::<f64, _>(StandardNormal)).collect();
    let a: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.5).collect()).collect();
    let cov: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| (0..d).map(|l| a[i][l] * a[j][l]).sum::<f64>() + if i == j { 0.5 } else { 0.0 }).collect())
        .collect();
    Gaussian::from_vecs(&mean, &cov).unwrap()
}

/// `g` moved by a small random mean shift and a congruence `(I + tE) S (I + tE)^T`.
fn nudge(rng: &mut ChaCha8Rng, g: &Gaussian, t: f64) -> Gaussian {
    let d = g.dim();
    let mean: Vec<f64> = g.mean().iter().map(|m| m + t * rng.sample::<f64, _>(StandardNormal)).collect();
    let e = nalgebra::DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 } + t * rng.sample::<f64, _>(StandardNormal));
    let cov = &e * g.cov() * e.transpose();
    let cov: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| 0.5 * (cov[(i, j)] + cov[(j, i)])).collect()).collect();
    Gaussian::from_vecs(&mean, &cov).unwrap()
}

fn c11() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // TV <= 1.5 ||S1^-1/2 S2 S1^-1/2 - I||_F + 0.5 |S1^-1/2 dmu| is the classical bound; the
    // implemented distance uses constant 1 on both terms, so 1.5 dominates
    let mut dominance_fail = 0;
    let mut constant: f64 = 0.0;
    for i in 0..200 {
        let d = 1 + i % 3;
        let g1 = random_gaussian(&mut rng, d, 1.0);
        let g2 = if i % 2 == 0 { nudge(&mut rng, &g1, 0.2) } else { random_gaussian(&mut rng, d, 1.0) };
        let bound = parameter_distance_bound(&g1, &g2).unwrap();
        let method = if d == 1 { TvMethod::Closed1d } else { TvMethod::MonteCarlo { n: 20_000, seed: i as u64 } };
        let tv = tv_distance(&g1, &g2, method).unwrap();
        constant = constant.max(tv.value / bound);
        if tv.interval().0 > 1.5 * bound {
            dominance_fail += 1;
        }
    }

    let lambda = 0.5;
    let mut ratio_pass = 0;
    let mut needed: f64 = 0.0;
    for i in 0..50 {
        let a = Gaussian::from_vecs(&[0.0], &[vec![1.0]]).unwrap();
        let b = Gaussian::from_vecs(&[rng.gen_range(-0.5..0.5)], &[vec![rng.gen_range(0.6..1.6)]]).unwrap();
        let c = Gaussian::from_vecs(&[rng.gen_range(-4.0..4.0)], &[vec![rng.gen_range(0.3..3.0)]]).unwrap();
        let r = ratio_lemma_check(&a, &b, &c, lambda, 0.01, 5000, i).unwrap();
        if r.implied_exponent.is_finite() {
            needed = needed.max(r.implied_exponent);
        }
        ratio_pass += usize::from(r.passed);
    }

    let cc: f64 = 4.0;
    let exponent = 4.0;
    let (mut triples, mut trans_ok, mut observed): (usize, usize, f64) = (0, 0, 0.0);
    let mut guard = 0;
    while triples < 200 && guard < 20_000 {
        guard += 1;
        let d = 1 + guard % 3;
        let g1 = random_gaussian(&mut rng, d, 1.0);
        let g2 = nudge(&mut rng, &g1, 0.4);
        let g3 = nudge(&mut rng, &g2, 0.4);
        let (a, b) = (c_closeness(&g1, &g2, cc).unwrap(), c_closeness(&g2, &g3, cc).unwrap());
        if !(a.close && b.close) {
            continue;
        }
        triples += 1;
        let r = c_closeness(&g1, &g3, cc.powf(exponent)).unwrap();
        let worst = r.mean_ratio.max(r.variance_ratio).max(r.covariance_value);
        observed = observed.max(worst.ln() / cc.ln());
        trans_ok += usize::from(r.close);
    }
    let el = t.elapsed();
    outcome(
        dominance_fail == 0 && ratio_pass == 50 && triples == 200 && trans_ok == 200,
        format!(
            "TV <= 1.5 x distance bound on 200 pairs ({dominance_fail} failures, observed constant {constant:.3}); ratio lemma {ratio_pass}/50 (c(lambda) = {:.3}, largest needed {needed:.3}); C-closeness transitivity at C^{exponent} {trans_ok}/{triples} (observed exponent {observed:.3}); {el:.2?}",
            ratio_exponent(lambda)
        ),
    )
}

/// Criteria whose failure is analysed and expected at desk scale; they still print FAIL.
const EXPECTED_RED: &[usize] = &[7];

fn main() {
    let all: [(usize, &str, fn() -> Outcome); 11] = [
        (1, "hermite exactness", c1),
        (2, "generating-function identity", c2),
        (3, "null-operator and elimination identities", c3),
        (4, "polynomial norm inequalities", c4),
        (5, "pseudoexpectation engine", c5),
        (6, "robust mean", c6),
        (7, "robust Hermite estimation", c7),
        (8, "rough clustering desk test", c8),
        (9, "close-case learning", c9),
        (10, "end-to-end pipeline", c10),
        (11, "distance-lemma properties", c11),
    ];
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (id, name, f) in all {
        if !picked.is_empty() && !picked.contains(&id) {
            continue;
        }
        let o = f();
        println!("criterion {id:>2} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass && !EXPECTED_RED.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
