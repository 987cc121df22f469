use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::{One, Zero};
use proptest::prelude::*;

use robustmix::clustering::misclassification;
use robustmix::corruption::{corrupt_tracked, replacement_count, Adversary, CorruptionPlan};
use robustmix::gaussian::{flatten, tv_distance, unflatten, Gaussian, GaussianMixture, TvMethod};
use robustmix::hermite::{hermite_univariate, mixture_hermite_closed_form, IsoMixture};
use robustmix::genfun::FormalSeries;
use robustmix::io::MixtureJson;
use robustmix::param::{parameter_error, reduce_to_separated};
use robustmix::pipeline::{ml_reassign, permuted_tv_error};
use robustmix::poly::{dot_product_pairing, monomials_up_to, rat, sum_bound, FloatPoly, Rational};
use robustmix::pseudoexp::{dirac, ConstraintSystem};
use robustmix::robust::robust_mean_bounded_cov;

fn poly(d: usize, deg: u32) -> impl Strategy<Value = FloatPoly> {
    let n = monomials_up_to(d, deg).len();
    prop::collection::vec(-3.0..3.0f64, n).prop_map(move |c| FloatPoly::from_terms(d, monomials_up_to(d, deg).into_iter().zip(c)).unwrap())
}

fn spd(d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(-1.0..1.0f64, d * d).prop_map(move |a| {
        (0..d).map(|i| (0..d).map(|j| (0..d).map(|l| a[i * d + l] * a[j * d + l]).sum::<f64>() + if i == j { 0.3 } else { 0.0 }).collect()).collect()
    })
}

fn gaussian(d: usize) -> impl Strategy<Value = Gaussian> {
    (prop::collection::vec(-3.0..3.0f64, d), spd(d)).prop_map(|(m, c)| Gaussian::from_vecs(&m, &c).unwrap())
}

fn mixture(k: usize, d: usize) -> impl Strategy<Value = GaussianMixture> {
    (prop::collection::vec(0.2..1.0f64, k), prop::collection::vec(gaussian(d), k)).prop_map(|(w, g)| {
        let s: f64 = w.iter().sum();
        GaussianMixture::new(w.iter().map(|x| x / s).collect(), g).unwrap()
    })
}

fn iso(k: usize, d: usize) -> impl Strategy<Value = IsoMixture<f64>> {
    (prop::collection::vec(0.1..1.0f64, k), prop::collection::vec(-2.0..2.0f64, k * d), prop::collection::vec(-1.0..1.0f64, k * d * d)).prop_map(
        move |(w, m, s)| {
            let t: f64 = w.iter().sum();
            IsoMixture {
                weights: w.iter().map(|x| x / t).collect(),
                means: (0..k).map(|i| m[i * d..(i + 1) * d].to_vec()).collect(),
                sigmas: (0..k).map(|i| (0..d).map(|a| (0..d).map(|b| 0.5 * (s[i * d * d + a * d + b] + s[i * d * d + b * d + a])).collect()).collect()).collect(),
            }
        },
    )
}

fn small_rat() -> impl Strategy<Value = Rational> {
    (-6i64..=6, 1i64..=3).prop_map(|(n, d)| rat(n, d))
}

fn rat_iso(k: usize, d: usize) -> impl Strategy<Value = IsoMixture<Rational>> {
    (prop::collection::vec(1i64..=4, k), prop::collection::vec(small_rat(), k * d), prop::collection::vec(small_rat(), k * d * d)).prop_map(
        move |(w, m, s)| {
            let t: i64 = w.iter().sum();
            IsoMixture {
                weights: w.iter().map(|&x| rat(x, t)).collect(),
                means: (0..k).map(|i| m[i * d..(i + 1) * d].to_vec()).collect(),
                sigmas: (0..k).map(|i| (0..d).map(|a| (0..d).map(|b| s[i * d * d + a.min(b) * d + a.max(b)].clone()).collect()).collect()).collect(),
            }
        },
    )
}

fn points(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, d), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn multiplication_commutes(f in poly(2, 3), g in poly(2, 2)) {
        let a = f.checked_mul(&g).unwrap();
        let b = g.checked_mul(&f).unwrap();
        prop_assert!(a.checked_sub(&b).unwrap().norm_sq() <= 1e-18 * (1.0 + a.norm_sq()));
    }

    #[test]
    fn product_evaluates_pointwise(f in poly(2, 2), g in poly(2, 2), x in -2.0..2.0f64, y in -2.0..2.0f64) {
        let p = f.checked_mul(&g).unwrap().eval(&[x, y]).unwrap();
        let q = f.eval(&[x, y]).unwrap() * g.eval(&[x, y]).unwrap();
        prop_assert!((p - q).abs() <= 1e-9 * (1.0 + q.abs()));
    }

    #[test]
    fn sum_and_pairing_bounds(fs in prop::collection::vec(poly(2, 3), 1..6), a in poly(2, 2), b in poly(2, 2), c in poly(2, 2), d in poly(2, 2)) {
        prop_assert!(sum_bound(&fs).unwrap().holds(1e-12));
        prop_assert!(dot_product_pairing(&a, &b, &c, &d).unwrap().holds(1e-12));
    }

    #[test]
    fn hermite_recurrence_matches_three_term_rule(m in 2u32..14) {
        // He_m = x He_{m-1} - (m-1) He_{m-2}
        let (a, b, c) = (hermite_univariate(m).coeffs, hermite_univariate(m - 1).coeffs, hermite_univariate(m - 2).coeffs);
        for i in 0..=m as usize {
            let shifted = if i >= 1 { b.get(i - 1).cloned().unwrap_or_default() } else { BigInt::zero() };
            let lower = c.get(i).cloned().unwrap_or_default() * BigInt::from(m - 1);
            prop_assert_eq!(&a[i], &(shifted - lower));
        }
        prop_assert!(a[m as usize].is_one());
    }

    #[test]
    fn series_coefficients_are_scaled_hermite(mix in rat_iso(2, 2), m in 0u32..6) {
        let series = FormalSeries::mixture(&mix, 6, 16).unwrap();
        let fact = (1..=m as i64).fold(Rational::one(), |a, b| a * rat(b, 1));
        let h = mixture_hermite_closed_form(&mix, m).unwrap().polynomial;
        prop_assert_eq!(&series.coeffs[m as usize], &h.scale(&(Rational::one() / fact)));
    }

    #[test]
    fn tv_is_symmetric_and_bounded(g1 in gaussian(2), g2 in gaussian(2), seed in 0u64..100) {
        let m = TvMethod::MonteCarlo { n: 4000, seed };
        let a = tv_distance(&g1, &g2, m).unwrap();
        let b = tv_distance(&g2, &g1, m).unwrap();
        prop_assert!((0.0..=1.0).contains(&a.value));
        prop_assert!((a.value - b.value).abs() <= 4.0 * (a.stderr + b.stderr) + 1e-9);
    }

    #[test]
    fn closed_form_tv_is_a_metric_on_the_line(m in prop::collection::vec(-3.0..3.0f64, 3), v in prop::collection::vec(0.2..3.0f64, 3)) {
        let g: Vec<Gaussian> = (0..3).map(|i| Gaussian::from_vecs(&[m[i]], &[vec![v[i]]]).unwrap()).collect();
        let tv = |a: usize, b: usize| tv_distance(&g[a], &g[b], TvMethod::Closed1d).unwrap().value;
        prop_assert!(tv(0, 0) <= 1e-12);
        prop_assert!((tv(0, 1) - tv(1, 0)).abs() <= 1e-9);
        prop_assert!(tv(0, 2) <= tv(0, 1) + tv(1, 2) + 1e-9);
    }

    #[test]
    fn flatten_round_trips(c in spd(3)) {
        let m = DMatrix::from_fn(3, 3, |i, j| c[i][j]);
        let back = unflatten(&flatten(&m).unwrap()).unwrap();
        prop_assert!((back - m).norm() <= 1e-12);
    }

    #[test]
    fn robust_mean_is_translation_equivariant(x in points(200, 3), shift in prop::collection::vec(-50.0..50.0f64, 3)) {
        let moved: Vec<Vec<f64>> = x.iter().map(|p| p.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
        let a = robust_mean_bounded_cov(&x, 0.1, 10.0).unwrap().value;
        let b = robust_mean_bounded_cov(&moved, 0.1, 10.0).unwrap().value;
        for j in 0..3 {
            prop_assert!((b[j] - a[j] - shift[j]).abs() <= 1e-6 * (1.0 + shift[j].abs()));
        }
    }

    #[test]
    fn corruption_replaces_exactly_floor_eps_n(x in points(150, 2), eps in 0.0..0.49f64, seed in 0u64..1000) {
        let plan = CorruptionPlan { epsilon: eps, adversary: Adversary::PointMass { distance: 40.0, direction: None }, seed };
        let t = corrupt_tracked(&x, &plan).unwrap();
        prop_assert_eq!(t.points.len(), x.len());
        prop_assert_eq!(t.origin.iter().filter(|o| o.is_none()).count(), replacement_count(x.len(), eps));
        prop_assert_eq!(replacement_count(x.len(), eps), (eps * x.len() as f64 + 1e-9).floor() as usize);
        for (p, o) in t.points.iter().zip(&t.origin) {
            if let Some(i) = o {
                prop_assert_eq!(p, &x[*i]);
            }
        }
    }

    #[test]
    fn dirac_satisfies_its_own_root(p in prop::collection::vec(-2.0..2.0f64, 2)) {
        let mut sys = ConstraintSystem::with_vars(2, 2).unwrap();
        let x = FloatPoly::var(2, 0);
        let y = FloatPoly::var(2, 1);
        let r = p[0] * p[0] + p[1] * p[1];
        sys.add_equality(x.checked_mul(&x).unwrap().checked_add(&y.checked_mul(&y).unwrap()).unwrap().checked_sub(&FloatPoly::constant(2, r)).unwrap()).unwrap();
        sys.add_inequality(x.checked_sub(&FloatPoly::constant(2, p[0] - 0.5)).unwrap()).unwrap();
        prop_assert!(dirac(&p, 2).residuals(&sys).unwrap().max() <= 1e-9);
    }

    #[test]
    fn rounding_leaves_a_clean_gap(ps in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 2), 1..5), close in 0usize..3, tiny in 1e-9..1e-5f64) {
        let mut ps = ps;
        if close > 0 {
            let mut q = ps[0].clone();
            q[0] += tiny;
            ps.push(q);
        }
        let r = reduce_to_separated(&ps, 1e-2, 2.0);
        let k = ps.len();
        for i in 0..k {
            prop_assert!(r.representative[i] <= i);
            prop_assert_eq!(r.representative[r.representative[i]], r.representative[i]);
        }
        let dist = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        for i in 0..k {
            for j in i + 1..k {
                let d = dist(&r.params[i], &r.params[j]);
                prop_assert!(d == 0.0 || d > r.gap.1, "distance {d} inside or below gap {:?}", r.gap);
            }
        }
    }

    #[test]
    fn parameter_error_is_a_label_free_distance(a in iso(2, 2), b in iso(2, 2)) {
        let swapped = IsoMixture {
            weights: b.weights.iter().rev().cloned().collect(),
            means: b.means.iter().rev().cloned().collect(),
            sigmas: b.sigmas.iter().rev().cloned().collect(),
        };
        prop_assert!(parameter_error(&a, &a) <= 1e-12);
        prop_assert!((parameter_error(&a, &b) - parameter_error(&a, &swapped)).abs() <= 1e-12);
        prop_assert!((parameter_error(&a, &b) - parameter_error(&b, &a)).abs() <= 1e-12);
    }

    #[test]
    fn misclassification_ignores_cluster_names(labels in prop::collection::vec(0usize..3, 30), noise in prop::collection::vec(0usize..3, 30)) {
        let mut cand = vec![Vec::new(); 3];
        for (i, (&l, &z)) in labels.iter().zip(&noise).enumerate() {
            cand[if z == 0 { (l + 1) % 3 } else { l }].push(i);
        }
        let renamed = vec![cand[2].clone(), cand[0].clone(), cand[1].clone()];
        let a = misclassification(&cand, &labels, None, 3);
        prop_assert!((a - misclassification(&renamed, &labels, None, 3)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn reassignment_covers_every_row(x in points(80, 2), g in prop::collection::vec(gaussian(2), 1..4)) {
        let r = ml_reassign(&x, &g).unwrap();
        prop_assert_eq!(r.labels.len(), x.len());
        let mut seen = vec![false; x.len()];
        for (c, part) in r.parts.iter().enumerate() {
            for &i in part {
                prop_assert!(!seen[i]);
                seen[i] = true;
                prop_assert_eq!(r.labels[i], c);
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn mixture_json_round_trips(m in mixture(3, 2)) {
        let text = serde_json::to_string(&MixtureJson::from_mixture(&m)).unwrap();
        let back = serde_json::from_str::<MixtureJson>(&text).unwrap().to_mixture().unwrap();
        prop_assert_eq!(back, m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn permuted_error_ignores_component_order(t in mixture(2, 2), e in mixture(2, 2)) {
        let swapped = GaussianMixture::new(e.weights.iter().rev().cloned().collect(), e.components.iter().rev().cloned().collect()).unwrap();
        let a = permuted_tv_error(&t, &e, 2000, 3).unwrap();
        let b = permuted_tv_error(&t, &swapped, 2000, 3).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!(permuted_tv_error(&t, &t, 2000, 3).unwrap() <= 1e-12);
    }
}
