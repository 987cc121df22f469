//! Strong contamination: an adversary replaces `floor(eps n)` rows and may reorder.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::hermite_features;
use crate::poly::monomials_of_degree;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Adversary {
    /// Every replaced row becomes the same spike at `mean + distance * direction`.
    PointMass { distance: f64, direction: Option<Vec<f64>> },
    /// The rows with the largest norms are moved by `+shift * e1`.
    ShiftedCluster { shift: f64 },
    /// A tight fake component `N(mean + distance * u, spread^2 I)` with seeded `u`.
    DensityDecoy { distance: f64, spread: f64 },
    /// A single point of norm at most `radius` chosen to push the empirical degree-`m`
    /// Hermite coefficients furthest; it replaces the rows that pull the other way most.
    WorstMoment { m: u32, radius: f64, candidates: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionPlan {
    pub epsilon: f64,
    pub adversary: Adversary,
    pub seed: u64,
}

pub fn replacement_count(n: usize, eps: f64) -> usize {
    (eps * n as f64 + 1e-9).floor() as usize
}

fn mean_of(samples: &[Vec<f64>]) -> Vec<f64> {
    let d = samples[0].len();
    let mut m = vec![0.0; d];
    for x in samples {
        for (a, b) in m.iter_mut().zip(x) {
            *a += b;
        }
    }
    m.iter().map(|a| a / samples.len() as f64).collect()
}

fn unit_or_e1(dir: Option<&Vec<f64>>, d: usize) -> Result<Vec<f64>> {
    match dir {
        None => {
            let mut e = vec![0.0; d];
            e[0] = 1.0;
            Ok(e)
        }
        Some(v) => {
            if v.len() != d {
                return Err(Error::DimensionMismatch { left: v.len(), right: d });
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                return Err(Error::InvalidArgument("zero direction".into()));
            }
            Ok(v.iter().map(|x| x / n).collect())
        }
    }
}

fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Corrupted rows with their provenance: `origin[i]` is the input row that output row `i`
/// reproduces unchanged, or `None` for a row the adversary wrote.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackedCorruption {
    pub points: Vec<Vec<f64>>,
    pub origin: Vec<Option<usize>>,
}

/// Applies the plan. Deterministic in `(samples, plan)`; output order is shuffled.
pub fn corrupt(samples: &[Vec<f64>], plan: &CorruptionPlan) -> Result<Vec<Vec<f64>>> {
    Ok(corrupt_tracked(samples, plan)?.points)
}

/// `corrupt` that also reports which output rows are untouched inputs.
pub fn corrupt_tracked(samples: &[Vec<f64>], plan: &CorruptionPlan) -> Result<TrackedCorruption> {
    if !(0.0..0.5).contains(&plan.epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon {} outside [0, 1/2)", plan.epsilon)));
    }
    let n = samples.len();
    if n == 0 {
        return Err(Error::EmptyInput("no samples"));
    }
    let d = samples[0].len();
    let r = replacement_count(n, plan.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut out = samples.to_vec();
    if r > 0 {
        match &plan.adversary {
            Adversary::PointMass { distance, direction } => {
                let u = unit_or_e1(direction.as_ref(), d)?;
                let c = mean_of(samples);
                let spike: Vec<f64> = c.iter().zip(&u).map(|(a, b)| a + distance * b).collect();
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng);
                for &i in &idx[..r] {
                    out[i] = spike.clone();
                }
            }
            Adversary::ShiftedCluster { shift } => {
                let mut idx: Vec<usize> = (0..n).collect();
                let norm = |x: &Vec<f64>| x.iter().map(|v| v * v).sum::<f64>();
                idx.sort_by(|&a, &b| norm(&samples[b]).partial_cmp(&norm(&samples[a])).unwrap().then(a.cmp(&b)));
                for &i in &idx[..r] {
                    out[i][0] += shift;
                }
            }
            Adversary::DensityDecoy { distance, spread } => {
                let u = random_unit(&mut rng, d);
                let c = mean_of(samples);
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng);
                for &i in &idx[..r] {
                    out[i] = (0..d).map(|j| c[j] + distance * u[j] + spread * rng.sample::<f64, _>(StandardNormal)).collect();
                }
            }
            Adversary::WorstMoment { m, radius, candidates } => {
                worst_moment(&mut out, samples, *m, *radius, *candidates, r, &mut rng)?;
            }
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let origin = perm.iter().map(|&i| if out[i] == samples[i] { Some(i) } else { None }).collect();
    let points = perm.iter().map(|&i| out[i].clone()).collect();
    Ok(TrackedCorruption { points, origin })
}

fn worst_moment(
    out: &mut [Vec<f64>],
    samples: &[Vec<f64>],
    m: u32,
    radius: f64,
    candidates: usize,
    r: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let d = samples[0].len();
    let monos = monomials_of_degree(d, m);
    let feats: Vec<Vec<f64>> = samples.iter().map(|z| hermite_features(z, m, &monos)).collect();
    let dim = monos.len();
    let mut mean = vec![0.0; dim];
    for f in &feats {
        for (a, b) in mean.iter_mut().zip(f) {
            *a += b / feats.len() as f64;
        }
    }
    let mut best = (f64::NEG_INFINITY, vec![0.0; d], vec![0.0; dim]);
    let mut dirs: Vec<Vec<f64>> = (0..d)
        .flat_map(|i| {
            [1.0, -1.0].into_iter().map(move |s| {
                let mut e = vec![0.0; d];
                e[i] = s;
                e
            })
        })
        .collect();
    dirs.extend((0..candidates).map(|_| random_unit(rng, d)));
    for u in &dirs {
        let z: Vec<f64> = u.iter().map(|x| x * radius).collect();
        let f = hermite_features(&z, m, &monos);
        let gap: Vec<f64> = f.iter().zip(&mean).map(|(a, b)| a - b).collect();
        let g = gap.iter().map(|x| x * x).sum::<f64>();
        if g > best.0 {
            best = (g, z, gap);
        }
    }
    let (_, z, g) = best;
    // drop the rows whose features lean furthest against the push
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    let score = |i: usize| feats[i].iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
    idx.sort_by(|&a, &b| score(a).partial_cmp(&score(b)).unwrap().then(a.cmp(&b)));
    for &i in &idx[..r] {
        out[i] = z.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64 * 0.01, -(i as f64) * 0.02]).collect()
    }

    fn sorted(mut v: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn zero_eps_is_a_permutation() {
        let s = grid(50);
        let plan = CorruptionPlan { epsilon: 0.0, adversary: Adversary::ShiftedCluster { shift: 5.0 }, seed: 1 };
        assert_eq!(sorted(corrupt(&s, &plan).unwrap()), sorted(s));
    }

    #[test]
    fn point_mass_count() {
        let s = grid(1000);
        let plan = CorruptionPlan { epsilon: 0.1, adversary: Adversary::PointMass { distance: 100.0, direction: None }, seed: 2 };
        let out = corrupt(&s, &plan).unwrap();
        let c = mean_of(&s);
        let spike = vec![c[0] + 100.0, c[1]];
        assert_eq!(out.iter().filter(|x| **x == spike).count(), 100);
    }

    #[test]
    fn shifted_cluster_moves_largest() {
        let s = grid(100);
        let plan = CorruptionPlan { epsilon: 0.05, adversary: Adversary::ShiftedCluster { shift: 10.0 }, seed: 3 };
        let out = sorted(corrupt(&s, &plan).unwrap());
        let mut expect = s.clone();
        for x in expect.iter_mut().skip(95) {
            x[0] += 10.0;
        }
        assert_eq!(out, sorted(expect));
    }

    #[test]
    fn every_adversary_replaces_exactly() {
        let s = grid(200);
        let advs = [
            Adversary::PointMass { distance: 3.0, direction: Some(vec![1.0, 1.0]) },
            Adversary::DensityDecoy { distance: 20.0, spread: 0.1 },
            Adversary::WorstMoment { m: 3, radius: 4.0, candidates: 16 },
        ];
        for a in advs {
            let plan = CorruptionPlan { epsilon: 0.1, adversary: a, seed: 9 };
            let out = corrupt(&s, &plan).unwrap();
            let orig = sorted(s.clone());
            let kept = out.iter().filter(|x| orig.binary_search_by(|y| y.partial_cmp(x).unwrap()).is_ok()).count();
            assert_eq!(kept, 180);
            assert_eq!(out, corrupt(&s, &plan).unwrap());
        }
    }

    #[test]
    fn eps_range() {
        let plan = CorruptionPlan { epsilon: 0.5, adversary: Adversary::ShiftedCluster { shift: 1.0 }, seed: 0 };
        assert!(corrupt(&grid(10), &plan).is_err());
    }
}
