use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pseudoexp::{valid_rows, GuessLimits, ParameterGuess};

/// A finite grid of guesses for the coefficient rows and weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuessNet {
    pub k: usize,
    pub grid_step: f64,
    pub weight_step: f64,
    pub limits: GuessLimits,
    /// Component labels; equal labels share a row. `None` enumerates every pattern.
    pub mean_pattern: Option<Vec<usize>>,
    pub cov_pattern: Option<Vec<usize>>,
    pub cap: usize,
}

/// Grid values `j * step` with `|j * step| <= radius`.
pub fn axis(step: f64, radius: f64) -> Vec<f64> {
    let m = (radius / step + 1e-9).floor() as i64;
    (-m..=m).map(|j| j as f64 * step).collect()
}

/// Grid vectors in `R^k` of norm at most `radius`.
pub fn lattice_rows(k: usize, step: f64, radius: f64) -> Vec<Vec<f64>> {
    let ax = axis(step, radius);
    let mut rows: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..k {
        rows = rows
            .into_iter()
            .flat_map(|r| {
                ax.iter().map(move |&v| {
                    let mut r2 = r.clone();
                    r2.push(v);
                    r2
                })
            })
            .collect();
    }
    rows.retain(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt() <= radius + 1e-9);
    rows
}

/// Weight vectors on multiples of `step` summing to one, each at least `w_min / 2`.
pub fn weight_grid(k: usize, step: f64, w_min: f64) -> Vec<Vec<f64>> {
    let units = (1.0 / step).round() as i64;
    if ((units as f64) * step - 1.0).abs() > 1e-9 {
        return vec![];
    }
    let min_units = (w_min / 2.0 / step - 1e-9).ceil().max(0.0) as i64;
    let mut out = Vec::new();
    fn rec(k: usize, left: i64, min_units: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if k == 1 {
            if left >= min_units {
                cur.push(left);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        for u in min_units..=left {
            cur.push(u);
            rec(k - 1, left - u, min_units, cur, out);
            cur.pop();
        }
    }
    rec(k, units, min_units.max(if w_min > 0.0 { 1 } else { 0 }), &mut vec![], &mut out);
    out.into_iter().map(|v| v.into_iter().map(|u| u as f64 * step).collect()).collect()
}

/// Canonical set partitions of `0..k` as label vectors (restricted growth strings).
pub fn set_partitions(k: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        let next = cur.iter().max().map(|m| m + 1).unwrap_or(0);
        for l in 0..=next {
            cur.push(l);
            rec(k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        rec(k, &mut vec![], &mut out);
    }
    out
}

fn rows_for_pattern(pattern: &[usize], rows: &[Vec<f64>], lim: &GuessLimits, cap: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    let labels = pattern.iter().max().map(|m| m + 1).unwrap_or(0);
    let mut assigns: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..labels {
        let mut next = Vec::new();
        for a in &assigns {
            for r in 0..rows.len() {
                if a.contains(&r) {
                    continue;
                }
                let mut b = a.clone();
                b.push(r);
                let chosen: Vec<Vec<f64>> = b.iter().map(|&i| rows[i].clone()).collect();
                if valid_rows(&chosen, lim) {
                    next.push(b);
                }
                if next.len() > cap {
                    return Err(Error::SizeCap { size: next.len(), cap });
                }
            }
        }
        assigns = next;
    }
    Ok(assigns.into_iter().map(|a| pattern.iter().map(|&l| rows[a[l]].clone()).collect()).collect())
}

/// Every valid guess of the net in a fixed order: weights, then mean rows, then covariance rows.
pub fn enumerate_guesses(net: &GuessNet) -> Result<Vec<ParameterGuess>> {
    if net.k == 0 || net.grid_step <= 0.0 || net.weight_step <= 0.0 {
        return Err(Error::InvalidArgument("net needs k >= 1 and positive steps".into()));
    }
    let rows = lattice_rows(net.k, net.grid_step, 2.0 * net.limits.delta);
    let pats = |p: &Option<Vec<usize>>| p.clone().map(|v| vec![v]).unwrap_or_else(|| set_partitions(net.k));
    let mut means = Vec::new();
    for p in pats(&net.mean_pattern) {
        means.extend(rows_for_pattern(&p, &rows, &net.limits, net.cap)?);
    }
    let mut covs = Vec::new();
    for p in pats(&net.cov_pattern) {
        covs.extend(rows_for_pattern(&p, &rows, &net.limits, net.cap)?);
    }
    let weights = weight_grid(net.k, net.weight_step, net.limits.w_min);
    let total = weights.len().saturating_mul(means.len()).saturating_mul(covs.len());
    if total > net.cap {
        return Err(Error::SizeCap { size: total, cap: net.cap });
    }
    if total == 0 {
        return Err(Error::EmptyInput("guess net is empty"));
    }
    let mut out = Vec::with_capacity(total);
    for w in &weights {
        for m in &means {
            for c in &covs {
                out.push(ParameterGuess { weights: w.clone(), mean_coeffs: m.clone(), cov_coeffs: c.clone() });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partitions_of_three() {
        assert_eq!(set_partitions(3).len(), 5);
        assert_eq!(set_partitions(1), vec![vec![0]]);
    }

    #[test]
    fn k1_net() {
        let net = GuessNet {
            k: 1,
            grid_step: 0.5,
            weight_step: 1.0,
            limits: GuessLimits { delta: 1.0, c: 1.0, w_min: 0.5 },
            mean_pattern: None,
            cov_pattern: None,
            cap: 10_000,
        };
        let g = enumerate_guesses(&net).unwrap();
        assert_eq!(g.len(), 9 * 9);
        assert!(g.iter().all(|x| x.weights == vec![1.0]));
    }
}
