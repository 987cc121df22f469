use serde::Serialize;

/// Result of collapsing nearly equal parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rounding {
    pub params: Vec<Vec<f64>>,
    /// Representative index of each input parameter.
    pub representative: Vec<usize>,
    /// The exponent `C`; no pairwise distance falls in `[eps'^(f C), eps'^C]`.
    pub exponent: f64,
    pub gap: (f64, f64),
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Picks the first scale `C = f^j` whose interval `[eps'^(f C), eps'^C]` holds no pairwise
/// distance (at most `k^2` distances, so one of the first `k^2 + 1` scales is empty), then
/// merges every connected component of the graph with edges shorter than `eps'^(f C)` into
/// its lowest-index member.
pub fn reduce_to_separated(params: &[Vec<f64>], eps_prime: f64, f: f64) -> Rounding {
    assert!(eps_prime > 0.0 && eps_prime < 1.0 && f > 1.0, "need 0 < eps' < 1 and f > 1");
    let k = params.len();
    let mut dists = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let d = dist(&params[i], &params[j]);
            if d > 0.0 {
                dists.push(d);
            }
        }
    }
    let mut c = 1.0;
    for _ in 0..=dists.len() {
        let (lo, hi) = (eps_prime.powf(f * c), eps_prime.powf(c));
        if !dists.iter().any(|&d| d >= lo && d <= hi) {
            break;
        }
        c *= f;
    }
    let lo = eps_prime.powf(f * c);
    let mut rep: Vec<usize> = (0..k).collect();
    fn find(rep: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while rep[r] != r {
            r = rep[r];
        }
        rep[i] = r;
        r
    }
    for i in 0..k {
        for j in i + 1..k {
            if dist(&params[i], &params[j]) < lo {
                let (a, b) = (find(&mut rep, i), find(&mut rep, j));
                let (a, b) = (a.min(b), a.max(b));
                rep[b] = a;
            }
        }
    }
    let representative: Vec<usize> = (0..k).map(|i| find(&mut rep, i)).collect();
    Rounding {
        params: representative.iter().map(|&r| params[r].clone()).collect(),
        representative,
        exponent: c,
        gap: (lo, eps_prime.powf(c)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_is_identity() {
        let p = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]];
        let r = reduce_to_separated(&p, 0.1, 2.0);
        assert_eq!(r.params, p);
    }

    #[test]
    fn tiny_gap_collapses() {
        let p = vec![vec![0.0], vec![1e-3], vec![1.0]];
        let r = reduce_to_separated(&p, 0.1, 2.0);
        assert_eq!(r.exponent, 1.0);
        assert_eq!(r.representative, vec![0, 0, 2]);
        assert_eq!(r.params[1], vec![0.0]);
    }
}
