//! Levenberg-Marquardt on a residual vector with a central-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
pub struct LmConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub step: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig { max_iter: 300, tol: 1e-24, step: 1e-6 }
    }
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Minimizes `||f(x)||^2` from `x0`; returns the final point and cost.
pub fn minimize<F: Fn(&[f64]) -> Vec<f64>>(f: F, x0: &[f64], cfg: &LmConfig) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = f(&x);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    for _ in 0..cfg.max_iter {
        if c <= cfg.tol || !c.is_finite() {
            break;
        }
        let m = r.len();
        let mut jac = DMatrix::zeros(m, n);
        for j in 0..n {
            let h = cfg.step * (1.0 + x[j].abs());
            let mut xp = x.clone();
            xp[j] += h;
            let rp = f(&xp);
            xp[j] -= 2.0 * h;
            let rm = f(&xp);
            for i in 0..m {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &rv;
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * (1.0 + jtj[(i, i)]);
            }
            let Some(ch) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let dx = ch.solve(&(-&g));
            let xn: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + b).collect();
            let rn = f(&xn);
            let cn = cost(&rn);
            if cn.is_finite() && cn < c {
                let rel = (c - cn) / c.max(1e-300);
                x = xn;
                r = rn;
                c = cn;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-14 {
                    return (x, c);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (x, c)
}
