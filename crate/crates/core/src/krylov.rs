//! Restarted GMRES with right preconditioning.

use crate::{Error, Result};

pub(crate) struct GmresOutcome {
    pub solution: Vec<f64>,
    /// Relative residual after every inner iteration, starting with the initial one.
    pub history: Vec<f64>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` to relative residual `tol`, with `A` applied by `apply` and
/// right preconditioner `x = M⁻¹ y` applied by `precond`.
pub(crate) fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<GmresOutcome> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(GmresOutcome { solution: x, history: vec![0.0], iterations: 0 });
    }
    let mut history = vec![1.0];
    let mut iterations = 0;
    loop {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm(&r);
        let rel = beta / bnorm;
        if rel <= tol {
            return Ok(GmresOutcome { solution: x, history, iterations });
        }
        if iterations >= max_iter {
            return Err(Error::Stagnation { iterations, residual: rel });
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            let mut w = apply(&precond(&v[k]));
            for (i, vi) in v.iter().enumerate() {
                h[i][k] = dot(&w, vi);
                w.iter_mut().zip(vi).for_each(|(w, v)| *w -= h[i][k] * v);
            }
            h[k + 1][k] = norm(&w);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k_used = k + 1;
            let rel = g[k + 1].abs() / bnorm;
            history.push(rel.min(*history.last().unwrap_or(&1.0)));
            let wn = norm(&w);
            if rel <= tol || iterations >= max_iter || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut combo = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            combo.iter_mut().zip(&v[j]).for_each(|(c, v)| *c += yj * v);
        }
        x.iter_mut().zip(precond(&combo)).for_each(|(x, d)| *x += d);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_tridiagonal() {
        let n = 200;
        let apply = |x: &[f64]| {
            (0..n)
                .map(|i| {
                    let l = if i > 0 { x[i - 1] } else { 0.0 };
                    let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                    4.0 * x[i] - 1.3 * l - 0.7 * r
                })
                .collect::<Vec<_>>()
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let out = gmres(apply, |v: &[f64]| v.iter().map(|x| x / 4.0).collect(), &b, 1e-10, 20, 1000).unwrap();
        let r: Vec<f64> = apply(&out.solution).iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!(norm(&r) / norm(&b) < 1e-9);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
