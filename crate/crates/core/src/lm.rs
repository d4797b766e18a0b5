//! Levenberg-Marquardt least squares with a finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when the relative cost decrease of an accepted step is below this.
    pub ftol: f64,
    /// Stop when the relative step length is below this.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: 1e-12,
            xtol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub x: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sumsq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Forward-difference Jacobian of `f` at `x` (rows: residuals).
pub fn jacobian<F>(f: &mut F, x: &[f64], r0: &[f64], steps: &[f64]) -> Option<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    let m = r0.len();
    let n = x.len();
    let mut j = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for c in 0..n {
        let h = steps[c];
        xp[c] = x[c] + h;
        let rp = f(&xp)?;
        xp[c] = x[c];
        for i in 0..m {
            j[(i, c)] = (rp[i] - r0[i]) / h;
        }
    }
    Some(j)
}

fn default_steps(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| 1e-7 * v.abs().max(1e-3)).collect()
}

/// Minimizes `sum f(x)^2`. `f` returns `None` where the model is undefined;
/// such trial points are treated as rejected steps.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: LmOptions) -> Option<LmResult>
where
    F: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = f(&x)?;
    let mut cost = sumsq(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        let j = jacobian(&mut f, &x, &r, &default_steps(&x))?;
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * DVector::from_column_slice(&r);
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let xt: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if let Some(rt) = f(&xt) {
                let ct = sumsq(&rt);
                if ct.is_finite() && ct < cost {
                    let rel = (cost - ct) / cost.max(f64::MIN_POSITIVE);
                    let xs = step.norm() / (DVector::from_column_slice(&x).norm() + 1e-12);
                    x = xt;
                    r = rt;
                    cost = ct;
                    lambda = (lambda * 0.3).max(1e-12);
                    accepted = true;
                    if rel < opts.ftol || xs < opts.xtol {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
        if !accepted {
            // no downhill step left: a (local) minimum to working precision
            converged = true;
        }
        if converged {
            break;
        }
    }
    Some(LmResult {
        x,
        cost,
        iterations: it,
        converged,
    })
}
