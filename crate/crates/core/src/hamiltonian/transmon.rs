//! Single-junction transmon in the charge basis. Used for labeling references
//! and as an independent check of the two-island solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, invalid, Error, Result};

use super::matrix::MIN_CUTOFF;

/// `H = 4 E_C (n - n_g)^2 - (E_J / 2) (|n><n+1| + h.c.)`, `|n| <= cutoff`.
pub fn transmon_hamiltonian(ej: f64, ec: f64, ng: f64, cutoff: usize) -> Result<DMatrix<f64>> {
    ensure_finite("ej", ej)?;
    ensure_finite("ec", ec)?;
    ensure_finite("ng", ng)?;
    if ec <= 0.0 {
        return Err(invalid("ec", format!("must be positive, got {ec}")));
    }
    if ej < 0.0 {
        return Err(invalid("ej", format!("must be non-negative, got {ej}")));
    }
    if cutoff < MIN_CUTOFF {
        return Err(Error::CutoffTooSmall {
            cutoff,
            min: MIN_CUTOFF,
        });
    }
    let w = 2 * cutoff + 1;
    let c = cutoff as f64;
    Ok(DMatrix::from_fn(w, w, |i, j| {
        if i == j {
            let q = i as f64 - c - ng;
            4.0 * ec * q * q
        } else if i.abs_diff(j) == 1 {
            -0.5 * ej
        } else {
            0.0
        }
    }))
}

/// Lowest `k` levels, ascending.
pub fn transmon_levels(ej: f64, ec: f64, ng: f64, cutoff: usize, k: usize) -> Result<Vec<f64>> {
    let h = transmon_hamiltonian(ej, ec, ng, cutoff)?;
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev.truncate(k);
    Ok(ev)
}

/// Lowest `k` eigenpairs. Each vector's sign is fixed so that its overlap with
/// the matching harmonic-oscillator state (a Hermite function in `n - n_g`) is
/// positive.
pub fn transmon_states(
    ej: f64,
    ec: f64,
    ng: f64,
    cutoff: usize,
    k: usize,
) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let h = transmon_hamiltonian(ej, ec, ng, cutoff)?;
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order.truncate(k);
    // charge-number variance of the harmonic ground state
    let var = 0.5 * (ej / (8.0 * ec)).sqrt().max(1e-3);
    let scale = 1.0 / (2.0 * var).sqrt();
    let w = 2 * cutoff + 1;
    let mut vals = Vec::with_capacity(k);
    let mut vecs = Vec::with_capacity(k);
    for (p, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        let mut ov = 0.0;
        for idx in 0..w {
            let x = (idx as f64 - cutoff as f64 - ng) * scale;
            ov += v[idx] * hermite(p, x) * (-0.5 * x * x).exp();
        }
        if ov < 0.0 {
            v.neg_mut();
        }
        vals.push(eig.eigenvalues[i]);
        vecs.push(v);
    }
    Ok((vals, vecs))
}

/// Physicists' Hermite polynomial `H_p(x)`.
pub(crate) fn hermite(p: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, 2.0 * x);
    if p == 0 {
        return a;
    }
    for k in 1..p {
        let c = 2.0 * x * b - 2.0 * k as f64 * a;
        a = b;
        b = c;
    }
    b
}

/// Peak-to-peak charge dispersion of level `level`: the extrema sit at
/// `n_g = 0` and `n_g = 1/2`.
pub fn transmon_dispersion(ej: f64, ec: f64, level: usize, cutoff: usize) -> Result<f64> {
    let a = transmon_levels(ej, ec, 0.0, cutoff, level + 1)?;
    let b = transmon_levels(ej, ec, 0.5, cutoff, level + 1)?;
    Ok((a[level] - b[level]).abs())
}
