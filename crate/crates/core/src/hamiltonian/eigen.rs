//! Lowest eigenpairs of the banded charge-basis Hamiltonian.
//!
//! Eigenvalues come from the dense symmetric solver; eigenvectors for the few
//! requested levels are obtained by shifted inverse iteration with a banded LU,
//! followed by a Rayleigh-Ritz pass that resolves (near-)degenerate pairs.

use nalgebra::{DMatrix, DVector};

use super::matrix::BandedHamiltonian;

/// Banded LU factorization with partial pivoting.
struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    w: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn idx(&self, i: usize, j: usize) -> usize {
        // row i stores columns i - kl ..= i + kl + ku
        i * self.w + (j + self.kl - i)
    }

    fn factor(h: &BandedHamiltonian, shift: f64) -> Self {
        let n = h.dim();
        let kl = h.bandwidth();
        let ku = kl;
        let w = 2 * kl + ku + 1;
        let mut lu = BandLu {
            n,
            kl,
            ku,
            w,
            a: vec![0.0; n * w],
            piv: vec![0; n],
        };
        let mut scale: f64 = 0.0;
        for i in 0..n {
            let k = lu.idx(i, i);
            lu.a[k] = h.diag[i] - shift;
            scale = scale.max(lu.a[k].abs());
        }
        h.for_each_hop(|i, j, v| {
            let a = lu.idx(i, j);
            let b = lu.idx(j, i);
            lu.a[a] = v;
            lu.a[b] = v;
        });
        let tiny = f64::EPSILON * scale.max(1.0);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.a[lu.idx(k, k)].abs();
            for r in k + 1..=last {
                let v = lu.a[lu.idx(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            lu.piv[k] = p;
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (x, y) = (lu.idx(k, j), lu.idx(p, j));
                    lu.a.swap(x, y);
                }
            }
            let d = lu.idx(k, k);
            if lu.a[d].abs() < tiny {
                lu.a[d] = if lu.a[d] < 0.0 { -tiny } else { tiny };
            }
            let pivot = lu.a[d];
            for r in k + 1..=last {
                let rk = lu.idx(r, k);
                let l = lu.a[rk] / pivot;
                lu.a[rk] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let (x, y) = (lu.idx(r, j), lu.idx(k, j));
                        lu.a[x] -= l * lu.a[y];
                    }
                }
            }
        }
        lu
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for r in k + 1..=(k + self.kl).min(n - 1) {
                b[r] -= self.a[self.idx(r, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + self.kl + self.ku).min(n - 1) {
                s -= self.a[self.idx(k, j)] * b[j];
            }
            b[k] = s / self.a[self.idx(k, k)];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Deterministic start vector with support on every basis state.
fn start_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03;
    (0..n)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            0.5 + (s >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

/// All eigenvalues of `h`, ascending.
pub fn eigenvalues(h: &BandedHamiltonian) -> Vec<f64> {
    let mut ev: Vec<f64> = h.to_dense().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// The `k` lowest eigenpairs as `(values, vectors)`, ascending. Vectors are
/// orthonormal columns.
pub fn lowest_eigenpairs(h: &BandedHamiltonian, k: usize) -> (Vec<f64>, Vec<DVector<f64>>) {
    let all = eigenvalues(h);
    let k = k.min(all.len());
    if k == 0 {
        return (Vec::new(), Vec::new());
    }
    let n = h.dim();
    let norm = all[0].abs().max(all[n - 1].abs()).max(1.0);
    let offset = 1e-10 * norm;

    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (i, &lam) in all.iter().take(k).enumerate() {
        let lu = BandLu::factor(h, lam - offset);
        let mut v = start_vector(n, i as u64 + 1);
        for _ in 0..4 {
            lu.solve(&mut v);
            for u in &vecs {
                let c = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
            }
            normalize(&mut v);
        }
        vecs.push(v);
    }

    // Rayleigh-Ritz over the converged subspace
    let mut hv = vec![vec![0.0; n]; k];
    for (v, out) in vecs.iter().zip(hv.iter_mut()) {
        h.apply(v, out);
    }
    let proj = DMatrix::from_fn(k, k, |a, b| 0.5 * (dot(&vecs[a], &hv[b]) + dot(&vecs[b], &hv[a])));
    let eig = proj.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut out_vecs = Vec::with_capacity(k);
    let mut ok = true;
    for (slot, &c) in order.iter().enumerate() {
        let mut v = vec![0.0; n];
        let mut w = vec![0.0; n];
        for (a, (va, ha)) in vecs.iter().zip(&hv).enumerate() {
            let coef = eig.eigenvectors[(a, c)];
            v.iter_mut().zip(va).for_each(|(x, y)| *x += coef * y);
            w.iter_mut().zip(ha).for_each(|(x, y)| *x += coef * y);
        }
        let lam = all[slot];
        let res: f64 = v.iter().zip(&w).map(|(x, y)| (y - lam * x).powi(2)).sum::<f64>().sqrt();
        if res > 1e-7 * norm {
            ok = false;
        }
        out_vecs.push(DVector::from_vec(v));
    }
    if !ok {
        log::debug!("inverse iteration did not converge; falling back to dense eigenvectors");
        return dense_lowest(h, k);
    }
    (all[..k].to_vec(), out_vecs)
}

/// Reference path: full dense symmetric eigendecomposition.
pub fn dense_lowest(h: &BandedHamiltonian, k: usize) -> (Vec<f64>, Vec<DVector<f64>>) {
    let eig = h.to_dense().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order.truncate(k);
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{ChargeConfig, CircuitParams};

    fn check(h: &BandedHamiltonian, k: usize) {
        let (vals, vecs) = lowest_eigenpairs(h, k);
        let (dv, _) = dense_lowest(h, k);
        let dense = h.to_dense();
        for i in 0..k {
            assert!((vals[i] - dv[i]).abs() < 1e-9, "{} vs {}", vals[i], dv[i]);
            let r = &dense * &vecs[i] - &vecs[i] * vals[i];
            assert!(r.norm() < 1e-8, "residual {}", r.norm());
            for j in 0..k {
                let o = vecs[i].dot(&vecs[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((o - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn matches_dense_device_a() {
        let h = BandedHamiltonian::new(
            &CircuitParams::device_a(),
            &ChargeConfig::islands(0.13, 0.31),
            10,
        )
        .unwrap();
        check(&h, 9);
    }

    #[test]
    fn exact_degeneracy() {
        // decoupled equal islands at equal offsets: |01> and |10> are degenerate
        let p = CircuitParams::symmetric(11.0, 0.5, 0.0).unwrap();
        let h = BandedHamiltonian::new(&p, &ChargeConfig::islands(0.2, 0.2), 8).unwrap();
        check(&h, 6);
    }

    #[test]
    fn near_degeneracy_high_ratio() {
        let p = CircuitParams::symmetric(40.0, 0.5, 0.0).unwrap();
        let h = BandedHamiltonian::new(&p, &ChargeConfig::islands(0.2, 0.35), 10).unwrap();
        check(&h, 6);
    }

    #[test]
    fn band_lu_solves() {
        let p = CircuitParams::new(8.0, 6.0, 0.6, 0.3).unwrap();
        let h = BandedHamiltonian::new(&p, &ChargeConfig::islands(0.4, -0.2), 5).unwrap();
        let shift = 3.3;
        let lu = BandLu::factor(&h, shift);
        let x: Vec<f64> = start_vector(h.dim(), 9);
        let mut b = vec![0.0; h.dim()];
        h.apply(&x, &mut b);
        b.iter_mut().zip(&x).for_each(|(bi, xi)| *bi -= shift * xi);
        lu.solve(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-9);
        }
    }
}
