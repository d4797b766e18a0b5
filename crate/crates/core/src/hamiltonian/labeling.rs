//! Mode labels `|m n>` (m sum-mode quanta, n difference-mode quanta) by overlap
//! with uncoupled reference states.
//!
//! References are products of single-junction eigenstates at the configured
//! offsets, rotated into mode Fock states
//! `b_S^m b_D^n |0> / sqrt(m! n!)` with `b_S,D = (a_1 +/- a_2) / sqrt 2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::transmon::transmon_states;
use super::{ChargeConfig, CircuitParams};
use crate::error::{Error, Result};

/// Highest total excitation `m + n` considered as a candidate label.
pub const MAX_QUANTA: usize = 4;
const TIE: f64 = 1e-9;

/// How a state's label was decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    /// Unique largest overlap.
    Overlap,
    /// Equal overlaps; assigned by energy order.
    TieBreak,
    /// Member of an exactly degenerate cluster rotated onto the references.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub label: (usize, usize),
    pub overlap: f64,
    pub resolution: Resolution,
}

/// Candidate labels ordered by harmonic reference energy; for equal energies
/// `(0, 1)` precedes `(1, 0)`.
pub fn candidate_labels(params: &CircuitParams) -> Vec<(usize, usize)> {
    let ws = (8.0 * params.ej_mean() * params.ec_sigma()).sqrt();
    let wd = (8.0 * params.ej_mean() * params.ec_delta()).sqrt();
    let mut labels: Vec<(usize, usize)> = (0..=MAX_QUANTA)
        .flat_map(|t| (0..=t).map(move |m| (m, t - m)))
        .collect();
    labels.sort_by(|a, b| {
        let ea = a.0 as f64 * ws + a.1 as f64 * wd;
        let eb = b.0 as f64 * ws + b.1 as f64 * wd;
        if (ea - eb).abs() > 1e-12 * (1.0 + ea.abs()) {
            ea.total_cmp(&eb)
        } else {
            a.0.cmp(&b.0)
        }
    });
    labels
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Island Fock amplitudes `c[p][q]` of the mode Fock state `|m n>`.
pub fn mode_fock_coefficients(m: usize, n: usize) -> Vec<Vec<f64>> {
    let t = m + n;
    let mut c = vec![vec![0.0; t + 1]; t + 1];
    let norm = 2f64.powf(-(t as f64) / 2.0) / (factorial(m) * factorial(n)).sqrt();
    for j in 0..=m {
        for l in 0..=n {
            let p = j + l;
            let q = t - p;
            let sign = if (n - l) % 2 == 0 { 1.0 } else { -1.0 };
            c[p][q] += sign * binom(m, j) * binom(n, l) * norm * (factorial(p) * factorial(q)).sqrt();
        }
    }
    c
}

/// Reference data for one Hamiltonian evaluation.
pub struct References {
    labels: Vec<(usize, usize)>,
    coeffs: Vec<Vec<Vec<f64>>>,
    /// Single-island states as columns, `(2N+1) x (MAX_QUANTA + 1)`.
    phi1: DMatrix<f64>,
    phi2: DMatrix<f64>,
    width: usize,
}

impl References {
    pub fn new(params: &CircuitParams, cfg: &ChargeConfig, cutoff: usize) -> Result<Self> {
        let (g1, g2) = cfg.effective();
        let k = MAX_QUANTA + 1;
        let (_, v1) = transmon_states(params.ej1(), params.ec(), g1, cutoff, k)?;
        let (_, v2) = transmon_states(params.ej2(), params.ec(), g2, cutoff, k)?;
        let labels = candidate_labels(params);
        let coeffs = labels.iter().map(|&(m, n)| mode_fock_coefficients(m, n)).collect();
        Ok(Self {
            labels,
            coeffs,
            phi1: DMatrix::from_columns(&v1),
            phi2: DMatrix::from_columns(&v2),
            width: 2 * cutoff + 1,
        })
    }

    pub fn labels(&self) -> &[(usize, usize)] {
        &self.labels
    }

    /// Signed amplitudes `<ref_l | psi>` for every candidate label.
    pub fn amplitudes(&self, psi: &DVector<f64>) -> Vec<f64> {
        let w = self.width;
        // psi reshaped with row n1, column n2
        let grid = DMatrix::from_fn(w, w, |i, j| psi[i * w + j]);
        let m = self.phi1.transpose() * grid * &self.phi2;
        self.coeffs
            .iter()
            .map(|c| {
                let mut s = 0.0;
                for (p, row) in c.iter().enumerate() {
                    for (q, &x) in row.iter().enumerate() {
                        if x != 0.0 {
                            s += x * m[(p, q)];
                        }
                    }
                }
                s
            })
            .collect()
    }

    /// Reference vector for candidate `l` in the charge basis.
    pub fn vector(&self, l: usize) -> DVector<f64> {
        let w = self.width;
        let mut out = DVector::zeros(w * w);
        for (p, row) in self.coeffs[l].iter().enumerate() {
            for (q, &x) in row.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for i in 0..w {
                    let a = x * self.phi1[(i, p)];
                    for j in 0..w {
                        out[i * w + j] += a * self.phi2[(j, q)];
                    }
                }
            }
        }
        out
    }
}

/// Groups of indices whose energies agree within `tol`.
fn clusters(energies: &[f64], tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=energies.len() {
        if i == energies.len() || energies[i] - energies[i - 1] > tol {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Labels ascending eigenpairs. Degenerate clusters are first rotated onto the
/// projected references (largest projection first), which updates `vectors`
/// in place.
pub fn assign_labels(
    refs: &References,
    energies: &[f64],
    vectors: &mut [DVector<f64>],
    degeneracy_tol: f64,
) -> Result<Vec<Assignment>> {
    let mut rotated = vec![false; energies.len()];
    for range in clusters(energies, degeneracy_tol) {
        if range.len() < 2 {
            continue;
        }
        let basis: Vec<DVector<f64>> = vectors[range.clone()].to_vec();
        let amps: Vec<Vec<f64>> = basis.iter().map(|v| refs.amplitudes(v)).collect();
        let nl = refs.labels().len();
        let mut weight: Vec<(usize, f64)> = (0..nl)
            .map(|l| (l, amps.iter().map(|a| a[l] * a[l]).sum::<f64>()))
            .collect();
        weight.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut new: Vec<DVector<f64>> = Vec::with_capacity(range.len());
        for &(l, _) in &weight {
            if new.len() == range.len() {
                break;
            }
            // projection of reference l onto the cluster subspace
            let mut v = DVector::zeros(basis[0].len());
            for (b, a) in basis.iter().zip(&amps) {
                v += b * a[l];
            }
            for u in &new {
                let c = u.dot(&v);
                v -= u * c;
            }
            let nrm = v.norm();
            if nrm > 1e-6 {
                new.push(v / nrm);
            }
        }
        // complete the subspace if references did not span it
        for b in &basis {
            if new.len() == range.len() {
                break;
            }
            let mut v = b.clone();
            for u in &new {
                let c = u.dot(&v);
                v -= u * c;
            }
            let nrm = v.norm();
            if nrm > 1e-6 {
                new.push(v / nrm);
            }
        }
        for (slot, v) in range.clone().zip(new) {
            vectors[slot] = v;
            rotated[slot] = true;
        }
    }

    let labels = refs.labels();
    let mut claimed: Vec<Option<usize>> = vec![None; labels.len()];
    let mut out = Vec::with_capacity(energies.len());
    for (s, v) in vectors.iter().enumerate() {
        let ov: Vec<f64> = refs.amplitudes(v).iter().map(|a| a * a).collect();
        let best = ov.iter().copied().fold(0.0, f64::max);
        let tied: Vec<usize> = (0..labels.len()).filter(|&l| best - ov[l] <= TIE).collect();
        let pick = if tied.len() == 1 {
            tied[0]
        } else {
            // labels are in reference-energy order, so the first free one wins
            match tied.iter().copied().find(|&l| claimed[l].is_none()) {
                Some(l) => l,
                None => tied[0],
            }
        };
        if let Some(prev) = claimed[pick] {
            return Err(Error::LabelingFailure(format!(
                "states {prev} and {s} (E = {:.6} and {:.6} GHz) both claim |{}{}> (overlap {:.3})",
                energies[prev], energies[s], labels[pick].0, labels[pick].1, ov[pick]
            )));
        }
        claimed[pick] = Some(s);
        let resolution = if rotated[s] {
            Resolution::Degenerate
        } else if tied.len() > 1 {
            Resolution::TieBreak
        } else {
            Resolution::Overlap
        };
        out.push(Assignment {
            label: labels[pick],
            overlap: ov[pick],
            resolution,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fock_coefficients() {
        // |10> = (|1,0> + |0,1>)/sqrt2, |01> = (|1,0> - |0,1>)/sqrt2
        let s = mode_fock_coefficients(1, 0);
        let d = mode_fock_coefficients(0, 1);
        let r = 0.5f64.sqrt();
        assert!((s[1][0] - r).abs() < 1e-15 && (s[0][1] - r).abs() < 1e-15);
        assert!((d[1][0] - r).abs() < 1e-15 && (d[0][1] + r).abs() < 1e-15);
        // |11> = (|2,0> - |0,2>)/sqrt2
        let c = mode_fock_coefficients(1, 1);
        assert!((c[2][0] - r).abs() < 1e-15 && (c[0][2] + r).abs() < 1e-15);
        assert!(c[1][1].abs() < 1e-15);
    }

    #[test]
    fn fock_states_normalized_and_orthogonal() {
        let labs: Vec<(usize, usize)> = (0..=4).flat_map(|t| (0..=t).map(move |m| (m, t - m))).collect();
        for &(m, n) in &labs {
            for &(a, b) in &labs {
                let c1 = mode_fock_coefficients(m, n);
                let c2 = mode_fock_coefficients(a, b);
                let mut s = 0.0;
                if m + n == a + b {
                    for p in 0..c1.len() {
                        for q in 0..c1.len() {
                            s += c1[p][q] * c2[p][q];
                        }
                    }
                }
                let want = if (m, n) == (a, b) { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12, "({m}{n}) ({a}{b}) {s}");
            }
        }
    }

    #[test]
    fn candidate_order() {
        let l = candidate_labels(&CircuitParams::device_a());
        assert_eq!(&l[..3], &[(0, 0), (0, 1), (1, 0)]);
        let l0 = candidate_labels(&CircuitParams::symmetric(11.0, 0.5, 0.0).unwrap());
        assert_eq!(&l0[..3], &[(0, 0), (0, 1), (1, 0)]);
    }

    #[test]
    fn cluster_grouping() {
        let c = clusters(&[0.0, 1.0, 1.0 + 1e-12, 2.0], 1e-9);
        assert_eq!(c, vec![0..1, 1..3, 3..4]);
    }
}
