use nalgebra::DMatrix;

use super::{ChargeConfig, CircuitParams};
use crate::error::{Error, Result};

pub const MIN_CUTOFF: usize = 5;
pub const DEFAULT_CUTOFF: usize = 10;

/// Charge basis `|n1, n2>` with `|n_i| <= cutoff`. State index is
/// `(n1 + N) (2N + 1) + (n2 + N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChargeBasis {
    cutoff: usize,
}

impl ChargeBasis {
    pub fn new(cutoff: usize) -> Result<Self> {
        if cutoff < MIN_CUTOFF {
            return Err(Error::CutoffTooSmall {
                cutoff,
                min: MIN_CUTOFF,
            });
        }
        Ok(Self { cutoff })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Charge states per island, `2N + 1`.
    pub fn width(&self) -> usize {
        2 * self.cutoff + 1
    }

    pub fn dim(&self) -> usize {
        self.width() * self.width()
    }

    pub fn index(&self, n1: i64, n2: i64) -> usize {
        let c = self.cutoff as i64;
        ((n1 + c) as usize) * self.width() + (n2 + c) as usize
    }

    pub fn charges(&self, idx: usize) -> (i64, i64) {
        let c = self.cutoff as i64;
        let w = self.width();
        ((idx / w) as i64 - c, (idx % w) as i64 - c)
    }
}

/// Sparse view of the Hamiltonian: diagonal plus the two hopping amplitudes.
#[derive(Debug, Clone)]
pub struct BandedHamiltonian {
    pub basis: ChargeBasis,
    pub diag: Vec<f64>,
    /// Amplitude on `n1 <-> n1 +/- 1` (index stride `2N + 1`).
    pub hop1: f64,
    /// Amplitude on `n2 <-> n2 +/- 1` (index stride 1).
    pub hop2: f64,
}

impl BandedHamiltonian {
    pub fn new(params: &CircuitParams, cfg: &ChargeConfig, cutoff: usize) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let basis = ChargeBasis::new(cutoff)?;
        let (g1, g2) = cfg.effective();
        let (ec, ep) = (params.ec(), params.ep());
        let diag = (0..basis.dim())
            .map(|i| {
                let (n1, n2) = basis.charges(i);
                let q1 = n1 as f64 - g1;
                let q2 = n2 as f64 - g2;
                4.0 * ec * (q1 * q1 + q2 * q2) + 4.0 * ep * q1 * q2
            })
            .collect();
        Ok(Self {
            basis,
            diag,
            hop1: -0.5 * params.ej1(),
            hop2: -0.5 * params.ej2(),
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Half bandwidth of the matrix.
    pub fn bandwidth(&self) -> usize {
        self.basis.width()
    }

    /// Visits the nonzero upper-triangle off-diagonal entries `(i, j, value)`, `j > i`.
    pub fn for_each_hop(&self, mut f: impl FnMut(usize, usize, f64)) {
        let w = self.basis.width();
        for i in 0..self.dim() {
            if (i + 1) % w != 0 {
                f(i, i + 1, self.hop2);
            }
            if i + w < self.dim() {
                f(i, i + w, self.hop1);
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = DMatrix::<f64>::zeros(n, n);
        for (i, &d) in self.diag.iter().enumerate() {
            h[(i, i)] = d;
        }
        self.for_each_hop(|i, j, v| {
            h[(i, j)] = v;
            h[(j, i)] = v;
        });
        h
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.diag[i] * x[i];
        }
        self.for_each_hop(|i, j, v| {
            y[i] += v * x[j];
            y[j] += v * x[i];
        });
    }
}

/// Dense charge-basis Hamiltonian of dimension `(2 cutoff + 1)^2`, in GHz.
pub fn build_hamiltonian(
    params: &CircuitParams,
    cfg: &ChargeConfig,
    cutoff: usize,
) -> Result<DMatrix<f64>> {
    Ok(BandedHamiltonian::new(params, cfg, cutoff)?.to_dense())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Parity;

    #[test]
    fn rejects_small_cutoff() {
        let p = CircuitParams::device_a();
        let err = build_hamiltonian(&p, &ChargeConfig::default(), 4).unwrap_err();
        assert_eq!(err, Error::CutoffTooSmall { cutoff: 4, min: 5 });
    }

    #[test]
    fn exactly_symmetric() {
        let p = CircuitParams::new(11.0, 9.5, 0.5, 0.2).unwrap();
        let cfg = ChargeConfig::islands(0.3, -0.17).with_parity(Parity::OE);
        let h = build_hamiltonian(&p, &cfg, 7).unwrap();
        assert_eq!(h.nrows(), 225);
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                assert_eq!(h[(i, j)], h[(j, i)]);
            }
        }
    }

    #[test]
    fn entries() {
        let p = CircuitParams::new(11.0, 9.0, 0.5, 0.2).unwrap();
        let cfg = ChargeConfig::islands(0.25, 0.1);
        let h = build_hamiltonian(&p, &cfg, 5).unwrap();
        let b = ChargeBasis::new(5).unwrap();
        let i = b.index(2, -1);
        let (q1, q2) = (2.0 - 0.25, -1.0 - 0.1);
        let want = 4.0 * 0.5 * (q1 * q1 + q2 * q2) + 4.0 * 0.2 * q1 * q2;
        assert!((h[(i, i)] - want).abs() < 1e-13);
        assert_eq!(h[(i, b.index(3, -1))], -5.5);
        assert_eq!(h[(i, b.index(1, -1))], -5.5);
        assert_eq!(h[(i, b.index(2, 0))], -4.5);
        assert_eq!(h[(i, b.index(2, -2))], -4.5);
        assert_eq!(h[(i, b.index(3, 0))], 0.0);
        // no wrap-around between n2 = +N and the next n1 row
        assert_eq!(h[(b.index(0, 5), b.index(1, -5))], 0.0);
    }

    #[test]
    fn apply_matches_dense() {
        let p = CircuitParams::device_a();
        let bh = BandedHamiltonian::new(&p, &ChargeConfig::islands(0.1, 0.4), 6).unwrap();
        let h = bh.to_dense();
        let x: Vec<f64> = (0..bh.dim()).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let mut y = vec![0.0; bh.dim()];
        bh.apply(&x, &mut y);
        let yd = &h * nalgebra::DVector::from_vec(x);
        for i in 0..bh.dim() {
            assert!((y[i] - yd[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn index_round_trip() {
        let b = ChargeBasis::new(6).unwrap();
        for i in 0..b.dim() {
            let (n1, n2) = b.charges(i);
            assert_eq!(b.index(n1, n2), i);
        }
    }
}
