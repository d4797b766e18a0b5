use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Result};

/// `e^2 / (2 h)` for a 1 fF capacitance, in GHz.
pub const CHARGING_GHZ_FF: f64 = {
    const E: f64 = 1.602_176_634e-19;
    const H: f64 = 6.626_070_15e-34;
    E * E / (2.0 * H * 1e-15) * 1e-9
};

/// Energies of the two-island circuit, all in GHz (energy / h).
///
/// `ep` couples the two islands' charges; the derived sum/difference charging
/// energies are `ec +/- ep / 2`, so `ep < 2 ec` keeps both modes bounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    ej1: f64,
    ej2: f64,
    ec: f64,
    ep: f64,
}

impl CircuitParams {
    pub fn new(ej1: f64, ej2: f64, ec: f64, ep: f64) -> Result<Self> {
        let p = Self { ej1, ej2, ec, ep };
        p.validate()?;
        Ok(p)
    }

    /// Equal junctions.
    pub fn symmetric(ej: f64, ec: f64, ep: f64) -> Result<Self> {
        Self::new(ej, ej, ec, ep)
    }

    /// Builds parameters from the island capacitance `C` and mutual capacitance
    /// `C_m` (both fF) plus the two Josephson energies.
    pub fn from_capacitances(c_ff: f64, cm_ff: f64, ej1: f64, ej2: f64) -> Result<Self> {
        let (ec, ep) = derive_energies(c_ff, cm_ff)?;
        Self::new(ej1, ej2, ec, ep)
    }

    /// Device-A estimate: E_J = 11 GHz, E_C = 0.5 GHz, E_p = 0.2 GHz.
    pub fn device_a() -> Self {
        Self {
            ej1: 11.0,
            ej2: 11.0,
            ec: 0.5,
            ep: 0.2,
        }
    }

    /// Charge-suppressed design at E_J/E_C = 70 and E_p = 0.4 E_C, with E_C chosen
    /// so the lower mode sits near 4.6 GHz.
    pub fn device_b() -> Self {
        let ec = 0.23;
        Self {
            ej1: 70.0 * ec,
            ej2: 70.0 * ec,
            ec,
            ep: 0.4 * ec,
        }
    }

    /// Scales the junction energies to a target `E_J / E_C` while keeping
    /// `E_C`, `E_p` and the junction ratio fixed.
    pub fn with_ratio(&self, ej_over_ec: f64) -> Result<Self> {
        let mean = 0.5 * (self.ej1 + self.ej2);
        let scale = ej_over_ec * self.ec / mean;
        Self::new(self.ej1 * scale, self.ej2 * scale, self.ec, self.ep)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("ej1", self.ej1),
            ("ej2", self.ej2),
            ("ec", self.ec),
            ("ep", self.ep),
        ] {
            ensure_finite(name, v)?;
        }
        if self.ej1 <= 0.0 {
            return Err(invalid("ej1", format!("must be positive, got {}", self.ej1)));
        }
        if self.ej2 <= 0.0 {
            return Err(invalid("ej2", format!("must be positive, got {}", self.ej2)));
        }
        if self.ec <= 0.0 {
            return Err(invalid("ec", format!("must be positive, got {}", self.ec)));
        }
        if self.ep < 0.0 || self.ep >= 2.0 * self.ec {
            return Err(invalid(
                "ep",
                format!("must lie in [0, 2 ec) = [0, {}), got {}", 2.0 * self.ec, self.ep),
            ));
        }
        Ok(())
    }

    pub fn ej1(&self) -> f64 {
        self.ej1
    }
    pub fn ej2(&self) -> f64 {
        self.ej2
    }
    pub fn ec(&self) -> f64 {
        self.ec
    }
    pub fn ep(&self) -> f64 {
        self.ep
    }
    pub fn ej_mean(&self) -> f64 {
        0.5 * (self.ej1 + self.ej2)
    }
    pub fn ej_over_ec(&self) -> f64 {
        self.ej_mean() / self.ec
    }
    /// Charging energy of the sum (in-phase) mode.
    pub fn ec_sigma(&self) -> f64 {
        self.ec + 0.5 * self.ep
    }
    /// Charging energy of the difference (out-of-phase) mode.
    pub fn ec_delta(&self) -> f64 {
        self.ec - 0.5 * self.ep
    }
}

/// Effective shunt capacitance `C* = C (C + 2 C_m) / (C + C_m)`.
pub fn shunt_capacitance(c_ff: f64, cm_ff: f64) -> f64 {
    c_ff * (c_ff + 2.0 * cm_ff) / (c_ff + cm_ff)
}

/// Charging and coupling energies (GHz) from capacitances in fF.
///
/// `E_C = e^2 C* / 2 (C*^2 - C_m^2)` and `E_p = e^2 C_m / (C*^2 - C_m^2)`.
/// `E_p / E_C = 2 C_m / C*` only approaches 2 as `C_m -> C*`; beyond that the
/// charging energies change sign and the configuration is rejected.
pub fn derive_energies(c_ff: f64, cm_ff: f64) -> Result<(f64, f64)> {
    ensure_finite("c", c_ff)?;
    ensure_finite("c_m", cm_ff)?;
    if c_ff <= 0.0 {
        return Err(invalid("c", format!("must be positive, got {c_ff} fF")));
    }
    if cm_ff < 0.0 {
        return Err(invalid("c_m", format!("must be non-negative, got {cm_ff} fF")));
    }
    let cs = shunt_capacitance(c_ff, cm_ff);
    if cm_ff >= cs {
        return Err(invalid(
            "c_m",
            format!("{cm_ff} fF is not below C* = {cs} fF; the difference-mode charging energy is not positive"),
        ));
    }
    let det = cs * cs - cm_ff * cm_ff;
    let ec = CHARGING_GHZ_FF * cs / det;
    let ep = 2.0 * CHARGING_GHZ_FF * cm_ff / det;
    Ok((ec, ep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn charging_constant() {
        // e^2/2h at 1 fF ~ 19.37 GHz
        assert!((CHARGING_GHZ_FF - 19.3707).abs() < 1e-3, "{CHARGING_GHZ_FF}");
    }

    #[test]
    fn decoupled_islands() {
        let (ec, ep) = derive_energies(80.0, 0.0).unwrap();
        assert_eq!(ep, 0.0);
        assert!((ec - CHARGING_GHZ_FF / 80.0).abs() < 1e-15);
    }

    #[test]
    fn ratio_increases_with_mutual_capacitance() {
        let mut last = -1.0;
        for i in 0..50 {
            let cm = i as f64 * 1.9;
            let (ec, ep) = derive_energies(60.0, cm).unwrap();
            let r = ep / ec;
            assert!(r > last);
            assert!(r < 2.0);
            last = r;
        }
    }

    #[test]
    fn sum_difference_charging_energies() {
        let (c, cm) = (70.0, 12.0);
        let (ec, ep) = derive_energies(c, cm).unwrap();
        let cs = shunt_capacitance(c, cm);
        let ecs = CHARGING_GHZ_FF / (cs - cm);
        let ecd = CHARGING_GHZ_FF / (cs + cm);
        assert!((ec + ep / 2.0 - ecs).abs() < 1e-12);
        assert!((ec - ep / 2.0 - ecd).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_capacitances() {
        assert!(matches!(derive_energies(0.0, 1.0), Err(Error::InvalidParameter { .. })));
        assert!(matches!(derive_energies(-3.0, 1.0), Err(Error::InvalidParameter { .. })));
        // C_m beyond C* = golden-ratio * C
        assert!(matches!(derive_energies(10.0, 17.0), Err(Error::InvalidParameter { name: "c_m", .. })));
        assert!(derive_energies(10.0, 16.0).is_ok());
    }

    #[test]
    fn params_validation() {
        assert!(CircuitParams::new(11.0, 11.0, 0.5, 0.2).is_ok());
        assert!(CircuitParams::new(0.0, 11.0, 0.5, 0.2).is_err());
        assert!(CircuitParams::new(11.0, 11.0, 0.5, 1.0).is_err());
        assert!(CircuitParams::new(11.0, f64::NAN, 0.5, 0.2).is_err());
        assert!(CircuitParams::new(11.0, 11.0, 0.5, -0.1).is_err());
    }
}
