//! Induced charge offsets from a surface point charge, and the inverse
//! problem of locating a charge from a measured offset pair.

mod biangulate;
mod map_io;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use biangulate::{biangulate, contours, BiangulateOptions, LocalizationRegion, LEVEL_1SIGMA, LEVEL_2SIGMA};
pub use map_io::{load_map, save_map};

use crate::error::{ensure_finite, invalid, Error, Result};

/// Coarsest grid spacing accepted for localization, um.
pub const MAX_SPACING_UM: f64 = 10.0;

/// Two half-disc inner islands separated by a straight gap along the y axis,
/// surrounded by an annular outer island. Island 1 is at negative x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceGeometry {
    pub inner_radius_um: f64,
    pub gap_um: f64,
    pub outer_inner_radius_um: f64,
    pub outer_outer_radius_um: f64,
}

impl DeviceGeometry {
    pub fn device_a() -> Self {
        Self {
            inner_radius_um: 125.0,
            gap_um: 120.0,
            outer_inner_radius_um: 389.5,
            outer_outer_radius_um: 489.5,
        }
    }

    pub fn device_b() -> Self {
        Self {
            inner_radius_um: 220.0,
            gap_um: 125.0,
            ..Self::device_a()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (n, v) in [
            ("inner_radius_um", self.inner_radius_um),
            ("gap_um", self.gap_um),
            ("outer_inner_radius_um", self.outer_inner_radius_um),
            ("outer_outer_radius_um", self.outer_outer_radius_um),
        ] {
            ensure_finite(n, v)?;
            if v <= 0.0 {
                return Err(invalid(n, format!("must be positive, got {v}")));
            }
        }
        if self.gap_um >= 2.0 * self.inner_radius_um {
            return Err(invalid("gap_um", "gap swallows the inner islands"));
        }
        if self.inner_radius_um >= self.outer_inner_radius_um {
            return Err(invalid("inner_radius_um", "inner islands overlap the outer island"));
        }
        if self.outer_inner_radius_um >= self.outer_outer_radius_um {
            return Err(invalid("outer_outer_radius_um", "annulus has no width"));
        }
        Ok(())
    }

    /// Centroid of island 1.
    pub fn island1_center(&self) -> (f64, f64) {
        // circular segment x < -g/2 of a disc of radius R
        let (r, a) = (self.inner_radius_um, 0.5 * self.gap_um);
        let half = (a / r).acos();
        let area = r * r * (half - half.sin() * half.cos());
        let moment = 2.0 / 3.0 * (r * r - a * a).powf(1.5);
        (-moment / area, 0.0)
    }
}

/// Kernel `1 / (d^2 + h^2)` integrated over each island (height `3h` for the
/// outer island). The ground capture is `ground (1 + r^4 / R_out^4)`, growing
/// toward the surrounding ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateKernel {
    pub height_um: f64,
    pub ground: f64,
    pub angles: usize,
}

impl Default for SurrogateKernel {
    fn default() -> Self {
        Self {
            height_um: 20.0,
            ground: 5.0,
            angles: 720,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x0_um: f64,
    pub y0_um: f64,
    pub dx_um: f64,
    pub dy_um: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    /// Square grid over `[-half, half]^2`; `half` is rounded up to a whole
    /// number of steps.
    pub fn symmetric(half_um: f64, step_um: f64) -> Result<Self> {
        if !(step_um > 0.0 && half_um > 0.0) {
            return Err(invalid("grid", "half width and step must be positive"));
        }
        let k = (half_um / step_um - 1e-9).ceil() as usize;
        let n = 2 * k + 1;
        Ok(Self {
            x0_um: -(k as f64) * step_um,
            y0_um: -(k as f64) * step_um,
            dx_um: step_um,
            dy_um: step_um,
            nx: n,
            ny: n,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dx_um > 0.0 && self.dy_um > 0.0 && self.dx_um.is_finite() && self.dy_um.is_finite()) {
            return Err(Error::NonUniformGrid("grid steps must be positive and finite".into()));
        }
        ensure_finite("x0_um", self.x0_um)?;
        ensure_finite("y0_um", self.y0_um)?;
        if self.nx < 2 || self.ny < 2 {
            return Err(invalid("grid", "need at least 2 nodes per axis"));
        }
        Ok(())
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0_um + i as f64 * self.dx_um
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y0_um + j as f64 * self.dy_um
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (x1, y1) = (self.x(self.nx - 1), self.y(self.ny - 1));
        x >= self.x0_um && x <= x1 && y >= self.y0_um && y <= y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Loaded,
    Surrogate,
}

/// Induced offsets per elementary charge on a uniform grid, row-major with x
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMap {
    pub grid: GridSpec,
    pub s_sigma: Vec<f64>,
    pub s_delta: Vec<f64>,
    pub geometry: Option<DeviceGeometry>,
    pub provenance: Provenance,
}

/// Largest violations of the mirror symmetries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryReport {
    pub sigma_even: f64,
    pub delta_odd: f64,
    /// Whether the grid is symmetric about x = 0 at all.
    pub checked: bool,
}

impl SensitivityMap {
    pub fn new(
        grid: GridSpec,
        s_sigma: Vec<f64>,
        s_delta: Vec<f64>,
        geometry: Option<DeviceGeometry>,
        provenance: Provenance,
    ) -> Result<Self> {
        grid.validate()?;
        if s_sigma.len() != grid.len() || s_delta.len() != grid.len() {
            return Err(Error::LengthMismatch(format!(
                "grid has {} cells, got {} and {} values",
                grid.len(),
                s_sigma.len(),
                s_delta.len()
            )));
        }
        for (k, (a, b)) in s_sigma.iter().zip(&s_delta).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::Format(format!(
                    "non-finite value at cell {k} (ix {}, iy {})",
                    k % grid.nx,
                    k / grid.nx
                )));
            }
        }
        Ok(Self {
            grid,
            s_sigma,
            s_delta,
            geometry,
            provenance,
        })
    }

    pub fn at(&self, i: usize, j: usize) -> (f64, f64) {
        let k = self.grid.index(i, j);
        (self.s_sigma[k], self.s_delta[k])
    }

    pub fn max_abs(&self) -> (f64, f64) {
        let m = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        (m(&self.s_sigma), m(&self.s_delta))
    }

    /// Map of the mirror image `x -> -x` (requires a grid symmetric in x).
    pub fn mirrored(&self) -> Result<Self> {
        let g = self.grid;
        if !self.symmetric_in_x() {
            return Err(invalid("grid", "mirror needs a grid symmetric about x = 0"));
        }
        let mut s = self.s_sigma.clone();
        let mut d = self.s_delta.clone();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let src = g.index(g.nx - 1 - i, j);
                s[g.index(i, j)] = self.s_sigma[src];
                d[g.index(i, j)] = self.s_delta[src];
            }
        }
        Self::new(g, s, d, self.geometry, self.provenance)
    }

    fn symmetric_in_x(&self) -> bool {
        let g = self.grid;
        (g.x0_um + g.x(g.nx - 1)).abs() <= 1e-9 * g.dx_um
    }

    /// `s_S` even and `s_D` odd under the exchange of the two inner islands.
    pub fn symmetry_report(&self) -> SymmetryReport {
        let g = self.grid;
        if !self.symmetric_in_x() {
            return SymmetryReport {
                sigma_even: 0.0,
                delta_odd: 0.0,
                checked: false,
            };
        }
        let (mut a, mut b) = (0.0f64, 0.0f64);
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (s, d) = self.at(i, j);
                let (ms, md) = self.at(g.nx - 1 - i, j);
                a = a.max((s - ms).abs());
                b = b.max((d + md).abs());
            }
        }
        SymmetryReport {
            sigma_even: a,
            delta_odd: b,
            checked: true,
        }
    }
}

/// Solutions `r >= 0` of `|p + r u| < radius` as an interval.
fn disc_interval(px: f64, py: f64, ux: f64, uy: f64, radius: f64) -> Option<(f64, f64)> {
    let b = px * ux + py * uy;
    let c = px * px + py * py - radius * radius;
    let disc = b * b - c;
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let (lo, hi) = ((-b - s).max(0.0), -b + s);
    (hi > lo).then_some((lo, hi))
}

/// Solutions `r >= 0` of `sign * (px + r ux) > edge`.
fn half_plane_interval(px: f64, ux: f64, edge: f64, sign: f64) -> Option<(f64, f64)> {
    let (p, u) = (sign * px, sign * ux);
    if u.abs() < 1e-300 {
        return (p > edge).then_some((0.0, f64::INFINITY));
    }
    let r = (edge - p) / u;
    if u > 0.0 {
        Some((r.max(0.0), f64::INFINITY))
    } else {
        (r > 0.0).then_some((0.0, r))
    }
}

fn intersect(a: (f64, f64), b: (f64, f64)) -> Option<(f64, f64)> {
    let (lo, hi) = (a.0.max(b.0), a.1.min(b.1));
    (hi > lo).then_some((lo, hi))
}

/// `int r dr / (r^2 + h^2)` over `[a, b]`.
fn radial(a: f64, b: f64, h2: f64) -> f64 {
    0.5 * ((b * b + h2) / (a * a + h2)).ln()
}

/// The wide outer island couples with a softer kernel.
const OUTER_HEIGHT_FACTOR: f64 = 3.0;

/// Integrated kernel over island 1 and the outer annulus, seen from `(x, y)`.
fn captures(g: &DeviceGeometry, k: &SurrogateKernel, x: f64, y: f64) -> (f64, f64) {
    let h2 = k.height_um * k.height_um;
    let h2_out = OUTER_HEIGHT_FACTOR * OUTER_HEIGHT_FACTOR * h2;
    let n = k.angles;
    let w = 2.0 * PI / n as f64;
    let (mut i1, mut io) = (0.0, 0.0);
    for a in 0..n {
        let th = (a as f64 + 0.5) * w;
        let (uy, ux) = th.sin_cos();
        if let Some(d) = disc_interval(x, y, ux, uy, g.inner_radius_um) {
            if let Some(hp) = half_plane_interval(x, ux, 0.5 * g.gap_um, -1.0) {
                if let Some((lo, hi)) = intersect(d, hp) {
                    i1 += radial(lo, hi, h2);
                }
            }
        }
        if let Some((lo, hi)) = disc_interval(x, y, ux, uy, g.outer_outer_radius_um) {
            io += radial(lo, hi, h2_out);
            if let Some((a0, b0)) = disc_interval(x, y, ux, uy, g.outer_inner_radius_um) {
                io -= radial(a0, b0, h2_out);
            }
        }
    }
    (i1 * w, io * w)
}

/// Surrogate induced offsets `(s_S, s_D)` for a unit charge at `(x, y)`.
///
/// Island fractions are `f_i = I_i / (2 (I_1 + I_2 + I_out + G(r)))`; the two
/// mirror symmetries hold exactly.
pub fn surrogate_offsets(g: &DeviceGeometry, k: &SurrogateKernel, x: f64, y: f64) -> (f64, f64) {
    let y = y.abs();
    let (i1, o1) = captures(g, k, x, y);
    let (i2, o2) = captures(g, k, -x, y);
    let io = 0.5 * (o1 + o2);
    let r2 = ((x * x + y * y) / (g.outer_outer_radius_um * g.outer_outer_radius_um)).powi(2);
    let den = 2.0 * ((i1 + i2) + io + k.ground * (1.0 + r2));
    ((i1 + i2) / den, (i1 - i2) / den)
}

/// Tabulates the surrogate on a grid.
pub fn surrogate_map(geometry: &DeviceGeometry, grid: &GridSpec) -> Result<SensitivityMap> {
    surrogate_map_with(geometry, grid, &SurrogateKernel::default())
}

pub fn surrogate_map_with(geometry: &DeviceGeometry, grid: &GridSpec, kernel: &SurrogateKernel) -> Result<SensitivityMap> {
    geometry.validate()?;
    grid.validate()?;
    if grid.dx_um > MAX_SPACING_UM || grid.dy_um > MAX_SPACING_UM {
        return Err(invalid(
            "grid",
            format!("spacing {} x {} um is coarser than {MAX_SPACING_UM} um", grid.dx_um, grid.dy_um),
        ));
    }
    if kernel.angles < 16 || !(kernel.height_um > 0.0) || !(kernel.ground >= 0.0) {
        return Err(invalid("kernel", "need >= 16 angles, positive height, non-negative ground"));
    }
    let mut s = vec![0.0; grid.len()];
    let mut d = vec![0.0; grid.len()];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (a, b) = surrogate_offsets(geometry, kernel, grid.x(i), grid.y(j));
            s[grid.index(i, j)] = a;
            d[grid.index(i, j)] = b;
        }
    }
    SensitivityMap::new(*grid, s, d, Some(*geometry), Provenance::Surrogate)
}

/// Offsets induced by charge `q` (elementary charges) at `(x, y)`, bilinear in
/// the map.
pub fn induced_offsets(map: &SensitivityMap, x_um: f64, y_um: f64, q: f64) -> Result<(f64, f64)> {
    ensure_finite("x", x_um)?;
    ensure_finite("y", y_um)?;
    ensure_finite("q", q)?;
    let g = &map.grid;
    if !g.contains(x_um, y_um) {
        return Err(Error::OutOfBounds { x_um, y_um });
    }
    let (s, d) = bilinear2(g, &map.s_sigma, &map.s_delta, x_um, y_um);
    Ok((q * s, q * d))
}

fn cell(g: &GridSpec, x: f64, y: f64) -> (usize, usize, f64, f64) {
    let fx = (x - g.x0_um) / g.dx_um;
    let fy = (y - g.y0_um) / g.dy_um;
    let i = (fx.floor().max(0.0) as usize).min(g.nx - 2);
    let j = (fy.floor().max(0.0) as usize).min(g.ny - 2);
    (i, j, (fx - i as f64).clamp(0.0, 1.0), (fy - j as f64).clamp(0.0, 1.0))
}

pub(crate) fn bilinear(g: &GridSpec, v: &[f64], x: f64, y: f64) -> f64 {
    let (i, j, tx, ty) = cell(g, x, y);
    let at = |a: usize, b: usize| v[g.index(a, b)];
    if tx == 0.0 && ty == 0.0 {
        return at(i, j);
    }
    (1.0 - ty) * ((1.0 - tx) * at(i, j) + tx * at(i + 1, j)) + ty * ((1.0 - tx) * at(i, j + 1) + tx * at(i + 1, j + 1))
}

fn bilinear2(g: &GridSpec, a: &[f64], b: &[f64], x: f64, y: f64) -> (f64, f64) {
    (bilinear(g, a, x, y), bilinear(g, b, x, y))
}
