use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{bilinear, GridSpec, SensitivityMap, MAX_SPACING_UM};
use crate::error::{ensure_finite, invalid, Error, Result};

/// Two-parameter chi-square offsets for 68.3% and 95.4% regions.
pub const LEVEL_1SIGMA: f64 = 2.30;
pub const LEVEL_2SIGMA: f64 = 6.18;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiangulateOptions {
    /// Assumed charge, elementary charges.
    pub q_assumed: f64,
    /// Report only the quadrant holding the best point (y >= 0, x on the side
    /// selected by the sign of the difference offset).
    pub restrict_quadrant: bool,
    /// Subdivisions per map cell for the misfit lattice.
    pub refine: usize,
}

impl Default for BiangulateOptions {
    fn default() -> Self {
        Self {
            q_assumed: 1.0,
            restrict_quadrant: true,
            refine: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRegion {
    pub best_x_um: f64,
    pub best_y_um: f64,
    pub chi2_min: f64,
    pub contour_1sigma: Vec<Vec<(f64, f64)>>,
    pub contour_2sigma: Vec<Vec<(f64, f64)>>,
    pub area_1sigma_um2: f64,
    pub area_2sigma_um2: f64,
    pub quadrant_restricted: bool,
    /// `[x_min, x_max, y_min, y_max]` of the searched quadrant (or map).
    pub bounds_um: [f64; 4],
    pub q_assumed: f64,
    /// `[ng_sigma, ng_delta, sigma_sigma, sigma_delta]`.
    pub measured: [f64; 4],
}

impl LocalizationRegion {
    /// Whether `(x, y)` lies inside the region bounded by `level`, with the
    /// misfit evaluated from the interpolated map.
    pub fn contains(&self, map: &SensitivityMap, x_um: f64, y_um: f64, level: f64) -> bool {
        let [x0, x1, y0, y1] = self.bounds_um;
        if !(x_um >= x0 && x_um <= x1 && y_um >= y0 && y_um <= y1) || !map.grid.contains(x_um, y_um) {
            return false;
        }
        let s = bilinear(&map.grid, &map.s_sigma, x_um, y_um);
        let d = bilinear(&map.grid, &map.s_delta, x_um, y_um);
        misfit(s, d, self.q_assumed, &self.measured) - self.chi2_min <= level
    }

    /// The best point and its images under both mirrors.
    pub fn images(&self) -> [(f64, f64); 4] {
        let (x, y) = (self.best_x_um, self.best_y_um);
        [(x, y), (-x, y), (x, -y), (-x, -y)]
    }
}

fn misfit(s: f64, d: f64, q: f64, m: &[f64; 4]) -> f64 {
    ((s * q - m[0]) / m[2]).powi(2) + ((d * q - m[1]) / m[3]).powi(2)
}

/// Lowest misfit reachable inside a cell whose corner values span the given
/// boxes (bilinear surfaces attain their extremes at corners).
fn cell_bound(lo: (f64, f64), hi: (f64, f64), q: f64, m: &[f64; 4]) -> f64 {
    let gap = |a: f64, b: f64, t: f64| {
        let (a, b) = if a * q <= b * q { (a * q, b * q) } else { (b * q, a * q) };
        if t < a {
            a - t
        } else if t > b {
            t - b
        } else {
            0.0
        }
    };
    (gap(lo.0, hi.0, m[0]) / m[2]).powi(2) + (gap(lo.1, hi.1, m[1]) / m[3]).powi(2)
}

/// Locates a point charge from measured offsets. The misfit is evaluated on a
/// lattice `refine` times finer than the map (bilinear in between), restricted
/// to cells that can reach the 2-sigma level; contours are drawn at
/// `chi2_min + LEVEL_1SIGMA` and `chi2_min + LEVEL_2SIGMA`.
pub fn biangulate(
    ng_sigma: f64,
    ng_delta: f64,
    sigma_sigma: f64,
    sigma_delta: f64,
    map: &SensitivityMap,
    opts: &BiangulateOptions,
) -> Result<LocalizationRegion> {
    for (n, v) in [
        ("ng_sigma", ng_sigma),
        ("ng_delta", ng_delta),
        ("sigma_sigma", sigma_sigma),
        ("sigma_delta", sigma_delta),
        ("q_assumed", opts.q_assumed),
    ] {
        ensure_finite(n, v)?;
    }
    if sigma_sigma <= 0.0 || sigma_delta <= 0.0 {
        return Err(invalid("sigma", "uncertainties must be positive"));
    }
    if opts.refine == 0 || opts.refine > 64 {
        return Err(invalid("refine", "must be in 1..=64"));
    }
    let g = map.grid;
    if g.dx_um > MAX_SPACING_UM || g.dy_um > MAX_SPACING_UM {
        return Err(invalid(
            "map",
            format!("spacing {} x {} um is coarser than {MAX_SPACING_UM} um", g.dx_um, g.dy_um),
        ));
    }
    let q = opts.q_assumed;
    let m = [ng_sigma, ng_delta, sigma_sigma, sigma_delta];
    let node = |i: usize, j: usize| {
        let (s, d) = map.at(i, j);
        misfit(s, d, q, &m)
    };

    // quadrant in node indices
    let (mut i0, mut i1, mut j0, j1) = (0, g.nx - 1, 0, g.ny - 1);
    if opts.restrict_quadrant {
        let tol = 1e-9 * g.dx_um;
        let left = if ng_delta != 0.0 {
            // island 1 sits at negative x and gives positive difference offsets
            ng_delta * q > 0.0
        } else {
            let (k, _) = (0..g.len())
                .map(|k| (k, node(k % g.nx, k / g.nx)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("grid is non-empty");
            g.x(k % g.nx) < -tol
        };
        if left {
            i1 = (0..g.nx)
                .rev()
                .find(|&i| g.x(i) <= tol)
                .ok_or_else(|| invalid("map", "grid has no x <= 0 half"))?;
        } else {
            i0 = (0..g.nx)
                .find(|&i| g.x(i) >= -tol)
                .ok_or_else(|| invalid("map", "grid has no x >= 0 half"))?;
        }
        j0 = (0..g.ny)
            .find(|&j| g.y(j) >= -tol)
            .ok_or_else(|| invalid("map", "grid has no y >= 0 half"))?;
        if i1 < i0 + 1 || j1 < j0 + 1 {
            return Err(invalid("map", "quadrant holds fewer than 2 x 2 nodes"));
        }
    }
    let bounds = [g.x(i0), g.x(i1), g.y(j0), g.y(j1)];

    let mut node_min = f64::INFINITY;
    for j in j0..=j1 {
        for i in i0..=i1 {
            node_min = node_min.min(node(i, j));
        }
    }
    // cells that may hold points within the 2-sigma level
    let cut = node_min + LEVEL_2SIGMA;
    let (mut ci0, mut ci1, mut cj0, mut cj1) = (usize::MAX, 0, usize::MAX, 0);
    let mut live = Vec::new();
    for j in j0..j1 {
        for i in i0..i1 {
            let c = [map.at(i, j), map.at(i + 1, j), map.at(i, j + 1), map.at(i + 1, j + 1)];
            let lo = c.iter().fold((f64::INFINITY, f64::INFINITY), |a, v| (a.0.min(v.0), a.1.min(v.1)));
            let hi = c
                .iter()
                .fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |a, v| (a.0.max(v.0), a.1.max(v.1)));
            if cell_bound(lo, hi, q, &m) <= cut {
                live.push((i, j));
                ci0 = ci0.min(i);
                ci1 = ci1.max(i);
                cj0 = cj0.min(j);
                cj1 = cj1.max(j);
            }
        }
    }
    let r = opts.refine;
    let fine = GridSpec {
        x0_um: g.x(ci0),
        y0_um: g.y(cj0),
        dx_um: g.dx_um / r as f64,
        dy_um: g.dy_um / r as f64,
        nx: (ci1 - ci0 + 1) * r + 1,
        ny: (cj1 - cj0 + 1) * r + 1,
    };
    // nodes outside live cells stay at +inf
    let mut chi2 = vec![f64::INFINITY; fine.len()];
    for &(i, j) in &live {
        let (bi, bj) = ((i - ci0) * r, (j - cj0) * r);
        for b in 0..=r {
            for a in 0..=r {
                let k = fine.index(bi + a, bj + b);
                if chi2[k].is_finite() {
                    continue;
                }
                let (x, y) = (fine.x(bi + a), fine.y(bj + b));
                let s = bilinear(&g, &map.s_sigma, x, y);
                let d = bilinear(&g, &map.s_delta, x, y);
                chi2[k] = misfit(s, d, q, &m);
            }
        }
    }
    let (kmin, &cmin) = chi2
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("lattice is non-empty");
    let (bx, by) = (fine.x(kmin % fine.nx), fine.y(kmin / fine.nx));
    if cmin > LEVEL_2SIGMA {
        return Err(Error::NoSolution {
            chi2_min: cmin,
            x_um: bx,
            y_um: by,
        });
    }
    let delta: Vec<f64> = chi2.iter().map(|c| c - cmin).collect();
    let cell = fine.dx_um * fine.dy_um;
    let area = |lvl: f64| delta.iter().filter(|&&v| v <= lvl).count() as f64 * cell;
    Ok(LocalizationRegion {
        best_x_um: bx,
        best_y_um: by,
        chi2_min: cmin,
        contour_1sigma: contours(&fine, &delta, LEVEL_1SIGMA),
        contour_2sigma: contours(&fine, &delta, LEVEL_2SIGMA),
        area_1sigma_um2: area(LEVEL_1SIGMA),
        area_2sigma_um2: area(LEVEL_2SIGMA),
        quadrant_restricted: opts.restrict_quadrant,
        bounds_um: bounds,
        q_assumed: q,
        measured: m,
    })
}

/// Marching squares: polylines where the field crosses `level`. Non-finite
/// values count as outside.
pub fn contours(g: &GridSpec, v: &[f64], level: f64) -> Vec<Vec<(f64, f64)>> {
    let nx = g.nx;
    // edge ids: 2k for (i,j)-(i+1,j), 2k+1 for (i,j)-(i,j+1), k = j nx + i
    let h_edge = |i: usize, j: usize| 2 * (j * nx + i);
    let v_edge = |i: usize, j: usize| 2 * (j * nx + i) + 1;
    let point = |e: usize| -> (f64, f64) {
        let k = e / 2;
        let (i, j) = (k % nx, k / nx);
        let (a, b) = if e % 2 == 0 { (k, k + 1) } else { (k, k + nx) };
        let t = if v[a].is_finite() && v[b].is_finite() {
            ((level - v[a]) / (v[b] - v[a])).clamp(0.0, 1.0)
        } else if v[a].is_finite() {
            1.0
        } else {
            0.0
        };
        if e % 2 == 0 {
            (g.x(i) + t * g.dx_um, g.y(j))
        } else {
            (g.x(i), g.y(j) + t * g.dy_um)
        }
    };
    let mut segs: Vec<(usize, usize)> = Vec::new();
    for j in 0..g.ny - 1 {
        for i in 0..nx - 1 {
            let c = [
                v[j * nx + i],
                v[j * nx + i + 1],
                v[(j + 1) * nx + i + 1],
                v[(j + 1) * nx + i],
            ];
            let inside = |x: f64| x <= level;
            let code = c.iter().enumerate().fold(0u8, |acc, (b, &x)| acc | ((inside(x) as u8) << b));
            // edges: bottom, right, top, left
            let e = [h_edge(i, j), v_edge(i + 1, j), h_edge(i, j + 1), v_edge(i, j)];
            let pairs: &[(usize, usize)] = match code {
                0 | 15 => &[],
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(3, 2)],
                5 | 10 => {
                    let centre_in = c.iter().all(|x| x.is_finite()) && inside(0.25 * c.iter().sum::<f64>());
                    // corners 0 and 2 share a state; join them through the
                    // centre when it agrees with them
                    if (code == 5) == centre_in {
                        &[(3, 2), (0, 1)]
                    } else {
                        &[(3, 0), (1, 2)]
                    }
                }
                _ => unreachable!(),
            };
            for &(a, b) in pairs {
                segs.push((e[a], e[b]));
            }
        }
    }
    chain(&segs).into_iter().map(|p| p.into_iter().map(point).collect()).collect()
}

/// Joins segments sharing edge ids into polylines.
fn chain(segs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut by_edge: HashMap<usize, Vec<usize>> = HashMap::new();
    for (k, &(a, b)) in segs.iter().enumerate() {
        by_edge.entry(a).or_default().push(k);
        by_edge.entry(b).or_default().push(k);
    }
    let mut used = vec![false; segs.len()];
    let mut out = Vec::new();
    let next = |edge: usize, used: &[bool]| by_edge[&edge].iter().copied().find(|&s| !used[s]);
    // open chains first, starting from edges touched once
    let mut order: Vec<usize> = (0..segs.len()).collect();
    order.sort_by_key(|&k| {
        let (a, b) = segs[k];
        (by_edge[&a].len().min(by_edge[&b].len()) != 1) as u8
    });
    for start in order {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segs[start];
        let (a, b) = if by_edge[&b].len() == 1 { (b, a) } else { (a, b) };
        let mut line = vec![a, b];
        let mut tail = b;
        while let Some(s) = next(tail, &used) {
            used[s] = true;
            let (p, q) = segs[s];
            tail = if p == tail { q } else { p };
            line.push(tail);
        }
        out.push(line);
    }
    out
}
