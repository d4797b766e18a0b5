use std::fmt::Write as _;
use std::path::Path;

use super::{DeviceGeometry, GridSpec, Provenance, SensitivityMap};
use crate::error::{Error, Result};

const MAGIC: &str = "# twomode sensitivity map v1";

/// Writes `key = value` header lines, a `data` marker, then one
/// `s_sigma s_delta` row per cell (x fastest) at 17 significant digits.
pub fn save_map(map: &SensitivityMap, path: &Path) -> Result<()> {
    let g = &map.grid;
    let mut s = String::new();
    s.push_str(MAGIC);
    s.push('\n');
    let _ = writeln!(s, "nx = {}", g.nx);
    let _ = writeln!(s, "ny = {}", g.ny);
    let _ = writeln!(s, "x0_um = {:?}", g.x0_um);
    let _ = writeln!(s, "y0_um = {:?}", g.y0_um);
    let _ = writeln!(s, "dx_um = {:?}", g.dx_um);
    let _ = writeln!(s, "dy_um = {:?}", g.dy_um);
    if let Some(geo) = &map.geometry {
        let _ = writeln!(s, "inner_radius_um = {:?}", geo.inner_radius_um);
        let _ = writeln!(s, "gap_um = {:?}", geo.gap_um);
        let _ = writeln!(s, "outer_inner_radius_um = {:?}", geo.outer_inner_radius_um);
        let _ = writeln!(s, "outer_outer_radius_um = {:?}", geo.outer_outer_radius_um);
    }
    s.push_str("data\n");
    for (a, b) in map.s_sigma.iter().zip(&map.s_delta) {
        let _ = writeln!(s, "{a:.16e} {b:.16e}");
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn load_map(path: &Path) -> Result<SensitivityMap> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let bad = |ln: usize, what: String| Error::Format(format!("{}: line {}: {what}", path.display(), ln + 1));
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(bad(0, format!("expected `{MAGIC}`"))),
    }
    let mut nx = None;
    let mut ny = None;
    let mut nums = std::collections::BTreeMap::<String, f64>::new();
    let mut saw_data = false;
    for (ln, line) in lines.by_ref() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "data" {
            saw_data = true;
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(ln, "header line without `=`".into()))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "nx" | "ny" => {
                let n: usize = v.parse().map_err(|_| bad(ln, format!("{k} must be an integer")))?;
                if k == "nx" {
                    nx = Some(n)
                } else {
                    ny = Some(n)
                }
            }
            "x0_um" | "y0_um" | "dx_um" | "dy_um" | "inner_radius_um" | "gap_um" | "outer_inner_radius_um"
            | "outer_outer_radius_um" => {
                let x: f64 = v.parse().map_err(|_| bad(ln, format!("{k} is not a number")))?;
                nums.insert(k.to_string(), x);
            }
            _ => return Err(bad(ln, format!("unknown header key `{k}`"))),
        }
    }
    if !saw_data {
        return Err(Error::Format(format!("{}: missing `data` line", path.display())));
    }
    let need = |k: &str| {
        nums.get(k)
            .copied()
            .ok_or_else(|| Error::Format(format!("{}: header lacks {k}", path.display())))
    };
    let grid = GridSpec {
        nx: nx.ok_or_else(|| Error::Format(format!("{}: header lacks nx", path.display())))?,
        ny: ny.ok_or_else(|| Error::Format(format!("{}: header lacks ny", path.display())))?,
        x0_um: need("x0_um")?,
        y0_um: need("y0_um")?,
        dx_um: need("dx_um")?,
        dy_um: need("dy_um")?,
    };
    grid.validate()?;
    let geo_keys = ["inner_radius_um", "gap_um", "outer_inner_radius_um", "outer_outer_radius_um"];
    let geometry = match geo_keys.iter().filter(|k| nums.contains_key(**k)).count() {
        0 => None,
        4 => {
            let g = DeviceGeometry {
                inner_radius_um: nums[geo_keys[0]],
                gap_um: nums[geo_keys[1]],
                outer_inner_radius_um: nums[geo_keys[2]],
                outer_outer_radius_um: nums[geo_keys[3]],
            };
            g.validate()?;
            Some(g)
        }
        _ => return Err(Error::Format(format!("{}: incomplete geometry block", path.display()))),
    };
    let mut s = Vec::with_capacity(grid.len());
    let mut d = Vec::with_capacity(grid.len());
    for (ln, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let k = s.len();
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(bad(ln, "expected two columns".into()));
        };
        let parse = |t: &str| -> Result<f64> {
            let v: f64 = t.parse().map_err(|_| bad(ln, format!("`{t}` is not a number")))?;
            if !v.is_finite() {
                return Err(bad(ln, format!("non-finite value at cell {k} (ix {}, iy {})", k % grid.nx, k / grid.nx)));
            }
            Ok(v)
        };
        s.push(parse(a)?);
        d.push(parse(b)?);
    }
    if s.len() != grid.len() {
        return Err(Error::LengthMismatch(format!(
            "{}: header declares {} cells, file has {}",
            path.display(),
            grid.len(),
            s.len()
        )));
    }
    let map = SensitivityMap::new(grid, s, d, geometry, Provenance::Loaded)?;
    let rep = map.symmetry_report();
    let (ms, md) = map.max_abs();
    if rep.checked && (rep.sigma_even > 1e-6 * ms.max(1e-300) || rep.delta_odd > 1e-6 * md.max(1e-300)) {
        log::warn!(
            "{}: map breaks the island-exchange symmetry (s_sigma {:.3e}, s_delta {:.3e})",
            path.display(),
            rep.sigma_even,
            rep.delta_odd
        );
    }
    Ok(map)
}
