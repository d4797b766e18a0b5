use std::fmt::Write as _;
use std::path::Path;

use super::{ExperimentConfig, RamseyTrace};
use crate::error::{Error, Result};
use crate::hamiltonian::Transition;

/// Writes a trace as `# key = value` header lines followed by
/// `delay_us probability` rows.
pub fn write_trace(trace: &RamseyTrace, path: &Path) -> Result<()> {
    trace.validate()?;
    let c = &trace.config;
    let mode = match trace.mode {
        Transition::Sigma => "sigma",
        Transition::Delta => "delta",
        Transition::SigmaGivenDelta => "01-11",
    };
    let mut s = String::new();
    let _ = writeln!(s, "# detuning_mhz = {:?}", c.detuning_mhz);
    let _ = writeln!(s, "# shots = {}", c.shots);
    let _ = writeln!(s, "# t2_us = {:?}", c.t2_us);
    let _ = writeln!(s, "# acquisition_ms = {:?}", c.acquisition_ms);
    let _ = writeln!(s, "# mode = {mode}");
    let _ = writeln!(s, "# time_min = {:?}", trace.time_min);
    s.push_str("delay_us probability\n");
    for (d, p) in trace.delays_us.iter().zip(&trace.probabilities) {
        let _ = writeln!(s, "{d:?} {p:?}");
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<RamseyTrace> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = ExperimentConfig {
        delays_us: Vec::new(),
        ..ExperimentConfig::default()
    };
    let mut mode = Transition::Delta;
    let mut time_min = 0.0;
    let mut delays = Vec::new();
    let mut probs = Vec::new();
    let mut in_data = false;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        let bad = |what: &str| Error::Format(format!("{}: line {}: {what}", path.display(), ln + 1));
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            let (k, v) = h.split_once('=').ok_or_else(|| bad("header line without `=`"))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(&format!("`{v}` is not a number")));
            match k {
                "detuning_mhz" => cfg.detuning_mhz = num(v)?,
                "shots" => cfg.shots = v.parse().map_err(|_| bad("shots must be an integer"))?,
                "t2_us" => cfg.t2_us = num(v)?,
                "acquisition_ms" => cfg.acquisition_ms = num(v)?,
                "mode" => mode = v.parse().map_err(|_| bad("unknown mode"))?,
                "time_min" => time_min = num(v)?,
                other => return Err(bad(&format!("unknown header key `{other}`"))),
            }
            continue;
        }
        if !in_data {
            if line.split_whitespace().collect::<Vec<_>>() != ["delay_us", "probability"] {
                return Err(bad("expected column header `delay_us probability`"));
            }
            in_data = true;
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(bad("expected two columns"));
        };
        delays.push(a.parse::<f64>().map_err(|_| bad("bad delay"))?);
        probs.push(b.parse::<f64>().map_err(|_| bad("bad probability"))?);
    }
    cfg.delays_us = delays.clone();
    cfg.validate()?;
    let t = RamseyTrace {
        delays_us: delays,
        probabilities: probs,
        config: cfg,
        mode,
        time_min,
    };
    t.validate()?;
    Ok(t)
}
