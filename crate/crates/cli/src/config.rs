//! Run configuration: a TOML file whose physical quantities all carry a unit
//! suffix in their key. Parsing yields a fully resolved [`Resolved`] config,
//! which is also what the config hash is computed over.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use twomode::hamiltonian::{CircuitParams, Transition, DEFAULT_CUTOFF};
use twomode::locator::DeviceGeometry;
use twomode::noise::{DriftModel, DEFAULT_QP_RATE_PER_US};
use twomode::ramsey::Window;

/// Configuration error, anchored to a line of the config file when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: Option<PathBuf>,
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let file = self.file.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<config>".into());
        match self.line {
            Some(l) => write!(f, "{file}:{l}: ")?,
            None => write!(f, "{file}: ")?,
        }
        if !self.key.is_empty() {
            write!(f, "`{}`: ", self.key)?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

// ---------------------------------------------------------------------------
// raw file layout

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    device: RawDevice,
    #[serde(default)]
    experiment: RawExperiment,
    #[serde(default)]
    noise: RawNoise,
    scenario: Option<RawScenario>,
    map: Option<RawMap>,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    ramsey: RawRamsey,
    #[serde(default)]
    localize: RawLocalize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    preset: Option<String>,
    ej_ghz: Option<f64>,
    ej1_ghz: Option<f64>,
    ej2_ghz: Option<f64>,
    ec_ghz: Option<f64>,
    ep_ghz: Option<f64>,
    c_ff: Option<f64>,
    cm_ff: Option<f64>,
    cutoff: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    detuning_mhz: Option<f64>,
    shots: Option<u64>,
    delay_count: Option<usize>,
    delay_step_us: Option<f64>,
    t2_us: Option<f64>,
    acquisition_ms: Option<f64>,
    pad: Option<usize>,
    window: Option<String>,
    transition: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    qp_rate_per_us: Option<f64>,
    drift: Option<DriftModel>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    preset: Option<String>,
    duration_min: Option<f64>,
    cadence_min: Option<f64>,
    epsilon_mhz: Option<f64>,
    branches: Option<String>,
    waypoints: Option<Vec<SpatialWaypoint>>,
    offset_waypoints: Option<Vec<OffsetWaypoint>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    surrogate: Option<String>,
    half_width_um: Option<f64>,
    step_um: Option<f64>,
    file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    ratio_min: Option<f64>,
    ratio_max: Option<f64>,
    points: Option<usize>,
    ep_over_ec: Option<f64>,
    ec_ghz: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRamsey {
    ng_sigma_2e: Option<f64>,
    ng_delta_2e: Option<f64>,
    epsilon_mhz: Option<f64>,
    branches: Option<String>,
    weights: Option<[f64; 4]>,
    trace_file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLocalize {
    ng_sigma_2e: Option<f64>,
    ng_delta_2e: Option<f64>,
    x_um: Option<f64>,
    y_um: Option<f64>,
    q_e: Option<f64>,
    sigma_ng_sigma_2e: Option<f64>,
    sigma_ng_delta_2e: Option<f64>,
    sigma_fraction: Option<f64>,
    q_assumed_e: Option<f64>,
    restrict_quadrant: Option<bool>,
    refine: Option<usize>,
}

// ---------------------------------------------------------------------------
// resolved config

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialWaypoint {
    pub t_min: f64,
    pub x_um: f64,
    pub y_um: f64,
    pub q_e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetWaypoint {
    pub t_min: f64,
    pub ng_sigma_2e: f64,
    pub ng_delta_2e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviceSpec {
    pub ej1_ghz: f64,
    pub ej2_ghz: f64,
    pub ec_ghz: f64,
    pub ep_ghz: f64,
    pub cutoff: usize,
}

impl DeviceSpec {
    pub fn params(&self) -> twomode::Result<CircuitParams> {
        CircuitParams::new(self.ej1_ghz, self.ej2_ghz, self.ec_ghz, self.ep_ghz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub detuning_mhz: f64,
    pub shots: u64,
    pub delay_count: usize,
    pub delay_step_us: f64,
    pub t2_us: f64,
    pub acquisition_ms: f64,
    pub pad: usize,
    pub window: Window,
    pub transition: Transition,
}

impl ExperimentSpec {
    pub fn experiment(&self) -> twomode::ramsey::ExperimentConfig {
        twomode::ramsey::ExperimentConfig {
            detuning_mhz: self.detuning_mhz,
            shots: self.shots,
            delays_us: twomode::ramsey::uniform_delays(self.delay_count, self.delay_step_us),
            t2_us: self.t2_us,
            acquisition_ms: self.acquisition_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseSpec {
    pub qp_rate_per_us: f64,
    pub drift: DriftModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branches {
    TightBinding,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "waypoints", rename_all = "kebab-case")]
pub enum PathSpec {
    Spatial(Vec<SpatialWaypoint>),
    Offsets(Vec<OffsetWaypoint>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub duration_min: f64,
    pub cadence_min: f64,
    /// `None`: transition dispersion of the configured device.
    pub epsilon_mhz: Option<f64>,
    pub branches: Branches,
    pub path: PathSpec,
}

/// A referenced input file. Only its content digest enters the config hash.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileRef {
    #[serde(skip)]
    pub path: PathBuf,
    pub sha256: String,
}

impl FileRef {
    fn open(path: PathBuf) -> Result<Self, String> {
        let bytes = std::fs::read(&path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Ok(Self {
            path,
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MapSource {
    Surrogate {
        geometry: DeviceGeometry,
        half_width_um: f64,
        step_um: f64,
    },
    File(FileRef),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSpec {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub points: usize,
    pub ep_over_ec: f64,
    pub ec_ghz: f64,
}

impl SweepSpec {
    pub fn ratios(&self) -> Vec<f64> {
        if self.points == 1 || self.ratio_min == self.ratio_max {
            return vec![self.ratio_min];
        }
        let step = (self.ratio_max - self.ratio_min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.ratio_min + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RamseySource {
    Synthetic {
        ng_sigma_2e: f64,
        ng_delta_2e: f64,
        branches: Branches,
        weights: [f64; 4],
    },
    TraceFile(FileRef),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RamseySpec {
    pub source: RamseySource,
    pub epsilon_mhz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LocalizeInput {
    Measured { ng_sigma_2e: f64, ng_delta_2e: f64 },
    Forward { x_um: f64, y_um: f64, q_e: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Uncertainty {
    Absolute { sigma_ng_sigma_2e: f64, sigma_ng_delta_2e: f64 },
    /// Fraction of the largest map entry of each coordinate.
    Fraction { fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalizeSpec {
    pub input: LocalizeInput,
    pub uncertainty: Uncertainty,
    pub q_assumed_e: f64,
    pub restrict_quadrant: bool,
    pub refine: usize,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub seed: u64,
    pub device: DeviceSpec,
    pub experiment: ExperimentSpec,
    pub noise: NoiseSpec,
    pub scenario: ScenarioSpec,
    pub map: MapSource,
    pub sweep: SweepSpec,
    pub ramsey: RamseySpec,
    pub localize: LocalizeSpec,
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
}

impl Resolved {
    /// SHA-256 over the canonical JSON form. Formatting, key order, comments,
    /// presets versus their explicit values and file paths do not matter.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// All defaults: device A, the reference scenario and a surrogate map.
    pub fn defaults() -> Self {
        load_str("", None, &Overrides::default()).expect("defaults resolve")
    }
}

/// Command-line settings that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub map: Option<PathBuf>,
    pub transition: Option<Transition>,
}

pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Resolved, ConfigError> {
    match path {
        None => load_str("", None, ov),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError {
                file: Some(p.to_path_buf()),
                line: None,
                key: String::new(),
                message: format!("cannot read config: {e}"),
            })?;
            load_str(&text, Some(p), ov)
        }
    }
}

/// Parses and resolves config text. Relative file references are taken
/// relative to the config file's directory.
pub fn load_str(text: &str, path: Option<&Path>, ov: &Overrides) -> Result<Resolved, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        file: path.map(Path::to_path_buf),
        line: e.span().map(|s| line_of(text, s.start)),
        key: String::new(),
        message: e.message().trim_end().to_string(),
    })?;
    let base = path.and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default();
    let r = Resolver { text, path, base };
    r.resolve(raw, ov)
}

fn line_of(text: &str, byte: usize) -> usize {
    text[..byte.min(text.len())].matches('\n').count() + 1
}

struct Resolver<'a> {
    text: &'a str,
    path: Option<&'a Path>,
    base: PathBuf,
}

type R<T> = Result<T, ConfigError>;

impl Resolver<'_> {
    /// Line of `key` inside `[section]` (or of the section header when the
    /// key is absent).
    fn locate(&self, section: &str, key: &str) -> Option<usize> {
        let mut current = String::new();
        let mut header = None;
        for (i, line) in self.text.lines().enumerate() {
            let t = line.trim();
            if t.starts_with('[') {
                current = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
                if current == section && header.is_none() {
                    header = Some(i + 1);
                }
                continue;
            }
            if current == section {
                if let Some(rest) = t.strip_prefix(key) {
                    if rest.trim_start().starts_with('=') {
                        return Some(i + 1);
                    }
                }
            }
        }
        header
    }

    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        let full = if section.is_empty() {
            key.to_string()
        } else if key.is_empty() {
            section.to_string()
        } else {
            format!("{section}.{key}")
        };
        ConfigError {
            file: self.path.map(Path::to_path_buf),
            line: self.locate(section, key),
            key: full,
            message: message.into(),
        }
    }

    fn positive(&self, section: &str, key: &str, v: f64) -> R<f64> {
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(self.err(section, key, format!("must be a positive finite number, got {v}")))
        }
    }

    fn non_negative(&self, section: &str, key: &str, v: f64) -> R<f64> {
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(self.err(section, key, format!("must be a non-negative finite number, got {v}")))
        }
    }

    fn finite(&self, section: &str, key: &str, v: f64) -> R<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(section, key, format!("must be finite, got {v}")))
        }
    }

    fn file(&self, section: &str, key: &str, p: &Path) -> R<FileRef> {
        let full = if p.is_absolute() { p.to_path_buf() } else { self.base.join(p) };
        FileRef::open(full).map_err(|m| self.err(section, key, m))
    }

    fn resolve(&self, raw: RawConfig, ov: &Overrides) -> R<Resolved> {
        let device = self.device(&raw.device)?;
        let mut experiment = self.experiment(&raw.experiment)?;
        if let Some(t) = ov.transition {
            experiment.transition = t;
        }
        let noise = self.noise(&raw.noise)?;
        let scenario = self.scenario(raw.scenario.as_ref())?;
        let map = match &ov.map {
            Some(p) => MapSource::File(FileRef::open(p.clone()).map_err(|m| ConfigError {
                file: None,
                line: None,
                key: "--map".into(),
                message: m,
            })?),
            None => self.map(raw.map.as_ref())?,
        };
        let sweep = self.sweep(&raw.sweep)?;
        let ramsey = self.ramsey(&raw.ramsey)?;
        let localize = self.localize(&raw.localize)?;
        Ok(Resolved {
            seed: ov.seed.or(raw.seed).unwrap_or(0),
            device,
            experiment,
            noise,
            scenario,
            map,
            sweep,
            ramsey,
            localize,
            output_dir: ov.out.clone().or(raw.output_dir),
        })
    }

    fn device(&self, d: &RawDevice) -> R<DeviceSpec> {
        const S: &str = "device";
        let cutoff = d.cutoff.unwrap_or(DEFAULT_CUTOFF);
        let energies = [d.ej_ghz, d.ej1_ghz, d.ej2_ghz, d.ec_ghz, d.ep_ghz, d.c_ff, d.cm_ff];
        let explicit = energies.iter().any(Option::is_some);
        let p = if let Some(name) = &d.preset {
            if explicit {
                return Err(self.err(S, "preset", "a preset excludes explicit energies or capacitances"));
            }
            match name.as_str() {
                "device-a" => CircuitParams::device_a(),
                "device-b" => CircuitParams::device_b(),
                other => {
                    return Err(self.err(S, "preset", format!("unknown preset `{other}` (expected device-a or device-b)")))
                }
            }
        } else if !explicit {
            CircuitParams::device_a()
        } else {
            let (ej1, ej2) = match (d.ej_ghz, d.ej1_ghz, d.ej2_ghz) {
                (Some(e), None, None) => (e, e),
                (None, Some(a), Some(b)) => (a, b),
                (None, None, None) => return Err(self.err(S, "", "missing `ej_ghz` (or `ej1_ghz` and `ej2_ghz`)")),
                _ => return Err(self.err(S, "ej_ghz", "give either `ej_ghz` or both `ej1_ghz` and `ej2_ghz`")),
            };
            let built = match (d.c_ff, d.cm_ff, d.ec_ghz, d.ep_ghz) {
                (Some(c), Some(cm), None, None) => CircuitParams::from_capacitances(c, cm, ej1, ej2),
                (None, None, Some(ec), Some(ep)) => CircuitParams::new(ej1, ej2, ec, ep),
                (Some(_), _, Some(_), _) | (Some(_), _, _, Some(_)) | (_, Some(_), Some(_), _) | (_, Some(_), _, Some(_)) => {
                    return Err(self.err(S, "c_ff", "capacitances and charging energies are mutually exclusive"))
                }
                (Some(_), None, _, _) | (None, Some(_), _, _) => {
                    return Err(self.err(S, "c_ff", "capacitances need both `c_ff` and `cm_ff`"))
                }
                _ => return Err(self.err(S, "ec_ghz", "charging energies need both `ec_ghz` and `ep_ghz`")),
            };
            built.map_err(|e| self.err(S, "", e.to_string()))?
        };
        if cutoff < twomode::hamiltonian::MIN_CUTOFF {
            return Err(self.err(
                S,
                "cutoff",
                format!("must be at least {}, got {cutoff}", twomode::hamiltonian::MIN_CUTOFF),
            ));
        }
        Ok(DeviceSpec {
            ej1_ghz: p.ej1(),
            ej2_ghz: p.ej2(),
            ec_ghz: p.ec(),
            ep_ghz: p.ep(),
            cutoff,
        })
    }

    fn experiment(&self, e: &RawExperiment) -> R<ExperimentSpec> {
        const S: &str = "experiment";
        let spec = ExperimentSpec {
            detuning_mhz: self.positive(S, "detuning_mhz", e.detuning_mhz.unwrap_or(3.5))?,
            shots: match e.shots.unwrap_or(2500) {
                0 => return Err(self.err(S, "shots", "must be at least 1")),
                n => n,
            },
            delay_count: match e.delay_count.unwrap_or(401) {
                n if n < 16 => return Err(self.err(S, "delay_count", format!("need at least 16 delays, got {n}"))),
                n => n,
            },
            delay_step_us: self.positive(S, "delay_step_us", e.delay_step_us.unwrap_or(0.05))?,
            t2_us: self.positive(S, "t2_us", e.t2_us.unwrap_or(15.0))?,
            acquisition_ms: self.non_negative(S, "acquisition_ms", e.acquisition_ms.unwrap_or(100.0))?,
            pad: match e.pad.unwrap_or(4) {
                0 => return Err(self.err(S, "pad", "must be at least 1")),
                n => n,
            },
            window: match &e.window {
                None => Window::None,
                Some(w) => w.parse().map_err(|x: twomode::Error| self.err(S, "window", x.to_string()))?,
            },
            transition: match &e.transition {
                None => Transition::Delta,
                Some(t) => t.parse().map_err(|x: twomode::Error| self.err(S, "transition", x.to_string()))?,
            },
        };
        spec.experiment().validate().map_err(|x| self.err(S, "", x.to_string()))?;
        Ok(spec)
    }

    fn noise(&self, n: &RawNoise) -> R<NoiseSpec> {
        const S: &str = "noise";
        let drift = n.drift.unwrap_or_default();
        drift.validate().map_err(|x| self.err("noise.drift", "", x.to_string()))?;
        Ok(NoiseSpec {
            qp_rate_per_us: self.non_negative(S, "qp_rate_per_us", n.qp_rate_per_us.unwrap_or(DEFAULT_QP_RATE_PER_US))?,
            drift,
        })
    }

    fn branches(&self, section: &str, v: Option<&String>) -> R<Branches> {
        match v.map(String::as_str) {
            None | Some("tight-binding") => Ok(Branches::TightBinding),
            Some("numerical") => Ok(Branches::Numerical),
            Some(other) => Err(self.err(
                section,
                "branches",
                format!("unknown branch model `{other}` (expected tight-binding or numerical)"),
            )),
        }
    }

    fn scenario(&self, s: Option<&RawScenario>) -> R<ScenarioSpec> {
        const S: &str = "scenario";
        let empty = RawScenario::default();
        let s = s.unwrap_or(&empty);
        let sources = [s.preset.is_some(), s.waypoints.is_some(), s.offset_waypoints.is_some()];
        let (duration_min, cadence_min, path) = match sources {
            [true, false, false] | [false, false, false] => {
                if let Some(p) = s.preset.as_deref().filter(|p| *p != "reference") {
                    return Err(self.err(S, "preset", format!("unknown preset `{p}` (expected reference)")));
                }
                let r = twomode::noise::ScenarioScript::reference(1.0);
                let twomode::noise::Path::Spatial(w) = r.path else {
                    unreachable!("reference path is spatial")
                };
                let w = w
                    .iter()
                    .map(|p| SpatialWaypoint {
                        t_min: p.t_min,
                        x_um: p.x_um,
                        y_um: p.y_um,
                        q_e: p.q,
                    })
                    .collect();
                (
                    s.duration_min.unwrap_or(r.duration_min),
                    s.cadence_min.unwrap_or(r.cadence_min),
                    PathSpec::Spatial(w),
                )
            }
            [false, true, false] | [false, false, true] => {
                let d = s.duration_min.ok_or_else(|| self.err(S, "duration_min", "required for an explicit path"))?;
                let c = s.cadence_min.ok_or_else(|| self.err(S, "cadence_min", "required for an explicit path"))?;
                let path = match (&s.waypoints, &s.offset_waypoints) {
                    (Some(w), None) => PathSpec::Spatial(w.clone()),
                    (None, Some(w)) => PathSpec::Offsets(w.clone()),
                    _ => unreachable!(),
                };
                (d, c, path)
            }
            _ => {
                return Err(self.err(
                    S,
                    "",
                    "give exactly one of `preset`, `[[scenario.waypoints]]` or `[[scenario.offset_waypoints]]`",
                ))
            }
        };
        let spec = ScenarioSpec {
            duration_min: self.positive(S, "duration_min", duration_min)?,
            cadence_min: self.positive(S, "cadence_min", cadence_min)?,
            epsilon_mhz: s.epsilon_mhz.map(|e| self.positive(S, "epsilon_mhz", e)).transpose()?,
            branches: self.branches(S, s.branches.as_ref())?,
            path,
        };
        spec.script(1.0, Transition::Delta, twomode::noise::BranchModel::TightBinding)
            .validate()
            .map_err(|x| self.err(S, "", x.to_string()))?;
        Ok(spec)
    }

    fn map(&self, m: Option<&RawMap>) -> R<MapSource> {
        const S: &str = "map";
        let Some(m) = m else {
            return Ok(MapSource::Surrogate {
                geometry: DeviceGeometry::device_a(),
                half_width_um: 600.0,
                step_um: 5.0,
            });
        };
        match (&m.surrogate, &m.file) {
            (Some(g), None) => {
                let geometry = match g.as_str() {
                    "device-a" => DeviceGeometry::device_a(),
                    "device-b" => DeviceGeometry::device_b(),
                    other => {
                        return Err(self.err(
                            S,
                            "surrogate",
                            format!("unknown geometry `{other}` (expected device-a or device-b)"),
                        ))
                    }
                };
                let step = self.positive(S, "step_um", m.step_um.unwrap_or(5.0))?;
                if step > twomode::locator::MAX_SPACING_UM {
                    return Err(self.err(
                        S,
                        "step_um",
                        format!("coarser than the {} um localization limit", twomode::locator::MAX_SPACING_UM),
                    ));
                }
                Ok(MapSource::Surrogate {
                    geometry,
                    half_width_um: self.positive(S, "half_width_um", m.half_width_um.unwrap_or(600.0))?,
                    step_um: step,
                })
            }
            (None, Some(f)) => {
                if m.half_width_um.is_some() || m.step_um.is_some() {
                    return Err(self.err(S, "file", "a map file carries its own grid; drop `half_width_um`/`step_um`"));
                }
                Ok(MapSource::File(self.file(S, "file", f)?))
            }
            _ => Err(self.err(S, "", "give exactly one map source: `surrogate` or `file`")),
        }
    }

    fn sweep(&self, s: &RawSweep) -> R<SweepSpec> {
        const S: &str = "sweep";
        let spec = SweepSpec {
            ratio_min: self.positive(S, "ratio_min", s.ratio_min.unwrap_or(15.0))?,
            ratio_max: self.positive(S, "ratio_max", s.ratio_max.unwrap_or(80.0))?,
            points: s.points.unwrap_or(14),
            ep_over_ec: self.non_negative(S, "ep_over_ec", s.ep_over_ec.unwrap_or(0.4))?,
            ec_ghz: self.positive(S, "ec_ghz", s.ec_ghz.unwrap_or(0.5))?,
        };
        if spec.ratio_max < spec.ratio_min || spec.points == 0 {
            return Err(self.err(
                S,
                "ratio_max",
                format!(
                    "empty range: ratio_min {} .. ratio_max {} with {} points",
                    spec.ratio_min, spec.ratio_max, spec.points
                ),
            ));
        }
        if spec.ep_over_ec >= 2.0 {
            return Err(self.err(S, "ep_over_ec", "must stay below 2 for bounded modes"));
        }
        Ok(spec)
    }

    fn ramsey(&self, r: &RawRamsey) -> R<RamseySpec> {
        const S: &str = "ramsey";
        let synthetic = r.ng_sigma_2e.is_some() || r.ng_delta_2e.is_some() || r.weights.is_some() || r.branches.is_some();
        let source = match &r.trace_file {
            Some(_) if synthetic => return Err(self.err(S, "trace_file", "a trace file excludes the synthetic-trace keys")),
            Some(f) => RamseySource::TraceFile(self.file(S, "trace_file", f)?),
            None => {
                let weights = r.weights.unwrap_or(twomode::ramsey::EQUAL_WEIGHTS);
                twomode::ramsey::check_weights(&weights).map_err(|x| self.err(S, "weights", x.to_string()))?;
                RamseySource::Synthetic {
                    ng_sigma_2e: self.finite(S, "ng_sigma_2e", r.ng_sigma_2e.unwrap_or(0.3))?,
                    ng_delta_2e: self.finite(S, "ng_delta_2e", r.ng_delta_2e.unwrap_or(0.1))?,
                    branches: self.branches(S, r.branches.as_ref())?,
                    weights,
                }
            }
        };
        Ok(RamseySpec {
            source,
            epsilon_mhz: r.epsilon_mhz.map(|e| self.positive(S, "epsilon_mhz", e)).transpose()?,
        })
    }

    fn localize(&self, l: &RawLocalize) -> R<LocalizeSpec> {
        const S: &str = "localize";
        let measured = l.ng_sigma_2e.is_some() || l.ng_delta_2e.is_some();
        let forward = l.x_um.is_some() || l.y_um.is_some() || l.q_e.is_some();
        let input = match (measured, forward) {
            (true, true) => {
                return Err(self.err(S, "ng_sigma_2e", "measured offsets exclude a forward source (`x_um`, `y_um`, `q_e`)"))
            }
            (true, false) => LocalizeInput::Measured {
                ng_sigma_2e: self.finite(
                    S,
                    "ng_sigma_2e",
                    l.ng_sigma_2e.ok_or_else(|| self.err(S, "ng_delta_2e", "needs `ng_sigma_2e` as well"))?,
                )?,
                ng_delta_2e: self.finite(
                    S,
                    "ng_delta_2e",
                    l.ng_delta_2e.ok_or_else(|| self.err(S, "ng_sigma_2e", "needs `ng_delta_2e` as well"))?,
                )?,
            },
            (false, _) => LocalizeInput::Forward {
                x_um: self.finite(S, "x_um", l.x_um.unwrap_or(-60.0))?,
                y_um: self.finite(S, "y_um", l.y_um.unwrap_or(120.0))?,
                q_e: self.finite(S, "q_e", l.q_e.unwrap_or(1.0))?,
            },
        };
        let uncertainty = match (l.sigma_ng_sigma_2e, l.sigma_ng_delta_2e, l.sigma_fraction) {
            (Some(a), Some(b), None) => Uncertainty::Absolute {
                sigma_ng_sigma_2e: self.positive(S, "sigma_ng_sigma_2e", a)?,
                sigma_ng_delta_2e: self.positive(S, "sigma_ng_delta_2e", b)?,
            },
            (None, None, f) => Uncertainty::Fraction {
                fraction: self.positive(S, "sigma_fraction", f.unwrap_or(0.01))?,
            },
            (_, _, Some(_)) => {
                return Err(self.err(S, "sigma_fraction", "excludes `sigma_ng_sigma_2e`/`sigma_ng_delta_2e`"))
            }
            _ => return Err(self.err(S, "sigma_ng_sigma_2e", "give both `sigma_ng_sigma_2e` and `sigma_ng_delta_2e`")),
        };
        let refine = l.refine.unwrap_or(8);
        if !(1..=64).contains(&refine) {
            return Err(self.err(S, "refine", format!("must lie in 1..=64, got {refine}")));
        }
        Ok(LocalizeSpec {
            input,
            uncertainty,
            q_assumed_e: self.finite(S, "q_assumed_e", l.q_assumed_e.unwrap_or(1.0))?,
            restrict_quadrant: l.restrict_quadrant.unwrap_or(true),
            refine,
        })
    }
}

impl ScenarioSpec {
    pub fn script(
        &self,
        epsilon_mhz: f64,
        mode: Transition,
        branches: twomode::noise::BranchModel,
    ) -> twomode::noise::ScenarioScript {
        use twomode::noise::{Path as P, Waypoint};
        let path = match &self.path {
            PathSpec::Spatial(w) => P::Spatial(
                w.iter()
                    .map(|p| Waypoint {
                        t_min: p.t_min,
                        x_um: p.x_um,
                        y_um: p.y_um,
                        q: p.q_e,
                    })
                    .collect(),
            ),
            PathSpec::Offsets(w) => P::Offsets(
                w.iter()
                    .map(|p| twomode::noise::OffsetWaypoint {
                        t_min: p.t_min,
                        ng_sigma: p.ng_sigma_2e,
                        ng_delta: p.ng_delta_2e,
                    })
                    .collect(),
            ),
        };
        twomode::noise::ScenarioScript {
            duration_min: self.duration_min,
            cadence_min: self.cadence_min,
            path,
            epsilon_mhz,
            branches,
            mode,
        }
    }

    pub fn needs_map(&self) -> bool {
        matches!(self.path, PathSpec::Spatial(_))
    }
}
