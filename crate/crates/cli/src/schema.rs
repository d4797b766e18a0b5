//! Published column schemas of every table a command can emit.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Float,
    Int,
    Text,
    Bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Column {
    pub name: &'static str,
    /// `-` for dimensionless quantities, `2e` for offset charge in
    /// Cooper-pair units, `arb` for arbitrary units.
    pub unit: &'static str,
    pub kind: Kind,
}

impl Column {
    pub fn header(&self) -> String {
        format!("{} [{}]", self.name, self.unit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TableSchema {
    pub name: &'static str,
    pub columns: &'static [Column],
}

const fn f(name: &'static str, unit: &'static str) -> Column {
    Column { name, unit, kind: Kind::Float }
}

const fn i(name: &'static str) -> Column {
    Column { name, unit: "-", kind: Kind::Int }
}

const fn t(name: &'static str) -> Column {
    Column { name, unit: "-", kind: Kind::Text }
}

const fn b(name: &'static str) -> Column {
    Column { name, unit: "-", kind: Kind::Bool }
}

pub static LEVELS: TableSchema = TableSchema {
    name: "levels",
    columns: &[
        t("label"),
        i("m"),
        i("n"),
        f("energy", "GHz"),
        f("relative_energy", "GHz"),
        f("overlap", "-"),
        t("label_resolution"),
    ],
};

pub static MODES: TableSchema = TableSchema {
    name: "modes",
    columns: &[
        t("method"),
        f("omega_sigma", "GHz"),
        f("omega_delta", "GHz"),
        f("eta_sigma", "GHz"),
        f("eta_delta", "GHz"),
        f("chi", "GHz"),
    ],
};

pub static SWEEP: TableSchema = TableSchema {
    name: "sweep",
    columns: &[
        f("ej_over_ec", "-"),
        f("ej", "GHz"),
        f("eps_00_numerical", "GHz"),
        f("eps_00_analytic", "GHz"),
        f("eps_01_numerical", "GHz"),
        f("eps_01_analytic", "GHz"),
        f("eps_10_numerical", "GHz"),
        f("eps_10_analytic", "GHz"),
        f("eps_02_numerical", "GHz"),
        f("eps_02_analytic", "GHz"),
    ],
};

pub static MARKERS: TableSchema = TableSchema {
    name: "markers",
    columns: &[
        t("label"),
        f("ej_over_ec", "-"),
        f("eps_00_numerical", "GHz"),
        f("eps_01_numerical", "GHz"),
        f("eps_10_numerical", "GHz"),
        f("eps_02_numerical", "GHz"),
    ],
};

pub static CALIBRATION: TableSchema = TableSchema {
    name: "calibration",
    columns: &[
        t("level"),
        f("a0", "-"),
        f("log_residual_std", "-"),
        f("worst_factor", "-"),
        i("points"),
    ],
};

pub static BRANCHES: TableSchema = TableSchema {
    name: "branches",
    columns: &[t("parity"), f("offset", "MHz"), f("weight", "-")],
};

pub static TRACE: TableSchema = TableSchema {
    name: "trace",
    columns: &[f("delay", "us"), f("probability", "-")],
};

pub static SPECTRUM: TableSchema = TableSchema {
    name: "spectrum",
    columns: &[f("frequency", "MHz"), f("magnitude", "arb")],
};

pub static FIT: TableSchema = TableSchema {
    name: "fit",
    columns: &[
        t("model"),
        f("center", "MHz"),
        f("center_sigma", "MHz"),
        f("df1", "MHz"),
        f("df1_sigma", "MHz"),
        f("df2", "MHz"),
        f("df2_sigma", "MHz"),
        f("fwhm", "MHz"),
        f("amplitude", "arb"),
        f("baseline", "arb"),
        b("resolved"),
        f("resolution", "MHz"),
        f("rms_residual", "arb"),
        i("iterations"),
    ],
};

pub static CHARGE: TableSchema = TableSchema {
    name: "charge",
    columns: &[
        f("ng_sigma", "2e"),
        f("sigma_ng_sigma", "2e"),
        f("ng_delta", "2e"),
        f("sigma_ng_delta", "2e"),
        b("clamped"),
    ],
};

pub static TRUTH: TableSchema = TableSchema {
    name: "truth",
    columns: &[
        f("time", "min"),
        f("ng_sigma", "2e"),
        f("ng_delta", "2e"),
        f("canonical_ng_sigma", "2e"),
        f("canonical_ng_delta", "2e"),
        f("x", "um"),
        f("y", "um"),
        f("q", "e"),
        f("weight_ee", "-"),
        f("weight_eo", "-"),
        f("weight_oe", "-"),
        f("weight_oo", "-"),
        i("parity_switches"),
        b("jump"),
    ],
};

pub static TRAJECTORY: TableSchema = TableSchema {
    name: "trajectory",
    columns: &[
        f("time", "min"),
        f("df1", "MHz"),
        f("df1_sigma", "MHz"),
        f("df2", "MHz"),
        f("df2_sigma", "MHz"),
        f("ng_sigma", "2e"),
        f("sigma_ng_sigma", "2e"),
        f("ng_delta", "2e"),
        f("sigma_ng_delta", "2e"),
        b("jump"),
        t("error"),
    ],
};

pub static REGION: TableSchema = TableSchema {
    name: "region",
    columns: &[
        f("best_x", "um"),
        f("best_y", "um"),
        f("chi2_min", "-"),
        f("area_1sigma", "um^2"),
        f("area_2sigma", "um^2"),
        b("quadrant_restricted"),
        f("ng_sigma", "2e"),
        f("ng_delta", "2e"),
        f("sigma_ng_sigma", "2e"),
        f("sigma_ng_delta", "2e"),
    ],
};

pub static IMAGES: TableSchema = TableSchema {
    name: "images",
    columns: &[i("image"), f("x", "um"), f("y", "um")],
};

pub static CONTOURS: TableSchema = TableSchema {
    name: "contours",
    columns: &[f("time", "min"), t("level"), i("segment"), f("x", "um"), f("y", "um")],
};

pub static LOCALIZATION: TableSchema = TableSchema {
    name: "localization",
    columns: &[
        f("time", "min"),
        f("best_x", "um"),
        f("best_y", "um"),
        f("area_1sigma", "um^2"),
        b("hit"),
        t("error"),
    ],
};

pub static METRICS: TableSchema = TableSchema {
    name: "metrics",
    columns: &[
        f("rms_ng", "2e"),
        f("hit_rate", "-"),
        f("jump_precision", "-"),
        f("jump_recall", "-"),
        i("n_points"),
        i("n_estimated"),
        i("n_flagged"),
        i("n_true_jumps"),
        b("meets_thresholds"),
    ],
};

static SPECTRUM_TABLES: [&TableSchema; 2] = [&LEVELS, &MODES];
static SWEEP_TABLES: [&TableSchema; 3] = [&SWEEP, &MARKERS, &CALIBRATION];
static RAMSEY_TABLES: [&TableSchema; 5] = [&BRANCHES, &TRACE, &SPECTRUM, &FIT, &CHARGE];
static TRACK_TABLES: [&TableSchema; 2] = [&TRUTH, &TRAJECTORY];
static LOCALIZE_TABLES: [&TableSchema; 3] = [&REGION, &IMAGES, &CONTOURS];
static END2END_TABLES: [&TableSchema; 5] = [&TRUTH, &TRAJECTORY, &LOCALIZATION, &CONTOURS, &METRICS];

/// Tables each command may emit, in emission order.
pub fn command_tables(command: &str) -> Option<&'static [&'static TableSchema]> {
    Some(match command {
        "spectrum" => &SPECTRUM_TABLES,
        "dispersion-sweep" => &SWEEP_TABLES,
        "ramsey" => &RAMSEY_TABLES,
        "track" => &TRACK_TABLES,
        "localize" => &LOCALIZE_TABLES,
        "end2end" => &END2END_TABLES,
        _ => return None,
    })
}

pub const COMMANDS: [&str; 6] = ["spectrum", "dispersion-sweep", "ramsey", "track", "localize", "end2end"];
