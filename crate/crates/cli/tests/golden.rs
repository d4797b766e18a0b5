//! Published table schemas are frozen in `tests/golden/schemas.json`.
//! Regenerate with `TWOMODE_BLESS=1 cargo test -p twomode-cli --test golden`
//! after a deliberate change.

use std::collections::BTreeMap;
use std::path::PathBuf;

use twomode::hamiltonian::{solve_spectrum, ChargeConfig, CircuitParams, DEFAULT_CUTOFF};
use twomode_cli::schema::{command_tables, TableSchema, COMMANDS};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[test]
fn schemas_match_golden() {
    let all: BTreeMap<&str, &[&TableSchema]> = COMMANDS.iter().map(|c| (*c, command_tables(c).unwrap())).collect();
    let now = serde_json::to_string_pretty(&all).unwrap() + "\n";
    let path = golden("schemas.json");
    if std::env::var_os("TWOMODE_BLESS").is_some() {
        std::fs::write(&path, &now).unwrap();
    }
    let frozen = std::fs::read_to_string(&path).unwrap();
    assert_eq!(now, frozen, "schemas changed; bless deliberately if intended");
    assert!(command_tables("bogus").is_none());
}

#[test]
fn device_a_levels_match_golden() {
    let p = CircuitParams::device_a();
    let s = solve_spectrum(&p, &ChargeConfig::default(), DEFAULT_CUTOFF, 6).unwrap();
    let path = golden("device_a_levels.csv");
    if std::env::var_os("TWOMODE_BLESS").is_some() {
        let mut text = String::from("label,energy_ghz\n");
        for l in &s.levels {
            text.push_str(&format!("{}{},{:.12}\n", l.m, l.n, l.energy));
        }
        std::fs::write(&path, text).unwrap();
    }
    let frozen = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<(String, f64)> = frozen
        .lines()
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.to_string(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), s.levels.len());
    for ((lab, e), l) in rows.iter().zip(&s.levels) {
        assert_eq!(*lab, format!("{}{}", l.m, l.n));
        assert!((e - l.energy).abs() < 1e-9, "{lab}: {e} vs {}", l.energy);
    }
}
