use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use twomode::locator::{save_map, surrogate_map, DeviceGeometry, GridSpec};

fn twomode(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twomode"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("bundle.json")).unwrap()).unwrap()
}

#[test]
fn same_config_and_seed_give_identical_bytes() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("run.toml"), "seed = 4\n[ramsey]\nng_sigma_2e = 0.25\nng_delta_2e = 0.1\n").unwrap();
    for out in ["a", "b"] {
        let o = twomode(d.path(), &["ramsey", "--config", "run.toml", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = twomode(d.path(), &["ramsey", "--config", "run.toml", "--out", "c", "--seed", "5"]);
    assert!(o.status.success());
    let a = files(&d.path().join("a/ramsey"));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["branches.csv", "bundle.json", "charge.csv", "fit.csv", "spectrum.csv", "trace.csv"]);
    assert_eq!(a, files(&d.path().join("b/ramsey")));
    let c = files(&d.path().join("c/ramsey"));
    let trace = |v: &[(String, Vec<u8>)]| v.iter().find(|(n, _)| n == "trace.csv").unwrap().1.clone();
    assert_ne!(trace(&a), trace(&c));
    let (ma, mc) = (manifest(&d.path().join("a/ramsey")), manifest(&d.path().join("c/ramsey")));
    assert_eq!(ma["format"], "twomode-result-bundle/1");
    assert_eq!(ma["provenance"]["seed"], 4);
    assert_eq!(mc["provenance"]["seed"], 5);
    assert_ne!(ma["config_hash"], mc["config_hash"]);
}

#[test]
fn reformatted_config_keeps_its_hash() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("a.toml"), "[device]\nej_ghz = 11.0\nec_ghz = 0.5\nep_ghz = 0.2\n").unwrap();
    fs::write(d.path().join("b.toml"), "# device A\n[device]\nep_ghz = 0.2\nec_ghz = 0.5\nej_ghz = 11\n").unwrap();
    for (cfg, out) in [("a.toml", "a"), ("b.toml", "b")] {
        let o = twomode(d.path(), &["spectrum", "--config", cfg, "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(
        manifest(&d.path().join("a/spectrum"))["config_hash"],
        manifest(&d.path().join("b/spectrum"))["config_hash"]
    );
    let csv = fs::read_to_string(d.path().join("a/spectrum/modes.csv")).unwrap();
    assert!(csv.starts_with("method [-],omega_sigma [GHz],omega_delta [GHz],"), "{csv}");
}

#[test]
fn degenerate_modes_fail_with_core_message() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("run.toml"), "[device]\nej_ghz = 11.0\nec_ghz = 0.5\nep_ghz = 0.0\n").unwrap();
    let o = twomode(d.path(), &["spectrum", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("error: spectrum: state labeling failed"), "{e}");
    assert!(!d.path().join("results/spectrum").exists());
}

#[test]
fn bad_config_exits_2_with_line() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("run.toml"), "seed = 1\n[experiment]\nt2 = 15.0\n").unwrap();
    let o = twomode(d.path(), &["ramsey", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("run.toml:3:"), "{e}");
    assert!(e.contains("t2_us"), "{e}");
}

#[test]
fn mode_flag_only_on_ramsey_verbs() {
    let d = tempfile::tempdir().unwrap();
    let o = twomode(d.path(), &["spectrum", "--mode", "sigma"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--mode"));
    let o = twomode(d.path(), &["ramsey", "--mode", "sideways"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn map_flag_uses_a_saved_map() {
    let d = tempfile::tempdir().unwrap();
    let map = surrogate_map(&DeviceGeometry::device_a(), &GridSpec::symmetric(200.0, 5.0).unwrap()).unwrap();
    save_map(&map, &d.path().join("map.txt")).unwrap();
    fs::write(d.path().join("run.toml"), "[localize]\nx_um = 40.0\ny_um = 80.0\n").unwrap();
    let o = twomode(d.path(), &["localize", "--config", "run.toml", "--map", "map.txt", "--out", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&d.path().join("o/localize"));
    assert_eq!(m["metrics"]["hit"], true);
    let o = twomode(d.path(), &["localize", "--map", "missing.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.txt"));
}
