use std::path::Path;
use std::process::{Command, Output};

fn ces_opt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ces-opt"))
        .args(args)
        .env_remove("CES_OPT_JOBS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{"study": {"households": 2, "pv_areas": [15], "bes_sizes": [5], "years": [2015, 2035]}}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn unknown_scenario_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = ces_opt(&["run", "--scenario", "9", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("scenario 9"));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"study": {"foo": 1}}"#).unwrap();
    let o = ces_opt(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("foo"), "{}", stderr(&o));
}

#[test]
fn missing_spot_csv_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let data = dir.path().join("data");
    let o = ces_opt(&["synth", "--config", &cfg, "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::remove_file(data.join("spot.csv")).unwrap();
    let o = ces_opt(&["run", "--config", &cfg, "--data", data.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("spot.csv"), "{}", stderr(&o));
}

#[test]
fn run_writes_kpis_and_flows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let o = ces_opt(&[
        "run", "--config", &cfg, "--scenario", "1", "--topology", "ces", "--pv", "15", "--bes", "5", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let kpi: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("s1_ces_pv15_bes5_kpi.json")).unwrap()).unwrap();
    for field in ["scr", "ssr", "ur", "afb_total", "eac", "eav"] {
        assert!(kpi["per_household"].get(field).is_some(), "missing {field}");
    }
    let flows = std::fs::read_to_string(out.join("s1_ces_pv15_bes5_flows.csv")).unwrap();
    assert_eq!(flows.lines().count(), 35_041);
    assert!(flows.starts_with("step,h1_pv_to_load"));
}

#[test]
fn sweep_is_deterministic_and_tables_reemit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = ces_opt(&["sweep", "--config", &cfg, "--scenario", "1", "--topology", "ces", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let first = read_all(&a);
    assert_eq!(first, read_all(&b));
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    for n in ["s1_ces_2015_afb.csv", "s1_ces_2015_eac.csv", "s1_ces_2015_eav.csv", "s1_ces_2015_ur.csv", "summary.csv", "coverage.csv"] {
        assert!(names.contains(&n), "{n} missing from {names:?}");
    }

    let c = dir.path().join("c");
    let o = ces_opt(&["tables", "--kpi", a.join("s1_ces_2035_kpi.json").to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for (name, bytes) in read_all(&c) {
        let orig = first.iter().find(|(n, _)| *n == name).expect("same file names");
        assert_eq!(&orig.1, &bytes, "{name}");
    }
}
