use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn nhreal(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhreal"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn nhreal")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn fig4_passes_and_is_repeatable() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let oa = nhreal(&["fig4"], a.path());
    let ob = nhreal(&["fig4"], b.path());
    assert_eq!(oa.status.code(), Some(0), "{}", stdout(&oa));
    assert_eq!(ob.status.code(), Some(0));
    assert!(!stdout(&oa).contains("FAIL"));
    for f in ["fig4.json", "fig4_eigenvalues.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let log = fs::read_to_string(a.path().join("fig4.log")).unwrap();
    assert!(log.contains("argv") && log.ends_with("ALL PASS\n"));
}

#[test]
fn json_format_inlines_tables() {
    let d = TempDir::new().unwrap();
    let o = nhreal(&["oscillators", "--format", "json"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("oscillators.json")).unwrap()).unwrap();
    assert!(v["tables"].as_array().is_some_and(|t| !t.is_empty()));
    assert!(!d.path().join("oscillators_modes.csv").exists());
}

#[test]
fn calibration_file_is_written_and_reused() {
    let d = TempDir::new().unwrap();
    let o = nhreal(&["calibrate_s"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let rec: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("calibration.json")).unwrap()).unwrap();
    let s = rec["s"].as_f64().unwrap();
    assert!((s - 1.7976929597762628).abs() < 1e-9, "{s}");
    let o = nhreal(&["fig2"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn unreachable_anchor_fails_with_status_one() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "c.json", r#"{"scenario":"calibrate_s","anchor":40.0}"#);
    let o = nhreal(&["calibrate_s", "--config", &cfg], d.path());
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
    assert!(!d.path().join("calibration.json").exists());
}

#[test]
fn tightened_tolerance_fails_with_status_one() {
    let d = TempDir::new().unwrap();
    let o = nhreal(&["fig3", "--tol", "laser.balance=1e-20"], d.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_errors_exit_with_status_two() {
    let d = TempDir::new().unwrap();
    let unknown = write_config(d.path(), "u.json", r#"{"scenario":"fig1","colour":"red"}"#);
    let o = nhreal(&["fig1", "--config", &unknown], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    let other = write_config(d.path(), "m.json", r#"{"scenario":"fig1"}"#);
    let o = nhreal(&["fig2", "--config", &other], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fig2"));

    let fixed = write_config(d.path(), "f.json", r#"{"scenario":"fig1","lattice":{"n":4,"t":1.0}}"#);
    assert_eq!(nhreal(&["fig1", "--config", &fixed], d.path()).status.code(), Some(2));

    assert_eq!(nhreal(&["fig1", "--tol", "nope=1"], d.path()).status.code(), Some(2));
}

#[test]
fn custom_indefinite_lattice() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(
        d.path(),
        "c.json",
        r#"{"scenario":"custom","lattice":{"n":6,"t":1.0,"scaling":{"kind":"explicit","values":[1,-0.5,2,1,-1,0.7]},"allow_indefinite":true}}"#,
    );
    let o = nhreal(&["custom", "--config", &cfg], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("closed under conjugation"));
}

#[test]
fn properties_small_run() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "p.json", r#"{"scenario":"properties","trials":10,"seed":3}"#);
    let o = nhreal(&["properties", "--config", &cfg], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let summary = fs::read_to_string(d.path().join("properties_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
}
