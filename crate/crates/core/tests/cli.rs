use std::path::Path;
use std::process::{Command, Output};

use jmflow::harness::{read_ledger, rehash};

fn jmflow(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jmflow"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("JMFLOW_CACHE_DIR", out)
        .output()
        .unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(jmflow(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(jmflow(dir.path(), &["phi", "--h"]).status.code(), Some(2));
}

#[test]
fn negative_energy_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = jmflow(
        dir.path(),
        &["--scenario", "kepler-hyperbolic", "phi", "--h", "-1", "--from", "escape", "--to", "oblique"],
    );
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "precondition");
}

#[test]
fn invalid_scenario_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "jmflow_schema = 1\nname = \"bad\"\nmasses = [1.0, -2.0]\ndim = 2\n").unwrap();
    let out = jmflow(dir.path(), &["--scenario", path.to_str().unwrap(), "integrate", "--state", "x"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "schema");
    assert!(err["error"]["message"].as_str().unwrap().contains("masses[1]"));
}

#[test]
fn runs_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let sc = ["--scenario", "kepler-hyperbolic"];
    let a = jmflow(dir.path(), &[&sc[..], &["integrate", "--state", "escape", "--t", "10"]].concat());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let far = dir.path().join("far.csv");
    std::fs::write(&far, "-2,0.5,2,-0.5,0,0,0,0\n").unwrap();
    let b = jmflow(
        dir.path(),
        &[&sc[..], &["--json", "phi", "--h", "0.5", "--from", "escape", "--to", far.to_str().unwrap()]].concat(),
    );
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    let res: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    assert!(res["value"].as_f64().unwrap() > 0.0);

    let ledger = read_ledger(dir.path()).unwrap();
    assert_eq!(ledger.len(), 2);
    assert_eq!(ledger[0].command, "integrate");
    assert_eq!(ledger[1].command, "phi");
    for r in &ledger {
        assert!(r.missing_outputs().is_empty());
        let source = r.scenario.as_deref().unwrap();
        assert_eq!(Some(rehash(source).unwrap()), r.scenario_hash);
    }
}
