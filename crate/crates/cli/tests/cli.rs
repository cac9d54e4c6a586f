use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mpradon"))
}

fn gallery(dir: &Path) -> PathBuf {
    let g = dir.join("gallery");
    let out = bin().args(["gallery", "--out"]).arg(&g).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    g
}

fn run(kind: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(kind).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string(v).unwrap()).unwrap();
    p
}

#[test]
fn gallery_has_schema_valid_configs() {
    let tmp = TempDir::new().unwrap();
    let g = gallery(tmp.path());
    let files: Vec<_> = fs::read_dir(&g).unwrap().map(|e| e.unwrap().path()).collect();
    assert!(files.len() >= 12, "only {} configs", files.len());
    for f in files {
        let v: Value = serde_json::from_str(&fs::read_to_string(&f).unwrap()).unwrap();
        assert!(v["experiment"].is_string(), "{f:?}");
        assert!(v["seed"].is_u64(), "{f:?}");
    }
}

#[test]
fn newton_cubic_exits_unbounded_with_witness() {
    let tmp = TempDir::new().unwrap();
    let g = gallery(tmp.path());
    let out = tmp.path().join("newton");
    let r = run("newton", &g.join("newton-s3-t3-st.json"), &out, &[]);
    assert_eq!(r.status.code(), Some(3));
    let s = summary(&out);
    assert_eq!(s["results"]["witnesses"], serde_json::json!([[1, 1]]));
    assert_eq!(s["results"]["classification"], "unbounded");
}

#[test]
fn extended_verdict_has_its_own_exit_code() {
    let tmp = TempDir::new().unwrap();
    let g = gallery(tmp.path());
    let r = run("newton", &g.join("newton-st-extended.json"), &tmp.path().join("o"), &[]);
    assert_eq!(r.status.code(), Some(4));
}

#[test]
fn catalog_roundtrip_passes() {
    let tmp = TempDir::new().unwrap();
    let g = gallery(tmp.path());
    let out = tmp.path().join("rt");
    let r = run("gamma-roundtrip", &g.join("catalog-roundtrip.json"), &out, &[]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stdout));
    let s = summary(&out);
    assert!(s["results"]["max_error"].as_f64().unwrap() <= 1e-6);
    assert!(out.join("roundtrip.csv").exists());
}

#[test]
fn flag_versus_product_fixture() {
    let tmp = TempDir::new().unwrap();
    let g = gallery(tmp.path());
    let out = tmp.path().join("c");
    let r = run("control", &g.join("control-flag-vs-product.json"), &out, &[]);
    assert_eq!(r.status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["results"]["checks"][0]["status"], "pass");
    assert_eq!(s["results"]["checks"][1]["status"], "fail");
}

#[test]
fn flat_surface_leaves_the_leaf() {
    let tmp = TempDir::new().unwrap();
    let g = gallery(tmp.path());
    let out = tmp.path().join("leaf");
    let r = run("leaf", &g.join("leaf-flat.json"), &out, &[]);
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(summary(&out)["results"]["pass"], false);
}

#[test]
fn missing_seed_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let g = gallery(tmp.path());
    let mut v: Value = serde_json::from_str(&fs::read_to_string(g.join("chart-grushin.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("seed");
    let p = write_config(tmp.path(), "noseed.json", &v);
    let r = run("cc-chart", &p, &tmp.path().join("o"), &[]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("seed"));
    // The flag supplies it.
    let r = run("cc-chart", &p, &tmp.path().join("o"), &["--seed", "3"]);
    assert_eq!(r.status.code(), Some(0));
}

#[test]
fn malformed_configs_exit_2() {
    let tmp = TempDir::new().unwrap();
    let g = gallery(tmp.path());
    let out = tmp.path().join("o");
    let r = run("no-such-kind", &g.join("chart-grushin.json"), &out, &[]);
    assert_eq!(r.status.code(), Some(2));
    let r = run("newton", &g.join("chart-grushin.json"), &out, &[]);
    assert_eq!(r.status.code(), Some(2), "experiment mismatch");
    let p = write_config(tmp.path(), "extra.json", &serde_json::json!({
        "seed": 1, "poly": [[1, 0, 1, 1]], "mode": "product",
        "options": {"allow_extension": true, "swap_roles": false}, "bogus": 1
    }));
    assert_eq!(run("newton", &p, &out, &[]).status.code(), Some(2), "unknown field");
    let p = write_config(tmp.path(), "zero.json", &serde_json::json!({
        "seed": 1, "poly": [[1, 0, 1, 0]], "mode": "product",
        "options": {"allow_extension": true, "swap_roles": false}
    }));
    assert_eq!(run("newton", &p, &out, &[]).status.code(), Some(2), "zero denominator");
    let r = bin().env("MPRADON_THREADS", "0").args(["newton", "--config"]).arg(&p).output().unwrap();
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn reports_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let g = gallery(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let r = bin()
            .env("MPRADON_THREADS", "1")
            .arg("control")
            .arg("--config")
            .arg(g.join("control-heisenberg.json"))
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert_eq!(r.status.code(), Some(0));
    }
    for name in ["summary.json", "control.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let s = summary(&a);
    assert_eq!(s["results"]["checks"][0]["constant_coefficients"], serde_json::json!(["0", "0", "-1/4"]));
}

#[test]
fn failing_assertion_exits_1() {
    let tmp = TempDir::new().unwrap();
    let g = gallery(tmp.path());
    let mut v: Value = serde_json::from_str(&fs::read_to_string(g.join("newton-s3-t3-st.json")).unwrap()).unwrap();
    v["expect"] = Value::from("bounded");
    let p = write_config(tmp.path(), "wrong.json", &v);
    let out = tmp.path().join("o");
    assert_eq!(run("newton", &p, &out, &[]).status.code(), Some(1));
    assert_eq!(summary(&out)["status"], "FAIL");
}
