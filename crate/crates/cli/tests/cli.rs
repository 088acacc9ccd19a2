use std::process::{Command, Output};

use serde_json::Value;

fn dtower(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtower"))
        .args(args)
        .env_remove("DTOWER_WORKERS")
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn constants_dump_is_versioned() {
    let out = dtower(&["constants", "--N", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json_of(&out);
    assert_eq!(doc["schema"], "dtower/1");
    let a1 = doc["result"]["A1"].as_f64().unwrap();
    assert!((a1 - 337.744105905095).abs() < 1e-9, "{a1}");
    for key in ["N", "A1", "A2", "B0", "B1", "B2", "A3", "h0"] {
        assert!(doc["result"].get(key).is_some(), "{key}");
    }
}

#[test]
fn geometry_csv_has_two_rings() {
    let out = dtower(&["geometry", "--N", "5", "--k", "4", "--r", "1", "--h", "0.2", "--mu", "10", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "ring,j,y1,y2,y3,y4,y5");
    assert_eq!(lines.len(), 1 + 8);
}

#[test]
fn bad_dimension_exits_two_naming_key() {
    let out = dtower(&["geometry", "--N", "4", "--k", "4", "--r", "1", "--h", "0.2", "--mu", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration.N"));
}

#[test]
fn unknown_config_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "[configuration]\nN = 5\nkk = 3\n").unwrap();
    let out = dtower(&["constants", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`kk`"));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "[configuration]\nN = 6\n").unwrap();
    let out = dtower(&["constants", "--N", "5", "--config", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(json_of(&out)["result"]["N"], 6);
}

#[test]
fn bad_potential_exits_two() {
    let out = dtower(&["reduce", "--N", "5", "--k", "256", "--potential", "bump_at:r0=1,v0=1,a=0,w=-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("potential.w"));
}

#[test]
fn reduce_meets_scaling_tolerance() {
    let out = dtower(&["reduce", "--N", "5", "--k", "256", "--potential", "bump_at:r0=1,v0=1,a=0,w=0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cp = &json_of(&out)["result"]["critical_point"];
    assert!(cp["h_rel_residual"].as_f64().unwrap() < 0.05);
    assert!(cp["mu_rel_residual"].as_f64().unwrap() < 0.05);
    assert!(cp.get("margins").is_some());
}

#[test]
fn sums_are_deterministic_across_worker_counts() {
    let args = ["sums", "--N", "5", "--r", "1", "--h", "0.05", "--ring", "cross", "--ks", "100,1000", "--format", "csv"];
    let one = Command::new(env!("CARGO_BIN_EXE_dtower")).args(args).env("DTOWER_WORKERS", "1").output().unwrap();
    let four = Command::new(env!("CARGO_BIN_EXE_dtower")).args(args).env("DTOWER_WORKERS", "4").output().unwrap();
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
    let text = String::from_utf8(one.stdout).unwrap();
    assert!(text.starts_with("k,h,alpha,ring,weight,exact,leading,rel_err\n"));
}

#[test]
fn report_names_failed_criterion() {
    let out = dtower(&["report", "--only", "1,4"]);
    let doc = json_of(&out);
    let failed: Vec<u64> = doc["result"]["criteria"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["id"].as_u64().unwrap())
        .collect();
    if failed.is_empty() {
        assert!(out.status.success());
    } else {
        assert_eq!(out.status.code(), Some(1));
        let err = String::from_utf8_lossy(&out.stderr);
        for id in failed {
            assert!(err.contains(&format!("failed criteria: {id}")) || err.contains(&format!(", {id}")), "{err}");
        }
    }
}

#[test]
fn csv_requested_where_none_exists() {
    let out = dtower(&["constants", "--N", "5", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(2));
}
