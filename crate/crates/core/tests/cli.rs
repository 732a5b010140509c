//! End-to-end CLI tests: exit codes, byte-for-byte reproducibility and
//! structural conformance of the JSON reports to the shipped schemas.

use serde_json::Value;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dioph"))
}

fn schema(name: &str) -> Value {
    let path = format!("{}/../../schemas/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Minimal structural validator: type / required / properties / items /
/// enum / minItems / maxItems, which is all the shipped schemas use.
fn validate(value: &Value, schema: &Value, path: &str) -> Result<(), String> {
    if let Some(types) = schema.get("type") {
        let names: Vec<&str> = match types {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(|v| v.as_str()).collect(),
            _ => vec![],
        };
        let ok = names.iter().any(|t| match *t {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "number" => value.is_number(),
            "integer" => value.is_i64() || value.is_u64(),
            "boolean" => value.is_boolean(),
            "null" => value.is_null(),
            _ => false,
        });
        if !ok {
            return Err(format!("{path}: expected {names:?}, got {value}"));
        }
    }
    if let Some(allowed) = schema.get("enum").and_then(|e| e.as_array()) {
        if !allowed.contains(value) {
            return Err(format!("{path}: {value} not in {allowed:?}"));
        }
    }
    if let Some(required) = schema.get("required").and_then(|r| r.as_array()) {
        for key in required.iter().filter_map(|k| k.as_str()) {
            if value.get(key).is_none() {
                return Err(format!("{path}: missing required key '{key}'"));
            }
        }
    }
    if let Some(props) = schema.get("properties").and_then(|p| p.as_object()) {
        for (key, sub) in props {
            if let Some(v) = value.get(key) {
                validate(v, sub, &format!("{path}.{key}"))?;
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(arr) = value.as_array() {
            if let Some(min) = schema.get("minItems").and_then(|m| m.as_u64()) {
                if (arr.len() as u64) < min {
                    return Err(format!("{path}: fewer than {min} items"));
                }
            }
            if let Some(max) = schema.get("maxItems").and_then(|m| m.as_u64()) {
                if (arr.len() as u64) > max {
                    return Err(format!("{path}: more than {max} items"));
                }
            }
            for (i, v) in arr.iter().enumerate() {
                validate(v, items, &format!("{path}[{i}]"))?;
            }
        }
    }
    Ok(())
}

fn assert_valid(value: &Value, schema_name: &str) {
    let s = schema(schema_name);
    if let Err(e) = validate(value, &s, "$") {
        panic!("schema {schema_name} violated: {e}");
    }
}

#[test]
fn check_smoke_and_schema() {
    let out = bin()
        .args([
            "check", "--theta", "0.618034", "--eta", "0.25", "--tmin", "1", "--tmax", "1000",
            "--json", "-",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid(&report, "check_report.schema.json");
    assert_eq!(report["verdict"], "dirichlet_on_window");
    // the manifest goes to stderr as one JSON line
    let stderr = String::from_utf8_lossy(&out.stderr);
    let manifest: Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_valid(&manifest, "manifest.schema.json");
    assert_eq!(manifest["subcommand"], "check");
}

#[test]
fn exit_codes() {
    // unknown flag: 2 with usage text
    let out = bin().args(["check", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    // config error: malformed weight json
    let out = bin()
        .args([
            "check",
            "--theta",
            "0.5",
            "--tmax",
            "100",
            "--weights",
            "{\"alpha\":[],\"beta\":[]}",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // budget error: 3
    let out = bin()
        .args([
            "check", "--theta", "0.3,0.4;0.1,0.2", "--tmax", "100000000", "--n-max", "1000",
            "--weights",
            "{\"alpha\":[{\"kind\":\"power\",\"rho\":1.0},{\"kind\":\"power\",\"rho\":1.0}],\"beta\":[{\"kind\":\"power\",\"rho\":1.0},{\"kind\":\"power\",\"rho\":1.0}]}",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    // verdict failure with --assert: 1
    let out = bin()
        .args([
            "check",
            "--theta",
            "golden",
            "--g",
            "{\"kind\":\"power\",\"coeff\":0.2,\"exponent\":1.0}",
            "--tmax",
            "1000",
            "--assert",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    // transference assert passes: 0
    let out = bin()
        .args([
            "transference",
            "selftest",
            "--dim",
            "2",
            "--trials",
            "10",
            "--gamma-samples",
            "3",
            "--seed",
            "7",
            "--assert",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn reports_reproduce_byte_for_byte() {
    let dir = std::env::temp_dir().join(format!("dioph-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = r#"{"weights":{"alpha":[{"kind":"power","rho":1.0}],"beta":[{"kind":"power","rho":1.0}]},"g":{"kind":"power_log_decay","exponent":1.0,"log_exponent":2.0},"samples":40,"t_min":10.0,"schedule":[100.0,300.0]}"#;
    let mut paths = Vec::new();
    for run in 0..2 {
        let json = dir.join(format!("zo{run}.json"));
        let csv = dir.join(format!("zo{run}.csv"));
        let out = bin()
            .args([
                "zeroone",
                "--config",
                cfg,
                "--seed",
                "99",
                "--json",
                json.to_str().unwrap(),
                "--csv",
                csv.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
        paths.push((json, csv));
    }
    let a = std::fs::read(&paths[0].0).unwrap();
    let b = std::fs::read(&paths[1].0).unwrap();
    assert_eq!(a, b, "JSON reports differ between identical runs");
    let a = std::fs::read(&paths[0].1).unwrap();
    let b = std::fs::read(&paths[1].1).unwrap();
    assert_eq!(a, b, "CSV reports differ between identical runs");
    let report: Value = serde_json::from_slice(&std::fs::read(&paths[0].0).unwrap()).unwrap();
    assert_valid(&report, "measure_estimate.schema.json");
    std::fs::remove_dir_all(&dir).ok();
}

/// A run can be replayed from its own manifest: feeding the recorded config
/// and seed back reproduces the report byte for byte.
#[test]
fn manifest_replays_the_run() {
    let dir = std::env::temp_dir().join(format!("dioph-manifest-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = r#"{"weights":{"alpha":[{"kind":"power","rho":1.0}],"beta":[{"kind":"power","rho":1.0}]},"g":{"kind":"power","coeff":0.7,"exponent":1.0},"samples":30,"t_min":1.0,"schedule":[50.0,200.0]}"#;
    let json1 = dir.join("first.json");
    let manifest_path = dir.join("first.manifest.json");
    let out = bin()
        .args([
            "zeroone",
            "--config",
            cfg,
            "--seed",
            "123",
            "--json",
            json1.to_str().unwrap(),
            "--manifest",
            manifest_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let manifest: Value = serde_json::from_slice(&std::fs::read(&manifest_path).unwrap()).unwrap();
    assert_valid(&manifest, "manifest.schema.json");
    // replay from the manifest's recorded config and seed
    let replay_cfg = serde_json::to_string(&manifest["config"]).unwrap();
    let replay_seed = manifest["seed"].as_u64().unwrap().to_string();
    let json2 = dir.join("replay.json");
    let out = bin()
        .args([
            "zeroone",
            "--config",
            &replay_cfg,
            "--seed",
            &replay_seed,
            "--json",
            json2.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(&json1).unwrap(),
        std::fs::read(&json2).unwrap(),
        "manifest replay did not reproduce the report"
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn changing_weights_csv_emitter() {
    let out = bin()
        .args([
            "weights",
            "emit",
            "--example",
            "changing-weights",
            "--tmax",
            "625",
            "--rows",
            "500",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,gamma1,gamma2,phi1,phi2");
    let mut rows = 0;
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((cols[1] + cols[2] - cols[0]).abs() <= 1e-9 * cols[0].max(1.0));
        rows += 1;
    }
    assert_eq!(rows, 501);
}

#[test]
fn certify_and_constants_cli() {
    let out = bin()
        .args([
            "weights",
            "certify",
            "--weight",
            r#"{"kind":"plog","base":5,"slopes":[0.75,0.25],"anchor":0.3333333333333333}"#,
            "--base",
            "2.718281828459045",
            "--kmin",
            "1",
            "--kmax",
            "40",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let cert: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid(&cert, "certificate.schema.json");
    let c1 = cert["c1"].as_f64().unwrap();
    assert!((c1 - (0.25f64).exp()).abs() < 1e-9);

    let out = bin()
        .args([
            "weights",
            "constants",
            "--rho",
            "1",
            "--sigma",
            "1",
            "--b",
            "1",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["big_k"].as_f64().unwrap(), 32.0);
    assert_eq!(v["kappa"].as_f64().unwrap(), 0.03125);
}

#[test]
fn series_and_systole_cli() {
    let out = bin()
        .args([
            "series", "--config",
            r#"{"weights":{"alpha":[{"kind":"power","rho":1.0}],"beta":[{"kind":"power","rho":1.0}]},"g":{"kind":"power_log_decay","exponent":1.0,"log_exponent":2.0},"f":{"kind":"power","exponent":1.0}}"#,
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid(&v["g_side"], "series_report.schema.json");
    assert_eq!(v["g_side"]["verdict"], "converges");

    let out = bin()
        .args([
            "systole",
            "--theta",
            "golden",
            "--tmax",
            "1000",
            "--grid-factor",
            "1.2",
            "--csv",
            "-",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("T,systole,running_min"));
    let last = text.lines().last().unwrap();
    let run_min: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
    assert!(run_min >= 0.6);

    let out = bin()
        .args([
            "systole",
            "--theta",
            "liouville:5",
            "--tmax",
            "1",
            "--csv",
            "-",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let dip: f64 = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!(dip < 0.05, "designed liouville dip {dip}");
}

#[test]
fn improvability_cli() {
    let out = bin()
        .args([
            "improvability",
            "--theta",
            "liouville:3",
            "--delta",
            "0.1",
            "--samples",
            "100",
            "--tmax",
            "2000",
            "--seed",
            "5",
            "--assert",
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid(&v, "improvability_report.schema.json");
    assert_eq!(v["counterexamples"].as_u64(), Some(0));
}
