use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use splitwire::graph::save_network;
use splitwire::testnets;

fn splitwire(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splitwire"))
        .args(args)
        .env_remove("SPLITWIRE_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = splitwire(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn toy_net(dir: &Path) -> PathBuf {
    let path = dir.join("toy.json");
    save_network(&testnets::toy_classifier(), &path).unwrap();
    path
}

#[test]
fn candidates_googlenet_trunk_only() {
    let text = ok(&["candidates", "--net", "googlenet.json", "--format", "csv"]);
    let points: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(points.first(), Some(&"cloud-only"));
    assert!(points.contains(&"conv2"));
    assert!(points.iter().all(|p| !p.contains("/") && !p.contains("_1x1") && !p.contains("_3x3")));
}

#[test]
fn candidates_rule_flags_widen_the_list() {
    let strict = ok(&["candidates", "--net", "resnet18", "--format", "csv"]).lines().count();
    let loose = ok(&["candidates", "--net", "resnet18", "--format", "csv", "--allow-shortcut-spans"])
        .lines()
        .count();
    assert!(loose > strict);
}

#[test]
fn workflow_profile_tune_report() {
    let dir = tempfile::tempdir().unwrap();
    let net = toy_net(dir.path());
    let net = net.to_str().unwrap();
    let profile = dir.path().join("p.json");
    let result = dir.path().join("r.json");
    ok(&["profile", "--net", net, "--trials", "2", "--out", profile.to_str().unwrap()]);
    ok(&[
        "tune",
        "--net",
        net,
        "--profile",
        profile.to_str().unwrap(),
        "--bandwidth",
        "180KB/s",
        "--objective",
        "fastest",
        "--accuracy",
        "10",
        "--format",
        "json",
        "--out",
        result.to_str().unwrap(),
    ]);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert!(doc.to_string().contains("cloud-only"));

    let csv = ok(&["report", "--result", result.to_str().unwrap(), "--format", "csv"]);
    let rows: Vec<&str> = csv.lines().collect();
    assert!(rows[0].starts_with("point,edge_ms"));
    assert_eq!(rows.len(), 1 + 4);
    let marks = |col: usize| rows[1..].iter().filter(|r| r.split(',').nth(col) == Some("1")).count();
    let header: Vec<&str> = rows[0].split(',').collect();
    let fastest = header.iter().position(|h| *h == "fastest").unwrap();
    let best = header.iter().position(|h| *h == "best").unwrap();
    assert_eq!(marks(fastest), 1);
    assert_eq!(marks(best), 1);

    let again = ok(&["report", "--result", result.to_str().unwrap(), "--format", "json"]);
    assert_eq!(again, std::fs::read_to_string(&result).unwrap());
}

#[test]
fn tune_alexnet_storage_reduction_at_conv5() {
    let dir = tempfile::tempdir().unwrap();
    // a constant profile is enough: storage reduction does not depend on it
    let entries: Vec<serde_json::Value> = splitwire::graph::bundled::load("alexnet")
        .unwrap()
        .layers()
        .iter()
        .map(|l| serde_json::json!({ "layer": l.name, "edge_ms": 1.0, "cloud_ms": 0.1 }))
        .collect();
    let profile = dir.path().join("p.json");
    std::fs::write(
        &profile,
        serde_json::json!({ "network": "alexnet", "device": "fixed", "entries": entries }).to_string(),
    )
    .unwrap();
    let result = dir.path().join("result.json");
    ok(&[
        "tune",
        "--net",
        "alexnet.json",
        "--profile",
        profile.to_str().unwrap(),
        "--bandwidth",
        "250KB",
        "--format",
        "json",
        "--out",
        result.to_str().unwrap(),
    ]);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    let rows = doc["rows"].as_array().expect("rows");
    let conv5 = rows.iter().find(|r| r["point"] == "conv5").expect("conv5 row");
    let pct = conv5["storage_reduction_pct"].as_f64().unwrap();
    assert!((pct - 96.17).abs() <= 0.1, "{pct}");
}

#[test]
fn infer_invalid_split_exits_1() {
    let out = splitwire(&["infer", "--net", "alexnet", "--mode", "sim", "--split", "no_such_layer"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a candidate"));
}

#[test]
fn missing_file_exits_2() {
    let out = splitwire(&["tune", "--net", "alexnet", "--profile", "/definitely/missing.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_error_exits_1_with_help() {
    let out = splitwire(&["tune", "--net", "alexnet"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--profile") && err.contains("--bandwidth"), "{err}");
}

#[test]
fn bad_bandwidth_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let net = toy_net(dir.path());
    let out = splitwire(&["infer", "--net", net.to_str().unwrap(), "--bandwidth", "fast"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn infer_sim_and_socket_agree() {
    let dir = tempfile::tempdir().unwrap();
    let net = toy_net(dir.path());
    let net = net.to_str().unwrap();
    let class = |mode: &str| -> Vec<u64> {
        let text = ok(&["infer", "--net", net, "--split", "conv2", "--mode", mode, "--count", "3", "--format", "json"]);
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["runs"].as_array().unwrap().iter().map(|r| r["class"].as_u64().unwrap()).collect()
    };
    let sim = class("sim");
    assert_eq!(sim.len(), 3);
    assert_eq!(sim, class("socket"));
}

#[test]
fn outputs_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let net = toy_net(dir.path());
    let net = net.to_str().unwrap();
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    ok(&["quantize", "--net", net, "--seed", "3", "--out", a.to_str().unwrap()]);
    ok(&["quantize", "--net", net, "--seed", "3", "--out", b.to_str().unwrap()]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let candidates = |f: &str| ok(&["candidates", "--net", net, "--format", f]);
    for f in ["text", "csv", "json"] {
        assert_eq!(candidates(f), candidates(f));
    }
    let profile = dir.path().join("p.json");
    std::fs::write(
        &profile,
        splitwire::cost::random_profile(&testnets::toy_classifier(), 1, 0.1..1.0, 0.01..0.1).to_json(),
    )
    .unwrap();
    let tune = || ok(&["tune", "--net", net, "--profile", profile.to_str().unwrap(), "--format", "json"]);
    assert_eq!(tune(), tune());
    let infer = || ok(&["infer", "--net", net, "--split", "conv1", "--profile", profile.to_str().unwrap()]);
    assert_eq!(infer(), infer());
}

#[test]
fn seed_flag_beats_environment() {
    let dir = tempfile::tempdir().unwrap();
    let net = toy_net(dir.path());
    let run = |seed_env: Option<&str>, seed_flag: Option<&str>| {
        let out = dir.path().join("q.bin");
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_splitwire"));
        cmd.args(["quantize", "--net", net.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        cmd.env_remove("SPLITWIRE_SEED");
        if let Some(s) = seed_env {
            cmd.env("SPLITWIRE_SEED", s);
        }
        if let Some(s) = seed_flag {
            cmd.args(["--seed", s]);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run(None, None), run(Some("42"), None));
    assert_ne!(run(Some("7"), None), run(None, None));
    assert_eq!(run(Some("7"), Some("42")), run(None, None));
}
