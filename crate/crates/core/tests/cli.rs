use std::fs;
use std::path::Path;
use std::process::Command;

fn lightint() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lightint"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    fs::write(dir.join("line.txt"), "1 2 0.0002\n2 3 0.0002\n3 4 0.0002\n4 5 0.0002\n").unwrap();
    let path = dir.join("cfg.json");
    fs::write(&path, body).unwrap();
    path
}

const CONFIG: &str = r#"{
  "seed": 4, "duration": 5.0, "scheme": "DLINT", "v": 1,
  "topology": {"file": "line.txt"},
  "flows": [
    {"src": 1, "dst": 5, "size_packets": 300, "inter_packet_gap": 0.005},
    {"src": 2, "dst": 4, "start": 0.5, "size_packets": 200, "inter_packet_gap": 0.01}
  ]
}"#;

#[test]
fn missing_topology_file_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("line.txt", "nope.txt"));
    let out = lightint()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("res"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("topology.file"), "{stderr}");
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("\"v\": 1", "\"v\": 1, \"vv\": 2"));
    let out = lightint().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vv"));
}

#[test]
fn sweep_writes_one_row_per_cell_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let mut results = Vec::new();
    for name in ["a", "b"] {
        let res = dir.path().join(name);
        let out = lightint()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&res)
            .args(["--sweep", "v=1,2,3,4,5", "--sweep", "scheme=DLINT,PLINT"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let csv = fs::read_to_string(res.join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 11, "{csv}");
        assert!(csv.starts_with("scheme,v,bf_ratio,"));
        let traces = fs::read_to_string(res.join("traces.jsonl")).unwrap();
        for line in traces.lines() {
            let value: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(value.get("matches_ground_truth").is_some());
        }
        let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(res.join("run_meta.json")).unwrap()).unwrap();
        assert_eq!(meta["cells"], 10);
        assert_eq!(meta["seed"], 4);
        results.push((csv, traces));
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("\"flows\"", "\"loss_prob\": 0.05, \"flows\""));
    let run = |seed: &str, name: &str| {
        let res = dir.path().join(name);
        let status = lightint()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&res)
            .args(["--seed", seed])
            .status()
            .unwrap();
        assert!(status.success());
        fs::read_to_string(res.join("metrics.csv")).unwrap()
    };
    assert_eq!(run("1", "x"), run("1", "y"));
    assert_ne!(run("1", "x"), run("2", "z"));
}

#[test]
fn bad_sweep_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = lightint()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("r"))
        .args(["--sweep", "hops=1,2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
