use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn ssm(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_ssm")).args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn split_classes(dir: &Path, layout: &[usize]) -> Vec<String> {
    let text = std::fs::read_to_string(dir.join("dictionary.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    let mut paths = Vec::new();
    let mut start = 0;
    for (k, &size) in layout.iter().enumerate() {
        let body: Vec<String> = rows.iter().map(|r| r[start..start + size].join(",")).collect();
        let p = dir.join(format!("class{k}.csv"));
        std::fs::write(&p, body.join("\n")).unwrap();
        paths.push(p.to_string_lossy().into_owned());
        start += size;
    }
    paths
}

#[test]
fn synth_then_classify() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let truth: Value = serde_json::from_str(&ssm(&[
        "synth", "--classes", "6", "--dim", "200", "--subspace-dim", "3", "--samples", "5",
        "--queries", "3", "--noise", "0.05", "--seed", "4", "--out", d,
    ]))
    .unwrap();
    let layout: Vec<usize> = serde_json::from_value(truth["layout"].clone()).unwrap();
    let classes = split_classes(dir.path(), &layout);
    let mut args = vec!["classify"];
    for c in &classes {
        args.extend(["--class-csv", c.as_str()]);
    }
    let query = dir.path().join("queries.csv");
    args.extend(["--query", query.to_str().unwrap(), "--dhat", "40", "--m0", "2", "--mode", "n2one"]);
    let report: Value = serde_json::from_str(&ssm(&args)).unwrap();
    assert_eq!(report["labels"], truth["true_support"][0]);
    assert_eq!(report["sci"].as_array().unwrap().len(), 3);

    let mut rip = vec!["rip", "--m", "1,2"];
    for c in &classes {
        rip.extend(["--class-csv", c.as_str()]);
    }
    let rip: Value = serde_json::from_str(&ssm(&rip)).unwrap();
    let levels = rip["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 2);
    assert!(levels[1]["delta"].as_f64().unwrap() >= levels[0]["delta"].as_f64().unwrap());
}

#[test]
fn sweep_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"data": {"kind": "synthetic", "subspaces": {"classes": 6, "dim": 100, "subspace_dim": 3, "samples_per_class": 4}}}"#,
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let common = ["sweep", "--config", cfg, "--dhat", "10,30", "--queries", "1,2", "--trials", "4", "--seed", "9"];
    let a = ssm(&[&common[..], &["--workers", "1"]].concat());
    let b = ssm(&[&common[..], &["--workers", "3"]].concat());
    assert_eq!(a, b);
    let report: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), 4);
    let out = dir.path().join("r.csv");
    ssm(&[&common[..], &["--format", "csv", "--out", out.to_str().unwrap()]].concat());
    let csv = std::fs::read_to_string(out).unwrap();
    assert!(csv.starts_with("d_hat,n,metric,value"));
}
