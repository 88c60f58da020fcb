use std::path::Path;
use std::process::Command;

fn alflow(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_alflow")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(alflow(&["--help"]).0, 0);
    assert_eq!(alflow(&[]).0, 1);
    assert_eq!(alflow(&["frobnicate"]).0, 1);
    assert_eq!(alflow(&["select", "--scores", "x", "--ratio", "1.5", "--strategy", "topk", "--manifest", "m", "--out", "o"]).0, 1);
    assert_eq!(alflow(&["gradcheck", "--seed", "nope"]).0, 1);
    assert_eq!(alflow(&["evaluate", "--flows", "/nonexistent", "--manifest", "/nonexistent/m.json", "--out", "/tmp/x.csv"]).0, 2);
    assert_eq!(alflow(&["curves", "--fixture", "no-such-curve"]).0, 3);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"budgets": [0.5], "unknown_key": 1}"#).unwrap();
    assert_eq!(alflow(&["experiment", "--config", s(&bad), "--out", s(dir.path())]).0, 3);
}

#[test]
fn curves_print_fixture() {
    let (code, out) = alflow(&["curves", "--fixture", "kitti-2015-fl"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("ratio,metric,value\n0,fl,12.742\n"));
    assert!(out.ends_with("1,fl,9.448\n"));
}

#[test]
fn file_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"dataset": {"synth": {"count": 4, "width": 32, "height": 32, "group_size": 2}}, "seeds": [0]}"#,
    )
    .unwrap();
    let manifest = d.join("data/manifest.json");
    let run = |args: &[&str]| {
        let (code, out) = alflow(args);
        assert_eq!(code, 0, "{args:?}");
        out
    };
    run(&["gen", "--config", s(&cfg), "--out", s(&d.join("data"))]);
    run(&["--threads", "2", "optimize", "--manifest", s(&manifest), "--config", s(&cfg), "--out", s(&d.join("flows"))]);
    run(&["score", "--manifest", s(&manifest), "--flows", s(&d.join("flows")), "--metric", "occ_ratio", "--out", s(&d.join("scores.csv"))]);
    let sel = d.join("sel.json");
    run(&["select", "--scores", s(&d.join("scores.csv")), "--ratio", "0.5", "--strategy", "grouped_topk", "--seed", "3", "--manifest", s(&manifest), "--out", s(&sel)]);
    let chosen: serde_json::Value = serde_json::from_slice(&std::fs::read(&sel).unwrap()).unwrap();
    assert_eq!(chosen["chosen"].as_array().unwrap().len(), 2);
    run(&["optimize", "--manifest", s(&manifest), "--selection", s(&sel), "--config", s(&cfg), "--out", s(&d.join("flows2"))]);
    run(&["evaluate", "--flows", s(&d.join("flows2")), "--manifest", s(&manifest), "--out", s(&d.join("metrics.csv"))]);
    run(&["corr", "--scores", s(&d.join("scores.csv")), "--metrics", s(&d.join("metrics.csv")), "--out", s(&d.join("corr.csv"))]);
    let corr = std::fs::read_to_string(d.join("corr.csv")).unwrap();
    assert!(corr.starts_with(",occ_ratio,epe\n"));
}
