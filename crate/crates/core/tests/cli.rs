use std::path::Path;
use std::process::Command;

fn cli(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cilsynth"))
        .args(args)
        .envs(env.iter().copied())
        .current_dir(dir)
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn pipeline_exit_codes_and_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let fast = [("CILSYNTH_TRAIN_ITERATIONS", "2000")];

    assert_eq!(cli(d, &["generate", "--out", "g1", "--seed", "7", "--mislabel", "--case-fov"], &[]).0, 0);
    assert_eq!(cli(d, &["generate", "--out", "g2", "--seed", "7", "--mislabel", "--case-fov"], &[]).0, 0);
    let a = std::fs::read(d.join("g1/dataset.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.join("g2/dataset.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 8);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 2 + 420 + 1);
    let manifest = json(&d.join("g1/manifest.json"));
    for f in manifest["outputs"].as_array().unwrap() {
        assert!(d.join("g1").join(f.as_str().unwrap()).exists());
    }

    assert_eq!(cli(d, &["fit-map", "--data", "g1/dataset.csv", "--at", "0,-0.25", "--out", "m"], &[]).0, 0);
    assert_eq!(json(&d.join("m/map.json"))["H"].as_array().unwrap().len(), 420);

    assert_eq!(cli(d, &["train", "--data", "g1/dataset.csv", "--constrained", "--out", "c2"], &fast).0, 0);
    assert_eq!(cli(d, &["train", "--data", "g1/dataset.csv", "--unconstrained", "--out", "c1"], &fast).0, 0);
    assert!(d.join("c2/acs_trace_13.csv").exists());
    let bank = json(&d.join("c2/bank.json"));
    assert_eq!(bank["metadata"]["norm"], "l1");
    assert_eq!(bank["certificates"].as_object().unwrap().len(), 2);

    assert_eq!(cli(d, &["verify", "--bank", "c2/bank.json", "--out", "v"], &[]).0, 0);
    let (code, _) = cli(d, &["verify", "--bank", "c1/bank.json", "--out", "v0"], &[]);
    assert_eq!(code, 0);
    assert_eq!(json(&d.join("v0/verify.json"))["note"], "nothing to verify");

    let mut tampered = bank.clone();
    tampered["certificates"]["12"]["witness"]["lambda"][0] = serde_json::json!(0.25);
    std::fs::write(d.join("bad.json"), tampered.to_string()).unwrap();
    let (code, err) = cli(d, &["verify", "--bank", "bad.json", "--out", "v1"], &[]);
    assert_eq!(code, 1);
    assert!(err.contains("lambda"), "{err}");

    let (code, _) = cli(d, &["simulate", "--bank", "c2/bank.json", "--case-fov", "--x0", "0.1,-0.2", "--x0", "-0.1,0.3", "--out", "s"], &[]);
    assert_eq!(code, 0);
    let summary = json(&d.join("s/summary.json"));
    assert_eq!(summary.as_array().unwrap().len(), 2);
    assert!(d.join("s/trajectory_01.csv").exists());
    assert_eq!(cli(d, &["simulate", "--bank", "c2/bank.json", "--t-end", "0", "--x0", "0,0", "--out", "s0"], &[]).0, 0);
    assert_eq!(std::fs::read_to_string(d.join("s0/trajectory_00.csv")).unwrap().lines().count(), 2);
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(cli(d, &["generate", "--out", "g"], &[("CILSYNTH_TRAIN_GAMMA", "-1")]).0, 2);
    assert_eq!(cli(d, &["generate", "--out", "g"], &[("CILSYNTH_NOPE_KEY", "1")]).0, 2);
    std::fs::write(d.join("c.json"), "{\"world\": {\"half_width\": 0}}").unwrap();
    assert_eq!(cli(d, &["generate", "--config", "c.json", "--out", "g"], &[]).0, 2);
    assert_eq!(cli(d, &["verify", "--bank", "missing.json", "--out", "g"], &[]).0, 2);
}
