use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graphon-sde"))
}

const CONFIG: &str = r#"{
  "kind": "converge",
  "graphon": { "kind": "uniform_attachment" },
  "schedule": { "form": "power", "gamma": 0.5 },
  "mode": "symmetric_simple",
  "n_list": [8, 16],
  "grid": { "horizon": 1.0, "steps": 10 },
  "model": { "dim": 1, "drift": { "kind": "linear_mean", "a": -1.0, "c": 1.0 }, "diffusion": { "kind": "constant", "sigma": 0.3 } },
  "initial": { "kind": "uniform", "lo": [0.0], "hi": [1.0] },
  "seeds": [4, 5]
}"#;

#[test]
fn converge_writes_reports_and_reruns_from_meta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = dir.path().join("a");
    let status = bin().args(["converge", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in ["report.csv", "meta.json", "summary.json", "plot.svg"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let rerun = dir.path().join("b");
    let status = bin()
        .args(["--threads", "2", "converge", "--config"])
        .arg(out.join("meta.json"))
        .arg("--out")
        .arg(&rerun)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read(out.join("report.csv")).unwrap(), std::fs::read(rerun.join("report.csv")).unwrap());

    let sim = bin().args(["simulate", "--thin", "5", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(sim.success());
    let traj = std::fs::read_to_string(out.join("trajectories.csv")).unwrap();
    assert!(traj.starts_with("step,time,particle,x1\n"));
    assert_eq!(traj.lines().count(), 1 + 3 * 8);

    let lim = bin().args(["limit", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(lim.success());
    let laws = std::fs::read_to_string(out.join("laws.txt")).unwrap();
    assert_eq!(laws.lines().count(), 8 * 11 * 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, CONFIG.replace("\"gamma\": 0.5", "\"gamma\": -0.5")).unwrap();
    let out = bin().args(["converge", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));

    let missing = bin().args(["converge", "--config", "/nonexistent/run.json"]).status().unwrap();
    assert_eq!(missing.code(), Some(1));

    // 600 atoms exceed the exact solver's support cap
    let big: String = std::iter::once("dim 1\n".to_string())
        .chain((0..600).map(|i| format!("0.001 {}\n", i as f64 * 0.01)))
        .collect();
    let mu = dir.path().join("mu.txt");
    std::fs::write(&mu, &big).unwrap();
    let nu = dir.path().join("nu.txt");
    std::fs::write(&nu, "dim 1\n0.5 0.25\n").unwrap();
    let out = bin().args(["dbl", "--mu"]).arg(&mu).arg("--nu").arg(&nu).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let out = bin().args(["dbl", "--dict", "--mu"]).arg(&mu).arg("--nu").arg(&nu).output().unwrap();
    assert!(out.status.success());
}

#[test]
fn dbl_graph_and_norm_commands() {
    let dir = tempfile::tempdir().unwrap();
    let mu = dir.path().join("mu.txt");
    let nu = dir.path().join("nu.txt");
    std::fs::write(&mu, "dim 1\n0.5 0.0\n").unwrap();
    std::fs::write(&nu, "dim 1\n0.5 3.0\n").unwrap();
    let out = bin().args(["dbl", "--exact", "--mu"]).arg(&mu).arg("--nu").arg(&nu).output().unwrap();
    let d: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((d - 1.0).abs() < 1e-9);

    let out = bin().args(["graphon", "norm", "--kind", "power_law", "--a", "0.2", "--p", "2"]).output().unwrap();
    let v: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((v - 1.0 / 0.6).abs() < 1e-12);
    let out = bin().args(["graphon", "norm", "--graphon", r#"{"kind":"product"}"#, "--p", "1", "--numeric"]).output().unwrap();
    let v: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((v - 0.25).abs() < 1e-8);
    let diverge = bin().args(["graphon", "norm", "--kind", "power_law", "--a", "0.6", "--p", "2"]).status().unwrap();
    assert_eq!(diverge.code(), Some(3));

    let g = dir.path().join("g.txt");
    let s = bin()
        .args(["graph", "sample", "--kind", "uniform_attachment", "--n", "30", "--beta", "0.5", "--seed", "3", "--out"])
        .arg(&g)
        .status()
        .unwrap();
    assert!(s.success());
    assert!(std::fs::read_to_string(&g).unwrap().starts_with("30 0.5 symmetric"));
    let out = bin().args(["graph", "stats", "--input"]).arg(&g).output().unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("N = 30"));
    let bad_mode = bin().args(["graph", "sample", "--kind", "product", "--n", "5", "--beta", "1", "--mode", "x"]).status().unwrap();
    assert_eq!(bad_mode.code(), Some(2));
}
