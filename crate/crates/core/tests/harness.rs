use graphon_sde::harness::{
    emit_report, parse_report_csv, run_convergence, run_experiment, run_stability, run_wlln, welch_greater,
    ExperimentConfig, CSV_HEADER,
};
use graphon_sde::Error;
use serde_json::{json, Value};

fn base() -> Value {
    json!({
        "kind": "converge",
        "graphon": { "kind": "constant", "c": 1.0 },
        "schedule": { "form": "constant", "beta": 1.0 },
        "mode": "deterministic",
        "n_list": [8, 16],
        "grid": { "horizon": 1.0, "steps": 20 },
        "model": {
            "dim": 1,
            "drift": { "kind": "linear_mean", "a": -1.0, "c": 1.0 },
            "diffusion": { "kind": "constant", "sigma": 0.5 }
        },
        "initial": { "kind": "gaussian", "mean": [1.0], "cov": [[0.25]] },
        "seeds": [1, 2, 3]
    })
}

fn with(mut v: Value, patch: Value) -> Value {
    for (k, x) in patch.as_object().unwrap() {
        v[k] = x.clone();
    }
    v
}

fn config(v: &Value) -> Result<ExperimentConfig, Error> {
    ExperimentConfig::from_json(&v.to_string())
}

#[test]
fn validation_rejects_inconsistent_configs() {
    assert!(config(&base()).is_ok());
    let mean_sigma = json!({ "dim": 1, "drift": { "kind": "zero" }, "diffusion": { "kind": "mean_sigma", "sigma": 0.5 } });
    let cases = [
        // measure-dependent diffusion needs N beta_N^2 -> infinity
        json!({ "model": mean_sigma, "schedule": { "form": "power", "gamma": 0.5 }, "mode": "symmetric_simple" }),
        json!({ "model": mean_sigma, "schedule": { "form": "power", "gamma": 0.7 }, "mode": "symmetric_simple" }),
        // rate experiments need a Lipschitz graphon
        json!({ "kind": "rate", "graphon": { "kind": "power_law", "a": 0.3 }, "n_list": [8, 16, 32, 64], "mode": "symmetric_simple" }),
        json!({ "kind": "rate", "n_list": [8, 16, 32] }),
        json!({ "schedule": { "form": "constant", "beta": 1.5 } }),
        json!({ "schedule": { "form": "constant", "beta": 0.0 } }),
        json!({ "n_list": [] }),
        json!({ "n_list": [16, 8] }),
        json!({ "seeds": [] }),
        json!({ "samples": 1 }),
        json!({ "kind": "stability" }),
        json!({ "initial": { "kind": "point", "x": [0.0, 0.0] } }),
        json!({ "unknown_field": 3 }),
    ];
    for patch in cases {
        let err = config(&with(base(), patch.clone())).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{patch}: {err}");
    }
    let ok = json!({ "model": mean_sigma, "schedule": { "form": "power", "gamma": 0.3 }, "mode": "symmetric_simple",
                     "graphon": { "kind": "uniform_attachment" } });
    assert!(config(&with(base(), ok)).is_ok());
}

#[test]
fn zero_coefficients_give_zero_errors() {
    let zero = json!({ "dim": 1, "drift": { "kind": "zero" }, "diffusion": { "kind": "constant", "sigma": 0.0 } });
    for graphon in [json!({ "kind": "constant", "c": 1.0 }), json!({ "kind": "product" })] {
        let v = with(base(), json!({ "model": zero, "graphon": graphon }));
        let report = run_convergence(&config(&v).unwrap()).unwrap();
        for row in &report.rows {
            // coupling errors vanish; the measure error compares different atoms
            assert_eq!((row.err_l1, row.err_l2), (0.0, 0.0));
            assert!(row.err_dbl.is_finite());
        }
    }
}

#[test]
fn mean_field_error_drops_significantly() {
    let v = with(
        base(),
        json!({ "n_list": [50, 400], "seeds": (0..20).collect::<Vec<u64>>(), "grid": { "horizon": 1.0, "steps": 100 } }),
    );
    let report = run_convergence(&config(&v).unwrap()).unwrap();
    let p = welch_greater(&report.rows[0].l1_values(), &report.rows[1].l1_values()).unwrap();
    assert!(p < 0.01, "p = {p}");
}

#[test]
fn reports_round_trip_and_reproduce_from_meta() {
    let dir = tempfile::tempdir().unwrap();
    let v = with(base(), json!({ "graphon": { "kind": "uniform_attachment" }, "mode": "symmetric_simple" }));
    let cfg = config(&v).unwrap();
    let report = run_experiment(&cfg).unwrap();
    emit_report(&report, &cfg, dir.path()).unwrap();

    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with(CSV_HEADER));
    let rows = parse_report_csv(&csv).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.wall_ms.is_none()));
    let svg = std::fs::read_to_string(dir.path().join("plot.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("envelope slope -1/4"));

    let meta = std::fs::read_to_string(dir.path().join("meta.json")).unwrap();
    let meta_json: Value = serde_json::from_str(&meta).unwrap();
    assert_eq!(meta_json["config_hash"].as_str().unwrap(), cfg.hash());
    assert!(meta_json["git_describe"].is_string());
    let again = ExperimentConfig::from_json(&meta).unwrap();
    let other = tempfile::tempdir().unwrap();
    emit_report(&run_experiment(&again).unwrap(), &again, other.path()).unwrap();
    assert_eq!(std::fs::read(dir.path().join("report.csv")).unwrap(), std::fs::read(other.path().join("report.csv")).unwrap());

    let timed = config(&with(v, json!({ "wall_clock": true }))).unwrap();
    let rows = parse_report_csv(&run_experiment(&timed).unwrap().to_csv()).unwrap();
    assert!(rows.iter().all(|r| r.wall_ms.is_some()));
}

#[test]
fn report_writing_surfaces_the_path() {
    let cfg = config(&base()).unwrap();
    let report = run_experiment(&cfg).unwrap();
    let file = tempfile::NamedTempFile::new().unwrap();
    let err = emit_report(&report, &cfg, &file.path().join("sub")).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("sub"));
}

#[test]
fn stability_identity_and_large_bumps() {
    let v = with(
        base(),
        json!({ "kind": "stability", "graphon": { "kind": "uniform_attachment" }, "mode": "symmetric_simple",
                "n_list": [4], "samples": 16, "perturbations": [0.0, 5.0] }),
    );
    let report = run_stability(&config(&v).unwrap()).unwrap();
    assert_eq!(report.rows[0].gap, 0.0);
    assert_eq!(report.rows[0].ratio, None);
    assert!(report.rows[1].gap.is_finite() && report.rows[1].ratio.unwrap().is_finite());
}

#[test]
fn wlln_zero_dynamics_point_start() {
    let zero = json!({ "dim": 1, "drift": { "kind": "zero" }, "diffusion": { "kind": "constant", "sigma": 0.0 } });
    let v = with(
        base(),
        json!({ "kind": "wlln", "graphon": { "kind": "product" }, "mode": "symmetric_simple", "random_points": true,
                "model": zero, "initial": { "kind": "point", "x": [0.7] } }),
    );
    let report = run_wlln(&config(&v).unwrap()).unwrap();
    for row in &report.rows {
        assert!(row.diffs.iter().all(|&d| d < 1e-12));
        assert!(row.dbl.iter().all(|&d| d < 1e-12));
        assert!(row.exceed.iter().all(|&f| f == 0.0));
    }
}

#[test]
fn runs_are_independent_of_thread_count() {
    let v = with(base(), json!({ "graphon": { "kind": "power_law", "a": 0.3 }, "mode": "symmetric_simple" }));
    let cfg = config(&v).unwrap();
    let run = |t| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .unwrap()
            .install(|| run_experiment(&cfg).unwrap().to_csv())
    };
    assert_eq!(run(1), run(3));
}
