use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn legop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_legop")).args(args).env_remove("LEGOP_SEED").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("helix.csv");
    let res = legop(&["gen", "helix", "--dim", "5", "--n", "400", "--seed", "3", "--out", path_str(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 401);
    assert_eq!(rows[0].last().unwrap(), "label");
    assert!(rows.iter().all(|r| r.len() == 6));
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("helix.json")).unwrap()).unwrap();
    assert_eq!(sidecar["kind"], "helix");
    assert_eq!(sidecar["truth"].as_array().unwrap().len(), 400);
}

#[test]
fn circle_points_lie_on_the_unit_circle_without_noise() {
    let res = legop(&["gen", "circle", "--n", "50", "--noise", "0"]);
    assert_eq!(code(&res), 0);
    let text = String::from_utf8(res.stdout).unwrap();
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[0].hypot(v[1]) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn regeneration_is_byte_identical_and_seed_comes_from_the_environment() {
    let a = legop(&["gen", "sphere", "--n", "100", "--seed", "9"]);
    let b = legop(&["gen", "sphere", "--n", "100", "--seed", "9"]);
    assert_eq!(a.stdout, b.stdout);
    let env = Command::new(env!("CARGO_BIN_EXE_legop"))
        .args(["gen", "sphere", "--n", "100"])
        .env("LEGOP_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(env.stdout, a.stdout);
    let other = legop(&["gen", "sphere", "--n", "100", "--seed", "10"]);
    assert_ne!(other.stdout, a.stdout);
}

/// Writes a helix training set and a few query points taken from it.
fn predict_fixture(dir: &Path, label: Option<f64>) -> (String, String) {
    let data = dir.join("train.csv");
    assert_eq!(code(&legop(&["gen", "helix", "--dim", "3", "--n", "400", "--seed", "1", "--out", path_str(&data)])), 0);
    let text = fs::read_to_string(&data).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    if let Some(y) = label {
        for line in lines.iter_mut().skip(1) {
            let (features, _) = line.rsplit_once(',').unwrap();
            *line = format!("{features},{y}");
        }
        fs::write(&data, lines.join("\n") + "\n").unwrap();
    }
    let centers = dir.join("centers.csv");
    let picked: Vec<String> = lines[1..=4].iter().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect();
    fs::write(&centers, format!("x0,x1,x2\n{}\n", picked.join("\n"))).unwrap();
    (data.display().to_string(), centers.display().to_string())
}

#[test]
fn constant_labels_predict_the_constant() {
    let dir = tempfile::tempdir().unwrap();
    let (data, centers) = predict_fixture(dir.path(), Some(4.25));
    let out = dir.path().join("pred.csv");
    let res = legop(&[
        "predict",
        "--data",
        &data,
        "--centers",
        &centers,
        "--out",
        path_str(&out),
        "--iterations",
        "10",
        "--subsample",
        "50",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let rows = csv_rows(&out);
    assert_eq!(rows[0], ["center_id", "prediction", "best_iteration", "reason"]);
    assert_eq!(rows.len(), 5);
    for r in &rows[1..] {
        assert!((r[1].parse::<f64>().unwrap() - 4.25).abs() < 1e-9, "{r:?}");
    }
}

#[test]
fn traces_repeat_exactly_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (data, centers) = predict_fixture(dir.path(), None);
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let res = legop(&[
            "--threads",
            threads,
            "predict",
            "--data",
            &data,
            "--centers",
            &centers,
            "--out",
            path_str(&out),
            "--iterations",
            "12",
            "--subsample",
            "60",
            "--seed",
            "5",
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        (fs::read(&out).unwrap(), fs::read(out.with_extension("trace.jsonl")).unwrap())
    };
    let first = run("1", "a.csv");
    assert_eq!(run("1", "b.csv"), first);
    assert_eq!(run("3", "c.csv"), first);
    let lines: Vec<serde_json::Value> =
        String::from_utf8(first.1).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4 * 12);
    for key in ["center_id", "i", "t_i", "m_eigs", "sigma_eigs", "loo_mse", "guard_events"] {
        assert!(lines[0].get(key).is_some(), "{key}");
    }
}

#[test]
fn defaults_resolve_to_the_documented_loop() {
    let dir = tempfile::tempdir().unwrap();
    let (data, centers) = predict_fixture(dir.path(), None);
    let out = dir.path().join("pred.csv");
    let res = legop(&["predict", "--data", &data, "--centers", &centers, "--out", path_str(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let trace = fs::read_to_string(out.with_extension("trace.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = trace.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let first: Vec<&serde_json::Value> = lines.iter().filter(|l| l["center_id"] == 0).collect();
    assert_eq!(first.len(), 150);
    // initial metric I/0.2 and bandwidth schedule (1+i)^-1.2
    for v in first[0]["m_eigs"].as_array().unwrap() {
        assert!((v.as_f64().unwrap() - 5.0).abs() < 1e-12);
    }
    assert!((first[1]["t_i"].as_f64().unwrap() - 2f64.powf(-1.2)).abs() < 1e-15);
    // the default subsample of 300 cannot be drawn from 200 points
    let small = dir.path().join("small.csv");
    let text = fs::read_to_string(&data).unwrap();
    fs::write(&small, text.lines().take(201).collect::<Vec<_>>().join("\n") + "\n").unwrap();
    let res = legop(&["predict", "--data", path_str(&small), "--centers", &centers, "--out", path_str(&out)]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("300"));
}

#[test]
fn exit_codes_separate_usage_from_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&legop(&["gen", "helix", "--n", "10", "--noise", "0.9"])), 2);
    assert_eq!(code(&legop(&["experiment", "no-such-experiment"])), 2);
    assert_eq!(code(&legop(&["--threads", "0", "gen", "circle", "--n", "5"])), 2);
    assert_eq!(code(&legop(&["frobnicate"])), 2);
    let out = dir.path().join("p.csv");
    let missing = dir.path().join("missing.csv");
    let res =
        legop(&["predict", "--data", path_str(&missing), "--centers", path_str(&missing), "--out", path_str(&out)]);
    assert_eq!(code(&res), 1);
}

#[test]
fn momentum_experiment_shows_damped_oscillation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("momentum.json");
    let res = legop(&["experiment", "momentum", "--n", "800", "--seeds", "1", "--out", path_str(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let ratio = report["summary"]["min_ratio"].as_f64().unwrap();
    assert!(ratio >= 3.0, "oscillation ratio {ratio}");
    // the saved report replays to the same numbers
    let again = dir.path().join("again.json");
    assert_eq!(code(&legop(&["experiment", "--config", path_str(&out), "--out", path_str(&again)])), 0);
    let replayed: serde_json::Value = serde_json::from_str(&fs::read_to_string(&again).unwrap()).unwrap();
    assert_eq!(replayed["summary"], report["summary"]);
    assert_eq!(replayed["rows"], report["rows"]);
}
