use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: [&str; 8] = ["--set", "mesh.n_div=4", "--set", "time.T=0.02", "--set", "time.tau=2e-3", "--set", "param.s=2"];

fn pllg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pllg")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pllg(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn with_tiny<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(TINY).collect()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

fn sorted_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn hf_solve_is_byte_for_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(&with_tiny(&["hf-solve", "--seed", "7", "--count", "2", "--out", dir.to_str().unwrap()]));
    }
    let files = sorted_files(&a);
    assert_eq!(files, sorted_files(&b));
    assert!(files.contains(&"manifest.json".to_string()) && files.contains(&"sample_0001_lambda.csv".to_string()));
    for f in &files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let c = tmp.path().join("c");
    ok(&with_tiny(&["hf-solve", "--seed", "8", "--count", "2", "--out", c.to_str().unwrap()]));
    assert_ne!(fs::read(a.join("params.csv")).unwrap(), fs::read(c.join("params.csv")).unwrap());
}

/// Smallest `J` with captured energy `≥ 1 − ε²`, from scratch.
fn energy_dimension(sv: &[f64], eps_sq: f64) -> usize {
    let rank = sv.iter().take_while(|&&s| s > 1e-12 * sv[0]).count();
    let total: f64 = sv[..rank].iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    for (j, s) in sv[..rank].iter().enumerate() {
        acc += s * s;
        if acc >= (1.0 - eps_sq) * total {
            return j + 1;
        }
    }
    rank
}

#[test]
fn pipeline_stages_chain_and_pod_dims_meet_the_criterion() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
    let (snap, pod, test, rom, sg, met) = (p("snap"), p("pod"), p("test"), p("rom"), p("sg"), p("met"));
    ok(&with_tiny(&["hf-solve", "--count", "4", "--out", &snap]));
    ok(&with_tiny(&["offline-pod", "--snapshots", &snap, "--eps-sq", "1e-5", "--out", &pod]));

    let sv = csv_rows(&Path::new(&pod).join("singular_values.csv"));
    assert_eq!(sv[0], ["index", "sigma_m", "sigma_v", "sigma_lambda"]);
    let dims = csv_rows(&Path::new(&pod).join("dims.csv"));
    for (k, row) in dims[1..].iter().enumerate() {
        let col: Vec<f64> = sv[1..].iter().filter(|r| !r[k + 1].is_empty()).map(|r| r[k + 1].parse().unwrap()).collect();
        let j: usize = row[2].parse().unwrap();
        assert_eq!(j, energy_dimension(&col, 1e-5), "{}", row[0]);
        let basis = csv_rows(&Path::new(&pod).join(format!("basis_{}.csv", row[0])));
        assert_eq!(basis[0].len(), j);
    }

    ok(&with_tiny(&["hf-solve", "--role", "test", "--count", "2", "--out", &test]));
    ok(&with_tiny(&["online-rom", "--bases", &pod, "--variant", "SS-OG-1x", "--budget", "4", "--count", "2", "--out", &rom]));
    ok(&with_tiny(&["sg-rbp", "--bases", &pod, "--threshold", "0.05", "--count", "2", "--out", &sg]));
    for approx in [&rom, &sg] {
        ok(&with_tiny(&["metrics", "--reference", &test, "--approx", approx, "--out", &met]));
        let summary = csv_rows(&Path::new(&met).join("summary.csv"));
        let err: f64 = summary[1][3].parse().unwrap();
        assert!(err.is_finite() && (0.0..1.0).contains(&err), "{approx}: {err}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(Path::new(&met).join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "metrics");
    assert!(manifest["inputs"].as_array().unwrap().len() >= 6);
    assert!(manifest["config"].as_str().unwrap().contains("n_div = 4"));
}

#[test]
fn config_errors_name_the_field_and_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let r = pllg(&["hf-solve", "--set", "mesh.bogus=1", "--out", out]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("mesh.bogus"));
    let r = pllg(&["hf-solve", "--set", "time.tau=-1", "--out", out]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("time.tau"));
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[online]\ndims = [5, 0]\n").unwrap();
    let r = pllg(&["hf-solve", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("online.dims[1]"));
    assert_eq!(pllg(&["experiment", "nope", "--out", out]).status.code(), Some(2));
}

#[test]
fn missing_artifacts_report_the_expected_path_and_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = tmp.path().join("out");
    let r = pllg(&["offline-pod", "--snapshots", empty.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&r.stderr).contains(&*empty.join("params.csv").to_string_lossy()));
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"failed_stage\": \"offline-pod\""));
}

#[test]
fn experiment_writes_the_documented_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("relax");
    let mut args = with_tiny(&["experiment", "relax-1d", "--out", out.to_str().unwrap()]);
    args.extend(["--set", "sampling.n_snapshots=3", "--set", "sampling.n_test=2", "--set", "online.dims=[3,6]"]);
    args.extend(["--set", "refine.enabled=false"]);
    ok(&args);
    let files = sorted_files(&out);
    for f in ["singular_values.csv", "projection_error.csv", "variants.csv", "report.json", "manifest.json"] {
        assert!(files.contains(&f.to_string()), "{f} missing from {files:?}");
    }
    let variants = csv_rows(&out.join("variants.csv"));
    assert_eq!(variants.len(), 1 + 2 * 4);
    assert_eq!(variants[0][..3], ["variant", "budget", "v_dim"]);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["failed_stage"].is_null());
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), files.len() - 1);
}
