use std::path::Path;
use std::process::{Command, Output};

use tbb_sim::io::sha256_hex;

const MODEL: &str = "\
gamma_MHz = 3.03
kappa_MHz = 3.92
g_MHz = 0.33
deltaA_MHz = -29.0
Gamma_rel = 0.93e-3
N = 1e4
";

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_tbb-sim"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .args(args)
        .env_remove("TBB_SIM_THREADS")
        .output()
        .unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn steady_scan_writes_branches_and_a_valid_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{MODEL}[steady]\neta = {{ min = 300, max = 450, points = 31 }}\nG = 1\n");
    let out = run(tmp.path(), &cfg, &["steady"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let dir = tmp.path().join("out");
    let branches = std::fs::read_to_string(dir.join("branches.csv")).unwrap();
    assert!(branches.starts_with(
        "eta,lambda,big_g,s,intensity,transmittance,n_g,n_e,n_f,stability,max_re_eig\n"
    ));
    let stability = column(&branches, "stability");
    assert!(stability.len() > 31, "some drives must have three branches");
    assert!(stability.iter().any(|s| s == "unstable"));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "steady");
    assert_eq!(manifest["derived"]["repump"][0]["lambda"], "inf");
    let files = manifest["files"].as_array().unwrap();
    assert!(!files.is_empty());
    for f in files {
        let bytes = std::fs::read(dir.join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), sha256_hex(&bytes));
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
    }
}

#[test]
fn empty_cavity_transmits_everything() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{}N = 0\n[steady]\neta = {{ min = 1, max = 500, points = 20, scale = \"log\" }}\nG = 0.5\n",
        MODEL.replace("N = 1e4\n", "")
    );
    let out = run(tmp.path(), &cfg, &["steady"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let branches = std::fs::read_to_string(tmp.path().join("out/branches.csv")).unwrap();
    let t = column(&branches, "transmittance");
    assert_eq!(t.len(), 20);
    for v in t {
        assert!((v.parse::<f64>().unwrap() - 1.0).abs() < 1e-12, "{v}");
    }
}

#[test]
fn phase_diagram_svg_has_one_rect_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{MODEL}[phase_diagram]\neta = {{ min = 1, max = 500, points = 24, scale = \"log\" }}\nG = {{ min = 0.05, max = 1, points = 7 }}\nsvg = true\n"
    );
    let out = run(tmp.path(), &cfg, &["phase-diagram", "--threads", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out");
    let svg = std::fs::read_to_string(dir.join("heatmap.svg")).unwrap();
    // one background rectangle plus the cells
    assert_eq!(svg.matches("<rect").count(), 24 * 7 + 1);
    let map = std::fs::read_to_string(dir.join("phase_map.csv")).unwrap();
    let phases = column(&map, "phase");
    assert_eq!(phases.len(), 24 * 7);
    for p in ["blockaded", "bright", "bistable"] {
        assert!(phases.iter().any(|x| x == p), "missing {p}");
    }
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &format!("{MODEL}[steady]\neta = 300\nG = 1\nbogus = 1\n"), &["steady"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 10"), "{err}");

    let out = run(tmp.path(), &format!("{MODEL}[steady]\neta = 300\nG = 1\n"), &["pulse"]);
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_tbb-sim"))
        .args(["--config", "/nonexistent/run.toml", "steady"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_tbb-sim"))
        .arg("--out")
        .arg(tmp.path().join("env"))
        .arg("steady")
        .env("TBB_SIM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn integrator_failure_exits_with_three_and_keeps_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{MODEL}[simulate]\nt_end = 1000.0\nsamples = 101\neta = 236.0\nlambda = 0.0\n[simulate.solver]\nmax_steps = 50\n"
    );
    let out = run(tmp.path(), &cfg, &["simulate"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = std::fs::read_to_string(tmp.path().join("out/trajectory.csv")).unwrap();
    let rows = traj.lines().count() - 1;
    assert!((1..101).contains(&rows), "{rows} rows");
    assert!(tmp.path().join("out/manifest.json").exists());
}

#[test]
fn built_in_defaults_run_without_a_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tbb-sim"))
        .arg("--out")
        .arg(tmp.path())
        .args(["steady", "--threads", "1"])
        .env("TBB_SIM_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let printed = String::from_utf8_lossy(&out.stdout);
    assert!(printed.contains("branches.csv") && printed.contains("manifest.json"));
}
