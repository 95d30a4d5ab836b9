use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

struct Run {
    code: i32,
    out: PathBuf,
    _dir: TempDir,
}

impl Run {
    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.out.join(name)).unwrap()
    }
}

fn run(sub: &str, toml: &str) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, toml).unwrap();
    let out = dir.path().join("out");
    let code = sesqui::cli::run_from([
        "sesqui".as_ref(),
        "--quiet".as_ref(),
        "--out".as_ref(),
        out.as_os_str(),
        sub.as_ref(),
        config.as_os_str(),
    ]);
    Run { code, out, _dir: dir }
}

fn lines_with<'a>(text: &'a str, id: &str) -> Vec<&'a str> {
    text.lines().map(str::trim).filter(|l| l.starts_with(&format!("[{id}]"))).collect()
}

fn csv_column(csv: &str, name: &str) -> Vec<String> {
    let mut rows = csv.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    rows.map(|r| r.split(',').nth(k).unwrap().to_string()).collect()
}

const EPHAPTIC_SIM: &str = r#"schema_version = 1
seed = 3

[model]
kind = "ephaptic"
pattern = "minus_coupling"
diffusion = 1.0
coupling = 0.3

[grid]
n_cells = 24

[evolution]
dt = 0.01
t_end = 0.3
"#;

#[test]
fn certify_dominant_matrix_exits_zero() {
    let r = run("certify", "schema_version = 1\n[constants]\nalpha = [[2.0, -1.0], [-1.0, 2.0]]\n");
    assert_eq!(r.code, 0);
    let text = r.read("certify.txt");
    assert!(lines_with(&text, "ellipticity")[0].contains("PASS"));
    assert!(lines_with(&text, "ellipticity")[0].contains("alpha=1"));
    assert!(lines_with(&text, "gershgorin")[0].contains("PASS"));
    let json: serde_json::Value = serde_json::from_str(&r.read("certify.json")).unwrap();
    assert_eq!(json["command"], "certify");
}

#[test]
fn certify_indefinite_matrix_exits_one() {
    let r = run("certify", "schema_version = 1\n[constants]\nalpha = [[1.0, -2.0], [-2.0, 1.0]]\n");
    assert_eq!(r.code, 1);
    assert!(lines_with(&r.read("certify.txt"), "ellipticity")[0].contains("FAIL"));
}

#[test]
fn malformed_config_exits_two() {
    assert_eq!(run("certify", "schema_version = 1\n[constants\nalpha = 1\n").code, 2);
    assert_eq!(run("certify", "schema_version = 1\n[constants]\nalpha = [[1.0, 0.0]]\n").code, 2);
    assert_eq!(run("certify", "schema_version = 1\nunknown_key = 4\n").code, 2);
    assert_eq!(run("certify", "schema_version = 9\n[constants]\nalpha = [[1.0]]\n").code, 2);
}

#[test]
fn simulate_rejects_zero_step() {
    let toml = EPHAPTIC_SIM.replace("dt = 0.01", "dt = 0.0");
    assert_eq!(run("simulate", &toml).code, 2);
}

#[test]
fn simulate_zero_data_gives_zero_norms() {
    let toml = format!("{EPHAPTIC_SIM}\n[initial]\nkind = \"zero\"\n");
    let r = run("simulate", &toml);
    assert_eq!(r.code, 0);
    let csv = r.read("trajectory.csv");
    for col in ["h_norm", "comp_norm_1", "comp_norm_2"] {
        assert!(csv_column(&csv, col).iter().all(|v| v.parse::<f64>().unwrap() == 0.0));
    }
}

#[test]
fn simulate_in_phase_data_keeps_strip_distance() {
    let toml = format!("{EPHAPTIC_SIM}\n[initial]\nkind = \"in_phase\"\n");
    let r = run("simulate", &toml);
    assert_eq!(r.code, 0);
    let csv = r.read("trajectory.csv");
    let dist = csv_column(&csv, "strip_distance");
    assert_eq!(dist.len(), 31);
    assert!(dist.iter().all(|v| v.parse::<f64>().unwrap() <= 1e-8));
}

#[test]
fn dynamic_boundary_checks_report_sup_norm_failure() {
    let toml = r#"schema_version = 1
seed = 1

[model]
kind = "dynamic_bc_heat"

[grid]
n_cells = 32

[evolution]
dt = 0.01
t_end = 0.2

[[checks]]
id = "positivity"
runtime = true
trials = 4

[[checks]]
id = "domination"
trials = 4

[[checks]]
id = "linf"
trials = 4
"#;
    let r = run("check", toml);
    let text = r.read("checks.txt");
    assert!(lines_with(&text, "positivity")[0].contains("PASS"), "{text}");
    assert!(lines_with(&text, "domination")[0].contains("PASS"), "{text}");
    assert!(lines_with(&text, "linf-contractivity")[0].contains("FAIL"), "{text}");
    assert_eq!(r.code, 1);
    let witness = std::fs::read_dir(&r.out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .find(|n| n.starts_with("witness_") && n.ends_with(".csv"));
    assert!(witness.is_some());
}

#[test]
fn ephaptic_invariance_checks_pass() {
    let toml = format!(
        "{EPHAPTIC_SIM}\n[[checks]]\nid = \"row_sums\"\n\n[[checks]]\nid = \"subspace_C\"\n\n[[checks]]\nid = \"strip_runtime\"\ntrials = 2\nalpha_levels = [0.0, 1.0]\n"
    );
    let r = run("check", &toml);
    let text = r.read("checks.txt");
    assert_eq!(r.code, 0, "{text}");
    for id in ["row-sums", "strip-subspace", "strip-runtime"] {
        assert!(lines_with(&text, id)[0].contains("PASS"), "{text}");
    }
}

#[test]
fn damped_wave_strip_check_is_not_applicable() {
    let toml = "schema_version = 1\n[model]\nkind = \"damped_wave\"\n[grid]\nn_cells = 8\n[[checks]]\nid = \"subspace_C\"\n";
    let r = run("check", toml);
    assert_eq!(r.code, 0);
    assert!(lines_with(&r.read("checks.txt"), "strip-subspace")[0].contains("NOT-APPLICABLE"));
}

#[test]
fn coefficient_check_without_coefficients_exits_two() {
    let toml = "schema_version = 1\n[model]\nkind = \"damped_wave\"\n[grid]\nn_cells = 8\n[[checks]]\nid = \"row_sums\"\n";
    assert_eq!(run("check", toml).code, 2);
    let toml = "schema_version = 1\n[model]\nkind = \"damped_wave\"\n[grid]\nn_cells = 8\n[[checks]]\nid = \"no_such_check\"\n";
    assert_eq!(run("check", toml).code, 2);
}

#[test]
fn exit_code_tracks_failures() {
    let cases = [
        "schema_version = 1\n[model]\nkind = \"ephaptic\"\npattern = \"perturbed\"\ndiffusion = 1.0\ncoupling = 0.3\n[grid]\nn_cells = 8\n[[checks]]\nid = \"row_sums\"\n[[checks]]\nid = \"realness\"\n",
        "schema_version = 1\n[model]\nkind = \"ephaptic\"\npattern = \"uniform\"\ndiffusion = 1.0\ncoupling = 0.3\n[grid]\nn_cells = 8\n[[checks]]\nid = \"row_sums\"\n[[checks]]\nid = \"column_sums\"\n",
    ];
    for toml in cases {
        let r = run("check", toml);
        let failed = r.read("checks.txt").lines().any(|l| l.contains("] FAIL"));
        assert_eq!(r.code, i32::from(failed));
    }
}

#[test]
fn seed_makes_runs_reproducible() {
    let toml = format!("{EPHAPTIC_SIM}\n[initial]\nkind = \"random\"\n");
    let a = run("simulate", &toml).read("trajectory.csv");
    let b = run("simulate", &toml).read("trajectory.csv");
    assert_eq!(a, b);
    let c = run("simulate", &toml.replace("seed = 3", "seed = 4")).read("trajectory.csv");
    assert_ne!(a, c);
}

fn binary(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sesqui")).args(args).current_dir(cwd).output().unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ok.toml"), "schema_version = 1\n[constants]\nalpha = [[2.0, -1.0], [-1.0, 2.0]]\n").unwrap();
    std::fs::write(dir.path().join("bad.toml"), "not toml [").unwrap();
    let ok = binary(&["--out", "o", "certify", "ok.toml"], dir.path());
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("[ellipticity] PASS"));
    assert!(dir.path().join("o/certify.txt").exists());
    let bad = binary(&["certify", "bad.toml"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(!bad.stderr.is_empty());
    let missing = binary(&["certify", "missing.toml"], dir.path());
    assert_ne!(missing.status.code(), Some(0));
}
