use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fracpoisson"));
    c.env_remove("FRACPOISSON_SEED");
    c
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!("output_dir = {:?}\n{body}", dir.join("out").display().to_string());
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL: &str = r#"
[study]
kind = "convergence"
h = [0.75]
resolutions = [4, 8, 16]
reference_resolution = 32
replicates = 6
seed = 11

[study.nonlinearity.f1]
kind = "scaled_tanh"
bound = 1.0
slope = 1.0
"#;

/// Run directories under `out/` whose names start with `prefix`, oldest first.
fn run_dirs(dir: &Path, prefix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir.join("out"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    v.sort();
    v
}

#[test]
fn rates_exit_codes() {
    let ok = bin().args(["rates", "--h", "0.75"]).output().unwrap();
    assert_eq!(code(&ok), 0);
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(text.contains("nu = 0.5"), "{text}");
    assert!(text.contains("gamma = 2"), "{text}");

    let smoothed = bin().args(["rates", "--h", "0.8", "--k", "4", "--delta", "1"]).output().unwrap();
    assert_eq!(code(&smoothed), 0);
    assert!(String::from_utf8_lossy(&smoothed.stdout).contains("smoothing:"));

    let fails = bin().args(["rates", "--h", "0.5", "--k", "4"]).output().unwrap();
    assert_eq!(code(&fails), 1);
    assert!(String::from_utf8_lossy(&fails.stdout).contains("(H): fails"));

    let bad_mu = bin().args(["rates", "--h", "0.8", "--k", "4", "--mu", "0.9"]).output().unwrap();
    assert_eq!(code(&bad_mu), 1);

    let malformed = bin().args(["rates", "--h", "0.7,x"]).output().unwrap();
    assert_eq!(code(&malformed), 1);
    assert!(!malformed.stderr.is_empty());

    let usage = bin().args(["no-such-command"]).output().unwrap();
    assert_eq!(code(&usage), 1);
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);
}

#[test]
fn study_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for _ in 0..2 {
        let out = bin().arg("study").arg(&cfg).output().unwrap();
        assert!(out.status.success() || code(&out) == 1, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("convergence slope="));
    }
    let runs = run_dirs(dir.path(), "study-");
    assert_eq!(runs.len(), 2);
    for name in ["rates.csv", "summary.json", "config.toml"] {
        let a = std::fs::read(runs[0].join(name)).unwrap();
        let b = std::fs::read(runs[1].join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn sample_and_solve_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("replicates = 6", "replicates = 2"));
    let out = bin().arg("sample").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let sample = &run_dirs(dir.path(), "sample-")[0];
    let csv = std::fs::read_to_string(sample.join("noise_0001.csv")).unwrap();
    assert!(csv.starts_with("# k=1 n=32 h=0.75 seed=11"), "{csv}");
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 32);

    let out = bin().arg("solve").arg(&cfg).args(["--replicate", "1"]).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("converged"));
    let solve = &run_dirs(dir.path(), "solve-")[0];
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(solve.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], true);
    assert!(summary["mild_residual"].as_f64().unwrap() < 1e-8);
    let solution = std::fs::read_to_string(solve.join("solution.csv")).unwrap();
    assert_eq!(solution.lines().count(), 1 + 31);
}

#[test]
fn json_format_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("format = \"json\"\n{SMALL}"));
    let out = bin().arg("study").arg(&cfg).output().unwrap();
    assert!(code(&out) <= 1, "{}", String::from_utf8_lossy(&out.stderr));
    let run = &run_dirs(dir.path(), "study-")[0];
    let rates: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("rates.json")).unwrap()).unwrap();
    assert_eq!(rates["points"].as_array().unwrap().len(), 3);
}

#[test]
fn zero_replicates_is_rejected_with_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("replicates = 6", "replicates = 0"));
    let out = bin().arg("study").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("replicates = 0"), "{err}");
    assert!(err.contains("line"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("seed = 11", "seed = 11\nsede = 12"));
    let out = bin().arg("study").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}

#[test]
fn seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("replicates = 6", "replicates = 1"));
    let out = bin().env("FRACPOISSON_SEED", "777").arg("sample").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed 777 from FRACPOISSON_SEED"));
    let run = &run_dirs(dir.path(), "sample-")[0];
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 777);
    assert_eq!(manifest["seed_source"], "environment");
    assert_eq!(manifest["config"]["study"]["seed"], 777);

    let bad = bin().env("FRACPOISSON_SEED", "seven").arg("sample").arg(&cfg).output().unwrap();
    assert_eq!(code(&bad), 1);
}

#[test]
fn isometry_check_requires_an_isometry_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = bin().arg("isometry-check").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn kernel_check_reports_constants() {
    let out = bin().args(["kernel-check", "--h", "0.75", "--n", "32"]).output().unwrap();
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    // K~ of the one-dimensional lattice kernel is 1/8 at every n
    assert!(text.contains("K~ = sup_x int |G(x, y)| dy = 1.25"), "{text}");

    let smoothed = bin().args(["kernel-check", "--h", "0.8", "--k", "4", "--n", "4"]).output().unwrap();
    assert_eq!(code(&smoothed), 0, "{}", String::from_utf8_lossy(&smoothed.stderr));
    assert!(String::from_utf8_lossy(&smoothed.stdout).contains("discrepancy = "));
}

/// The bundled config at reduced cost: same model, fewer replicates and a
/// coarser ladder. The full file is exercised by the acceptance harness.
#[test]
fn bundled_config_parses_and_passes_when_reduced() {
    let bundled = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/k1_convergence.toml")).unwrap();
    let reduced = bundled
        .replace("output_dir = \"runs\"\n", "")
        .replace("resolutions = [8, 16, 32, 64, 128]", "resolutions = [8, 16, 32, 64]")
        .replace("reference_resolution = 512", "reference_resolution = 256")
        .replace("replicates = 100", "replicates = 20");
    assert_ne!(reduced, bundled);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &reduced);
    let out = bin().arg("study").arg(&cfg).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{text}{}", String::from_utf8_lossy(&out.stderr));
    assert!(text.contains("PASS"), "{text}");
}
