use std::fs;
use std::path::Path;
use std::process::Command;

use lifelong_bench::{read_rows, ExperimentConfig, SummaryDocument};
use lifelong_core::Algorithm;

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lifelong-bench"))
}

fn write_config(dir: &Path, config: &ExperimentConfig) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string(config).unwrap()).unwrap();
    path
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &ExperimentConfig::standard(Algorithm::Ucblvd, 25),
    );
    let out = dir.path().join("out");
    let status = bench()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed", "3", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let rows = read_rows(fs::File::open(out.join("ucblvd_seed3.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 25);
    let doc: SummaryDocument =
        serde_json::from_str(&fs::read_to_string(out.join("ucblvd_seed3.json")).unwrap()).unwrap();
    assert_eq!(doc.seed, 3);
    assert_eq!(doc.final_regret, rows[24].cum_regret);
}

#[test]
fn sweep_prints_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::standard(Algorithm::Lsvi, 10);
    c.n_seeds = 2;
    c.sweep.algorithms = vec![Algorithm::Lsvi, Algorithm::PsiBaseline];
    let output = bench()
        .args(["sweep", "--config"])
        .arg(write_config(dir.path(), &c))
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn verify_passes_on_a_short_suite() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::standard(Algorithm::Ucblvd, 40);
    c.c_beta = 1.0;
    c.n_seeds = 2;
    let output = bench()
        .args(["verify", "--config"])
        .arg(write_config(dir.path(), &c))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(String::from_utf8(output.stdout).unwrap().contains("PASS"));
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = bench()
        .args(["run", "--config"])
        .arg(dir.path().join("nope.json"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.json"));

    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{"n_states":6,"n_actions":3,"horizon":3,"d":4,"m":2,"n_episodes":10,"delta":0.9}"#,
    )
    .unwrap();
    let invalid = bench()
        .args(["verify", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(invalid.status.code(), Some(1));
}

#[test]
fn shipped_config_loads() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/standard.json");
    let c = ExperimentConfig::load(&path).unwrap();
    assert_eq!(c.expand().len(), 9);
}
