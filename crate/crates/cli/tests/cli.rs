use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cbam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbam"))
        .args(args)
        .env_remove("RUST_BACKTRACE")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cbam(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn shipped() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/four_country")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn fixture_calibrate_solve() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = dir.path().join("inputs");
    ok(&["fixture", "--name", "two-by-two", "-o", s(&inputs)]);
    let cal = dir.path().join("cal");
    let msg = ok(&[
        "calibrate",
        "--manifest",
        s(&inputs.join("manifest.json")),
        "-o",
        s(&cal),
    ]);
    assert!(
        msg.starts_with("calibrated 2 countries x 2 sectors"),
        "{msg}"
    );
    let scenario = dir.path().join("scenario.json");
    fs::write(&scenario, r#"{"cbam_mode": "full_endogenous"}"#).unwrap();
    let out = dir.path().join("solved");
    let table = ok(&[
        "solve",
        "--economy",
        s(&cal.join("economy.json")),
        "--scenario",
        s(&scenario),
        "-o",
        s(&out),
    ]);
    let r = rows(&table);
    assert_eq!(r[0], ["metric", "value"]);
    let direct: f64 = r.iter().find(|x| x[0] == "eei_direct_total").unwrap()[1]
        .parse()
        .unwrap();
    assert!(direct < 0.0);
    assert!(out.join("solution.json").exists() && out.join("metrics.json").exists());
}

#[test]
fn economy_json_and_manifest_give_same_answer() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = shipped().join("manifest.json");
    ok(&["calibrate", "--manifest", s(&manifest), "-o", s(dir.path())]);
    let scenario = shipped().join("full_endogenous.json");
    let a = ok(&[
        "solve",
        "--economy",
        s(&manifest),
        "--scenario",
        s(&scenario),
    ]);
    let b = ok(&[
        "solve",
        "--economy",
        s(&dir.path().join("economy.json")),
        "--scenario",
        s(&scenario),
    ]);
    assert_eq!(a, b);
}

#[test]
fn baseline_writes_economy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("baseline.json");
    ok(&[
        "baseline",
        "--economy",
        s(&shipped().join("manifest.json")),
        "--shock",
        s(&shipped().join("shock.json")),
        "-o",
        s(&out),
    ]);
    let econ: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(econ["dims"]["n_countries"], 4);
}

#[test]
fn unknown_country_in_shock_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let shock = dir.path().join("shock.json");
    fs::write(&shock, r#"{"annual_reduction": {"ATLANTIS": 0.1}}"#).unwrap();
    let out = cbam(&[
        "baseline",
        "--economy",
        s(&shipped().join("manifest.json")),
        "--shock",
        s(&shock),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("unknown country 'ATLANTIS'"), "{err}");
}

#[test]
fn sweep_reads_economy_next_to_spec() {
    let table = ok(&[
        "sweep",
        "--spec",
        s(&shipped().join("sweep_integration.json")),
    ]);
    let r = rows(&table);
    assert_eq!(r[0][0], "integration_scale");
    assert_eq!(r.len(), 12);
    let change: Vec<f64> = r[1..].iter().map(|x| x[7].parse().unwrap()).collect();
    assert!(change.windows(2).all(|w| w[1].abs() <= w[0].abs()));
}

#[test]
fn linearize_writes_long_table() {
    let manifest = shipped().join("manifest.json");
    let full = ok(&["linearize", "--economy", s(&manifest), "--flow", "2,1,2,1"]);
    let partial = ok(&[
        "linearize",
        "--economy",
        s(&manifest),
        "--flow",
        "2,1,2,1",
        "--partial",
    ]);
    let r = rows(&full);
    assert_eq!(
        r[0],
        [
            "quantity",
            "country",
            "sector",
            "buyer_country",
            "buyer_sector",
            "value"
        ]
    );
    assert_eq!(r.iter().filter(|x| x[0] == "dlogp").count(), 12);
    let value = |t: &str, q: &str| -> f64 {
        rows(t).iter().find(|x| x[0] == q).unwrap()[5]
            .parse()
            .unwrap()
    };
    let parts = ["dlog_eei_intensity", "dlog_eei_network", "dlog_eei_imports"]
        .map(|q| value(&full, q))
        .iter()
        .sum::<f64>();
    assert!((parts - value(&full, "dlog_eei")).abs() < 1e-15);
    assert_eq!(value(&partial, "dlogw"), 0.0);
    assert_ne!(value(&full, "dlogw"), 0.0);
}

#[test]
fn malformed_flow_is_rejected() {
    let out = cbam(&[
        "linearize",
        "--economy",
        s(&shipped().join("manifest.json")),
        "--flow",
        "2,1,2",
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: "), "{err}");
    assert!(!err.contains("backtrace"));
}

#[test]
fn suite_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let log = ok(&[
        "suite",
        "--manifest",
        s(&shipped().join("suite.json")),
        "-o",
        s(&run),
    ]);
    assert_eq!(log.lines().count(), 5);
    let csv = ok(&["report", "--run", s(&run)]);
    assert_eq!(rows(&csv)[0], ["scenario", "metric", "value"]);
    let json = ok(&["report", "--run", s(&run), "--format", "json"]);
    let report: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(report["layout"], "layout_v1");

    fs::write(run.join("tables/table2_emissions.csv"), "edited\n").unwrap();
    assert!(!cbam(&["report", "--run", s(&run)]).status.success());
}

#[test]
fn thread_count_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let sums = |name: &str, threads: &str| {
        let run = dir.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_cbam"))
            .args([
                "suite",
                "--manifest",
                s(&shipped().join("suite.json")),
                "-o",
                s(&run),
            ])
            .env("CBAM_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        fs::read_to_string(run.join("SHA256SUMS")).unwrap()
    };
    assert_eq!(sums("one", "1"), sums("three", "3"));
}

#[test]
fn missing_input_names_stage() {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(shipped()).unwrap() {
        let p = entry.unwrap().path();
        if p.file_name().unwrap() != "emissions.csv" {
            fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
        }
    }
    let run = dir.path().join("run");
    let out = cbam(&[
        "suite",
        "--manifest",
        s(&dir.path().join("suite.json")),
        "-o",
        s(&run),
    ]);
    assert!(!out.status.success());
    assert_eq!(
        String::from_utf8(out.stderr).unwrap().trim_end(),
        "error: calibrate: emissions.csv not found"
    );
    assert!(run.join("INVALID").exists());
}
