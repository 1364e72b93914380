//! End-to-end checks of the command-line binary: exit codes, output files,
//! and run manifests.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use npsat::fileio::{self, ParsedTable};
use npsat::{CategorySpace, IdentPlan};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn npsat_cmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_npsat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn path_str(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

#[test]
fn identify_recovers_the_product_law_under_every_plan() {
    let observed = fixture("mcar_observed.txt");
    for plan in ["carry_plan.toml", "permutation_plan.toml", "ccmv_plan.toml"] {
        let dir = tempfile::tempdir().unwrap();
        let out = npsat_cmd(&[
            "identify",
            &path_str(&observed),
            &path_str(&fixture(plan)),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0, "{plan}: {}", stderr(&out));
        assert!(stdout(&out).contains("saturation check passed"), "{}", stdout(&out));

        let study = match fileio::read_table(&dir.path().join("study.txt")).unwrap() {
            ParsedTable::Study(s) => s,
            other => panic!("unexpected kind in study.txt: {other:?}"),
        };
        assert!((study.prob(&[0, 0]) - 0.42).abs() < 1e-12, "{plan}");

        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["tool"], "npsat");
        assert_eq!(manifest["command"], "identify");
        assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
        let outputs = manifest["outputs"].as_array().unwrap();
        assert_eq!(outputs.len(), 4);
        for entry in outputs {
            assert_eq!(entry["sha256"].as_str().unwrap().len(), 64);
        }
    }
}

#[test]
fn identify_accepts_counts_and_a_written_plan() {
    let dir = tempfile::tempdir().unwrap();
    let space = CategorySpace::new(vec![2, 2, 2]).unwrap();
    let plan = IdentPlan::partially_ignorable_icin(space, 0).unwrap();
    let plan_path = dir.path().join("pim.toml");
    std::fs::write(&plan_path, fileio::plan_to_toml(&plan)).unwrap();

    let out = npsat_cmd(&[
        "identify",
        &path_str(&fixture("survey_counts.txt")),
        &path_str(&plan_path),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("saturation check passed"));
}

#[test]
fn identify_rejects_an_invalid_plan_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = npsat_cmd(&[
        "identify",
        &path_str(&fixture("mcar_observed.txt")),
        &path_str(&fixture("invalid_plan.toml")),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("carr"), "{}", stderr(&out));
}

#[test]
fn identify_zero_donor_exits_3_unless_uniform_fill_is_chosen() {
    let dir = tempfile::tempdir().unwrap();
    let observed = path_str(&fixture("zero_donor_observed.txt"));
    let plan = path_str(&fixture("carry_plan.toml"));
    let out_dir = dir.path().to_str().unwrap();

    let out = npsat_cmd(&["identify", &observed, &plan, "--out", out_dir]);
    assert_eq!(exit_code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("block"), "{}", stderr(&out));

    let out = npsat_cmd(&[
        "identify",
        &observed,
        &plan,
        "--zero-cell-policy",
        "uniform",
        "--out",
        out_dir,
    ]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let factors: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("factors.json")).unwrap())
            .unwrap();
    assert!(
        !factors["events"].as_array().unwrap().is_empty(),
        "uniform fill should be recorded"
    );
}

#[test]
fn verify_distinguishes_pass_fail_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let observed = path_str(&fixture("mcar_observed.txt"));
    let out_dir = dir.path().to_str().unwrap();
    let out = npsat_cmd(&[
        "identify",
        &observed,
        &path_str(&fixture("carry_plan.toml")),
        "--out",
        out_dir,
    ]);
    assert_eq!(exit_code(&out), 0);
    let full_path = dir.path().join("full.txt");

    let out = npsat_cmd(&["verify", full_path.to_str().unwrap(), &observed]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("passed"));

    // Shift one cell's mass and the check must fail, naming the worst cell.
    let tampered = std::fs::read_to_string(&full_path)
        .unwrap()
        .replace("1.68", "1.88");
    let tampered_path = dir.path().join("tampered.txt");
    std::fs::write(&tampered_path, tampered).unwrap();
    let out = npsat_cmd(&["verify", tampered_path.to_str().unwrap(), &observed]);
    assert_eq!(exit_code(&out), 1, "{}", stderr(&out));
    assert!(stdout(&out).contains("FAILED"));
    assert!(stdout(&out).contains("pattern"));

    let out = npsat_cmd(&[
        "verify",
        full_path.to_str().unwrap(),
        &path_str(&fixture("survey_counts.txt")),
    ]);
    assert_eq!(exit_code(&out), 2, "{}", stderr(&out));
}

#[test]
fn validate_plan_reports_violations() {
    let out = npsat_cmd(&["validate-plan", &path_str(&fixture("carry_plan.toml"))]);
    assert_eq!(exit_code(&out), 0);
    assert!(stdout(&out).contains("plan is valid"));

    let out = npsat_cmd(&["validate-plan", &path_str(&fixture("invalid_plan.toml"))]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("plan is invalid"));
}

#[test]
fn sensitivity_runs_are_deterministic_per_seed() {
    let counts = path_str(&fixture("survey_counts.txt"));
    let suite = path_str(&fixture("survey_suite.toml"));
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = npsat_cmd(&[
            "sensitivity",
            &counts,
            &suite,
            "--draws",
            "40",
            "--seed",
            seed,
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
        let tsv = std::fs::read_to_string(dir.path().join("draws.tsv")).unwrap();
        let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        (tsv, summary)
    };

    let (tsv_a, summary) = run("3");
    // Header plus one record per available mechanism, estimand, and draw.
    assert_eq!(tsv_a.lines().count(), 1 + 5 * 2 * 40);
    assert!(summary.contains("icin"));
    assert!(summary.contains("ignorable"));

    let (tsv_b, _) = run("3");
    assert_eq!(tsv_a, tsv_b, "same seed must reproduce the draws bit for bit");
    let (tsv_c, _) = run("4");
    assert_ne!(tsv_a, tsv_c, "a different seed must change the draws");
}

#[test]
fn usage_errors_exit_2() {
    let out = npsat_cmd(&["identify"]);
    assert_eq!(exit_code(&out), 2);
    let out = npsat_cmd(&["frobnicate"]);
    assert_eq!(exit_code(&out), 2);
}
