//! Smoke test: every shipped example must run to completion. Each example
//! doubles as executable documentation, so a panic or a unwrap failure in
//! one of them is a regression even if the library tests pass.

use std::process::Command;

#[test]
fn every_example_runs_to_completion() {
    let examples = [
        "two_variable_closed_forms",
        "sequential_identification",
        "nps_verification",
        "partially_ignorable_icin",
        "group_permutation_order",
        "dirichlet_sensitivity",
    ];
    for example in examples {
        let out = Command::new(env!("CARGO"))
            .args(["run", "-q", "-p", "npsat", "--example", example])
            .current_dir(env!("CARGO_MANIFEST_DIR"))
            .output()
            .expect("cargo runs");
        assert!(
            out.status.success(),
            "{example} failed:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(
            !out.stdout.is_empty(),
            "{example} printed nothing to stdout"
        );
    }
}
