//! Saturation is a checkable property, not a promise: collapse the full-data
//! law over each pattern's missing coordinates and compare against the
//! observed input, cell by cell. This example runs the global check on an
//! engine output, then on a deliberately perturbed law, and finally shows the
//! finer stage-level check that audits a single block step.
//!
//! Run with: cargo run -p npsat --example nps_verification

use npsat::assumptions::step_ccmv;
use npsat::stage::StageDistribution;
use npsat::verify::check_stepwise_nps;
use npsat::{check_nps, run_sequential, CategorySpace, IdentPlan, ObservedTable, ZeroCellPolicy};

fn main() {
    let space = CategorySpace::new(vec![3, 2]).unwrap();
    let observed = ObservedTable::from_fn(space.clone(), |pattern, obs_values| {
        let spread: usize = obs_values.iter().map(|&v| 2 * v + 1).sum();
        0.8 + 0.3 * pattern.rank() as f64 + 0.15 * spread as f64
    })
    .unwrap();

    // Identify under a carry plan and audit the result.
    let result = run_sequential(&observed, &IdentPlan::two_var_carry(space)).unwrap();
    let report = check_nps(&result.full, &observed, 1e-10).unwrap();
    println!("1. Engine output:");
    println!("   {report}");

    // Nudge one full cell. The total stays 1 after renormalizing, but the
    // implied observed law no longer matches, and the report names the worst
    // offending observed cell.
    let mut broken = result.full.clone();
    let (values, pattern, mass) = broken.iter_cells().next().unwrap();
    broken.set_prob(&values, pattern, mass + 0.02);
    broken.normalize().unwrap();
    let report = check_nps(&broken, &observed, 1e-10).unwrap();
    println!("\n2. Same law with one cell nudged by 0.02:");
    println!("   {report}");

    // The stage-level check audits one assumption application in isolation:
    // the step's output must preserve every mass the input had, splitting a
    // materialized axis into value and indicator without inventing anything.
    let before = StageDistribution::from_observed(&observed);
    let step = step_ccmv(&before, &[0, 1], ZeroCellPolicy::Error).unwrap();
    let report = check_stepwise_nps(&step.stage, &before, 1e-12).unwrap();
    println!("\n3. Stage-level audit of a single ccmv step:");
    println!("   {report}");

    // Check the same step output against a different input and the audit
    // fails, pointing at the first input cell whose mass went astray.
    let other = ObservedTable::from_fn(
        CategorySpace::new(vec![3, 2]).unwrap(),
        |pattern, obs_values| {
            let spread: usize = obs_values.iter().map(|&v| 3 * v + 1).sum();
            1.1 + 0.1 * pattern.rank() as f64 + 0.4 * spread as f64
        },
    )
    .unwrap();
    let report =
        check_stepwise_nps(&step.stage, &StageDistribution::from_observed(&other), 1e-12).unwrap();
    println!("\n4. Same step output audited against a different input:");
    println!("   {report}");
}
