//! Checks that an identified distribution really is non-parametrically
//! saturated: marginalizing the full-data law over each pattern's missing
//! coordinates must reproduce the observed-data law cell for cell.
//!
//! The global check here recomputes the implied observed table with its own
//! summation loop rather than calling the table module's marginalizer, so the
//! two act as independent implementations of the same contract.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::space::MissPattern;
use crate::stage::{Axis, AxisKind, StageDistribution};
use crate::table::{FullTable, ObservedTable};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("tables live on different spaces: {0}")]
    SpaceMismatch(String),
    #[error("distribution lacks a needed axis: {0}")]
    AxisNotFound(String),
}

/// Worst-offending cell of a saturation check.
#[derive(Debug, Clone, Serialize)]
pub struct WorstCell {
    /// Human-readable cell label.
    pub cell: String,
    pub implied: f64,
    pub expected: f64,
}

/// Outcome of a saturation check.
#[derive(Debug, Clone, Serialize)]
pub struct NpsReport {
    pub passed: bool,
    pub tolerance: f64,
    pub max_abs_error: f64,
    pub cells_checked: usize,
    pub worst_cell: Option<WorstCell>,
}

impl NpsReport {
    fn from_errors(
        tolerance: f64,
        cells: impl IntoIterator<Item = (String, f64, f64)>,
    ) -> Self {
        let mut max_abs_error = 0.0_f64;
        let mut worst_cell = None;
        let mut cells_checked = 0;
        for (cell, implied, expected) in cells {
            cells_checked += 1;
            let err = (implied - expected).abs();
            if err > max_abs_error {
                max_abs_error = err;
                worst_cell = Some(WorstCell { cell, implied, expected });
            }
        }
        NpsReport {
            passed: max_abs_error <= tolerance,
            tolerance,
            max_abs_error,
            cells_checked,
            worst_cell,
        }
    }
}

impl fmt::Display for NpsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed {
            write!(
                f,
                "saturation check passed: {} cells, max |implied - expected| = {:.3e} \
                 (tolerance {:.1e})",
                self.cells_checked, self.max_abs_error, self.tolerance
            )
        } else {
            let detail = self
                .worst_cell
                .as_ref()
                .map(|w| {
                    format!(
                        " at {} (implied {:.17e}, expected {:.17e})",
                        w.cell, w.implied, w.expected
                    )
                })
                .unwrap_or_default();
            write!(
                f,
                "saturation check FAILED: max |implied - expected| = {:.3e}{detail}; \
                 {} cells, tolerance {:.1e}",
                self.max_abs_error, self.cells_checked, self.tolerance
            )
        }
    }
}

/// Visits every digit vector of the given axis sizes in row-major order.
fn each_digits(sizes: &[usize], mut visit: impl FnMut(&[usize])) {
    let mut digits = vec![0usize; sizes.len()];
    if sizes.contains(&0) {
        return;
    }
    loop {
        visit(&digits);
        let mut pos = sizes.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < sizes[pos] {
                break;
            }
            digits[pos] = 0;
        }
    }
}

fn observed_cell_label(pattern: MissPattern, obs_values: &[usize]) -> String {
    let mut parts = Vec::new();
    let mut slot = 0;
    for j in 0..pattern.num_vars() {
        if pattern.is_missing(j) {
            parts.push("*".to_string());
        } else {
            parts.push((obs_values[slot] + 1).to_string());
            slot += 1;
        }
    }
    format!("pattern {pattern}, values ({})", parts.join(", "))
}

/// Global saturation check: sums `full` over the missing coordinates of every
/// pattern and compares against `observed`.
pub fn check_nps(
    full: &FullTable,
    observed: &ObservedTable,
    tolerance: f64,
) -> Result<NpsReport, VerifyError> {
    if full.space() != observed.space() {
        return Err(VerifyError::SpaceMismatch(format!(
            "full table over cardinalities {:?}, observed over {:?}",
            full.space().cards(),
            observed.space().cards()
        )));
    }
    let space = observed.space();
    let p = space.num_vars();
    let mut cells = Vec::new();
    for pattern in MissPattern::all(p) {
        let missing = pattern.missing_vars();
        let observed_vars = pattern.observed_vars();
        let obs_sizes: Vec<usize> = observed_vars.iter().map(|&j| space.card(j)).collect();
        let miss_sizes: Vec<usize> = missing.iter().map(|&j| space.card(j)).collect();
        each_digits(&obs_sizes, |obs_values| {
            let mut values = vec![0usize; p];
            for (slot, &j) in observed_vars.iter().enumerate() {
                values[j] = obs_values[slot];
            }
            let mut implied = 0.0;
            each_digits(&miss_sizes, |miss_values| {
                for (slot, &j) in missing.iter().enumerate() {
                    values[j] = miss_values[slot];
                }
                implied += full.prob(&values, pattern);
            });
            let expected = observed.mass(pattern, obs_values);
            cells.push((observed_cell_label(pattern, obs_values), implied, expected));
        });
    }
    Ok(NpsReport::from_errors(tolerance, cells))
}

fn axis_label(axis: &Axis, digit: usize) -> String {
    match axis.kind {
        AxisKind::Value => format!("X{}={}", axis.var + 1, digit + 1),
        AxisKind::Indicator => format!("M{}={}", axis.var + 1, digit),
        AxisKind::Materialized => {
            if digit + 1 == axis.size {
                format!("X{}*=*", axis.var + 1)
            } else {
                format!("X{}*={}", axis.var + 1, digit + 1)
            }
        }
    }
}

/// Stepwise saturation check: summing a step's output over each newly split
/// variable's (value, indicator) pair — star cells collapsing the value —
/// must reproduce the step's input stage cell for cell.
pub fn check_stepwise_nps(
    step_output: &StageDistribution,
    step_input: &StageDistribution,
    tolerance: f64,
) -> Result<NpsReport, VerifyError> {
    // For every input axis, find how it is represented in the output.
    enum Pull {
        Same(usize),
        Split { value: usize, indicator: usize },
    }
    let mut pulls = Vec::with_capacity(step_input.axes().len());
    let mut used = vec![false; step_output.axes().len()];
    for axis in step_input.axes() {
        if let Some(pos) = step_output.axis_pos(axis.kind, axis.var) {
            if step_output.axes()[pos].size != axis.size {
                return Err(VerifyError::SpaceMismatch(format!(
                    "axis for variable {} changed size", axis.var + 1
                )));
            }
            used[pos] = true;
            pulls.push(Pull::Same(pos));
        } else if axis.kind == AxisKind::Materialized {
            let value = step_output
                .axis_pos(AxisKind::Value, axis.var)
                .ok_or_else(|| {
                    VerifyError::AxisNotFound(format!(
                        "value axis of variable {}", axis.var + 1
                    ))
                })?;
            let indicator = step_output
                .axis_pos(AxisKind::Indicator, axis.var)
                .ok_or_else(|| {
                    VerifyError::AxisNotFound(format!(
                        "indicator axis of variable {}", axis.var + 1
                    ))
                })?;
            used[value] = true;
            used[indicator] = true;
            pulls.push(Pull::Split { value, indicator });
        } else {
            return Err(VerifyError::AxisNotFound(format!(
                "axis of variable {} absent from the step output", axis.var + 1
            )));
        }
    }
    if let Some(pos) = used.iter().position(|&u| !u) {
        return Err(VerifyError::SpaceMismatch(format!(
            "step output has an extra axis for variable {}",
            step_output.axes()[pos].var + 1
        )));
    }

    let out_sizes: Vec<usize> = step_output.axes().iter().map(|a| a.size).collect();
    let mut implied = vec![0.0f64; step_input.len()];
    each_digits(&out_sizes, |digits| {
        let mut input_digits = Vec::with_capacity(pulls.len());
        for (axis, pull) in step_input.axes().iter().zip(&pulls) {
            let digit = match pull {
                Pull::Same(pos) => digits[*pos],
                Pull::Split { value, indicator } => {
                    if digits[*indicator] == 1 {
                        axis.size - 1 // the star digit
                    } else {
                        digits[*value]
                    }
                }
            };
            input_digits.push(digit);
        }
        implied[step_input.rank_of(&input_digits)] += step_output.value(digits);
    });

    let in_sizes: Vec<usize> = step_input.axes().iter().map(|a| a.size).collect();
    let mut cells = Vec::with_capacity(step_input.len());
    each_digits(&in_sizes, |digits| {
        let label = step_input
            .axes()
            .iter()
            .zip(digits)
            .map(|(axis, &d)| axis_label(axis, d))
            .collect::<Vec<_>>()
            .join(", ");
        let rank = step_input.rank_of(digits);
        cells.push((label, implied[rank], step_input.data()[rank]));
    });
    Ok(NpsReport::from_errors(tolerance, cells))
}

/// Largest deviation from 1 among the conditional odds ratios linking a
/// variable's value to its own indicator, conditioning on every assignment of
/// the remaining axes. Cells with zero mass are skipped; a distribution with
/// no comparable 2x2 slice returns 0.
pub fn pairwise_independence_gap(
    stage: &StageDistribution,
    var: usize,
) -> Result<f64, VerifyError> {
    let value_pos = stage
        .axis_pos(AxisKind::Value, var)
        .ok_or_else(|| VerifyError::AxisNotFound(format!("value axis of variable {}", var + 1)))?;
    let indicator_pos = stage.axis_pos(AxisKind::Indicator, var).ok_or_else(|| {
        VerifyError::AxisNotFound(format!("indicator axis of variable {}", var + 1))
    })?;
    let card = stage.axes()[value_pos].size;

    let ctx_positions: Vec<usize> = (0..stage.axes().len())
        .filter(|&pos| pos != value_pos && pos != indicator_pos)
        .collect();
    let ctx_sizes: Vec<usize> =
        ctx_positions.iter().map(|&pos| stage.axes()[pos].size).collect();

    let mut gap = 0.0f64;
    let mut digits = vec![0usize; stage.axes().len()];
    each_digits(&ctx_sizes, |ctx_digits| {
        for (slot, &pos) in ctx_positions.iter().enumerate() {
            digits[pos] = ctx_digits[slot];
        }
        let mut at = |x: usize, m: usize| {
            digits[value_pos] = x;
            digits[indicator_pos] = m;
            stage.value(&digits)
        };
        for x1 in 0..card {
            for x2 in (x1 + 1)..card {
                let (a, b, c, d) = (at(x1, 0), at(x1, 1), at(x2, 0), at(x2, 1));
                if a > 0.0 && b > 0.0 && c > 0.0 && d > 0.0 {
                    gap = gap.max(((a * d) / (b * c) - 1.0).abs());
                }
            }
        }
    });
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assumptions::{step_ccmv, step_conditional_mar, step_icin_pair};
    use crate::closed_form;
    use crate::engine::run_sequential;
    use crate::plan::{random_valid_plan, ZeroCellPolicy};
    use crate::space::CategorySpace;
    use crate::testutil::{asymmetric_fixture, random_observed};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn closed_form_outputs_pass_the_global_check() {
        let observed = asymmetric_fixture();
        let full = closed_form::carry(&observed).unwrap().full;
        let report = check_nps(&full, &observed, 1e-10).unwrap();
        assert!(report.passed, "{report}");
        assert_eq!(report.cells_checked, 9);
        assert!(report.max_abs_error < 1e-14);
    }

    #[test]
    fn mismatched_product_law_fails_with_a_worst_cell() {
        let observed = asymmetric_fixture();
        let space = observed.space().clone();
        let uniform = FullTable::from_fn(space, |_, _| 1.0).unwrap();
        let report = check_nps(&uniform, &observed, 1e-10).unwrap();
        assert!(!report.passed);
        assert!(report.max_abs_error > 0.01);
        let worst = report.worst_cell.as_ref().unwrap();
        assert!(worst.cell.contains("pattern"), "{}", worst.cell);
        let text = report.to_string();
        assert!(text.contains("FAILED"));

        let other = CategorySpace::new(vec![3, 2]).unwrap();
        let full = FullTable::from_fn(other, |_, _| 1.0).unwrap();
        assert!(matches!(
            check_nps(&full, &observed, 1e-10),
            Err(VerifyError::SpaceMismatch(_))
        ));
    }

    #[test]
    fn engine_outputs_pass_under_random_plans_and_tables() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        for trial in 0..25u64 {
            let num_vars = 2 + (trial % 2) as usize;
            let cards: Vec<usize> = (0..num_vars).map(|v| 2 + ((trial + v as u64) % 2) as usize).collect();
            let space = CategorySpace::new(cards).unwrap();
            let observed = random_observed(space.clone(), 500 + trial);
            let plan = random_valid_plan(&space, &mut rng);
            let result = run_sequential(&observed, &plan).unwrap();
            let report = check_nps(&result.full, &observed, 1e-10).unwrap();
            assert!(report.passed, "trial {trial}: {report}");
        }
    }

    #[test]
    fn stepwise_check_accepts_each_kernel_and_catches_tampering() {
        let space = CategorySpace::new(vec![2, 3, 2]).unwrap();
        let observed = random_observed(space, 7);
        let input = StageDistribution::from_observed(&observed);
        for (block, step) in [
            (vec![0usize], step_conditional_mar as crate::assumptions::StepFn),
            (vec![0, 1], step_ccmv),
            (vec![1, 2], step_icin_pair),
        ] {
            let out = step(&input, &block, ZeroCellPolicy::Error).unwrap();
            let report = check_stepwise_nps(&out.stage, &input, 1e-12).unwrap();
            assert!(report.passed, "block {block:?}: {report}");
            assert_eq!(report.cells_checked, input.len());

            let mut tampered = out.stage.clone();
            tampered.data_mut()[0] += 0.05;
            let report = check_stepwise_nps(&tampered, &input, 1e-12).unwrap();
            assert!(!report.passed);
            assert!(report.worst_cell.is_some());
        }
    }

    #[test]
    fn stepwise_check_rejects_incompatible_signatures() {
        let space = CategorySpace::new(vec![2, 2]).unwrap();
        let observed = random_observed(space.clone(), 9);
        let input = StageDistribution::from_observed(&observed);
        let out = step_conditional_mar(&input, &[0], ZeroCellPolicy::Error).unwrap();
        // Input and output swapped: the materialized axis is gone.
        assert!(matches!(
            check_stepwise_nps(&input, &out.stage, 1e-12),
            Err(VerifyError::AxisNotFound(_) | VerifyError::SpaceMismatch(_))
        ));
    }

    #[test]
    fn icin_output_has_unit_odds_ratios_and_donor_completion_does_not() {
        let space = CategorySpace::new(vec![2, 3]).unwrap();
        let observed = random_observed(space, 11);
        let input = StageDistribution::from_observed(&observed);
        let icin = step_icin_pair(&input, &[0, 1], ZeroCellPolicy::Error).unwrap();
        for var in [0, 1] {
            let gap = pairwise_independence_gap(&icin.stage, var).unwrap();
            assert!(gap < 1e-12, "variable {var}: gap {gap}");
        }
        let ccmv = step_ccmv(&input, &[0, 1], ZeroCellPolicy::Error).unwrap();
        let gap = pairwise_independence_gap(&ccmv.stage, 0).unwrap();
        assert!(gap > 1e-6, "donor completion unexpectedly itemwise-independent");
        assert!(matches!(
            pairwise_independence_gap(&input, 0),
            Err(VerifyError::AxisNotFound(_))
        ));
    }
}
