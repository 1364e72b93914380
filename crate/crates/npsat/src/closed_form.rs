//! Closed-form identified distributions for two variables.
//!
//! Both constructions here are written straight from the displayed formulas
//! for the two canonical two-variable strategies — one that carries the first
//! indicator through to the end, one that releases it after the first block —
//! without going through the sequential engine. They exist to be independent
//! oracles: the engine and these functions must agree cell for cell.
//!
//! Throughout, "first"/"second" refer to the table's variable order as given;
//! callers wanting the mirrored strategy reorder the table first.

use thiserror::Error;

use crate::space::MissPattern;
use crate::stage::{Axis, StageDistribution};
use crate::table::{FullTable, ObservedTable, StudyTable, TableError};

#[derive(Debug, Error)]
pub enum ClosedFormError {
    #[error("closed forms require exactly two variables, table has {0}")]
    NotTwoVariables(usize),
    #[error("zero denominator: {0}")]
    ZeroDenominator(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Raw pattern masses of a two-variable observed table, plus the margins the
/// formulas divide by.
struct RawMasses {
    /// Fully observed cells, indexed `[i][j]`.
    both: Vec<Vec<f64>>,
    /// First variable missing, indexed by the second variable's category.
    first_missing: Vec<f64>,
    /// Second variable missing, indexed by the first variable's category.
    second_missing: Vec<f64>,
    /// Both missing.
    neither: f64,
    /// Complete-case margin of the second variable: `col[j] = Σ_i both[i][j]`.
    col: Vec<f64>,
    /// Total mass with only the second variable missing.
    second_missing_total: f64,
}

impl RawMasses {
    fn gather(observed: &ObservedTable) -> Result<Self, ClosedFormError> {
        let space = observed.space();
        if space.num_vars() != 2 {
            return Err(ClosedFormError::NotTwoVariables(space.num_vars()));
        }
        let (c1, c2) = (space.card(0), space.card(1));
        let pat = |s: &str| MissPattern::parse(s).expect("static pattern");
        let both: Vec<Vec<f64>> = (0..c1)
            .map(|i| (0..c2).map(|j| observed.mass(pat("00"), &[i, j])).collect())
            .collect();
        let first_missing: Vec<f64> =
            (0..c2).map(|j| observed.mass(pat("10"), &[j])).collect();
        let second_missing: Vec<f64> =
            (0..c1).map(|i| observed.mass(pat("01"), &[i])).collect();
        let neither = observed.mass(pat("11"), &[]);
        let col: Vec<f64> = (0..c2).map(|j| (0..c1).map(|i| both[i][j]).sum()).collect();
        let second_missing_total = second_missing.iter().sum();

        // A denominator may be zero only when every term it would scale is
        // zero too; then the cell it feeds is an exact zero rather than 0/0.
        for j in 0..c2 {
            if col[j] == 0.0 && first_missing[j] > 0.0 {
                return Err(ClosedFormError::ZeroDenominator(format!(
                    "complete-case margin of the second variable at category {} \
                     (needed to spread first-variable-missing mass {})",
                    j + 1,
                    first_missing[j]
                )));
            }
        }
        if second_missing_total == 0.0 && neither > 0.0 {
            return Err(ClosedFormError::ZeroDenominator(format!(
                "total mass with only the second variable missing \
                 (needed to spread both-missing mass {neither})"
            )));
        }
        Ok(RawMasses {
            both,
            first_missing,
            second_missing,
            neither,
            col,
            second_missing_total,
        })
    }

    /// `both[i][j] / col[j]`, with exact zeros surviving a zero margin.
    fn cc_given_second(&self, i: usize, j: usize) -> f64 {
        if self.col[j] == 0.0 { 0.0 } else { self.both[i][j] / self.col[j] }
    }

    /// `second_missing[i] / second_missing_total`, same zero convention.
    fn first_share(&self, i: usize) -> f64 {
        if self.second_missing_total == 0.0 {
            0.0
        } else {
            self.second_missing[i] / self.second_missing_total
        }
    }
}

/// Full-data distribution and study marginal of the carry strategy.
#[derive(Debug, Clone)]
pub struct CarryClosedForm {
    pub full: FullTable,
    pub study: StudyTable,
}

/// Everything the release strategy identifies: the joint law of the study
/// variables with the second indicator, the mechanism factors that complete
/// it to a full-data law, and that assembled law.
#[derive(Debug, Clone)]
pub struct PermutationClosedForm {
    /// Joint over (X1, X2, M2): axes value, value, indicator.
    pub joint: StageDistribution,
    pub full: FullTable,
    pub study: StudyTable,
    /// P(M1 = 1 | X2 = j, second observed), one entry per category of X2.
    pub first_missing_given_second_observed: Vec<f64>,
    /// P(M1 = 1 | second missing): free of both study variables.
    pub first_missing_given_second_missing: f64,
    /// P(M2 = 1 | X1 = i), one entry per category of X1.
    pub second_missing_given_first: Vec<f64>,
}

/// Carry strategy: complete the first variable within each materialized
/// second coordinate, keep its indicator in the state, then complete the
/// second variable given (X1, M1).
///
/// Writing g for raw pattern masses, the identified cells are
///
/// ```text
/// P(i, j, m1, m2=0) = (g00[i][j] / col[j]) * d(m1, j)
/// P(i, j, m1, m2=1) = (g00[i][j] / col[j]) * d(m1, j) / Σ_l (g00[i][l] / col[l]) * d(m1, l)
///                     * share(i) * e(m1)
/// ```
///
/// with `d(0, j) = col[j]`, `d(1, j) = g10[j]`, `share(i) = g01[i] / Σ g01`,
/// `e(0) = Σ g01`, `e(1) = g11`.
pub fn carry(observed: &ObservedTable) -> Result<CarryClosedForm, ClosedFormError> {
    let raw = RawMasses::gather(observed)?;
    let space = observed.space().clone();
    let (c1, c2) = (space.card(0), space.card(1));

    // Row weights for the m2=1 branch: how category i of the first variable
    // distributes over the second, separately under m1=0 and m1=1.
    let mut row_weight = vec![[0.0f64; 2]; c1];
    for (i, weight) in row_weight.iter_mut().enumerate() {
        for j in 0..c2 {
            weight[0] += raw.cc_given_second(i, j) * raw.col[j];
            weight[1] += raw.cc_given_second(i, j) * raw.first_missing[j];
        }
    }
    for (i, weight) in row_weight.iter().enumerate() {
        if weight[0] == 0.0 && raw.second_missing[i] > 0.0 {
            return Err(ClosedFormError::ZeroDenominator(format!(
                "complete-case margin of first-variable category {} \
                 (needed to place its second-missing mass)",
                i + 1
            )));
        }
        let needed = raw.neither * raw.second_missing[i];
        if weight[1] == 0.0 && needed > 0.0 {
            return Err(ClosedFormError::ZeroDenominator(format!(
                "first-variable-missing weight of first-variable category {} \
                 (needed to place its share of the both-missing mass)",
                i + 1
            )));
        }
    }

    let full = FullTable::from_fn(space, |values, pattern| {
        let (i, j) = (values[0], values[1]);
        let (m1, m2) = (pattern.is_missing(0), pattern.is_missing(1));
        let d = if m1 { raw.first_missing[j] } else { raw.col[j] };
        let lead = raw.cc_given_second(i, j) * d;
        if !m2 {
            lead
        } else {
            let weight = row_weight[i][usize::from(m1)];
            let ratio = if weight == 0.0 { 0.0 } else { lead / weight };
            let tail = if m1 { raw.neither } else { raw.second_missing_total };
            ratio * raw.first_share(i) * tail
        }
    })?;
    let study = full.study_marginal();
    Ok(CarryClosedForm { full, study })
}

/// Release strategy: same first step, but the first indicator is summed out
/// before the second block, leaving a joint over (X1, X2, M2):
///
/// ```text
/// P(i, j, m2=0) = (g00[i][j] / col[j]) * colfull[j]
/// P(i, j, m2=1) = P(i, j, 0) / Σ_l P(i, l, 0) * share(i) * (Σ g01 + g11)
/// ```
///
/// with `colfull[j] = col[j] + g10[j]`. The first indicator reappears as a
/// mechanism factor: P(M1=1 | X2=j, M2=0) = g10[j] / colfull[j] and
/// P(M1=1 | M2=1) = g11 / (Σ g01 + g11), free of the study variables beyond
/// the materialized second coordinate.
pub fn permutation(observed: &ObservedTable) -> Result<PermutationClosedForm, ClosedFormError> {
    let raw = RawMasses::gather(observed)?;
    let space = observed.space().clone();
    let (c1, c2) = (space.card(0), space.card(1));

    let colfull: Vec<f64> =
        (0..c2).map(|j| raw.col[j] + raw.first_missing[j]).collect();
    let missing_tail = raw.second_missing_total + raw.neither;

    let mut row_weight = vec![0.0f64; c1];
    for (i, weight) in row_weight.iter_mut().enumerate() {
        for (j, &col) in colfull.iter().enumerate() {
            *weight += raw.cc_given_second(i, j) * col;
        }
    }
    for (i, &weight) in row_weight.iter().enumerate() {
        if weight == 0.0 && missing_tail * raw.second_missing[i] > 0.0 {
            return Err(ClosedFormError::ZeroDenominator(format!(
                "observed-second weight of first-variable category {} \
                 (needed to place its share of the second-missing mass)",
                i + 1
            )));
        }
    }

    let cell = |i: usize, j: usize, m2: bool| -> f64 {
        let lead = raw.cc_given_second(i, j) * colfull[j];
        if !m2 {
            lead
        } else {
            let ratio = if row_weight[i] == 0.0 { 0.0 } else { lead / row_weight[i] };
            ratio * raw.first_share(i) * missing_tail
        }
    };

    let axes = vec![Axis::value(0, c1), Axis::value(1, c2), Axis::indicator(1)];
    let mut joint = StageDistribution::new_zero(axes);
    for i in 0..c1 {
        for j in 0..c2 {
            for m2 in [false, true] {
                joint.set_value(&[i, j, usize::from(m2)], cell(i, j, m2));
            }
        }
    }

    // Mechanism factors. A context with no mass gets the even split — it can
    // never be hit with positive weight, but the factor stays well-formed.
    let first_missing_given_second_observed: Vec<f64> = (0..c2)
        .map(|j| if colfull[j] == 0.0 { 0.5 } else { raw.first_missing[j] / colfull[j] })
        .collect();
    let first_missing_given_second_missing =
        if missing_tail == 0.0 { 0.5 } else { raw.neither / missing_tail };
    let second_missing_given_first: Vec<f64> = (0..c1)
        .map(|i| {
            let observed_mass = row_weight[i];
            let missing_mass = raw.first_share(i) * missing_tail;
            let total = observed_mass + missing_mass;
            if total == 0.0 { 0.5 } else { missing_mass / total }
        })
        .collect();

    let full = FullTable::from_fn(space, |values, pattern| {
        let (i, j) = (values[0], values[1]);
        let (m1, m2) = (pattern.is_missing(0), pattern.is_missing(1));
        let fac = if m2 {
            first_missing_given_second_missing
        } else {
            first_missing_given_second_observed[j]
        };
        cell(i, j, m2) * if m1 { fac } else { 1.0 - fac }
    })?;
    let study = full.study_marginal();
    Ok(PermutationClosedForm {
        joint,
        full,
        study,
        first_missing_given_second_observed,
        first_missing_given_second_missing,
        second_missing_given_first,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_sequential;
    use crate::plan::IdentPlan;
    use crate::table::observed_from_full;
    use crate::space::CategorySpace;
    use crate::testutil::{asymmetric_fixture, mcar_independent_fixture, random_observed};

    fn pat(s: &str) -> MissPattern {
        MissPattern::parse(s).unwrap()
    }

    #[test]
    fn carry_matches_hand_computed_cells() {
        let out = carry(&asymmetric_fixture()).unwrap();
        assert!((out.full.prob(&[0, 0], pat("00")) - 0.10).abs() < 1e-15);
        assert!((out.full.prob(&[0, 0], pat("10")) - 0.048).abs() < 1e-15);
        assert!((out.full.prob(&[0, 0], pat("01")) - 1.0 / 15.0).abs() < 1e-15);
        assert!((out.full.prob(&[0, 0], pat("11")) - 27.0 / 700.0).abs() < 1e-15);
        assert!((out.full.prob(&[1, 0], pat("11")) - 243.0 / 4700.0).abs() < 1e-15);
        assert!((out.study.prob(&[0, 0]) - 2659.0 / 10500.0).abs() < 1e-14);
    }

    #[test]
    fn permutation_matches_hand_computed_cells() {
        let out = permutation(&asymmetric_fixture()).unwrap();
        let at = |i, j, m2: usize| out.joint.value(&[i, j, m2]);
        assert!((at(0, 0, 0) - 0.148).abs() < 1e-15);
        assert!((at(0, 0, 1) - 888.0 / 8425.0).abs() < 1e-15);
        assert!(
            (out.first_missing_given_second_observed[0] - 12.0 / 37.0).abs() < 1e-15
        );
        assert!((out.first_missing_given_second_missing - 0.375).abs() < 1e-15);
        assert!((out.second_missing_given_first[0] - 240.0 / 577.0).abs() < 1e-15);
        assert!((out.full.prob(&[0, 0], pat("10")) - 0.048).abs() < 1e-15);
        assert!(
            (out.full.prob(&[0, 0], pat("01")) - (888.0 / 8425.0) * 0.625).abs() < 1e-15
        );
        assert!((out.study.prob(&[0, 0]) - (0.148 + 888.0 / 8425.0)).abs() < 1e-14);
    }

    #[test]
    fn both_forms_collapse_on_the_independent_mcar_table() {
        let observed = mcar_independent_fixture();
        let a = carry(&observed).unwrap();
        let b = permutation(&observed).unwrap();
        assert!((a.study.prob(&[0, 0]) - 0.42).abs() < 1e-14);
        assert!((b.study.prob(&[0, 0]) - 0.42).abs() < 1e-14);
    }

    #[test]
    fn both_forms_marginalize_back_to_their_input() {
        for seed in [3u64, 4, 5] {
            let space = CategorySpace::new(vec![3, 2]).unwrap();
            let observed = random_observed(space, seed);
            for full in [&carry(&observed).unwrap().full, &permutation(&observed).unwrap().full]
            {
                let implied = observed_from_full(full);
                for (pattern, obs_values, expect) in observed.iter_cells() {
                    assert!(
                        (implied.mass(pattern, &obs_values) - expect).abs() < 1e-12,
                        "seed {seed} pattern {pattern} values {obs_values:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn closed_forms_agree_with_the_engine_on_random_tables() {
        for seed in 0..30u64 {
            let cards = vec![2 + (seed % 2) as usize, 2 + (seed % 3).min(1) as usize];
            let space = CategorySpace::new(cards).unwrap();
            let observed = random_observed(space.clone(), 1000 + seed);

            let via_formula = carry(&observed).unwrap();
            let via_engine =
                run_sequential(&observed, &IdentPlan::two_var_carry(space.clone())).unwrap();
            for (values, pattern, mass) in via_formula.full.iter_cells() {
                assert!(
                    (via_engine.full.prob(&values, pattern) - mass).abs() < 1e-13,
                    "carry seed {seed} cell {values:?} {pattern}"
                );
            }

            let via_formula = permutation(&observed).unwrap();
            let via_engine =
                run_sequential(&observed, &IdentPlan::two_var_permutation(space)).unwrap();
            for (values, pattern, mass) in via_formula.full.iter_cells() {
                assert!(
                    (via_engine.full.prob(&values, pattern) - mass).abs() < 1e-13,
                    "permutation seed {seed} cell {values:?} {pattern}"
                );
            }
        }
    }

    #[test]
    fn needed_zero_denominators_are_reported() {
        let space = CategorySpace::new(vec![2, 2]).unwrap();
        // Second variable never takes its first category among complete cases,
        // yet first-variable-missing mass sits on that category.
        let observed = ObservedTable::from_pattern_blocks(
            space.clone(),
            vec![vec![0.0, 0.3, 0.0, 0.3], vec![0.2, 0.0], vec![0.1, 0.05], vec![0.05]],
        )
        .unwrap();
        let err = carry(&observed).unwrap_err();
        assert!(matches!(err, ClosedFormError::ZeroDenominator(_)));
        assert!(err.to_string().contains("complete-case margin"));

        // Both-missing mass with nothing observed about the second variable
        // being missing alone.
        let observed = ObservedTable::from_pattern_blocks(
            space.clone(),
            vec![vec![0.2, 0.2, 0.2, 0.2], vec![0.05, 0.05], vec![0.0, 0.0], vec![0.1]],
        )
        .unwrap();
        assert!(matches!(
            carry(&observed).unwrap_err(),
            ClosedFormError::ZeroDenominator(_)
        ));
        assert!(matches!(
            permutation(&observed).unwrap_err(),
            ClosedFormError::ZeroDenominator(_)
        ));

        // Unneeded zero margins are fine: no mass anywhere near them.
        let observed = ObservedTable::from_pattern_blocks(
            space,
            vec![vec![0.0, 0.4, 0.0, 0.4], vec![0.0, 0.1], vec![0.05, 0.05], vec![0.0]],
        )
        .unwrap();
        assert!(carry(&observed).is_ok());
        assert!(permutation(&observed).is_ok());

        let three = CategorySpace::new(vec![2, 2, 2]).unwrap();
        let observed = ObservedTable::from_fn(three, |_, _| 1.0).unwrap();
        assert!(matches!(
            carry(&observed).unwrap_err(),
            ClosedFormError::NotTwoVariables(3)
        ));
    }
}
