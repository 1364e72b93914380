//! The sequential identification engine.
//!
//! Starting from the observed-data distribution over materialized coordinates,
//! the engine closes one block of variables at a time with the plan's
//! identifying assumption, optionally factors out indicator conditionals that
//! are not carried forward, and finally assembles the full-data distribution
//! as the product of the last stage with every stored factor. The assembled
//! distribution reproduces the observed-data input exactly: summing it over
//! each pattern's missing coordinates returns the input cell by cell.

use serde::Serialize;
use thiserror::Error;

use crate::assumptions::{
    describe_context, step_ccmv, step_conditional_mar, step_icin_pair, FillEvent, FillEventKind,
    StepError,
};
use crate::plan::{AssumptionKind, IdentPlan, PlanViolation};
use crate::space::{CategorySpace, MissPattern};
use crate::stage::{eval_at_full_cell, AxisKind, GroupedView, StageDistribution};
use crate::table::{FullTable, ObservedTable, StudyTable, TableError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("plan is invalid: {}", format_violations(.0))]
    PlanInvalid(Vec<PlanViolation>),
    #[error("plan and table disagree: {0}")]
    SpaceMismatch(String),
    #[error("block {block}: {source}")]
    Step {
        block: usize,
        #[source]
        source: StepError,
    },
    #[error("stage factors do not chain onto the final stage: {0}")]
    SignatureMismatch(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

fn format_violations(violations: &[PlanViolation]) -> String {
    violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// One conditional factored out of the running state: the distribution of the
/// indicators in `target_vars` given everything the state still tracked when
/// block `after_block` closed.
#[derive(Debug, Clone, Serialize)]
pub struct StageFactor {
    pub after_block: usize,
    /// Variables (processing order) whose indicators this factor covers.
    pub target_vars: Vec<usize>,
    /// Conditional values over the full pre-factoring axis list; sums to 1
    /// over the target indicator axes for every context cell.
    pub table: StageDistribution,
}

/// Copy of the running state taken right after a block's assumption was applied.
#[derive(Debug, Clone, Serialize)]
pub struct StageSnapshot {
    pub block: usize,
    pub stage: StageDistribution,
}

/// A patched-over zero cell, tagged with the block that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunEvent {
    pub block: usize,
    pub kind: FillEventKind,
    pub context: String,
}

/// Everything a sequential identification run produces.
#[derive(Debug, Clone)]
pub struct IdentResult {
    /// Full-data distribution in the input table's variable order.
    pub full: FullTable,
    /// Study-variable marginal in the input table's variable order.
    pub study: StudyTable,
    /// Final stage of the recursion, in processing order.
    pub final_stage: StageDistribution,
    /// Indicator conditionals factored out along the way, in processing order.
    pub factors: Vec<StageFactor>,
    /// Zero-mass cells that were skipped or filled, with their contexts.
    pub events: Vec<RunEvent>,
    /// Per-block stage copies, present when the plan asked for them.
    pub snapshots: Option<Vec<StageSnapshot>>,
    /// `processing_order[i]` = original index of the variable at position `i`.
    pub processing_order: Vec<usize>,
}

/// Relabels coordinates so that new variable `i` is old variable `order[i]`.
/// A pure index shuffle: every cell keeps its mass.
pub fn reorder_variables(
    observed: &ObservedTable,
    order: &[usize],
) -> Result<ObservedTable, TableError> {
    let space = observed.space();
    crate::table::check_permutation(order, space.num_vars())?;
    let cards: Vec<usize> = order.iter().map(|&j| space.card(j)).collect();
    let new_space = CategorySpace::new(cards).expect("permuted space is valid");
    ObservedTable::from_fn(new_space, |pattern, obs| {
        let mut old_flags = vec![false; order.len()];
        let mut old_values = vec![usize::MAX; order.len()];
        let mut slot = 0;
        for (i, &j) in order.iter().enumerate() {
            if pattern.is_missing(i) {
                old_flags[j] = true;
            } else {
                old_values[j] = obs[slot];
                slot += 1;
            }
        }
        let old_pattern = MissPattern::from_flags(&old_flags);
        let old_obs: Vec<usize> = (0..order.len())
            .filter(|&j| !old_flags[j])
            .map(|j| old_values[j])
            .collect();
        observed.mass(old_pattern, &old_obs)
    })
}

/// Runs the plan's blocks in sequence and assembles the full-data distribution.
pub fn run_sequential(
    observed: &ObservedTable,
    plan: &IdentPlan,
) -> Result<IdentResult, EngineError> {
    let violations = plan.validate();
    if !violations.is_empty() {
        return Err(EngineError::PlanInvalid(violations));
    }
    if plan.space != *observed.space() {
        return Err(EngineError::SpaceMismatch(format!(
            "plan expects cardinalities {:?}, table has {:?}",
            plan.space.cards(),
            observed.space().cards()
        )));
    }
    let working = reorder_variables(observed, &plan.order)?;
    let mut stage = StageDistribution::from_observed(&working);
    let mut factors: Vec<StageFactor> = Vec::new();
    let mut events: Vec<RunEvent> = Vec::new();
    let mut snapshots = plan.snapshots.then(Vec::new);

    let blocks = plan.partition.num_blocks();
    for k in 1..=blocks {
        let block: Vec<usize> = plan.partition.block_vars(k).collect();
        let step = match plan.steps[k - 1] {
            AssumptionKind::ConditionalMar => step_conditional_mar,
            AssumptionKind::Ccmv => step_ccmv,
            AssumptionKind::IcinPair => step_icin_pair,
        };
        let out = step(&stage, &block, plan.zero_cell_policy)
            .map_err(|source| EngineError::Step { block: k, source })?;
        stage = out.stage;
        events.extend(out.events.into_iter().map(|e| RunEvent {
            block: k,
            kind: e.kind,
            context: e.context,
        }));
        if let Some(snaps) = snapshots.as_mut() {
            snaps.push(StageSnapshot { block: k, stage: stage.clone() });
        }
        if k < blocks {
            let carried_in = plan.carry.carried_after(k - 1);
            let carried_out = plan.carry.carried_after(k);
            let released: Vec<usize> = block
                .iter()
                .copied()
                .chain(carried_in.iter().copied())
                .filter(|var| !carried_out.contains(var))
                .collect();
            if !released.is_empty() {
                let (factor, marginal, factor_events) =
                    factor_out_indicators(&stage, &released);
                events.extend(factor_events.into_iter().map(|e| RunEvent {
                    block: k,
                    kind: e.kind,
                    context: e.context,
                }));
                factors.push(StageFactor {
                    after_block: k,
                    target_vars: released,
                    table: factor,
                });
                stage = marginal;
            }
        }
    }

    let full_processing = assemble_full(&stage, &factors)?;
    // Map processing order back to the input table's variable order.
    let mut inverse = vec![0; plan.order.len()];
    for (pos, &var) in plan.order.iter().enumerate() {
        inverse[var] = pos;
    }
    let full = full_processing.apply_order(&inverse)?;
    let study = full.study_marginal();
    Ok(IdentResult {
        full,
        study,
        final_stage: stage,
        factors,
        events,
        snapshots,
        processing_order: plan.order.clone(),
    })
}

/// Splits the state into the conditional of the given variables' indicators
/// and the marginal with those indicator axes summed out. Contexts with zero
/// mass store a uniform conditional and are flagged; they carry no weight in
/// any downstream marginal.
fn factor_out_indicators(
    stage: &StageDistribution,
    vars: &[usize],
) -> (StageDistribution, StageDistribution, Vec<FillEvent>) {
    let positions: Vec<usize> = vars
        .iter()
        .map(|&var| {
            stage
                .axis_pos(AxisKind::Indicator, var)
                .expect("released variable has an indicator axis")
        })
        .collect();
    let group = GroupedView::new(stage.axes(), &positions);
    let mut cond = StageDistribution::new_zero(stage.axes().to_vec());
    let mut events = Vec::new();
    let uniform = 1.0 / group.target_offsets.len() as f64;
    for (ctx, &base) in group.ctx_offsets.iter().enumerate() {
        let total: f64 = group.target_offsets.iter().map(|&off| stage.data()[base + off]).sum();
        if total > 0.0 {
            for &off in &group.target_offsets {
                cond.data_mut()[base + off] = stage.data()[base + off] / total;
            }
        } else {
            for &off in &group.target_offsets {
                cond.data_mut()[base + off] = uniform;
            }
            events.push(FillEvent {
                kind: FillEventKind::FactorZeroContext,
                context: describe_context(stage.axes(), &group, ctx),
            });
        }
    }
    (cond, stage.sum_out(&positions), events)
}

/// Multiplies the final stage with every stored factor, cell by cell, to form
/// the full-data distribution (in processing order).
///
/// Works for any chain whose pieces jointly cover each variable's indicator
/// exactly once; anything else is a signature mismatch.
pub fn assemble_full(
    final_stage: &StageDistribution,
    factors: &[StageFactor],
) -> Result<FullTable, EngineError> {
    let mut cards: Vec<Option<usize>> = Vec::new();
    let grow = |cards: &mut Vec<Option<usize>>, var: usize| {
        if cards.len() <= var {
            cards.resize(var + 1, None);
        }
    };
    for axis in final_stage.axes() {
        grow(&mut cards, axis.var);
        if axis.kind == AxisKind::Value {
            cards[axis.var] = Some(axis.size);
        }
    }
    let cards: Vec<usize> = cards
        .iter()
        .enumerate()
        .map(|(var, c)| {
            c.ok_or_else(|| {
                EngineError::SignatureMismatch(format!(
                    "final stage has no value axis for variable {}",
                    var + 1
                ))
            })
        })
        .collect::<Result<_, _>>()?;
    let p = cards.len();

    // Each indicator must be covered exactly once: by the final stage or by
    // one factor's target set.
    let mut covered = vec![false; p];
    for axis in final_stage.axes() {
        if axis.kind == AxisKind::Indicator {
            covered[axis.var] = true;
        }
    }
    for factor in factors {
        for &var in &factor.target_vars {
            if var >= p || covered[var] {
                return Err(EngineError::SignatureMismatch(format!(
                    "indicator of variable {} is covered more than once or out of range",
                    var + 1
                )));
            }
            if factor.table.axis_pos(AxisKind::Indicator, var).is_none() {
                return Err(EngineError::SignatureMismatch(format!(
                    "factor after block {} targets variable {} but lacks its indicator axis",
                    factor.after_block,
                    var + 1
                )));
            }
            covered[var] = true;
        }
    }
    if let Some(var) = covered.iter().position(|&c| !c) {
        return Err(EngineError::SignatureMismatch(format!(
            "no piece of the chain covers the indicator of variable {}",
            var + 1
        )));
    }

    let space = CategorySpace::new(cards)
        .map_err(|e| EngineError::SignatureMismatch(e.to_string()))?;
    let full = FullTable::from_fn(space, |values, pattern| {
        let mut mass = eval_at_full_cell(final_stage, values, pattern);
        for factor in factors {
            if mass == 0.0 {
                break;
            }
            mass *= eval_at_full_cell(&factor.table, values, pattern);
        }
        mass
    })?;
    Ok(full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{BlockPartition, CarrySets, ZeroCellPolicy};
    use crate::space::CategorySpace;
    use crate::testutil::{asymmetric_fixture, mcar_independent_fixture};
    use std::collections::BTreeSet;

    #[test]
    fn carry_plan_matches_hand_computed_cells() {
        let observed = asymmetric_fixture();
        let plan = IdentPlan::two_var_carry(observed.space().clone());
        let result = run_sequential(&observed, &plan).unwrap();
        let f = &result.full;
        let pat = |s: &str| MissPattern::parse(s).unwrap();
        assert!((f.prob(&[0, 0], pat("00")) - 0.10).abs() < 1e-15);
        assert!((f.prob(&[0, 0], pat("10")) - 0.048).abs() < 1e-15);
        assert!((f.prob(&[0, 0], pat("01")) - 1.0 / 15.0).abs() < 1e-15);
        assert!((f.prob(&[0, 0], pat("11")) - 27.0 / 700.0).abs() < 1e-15);
        assert!((result.study.prob(&[0, 0]) - 2659.0 / 10500.0).abs() < 1e-14);
        // Carrying the first indicator leaves nothing to factor out.
        assert!(result.factors.is_empty());
        assert_eq!(result.final_stage.axes().len(), 4);
    }

    #[test]
    fn permutation_plan_matches_hand_computed_cells() {
        let observed = asymmetric_fixture();
        let plan = IdentPlan::two_var_permutation(observed.space().clone());
        let result = run_sequential(&observed, &plan).unwrap();
        let f = &result.full;
        let pat = |s: &str| MissPattern::parse(s).unwrap();
        // Joint with the second indicator: p(x1=1, x2=1, m2=0) = 0.148,
        // split by the factored-out first-indicator conditional 12/37.
        assert!((f.prob(&[0, 0], pat("00")) - 0.148 * 25.0 / 37.0).abs() < 1e-15);
        assert!((f.prob(&[0, 0], pat("10")) - 0.148 * 12.0 / 37.0).abs() < 1e-15);
        let m2_joint = 888.0 / 8425.0;
        assert!((f.prob(&[0, 0], pat("01")) - m2_joint * 0.625).abs() < 1e-15);
        assert!((f.prob(&[0, 0], pat("11")) - m2_joint * 0.375).abs() < 1e-15);
        assert!((result.study.prob(&[0, 0]) - (0.148 + m2_joint)).abs() < 1e-14);
        // One factor: the first variable's indicator, released after block 1.
        assert_eq!(result.factors.len(), 1);
        assert_eq!(result.factors[0].after_block, 1);
        assert_eq!(result.factors[0].target_vars, vec![0]);
    }

    #[test]
    fn order_choice_changes_the_answer() {
        let observed = asymmetric_fixture();
        let space = observed.space().clone();
        let forward = IdentPlan::two_var_carry(space.clone());
        let mut reversed = IdentPlan::two_var_carry(space);
        reversed.order = vec![1, 0];
        reversed.carry = CarrySets::new(vec![BTreeSet::from([0])]);
        let a = run_sequential(&observed, &forward).unwrap();
        let b = run_sequential(&observed, &reversed).unwrap();
        // Both are reported in the input order, so the cells are comparable.
        assert_eq!(b.study.space().cards(), &[2, 2]);
        assert!((a.study.prob(&[0, 0]) - b.study.prob(&[0, 0])).abs() > 1e-6);
    }

    #[test]
    fn mcar_independent_table_gives_product_marginals_under_every_plan() {
        let observed = mcar_independent_fixture();
        let space = observed.space().clone();
        let plans = [
            IdentPlan::two_var_carry(space.clone()),
            IdentPlan::two_var_permutation(space.clone()),
            IdentPlan::single_block_ccmv(space.clone()),
            IdentPlan::group_permutation(space.clone(), BlockPartition::single_block(2)),
            IdentPlan::group_permutation(space, BlockPartition::unit_blocks(2)),
        ];
        for plan in plans {
            let result = run_sequential(&observed, &plan).unwrap();
            assert!(
                (result.study.prob(&[0, 0]) - 0.42).abs() < 1e-12,
                "plan {:?}",
                plan.steps
            );
            assert!((result.full.total_mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn snapshots_record_each_block() {
        let observed = asymmetric_fixture();
        let plan =
            IdentPlan::two_var_permutation(observed.space().clone()).with_snapshots(true);
        let result = run_sequential(&observed, &plan).unwrap();
        let snaps = result.snapshots.unwrap();
        assert_eq!(snaps.len(), 2);
        assert_eq!(snaps[0].block, 1);
        // After block 1 the first variable has value+indicator axes and the
        // second is still materialized.
        assert_eq!(snaps[0].stage.axes().len(), 3);
        assert!((snaps[0].stage.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_plans_and_mismatched_spaces_are_rejected() {
        let observed = asymmetric_fixture();
        let mut plan = IdentPlan::two_var_carry(observed.space().clone());
        plan.steps.pop();
        assert!(matches!(
            run_sequential(&observed, &plan).unwrap_err(),
            EngineError::PlanInvalid(_)
        ));

        let other_space = CategorySpace::new(vec![3, 2]).unwrap();
        let plan = IdentPlan::two_var_carry(other_space);
        assert!(matches!(
            run_sequential(&observed, &plan).unwrap_err(),
            EngineError::SpaceMismatch(_)
        ));
    }

    #[test]
    fn zero_donor_bubbles_up_with_block_index() {
        // Second variable never observed together with the first once we
        // condition on the first being missing.
        let space = CategorySpace::new(vec![2, 2]).unwrap();
        let observed = ObservedTable::from_pattern_blocks(
            space.clone(),
            vec![
                vec![0.2, 0.2, 0.2, 0.2],
                vec![0.0, 0.0],
                vec![0.05, 0.05],
                vec![0.1],
            ],
        )
        .unwrap();
        // Carry plan: step 2's context (m1=1) only holds the both-missing mass,
        // whose donors under that context are the x1-missing-x2-observed cells,
        // all zero.
        let plan = IdentPlan::two_var_carry(space.clone());
        let err = run_sequential(&observed, &plan).unwrap_err();
        match err {
            EngineError::Step { block, source } => {
                assert_eq!(block, 2);
                assert!(matches!(source, StepError::MarUnidentifiable { .. }));
            }
            other => panic!("unexpected error {other:?}"),
        }
        // Uniform fill turns the same run into a flagged success.
        let plan = plan.with_policy(ZeroCellPolicy::UniformFill);
        let result = run_sequential(&observed, &plan).unwrap();
        assert!(result.events.iter().any(|e| e.kind == FillEventKind::MissingDonor));
        assert!((result.full.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_block_mar_and_ccmv_coincide_under_the_donor_convention() {
        let space = CategorySpace::new(vec![2, 2, 2]).unwrap();
        let observed = crate::testutil::random_observed(space.clone(), 99);
        let mar = run_sequential(
            &observed,
            &IdentPlan::group_permutation(space.clone(), BlockPartition::single_block(3)),
        )
        .unwrap();
        let ccmv = run_sequential(&observed, &IdentPlan::single_block_ccmv(space)).unwrap();
        for (values, pattern, mass) in mar.full.iter_cells() {
            assert!((ccmv.full.prob(&values, pattern) - mass).abs() < 1e-15);
        }
    }

    #[test]
    fn reorder_variables_is_a_pure_shuffle() {
        let observed = asymmetric_fixture();
        let swapped = reorder_variables(&observed, &[1, 0]).unwrap();
        let pat = |s: &str| MissPattern::parse(s).unwrap();
        // New variable 0 is old variable 1: new cell (a, b) = old cell (b, a).
        assert!((swapped.mass(pat("00"), &[1, 0]) - 0.05).abs() < 1e-15);
        assert!((swapped.mass(pat("00"), &[0, 1]) - 0.15).abs() < 1e-15);
        // Old "x2 missing" block becomes the new "x1 missing" block.
        assert!((swapped.mass(pat("10"), &[0]) - 0.10).abs() < 1e-15);
        assert!((swapped.mass(pat("10"), &[1]) - 0.15).abs() < 1e-15);
        assert!((swapped.mass(pat("11"), &[]) - 0.15).abs() < 1e-15);
        let back = reorder_variables(&swapped, &[1, 0]).unwrap();
        assert_eq!(back, observed);
        assert!(reorder_variables(&observed, &[0, 0]).is_err());
    }

    /// Independent transcription of the three-variable partially ignorable
    /// construction, for a table whose FIRST variable is the ignorable one.
    ///
    /// Step 1 closes X1 from its observed cases within every materialized
    /// (X2*, X3*) context and keeps the context's missingness split for M1.
    /// The remaining pair is closed by itemwise conditional independence
    /// given X1, whose pattern cells reduce to raw-mass expressions:
    /// the observed block itself, observed-times-partial over the shared
    /// margin for the single-missing blocks, and an explicitly normalized
    /// product for the both-missing block.
    fn oracle_partially_ignorable(observed: &ObservedTable) -> FullTable {
        let space = observed.space().clone();
        let (c1, c2, c3) = (space.card(0), space.card(1), space.card(2));
        let pat = |s: &str| MissPattern::parse(s).unwrap();
        let m = |s: &str, v: &[usize]| observed.mass(pat(s), v);

        // g[x1][d2][d3]: joint of X1 with the materialized pair after the
        // first indicator is summed out; fac1[d2][d3]: P(M1=1 | context).
        let mut g = vec![vec![vec![0.0f64; c3 + 1]; c2 + 1]; c1];
        let mut fac1 = vec![vec![0.0f64; c3 + 1]; c2 + 1];
        for d2 in 0..=c2 {
            for d3 in 0..=c3 {
                let (obs_mass, miss_mass): (Vec<f64>, f64) = match (d2 == c2, d3 == c3) {
                    (false, false) => (
                        (0..c1).map(|x1| m("000", &[x1, d2, d3])).collect(),
                        m("100", &[d2, d3]),
                    ),
                    (true, false) => (
                        (0..c1).map(|x1| m("010", &[x1, d3])).collect(),
                        m("110", &[d3]),
                    ),
                    (false, true) => (
                        (0..c1).map(|x1| m("001", &[x1, d2])).collect(),
                        m("101", &[d2]),
                    ),
                    (true, true) => {
                        ((0..c1).map(|x1| m("011", &[x1])).collect(), m("111", &[]))
                    }
                };
                let a: f64 = obs_mass.iter().sum();
                fac1[d2][d3] = miss_mass / (a + miss_mass);
                for x1 in 0..c1 {
                    g[x1][d2][d3] = obs_mass[x1] * (1.0 + miss_mass / a);
                }
            }
        }

        // Margins of the pair's fully observed block within each x1 slice.
        let row2 = |x1: usize, x2: usize| (0..c3).map(|x3| g[x1][x2][x3]).sum::<f64>();
        let row3 = |x1: usize, x3: usize| (0..c2).map(|x2| g[x1][x2][x3]).sum::<f64>();
        // Both-missing block: normalizer of the proportionality constant.
        let mut z = vec![0.0f64; c1];
        for x1 in 0..c1 {
            for x2 in 0..c2 {
                for x3 in 0..c3 {
                    z[x1] += g[x1][x2][x3] * (g[x1][x2][c3] / row2(x1, x2))
                        * (g[x1][c2][x3] / row3(x1, x3));
                }
            }
        }
        let s11: Vec<f64> = (0..c1).map(|x1| g[x1][c2][c3]).collect();

        FullTable::from_fn(space, |values, pattern| {
            let (x1, x2, x3) = (values[0], values[1], values[2]);
            let (m1, m2, m3) =
                (pattern.is_missing(0), pattern.is_missing(1), pattern.is_missing(2));
            let pair = match (m2, m3) {
                (false, false) => g[x1][x2][x3],
                (false, true) => g[x1][x2][x3] * g[x1][x2][c3] / row2(x1, x2),
                (true, false) => g[x1][x2][x3] * g[x1][c2][x3] / row3(x1, x3),
                (true, true) => {
                    s11[x1] * g[x1][x2][x3] * (g[x1][x2][c3] / row2(x1, x2))
                        * (g[x1][c2][x3] / row3(x1, x3))
                        / z[x1]
                }
            };
            let d2 = if m2 { c2 } else { x2 };
            let d3 = if m3 { c3 } else { x3 };
            pair * if m1 { fac1[d2][d3] } else { 1.0 - fac1[d2][d3] }
        })
        .unwrap()
    }

    #[test]
    fn partially_ignorable_plan_matches_its_transcribed_construction() {
        for seed in [21u64, 22, 23, 24, 25] {
            let cards = match seed % 3 {
                0 => vec![2, 2, 2],
                1 => vec![3, 2, 3],
                _ => vec![2, 3, 2],
            };
            let space = CategorySpace::new(cards).unwrap();
            let observed = crate::testutil::random_observed(space.clone(), seed);
            let plan = IdentPlan::partially_ignorable_icin(space, 0).unwrap();
            let engine = run_sequential(&observed, &plan).unwrap();
            let oracle = oracle_partially_ignorable(&observed);
            for (values, pattern, mass) in oracle.iter_cells() {
                assert!(
                    (engine.full.prob(&values, pattern) - mass).abs() < 1e-13,
                    "seed {seed} cell {values:?} {pattern}"
                );
            }
        }
    }

    #[test]
    fn partially_ignorable_plan_respects_variable_relabeling() {
        // Treat the LAST variable as ignorable; the engine must agree with
        // the first-variable oracle applied to the relabeled table.
        let space = CategorySpace::new(vec![2, 3, 2]).unwrap();
        let observed = crate::testutil::random_observed(space.clone(), 77);
        let plan = IdentPlan::partially_ignorable_icin(space, 2).unwrap();
        assert_eq!(plan.order, vec![2, 0, 1]);
        let engine = run_sequential(&observed, &plan).unwrap();
        // Relabel so the ignorable variable comes first, run the oracle
        // there, and bring the engine's answer into the same order.
        let relabeled = reorder_variables(&observed, &[2, 0, 1]).unwrap();
        let oracle = oracle_partially_ignorable(&relabeled);
        let engine_relabeled = engine.full.apply_order(&[2, 0, 1]).unwrap();
        for (values, pattern, mass) in oracle.iter_cells() {
            assert!(
                (engine_relabeled.prob(&values, pattern) - mass).abs() < 1e-13,
                "cell {values:?} {pattern}"
            );
        }
    }

    #[test]
    fn assemble_rejects_broken_chains() {
        let observed = asymmetric_fixture();
        let plan = IdentPlan::two_var_permutation(observed.space().clone());
        let result = run_sequential(&observed, &plan).unwrap();
        // Dropping the factor leaves variable 1's indicator uncovered.
        let err = assemble_full(&result.final_stage, &[]).unwrap_err();
        assert!(matches!(err, EngineError::SignatureMismatch(_)));
        // Duplicating it covers the indicator twice.
        let twice: Vec<StageFactor> =
            vec![result.factors[0].clone(), result.factors[0].clone()];
        let err = assemble_full(&result.final_stage, &twice).unwrap_err();
        assert!(matches!(err, EngineError::SignatureMismatch(_)));
    }
}
