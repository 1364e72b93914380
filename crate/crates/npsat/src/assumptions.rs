//! Identifying assumptions applied to one block of variables at a time.
//!
//! Each step consumes the current stage distribution, whose axes for the active
//! block are still materialized, and returns a stage in which that block's
//! axes are replaced by true-value and indicator axes. Every step preserves,
//! context by context, the materialized distribution it started from: summing
//! the output over a block's missing coordinates reproduces the input cell
//! exactly. That invariant is what makes the final assembled full-data law
//! saturate the observed-data law.

use thiserror::Error;

use crate::plan::ZeroCellPolicy;
use crate::stage::{Axis, AxisKind, GroupedView, StageDistribution};

#[derive(Debug, Error, PartialEq)]
pub enum StepError {
    /// Conditional MAR needs fully observed donors for a partially missing
    /// cell, and the data give the donors zero mass.
    #[error("conditional MAR unidentifiable at {context}: {detail}")]
    MarUnidentifiable { context: String, detail: String },
    /// The complete-case restriction needs the same donors.
    #[error("complete-case restriction undefined at {context}: {detail}")]
    CcmvUndefined { context: String, detail: String },
    /// A marginal appearing in a pairwise itemwise-independence denominator is zero.
    #[error("itemwise-independent completion unidentifiable at {context}: {detail}")]
    IcinUnidentifiable { context: String, detail: String },
    #[error("block has {got} variables, this step needs exactly {expected}")]
    BlockShape { expected: usize, got: usize },
    #[error("variable {var} has no materialized axis in the current stage")]
    NotMaterialized { var: usize },
}

/// Something the engine patched over instead of failing: a zero-mass context,
/// or a zero denominator filled uniformly under [`ZeroCellPolicy::UniformFill`].
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct FillEvent {
    pub kind: FillEventKind,
    pub context: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum FillEventKind {
    /// The conditioning context itself has zero mass; the step wrote zeros.
    ZeroMassContext,
    /// A fully observed donor margin was zero; completion filled uniformly.
    MissingDonor,
    /// A pairwise completion denominator was zero; the affected slice was
    /// filled uniformly.
    PairDenominator,
    /// The all-missing pairwise cell had a zero normalizer; filled uniformly.
    PairNormalizer,
    /// A factored-out indicator conditional was undefined on a zero-mass
    /// context and was stored as uniform; it carries no downstream weight.
    FactorZeroContext,
}

/// Result of applying one identifying assumption to one block.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub stage: StageDistribution,
    pub events: Vec<FillEvent>,
}

/// Signature shared by every per-block assumption implementation.
pub type StepFn =
    fn(&StageDistribution, &[usize], ZeroCellPolicy) -> Result<StepOutput, StepError>;

/// Conditional MAR for the block: within every context, cells with missing
/// coordinates are completed from the block's fully observed cases, and the
/// missingness probabilities given the materialized block are kept as observed.
pub fn step_conditional_mar(
    stage: &StageDistribution,
    block: &[usize],
    policy: ZeroCellPolicy,
) -> Result<StepOutput, StepError> {
    apply_block_step(stage, block, policy, |g, cards, policy, ctx| {
        donor_completion(g, cards, policy, DonorFlavor::Mar, ctx)
    })
}

/// Complete-case missing-value restriction for the block: the distribution of
/// the missing coordinates given the observed ones is borrowed from the fully
/// observed pattern, for every within-block pattern.
pub fn step_ccmv(
    stage: &StageDistribution,
    block: &[usize],
    policy: ZeroCellPolicy,
) -> Result<StepOutput, StepError> {
    apply_block_step(stage, block, policy, |g, cards, policy, ctx| {
        donor_completion(g, cards, policy, DonorFlavor::Ccmv, ctx)
    })
}

/// Itemwise conditionally independent nonresponse for a two-variable block:
/// within every context, each variable's value is independent of its own
/// indicator given the other variable's value and indicator.
pub fn step_icin_pair(
    stage: &StageDistribution,
    block: &[usize],
    policy: ZeroCellPolicy,
) -> Result<StepOutput, StepError> {
    if block.len() != 2 {
        return Err(StepError::BlockShape { expected: 2, got: block.len() });
    }
    apply_block_step(stage, block, policy, icin_completion)
}

type KernelResult = Result<(Vec<f64>, Vec<FillEventKind>), StepError>;
type Kernel = fn(&[f64], &[usize], ZeroCellPolicy, &dyn Fn() -> String) -> KernelResult;

/// Shared driver: for every context cell, gathers the block's materialized
/// masses, runs the completion kernel, and scatters the resulting joint over
/// (values, indicators) back into a stage with rewritten axes.
fn apply_block_step(
    stage: &StageDistribution,
    block: &[usize],
    policy: ZeroCellPolicy,
    kernel: Kernel,
) -> Result<StepOutput, StepError> {
    let mut target_positions = Vec::with_capacity(block.len());
    for &var in block {
        let pos = stage
            .axis_pos(AxisKind::Materialized, var)
            .ok_or(StepError::NotMaterialized { var })?;
        target_positions.push(pos);
    }
    let old_group = GroupedView::new(stage.axes(), &target_positions);
    let cards: Vec<usize> = old_group
        .target_positions
        .iter()
        .map(|&pos| stage.axes()[pos].size - 1)
        .collect();

    let mut new_axes = Vec::with_capacity(stage.axes().len() + block.len());
    for (pos, axis) in stage.axes().iter().enumerate() {
        if old_group.target_positions.contains(&pos) {
            new_axes.push(Axis::value(axis.var, axis.size - 1));
            new_axes.push(Axis::indicator(axis.var));
        } else {
            new_axes.push(*axis);
        }
    }
    let new_target_positions: Vec<usize> = new_axes
        .iter()
        .enumerate()
        .filter(|(_, a)| block.contains(&a.var) && matches!(a.kind, AxisKind::Value | AxisKind::Indicator))
        .map(|(pos, _)| pos)
        .collect();
    let mut out = StageDistribution::new_zero(new_axes);
    let new_group = GroupedView::new(out.axes(), &new_target_positions);
    debug_assert_eq!(old_group.ctx_offsets.len(), new_group.ctx_offsets.len());

    let mut events = Vec::new();
    let mut g = vec![0.0; old_group.target_offsets.len()];
    for (ctx, &base) in old_group.ctx_offsets.iter().enumerate() {
        for (slot, &off) in old_group.target_offsets.iter().enumerate() {
            g[slot] = stage.data()[base + off];
        }
        let ctx_label = || describe_context(stage.axes(), &old_group, ctx);
        if g.iter().sum::<f64>() <= 0.0 {
            events.push(FillEvent { kind: FillEventKind::ZeroMassContext, context: ctx_label() });
            continue;
        }
        let (h, kinds) = kernel(&g, &cards, policy, &ctx_label)?;
        let new_base = new_group.ctx_offsets[ctx];
        for (slot, &off) in new_group.target_offsets.iter().enumerate() {
            out.data_mut()[new_base + off] = h[slot];
        }
        events.extend(kinds.into_iter().map(|kind| FillEvent { kind, context: ctx_label() }));
    }
    Ok(StepOutput { stage: out, events })
}

/// Human-readable label for one context cell, e.g. `X1=2, M1=0, X3*=*`.
/// Variable numbers refer to positions in the order the plan processes them.
pub(crate) fn describe_context(axes: &[Axis], group: &GroupedView, ctx: usize) -> String {
    let digits = group.ctx_digits(axes, ctx);
    let parts: Vec<String> = group
        .ctx_positions
        .iter()
        .zip(&digits)
        .map(|(&pos, &d)| {
            let axis = axes[pos];
            match axis.kind {
                AxisKind::Value => format!("X{}={}", axis.var + 1, d + 1),
                AxisKind::Indicator => format!("M{}={}", axis.var + 1, d),
                AxisKind::Materialized => {
                    if d + 1 == axis.size {
                        format!("X{}*=*", axis.var + 1)
                    } else {
                        format!("X{}*={}", axis.var + 1, d + 1)
                    }
                }
            }
        })
        .collect();
    if parts.is_empty() {
        "(unconditional)".to_string()
    } else {
        parts.join(", ")
    }
}

/// Rank of a within-block joint cell in interleaved (value, indicator) order.
fn joint_rank(cards: &[usize], values: &[usize], missing: usize) -> usize {
    let mut rank = 0;
    for (i, (&c, &v)) in cards.iter().zip(values).enumerate() {
        rank = rank * c + v;
        rank = rank * 2 + (missing >> i & 1);
    }
    rank
}

/// Rank of a within-block materialized cell; missing coordinates occupy the
/// extra slot after the last category.
fn mat_rank(cards: &[usize], values: &[usize], missing: usize) -> usize {
    let mut rank = 0;
    for (i, (&c, &v)) in cards.iter().zip(values).enumerate() {
        let digit = if missing >> i & 1 == 1 { c } else { v };
        rank = rank * (c + 1) + digit;
    }
    rank
}

/// Iterates assignments to the variables selected by `mask` (other slots stay
/// untouched), invoking `visit` for each.
fn for_each_assignment(
    cards: &[usize],
    mask: usize,
    values: &mut [usize],
    visit: &mut impl FnMut(&[usize]),
) {
    let selected: Vec<usize> =
        (0..cards.len()).filter(|&i| mask >> i & 1 == 1).collect();
    let total: usize = selected.iter().map(|&i| cards[i]).product();
    for mut rank in 0..total {
        for &i in selected.iter().rev() {
            values[i] = rank % cards[i];
            rank /= cards[i];
        }
        visit(values);
    }
}

enum DonorFlavor {
    Mar,
    Ccmv,
}

/// Shared completion for conditional MAR and the complete-case restriction:
/// every partially missing within-block cell keeps its observed mass and
/// spreads it over the missing coordinates proportionally to the fully
/// observed cases with the same observed values.
fn donor_completion(
    g: &[f64],
    cards: &[usize],
    policy: ZeroCellPolicy,
    flavor: DonorFlavor,
    ctx_label: &dyn Fn() -> String,
) -> KernelResult {
    let b = cards.len();
    let joint_len: usize = cards.iter().map(|&c| c * 2).product();
    let mut h = vec![0.0; joint_len];
    let mut events = Vec::new();
    let full_mask = (1usize << b) - 1;

    for missing in 0..(1usize << b) {
        let observed_mask = full_mask & !missing;
        let mut obs_values = vec![0; b];
        let mut error: Option<StepError> = None;
        for_each_assignment(cards, observed_mask, &mut obs_values, &mut |values| {
            if error.is_some() {
                return;
            }
            let mass = g[mat_rank(cards, values, missing)];
            if missing == 0 {
                h[joint_rank(cards, values, 0)] = mass;
                return;
            }
            if mass == 0.0 {
                return;
            }
            // Donor margin: fully observed cases agreeing on the observed coordinates.
            let mut donor_margin = 0.0;
            let mut scratch = values.to_vec();
            for_each_assignment(cards, missing, &mut scratch, &mut |full| {
                donor_margin += g[mat_rank(cards, full, 0)];
            });
            let mut scratch = values.to_vec();
            if donor_margin > 0.0 {
                for_each_assignment(cards, missing, &mut scratch, &mut |full| {
                    let w = g[mat_rank(cards, full, 0)] / donor_margin;
                    h[joint_rank(cards, full, missing)] = mass * w;
                });
            } else {
                match policy {
                    ZeroCellPolicy::Error => {
                        let detail = format!(
                            "within-block pattern {missing:#0width$b} at observed values {values:?} \
                             has mass {mass} but no fully observed donors",
                            width = b + 2
                        );
                        error = Some(match flavor {
                            DonorFlavor::Mar => {
                                StepError::MarUnidentifiable { context: ctx_label(), detail }
                            }
                            DonorFlavor::Ccmv => {
                                StepError::CcmvUndefined { context: ctx_label(), detail }
                            }
                        });
                    }
                    ZeroCellPolicy::UniformFill => {
                        let completions: usize = (0..b)
                            .filter(|&i| missing >> i & 1 == 1)
                            .map(|i| cards[i])
                            .product();
                        let w = 1.0 / completions as f64;
                        for_each_assignment(cards, missing, &mut scratch, &mut |full| {
                            h[joint_rank(cards, full, missing)] = mass * w;
                        });
                        events.push(FillEventKind::MissingDonor);
                    }
                }
            }
        });
        if let Some(err) = error {
            return Err(err);
        }
    }
    Ok((h, events))
}

/// Pairwise itemwise-independent completion. With `a` and `b` the block's two
/// variables and `g_mu` the observed masses of the four within-block patterns:
/// fully observed cells pass through; cells missing one coordinate are
/// completed by tilting the fully observed joint so its margin matches the
/// observed one; the all-missing cell gets the joint tilted by both margins,
/// renormalized explicitly. The result makes each value independent of its own
/// indicator given the other variable's value and indicator.
fn icin_completion(
    g: &[f64],
    cards: &[usize],
    policy: ZeroCellPolicy,
    ctx_label: &dyn Fn() -> String,
) -> KernelResult {
    let (ca, cb) = (cards[0], cards[1]);
    let mut h = vec![0.0; ca * cb * 4];
    let mut events = Vec::new();
    let g00 = |va: usize, vb: usize| g[mat_rank(cards, &[va, vb], 0)];
    let g10 = |vb: usize| g[mat_rank(cards, &[0, vb], 0b01)];
    let g01 = |va: usize| g[mat_rank(cards, &[va, 0], 0b10)];
    let g11 = g[mat_rank(cards, &[0, 0], 0b11)];
    let marg_a = |va: usize| (0..cb).map(|vb| g00(va, vb)).sum::<f64>();
    let marg_b = |vb: usize| (0..ca).map(|va| g00(va, vb)).sum::<f64>();

    // Fully observed pattern passes through.
    for va in 0..ca {
        for vb in 0..cb {
            h[joint_rank(cards, &[va, vb], 0)] = g00(va, vb);
        }
    }

    // Second variable missing: complete along b, tilted to match the a-margin.
    for va in 0..ca {
        let mass = g01(va);
        if mass == 0.0 {
            continue;
        }
        let denom = marg_a(va);
        if denom > 0.0 {
            for vb in 0..cb {
                h[joint_rank(cards, &[va, vb], 0b10)] = mass * g00(va, vb) / denom;
            }
        } else {
            fill_pair_slice(policy, ctx_label, &mut events, || {
                format!("first variable value {} has no fully observed cases", va + 1)
            })?;
            for vb in 0..cb {
                h[joint_rank(cards, &[va, vb], 0b10)] = mass / cb as f64;
            }
        }
    }

    // First variable missing: symmetric.
    for vb in 0..cb {
        let mass = g10(vb);
        if mass == 0.0 {
            continue;
        }
        let denom = marg_b(vb);
        if denom > 0.0 {
            for va in 0..ca {
                h[joint_rank(cards, &[va, vb], 0b01)] = mass * g00(va, vb) / denom;
            }
        } else {
            fill_pair_slice(policy, ctx_label, &mut events, || {
                format!("second variable value {} has no fully observed cases", vb + 1)
            })?;
            for va in 0..ca {
                h[joint_rank(cards, &[va, vb], 0b01)] = mass / ca as f64;
            }
        }
    }

    // Both missing: tilt by both margins and renormalize explicitly.
    if g11 > 0.0 {
        let mut weights = vec![0.0; ca * cb];
        let mut defined = true;
        'outer: for va in 0..ca {
            for vb in 0..cb {
                let (ra_num, ra_den) = (g01(va), marg_a(va));
                let (rb_num, rb_den) = (g10(vb), marg_b(vb));
                let ra = match (ra_num > 0.0, ra_den > 0.0) {
                    (false, _) => 0.0,
                    (true, true) => ra_num / ra_den,
                    (true, false) => {
                        defined = false;
                        break 'outer;
                    }
                };
                let rb = match (rb_num > 0.0, rb_den > 0.0) {
                    (false, _) => 0.0,
                    (true, true) => rb_num / rb_den,
                    (true, false) => {
                        defined = false;
                        break 'outer;
                    }
                };
                weights[va * cb + vb] = g00(va, vb) * ra * rb;
            }
        }
        let norm: f64 = weights.iter().sum();
        if defined && norm > 0.0 {
            for va in 0..ca {
                for vb in 0..cb {
                    h[joint_rank(cards, &[va, vb], 0b11)] = g11 * weights[va * cb + vb] / norm;
                }
            }
        } else {
            match policy {
                ZeroCellPolicy::Error => {
                    return Err(StepError::IcinUnidentifiable {
                        context: ctx_label(),
                        detail: if defined {
                            "all-missing cell has positive mass but a zero normalizer".into()
                        } else {
                            "a margin needed in a completion denominator is zero".into()
                        },
                    });
                }
                ZeroCellPolicy::UniformFill => {
                    events.push(FillEventKind::PairNormalizer);
                    let w = g11 / (ca * cb) as f64;
                    for va in 0..ca {
                        for vb in 0..cb {
                            h[joint_rank(cards, &[va, vb], 0b11)] = w;
                        }
                    }
                }
            }
        }
    }
    Ok((h, events))
}

fn fill_pair_slice(
    policy: ZeroCellPolicy,
    ctx_label: &dyn Fn() -> String,
    events: &mut Vec<FillEventKind>,
    detail: impl Fn() -> String,
) -> Result<(), StepError> {
    match policy {
        ZeroCellPolicy::Error => Err(StepError::IcinUnidentifiable {
            context: ctx_label(),
            detail: detail(),
        }),
        ZeroCellPolicy::UniformFill => {
            events.push(FillEventKind::PairDenominator);
            Ok(())
        }
    }
}
