//! Intermediate distributions produced while identifying a full-data law.
//!
//! A [`StageDistribution`] is a dense table over a mixed list of axes: true
//! values of already-identified variables, missingness indicators that are
//! still carried, and materialized (value-or-missing) coordinates of the
//! not-yet-identified tail. The identification engine rewrites this axis list
//! block by block; the verifier and the stored stage factors read it back.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::MissPattern;
use crate::table::{normalize_weights, ObservedTable, TableError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisKind {
    /// True value of a study variable; size = cardinality.
    Value,
    /// Missingness indicator of a study variable; size = 2 (0 observed, 1 missing).
    Indicator,
    /// Materialized coordinate: indices `0..card` are values, index `card` is
    /// "missing"; size = cardinality + 1.
    Materialized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub kind: AxisKind,
    pub var: usize,
    pub size: usize,
}

impl Axis {
    pub fn value(var: usize, card: usize) -> Self {
        Self { kind: AxisKind::Value, var, size: card }
    }

    pub fn indicator(var: usize) -> Self {
        Self { kind: AxisKind::Indicator, var, size: 2 }
    }

    pub fn materialized(var: usize, card: usize) -> Self {
        Self { kind: AxisKind::Materialized, var, size: card + 1 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum StageError {
    #[error("conditioning event has zero probability: {0}")]
    ZeroConditioningEvent(String),
    #[error("axis not found: {0}")]
    AxisNotFound(String),
    #[error("digit {digit} out of range for axis {axis:?}")]
    DigitOutOfRange { axis: Axis, digit: usize },
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Dense nonnegative table over an ordered list of axes (row-major, first axis
/// slowest). Depending on context it holds a joint distribution or a family of
/// conditionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDistribution {
    axes: Vec<Axis>,
    data: Vec<f64>,
}

impl StageDistribution {
    pub fn new_zero(axes: Vec<Axis>) -> Self {
        let len = axes.iter().map(|a| a.size).product();
        Self { axes, data: vec![0.0; len] }
    }

    pub fn from_data(axes: Vec<Axis>, data: Vec<f64>) -> Result<Self, TableError> {
        let len: usize = axes.iter().map(|a| a.size).product();
        if data.len() != len {
            return Err(TableError::SpaceMismatch(format!(
                "axes {axes:?} need {len} cells, got {}",
                data.len()
            )));
        }
        Ok(Self { axes, data })
    }

    /// The observed-data distribution as a table over materialized axes only.
    pub fn from_observed(observed: &ObservedTable) -> Self {
        let space = observed.space();
        let axes: Vec<Axis> = (0..space.num_vars())
            .map(|j| Axis::materialized(j, space.card(j)))
            .collect();
        let mut stage = Self::new_zero(axes);
        for (pattern, obs_values, mass) in observed.iter_cells() {
            let mut digits = Vec::with_capacity(space.num_vars());
            let mut slot = 0;
            for j in 0..space.num_vars() {
                if pattern.is_missing(j) {
                    digits.push(space.card(j));
                } else {
                    digits.push(obs_values[slot]);
                    slot += 1;
                }
            }
            let idx = stage.rank_of(&digits);
            stage.data[idx] = mass;
        }
        stage
    }

    /// A stage whose axes are all materialized converts back to an observed table.
    pub fn to_observed(&self) -> Result<ObservedTable, TableError> {
        let mut cards = Vec::with_capacity(self.axes.len());
        for (pos, axis) in self.axes.iter().enumerate() {
            if axis.kind != AxisKind::Materialized || axis.var != pos {
                return Err(TableError::SpaceMismatch(format!(
                    "axis {axis:?} is not the materialized coordinate of variable {pos}"
                )));
            }
            cards.push(axis.size - 1);
        }
        let space = crate::space::CategorySpace::new(cards)
            .map_err(|e| TableError::SpaceMismatch(e.to_string()))?;
        ObservedTable::from_fn(space.clone(), |pattern, obs| {
            let mut digits = Vec::with_capacity(space.num_vars());
            let mut slot = 0;
            for j in 0..space.num_vars() {
                if pattern.is_missing(j) {
                    digits.push(space.card(j));
                } else {
                    digits.push(obs[slot]);
                    slot += 1;
                }
            }
            self.value(&digits)
        })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Position of the axis with the given kind and variable, if present.
    pub fn axis_pos(&self, kind: AxisKind, var: usize) -> Option<usize> {
        self.axes.iter().position(|a| a.kind == kind && a.var == var)
    }

    /// Flat rank of a full digit vector (one digit per axis, in axis order).
    pub fn rank_of(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.axes.len());
        let mut rank = 0;
        for (axis, &d) in self.axes.iter().zip(digits) {
            debug_assert!(d < axis.size, "digit {d} out of range for {axis:?}");
            rank = rank * axis.size + d;
        }
        rank
    }

    /// Digit vector at a flat rank.
    pub fn digits_at(&self, mut rank: usize) -> Vec<usize> {
        let mut digits = vec![0; self.axes.len()];
        for (pos, axis) in self.axes.iter().enumerate().rev() {
            digits[pos] = rank % axis.size;
            rank /= axis.size;
        }
        digits
    }

    pub fn value(&self, digits: &[usize]) -> f64 {
        self.data[self.rank_of(digits)]
    }

    pub fn set_value(&mut self, digits: &[usize], mass: f64) {
        let idx = self.rank_of(digits);
        self.data[idx] = mass;
    }

    pub fn total_mass(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Rescales all cells to total mass 1; returns the pre-normalization total.
    pub fn normalize(&mut self) -> Result<f64, TableError> {
        let axes = self.axes.clone();
        let sizes: Vec<usize> = axes.iter().map(|a| a.size).collect();
        normalize_weights(&mut self.data, |mut rank| {
            let mut digits = vec![0; sizes.len()];
            for (pos, &size) in sizes.iter().enumerate().rev() {
                digits[pos] = rank % size;
                rank /= size;
            }
            format!("digits {digits:?}")
        })
    }

    /// Sums out the axes at `positions`, keeping the remaining axes in order.
    pub fn sum_out(&self, positions: &[usize]) -> StageDistribution {
        let group = GroupedView::new(&self.axes, positions);
        let kept: Vec<Axis> = self
            .axes
            .iter()
            .enumerate()
            .filter(|(pos, _)| !positions.contains(pos))
            .map(|(_, a)| *a)
            .collect();
        let mut out = StageDistribution::new_zero(kept);
        for (ctx, &base) in group.ctx_offsets.iter().enumerate() {
            let mut sum = 0.0;
            for &off in &group.target_offsets {
                sum += self.data[base + off];
            }
            out.data[ctx] = sum;
        }
        out
    }

    /// Restricts to the given `(axis position, digit)` assignments and
    /// renormalizes, producing the conditional distribution of the remaining
    /// axes given that event.
    pub fn condition(&self, given: &[(usize, usize)]) -> Result<StageDistribution, StageError> {
        for &(pos, digit) in given {
            let axis = *self
                .axes
                .get(pos)
                .ok_or_else(|| StageError::AxisNotFound(format!("position {pos}")))?;
            if digit >= axis.size {
                return Err(StageError::DigitOutOfRange { axis, digit });
            }
        }
        let positions: Vec<usize> = given.iter().map(|&(p, _)| p).collect();
        let group = GroupedView::new(&self.axes, &positions);
        // Rank of the assignment among the target-axis cells.
        let mut target_rank = 0;
        for &pos in &group.target_positions {
            let digit = given.iter().find(|&&(p, _)| p == pos).unwrap().1;
            target_rank = target_rank * self.axes[pos].size + digit;
        }
        let slice_off = group.target_offsets[target_rank];
        let kept: Vec<Axis> = self
            .axes
            .iter()
            .enumerate()
            .filter(|(pos, _)| !positions.contains(pos))
            .map(|(_, a)| *a)
            .collect();
        let mut out = StageDistribution::new_zero(kept);
        for (ctx, &base) in group.ctx_offsets.iter().enumerate() {
            out.data[ctx] = self.data[base + slice_off];
        }
        out.normalize().map_err(|_| {
            StageError::ZeroConditioningEvent(format!("assignments {given:?}"))
        })?;
        Ok(out)
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Offset tables splitting a dense table into (context, target) cell pairs.
///
/// `flat = ctx_offsets[c] + target_offsets[t]` enumerates every cell exactly
/// once; context cells keep the enumeration order of the non-target axes, so
/// two tables sharing those axes assign the same meaning to a context rank.
#[derive(Debug)]
pub(crate) struct GroupedView {
    pub ctx_positions: Vec<usize>,
    pub target_positions: Vec<usize>,
    pub ctx_offsets: Vec<usize>,
    pub target_offsets: Vec<usize>,
}

impl GroupedView {
    pub fn new(axes: &[Axis], target_positions: &[usize]) -> Self {
        let strides = strides(axes);
        let target_positions: Vec<usize> = {
            let mut t = target_positions.to_vec();
            t.sort_unstable();
            t.dedup();
            t
        };
        let ctx_positions: Vec<usize> =
            (0..axes.len()).filter(|p| !target_positions.contains(p)).collect();
        Self {
            ctx_offsets: offsets(axes, &strides, &ctx_positions),
            target_offsets: offsets(axes, &strides, &target_positions),
            ctx_positions,
            target_positions,
        }
    }

    /// Digits of the context axes at a context rank, in context-position order.
    pub fn ctx_digits(&self, axes: &[Axis], mut rank: usize) -> Vec<usize> {
        let mut digits = vec![0; self.ctx_positions.len()];
        for (slot, &pos) in self.ctx_positions.iter().enumerate().rev() {
            digits[slot] = rank % axes[pos].size;
            rank /= axes[pos].size;
        }
        digits
    }
}

fn strides(axes: &[Axis]) -> Vec<usize> {
    let mut strides = vec![1; axes.len()];
    for pos in (0..axes.len().saturating_sub(1)).rev() {
        strides[pos] = strides[pos + 1] * axes[pos + 1].size;
    }
    strides
}

/// Flat offsets of every digit combination over the axes at `positions`,
/// enumerated row-major in position order.
fn offsets(axes: &[Axis], strides: &[usize], positions: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &pos in positions {
        let mut next = Vec::with_capacity(out.len() * axes[pos].size);
        for &base in &out {
            for digit in 0..axes[pos].size {
                next.push(base + digit * strides[pos]);
            }
        }
        out = next;
    }
    out
}

/// Evaluates a stage table at a full-data cell: value axes read the true
/// values, indicator axes the pattern bits, and materialized axes combine the
/// two (the variable's value when observed, the missing slot otherwise).
pub fn eval_at_full_cell(stage: &StageDistribution, values: &[usize], pattern: MissPattern) -> f64 {
    let mut digits = Vec::with_capacity(stage.axes().len());
    for axis in stage.axes() {
        let digit = match axis.kind {
            AxisKind::Value => values[axis.var],
            AxisKind::Indicator => pattern.is_missing(axis.var) as usize,
            AxisKind::Materialized => {
                if pattern.is_missing(axis.var) {
                    axis.size - 1
                } else {
                    values[axis.var]
                }
            }
        };
        digits.push(digit);
    }
    stage.value(&digits)
}
