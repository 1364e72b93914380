//! Dense probability tables: observed-data, full-data and study-marginal.
//!
//! An [`ObservedTable`] stores one dense block per missingness pattern, indexed
//! by the values of the coordinates that pattern observes. A [`FullTable`]
//! stores the joint distribution of all study variables together with the full
//! missingness pattern. Cells that never appear in input files are exact zeros.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{CategorySpace, MissPattern};

/// Tables are accepted as normalized when their mass is within this distance of 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("all cells are zero; cannot normalize")]
    AllZeroMass,
    #[error("negative mass {mass} at {cell}")]
    NegativeMass { cell: String, mass: f64 },
    #[error("table shapes or spaces do not match: {0}")]
    SpaceMismatch(String),
    #[error("value {value} out of range for variable {var} (cardinality {card})")]
    ValueOutOfRange { var: usize, value: usize, card: usize },
}

/// Scales `weights` to sum to 1 and returns the original total.
///
/// Zero cells stay exactly zero; negative cells are rejected.
pub(crate) fn normalize_weights(weights: &mut [f64], cell_name: impl Fn(usize) -> String) -> Result<f64, TableError> {
    let mut total = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if w < 0.0 || w.is_nan() {
            return Err(TableError::NegativeMass { cell: cell_name(i), mass: w });
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(TableError::AllZeroMass);
    }
    if (total - 1.0).abs() > f64::EPSILON {
        for w in weights.iter_mut() {
            *w /= total;
        }
    }
    Ok(total)
}

/// Distribution of the observed data: one dense block per missingness pattern,
/// each block indexed by the observed coordinates in variable order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedTable {
    space: CategorySpace,
    blocks: Vec<Vec<f64>>,
}

impl ObservedTable {
    /// Length of the dense block for `pattern`: product of observed cardinalities.
    pub fn block_len(space: &CategorySpace, pattern: MissPattern) -> usize {
        pattern.observed_vars().iter().map(|&j| space.card(j)).product()
    }

    /// Rank of `obs_values` (one entry per observed coordinate, variable order)
    /// inside the block for `pattern`.
    pub fn obs_rank(space: &CategorySpace, pattern: MissPattern, obs_values: &[usize]) -> usize {
        let vars = pattern.observed_vars();
        debug_assert_eq!(vars.len(), obs_values.len());
        let mut rank = 0;
        for (&j, &v) in vars.iter().zip(obs_values) {
            debug_assert!(v < space.card(j));
            rank = rank * space.card(j) + v;
        }
        rank
    }

    /// Observed values at a block rank, in variable order.
    pub fn obs_values_at(space: &CategorySpace, pattern: MissPattern, mut rank: usize) -> Vec<usize> {
        let vars = pattern.observed_vars();
        let mut values = vec![0; vars.len()];
        for (slot, &j) in vars.iter().enumerate().rev() {
            values[slot] = rank % space.card(j);
            rank /= space.card(j);
        }
        values
    }

    /// Builds a table from raw nonnegative per-pattern weight blocks and normalizes.
    pub fn from_pattern_blocks(space: CategorySpace, blocks: Vec<Vec<f64>>) -> Result<Self, TableError> {
        if blocks.len() != space.pattern_cells() {
            return Err(TableError::SpaceMismatch(format!(
                "expected {} pattern blocks, got {}",
                space.pattern_cells(),
                blocks.len()
            )));
        }
        for (rank, block) in blocks.iter().enumerate() {
            let pattern = MissPattern::new(rank, space.num_vars());
            let expect = Self::block_len(&space, pattern);
            if block.len() != expect {
                return Err(TableError::SpaceMismatch(format!(
                    "pattern {pattern} block has {} cells, expected {expect}",
                    block.len()
                )));
            }
        }
        let mut table = Self { space, blocks };
        table.normalize()?;
        Ok(table)
    }

    /// Builds a table by evaluating `weight` on every cell, then normalizing.
    pub fn from_fn(
        space: CategorySpace,
        mut weight: impl FnMut(MissPattern, &[usize]) -> f64,
    ) -> Result<Self, TableError> {
        let mut blocks = Vec::with_capacity(space.pattern_cells());
        for pattern in MissPattern::all(space.num_vars()) {
            let len = Self::block_len(&space, pattern);
            let mut block = Vec::with_capacity(len);
            for rank in 0..len {
                let values = Self::obs_values_at(&space, pattern, rank);
                block.push(weight(pattern, &values));
            }
            blocks.push(block);
        }
        Self::from_pattern_blocks(space, blocks)
    }

    /// Rescales all cells to total mass 1; returns the pre-normalization total.
    pub fn normalize(&mut self) -> Result<f64, TableError> {
        let space = self.space.clone();
        let mut flat: Vec<f64> = self.blocks.iter().flatten().copied().collect();
        let total = normalize_weights(&mut flat, |i| Self::flat_cell_name(&space, i))?;
        let mut it = flat.into_iter();
        for block in &mut self.blocks {
            for w in block.iter_mut() {
                *w = it.next().unwrap();
            }
        }
        Ok(total)
    }

    fn flat_cell_name(space: &CategorySpace, mut flat: usize) -> String {
        for pattern in MissPattern::all(space.num_vars()) {
            let len = Self::block_len(space, pattern);
            if flat < len {
                let values = Self::obs_values_at(space, pattern, flat);
                return format!("pattern {pattern} values {values:?}");
            }
            flat -= len;
        }
        format!("cell {flat}")
    }

    pub fn space(&self) -> &CategorySpace {
        &self.space
    }

    /// Mass of the cell identified by `pattern` and its observed values.
    pub fn mass(&self, pattern: MissPattern, obs_values: &[usize]) -> f64 {
        self.blocks[pattern.rank()][Self::obs_rank(&self.space, pattern, obs_values)]
    }

    pub fn set_mass(&mut self, pattern: MissPattern, obs_values: &[usize], mass: f64) {
        self.blocks[pattern.rank()][Self::obs_rank(&self.space, pattern, obs_values)] = mass;
    }

    /// Total mass carried by one missingness pattern.
    pub fn pattern_mass(&self, pattern: MissPattern) -> f64 {
        self.blocks[pattern.rank()].iter().sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.blocks.iter().flatten().sum()
    }

    /// Iterates `(pattern, observed values, mass)` over every cell.
    pub fn iter_cells(&self) -> impl Iterator<Item = (MissPattern, Vec<usize>, f64)> + '_ {
        MissPattern::all(self.space.num_vars()).flat_map(move |pattern| {
            self.blocks[pattern.rank()].iter().enumerate().map(move |(rank, &mass)| {
                (pattern, Self::obs_values_at(&self.space, pattern, rank), mass)
            })
        })
    }
}

/// Joint distribution of all study variables and the full missingness pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullTable {
    space: CategorySpace,
    /// Row-major over value configurations, then pattern rank.
    data: Vec<f64>,
}

impl FullTable {
    pub fn new_zero(space: CategorySpace) -> Self {
        let len = space.value_cells() * space.pattern_cells();
        Self { space, data: vec![0.0; len] }
    }

    /// Builds a table by evaluating `weight` on every cell, then normalizing.
    pub fn from_fn(
        space: CategorySpace,
        mut weight: impl FnMut(&[usize], MissPattern) -> f64,
    ) -> Result<Self, TableError> {
        let mut table = Self::new_zero(space);
        for vrank in 0..table.space.value_cells() {
            let values = table.space.value_at(vrank);
            for pattern in MissPattern::all(table.space.num_vars()) {
                table.data[vrank * table.space.pattern_cells() + pattern.rank()] =
                    weight(&values, pattern);
            }
        }
        table.normalize()?;
        Ok(table)
    }

    fn idx(&self, values: &[usize], pattern: MissPattern) -> usize {
        self.space.value_rank(values) * self.space.pattern_cells() + pattern.rank()
    }

    pub fn space(&self) -> &CategorySpace {
        &self.space
    }

    pub fn prob(&self, values: &[usize], pattern: MissPattern) -> f64 {
        self.data[self.idx(values, pattern)]
    }

    pub fn set_prob(&mut self, values: &[usize], pattern: MissPattern, mass: f64) {
        let idx = self.idx(values, pattern);
        self.data[idx] = mass;
    }

    pub fn add_mass(&mut self, values: &[usize], pattern: MissPattern, mass: f64) {
        let idx = self.idx(values, pattern);
        self.data[idx] += mass;
    }

    /// Rescales all cells to total mass 1; returns the pre-normalization total.
    pub fn normalize(&mut self) -> Result<f64, TableError> {
        let space = self.space.clone();
        let patterns = space.pattern_cells();
        normalize_weights(&mut self.data, |i| {
            let values = space.value_at(i / patterns);
            let pattern = MissPattern::new(i % patterns, space.num_vars());
            format!("values {values:?} pattern {pattern}")
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Iterates `(values, pattern, mass)` over every cell.
    pub fn iter_cells(&self) -> impl Iterator<Item = (Vec<usize>, MissPattern, f64)> + '_ {
        let patterns = self.space.pattern_cells();
        self.data.iter().enumerate().map(move |(i, &mass)| {
            (
                self.space.value_at(i / patterns),
                MissPattern::new(i % patterns, self.space.num_vars()),
                mass,
            )
        })
    }

    /// Sums out the missingness pattern, leaving the study-variable marginal.
    pub fn study_marginal(&self) -> StudyTable {
        let mut data = vec![0.0; self.space.value_cells()];
        let patterns = self.space.pattern_cells();
        for (i, &mass) in self.data.iter().enumerate() {
            data[i / patterns] += mass;
        }
        StudyTable { space: self.space.clone(), data }
    }

    /// Relabels variables so that new variable `i` is old variable `order[i]`.
    ///
    /// `order` must be a permutation of `0..p`; mass moves with its cell.
    pub fn apply_order(&self, order: &[usize]) -> Result<FullTable, TableError> {
        check_permutation(order, self.space.num_vars())?;
        let cards: Vec<usize> = order.iter().map(|&j| self.space.card(j)).collect();
        let space = CategorySpace::new(cards).expect("permuted space is valid");
        let mut out = FullTable::new_zero(space);
        for (values, pattern, mass) in self.iter_cells() {
            if mass == 0.0 {
                continue;
            }
            let new_values: Vec<usize> = order.iter().map(|&j| values[j]).collect();
            let flags: Vec<bool> = order.iter().map(|&j| pattern.is_missing(j)).collect();
            out.add_mass(&new_values, MissPattern::from_flags(&flags), mass);
        }
        Ok(out)
    }
}

/// Checks that `order` is a permutation of `0..p`.
pub(crate) fn check_permutation(order: &[usize], p: usize) -> Result<(), TableError> {
    let mut seen = vec![false; p];
    if order.len() != p {
        return Err(TableError::SpaceMismatch(format!(
            "permutation has {} entries for {p} variables",
            order.len()
        )));
    }
    for &j in order {
        if j >= p || seen[j] {
            return Err(TableError::SpaceMismatch(format!(
                "order {order:?} is not a permutation of 0..{p}"
            )));
        }
        seen[j] = true;
    }
    Ok(())
}

/// Computes the observed-data distribution implied by a full-data distribution:
/// for each pattern, the missing coordinates are summed out.
pub fn observed_from_full(full: &FullTable) -> ObservedTable {
    let space = full.space().clone();
    let mut blocks: Vec<Vec<f64>> = MissPattern::all(space.num_vars())
        .map(|pattern| vec![0.0; ObservedTable::block_len(&space, pattern)])
        .collect();
    for (values, pattern, mass) in full.iter_cells() {
        if mass == 0.0 {
            continue;
        }
        let obs: Vec<usize> =
            pattern.observed_vars().iter().map(|&j| values[j]).collect();
        blocks[pattern.rank()][ObservedTable::obs_rank(&space, pattern, &obs)] += mass;
    }
    ObservedTable { space, blocks }
}

/// Marginal distribution of the study variables alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    space: CategorySpace,
    data: Vec<f64>,
}

impl StudyTable {
    pub fn from_weights(space: CategorySpace, mut data: Vec<f64>) -> Result<Self, TableError> {
        if data.len() != space.value_cells() {
            return Err(TableError::SpaceMismatch(format!(
                "study table has {} cells, expected {}",
                data.len(),
                space.value_cells()
            )));
        }
        let sp = space.clone();
        normalize_weights(&mut data, |i| format!("values {:?}", sp.value_at(i)))?;
        Ok(Self { space, data })
    }

    pub fn space(&self) -> &CategorySpace {
        &self.space
    }

    pub fn prob(&self, values: &[usize]) -> f64 {
        self.data[self.space.value_rank(values)]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Probability of the event that each listed variable takes the listed
    /// category; an empty constraint list gives total mass 1.
    pub fn event_prob(&self, constraints: &[(usize, usize)]) -> f64 {
        let mut total = 0.0;
        'cells: for (rank, &mass) in self.data.iter().enumerate() {
            let values = self.space.value_at(rank);
            for &(var, cat) in constraints {
                if values[var] != cat {
                    continue 'cells;
                }
            }
            total += mass;
        }
        total
    }

    /// Relabels variables so that new variable `i` is old variable `order[i]`.
    pub fn apply_order(&self, order: &[usize]) -> Result<StudyTable, TableError> {
        check_permutation(order, self.space.num_vars())?;
        let cards: Vec<usize> = order.iter().map(|&j| self.space.card(j)).collect();
        let space = CategorySpace::new(cards).expect("permuted space is valid");
        let mut data = vec![0.0; space.value_cells()];
        for (rank, &mass) in self.data.iter().enumerate() {
            let values = self.space.value_at(rank);
            let new_values: Vec<usize> = order.iter().map(|&j| values[j]).collect();
            data[space.value_rank(&new_values)] = mass;
        }
        Ok(StudyTable { space, data })
    }
}
