//! Variable space and missingness-pattern primitives shared by every table type.
//!
//! A [`CategorySpace`] fixes the number of study variables and the cardinality of
//! each; a [`MissPattern`] records which coordinates a record is missing. All
//! indices are 0-based internally; file formats and `Display` use 1-based
//! categories and `*` for a missing coordinate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard cap on `prod(cards) * 2^p` so dense full tables stay addressable.
pub const MAX_FULL_CELLS: usize = 1 << 28;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpaceError {
    #[error("a space needs at least one variable")]
    NoVariables,
    #[error("variable {var} has cardinality 0; every variable needs at least one category")]
    EmptyVariable { var: usize },
    #[error("full table would need more than {MAX_FULL_CELLS} cells")]
    TooLarge,
}

/// Cardinalities of the study variables `X_1..X_p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySpace {
    cards: Vec<usize>,
}

impl CategorySpace {
    /// Builds a space, rejecting empty variable lists, zero cardinalities and
    /// sizes whose dense full table would not fit in memory.
    pub fn new(cards: Vec<usize>) -> Result<Self, SpaceError> {
        if cards.is_empty() {
            return Err(SpaceError::NoVariables);
        }
        if let Some(var) = cards.iter().position(|&c| c == 0) {
            return Err(SpaceError::EmptyVariable { var });
        }
        let mut cells: usize = 1;
        for &c in &cards {
            cells = cells.checked_mul(c).ok_or(SpaceError::TooLarge)?;
        }
        for _ in 0..cards.len() {
            cells = cells.checked_mul(2).ok_or(SpaceError::TooLarge)?;
        }
        if cells > MAX_FULL_CELLS {
            return Err(SpaceError::TooLarge);
        }
        Ok(Self { cards })
    }

    pub fn num_vars(&self) -> usize {
        self.cards.len()
    }

    pub fn card(&self, var: usize) -> usize {
        self.cards[var]
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    /// Number of joint value configurations `prod(cards)`.
    pub fn value_cells(&self) -> usize {
        self.cards.iter().product()
    }

    /// Number of missingness patterns `2^p`.
    pub fn pattern_cells(&self) -> usize {
        1 << self.num_vars()
    }

    /// Number of materialized configurations `prod(cards + 1)`; one extra slot
    /// per variable for "missing".
    pub fn materialized_cells(&self) -> usize {
        self.cards.iter().map(|c| c + 1).product()
    }

    /// Variables with a single category carry no information; callers may want
    /// to warn about them.
    pub fn degenerate_vars(&self) -> Vec<usize> {
        (0..self.num_vars()).filter(|&j| self.cards[j] == 1).collect()
    }

    /// Row-major rank of a joint value configuration (variable 0 slowest).
    pub fn value_rank(&self, values: &[usize]) -> usize {
        debug_assert_eq!(values.len(), self.num_vars());
        let mut rank = 0;
        for (j, &v) in values.iter().enumerate() {
            debug_assert!(v < self.cards[j]);
            rank = rank * self.cards[j] + v;
        }
        rank
    }

    /// Inverse of [`value_rank`](Self::value_rank).
    pub fn value_at(&self, mut rank: usize) -> Vec<usize> {
        let mut values = vec![0; self.num_vars()];
        for j in (0..self.num_vars()).rev() {
            values[j] = rank % self.cards[j];
            rank /= self.cards[j];
        }
        values
    }

    /// Iterates every joint value configuration in rank order.
    pub fn values_iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.value_cells()).map(|r| self.value_at(r))
    }
}

/// A missingness pattern over `p` variables; bit `j` set means `X_j` is missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MissPattern {
    mask: usize,
    num_vars: usize,
}

impl MissPattern {
    pub fn new(mask: usize, num_vars: usize) -> Self {
        debug_assert!(mask < (1 << num_vars));
        Self { mask, num_vars }
    }

    pub fn all_observed(num_vars: usize) -> Self {
        Self { mask: 0, num_vars }
    }

    pub fn all_missing(num_vars: usize) -> Self {
        Self { mask: (1 << num_vars) - 1, num_vars }
    }

    /// Builds a pattern from per-variable indicators (`true` = missing).
    pub fn from_flags(flags: &[bool]) -> Self {
        let mask = flags
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &miss)| acc | ((miss as usize) << j));
        Self { mask, num_vars: flags.len() }
    }

    /// All `2^p` patterns in mask order.
    pub fn all(num_vars: usize) -> impl Iterator<Item = MissPattern> {
        (0..(1usize << num_vars)).map(move |mask| MissPattern { mask, num_vars })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// The pattern's rank in mask order; doubles as a dense index.
    pub fn rank(&self) -> usize {
        self.mask
    }

    pub fn is_missing(&self, var: usize) -> bool {
        debug_assert!(var < self.num_vars);
        self.mask >> var & 1 == 1
    }

    pub fn num_missing(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn observed_vars(&self) -> Vec<usize> {
        (0..self.num_vars).filter(|&j| !self.is_missing(j)).collect()
    }

    pub fn missing_vars(&self) -> Vec<usize> {
        (0..self.num_vars).filter(|&j| self.is_missing(j)).collect()
    }

    /// Parses a `p`-character string over `{0,1}`; `1` marks a missing coordinate.
    pub fn parse(s: &str) -> Option<Self> {
        let mut mask = 0;
        let mut num_vars = 0;
        for ch in s.chars() {
            match ch {
                '0' => {}
                '1' => mask |= 1 << num_vars,
                _ => return None,
            }
            num_vars += 1;
        }
        if num_vars == 0 || num_vars > usize::BITS as usize - 1 {
            return None;
        }
        Some(Self { mask, num_vars })
    }
}

impl std::fmt::Display for MissPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for j in 0..self.num_vars {
            write!(f, "{}", if self.is_missing(j) { '1' } else { '0' })?;
        }
        Ok(())
    }
}
