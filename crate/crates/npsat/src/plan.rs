//! Identification plans: how the variables are blocked, which indicators are
//! carried forward, and which identifying assumption closes each block.
//!
//! A plan is validated before it runs. The one structural rule for carried
//! indicator sets: the set carried out of block `k` may only contain variables
//! from block `k` itself or from the set carried into block `k`.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::space::CategorySpace;
use crate::table::check_permutation;

/// What to do when an identification step needs a conditional that the data
/// give zero mass: refuse loudly, or substitute a uniform conditional and flag
/// the cell in the result metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ZeroCellPolicy {
    #[default]
    Error,
    UniformFill,
}

/// The identifying assumption that closes one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssumptionKind {
    /// Within the conditioning context, the block's missing coordinates are
    /// distributed like the fully observed cases of the block.
    ConditionalMar,
    /// Itemwise conditionally independent nonresponse for a two-variable block.
    IcinPair,
    /// Complete-case missing-value restriction: identical completion rule to
    /// `ConditionalMar` under this crate's donor convention, kept as a distinct
    /// kind because it is requested by name.
    Ccmv,
}

impl AssumptionKind {
    pub fn name(&self) -> &'static str {
        match self {
            AssumptionKind::ConditionalMar => "conditional-mar",
            AssumptionKind::IcinPair => "icin-pair",
            AssumptionKind::Ccmv => "ccmv",
        }
    }
}

/// Contiguous blocks of variables, stored as cumulative upper boundaries
/// `t_1 < t_2 < ... < t_K = p` (block `k` covers variables `t_{k-1}..t_k`,
/// 0-based half-open).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    boundaries: Vec<usize>,
}

impl BlockPartition {
    pub fn new(boundaries: Vec<usize>) -> Self {
        Self { boundaries }
    }

    /// One block per variable.
    pub fn unit_blocks(num_vars: usize) -> Self {
        Self { boundaries: (1..=num_vars).collect() }
    }

    /// A single block covering every variable.
    pub fn single_block(num_vars: usize) -> Self {
        Self { boundaries: vec![num_vars] }
    }

    pub fn num_blocks(&self) -> usize {
        self.boundaries.len()
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Variables of block `k` (1-based block index), as a 0-based range.
    pub fn block_vars(&self, k: usize) -> std::ops::Range<usize> {
        let lo = if k == 1 { 0 } else { self.boundaries[k - 2] };
        lo..self.boundaries[k - 1]
    }

    pub fn block_len(&self, k: usize) -> usize {
        self.block_vars(k).len()
    }
}

/// Indicator sets carried past each boundary: `sets[k-1]` holds the variables
/// whose missingness indicators stay in the state after block `k` closes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CarrySets {
    sets: Vec<BTreeSet<usize>>,
}

impl CarrySets {
    pub fn new(sets: Vec<BTreeSet<usize>>) -> Self {
        Self { sets }
    }

    /// No indicators carried anywhere (`K - 1` empty sets).
    pub fn none(num_blocks: usize) -> Self {
        Self { sets: vec![BTreeSet::new(); num_blocks.saturating_sub(1)] }
    }

    pub fn sets(&self) -> &[BTreeSet<usize>] {
        &self.sets
    }

    /// Indicators carried out of block `k` (empty for `k = 0` and for the last block).
    pub fn carried_after(&self, k: usize) -> BTreeSet<usize> {
        if k == 0 || k > self.sets.len() {
            BTreeSet::new()
        } else {
            self.sets[k - 1].clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanViolation {
    BoundariesNotIncreasing { boundaries: Vec<usize> },
    LastBoundaryNotNumVars { last: usize, num_vars: usize },
    StepCountMismatch { steps: usize, blocks: usize },
    CarryCountMismatch { sets: usize, expected: usize },
    /// Carried set after block `k` contains a variable outside block `k` and
    /// the set carried into block `k`.
    CarryNotContained { after_block: usize, var: usize },
    PairBlockSizeMismatch { block: usize, size: usize },
    OrderNotPermutation { order: Vec<usize> },
}

impl std::fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlanViolation::BoundariesNotIncreasing { boundaries } => {
                write!(f, "block boundaries {boundaries:?} are not strictly increasing from at least 1")
            }
            PlanViolation::LastBoundaryNotNumVars { last, num_vars } => {
                write!(f, "last block boundary is {last}, but the space has {num_vars} variables")
            }
            PlanViolation::StepCountMismatch { steps, blocks } => {
                write!(f, "{steps} assumption steps declared for {blocks} blocks")
            }
            PlanViolation::CarryCountMismatch { sets, expected } => {
                write!(f, "{sets} carried indicator sets declared, expected {expected} (one per interior boundary)")
            }
            PlanViolation::CarryNotContained { after_block, var } => {
                write!(
                    f,
                    "indicator set carried after block {after_block} contains variable {} \
                     which is neither in block {after_block} nor carried into it",
                    var + 1
                )
            }
            PlanViolation::PairBlockSizeMismatch { block, size } => {
                write!(f, "block {block} uses the pairwise itemwise-independence assumption but has {size} variables (needs exactly 2)")
            }
            PlanViolation::OrderNotPermutation { order } => {
                write!(f, "variable order {order:?} is not a permutation")
            }
        }
    }
}

/// Complete specification of one identification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentPlan {
    /// Space of the table the plan applies to, in the table's original order.
    pub space: CategorySpace,
    /// `order[i]` = original index of the variable processed at position `i`.
    pub order: Vec<usize>,
    /// Blocking of the variables in processing order.
    pub partition: BlockPartition,
    /// Indicator sets carried across interior boundaries (processing-order indices).
    pub carry: CarrySets,
    /// One assumption per block.
    pub steps: Vec<AssumptionKind>,
    pub zero_cell_policy: ZeroCellPolicy,
    /// Record the intermediate stage after each block.
    pub snapshots: bool,
}

impl IdentPlan {
    pub fn new(
        space: CategorySpace,
        order: Vec<usize>,
        partition: BlockPartition,
        carry: CarrySets,
        steps: Vec<AssumptionKind>,
    ) -> Self {
        Self {
            space,
            order,
            partition,
            carry,
            steps,
            zero_cell_policy: ZeroCellPolicy::default(),
            snapshots: false,
        }
    }

    pub fn with_policy(mut self, policy: ZeroCellPolicy) -> Self {
        self.zero_cell_policy = policy;
        self
    }

    pub fn with_snapshots(mut self, snapshots: bool) -> Self {
        self.snapshots = snapshots;
        self
    }

    /// Checks every structural rule; an empty list means the plan may run.
    pub fn validate(&self) -> Vec<PlanViolation> {
        let mut violations = Vec::new();
        let p = self.space.num_vars();
        if check_permutation(&self.order, p).is_err() {
            violations.push(PlanViolation::OrderNotPermutation { order: self.order.clone() });
        }
        let bounds = self.partition.boundaries();
        let mut increasing = !bounds.is_empty() && bounds[0] >= 1;
        for w in bounds.windows(2) {
            increasing &= w[0] < w[1];
        }
        if !increasing {
            violations.push(PlanViolation::BoundariesNotIncreasing {
                boundaries: bounds.to_vec(),
            });
            return violations;
        }
        if *bounds.last().unwrap() != p {
            violations.push(PlanViolation::LastBoundaryNotNumVars {
                last: *bounds.last().unwrap(),
                num_vars: p,
            });
        }
        let blocks = self.partition.num_blocks();
        if self.steps.len() != blocks {
            violations.push(PlanViolation::StepCountMismatch {
                steps: self.steps.len(),
                blocks,
            });
        }
        if self.carry.sets().len() != blocks - 1 {
            violations.push(PlanViolation::CarryCountMismatch {
                sets: self.carry.sets().len(),
                expected: blocks - 1,
            });
        }
        for (k, set) in self.carry.sets().iter().enumerate().map(|(i, s)| (i + 1, s)) {
            if k > blocks - 1 {
                break;
            }
            let block = self.partition.block_vars(k);
            let carried_in = self.carry.carried_after(k - 1);
            for &var in set {
                if !block.contains(&var) && !carried_in.contains(&var) {
                    violations.push(PlanViolation::CarryNotContained { after_block: k, var });
                }
            }
        }
        for (k, step) in self.steps.iter().enumerate().map(|(i, s)| (i + 1, s)) {
            if k > blocks {
                break;
            }
            if *step == AssumptionKind::IcinPair && self.partition.block_len(k) != 2 {
                violations.push(PlanViolation::PairBlockSizeMismatch {
                    block: k,
                    size: self.partition.block_len(k),
                });
            }
        }
        violations
    }

    /// Group permutation missingness: any blocking, nothing carried, every
    /// block closed by the conditional-MAR assumption. With a single block this
    /// is the plain MAR plan.
    pub fn group_permutation(space: CategorySpace, partition: BlockPartition) -> Self {
        let p = space.num_vars();
        let blocks = partition.num_blocks();
        Self::new(
            space,
            (0..p).collect(),
            partition,
            CarrySets::none(blocks),
            vec![AssumptionKind::ConditionalMar; blocks],
        )
    }

    /// Single block closed by the complete-case missing-value restriction.
    pub fn single_block_ccmv(space: CategorySpace) -> Self {
        let p = space.num_vars();
        Self::new(
            space,
            (0..p).collect(),
            BlockPartition::single_block(p),
            CarrySets::none(1),
            vec![AssumptionKind::Ccmv],
        )
    }

    /// Two unit blocks where the first indicator is carried into the second
    /// step, so the second variable's identification may depend on whether the
    /// first was observed.
    pub fn two_var_carry(space: CategorySpace) -> Self {
        Self::new(
            space,
            vec![0, 1],
            BlockPartition::unit_blocks(2),
            CarrySets::new(vec![BTreeSet::from([0])]),
            vec![AssumptionKind::ConditionalMar, AssumptionKind::ConditionalMar],
        )
    }

    /// Two unit blocks with nothing carried: the permutation-missingness plan
    /// for two variables.
    pub fn two_var_permutation(space: CategorySpace) -> Self {
        Self::group_permutation(space, BlockPartition::unit_blocks(2))
    }

    /// One block holding a single pair, closed by itemwise conditionally
    /// independent nonresponse.
    pub fn single_block_icin_pair(space: CategorySpace) -> Self {
        Self::new(
            space,
            vec![0, 1],
            BlockPartition::single_block(2),
            CarrySets::none(1),
            vec![AssumptionKind::IcinPair],
        )
    }

    /// Partially ignorable plan for three variables: conditional MAR on one
    /// leading variable, itemwise conditionally independent nonresponse on the
    /// remaining pair. `ignorable_var` is a 0-based index into the original order.
    pub fn partially_ignorable_icin(
        space: CategorySpace,
        ignorable_var: usize,
    ) -> Result<Self, String> {
        let p = space.num_vars();
        if p != 3 {
            return Err(format!(
                "the partially ignorable pairwise plan needs exactly 3 variables, got {p}"
            ));
        }
        if ignorable_var >= p {
            return Err(format!("variable index {ignorable_var} out of range for {p} variables"));
        }
        let mut order = vec![ignorable_var];
        order.extend((0..p).filter(|&j| j != ignorable_var));
        Ok(Self::new(
            space,
            order,
            BlockPartition::new(vec![1, 3]),
            CarrySets::none(2),
            vec![AssumptionKind::ConditionalMar, AssumptionKind::IcinPair],
        ))
    }
}

/// Draws a uniformly structured valid plan: random processing order, random
/// block boundaries, random carried sets obeying containment, and a random
/// admissible assumption per block. Intended for randomized robustness checks.
pub fn random_valid_plan(space: &CategorySpace, rng: &mut impl Rng) -> IdentPlan {
    let p = space.num_vars();
    let mut order: Vec<usize> = (0..p).collect();
    for i in (1..p).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut boundaries = Vec::new();
    for t in 1..p {
        if rng.gen_bool(0.5) {
            boundaries.push(t);
        }
    }
    boundaries.push(p);
    let partition = BlockPartition::new(boundaries);
    let blocks = partition.num_blocks();

    let mut carry_sets = Vec::new();
    let mut carried_in: BTreeSet<usize> = BTreeSet::new();
    let mut steps = Vec::new();
    for k in 1..=blocks {
        let block = partition.block_vars(k);
        steps.push(if block.len() == 2 && rng.gen_bool(0.4) {
            AssumptionKind::IcinPair
        } else if rng.gen_bool(0.5) {
            AssumptionKind::ConditionalMar
        } else {
            AssumptionKind::Ccmv
        });
        if k < blocks {
            let mut set = BTreeSet::new();
            for var in block.chain(carried_in.iter().copied()) {
                if rng.gen_bool(0.4) {
                    set.insert(var);
                }
            }
            carried_in = set.clone();
            carry_sets.push(set);
        }
    }
    IdentPlan::new(space.clone(), order, partition, CarrySets::new(carry_sets), steps)
}
