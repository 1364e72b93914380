//! Sequential identification of full-data distributions for categorical data
//! with nonignorable missingness.
//!
//! Given the observed-data distribution of `p` categorical study variables —
//! one probability per (missingness pattern, observed values) cell — this
//! crate constructs full-data distributions over values and indicators
//! jointly that are *non-parametrically saturated*: marginalizing the
//! constructed law back over each pattern's missing coordinates reproduces
//! the observed-data law exactly, so the identifying assumptions are never
//! contradicted by the data.
//!
//! The construction is block-sequential: variables are processed in a chosen
//! order, partitioned into blocks, and each block is closed by an identifying
//! assumption (conditional MAR, complete-case pattern mixture, or itemwise
//! conditionally independent nonresponse on a pair). Indicators not carried
//! into later blocks are factored out as mechanism conditionals and the final
//! full-data law is the product of the last stage with those factors.
//! Different orders, partitions, carries, and assumptions yield genuinely
//! different full-data laws — all consistent with the same observed data.
//!
//! On top of the engine sit: closed-form constructions for the two canonical
//! two-variable strategies (independent test oracles), a saturation checker,
//! and a Dirichlet-multinomial sensitivity pipeline that pushes posterior
//! draws of the observed-data law through a suite of mechanisms and compares
//! the resulting estimand distributions.
//!
//! Entry points: [`table::ObservedTable`] for the input law,
//! [`plan::IdentPlan`] for the strategy, [`engine::run_sequential`] to
//! identify, [`verify::check_nps`] to audit, and
//! [`sensitivity::run_suite`] for posterior comparisons.

pub mod assumptions;
pub mod cli;
pub mod closed_form;
pub mod engine;
pub mod fileio;
pub mod plan;
pub mod sensitivity;
pub mod space;
pub mod stage;
pub mod table;
pub mod verify;

#[cfg(test)]
pub(crate) mod testutil;

pub use engine::{run_sequential, IdentResult};
pub use plan::{AssumptionKind, BlockPartition, CarrySets, IdentPlan, ZeroCellPolicy};
pub use space::{CategorySpace, MissPattern};
pub use table::{observed_from_full, FullTable, ObservedTable, StudyTable};
pub use verify::{check_nps, NpsReport};
