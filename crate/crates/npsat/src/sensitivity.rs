//! Bayesian sensitivity analysis across missingness mechanisms.
//!
//! The observed-data law is given a saturated Dirichlet-multinomial model:
//! counts per observed cell plus a Dirichlet prior yield posterior draws of
//! the observed-data distribution. Every draw is pushed through each
//! identification strategy in a suite, and the resulting estimand draws are
//! summarized per mechanism. Draws are paired — one underlying observed-data
//! draw feeds all mechanisms — so differences between mechanisms reflect the
//! assumptions alone, not Monte-Carlo noise.

use std::fmt;
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;
use thiserror::Error;

use crate::engine::{run_sequential, EngineError};
use crate::plan::{BlockPartition, IdentPlan};
use crate::space::{CategorySpace, MissPattern};
use crate::table::{ObservedTable, TableError};
use crate::verify::check_nps;

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error("count table is empty: all cells are zero")]
    EmptyCounts,
    #[error("prior concentration must be positive, cell {cell} has {value}")]
    NonPositiveConcentration { cell: usize, value: f64 },
    #[error("prior has {got} concentrations but the space has {expected} observed cells")]
    PriorLengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Observed-data cell counts, in the same (pattern, observed-values) layout
/// as `ObservedTable`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    space: CategorySpace,
    blocks: Vec<Vec<u64>>,
}

impl CountTable {
    pub fn from_pattern_blocks(
        space: CategorySpace,
        blocks: Vec<Vec<u64>>,
    ) -> Result<Self, SensitivityError> {
        let expected: Vec<usize> = MissPattern::all(space.num_vars())
            .map(|pattern| ObservedTable::block_len(&space, pattern))
            .collect();
        if blocks.len() != expected.len()
            || blocks.iter().zip(&expected).any(|(b, &e)| b.len() != e)
        {
            return Err(SensitivityError::Table(TableError::SpaceMismatch(format!(
                "expected pattern blocks of lengths {expected:?}, got {:?}",
                blocks.iter().map(Vec::len).collect::<Vec<_>>()
            ))));
        }
        if blocks.iter().flatten().all(|&n| n == 0) {
            return Err(SensitivityError::EmptyCounts);
        }
        Ok(CountTable { space, blocks })
    }

    pub fn space(&self) -> &CategorySpace {
        &self.space
    }

    pub fn count(&self, pattern: MissPattern, obs_values: &[usize]) -> u64 {
        self.blocks[pattern.rank()][ObservedTable::obs_rank(&self.space, pattern, obs_values)]
    }

    pub fn total(&self) -> u64 {
        self.blocks.iter().flatten().sum()
    }

    /// Number of observed-data cells across all patterns.
    pub fn num_cells(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Counts flattened in canonical order: pattern rank, then cell rank.
    fn flat(&self) -> impl Iterator<Item = u64> + '_ {
        self.blocks.iter().flatten().copied()
    }

    /// Maximum-likelihood observed-data distribution (counts normalized).
    pub fn to_observed(&self) -> Result<ObservedTable, TableError> {
        ObservedTable::from_pattern_blocks(
            self.space.clone(),
            self.blocks
                .iter()
                .map(|b| b.iter().map(|&n| n as f64).collect())
                .collect(),
        )
    }
}

/// Dirichlet prior over the observed-data cells, one concentration per cell
/// in canonical order.
#[derive(Debug, Clone, Serialize)]
pub struct DirichletPrior {
    concentrations: Vec<f64>,
}

impl DirichletPrior {
    pub fn new(concentrations: Vec<f64>) -> Result<Self, SensitivityError> {
        for (cell, &value) in concentrations.iter().enumerate() {
            if value <= 0.0 || value.is_nan() {
                return Err(SensitivityError::NonPositiveConcentration { cell, value });
            }
        }
        Ok(DirichletPrior { concentrations })
    }

    /// The symmetric prior with total concentration 1: every cell gets
    /// 1 / (number of observed cells) — 1/27 for three binary variables.
    pub fn symmetric(space: &CategorySpace) -> Self {
        let cells = space.materialized_cells();
        DirichletPrior { concentrations: vec![1.0 / cells as f64; cells] }
    }

    /// Symmetric prior with the given per-cell concentration.
    pub fn symmetric_with(space: &CategorySpace, alpha: f64) -> Result<Self, SensitivityError> {
        Self::new(vec![alpha; space.materialized_cells()])
    }

    pub fn concentrations(&self) -> &[f64] {
        &self.concentrations
    }
}

/// Unnormalized Dirichlet component draws: one Gamma(shape, 1) variate per
/// concentration, from stream `draw_index` of a generator seeded with `seed`.
/// Draw d is the same whether draws are taken in sequence or in isolation, so
/// reruns with one seed are bit-identical and draws can be parallelized.
pub(crate) fn sample_gamma_weights(
    concentrations: &[f64],
    seed: u64,
    draw_index: u64,
) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(draw_index);
    concentrations
        .iter()
        .map(|&shape| Gamma::new(shape, 1.0).expect("positive shape").sample(&mut rng))
        .collect()
}

/// Packs flat per-cell weights into an observed table over the given space.
fn observed_from_weights(
    space: &CategorySpace,
    weights: &[f64],
) -> Result<ObservedTable, SensitivityError> {
    let mut blocks = Vec::new();
    let mut taken = 0;
    for pattern in MissPattern::all(space.num_vars()) {
        let len = ObservedTable::block_len(space, pattern);
        blocks.push(weights[taken..taken + len].to_vec());
        taken += len;
    }
    Ok(ObservedTable::from_pattern_blocks(space.clone(), blocks)?)
}

/// One draw of the observed-data distribution from the prior alone — the
/// zero-count special case of `sample_posterior`.
pub fn sample_prior(
    space: &CategorySpace,
    prior: &DirichletPrior,
    seed: u64,
    draw_index: u64,
) -> Result<ObservedTable, SensitivityError> {
    if prior.concentrations.len() != space.materialized_cells() {
        return Err(SensitivityError::PriorLengthMismatch {
            expected: space.materialized_cells(),
            got: prior.concentrations.len(),
        });
    }
    let weights = sample_gamma_weights(&prior.concentrations, seed, draw_index);
    observed_from_weights(space, &weights)
}

/// One posterior draw of the observed-data distribution: Dirichlet with
/// concentrations (prior + counts) over every observed cell jointly.
pub fn sample_posterior(
    counts: &CountTable,
    prior: &DirichletPrior,
    seed: u64,
    draw_index: u64,
) -> Result<ObservedTable, SensitivityError> {
    if prior.concentrations.len() != counts.num_cells() {
        return Err(SensitivityError::PriorLengthMismatch {
            expected: counts.num_cells(),
            got: prior.concentrations.len(),
        });
    }
    let concentrations: Vec<f64> = counts
        .flat()
        .zip(&prior.concentrations)
        .map(|(n, alpha)| alpha + n as f64)
        .collect();
    let weights = sample_gamma_weights(&concentrations, seed, draw_index);
    observed_from_weights(&counts.space, &weights)
}

/// How one suite entry identifies the full-data law.
#[derive(Debug, Clone)]
pub enum MechanismSpec {
    /// An explicit plan.
    Plan(IdentPlan),
    /// Everything completed from complete cases in one conditional-MAR block.
    IgnorableMar,
    /// Complete-case pattern-mixture restriction in one block.
    CcmvPmm,
    /// Itemwise conditional independence on a pair (two-variable tables only).
    IcinPair,
    /// One variable's indicator treated as ignorable up front, the remaining
    /// pair closed by itemwise conditional independence (three variables).
    PartiallyIgnorable { ignorable_var: usize },
}

impl MechanismSpec {
    /// Turns the mechanism description into a runnable plan for the given
    /// space, or explains why the mechanism is unavailable there.
    pub fn resolve(&self, space: &CategorySpace) -> Result<IdentPlan, String> {
        let p = space.num_vars();
        match self {
            MechanismSpec::Plan(plan) => {
                if plan.space == *space {
                    Ok(plan.clone())
                } else {
                    Err(format!(
                        "plan expects cardinalities {:?}, table has {:?}",
                        plan.space.cards(),
                        space.cards()
                    ))
                }
            }
            MechanismSpec::IgnorableMar => Ok(IdentPlan::group_permutation(
                space.clone(),
                BlockPartition::single_block(p),
            )),
            MechanismSpec::CcmvPmm => Ok(IdentPlan::single_block_ccmv(space.clone())),
            MechanismSpec::IcinPair => {
                if p == 2 {
                    Ok(IdentPlan::single_block_icin_pair(space.clone()))
                } else {
                    Err(format!(
                        "itemwise conditional independence is implemented for \
                         exactly two variables; this table has {p}"
                    ))
                }
            }
            MechanismSpec::PartiallyIgnorable { ignorable_var } => {
                IdentPlan::partially_ignorable_icin(space.clone(), *ignorable_var)
            }
        }
    }
}

/// A named list of identification strategies to compare.
#[derive(Debug, Clone)]
pub struct MechanismSuite {
    pub entries: Vec<(String, MechanismSpec)>,
}

impl MechanismSuite {
    /// The standard comparison: ignorable completion, its pattern-mixture
    /// twin, the pairwise itemwise-independence mechanism, and one partially
    /// ignorable mechanism per variable. Six entries for three variables.
    pub fn standard(space: &CategorySpace) -> Self {
        let mut entries = vec![
            ("ignorable".to_string(), MechanismSpec::IgnorableMar),
            ("ccmv-pmm".to_string(), MechanismSpec::CcmvPmm),
            ("icin".to_string(), MechanismSpec::IcinPair),
        ];
        for var in 0..space.num_vars() {
            entries.push((
                format!("pim-{}", var + 1),
                MechanismSpec::PartiallyIgnorable { ignorable_var: var },
            ));
        }
        MechanismSuite { entries }
    }
}

/// A probability of the form P(X_a = v, X_b = w, ...) under the identified
/// study-variable marginal.
#[derive(Debug, Clone, Serialize)]
pub struct Estimand {
    pub name: String,
    /// Conjunction of (variable, category) constraints, 0-based.
    pub constraints: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub n_draws: usize,
    pub seed: u64,
    /// Prior over observed cells; the symmetric unit-total prior if absent.
    pub prior: Option<DirichletPrior>,
    /// How many evenly spaced draws get a full saturation check.
    pub nps_spot_checks: usize,
    pub nps_tolerance: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            n_draws: 5000,
            seed: 0,
            prior: None,
            nps_spot_checks: 20,
            nps_tolerance: 1e-10,
        }
    }
}

/// Saturation spot check at one draw for one mechanism.
#[derive(Debug, Clone, Serialize)]
pub struct SpotCheck {
    pub draw: usize,
    pub passed: bool,
    pub max_abs_error: f64,
}

/// Per-mechanism outcome of a suite run.
#[derive(Debug, Clone, Serialize)]
pub struct MechanismRun {
    pub name: String,
    /// Why the mechanism could not run at all, when it could not.
    pub unavailable: Option<String>,
    /// `draws[e][d]` = estimand e at draw d; `None` when the draw failed.
    pub draws: Vec<Vec<Option<f64>>>,
    pub failures: usize,
    pub first_failure: Option<String>,
    pub spot_checks: Vec<SpotCheck>,
}

/// All posterior draws of all estimands under all mechanisms, paired through
/// one stream of observed-data draws.
#[derive(Debug, Clone, Serialize)]
pub struct SensitivityDraws {
    pub mechanisms: Vec<MechanismRun>,
    pub estimand_names: Vec<String>,
    pub n_draws: usize,
    pub seed: u64,
    pub prior: DirichletPrior,
    pub counts_total: u64,
}

/// Runs every mechanism in the suite over a shared stream of posterior draws.
pub fn run_suite(
    counts: &CountTable,
    suite: &MechanismSuite,
    estimands: &[Estimand],
    options: &SuiteOptions,
) -> Result<SensitivityDraws, SensitivityError> {
    let space = counts.space().clone();
    let prior = match &options.prior {
        Some(prior) => {
            if prior.concentrations.len() != counts.num_cells() {
                return Err(SensitivityError::PriorLengthMismatch {
                    expected: counts.num_cells(),
                    got: prior.concentrations.len(),
                });
            }
            prior.clone()
        }
        None => DirichletPrior::symmetric(&space),
    };

    let resolved: Vec<(String, Result<IdentPlan, String>)> = suite
        .entries
        .iter()
        .map(|(name, spec)| (name.clone(), spec.resolve(&space)))
        .collect();

    let spot_draws: Vec<usize> = if options.nps_spot_checks == 0 || options.n_draws == 0 {
        Vec::new()
    } else {
        let n = options.nps_spot_checks.min(options.n_draws);
        let mut picks: Vec<usize> = (0..n).map(|i| i * options.n_draws / n).collect();
        picks.dedup();
        picks
    };

    let mut runs: Vec<MechanismRun> = resolved
        .iter()
        .map(|(name, plan)| MechanismRun {
            name: name.clone(),
            unavailable: plan.as_ref().err().cloned(),
            draws: vec![vec![None; options.n_draws]; estimands.len()],
            failures: 0,
            first_failure: None,
            spot_checks: Vec::new(),
        })
        .collect();

    for draw in 0..options.n_draws {
        let observed = sample_posterior(counts, &prior, options.seed, draw as u64)?;
        let spot = spot_draws.binary_search(&draw).is_ok();
        for (slot, (_, plan)) in resolved.iter().enumerate() {
            let Ok(plan) = plan else { continue };
            match run_sequential(&observed, plan) {
                Ok(result) => {
                    for (e, estimand) in estimands.iter().enumerate() {
                        runs[slot].draws[e][draw] =
                            Some(result.study.event_prob(&estimand.constraints));
                    }
                    if spot {
                        let report = check_nps(&result.full, &observed, options.nps_tolerance)
                            .expect("same space by construction");
                        runs[slot].spot_checks.push(SpotCheck {
                            draw,
                            passed: report.passed,
                            max_abs_error: report.max_abs_error,
                        });
                    }
                }
                Err(err) => {
                    runs[slot].failures += 1;
                    runs[slot]
                        .first_failure
                        .get_or_insert_with(|| describe_engine_error(&err));
                }
            }
        }
    }

    Ok(SensitivityDraws {
        mechanisms: runs,
        estimand_names: estimands.iter().map(|e| e.name.clone()).collect(),
        n_draws: options.n_draws,
        seed: options.seed,
        prior,
        counts_total: counts.total(),
    })
}

fn describe_engine_error(err: &EngineError) -> String {
    err.to_string()
}

/// Summary statistics of one (mechanism, estimand) draw vector.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub mechanism: String,
    pub estimand: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub q025: Option<f64>,
    pub median: Option<f64>,
    pub q975: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryReport {
    pub rows: Vec<SummaryRow>,
}

/// Empirical quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn summarize(draws: &SensitivityDraws) -> SummaryReport {
    let mut rows = Vec::new();
    for run in &draws.mechanisms {
        for (e, estimand) in draws.estimand_names.iter().enumerate() {
            let mut ok: Vec<f64> = run.draws[e].iter().flatten().copied().collect();
            ok.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
            let n_ok = ok.len();
            let n_failed = draws.n_draws - n_ok;
            let (mean, sd, q025, median, q975) = if n_ok == 0 {
                (None, None, None, None, None)
            } else {
                let mean = ok.iter().sum::<f64>() / n_ok as f64;
                let sd = if n_ok > 1 {
                    let ss: f64 = ok.iter().map(|v| (v - mean).powi(2)).sum();
                    Some((ss / (n_ok - 1) as f64).sqrt())
                } else {
                    None
                };
                (
                    Some(mean),
                    sd,
                    Some(quantile(&ok, 0.025)),
                    Some(quantile(&ok, 0.5)),
                    Some(quantile(&ok, 0.975)),
                )
            };
            rows.push(SummaryRow {
                mechanism: run.name.clone(),
                estimand: estimand.clone(),
                n_ok,
                n_failed,
                mean,
                sd,
                q025,
                median,
                q975,
            });
        }
    }
    SummaryReport { rows }
}

impl fmt::Display for SummaryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fmt_opt = |v: &Option<f64>| match v {
            Some(v) => format!("{v:.6}"),
            None => "-".to_string(),
        };
        writeln!(
            f,
            "{:<14} {:<20} {:>6} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "mechanism", "estimand", "ok", "failed", "mean", "sd", "q2.5%", "median", "q97.5%"
        )?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<14} {:<20} {:>6} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10}",
                row.mechanism,
                row.estimand,
                row.n_ok,
                row.n_failed,
                fmt_opt(&row.mean),
                fmt_opt(&row.sd),
                fmt_opt(&row.q025),
                fmt_opt(&row.median),
                fmt_opt(&row.q975),
            )?;
        }
        Ok(())
    }
}

/// Writes one tab-separated record per successful draw:
/// `mechanism  estimand  draw  value`, full double precision.
pub fn write_plot_records<W: Write>(draws: &SensitivityDraws, mut out: W) -> io::Result<()> {
    writeln!(out, "mechanism\testimand\tdraw\tvalue")?;
    for run in &draws.mechanisms {
        for (e, estimand) in draws.estimand_names.iter().enumerate() {
            for (d, value) in run.draws[e].iter().enumerate() {
                if let Some(v) = value {
                    writeln!(out, "{}\t{}\t{}\t{:.16e}", run.name, estimand, d, v)?;
                }
            }
        }
    }
    Ok(())
}
