//! File formats: the cell-record text format for tables, and TOML for
//! identification plans and sensitivity suites.
//!
//! Table files carry a three-line header — variable count, cardinalities,
//! and the kind of numbers that follow — then one record per non-zero cell:
//!
//! ```text
//! # observed-data distribution (or counts)
//! vars 2
//! cards 2 3
//! kind probabilities
//! 00 1,2 1.5000000000000000e-1
//! 01 2,* 8.3300000000000000e-2
//! 11 *,* 1.0000000000000000e-1
//! ```
//!
//! The pattern string has one character per variable ('1' = missing) and the
//! value list one entry per variable, with `*` exactly at the missing
//! coordinates. Categories are 1-based in files and 0-based in memory.
//! Absent cells are exact zeros; duplicate cells are rejected. `kind counts`
//! carries nonnegative integers instead of probabilities and is normalized
//! when converted to a distribution. `kind full` lists full-data cells, so
//! every value is concrete even where the pattern says missing. `kind study`
//! drops the pattern column entirely.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{AssumptionKind, BlockPartition, CarrySets, IdentPlan, ZeroCellPolicy};
use crate::sensitivity::{CountTable, Estimand, MechanismSpec, MechanismSuite};
use crate::space::{CategorySpace, MissPattern, SpaceError};
use crate::table::{FullTable, ObservedTable, StudyTable, TableError};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Semantic(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

fn at(line: usize, msg: impl Into<String>) -> FileError {
    FileError::Parse { line, msg: msg.into() }
}

/// Any table a cell-record file can hold.
#[derive(Debug, Clone)]
pub enum ParsedTable {
    Observed(ObservedTable),
    Counts(CountTable),
    Full(FullTable),
    Study(StudyTable),
}

impl ParsedTable {
    /// The table as an observed-data distribution: counts are normalized,
    /// full or study tables are refused.
    pub fn into_observed(self) -> Result<ObservedTable, FileError> {
        match self {
            ParsedTable::Observed(t) => Ok(t),
            ParsedTable::Counts(c) => Ok(c
                .to_observed()
                .expect("count table came from a validated parse")),
            ParsedTable::Full(_) => Err(FileError::Semantic(
                "expected an observed-data table, found kind full".into(),
            )),
            ParsedTable::Study(_) => Err(FileError::Semantic(
                "expected an observed-data table, found kind study".into(),
            )),
        }
    }

    pub fn into_counts(self) -> Result<CountTable, FileError> {
        match self {
            ParsedTable::Counts(c) => Ok(c),
            other => Err(FileError::Semantic(format!(
                "expected kind counts, found kind {}",
                other.kind_name()
            ))),
        }
    }

    pub fn into_full(self) -> Result<FullTable, FileError> {
        match self {
            ParsedTable::Full(t) => Ok(t),
            other => Err(FileError::Semantic(format!(
                "expected kind full, found kind {}",
                other.kind_name()
            ))),
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            ParsedTable::Observed(_) => "probabilities",
            ParsedTable::Counts(_) => "counts",
            ParsedTable::Full(_) => "full",
            ParsedTable::Study(_) => "study",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum TableKind {
    Probabilities,
    Counts,
    Full,
    Study,
}

/// Parses any cell-record table file.
pub fn parse_table(text: &str) -> Result<ParsedTable, FileError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut header = |key: &str| -> Result<(usize, Vec<String>), FileError> {
        let (line, text) = lines
            .next()
            .ok_or_else(|| at(0, format!("missing `{key}` header line")))?;
        let mut parts = text.split_whitespace();
        let found = parts.next().unwrap_or("");
        if found != key {
            return Err(at(line, format!("expected `{key} ...`, found `{text}`")));
        }
        Ok((line, parts.map(str::to_string).collect()))
    };

    let (line, vars) = header("vars")?;
    let p: usize = match vars.as_slice() {
        [v] => v.parse().map_err(|_| at(line, format!("bad variable count `{v}`")))?,
        _ => return Err(at(line, "expected `vars <count>`")),
    };
    let (line, cards) = header("cards")?;
    if cards.len() != p {
        return Err(at(line, format!("expected {p} cardinalities, found {}", cards.len())));
    }
    let cards: Vec<usize> = cards
        .iter()
        .map(|c| c.parse().map_err(|_| at(line, format!("bad cardinality `{c}`"))))
        .collect::<Result<_, _>>()?;
    let space = CategorySpace::new(cards)?;
    let (line, kind) = header("kind")?;
    let kind = match kind.as_slice() {
        [k] => match k.as_str() {
            "probabilities" => TableKind::Probabilities,
            "counts" => TableKind::Counts,
            "full" => TableKind::Full,
            "study" => TableKind::Study,
            other => {
                return Err(at(
                    line,
                    format!("unknown kind `{other}` (use counts, probabilities, full, or study)"),
                ))
            }
        },
        _ => return Err(at(line, "expected `kind <name>`")),
    };

    let parse_values = |line: usize,
                        text: &str,
                        pattern: Option<MissPattern>|
     -> Result<Vec<usize>, FileError> {
        let entries: Vec<&str> = text.split(',').collect();
        if entries.len() != p {
            return Err(at(line, format!("expected {p} values, found {}", entries.len())));
        }
        let mut values = Vec::with_capacity(p);
        for (j, entry) in entries.iter().enumerate() {
            let missing_here = pattern.map(|pt| pt.is_missing(j)).unwrap_or(false);
            if *entry == "*" {
                if !missing_here {
                    return Err(at(
                        line,
                        format!("variable {} is observed in this pattern but its value is `*`", j + 1),
                    ));
                }
                values.push(usize::MAX); // placeholder, skipped below
            } else {
                if missing_here {
                    return Err(at(
                        line,
                        format!("variable {} is missing in this pattern; write `*`", j + 1),
                    ));
                }
                let v: usize = entry
                    .parse()
                    .map_err(|_| at(line, format!("bad category `{entry}`")))?;
                if v < 1 || v > space.card(j) {
                    return Err(at(
                        line,
                        format!(
                            "category {v} out of range 1..={} for variable {}",
                            space.card(j),
                            j + 1
                        ),
                    ));
                }
                values.push(v - 1);
            }
        }
        Ok(values)
    };

    // Record accumulators for each kind.
    let block_lens: Vec<usize> = MissPattern::all(p)
        .map(|pattern| ObservedTable::block_len(&space, pattern))
        .collect();
    let mut obs_blocks: Vec<Vec<f64>> = block_lens.iter().map(|&l| vec![0.0; l]).collect();
    let mut count_blocks: Vec<Vec<u64>> = block_lens.iter().map(|&l| vec![0; l]).collect();
    let mut full = FullTable::new_zero(space.clone());
    let mut study = vec![0.0f64; space.value_cells()];
    let mut seen: HashSet<(usize, usize)> = HashSet::new();

    for (line, text) in lines {
        let fields: Vec<&str> = text.split_whitespace().collect();
        let (pattern, values_field, number) = match (kind, fields.as_slice()) {
            (TableKind::Study, [values, number]) => (None, *values, *number),
            (TableKind::Study, _) => {
                return Err(at(line, "expected `values number` records for kind study"))
            }
            (_, [pattern, values, number]) => {
                let pt = MissPattern::parse(pattern)
                    .ok_or_else(|| at(line, format!("bad pattern `{pattern}`")))?;
                if pt.num_vars() != p {
                    return Err(at(line, format!("pattern `{pattern}` is not {p} characters")));
                }
                (Some(pt), *values, *number)
            }
            _ => return Err(at(line, "expected `pattern values number` records")),
        };

        match kind {
            TableKind::Probabilities | TableKind::Counts => {
                let pattern = pattern.unwrap();
                let values = parse_values(line, values_field, Some(pattern))?;
                let obs: Vec<usize> = pattern
                    .observed_vars()
                    .into_iter()
                    .map(|j| values[j])
                    .collect();
                let rank = ObservedTable::obs_rank(&space, pattern, &obs);
                if !seen.insert((pattern.rank(), rank)) {
                    return Err(at(line, "duplicate cell"));
                }
                if kind == TableKind::Counts {
                    let n: u64 = number
                        .parse()
                        .map_err(|_| at(line, format!("bad count `{number}` (counts are nonnegative integers)")))?;
                    count_blocks[pattern.rank()][rank] = n;
                } else {
                    let mass = parse_probability(line, number)?;
                    obs_blocks[pattern.rank()][rank] = mass;
                }
            }
            TableKind::Full => {
                let pattern = pattern.unwrap();
                let values = parse_values(line, values_field, None)?;
                let rank = space.value_rank(&values) * space.pattern_cells() + pattern.rank();
                if !seen.insert((usize::MAX, rank)) {
                    return Err(at(line, "duplicate cell"));
                }
                full.set_prob(&values, pattern, parse_probability(line, number)?);
            }
            TableKind::Study => {
                let values = parse_values(line, values_field, None)?;
                let rank = space.value_rank(&values);
                if !seen.insert((usize::MAX, rank)) {
                    return Err(at(line, "duplicate cell"));
                }
                study[rank] = parse_probability(line, number)?;
            }
        }
    }

    Ok(match kind {
        TableKind::Probabilities => {
            ParsedTable::Observed(ObservedTable::from_pattern_blocks(space, obs_blocks)?)
        }
        TableKind::Counts => ParsedTable::Counts(
            CountTable::from_pattern_blocks(space, count_blocks)
                .map_err(|e| FileError::Semantic(e.to_string()))?,
        ),
        TableKind::Full => {
            full.normalize()?;
            ParsedTable::Full(full)
        }
        TableKind::Study => ParsedTable::Study(StudyTable::from_weights(space, study)?),
    })
}

fn parse_probability(line: usize, text: &str) -> Result<f64, FileError> {
    let mass: f64 = text.parse().map_err(|_| at(line, format!("bad number `{text}`")))?;
    if !mass.is_finite() || mass < 0.0 {
        return Err(at(line, format!("cell mass must be finite and nonnegative, got {mass}")));
    }
    Ok(mass)
}

pub fn read_table(path: &Path) -> Result<ParsedTable, FileError> {
    parse_table(&std::fs::read_to_string(path)?)
}

fn push_header(out: &mut String, space: &CategorySpace, kind: &str) {
    writeln!(out, "vars {}", space.num_vars()).unwrap();
    let cards: Vec<String> = space.cards().iter().map(|c| c.to_string()).collect();
    writeln!(out, "cards {}", cards.join(" ")).unwrap();
    writeln!(out, "kind {kind}").unwrap();
}

fn value_field(pattern: Option<MissPattern>, values: &[usize]) -> String {
    values
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            if pattern.map(|pt| pt.is_missing(j)).unwrap_or(false) {
                "*".to_string()
            } else {
                (v + 1).to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// Serializes an observed-data distribution; zero cells are omitted.
pub fn write_observed(table: &ObservedTable) -> String {
    let mut out = String::new();
    push_header(&mut out, table.space(), "probabilities");
    for (pattern, obs_values, mass) in table.iter_cells() {
        if mass == 0.0 {
            continue;
        }
        let mut values = vec![0usize; table.space().num_vars()];
        for (slot, j) in pattern.observed_vars().into_iter().enumerate() {
            values[j] = obs_values[slot];
        }
        writeln!(out, "{pattern} {} {mass:.16e}", value_field(Some(pattern), &values)).unwrap();
    }
    out
}

/// Serializes a count table; zero cells are omitted.
pub fn write_counts(counts: &CountTable) -> String {
    let mut out = String::new();
    push_header(&mut out, counts.space(), "counts");
    for pattern in MissPattern::all(counts.space().num_vars()) {
        let obs_vars = pattern.observed_vars();
        let sizes: Vec<usize> = obs_vars.iter().map(|&j| counts.space().card(j)).collect();
        let mut obs = vec![0usize; obs_vars.len()];
        loop {
            let n = counts.count(pattern, &obs);
            if n > 0 {
                let mut values = vec![0usize; counts.space().num_vars()];
                for (slot, &j) in obs_vars.iter().enumerate() {
                    values[j] = obs[slot];
                }
                writeln!(out, "{pattern} {} {n}", value_field(Some(pattern), &values)).unwrap();
            }
            let mut pos = obs.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                obs[pos] += 1;
                if obs[pos] < sizes[pos] {
                    break;
                }
                obs[pos] = 0;
            }
            if obs.iter().all(|&v| v == 0) {
                break;
            }
        }
    }
    out
}

/// Serializes a full-data distribution; zero cells are omitted.
pub fn write_full(full: &FullTable) -> String {
    let mut out = String::new();
    push_header(&mut out, full.space(), "full");
    for (values, pattern, mass) in full.iter_cells() {
        if mass == 0.0 {
            continue;
        }
        writeln!(out, "{pattern} {} {mass:.16e}", value_field(None, &values)).unwrap();
    }
    out
}

/// Serializes a study-variable marginal; zero cells are omitted.
pub fn write_study(study: &StudyTable) -> String {
    let mut out = String::new();
    push_header(&mut out, study.space(), "study");
    for (rank, &mass) in study.data().iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let values = study.space().value_at(rank);
        writeln!(out, "{} {mass:.16e}", value_field(None, &values)).unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Identification plans (TOML)
// ---------------------------------------------------------------------------

/// On-disk shape of an identification plan. All indices are 1-based: `order`
/// lists original variable numbers in processing order, and each block's
/// `carry` lists processing positions whose indicators stay in the state
/// after the block closes.
#[derive(Debug, Serialize, Deserialize)]
struct PlanFile {
    cards: Vec<usize>,
    order: Vec<usize>,
    boundaries: Vec<usize>,
    #[serde(default)]
    zero_cell_policy: Option<String>,
    #[serde(default)]
    snapshots: bool,
    #[serde(rename = "block")]
    blocks: Vec<BlockFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockFile {
    assumption: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    carry: Vec<usize>,
}

fn one_based_down(entries: &[usize], what: &str) -> Result<Vec<usize>, FileError> {
    entries
        .iter()
        .map(|&v| {
            v.checked_sub(1)
                .ok_or_else(|| FileError::Semantic(format!("{what} entries are 1-based, got 0")))
        })
        .collect()
}

/// Reads a plan from TOML. Structure and index ranges are checked here;
/// call `IdentPlan::validate` for the full rule set.
pub fn plan_from_toml(text: &str) -> Result<IdentPlan, FileError> {
    let file: PlanFile =
        toml::from_str(text).map_err(|e| FileError::Semantic(e.to_string()))?;
    let space = CategorySpace::new(file.cards)?;
    let order = one_based_down(&file.order, "order")?;
    let partition = BlockPartition::new(file.boundaries);
    if file.blocks.len() != partition.num_blocks() {
        return Err(FileError::Semantic(format!(
            "{} blocks declared but boundaries give {}",
            file.blocks.len(),
            partition.num_blocks()
        )));
    }
    let mut steps = Vec::new();
    let mut carry_sets = Vec::new();
    for (k, block) in file.blocks.iter().enumerate() {
        steps.push(match block.assumption.as_str() {
            "conditional-mar" => AssumptionKind::ConditionalMar,
            "ccmv" => AssumptionKind::Ccmv,
            "icin-pair" => AssumptionKind::IcinPair,
            other => {
                return Err(FileError::Semantic(format!(
                    "unknown assumption `{other}` (use conditional-mar, ccmv, or icin-pair)"
                )))
            }
        });
        let last = k + 1 == file.blocks.len();
        if last && !block.carry.is_empty() {
            return Err(FileError::Semantic(
                "the final block cannot carry indicators forward".into(),
            ));
        }
        if !last {
            carry_sets.push(one_based_down(&block.carry, "carry")?.into_iter().collect());
        }
    }
    let mut plan = IdentPlan::new(space, order, partition, CarrySets::new(carry_sets), steps);
    plan.snapshots = file.snapshots;
    plan.zero_cell_policy = match file.zero_cell_policy.as_deref() {
        None | Some("error") => ZeroCellPolicy::Error,
        Some("uniform") => ZeroCellPolicy::UniformFill,
        Some(other) => {
            return Err(FileError::Semantic(format!(
                "unknown zero_cell_policy `{other}` (use error or uniform)"
            )))
        }
    };
    Ok(plan)
}

pub fn plan_to_toml(plan: &IdentPlan) -> String {
    let blocks = (1..=plan.partition.num_blocks())
        .map(|k| BlockFile {
            assumption: plan.steps[k - 1].name().to_string(),
            carry: if k < plan.partition.num_blocks() {
                plan.carry.carried_after(k).iter().map(|&v| v + 1).collect()
            } else {
                Vec::new()
            },
        })
        .collect();
    let file = PlanFile {
        cards: plan.space.cards().to_vec(),
        order: plan.order.iter().map(|&v| v + 1).collect(),
        boundaries: plan.partition.boundaries().to_vec(),
        zero_cell_policy: Some(
            match plan.zero_cell_policy {
                ZeroCellPolicy::Error => "error",
                ZeroCellPolicy::UniformFill => "uniform",
            }
            .to_string(),
        ),
        snapshots: plan.snapshots,
        blocks,
    };
    toml::to_string(&file).expect("plan serializes")
}

pub fn read_plan(path: &Path) -> Result<IdentPlan, FileError> {
    plan_from_toml(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Sensitivity suites (TOML)
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct SuiteFile {
    #[serde(default)]
    prior_alpha: Option<f64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    draws: Option<usize>,
    #[serde(rename = "mechanism")]
    mechanisms: Vec<MechanismEntry>,
    #[serde(rename = "estimand")]
    estimands: Vec<EstimandEntry>,
}

#[derive(Debug, Deserialize)]
struct MechanismEntry {
    name: String,
    #[serde(default)]
    preset: Option<String>,
    #[serde(default)]
    ignorable_var: Option<usize>,
    #[serde(default)]
    plan: Option<String>,
}

#[derive(Debug, Deserialize)]
struct EstimandEntry {
    name: String,
    #[serde(rename = "where")]
    constraints: Vec<[usize; 2]>,
}

/// A parsed sensitivity suite: mechanisms, estimands, and optional defaults
/// that command-line flags may override.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub suite: MechanismSuite,
    pub estimands: Vec<Estimand>,
    pub prior_alpha: Option<f64>,
    pub seed: Option<u64>,
    pub draws: Option<usize>,
}

impl SuiteConfig {
    /// Checks estimand constraints against a concrete space.
    pub fn validate_against(&self, space: &CategorySpace) -> Result<(), FileError> {
        for estimand in &self.estimands {
            for &(var, cat) in &estimand.constraints {
                if var >= space.num_vars() {
                    return Err(FileError::Semantic(format!(
                        "estimand `{}` references variable {}, table has {}",
                        estimand.name,
                        var + 1,
                        space.num_vars()
                    )));
                }
                if cat >= space.card(var) {
                    return Err(FileError::Semantic(format!(
                        "estimand `{}` references category {} of variable {}, which has {}",
                        estimand.name,
                        cat + 1,
                        var + 1,
                        space.card(var)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Reads a suite from TOML; `base` anchors relative plan paths.
pub fn suite_from_toml(text: &str, base: &Path) -> Result<SuiteConfig, FileError> {
    let file: SuiteFile =
        toml::from_str(text).map_err(|e| FileError::Semantic(e.to_string()))?;
    if let Some(alpha) = file.prior_alpha {
        if alpha <= 0.0 || alpha.is_nan() {
            return Err(FileError::Semantic(format!(
                "prior_alpha must be positive, got {alpha}"
            )));
        }
    }
    let mut entries = Vec::new();
    for entry in &file.mechanisms {
        let spec = match (&entry.preset, &entry.plan) {
            (Some(_), Some(_)) => {
                return Err(FileError::Semantic(format!(
                    "mechanism `{}` declares both a preset and a plan file",
                    entry.name
                )))
            }
            (None, None) => {
                return Err(FileError::Semantic(format!(
                    "mechanism `{}` needs a preset or a plan file",
                    entry.name
                )))
            }
            (Some(preset), None) => match preset.as_str() {
                "ignorable" => MechanismSpec::IgnorableMar,
                "ccmv-pmm" => MechanismSpec::CcmvPmm,
                "icin" => MechanismSpec::IcinPair,
                "pim" => {
                    let var = entry.ignorable_var.ok_or_else(|| {
                        FileError::Semantic(format!(
                            "mechanism `{}`: preset pim needs ignorable_var",
                            entry.name
                        ))
                    })?;
                    let var = var.checked_sub(1).ok_or_else(|| {
                        FileError::Semantic("ignorable_var is 1-based, got 0".into())
                    })?;
                    MechanismSpec::PartiallyIgnorable { ignorable_var: var }
                }
                other => {
                    return Err(FileError::Semantic(format!(
                        "unknown preset `{other}` (use ignorable, ccmv-pmm, icin, or pim)"
                    )))
                }
            },
            (None, Some(plan_path)) => MechanismSpec::Plan(read_plan(&base.join(plan_path))?),
        };
        entries.push((entry.name.clone(), spec));
    }
    let estimands = file
        .estimands
        .iter()
        .map(|e| {
            let constraints = e
                .constraints
                .iter()
                .map(|&[var, cat]| {
                    match (var.checked_sub(1), cat.checked_sub(1)) {
                        (Some(var), Some(cat)) => Ok((var, cat)),
                        _ => Err(FileError::Semantic(format!(
                            "estimand `{}`: variable and category numbers are 1-based",
                            e.name
                        ))),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Estimand { name: e.name.clone(), constraints })
        })
        .collect::<Result<Vec<_>, FileError>>()?;
    Ok(SuiteConfig {
        suite: MechanismSuite { entries },
        estimands,
        prior_alpha: file.prior_alpha,
        seed: file.seed,
        draws: file.draws,
    })
}

pub fn read_suite(path: &Path) -> Result<SuiteConfig, FileError> {
    let base = path.parent().unwrap_or(Path::new("."));
    suite_from_toml(&std::fs::read_to_string(path)?, base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{asymmetric_fixture, mcar_independent_fixture};

    #[test]
    fn observed_tables_round_trip_exactly() {
        for table in [asymmetric_fixture(), mcar_independent_fixture()] {
            let text = write_observed(&table);
            let back = match parse_table(&text).unwrap() {
                ParsedTable::Observed(t) => t,
                other => panic!("wrong kind {:?}", other.kind_name()),
            };
            assert_eq!(back, table);
        }
    }

    #[test]
    fn counts_round_trip_and_normalize() {
        let space = CategorySpace::new(vec![2, 2]).unwrap();
        let counts = CountTable::from_pattern_blocks(
            space,
            vec![vec![10, 5, 15, 10], vec![12, 8], vec![10, 15], vec![15]],
        )
        .unwrap();
        let text = write_counts(&counts);
        let back = parse_table(&text).unwrap().into_counts().unwrap();
        assert_eq!(back, counts);
        // Normalizing the counts reproduces the probability fixture.
        let observed = parse_table(&text).unwrap().into_observed().unwrap();
        assert_eq!(observed, asymmetric_fixture());
    }

    #[test]
    fn full_and_study_round_trip() {
        let observed = asymmetric_fixture();
        let result = crate::engine::run_sequential(
            &observed,
            &IdentPlan::two_var_carry(observed.space().clone()),
        )
        .unwrap();
        let text = write_full(&result.full);
        let back = parse_table(&text).unwrap().into_full().unwrap();
        for (values, pattern, mass) in result.full.iter_cells() {
            assert!((back.prob(&values, pattern) - mass).abs() < 1e-16);
        }
        let text = write_study(&result.study);
        let back = match parse_table(&text).unwrap() {
            ParsedTable::Study(s) => s,
            other => panic!("wrong kind {:?}", other.kind_name()),
        };
        assert_eq!(back, result.study);
    }

    #[test]
    fn malformed_tables_are_rejected_with_line_numbers() {
        let reject = |text: &str, needle: &str| {
            let err = parse_table(text).unwrap_err().to_string();
            assert!(err.contains(needle), "`{err}` lacks `{needle}` for:\n{text}");
        };
        reject("cards 2 2\nkind probabilities\n", "expected `vars");
        reject("vars 2\ncards 2\nkind probabilities\n", "expected 2 cardinalities");
        reject("vars 2\ncards 2 2\nkind tables\n", "unknown kind");
        reject(
            "vars 2\ncards 2 2\nkind probabilities\n00 1,1 0.5\n00 1,1 0.5\n",
            "duplicate cell",
        );
        reject(
            "vars 2\ncards 2 2\nkind probabilities\n01 1,2 0.5\n",
            "write `*`",
        );
        reject(
            "vars 2\ncards 2 2\nkind probabilities\n00 1,* 0.5\n",
            "observed in this pattern",
        );
        reject(
            "vars 2\ncards 2 2\nkind probabilities\n00 1,3 0.5\n",
            "out of range",
        );
        reject(
            "vars 2\ncards 2 2\nkind probabilities\n00 1,1 -0.5\n",
            "nonnegative",
        );
        reject("vars 2\ncards 2 2\nkind counts\n00 1,1 1.5\n", "bad count");
        reject("vars 2\ncards 2 2\nkind probabilities\n2 1,1 0.5\n", "bad pattern");
        reject("vars 2\ncards 2 2\nkind probabilities\n0 1,1 0.5\n", "not 2 characters");
        reject("vars 2\ncards 2 2\nkind study\n00 1,1 0.5\n", "values number");
        // Line numbers point at the offending record.
        let err = parse_table("vars 2\ncards 2 2\nkind probabilities\n00 1,1 0.5\nxx 1,1 0.1\n")
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("line 5:"), "{err}");
    }

    #[test]
    fn plans_round_trip_through_toml() {
        let space = CategorySpace::new(vec![2, 3, 2]).unwrap();
        let mut plan = IdentPlan::partially_ignorable_icin(space, 2).unwrap();
        plan.snapshots = true;
        plan.zero_cell_policy = ZeroCellPolicy::UniformFill;
        let text = plan_to_toml(&plan);
        let back = plan_from_toml(&text).unwrap();
        assert_eq!(back, plan);
        assert!(back.validate().is_empty());

        let plan = IdentPlan::two_var_carry(CategorySpace::new(vec![2, 2]).unwrap());
        let back = plan_from_toml(&plan_to_toml(&plan)).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn plan_parsing_rejects_bad_structure() {
        let reject = |text: &str, needle: &str| {
            let err = plan_from_toml(text).unwrap_err().to_string();
            assert!(err.contains(needle), "`{err}` lacks `{needle}`");
        };
        let base = "cards = [2, 2]\norder = [1, 2]\nboundaries = [1, 2]\n";
        reject(
            &format!("{base}[[block]]\nassumption = \"magic\"\n[[block]]\nassumption = \"ccmv\"\n"),
            "unknown assumption",
        );
        reject(
            &format!("{base}[[block]]\nassumption = \"ccmv\"\n"),
            "boundaries give 2",
        );
        reject(
            &format!(
                "{base}[[block]]\nassumption = \"ccmv\"\n[[block]]\nassumption = \"ccmv\"\ncarry = [1]\n"
            ),
            "final block",
        );
        reject(
            "cards = [2, 2]\norder = [0, 1]\nboundaries = [2]\n[[block]]\nassumption = \"ccmv\"\n",
            "1-based",
        );
        reject(
            &format!("{base}zero_cell_policy = \"loud\"\n[[block]]\nassumption = \"ccmv\"\n[[block]]\nassumption = \"ccmv\"\n"),
            "zero_cell_policy",
        );
        // Violations of the plan rules surface through validate, not parsing.
        let text = "cards = [2, 2]\norder = [1, 1]\nboundaries = [2]\n[[block]]\nassumption = \"ccmv\"\n";
        let plan = plan_from_toml(text).unwrap();
        assert!(!plan.validate().is_empty());
    }

    #[test]
    fn suites_parse_presets_plans_and_estimands() {
        let dir = tempfile::tempdir().unwrap();
        let plan_path = dir.path().join("custom.toml");
        let plan = IdentPlan::two_var_carry(CategorySpace::new(vec![2, 2]).unwrap());
        std::fs::write(&plan_path, plan_to_toml(&plan)).unwrap();

        let text = r#"
prior_alpha = 0.5
seed = 9
draws = 100

[[mechanism]]
name = "ignorable"
preset = "ignorable"

[[mechanism]]
name = "pim-2"
preset = "pim"
ignorable_var = 2

[[mechanism]]
name = "custom"
plan = "custom.toml"

[[estimand]]
name = "p11"
where = [[1, 1], [2, 1]]
"#;
        let config = suite_from_toml(text, dir.path()).unwrap();
        assert_eq!(config.prior_alpha, Some(0.5));
        assert_eq!(config.seed, Some(9));
        assert_eq!(config.draws, Some(100));
        assert_eq!(config.suite.entries.len(), 3);
        assert!(matches!(config.suite.entries[0].1, MechanismSpec::IgnorableMar));
        assert!(matches!(
            config.suite.entries[1].1,
            MechanismSpec::PartiallyIgnorable { ignorable_var: 1 }
        ));
        assert!(matches!(&config.suite.entries[2].1, MechanismSpec::Plan(p) if *p == plan));
        assert_eq!(config.estimands[0].constraints, vec![(0, 0), (1, 0)]);

        let space = CategorySpace::new(vec![2, 2]).unwrap();
        assert!(config.validate_against(&space).is_ok());
        let narrow = CategorySpace::new(vec![2]).unwrap();
        assert!(config.validate_against(&narrow).is_err());

        let reject = |text: &str, needle: &str| {
            let err = suite_from_toml(text, dir.path()).unwrap_err().to_string();
            assert!(err.contains(needle), "`{err}` lacks `{needle}`");
        };
        let estimand = "[[estimand]]\nname = \"e\"\nwhere = [[1, 1]]\n";
        reject(
            &format!("[[mechanism]]\nname = \"m\"\n{estimand}"),
            "needs a preset or a plan",
        );
        reject(
            &format!("[[mechanism]]\nname = \"m\"\npreset = \"pim\"\n{estimand}"),
            "needs ignorable_var",
        );
        reject(
            &format!("[[mechanism]]\nname = \"m\"\npreset = \"mystery\"\n{estimand}"),
            "unknown preset",
        );
        reject(
            &format!(
                "[[mechanism]]\nname = \"m\"\npreset = \"icin\"\nplan = \"x.toml\"\n{estimand}"
            ),
            "both a preset and a plan",
        );
        reject(
            "[[mechanism]]\nname = \"m\"\npreset = \"icin\"\n[[estimand]]\nname = \"e\"\nwhere = [[0, 1]]\n",
            "1-based",
        );
        reject(
            &format!("prior_alpha = 0.0\n[[mechanism]]\nname = \"m\"\npreset = \"icin\"\n{estimand}"),
            "prior_alpha",
        );
    }
}
