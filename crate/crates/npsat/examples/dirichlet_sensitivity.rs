//! Bayesian sensitivity analysis: put a symmetric Dirichlet prior on the
//! observed-data cells, draw posteriors from the counts, push every draw
//! through a suite of missingness mechanisms, and compare the estimand
//! distributions. Mechanisms that tell different stories about nonresponse
//! produce visibly different posteriors from identical data.
//!
//! Run with: cargo run -p npsat --example dirichlet_sensitivity

use std::path::Path;

use npsat::fileio;
use npsat::sensitivity::{run_suite, summarize, Estimand, MechanismSuite, SuiteOptions};
use npsat::MissPattern;

fn main() {
    // A synthetic three-question survey shipped with the test fixtures:
    // 3,000 respondents, heavy item and unit nonresponse.
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/survey_counts.txt");
    let counts = fileio::read_table(&fixture)
        .unwrap()
        .into_counts()
        .unwrap();
    let complete = MissPattern::parse("000").unwrap();
    let complete_total: u64 = (0..counts.space().value_cells())
        .map(|rank| counts.count(complete, &counts.space().value_at(rank)))
        .sum();
    println!(
        "1. Loaded {} responses over {} patterns ({} complete cases).",
        counts.total(),
        counts.space().pattern_cells(),
        complete_total,
    );

    // The standard suite: fully ignorable, complete-case pattern mixture,
    // itemwise independence (pairs only, so unavailable here), and one
    // partially ignorable mechanism per variable.
    let suite = MechanismSuite::standard(counts.space());
    let estimands = vec![
        Estimand { name: "P(X1=1 and X3=1)".into(), constraints: vec![(0, 0), (2, 0)] },
        Estimand { name: "P(X3=2)".into(), constraints: vec![(2, 1)] },
    ];
    let options = SuiteOptions { n_draws: 1000, seed: 7, ..SuiteOptions::default() };
    println!(
        "2. Running {} mechanisms x {} draws, paired on the same posterior draws...",
        suite.entries.len(),
        options.n_draws
    );

    let draws = run_suite(&counts, &suite, &estimands, &options).unwrap();
    let summary = summarize(&draws);
    println!("\n3. Posterior summaries per mechanism and estimand:\n");
    print!("{summary}");

    println!("\n4. Reading the table:");
    println!("   - ignorable and ccmv-pmm coincide draw for draw: with every");
    println!("     block completed from its fully observed pattern, the two");
    println!("     donor rules are the same rule.");
    println!("   - icin needs exactly two variables, so on three it is");
    println!("     reported unavailable rather than silently approximated.");
    println!("   - the pim mechanisms complete the never-responders from the");
    println!("     partially observed margins instead of the complete cases,");
    println!("     which shifts P(X3=2) far beyond posterior noise: same");
    println!("     data, different assumption, different inference.");
}
