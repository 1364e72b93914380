//! Fixtures shared across the crate's unit tests.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::space::CategorySpace;
use crate::table::ObservedTable;

/// Two binary variables, independent of each other and of their own
/// missingness: X margins (0.6, 0.4) and (0.7, 0.3), missingness rates
/// 0.2 and 0.5. Every sound identification strategy must return the
/// product law, in particular P(X1=1, X2=1) = 0.6 * 0.7 = 0.42.
pub(crate) fn mcar_independent_fixture() -> ObservedTable {
    let space = CategorySpace::new(vec![2, 2]).unwrap();
    let px = [0.6, 0.4];
    let qx = [0.7, 0.3];
    let miss = [0.2, 0.5];
    ObservedTable::from_fn(space, |pattern, obs| {
        let mut w = 1.0;
        let mut slot = 0;
        for (j, margin) in [px, qx].iter().enumerate() {
            if pattern.is_missing(j) {
                w *= miss[j];
            } else {
                w *= (1.0 - miss[j]) * margin[obs[slot]];
                slot += 1;
            }
        }
        w
    })
    .unwrap()
}

/// Two-variable table with nothing symmetric about it. Several tests pin
/// hand-computed cells of its identified distributions.
///
/// Fully observed (x1 slow, x2 fast): 0.10 0.05 0.15 0.10;
/// x1 missing by x2: 0.12 0.08; x2 missing by x1: 0.10 0.15; both: 0.15.
pub(crate) fn asymmetric_fixture() -> ObservedTable {
    let space = CategorySpace::new(vec![2, 2]).unwrap();
    ObservedTable::from_pattern_blocks(
        space,
        vec![
            vec![0.10, 0.05, 0.15, 0.10],
            vec![0.12, 0.08],
            vec![0.10, 0.15],
            vec![0.15],
        ],
    )
    .unwrap()
}

/// Strictly positive random observed-data table, reproducible from the seed.
pub(crate) fn random_observed(space: CategorySpace, seed: u64) -> ObservedTable {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let weight = Uniform::new(0.01, 1.0);
    ObservedTable::from_fn(space, |_, _| weight.sample(&mut rng)).unwrap()
}
