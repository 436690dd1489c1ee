//! Seeded random expressions that are smooth and finite on `[-1, 1]^n`.
//! Divisions, logs, square roots and negative powers only see arguments
//! bounded away from zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::{constant, var, Expression as E, Func};

pub fn random_expression(rng: &mut impl Rng, dim: usize, depth: u32) -> E {
    if depth == 0 || rng.random_bool(0.2) {
        return if rng.random_bool(0.7) {
            var(rng.random_range(0..dim))
        } else {
            constant((rng.random_range(-20..=20) as f64) / 10.0)
        };
    }
    let sub = |rng: &mut _| random_expression(rng, dim, depth - 1);
    let bounded = |a: E| E::add(constant(2.0), E::call(Func::Sin, a));
    match rng.random_range(0..11) {
        0 => E::add(sub(rng), sub(rng)),
        1 => E::sub(sub(rng), sub(rng)),
        2 => E::mul(sub(rng), sub(rng)),
        3 => E::call(Func::Sin, sub(rng)),
        4 => E::call(Func::Cos, sub(rng)),
        5 => E::call(Func::Exp, E::mul(constant(0.5), E::call(Func::Sin, sub(rng)))),
        6 => {
            let a = sub(rng);
            E::div(a, bounded(sub(rng)))
        }
        7 => E::call(Func::Log, E::add(constant(1.0), E::pow(sub(rng), 2))),
        8 => E::call(Func::Sqrt, E::add(constant(1.0), E::pow(sub(rng), 2))),
        9 => E::pow(sub(rng), rng.random_range(2..=3)),
        _ => E::pow(bounded(sub(rng)), -rng.random_range(1..=2)),
    }
}

pub fn seeded_expression(seed: u64, dim: usize, depth: u32) -> E {
    random_expression(&mut ChaCha8Rng::seed_from_u64(seed), dim, depth)
}

/// A point of `[-0.9, 0.9]^dim`.
pub fn random_point(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-0.9..0.9)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expressions_are_finite_on_the_cube() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..200 {
            let e = seeded_expression(seed, 3, 5);
            for _ in 0..5 {
                assert!(e.eval(&random_point(&mut rng, 3)).unwrap().is_finite());
            }
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        assert_eq!(seeded_expression(11, 2, 4), seeded_expression(11, 2, 4));
    }
}
