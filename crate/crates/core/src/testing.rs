//! Random fields for property tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chart::Chart;
use crate::expr::{constant, Expression as E, Func};
use crate::field::{ConnectionField, MetricField, OneFormField};
use crate::random::random_expression;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cube(dim: usize) -> Chart {
    let names: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    Chart::new(names, vec![-1.0; dim], vec![1.0; dim]).unwrap()
}

/// Diagonally dominant with `negative` leading negative entries, so
/// non-degenerate on the whole cube.
pub fn random_metric(rng: &mut impl Rng, dim: usize, negative: usize) -> MetricField {
    let off_scale = 0.4 / dim as f64;
    let mut comps = vec![constant(0.0); dim * dim];
    for i in 0..dim {
        let sign = if i < negative { -1.0 } else { 1.0 };
        comps[i * dim + i] =
            E::mul(constant(sign), E::add(constant(1.5), E::call(Func::Sin, random_expression(rng, dim, 2))));
        for j in 0..i {
            let e = E::mul(constant(off_scale), E::call(Func::Sin, random_expression(rng, dim, 2)));
            comps[i * dim + j] = e.clone();
            comps[j * dim + i] = e;
        }
    }
    MetricField::from_exprs(dim, comps)
}

pub fn random_one_form(rng: &mut impl Rng, dim: usize) -> OneFormField {
    OneFormField::from_exprs((0..dim).map(|_| random_expression(rng, dim, 2)).collect())
}

/// Arbitrary coefficients, torsion included.
pub fn random_connection(rng: &mut impl Rng, dim: usize) -> ConnectionField {
    ConnectionField::from_exprs(dim, (0..dim * dim * dim).map(|_| random_expression(rng, dim, 2)).collect())
}

/// Bounded so sub-charts of `[-0.8, 0.8]^2` stay inside the unit cube.
pub fn random_height(rng: &mut impl Rng) -> E {
    E::mul(constant(0.4), E::call(Func::Sin, random_expression(rng, 2, 3)))
}
