//! Coordinate charts and deterministic sampling of their domain boxes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::GeomError;

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    coord_names: Vec<String>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Chart {
    pub fn new(coord_names: Vec<String>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GeomError> {
        let n = coord_names.len();
        if n == 0 {
            return Err(GeomError::Invalid("a chart needs at least one coordinate".into()));
        }
        if lo.len() != n || hi.len() != n {
            return Err(GeomError::Invalid(format!(
                "domain bounds have {} and {} entries for {n} coordinates",
                lo.len(),
                hi.len()
            )));
        }
        for i in 0..n {
            if !(lo[i] < hi[i]) || !lo[i].is_finite() || !hi[i].is_finite() {
                return Err(GeomError::Invalid(format!(
                    "empty domain for `{}`: [{}, {}]",
                    coord_names[i], lo[i], hi[i]
                )));
            }
        }
        Ok(Chart { coord_names, lo, hi })
    }

    /// Convenience constructor used throughout the tests.
    pub fn boxed(names: &[&str], lo: &[f64], hi: &[f64]) -> Self {
        Chart::new(names.iter().map(|s| s.to_string()).collect(), lo.to_vec(), hi.to_vec())
            .expect("valid chart")
    }

    pub fn dim(&self) -> usize {
        self.coord_names.len()
    }

    pub fn coord_names(&self) -> &[String] {
        &self.coord_names
    }

    pub fn names(&self) -> Vec<&str> {
        self.coord_names.iter().map(String::as_str).collect()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, p: &ChartPoint) -> bool {
        p.coords.len() == self.dim()
            && p.coords
                .iter()
                .enumerate()
                .all(|(i, &x)| self.lo[i] <= x && x <= self.hi[i])
    }

    /// `count` points of a Halton sequence with a seeded Cranley–Patterson
    /// rotation, mapped into the domain box.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<ChartPoint> {
        let n = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        (0..count)
            .map(|k| {
                let coords = (0..n)
                    .map(|i| {
                        let u = (radical_inverse(k as u64 + 1, PRIMES[i % PRIMES.len()]) + shift[i]).fract();
                        self.lo[i] + (self.hi[i] - self.lo[i]) * u
                    })
                    .collect();
                ChartPoint { coords }
            })
            .collect()
    }
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while k > 0 {
        r += f * (k % base) as f64;
        k /= base;
        f *= inv;
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChartPoint {
    pub coords: Vec<f64>,
}

impl ChartPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        ChartPoint { coords }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(5, 3) - (2.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn samples_stay_in_box_and_are_reproducible() {
        let c = Chart::boxed(&["x", "y", "z"], &[-1.0, 0.5, 2.0], &[1.0, 1.5, 2.1]);
        let a = c.sample(300, 7);
        assert!(a.iter().all(|p| c.contains(p)));
        assert_eq!(a, c.sample(300, 7));
        assert_ne!(a, c.sample(300, 8));
    }

    #[test]
    fn rejects_empty_box() {
        let err = Chart::new(vec!["x".into()], vec![1.0], vec![1.0]).unwrap_err();
        assert!(matches!(err, GeomError::Invalid(_)));
    }
}
