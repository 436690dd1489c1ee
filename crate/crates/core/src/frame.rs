//! Orthonormal frames and signatures of pseudo-Riemannian metrics.
//!
//! Frames come from a symmetric eigendecomposition at the point: each
//! eigenvector is scaled by `1/sqrt|λ|` and carries the sign of `λ`. This
//! never meets the null pivots that Gram–Schmidt runs into on indefinite
//! metrics.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::GeomError;
use crate::tensor::{apply_curvature, check_nondegenerate};

#[derive(Clone, Debug)]
pub struct Frame {
    /// `vectors[i]` holds the coordinate components of `E_i`.
    pub vectors: Vec<Vec<f64>>,
    /// `ε_i = g(E_i, E_i) ∈ {+1, −1}`.
    pub signs: Vec<f64>,
}

impl Frame {
    /// `(i_p, i_n)`.
    pub fn signature(&self) -> (usize, usize) {
        let neg = self.signs.iter().filter(|s| **s < 0.0).count();
        (self.signs.len() - neg, neg)
    }
}

/// Eigenpairs of a symmetric matrix, sorted by ascending eigenvalue, each
/// eigenvector oriented so its largest-magnitude entry is positive.
pub fn symmetric_eigen(a: &[f64], n: usize) -> Vec<(f64, Vec<f64>)> {
    let m = DMatrix::from_row_slice(n, n, a);
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|c| {
            let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let big = v
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if big < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            (eig.eigenvalues[c], v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

pub fn orthonormal_frame(g: &[f64], n: usize) -> Result<Frame, GeomError> {
    check_nondegenerate(g, n)?;
    let mut vectors = Vec::with_capacity(n);
    let mut signs = Vec::with_capacity(n);
    for (lambda, v) in symmetric_eigen(g, n) {
        let s = 1.0 / lambda.abs().sqrt();
        vectors.push(v.iter().map(|x| x * s).collect());
        signs.push(lambda.signum());
    }
    Ok(Frame { vectors, signs })
}

pub fn signature(g: &[f64], n: usize) -> Result<(usize, usize), GeomError> {
    Ok(orthonormal_frame(g, n)?.signature())
}

pub fn inner(g: &[f64], n: usize, x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += g[i * n + j] * x[i] * y[j];
        }
    }
    acc
}

/// `Ric(Y, Z) = Σ_i ε_i g(R(E_i, Y) Z, E_i)`, the frame form used as an
/// independent check on the contraction in [`crate::tensor::ricci`].
pub fn ricci_by_frame(r: &[f64], g: &[f64], frame: &Frame, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    let basis = |k: usize| -> Vec<f64> { (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect() };
    for y in 0..n {
        for z in 0..n {
            let (ey, ez) = (basis(y), basis(z));
            out[y * n + z] = frame
                .vectors
                .iter()
                .zip(&frame.signs)
                .map(|(e, s)| s * inner(g, n, &apply_curvature(r, n, e, &ey, &ez), e))
                .sum();
        }
    }
    out
}

/// `scal = Σ_i ε_i Ric(E_i, E_i)`.
pub fn scalar_by_frame(ric: &[f64], frame: &Frame, n: usize) -> f64 {
    frame
        .vectors
        .iter()
        .zip(&frame.signs)
        .map(|(e, s)| s * inner(ric, n, e, e))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_frame() {
        let f = orthonormal_frame(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(f.signs, vec![1.0, 1.0]);
        for v in &f.vectors {
            assert!((inner(&[1.0, 0.0, 0.0, 1.0], 2, v, v) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_rescaling() {
        let g = [-4.0, 0.0, 0.0, 9.0];
        let f = orthonormal_frame(&g, 2).unwrap();
        assert_eq!(f.signs, vec![-1.0, 1.0]);
        assert!((f.vectors[0][0] - 0.5).abs() < 1e-15 && f.vectors[0][1].abs() < 1e-15);
        assert!((f.vectors[1][1] - 1.0 / 3.0).abs() < 1e-15 && f.vectors[1][0].abs() < 1e-15);
    }

    #[test]
    fn minkowski_signature() {
        let g = [-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(signature(&g, 3).unwrap(), (2, 1));
    }

    #[test]
    fn frame_is_orthonormal_for_indefinite_mixed_metric() {
        let g = [0.3, 2.0, -0.5, 2.0, -1.0, 0.7, -0.5, 0.7, 1.5];
        let f = orthonormal_frame(&g, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { f.signs[i] } else { 0.0 };
                assert!((inner(&g, 3, &f.vectors[i], &f.vectors[j]) - want).abs() < 1e-10);
            }
        }
    }
}
