//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] carries the value of a function together with all of its partial
//! derivatives up to a fixed order (at most [`MAX_ORDER`]) at one point. Jets
//! form a commutative ring under the usual arithmetic; products and
//! compositions obey the Leibniz and chain rules exactly, so any computation
//! written over jets yields exact derivatives up to rounding.
//!
//! Derivative tensors are stored densely (all index permutations), which keeps
//! indexing trivial at the price of some redundancy for the symmetric parts.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::GeomError;

/// Highest derivative order carried by a jet.
pub const MAX_ORDER: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    dim: usize,
    order: usize,
    data: Vec<f64>,
}

fn storage_len(dim: usize, order: usize) -> usize {
    let mut len = 1;
    let mut block = 1;
    for _ in 0..order {
        block *= dim;
        len += block;
    }
    len
}

impl Jet {
    pub fn constant(value: f64, dim: usize, order: usize) -> Self {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        let mut data = vec![0.0; storage_len(dim, order)];
        data[0] = value;
        Jet { dim, order, data }
    }

    pub fn zero(dim: usize, order: usize) -> Self {
        Self::constant(0.0, dim, order)
    }

    /// The coordinate function `x_index`, evaluated at `value`.
    pub fn variable(value: f64, index: usize, dim: usize, order: usize) -> Self {
        assert!(index < dim);
        let mut jet = Self::constant(value, dim, order);
        if order >= 1 {
            jet.data[1 + index] = 1.0;
        }
        jet
    }

    /// Seeded coordinate jets for every coordinate of `point`.
    pub fn seed(point: &[f64], order: usize) -> Vec<Jet> {
        let dim = point.len();
        point
            .iter()
            .enumerate()
            .map(|(i, &x)| Jet::variable(x, i, dim, order))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.data[0]
    }

    #[inline]
    fn o1(&self) -> usize {
        1
    }
    #[inline]
    fn o2(&self) -> usize {
        1 + self.dim
    }
    #[inline]
    fn o3(&self) -> usize {
        1 + self.dim + self.dim * self.dim
    }

    pub fn d1(&self, i: usize) -> f64 {
        if self.order < 1 {
            return 0.0;
        }
        self.data[self.o1() + i]
    }

    pub fn d2(&self, i: usize, j: usize) -> f64 {
        if self.order < 2 {
            return 0.0;
        }
        self.data[self.o2() + i * self.dim + j]
    }

    pub fn d3(&self, i: usize, j: usize, k: usize) -> f64 {
        if self.order < 3 {
            return 0.0;
        }
        let n = self.dim;
        self.data[self.o3() + (i * n + j) * n + k]
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.d1(i)).collect()
    }

    /// Row-major Hessian.
    pub fn hessian(&self) -> Vec<f64> {
        let n = self.dim;
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = self.d2(i, j);
            }
        }
        h
    }

    /// Row-major third-derivative tensor.
    pub fn third(&self) -> Vec<f64> {
        let n = self.dim;
        let mut t = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    t[(i * n + j) * n + k] = self.d3(i, j, k);
                }
            }
        }
        t
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order {
            return self.clone();
        }
        Jet {
            dim: self.dim,
            order,
            data: self.data[..storage_len(self.dim, order)].to_vec(),
        }
    }

    /// The jet of `∂f/∂x_i`, one order lower.
    pub fn partial(&self, i: usize) -> Result<Jet, GeomError> {
        if self.order == 0 {
            return Err(GeomError::OrderTooLow { needed: 1, have: 0 });
        }
        let n = self.dim;
        let order = self.order - 1;
        let mut out = Jet::zero(n, order);
        out.data[0] = self.d1(i);
        if order >= 1 {
            for j in 0..n {
                out.data[1 + j] = self.d2(i, j);
            }
        }
        if order >= 2 {
            for j in 0..n {
                for k in 0..n {
                    out.data[1 + n + j * n + k] = self.d3(i, j, k);
                }
            }
        }
        Ok(out)
    }

    fn zip_with(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        assert_eq!(self.dim, other.dim, "jet dimension mismatch");
        let order = self.order.min(other.order);
        let len = storage_len(self.dim, order);
        let data = (0..len).map(|k| f(self.data[k], other.data[k])).collect();
        Jet { dim: self.dim, order, data }
    }

    pub fn scale(&self, c: f64) -> Jet {
        Jet {
            dim: self.dim,
            order: self.order,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add_const(&self, c: f64) -> Jet {
        let mut out = self.clone();
        out.data[0] += c;
        out
    }

    pub fn mul_jet(&self, b: &Jet) -> Jet {
        assert_eq!(self.dim, b.dim, "jet dimension mismatch");
        let a = self;
        let n = a.dim;
        let order = a.order.min(b.order);
        let mut w = Jet::zero(n, order);
        let (a0, b0) = (a.value(), b.value());
        w.data[0] = a0 * b0;
        if order >= 1 {
            for i in 0..n {
                w.data[1 + i] = a.d1(i) * b0 + a0 * b.d1(i);
            }
        }
        if order >= 2 {
            for i in 0..n {
                for j in 0..n {
                    w.data[1 + n + i * n + j] = a.d2(i, j) * b0
                        + a.d1(i) * b.d1(j)
                        + a.d1(j) * b.d1(i)
                        + a0 * b.d2(i, j);
                }
            }
        }
        if order >= 3 {
            let o3 = 1 + n + n * n;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        w.data[o3 + (i * n + j) * n + k] = a.d3(i, j, k) * b0
                            + a.d2(i, j) * b.d1(k)
                            + a.d2(i, k) * b.d1(j)
                            + a.d2(j, k) * b.d1(i)
                            + a.d1(i) * b.d2(j, k)
                            + a.d1(j) * b.d2(i, k)
                            + a.d1(k) * b.d2(i, j)
                            + a0 * b.d3(i, j, k);
                    }
                }
            }
        }
        w
    }

    /// Applies a univariate function given its derivatives `[f, f', f'', f''']`
    /// at the value of `self`.
    pub fn chain(&self, f: [f64; 4]) -> Jet {
        let u = self;
        let n = u.dim;
        let mut v = Jet::zero(n, u.order);
        v.data[0] = f[0];
        if u.order >= 1 {
            for i in 0..n {
                v.data[1 + i] = f[1] * u.d1(i);
            }
        }
        if u.order >= 2 {
            for i in 0..n {
                for j in 0..n {
                    v.data[1 + n + i * n + j] = f[2] * u.d1(i) * u.d1(j) + f[1] * u.d2(i, j);
                }
            }
        }
        if u.order >= 3 {
            let o3 = 1 + n + n * n;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        v.data[o3 + (i * n + j) * n + k] = f[3] * u.d1(i) * u.d1(j) * u.d1(k)
                            + f[2]
                                * (u.d2(i, j) * u.d1(k)
                                    + u.d2(i, k) * u.d1(j)
                                    + u.d2(j, k) * u.d1(i))
                            + f[1] * u.d3(i, j, k);
                    }
                }
            }
        }
        v
    }

    pub fn recip(&self) -> Result<Jet, GeomError> {
        let x = self.value();
        if x == 0.0 || !x.is_finite() {
            return Err(GeomError::Domain("division by zero".into()));
        }
        let r = 1.0 / x;
        Ok(self.chain([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r]))
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.chain([e, e, e, e])
    }

    pub fn ln(&self) -> Result<Jet, GeomError> {
        let x = self.value();
        if x <= 0.0 {
            return Err(GeomError::Domain(format!("log of non-positive value {x}")));
        }
        let r = 1.0 / x;
        Ok(self.chain([x.ln(), r, -r * r, 2.0 * r * r * r]))
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.chain([s, c, -s, -c])
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.chain([c, -s, -c, s])
    }

    pub fn sqrt(&self) -> Result<Jet, GeomError> {
        let x = self.value();
        if x < 0.0 || (x == 0.0 && self.order > 0) {
            return Err(GeomError::Domain(format!("sqrt of non-positive value {x}")));
        }
        let s = x.sqrt();
        if self.order == 0 {
            return Ok(Jet::constant(s, self.dim, 0));
        }
        let d1 = 0.5 / s;
        let d2 = -0.25 / (s * x);
        let d3 = 0.375 / (s * x * x);
        Ok(self.chain([s, d1, d2, d3]))
    }

    pub fn powi(&self, k: i32) -> Result<Jet, GeomError> {
        let x = self.value();
        if k < 0 && x == 0.0 {
            return Err(GeomError::Domain("negative power of zero".into()));
        }
        let kf = k as f64;
        let p = |e: i32| if e == 0 { 1.0 } else { x.powi(e) };
        let f = [
            p(k),
            kf * p(k - 1),
            kf * (kf - 1.0) * p(k - 2),
            kf * (kf - 1.0) * (kf - 2.0) * p(k - 3),
        ];
        // x^k with k in {0,1,2} has vanishing higher coefficients; p() of a
        // negative exponent at x = 0 would otherwise produce 0 * inf.
        let f = match k {
            0 => [1.0, 0.0, 0.0, 0.0],
            1 => [x, 1.0, 0.0, 0.0],
            2 => [x * x, 2.0 * x, 2.0, 0.0],
            _ => f,
        };
        Ok(self.chain(f))
    }

    pub fn div_jet(&self, other: &Jet) -> Result<Jet, GeomError> {
        Ok(self.mul_jet(&other.recip()?))
    }

    /// Composes the Taylor polynomial represented by `self` (a jet in `m`
    /// variables at some base point `x0`) with displacement jets
    /// `delta_j = x_j(u) - x0_j`, producing the jet of `f(x(u))` in the
    /// variables of `delta`.
    pub fn compose(&self, delta: &[Jet]) -> Jet {
        assert_eq!(delta.len(), self.dim, "composition arity mismatch");
        let m = self.dim;
        let n = delta.first().map(|d| d.dim).unwrap_or(0);
        let order = delta
            .iter()
            .map(|d| d.order)
            .min()
            .unwrap_or(self.order)
            .min(self.order);
        let delta: Vec<Jet> = delta.iter().map(|d| d.truncate(order)).collect();
        let mut out = Jet::constant(self.value(), n, order);
        if order == 0 {
            return out;
        }
        for i in 0..m {
            out = &out + &delta[i].scale(self.d1(i));
        }
        if order >= 2 {
            for i in 0..m {
                for j in i..m {
                    let pij = delta[i].mul_jet(&delta[j]);
                    let c = if i == j { 0.5 } else { 1.0 } * self.d2(i, j);
                    out = &out + &pij.scale(c);
                    if order >= 3 {
                        for k in j..m {
                            let mult = match (i == j, j == k) {
                                (true, true) => 1.0,
                                (true, false) | (false, true) => 3.0,
                                (false, false) => 6.0,
                            };
                            let c3 = mult * self.d3(i, j, k) / 6.0;
                            if c3 != 0.0 {
                                out = &out + &pij.mul_jet(&delta[k]).scale(c3);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

macro_rules! impl_binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl $tr<&Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(self, rhs)
            }
        }
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                (&self).$m(rhs)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                self.$m(&rhs)
            }
        }
    };
}

impl_binop!(Add, add, |a, b| a.zip_with(b, |x, y| x + y));
impl_binop!(Sub, sub, |a, b| a.zip_with(b, |x, y| x - y));
impl_binop!(Mul, mul, |a, b| a.mul_jet(b));

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Add<f64> for &Jet {
    type Output = Jet;
    fn add(self, rhs: f64) -> Jet {
        self.add_const(rhs)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, rhs: f64) -> Jet {
        self.add_const(rhs)
    }
}

impl Div<f64> for &Jet {
    type Output = Jet;
    fn div(self, rhs: f64) -> Jet {
        self.scale(1.0 / rhs)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

/// Sum of a non-empty iterator of jets.
pub fn sum(mut items: impl Iterator<Item = Jet>, dim: usize, order: usize) -> Jet {
    let first = items.next().unwrap_or_else(|| Jet::zero(dim, order));
    items.fold(first, |acc, x| acc + x)
}

/// Lowest order among a collection of jets.
pub fn min_order(items: &[Jet]) -> usize {
    items.iter().map(Jet::order).min().unwrap_or(MAX_ORDER)
}

pub fn values(items: &[Jet]) -> Vec<f64> {
    items.iter().map(Jet::value).collect()
}

/// Solves `a x = b` where `a` is `n x n` and `b` is `n x r`, both row-major,
/// by Gaussian elimination with partial pivoting on the values.
pub fn solve(a: &[Jet], b: &[Jet], n: usize, r: usize) -> Result<Vec<Jet>, GeomError> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n * r);
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    let scale = a.iter().map(|v| v.value().abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(GeomError::Singular("zero matrix".into()));
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| {
                a[x * n + col]
                    .value()
                    .abs()
                    .total_cmp(&a[y * n + col].value().abs())
            })
            .expect("non-empty range");
        if a[pivot * n + col].value().abs() <= 1e-13 * scale {
            return Err(GeomError::Singular(format!(
                "pivot {col} vanishes (|pivot| = {:e})",
                a[pivot * n + col].value().abs()
            )));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            for k in 0..r {
                b.swap(pivot * r + k, col * r + k);
            }
        }
        let inv = a[col * n + col].recip()?;
        for row in (col + 1)..n {
            let factor = a[row * n + col].mul_jet(&inv);
            if factor.value() == 0.0 && factor.data.iter().all(|v| *v == 0.0) {
                continue;
            }
            for k in col..n {
                let t = factor.mul_jet(&a[col * n + k]);
                a[row * n + k] = &a[row * n + k] - &t;
            }
            for k in 0..r {
                let t = factor.mul_jet(&b[col * r + k]);
                b[row * r + k] = &b[row * r + k] - &t;
            }
        }
    }
    let mut x: Vec<Jet> = b.clone();
    for row in (0..n).rev() {
        let inv = a[row * n + row].recip()?;
        for k in 0..r {
            let mut acc = b[row * r + k].clone();
            for c in (row + 1)..n {
                acc = &acc - &a[row * n + c].mul_jet(&x[c * r + k]);
            }
            x[row * r + k] = acc.mul_jet(&inv);
        }
    }
    Ok(x)
}

pub fn inverse(a: &[Jet], n: usize) -> Result<Vec<Jet>, GeomError> {
    let d = a[0].dim();
    let order = min_order(a);
    let mut id = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            id.push(Jet::constant(if i == j { 1.0 } else { 0.0 }, d, order));
        }
    }
    solve(a, &id, n, n)
}

/// Determinant by cofactor expansion; intended for the small matrices used in
/// normal-vector constructions.
pub fn determinant(a: &[Jet], n: usize) -> Jet {
    match n {
        0 => panic!("determinant of empty matrix"),
        1 => a[0].clone(),
        2 => &a[0] * &a[3] - &a[1] * &a[2],
        _ => {
            let mut acc: Option<Jet> = None;
            for col in 0..n {
                let minor: Vec<Jet> = (1..n)
                    .flat_map(|r| {
                        (0..n)
                            .filter(move |&c| c != col)
                            .map(move |c| a[r * n + c].clone())
                    })
                    .collect();
                let term = &a[col] * &determinant(&minor, n - 1);
                let term = if col % 2 == 0 { term } else { -term };
                acc = Some(match acc {
                    None => term,
                    Some(s) => s + term,
                });
            }
            acc.expect("n >= 3")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy(order: usize) -> (Jet, Jet) {
        let v = Jet::seed(&[1.0, 2.0], order);
        (v[0].clone(), v[1].clone())
    }

    #[test]
    fn product_rule_on_x2y() {
        let (x, y) = xy(3);
        let f = &(&x * &x) * &y;
        assert_eq!(f.value(), 2.0);
        assert_eq!(f.gradient(), vec![4.0, 1.0]);
        assert_eq!(f.hessian(), vec![4.0, 2.0, 2.0, 0.0]);
        assert_eq!(f.d3(0, 0, 1), 2.0);
        assert_eq!(f.d3(0, 1, 0), 2.0);
        assert_eq!(f.d3(0, 0, 0), 0.0);
    }

    #[test]
    fn partial_lowers_order() {
        let (x, y) = xy(2);
        let f = (&x * &y).exp();
        let fx = f.partial(0).unwrap();
        assert_eq!(fx.order(), 1);
        // d/dx exp(xy) = y exp(xy) at (1,2)
        assert!((fx.value() - 2.0 * 2f64.exp()).abs() < 1e-12);
        // d/dy (y exp(xy)) = exp(xy)(1 + xy)
        assert!((fx.d1(1) - 3.0 * 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn recip_at_zero_is_domain_error() {
        let x = Jet::variable(0.0, 0, 1, 2);
        assert!(matches!(x.recip(), Err(GeomError::Domain(_))));
    }

    #[test]
    fn compose_matches_direct_evaluation() {
        // f(a, b) = a^2 b at (a, b) = (x + y, x y) around (x, y) = (0.5, 0.3)
        let u = Jet::seed(&[0.5, 0.3], 3);
        let a = &u[0] + &u[1];
        let b = &u[0] * &u[1];
        let direct = &(&a * &a) * &b;
        let x0 = [a.value(), b.value()];
        let inner = Jet::seed(&x0, 3);
        let f = &(&inner[0] * &inner[0]) * &inner[1];
        let delta = [a.add_const(-x0[0]), b.add_const(-x0[1])];
        let composed = f.compose(&delta);
        for (p, q) in composed.data.iter().zip(direct.data.iter()) {
            assert!((p - q).abs() < 1e-12, "{p} vs {q}");
        }
    }

    #[test]
    fn solve_propagates_derivatives() {
        // A(t) = [[1 + t, 1], [0, 2]], b = [t, 2]  => x1 = 1, x0 = (t - 1)/(1 + t)
        let t = Jet::variable(0.5, 0, 1, 2);
        let one = Jet::constant(1.0, 1, 2);
        let zero = Jet::zero(1, 2);
        let two = Jet::constant(2.0, 1, 2);
        let a = vec![t.add_const(1.0), one.clone(), zero, two.clone()];
        let b = vec![t.clone(), two];
        let x = solve(&a, &b, 2, 1).unwrap();
        let exact = |s: f64| (s - 1.0) / (1.0 + s);
        assert!((x[0].value() - exact(0.5)).abs() < 1e-14);
        // derivative 2/(1+t)^2
        assert!((x[0].d1(0) - 2.0 / 2.25).abs() < 1e-13);
        assert!((x[1].value() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn determinant_of_3x3() {
        let c = |v: f64| Jet::constant(v, 1, 0);
        let a: Vec<Jet> = [2.0, 0.0, 1.0, 1.0, 3.0, 2.0, 1.0, 1.0, 2.0]
            .iter()
            .map(|&v| c(v))
            .collect();
        assert!((determinant(&a, 3).value() - 6.0).abs() < 1e-14);
    }
}
