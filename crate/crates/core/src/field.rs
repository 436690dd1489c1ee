//! Jet-valued fields on a chart.
//!
//! Every geometric object (metric, one-form, connection, embedding, derived
//! quantities such as induced connections or realized structures) is a
//! [`Field`]: a fixed number of scalar components whose jets can be evaluated
//! at a chart point to any order up to [`MAX_ORDER`]. Derived fields evaluate
//! their inputs at whatever order they need, so derivatives always flow
//! through exact jet arithmetic.

use std::fmt;
use std::sync::Arc;

use crate::error::GeomError;
use crate::expr::Expression;
use crate::jet::{Jet, MAX_ORDER};

pub trait Field: Send + Sync {
    /// Number of chart variables.
    fn dim(&self) -> usize;
    /// Number of scalar components.
    fn len(&self) -> usize;
    /// Component jets at `p`, each of order `order`.
    fn eval(&self, p: &[f64], order: usize) -> Result<Vec<Jet>, GeomError>;
}

pub type FieldRef = Arc<dyn Field>;

pub(crate) fn check_order(order: usize) -> Result<(), GeomError> {
    if order > MAX_ORDER {
        Err(GeomError::OrderTooHigh(order))
    } else {
        Ok(())
    }
}

/// Components given by closed-form expressions.
#[derive(Clone, Debug)]
pub struct ExprField {
    dim: usize,
    exprs: Vec<Expression>,
}

impl ExprField {
    pub fn new(dim: usize, exprs: Vec<Expression>) -> Self {
        ExprField { dim, exprs }
    }

    pub fn exprs(&self) -> &[Expression] {
        &self.exprs
    }

    pub fn into_ref(self) -> FieldRef {
        Arc::new(self)
    }
}

impl Field for ExprField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.exprs.len()
    }

    fn eval(&self, p: &[f64], order: usize) -> Result<Vec<Jet>, GeomError> {
        check_order(order)?;
        let seeds = Jet::seed(p, order);
        self.exprs
            .iter()
            .map(|e| e.eval_jets(&seeds))
            .collect()
    }
}

type EvalFn = dyn Fn(&[f64], usize) -> Result<Vec<Jet>, GeomError> + Send + Sync;

/// A field computed by a closure from other fields.
#[derive(Clone)]
pub struct FnField {
    dim: usize,
    len: usize,
    f: Arc<EvalFn>,
}

impl FnField {
    pub fn new(
        dim: usize,
        len: usize,
        f: impl Fn(&[f64], usize) -> Result<Vec<Jet>, GeomError> + Send + Sync + 'static,
    ) -> Self {
        FnField { dim, len, f: Arc::new(f) }
    }

    pub fn into_ref(self) -> FieldRef {
        Arc::new(self)
    }
}

impl Field for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.len
    }

    fn eval(&self, p: &[f64], order: usize) -> Result<Vec<Jet>, GeomError> {
        check_order(order)?;
        let out = (self.f)(p, order)?;
        debug_assert_eq!(out.len(), self.len);
        Ok(out)
    }
}

/// Constant components.
pub fn constant_field(dim: usize, values: Vec<f64>) -> FieldRef {
    let len = values.len();
    FnField::new(dim, len, move |_, order| {
        Ok(values.iter().map(|&v| Jet::constant(v, dim, order)).collect())
    })
    .into_ref()
}

pub fn zero_field(dim: usize, len: usize) -> FieldRef {
    constant_field(dim, vec![0.0; len])
}

/// `inner ∘ map`, where `map` has `inner.dim()` components over its own
/// chart. The inner jets are evaluated at `map(u0)` and Taylor-composed with
/// the displacement jets `map(u) - map(u0)`.
pub fn pullback(inner: FieldRef, map: FieldRef) -> FieldRef {
    assert_eq!(inner.dim(), map.len(), "pullback arity mismatch");
    let dim = map.dim();
    let len = inner.len();
    FnField::new(dim, len, move |u, order| {
        let f = map.eval(u, order)?;
        let x0: Vec<f64> = f.iter().map(Jet::value).collect();
        let outer = inner.eval(&x0, order)?;
        let delta: Vec<Jet> = f.iter().zip(&x0).map(|(j, &v)| j.add_const(-v)).collect();
        Ok(outer.iter().map(|c| c.compose(&delta)).collect())
    })
    .into_ref()
}

/// Componentwise `a + c * b`.
pub fn axpy(a: FieldRef, c: f64, b: FieldRef) -> FieldRef {
    assert_eq!(a.len(), b.len());
    assert_eq!(a.dim(), b.dim());
    FnField::new(a.dim(), a.len(), move |p, order| {
        let x = a.eval(p, order)?;
        let y = b.eval(p, order)?;
        Ok(x.iter().zip(&y).map(|(u, v)| u + &v.scale(c)).collect())
    })
    .into_ref()
}

/// First partials: component `c * dim + i` is `∂_i f_c`.
pub fn derivative(f: FieldRef) -> FieldRef {
    let n = f.dim();
    let len = f.len() * n;
    FnField::new(n, len, move |p, order| {
        let jets = f.eval(p, order + 1)?;
        let mut out = Vec::with_capacity(len);
        for j in &jets {
            for i in 0..n {
                out.push(j.partial(i)?);
            }
        }
        Ok(out)
    })
    .into_ref()
}

/// Plain values of every component.
pub fn values_at(f: &dyn Field, p: &[f64]) -> Result<Vec<f64>, GeomError> {
    Ok(f.eval(p, 0)?.iter().map(Jet::value).collect())
}

macro_rules! typed_field {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone)]
        pub struct $name(pub FieldRef);

        impl $name {
            pub fn dim(&self) -> usize {
                self.0.dim()
            }

            pub fn eval(&self, p: &[f64], order: usize) -> Result<Vec<Jet>, GeomError> {
                self.0.eval(p, order)
            }

            pub fn field(&self) -> &FieldRef {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}(dim {}, {} components)", stringify!($name), self.0.dim(), self.0.len())
            }
        }
    };
}

typed_field!(
    /// One component.
    ScalarField
);
typed_field!(
    /// `n` components `V^k`.
    VectorField
);
typed_field!(
    /// `n` components `η_i`.
    OneFormField
);
typed_field!(
    /// `n * n` components `g_ij`, row-major.
    MetricField
);
typed_field!(
    /// `n^3` components; `Γ^k_ij` sits at `k*n*n + i*n + j`.
    ConnectionField
);

impl ScalarField {
    pub fn from_expr(dim: usize, e: Expression) -> Self {
        ScalarField(ExprField::new(dim, vec![e]).into_ref())
    }

    pub fn zero(dim: usize) -> Self {
        ScalarField(zero_field(dim, 1))
    }
}

impl VectorField {
    pub fn from_exprs(exprs: Vec<Expression>) -> Self {
        let n = exprs.len();
        VectorField(ExprField::new(n, exprs).into_ref())
    }
}

impl OneFormField {
    pub fn from_exprs(exprs: Vec<Expression>) -> Self {
        let n = exprs.len();
        OneFormField(ExprField::new(n, exprs).into_ref())
    }

    pub fn zero(dim: usize) -> Self {
        OneFormField(zero_field(dim, dim))
    }

    /// `df` for a scalar `f`.
    pub fn differential(f: &ScalarField) -> Self {
        OneFormField(derivative(f.0.clone()))
    }
}

impl MetricField {
    pub fn from_exprs(dim: usize, exprs: Vec<Expression>) -> Self {
        assert_eq!(exprs.len(), dim * dim);
        MetricField(ExprField::new(dim, exprs).into_ref())
    }

    pub fn diagonal(diag: Vec<Expression>) -> Self {
        let n = diag.len();
        let mut exprs = vec![Expression::Const(0.0); n * n];
        for (i, e) in diag.into_iter().enumerate() {
            exprs[i * n + i] = e;
        }
        MetricField::from_exprs(n, exprs)
    }

    pub fn euclidean(dim: usize) -> Self {
        MetricField::diagonal(vec![Expression::Const(1.0); dim])
    }
}

impl ConnectionField {
    pub fn zero(dim: usize) -> Self {
        ConnectionField(zero_field(dim, dim * dim * dim))
    }

    pub fn from_exprs(dim: usize, exprs: Vec<Expression>) -> Self {
        assert_eq!(exprs.len(), dim * dim * dim);
        ConnectionField(ExprField::new(dim, exprs).into_ref())
    }

    pub fn plus(&self, other: &ConnectionField) -> ConnectionField {
        ConnectionField(axpy(self.0.clone(), 1.0, other.0.clone()))
    }

    pub fn minus(&self, other: &ConnectionField) -> ConnectionField {
        ConnectionField(axpy(self.0.clone(), -1.0, other.0.clone()))
    }

    pub fn scaled(&self, c: f64) -> ConnectionField {
        let n = self.dim();
        ConnectionField(axpy(zero_field(n, n * n * n), c, self.0.clone()))
    }
}
