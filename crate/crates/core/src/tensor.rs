//! Tensor operators in coordinates.
//!
//! Index layouts (all row-major, `n` the chart dimension):
//!
//! * metric `g_ij` at `i*n + j`;
//! * connection `Γ^k_ij` at `k*n*n + i*n + j`, meaning `∇_{∂_i} ∂_j = Γ^k_ij ∂_k`;
//! * torsion `T^k_ij` with the same layout as `Γ`;
//! * curvature `R^l_kij` at `l*n^3 + k*n^2 + i*n + j`, meaning
//!   `R(∂_i, ∂_j) ∂_k = R^l_kij ∂_l`;
//! * `(∇_i g)(j, k)` and `(d^∇ g)(i, j, k)` at `i*n*n + j*n + k`.
//!
//! Operators that need derivatives take jets; the rest take plain values.

use crate::error::GeomError;
use crate::field::{ConnectionField, FnField, MetricField, OneFormField, ScalarField, VectorField};
use crate::jet::{self, Jet};

pub fn values(j: &[Jet]) -> Vec<f64> {
    jet::values(j)
}

/// `|det g| > 1e-10 * (max |g_ij|)^n`, otherwise a degeneracy error.
pub fn check_nondegenerate(g: &[f64], n: usize) -> Result<(), GeomError> {
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let jets: Vec<Jet> = g.iter().map(|&v| Jet::constant(v, 1, 0)).collect();
    let det = jet::determinant(&jets, n).value();
    if scale == 0.0 || det.abs() <= 1e-10 * scale.powi(n as i32) {
        return Err(GeomError::Degenerate(format!("|det g| = {:e}", det.abs())));
    }
    Ok(())
}

/// Inverse metric jets after the degeneracy test on the values.
pub fn inverse_metric(g: &[Jet], n: usize) -> Result<Vec<Jet>, GeomError> {
    check_nondegenerate(&values(g), n)?;
    jet::inverse(g, n)
}

pub fn inverse_values(g: &[f64], n: usize) -> Result<Vec<f64>, GeomError> {
    let jets: Vec<Jet> = g.iter().map(|&v| Jet::constant(v, 1, 0)).collect();
    Ok(values(&inverse_metric(&jets, n)?))
}

/// Christoffel symbols `Γ^k_ij = ½ g^kl (∂_i g_jl + ∂_j g_il − ∂_l g_ij)`.
pub fn levi_civita(g: &MetricField) -> ConnectionField {
    let n = g.dim();
    let g = g.clone();
    ConnectionField(
        FnField::new(n, n * n * n, move |p, order| {
            let gj = g.eval(p, order + 1)?;
            let low: Vec<Jet> = gj.iter().map(|j| j.truncate(order)).collect();
            let ginv = inverse_metric(&low, n)?;
            let mut dg = Vec::with_capacity(n * n * n);
            for l in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        dg.push(gj[a * n + b].partial(l)?);
                    }
                }
            }
            // dg[l*n*n + a*n + b] = ∂_l g_ab
            let d = |l: usize, a: usize, b: usize| &dg[l * n * n + a * n + b];
            let mut out = Vec::with_capacity(n * n * n);
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = Jet::zero(n, order);
                        for l in 0..n {
                            let s = d(i, j, l) + d(j, i, l) - d(l, i, j);
                            acc = acc + &ginv[k * n + l] * &s;
                        }
                        out.push(acc.scale(0.5));
                    }
                }
            }
            Ok(out)
        })
        .into_ref(),
    )
}

/// `T^k_ij = Γ^k_ij − Γ^k_ji`.
pub fn torsion(gamma: &[f64], n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                t[k * n * n + i * n + j] = gamma[k * n * n + i * n + j] - gamma[k * n * n + j * n + i];
            }
        }
    }
    t
}

/// Torsion as a field (same jets as the connection).
pub fn torsion_field(c: &ConnectionField) -> ConnectionField {
    let n = c.dim();
    let c = c.clone();
    ConnectionField(
        FnField::new(n, n * n * n, move |p, order| {
            let g = c.eval(p, order)?;
            let mut out = Vec::with_capacity(n * n * n);
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        out.push(&g[k * n * n + i * n + j] - &g[k * n * n + j * n + i]);
                    }
                }
            }
            Ok(out)
        })
        .into_ref(),
    )
}

/// `R^l_kij = ∂_i Γ^l_jk − ∂_j Γ^l_ik + Γ^l_im Γ^m_jk − Γ^l_jm Γ^m_ik`,
/// from connection jets of order at least one.
pub fn curvature(gamma: &[Jet], n: usize) -> Result<Vec<f64>, GeomError> {
    if jet::min_order(gamma) < 1 {
        return Err(GeomError::OrderTooLow { needed: 1, have: 0 });
    }
    let g = |k: usize, i: usize, j: usize| gamma[k * n * n + i * n + j].value();
    let dg = |m: usize, k: usize, i: usize, j: usize| gamma[k * n * n + i * n + j].d1(m);
    let mut r = vec![0.0; n * n * n * n];
    for l in 0..n {
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut v = dg(i, l, j, k) - dg(j, l, i, k);
                    for m in 0..n {
                        v += g(l, i, m) * g(m, j, k) - g(l, j, m) * g(m, i, k);
                    }
                    r[l * n * n * n + k * n * n + i * n + j] = v;
                }
            }
        }
    }
    Ok(r)
}

/// `R(X, Y) Z` for component vectors.
pub fn apply_curvature(r: &[f64], n: usize, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (l, o) in out.iter_mut().enumerate() {
        for k in 0..n {
            if z[k] == 0.0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    *o += r[l * n * n * n + k * n * n + i * n + j] * x[i] * y[j] * z[k];
                }
            }
        }
    }
    out
}

/// `Ric(∂_y, ∂_z) = Σ_ab g^ab g(R(∂_a, ∂_y) ∂_z, ∂_b)`.
pub fn ricci(r: &[f64], g: &[f64], ginv: &[f64], n: usize) -> Vec<f64> {
    let mut ric = vec![0.0; n * n];
    for y in 0..n {
        for z in 0..n {
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let gab = ginv[a * n + b];
                    if gab == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for l in 0..n {
                        inner += r[l * n * n * n + z * n * n + a * n + y] * g[l * n + b];
                    }
                    acc += gab * inner;
                }
            }
            ric[y * n + z] = acc;
        }
    }
    ric
}

/// `scal = Σ_bc g^bc Ric_bc`.
pub fn scalar_curvature(ric: &[f64], ginv: &[f64], n: usize) -> f64 {
    (0..n * n).map(|k| ginv[k] * ric[k]).sum()
}

/// `(∇_i g)(j, k) = ∂_i g_jk − Γ^m_ij g_mk − Γ^m_ik g_jm`, from metric jets of
/// order at least one and connection values.
pub fn nabla_g(gamma: &[f64], g: &[Jet], n: usize) -> Result<Vec<f64>, GeomError> {
    if jet::min_order(g) < 1 {
        return Err(GeomError::OrderTooLow { needed: 1, have: 0 });
    }
    let gv = |a: usize, b: usize| g[a * n + b].value();
    let mut out = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut v = g[j * n + k].d1(i);
                for m in 0..n {
                    v -= gamma[m * n * n + i * n + j] * gv(m, k) + gamma[m * n * n + i * n + k] * gv(j, m);
                }
                out[i * n * n + j * n + k] = v;
            }
        }
    }
    Ok(out)
}

/// `(d^∇ g)(i, j, k) = (∇_i g)(j, k) − (∇_j g)(i, k) + g(T(∂_i, ∂_j), ∂_k)`.
pub fn d_nabla_g(ng: &[f64], t: &[f64], g: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut v = ng[i * n * n + j * n + k] - ng[j * n * n + i * n + k];
                for m in 0..n {
                    v += t[m * n * n + i * n + j] * g[m * n + k];
                }
                out[i * n * n + j * n + k] = v;
            }
        }
    }
    out
}

/// The semi-Weyl-with-torsion residual
/// `(d^∇ g)(i, j, k) + η_i g_jk − η_j g_ik`; with `η = 0` it is the SMT residual.
pub fn swmt_residual(dg: &[f64], eta: &[f64], g: &[f64], n: usize) -> Vec<f64> {
    let mut out = dg.to_vec();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out[i * n * n + j * n + k] += eta[i] * g[j * n + k] - eta[j] * g[i * n + k];
            }
        }
    }
    out
}

/// Metric gradient `(∇f)^k = g^kl ∂_l f`.
pub fn gradient(g: &MetricField, f: &ScalarField) -> VectorField {
    let n = g.dim();
    let (g, f) = (g.clone(), f.clone());
    VectorField(
        FnField::new(n, n, move |p, order| {
            let ginv = inverse_metric(&g.eval(p, order)?, n)?;
            let fj = f.eval(p, order + 1)?;
            let df: Vec<Jet> = (0..n).map(|l| fj[0].partial(l)).collect::<Result<_, _>>()?;
            Ok((0..n)
                .map(|k| jet::sum((0..n).map(|l| &ginv[k * n + l] * &df[l]), n, order))
                .collect())
        })
        .into_ref(),
    )
}

/// `(∇_i V)^k = ∂_i V^k + Γ^k_im V^m` at index `i*n + k`, from vector jets of
/// order at least one.
pub fn covariant_derivative(gamma: &[f64], v: &[Jet], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let mut acc = v[k].d1(i);
            for m in 0..n {
                acc += gamma[k * n * n + i * n + m] * v[m].value();
            }
            out[i * n + k] = acc;
        }
    }
    out
}

/// `Δ^(∇,g) f = Σ_ab g^ab g(∇_{∂_a} ∇f, ∂_b)` given `∇_i(∇f)` from
/// [`covariant_derivative`].
pub fn laplacian(nabla_grad: &[f64], g: &[f64], ginv: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for a in 0..n {
        for b in 0..n {
            let gab = ginv[a * n + b];
            if gab == 0.0 {
                continue;
            }
            let inner: f64 = (0..n).map(|c| nabla_grad[a * n + c] * g[c * n + b]).sum();
            acc += gab * inner;
        }
    }
    acc
}

/// `trace(T_Y) = Σ_ab g^ab g(T(∂_a, Y), ∂_b)`.
pub fn trace_torsion(t: &[f64], g: &[f64], ginv: &[f64], y: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for a in 0..n {
        let ta: Vec<f64> = (0..n)
            .map(|l| (0..n).map(|j| t[l * n * n + a * n + j] * y[j]).sum())
            .collect();
        for b in 0..n {
            acc += ginv[a * n + b] * (0..n).map(|l| ta[l] * g[l * n + b]).sum::<f64>();
        }
    }
    acc
}

/// `Γ^k_ij += η_i δ^k_j`: the difference tensor `η ⊗ I`, `(X, Y) ↦ η(X) Y`.
pub fn eta_tensor_identity(eta: &OneFormField) -> ConnectionField {
    let n = eta.dim();
    let eta = eta.clone();
    ConnectionField(
        FnField::new(n, n * n * n, move |p, order| {
            let e = eta.eval(p, order)?;
            let mut out = vec![Jet::zero(n, order); n * n * n];
            for i in 0..n {
                for j in 0..n {
                    out[j * n * n + i * n + j] = e[i].clone();
                }
            }
            Ok(out)
        })
        .into_ref(),
    )
}

/// `Γ^k_ij += ω_j δ^k_i`: the difference tensor `I ⊗ ω`, `(X, Y) ↦ ω(Y) X`.
pub fn identity_tensor_form(omega: &OneFormField) -> ConnectionField {
    let n = omega.dim();
    let omega = omega.clone();
    ConnectionField(
        FnField::new(n, n * n * n, move |p, order| {
            let w = omega.eval(p, order)?;
            let mut out = vec![Jet::zero(n, order); n * n * n];
            for i in 0..n {
                for j in 0..n {
                    out[i * n * n + i * n + j] = w[j].clone();
                }
            }
            Ok(out)
        })
        .into_ref(),
    )
}

/// `Γ^k_ij += g_ij V^k`: the difference tensor `g ⊗ V`, `(X, Y) ↦ g(X, Y) V`.
pub fn metric_tensor_vector(g: &MetricField, v: &VectorField) -> ConnectionField {
    let n = g.dim();
    let (g, v) = (g.clone(), v.clone());
    ConnectionField(
        FnField::new(n, n * n * n, move |p, order| {
            let gj = g.eval(p, order)?;
            let vj = v.eval(p, order)?;
            let mut out = Vec::with_capacity(n * n * n);
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        out.push(&gj[i * n + j] * &vj[k]);
                    }
                }
            }
            Ok(out)
        })
        .into_ref(),
    )
}

/// Semi-dual connection with respect to `(g, η)`:
/// `Γ*^l_ik = g^lj (∂_i g_jk − Γ^m_ij g_mk + η_i g_jk)`. Passing `None` for
/// `η` gives the ordinary dual.
pub fn semi_dual_connection(g: &MetricField, eta: Option<&OneFormField>, c: &ConnectionField) -> ConnectionField {
    let n = g.dim();
    let (g, eta, c) = (g.clone(), eta.cloned(), c.clone());
    ConnectionField(
        FnField::new(n, n * n * n, move |p, order| {
            let gj = g.eval(p, order + 1)?;
            let low: Vec<Jet> = gj.iter().map(|j| j.truncate(order)).collect();
            let ginv = inverse_metric(&low, n)?;
            let gam = c.eval(p, order)?;
            let e = match &eta {
                Some(e) => e.eval(p, order)?,
                None => vec![Jet::zero(n, order); n],
            };
            // lower[i][j][k] = ∂_i g_jk − Γ^m_ij g_mk + η_i g_jk
            let mut lower = Vec::with_capacity(n * n * n);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut v = gj[j * n + k].partial(i)? + &e[i] * &low[j * n + k];
                        for m in 0..n {
                            v = v - &gam[m * n * n + i * n + j] * &low[m * n + k];
                        }
                        lower.push(v);
                    }
                }
            }
            let mut out = Vec::with_capacity(n * n * n);
            for l in 0..n {
                for i in 0..n {
                    for k in 0..n {
                        out.push(jet::sum(
                            (0..n).map(|j| &ginv[l * n + j] * &lower[i * n * n + j * n + k]),
                            n,
                            order,
                        ));
                    }
                }
            }
            Ok(out)
        })
        .into_ref(),
    )
}

pub fn dual_connection(g: &MetricField, c: &ConnectionField) -> ConnectionField {
    semi_dual_connection(g, None, c)
}

/// Largest absolute entry, zero for an empty slice.
pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Largest absolute entrywise difference.
pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
