//! Lightlike hypersurfaces: radical and screen distributions, the lightlike
//! transversal, and the structure induced on an integrable screen.
//!
//! Screen quantities are represented frame-wise on the user-supplied spanning
//! fields `W_1, …, W_{m−1}` rather than on leaf coordinates.

use crate::conformal::{scalar_sum, transform, TransformData};
use crate::error::GeomError;
use crate::field::{ConnectionField, MetricField, OneFormField, ScalarField, VectorField};
use crate::frame::symmetric_eigen;
use crate::hypersurface::{umbilic_fit, EmbeddingMap, Local};
use crate::jet::{self, Jet};
use crate::structures::{perturbed, StructureInstance};
use crate::tensor::{inverse_values, max_abs, torsion, values};
use crate::verdict::{evaluate, hypothesis_skip, two_path, CheckConfig, PredicateVerdict, Sample};

/// A lightlike hypersurface with a chosen screen distribution.
#[derive(Clone, Debug)]
pub struct LightlikeHypersurface {
    pub embedding: EmbeddingMap,
    /// Spanning fields of the screen, components in the sub-chart basis.
    pub screen: Vec<VectorField>,
}

impl LightlikeHypersurface {
    pub fn new(embedding: EmbeddingMap, screen: Vec<VectorField>) -> Result<Self, GeomError> {
        let m = embedding.sub_dim();
        if m + 1 != embedding.ambient_dim() {
            return Err(GeomError::Invalid("lightlike hypersurfaces need m = n − 1".into()));
        }
        if screen.len() + 1 != m {
            return Err(GeomError::Invalid(format!("the screen needs {} spanning fields", m - 1)));
        }
        if screen.iter().any(|w| w.dim() != m || w.field().len() != m) {
            return Err(GeomError::Invalid("screen fields must be vector fields on the sub chart".into()));
        }
        Ok(LightlikeHypersurface { embedding, screen })
    }

    pub fn screen_rank(&self) -> usize {
        self.screen.len()
    }
}

/// Kernel of a rank `m − 1` induced metric, normalized so its first nonzero
/// component is `+1`.
fn radical(gp: &[Jet], m: usize) -> Result<Vec<Jet>, GeomError> {
    let gv = values(gp);
    let mut eig = symmetric_eigen(&gv, m);
    eig.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
    let big = eig[m - 1].0.abs().max(max_abs(&gv));
    if !(eig[0].0.abs() <= 1e-9 * big) {
        return Err(GeomError::Rank("induced metric is non-degenerate; not a lightlike hypersurface".into()));
    }
    if m > 1 && !(eig[1].0.abs() > 1e-9 * big) {
        return Err(GeomError::Rank("radical has rank above one".into()));
    }
    let v = &eig[0].1;
    let vmax = max_abs(v);
    let i0 = v.iter().position(|x| x.abs() > 1e-8 * vmax).expect("nonzero eigenvector");
    let (dim, order) = (gp[0].dim(), jet::min_order(gp));
    let mut xi = vec![Jet::constant(1.0, dim, order); m];
    if m > 1 {
        let rest: Vec<usize> = (0..m).filter(|&b| b != i0).collect();
        let a: Vec<Jet> = rest.iter().flat_map(|&r| rest.iter().map(move |&c| gp[r * m + c].clone())).collect();
        let b: Vec<Jet> = rest.iter().map(|&r| -&gp[r * m + i0]).collect();
        let x = jet::solve(&a, &b, m - 1, 1)?;
        for (k, &c) in rest.iter().enumerate() {
            xi[c] = x[k].clone();
        }
    }
    Ok(xi)
}

/// Lightlike frame data at one sub-chart point, jets of order `r` (frame
/// fields one order higher).
pub(crate) struct Null {
    pub l: Local,
    pub k: usize,
    /// Radical generator in the sub basis, order `r + 1`.
    pub xi: Vec<Jet>,
    pub xi_amb: Vec<Jet>,
    /// `W_s^a` at `s*m + a`, order `r + 1`.
    pub w: Vec<Jet>,
    /// `dF(W_s)` at `s*n + c`.
    pub w_amb: Vec<Jet>,
    pub normal: Vec<Jet>,
}

fn push_forward(l: &Local, v: &[Jet]) -> Vec<Jet> {
    let (m, n) = (l.m, l.n);
    (0..n).map(|c| jet::sum((0..m).map(|a| &v[a] * &l.df[a * n + c]), m, l.r + 1)).collect()
}

impl Null {
    pub fn at(
        h: &LightlikeHypersurface,
        g: &MetricField,
        conn: &ConnectionField,
        u: &[f64],
        r: usize,
    ) -> Result<Null, GeomError> {
        let e = &h.embedding;
        let l = Local::at(e, g, conn, u, r)?;
        let (m, n, k) = (l.m, l.n, h.screen_rank());
        let xi = radical(&l.gp, m)?;
        let xi_amb = push_forward(&l, &xi);
        let mut w = Vec::with_capacity(k * m);
        let mut w_amb = Vec::with_capacity(k * n);
        for f in &h.screen {
            let wj = f.eval(u, r + 1)?;
            w_amb.extend(push_forward(&l, &wj));
            w.extend(wj);
        }
        let mut out = Null { l, k, xi, xi_amb, w, w_amb, normal: Vec::new() };
        out.normal = out.transversal()?;
        Ok(out)
    }

    /// Rescales `ξ` by `c` and recomputes `N`.
    pub fn rescale_radical(&mut self, c: &Jet) -> Result<(), GeomError> {
        self.xi = self.xi.iter().map(|x| x * c).collect();
        self.xi_amb = self.xi_amb.iter().map(|x| x * c).collect();
        self.normal = self.transversal()?;
        Ok(())
    }

    pub fn screen_amb(&self, s: usize) -> &[Jet] {
        &self.w_amb[s * self.l.n..(s + 1) * self.l.n]
    }

    pub fn screen_sub(&self, s: usize) -> &[Jet] {
        &self.w[s * self.l.m..(s + 1) * self.l.m]
    }

    /// `N = V₀ − ½ g(V₀, V₀) ξ` where `V₀` solves `g(V₀, W_s) = 0`,
    /// `g(V₀, ξ) = 1` and the Euclidean condition `⟨V₀, ξ⟩ = 0`.
    fn transversal(&self) -> Result<Vec<Jet>, GeomError> {
        let (m, n, k) = (self.l.m, self.l.n, self.k);
        let order = self.l.r + 1;
        let lower = |v: &[Jet], j: usize| jet::sum((0..n).map(|i| &v[i] * &self.l.g[i * n + j]), m, order);
        let mut a = Vec::with_capacity(n * n);
        let mut b = Vec::with_capacity(n);
        for s in 0..k {
            a.extend((0..n).map(|j| lower(self.screen_amb(s), j)));
            b.push(Jet::zero(m, order));
        }
        a.extend((0..n).map(|j| lower(&self.xi_amb, j)));
        b.push(Jet::constant(1.0, m, order));
        a.extend(self.xi_amb.iter().cloned());
        b.push(Jet::zero(m, order));
        let v0 = jet::solve(&a, &b, n, 1)
            .map_err(|e| GeomError::Singular(format!("transversal system for the screen: {e}")))?;
        let half = self.l.ip(&v0, &v0).scale(0.5);
        Ok(v0.iter().zip(&self.xi_amb).map(|(v, x)| v - &(&half * x)).collect())
    }

    /// Components of ambient vectors in the basis `{W_1, …, W_k, ξ, N}`;
    /// output `j*count + i` for input vector `i`.
    pub fn decompose(&self, vs: &[Vec<Jet>]) -> Result<Vec<Jet>, GeomError> {
        let (n, k) = (self.l.n, self.k);
        let col = |c: usize| -> &[Jet] {
            if c < k {
                self.screen_amb(c)
            } else if c == k {
                &self.xi_amb
            } else {
                &self.normal
            }
        };
        let a: Vec<Jet> = (0..n).flat_map(|row| (0..n).map(move |c| col(c)[row].clone())).collect();
        let r = vs.len();
        let b: Vec<Jet> = (0..n).flat_map(|row| vs.iter().map(move |v| v[row].clone())).collect();
        jet::solve(&a, &b, n, r)
    }

    /// `∇_{W_s} V` for an ambient vector field `V` along `F`.
    pub fn nabla_screen(&self, s: usize, v: &[Jet]) -> Result<Vec<Jet>, GeomError> {
        let (m, n) = (self.l.m, self.l.n);
        let ws = self.screen_sub(s);
        let parts: Vec<Vec<Jet>> = (0..m).map(|a| self.l.nabla_along(a, v)).collect::<Result<_, _>>()?;
        Ok((0..n).map(|c| jet::sum((0..m).map(|a| &ws[a] * &parts[a][c]), m, self.l.r)).collect())
    }

    /// `[W_s, W_t]` pushed forward, order `r`.
    pub fn bracket(&self, s: usize, t: usize) -> Result<Vec<Jet>, GeomError> {
        let m = self.l.m;
        let (ws, wt) = (self.screen_sub(s), self.screen_sub(t));
        let sub: Vec<Jet> = (0..m)
            .map(|a| {
                let mut v = Jet::zero(m, self.l.r);
                for b in 0..m {
                    v = v + &(&ws[b] * &wt[a].partial(b)?) - &(&wt[b] * &ws[a].partial(b)?);
                }
                Ok(v)
            })
            .collect::<Result<_, GeomError>>()?;
        Ok(push_forward(&self.l, &sub))
    }

    /// `g'(W_s, W_t)`, order `r + 1`.
    pub fn screen_metric(&self) -> Vec<Jet> {
        let k = self.k;
        (0..k * k).map(|st| self.l.ip(self.screen_amb(st / k), self.screen_amb(st % k))).collect()
    }

    /// `β(W_s, W_t) = −g(∇_{W_s} N, W_t)` and `α(W_s, W_t) = g(∇_{W_s} W_t, N)`.
    pub fn screen_forms(&self) -> Result<(Vec<f64>, Vec<f64>), GeomError> {
        let k = self.k;
        let mut alpha = Vec::with_capacity(k * k);
        let mut beta = Vec::with_capacity(k * k);
        for s in 0..k {
            let dn = self.nabla_screen(s, &self.normal)?;
            for t in 0..k {
                let dw = self.nabla_screen(s, self.screen_amb(t))?;
                alpha.push(self.l.ip(&dw, &self.normal).value());
                beta.push(-self.l.ip(&dn, self.screen_amb(t)).value());
            }
        }
        Ok((alpha, beta))
    }
}

fn no_connection(cfg: &CheckConfig, names: &[&str]) -> Option<Vec<PredicateVerdict>> {
    cfg.perturbation.map(|_| {
        names
            .iter()
            .map(|n| PredicateVerdict::failed(n, "check involves no connection; perturbation not applicable"))
            .collect()
    })
}

/// `ξ` in the sub-chart basis at `u`.
pub fn radical_generator(e: &EmbeddingMap, g: &MetricField, u: &[f64]) -> Result<Vec<f64>, GeomError> {
    let l = Local::at(e, g, &ConnectionField::zero(e.ambient_dim()), u, 0)?;
    Ok(values(&radical(&l.gp, l.m)?))
}

/// The lightlike transversal `N` at `u`.
pub fn transversal_n(h: &LightlikeHypersurface, g: &MetricField, u: &[f64]) -> Result<Vec<f64>, GeomError> {
    let nl = Null::at(h, g, &ConnectionField::zero(g.dim()), u, 0)?;
    Ok(values(&nl.normal))
}

/// Rows `radical` (`g'(ξ, ·) = 0`), `transversal` (`g(N,ξ) = 1`,
/// `g(N,N) = g(N,W) = 0`) and `projection` (`X = PX + γ(X)ξ` with `PX` in
/// the screen and `P` idempotent).
pub fn check_lightlike_frame(s: &StructureInstance, h: &LightlikeHypersurface, cfg: &CheckConfig) -> Vec<PredicateVerdict> {
    let names = ["radical", "transversal", "projection"];
    if let Some(v) = no_connection(cfg, &names) {
        return v;
    }
    let sub = &h.embedding.sub;
    let radical_row = evaluate(names[0], sub, cfg, |u| {
        let nl = Null::at(h, &s.g, &s.conn, u, 0)?;
        let m = nl.l.m;
        let gp = values(&nl.l.gp);
        let xi = values(&nl.xi);
        let kv: Vec<f64> = (0..m).map(|a| (0..m).map(|b| gp[a * m + b] * xi[b]).sum()).collect();
        Ok(Sample::new(max_abs(&kv) / (1.0 + max_abs(&gp))))
    });
    let transversal_row = evaluate(names[1], sub, cfg, |u| {
        let nl = Null::at(h, &s.g, &s.conn, u, 0)?;
        let mut res = vec![nl.l.ip(&nl.normal, &nl.xi_amb).value() - 1.0, nl.l.ip(&nl.normal, &nl.normal).value()];
        for t in 0..nl.k {
            res.push(nl.l.ip(&nl.normal, nl.screen_amb(t)).value());
        }
        Ok(Sample::new(max_abs(&res)))
    });
    let projection_row = evaluate(names[2], sub, cfg, |u| {
        let nl = Null::at(h, &s.g, &s.conn, u, 0)?;
        let (m, n, k) = (nl.l.m, nl.l.n, nl.k);
        let tangents: Vec<Vec<Jet>> = (0..m).map(|a| nl.l.tangent(a).to_vec()).collect();
        let comps = values(&nl.decompose(&tangents)?);
        let mut worst = 0.0f64;
        for a in 0..m {
            let gamma = nl.l.ip(nl.l.tangent(a), &nl.normal).value();
            // PX from the screen components, then γ(PX) and the rebuilt X.
            let px: Vec<Jet> = (0..n)
                .map(|c| jet::sum((0..k).map(|s| nl.screen_amb(s)[c].scale(comps[s * m + a])), m, 0))
                .collect();
            let again = values(&nl.decompose(std::slice::from_ref(&px))?);
            worst = worst
                .max((comps[k * m + a] - gamma).abs())
                .max(comps[(k + 1) * m + a].abs())
                .max(nl.l.ip(&px, &nl.normal).value().abs());
            for s in 0..k {
                worst = worst.max((again[s] - comps[s * m + a]).abs());
            }
            for c in 0..n {
                let rebuilt = px[c].value() + gamma * nl.xi_amb[c].value();
                worst = worst.max((rebuilt - nl.l.tangent(a)[c].value()).abs());
            }
        }
        Ok(Sample::new(worst))
    });
    vec![radical_row, transversal_row, projection_row]
}

/// Row `integrable`: the `ξ`- and `N`-components of `[W_s, W_t]` vanish.
pub fn screen_integrability(s: &StructureInstance, h: &LightlikeHypersurface, cfg: &CheckConfig) -> PredicateVerdict {
    let name = "integrable";
    if let Some(mut v) = no_connection(cfg, &[name]) {
        return v.remove(0);
    }
    evaluate(name, &h.embedding.sub, cfg, |u| {
        let nl = Null::at(h, &s.g, &s.conn, u, 0)?;
        let k = nl.k;
        let mut worst = 0.0f64;
        for a in 0..k {
            for b in (a + 1)..k {
                let c = values(&nl.decompose(&[nl.bracket(a, b)?])?);
                worst = worst.max(c[k].abs()).max(c[k + 1].abs());
            }
        }
        Ok(Sample::new(worst))
    })
}

/// Frame-wise induced screen structure at one point.
pub struct ScreenFrame {
    pub k: usize,
    /// `g'(W_s, W_t)`.
    pub g: Vec<f64>,
    /// `W_r(g'(W_s, W_t))` at `r*k*k + s*k + t`.
    pub dg: Vec<f64>,
    /// `η(W_s)`.
    pub eta: Vec<f64>,
    /// `∇̄_{W_s} W_t = Σ_r conn[r*k*k + s*k + t] W_r`.
    pub conn: Vec<f64>,
    /// Screen components of `[W_s, W_t]`, same layout.
    pub bracket: Vec<f64>,
}

impl ScreenFrame {
    pub fn at(h: &LightlikeHypersurface, g: &MetricField, eta: &OneFormField, conn: &ConnectionField, u: &[f64]) -> Result<Self, GeomError> {
        let nl = Null::at(h, g, conn, u, 0)?;
        let (m, k) = (nl.l.m, nl.k);
        let gj = nl.screen_metric();
        let mut dg = Vec::with_capacity(k * k * k);
        for r in 0..k {
            let wr = nl.screen_sub(r);
            for st in 0..k * k {
                let mut v = 0.0;
                for a in 0..m {
                    v += wr[a].value() * gj[st].d1(a);
                }
                dg.push(v);
            }
        }
        let etav = values(&h.embedding.pull(eta.field()).eval(u, 0)?);
        let eta_s: Vec<f64> = (0..k)
            .map(|s| (0..nl.l.n).map(|c| etav[c] * nl.screen_amb(s)[c].value()).sum())
            .collect();
        let mut derivs = Vec::with_capacity(k * k);
        let mut brackets = Vec::with_capacity(k * k);
        for s in 0..k {
            for t in 0..k {
                derivs.push(nl.nabla_screen(s, nl.screen_amb(t))?);
                brackets.push(nl.bracket(s, t)?);
            }
        }
        let cd = values(&nl.decompose(&derivs)?);
        let cb = values(&nl.decompose(&brackets)?);
        // Rows of the decomposition are basis components, so the screen
        // block is already in `r*k*k + s*k + t` order.
        let kk = k * k;
        Ok(ScreenFrame { k, g: values(&gj), dg, eta: eta_s, conn: cd[..k * kk].to_vec(), bracket: cb[..k * kk].to_vec() })
    }

    /// `(∇̄_i g')(j,l) − (∇̄_j g')(i,l) + g'(T̄(i,j), l) + η_i g'_jl − η_j g'_il`,
    /// scaled by `1 + max|g'|·max|Γ̄|`.
    pub fn swmt_residual(&self) -> f64 {
        let k = self.k;
        let c = |r: usize, s: usize, t: usize| self.conn[r * k * k + s * k + t];
        let g = |s: usize, t: usize| self.g[s * k + t];
        let ng = |i: usize, j: usize, l: usize| {
            self.dg[i * k * k + j * k + l] - (0..k).map(|r| c(r, i, j) * g(r, l) + c(r, i, l) * g(j, r)).sum::<f64>()
        };
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    let tor: f64 = (0..k)
                        .map(|r| (c(r, i, j) - c(r, j, i) - self.bracket[r * k * k + i * k + j]) * g(r, l))
                        .sum();
                    let v = ng(i, j, l) - ng(j, i, l) + tor + self.eta[i] * g(j, l) - self.eta[j] * g(i, l);
                    worst = worst.max(v.abs());
                }
            }
        }
        worst / (1.0 + max_abs(&self.g) * max_abs(&self.conn))
    }
}

/// Hypotheses shared by the screen-structure checks.
fn screen_gates(s: &StructureInstance, h: &LightlikeHypersurface, cfg: &CheckConfig) -> Option<PredicateVerdict> {
    let un = cfg.unperturbed();
    [s.is_swmt(&un), screen_integrability(s, h, &un)].into_iter().find(|g| !g.pass)
}

fn skip_rows(gate: &PredicateVerdict, names: &[&str]) -> Vec<PredicateVerdict> {
    names.iter().map(|n| hypothesis_skip(gate, n)).collect()
}

/// Row `swmt`: the frame-wise screen structure `(g', η', ∇̄)` is semi-Weyl
/// with torsion on screen arguments.
pub fn check_screen_structure(s: &StructureInstance, h: &LightlikeHypersurface, cfg: &CheckConfig) -> Vec<PredicateVerdict> {
    let name = "swmt";
    if let Some(gate) = screen_gates(s, h, cfg) {
        return skip_rows(&gate, &[name]);
    }
    let direct = match perturbed(cfg, s.conn.clone(), name) {
        Ok(c) => c,
        Err(v) => return vec![v],
    };
    vec![evaluate(name, &h.embedding.sub, cfg, |u| {
        Ok(Sample::new(ScreenFrame::at(h, &s.g, &s.eta, &direct, u)?.swmt_residual()))
    })]
}

/// Rows `coefficients` (`∇̄̃_X Y = ∇̄_X Y + dφ'(X)Y + dφ'(Y)X − g'(X,Y)∇̄ψ'`
/// on the screen frame) and `radical_invariance` (the radical of `g̃'` is
/// that of `g'`).
pub fn verify_screen_cp_equivalence(
    s: &StructureInstance,
    t: &TransformData,
    h: &LightlikeHypersurface,
    cfg: &CheckConfig,
) -> Vec<PredicateVerdict> {
    let names = ["coefficients", "radical_invariance"];
    if let Some(gate) = screen_gates(s, h, cfg) {
        return skip_rows(&gate, &names);
    }
    let st = transform(s, t);
    let direct = match perturbed(cfg, st.conn.clone(), names[0]) {
        Ok(c) => c,
        Err(v) => return vec![v.clone(), v.renamed(names[1])],
    };
    let e = &h.embedding;
    let (phi, psi) = (e.pull_scalar(&t.phi), e.pull_scalar(&t.psi));
    let coefficients = evaluate(names[0], &e.sub, cfg, |u| {
        let base = ScreenFrame::at(h, &s.g, &s.eta, &s.conn, u)?;
        let tilde = ScreenFrame::at(h, &st.g, &st.eta, &direct, u)?;
        let nl = Null::at(h, &s.g, &s.conn, u, 0)?;
        let k = base.k;
        let along = |f: &ScalarField| -> Result<Vec<f64>, GeomError> {
            let d = f.eval(u, 1)?[0].gradient();
            Ok((0..k).map(|s| nl.screen_sub(s).iter().zip(&d).map(|(w, x)| w.value() * x).sum()).collect())
        };
        let (dphi, dpsi) = (along(&phi)?, along(&psi)?);
        let ginv = inverse_values(&base.g, k)?;
        let grad: Vec<f64> = (0..k).map(|r| (0..k).map(|q| ginv[r * k + q] * dpsi[q]).sum()).collect();
        let mut rhs = base.conn.clone();
        for r in 0..k {
            for a in 0..k {
                for b in 0..k {
                    let delta = |x: usize, y: usize| if x == y { 1.0 } else { 0.0 };
                    rhs[r * k * k + a * k + b] +=
                        dphi[a] * delta(r, b) + dphi[b] * delta(r, a) - base.g[a * k + b] * grad[r];
                }
            }
        }
        Ok(Sample::new(two_path(&tilde.conn, &rhs)))
    });
    let invariance = evaluate(names[1], &e.sub, cfg, |u| {
        let xi = radical_generator(e, &s.g, u)?;
        let xt = radical_generator(e, &st.g, u)?;
        let dot: f64 = xi.iter().zip(&xt).map(|(a, b)| a * b).sum();
        let (na, nb) = (xi.iter().map(|v| v * v).sum::<f64>(), xt.iter().map(|v| v * v).sum::<f64>());
        Ok(Sample::new((1.0 - dot * dot / (na * nb)).max(0.0).sqrt()))
    });
    vec![coefficients, invariance]
}

/// Rows `pairing` (`(α, β) = (β*, α*)` on the screen), `beta_symmetric`,
/// `beta_torsion_identity` (`β(X,Y) − β(Y,X) = g(N, T*(X,Y) + [X,Y])`) and
/// `tau` (`τ(X) = g(∇_X N, ξ)` is the `N`-component of `∇_X N`; the value of
/// `g(∇_X N, N)` is reported alongside).
pub fn verify_lightlike_beta(s: &StructureInstance, h: &LightlikeHypersurface, cfg: &CheckConfig) -> Vec<PredicateVerdict> {
    let names = ["pairing", "beta_symmetric", "beta_torsion_identity", "tau"];
    let direct = match perturbed(cfg, s.conn.clone(), "lightlike_beta") {
        Ok(c) => c,
        Err(v) => return names.iter().map(|n| v.clone().renamed(n)).collect(),
    };
    let star = s.semi_dual();
    let sub = &h.embedding.sub;

    let pairing = evaluate(names[0], sub, cfg, |u| {
        let (a, b) = Null::at(h, &s.g, &direct, u, 0)?.screen_forms()?;
        let (a_s, b_s) = Null::at(h, &s.g, &star, u, 0)?.screen_forms()?;
        let lhs: Vec<f64> = a.into_iter().chain(b).collect();
        let rhs: Vec<f64> = b_s.into_iter().chain(a_s).collect();
        Ok(Sample::new(two_path(&lhs, &rhs)))
    });

    let symmetric = match screen_gates(s, h, cfg) {
        Some(gate) => skip_rows(&gate, &names[1..2]).remove(0),
        None => evaluate(names[1], sub, cfg, |u| {
            let nl = Null::at(h, &s.g, &direct, u, 0)?;
            let (_, b) = nl.screen_forms()?;
            let k = nl.k;
            let asym = (0..k * k).map(|st| (b[st] - b[(st % k) * k + st / k]).abs()).fold(0.0, f64::max);
            Ok(Sample::new(asym / (1.0 + max_abs(&b))))
        }),
    };

    let torsion_identity = evaluate(names[2], sub, cfg, |u| {
        let nl = Null::at(h, &s.g, &direct, u, 0)?;
        let ns = Null::at(h, &s.g, &star, u, 0)?;
        let (_, b) = nl.screen_forms()?;
        let (n, k) = (nl.l.n, nl.k);
        let ts = torsion(&values(&ns.l.gamma), n);
        let mut lhs = Vec::with_capacity(k * k);
        let mut rhs = Vec::with_capacity(k * k);
        for a in 0..k {
            for c in 0..k {
                lhs.push(b[a * k + c] - b[c * k + a]);
                let (wa, wc) = (values(nl.screen_amb(a)), values(nl.screen_amb(c)));
                let mut v: Vec<f64> = values(&nl.bracket(a, c)?);
                for q in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            v[q] += ts[q * n * n + i * n + j] * wa[i] * wc[j];
                        }
                    }
                }
                let vj: Vec<Jet> = v.iter().map(|x| Jet::constant(*x, nl.l.m, 0)).collect();
                rhs.push(nl.l.ip(&vj, &nl.normal).value());
            }
        }
        Ok(Sample::new(two_path(&lhs, &rhs)))
    });

    let tau = evaluate(names[3], sub, cfg, |u| {
        let nl = Null::at(h, &s.g, &direct, u, 0)?;
        let rl = Null::at(h, &s.g, &s.conn, u, 0)?;
        let (m, k) = (nl.l.m, nl.k);
        let dn: Vec<Vec<Jet>> = (0..m).map(|a| nl.l.nabla_along(a, &nl.normal)).collect::<Result<_, _>>()?;
        let comps = values(&nl.decompose(&dn)?);
        let mut lhs = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        let mut normal_pairing = Vec::with_capacity(m);
        for a in 0..m {
            let v = rl.l.nabla_along(a, &rl.normal)?;
            lhs.push(comps[(k + 1) * m + a]);
            rhs.push(rl.l.ip(&v, &rl.xi_amb).value());
            normal_pairing.push(rl.l.ip(&v, &rl.normal).value());
        }
        let mut sample = Sample::new(two_path(&lhs, &rhs));
        for (t, tn) in rhs.iter().zip(&normal_pairing) {
            sample = sample.with("tau", *t).with("tau_normal", *tn);
        }
        Ok(sample)
    });

    vec![pairing, symmetric, torsion_identity, tau]
}

/// Rows `transversal_scaling` (with `ξ̃ = e^{−(φ+ψ)/2}ξ` the transversal of
/// `g̃` is `Ñ = e^{−(φ+ψ)/2}N`), `beta_formula`
/// (`β̃ = e^{(φ+ψ)/2}(β − dφ(N)g')` on the screen) and `verdict_agreement`.
pub fn verify_lightlike_umbilic_preservation(
    s: &StructureInstance,
    t: &TransformData,
    h: &LightlikeHypersurface,
    cfg: &CheckConfig,
) -> Vec<PredicateVerdict> {
    let names = ["transversal_scaling", "beta_formula", "verdict_agreement"];
    let st = transform(s, t);
    let direct = match perturbed(cfg, st.conn.clone(), "lightlike_umbilic") {
        Ok(c) => c,
        Err(v) => return names.iter().map(|n| v.clone().renamed(n)).collect(),
    };
    let e = &h.embedding;
    let sum = e.pull_scalar(&scalar_sum(&t.phi, &t.psi));
    let tilde_at = |u: &[f64]| -> Result<(Null, Null, f64), GeomError> {
        let base = Null::at(h, &s.g, &s.conn, u, 0)?;
        let mut tl = Null::at(h, &st.g, &direct, u, 0)?;
        let sj = sum.eval(u, 1)?.remove(0);
        tl.rescale_radical(&sj.scale(-0.5).exp())?;
        Ok((base, tl, sj.value()))
    };

    let scaling = evaluate(names[0], &e.sub, cfg, |u| {
        let (base, tl, sv) = tilde_at(u)?;
        let w = (-0.5 * sv).exp();
        let want: Vec<f64> = values(&base.normal).iter().map(|v| w * v).collect();
        Ok(Sample::new(two_path(&values(&tl.normal), &want)))
    });

    let formula = evaluate(names[1], &e.sub, cfg, |u| {
        let (base, tl, sv) = tilde_at(u)?;
        let (_, b) = base.screen_forms()?;
        let (_, bt) = tl.screen_forms()?;
        let x = e.point(u)?;
        let dphi = t.phi.eval(&x, 1)?[0].gradient();
        let dn: f64 = dphi.iter().zip(values(&base.normal)).map(|(a, b)| a * b).sum();
        let g = values(&base.screen_metric());
        let w = (0.5 * sv).exp();
        let rhs: Vec<f64> = b.iter().zip(&g).map(|(b, g)| w * (b - dn * g)).collect();
        Ok(Sample::new(two_path(&bt, &rhs)))
    });

    let tol = cfg.tol;
    let agreement = evaluate(names[2], &e.sub, cfg, |u| {
        let (base, tl, _) = tilde_at(u)?;
        let (_, b) = base.screen_forms()?;
        let (_, bt) = tl.screen_forms()?;
        let (_, r) = umbilic_fit(&b, &values(&base.screen_metric()));
        let (_, rt) = umbilic_fit(&bt, &values(&tl.screen_metric()));
        let residual = if (r <= tol) == (rt <= tol) { 0.0 } else { r.max(rt) };
        Ok(Sample::new(residual).with("umbilic_residual", r).with("transformed_umbilic_residual", rt))
    });

    vec![scaling, formula, agreement]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;
    use crate::expr::{parse_expression, Expression};
    use crate::tensor::{eta_tensor_identity, levi_civita};

    const TXY: [&str; 3] = ["t", "x", "y"];
    const UV: [&str; 2] = ["u", "v"];
    const X4: [&str; 4] = ["x0", "x1", "x2", "x3"];
    const ABC: [&str; 3] = ["a", "b", "c"];

    fn ex(s: &str, names: &[&str]) -> Expression {
        parse_expression(s, names).unwrap()
    }

    fn cfg() -> CheckConfig {
        CheckConfig { samples: 60, min_valid_points: 40, ..Default::default() }
    }

    fn minkowski3() -> StructureInstance {
        let g = MetricField::diagonal(vec![ex("-1", &TXY), ex("1", &TXY), ex("1", &TXY)]);
        let chart = Chart::boxed(&TXY, &[-2.0; 3], &[2.0; 3]);
        StructureInstance::new(chart, g, OneFormField::zero(3), ConnectionField::zero(3)).unwrap()
    }

    fn embed3(comps: &[&str], lo: [f64; 2], hi: [f64; 2]) -> EmbeddingMap {
        EmbeddingMap::new(
            Chart::boxed(&TXY, &[-2.0; 3], &[2.0; 3]),
            Chart::boxed(&UV, &lo, &hi),
            comps.iter().map(|c| ex(c, &UV)).collect(),
        )
        .unwrap()
    }

    fn vf(comps: &[&str], names: &[&str]) -> VectorField {
        VectorField::from_exprs(comps.iter().map(|c| ex(c, names)).collect())
    }

    fn null_plane() -> LightlikeHypersurface {
        let e = embed3(&["u", "u", "v"], [-1.0, -1.0], [1.0, 1.0]);
        LightlikeHypersurface::new(e, vec![vf(&["0", "1"], &UV)]).unwrap()
    }

    fn embed4(comps: &[&str]) -> EmbeddingMap {
        EmbeddingMap::new(
            Chart::boxed(&X4, &[-1.0; 4], &[1.0; 4]),
            Chart::boxed(&ABC, &[-0.8; 3], &[0.8; 3]),
            comps.iter().map(|c| ex(c, &ABC)).collect(),
        )
        .unwrap()
    }

    /// Conformally flat metric of signature (3,1) with `∇ = ∇^g + η ⊗ I`.
    fn torsioned4() -> StructureInstance {
        let f = "exp(0.2*x0 + 0.1*x3*x1)";
        let g = MetricField::diagonal(vec![
            ex(f, &X4),
            ex(&format!("-{f}"), &X4),
            ex(f, &X4),
            ex(f, &X4),
        ]);
        let eta = OneFormField::from_exprs(vec![ex("x1", &X4), ex("x0*x3", &X4), ex("1", &X4), ex("x2", &X4)]);
        let conn = levi_civita(&g).plus(&eta_tensor_identity(&eta));
        StructureInstance::new(Chart::boxed(&X4, &[-1.0; 4], &[1.0; 4]), g, eta, conn).unwrap()
    }

    fn slanted4() -> LightlikeHypersurface {
        let e = embed4(&["a", "c", "c", "b"]);
        LightlikeHypersurface::new(e, vec![vf(&["1", "0", "0.5"], &ABC), vf(&["0.3", "1", "0"], &ABC)]).unwrap()
    }

    fn assert_rows(rows: &[PredicateVerdict]) {
        for r in rows {
            assert!(r.pass && !r.is_skip(), "{r:?}");
        }
    }

    #[test]
    fn null_plane_radical_and_transversal() {
        let s = minkowski3();
        let h = null_plane();
        let u = [0.3, -0.2];
        assert_eq!(radical_generator(&h.embedding, &s.g, &u).unwrap(), vec![1.0, 0.0]);
        let n = transversal_n(&h, &s.g, &u).unwrap();
        assert!(max_abs(&[n[0] + 0.5, n[1] - 0.5, n[2]]) < 1e-15, "{n:?}");
        let mut nl = Null::at(&h, &s.g, &s.conn, &u, 0).unwrap();
        nl.rescale_radical(&Jet::constant(2.0, 2, 1)).unwrap();
        let n2 = values(&nl.normal);
        assert!(max_abs(&[n2[0] + 0.25, n2[1] - 0.25, n2[2]]) < 1e-15);
        assert_rows(&check_lightlike_frame(&s, &h, &cfg()));
    }

    #[test]
    fn error_paths() {
        let s = minkowski3();
        let spacelike = embed3(&["0", "u", "v"], [-1.0, -1.0], [1.0, 1.0]);
        assert!(matches!(radical_generator(&spacelike, &s.g, &[0.1, 0.1]), Err(GeomError::Rank(_))));
        let bad = LightlikeHypersurface::new(null_plane().embedding, vec![vf(&["1", "0"], &UV)]).unwrap();
        assert!(matches!(transversal_n(&bad, &s.g, &[0.1, 0.1]), Err(GeomError::Singular(_))));
        assert!(LightlikeHypersurface::new(null_plane().embedding, vec![]).is_err());
    }

    #[test]
    fn light_cone_radical_is_the_ray() {
        let s = minkowski3();
        let e = embed3(&["u", "u*cos(v)", "u*sin(v)"], [0.5, -2.0], [1.5, 2.0]);
        let xi = radical_generator(&e, &s.g, &[0.9, 0.4]).unwrap();
        assert!((xi[0] - 1.0).abs() < 1e-15 && xi[1].abs() < 1e-12);
    }

    #[test]
    fn flat_null_plane_forms_vanish() {
        let s = minkowski3();
        let h = null_plane();
        let (a, b) = Null::at(&h, &s.g, &s.conn, &[0.2, 0.4], 0).unwrap().screen_forms().unwrap();
        assert!(max_abs(&a) + max_abs(&b) < 1e-15);
        let t = TransformData::new(ScalarField::from_expr(3, ex("y", &TXY)), ScalarField::zero(3));
        assert_rows(&verify_lightlike_umbilic_preservation(&s, &t, &h, &cfg()));
        assert_rows(&check_screen_structure(&s, &h, &cfg()));
        assert_rows(&verify_screen_cp_equivalence(&s, &t, &h, &cfg()));
    }

    #[test]
    fn non_involutive_screen_is_detected() {
        let g = MetricField::diagonal(vec![ex("1", &X4), ex("-1", &X4), ex("1", &X4), ex("1", &X4)]);
        let s = StructureInstance::new(Chart::boxed(&X4, &[-1.0; 4], &[1.0; 4]), g, OneFormField::zero(4), ConnectionField::zero(4))
            .unwrap();
        let e = embed4(&["a", "c", "c", "b"]);
        let twisted = LightlikeHypersurface::new(e.clone(), vec![vf(&["1", "0", "0"], &ABC), vf(&["0", "1", "a"], &ABC)]).unwrap();
        let v = screen_integrability(&s, &twisted, &cfg());
        assert!(!v.pass && (v.max_residual - 1.0).abs() < 1e-12, "{v:?}");
        assert!(check_screen_structure(&s, &twisted, &cfg())[0].is_skip());
        let straight = LightlikeHypersurface::new(e, vec![vf(&["1", "0", "0"], &ABC), vf(&["0", "1", "0"], &ABC)]).unwrap();
        assert!(screen_integrability(&s, &straight, &cfg()).pass);
    }

    #[test]
    fn torsioned_ambient_passes_every_row() {
        let (s, h) = (torsioned4(), slanted4());
        let t = TransformData::new(ScalarField::from_expr(4, ex("x0 + x2^2/2", &X4)), ScalarField::from_expr(4, ex("x3*x0/2", &X4)));
        let rows: Vec<PredicateVerdict> = check_lightlike_frame(&s, &h, &cfg())
            .into_iter()
            .chain([screen_integrability(&s, &h, &cfg())])
            .chain(check_screen_structure(&s, &h, &cfg()))
            .chain(verify_screen_cp_equivalence(&s, &t, &h, &cfg()))
            .chain(verify_lightlike_beta(&s, &h, &cfg()))
            .chain(verify_lightlike_umbilic_preservation(&s, &t, &h, &cfg()))
            .collect();
        assert_rows(&rows);
    }

    #[test]
    fn perturbation_breaks_direct_sides() {
        let (s, h) = (torsioned4(), slanted4());
        let t = TransformData::new(ScalarField::from_expr(4, ex("x0 + x2^2/2", &X4)), ScalarField::from_expr(4, ex("x3*x0/2", &X4)));
        let c = cfg().perturbed(1e-3);
        let beta = verify_lightlike_beta(&s, &h, &c);
        let umb = verify_lightlike_umbilic_preservation(&s, &t, &h, &c);
        let cp = verify_screen_cp_equivalence(&s, &t, &h, &c);
        for r in [&beta[0], &beta[2], &beta[3], &umb[1], &cp[0]] {
            assert!(!r.pass, "{r:?}");
        }
        assert!(!check_lightlike_frame(&s, &h, &c)[0].pass);
    }
}

#[cfg(test)]
mod properties {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::chart::Chart;
    use crate::expr::{constant, parse_expression, Expression as E, Func};
    use crate::field::ConnectionField;
    use crate::random::random_expression;
    use crate::testing::rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn null_plane_transversals_meet_their_conditions(seed in any::<u64>()) {
            let cfg = CheckConfig { samples: 40, min_valid_points: 30, ..Default::default() };
            let mut r = rng(seed);
            let factor = E::call(Func::Exp, E::mul(constant(0.3), E::call(Func::Sin, random_expression(&mut r, 3, 2))));
            let g = MetricField::diagonal(vec![E::neg(factor.clone()), factor.clone(), factor]);
            let chart = Chart::boxed(&["t", "x", "y"], &[-2.0; 3], &[2.0; 3]);
            let s = StructureInstance::new(chart.clone(), g, OneFormField::zero(3), ConnectionField::zero(3)).unwrap();
            let uv = |s: &str| parse_expression(s, &["u", "v"]).unwrap();
            let e = EmbeddingMap::new(chart, Chart::boxed(&["u", "v"], &[-1.0; 2], &[1.0; 2]), vec![uv("u"), uv("u"), uv("v")])
                .unwrap();
            let tilt = (r.random_range(-10..=10) as f64) / 10.0;
            let h = LightlikeHypersurface::new(e, vec![VectorField::from_exprs(vec![constant(tilt), constant(1.0)])]).unwrap();
            for v in check_lightlike_frame(&s, &h, &cfg) {
                prop_assert!(v.pass && v.max_residual <= 1e-10, "{:?}", v);
            }
        }
    }
}
