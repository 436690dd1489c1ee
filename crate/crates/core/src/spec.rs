//! Verification spec files (TOML).
//!
//! ```toml
//! [manifold]
//! coords = ["x", "y"]
//! lo = [-1.0, -1.0]
//! hi = [1.0, 1.0]
//!
//! [metric]
//! diagonal = ["exp(x)", "exp(x)"]
//!
//! [connection]
//! base = "levi_civita"
//! terms = ["eta_tensor_I"]
//!
//! [[check]]
//! name = "is_swmt"
//! ```
//!
//! Blocks: `manifold`, `constants`, `metric`, `eta`, `connection`,
//! `transform`, `submanifold`, `lightlike`, `affine`, `[[check]]`, `run`.
//! Syntax and type errors stop at the first one and carry a line and column;
//! semantic validation reports every problem it finds.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::affine::AffineDistribution;
use crate::chart::Chart;
use crate::conformal::TransformData;
use crate::expr::{parse_with_constants, Expression};
use crate::field::{ConnectionField, MetricField, OneFormField, ScalarField, VectorField};
use crate::hypersurface::EmbeddingMap;
use crate::lightlike::LightlikeHypersurface;
use crate::runner::{find_check, Block};
use crate::structures::StructureInstance;
use crate::tensor::{eta_tensor_identity, identity_tensor_form, levi_civita, metric_tensor_vector, gradient};
use crate::verdict::CheckConfig;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Expectation {
    Pass,
    Fail,
}

#[derive(Clone, Debug)]
pub struct CheckRequest {
    pub name: String,
    pub expect: Expectation,
    /// Per-row overrides of `expect`.
    pub expect_rows: BTreeMap<String, Expectation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub min_valid_points: usize,
    pub jet_order: usize,
    pub perturbation: Option<f64>,
}

impl RunConfig {
    pub fn check_config(&self) -> CheckConfig {
        let cfg = CheckConfig {
            samples: self.samples,
            seed: self.seed,
            tol: self.tol,
            min_valid_points: self.min_valid_points,
            perturbation: None,
        };
        match self.perturbation {
            Some(a) => cfg.perturbed(a),
            None => cfg,
        }
    }
}

/// One parsed expression with the chart it lives on, for the oracle.
#[derive(Clone, Debug)]
pub struct LabeledExpression {
    pub label: String,
    pub expr: Expression,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub struct VerificationSpec {
    pub chart: Chart,
    pub structure: Option<StructureInstance>,
    pub transform: Option<TransformData>,
    pub submanifold: Option<EmbeddingMap>,
    pub lightlike: Option<LightlikeHypersurface>,
    pub affine: Option<AffineDistribution>,
    pub checks: Vec<CheckRequest>,
    pub run: RunConfig,
    pub expressions: Vec<LabeledExpression>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    manifold: RawChart,
    #[serde(default)]
    constants: BTreeMap<String, f64>,
    metric: Option<RawMetric>,
    eta: Option<RawComponents>,
    connection: Option<RawConnection>,
    transform: Option<RawTransform>,
    submanifold: Option<RawSub>,
    lightlike: Option<RawLightlike>,
    affine: Option<RawAffine>,
    #[serde(default, rename = "check")]
    checks: Vec<RawCheck>,
    #[serde(default)]
    run: RawRun,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChart {
    dim: Option<usize>,
    coords: Vec<String>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    components: Option<Vec<String>>,
    diagonal: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComponents {
    components: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConnection {
    base: Option<String>,
    components: Option<Vec<String>>,
    levi_civita_of: Option<Vec<String>>,
    #[serde(default)]
    terms: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransform {
    phi: Option<String>,
    psi: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSub {
    coords: Vec<String>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    map: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLightlike {
    coords: Vec<String>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    map: Vec<String>,
    #[serde(default)]
    screen: Vec<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAffine {
    immersion: Option<Vec<String>>,
    omega: Option<Vec<String>>,
    xi: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCheck {
    name: String,
    expect: Option<Expectation>,
    #[serde(default)]
    expect_rows: BTreeMap<String, Expectation>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    samples: Option<usize>,
    seed: Option<u64>,
    tol: Option<f64>,
    min_valid_points: Option<usize>,
    jet_order: Option<usize>,
    perturbation: Option<f64>,
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<VerificationSpec, SpecError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| SpecError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_spec(&text)
}

pub fn parse_spec(text: &str) -> Result<VerificationSpec, SpecError> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_column(text, s.start)).unwrap_or((0, 0));
        SpecError::Syntax { line, column, message: e.message().to_string() }
    })?;
    Builder::default().build(raw)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

#[derive(Default)]
struct Builder {
    errors: Vec<String>,
    constants: Vec<(String, f64)>,
    expressions: Vec<LabeledExpression>,
}

impl Builder {
    fn parse(&mut self, label: &str, text: &str, coords: &[String]) -> Option<Expression> {
        let names: Vec<&str> = coords.iter().map(String::as_str).collect();
        let consts: Vec<(&str, f64)> = self.constants.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        match parse_with_constants(text, &names, &consts) {
            Ok(e) => {
                self.expressions.push(LabeledExpression { label: label.to_string(), expr: e.clone(), dim: names.len() });
                Some(e)
            }
            Err(e) => {
                self.errors.push(format!("{label}: cannot parse `{text}`: {e}"));
                None
            }
        }
    }

    fn parse_all(&mut self, label: &str, texts: &[String], coords: &[String], want: usize) -> Option<Vec<Expression>> {
        if texts.len() != want {
            self.errors.push(format!("{label}: expected {want} expressions, found {}", texts.len()));
            return None;
        }
        let parsed: Vec<Option<Expression>> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| self.parse(&format!("{label}[{i}]"), t, coords))
            .collect();
        parsed.into_iter().collect()
    }

    fn chart(&mut self, label: &str, coords: &[String], lo: &[f64], hi: &[f64]) -> Option<Chart> {
        match Chart::new(coords.to_vec(), lo.to_vec(), hi.to_vec()) {
            Ok(c) => Some(c),
            Err(e) => {
                self.errors.push(format!("{label}: {e}"));
                None
            }
        }
    }

    fn scalar(&mut self, label: &str, text: Option<&str>, coords: &[String]) -> Option<ScalarField> {
        let n = coords.len();
        match text {
            Some(t) => self.parse(label, t, coords).map(|e| ScalarField::from_expr(n, e)),
            None => Some(ScalarField::zero(n)),
        }
    }

    fn build(mut self, raw: RawSpec) -> Result<VerificationSpec, SpecError> {
        self.constants = raw.constants.clone().into_iter().collect();
        let coords = raw.manifold.coords.clone();
        let n = coords.len();
        if let Some(d) = raw.manifold.dim {
            if d != n {
                self.errors.push(format!("manifold: dim = {d} but {n} coordinates are listed"));
            }
        }
        let chart = self.chart("manifold", &coords, &raw.manifold.lo, &raw.manifold.hi);

        let transform = raw.transform.as_ref().map(|t| {
            let phi = self.scalar("transform.phi", t.phi.as_deref(), &coords);
            let psi = self.scalar("transform.psi", t.psi.as_deref(), &coords);
            (phi, psi, t.psi.is_some())
        });
        let (phi, psi, has_psi) = match transform {
            Some((phi, psi, has_psi)) => (phi, psi, has_psi),
            None => (Some(ScalarField::zero(n)), Some(ScalarField::zero(n)), false),
        };

        let structure = raw.metric.as_ref().and_then(|m| {
            let g = self.metric(m, &coords)?;
            let eta = match &raw.eta {
                Some(e) => OneFormField::from_exprs(self.parse_all("eta.components", &e.components, &coords, n)?),
                None => OneFormField::zero(n),
            };
            let conn = self.connection(raw.connection.as_ref(), &g, &eta, phi.as_ref()?, psi.as_ref()?, &coords)?;
            StructureInstance::new(chart.clone()?, g, eta, conn).ok()
        });
        if raw.metric.is_none() && (raw.eta.is_some() || raw.connection.is_some()) {
            self.errors.push("eta/connection blocks need a [metric] block".into());
        }

        let submanifold = raw.submanifold.as_ref().and_then(|s| {
            let sub = self.chart("submanifold", &s.coords, &s.lo, &s.hi)?;
            let map = self.parse_all("submanifold.map", &s.map, &s.coords, n)?;
            self.embedding("submanifold", chart.clone()?, sub, map)
        });
        let lightlike = raw.lightlike.as_ref().and_then(|l| {
            let sub = self.chart("lightlike", &l.coords, &l.lo, &l.hi)?;
            let map = self.parse_all("lightlike.map", &l.map, &l.coords, n)?;
            let m = l.coords.len();
            let mut screen = Vec::new();
            for (i, w) in l.screen.iter().enumerate() {
                screen.push(VectorField::from_exprs(self.parse_all(&format!("lightlike.screen[{i}]"), w, &l.coords, m)?));
            }
            let e = self.embedding("lightlike", chart.clone()?, sub, map)?;
            match LightlikeHypersurface::new(e, screen) {
                Ok(h) => Some(h),
                Err(err) => {
                    self.errors.push(format!("lightlike: {err}"));
                    None
                }
            }
        });
        let affine = raw.affine.as_ref().and_then(|a| self.affine(a, chart.clone()?, &coords));

        let run = self.run(&raw.run, raw.affine.is_some());
        let mut checks = Vec::new();
        for c in &raw.checks {
            let Some(info) = find_check(&c.name) else {
                self.errors.push(format!("unknown check `{}`", c.name));
                continue;
            };
            for need in info.needs {
                let present = match need {
                    Block::Metric => raw.metric.is_some(),
                    Block::Transform => raw.transform.is_some(),
                    Block::Psi => has_psi,
                    Block::Submanifold | Block::Hypersurface => raw.submanifold.is_some(),
                    Block::Lightlike => raw.lightlike.is_some(),
                    Block::Affine => raw.affine.is_some(),
                };
                if !present {
                    self.errors.push(format!("check `{}` needs {}", c.name, need.describe()));
                }
                if *need == Block::Hypersurface && raw.submanifold.as_ref().is_some_and(|s| s.coords.len() + 1 != n) {
                    self.errors.push(format!("check `{}` needs a hypersurface (submanifold of dimension {})", c.name, n - 1));
                }
            }
            for row in c.expect_rows.keys() {
                if !info.rows.contains(&row.as_str()) {
                    self.errors.push(format!("check `{}` has no row `{row}`", c.name));
                }
            }
            checks.push(CheckRequest {
                name: c.name.clone(),
                expect: c.expect.unwrap_or(Expectation::Pass),
                expect_rows: c.expect_rows.clone(),
            });
        }

        if !self.errors.is_empty() {
            return Err(SpecError::Invalid(self.errors));
        }
        let transform = raw.transform.as_ref().map(|_| TransformData::new(phi.unwrap(), psi.unwrap()));
        Ok(VerificationSpec {
            chart: chart.expect("no errors"),
            structure,
            transform,
            submanifold,
            lightlike,
            affine,
            checks,
            run,
            expressions: self.expressions,
        })
    }

    fn metric(&mut self, m: &RawMetric, coords: &[String]) -> Option<MetricField> {
        let n = coords.len();
        match (&m.components, &m.diagonal) {
            (Some(c), None) => Some(MetricField::from_exprs(n, self.parse_all("metric.components", c, coords, n * n)?)),
            (None, Some(d)) => Some(MetricField::diagonal(self.parse_all("metric.diagonal", d, coords, n)?)),
            _ => {
                self.errors.push("metric: give exactly one of `components` or `diagonal`".into());
                None
            }
        }
    }

    fn connection(
        &mut self,
        c: Option<&RawConnection>,
        g: &MetricField,
        eta: &OneFormField,
        phi: &ScalarField,
        psi: &ScalarField,
        coords: &[String],
    ) -> Option<ConnectionField> {
        let n = coords.len();
        let Some(c) = c else {
            return Some(levi_civita(g));
        };
        let base = match (c.base.as_deref(), &c.components) {
            (None | Some("components"), Some(comps)) => {
                ConnectionField::from_exprs(n, self.parse_all("connection.components", comps, coords, n * n * n)?)
            }
            (Some("components"), None) => {
                self.errors.push("connection: base = \"components\" needs `components`".into());
                return None;
            }
            (Some("levi_civita") | None, None) => match &c.levi_civita_of {
                Some(h) => levi_civita(&MetricField::from_exprs(n, self.parse_all("connection.levi_civita_of", h, coords, n * n)?)),
                None => levi_civita(g),
            },
            (Some("zero"), None) => ConnectionField::zero(n),
            (Some(other), _) => {
                self.errors.push(format!("connection: unknown base `{other}` (levi_civita, zero or components)"));
                return None;
            }
        };
        let mut conn = base;
        for (i, term) in c.terms.iter().enumerate() {
            let label = format!("connection.terms[{i}]");
            let t = term.trim();
            let (sign, t) = match t.strip_prefix('-') {
                Some(rest) => (-1.0, rest.trim()),
                None => (1.0, t),
            };
            let (name, arg) = match t.find('(') {
                Some(k) if t.ends_with(')') => (t[..k].trim(), Some(&t[k + 1..t.len() - 1])),
                _ => (t, None),
            };
            let f = |b: &mut Builder, default: &ScalarField| match arg {
                Some(a) => b.parse(&label, a, coords).map(|e| ScalarField::from_expr(n, e)),
                None => Some(default.clone()),
            };
            let piece = match name {
                "eta_tensor_I" if arg.is_none() => eta_tensor_identity(eta),
                "df_tensor_I" => eta_tensor_identity(&OneFormField::differential(&f(self, phi)?)),
                "I_tensor_dphi" => identity_tensor_form(&OneFormField::differential(&f(self, phi)?)),
                "g_tensor_gradient" => metric_tensor_vector(g, &gradient(g, &f(self, psi)?)),
                _ => {
                    self.errors.push(format!(
                        "{label}: unknown term `{term}` (eta_tensor_I, df_tensor_I(f), I_tensor_dphi(f), g_tensor_gradient(f))"
                    ));
                    continue;
                }
            };
            conn = conn.plus(&piece.scaled(sign));
        }
        Some(conn)
    }

    fn embedding(&mut self, label: &str, ambient: Chart, sub: Chart, map: Vec<Expression>) -> Option<EmbeddingMap> {
        match EmbeddingMap::new(ambient, sub, map) {
            Ok(e) => Some(e),
            Err(err) => {
                self.errors.push(format!("{label}: {err}"));
                None
            }
        }
    }

    fn affine(&mut self, a: &RawAffine, chart: Chart, coords: &[String]) -> Option<AffineDistribution> {
        let n = coords.len();
        let xi = self.parse_all("affine.xi", &a.xi, coords, n + 1)?;
        let built = match (&a.immersion, &a.omega) {
            (Some(f), None) => AffineDistribution::immersion(chart, self.parse_all("affine.immersion", f, coords, n + 1)?, xi),
            (None, Some(w)) => AffineDistribution::general(chart, self.parse_all("affine.omega", w, coords, (n + 1) * n)?, xi),
            _ => {
                self.errors.push("affine: give exactly one of `immersion` or `omega`".into());
                return None;
            }
        };
        match built {
            Ok(d) => Some(d),
            Err(e) => {
                self.errors.push(format!("affine: {e}"));
                None
            }
        }
    }

    fn run(&mut self, r: &RawRun, affine: bool) -> RunConfig {
        let run = RunConfig {
            samples: r.samples.unwrap_or(200),
            seed: r.seed.unwrap_or(0),
            tol: r.tol.unwrap_or(1e-8),
            min_valid_points: r.min_valid_points.unwrap_or(50),
            jet_order: r.jet_order.unwrap_or(if affine { 3 } else { 2 }),
            perturbation: r.perturbation,
        };
        if !(1..=3).contains(&run.jet_order) {
            self.errors.push(format!("run.jet_order must be 1, 2 or 3, got {}", run.jet_order));
        }
        if run.samples == 0 {
            self.errors.push("run.samples must be positive".into());
        }
        if run.min_valid_points > run.samples {
            self.errors.push(format!(
                "run.min_valid_points ({}) exceeds run.samples ({})",
                run.min_valid_points, run.samples
            ));
        }
        if !(run.tol > 0.0) {
            self.errors.push("run.tol must be positive".into());
        }
        if run.perturbation.is_some_and(|a| !a.is_finite() || a == 0.0) {
            self.errors.push("run.perturbation must be a nonzero amplitude".into());
        }
        run
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[manifold]
coords = ["x", "y"]
lo = [-1.0, -1.0]
hi = [1.0, 1.0]

[metric]
diagonal = ["1", "1"]

[connection]
base = "levi_civita"

[[check]]
name = "is_statistical"
"#;

    #[test]
    fn minimal_spec_loads() {
        let s = parse_spec(MINIMAL).unwrap();
        assert_eq!(s.checks.len(), 1);
        assert_eq!(s.run.jet_order, 2);
        assert_eq!(s.run.samples, 200);
        assert!(s.structure.is_some());
    }

    #[test]
    fn missing_block_is_named() {
        let text = MINIMAL.replace("is_statistical", "verify_gauss_equation");
        match parse_spec(&text) {
            Err(SpecError::Invalid(errs)) => assert!(errs.iter().any(|e| e.contains("[submanifold]")), "{errs:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_errors_are_collected() {
        let text = MINIMAL
            .replace(r#"diagonal = ["1", "1"]"#, r#"diagonal = ["1 +", "q"]"#)
            .replace("is_statistical", "no_such_check");
        match parse_spec(&text) {
            Err(SpecError::Invalid(errs)) => assert_eq!(errs.len(), 3, "{errs:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let text = MINIMAL.replace("lo = [-1.0, -1.0]", "lo = [-1.0, -1.0");
        match parse_spec(&text) {
            Err(SpecError::Syntax { line, column, .. }) => assert!(line >= 4 && column > 0, "{line}:{column}"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("[[check]]", "[[check]]\nbogus = 1");
        assert!(matches!(parse_spec(&text), Err(SpecError::Syntax { .. })));
    }

    #[test]
    fn affine_block_raises_default_order() {
        let text = r#"
[manifold]
coords = ["t"]
lo = [-1.0]
hi = [1.0]

[affine]
immersion = ["cos(t)", "sin(t)"]
xi = ["-cos(t)", "-sin(t)"]

[[check]]
name = "verify_realization"
"#;
        let s = parse_spec(text).unwrap();
        assert_eq!(s.run.jet_order, 3);
        assert!(s.affine.is_some() && s.structure.is_none());
    }

    #[test]
    fn constants_and_terms_resolve() {
        let text = r#"
[manifold]
coords = ["x", "y"]
lo = [-1.0, -1.0]
hi = [1.0, 1.0]

[constants]
a = 0.5

[metric]
diagonal = ["exp(a*x)", "exp(a*x)"]

[eta]
components = ["y", "a"]

[connection]
levi_civita_of = ["1", "0", "0", "1"]
terms = ["df_tensor_I(a*x)", "eta_tensor_I", "-g_tensor_gradient(x*y)"]

[[check]]
name = "is_statistical"
expect = "fail"
"#;
        let s = parse_spec(text).unwrap();
        assert_eq!(s.checks[0].expect, Expectation::Fail);
        let v = s.structure.unwrap().conn.eval(&[0.2, 0.3], 0).unwrap();
        // Γ^0_00 = a + η_0 − g_00 (∇(xy))^0 = 0.5 + 0.3 − e^{0.1}·e^{−0.1}·0.3.
        assert!((v[0].value() - 0.5).abs() < 1e-14);
    }
}
