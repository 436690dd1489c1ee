//! Sampled residual checks and their verdicts.

use rayon::prelude::*;
use serde::Serialize;

use crate::chart::Chart;
use crate::error::GeomError;
use crate::field::{ConnectionField, FnField};
use crate::jet::Jet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub amplitude: f64,
}

impl Perturbation {
    pub fn new(amplitude: f64) -> Self {
        Perturbation { amplitude }
    }

    /// `K = a (1 + x0²/2) (∂_1 ⊗ dx0 ⊗ dx0 + ∂_0 ⊗ dx0 ⊗ dx1 + ∂_1 ⊗ dx1 ⊗ dx1)`:
    /// asymmetric, so it adds torsion; its trace `K^a_ja dx^j` is not closed,
    /// so it also moves the antisymmetric part of the Ricci tensor.
    pub fn tensor(&self, n: usize) -> Result<ConnectionField, GeomError> {
        if n < 2 {
            return Err(GeomError::Invalid("perturbations need dimension at least 2".into()));
        }
        let a = self.amplitude;
        Ok(ConnectionField(
            FnField::new(n, n * n * n, move |p, order| {
                let x = Jet::variable(p[0], 0, n, order);
                let c = (&x * &x).scale(0.5 * a).add_const(a);
                let mut out = vec![Jet::zero(n, order); n * n * n];
                out[n * n] = c.clone(); // Γ^1_00
                out[1] = c.clone(); // Γ^0_01
                out[n * n + n + 1] = c; // Γ^1_11
                Ok(out)
            })
            .into_ref(),
        ))
    }

    pub fn apply(&self, c: &ConnectionField) -> Result<ConnectionField, GeomError> {
        Ok(c.plus(&self.tensor(c.dim())?))
    }
}

#[derive(Clone, Debug)]
pub struct CheckConfig {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub min_valid_points: usize,
    /// Added to the directly computed side of every check.
    pub perturbation: Option<Perturbation>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            samples: 200,
            seed: 0,
            tol: 1e-8,
            min_valid_points: 50,
            perturbation: None,
        }
    }
}

impl CheckConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn perturbed(mut self, amplitude: f64) -> Self {
        self.perturbation = Some(Perturbation::new(amplitude));
        self
    }

    pub fn unperturbed(&self) -> Self {
        CheckConfig { perturbation: None, ..self.clone() }
    }

    /// Applies the configured perturbation, if any.
    pub fn direct(&self, c: &ConnectionField) -> Result<ConnectionField, GeomError> {
        match self.perturbation {
            Some(p) => p.apply(c),
            None => Ok(c.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Detail {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PredicateVerdict {
    pub name: String,
    pub max_residual: f64,
    pub points_tested: usize,
    pub points_skipped: usize,
    pub worst_point: Option<Vec<f64>>,
    pub status: Status,
    pub pass: bool,
    pub reason: Option<String>,
    pub details: Vec<Detail>,
}

impl PredicateVerdict {
    pub fn skipped(name: &str, reason: impl Into<String>) -> Self {
        PredicateVerdict {
            name: name.to_string(),
            max_residual: 0.0,
            points_tested: 0,
            points_skipped: 0,
            worst_point: None,
            status: Status::Skip,
            pass: false,
            reason: Some(reason.into()),
            details: Vec::new(),
        }
    }

    pub fn failed(name: &str, reason: impl Into<String>) -> Self {
        PredicateVerdict {
            status: Status::Fail,
            ..PredicateVerdict::skipped(name, reason)
        }
    }

    pub fn is_skip(&self) -> bool {
        self.status == Status::Skip
    }

    pub fn detail(&self, name: &str) -> Option<&Detail> {
        self.details.iter().find(|d| d.name == name)
    }

    pub fn renamed(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn with_detail(mut self, name: &str, min: f64, max: f64) -> Self {
        self.details.push(Detail { name: name.to_string(), min, max });
        self
    }
}

/// Normalized residual at one point plus optional named diagnostics.
#[derive(Clone, Debug, Default)]
pub struct Sample {
    pub residual: f64,
    pub details: Vec<(&'static str, f64)>,
}

impl Sample {
    pub fn new(residual: f64) -> Self {
        Sample { residual, details: Vec::new() }
    }

    pub fn with(mut self, name: &'static str, value: f64) -> Self {
        self.details.push((name, value));
        self
    }
}

/// `max |a − b| / (1 + max(|a|, |b|))`.
pub fn two_path(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "two-path length mismatch");
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        diff = diff.max((x - y).abs());
        scale = scale.max(x.abs()).max(y.abs());
    }
    diff / (1.0 + scale)
}

/// Predicate scale `1 + max |g| · max |Γ|`.
pub fn predicate_scale(g: &[f64], gamma: &[f64]) -> f64 {
    1.0 + crate::tensor::max_abs(g) * crate::tensor::max_abs(gamma)
}

/// Evaluates `f` at the configured sample points of `chart`. Pointwise
/// failures (domain errors, degenerate metrics, singular frames) skip the
/// point; any other error fails the whole check.
pub fn evaluate<F>(name: &str, chart: &Chart, cfg: &CheckConfig, f: F) -> PredicateVerdict
where
    F: Fn(&[f64]) -> Result<Sample, GeomError> + Sync,
{
    let points = chart.sample(cfg.samples, cfg.seed);
    let results: Vec<Result<Sample, GeomError>> = points.par_iter().map(|p| f(&p.coords)).collect();
    let mut v = PredicateVerdict {
        name: name.to_string(),
        max_residual: 0.0,
        points_tested: 0,
        points_skipped: 0,
        worst_point: None,
        status: Status::Pass,
        pass: true,
        reason: None,
        details: Vec::new(),
    };
    let mut first_skip: Option<String> = None;
    for (p, r) in points.iter().zip(results) {
        match r {
            Ok(s) => {
                v.points_tested += 1;
                let res = if s.residual.is_finite() { s.residual } else { f64::INFINITY };
                if res > v.max_residual || v.worst_point.is_none() {
                    v.max_residual = res;
                    v.worst_point = Some(p.coords.clone());
                }
                for (dn, dv) in s.details {
                    match v.details.iter_mut().find(|d| d.name == dn) {
                        Some(d) => {
                            d.min = d.min.min(dv);
                            d.max = d.max.max(dv);
                        }
                        None => v.details.push(Detail { name: dn.to_string(), min: dv, max: dv }),
                    }
                }
            }
            Err(e) if e.is_pointwise() => {
                v.points_skipped += 1;
                first_skip.get_or_insert_with(|| e.to_string());
            }
            Err(e) => return PredicateVerdict::failed(name, e.to_string()),
        }
    }
    if v.points_tested < cfg.min_valid_points {
        v.status = Status::Fail;
        v.reason = Some(format!(
            "only {} valid points (minimum {}); first skip: {}",
            v.points_tested,
            cfg.min_valid_points,
            first_skip.unwrap_or_else(|| "none".into())
        ));
    } else if !(v.max_residual <= cfg.tol) {
        v.status = Status::Fail;
    }
    v.pass = v.status == Status::Pass;
    v
}

/// Agreement of two verdicts. Both passing reports the larger residual; both
/// failing counts as agreement with residual zero; a split fails with the
/// failing side's residual.
pub fn biconditional(name: &str, lhs: &PredicateVerdict, rhs: &PredicateVerdict) -> PredicateVerdict {
    if lhs.is_skip() || rhs.is_skip() {
        let why = lhs.reason.clone().or_else(|| rhs.reason.clone()).unwrap_or_default();
        return PredicateVerdict::skipped(name, why);
    }
    let (status, residual, worst, reason) = match (lhs.pass, rhs.pass) {
        (true, true) => {
            let w = if lhs.max_residual >= rhs.max_residual { &lhs.worst_point } else { &rhs.worst_point };
            (Status::Pass, lhs.max_residual.max(rhs.max_residual), w.clone(), None)
        }
        (false, false) => (Status::Pass, 0.0, None, Some("both sides fail".to_string())),
        (false, true) => (
            Status::Fail,
            lhs.max_residual,
            lhs.worst_point.clone(),
            Some(format!("`{}` fails while `{}` holds", lhs.name, rhs.name)),
        ),
        (true, false) => (
            Status::Fail,
            rhs.max_residual,
            rhs.worst_point.clone(),
            Some(format!("`{}` holds while `{}` fails", lhs.name, rhs.name)),
        ),
    };
    PredicateVerdict {
        name: name.to_string(),
        max_residual: residual,
        points_tested: lhs.points_tested.min(rhs.points_tested),
        points_skipped: lhs.points_skipped.max(rhs.points_skipped),
        worst_point: worst,
        status,
        pass: status == Status::Pass,
        reason,
        details: vec![
            Detail { name: "lhs_residual".into(), min: lhs.max_residual, max: lhs.max_residual },
            Detail { name: "rhs_residual".into(), min: rhs.max_residual, max: rhs.max_residual },
        ],
    }
}

/// Replaces `v` by a skip when the hypothesis `gate` does not hold.
pub fn gated(gate: &PredicateVerdict, v: impl FnOnce() -> PredicateVerdict, name: &str) -> PredicateVerdict {
    if gate.pass {
        v()
    } else {
        hypothesis_skip(gate, name)
    }
}

/// The skip reported for `name` when `gate` does not hold.
pub fn hypothesis_skip(gate: &PredicateVerdict, name: &str) -> PredicateVerdict {
    PredicateVerdict::skipped(
        name,
        format!("hypothesis `{}` not satisfied (residual {:e})", gate.name, gate.max_residual),
    )
}

/// Combines rows that together form one logical verdict (the worst wins).
pub fn all_of(name: &str, parts: &[PredicateVerdict]) -> PredicateVerdict {
    if let Some(s) = parts.iter().find(|p| p.is_skip()) {
        return PredicateVerdict::skipped(name, s.reason.clone().unwrap_or_default());
    }
    let worst = parts
        .iter()
        .max_by(|a, b| a.max_residual.total_cmp(&b.max_residual))
        .expect("non-empty");
    let failing = parts.iter().find(|p| !p.pass);
    let status = if failing.is_some() { Status::Fail } else { Status::Pass };
    PredicateVerdict {
        name: name.to_string(),
        max_residual: worst.max_residual,
        points_tested: parts.iter().map(|p| p.points_tested).min().unwrap_or(0),
        points_skipped: parts.iter().map(|p| p.points_skipped).max().unwrap_or(0),
        worst_point: worst.worst_point.clone(),
        status,
        pass: status == Status::Pass,
        reason: failing.and_then(|f| f.reason.clone().or_else(|| Some(format!("`{}` fails", f.name)))),
        details: parts
            .iter()
            .map(|p| Detail { name: p.name.clone(), min: p.max_residual, max: p.max_residual })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> Chart {
        Chart::boxed(&["x", "y"], &[-1.0, -1.0], &[1.0, 1.0])
    }

    #[test]
    fn skips_pointwise_errors_and_enforces_minimum() {
        let cfg = CheckConfig { samples: 100, min_valid_points: 60, ..Default::default() };
        let v = evaluate("half", &chart(), &cfg, |p| {
            if p[0] < 0.0 {
                Err(GeomError::Domain("left half".into()))
            } else {
                Ok(Sample::new(0.0))
            }
        });
        assert_eq!(v.points_tested + v.points_skipped, 100);
        assert!(v.points_skipped > 30);
        assert_eq!(v.status, Status::Fail);
        assert!(v.reason.unwrap().contains("valid points"));
    }

    #[test]
    fn tolerance_gates_and_worst_point_is_recorded() {
        let cfg = CheckConfig::default();
        let v = evaluate("bump", &chart(), &cfg, |p| Ok(Sample::new(1e-9 * p[0].abs())));
        assert!(v.pass);
        let w = v.worst_point.unwrap();
        assert!((1e-9 * w[0].abs() - v.max_residual).abs() < 1e-24);
        let strict = evaluate("bump", &chart(), &cfg.with_tol(1e-30), |p| Ok(Sample::new(1e-9 * p[0].abs())));
        assert!(!strict.pass);
    }

    #[test]
    fn biconditional_cases() {
        let cfg = CheckConfig::default();
        let ok = evaluate("ok", &chart(), &cfg, |_| Ok(Sample::new(0.0)));
        let bad = evaluate("bad", &chart(), &cfg, |_| Ok(Sample::new(0.5)));
        assert!(biconditional("a", &ok, &ok).pass);
        let both = biconditional("b", &bad, &bad);
        assert!(both.pass && both.max_residual == 0.0);
        let split = biconditional("c", &ok, &bad);
        assert!(!split.pass && split.max_residual == 0.5);
    }

    #[test]
    fn two_path_is_relative() {
        assert_eq!(two_path(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((two_path(&[100.0], &[101.0]) - 1.0 / 102.0).abs() < 1e-15);
    }
}
