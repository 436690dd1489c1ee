//! The check registry and the spec runner.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::affine::{
    check_decomposition, check_xi_transforms, verify_curvature_corollaries, verify_realization, verify_xi_transform_laws,
    AffineDistribution,
};
use crate::conformal::{
    verify_conformal_corollaries, verify_conformally_flat, verify_curvature_change, verify_invariance, verify_lemma31,
    verify_ricci_antisymmetry, TransformData,
};
use crate::error::GeomError;
use crate::expr::{eval_jet, finite_difference_oracle};
use crate::hypersurface::{
    check_fundamental_forms, check_induce_structure, fundamental_forms, umbilic_verdict, verify_flat_dual_proposition,
    verify_gauss_equation, verify_induced_cp_equivalence, verify_induction_commutes_with_duality,
    verify_umbilic_preservation, EmbeddingMap,
};
use crate::lightlike::{
    check_lightlike_frame, check_screen_structure, screen_integrability, verify_lightlike_beta,
    verify_lightlike_umbilic_preservation, verify_screen_cp_equivalence, LightlikeHypersurface,
};
use crate::report::{CheckOutcome, CheckReport, OracleEntry, OracleReport, RowOutcome};
use crate::spec::{Expectation, VerificationSpec};
use crate::structures::{
    check_dual_connection, check_semi_dual_connection, verify_prop_q1, verify_prop_q4, StructureInstance,
};
use crate::verdict::{CheckConfig, PredicateVerdict, Status};

/// Spec blocks a check reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Metric,
    Transform,
    /// A transform block with `psi` set.
    Psi,
    Submanifold,
    /// A submanifold of codimension one.
    Hypersurface,
    Lightlike,
    Affine,
}

impl Block {
    pub fn describe(self) -> &'static str {
        match self {
            Block::Metric => "a [metric] block",
            Block::Transform => "a [transform] block",
            Block::Psi => "a [transform] block with `psi`",
            Block::Submanifold => "a [submanifold] block",
            Block::Hypersurface => "a [submanifold] block",
            Block::Lightlike => "a [lightlike] block",
            Block::Affine => "an [affine] block",
        }
    }
}

type RunFn = fn(&Inputs<'_>, &CheckConfig) -> Result<Vec<PredicateVerdict>, GeomError>;

pub struct CheckInfo {
    pub name: &'static str,
    /// The statement under test, written as a formula.
    pub anchor: &'static str,
    pub needs: &'static [Block],
    pub rows: &'static [&'static str],
    run: RunFn,
}

/// The pieces of a spec that checks consume.
pub struct Inputs<'a> {
    pub structure: Option<&'a StructureInstance>,
    pub transform: Option<&'a TransformData>,
    pub submanifold: Option<&'a EmbeddingMap>,
    pub lightlike: Option<&'a LightlikeHypersurface>,
    pub affine: Option<&'a AffineDistribution>,
}

impl<'a> Inputs<'a> {
    pub fn from_spec(spec: &'a VerificationSpec) -> Self {
        Inputs {
            structure: spec.structure.as_ref(),
            transform: spec.transform.as_ref(),
            submanifold: spec.submanifold.as_ref(),
            lightlike: spec.lightlike.as_ref(),
            affine: spec.affine.as_ref(),
        }
    }

    fn s(&self) -> Result<&'a StructureInstance, GeomError> {
        self.structure.ok_or_else(|| missing(Block::Metric))
    }

    fn t(&self) -> Result<&'a TransformData, GeomError> {
        self.transform.ok_or_else(|| missing(Block::Transform))
    }

    fn e(&self) -> Result<&'a EmbeddingMap, GeomError> {
        self.submanifold.ok_or_else(|| missing(Block::Submanifold))
    }

    fn h(&self) -> Result<&'a LightlikeHypersurface, GeomError> {
        self.lightlike.ok_or_else(|| missing(Block::Lightlike))
    }

    fn a(&self) -> Result<&'a AffineDistribution, GeomError> {
        self.affine.ok_or_else(|| missing(Block::Affine))
    }
}

fn missing(b: Block) -> GeomError {
    GeomError::Invalid(format!("needs {}", b.describe()))
}

use Block::*;

static REGISTRY: &[CheckInfo] = &[
    CheckInfo {
        name: "is_statistical",
        anchor: "T = 0 and (∇_X g)(Y,Z) = (∇_Y g)(X,Z)",
        needs: &[Metric],
        rows: &["is_statistical"],
        run: |i, c| Ok(vec![i.s()?.is_statistical(c)]),
    },
    CheckInfo {
        name: "is_smt",
        anchor: "(∇_X g)(Y,Z) = (∇_Y g)(X,Z) − g(T(X,Y),Z)",
        needs: &[Metric],
        rows: &["is_smt"],
        run: |i, c| Ok(vec![i.s()?.is_smt(c)]),
    },
    CheckInfo {
        name: "is_swmt",
        anchor: "(∇_X g)(Y,Z) + η(X)g(Y,Z) = (∇_Y g)(X,Z) + η(Y)g(X,Z) − g(T(X,Y),Z)",
        needs: &[Metric],
        rows: &["is_swmt"],
        run: |i, c| Ok(vec![i.s()?.is_swmt(c)]),
    },
    CheckInfo {
        name: "is_weyl",
        anchor: "T = 0 and ∇g = −η⊗g",
        needs: &[Metric],
        rows: &["is_weyl"],
        run: |i, c| Ok(vec![i.s()?.is_weyl(c)]),
    },
    CheckInfo {
        name: "check_dual_connection",
        anchor: "X g(Y,Z) = g(∇_X Y,Z) + g(Y,∇*_X Z) and (∇*)* = ∇",
        needs: &[Metric],
        rows: &["duality", "involution"],
        run: |i, c| Ok(check_dual_connection(i.s()?, c)),
    },
    CheckInfo {
        name: "check_semi_dual_connection",
        anchor: "X g(Y,Z) = g(∇_X Y,Z) + g(Y,∇*_X Z) − η(X)g(Y,Z); ∇*_g = ∇*_(g,η) − η⊗I",
        needs: &[Metric],
        rows: &["duality", "involution", "remark210"],
        run: |i, c| Ok(check_semi_dual_connection(i.s()?, c)),
    },
    CheckInfo {
        name: "verify_prop_q1",
        anchor: "dual pair: R = 0 ⇔ R* = 0; T* = 0 ⇔ (g,∇) SMT; T = 0 ⇔ (g,∇*) SMT",
        needs: &[Metric],
        rows: &["i", "ii", "iii"],
        run: |i, c| Ok(verify_prop_q1(i.s()?, c)),
    },
    CheckInfo {
        name: "verify_prop_q4",
        anchor: "semi-dual pair: flatness, torsion and SWMT equivalences for (g, η, ∇, ∇*_(g,η))",
        needs: &[Metric],
        rows: &["i", "ii", "iii", "iv"],
        run: |i, c| Ok(verify_prop_q4(i.s()?, c)),
    },
    CheckInfo {
        name: "verify_lemma31",
        anchor: "T^∇̃ = T^∇; (∇̃_X g̃)(Y,Z) − (∇̃_Y g̃)(X,Z) = e^{φ+ψ}((∇_X g)(Y,Z) − (∇_Y g)(X,Z))",
        needs: &[Metric, Transform],
        rows: &["torsion", "scaling"],
        run: |i, c| Ok(verify_lemma31(i.s()?, i.t()?, c)),
    },
    CheckInfo {
        name: "verify_invariance",
        anchor: "SWMT/SMT preserved by g̃ = e^{φ+ψ}g, ∇̃ = ∇ + dφ⊗I + I⊗dφ − g⊗∇ψ; dual transforms with φ, ψ exchanged",
        needs: &[Metric, Transform],
        rows: &["swmt_agreement", "smt_agreement", "dual_law", "dual_law_plain"],
        run: |i, c| Ok(verify_invariance(i.s()?, i.t()?, c)),
    },
    CheckInfo {
        name: "verify_curvature_change",
        anchor: "R̃, Ric̃, scal̃ of the conformal-projective change in terms of (g, ∇, φ, ψ)",
        needs: &[Metric, Transform],
        rows: &["riemann", "ricci", "scalar"],
        run: |i, c| Ok(verify_curvature_change(i.s()?, i.t()?, c)),
    },
    CheckInfo {
        name: "verify_ricci_antisymmetry",
        anchor: "Ric̃(Y,Z) − Ric̃(Z,Y) through ∇g and Hessians, and through torsion traces",
        needs: &[Metric, Transform],
        rows: &["prop34", "prop36", "remark35_phi", "remark35_psi"],
        run: |i, c| Ok(verify_ricci_antisymmetry(i.s()?, i.t()?, c)),
    },
    CheckInfo {
        name: "verify_conformal_corollaries",
        anchor: "φ = 0: curvature change, Ricci antisymmetry, and the cyclic torsion identity along ∇ψ",
        needs: &[Metric, Psi],
        rows: &["cor38", "cor39", "cor310", "cor311"],
        run: |i, c| Ok(verify_conformal_corollaries(i.s()?, &i.t()?.psi, c)),
    },
    CheckInfo {
        name: "verify_conformally_flat",
        anchor: "∇ − g⊗∇ψ flat ⇒ curvature of ∇ determined by ψ and η",
        needs: &[Metric, Psi],
        rows: &["riemann", "ricci", "scalar", "ricci_symmetry"],
        run: |i, c| Ok(verify_conformally_flat(i.s()?, &i.t()?.psi, c)),
    },
    CheckInfo {
        name: "check_induce_structure",
        anchor: "∇_X F_*Y = F_*∇'_X Y + normal part; (g', η', ∇') SWMT when (g, η, ∇) is",
        needs: &[Metric, Submanifold],
        rows: &["swmt", "decomposition"],
        run: |i, c| Ok(check_induce_structure(i.s()?, i.e()?, c)),
    },
    CheckInfo {
        name: "verify_induction_commutes_with_duality",
        anchor: "(∇')*_(g',η') = (∇*_(g,η))'",
        needs: &[Metric, Submanifold],
        rows: &["semi_dual"],
        run: |i, c| Ok(verify_induction_commutes_with_duality(i.s()?, i.e()?, c)),
    },
    CheckInfo {
        name: "verify_induced_cp_equivalence",
        anchor: "inducing the transformed structure equals transforming the induced one by (φ∘F, ψ∘F)",
        needs: &[Metric, Transform, Submanifold],
        rows: &["connection"],
        run: |i, c| Ok(verify_induced_cp_equivalence(i.s()?, i.t()?, i.e()?, c)),
    },
    CheckInfo {
        name: "check_fundamental_forms",
        anchor: "(εα, β) = (β*, εα*); β(X,Y) − β(Y,X) = g(N, T*(X,Y)); Weingarten decomposition",
        needs: &[Metric, Hypersurface],
        rows: &["pairing", "beta_symmetric", "beta_torsion_identity", "weingarten"],
        run: |i, c| Ok(check_fundamental_forms(i.s()?, i.e()?, c)),
    },
    CheckInfo {
        name: "umbilic",
        anchor: "β = c g' at every point",
        needs: &[Metric, Hypersurface],
        rows: &["umbilic"],
        run: |i, c| Ok(vec![umbilic_verdict(&fundamental_forms(i.s()?, i.e()?)?, c)]),
    },
    CheckInfo {
        name: "verify_umbilic_preservation",
        anchor: "β̃ = e^{(φ+ψ)/2}(β − dφ(N) g'); umbilic points preserved",
        needs: &[Metric, Transform, Hypersurface],
        rows: &["beta_formula", "verdict_agreement"],
        run: |i, c| Ok(verify_umbilic_preservation(i.s()?, i.t()?, i.e()?, c)),
    },
    CheckInfo {
        name: "verify_gauss_equation",
        anchor: "g(R(X,Y)Z, W) = g'(R'(X,Y)Z, W) + ε(α(Y,Z)β(X,W) − α(X,Z)β(Y,W)), with the normal part",
        needs: &[Metric, Hypersurface],
        rows: &["gauss"],
        run: |i, c| Ok(verify_gauss_equation(i.s()?, i.e()?, c)),
    },
    CheckInfo {
        name: "verify_flat_dual_proposition",
        anchor: "R* = 0 tangentially and β = f g' ⇒ R^{(∇')*}(X,Y)Z = εf(g'(Y,Z)B*X − g'(X,Z)B*Y)",
        needs: &[Metric, Hypersurface],
        rows: &["curvature", "one_form"],
        run: |i, c| Ok(verify_flat_dual_proposition(i.s()?, i.e()?, c)),
    },
    CheckInfo {
        name: "check_lightlike_frame",
        anchor: "g(ξ, TM') = 0; g(N,ξ) = 1, g(N,N) = 0, g(N, S) = 0",
        needs: &[Metric, Lightlike],
        rows: &["radical", "transversal", "projection"],
        run: |i, c| Ok(check_lightlike_frame(i.s()?, i.h()?, c)),
    },
    CheckInfo {
        name: "screen_integrability",
        anchor: "[W_s, W_t] ∈ S",
        needs: &[Metric, Lightlike],
        rows: &["integrable"],
        run: |i, c| Ok(vec![screen_integrability(i.s()?, i.h()?, c)]),
    },
    CheckInfo {
        name: "check_screen_structure",
        anchor: "induced screen structure (g', η', ∇̄) is SWMT",
        needs: &[Metric, Lightlike],
        rows: &["swmt"],
        run: |i, c| Ok(check_screen_structure(i.s()?, i.h()?, c)),
    },
    CheckInfo {
        name: "verify_screen_cp_equivalence",
        anchor: "∇̄̃_X Y = ∇̄_X Y + dφ'(X)Y + dφ'(Y)X − g'(X,Y)∇̄ψ' on the screen",
        needs: &[Metric, Transform, Lightlike],
        rows: &["coefficients", "radical_invariance"],
        run: |i, c| Ok(verify_screen_cp_equivalence(i.s()?, i.t()?, i.h()?, c)),
    },
    CheckInfo {
        name: "verify_lightlike_beta",
        anchor: "(α, β) = (β*, α*); β(X,Y) − β(Y,X) = g(N, T*(X,Y) + [X,Y]); τ(X) = g(∇_X N, ξ)",
        needs: &[Metric, Lightlike],
        rows: &["pairing", "beta_symmetric", "beta_torsion_identity", "tau"],
        run: |i, c| Ok(verify_lightlike_beta(i.s()?, i.h()?, c)),
    },
    CheckInfo {
        name: "verify_lightlike_umbilic_preservation",
        anchor: "Ñ = e^{−(φ+ψ)/2}N; β̃ law on the screen; umbilic screens preserved",
        needs: &[Metric, Transform, Lightlike],
        rows: &["transversal_scaling", "beta_formula", "verdict_agreement"],
        run: |i, c| Ok(verify_lightlike_umbilic_preservation(i.s()?, i.t()?, i.h()?, c)),
    },
    CheckInfo {
        name: "check_decomposition",
        anchor: "X ω(Y) = ω(∇_X Y) + g(X,Y)ξ; X ξ = −ω(BX) + η(X)ξ; g symmetric",
        needs: &[Affine],
        rows: &["structure_equations", "metric_symmetry"],
        run: |i, c| Ok(check_decomposition(i.a()?, c)),
    },
    CheckInfo {
        name: "verify_realization",
        anchor: "realized (g, η, ∇) is SWMT and R(X,Y)Z = g(Y,Z)B(X) − g(X,Z)B(Y)",
        needs: &[Affine],
        rows: &["swmt", "curvature_law"],
        run: |i, c| Ok(verify_realization(i.a()?, c)),
    },
    CheckInfo {
        name: "verify_curvature_corollaries",
        anchor: "Ric(Y,Z) = g(Y,Z)Σε_i g(BE_i,E_i) − Σε_i g(E_i,Z)g(BY,E_i); scal = (n−1)Σε_i g(BE_i,E_i); B = cI ⇒ scal = c(n−1)(i_p − i_n)",
        needs: &[Affine],
        rows: &[
            "ricci",
            "scalar",
            "ricci_symmetry_criterion",
            "constant_shape_ricci_symmetric",
            "scalar_constant_shape",
        ],
        run: |i, c| Ok(verify_curvature_corollaries(i.a()?, c)),
    },
    CheckInfo {
        name: "check_xi_transforms",
        anchor: "ξ̃ = e^{−ψ}(ω(∇ψ) + ξ) and ξ̃ = ω(∇ψ) + e^{−ψ}ξ stay transversal",
        needs: &[Affine, Psi],
        rows: &["e1_transversal", "e2_transversal", "e1_e2_relation"],
        run: |i, c| Ok(check_xi_transforms(i.a()?, &i.t()?.psi, c)),
    },
    CheckInfo {
        name: "verify_xi_transform_laws",
        anchor: "g̃ = e^ψ g, η̃, ∇̃ = ∇ − (1 or e^ψ) g⊗∇ψ and B̃ under both ξ changes; SWMT of (g̃, η, ∇̃) and (g̃, η̃ − e^ψ dψ, ∇̃)",
        needs: &[Affine, Psi],
        rows: &["e1_laws", "e2_laws", "prop64_swmt", "lemma65", "prop66_swmt", "e2_realized_swmt"],
        run: |i, c| Ok(verify_xi_transform_laws(i.a()?, &i.t()?.psi, c)),
    },
];

pub fn registry() -> &'static [CheckInfo] {
    REGISTRY
}

pub fn find_check(name: &str) -> Option<&'static CheckInfo> {
    REGISTRY.iter().find(|c| c.name == name)
}

impl CheckInfo {
    /// Runs the check; an input error becomes one failed row.
    pub fn execute(&self, inputs: &Inputs<'_>, cfg: &CheckConfig) -> Vec<PredicateVerdict> {
        match (self.run)(inputs, cfg) {
            Ok(rows) => rows,
            Err(e) => vec![PredicateVerdict::failed(self.name, e.to_string())],
        }
    }
}

fn row_met(status: Status, expect: Expectation) -> bool {
    match (expect, status) {
        (_, Status::Skip) => true,
        (Expectation::Pass, s) => s == Status::Pass,
        (Expectation::Fail, s) => s == Status::Fail,
    }
}

/// Runs every requested check. A check expected to pass needs every
/// non-skipped row to pass; a check expected to fail needs at least one of
/// its rows to fail. Row overrides are matched row by row.
pub fn run(spec: &VerificationSpec) -> CheckReport {
    let start = Instant::now();
    let cfg = spec.run.check_config();
    let inputs = Inputs::from_spec(spec);
    let mut checks = Vec::new();
    for req in &spec.checks {
        let info = find_check(&req.name).expect("validated check name");
        let rows = info.execute(&inputs, &cfg);
        let mut outcome_rows = Vec::new();
        let mut default_rows_failed = false;
        let mut default_rows_total = 0usize;
        let mut overrides_met = true;
        for v in rows {
            let expect = req.expect_rows.get(&v.name).copied();
            let met = match expect {
                Some(e) => row_met(v.status, e),
                None => {
                    default_rows_total += 1;
                    default_rows_failed |= v.status == Status::Fail;
                    row_met(v.status, req.expect)
                }
            };
            if expect.is_some() {
                overrides_met &= met;
            }
            outcome_rows.push(RowOutcome::new(&v, expect.unwrap_or(req.expect), met));
        }
        let defaults_met = match req.expect {
            Expectation::Pass => outcome_rows.iter().filter(|r| !req.expect_rows.contains_key(&r.name)).all(|r| r.met),
            Expectation::Fail => default_rows_total == 0 || default_rows_failed,
        };
        checks.push(CheckOutcome::new(info, req.expect, defaults_met && overrides_met, outcome_rows));
    }
    CheckReport::new(checks, &spec.run, start.elapsed().as_secs_f64())
}

/// Symbolic derivatives of every spec expression, up to the run's jet order,
/// against central finite differences at up to 50 sample points of the
/// expression's chart. Orders above one difference the symbolic derivative
/// of one order lower.
pub fn oracle(spec: &VerificationSpec, h: f64) -> OracleReport {
    let order = spec.run.jet_order;
    let mut entries = Vec::new();
    for le in &spec.expressions {
        let chart = if le.dim == spec.chart.dim() {
            spec.chart.clone()
        } else {
            [spec.submanifold.as_ref().map(|e| &e.sub), spec.lightlike.as_ref().map(|l| &l.embedding.sub)]
                .into_iter()
                .flatten()
                .find(|c| c.dim() == le.dim)
                .cloned()
                .unwrap_or_else(|| spec.chart.clone())
        };
        let mut max_err = 0.0f64;
        let mut tested = 0usize;
        for p in chart.sample(spec.run.samples.min(50), spec.run.seed) {
            let Ok(j) = eval_jet(&le.expr, &p.coords, order) else { continue };
            let mut ok = true;
            let mut local = 0.0f64;
            for_each_multi_index(le.dim, order, |idx| {
                let (last, lower) = idx.split_last().expect("non-empty index");
                let inner = lower.iter().fold(le.expr.clone(), |e, &i| e.differentiate(i));
                let exact = match idx.len() {
                    1 => j.d1(idx[0]),
                    2 => j.d2(idx[0], idx[1]),
                    _ => j.d3(idx[0], idx[1], idx[2]),
                };
                match finite_difference_oracle(&inner, &p.coords, *last, h) {
                    Ok(fd) => local = local.max((fd - exact).abs() / (1.0 + exact.abs())),
                    Err(_) => ok = false,
                }
            });
            if ok {
                tested += 1;
                max_err = max_err.max(local);
            }
        }
        entries.push(OracleEntry { label: le.label.clone(), points: tested, max_relative_error: max_err });
    }
    OracleReport::new(entries, order, h)
}

fn for_each_multi_index(dim: usize, order: usize, mut f: impl FnMut(&[usize])) {
    fn rec(dim: usize, left: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if !cur.is_empty() {
            f(cur);
        }
        if left == 0 {
            return;
        }
        for i in start..dim {
            cur.push(i);
            rec(dim, left - 1, i, cur, f);
            cur.pop();
        }
    }
    rec(dim, order, 0, &mut Vec::new(), &mut f);
}

/// Registered rows of each check, for listings.
pub fn traceability() -> BTreeMap<&'static str, (&'static str, &'static [&'static str])> {
    REGISTRY.iter().map(|c| (c.name, (c.anchor, c.rows))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_are_unique() {
        let mut names: Vec<_> = registry().iter().map(|c| c.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), registry().len());
        assert_eq!(traceability().len(), registry().len());
    }

    #[test]
    fn multi_indices_are_sorted_and_complete() {
        let mut seen = Vec::new();
        for_each_multi_index(2, 3, |i| seen.push(i.to_vec()));
        // 2 + 3 + 4 non-decreasing index tuples of length 1, 2, 3.
        assert_eq!(seen.len(), 9);
        assert!(seen.iter().all(|s| s.windows(2).all(|w| w[0] <= w[1])));
    }
}
