//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails.

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semiweyl::chart::Chart;
use semiweyl::conformal::{
    transform, verify_conformal_corollaries, verify_curvature_change, verify_invariance, verify_lemma31,
    verify_ricci_antisymmetry, TransformData,
};
use semiweyl::expr::{eval_jet, finite_difference_oracle};
use semiweyl::field::{ConnectionField, MetricField, OneFormField, ScalarField};
use semiweyl::frame::signature;
use semiweyl::random::{random_point, seeded_expression};
use semiweyl::report::{emit_report, CheckReport, Format, RowOutcome};
use semiweyl::runner::run;
use semiweyl::spec::load_spec;
use semiweyl::structures::StructureInstance;
use semiweyl::tensor::{
    curvature, eta_tensor_identity, inverse_values, levi_civita, max_abs, max_diff, ricci, scalar_curvature, torsion_field,
    values,
};
use semiweyl::verdict::{CheckConfig, Perturbation, PredicateVerdict, Status};
use semiweyl::{parse_expression, Expression};

struct Outcome {
    pass: bool,
    summary: String,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Outcome { pass, summary: summary.into() }
    }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run_fixture(name: &str) -> CheckReport {
    run(&load_spec(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}")))
}

fn row<'a>(report: &'a CheckReport, check: &str, row: &str) -> &'a RowOutcome {
    report
        .checks
        .iter()
        .find(|c| c.name == check)
        .and_then(|c| c.rows.iter().find(|r| r.name == row))
        .unwrap_or_else(|| panic!("no row {check}/{row}"))
}

/// Passing row with residual at most `tol`.
fn within(r: &RowOutcome, tol: f64) -> bool {
    r.verdict == Status::Pass && r.residual <= tol
}

fn ex(s: &str, names: &[&str]) -> Expression {
    parse_expression(s, names).unwrap()
}

fn criterion_1() -> Outcome {
    const EXPRESSIONS: u64 = 120;
    const POINTS: usize = 5;
    let steps = [1e-3, 1e-4];
    let mut worst = [0.0f64; 2];
    let mut r = ChaCha8Rng::seed_from_u64(0xacce);
    for seed in 0..EXPRESSIONS {
        let dim = 1 + (seed % 3) as usize;
        let e = seeded_expression(seed, dim, 4);
        for _ in 0..POINTS {
            let p = random_point(&mut r, dim);
            let j = eval_jet(&e, &p, 1).unwrap();
            for i in 0..dim {
                for (w, &h) in worst.iter_mut().zip(&steps) {
                    let fd = finite_difference_oracle(&e, &p, i, h).unwrap();
                    *w = w.max((fd - j.d1(i)).abs());
                }
            }
        }
    }
    let c: Vec<f64> = worst.iter().zip(&steps).map(|(w, h)| w / (h * h)).collect();
    let ratio = c[1] / c[0];
    Outcome::new(
        (0.5..=2.0).contains(&ratio),
        format!(
            "{EXPRESSIONS} expressions; max dev {:.2e} (h=1e-3), {:.2e} (h=1e-4); C = {:.3}, {:.3}; ratio {ratio:.3}",
            worst[0], worst[1], c[0], c[1]
        ),
    )
}

fn criterion_2() -> Outcome {
    let names = ["u", "v"];
    let chart = Chart::boxed(&names, &[0.3, -3.0], &[2.8, 3.0]);
    let g = MetricField::diagonal(vec![ex("1", &names), ex("sin(u)^2", &names)]);
    let conn = levi_civita(&g);
    let mut worst = 0.0f64;
    for p in chart.sample(200, 0) {
        let gv = values(&g.eval(&p.coords, 0).unwrap());
        let rr = curvature(&conn.eval(&p.coords, 1).unwrap(), 2).unwrap();
        let ginv = inverse_values(&gv, 2).unwrap();
        let scal = scalar_curvature(&ricci(&rr, &gv, &ginv, 2), &ginv, 2);
        worst = worst.max((scal - 2.0).abs());
    }
    let sig = signature(&[-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 3).unwrap();
    Outcome::new(
        worst <= 1e-8 && sig == (2, 1),
        format!("sphere |scal - 2| ≤ {worst:.2e} over 200 points; Minkowski signature {sig:?}"),
    )
}

fn criterion_3() -> Outcome {
    let report = run_fixture("example_2_3.spec");
    let r = row(&report, "is_smt", "is_smt");
    Outcome::new(
        within(r, 1e-10) && r.points_tested >= 150,
        format!("is_smt residual {:.2e} at {} valid points", r.residual, r.points_tested),
    )
}

fn criterion_4() -> Outcome {
    let report = run_fixture("example_2_8.spec");
    let swmt = row(&report, "is_swmt", "is_swmt");
    let inv = row(&report, "check_semi_dual_connection", "involution");
    let law = row(&report, "check_semi_dual_connection", "remark210");
    Outcome::new(
        within(swmt, 1e-10) && within(inv, 1e-11) && within(law, 1e-10),
        format!(
            "is_swmt {:.2e}; involution {:.2e}; ∇*_g = ∇*_(g,η) − η⊗I {:.2e}",
            swmt.residual, inv.residual, law.residual
        ),
    )
}

struct Family {
    name: &'static str,
    instance: StructureInstance,
    transforms: [TransformData; 3],
}

fn families() -> Vec<Family> {
    let xy = ["x", "y"];
    let xyz = ["x", "y", "z"];
    let plane = || Chart::boxed(&xy, &[-1.0; 2], &[1.0; 2]);
    let sc = |s: &str, names: &[&str]| ScalarField::from_expr(names.len(), ex(s, names));
    let t2 = || {
        [
            TransformData::new(sc("x^2", &xy), sc("y + x*y/3", &xy)),
            TransformData::new(sc("sin(x + y)", &xy), sc("0", &xy)),
            TransformData::new(sc("0", &xy), sc("x*y + y^2/2", &xy)),
        ]
    };
    let swmt = |chart: Chart, g: MetricField, eta: OneFormField| {
        let conn = levi_civita(&g).plus(&eta_tensor_identity(&eta));
        StructureInstance::new(chart, g, eta, conn).unwrap()
    };
    let diag = |d: &[&str], names: &[&str]| MetricField::diagonal(d.iter().map(|s| ex(s, names)).collect());
    let form = |d: &[&str], names: &[&str]| OneFormField::from_exprs(d.iter().map(|s| ex(s, names)).collect());

    let f = "exp(x*y + sin(x))";
    let h = ["2 + x^2", "0.3*y", "0.3*y", "1 + exp(0.2*x)"];
    let conformal_h = MetricField::from_exprs(2, h.iter().map(|s| ex(&format!("{f} * ({s})"), &xy)).collect());
    let smt_conn = levi_civita(&MetricField::from_exprs(2, h.iter().map(|s| ex(s, &xy)).collect()))
        .plus(&eta_tensor_identity(&OneFormField::differential(&sc("x*y + sin(x)", &xy))));

    let hessian = MetricField::from_exprs(
        2,
        ["exp(x) - 0.1*sin(x + y)", "-0.1*sin(x + y)", "-0.1*sin(x + y)", "exp(y) - 0.1*sin(x + y)"]
            .iter()
            .map(|s| ex(s, &xy))
            .collect(),
    );

    vec![
        Family {
            name: "swmt 2d",
            instance: swmt(plane(), diag(&["1 + x^2", "2 + sin(y)"], &xy), form(&["y", "x*y"], &xy)),
            transforms: t2(),
        },
        Family {
            name: "swmt 3d",
            instance: swmt(
                Chart::boxed(&xyz, &[-1.0; 3], &[1.0; 3]),
                diag(&["1 + x^2/4", "2 + sin(y)", "1 + z^2/2"], &xyz),
                form(&["y", "x*z", "1 + x"], &xyz),
            ),
            transforms: [
                TransformData::new(sc("x*z/2", &xyz), sc("y + x*z/3", &xyz)),
                TransformData::new(sc("sin(x + y + z)", &xyz), sc("0", &xyz)),
                TransformData::new(sc("0", &xyz), sc("x*y + z^2/2", &xyz)),
            ],
        },
        Family {
            name: "smt e^f g",
            instance: StructureInstance::new(plane(), conformal_h, OneFormField::zero(2), smt_conn).unwrap(),
            transforms: t2(),
        },
        Family {
            name: "hessian statistical",
            instance: StructureInstance::new(plane(), hessian, OneFormField::zero(2), ConnectionField::zero(2)).unwrap(),
            transforms: t2(),
        },
        Family {
            name: "indefinite swmt",
            instance: swmt(plane(), diag(&["-(1 + x^2)", "2 + sin(y)"], &xy), form(&["x", "1 + y^2"], &xy)),
            transforms: t2(),
        },
    ]
}

fn max_residual(rows: &[PredicateVerdict]) -> f64 {
    rows.iter().map(|v| v.max_residual).fold(0.0, f64::max)
}

fn all_pass(rows: &[PredicateVerdict]) -> bool {
    rows.iter().all(|v| v.pass)
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cfg = CheckConfig { samples: 60, min_valid_points: 40, ..Default::default() };
    let mut failures = Vec::new();
    let (mut torsion_dev, mut curv, mut anti, mut cyclic) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut agreements, mut comparisons) = (0usize, 0usize);
    for fam in families() {
        let s = &fam.instance;
        let perturbed = s.with_connection(Perturbation::new(0.1).apply(&s.conn).unwrap());
        if s.is_swmt(&cfg).pass == perturbed.is_swmt(&cfg).pass {
            failures.push(format!("{}: perturbation left the SWMT verdict unchanged", fam.name));
        }
        for (k, t) in fam.transforms.iter().enumerate() {
            let label = format!("{} / transform {}", fam.name, k + 1);
            let st = transform(s, t);
            for p in s.chart.sample(cfg.samples, cfg.seed) {
                let a = values(&torsion_field(&s.conn).eval(&p.coords, 0).unwrap());
                let b = values(&torsion_field(&st.conn).eval(&p.coords, 0).unwrap());
                torsion_dev = torsion_dev.max(max_diff(&a, &b) / (1.0 + max_abs(&a)));
            }
            let lemma = verify_lemma31(s, t, &cfg);
            if !all_pass(&lemma) {
                failures.push(format!("{label}: lemma rows"));
            }
            for inst in [s, &perturbed] {
                for v in verify_invariance(inst, t, &cfg) {
                    if v.name == "swmt_agreement" || v.name == "smt_agreement" {
                        comparisons += 1;
                        agreements += usize::from(v.pass);
                    }
                }
            }
            let cc = verify_curvature_change(s, t, &cfg);
            curv = curv.max(max_residual(&cc));
            let ra = verify_ricci_antisymmetry(s, t, &cfg);
            anti = anti.max(max_residual(&ra));
            if !all_pass(&cc) || !all_pass(&ra) {
                failures.push(format!("{label}: curvature rows"));
            }
            let cor = verify_conformal_corollaries(s, &t.psi, &cfg);
            let c311 = cor.iter().find(|v| v.name == "cor311").unwrap();
            cyclic = cyclic.max(c311.max_residual);
            if !c311.pass {
                failures.push(format!("{label}: cyclic identity"));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = failures.is_empty()
        && torsion_dev <= 1e-12
        && agreements == comparisons
        && curv <= 1e-8
        && anti <= 1e-9
        && cyclic <= 1e-10
        && elapsed < 30.0;
    let mut summary = format!(
        "torsion dev {torsion_dev:.1e}; agreement {agreements}/{comparisons}; curvature {curv:.1e}; \
         antisymmetry {anti:.1e}; cyclic {cyclic:.1e}; {elapsed:.1} s"
    );
    if !failures.is_empty() {
        summary.push_str(&format!("; {}", failures.join(", ")));
    }
    Outcome::new(pass, summary)
}

fn criterion_6() -> Outcome {
    let sphere = run_fixture("euclidean_sphere.spec");
    let cylinder = run_fixture("cylinder.spec");
    let torsioned = run_fixture("sphere_hypersurface.spec");
    let umbilic = row(&sphere, "umbilic", "umbilic");
    let spread = umbilic.details.iter().find(|d| d.name == "factor_spread").map_or(f64::INFINITY, |d| d.max);
    let cyl = row(&cylinder, "umbilic", "umbilic");
    let beta = row(&torsioned, "verify_umbilic_preservation", "beta_formula");
    let agree = row(&torsioned, "verify_umbilic_preservation", "verdict_agreement");
    let gauss = row(&torsioned, "verify_gauss_equation", "gauss");
    let dual = row(&torsioned, "verify_induction_commutes_with_duality", "semi_dual");
    Outcome::new(
        umbilic.verdict == Status::Pass
            && spread <= 1e-8
            && cyl.verdict == Status::Fail
            && within(beta, 1e-9)
            && agree.verdict == Status::Pass
            && within(gauss, 1e-8)
            && within(dual, 1e-10),
        format!(
            "sphere factor spread {spread:.1e}; cylinder umbilic {:?}; β̃ {:.1e}; Gauss {:.1e}; duality {:.1e}",
            cyl.verdict, beta.residual, gauss.residual, dual.residual
        ),
    )
}

fn criterion_7() -> Outcome {
    let report = run_fixture("null_hyperplane.spec");
    let transversal = row(&report, "check_lightlike_frame", "transversal");
    let screen = row(&report, "check_screen_structure", "swmt");
    let cp = row(&report, "verify_screen_cp_equivalence", "coefficients");
    let beta = row(&report, "verify_lightlike_beta", "beta_symmetric");
    Outcome::new(
        within(transversal, 1e-10) && within(screen, 1e-9) && within(cp, 1e-9) && within(beta, 1e-10),
        format!(
            "transversal {:.1e}; screen swmt {:.1e}; two-path {:.1e}; β symmetry {:.1e}",
            transversal.residual, screen.residual, cp.residual, beta.residual
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let report = run_fixture("centroaffine_sphere.spec");
    let elapsed = start.elapsed().as_secs_f64();
    let structure = row(&report, "check_decomposition", "structure_equations");
    let law = row(&report, "verify_realization", "curvature_law");
    let scal_row = row(&report, "verify_curvature_corollaries", "scalar_constant_shape");
    let detail = |name: &str| scal_row.details.iter().find(|d| d.name == name).map(|d| (d.min, d.max));
    let scal = detail("scal").unwrap_or((f64::NAN, f64::NAN));
    let stated = detail("stated").unwrap_or((f64::NAN, f64::NAN));
    let scal_ok = (scal.0 - 2.0).abs() <= 1e-7 && (scal.1 - 2.0).abs() <= 1e-7 && within(scal_row, 1e-7);
    let laws: Vec<&RowOutcome> = ["e1_laws", "e2_laws", "prop64_swmt", "prop66_swmt", "lemma65"]
        .iter()
        .map(|n| row(&report, "verify_xi_transform_laws", n))
        .collect();
    let failing: Vec<String> =
        laws.iter().filter(|r| !within(r, 1e-9)).map(|r| format!("{} {:.2e}", r.name, r.residual)).collect();
    let pass = within(structure, 1e-10) && within(law, 1e-8) && scal_ok && failing.is_empty() && elapsed < 20.0;
    let mut summary = format!(
        "structure {:.1e}; curvature law {:.1e}; scal ∈ [{:.9}, {:.9}] (formula {:.3}); {elapsed:.2} s",
        structure.residual, law.residual, scal.0, scal.1, stated.1
    );
    if !failing.is_empty() {
        summary.push_str(&format!("; over 1e-9: {}", failing.join(", ")));
    }
    Outcome::new(pass, summary)
}

fn fixture_suite() -> Vec<String> {
    let mut names: Vec<String> = ["", "controls/"]
        .iter()
        .flat_map(|dir| {
            std::fs::read_dir(fixture(dir))
                .unwrap()
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.ends_with(".spec"))
                .map(move |n| format!("{dir}{n}"))
        })
        .collect();
    names.sort();
    names
}

fn without_wall_time(json: &str) -> String {
    json.lines().filter(|l| !l.contains("\"wall_time_s\"")).collect::<Vec<_>>().join("\n")
}

fn criterion_9() -> Outcome {
    let names = fixture_suite();
    let mut differing = Vec::new();
    for n in &names {
        let a = without_wall_time(&emit_report(&run_fixture(n), Format::Json));
        let b = without_wall_time(&emit_report(&run_fixture(n), Format::Json));
        if a != b {
            differing.push(n.clone());
        }
    }
    Outcome::new(
        differing.is_empty(),
        format!("{} fixtures run twice; {} differing reports {:?}", names.len(), differing.len(), differing),
    )
}

fn criterion_10() -> Outcome {
    let mut covered = Vec::new();
    let mut false_passes = Vec::new();
    let mut weakest = f64::INFINITY;
    for n in fixture_suite().iter().filter(|n| n.starts_with("controls/")) {
        for c in &run_fixture(n).checks {
            if !(c.name.starts_with("is_") || c.name.starts_with("verify_")) {
                continue;
            }
            covered.push(c.name.clone());
            weakest = weakest.min(c.residual);
            if c.verdict != Status::Fail || c.residual < 1e-3 {
                false_passes.push(format!("{n}:{}", c.name));
            }
        }
    }
    let required: Vec<&str> = semiweyl::runner::registry()
        .iter()
        .map(|c| c.name)
        .filter(|n| n.starts_with("is_") || n.starts_with("verify_"))
        .collect();
    let missing: Vec<&&str> = required.iter().filter(|n| !covered.iter().any(|c| c == *n)).collect();
    Outcome::new(
        false_passes.is_empty() && missing.is_empty(),
        format!(
            "{} control checks; weakest residual {weakest:.2e}; false passes {false_passes:?}; uncovered {missing:?}",
            covered.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle agreement", criterion_1),
        ("classical goldens", criterion_2),
        ("SMT fixture", criterion_3),
        ("SWMT fixture", criterion_4),
        ("conformal-projective suite", criterion_5),
        ("hypersurface suite", criterion_6),
        ("lightlike suite", criterion_7),
        ("affine realization suite", criterion_8),
        ("determinism", criterion_9),
        ("negative controls", criterion_10),
    ];
    let mut failed = 0;
    for (i, (title, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        failed += usize::from(!o.pass);
        println!(
            "criterion {:>2} {:<28} {}  ({:.2} s) {}",
            i + 1,
            title,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.summary
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
