//! Shared fixtures for the criterion benches.

use std::path::PathBuf;

use semiweyl::affine::AffineDistribution;
use semiweyl::chart::Chart;
use semiweyl::field::{MetricField, OneFormField};
use semiweyl::spec::{load_spec, VerificationSpec};
use semiweyl::structures::StructureInstance;
use semiweyl::tensor::{eta_tensor_identity, levi_civita};
use semiweyl::{parse_expression, Expression};

const XYZ: [&str; 3] = ["x", "y", "z"];
const UV: [&str; 2] = ["u", "v"];

fn ex(s: &str, names: &[&str]) -> Expression {
    parse_expression(s, names).expect("bench expression parses")
}

pub fn fixture(name: &str) -> VerificationSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    load_spec(&path).expect("bench fixture loads")
}

/// `(g, η, ∇^g + η⊗I)` on the cube `[-1, 1]^3`.
pub fn swmt3() -> StructureInstance {
    let g = MetricField::diagonal(["1 + x^2/4", "2 + sin(y)", "1 + z^2/2"].iter().map(|s| ex(s, &XYZ)).collect());
    let eta = OneFormField::from_exprs(["y", "x*z", "1 + x"].iter().map(|s| ex(s, &XYZ)).collect());
    let conn = levi_civita(&g).plus(&eta_tensor_identity(&eta));
    StructureInstance::new(Chart::boxed(&XYZ, &[-1.0; 3], &[1.0; 3]), g, eta, conn).expect("valid instance")
}

pub fn centroaffine_sphere() -> AffineDistribution {
    let f = ["sin(u)*cos(v)", "sin(u)*sin(v)", "cos(u)"];
    let xi = ["-sin(u)*cos(v)", "-sin(u)*sin(v)", "-cos(u)"];
    AffineDistribution::immersion(
        Chart::boxed(&UV, &[0.4, -2.5], &[2.7, 2.5]),
        f.iter().map(|s| ex(s, &UV)).collect(),
        xi.iter().map(|s| ex(s, &UV)).collect(),
    )
    .expect("valid distribution")
}
