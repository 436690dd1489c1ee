//! Coordinate-chart engine for statistical and semi-Weyl structures with
//! torsion, their conformal-projective transformations, and the structures
//! induced on non-degenerate, lightlike and centroaffine submanifolds.

pub mod affine;
pub mod chart;
pub mod conformal;
pub mod error;
pub mod expr;
pub mod field;
pub mod frame;
pub mod hypersurface;
pub mod jet;
pub mod lightlike;
pub mod random;
pub mod report;
pub mod runner;
pub mod spec;
pub mod structures;
pub mod tensor;
#[cfg(test)]
mod testing;
pub mod verdict;

pub use error::GeomError;
pub use expr::{parse_expression, Expression, ParseError};
pub use jet::Jet;
pub use report::{emit_report, CheckReport, Format};
pub use runner::run;
pub use spec::{load_spec, parse_spec, SpecError, VerificationSpec};
pub use verdict::{CheckConfig, PredicateVerdict, Status};
