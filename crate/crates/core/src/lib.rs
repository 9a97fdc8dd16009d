//! Numerical laboratory for sums of i.i.d. stretched-exponential variables
//! conditioned on a large deviation.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod density;
pub mod error;
pub mod oracle;
pub mod paths;
pub mod quadrature;
pub mod ratefn;
pub mod sampler;
pub mod seeds;
pub mod table;
pub mod variational;

pub use density::{ExponentKind, ExponentModel, ModelSpec, Perturbation, PerturbedDensity};
pub use error::{Error, Result};

/// Float formatting shared by every CSV and JSON writer: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
