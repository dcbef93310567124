// Negated comparisons reject NaN during validation; indexed loops walk parallel
// per-equation arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod euler_states;
pub mod measure;
pub mod mvs_verifier;
pub mod quadrature;
pub mod report;
pub mod riemann_shock;
pub mod rigidity_lab;
pub mod scenario;
pub mod svg;
pub mod wave_cone;
pub mod wild_skeleton;

pub use error::{Error, Result};
