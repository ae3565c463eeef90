//! Mixing-time laboratory for random walks on finite tori `Z_q^m`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod harness;
pub mod montecarlo;
pub mod numeric;
pub mod spectral;
pub mod torus;
pub mod walks;

pub use error::{LabError, Result};
pub use torus::{canonicalize, IncrementDistribution, TorusLattice, TorusVector};
pub use walks::{make_dg_1xn, make_dg_nxn, make_srw, WalkKind, WalkSpec};
