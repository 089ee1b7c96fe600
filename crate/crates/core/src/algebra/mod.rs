//! Linear operators between finite-dimensional inner-product spaces.

pub mod dense;
mod operator;
mod space;

pub(crate) use operator::sign_fixed;
pub use operator::{FiniteOperator, KernelKind, WeightedSvd, DEFAULT_RANK_TOL};
pub use space::{InnerProductSpace, Quadrature, SpaceRef, VectorElement};
