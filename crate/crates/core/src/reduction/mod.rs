//! Reduction of `L0 B u + sum L_i A_i u = f` to a regular equation for `v`
//! and a triangular finite system for the chain coefficients `C`.

mod recurrence;
mod reduce;
mod residual;
pub mod spec;

pub use recurrence::{
    apply_operator, compatibility_residual, reconstruct_solution, solve_c_recurrence,
};
pub use reduce::{
    boundary_condition_plan, reduce, BoundaryCondition, CRow, Compatibility, ProjectorKind,
    ReducedProblem, RowKind,
};
pub use residual::{residual_check, ResidualReport};
pub use spec::{
    DegenerateSystemSpec, DiffTerm, DifferentialOperatorSpec, Family, RhsField, Settings,
    SpaceLayout,
};
