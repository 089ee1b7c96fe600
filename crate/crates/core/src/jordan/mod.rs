//! Generalized Jordan sets, the projectors they induce, the Schmidt
//! regularizer and commutability certificates.

mod chains;
mod commute;
mod projectors;
mod report;

pub use chains::{build_jordan_chains, JordanStructure, COMPLETENESS_TOL};
pub use commute::{
    commutability_data, commutability_matrix, is_quasitriangular, CommutabilityData,
    CommutabilityMatrix, COMMUTE_TOL,
};
pub use projectors::{
    build_projectors, pseudo_inverse, schmidt_operator, ProjectorSet, SCHMIDT_MAX_CONDITION,
};
pub use report::structure_report;
