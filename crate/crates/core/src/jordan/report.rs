use std::fmt::Write as _;

use super::chains::{JordanStructure, COMPLETENESS_TOL};
use super::commute::CommutabilityData;
use super::projectors::ProjectorSet;

/// Line-oriented `key=value` dump of a structure with a stable field order.
pub fn structure_report(
    js: &JordanStructure,
    ps: &ProjectorSet,
    comm: Option<&CommutabilityData>,
) -> String {
    let mut s = String::new();
    let lens: Vec<String> = js.chain_lengths().iter().map(usize::to_string).collect();
    let _ = writeln!(s, "dim_e1={}", js.e1().dim());
    let _ = writeln!(s, "dim_e2={}", js.e2().dim());
    let _ = writeln!(s, "n={}", js.n());
    let _ = writeln!(s, "m={}", js.m());
    let _ = writeln!(s, "l={}", js.l());
    let _ = writeln!(s, "nu={}", js.nu());
    let _ = writeln!(s, "k={}", js.k());
    let _ = writeln!(s, "chain_lengths=[{}]", lens.join(","));
    let _ = writeln!(s, "completeness_sigma={:.6e}", js.completeness_sigma());
    let _ = writeln!(
        s,
        "completeness_certified={}",
        js.l() == 0 || js.completeness_sigma() >= COMPLETENESS_TOL
    );
    let _ = writeln!(s, "link_residual={:.6e}", js.link_residual());
    let _ = writeln!(
        s,
        "biorthogonality_defect={:.6e}",
        js.biorthogonality_defect()
    );
    let _ = writeln!(
        s,
        "projector_idempotence_defect={:.6e}",
        ps.idempotence_defect()
    );
    let _ = writeln!(s, "schmidt_condition={:.6e}", ps.schmidt_condition);
    let _ = writeln!(s, "b_condition={:.6e}", js.b().condition_number());
    let _ = writeln!(s, "p_extra={}", ps.p_extra.is_some());
    let _ = writeln!(s, "q_extra={}", ps.q_extra.is_some());
    if let Some(c) = comm {
        let _ = writeln!(s, "commute_b_residual={:.6e}", c.mat_b.residual);
        let _ = writeln!(s, "commute_b_certified={}", c.mat_b.certified);
        for (i, a) in c.mat_a.iter().enumerate() {
            let _ = writeln!(s, "commute_a{}_residual={:.6e}", i + 1, a.residual);
            let _ = writeln!(s, "commute_a{}_certified={}", i + 1, a.certified);
            let _ = writeln!(
                s,
                "commute_a{}_quasitriangular={}",
                i + 1,
                a.quasitriangular
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{FiniteOperator, InnerProductSpace, DEFAULT_RANK_TOL};
    use crate::jordan::{build_jordan_chains, build_projectors};
    use nalgebra::DMatrix;

    #[test]
    fn report_has_stable_keys() {
        let e = InnerProductSpace::euclidean(2).into_ref();
        let b = FiniteOperator::new(
            e.clone(),
            e.clone(),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
        )
        .unwrap();
        let a = FiniteOperator::identity(e);
        let js = build_jordan_chains(&b, &a, DEFAULT_RANK_TOL).unwrap();
        let ps = build_projectors(&js).unwrap();
        let r = structure_report(&js, &ps, None);
        let keys: Vec<&str> = r.lines().map(|l| l.split('=').next().unwrap()).collect();
        assert_eq!(
            &keys[..8],
            &[
                "dim_e1",
                "dim_e2",
                "n",
                "m",
                "l",
                "nu",
                "k",
                "chain_lengths"
            ]
        );
        assert!(r.contains("k=1\n"));
        assert!(r.contains("chain_lengths=[1]\n"));
        assert_eq!(r, structure_report(&js, &ps, None));
    }
}
