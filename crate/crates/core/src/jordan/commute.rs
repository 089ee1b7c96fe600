use nalgebra::DMatrix;

use super::chains::JordanStructure;
use super::projectors::ProjectorSet;
use crate::algebra::FiniteOperator;
use crate::error::{Error, Result};

/// Default residual tolerance of the commutability certificate.
pub const COMMUTE_TOL: f64 = 1e-8;

/// Matrix `𝒜` of an operator on the root subspace, with `A phi_a = sum_c 𝒜[a][c] z_c`.
#[derive(Debug, Clone)]
pub struct CommutabilityMatrix {
    pub matrix: DMatrix<f64>,
    /// `max(primal, dual, A P_k - Q_k A)` relative residual.
    pub residual: f64,
    pub certified: bool,
    pub quasitriangular: bool,
}

#[derive(Debug, Clone)]
pub struct CommutabilityData {
    /// One entry per `A_i`, `i >= 1`.
    pub mat_a: Vec<CommutabilityMatrix>,
    pub mat_b: CommutabilityMatrix,
}

impl CommutabilityData {
    pub fn all_certified(&self) -> bool {
        self.mat_b.certified && self.mat_a.iter().all(|m| m.certified)
    }
}

pub fn commutability_matrix(
    a: &FiniteOperator,
    js: &JordanStructure,
    ps: &ProjectorSet,
    tol: f64,
) -> Result<CommutabilityMatrix> {
    if a.domain().dim() != js.e1().dim() || a.codomain().dim() != js.e2().dim() {
        return Err(Error::Spec(
            "operator does not act between the spaces of B".into(),
        ));
    }
    let e1 = js.e1();
    let e2 = js.e2();
    let phis = js.phi_flat();
    let psis = js.psi_flat();
    let zs = js.z_flat();
    let gammas = js.gamma_flat();
    let k = phis.len();
    let a_adj = a.adjoint();
    let scale = a.norm().max(1.0);

    let aphi: Vec<_> = phis.iter().map(|p| a.apply_vec(p)).collect();
    let matrix = DMatrix::from_fn(k, k, |r, c| e2.inner_vec(&aphi[r], &psis[c]));

    let mut residual = 0.0_f64;
    for r in 0..k {
        let mut res = aphi[r].clone();
        for c in 0..k {
            res -= &zs[c] * matrix[(r, c)];
        }
        residual = residual.max(e2.norm_vec(&res) / (scale * e1.norm_vec(&phis[r]).max(1e-300)));
    }
    for c in 0..k {
        let mut res = a_adj.apply_vec(&psis[c]);
        for r in 0..k {
            res -= &gammas[r] * matrix[(r, c)];
        }
        residual = residual.max(e1.norm_vec(&res) / (scale * e2.norm_vec(&psis[c]).max(1e-300)));
    }
    let comm = a.matrix() * ps.pk.matrix() - ps.qk.matrix() * a.matrix();
    let denom = (a.matrix().norm() * ps.pk.matrix().norm()).max(1.0);
    residual = residual.max(comm.norm() / denom);

    let quasitriangular = is_quasitriangular(&matrix, &js.chain_lengths(), tol * scale.max(1.0));
    Ok(CommutabilityMatrix {
        certified: residual <= tol,
        matrix,
        residual,
        quasitriangular,
    })
}

/// Block upper quasitriangular pattern: blocks below the block diagonal
/// vanish and, inside each diagonal block of size `p`, entries with
/// `row + col < p - 1` (above the anti-diagonal) vanish.
pub fn is_quasitriangular(m: &DMatrix<f64>, lengths: &[usize], tol: f64) -> bool {
    let mut offsets = Vec::with_capacity(lengths.len() + 1);
    offsets.push(0);
    for p in lengths {
        offsets.push(offsets.last().unwrap() + p);
    }
    for (bi, &p) in lengths.iter().enumerate() {
        let r0 = offsets[bi];
        for (bj, &q) in lengths.iter().enumerate() {
            let c0 = offsets[bj];
            for r in 0..p {
                for c in 0..q {
                    let v = m[(r0 + r, c0 + c)].abs();
                    let must_vanish = bi > bj || (bi == bj && r + c + 1 < p);
                    if must_vanish && v > tol {
                        return false;
                    }
                }
            }
        }
    }
    true
}

pub fn commutability_data(
    b: &FiniteOperator,
    ops: &[FiniteOperator],
    js: &JordanStructure,
    ps: &ProjectorSet,
    tol: f64,
) -> Result<CommutabilityData> {
    let mat_b = commutability_matrix(b, js, ps, tol)?;
    let mat_a = ops
        .iter()
        .map(|a| commutability_matrix(a, js, ps, tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(CommutabilityData { mat_a, mat_b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{InnerProductSpace, DEFAULT_RANK_TOL};
    use crate::jordan::{build_jordan_chains, build_projectors};

    fn square(d: usize, data: &[f64]) -> FiniteOperator {
        let e = InnerProductSpace::euclidean(d).into_ref();
        FiniteOperator::new(e.clone(), e, DMatrix::from_row_slice(d, d, data)).unwrap()
    }

    fn setup(b: &FiniteOperator, a1: &FiniteOperator) -> (JordanStructure, ProjectorSet) {
        let js = build_jordan_chains(b, a1, DEFAULT_RANK_TOL).unwrap();
        let ps = build_projectors(&js).unwrap();
        (js, ps)
    }

    #[test]
    fn zero_operator_is_certified() {
        let b = square(2, &[0.0, 1.0, 0.0, 0.0]);
        let a1 = FiniteOperator::identity(b.domain().clone());
        let (js, ps) = setup(&b, &a1);
        let z = FiniteOperator::zero(b.domain().clone(), b.codomain().clone());
        let c = commutability_matrix(&z, &js, &ps, COMMUTE_TOL).unwrap();
        assert!(c.certified && c.quasitriangular);
        assert_eq!(c.matrix.amax(), 0.0);
    }

    #[test]
    fn a1_gives_anti_identity_and_b_shifted_blocks() {
        // chains of length 3 and 1
        let mut m = DMatrix::zeros(5, 5);
        m[(0, 0)] = 2.0;
        m[(2, 3)] = 1.0;
        m[(3, 4)] = 1.0;
        let b = square(5, m.transpose().as_slice());
        let a1 = FiniteOperator::identity(b.domain().clone());
        let (js, ps) = setup(&b, &a1);
        assert_eq!(js.chain_lengths(), vec![3, 1]);
        let ca = commutability_matrix(&a1, &js, &ps, COMMUTE_TOL).unwrap();
        assert!(ca.certified && ca.quasitriangular);
        let mut anti = DMatrix::zeros(4, 4);
        anti[(0, 2)] = 1.0;
        anti[(1, 1)] = 1.0;
        anti[(2, 0)] = 1.0;
        anti[(3, 3)] = 1.0;
        assert!((&ca.matrix - anti).amax() < 1e-10);

        let cb = commutability_matrix(&b, &js, &ps, COMMUTE_TOL).unwrap();
        assert!(cb.certified && cb.quasitriangular);
        let mut shifted = DMatrix::zeros(4, 4);
        shifted[(1, 2)] = 1.0;
        shifted[(2, 1)] = 1.0;
        assert!((&cb.matrix - shifted).amax() < 1e-10);
    }

    #[test]
    fn identity_on_rank_one_chains() {
        let b = square(3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let a1 = FiniteOperator::identity(b.domain().clone());
        let (js, ps) = setup(&b, &a1);
        let c = commutability_matrix(&a1, &js, &ps, COMMUTE_TOL).unwrap();
        assert!(c.certified);
        assert!((&c.matrix - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn mixing_operator_is_not_certified() {
        let b = square(2, &[1.0, 0.0, 0.0, 0.0]);
        let a1 = FiniteOperator::identity(b.domain().clone());
        let (js, ps) = setup(&b, &a1);
        let a = square(2, &[0.0, 1.0, 0.0, 0.0]);
        let c = commutability_matrix(&a, &js, &ps, COMMUTE_TOL).unwrap();
        assert!(!c.certified);
    }

    #[test]
    fn projection_identities_for_certified_operator() {
        let b = square(3, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
        let a1 = FiniteOperator::identity(b.domain().clone());
        let (js, ps) = setup(&b, &a1);
        // commutes with P_k: acts blockwise on span{e1,e2} and e3
        let a = square(3, &[0.5, 2.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, -1.0]);
        let c = commutability_matrix(&a, &js, &ps, COMMUTE_TOL).unwrap();
        assert!(c.certified && c.quasitriangular);
        let q = ps.qk.matrix();
        let iq = DMatrix::identity(3, 3) - q;
        let abp = a.matrix() * ps.bplus.matrix();
        assert!((q * &abp * &iq).amax() < 1e-8);
        assert!((&iq * &abp * q).amax() < 1e-8);
        let ip = DMatrix::identity(3, 3) - ps.pk.matrix();
        assert!((ip * ps.bplus.matrix() * a.matrix() * ps.pk.matrix()).amax() < 1e-8);
        for phi in js.phi_flat() {
            assert!((&iq * b.matrix() * &phi).amax() < 1e-10);
            assert!((&iq * a.matrix() * &phi).amax() < 1e-10);
        }
    }

    #[test]
    fn quasitriangular_pattern() {
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 1)] = 1.0;
        m[(1, 0)] = 1.0;
        m[(1, 1)] = 4.0;
        m[(0, 2)] = 3.0;
        assert!(is_quasitriangular(&m, &[2, 1], 1e-12));
        m[(2, 0)] = 1.0;
        assert!(!is_quasitriangular(&m, &[2, 1], 1e-12));
        m[(2, 0)] = 0.0;
        m[(0, 0)] = 1.0;
        assert!(!is_quasitriangular(&m, &[2, 1], 1e-12));
    }
}
