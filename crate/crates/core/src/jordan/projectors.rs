use nalgebra::{DMatrix, DVector};

use super::chains::{rank_sum, JordanStructure};
use crate::algebra::{dense, FiniteOperator};
use crate::error::{Error, Result};

/// Bordered matrices with a condition number above this are treated as singular.
pub const SCHMIDT_MAX_CONDITION: f64 = 1e12;

/// Projectors and regularizing inverses induced by a [`JordanStructure`].
#[derive(Debug, Clone)]
pub struct ProjectorSet {
    /// `P_k` on E1, onto the span of the chains.
    pub pk: FiniteOperator,
    /// `Q_k` on E2, onto the span of the `z` system.
    pub qk: FiniteOperator,
    /// `P_{n-m}` onto the unpaired kernel directions (`n > m` only).
    pub p_extra: Option<FiniteOperator>,
    /// `Q_{m-n}` onto the complement of range `B` not covered by `Q_k` (`m > n` only).
    pub q_extra: Option<FiniteOperator>,
    /// Schmidt regularizer `Gamma`.
    pub gamma: FiniteOperator,
    pub schmidt_condition: f64,
    /// Bounded pseudoinverse `B+ = Gamma (I - Q_k)`.
    pub bplus: FiniteOperator,
}

pub fn build_projectors(js: &JordanStructure) -> Result<ProjectorSet> {
    let e1 = js.e1().clone();
    let e2 = js.e2().clone();
    let pk = FiniteOperator::new(e1.clone(), e1.clone(), js.pk_matrix())?;
    let qk = FiniteOperator::new(e2.clone(), e2.clone(), js.qk_matrix())?;
    let p_extra = (!js.extra_phi().is_empty())
        .then(|| {
            let m = rank_sum(&e1, js.extra_phi(), js.extra_gamma(), e1.dim());
            FiniteOperator::new(e1.clone(), e1.clone(), m)
        })
        .transpose()?;
    let q_extra = (!js.extra_psi().is_empty())
        .then(|| {
            let m = rank_sum(&e2, js.extra_z(), js.extra_psi(), e2.dim());
            FiniteOperator::new(e2.clone(), e2.clone(), m)
        })
        .transpose()?;
    let (gamma, schmidt_condition) = schmidt_operator(js.b(), js)?;
    let mut ps = ProjectorSet {
        pk,
        qk,
        p_extra,
        q_extra,
        bplus: gamma.clone(),
        gamma,
        schmidt_condition,
    };
    ps.bplus = pseudo_inverse(js.b(), &ps)?;
    Ok(ps)
}

/// `Gamma = (B + sum_i <., gamma_i> z_i)^{-1}`, bordered with the extra
/// functionals (`n > m`) or extra `z` directions (`m > n`) so that the
/// system is square. Returns the operator and the bordered matrix's
/// condition number.
pub fn schmidt_operator(b: &FiniteOperator, js: &JordanStructure) -> Result<(FiniteOperator, f64)> {
    let e1 = js.e1();
    let e2 = js.e2();
    let (d1, d2) = (e1.dim(), e2.dim());
    let mut bordered = b.matrix().clone();
    for i in 0..js.l() {
        let g = e1.lower(&js.gamma(i, 0));
        bordered += js.z(i, 0) * g.transpose();
    }
    let square = if d1 > d2 {
        let mut sq = DMatrix::zeros(d1, d1);
        sq.view_mut((0, 0), (d2, d1)).copy_from(&bordered);
        for (r, g) in js.extra_gamma().iter().enumerate() {
            sq.set_row(d2 + r, &e1.lower(g).transpose());
        }
        sq
    } else if d2 > d1 {
        let mut sq = DMatrix::zeros(d2, d2);
        sq.view_mut((0, 0), (d2, d1)).copy_from(&bordered);
        for (r, z) in js.extra_z().iter().enumerate() {
            sq.set_column(d1 + r, z);
        }
        sq
    } else {
        bordered
    };
    let sv = dense::singular_values(&square);
    let smax = sv.first().cloned().unwrap_or(0.0);
    let smin = sv.last().cloned().unwrap_or(0.0);
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(condition < SCHMIDT_MAX_CONDITION) {
        return Err(Error::SchmidtBorderingFailed { condition });
    }
    let inv = square
        .lu()
        .try_inverse()
        .ok_or(Error::SchmidtBorderingFailed { condition })?;
    let gamma = if d1 > d2 {
        inv.columns(0, d2).into_owned()
    } else if d2 > d1 {
        inv.rows(0, d1).into_owned()
    } else {
        inv
    };
    Ok((
        FiniteOperator::new(e2.clone(), e1.clone(), gamma)?,
        condition,
    ))
}

/// `B+ = Gamma (I - Q_k)`: a right inverse of `B` on the complement of the
/// `Q_k` range that vanishes on `span Z`.
pub fn pseudo_inverse(b: &FiniteOperator, ps: &ProjectorSet) -> Result<FiniteOperator> {
    if ps.gamma.domain().dim() != b.codomain().dim() {
        return Err(Error::Usage(
            "projector set does not belong to this operator".into(),
        ));
    }
    let d2 = b.codomain().dim();
    let comp = DMatrix::identity(d2, d2) - ps.qk.matrix();
    FiniteOperator::new(
        b.codomain().clone(),
        b.domain().clone(),
        ps.gamma.matrix() * comp,
    )
}

impl ProjectorSet {
    /// `I - Q_k` on E2 (minus `Q_{m-n}` when present).
    pub fn regular_part_projector(&self) -> DMatrix<f64> {
        let d2 = self.qk.matrix().nrows();
        let mut m = DMatrix::identity(d2, d2) - self.qk.matrix();
        if let Some(q) = &self.q_extra {
            m -= q.matrix();
        }
        m
    }

    pub fn idempotence_defect(&self) -> f64 {
        let d = |p: &FiniteOperator| (p.matrix() * p.matrix() - p.matrix()).amax();
        let mut worst = d(&self.pk).max(d(&self.qk));
        if let Some(p) = &self.p_extra {
            worst = worst.max(d(p));
        }
        if let Some(q) = &self.q_extra {
            worst = worst.max(d(q)).max((q.matrix() * self.qk.matrix()).amax());
        }
        worst
    }

    pub fn rank_pk(&self) -> usize {
        self.pk.matrix().trace().round().max(0.0) as usize
    }

    /// `u = P_k u + (I - P_k) u` reconstructs `u`.
    pub fn split(&self, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let p = self.pk.apply_vec(u);
        let c = u - &p;
        (p, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{InnerProductSpace, KernelKind, Quadrature, DEFAULT_RANK_TOL};
    use crate::jordan::build_jordan_chains;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(d: usize, data: &[f64]) -> FiniteOperator {
        let e = InnerProductSpace::euclidean(d).into_ref();
        FiniteOperator::new(e.clone(), e, DMatrix::from_row_slice(d, d, data)).unwrap()
    }

    #[test]
    fn diagonal_rank_one_projectors() {
        let b = square(2, &[1.0, 0.0, 0.0, 0.0]);
        let a = FiniteOperator::identity(b.domain().clone());
        let js = build_jordan_chains(&b, &a, DEFAULT_RANK_TOL).unwrap();
        let ps = build_projectors(&js).unwrap();
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!((ps.pk.matrix() - &d).amax() < 1e-14);
        assert!((ps.qk.matrix() - &d).amax() < 1e-14);
        assert!((ps.gamma.matrix() - DMatrix::identity(2, 2)).amax() < 1e-14);
        let bp = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((ps.bplus.matrix() - bp).amax() < 1e-14);
        assert_eq!(ps.rank_pk(), 1);
    }

    #[test]
    fn invertible_b_has_exact_inverse() {
        let b = square(2, &[2.0, 1.0, 1.0, 3.0]);
        let a = FiniteOperator::identity(b.domain().clone());
        let js = build_jordan_chains(&b, &a, DEFAULT_RANK_TOL).unwrap();
        let ps = build_projectors(&js).unwrap();
        let inv = b.matrix().clone().try_inverse().unwrap();
        assert!((ps.bplus.matrix() - inv).amax() < 1e-14);
    }

    #[test]
    fn kernel_operator_projector_and_schmidt_identity() {
        let s = InnerProductSpace::quadrature(0.0, 1.0, 201, Quadrature::Simpson)
            .unwrap()
            .into_ref();
        let b =
            FiniteOperator::kernel_operator(s.clone(), KernelKind::IdentityMinusKernel, |x, t| {
                3.0 * x * t
            })
            .unwrap();
        let a = FiniteOperator::identity(s.clone());
        let js = build_jordan_chains(&b, &a, DEFAULT_RANK_TOL).unwrap();
        let ps = build_projectors(&js).unwrap();
        let p =
            FiniteOperator::kernel_operator(s.clone(), KernelKind::KernelOnly, |x, t| 3.0 * x * t)
                .unwrap();
        assert!((ps.pk.matrix() - p.matrix()).amax() < 1e-10);
        // bordering cancels the kernel: Gamma = I
        assert!((ps.gamma.matrix() - DMatrix::identity(201, 201)).amax() < 1e-10);
    }

    #[test]
    fn schmidt_inverts_bordered_operator() {
        let b = square(3, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
        let a = FiniteOperator::identity(b.domain().clone());
        let js = build_jordan_chains(&b, &a, DEFAULT_RANK_TOL).unwrap();
        let (g, cond) = schmidt_operator(&b, &js).unwrap();
        let mut bordered = b.matrix().clone();
        for i in 0..js.l() {
            bordered += js.z(i, 0) * js.gamma(i, 0).transpose();
        }
        assert!((g.matrix() * bordered - DMatrix::identity(3, 3)).amax() < 1e-10);
        assert!(cond.is_finite());
    }

    #[test]
    fn random_rank_deficient_pseudoinverse_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let l = DMatrix::from_fn(6, 4, |_, _| rng.gen_range(-1.0..1.0));
            let r = DMatrix::from_fn(4, 6, |_, _| rng.gen_range(-1.0..1.0));
            let b = square(6, (l * r).transpose().as_slice());
            let a = FiniteOperator::identity(b.domain().clone());
            let js = build_jordan_chains(&b, &a, DEFAULT_RANK_TOL).unwrap();
            let ps = build_projectors(&js).unwrap();
            let bbb = b.matrix() * ps.bplus.matrix() * b.matrix();
            assert!((bbb - b.matrix()).amax() <= 1e-9);
            assert!(ps.idempotence_defect() <= 1e-10);
        }
    }

    #[test]
    fn bplus_vanishes_on_z_and_inverts_on_complement() {
        let b = square(3, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
        let a = FiniteOperator::identity(b.domain().clone());
        let js = build_jordan_chains(&b, &a, DEFAULT_RANK_TOL).unwrap();
        let ps = build_projectors(&js).unwrap();
        for z in js.z_flat() {
            assert!(ps.bplus.apply_vec(&z).amax() < 1e-12);
        }
        let v = DVector::from_vec(vec![0.3, -1.0, 0.7]);
        let vc = &v - ps.qk.apply_vec(&v);
        let back = b.apply_vec(&ps.bplus.apply_vec(&vc));
        assert!((back - vc).amax() < 1e-12);
        // range of B+ misses the chain span
        assert!((ps.pk.matrix() * ps.bplus.matrix()).amax() < 1e-12);
    }

    #[test]
    fn wide_and_tall_cases_have_extra_projectors() {
        let e3 = InnerProductSpace::euclidean(3).into_ref();
        let e2 = InnerProductSpace::euclidean(2).into_ref();
        let b = FiniteOperator::new(
            e3.clone(),
            e2.clone(),
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        )
        .unwrap();
        let a = FiniteOperator::new(
            e3.clone(),
            e2.clone(),
            DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        let js = build_jordan_chains(&b, &a, DEFAULT_RANK_TOL).unwrap();
        let ps = build_projectors(&js).unwrap();
        let pe = ps.p_extra.as_ref().unwrap();
        assert!(ps.idempotence_defect() < 1e-12);
        assert!((pe.matrix() * ps.pk.matrix()).amax() < 1e-12);
        assert!((ps.pk.matrix() * pe.matrix()).amax() < 1e-12);
        let comp = DMatrix::identity(2, 2) - ps.qk.matrix();
        assert!((b.matrix() * ps.bplus.matrix() - &comp).amax() < 1e-12);

        let bt = FiniteOperator::new(
            e2.clone(),
            e3.clone(),
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        )
        .unwrap();
        let at = FiniteOperator::new(
            e2,
            e3,
            DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
        )
        .unwrap();
        let js = build_jordan_chains(&bt, &at, DEFAULT_RANK_TOL).unwrap();
        let ps = build_projectors(&js).unwrap();
        let qe = ps.q_extra.as_ref().unwrap();
        assert!(ps.idempotence_defect() < 1e-12);
        assert!((qe.matrix() * ps.qk.matrix()).amax() < 1e-12);
        for z in js.extra_z() {
            assert!(ps.bplus.apply_vec(z).amax() < 1e-12);
        }
    }
}
