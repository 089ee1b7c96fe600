use std::fmt;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::spec::{DegenerateSystemSpec, DifferentialOperatorSpec, Family, RhsField};
use crate::algebra::FiniteOperator;
use crate::error::{Error, Result};
use crate::jordan::{commutability_data, CommutabilityData, JordanStructure, ProjectorSet};
use crate::probspec::jet;
use crate::probspec::{Bindings, Expr, Var};
use crate::solvers::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectorKind {
    /// `P` (the root part `P_k`, plus `P_{n-m}` when present).
    Root,
    /// `I - P`
    Complement,
}

/// `proj * d^derivative u / d(variable)^derivative = 0` on `variable = start`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCondition {
    pub kind: ProjectorKind,
    pub axis: usize,
    pub variable: String,
    pub at: f64,
    pub derivative: usize,
    pub projector: DMatrix<f64>,
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.kind {
            ProjectorKind::Root => "P",
            ProjectorKind::Complement => "(I-P)",
        };
        let v = &self.variable;
        match self.derivative {
            0 => write!(f, "{p}u|{v}={}", self.at),
            1 => write!(f, "{p}du/d{v}|{v}={}", self.at),
            k => write!(f, "{p}d^{k}u/d{v}^{k}|{v}={}", self.at),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowKind {
    /// `kappa * C = rhs`
    Algebraic { coefficient: f64 },
    /// `sum_i kappa_i d^i C / d(axis)^i = rhs` with zero data at the axis start.
    Differential { axis: usize, coefficients: Vec<f64> },
}

/// One scalar equation of the finite system for `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct CRow {
    /// Row functional `psi_chain^(position + 1)` (0-based).
    pub chain: usize,
    pub position: usize,
    /// Flat index of the unknown this row determines.
    pub unknown: usize,
    pub pivot: DifferentialOperatorSpec,
    /// Already-determined unknowns and the operators acting on them.
    pub known: Vec<(usize, DifferentialOperatorSpec)>,
    pub kind: RowKind,
}

/// `Q_{m-n}` side conditions of the `m > n` case.
#[derive(Debug, Clone, PartialEq)]
pub struct Compatibility {
    pub rank: usize,
    pub projector: DMatrix<f64>,
    pub tolerance: f64,
}

/// Regular equation for `v`, the recursion for `C`, boundary plan and
/// side conditions produced by [`reduce`].
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    pub family: Family,
    pub grid: Grid,
    pub l: Vec<DifferentialOperatorSpec>,
    pub js: JordanStructure,
    pub ps: ProjectorSet,
    pub comm: CommutabilityData,
    /// `Pi A_r B+` for `r = 1..q`, the operator coefficients of `L~`.
    pub ltilde: Vec<DMatrix<f64>>,
    /// `Pi = I - Q_k (- Q_{m-n})` on E2.
    pub projector: DMatrix<f64>,
    pub rows: Vec<CRow>,
    pub lambda_slots: Vec<String>,
    pub compat: Option<Compatibility>,
    pub bc_plan: Vec<BoundaryCondition>,
    pub a: Vec<FiniteOperator>,
    pub f: RhsField,
    pub lambda: Vec<Expr>,
    pub env: Bindings,
    pub outer: Vec<Var>,
    /// `A_r phi_e` for each `r` and extra kernel direction `e`.
    a_phi_extra: Vec<Vec<DVector<f64>>>,
}

/// Projection boundary conditions: for each variable of order `k` in `L0`,
/// `(I-P) d^i u = 0` for `i < k`; for each variable of order `k` in `L1`,
/// `P d^i u = 0` for `i < k`; all on the start of the axis.
pub fn boundary_condition_plan(
    spec: &DegenerateSystemSpec,
    js: &JordanStructure,
    ps: &ProjectorSet,
) -> Result<Vec<BoundaryCondition>> {
    if spec.l.len() < 2 {
        return Err(Error::Spec("L_0 and L_1 are required".into()));
    }
    let d1 = js.e1().dim();
    let mut root = ps.pk.matrix().clone();
    if let Some(pe) = &ps.p_extra {
        root += pe.matrix();
    }
    let comp = DMatrix::identity(d1, d1) - &root;
    let mut plan = Vec::new();
    for (axis, ax) in spec.grid.axes.iter().enumerate() {
        for (which, kind, proj) in [
            (0, ProjectorKind::Complement, &comp),
            (1, ProjectorKind::Root, &root),
        ] {
            for derivative in 0..spec.l[which].order_in(axis) {
                plan.push(BoundaryCondition {
                    kind,
                    axis,
                    variable: ax.name.clone(),
                    at: ax.start(),
                    derivative,
                    projector: proj.clone(),
                });
            }
        }
    }
    Ok(plan)
}

pub fn reduce(
    spec: &DegenerateSystemSpec,
    js: JordanStructure,
    ps: ProjectorSet,
) -> Result<ReducedProblem> {
    spec.validate()?;
    let tol = spec.settings.commute_tol;
    let comm = commutability_data(&spec.b, &spec.a, &js, &ps, tol)?;
    if !comm.mat_b.certified {
        return Err(Error::CommutabilityViolation {
            operator: "B".into(),
            residual: comm.mat_b.residual,
        });
    }
    for (i, c) in comm.mat_a.iter().enumerate() {
        if !c.certified {
            return Err(Error::CommutabilityViolation {
                operator: format!("A_{}", i + 1),
                residual: c.residual,
            });
        }
    }

    let d2 = spec.b.codomain().dim();
    let mut projector = DMatrix::identity(d2, d2) - ps.qk.matrix();
    if let Some(qe) = &ps.q_extra {
        projector -= qe.matrix();
    }
    let ltilde: Vec<DMatrix<f64>> = spec
        .a
        .iter()
        .map(|a| &projector * a.matrix() * ps.bplus.matrix())
        .collect();

    let n_extra = js.extra_phi().len();
    if !spec.lambda.is_empty() && spec.lambda.len() != n_extra {
        return Err(Error::Spec(format!(
            "{} free functions lambda given but the structure has {} unpaired kernel directions",
            spec.lambda.len(),
            n_extra
        )));
    }
    let lambda_slots = (0..n_extra)
        .map(|e| format!("lambda_{}", js.m() + e + 1))
        .collect();
    let a_phi_extra = spec
        .a
        .iter()
        .map(|a| js.extra_phi().iter().map(|p| a.apply_vec(p)).collect())
        .collect();

    let plan = boundary_condition_plan(spec, &js, &ps)?;
    let rows = build_rows(spec, &js, &comm, &plan)?;
    let compat = ps.q_extra.as_ref().map(|q| Compatibility {
        rank: js.extra_psi().len(),
        projector: q.matrix().clone(),
        tolerance: spec.settings.compat_tol,
    });

    Ok(ReducedProblem {
        family: spec.family,
        grid: spec.grid.clone(),
        l: spec.l.clone(),
        js,
        ps,
        comm,
        ltilde,
        projector,
        rows,
        lambda_slots,
        compat,
        bc_plan: plan,
        a: spec.a.clone(),
        f: spec.f.clone(),
        lambda: spec.lambda.clone(),
        env: spec.f.env.clone(),
        outer: spec.outer_vars(),
        a_phi_extra,
    })
}

fn build_rows(
    spec: &DegenerateSystemSpec,
    js: &JordanStructure,
    comm: &CommutabilityData,
    plan: &[BoundaryCondition],
) -> Result<Vec<CRow>> {
    let vars: Vec<String> = spec.grid.axes.iter().map(|a| a.name.clone()).collect();
    let mut sources: Vec<(&DMatrix<f64>, &DifferentialOperatorSpec)> =
        vec![(&comm.mat_b.matrix, &spec.l[0])];
    for (r, c) in comm.mat_a.iter().enumerate() {
        sources.push((&c.matrix, &spec.l[r + 1]));
    }
    let scale = sources.iter().map(|(m, _)| m.amax()).fold(1.0, f64::max);
    let drop = 1e-9 * scale;
    let k = js.k();
    let mut solved = vec![false; k];
    let mut rows = Vec::with_capacity(k);
    for (s, &p) in js.chain_lengths().iter().enumerate() {
        for t in 0..p {
            let c = js.flat_index(s, t);
            let unknown = js.flat_index(s, p - 1 - t);
            let op_for = |a: usize| {
                let parts: Vec<(f64, &DifferentialOperatorSpec)> =
                    sources.iter().map(|(m, l)| (m[(a, c)], *l)).collect();
                DifferentialOperatorSpec::combination(&vars, &parts, drop)
            };
            let pivot = op_for(unknown);
            let mut known = Vec::new();
            for a in 0..k {
                if a == unknown {
                    continue;
                }
                let op = op_for(a);
                if op.is_zero() {
                    continue;
                }
                if !solved[a] {
                    return Err(Error::NotQuasitriangular(format!(
                        "row {} of chain {} couples the undetermined unknown {} ",
                        t + 1,
                        s + 1,
                        a
                    )));
                }
                known.push((a, op));
            }
            if pivot.is_zero() {
                return Err(Error::UnderdeterminedRow(format!(
                    "row {} of chain {} does not involve its unknown",
                    t + 1,
                    s + 1
                )));
            }
            let kind = match pivot.single_axis() {
                None => {
                    return Err(Error::Spec(format!(
                        "row {} of chain {}: operator {pivot} mixes variables",
                        t + 1,
                        s + 1
                    )))
                }
                Some((None, coeffs)) => RowKind::Algebraic {
                    coefficient: coeffs[0],
                },
                Some((Some(axis), coefficients)) => {
                    let q = coefficients.len() - 1;
                    for i in 0..q {
                        let covered = plan.iter().any(|bc| {
                            bc.kind == ProjectorKind::Root && bc.axis == axis && bc.derivative == i
                        });
                        if !covered {
                            return Err(Error::UnderdeterminedRow(format!(
                                "row {} of chain {} needs P d^{i}u/d{}^{i} at the start of the axis, which the boundary plan does not supply",
                                t + 1,
                                s + 1,
                                vars[axis]
                            )));
                        }
                    }
                    RowKind::Differential { axis, coefficients }
                }
            };
            solved[unknown] = true;
            rows.push(CRow {
                chain: s,
                position: t,
                unknown,
                pivot,
                known,
                kind,
            });
        }
    }
    Ok(rows)
}

impl ReducedProblem {
    pub fn k(&self) -> usize {
        self.js.k()
    }

    fn bindings_at(&self, p: &[f64]) -> Bindings {
        let mut b = self.env.clone();
        for (v, x) in self.outer.iter().zip(p) {
            b.set(*v, *x);
        }
        b
    }

    /// `(L_r lambda_e)(p)` for every `r >= 1` and `e`.
    fn lambda_derivatives(&self, p: &[f64]) -> Result<Vec<Vec<f64>>> {
        let env = self.bindings_at(p);
        self.l[1..]
            .iter()
            .map(|l| {
                self.lambda
                    .iter()
                    .map(|e| {
                        let mut acc = 0.0;
                        for term in &l.terms {
                            acc += term.coefficient
                                * jet::derivative(e, &self.outer, p, &env, &term.orders)?;
                        }
                        Ok(acc)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn lambda_values(&self, p: &[f64]) -> Result<Vec<f64>> {
        let env = self.bindings_at(p);
        self.lambda.iter().map(|e| e.eval(&env)).collect()
    }

    /// `sum_r sum_e (L_r lambda_e) A_r phi_e`
    pub fn lambda_terms(&self, p: &[f64]) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.js.e2().dim());
        if self.lambda.is_empty() {
            return Ok(out);
        }
        for (r, ders) in self.lambda_derivatives(p)?.iter().enumerate() {
            for (e, d) in ders.iter().enumerate() {
                out.axpy(*d, &self.a_phi_extra[r][e], 1.0);
            }
        }
        Ok(out)
    }

    fn effective_rhs(&self, p: &[f64]) -> Result<DVector<f64>> {
        let f = self.f.sample(p)?;
        Ok(f - self.lambda_terms(p)?)
    }

    /// Right-hand side of the regular equation for `v`.
    pub fn source(&self, p: &[f64]) -> Result<DVector<f64>> {
        Ok(&self.projector * self.effective_rhs(p)?)
    }

    /// `beta_c = <f - lambda terms, psi_c>` in flat row order.
    pub fn beta(&self, p: &[f64]) -> Result<DVector<f64>> {
        let g = self.effective_rhs(p)?;
        let e2 = self.js.e2();
        Ok(DVector::from_iterator(
            self.k(),
            self.js.psi_flat().iter().map(|psi| e2.inner_vec(&g, psi)),
        ))
    }

    /// Human-readable report with a stable line format.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let names: Vec<&str> = self.grid.axes.iter().map(|a| a.name.as_str()).collect();
        let _ = writeln!(s, "family={}", self.family);
        let _ = writeln!(s, "axes=[{}]", names.join(","));
        for (i, l) in self.l.iter().enumerate() {
            let _ = writeln!(s, "L{i}={l}");
        }
        let mut lt = String::from("L0 v");
        for r in 1..self.l.len() {
            let _ = write!(lt, " + L{r} (A{r} B+) v");
        }
        let _ = writeln!(s, "ltilde={lt}");
        for (r, m) in self.ltilde.iter().enumerate() {
            let _ = writeln!(s, "ltilde_a{}_norm={:.6e}", r + 1, m.norm());
        }
        let rank = |m: &DMatrix<f64>| m.trace().round() as i64;
        let _ = writeln!(s, "rank_pk={}", rank(self.ps.pk.matrix()));
        let _ = writeln!(s, "rank_qk={}", rank(self.ps.qk.matrix()));
        let _ = writeln!(
            s,
            "rank_p_extra={}",
            self.ps.p_extra.as_ref().map_or(0, |p| rank(p.matrix()))
        );
        let _ = writeln!(
            s,
            "rank_q_extra={}",
            self.ps.q_extra.as_ref().map_or(0, |q| rank(q.matrix()))
        );
        let _ = writeln!(s, "lambda_slots=[{}]", self.lambda_slots.join(","));
        match &self.compat {
            Some(c) => {
                let _ = writeln!(s, "compat=rank {} tolerance {:.3e}", c.rank, c.tolerance);
            }
            None => {
                let _ = writeln!(s, "compat=none");
            }
        }
        let pairs = self.js.index_pairs();
        let label = |a: usize| format!("C({},{})", pairs[a].0 + 1, pairs[a].1 + 1);
        for (i, row) in self.rows.iter().enumerate() {
            let kind = match &row.kind {
                RowKind::Algebraic { .. } => "algebraic".to_string(),
                RowKind::Differential { axis, coefficients } => format!(
                    "differential in {} of order {}",
                    names[*axis],
                    coefficients.len() - 1
                ),
            };
            let known: Vec<String> = row
                .known
                .iter()
                .map(|(a, op)| format!("({op}) {}", label(*a)))
                .collect();
            let _ = writeln!(
                s,
                "row[{i}]=psi({},{}) determines {} {kind}: ({}) {} = beta - [{}]",
                row.chain + 1,
                row.position + 1,
                label(row.unknown),
                row.pivot,
                label(row.unknown),
                known.join(", ")
            );
        }
        for (i, bc) in self.bc_plan.iter().enumerate() {
            let _ = writeln!(s, "bc[{i}]={bc}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{InnerProductSpace, DEFAULT_RANK_TOL};
    use crate::jordan::{build_jordan_chains, build_projectors};
    use crate::reduction::spec::{DiffTerm, Settings, SpaceLayout};
    use crate::solvers::grid::Axis;

    fn xy() -> Vec<String> {
        vec!["x".into(), "y".into()]
    }

    fn op(orders: Vec<usize>) -> DifferentialOperatorSpec {
        DifferentialOperatorSpec::monomial(xy(), orders, 1.0).unwrap()
    }

    fn spec_with(
        b: DMatrix<f64>,
        family: Family,
        l0: DifferentialOperatorSpec,
        l1: DifferentialOperatorSpec,
    ) -> DegenerateSystemSpec {
        let d = b.nrows();
        let e = InnerProductSpace::euclidean(d).into_ref();
        let b = FiniteOperator::new(e.clone(), e.clone(), b).unwrap();
        DegenerateSystemSpec {
            a: vec![FiniteOperator::identity(e)],
            b,
            l: vec![l0, l1],
            f: RhsField::new(move |_| Ok(DVector::from_element(d, 1.0))),
            lambda: vec![],
            family,
            grid: Grid::new(vec![
                Axis::uniform("x", 0.0, 1.0, 11).unwrap(),
                Axis::uniform("y", 0.0, 1.0, 11).unwrap(),
            ])
            .unwrap(),
            e1_layout: SpaceLayout::Plain,
            e2_layout: SpaceLayout::Plain,
            settings: Settings::default(),
        }
    }

    fn reduced(spec: &DegenerateSystemSpec) -> Result<ReducedProblem> {
        let js = build_jordan_chains(&spec.b, &spec.a[0], DEFAULT_RANK_TOL)?;
        let ps = build_projectors(&js)?;
        reduce(spec, js, ps)
    }

    #[test]
    fn goursat_plan_and_single_algebraic_row() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let spec = spec_with(b, Family::Goursat, op(vec![1, 1]), op(vec![0, 0]));
        let rp = reduced(&spec).unwrap();
        let plan: Vec<String> = rp.bc_plan.iter().map(|b| b.to_string()).collect();
        assert_eq!(plan, vec!["(I-P)u|x=0", "(I-P)u|y=0"]);
        assert_eq!(rp.rows.len(), 1);
        assert_eq!(rp.rows[0].kind, RowKind::Algebraic { coefficient: 1.0 });
        let beta = rp.beta(&[0.3, 0.4]).unwrap();
        // psi = (0,1) up to sign, C = beta gives u_2 = 1 after multiplying phi
        let phi = rp.js.phi(0, 0);
        assert!((beta[0] * phi[1] - 1.0).abs() < 1e-14);
        assert!(rp.lambda_slots.is_empty() && rp.compat.is_none());
    }

    #[test]
    fn chain_of_length_two_recursion() {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let spec = spec_with(b, Family::Goursat, op(vec![1, 1]), op(vec![0, 0]));
        let rp = reduced(&spec).unwrap();
        assert_eq!(rp.rows.len(), 2);
        assert_eq!(rp.rows[0].unknown, 1);
        assert!(rp.rows[0].known.is_empty());
        assert_eq!(rp.rows[1].unknown, 0);
        assert_eq!(rp.rows[1].known.len(), 1);
        assert_eq!(rp.rows[1].known[0].0, 1);
        assert_eq!(rp.rows[1].known[0].1.to_string(), "1*dx*dy");
    }

    #[test]
    fn mixed_family_rows_are_differential_in_y() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let spec = spec_with(b, Family::MixedXy, op(vec![2, 0]), op(vec![0, 1]));
        let rp = reduced(&spec).unwrap();
        let plan: Vec<String> = rp.bc_plan.iter().map(|b| b.to_string()).collect();
        assert_eq!(plan, vec!["(I-P)u|x=0", "(I-P)du/dx|x=0", "Pu|y=0"]);
        assert_eq!(
            rp.rows[0].kind,
            RowKind::Differential {
                axis: 1,
                coefficients: vec![0.0, 1.0]
            }
        );
        let text = rp.report();
        assert!(text.contains("row[0]=psi(1,1) determines C(1,1) differential in y of order 1"));
        assert_eq!(text, rp.report());
    }

    #[test]
    fn wide_structure_has_lambda_slot() {
        let e3 = InnerProductSpace::euclidean(3).into_ref();
        let e2 = InnerProductSpace::euclidean(2).into_ref();
        let b = FiniteOperator::new(
            e3.clone(),
            e2.clone(),
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        )
        .unwrap();
        let a = FiniteOperator::new(
            e3,
            e2,
            DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        let mut spec = spec_with(
            DMatrix::identity(2, 2),
            Family::Goursat,
            op(vec![1, 1]),
            op(vec![0, 0]),
        );
        spec.b = b;
        spec.a = vec![a];
        let rp = reduced(&spec).unwrap();
        assert_eq!(rp.lambda_slots, vec!["lambda_2".to_string()]);
    }

    #[test]
    fn order_violation_is_a_spec_error() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let spec = spec_with(b, Family::Goursat, op(vec![0, 1]), op(vec![1, 1]));
        assert!(matches!(reduced(&spec), Err(Error::Spec(_))));
    }

    #[test]
    fn uncertified_operator_is_rejected() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let mut spec = spec_with(b, Family::Goursat, op(vec![1, 1]), op(vec![0, 0]));
        let e = spec.b.domain().clone();
        spec.a.push(
            FiniteOperator::new(
                e.clone(),
                e,
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            )
            .unwrap(),
        );
        spec.l.push(DifferentialOperatorSpec::zero(xy()));
        spec.l[1] = DifferentialOperatorSpec::new(
            xy(),
            vec![DiffTerm {
                orders: vec![1, 0],
                coefficient: 1.0,
            }],
        )
        .unwrap();
        match reduced(&spec) {
            Err(Error::CommutabilityViolation { operator, .. }) => assert_eq!(operator, "A_2"),
            other => panic!("{other:?}"),
        }
    }
}
