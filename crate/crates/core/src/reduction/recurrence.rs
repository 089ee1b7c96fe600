use nalgebra::DVector;

use super::reduce::{ReducedProblem, RowKind};
use super::spec::DifferentialOperatorSpec;
use crate::error::{Error, Result};
use crate::solvers::grid::{midpoint4, mixed_diff4, Grid};
use crate::solvers::rk4::rk4_half_grid;

fn scalar_field(vals: &[f64]) -> Vec<DVector<f64>> {
    vals.iter().map(|&v| DVector::from_element(1, v)).collect()
}

/// `op u` on the grid by fourth-order differences.
pub fn apply_operator(
    grid: &Grid,
    vals: &[DVector<f64>],
    op: &DifferentialOperatorSpec,
) -> Result<Vec<DVector<f64>>> {
    let dim = vals.first().map_or(0, |v| v.len());
    let mut out = vec![DVector::zeros(dim); vals.len()];
    for term in &op.terms {
        let d = if term.orders.iter().all(|&k| k == 0) {
            vals.to_vec()
        } else {
            mixed_diff4(grid, vals, &term.orders)?
        };
        for (o, di) in out.iter_mut().zip(d) {
            o.axpy(term.coefficient, &di, 1.0);
        }
    }
    Ok(out)
}

/// Solves the rows of the finite system in recursion order and returns the
/// grid samples of every unknown `C_a` in flat order.
pub fn solve_c_recurrence(rp: &ReducedProblem) -> Result<Vec<Vec<f64>>> {
    let grid = &rp.grid;
    let k = rp.k();
    let npts = grid.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let betas: Vec<DVector<f64>> = (0..npts)
        .map(|i| rp.beta(&grid.point(i)))
        .collect::<Result<_>>()?;
    let mut c: Vec<Option<Vec<f64>>> = vec![None; k];
    for row in &rp.rows {
        let col = rp.js.flat_index(row.chain, row.position);
        let mut known = vec![0.0; npts];
        for (a, op) in &row.known {
            let vals = c[*a].as_ref().ok_or_else(|| {
                Error::NotQuasitriangular(format!("unknown {a} used before it is determined"))
            })?;
            let applied = apply_operator(grid, &scalar_field(vals), op)?;
            for (kv, av) in known.iter_mut().zip(applied) {
                *kv += av[0];
            }
        }
        let rhs: Vec<f64> = (0..npts).map(|i| betas[i][col] - known[i]).collect();
        let sol = match &row.kind {
            RowKind::Algebraic { coefficient } => {
                if coefficient.abs() < 1e-14 {
                    return Err(Error::SingularRow(format!(
                        "row {} of chain {} has a vanishing coefficient",
                        row.position + 1,
                        row.chain + 1
                    )));
                }
                rhs.iter().map(|r| r / coefficient).collect()
            }
            RowKind::Differential { axis, coefficients } => {
                solve_row_ode(rp, *axis, coefficients, col, &rhs, &known)?
            }
        };
        c[row.unknown] = Some(sol);
    }
    c.into_iter()
        .enumerate()
        .map(|(a, v)| {
            v.ok_or_else(|| Error::UnderdeterminedRow(format!("no row determines unknown {a}")))
        })
        .collect()
}

/// `sum_i kappa_i d^i C/dx^i = rhs` along every line of `axis`, zero data at the start.
fn solve_row_ode(
    rp: &ReducedProblem,
    axis: usize,
    kappa: &[f64],
    col: usize,
    rhs_nodes: &[f64],
    known: &[f64],
) -> Result<Vec<f64>> {
    let grid = &rp.grid;
    let q = kappa.len() - 1;
    let lead = kappa[q];
    if lead.abs() < 1e-14 {
        return Err(Error::SingularRow(
            "leading coefficient of a C-row vanishes".into(),
        ));
    }
    let h = grid.axes[axis].step();
    let mut out = vec![0.0; grid.len()];
    for line in grid.lines(axis) {
        let n = line.len();
        let known_line: Vec<f64> = line.iter().map(|&i| known[i]).collect();
        let mut half = Vec::with_capacity(2 * n - 1);
        for j in 0..n {
            half.push(rhs_nodes[line[j]]);
            if j + 1 < n {
                let mut p = grid.point(line[j]);
                p[axis] += 0.5 * h;
                let b = rp.beta(&p)?[col];
                half.push(b - midpoint4(&known_line, j));
            }
        }
        let states = rk4_half_grid(DVector::zeros(q), n - 1, h, |hk, y| {
            let mut dy = DVector::zeros(q);
            for i in 0..q - 1 {
                dy[i] = y[i + 1];
            }
            let mut top = half[hk];
            for i in 0..q {
                top -= kappa[i] * y[i];
            }
            dy[q - 1] = top / lead;
            Ok(dy)
        })?;
        for (j, &i) in line.iter().enumerate() {
            out[i] = states[j][0];
        }
    }
    Ok(out)
}

/// `u = B+ v + sum C_a phi_a + sum lambda_e phi_e` at every node. For `m > n`
/// also certifies `Q_{m-n} v = 0` and the compatibility residual.
pub fn reconstruct_solution(
    rp: &ReducedProblem,
    v: &[DVector<f64>],
    c: &[Vec<f64>],
) -> Result<Vec<DVector<f64>>> {
    let grid = &rp.grid;
    if v.len() != grid.len() || c.len() != rp.k() || c.iter().any(|ci| ci.len() != grid.len()) {
        return Err(Error::Usage("v and C samples do not match the grid".into()));
    }
    if let Some(compat) = &rp.compat {
        let fscale = (0..grid.len())
            .map(|i| rp.f.sample(&grid.point(i)).map(|f| f.amax()))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(1.0, f64::max);
        let tol = compat.tolerance * fscale;
        let qv = v
            .iter()
            .map(|vi| (&compat.projector * vi).amax())
            .fold(0.0, f64::max);
        if qv > tol {
            return Err(Error::CompatibilityViolated {
                residual: qv,
                tolerance: tol,
            });
        }
        let r = compatibility_residual(rp, v)?;
        if r > tol {
            return Err(Error::CompatibilityViolated {
                residual: r,
                tolerance: tol,
            });
        }
    }
    let phis = rp.js.phi_flat();
    let extra = rp.js.extra_phi();
    let bplus = rp.ps.bplus.matrix();
    (0..grid.len())
        .map(|i| {
            let mut u = bplus * &v[i];
            for (a, phi) in phis.iter().enumerate() {
                u.axpy(c[a][i], phi, 1.0);
            }
            if !rp.lambda.is_empty() {
                let lam = rp.lambda_values(&grid.point(i))?;
                for (l, phi) in lam.iter().zip(extra) {
                    u.axpy(*l, phi, 1.0);
                }
            }
            Ok(u)
        })
        .collect()
}

/// `sup |Q_{m-n} (sum_r L_r A_r B+ v - f)|` over the grid, zero when `m <= n`.
pub fn compatibility_residual(rp: &ReducedProblem, v: &[DVector<f64>]) -> Result<f64> {
    let Some(compat) = &rp.compat else {
        return Ok(0.0);
    };
    let grid = &rp.grid;
    let bplus = rp.ps.bplus.matrix();
    let mut total: Vec<DVector<f64>> = (0..grid.len())
        .map(|i| {
            rp.f.sample(&grid.point(i))
                .map(|f| -(&compat.projector * f))
        })
        .collect::<Result<_>>()?;
    for (r, a) in rp.a.iter().enumerate() {
        let qab = &compat.projector * a.matrix() * bplus;
        let w: Vec<DVector<f64>> = v.iter().map(|vi| &qab * vi).collect();
        let lw = apply_operator(grid, &w, &rp.l[r + 1])?;
        for (t, x) in total.iter_mut().zip(lw) {
            *t += x;
        }
    }
    Ok(total.iter().map(|x| x.amax()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{FiniteOperator, InnerProductSpace, DEFAULT_RANK_TOL};
    use crate::jordan::{build_jordan_chains, build_projectors};
    use crate::reduction::reduce::reduce;
    use crate::reduction::spec::{DegenerateSystemSpec, Family, RhsField, Settings, SpaceLayout};
    use crate::solvers::grid::Axis;
    use nalgebra::DMatrix;

    fn xy_spec(
        b: DMatrix<f64>,
        f: RhsField,
        l0: Vec<usize>,
        l1: Vec<usize>,
        family: Family,
    ) -> DegenerateSystemSpec {
        let e = InnerProductSpace::euclidean(b.nrows()).into_ref();
        let vars = vec!["x".to_string(), "y".to_string()];
        DegenerateSystemSpec {
            a: vec![FiniteOperator::identity(e.clone())],
            b: FiniteOperator::new(e.clone(), e, b).unwrap(),
            l: vec![
                DifferentialOperatorSpec::monomial(vars.clone(), l0, 1.0).unwrap(),
                DifferentialOperatorSpec::monomial(vars, l1, 1.0).unwrap(),
            ],
            f,
            lambda: vec![],
            family,
            grid: Grid::new(vec![
                Axis::uniform("x", 0.0, 1.0, 21).unwrap(),
                Axis::uniform("y", 0.0, 1.0, 21).unwrap(),
            ])
            .unwrap(),
            e1_layout: SpaceLayout::Plain,
            e2_layout: SpaceLayout::Plain,
            settings: Settings::default(),
        }
    }

    fn reduced(spec: &DegenerateSystemSpec) -> ReducedProblem {
        let js = build_jordan_chains(&spec.b, &spec.a[0], DEFAULT_RANK_TOL).unwrap();
        let ps = build_projectors(&js).unwrap();
        reduce(spec, js, ps).unwrap()
    }

    #[test]
    fn constant_rhs_gives_constant_c() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let f = RhsField::new(|_| Ok(DVector::from_vec(vec![2.0, 3.0])));
        let rp = reduced(&xy_spec(b, f, vec![1, 1], vec![0, 0], Family::Goursat));
        let c = solve_c_recurrence(&rp).unwrap();
        let v = vec![DVector::zeros(2); rp.grid.len()];
        let u = reconstruct_solution(&rp, &v, &c).unwrap();
        for ui in &u {
            assert!((ui[1] - 3.0).abs() < 1e-14);
            assert!(ui[0].abs() < 1e-14);
        }
    }

    #[test]
    fn length_two_chain_uses_mixed_derivative_of_previous_unknown() {
        // B = [[0,1],[0,0]], A = I: psi rows give C_2 = beta_1, C_1 = beta_2 - dxdy C_2
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let f = RhsField::new(|p: &[f64]| Ok(DVector::from_vec(vec![p[0] * p[0] * p[1], p[1]])));
        let rp = reduced(&xy_spec(b, f, vec![1, 1], vec![0, 0], Family::Goursat));
        let c = solve_c_recurrence(&rp).unwrap();
        let v = vec![DVector::zeros(2); rp.grid.len()];
        let u = reconstruct_solution(&rp, &v, &c).unwrap();
        // u_xy-part: (Bu)_xy + u = f with Bu = (u2, 0): u2 = f2 = y, u1 = f1 - d2 y/dxdy = x^2 y
        for (i, ui) in u.iter().enumerate() {
            let p = rp.grid.point(i);
            assert!((ui[1] - p[1]).abs() < 1e-12);
            assert!((ui[0] - p[0] * p[0] * p[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn differential_row_integrates_in_y() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let f = RhsField::new(|p: &[f64]| Ok(DVector::from_vec(vec![0.0, (p[1]).cos()])));
        let rp = reduced(&xy_spec(b, f, vec![2, 0], vec![0, 1], Family::MixedXy));
        let c = solve_c_recurrence(&rp).unwrap();
        let v = vec![DVector::zeros(2); rp.grid.len()];
        let u = reconstruct_solution(&rp, &v, &c).unwrap();
        for (i, ui) in u.iter().enumerate() {
            let y = rp.grid.point(i)[1];
            assert!((ui[1] - y.sin()).abs() < 1e-8);
        }
    }
}
