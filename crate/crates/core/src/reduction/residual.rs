use std::fmt::Write as _;

use nalgebra::DVector;

use super::reduce::BoundaryCondition;
use super::spec::DegenerateSystemSpec;
use crate::error::{Error, Result};
use crate::solvers::grid::{centered_at, centered_halfwidth, one_sided_start};

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `max |L0 B u + sum L_i A_i u - f|` over interior nodes.
    pub equation: f64,
    pub interior_nodes: usize,
    /// Sup-norm of each boundary condition, in plan order.
    pub conditions: Vec<(String, f64)>,
}

impl ResidualReport {
    pub fn worst_condition(&self) -> f64 {
        self.conditions.iter().map(|c| c.1).fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "equation_residual={:.6e}", self.equation);
        let _ = writeln!(s, "interior_nodes={}", self.interior_nodes);
        for (name, v) in &self.conditions {
            let _ = writeln!(s, "condition {name}={v:.6e}");
        }
        s
    }
}

/// Evaluates the equation by second-order centered differences on interior
/// nodes and each projection condition by one-sided differences on its
/// boundary. `u` holds E1 samples on `spec.grid`.
pub fn residual_check(
    spec: &DegenerateSystemSpec,
    u: &[DVector<f64>],
    plan: &[BoundaryCondition],
) -> Result<ResidualReport> {
    let grid = &spec.grid;
    if u.len() != grid.len() {
        return Err(Error::Usage(format!(
            "{} samples for a grid of {} nodes",
            u.len(),
            grid.len()
        )));
    }
    let bu: Vec<DVector<f64>> = u.iter().map(|x| spec.b.apply_vec(x)).collect();
    let au: Vec<Vec<DVector<f64>>> = spec
        .a
        .iter()
        .map(|a| u.iter().map(|x| a.apply_vec(x)).collect())
        .collect();

    let mut hw = vec![0usize; grid.dims()];
    for l in &spec.l {
        for t in &l.terms {
            for (a, &k) in t.orders.iter().enumerate() {
                if k > 4 {
                    return Err(Error::Usage(format!("no residual stencil for order {k}")));
                }
                hw[a] = hw[a].max(centered_halfwidth(k));
            }
        }
    }
    let shape = grid.shape();
    let mut equation = 0.0_f64;
    let mut interior = 0;
    for i in 0..grid.len() {
        let idx = grid.multi(i);
        if idx
            .iter()
            .zip(&hw)
            .zip(&shape)
            .any(|((&j, &h), &n)| j < h || j + h >= n)
        {
            continue;
        }
        let mut r = -spec.f.sample(&grid.point(i))?;
        let fields = std::iter::once(&bu).chain(au.iter());
        for (l, vals) in spec.l.iter().zip(fields) {
            for t in &l.terms {
                let d = centered_at(grid, vals, &idx, &t.orders)
                    .ok_or_else(|| Error::Usage("stencil left the grid".into()))?;
                r.axpy(t.coefficient, &d, 1.0);
            }
        }
        equation = equation.max(r.amax());
        interior += 1;
    }
    if interior == 0 {
        return Err(Error::Usage(
            "grid too coarse for the residual stencils: no interior nodes".into(),
        ));
    }

    let mut conditions = Vec::with_capacity(plan.len());
    for bc in plan {
        let h = grid.axes[bc.axis].step();
        let mut worst = 0.0_f64;
        for line in grid.lines(bc.axis) {
            let seg: Vec<DVector<f64>> = line.iter().take(6).map(|&i| u[i].clone()).collect();
            let d = one_sided_start(&seg, h, bc.derivative)?;
            worst = worst.max((&bc.projector * d).amax());
        }
        conditions.push((bc.to_string(), worst));
    }
    Ok(ResidualReport {
        equation,
        interior_nodes: interior,
        conditions,
    })
}
