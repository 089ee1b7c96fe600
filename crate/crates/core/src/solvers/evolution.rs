use nalgebra::{DMatrix, DVector};

use super::rk4::rk4_half_grid;
use crate::error::{Error, Result};
use crate::reduction::ReducedProblem;

/// Coefficients of a `t`-only operator indexed by order.
fn t_coefficients(rp: &ReducedProblem, r: usize) -> Result<Vec<f64>> {
    match rp.l[r].single_axis() {
        Some((_, c)) => Ok(c),
        None => Err(Error::Spec(format!("L_{r} must act in t only"))),
    }
}

/// Integrates `L0 v + sum_r L_r M_r v = Pi (f - lambda terms)` with zero
/// initial data by RK4 on the companion system. Returns `v` at every node of
/// the `t` axis.
pub fn solve_v(rp: &ReducedProblem) -> Result<Vec<DVector<f64>>> {
    let axis = &rp.grid.axes[0];
    if rp.grid.dims() != 1 {
        return Err(Error::Spec(
            "evolution families integrate over t alone".into(),
        ));
    }
    let c = t_coefficients(rp, 0)?;
    let q = c.len() - 1;
    if q == 0 {
        return Err(Error::Spec("L_0 must differentiate in t".into()));
    }
    let lead = c[q];
    let d = rp.projector.nrows();
    let mut k: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(q);
    for i in 0..q {
        let mut ki = DMatrix::identity(d, d) * c[i];
        for (r, m) in rp.ltilde.iter().enumerate() {
            let dr = t_coefficients(rp, r + 1)?;
            if let Some(&di) = dr.get(i) {
                ki += m * di;
            }
        }
        k.push((ki.amax() > 0.0).then_some(ki));
    }
    if axis.len() < 2 {
        return Err(Error::Usage("t axis needs at least two nodes".into()));
    }
    let h = axis.step();
    let t0 = axis.start();
    let steps = axis.len() - 1;
    let forcing: Vec<DVector<f64>> = (0..=2 * steps)
        .map(|hk| rp.source(&[t0 + 0.5 * h * hk as f64]))
        .collect::<Result<_>>()?;
    let states = rk4_half_grid(DVector::zeros(q * d), steps, h, |hk, y| {
        let mut dy = DVector::zeros(q * d);
        for i in 0..q - 1 {
            dy.rows_mut(i * d, d).copy_from(&y.rows((i + 1) * d, d));
        }
        let mut top = forcing[hk].clone();
        for (i, ki) in k.iter().enumerate() {
            if let Some(ki) = ki {
                top -= ki * y.rows(i * d, d);
            }
        }
        dy.rows_mut((q - 1) * d, d).copy_from(&(top / lead));
        Ok(dy)
    })?;
    Ok(states
        .into_iter()
        .map(|s| s.rows(0, d).into_owned())
        .collect())
}
