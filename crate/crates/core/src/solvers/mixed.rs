use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::probspec::jet::{expand, Jet2};
use crate::reduction::ReducedProblem;

/// Taylor coefficients `G[j][b]` of `Pi (f - lambda terms)` about the grid corner.
fn source_jets(rp: &ReducedProblem, order: usize) -> Result<Vec<Vec<DVector<f64>>>> {
    let exprs = rp.f.exprs.as_ref().ok_or_else(|| {
        Error::Evaluation(
            "the mixed family expands f in a Taylor series and needs f as expressions".into(),
        )
    })?;
    let center = [rp.grid.axes[0].start(), rp.grid.axes[1].start()];
    let env = &rp.env;
    let d = rp.projector.nrows();
    let mut comps: Vec<Jet2> = exprs
        .iter()
        .map(|e| expand(e, &rp.outer, &center, env, order))
        .collect::<Result<_>>()?;
    if !rp.lambda.is_empty() {
        let extra_order = rp.l[1..].iter().map(|l| l.order()).max().unwrap_or(0);
        let a_phi: Vec<Vec<DVector<f64>>> =
            rp.a.iter()
                .map(|a| rp.js.extra_phi().iter().map(|p| a.apply_vec(p)).collect())
                .collect();
        for (e, lam) in rp.lambda.iter().enumerate() {
            let jet = expand(lam, &rp.outer, &center, env, order + extra_order)?;
            for (r, l) in rp.l[1..].iter().enumerate() {
                for t in &l.terms {
                    let dj = jet.differentiate(t.orders[0], t.orders[1]);
                    for (comp, ap) in comps.iter_mut().zip(a_phi[r][e].iter()) {
                        for i in 0..=order {
                            for j in 0..=order - i {
                                let cur = comp.get(i, j);
                                comp.set(i, j, cur - t.coefficient * ap * dj.get(i, j));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((0..=order)
        .map(|j| {
            (0..=order - j)
                .map(|b| {
                    let g = DVector::from_iterator(d, comps.iter().map(|c| c.get(j, b)));
                    &rp.projector * g
                })
                .collect()
        })
        .collect())
}

/// Power series `v = sum V[j][b] X^j Y^b` of total degree `order` for
/// `c v_xx + sum_r L_r(d/dy) M_r v = g` with `v = v_x = 0` on `x = x0`.
/// Returns `v` on the grid and the sup-norm of the top-degree part.
pub fn solve_v(rp: &ReducedProblem, order: usize) -> Result<(Vec<DVector<f64>>, f64)> {
    let l0 = &rp.l[0];
    if l0.terms.len() != 1 || l0.terms[0].orders != [2, 0] {
        return Err(Error::Spec(format!(
            "mixed_xy family needs L_0 = c*dx^2, got {l0}"
        )));
    }
    if order < 2 {
        return Err(Error::Config("series_order must be at least 2".into()));
    }
    let c = l0.terms[0].coefficient;
    let mut dy: Vec<Vec<f64>> = Vec::new();
    for (r, l) in rp.l[1..].iter().enumerate() {
        match l.single_axis() {
            Some((None, k)) | Some((Some(1), k)) => dy.push(k),
            _ => {
                return Err(Error::Spec(format!(
                    "mixed_xy family needs L_{} to act in y only, got {l}",
                    r + 1
                )))
            }
        }
    }
    let g = source_jets(rp, order)?;
    let d = rp.projector.nrows();
    let mut v: Vec<Vec<DVector<f64>>> = (0..=order)
        .map(|j| vec![DVector::zeros(d); order + 1 - j])
        .collect();
    for j in 0..=order - 2 {
        for b in 0..=order - 2 - j {
            let mut acc = g[j][b].clone();
            for (m, coeffs) in rp.ltilde.iter().zip(&dy) {
                for (i, &di) in coeffs.iter().enumerate() {
                    if di == 0.0 || j + b + i > order {
                        continue;
                    }
                    let fall: f64 = ((b + 1)..=(b + i)).map(|x| x as f64).product();
                    acc -= m * &v[j][b + i] * (di * fall);
                }
            }
            v[j + 2][b] = acc / (c * ((j + 2) * (j + 1)) as f64);
        }
    }
    let grid = &rp.grid;
    let (x0, y0) = (grid.axes[0].start(), grid.axes[1].start());
    let eval = |p: &[f64], degrees: std::ops::RangeInclusive<usize>| {
        let (dx, dyv) = (p[0] - x0, p[1] - y0);
        let mut out = DVector::zeros(d);
        for (j, row) in v.iter().enumerate() {
            for (b, coef) in row.iter().enumerate() {
                if degrees.contains(&(j + b)) {
                    out.axpy(dx.powi(j as i32) * dyv.powi(b as i32), coef, 1.0);
                }
            }
        }
        out
    };
    let mut tail = 0.0_f64;
    let vals = (0..grid.len())
        .map(|i| {
            let p = grid.point(i);
            tail = tail.max(eval(&p, order..=order).amax());
            eval(&p, 0..=order)
        })
        .collect();
    Ok((vals, tail))
}
