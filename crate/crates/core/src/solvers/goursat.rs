use nalgebra::{DMatrix, DVector};

use super::grid::{cumulative, sup_norm};
use crate::error::{Error, Result};
use crate::reduction::{ReducedProblem, Settings};

/// Neumann series for `c v_xy + K v = g` with `v = 0` on both axes:
/// `v = sum_r (-1)^r (I K / c)^r I g / c` where `I` integrates from the
/// corner. Returns `v` and the number of terms used.
pub fn solve_v(rp: &ReducedProblem, settings: &Settings) -> Result<(Vec<DVector<f64>>, usize)> {
    let l0 = &rp.l[0];
    if l0.terms.len() != 1 || l0.terms[0].orders != [1, 1] {
        return Err(Error::Spec(format!(
            "goursat family needs L_0 = c*dx*dy, got {l0}"
        )));
    }
    let c = l0.terms[0].coefficient;
    let d = rp.projector.nrows();
    let mut k = DMatrix::zeros(d, d);
    for (r, m) in rp.ltilde.iter().enumerate() {
        let lr = &rp.l[r + 1];
        for t in &lr.terms {
            if t.orders.iter().any(|&o| o > 0) {
                return Err(Error::Spec(format!(
                    "goursat family needs zero-order L_{}, got {lr}",
                    r + 1
                )));
            }
            k += m * t.coefficient;
        }
    }
    let grid = &rp.grid;
    let corner = |w: &[DVector<f64>]| -> Result<Vec<DVector<f64>>> {
        cumulative(grid, &cumulative(grid, w, 0)?, 1)
    };
    let g: Vec<DVector<f64>> = (0..grid.len())
        .map(|i| rp.source(&grid.point(i)))
        .collect::<Result<_>>()?;
    let mut term: Vec<DVector<f64>> = corner(&g)?.into_iter().map(|x| x / c).collect();
    let mut v = term.clone();
    for n in 1..=settings.max_terms {
        let tn = sup_norm(&term);
        if tn < settings.series_tol * sup_norm(&v).max(1.0) {
            return Ok((v, n));
        }
        if n == settings.max_terms {
            return Err(Error::SeriesTruncation(format!(
                "term {n} still has norm {tn:.3e}; shrink the domain or raise max_terms"
            )));
        }
        let kt: Vec<DVector<f64>> = term.iter().map(|x| &k * x).collect();
        term = corner(&kt)?.into_iter().map(|x| x / -c).collect();
        for (vi, ti) in v.iter_mut().zip(&term) {
            *vi += ti;
        }
    }
    Err(Error::SeriesTruncation("max_terms must be positive".into()))
}
