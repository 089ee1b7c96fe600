use nalgebra::DVector;

use crate::error::Result;

/// Classical RK4 on a uniform grid. The right-hand side receives the
/// half-step index (`2i` at `t_i`, `2i + 1` at the midpoint, `2i + 2` at
/// `t_{i+1}`) so forcing terms can be tabulated once on the half grid.
pub fn rk4_half_grid(
    y0: DVector<f64>,
    steps: usize,
    h: f64,
    mut rhs: impl FnMut(usize, &DVector<f64>) -> Result<DVector<f64>>,
) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0;
    out.push(y.clone());
    for i in 0..steps {
        let k1 = rhs(2 * i, &y)?;
        let k2 = rhs(2 * i + 1, &(&y + &k1 * (0.5 * h)))?;
        let k3 = rhs(2 * i + 1, &(&y + &k2 * (0.5 * h)))?;
        let k4 = rhs(2 * i + 2, &(&y + &k3 * h))?;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth_is_fourth_order() {
        let err = |steps: usize| {
            let h = 1.0 / steps as f64;
            let ys = rk4_half_grid(
                DVector::from_element(1, 1.0),
                steps,
                h,
                |_, y| Ok(y.clone()),
            )
            .unwrap();
            (ys[steps][0] - 1f64.exp()).abs()
        };
        let (e1, e2) = (err(10), err(20));
        assert!(e1 < 1e-5);
        assert!(e1 / e2 > 14.0);
    }

    #[test]
    fn forcing_on_the_half_grid() {
        // y' = 3 t^2, exact for RK4 with exact forcing samples
        let steps = 8;
        let h = 0.25;
        let ys = rk4_half_grid(DVector::zeros(1), steps, h, |k, _| {
            let t = 0.5 * h * k as f64;
            Ok(DVector::from_element(1, 3.0 * t * t))
        })
        .unwrap();
        assert!((ys[steps][0] - 8.0).abs() < 1e-12);
    }
}
