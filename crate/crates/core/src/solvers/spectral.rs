use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Rejects `lambda = j^2` for every retained mode index `j`.
pub fn check_resonance(lambda: f64, modes: [usize; 2]) -> Result<()> {
    let top = modes[0].max(modes[1]);
    for j in 1..=top {
        let sq = (j * j) as f64;
        if (lambda - sq).abs() <= 1e-12 * sq {
            return Err(Error::ResonantLambda { lambda, index: j });
        }
    }
    Ok(())
}

/// Flat index of mode `(n, m)`, both 1-based.
pub fn mode_index(modes: [usize; 2], n: usize, m: usize) -> usize {
    (n - 1) * modes[1] + (m - 1)
}

/// Uniform sample nodes on `[0, length]`.
pub fn sample_axis(length: f64, nodes: usize) -> Vec<f64> {
    let h = length / (nodes - 1) as f64;
    (0..nodes).map(|i| i as f64 * h).collect()
}

/// Matrix taking modal coefficients to values on the sample grid, row-major
/// over `(x, y)`.
pub fn synthesis_matrix(
    lengths: [f64; 2],
    modes: [usize; 2],
    sample_nodes: [usize; 2],
) -> DMatrix<f64> {
    let xs = sample_axis(lengths[0], sample_nodes[0]);
    let ys = sample_axis(lengths[1], sample_nodes[1]);
    let (mx, my) = (modes[0], modes[1]);
    DMatrix::from_fn(xs.len() * ys.len(), mx * my, |row, col| {
        let (x, y) = (xs[row / ys.len()], ys[row % ys.len()]);
        let (n, m) = (col / my + 1, col % my + 1);
        (n as f64 * PI * x / lengths[0]).sin() * (m as f64 * PI * y / lengths[1]).sin()
    })
}

/// Sine coefficients `f_nm = (4 / (Lx Ly)) int int f sin sin` by the
/// trapezoid rule on a `nodes x nodes` grid.
pub fn sine_transform(
    lengths: [f64; 2],
    modes: [usize; 2],
    nodes: usize,
    mut f: impl FnMut(f64, f64) -> Result<f64>,
) -> Result<DVector<f64>> {
    let xs = sample_axis(lengths[0], nodes);
    let ys = sample_axis(lengths[1], nodes);
    let (hx, hy) = (xs[1] - xs[0], ys[1] - ys[0]);
    let mut vals = DMatrix::zeros(nodes, nodes);
    // the boundary rows carry zero weight against sines, so only interior samples are needed
    for i in 1..nodes - 1 {
        for j in 1..nodes - 1 {
            vals[(i, j)] = f(xs[i], ys[j])?;
        }
    }
    let sx = DMatrix::from_fn(modes[0], nodes, |n, i| {
        ((n + 1) as f64 * PI * xs[i] / lengths[0]).sin()
    });
    let sy = DMatrix::from_fn(nodes, modes[1], |j, m| {
        ((m + 1) as f64 * PI * ys[j] / lengths[1]).sin()
    });
    let coef = sx * vals * sy * (4.0 * hx * hy / (lengths[0] * lengths[1]));
    Ok(DVector::from_iterator(
        modes[0] * modes[1],
        (0..modes[0])
            .flat_map(|n| (0..modes[1]).map(move |m| (n, m)))
            .map(|(n, m)| coef[(n, m)]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resonance_detection() {
        assert!(check_resonance(5.0, [16, 16]).is_ok());
        match check_resonance(4.0, [16, 16]) {
            Err(Error::ResonantLambda { index, .. }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }
        assert!(check_resonance(400.0, [16, 16]).is_ok());
    }

    #[test]
    fn transform_recovers_single_mode() {
        let c = sine_transform([PI, PI], [4, 4], 65, |x, y| {
            Ok((2.0 * x).sin() * (3.0 * y).sin())
        })
        .unwrap();
        for (k, v) in c.iter().enumerate() {
            let want = if k == mode_index([4, 4], 2, 3) {
                1.0
            } else {
                0.0
            };
            assert!((v - want).abs() < 1e-12, "{k}: {v}");
        }
        let s = synthesis_matrix([PI, PI], [4, 4], [5, 5]);
        let u = s * c;
        let (x, y) = (PI / 4.0, PI / 2.0);
        assert!((u[5 + 2] - (2.0 * x).sin() * (3.0 * y).sin()).abs() < 1e-12);
    }
}
