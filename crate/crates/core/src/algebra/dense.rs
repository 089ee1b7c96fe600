//! Dense singular value decompositions.
//!
//! nalgebra's SVD returns wrong factors for some exactly rank-deficient
//! matrices, which are the normal case here, so decompositions go through faer.

use nalgebra::DMatrix;

/// Full SVD `m = u diag(sigma) v^T` with `sigma` in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `nrows x nrows`, orthogonal.
    pub u: DMatrix<f64>,
    /// `min(nrows, ncols)` values.
    pub sigma: Vec<f64>,
    /// `ncols x ncols`, orthogonal.
    pub v: DMatrix<f64>,
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn svd(m: &DMatrix<f64>) -> Svd {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Svd {
            u: DMatrix::identity(r, r),
            sigma: Vec::new(),
            v: DMatrix::identity(c, c),
        };
    }
    let f = to_faer(m);
    let d = f.svd().expect("SVD of a finite matrix converges");
    let (u, s, v) = (d.U(), d.S(), d.V());
    let k = r.min(c);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut out = Svd {
        u: DMatrix::from_fn(r, r, |i, j| u[(i, j)]),
        sigma: order.iter().map(|&i| s[i]).collect(),
        v: DMatrix::from_fn(c, c, |i, j| v[(i, j)]),
    };
    for (dst, &src) in order.iter().enumerate() {
        if dst != src {
            out.u.set_column(dst, &DMatrix::from_fn(r, 1, |i, _| u[(i, src)]).column(0));
            out.v.set_column(dst, &DMatrix::from_fn(c, 1, |i, _| v[(i, src)]).column(0));
        }
    }
    out
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    svd(m).sigma
}

/// Moore-Penrose inverse dropping singular values below `rel_tol * sigma_max`.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let d = svd(m);
    let smax = d.sigma.first().cloned().unwrap_or(0.0);
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (i, &s) in d.sigma.iter().enumerate() {
        if s > rel_tol * smax && s > 0.0 {
            out += d.v.column(i) * d.u.column(i).transpose() / s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(m: &DMatrix<f64>) {
        let d = svd(m);
        let k = d.sigma.len();
        let mut s = DMatrix::zeros(m.nrows(), m.ncols());
        for i in 0..k {
            s[(i, i)] = d.sigma[i];
        }
        assert!((&d.u * s * d.v.transpose() - m).amax() < 1e-14);
        assert!(d.sigma.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rank_one_two_by_two() {
        // nalgebra 0.35 reconstructs this one with error 0.11
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                -0.009473362074270946,
                0.07033045906132421,
                -0.09887115898029233,
                0.7340217701479723,
            ],
        );
        check(&m);
        let d = svd(&m);
        assert!(d.sigma[1] < 1e-15);
        assert!((d.sigma[0] - 0.744_042_729_411_446_9).abs() < 1e-14);
    }

    #[test]
    fn rectangular_shapes() {
        check(&DMatrix::from_fn(3, 5, |i, j| (i * 5 + j) as f64 - 4.0));
        check(&DMatrix::from_fn(5, 2, |i, j| ((i + 2 * j) as f64).sin()));
        assert!(svd(&DMatrix::zeros(0, 3)).sigma.is_empty());
    }

    #[test]
    fn pseudo_inverse_of_projector() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = pseudo_inverse(&m, 1e-12);
        assert!((p - DMatrix::from_element(2, 2, 0.25)).amax() < 1e-15);
    }
}
