use nalgebra::{DMatrix, DVector};

use super::dense;
use super::space::{same_space, SpaceRef, VectorElement};
use crate::error::{Error, Result};

/// Relative rank threshold used when callers have no better information.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// `I - K`
    IdentityMinusKernel,
    /// `K`
    KernelOnly,
}

/// A linear map between two finite-dimensional inner-product spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteOperator {
    domain: SpaceRef,
    codomain: SpaceRef,
    matrix: DMatrix<f64>,
}

/// Singular value decomposition in the weighted norms of the two spaces.
///
/// `right` holds domain vectors orthonormal in the domain inner product,
/// `left` codomain vectors orthonormal in the codomain inner product, paired
/// with `sigma` in descending order.
#[derive(Debug, Clone)]
pub struct WeightedSvd {
    pub sigma: Vec<f64>,
    pub left: Vec<DVector<f64>>,
    pub right: Vec<DVector<f64>>,
    /// Right singular vectors of a zero-padded square matrix; spans the
    /// whole domain (descending order; zero singular values at the tail).
    pub right_full: Vec<DVector<f64>>,
    pub sigma_full: Vec<f64>,
}

impl FiniteOperator {
    pub fn new(domain: SpaceRef, codomain: SpaceRef, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != codomain.dim() || matrix.ncols() != domain.dim() {
            return Err(Error::Usage(format!(
                "matrix is {}x{} but the operator maps dimension {} to {}",
                matrix.nrows(),
                matrix.ncols(),
                domain.dim(),
                codomain.dim()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation(
                "operator matrix has non-finite entries".into(),
            ));
        }
        Ok(Self {
            domain,
            codomain,
            matrix,
        })
    }

    pub fn identity(space: SpaceRef) -> Self {
        let d = space.dim();
        Self {
            domain: space.clone(),
            codomain: space,
            matrix: DMatrix::identity(d, d),
        }
    }

    pub fn zero(domain: SpaceRef, codomain: SpaceRef) -> Self {
        let matrix = DMatrix::zeros(codomain.dim(), domain.dim());
        Self {
            domain,
            codomain,
            matrix,
        }
    }

    /// Nyström discretization of an integral operator with kernel `k(x, s)`:
    /// `M[i][j] = [kind == I - K] * delta_ij -/+ k(x_i, x_j) w_j`.
    pub fn kernel_operator(
        space: SpaceRef,
        kind: KernelKind,
        kernel: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let grid = space
            .grid()
            .ok_or_else(|| Error::Config("kernel operator needs a space with a grid".into()))?;
        let gram = space.gram();
        let n = grid.len();
        if (0..n).any(|i| (0..n).any(|j| i != j && gram[(i, j)] != 0.0)) {
            return Err(Error::Config(
                "kernel operator needs diagonal quadrature gram weights".into(),
            ));
        }
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let k = kernel(grid[i], grid[j]);
                if !k.is_finite() {
                    return Err(Error::Evaluation(format!(
                        "kernel is not finite at ({}, {})",
                        grid[i], grid[j]
                    )));
                }
                let kw = k * gram[(j, j)];
                m[(i, j)] = match kind {
                    KernelKind::IdentityMinusKernel => f64::from(u8::from(i == j)) - kw,
                    KernelKind::KernelOnly => kw,
                };
            }
        }
        Ok(Self {
            domain: space.clone(),
            codomain: space,
            matrix: m,
        })
    }

    pub fn domain(&self) -> &SpaceRef {
        &self.domain
    }

    pub fn codomain(&self) -> &SpaceRef {
        &self.codomain
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn is_square(&self) -> bool {
        self.domain.dim() == self.codomain.dim()
    }

    /// `A*` with matrix `G_dom^{-1} A^T G_cod`.
    pub fn adjoint(&self) -> FiniteOperator {
        let rhs = self.matrix.transpose() * self.codomain.gram();
        let l = self.domain.cholesky_factor();
        let y = l
            .solve_lower_triangular(&rhs)
            .expect("cholesky factor is non-singular");
        let m = l
            .transpose()
            .solve_upper_triangular(&y)
            .expect("cholesky factor is non-singular");
        FiniteOperator {
            domain: self.codomain.clone(),
            codomain: self.domain.clone(),
            matrix: m,
        }
    }

    pub fn apply(&self, u: &VectorElement) -> Result<VectorElement> {
        if !same_space(u.space(), &self.domain) {
            return Err(Error::Usage(
                "vector does not belong to the operator's domain".into(),
            ));
        }
        VectorElement::new(self.codomain.clone(), &self.matrix * u.coords())
    }

    pub fn apply_vec(&self, u: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(u.len(), self.domain.dim());
        &self.matrix * u
    }

    /// `self ∘ inner`
    pub fn compose(&self, inner: &FiniteOperator) -> Result<FiniteOperator> {
        if !same_space(inner.codomain(), &self.domain) {
            return Err(Error::Usage("composition of incompatible operators".into()));
        }
        Ok(FiniteOperator {
            domain: inner.domain.clone(),
            codomain: self.codomain.clone(),
            matrix: &self.matrix * &inner.matrix,
        })
    }

    pub fn add(&self, other: &FiniteOperator) -> Result<FiniteOperator> {
        self.check_same_shape(other)?;
        Ok(self.with_matrix(&self.matrix + &other.matrix))
    }

    pub fn sub(&self, other: &FiniteOperator) -> Result<FiniteOperator> {
        self.check_same_shape(other)?;
        Ok(self.with_matrix(&self.matrix - &other.matrix))
    }

    pub fn scale(&self, factor: f64) -> FiniteOperator {
        self.with_matrix(&self.matrix * factor)
    }

    pub(crate) fn with_matrix(&self, matrix: DMatrix<f64>) -> FiniteOperator {
        FiniteOperator {
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
            matrix,
        }
    }

    fn check_same_shape(&self, other: &FiniteOperator) -> Result<()> {
        if same_space(&self.domain, &other.domain) && same_space(&self.codomain, &other.codomain) {
            Ok(())
        } else {
            Err(Error::Usage(
                "operators act between different spaces".into(),
            ))
        }
    }

    /// `L_cod^T A L_dom^{-T}`: the matrix of the operator in orthonormal coordinates.
    fn weighted_matrix(&self) -> DMatrix<f64> {
        let l1 = self.domain.cholesky_factor();
        let l2 = self.codomain.cholesky_factor();
        let xt = l1
            .solve_lower_triangular(&self.matrix.transpose())
            .expect("cholesky factor is non-singular");
        l2.transpose() * xt.transpose()
    }

    pub fn weighted_svd(&self) -> WeightedSvd {
        let a = self.weighted_matrix();
        let (r, c) = a.shape();
        let padded = if r < c {
            let mut p = DMatrix::zeros(c, c);
            p.view_mut((0, 0), (r, c)).copy_from(&a);
            p
        } else {
            a.clone()
        };
        let svd = dense::svd(&padded);
        let vt = svd.v.transpose();
        let order: Vec<usize> = (0..svd.sigma.len()).collect();
        let l1t = self.domain.cholesky_factor().transpose();
        let l2 = self.codomain.cholesky_factor();
        let to_domain = |y: DVector<f64>| {
            l1t.solve_upper_triangular(&y)
                .expect("cholesky factor is non-singular")
        };
        let mut sigma_full = Vec::new();
        let mut right_full = Vec::new();
        for &i in &order {
            sigma_full.push(svd.sigma[i]);
            right_full.push(to_domain(vt.row(i).transpose()));
        }
        let rank_cap = r.min(c);
        let mut sigma = Vec::new();
        let mut left = Vec::new();
        let mut right = Vec::new();
        for (idx, &i) in order.iter().enumerate().take(rank_cap) {
            let s = svd.sigma[i];
            let y = vt.row(i).transpose();
            sigma.push(s);
            if s > 0.0 {
                // left vector in orthonormal codomain coords: a y / s
                let x = &a * &y / s;
                let w = l2
                    .transpose()
                    .solve_upper_triangular(&x)
                    .expect("cholesky factor is non-singular");
                left.push(w);
            } else {
                left.push(DVector::zeros(self.codomain.dim()));
            }
            right.push(right_full[idx].clone());
        }
        WeightedSvd {
            sigma,
            left,
            right,
            right_full,
            sigma_full,
        }
    }

    /// Operator norm induced by the two inner products.
    pub fn norm(&self) -> f64 {
        if self.matrix.iter().all(|v| *v == 0.0) {
            return 0.0;
        }
        self.weighted_svd().sigma.first().cloned().unwrap_or(0.0)
    }

    /// Ratio of the largest to the smallest singular value (infinite when
    /// the operator is not injective).
    pub fn condition_number(&self) -> f64 {
        let s = self.weighted_svd().sigma_full;
        let max = s.first().cloned().unwrap_or(0.0);
        let min = s.last().cloned().unwrap_or(0.0);
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// Orthonormal basis (in the domain inner product) of the numerical null
    /// space, ordered by ascending singular value, each vector sign-fixed so
    /// that its first non-negligible coordinate is positive.
    pub fn null_space(&self, rank_tol: f64) -> Vec<VectorElement> {
        self.null_space_vecs(rank_tol)
            .into_iter()
            .map(|v| VectorElement::new(self.domain.clone(), v).expect("domain vector"))
            .collect()
    }

    pub(crate) fn null_space_vecs(&self, rank_tol: f64) -> Vec<DVector<f64>> {
        let svd = self.weighted_svd();
        let smax = svd.sigma_full.first().cloned().unwrap_or(0.0);
        let mut out: Vec<(f64, DVector<f64>)> = svd
            .sigma_full
            .iter()
            .zip(svd.right_full)
            .filter(|(s, _)| smax == 0.0 || **s <= rank_tol * smax)
            .map(|(s, v)| (*s, v))
            .collect();
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        out.into_iter().map(|(_, v)| sign_fixed(v)).collect()
    }

    /// Minimum-norm least-squares solution operator (weighted Moore-Penrose
    /// inverse) with singular values below `rank_tol * sigma_max` dropped.
    pub fn least_squares_inverse(&self, rank_tol: f64) -> FiniteOperator {
        let svd = self.weighted_svd();
        let smax = svd.sigma.first().cloned().unwrap_or(0.0);
        let mut m = DMatrix::zeros(self.domain.dim(), self.codomain.dim());
        for ((s, u), v) in svd.sigma.iter().zip(&svd.left).zip(&svd.right) {
            if smax > 0.0 && *s > rank_tol * smax {
                // x = v <w, u> / s, with <w, u> = u^T G w
                let row = self.codomain.lower(u).transpose();
                m += v * row / *s;
            }
        }
        FiniteOperator {
            domain: self.codomain.clone(),
            codomain: self.domain.clone(),
            matrix: m,
        }
    }
}

pub(crate) fn sign_fixed(mut v: DVector<f64>) -> DVector<f64> {
    let scale = v.amax();
    if let Some(first) = v.iter().find(|c| c.abs() > 1e-9 * scale).cloned() {
        if first < 0.0 {
            v.neg_mut();
        }
    }
    v
}
