use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Quadrature rule used to weight the nodes of a discretized function space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    #[default]
    Trapezoid,
    /// Composite Simpson; needs an odd number of nodes.
    Simpson,
}

impl Quadrature {
    pub fn weights(self, a: f64, b: f64, nodes: usize) -> Result<Vec<f64>> {
        if nodes < 2 {
            return Err(Error::Config(format!(
                "a quadrature grid needs at least 2 nodes, got {nodes}"
            )));
        }
        if !(b > a) {
            return Err(Error::Config(format!("empty interval [{a}, {b}]")));
        }
        let h = (b - a) / (nodes - 1) as f64;
        let mut w = vec![h; nodes];
        match self {
            Quadrature::Trapezoid => {
                w[0] = 0.5 * h;
                w[nodes - 1] = 0.5 * h;
            }
            Quadrature::Simpson => {
                if nodes % 2 == 0 || nodes < 3 {
                    return Err(Error::Config(format!(
                        "Simpson rule needs an odd node count >= 3, got {nodes}"
                    )));
                }
                for (i, wi) in w.iter_mut().enumerate() {
                    *wi = if i == 0 || i == nodes - 1 {
                        h / 3.0
                    } else if i % 2 == 1 {
                        4.0 * h / 3.0
                    } else {
                        2.0 * h / 3.0
                    };
                }
            }
        }
        Ok(w)
    }
}

/// A finite-dimensional real inner-product space `(R^dim, <u, w> = u^T G w)`.
///
/// Coordinate spaces use `G = I`; spaces that discretize `C[a, b]` carry the
/// node grid and put the quadrature weights on the diagonal of `G`, which
/// makes every adjoint automatically consistent with the quadrature.
#[derive(Debug, Clone)]
pub struct InnerProductSpace {
    gram: DMatrix<f64>,
    grid: Option<Vec<f64>>,
    chol: DMatrix<f64>,
    diagonal: Option<DVector<f64>>,
}

pub type SpaceRef = Arc<InnerProductSpace>;

impl PartialEq for InnerProductSpace {
    fn eq(&self, other: &Self) -> bool {
        self.gram == other.gram && self.grid == other.grid
    }
}

impl InnerProductSpace {
    pub fn new(gram: DMatrix<f64>, grid: Option<Vec<f64>>) -> Result<Self> {
        let dim = gram.nrows();
        if dim == 0 || gram.ncols() != dim {
            return Err(Error::Config(format!(
                "gram matrix must be square and non-empty, got {}x{}",
                gram.nrows(),
                gram.ncols()
            )));
        }
        let scale = gram.amax().max(f64::MIN_POSITIVE);
        if (&gram - gram.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Config("gram matrix is not symmetric".into()));
        }
        if let Some(g) = &grid {
            if g.len() != dim {
                return Err(Error::Config(format!(
                    "grid has {} nodes but the space has dimension {dim}",
                    g.len()
                )));
            }
            if g.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Config("grid nodes must strictly increase".into()));
            }
        }
        let chol = Cholesky::new(gram.clone())
            .ok_or_else(|| Error::Config("gram matrix is not positive definite".into()))?
            .l();
        let is_diag = (0..dim).all(|i| (0..dim).all(|j| i == j || gram[(i, j)] == 0.0));
        let diagonal = is_diag.then(|| gram.diagonal());
        Ok(Self {
            gram,
            grid,
            chol,
            diagonal,
        })
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim), None).expect("identity gram is valid")
    }

    pub fn weighted(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("weights must be positive".into()));
        }
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(weights)),
            None,
        )
    }

    /// Uniform grid on `[a, b]` with the given rule's weights as the Gram diagonal.
    pub fn quadrature(a: f64, b: f64, nodes: usize, rule: Quadrature) -> Result<Self> {
        let w = rule.weights(a, b, nodes)?;
        let h = (b - a) / (nodes - 1) as f64;
        let grid = (0..nodes).map(|i| a + h * i as f64).collect();
        Self::new(DMatrix::from_diagonal(&DVector::from_vec(w)), Some(grid))
    }

    pub fn into_ref(self) -> SpaceRef {
        Arc::new(self)
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn grid(&self) -> Option<&[f64]> {
        self.grid.as_deref()
    }

    /// Lower Cholesky factor `L` with `G = L L^T`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn inner_vec(&self, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        match &self.diagonal {
            Some(d) => u
                .iter()
                .zip(d.iter())
                .zip(w.iter())
                .map(|((a, g), b)| a * g * b)
                .sum(),
            None => u.dot(&(&self.gram * w)),
        }
    }

    pub fn norm_vec(&self, u: &DVector<f64>) -> f64 {
        self.inner_vec(u, u).max(0.0).sqrt()
    }

    /// `G w`, the Riesz map from a vector to the coefficient row of its functional.
    pub fn lower(&self, w: &DVector<f64>) -> DVector<f64> {
        match &self.diagonal {
            Some(d) => w.component_mul(d),
            None => &self.gram * w,
        }
    }

    pub fn smallest_gram_eigenvalue(&self) -> f64 {
        self.gram
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn element(self: &Arc<Self>, coords: DVector<f64>) -> Result<VectorElement> {
        VectorElement::new(self.clone(), coords)
    }

    /// Samples `f` at the grid nodes.
    pub fn sample(self: &Arc<Self>, f: impl Fn(f64) -> f64) -> Result<VectorElement> {
        let grid = self
            .grid()
            .ok_or_else(|| Error::Config("space has no grid to sample on".into()))?;
        let coords = DVector::from_iterator(grid.len(), grid.iter().map(|&x| f(x)));
        VectorElement::new(self.clone(), coords)
    }
}

/// An element of an [`InnerProductSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct VectorElement {
    space: SpaceRef,
    coords: DVector<f64>,
}

impl VectorElement {
    pub fn new(space: SpaceRef, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != space.dim() {
            return Err(Error::Usage(format!(
                "vector of length {} does not belong to a space of dimension {}",
                coords.len(),
                space.dim()
            )));
        }
        Ok(Self { space, coords })
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    pub fn inner(&self, other: &VectorElement) -> Result<f64> {
        if !same_space(&self.space, &other.space) {
            return Err(Error::Usage(
                "inner product of elements of different spaces".into(),
            ));
        }
        Ok(self.space.inner_vec(&self.coords, &other.coords))
    }

    pub fn norm(&self) -> f64 {
        self.space.norm_vec(&self.coords)
    }
}

pub(crate) fn same_space(a: &SpaceRef, b: &SpaceRef) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_of_x_on_unit_interval() {
        let s = InnerProductSpace::quadrature(0.0, 1.0, 201, Quadrature::Trapezoid)
            .unwrap()
            .into_ref();
        let x = s.sample(|x| x).unwrap();
        assert!((x.inner(&x).unwrap() - 1.0 / 3.0).abs() <= 1e-4);
    }

    #[test]
    fn inner_of_sine_on_zero_pi() {
        let s =
            InnerProductSpace::quadrature(0.0, std::f64::consts::PI, 201, Quadrature::Trapezoid)
                .unwrap()
                .into_ref();
        let v = s.sample(f64::sin).unwrap();
        assert!((v.inner(&v).unwrap() - std::f64::consts::FRAC_PI_2).abs() <= 1e-4);
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let s = InnerProductSpace::quadrature(0.0, 1.0, 11, Quadrature::Simpson)
            .unwrap()
            .into_ref();
        let x = s.sample(|x| x).unwrap();
        let x2 = s.sample(|x| x * x).unwrap();
        assert!((x.inner(&x2).unwrap() - 0.25).abs() < 1e-14);
        assert!(Quadrature::Simpson.weights(0.0, 1.0, 10).is_err());
    }

    #[test]
    fn rejects_bad_gram_and_grid() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(InnerProductSpace::new(g, None).is_err());
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(InnerProductSpace::new(g, None).is_err());
        let g = DMatrix::identity(2, 2);
        assert!(InnerProductSpace::new(g.clone(), Some(vec![1.0, 0.0])).is_err());
        assert!(InnerProductSpace::new(g, Some(vec![0.0])).is_err());
    }

    #[test]
    fn element_dimension_is_checked() {
        let s = InnerProductSpace::euclidean(3).into_ref();
        assert!(s.element(DVector::zeros(2)).is_err());
        let e = s.element(DVector::from_vec(vec![1.0, 2.0, 2.0])).unwrap();
        assert_eq!(e.norm(), 3.0);
        assert!(s.smallest_gram_eigenvalue() > 0.0);
    }
}
