use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::algebra::FiniteOperator;
use crate::error::{Error, Result};
use crate::probspec::{Bindings, Expr, Var};
use crate::solvers::grid::Grid;

/// One term `coefficient * D^orders` of a constant-coefficient operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffTerm {
    pub orders: Vec<usize>,
    pub coefficient: f64,
}

/// `sum_k a_k D^k` over the named outer variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialOperatorSpec {
    pub vars: Vec<String>,
    pub terms: Vec<DiffTerm>,
}

impl DifferentialOperatorSpec {
    pub fn new(vars: Vec<String>, terms: Vec<DiffTerm>) -> Result<Self> {
        for t in &terms {
            if t.orders.len() != vars.len() {
                return Err(Error::Spec(format!(
                    "term has {} derivative orders for {} variables",
                    t.orders.len(),
                    vars.len()
                )));
            }
            if !t.coefficient.is_finite() {
                return Err(Error::Spec("non-finite operator coefficient".into()));
            }
        }
        Ok(DifferentialOperatorSpec { vars, terms }.normalized())
    }

    pub fn zero(vars: Vec<String>) -> Self {
        DifferentialOperatorSpec {
            vars,
            terms: Vec::new(),
        }
    }

    /// `coefficient * D^orders` as a single-term operator.
    pub fn monomial(vars: Vec<String>, orders: Vec<usize>, coefficient: f64) -> Result<Self> {
        Self::new(
            vars,
            vec![DiffTerm {
                orders,
                coefficient,
            }],
        )
    }

    /// Merges equal multi-indices and drops zero terms; terms sorted by
    /// descending total order then lexicographically.
    fn normalized(mut self) -> Self {
        let mut merged: Vec<DiffTerm> = Vec::new();
        for t in self.terms.drain(..) {
            match merged.iter_mut().find(|m| m.orders == t.orders) {
                Some(m) => m.coefficient += t.coefficient,
                None => merged.push(t),
            }
        }
        merged.retain(|t| t.coefficient != 0.0);
        merged.sort_by(|a, b| {
            let (oa, ob): (usize, usize) = (a.orders.iter().sum(), b.orders.iter().sum());
            ob.cmp(&oa).then_with(|| b.orders.cmp(&a.orders))
        });
        self.terms = merged;
        self
    }

    /// Total order `q = max |k|`.
    pub fn order(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.orders.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn order_in(&self, var: usize) -> usize {
        self.terms.iter().map(|t| t.orders[var]).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// `sum_i c_i L_i`; terms with `|c| <= drop_tol` are dropped afterwards.
    pub fn combination(
        vars: &[String],
        parts: &[(f64, &DifferentialOperatorSpec)],
        drop_tol: f64,
    ) -> Self {
        let mut terms = Vec::new();
        for (c, op) in parts {
            for t in &op.terms {
                terms.push(DiffTerm {
                    orders: t.orders.clone(),
                    coefficient: c * t.coefficient,
                });
            }
        }
        let mut out = DifferentialOperatorSpec {
            vars: vars.to_vec(),
            terms,
        }
        .normalized();
        out.terms.retain(|t| t.coefficient.abs() > drop_tol);
        out
    }

    /// If every term differentiates along one axis only, returns that axis
    /// (or `None` for a pure multiple of the identity) and the coefficients
    /// indexed by order.
    pub fn single_axis(&self) -> Option<(Option<usize>, Vec<f64>)> {
        let mut axis: Option<usize> = None;
        for t in &self.terms {
            let nz: Vec<usize> = (0..t.orders.len()).filter(|&i| t.orders[i] > 0).collect();
            match nz.len() {
                0 => {}
                1 => {
                    if axis.is_some_and(|a| a != nz[0]) {
                        return None;
                    }
                    axis = Some(nz[0]);
                }
                _ => return None,
            }
        }
        let q = axis.map_or(0, |a| self.order_in(a));
        let mut coeffs = vec![0.0; q + 1];
        for t in &self.terms {
            let k = axis.map_or(0, |a| t.orders[a]);
            coeffs[k] += t.coefficient;
        }
        Some((axis, coeffs))
    }
}

impl fmt::Display for DifferentialOperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{}", t.coefficient)?;
            for (v, &k) in self.vars.iter().zip(&t.orders) {
                if k == 1 {
                    write!(f, "*d{v}")?;
                } else if k > 1 {
                    write!(f, "*d{v}^{k}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Goursat,
    Evolution1,
    Evolution2,
    MixedXy,
    Spectral3,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Goursat,
        Family::Evolution1,
        Family::Evolution2,
        Family::MixedXy,
        Family::Spectral3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Goursat => "goursat",
            Family::Evolution1 => "evolution1",
            Family::Evolution2 => "evolution2",
            Family::MixedXy => "mixed_xy",
            Family::Spectral3 => "spectral3",
        }
    }

    pub fn parse(s: &str) -> Result<Family> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnsupportedFamily(s.to_string()))
    }

    /// Outer variables the family integrates over.
    pub fn outer_vars(self) -> &'static [&'static str] {
        match self {
            Family::Goursat | Family::MixedXy => &["x", "y"],
            _ => &["t"],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How coordinates of E1/E2 relate to physical space.
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceLayout {
    Plain,
    /// Node values of a function of `variable`.
    Grid {
        variable: Var,
        nodes: Vec<f64>,
    },
    /// Coefficients of `sin(n pi x / Lx) sin(m pi y / Ly)`, index `(n-1) * My + (m-1)`.
    Sine2 {
        lengths: [f64; 2],
        modes: [usize; 2],
        sample_nodes: [usize; 2],
    },
}

type Sampler = dyn Fn(&[f64]) -> Result<DVector<f64>> + Send + Sync;

/// Right-hand side `f` as a map from outer coordinates into E2.
#[derive(Clone)]
pub struct RhsField {
    sampler: Arc<Sampler>,
    /// Per-component expressions when E2 is a plain coordinate space.
    pub exprs: Option<Vec<Expr>>,
    pub env: Bindings,
}

impl fmt::Debug for RhsField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RhsField")
            .field("exprs", &self.exprs)
            .finish()
    }
}

impl RhsField {
    pub fn new(sampler: impl Fn(&[f64]) -> Result<DVector<f64>> + Send + Sync + 'static) -> Self {
        RhsField {
            sampler: Arc::new(sampler),
            exprs: None,
            env: Bindings::new(),
        }
    }

    pub fn with_exprs(mut self, exprs: Vec<Expr>, env: Bindings) -> Self {
        self.exprs = Some(exprs);
        self.env = env;
        self
    }

    pub fn with_env(mut self, env: Bindings) -> Self {
        self.env = env;
        self
    }

    pub fn zero(dim: usize) -> Self {
        RhsField::new(move |_| Ok(DVector::zeros(dim)))
    }

    pub fn sample(&self, p: &[f64]) -> Result<DVector<f64>> {
        (self.sampler)(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub rank_tol: f64,
    pub commute_tol: f64,
    /// Absolute tolerance on `Q_{m-n}` compatibility residuals.
    pub compat_tol: f64,
    /// Total degree of the mixed-family Taylor expansion.
    pub series_order: usize,
    /// Cap on the number of Goursat series terms.
    pub max_terms: usize,
    pub series_tol: f64,
    pub output_every: usize,
    /// The `lambda` parameter of spectral problems, checked for resonance.
    pub spectral_lambda: Option<f64>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            rank_tol: crate::algebra::DEFAULT_RANK_TOL,
            commute_tol: crate::jordan::COMMUTE_TOL,
            compat_tol: 1e-6,
            series_order: 8,
            max_terms: 40,
            series_tol: 1e-12,
            output_every: 1,
            spectral_lambda: None,
        }
    }
}

/// `L0 B u + sum_i L_i A_i u = f` on a tensor grid of outer variables.
#[derive(Debug, Clone)]
pub struct DegenerateSystemSpec {
    pub b: FiniteOperator,
    /// `A_1 .. A_q`
    pub a: Vec<FiniteOperator>,
    /// `L_0 .. L_q`
    pub l: Vec<DifferentialOperatorSpec>,
    pub f: RhsField,
    /// Free functions for the unpaired kernel directions (`n > m`).
    pub lambda: Vec<Expr>,
    pub family: Family,
    pub grid: Grid,
    pub e1_layout: SpaceLayout,
    pub e2_layout: SpaceLayout,
    pub settings: Settings,
}

impl DegenerateSystemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() {
            return Err(Error::Spec("at least one operator A_1 is required".into()));
        }
        if self.l.len() != self.a.len() + 1 {
            return Err(Error::Spec(format!(
                "{} differential operators given for {} operators A_i (need q + 1)",
                self.l.len(),
                self.a.len()
            )));
        }
        for (i, a) in self.a.iter().enumerate() {
            if a.domain().dim() != self.b.domain().dim()
                || a.codomain().dim() != self.b.codomain().dim()
            {
                return Err(Error::Spec(format!(
                    "A_{} is {}x{} but B is {}x{}",
                    i + 1,
                    a.codomain().dim(),
                    a.domain().dim(),
                    self.b.codomain().dim(),
                    self.b.domain().dim()
                )));
            }
        }
        let names: Vec<String> = self.grid.axes.iter().map(|a| a.name.clone()).collect();
        for (i, l) in self.l.iter().enumerate() {
            if l.vars != names {
                return Err(Error::Spec(format!(
                    "L_{i} is written over {:?} but the grid axes are {:?}",
                    l.vars, names
                )));
            }
        }
        let q: Vec<usize> = self.l.iter().map(DifferentialOperatorSpec::order).collect();
        if self.l[0].is_zero() {
            return Err(Error::Spec("L_0 must not vanish".into()));
        }
        for i in 1..q.len() {
            if q[i] >= q[i - 1] {
                return Err(Error::Spec(format!(
                    "operator orders must decrease strictly: q_{} = {} but q_{} = {}",
                    i - 1,
                    q[i - 1],
                    i,
                    q[i]
                )));
            }
        }
        let expected = self.family.outer_vars();
        if names.iter().map(String::as_str).collect::<Vec<_>>() != expected {
            return Err(Error::Spec(format!(
                "family {} integrates over axes {:?}, got {:?}",
                self.family, expected, names
            )));
        }
        for a in &self.grid.axes {
            if Var::from_name(&a.name).is_none() {
                return Err(Error::Spec(format!("unknown axis variable `{}`", a.name)));
            }
        }
        let f0 = self.f.sample(&self.grid.point(0))?;
        if f0.len() != self.b.codomain().dim() {
            return Err(Error::Spec(format!(
                "f has {} components but E2 has dimension {}",
                f0.len(),
                self.b.codomain().dim()
            )));
        }
        Ok(())
    }

    pub fn outer_vars(&self) -> Vec<Var> {
        self.grid
            .axes
            .iter()
            .filter_map(|a| Var::from_name(&a.name))
            .collect()
    }
}
