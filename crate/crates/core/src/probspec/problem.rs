//! JSON problem files.
//!
//! ```json
//! {
//!   "family": "evolution1",
//!   "spaces": {
//!     "E1": {"kind": "grid", "variable": "x", "interval": [0, 1], "nodes": 201, "quadrature": "simpson"},
//!     "E2": "E1"
//!   },
//!   "B": {"kind": "identity_minus_kernel", "kernel": "3*x*s"},
//!   "A": [{"kind": "scaled_identity", "factor": -1}],
//!   "L": [[{"d": {"t": 1}, "c": 1}], [{"c": 1}]],
//!   "f": "x",
//!   "grid": {"axes": [{"name": "t", "interval": [0, 2], "step": 0.001}], "output_every": 100},
//!   "tolerances": {"verify": 1e-6},
//!   "oracle": "-x"
//! }
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::expr::{parse_expression_with, Bindings, Expr, Var};
use crate::algebra::{FiniteOperator, InnerProductSpace, KernelKind, Quadrature, SpaceRef};
use crate::error::{Error, Result};
use crate::reduction::{
    DegenerateSystemSpec, DiffTerm, DifferentialOperatorSpec, Family, RhsField, Settings,
    SpaceLayout,
};
use crate::solvers::spectral::sine_transform;
use crate::solvers::{Axis, Grid, SolutionField};

pub const DEFAULT_VERIFY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub family: String,
    pub spaces: SpacesJson,
    #[serde(rename = "B")]
    pub b: OperatorJson,
    #[serde(rename = "A")]
    pub a: Vec<OperatorJson>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<TermJson>>,
    pub f: ExprList,
    pub grid: GridJson,
    #[serde(default)]
    pub tolerances: TolerancesJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<ExprList>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacesJson {
    #[serde(rename = "E1")]
    pub e1: SpaceJson,
    #[serde(rename = "E2")]
    pub e2: SpaceOrAlias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceOrAlias {
    Alias(String),
    Space(SpaceJson),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureJson {
    #[default]
    Trapezoid,
    Simpson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceJson {
    Euclidean {
        dim: usize,
    },
    Weighted {
        weights: Vec<f64>,
    },
    Grid {
        variable: String,
        interval: [f64; 2],
        nodes: usize,
        #[serde(default)]
        quadrature: QuadratureJson,
    },
    /// `sin(n pi x / Lx) sin(m pi y / Ly)`, `n <= modes[0]`, `m <= modes[1]`.
    Sine2 {
        lengths: [f64; 2],
        modes: [usize; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sample_nodes: Option<[usize; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        transform_nodes: Option<usize>,
    },
}

/// A number or an expression in the named constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Num(f64),
    Expr(String),
}

impl Default for Scalar {
    fn default() -> Self {
        Scalar::Num(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorJson {
    Matrix(Vec<Vec<f64>>),
    Tagged(OperatorKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorKind {
    Matrix {
        rows: Vec<Vec<f64>>,
    },
    Identity,
    Zero,
    ScaledIdentity {
        factor: Scalar,
    },
    /// `u - int k(x, s) u(s) ds`
    IdentityMinusKernel {
        kernel: String,
    },
    /// `int k(x, s) u(s) ds`
    Kernel {
        kernel: String,
    },
    /// `d^2/d(axis)^2 + shift` on a sine basis.
    SineLaplacian {
        axis: String,
        shift: Scalar,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermJson {
    #[serde(default)]
    pub d: BTreeMap<String, usize>,
    #[serde(default)]
    pub c: Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExprList {
    One(String),
    Many(Vec<String>),
}

impl ExprList {
    fn items(&self) -> Vec<&str> {
        match self {
            ExprList::One(s) => vec![s.as_str()],
            ExprList::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisJson {
    pub name: String,
    pub interval: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridJson {
    pub axes: Vec<AxisJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_terms: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commute: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<f64>,
}

/// A numeric `lambda` is a named constant; a list gives the free functions
/// attached to unpaired kernel directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaJson {
    Constant(f64),
    Functions(Vec<String>),
}

/// Command-line overrides; each takes precedence over the file.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Overrides {
    /// Multiplies the interval count of every spatial grid and non-`t` axis.
    pub grid_scale: Option<f64>,
    /// Step of the `t` axis.
    pub dt: Option<f64>,
    /// Modes per direction of a sine space.
    pub modes: Option<usize>,
    /// Verification tolerance.
    pub tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum Oracle {
    /// Only the residual check.
    Residual,
    /// Closed form of `u`, one expression per component or one scalar
    /// expression over the physical coordinates.
    Exprs(Vec<Expr>),
}

/// A problem ready to solve.
#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: DegenerateSystemSpec,
    pub oracle: Option<Oracle>,
    pub verify_tol: f64,
    pub env: Bindings,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

pub fn parse_problem(text: &str) -> Result<ProblemFile> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            Error::Parse {
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        } else {
            schema(path, inner.to_string())
        }
    })
}

pub fn load_problem(path: &Path) -> Result<ProblemFile> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_problem(&text)
}

pub fn instantiate(pf: &ProblemFile) -> Result<DegenerateSystemSpec> {
    Ok(instantiate_with(pf, &Overrides::default())?.spec)
}

struct Ctx {
    env: Bindings,
    constants: Vec<&'static str>,
}

impl Ctx {
    fn parse(&self, path: &str, text: &str) -> Result<Expr> {
        parse_expression_with(text, &self.constants).map_err(|e| schema(path, e.to_string()))
    }

    fn scalar(&self, path: &str, s: &Scalar) -> Result<f64> {
        match s {
            Scalar::Num(v) => Ok(*v),
            Scalar::Expr(text) => {
                let e = self.parse(path, text)?;
                if !e.variables().is_empty() {
                    return Err(schema(path, "a constant is required here"));
                }
                e.eval(&self.env)
            }
        }
    }
}

fn scaled_intervals(intervals: usize, scale: Option<f64>, even: bool) -> Result<usize> {
    let Some(s) = scale else {
        return Ok(intervals);
    };
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Config(format!(
            "grid scale must be positive, got {s}"
        )));
    }
    let mut n = ((intervals as f64) * s).round().max(1.0) as usize;
    if even && n % 2 == 1 {
        n += 1;
    }
    Ok(n)
}

struct BuiltSpace {
    space: SpaceRef,
    layout: SpaceLayout,
    transform_nodes: usize,
}

fn build_space(path: &str, s: &SpaceJson, ov: &Overrides) -> Result<BuiltSpace> {
    let plain = |space: InnerProductSpace| BuiltSpace {
        space: space.into_ref(),
        layout: SpaceLayout::Plain,
        transform_nodes: 0,
    };
    match s {
        SpaceJson::Euclidean { dim } => {
            if *dim == 0 {
                return Err(schema(format!("{path}.dim"), "dimension must be positive"));
            }
            Ok(plain(InnerProductSpace::euclidean(*dim)))
        }
        SpaceJson::Weighted { weights } => Ok(plain(
            InnerProductSpace::weighted(weights)
                .map_err(|e| schema(format!("{path}.weights"), e.to_string()))?,
        )),
        SpaceJson::Grid {
            variable,
            interval,
            nodes,
            quadrature,
        } => {
            let var = Var::from_name(variable)
                .filter(|v| *v != Var::T && *v != Var::S)
                .ok_or_else(|| {
                    schema(
                        format!("{path}.variable"),
                        format!("`{variable}` is not x or y"),
                    )
                })?;
            if *nodes < 2 {
                return Err(schema(
                    format!("{path}.nodes"),
                    "at least 2 nodes are required",
                ));
            }
            let rule = match quadrature {
                QuadratureJson::Trapezoid => Quadrature::Trapezoid,
                QuadratureJson::Simpson => Quadrature::Simpson,
            };
            let n = scaled_intervals(nodes - 1, ov.grid_scale, rule == Quadrature::Simpson)? + 1;
            let space = InnerProductSpace::quadrature(interval[0], interval[1], n, rule)
                .map_err(|e| schema(path, e.to_string()))?;
            let nodes = space.grid().map(<[f64]>::to_vec).unwrap_or_default();
            Ok(BuiltSpace {
                space: space.into_ref(),
                layout: SpaceLayout::Grid {
                    variable: var,
                    nodes,
                },
                transform_nodes: 0,
            })
        }
        SpaceJson::Sine2 {
            lengths,
            modes,
            sample_nodes,
            transform_nodes,
        } => {
            let modes = match ov.modes {
                Some(m) => [m, m],
                None => *modes,
            };
            if modes.contains(&0) {
                return Err(schema(format!("{path}.modes"), "modes must be positive"));
            }
            if lengths.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
                return Err(schema(
                    format!("{path}.lengths"),
                    "lengths must be positive",
                ));
            }
            let sample_nodes = sample_nodes.unwrap_or([2 * modes[0] + 1, 2 * modes[1] + 1]);
            if sample_nodes.iter().any(|&n| n < 2) {
                return Err(schema(
                    format!("{path}.sample_nodes"),
                    "at least 2 nodes are required",
                ));
            }
            let top = modes[0].max(modes[1]);
            let tn = transform_nodes.unwrap_or((4 * top).max(64) + 1);
            if tn < 2 * top + 1 {
                return Err(schema(
                    format!("{path}.transform_nodes"),
                    format!("at least {} nodes are needed for {top} modes", 2 * top + 1),
                ));
            }
            let g = 0.25 * lengths[0] * lengths[1];
            let space = InnerProductSpace::new(
                DMatrix::identity(modes[0] * modes[1], modes[0] * modes[1]) * g,
                None,
            )?;
            Ok(BuiltSpace {
                space: space.into_ref(),
                layout: SpaceLayout::Sine2 {
                    lengths: *lengths,
                    modes,
                    sample_nodes,
                },
                transform_nodes: tn,
            })
        }
    }
}

fn build_operator(
    path: &str,
    op: &OperatorJson,
    e1: &BuiltSpace,
    e2: &BuiltSpace,
    ctx: &Ctx,
) -> Result<FiniteOperator> {
    let (d1, d2) = (e1.space.dim(), e2.space.dim());
    let square = || {
        if Arc::ptr_eq(&e1.space, &e2.space) || d1 == d2 {
            Ok(())
        } else {
            Err(schema(
                path,
                format!("this operator kind needs dim E1 = dim E2, got {d1} and {d2}"),
            ))
        }
    };
    let matrix = |rows: &Vec<Vec<f64>>| -> Result<FiniteOperator> {
        if rows.len() != d2 || rows.iter().any(|r| r.len() != d1) {
            return Err(schema(path, format!("matrix must be {d2}x{d1}")));
        }
        let m = DMatrix::from_fn(d2, d1, |i, j| rows[i][j]);
        FiniteOperator::new(e1.space.clone(), e2.space.clone(), m)
            .map_err(|e| schema(path, e.to_string()))
    };
    let diag = |vals: Vec<f64>| {
        FiniteOperator::new(
            e1.space.clone(),
            e2.space.clone(),
            DMatrix::from_diagonal(&DVector::from_vec(vals)),
        )
    };
    match op {
        OperatorJson::Matrix(rows) | OperatorJson::Tagged(OperatorKind::Matrix { rows }) => {
            matrix(rows)
        }
        OperatorJson::Tagged(kind) => match kind {
            OperatorKind::Matrix { .. } => unreachable!(),
            OperatorKind::Identity => {
                square()?;
                diag(vec![1.0; d1])
            }
            OperatorKind::Zero => Ok(FiniteOperator::zero(e1.space.clone(), e2.space.clone())),
            OperatorKind::ScaledIdentity { factor } => {
                square()?;
                let c = ctx.scalar(&format!("{path}.factor"), factor)?;
                diag(vec![c; d1])
            }
            OperatorKind::IdentityMinusKernel { kernel } | OperatorKind::Kernel { kernel } => {
                if !Arc::ptr_eq(&e1.space, &e2.space) {
                    return Err(schema(path, "kernel operators need E2 = \"E1\""));
                }
                let kpath = format!("{path}.kernel");
                let e = ctx.parse(&kpath, kernel)?;
                if e.variables().iter().any(|v| *v != Var::X && *v != Var::S) {
                    return Err(schema(&kpath, "a kernel may only use x and s"));
                }
                let which = if matches!(kind, OperatorKind::Kernel { .. }) {
                    KernelKind::KernelOnly
                } else {
                    KernelKind::IdentityMinusKernel
                };
                let err = std::cell::RefCell::new(None);
                let op = FiniteOperator::kernel_operator(e1.space.clone(), which, |x, s| {
                    let b = ctx.env.clone().with(Var::X, x).with(Var::S, s);
                    e.eval(&b).unwrap_or_else(|er| {
                        err.borrow_mut().get_or_insert(er);
                        0.0
                    })
                })
                .map_err(|e| schema(path, e.to_string()))?;
                match err.into_inner() {
                    Some(e) => Err(schema(kpath, e.to_string())),
                    None => Ok(op),
                }
            }
            OperatorKind::SineLaplacian { axis, shift } => {
                let SpaceLayout::Sine2 { lengths, modes, .. } = e1.layout else {
                    return Err(schema(path, "sine_laplacian needs a sine2 space"));
                };
                square()?;
                let k = match axis.as_str() {
                    "x" => 0,
                    "y" => 1,
                    _ => return Err(schema(format!("{path}.axis"), "axis must be x or y")),
                };
                let c = ctx.scalar(&format!("{path}.shift"), shift)?;
                let vals = (0..modes[0] * modes[1])
                    .map(|idx| {
                        let j = if k == 0 {
                            idx / modes[1] + 1
                        } else {
                            idx % modes[1] + 1
                        };
                        let w = j as f64 * std::f64::consts::PI / lengths[k];
                        c - w * w
                    })
                    .collect();
                diag(vals)
            }
        },
    }
}

fn build_grid(g: &GridJson, ov: &Overrides) -> Result<Grid> {
    if g.axes.is_empty() {
        return Err(schema("grid.axes", "at least one axis is required"));
    }
    let mut axes = Vec::with_capacity(g.axes.len());
    for (i, a) in g.axes.iter().enumerate() {
        let path = format!("grid.axes[{i}]");
        let [lo, hi] = a.interval;
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(schema(format!("{path}.interval"), "need a < b"));
        }
        let is_t = a.name == "t";
        let step = if is_t { ov.dt.or(a.step) } else { a.step };
        let intervals = match (step, a.nodes) {
            (Some(h), _) => {
                if !(h > 0.0) {
                    return Err(schema(format!("{path}.step"), "step must be positive"));
                }
                let n = ((hi - lo) / h).round();
                if n < 1.0 || ((hi - lo) - n * h).abs() > 1e-9 * (hi - lo) {
                    return Err(schema(
                        format!("{path}.step"),
                        format!("step {h} does not divide [{lo}, {hi}]"),
                    ));
                }
                n as usize
            }
            (None, Some(n)) if n >= 2 => n - 1,
            (None, Some(_)) => {
                return Err(schema(
                    format!("{path}.nodes"),
                    "at least 2 nodes are required",
                ))
            }
            (None, None) => return Err(schema(&path, "give step or nodes")),
        };
        let intervals = if is_t {
            intervals
        } else {
            scaled_intervals(intervals, ov.grid_scale, false)?
        };
        axes.push(Axis::uniform(&a.name, lo, hi, intervals + 1)?);
    }
    Grid::new(axes)
}

fn build_l(pf: &ProblemFile, grid: &Grid, ctx: &Ctx) -> Result<Vec<DifferentialOperatorSpec>> {
    let names: Vec<String> = grid.axes.iter().map(|a| a.name.clone()).collect();
    pf.l.iter()
        .enumerate()
        .map(|(i, terms)| {
            let mut out = Vec::with_capacity(terms.len());
            for (j, t) in terms.iter().enumerate() {
                let path = format!("L[{i}][{j}]");
                let mut orders = vec![0; names.len()];
                for (var, &k) in &t.d {
                    let a = names.iter().position(|n| n == var).ok_or_else(|| {
                        schema(format!("{path}.d"), format!("`{var}` is not a grid axis"))
                    })?;
                    orders[a] = k;
                }
                out.push(DiffTerm {
                    orders,
                    coefficient: ctx.scalar(&format!("{path}.c"), &t.c)?,
                });
            }
            DifferentialOperatorSpec::new(names.clone(), out)
                .map_err(|e| schema(format!("L[{i}]"), e.to_string()))
        })
        .collect()
}

fn point_bindings(env: &Bindings, outer: &[Var], p: &[f64]) -> Bindings {
    let mut b = env.clone();
    for (v, x) in outer.iter().zip(p) {
        b.set(*v, *x);
    }
    b
}

fn build_rhs(pf: &ProblemFile, e2: &BuiltSpace, outer: Vec<Var>, ctx: &Ctx) -> Result<RhsField> {
    let items = pf.f.items();
    let exprs: Vec<Expr> = items
        .iter()
        .enumerate()
        .map(|(i, s)| ctx.parse(&format!("f[{i}]"), s))
        .collect::<Result<_>>()?;
    let env = ctx.env.clone();
    for e in &exprs {
        for v in e.variables() {
            let ok = outer.contains(&v)
                || match &e2.layout {
                    SpaceLayout::Grid { variable, .. } => *variable == v,
                    SpaceLayout::Sine2 { .. } => v == Var::X || v == Var::Y,
                    SpaceLayout::Plain => false,
                };
            if !ok {
                return Err(schema(
                    "f",
                    format!("f may not depend on `{}` here", v.name()),
                ));
            }
        }
    }
    match e2.layout.clone() {
        SpaceLayout::Plain => {
            let d = e2.space.dim();
            if exprs.len() != d {
                return Err(schema(
                    "f",
                    format!("{} components given for dim E2 = {d}", exprs.len()),
                ));
            }
            let ex = exprs.clone();
            let env2 = env.clone();
            Ok(RhsField::new(move |p| {
                let b = point_bindings(&env2, &outer, p);
                ex.iter()
                    .map(|e| e.eval(&b))
                    .collect::<Result<Vec<f64>>>()
                    .map(DVector::from_vec)
            })
            .with_exprs(exprs, env))
        }
        SpaceLayout::Grid { variable, nodes } => {
            let e = single(exprs)?;
            let keep = env.clone();
            Ok(RhsField::new(move |p| {
                let mut b = point_bindings(&env, &outer, p);
                nodes
                    .iter()
                    .map(|&x| {
                        b.set(variable, x);
                        e.eval(&b)
                    })
                    .collect::<Result<Vec<f64>>>()
                    .map(DVector::from_vec)
            })
            .with_env(keep))
        }
        SpaceLayout::Sine2 { lengths, modes, .. } => {
            let e = single(exprs)?;
            let tn = e2.transform_nodes;
            let keep = env.clone();
            // the pipeline samples the same times repeatedly and each transform is costly
            let memo: Mutex<HashMap<Vec<u64>, DVector<f64>>> = Mutex::new(HashMap::new());
            Ok(RhsField::new(move |p| {
                let key: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
                if let Some(v) = memo.lock().ok().and_then(|m| m.get(&key).cloned()) {
                    return Ok(v);
                }
                let mut b = point_bindings(&env, &outer, p);
                let coeffs = sine_transform(lengths, modes, tn, |x, y| {
                    b.set(Var::X, x);
                    b.set(Var::Y, y);
                    e.eval(&b)
                })?;
                if let Ok(mut m) = memo.lock() {
                    m.insert(key, coeffs.clone());
                }
                Ok(coeffs)
            })
            .with_env(keep))
        }
    }
}

fn single(mut exprs: Vec<Expr>) -> Result<Expr> {
    if exprs.len() != 1 {
        return Err(schema("f", "a function space takes one scalar expression"));
    }
    Ok(exprs.remove(0))
}

pub fn instantiate_with(pf: &ProblemFile, ov: &Overrides) -> Result<Instance> {
    let family = Family::parse(&pf.family)?;
    let mut ctx = Ctx {
        env: Bindings::new(),
        constants: Vec::new(),
    };
    let mut spectral_lambda = None;
    if let Some(LambdaJson::Constant(v)) = &pf.lambda {
        if !v.is_finite() {
            return Err(schema("lambda", "must be finite"));
        }
        ctx.env = ctx.env.clone().with_constant("lambda", *v);
        ctx.constants.push("lambda");
        spectral_lambda = Some(*v);
    }
    let grid = build_grid(&pf.grid, ov)?;
    let outer: Vec<Var> = grid
        .axes
        .iter()
        .enumerate()
        .map(|(i, a)| {
            Var::from_name(&a.name)
                .filter(|v| *v != Var::S)
                .ok_or_else(|| {
                    schema(
                        format!("grid.axes[{i}].name"),
                        format!("`{}` is not t, x or y", a.name),
                    )
                })
        })
        .collect::<Result<_>>()?;

    let e1 = build_space("spaces.E1", &pf.spaces.e1, ov)?;
    let e2 = match &pf.spaces.e2 {
        SpaceOrAlias::Alias(s) if s == "E1" => BuiltSpace {
            space: e1.space.clone(),
            layout: e1.layout.clone(),
            transform_nodes: e1.transform_nodes,
        },
        SpaceOrAlias::Alias(s) => {
            return Err(schema(
                "spaces.E2",
                format!("unknown alias `{s}`; use \"E1\" or a space"),
            ))
        }
        SpaceOrAlias::Space(s) => build_space("spaces.E2", s, ov)?,
    };
    if let SpaceLayout::Grid { variable, .. } = &e1.layout {
        if outer.contains(variable) {
            return Err(schema(
                "spaces.E1.variable",
                "the space variable clashes with a grid axis",
            ));
        }
    }

    let b = build_operator("B", &pf.b, &e1, &e2, &ctx)?;
    let a =
        pf.a.iter()
            .enumerate()
            .map(|(i, op)| build_operator(&format!("A[{i}]"), op, &e1, &e2, &ctx))
            .collect::<Result<Vec<_>>>()?;
    let l = build_l(pf, &grid, &ctx)?;
    let f = build_rhs(pf, &e2, outer, &ctx)?;
    let lambda = match &pf.lambda {
        Some(LambdaJson::Functions(items)) => items
            .iter()
            .enumerate()
            .map(|(i, s)| ctx.parse(&format!("lambda[{i}]"), s))
            .collect::<Result<Vec<_>>>()?,
        _ => Vec::new(),
    };

    let defaults = Settings::default();
    let tol = &pf.tolerances;
    let settings = Settings {
        rank_tol: tol.rank.unwrap_or(defaults.rank_tol),
        commute_tol: tol.commute.unwrap_or(defaults.commute_tol),
        compat_tol: tol.compat.unwrap_or(defaults.compat_tol),
        series_order: pf.grid.series_order.unwrap_or(defaults.series_order),
        max_terms: pf.grid.max_terms.unwrap_or(defaults.max_terms),
        series_tol: tol.series.unwrap_or(defaults.series_tol),
        output_every: pf.grid.output_every.unwrap_or(defaults.output_every).max(1),
        spectral_lambda,
    };
    let oracle = match &pf.oracle {
        None => None,
        Some(ExprList::One(s)) if s == "residual" => Some(Oracle::Residual),
        Some(list) => Some(Oracle::Exprs(
            list.items()
                .iter()
                .enumerate()
                .map(|(i, s)| ctx.parse(&format!("oracle[{i}]"), s))
                .collect::<Result<_>>()?,
        )),
    };
    let spec = DegenerateSystemSpec {
        b,
        a,
        l,
        f,
        lambda,
        family,
        grid,
        e1_layout: e1.layout,
        e2_layout: e2.layout,
        settings,
    };
    spec.validate()?;
    Ok(Instance {
        spec,
        oracle,
        verify_tol: ov.tol.or(tol.verify).unwrap_or(DEFAULT_VERIFY_TOL),
        env: ctx.env,
    })
}

/// Largest deviation of `field` from the oracle expressions at the exported
/// nodes. Scalar oracles are evaluated at the physical coordinates of each
/// component; per-component oracles at the grid point.
pub fn oracle_deviation(exprs: &[Expr], env: &Bindings, field: &SolutionField) -> Result<f64> {
    let names: Vec<Var> = field
        .grid
        .axes
        .iter()
        .filter_map(|a| Var::from_name(&a.name))
        .collect();
    let coord_vars: Vec<Var> = match &field.layout {
        crate::solvers::ComponentLayout::Index(d) => {
            if exprs.len() != *d {
                return Err(schema(
                    "oracle",
                    format!("{} expressions for {d} components", exprs.len()),
                ));
            }
            vec![]
        }
        crate::solvers::ComponentLayout::Nodes { name, .. } => {
            vec![Var::from_name(name).unwrap_or(Var::X)]
        }
        crate::solvers::ComponentLayout::Nodes2 { .. } => vec![Var::X, Var::Y],
    };
    if !coord_vars.is_empty() && exprs.len() != 1 {
        return Err(schema(
            "oracle",
            "a function-valued solution takes one scalar oracle",
        ));
    }
    let mut worst = 0.0_f64;
    for i in field.export_indices() {
        let mut b = point_bindings(env, &names, &field.grid.point(i));
        for (c, val) in field.values[i].iter().enumerate() {
            let want = if coord_vars.is_empty() {
                exprs[c].eval(&b)?
            } else {
                for (v, x) in coord_vars.iter().zip(field.layout.coords(c)) {
                    b.set(*v, x);
                }
                exprs[0].eval(&b)?
            };
            worst = worst.max((val - want).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX2: &str = r#"{
      "family": "evolution1",
      "spaces": {"E1": {"kind": "grid", "variable": "x", "interval": [0, 1], "nodes": 21, "quadrature": "simpson"}, "E2": "E1"},
      "B": {"kind": "identity_minus_kernel", "kernel": "3*x*s"},
      "A": [{"kind": "scaled_identity", "factor": -1}],
      "L": [[{"d": {"t": 1}}], [{"c": 1}]],
      "f": "x",
      "grid": {"axes": [{"name": "t", "interval": [0, 1], "step": 0.1}]},
      "oracle": "-x"
    }"#;

    #[test]
    fn kernel_operator_from_file() {
        let inst = instantiate_with(&parse_problem(EX2).unwrap(), &Overrides::default()).unwrap();
        let b = inst.spec.b.matrix();
        assert_eq!(b.nrows(), 21);
        // I - 3 x s w: row x = 1, column s = 1 carries the Simpson end weight h/3
        assert!((b[(20, 20)] - (1.0 - 3.0 * 0.05 / 3.0)).abs() < 1e-15);
        assert_eq!(inst.spec.family, Family::Evolution1);
        assert_eq!(inst.spec.grid.axes[0].len(), 11);
        let f = inst.spec.f.sample(&[0.3]).unwrap();
        assert!((f[4] - 0.2).abs() < 1e-15);
        assert!(matches!(inst.oracle, Some(Oracle::Exprs(_))));
    }

    #[test]
    fn overrides_take_precedence() {
        let pf = parse_problem(EX2).unwrap();
        let ov = Overrides {
            grid_scale: Some(2.0),
            dt: Some(0.05),
            tol: Some(1e-3),
            ..Default::default()
        };
        let inst = instantiate_with(&pf, &ov).unwrap();
        assert_eq!(inst.spec.b.matrix().nrows(), 41);
        assert_eq!(inst.spec.grid.axes[0].len(), 21);
        assert_eq!(inst.verify_tol, 1e-3);
    }

    #[test]
    fn schema_errors_carry_paths() {
        let bad = EX2.replace("\"factor\": -1", "\"factor\": -1, \"extra\": 2");
        let e = parse_problem(&bad).unwrap_err();
        assert!(e.is_input_error());
        let bad = EX2.replace("\"c\": 1", "\"c\": \"1 +\"");
        match instantiate(&parse_problem(&bad).unwrap()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "L[1][0].c"),
            other => panic!("{other:?}"),
        }
        let bad = EX2.replace("evolution1", "heat");
        let e = instantiate(&parse_problem(&bad).unwrap()).unwrap_err();
        assert!(e
            .to_string()
            .contains("goursat, evolution1, evolution2, mixed_xy, spectral3"));
        let e = parse_problem("{\"family\": ").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn sine_space_and_lambda_constant() {
        let text = r#"{
          "family": "spectral3",
          "spaces": {"E1": {"kind": "sine2", "lengths": [3.141592653589793, 3.141592653589793], "modes": [3, 3]}, "E2": "E1"},
          "B": {"kind": "sine_laplacian", "axis": "x", "shift": 1},
          "A": [{"kind": "sine_laplacian", "axis": "y", "shift": "lambda"}],
          "L": [[{"d": {"t": 3}}], [{}]],
          "f": "sin(x)*sin(2*y)",
          "lambda": 5,
          "grid": {"axes": [{"name": "t", "interval": [0, 1], "step": 0.1}]}
        }"#;
        let spec = instantiate(&parse_problem(text).unwrap()).unwrap();
        let b = spec.b.matrix();
        assert!((b[(0, 0)]).abs() < 1e-14);
        assert!((b[(3, 3)] + 3.0).abs() < 1e-14);
        assert!((spec.a[0].matrix()[(1, 1)] - 1.0).abs() < 1e-14);
        let f = spec.f.sample(&[0.0]).unwrap();
        assert!((f[1] - 1.0).abs() < 1e-12);
        assert_eq!(spec.settings.spectral_lambda, Some(5.0));
    }
}
