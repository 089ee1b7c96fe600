//! Family solvers for the regular equation, the full pipeline and
//! closed-form oracles.

use std::fmt::Write as _;

use nalgebra::DVector;

pub mod evolution;
pub mod field;
pub mod goursat;
pub mod grid;
pub mod mixed;
pub mod oracles;
pub mod rk4;
pub mod spectral;

pub use field::{ComponentLayout, FieldMeta, SolutionField};
pub use grid::{Axis, Grid};

use crate::error::{Error, Result};
use crate::jordan::{build_jordan_chains, build_projectors};
use crate::reduction::{
    compatibility_residual, reconstruct_solution, reduce, solve_c_recurrence, DegenerateSystemSpec,
    Family, ReducedProblem, SpaceLayout,
};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub family: String,
    /// RK4 steps along `t`, zero for the other families.
    pub steps: usize,
    pub series_terms: Option<usize>,
    pub series_order: Option<usize>,
    /// Sup-norm of the highest-degree part of a truncated Taylor series.
    pub series_tail: Option<f64>,
    pub modes: Option<[usize; 2]>,
    pub compat_residual: f64,
}

impl Diagnostics {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "solver_family={}", self.family);
        let _ = writeln!(s, "rk4_steps={}", self.steps);
        if let Some(n) = self.series_terms {
            let _ = writeln!(s, "series_terms={n}");
        }
        if let Some(n) = self.series_order {
            let _ = writeln!(s, "series_order={n}");
        }
        if let Some(t) = self.series_tail {
            let _ = writeln!(s, "series_tail={t:.6e}");
        }
        if let Some([a, b]) = self.modes {
            let _ = writeln!(s, "modes={a}x{b}");
        }
        let _ = writeln!(s, "compat_residual={:.6e}", self.compat_residual);
        s
    }
}

/// Output of the full pipeline.
#[derive(Debug, Clone)]
pub struct Solution {
    /// `u` in physical coordinates at the exported nodes.
    pub field: SolutionField,
    /// `u` in E1 coordinates at every grid node.
    pub u: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub c: Vec<Vec<f64>>,
    pub reduced: ReducedProblem,
    pub diagnostics: Diagnostics,
}

fn spectral_parameters(spec: &DegenerateSystemSpec) -> Result<(f64, [usize; 2])> {
    let SpaceLayout::Sine2 { modes, .. } = spec.e1_layout else {
        return Err(Error::Spec("spectral3 needs a sine2 space".into()));
    };
    let lambda = spec
        .settings
        .spectral_lambda
        .ok_or_else(|| Error::Spec("spectral3 needs a numeric lambda".into()))?;
    Ok((lambda, modes))
}

/// Chains, projectors, commutability and the reduced problem.
pub fn prepare(spec: &DegenerateSystemSpec) -> Result<ReducedProblem> {
    spec.validate()?;
    if spec.family == Family::Spectral3 {
        let (lambda, modes) = spectral_parameters(spec)?;
        spectral::check_resonance(lambda, modes)?;
    }
    let js = build_jordan_chains(&spec.b, &spec.a[0], spec.settings.rank_tol)?;
    let ps = build_projectors(&js)?;
    reduce(spec, js, ps)
}

pub fn solve(spec: &DegenerateSystemSpec) -> Result<Solution> {
    let rp = prepare(spec)?;
    let mut diagnostics = Diagnostics {
        family: spec.family.name().to_string(),
        ..Default::default()
    };
    let v = match spec.family {
        Family::Goursat => {
            let (v, terms) = goursat::solve_v(&rp, &spec.settings)?;
            diagnostics.series_terms = Some(terms);
            v
        }
        Family::MixedXy => {
            let order = spec.settings.series_order;
            let (v, tail) = mixed::solve_v(&rp, order)?;
            diagnostics.series_order = Some(order);
            diagnostics.series_tail = Some(tail);
            v
        }
        Family::Evolution1 | Family::Evolution2 | Family::Spectral3 => {
            diagnostics.steps = rp.grid.axes[0].len() - 1;
            if spec.family == Family::Spectral3 {
                diagnostics.modes = Some(spectral_parameters(spec)?.1);
            }
            evolution::solve_v(&rp)?
        }
    };
    let c = solve_c_recurrence(&rp)?;
    let u = reconstruct_solution(&rp, &v, &c)?;
    diagnostics.compat_residual = compatibility_residual(&rp, &v)?;
    let field = physical_field(spec, &u)?;
    Ok(Solution {
        field,
        u,
        v,
        c,
        reduced: rp,
        diagnostics,
    })
}

fn physical_field(spec: &DegenerateSystemSpec, u: &[DVector<f64>]) -> Result<SolutionField> {
    let mut meta = FieldMeta {
        family: spec.family.name().to_string(),
        output_every: spec.settings.output_every,
        tolerances: vec![
            ("rank_tol".into(), spec.settings.rank_tol),
            ("commute_tol".into(), spec.settings.commute_tol),
        ],
    };
    match &spec.e1_layout {
        SpaceLayout::Plain => SolutionField::new(
            spec.grid.clone(),
            ComponentLayout::Index(spec.b.domain().dim()),
            u.to_vec(),
            meta,
        ),
        SpaceLayout::Grid { variable, nodes } => SolutionField::new(
            spec.grid.clone(),
            ComponentLayout::Nodes {
                name: variable.name().to_string(),
                nodes: nodes.clone(),
            },
            u.to_vec(),
            meta,
        ),
        SpaceLayout::Sine2 {
            lengths,
            modes,
            sample_nodes,
        } => {
            let s = spectral::synthesis_matrix(*lengths, *modes, *sample_nodes);
            let every = spec.settings.output_every.max(1);
            let t = &spec.grid.axes[0];
            let keep: Vec<usize> = (0..t.len()).step_by(every).collect();
            let axis = Axis {
                name: t.name.clone(),
                nodes: keep.iter().map(|&i| t.nodes[i]).collect(),
            };
            let values = keep.iter().map(|&i| &s * &u[i]).collect();
            meta.output_every = 1;
            SolutionField::new(
                Grid::new(vec![axis])?,
                ComponentLayout::Nodes2 {
                    names: ["x".into(), "y".into()],
                    nodes: [
                        spectral::sample_axis(lengths[0], sample_nodes[0]),
                        spectral::sample_axis(lengths[1], sample_nodes[1]),
                    ],
                },
                values,
                meta,
            )
        }
    }
}

fn expect_family(spec: &DegenerateSystemSpec, family: Family) -> Result<()> {
    if spec.family != family {
        return Err(Error::Spec(format!(
            "problem declares family {}, solver expects {family}",
            spec.family
        )));
    }
    Ok(())
}

/// `L0 = dx dy`, `L1 = 1`: Neumann series in the corner integral.
pub fn solve_goursat(spec: &DegenerateSystemSpec) -> Result<Solution> {
    expect_family(spec, Family::Goursat)?;
    solve(spec)
}

pub fn solve_first_order_evolution(spec: &DegenerateSystemSpec) -> Result<Solution> {
    expect_family(spec, Family::Evolution1)?;
    solve(spec)
}

pub fn solve_second_order_evolution(spec: &DegenerateSystemSpec) -> Result<Solution> {
    expect_family(spec, Family::Evolution2)?;
    solve(spec)
}

/// `L0 = dx^2`, `L_r` in `y` only: Taylor series about the grid corner.
pub fn solve_mixed_series(spec: &DegenerateSystemSpec) -> Result<Solution> {
    expect_family(spec, Family::MixedXy)?;
    solve(spec)
}

/// Modal `(1 - n^2) u''' + (lambda - m^2) u = f_nm`, rebuilt on the sample grid.
pub fn solve_third_order_spectral(spec: &DegenerateSystemSpec) -> Result<Solution> {
    expect_family(spec, Family::Spectral3)?;
    solve(spec)
}
