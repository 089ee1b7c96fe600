use std::fmt::Write as _;

use nalgebra::DVector;

use super::grid::Grid;
use crate::error::{Error, Result};

/// How the components of each sample map to physical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum ComponentLayout {
    /// Plain coordinate vector of the given dimension.
    Index(usize),
    /// One component per node of a spatial axis.
    Nodes { name: String, nodes: Vec<f64> },
    /// One component per node of a 2-D spatial grid, row-major.
    Nodes2 {
        names: [String; 2],
        nodes: [Vec<f64>; 2],
    },
}

impl ComponentLayout {
    pub fn dim(&self) -> usize {
        match self {
            ComponentLayout::Index(d) => *d,
            ComponentLayout::Nodes { nodes, .. } => nodes.len(),
            ComponentLayout::Nodes2 { nodes, .. } => nodes[0].len() * nodes[1].len(),
        }
    }

    fn names(&self) -> Vec<&str> {
        match self {
            ComponentLayout::Index(_) => vec![],
            ComponentLayout::Nodes { name, .. } => vec![name.as_str()],
            ComponentLayout::Nodes2 { names, .. } => vec![names[0].as_str(), names[1].as_str()],
        }
    }

    /// Physical coordinates of component `c`.
    pub fn coords(&self, c: usize) -> Vec<f64> {
        match self {
            ComponentLayout::Index(_) => vec![],
            ComponentLayout::Nodes { nodes, .. } => vec![nodes[c]],
            ComponentLayout::Nodes2 { nodes, .. } => {
                let ny = nodes[1].len();
                vec![nodes[0][c / ny], nodes[1][c % ny]]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldMeta {
    pub family: String,
    /// Export every `output_every`-th node along `t`.
    pub output_every: usize,
    pub tolerances: Vec<(String, f64)>,
}

/// Samples of a vector-valued solution on a tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub grid: Grid,
    pub layout: ComponentLayout,
    pub values: Vec<DVector<f64>>,
    pub meta: FieldMeta,
}

impl SolutionField {
    pub fn new(
        grid: Grid,
        layout: ComponentLayout,
        values: Vec<DVector<f64>>,
        meta: FieldMeta,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Usage(format!(
                "field has {} samples for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        let d = layout.dim();
        for v in &values {
            if v.len() != d {
                return Err(Error::Usage(format!(
                    "sample of dimension {} in a field of dimension {d}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Evaluation(
                    "solution contains non-finite samples".into(),
                ));
            }
        }
        Ok(SolutionField {
            grid,
            layout,
            values,
            meta,
        })
    }

    pub fn sup_norm(&self) -> f64 {
        super::grid::sup_norm(&self.values)
    }

    /// Flat indices exported to CSV (every `output_every`-th node along `t`).
    pub fn export_indices(&self) -> Vec<usize> {
        let every = self.meta.output_every.max(1);
        let t_axis = self.grid.axis_index("t");
        (0..self.grid.len())
            .filter(|&i| match t_axis {
                Some(a) => self.grid.multi(i)[a] % every == 0,
                None => true,
            })
            .collect()
    }

    /// CSV with header `axes..., component, value`, row-major over axes.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let mut header: Vec<&str> = self.grid.axes.iter().map(|a| a.name.as_str()).collect();
        header.extend(self.layout.names());
        header.push("component");
        header.push("value");
        s.push_str(&header.join(","));
        s.push('\n');
        for i in self.export_indices() {
            let p = self.grid.point(i);
            for (c, v) in self.values[i].iter().enumerate() {
                for x in p.iter().chain(self.layout.coords(c).iter()) {
                    let _ = write!(s, "{x:.12e},");
                }
                let _ = writeln!(s, "{c},{v:.12e}");
            }
        }
        s
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::grid::Axis;

    #[test]
    fn csv_layout_and_stride() {
        let g = Grid::new(vec![Axis::uniform("t", 0.0, 1.0, 5).unwrap()]).unwrap();
        let layout = ComponentLayout::Nodes {
            name: "x".into(),
            nodes: vec![0.0, 1.0],
        };
        let vals = (0..5)
            .map(|i| DVector::from_vec(vec![i as f64, -1.0]))
            .collect();
        let meta = FieldMeta {
            output_every: 2,
            ..Default::default()
        };
        let f = SolutionField::new(g, layout, vals, meta).unwrap();
        let csv = f.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x,component,value");
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert_eq!(
            lines[3],
            "5.000000000000e-1,0.000000000000e0,0,2.000000000000e0"
        );
        assert_eq!(csv, f.to_csv());
    }

    #[test]
    fn rejects_bad_shapes() {
        let g = Grid::new(vec![Axis::uniform("t", 0.0, 1.0, 3).unwrap()]).unwrap();
        let vals = vec![DVector::zeros(2); 2];
        assert!(SolutionField::new(
            g.clone(),
            ComponentLayout::Index(2),
            vals,
            FieldMeta::default()
        )
        .is_err());
        let vals = vec![DVector::from_element(2, f64::NAN); 3];
        assert!(
            SolutionField::new(g, ComponentLayout::Index(2), vals, FieldMeta::default()).is_err()
        );
    }
}
