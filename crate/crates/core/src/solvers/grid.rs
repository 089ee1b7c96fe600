use nalgebra::DVector;

use crate::error::{Error, Result};

/// A named uniform axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub nodes: Vec<f64>,
}

impl Axis {
    pub fn uniform(name: &str, a: f64, b: f64, nodes: usize) -> Result<Self> {
        if nodes < 2 || !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Config(format!(
                "axis `{name}` needs an interval a < b and at least 2 nodes, got [{a}, {b}] with {nodes}"
            )));
        }
        let h = (b - a) / (nodes - 1) as f64;
        let mut v: Vec<f64> = (0..nodes).map(|i| a + h * i as f64).collect();
        v[nodes - 1] = b;
        Ok(Axis {
            name: name.to_string(),
            nodes: v,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn step(&self) -> f64 {
        (self.nodes[self.nodes.len() - 1] - self.nodes[0]) / (self.nodes.len() - 1) as f64
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }
}

/// Tensor grid over the outer variables, row-major (first axis slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Config("a grid needs at least one axis".into()));
        }
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::Config(format!("axis `{}` listed twice", a.name)));
            }
        }
        Ok(Grid { axes })
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Axis::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    pub fn axis_index(&self, name: &str) -> Option<usize> {
        self.axes.iter().position(|a| a.name == name)
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.axes[axis + 1..].iter().map(Axis::len).product()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter()
            .enumerate()
            .fold(0, |acc, (a, &i)| acc * self.axes[a].len() + i)
    }

    pub fn multi(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims()];
        for a in (0..self.dims()).rev() {
            let n = self.axes[a].len();
            idx[a] = flat % n;
            flat /= n;
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.axes[a].nodes[i])
            .collect()
    }

    /// Flat indices of every line along `axis`, each in increasing order.
    pub fn lines(&self, axis: usize) -> Vec<Vec<usize>> {
        let n = self.axes[axis].len();
        let stride = self.stride(axis);
        let mut out = Vec::new();
        for start in 0..self.len() {
            if self.multi(start)[axis] == 0 {
                out.push((0..n).map(|i| start + i * stride).collect());
            }
        }
        out
    }
}

const D1_INTERIOR: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const D1_FIRST: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
const D1_SECOND: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];

/// Fourth-order first derivative of samples on a uniform line.
pub fn diff4_line(vals: &[DVector<f64>], h: f64) -> Result<Vec<DVector<f64>>> {
    let n = vals.len();
    if n < 5 {
        return Err(Error::Usage(format!(
            "fourth-order differencing needs at least 5 nodes, got {n}"
        )));
    }
    let comb = |start: usize, w: &[f64; 5], sign: f64| {
        let mut acc = DVector::zeros(vals[0].len());
        for (k, wk) in w.iter().enumerate() {
            if *wk != 0.0 {
                acc.axpy(sign * wk / (12.0 * h), &vals[start + k], 1.0);
            }
        }
        acc
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let d = if i == 0 {
            comb(0, &D1_FIRST, 1.0)
        } else if i == 1 {
            comb(0, &D1_SECOND, 1.0)
        } else if i == n - 2 {
            let mut w = D1_SECOND;
            w.reverse();
            comb(n - 5, &w, -1.0)
        } else if i == n - 1 {
            let mut w = D1_FIRST;
            w.reverse();
            comb(n - 5, &w, -1.0)
        } else {
            comb(i - 2, &D1_INTERIOR, 1.0)
        };
        out.push(d);
    }
    Ok(out)
}

/// `d^order/d(axis)^order` of a grid function by repeated fourth-order differencing.
pub fn diff4(
    grid: &Grid,
    vals: &[DVector<f64>],
    axis: usize,
    order: usize,
) -> Result<Vec<DVector<f64>>> {
    let mut cur = vals.to_vec();
    let h = grid.axes[axis].step();
    for _ in 0..order {
        let mut next = cur.clone();
        for line in grid.lines(axis) {
            let seg: Vec<DVector<f64>> = line.iter().map(|&i| cur[i].clone()).collect();
            for (&i, d) in line.iter().zip(diff4_line(&seg, h)?) {
                next[i] = d;
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// Applies `D^k` (one order per axis) by repeated fourth-order differencing.
pub fn mixed_diff4(grid: &Grid, vals: &[DVector<f64>], k: &[usize]) -> Result<Vec<DVector<f64>>> {
    let mut cur = vals.to_vec();
    for (axis, &order) in k.iter().enumerate() {
        if order > 0 {
            cur = diff4(grid, &cur, axis, order)?;
        }
    }
    Ok(cur)
}

/// Second-order centered stencil `(offsets, weights)` for the given derivative
/// order, unscaled by the step.
pub fn centered_stencil(order: usize) -> Option<(Vec<i64>, Vec<f64>)> {
    match order {
        0 => Some((vec![0], vec![1.0])),
        1 => Some((vec![-1, 1], vec![-0.5, 0.5])),
        2 => Some((vec![-1, 0, 1], vec![1.0, -2.0, 1.0])),
        3 => Some((vec![-2, -1, 1, 2], vec![-0.5, 1.0, -1.0, 0.5])),
        4 => Some((vec![-2, -1, 0, 1, 2], vec![1.0, -4.0, 6.0, -4.0, 1.0])),
        _ => None,
    }
}

pub fn centered_halfwidth(order: usize) -> usize {
    match order {
        0 => 0,
        1 | 2 => 1,
        _ => 2,
    }
}

/// `D^k u` at a grid node by tensor-product centered differences, or `None`
/// if the stencil leaves the grid.
pub fn centered_at(
    grid: &Grid,
    vals: &[DVector<f64>],
    idx: &[usize],
    k: &[usize],
) -> Option<DVector<f64>> {
    let mut terms: Vec<(Vec<usize>, f64)> = vec![(idx.to_vec(), 1.0)];
    for (axis, &order) in k.iter().enumerate() {
        if order == 0 {
            continue;
        }
        let (offs, ws) = centered_stencil(order)?;
        let h = grid.axes[axis].step();
        let scale = h.powi(order as i32);
        let n = grid.axes[axis].len() as i64;
        let mut next = Vec::with_capacity(terms.len() * offs.len());
        for (pos, w) in &terms {
            for (o, wo) in offs.iter().zip(&ws) {
                let j = pos[axis] as i64 + o;
                if j < 0 || j >= n {
                    return None;
                }
                let mut p = pos.clone();
                p[axis] = j as usize;
                next.push((p, w * wo / scale));
            }
        }
        terms = next;
    }
    let mut acc = DVector::zeros(vals[0].len());
    for (p, w) in terms {
        acc.axpy(w, &vals[grid.flat(&p)], 1.0);
    }
    Some(acc)
}

/// Derivative of the given order at the first node of a line from one-sided
/// five-point differences.
pub fn one_sided_start(line: &[DVector<f64>], h: f64, order: usize) -> Result<DVector<f64>> {
    let w: &[f64] = match order {
        0 => return Ok(line[0].clone()),
        1 => &[-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25],
        2 => &[35.0 / 12.0, -26.0 / 3.0, 9.5, -14.0 / 3.0, 11.0 / 12.0],
        3 => &[-2.5, 9.0, -12.0, 7.0, -1.5],
        _ => {
            return Err(Error::Usage(format!(
                "one-sided derivative of order {order} is not available"
            )))
        }
    };
    if line.len() < w.len() {
        return Err(Error::Usage(
            "line too short for a one-sided stencil".into(),
        ));
    }
    let mut acc = DVector::zeros(line[0].len());
    for (k, wk) in w.iter().enumerate() {
        acc.axpy(*wk / h.powi(order as i32), &line[k], 1.0);
    }
    Ok(acc)
}

/// Cubic interpolation at the midpoint of interval `i` of a uniform line.
pub fn midpoint4(line: &[f64], i: usize) -> f64 {
    let n = line.len();
    match n {
        0 => 0.0,
        1 => line[0],
        2 | 3 => 0.5 * (line[i] + line[i + 1]),
        _ => {
            if i == 0 {
                (5.0 * line[0] + 15.0 * line[1] - 5.0 * line[2] + line[3]) / 16.0
            } else if i + 2 >= n {
                let b = n - 4;
                (line[b] - 5.0 * line[b + 1] + 15.0 * line[b + 2] + 5.0 * line[b + 3]) / 16.0
            } else {
                (-line[i - 1] + 9.0 * line[i] + 9.0 * line[i + 1] - line[i + 2]) / 16.0
            }
        }
    }
}

/// `F(x_i) = int_{x_0}^{x_i} f`, fourth order on each interval via the local cubic.
pub fn cumulative4(line: &[DVector<f64>], h: f64) -> Result<Vec<DVector<f64>>> {
    let n = line.len();
    if n < 4 {
        return Err(Error::Usage(format!(
            "cumulative quadrature needs at least 4 nodes, got {n}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut acc = DVector::zeros(line[0].len());
    out.push(acc.clone());
    for i in 0..n - 1 {
        let (start, w): (usize, [f64; 4]) = if i == 0 {
            (0, [9.0, 19.0, -5.0, 1.0])
        } else if i == n - 2 {
            (n - 4, [1.0, -5.0, 19.0, 9.0])
        } else {
            (i - 1, [-1.0, 13.0, 13.0, -1.0])
        };
        for (k, wk) in w.iter().enumerate() {
            acc.axpy(h * wk / 24.0, &line[start + k], 1.0);
        }
        out.push(acc.clone());
    }
    Ok(out)
}

/// Cumulative integral of a grid function along `axis`.
pub fn cumulative(grid: &Grid, vals: &[DVector<f64>], axis: usize) -> Result<Vec<DVector<f64>>> {
    let h = grid.axes[axis].step();
    let mut out = vals.to_vec();
    for line in grid.lines(axis) {
        let seg: Vec<DVector<f64>> = line.iter().map(|&i| vals[i].clone()).collect();
        for (&i, v) in line.iter().zip(cumulative4(&seg, h)?) {
            out[i] = v;
        }
    }
    Ok(out)
}

pub fn sup_norm(vals: &[DVector<f64>]) -> f64 {
    vals.iter().map(|v| v.amax()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampled(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Vec<DVector<f64>> {
        (0..grid.len())
            .map(|i| DVector::from_element(1, f(&grid.point(i))))
            .collect()
    }

    #[test]
    fn indexing_round_trips() {
        let g = Grid::new(vec![
            Axis::uniform("x", 0.0, 1.0, 3).unwrap(),
            Axis::uniform("y", 0.0, 1.0, 4).unwrap(),
        ])
        .unwrap();
        for i in 0..g.len() {
            assert_eq!(g.flat(&g.multi(i)), i);
        }
        assert_eq!(g.lines(1).len(), 3);
        assert_eq!(g.lines(0)[1], vec![1, 5, 9]);
        assert!(Grid::new(vec![g.axes[0].clone(), g.axes[0].clone()]).is_err());
    }

    #[test]
    fn fourth_order_derivatives_are_exact_on_quartics() {
        let g = Grid::new(vec![Axis::uniform("t", 0.0, 1.0, 11).unwrap()]).unwrap();
        let v = sampled(&g, |p| p[0].powi(4) - 2.0 * p[0]);
        let d = diff4(&g, &v, 0, 1).unwrap();
        for i in 0..g.len() {
            let t = g.point(i)[0];
            assert!((d[i][0] - (4.0 * t.powi(3) - 2.0)).abs() < 1e-11);
        }
    }

    #[test]
    fn centered_mixed_derivative() {
        let g = Grid::new(vec![
            Axis::uniform("x", 0.0, 1.0, 9).unwrap(),
            Axis::uniform("y", 0.0, 2.0, 9).unwrap(),
        ])
        .unwrap();
        let v = sampled(&g, |p| p[0] * p[0] * p[1]);
        let d = centered_at(&g, &v, &[4, 4], &[1, 1]).unwrap();
        assert!((d[0] - 2.0 * 0.5).abs() < 1e-12);
        assert!(centered_at(&g, &v, &[0, 4], &[1, 0]).is_none());
        let d3 = centered_at(&g, &v, &[4, 4], &[3, 0]).unwrap();
        assert!(d3[0].abs() < 1e-9);
    }

    #[test]
    fn one_sided_stencils_on_polynomials() {
        let h = 0.1;
        let line: Vec<DVector<f64>> = (0..6)
            .map(|i| {
                let t = h * i as f64;
                DVector::from_element(1, 1.0 + 2.0 * t + 3.0 * t * t + t * t * t)
            })
            .collect();
        assert!((one_sided_start(&line, h, 1).unwrap()[0] - 2.0).abs() < 1e-10);
        assert!((one_sided_start(&line, h, 2).unwrap()[0] - 6.0).abs() < 1e-9);
        assert!((one_sided_start(&line, h, 3).unwrap()[0] - 6.0).abs() < 1e-7);
    }

    #[test]
    fn cumulative_integral_of_cubic_is_exact() {
        let h = 0.05;
        let line: Vec<DVector<f64>> = (0..21)
            .map(|i| DVector::from_element(1, (h * i as f64).powi(3)))
            .collect();
        let c = cumulative4(&line, h).unwrap();
        for (i, v) in c.iter().enumerate() {
            let x = h * i as f64;
            assert!((v[0] - x.powi(4) / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn midpoint_interpolation_of_cubic() {
        let line: Vec<f64> = (0..7).map(|i| (i as f64).powi(3)).collect();
        for i in 0..6 {
            assert!((midpoint4(&line, i) - (i as f64 + 0.5).powi(3)).abs() < 1e-12);
        }
    }
}
