//! Truncated bivariate Taylor polynomials for exact derivatives of parsed
//! expressions.

use super::expr::{Bindings, Expr, Number, Var};
use crate::error::{Error, Result};

/// `sum c[i][j] X^i Y^j` over `i + j <= order`, where `X`, `Y` are offsets
/// from the expansion point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    order: usize,
    c: Vec<f64>,
}

impl Jet2 {
    pub fn constant(order: usize, v: f64) -> Self {
        let mut j = Jet2::zero(order);
        j.c[0] = v;
        j
    }

    pub fn zero(order: usize) -> Self {
        Jet2 {
            order,
            c: vec![0.0; (order + 1) * (order + 1)],
        }
    }

    /// `v + X` for `axis == 0`, `v + Y` for `axis == 1`.
    pub fn variable(order: usize, v: f64, axis: usize) -> Self {
        let mut j = Jet2::constant(order, v);
        if order > 0 {
            if axis == 0 {
                j.set(1, 0, 1.0);
            } else {
                j.set(0, 1, 1.0);
            }
        }
        j
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + j > self.order {
            0.0
        } else {
            self.c[i * (self.order + 1) + j]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i + j <= self.order);
        self.c[i * (self.order + 1) + j] = v;
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// `d^(i+j) / dX^i dY^j` at the expansion point.
    pub fn derivative_at(&self, i: usize, j: usize) -> f64 {
        self.get(i, j) * factorial(i) * factorial(j)
    }

    /// Derivative as a jet of the same order (the top coefficients become zero).
    pub fn differentiate(&self, di: usize, dj: usize) -> Jet2 {
        let mut out = Jet2::zero(self.order);
        for i in 0..=self.order {
            for j in 0..=self.order - i {
                if i + di + j + dj > self.order {
                    continue;
                }
                let c = self.get(i + di, j + dj) * falling(i + di, di) * falling(j + dj, dj);
                out.set(i, j, c);
            }
        }
        out
    }

    /// Evaluates the polynomial at offsets `(dx, dy)`.
    pub fn eval(&self, dx: f64, dy: f64) -> f64 {
        let mut acc = 0.0;
        for i in (0..=self.order).rev() {
            let mut row = 0.0;
            for j in (0..=self.order - i).rev() {
                row = row * dy + self.get(i, j);
            }
            acc = acc * dx + row;
        }
        acc
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Jet2 {
        Jet2 {
            order: self.order,
            c: self.c.iter().map(|&v| f(v)).collect(),
        }
    }

    fn nilpotent_part(&self) -> Jet2 {
        let mut h = self.clone();
        h.c[0] = 0.0;
        h
    }

    /// `sum_k coeffs[k] H^k` with `H` the non-constant part.
    fn compose(&self, coeffs: &[f64]) -> Jet2 {
        let h = self.nilpotent_part();
        let mut out = Jet2::constant(self.order, coeffs[0]);
        let mut hk = Jet2::constant(self.order, 1.0);
        for &a in coeffs.iter().skip(1).take(self.order) {
            hk = hk.mul(&h);
            out = out.add(&hk.map(|v| v * a));
        }
        out
    }

    fn is_constant(&self) -> bool {
        self.c.iter().skip(1).all(|&v| v == 0.0)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn falling(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

impl Number for Jet2 {
    fn neg(&self) -> Self {
        self.map(|v| -v)
    }

    fn add(&self, o: &Self) -> Self {
        Jet2 {
            order: self.order,
            c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect(),
        }
    }

    fn sub(&self, o: &Self) -> Self {
        Jet2 {
            order: self.order,
            c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect(),
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let k = self.order;
        let mut out = Jet2::zero(k);
        for i1 in 0..=k {
            for j1 in 0..=k - i1 {
                let a = self.get(i1, j1);
                if a == 0.0 {
                    continue;
                }
                for i2 in 0..=k - i1 - j1 {
                    for j2 in 0..=k - i1 - j1 - i2 {
                        let idx = (i1 + i2) * (k + 1) + j1 + j2;
                        out.c[idx] += a * o.get(i2, j2);
                    }
                }
            }
        }
        out
    }

    fn div(&self, o: &Self) -> Result<Self> {
        let a0 = o.value();
        if a0 == 0.0 {
            return Err(Error::Evaluation(
                "division by zero in Taylor expansion".into(),
            ));
        }
        // 1/(a0 + H) = sum (-1)^k H^k / a0^(k+1)
        let coeffs: Vec<f64> = (0..=self.order)
            .map(|k| (-1f64).powi(k as i32) / a0.powi(k as i32 + 1))
            .collect();
        Ok(self.mul(&o.compose(&coeffs)))
    }

    fn pow(&self, o: &Self) -> Result<Self> {
        if o.is_constant() {
            let p = o.value();
            if p.fract() == 0.0 && p.abs() <= 64.0 {
                let mut out = Jet2::constant(self.order, 1.0);
                for _ in 0..p.abs() as usize {
                    out = out.mul(self);
                }
                return if p < 0.0 {
                    Jet2::constant(self.order, 1.0).div(&out)
                } else {
                    Ok(out)
                };
            }
            let a0 = self.value();
            if a0 <= 0.0 {
                return Err(Error::Evaluation(format!(
                    "non-integer power of non-positive value {a0} in Taylor expansion"
                )));
            }
            // a0^p (1 + H/a0)^p, generalized binomial series
            let mut coeffs = Vec::with_capacity(self.order + 1);
            let mut binom = 1.0;
            for k in 0..=self.order {
                coeffs.push(a0.powf(p) * binom / a0.powi(k as i32));
                binom *= (p - k as f64) / (k as f64 + 1.0);
            }
            return Ok(self.compose(&coeffs));
        }
        let a0 = self.value();
        if a0 <= 0.0 {
            return Err(Error::Evaluation(
                "variable exponent needs a positive base in Taylor expansion".into(),
            ));
        }
        // exp(o * ln(self))
        let mut coeffs = vec![a0.ln()];
        for k in 1..=self.order {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            coeffs.push(sign / (k as f64 * a0.powi(k as i32)));
        }
        o.mul(&self.compose(&coeffs)).exp()
    }

    fn sin(&self) -> Result<Self> {
        let f0 = self.value();
        let coeffs: Vec<f64> = (0..=self.order)
            .map(|k| (f0 + k as f64 * std::f64::consts::FRAC_PI_2).sin() / factorial(k))
            .collect();
        Ok(self.compose(&coeffs))
    }

    fn cos(&self) -> Result<Self> {
        let f0 = self.value();
        let coeffs: Vec<f64> = (0..=self.order)
            .map(|k| (f0 + k as f64 * std::f64::consts::FRAC_PI_2).cos() / factorial(k))
            .collect();
        Ok(self.compose(&coeffs))
    }

    fn exp(&self) -> Result<Self> {
        let e = self.value().exp();
        let coeffs: Vec<f64> = (0..=self.order).map(|k| e / factorial(k)).collect();
        Ok(self.compose(&coeffs))
    }

    fn sqrt(&self) -> Result<Self> {
        if self.value() <= 0.0 {
            if self.is_constant() && self.value() == 0.0 {
                return Ok(Jet2::zero(self.order));
            }
            return Err(Error::Evaluation(format!(
                "square root of non-positive value {} in Taylor expansion",
                self.value()
            )));
        }
        self.pow(&Jet2::constant(self.order, 0.5))
    }
}

/// Taylor expansion of `e` in the variables `axes` (one or two) about
/// `center`, with every other variable taken from `env`.
pub fn expand(
    e: &Expr,
    axes: &[Var],
    center: &[f64],
    env: &Bindings,
    order: usize,
) -> Result<Jet2> {
    if axes.is_empty() || axes.len() > 2 || axes.len() != center.len() {
        return Err(Error::Usage(
            "Taylor expansion needs one or two axes".into(),
        ));
    }
    let var = |v: Var| -> Result<Jet2> {
        match axes.iter().position(|a| *a == v) {
            Some(k) => Ok(Jet2::variable(order, center[k], k)),
            None => Ok(Jet2::constant(order, env.get(v))),
        }
    };
    let jet = e.eval_in(&var, &|n| env.constant(n), &|c| Jet2::constant(order, c))?;
    if jet.c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("non-finite Taylor coefficient".into()));
    }
    Ok(jet)
}

/// `D^k e` at the point `at`, where `k[i]` counts derivatives along `axes[i]`.
pub fn derivative(e: &Expr, axes: &[Var], at: &[f64], env: &Bindings, k: &[usize]) -> Result<f64> {
    let total: usize = k.iter().sum();
    if total == 0 {
        let mut b = env.clone();
        for (a, v) in axes.iter().zip(at) {
            b.set(*a, *v);
        }
        return e.eval(&b);
    }
    let jet = expand(e, axes, at, env, total)?;
    Ok(jet.derivative_at(k[0], k.get(1).copied().unwrap_or(0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probspec::expr::parse_expression;

    fn jet(s: &str, x: f64, y: f64, order: usize) -> Jet2 {
        expand(
            &parse_expression(s).unwrap(),
            &[Var::X, Var::Y],
            &[x, y],
            &Bindings::new(),
            order,
        )
        .unwrap()
    }

    #[test]
    fn polynomial_coefficients() {
        let j = jet("x^2*y + 3*x", 0.0, 0.0, 4);
        assert_eq!(j.get(2, 1), 1.0);
        assert_eq!(j.get(1, 0), 3.0);
        assert_eq!(j.get(0, 0), 0.0);
        assert_eq!(j.derivative_at(2, 1), 2.0);
    }

    #[test]
    fn exp_sin_sqrt_match_closed_forms() {
        let j = jet("exp(x)*sin(y)", 0.3, 0.2, 6);
        let e = 0.3f64.exp();
        assert!((j.derivative_at(3, 0) - e * 0.2f64.sin()).abs() < 1e-13);
        assert!((j.derivative_at(1, 3) + e * 0.2f64.cos()).abs() < 1e-13);
        let j = jet("sqrt(1 + x)", 0.0, 0.0, 5);
        assert!((j.derivative_at(2, 0) + 0.25).abs() < 1e-14);
        let j = jet("1/(1 - x)", 0.0, 0.0, 6);
        for k in 0..=6 {
            assert!((j.get(k, 0) - 1.0).abs() < 1e-14);
        }
        let j = jet("(1+x)^y", 0.0, 1.0, 4);
        // d/dx (1+x)^y at (0,1) = y (1+x)^(y-1) = 1
        assert!((j.derivative_at(1, 0) - 1.0).abs() < 1e-13);
        let j = jet("cos(x*y)", 0.5, 0.5, 3);
        assert!((j.value() - 0.25f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn truncated_evaluation_and_differentiation() {
        let j = jet("exp(x + y)", 0.0, 0.0, 14);
        assert!((j.eval(0.1, 0.2) - 0.3f64.exp()).abs() < 1e-13);
        let d = j.differentiate(1, 1);
        assert!((d.eval(0.1, 0.0) - 0.1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn derivative_helper_binds_other_variables() {
        let e = parse_expression("sin(t)*x^3").unwrap();
        let env = Bindings::new().with(Var::X, 2.0);
        let d = derivative(&e, &[Var::T], &[0.0], &env, &[1]).unwrap();
        assert!((d - 8.0).abs() < 1e-14);
        let v = derivative(&e, &[Var::T], &[0.5], &env, &[0]).unwrap();
        assert!((v - 8.0 * 0.5f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn invalid_expansions_error() {
        let e = parse_expression("sqrt(x)").unwrap();
        assert!(expand(&e, &[Var::X], &[0.0], &Bindings::new(), 3).is_err());
        let e = parse_expression("1/x").unwrap();
        assert!(expand(&e, &[Var::X], &[0.0], &Bindings::new(), 3).is_err());
    }
}
