//! Closed-form solutions used to check the pipeline. Integrals are evaluated
//! by composite Gauss-Legendre quadrature, independently of the solver grids.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use nalgebra::DVector;

use crate::jordan::{JordanStructure, ProjectorSet};

const PANELS: usize = 16;

fn rule() -> GaussLegendre {
    GaussLegendre::new(NonZeroUsize::new(10).unwrap())
}

/// `int_a^b f` on `PANELS` equal panels.
pub fn integrate(a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let gl = rule();
    let h = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|k| {
            let lo = a + h * k as f64;
            gl.integrate(lo, lo + h, &mut f)
        })
        .sum()
}

/// `sum_k (-1)^k z^k / (k!)^2`, which is `J0(2 sqrt(z))`.
pub fn bessel_sum(z: f64) -> f64 {
    let mut term = 1.0_f64;
    let mut acc = 1.0_f64;
    let mut k = 1.0;
    while term.abs() > 1e-18 * acc.abs().max(1.0) {
        term *= -z / (k * k);
        acc += term;
        k += 1.0;
    }
    acc
}

/// Goursat problem `(B u)_xy + u = (a, b)` with `B = diag(1, 0)` and zero
/// corner data.
pub fn goursat_diag(a: f64, b: f64, x: f64, y: f64) -> [f64; 2] {
    [a * (1.0 - bessel_sum(x * y)), b]
}

/// `d/dt (u - 3x int_0^1 s u ds) - u = f` with `u` free at `t = 0`.
pub fn first_order_closed_form(f: &dyn Fn(f64, f64) -> f64, t: f64, x: f64) -> f64 {
    let moment = |z: f64| integrate(0.0, 1.0, |s| s * f(z, s));
    let inner = integrate(0.0, t, |z| (t - z).exp() * (f(z, x) - 3.0 * x * moment(z)));
    inner - 3.0 * x * moment(t)
}

/// `d2/dt2 (u - 3x int_0^1 s u ds) - du/dt = f` under the projection
/// conditions at `t = 0`.
pub fn second_order_closed_form(f: &dyn Fn(f64, f64) -> f64, t: f64, x: f64) -> f64 {
    let direct = integrate(0.0, t, |s| ((t - s).exp() - 1.0) * f(s, x));
    let coupled = integrate(0.0, t, |s| {
        (t - s).exp() * integrate(0.0, 1.0, |xp| xp * f(s, xp))
    });
    direct - 3.0 * x * coupled
}

/// `u(t, x) = (e^t - 1)(1 - 3x/2) - 3x/2`, the `f = 1` case of the first-order problem.
pub fn first_order_unit_forcing(t: f64, x: f64) -> f64 {
    (t.exp() - 1.0) * (1.0 - 1.5 * x) - 1.5 * x
}

/// `|Q_k f(0)|`: the part of the data at `t = 0` outside the range of `B`,
/// which full Cauchy data `u = u_t = 0` would force to vanish.
pub fn cauchy_constraint_defect(js: &JordanStructure, ps: &ProjectorSet, f0: &DVector<f64>) -> f64 {
    js.e2().norm_vec(&(ps.qk.matrix() * f0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_is_exact_on_polynomials() {
        assert!((integrate(0.0, 2.0, |x| x.powi(7)) - 32.0).abs() < 1e-12);
        assert!((integrate(0.0, 1.0, f64::exp) - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn bessel_sum_values() {
        assert_eq!(bessel_sum(0.0), 1.0);
        // J0(2) = 0.22389077914123567
        assert!((bessel_sum(1.0) - 0.223_890_779_141_235_67).abs() < 1e-15);
    }

    #[test]
    fn first_order_form_matches_hand_cases() {
        let fx = |_t: f64, x: f64| x;
        let one = |_t: f64, _x: f64| 1.0;
        for &(t, x) in &[(0.5, 0.3), (2.0, 1.0), (1.3, 0.0)] {
            assert!((first_order_closed_form(&fx, t, x) + x).abs() < 1e-12);
            assert!(
                (first_order_closed_form(&one, t, x) - first_order_unit_forcing(t, x)).abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn second_order_form_gives_minus_tx() {
        let fx = |_t: f64, x: f64| x;
        for &(t, x) in &[(0.5, 0.3), (2.0, 1.0)] {
            assert!((second_order_closed_form(&fx, t, x) + t * x).abs() < 1e-12);
        }
    }
}
