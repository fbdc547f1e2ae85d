//! Numerical Dunkl operator T_xi f(x) = d_xi f(x) + sum_alpha (k/2) <alpha, xi>
//! (f(x) - f(sigma_alpha x)) / <alpha, x>.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot};
use crate::quadrature::GaussLegendre;
use crate::root_system::RootSystem;

/// Fourth-order central difference of f along `dir` at x.
pub fn directional_derivative(f: &dyn Fn(&[f64]) -> f64, dir: &[f64], x: &[f64], h: f64) -> f64 {
    let at = |s: f64| f(&axpy(x, s * h, dir));
    (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h)
}

/// How to treat difference quotients with |<alpha, x>| < h.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WallPolicy {
    /// Replace the quotient by its limit, the mean of d_alpha f along the
    /// segment from sigma_alpha x to x.
    Limit,
    /// Refuse to evaluate.
    Fail,
}

/// T_xi f(x) with finite-difference step h.
pub fn apply_dunkl_operator(
    rs: &RootSystem,
    f: &dyn Fn(&[f64]) -> f64,
    xi: &[f64],
    x: &[f64],
    h: f64,
    walls: WallPolicy,
) -> Result<f64> {
    let mut value = directional_derivative(f, xi, x, h);
    let fx = f(x);
    let gl = GaussLegendre::new(4);
    for root in rs.roots() {
        let a = &root.vector;
        let ax = dot(a, x);
        let coef = 0.5 * root.multiplicity * dot(a, xi);
        if coef == 0.0 {
            continue;
        }
        let quotient = if ax.abs() >= h {
            let sx = axpy(x, -ax, a);
            (fx - f(&sx)) / ax
        } else {
            match walls {
                WallPolicy::Fail => return Err(Error::WallSingularity { root: a.clone() }),
                WallPolicy::Limit => gl
                    .mapped(0.0, 1.0)
                    .map(|(s, w)| w * directional_derivative(f, a, &axpy(x, -s * ax, a), h))
                    .sum(),
            }
        };
        value += coef * quotient;
    }
    Ok(value)
}

/// T_j f(x) along the coordinate direction e_j.
pub fn apply_tj(
    rs: &RootSystem,
    f: &dyn Fn(&[f64]) -> f64,
    j: usize,
    x: &[f64],
    h: f64,
) -> Result<f64> {
    let mut e = vec![0.0; x.len()];
    e[j] = 1.0;
    apply_dunkl_operator(rs, f, &e, x, h, WallPolicy::Limit)
}

/// T_j^2 f(x) by nesting the stencil; the inner step is `h`, the outer `h`.
pub fn apply_tj_squared(
    rs: &RootSystem,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    j: usize,
    x: &[f64],
    h: f64,
) -> Result<f64> {
    let inner = |p: &[f64]| apply_tj(rs, f, j, p, h).unwrap_or(f64::NAN);
    let v = apply_tj(rs, &inner, j, x, h)?;
    if v.is_nan() {
        return Err(Error::Domain("nested Dunkl operator produced NaN".into()));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dunkl::kernel::ProductKernel;
    use approx::assert_relative_eq;

    #[test]
    fn classical_derivative_when_k_vanishes() {
        let rs = RootSystem::a1_product(&[0.0, 0.0]).unwrap();
        let f = |p: &[f64]| (p[0] * p[1]).sin() + p[0].powi(3);
        let x = [0.3, 1.2];
        let xi = [0.5, -2.0];
        let exact = 0.5 * (1.2 * (0.36f64).cos() + 3.0 * 0.09) - 2.0 * 0.3 * (0.36f64).cos();
        let v = apply_dunkl_operator(&rs, &f, &xi, &x, 1e-3, WallPolicy::Fail).unwrap();
        assert_relative_eq!(v, exact, max_relative = 1e-10);
    }

    #[test]
    fn kernel_is_eigenfunction() {
        for &k in &[0.0, 0.5, 1.0, 2.3] {
            let rs = RootSystem::a1_product(&[k, k]).unwrap();
            let kern = ProductKernel::new(&rs).unwrap();
            let y = [0.8, -1.1];
            let f = |p: &[f64]| kern.e(p, &y);
            for x in [[0.4, 0.9], [-1.2, 0.3], [1e-5, 0.5]] {
                for xi in [[1.0, 0.0], [0.3, -0.7]] {
                    let v =
                        apply_dunkl_operator(&rs, &f, &xi, &x, 1e-3, WallPolicy::Limit).unwrap();
                    let expected = dot(&xi, &y) * kern.e(&x, &y);
                    assert!(
                        (v - expected).abs() <= 1e-8 * kern.e(&x, &y),
                        "k={k} x={x:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn wall_policy() {
        let rs = RootSystem::a1_product(&[1.0]).unwrap();
        let f = |p: &[f64]| p[0] * p[0] + p[0];
        // T (x^2 + x) = 2x + 1 + k * 2 x / x = 2x + 1 + 2k for odd part x
        let v = apply_dunkl_operator(&rs, &f, &[1.0], &[0.0], 1e-3, WallPolicy::Limit).unwrap();
        assert_relative_eq!(v, 3.0, max_relative = 1e-10);
        let err = apply_dunkl_operator(&rs, &f, &[1.0], &[0.0], 1e-3, WallPolicy::Fail);
        assert!(matches!(err, Err(Error::WallSingularity { .. })));
    }

    #[test]
    fn leibniz_with_invariant_factor() {
        let rs = RootSystem::a1_product(&[1.0, 0.5]).unwrap();
        let f = |p: &[f64]| (0.3 * p[0] - 0.7 * p[1]).exp() + p[0];
        let g = |p: &[f64]| (-(p[0] * p[0] + p[1] * p[1])).exp();
        let fg = |p: &[f64]| f(p) * g(p);
        let x = [0.6, -0.4];
        for xi in [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]] {
            let lhs = apply_dunkl_operator(&rs, &fg, &xi, &x, 1e-3, WallPolicy::Limit).unwrap();
            let tf = apply_dunkl_operator(&rs, &f, &xi, &x, 1e-3, WallPolicy::Limit).unwrap();
            let tg = apply_dunkl_operator(&rs, &g, &xi, &x, 1e-3, WallPolicy::Limit).unwrap();
            assert!((lhs - (tf * g(&x) + f(&x) * tg)).abs() < 1e-8);
        }
    }
}
