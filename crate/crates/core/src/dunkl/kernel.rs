//! Dunkl kernel of rank-one and A1-product systems as a product of rank-one
//! kernels E_{k_j}(x_j y_j).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::root_system::RootSystem;
use crate::special;

#[derive(Debug, Clone, PartialEq)]
pub struct ProductKernel {
    k: Vec<f64>,
}

impl ProductKernel {
    pub fn new(rs: &RootSystem) -> Result<Self> {
        Ok(Self {
            k: rs.require_product()?,
        })
    }

    pub fn from_multiplicities(k: &[f64]) -> Self {
        Self { k: k.to_vec() }
    }

    pub fn multiplicities(&self) -> &[f64] {
        &self.k
    }

    pub fn dim(&self) -> usize {
        self.k.len()
    }

    /// E(x, y).
    pub fn e(&self, x: &[f64], y: &[f64]) -> f64 {
        self.check(x, y);
        self.k
            .iter()
            .zip(x.iter().zip(y))
            .map(|(&k, (&a, &b))| special::kernel(k, a * b))
            .product()
    }

    /// e^{-sum |x_j y_j|} E(x, y), never overflows.
    pub fn e_scaled(&self, x: &[f64], y: &[f64]) -> f64 {
        self.check(x, y);
        self.k
            .iter()
            .zip(x.iter().zip(y))
            .map(|(&k, (&a, &b))| special::kernel_scaled(k, a * b))
            .product()
    }

    /// ln E(x, y).
    pub fn ln_e(&self, x: &[f64], y: &[f64]) -> f64 {
        self.check(x, y);
        self.k
            .iter()
            .zip(x.iter().zip(y))
            .map(|(&k, (&a, &b))| special::kernel_ln(k, a * b))
            .sum()
    }

    /// E(x, -i y).
    pub fn e_imag(&self, x: &[f64], y: &[f64]) -> Complex64 {
        self.check(x, y);
        self.k
            .iter()
            .zip(x.iter().zip(y))
            .map(|(&k, (&a, &b))| special::kernel_imag(k, a * b))
            .product()
    }

    fn check(&self, x: &[f64], y: &[f64]) {
        assert!(
            x.len() == self.k.len() && y.len() == self.k.len(),
            "point dimension does not match the kernel"
        );
    }
}

/// E(x, y) for a rank-one or product system.
pub fn dunkl_kernel_e(rs: &RootSystem, x: &[f64], y: &[f64]) -> Result<f64> {
    let kernel = ProductKernel::new(rs)?;
    dims(rs, x, y)?;
    Ok(kernel.e(x, y))
}

/// E(-i x, y) for a rank-one or product system.
pub fn dunkl_kernel_e_imag(rs: &RootSystem, x: &[f64], y: &[f64]) -> Result<Complex64> {
    let kernel = ProductKernel::new(rs)?;
    dims(rs, x, y)?;
    Ok(kernel.e_imag(x, y))
}

fn dims(rs: &RootSystem, x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != rs.dim() || y.len() != rs.dim() {
        return Err(Error::Input(format!(
            "points of dimension {} and {} for a system in R^{}",
            x.len(),
            y.len(),
            rs.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::root_system::SystemSpec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn normalization_and_classical_case() {
        let rs = RootSystem::a1_product(&[1.0, 0.5]).unwrap();
        assert_eq!(dunkl_kernel_e(&rs, &[0.0, 0.0], &[3.0, -2.0]).unwrap(), 1.0);
        let flat = RootSystem::a1_product(&[0.0]).unwrap();
        assert_relative_eq!(
            dunkl_kernel_e(&flat, &[1.5], &[-0.4]).unwrap(),
            (-0.6f64).exp(),
            max_relative = 1e-15
        );
        let e = dunkl_kernel_e_imag(&rs, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(e, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn non_product_is_unsupported() {
        let rs = RootSystem::build(&SystemSpec::A2 { k: 1.0 }).unwrap();
        assert!(matches!(
            dunkl_kernel_e(&rs, &[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::UnsupportedSystem(_))
        ));
    }

    #[test]
    fn rank_one_k1_matches_ode_series() {
        // independent route: integrate T f = f along the defining system,
        // f' = f - (f(x) - f(-x))/x, as a Taylor expansion about 0 with
        // coefficients found by matching powers
        let mut a = vec![1.0f64];
        for n in 1..60 {
            let odd = n % 2 == 1;
            let d = n as f64 + if odd { 2.0 } else { 0.0 };
            a.push(a[n - 1] / d);
        }
        let series: f64 = a.iter().sum();
        let rs = RootSystem::a1_product(&[1.0]).unwrap();
        assert_relative_eq!(
            dunkl_kernel_e(&rs, &[1.0], &[1.0]).unwrap(),
            series,
            max_relative = 1e-14
        );
    }

    #[test]
    fn imaginary_modulus_bounded_on_sweep() {
        let kern = ProductKernel::from_multiplicities(&[1.0]);
        let mut worst: f64 = 0.0;
        for i in 0..=100 {
            for j in 0..=100 {
                let x = -5.0 + 0.1 * i as f64;
                let y = -5.0 + 0.1 * j as f64;
                worst = worst.max(kern.e_imag(&[x], &[y]).norm());
            }
        }
        assert!(worst <= 1.0 + 1e-10, "{worst}");
    }

    proptest! {
        #[test]
        fn symmetry_and_scaling(x in proptest::collection::vec(-3.0..3.0f64, 2),
                                y in proptest::collection::vec(-3.0..3.0f64, 2),
                                lam in -2.0..2.0f64,
                                s0 in any::<bool>(), s1 in any::<bool>()) {
            let kern = ProductKernel::from_multiplicities(&[0.5, 2.3]);
            let lx: Vec<f64> = x.iter().map(|v| v * lam).collect();
            let ly: Vec<f64> = y.iter().map(|v| v * lam).collect();
            let a = kern.e(&lx, &y);
            let b = kern.e(&x, &ly);
            let c = kern.e(&ly, &x);
            prop_assert!((a - b).abs() <= 1e-10 * a);
            prop_assert!((a - c).abs() <= 1e-10 * a);
            prop_assert!(a > 0.0);
            // E(sigma x, sigma y) = E(x, y)
            let sg = [if s0 { -1.0 } else { 1.0 }, if s1 { -1.0 } else { 1.0 }];
            let sx: Vec<f64> = x.iter().zip(&sg).map(|(v, s)| v * s).collect();
            let sy: Vec<f64> = y.iter().zip(&sg).map(|(v, s)| v * s).collect();
            let e = kern.e(&x, &y);
            prop_assert!((kern.e(&sx, &sy) - e).abs() <= 1e-12 * e);
            prop_assert!(kern.e_imag(&x, &y).norm() <= 1.0 + 1e-10);
        }
    }
}
