//! Dunkl kernel, operators, transform and translations.

pub mod kernel;
pub mod operator;
pub mod radial;
pub mod transform;

pub use kernel::{dunkl_kernel_e, dunkl_kernel_e_imag, ProductKernel};
pub use operator::{apply_dunkl_operator, apply_tj, apply_tj_squared, WallPolicy};
pub use radial::ProductTranslator;
pub use transform::{
    dunkl_convolve, dunkl_transform, inverse_dunkl_transform, RadialFunction, RadialTranslator,
    Sampled, TransformGrid,
};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq};

/// A(x, y, eta) = sqrt(|x|^2 + |y|^2 - 2 <y, eta>).
pub fn radial_support_bound_a(x: &[f64], y: &[f64], eta: &[f64]) -> Result<f64> {
    let first = norm_sq(x) + norm_sq(y) - 2.0 * dot(y, eta);
    let ye: Vec<f64> = y.iter().zip(eta).map(|(a, b)| a - b).collect();
    let second = norm_sq(x) - norm_sq(eta) + norm_sq(&ye);
    let scale = norm_sq(x) + norm_sq(y) + norm_sq(eta);
    if (first - second).abs() > 1e-12 * scale.max(1.0) {
        return Err(Error::Domain(format!(
            "the two forms of A disagree: {first} vs {second}"
        )));
    }
    if first < -1e-12 {
        return Err(Error::Domain(format!("negative radicand {first}")));
    }
    Ok(first.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::root_system::RootSystem;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn a_examples() {
        let x = [1.0, -2.0];
        let y = [0.5, 0.5];
        let a = radial_support_bound_a(&x, &y, &x).unwrap();
        assert!((a - crate::linalg::dist(&x, &y)).abs() < 1e-12);
        assert_eq!(radial_support_bound_a(&x, &x, &x).unwrap(), 0.0);
        assert!(radial_support_bound_a(&[0.0], &[1.0], &[3.0]).is_err());
    }

    #[test]
    fn a_dominates_orbit_distance_on_convex_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=3 {
            let rs = RootSystem::a1_product(&vec![1.0; n]).unwrap();
            for _ in 0..200 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let orbit = rs.orbit(&x).points;
                let mut lam: Vec<f64> = orbit.iter().map(|_| rng.gen::<f64>()).collect();
                let s: f64 = lam.iter().sum();
                lam.iter_mut().for_each(|l| *l /= s);
                let eta: Vec<f64> = (0..n)
                    .map(|j| orbit.iter().zip(&lam).map(|(p, l)| l * p[j]).sum())
                    .collect();
                let a = radial_support_bound_a(&x, &y, &eta).unwrap();
                assert!(a >= rs.orbit_distance(&x, &y) - 1e-12);
            }
        }
    }
}
