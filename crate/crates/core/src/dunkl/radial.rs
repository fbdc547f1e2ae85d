//! Translations of radial functions for product systems by direct
//! integration over the representing measure.
//!
//! For a rank-one factor with multiplicity k > 0 the kernel has the Laplace
//! representation E_k(x, y) = c int_{-1}^{1} e^{s x y} (1 + s)^k (1 - s)^{k-1} ds,
//! c = Gamma(k + 1/2) / (Gamma(k) Gamma(1/2)).  Applied to Gaussians this gives, for every
//! radial f = f0(|.|),
//!
//!   tau_x f(-y) = int f0( sqrt( sum_j x_j^2 + y_j^2 - 2 s_j x_j y_j ) ) prod_j dnu_j(s_j),
//!
//! with dnu_j the normalized measure above (a point mass at s = 1 when k_j = 0).
//! The substitution 1 - s = 2 z^{1/k} removes the endpoint singularity.

use statrs::function::gamma::ln_gamma;

use super::RadialFunction;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_best, QuadOptions};

#[derive(Debug, Clone)]
pub struct ProductTranslator {
    k: Vec<f64>,
    f: RadialFunction,
    hd: f64,
    tol: f64,
    /// ln( c_k 2^{2k} / k ) per axis
    ln_norm: Vec<f64>,
}

impl ProductTranslator {
    pub fn new(multiplicities: &[f64], f: RadialFunction, tol: f64) -> Result<Self> {
        if multiplicities
            .iter()
            .any(|&k| !(k >= 0.0) || !k.is_finite())
        {
            return Err(Error::Input(format!(
                "multiplicities must be finite and >= 0: {multiplicities:?}"
            )));
        }
        let ln_norm = multiplicities
            .iter()
            .map(|&k| {
                if k == 0.0 {
                    0.0
                } else {
                    ln_gamma(k + 0.5) - ln_gamma(k) - 0.5 * std::f64::consts::PI.ln()
                        + 2.0 * k * 2f64.ln()
                        - k.ln()
                }
            })
            .collect();
        let hd = multiplicities.len() as f64 + 2.0 * multiplicities.iter().sum::<f64>();
        Ok(Self {
            k: multiplicities.to_vec(),
            f,
            hd,
            tol,
            ln_norm,
        })
    }

    pub fn function(&self) -> &RadialFunction {
        &self.f
    }

    pub fn hom_dim(&self) -> f64 {
        self.hd
    }

    /// f(x, y) = tau_x f(-y).
    pub fn kernel(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let support = self.f.support_radius().map_or(f64::INFINITY, |r| r * r);
        // smallest value the remaining axes can add to A^2
        let mut rest_min = vec![0.0; self.k.len() + 1];
        for j in (0..self.k.len()).rev() {
            let m = if self.k[j] == 0.0 {
                (x[j] - y[j]).powi(2)
            } else {
                (x[j].abs() - y[j].abs()).powi(2)
            };
            rest_min[j] = rest_min[j + 1] + m;
        }
        if rest_min[0] >= support {
            return Ok(0.0);
        }
        self.axis(0, 0.0, x, y, support, &rest_min)
    }

    /// f_t(x, y) = t^{-hd} f(x / t, y / t).
    pub fn dilated_kernel(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        let xs: Vec<f64> = x.iter().map(|v| v / t).collect();
        let ys: Vec<f64> = y.iter().map(|v| v / t).collect();
        Ok(t.powf(-self.hd) * self.kernel(&xs, &ys)?)
    }

    fn axis(
        &self,
        j: usize,
        acc: f64,
        x: &[f64],
        y: &[f64],
        support: f64,
        rest_min: &[f64],
    ) -> Result<f64> {
        if j == self.k.len() {
            return Ok(if acc >= support {
                0.0
            } else {
                self.f.profile(acc.max(0.0).sqrt())
            });
        }
        let k = self.k[j];
        let (a, b) = (x[j] * x[j] + y[j] * y[j], 2.0 * x[j] * y[j]);
        if k == 0.0 || b == 0.0 {
            // point mass, or an integrand independent of s (the measure has mass one)
            let c = if k == 0.0 { (x[j] - y[j]).powi(2) } else { a };
            return self.axis(j + 1, acc + c, x, y, support, rest_min);
        }
        // z in [0, 1] with s = 1 - 2 z^{1/k}; A_j^2 = a - b s
        let s_of = |z: f64| 1.0 - 2.0 * z.powf(1.0 / k);
        let mut breaks = Vec::new();
        if support.is_finite() {
            // a - b s = support - acc - rest_min[j+1]
            let s_star = (a - (support - acc - rest_min[j + 1])) / b;
            if s_star > -1.0 && s_star < 1.0 {
                breaks.push(((1.0 - s_star) / 2.0).powf(k));
            }
        }
        let mut failure = None;
        let opts = QuadOptions::relative(self.tol)
            .with_abs(1e-300)
            .with_budget(4000);
        let est = integrate_best(
            |z| {
                let s = s_of(z);
                let c = a - b * s;
                if acc + c + rest_min[j + 1] >= support {
                    return 0.0;
                }
                let w = (1.0 - z.powf(1.0 / k)).max(0.0).powf(k);
                match self.axis(j + 1, acc + c, x, y, support, rest_min) {
                    Ok(v) => v * w,
                    Err(e) => {
                        failure = Some(e);
                        0.0
                    }
                }
            },
            0.0,
            1.0,
            &breaks,
            &opts,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(est.value * self.ln_norm[j].exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dunkl::{ProductKernel, RadialTranslator};
    use crate::heat::HeatKernel;
    use crate::root_system::RootSystem;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_translation_is_the_heat_kernel() {
        // h_t(x, y) = tau_x g(-y) with g the radial profile of h_t(., 0)
        for k in [vec![0.5], vec![1.0], vec![2.3], vec![1.0, 0.5]] {
            let heat = HeatKernel::new(RootSystem::a1_product(&k).unwrap()).unwrap();
            let t: f64 = 0.7;
            let scale = (2.0 * t).sqrt();
            let tr = ProductTranslator::new(&k, RadialFunction::Gaussian { scale }, 1e-12).unwrap();
            let zero = vec![0.0; k.len()];
            let x0 = heat.eval(t, &zero, &zero);
            for (x, y) in [(0.3, -1.1), (1.5, 0.4), (-2.0, -0.2)] {
                let xs: Vec<f64> = (0..k.len()).map(|i| x + 0.3 * i as f64).collect();
                let ys: Vec<f64> = (0..k.len()).map(|i| y - 0.7 * i as f64).collect();
                assert_relative_eq!(
                    x0 * tr.kernel(&xs, &ys).unwrap(),
                    heat.eval(t, &xs, &ys),
                    max_relative = 1e-9
                );
            }
        }
    }

    #[test]
    fn agrees_with_spectral_translation() {
        let rs = RootSystem::a1_product(&[1.0]).unwrap();
        let pk = ProductKernel::new(&rs).unwrap();
        let f = RadialFunction::Bump { m: 6 };
        let spectral = RadialTranslator::new(&pk, f.clone(), 120.0, 3.0, 1e-5).unwrap();
        let direct = ProductTranslator::new(&[1.0], f, 1e-12).unwrap();
        for (x, y) in [
            (0.2, 0.5),
            (1.0, -0.8),
            (-1.3, -0.9),
            (0.0, 0.6),
            (1.2, 0.9),
        ] {
            let a = direct.kernel(&[x], &[y]).unwrap();
            let b = spectral.kernel(&[x], &[y]);
            assert!((a - b).abs() < 1e-5, "({x}, {y}): {a} vs {b}");
        }
    }

    #[test]
    fn classical_case_is_a_shift_and_support_is_exact() {
        let f = RadialFunction::mean_zero_bump(4, 2.0).unwrap();
        let tr = ProductTranslator::new(&[0.0, 0.0], f.clone(), 1e-12).unwrap();
        let (x, y) = ([0.3, -0.1], [0.25, 0.0]);
        assert_relative_eq!(
            tr.kernel(&x, &y).unwrap(),
            f.eval(&[0.05, -0.1]),
            max_relative = 1e-12
        );
        let tr = ProductTranslator::new(&[1.0], RadialFunction::Bump { m: 3 }, 1e-12).unwrap();
        // d(x, y) = ||x| - |y|| = 1.2 > 1
        assert_eq!(tr.kernel(&[2.0], &[-0.8]).unwrap(), 0.0);
        assert!(tr.kernel(&[2.0], &[-1.1]).unwrap().abs() > 0.0);
    }

    #[test]
    fn translation_preserves_mass() {
        let k = 1.0;
        let f = RadialFunction::mean_zero_bump(4, 3.0).unwrap();
        let tr = ProductTranslator::new(&[k], f, 1e-12).unwrap();
        let opts = QuadOptions::relative(1e-10).with_abs(1e-14);
        let x = 0.4;
        let mass = crate::quadrature::integrate(
            |y| tr.kernel(&[x], &[y]).unwrap() * y * y,
            -1.0,
            1.0,
            &[-0.4, -0.15, 0.0, 0.15, 0.4],
            &opts,
        )
        .unwrap()
        .value;
        assert!(mass.abs() < 1e-9, "{mass}");
    }
}
