//! The weight w(x) = prod |<alpha, x>|^{k(alpha)}, the measure dw and weighted
//! volumes of balls and boxes.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, LN_10, PI};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::certificate::{evaluate, EstimateCertificate, Sweep};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq};
use crate::quadrature::{integrate_best, QuadOptions};
use crate::root_system::RootSystem;

/// Default relative tolerance for volumes.
pub const VOLUME_TOL: f64 = 1e-6;
/// Default relative tolerance for c_k.
pub const CK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallVolume {
    pub center: Vec<f64>,
    pub radius: f64,
    pub value: f64,
    pub error_estimate: f64,
}

type Integrand<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// Weighted measure of a root system with a memo of ball volumes.
#[derive(Debug)]
pub struct Measure {
    rs: RootSystem,
    product: Option<Vec<f64>>,
    tol: f64,
    cache: Mutex<HashMap<Vec<u64>, BallVolume>>,
}

impl Clone for Measure {
    fn clone(&self) -> Self {
        Self {
            rs: self.rs.clone(),
            product: self.product.clone(),
            tol: self.tol,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

/// w(x) for a root system.
pub fn weight(rs: &RootSystem, x: &[f64]) -> f64 {
    rs.roots()
        .iter()
        .map(|r| dot(&r.vector, x).abs().powf(r.multiplicity))
        .product()
}

/// int_lo^hi 2^k |s|^{2k} ds
fn axis_integral(k: f64, lo: f64, hi: f64) -> f64 {
    if k == 0.0 {
        return hi - lo;
    }
    let p = 2.0 * k + 1.0;
    let f = |s: f64| s.signum() * s.abs().powf(p) / p;
    2f64.powf(k) * (f(hi) - f(lo))
}

fn axis_weight(k: f64, s: f64) -> f64 {
    if k == 0.0 {
        1.0
    } else {
        2f64.powf(k) * s.abs().powf(2.0 * k)
    }
}

/// Surface area of the unit sphere in R^n.
pub fn sphere_area(n: usize) -> f64 {
    2.0 * PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0)
}

/// Lebesgue volume of the unit ball in R^n.
pub fn unit_ball_volume(n: usize) -> f64 {
    PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0 + 1.0)
}

struct Acc {
    error: f64,
    converged: bool,
}

impl Measure {
    pub fn new(rs: RootSystem) -> Self {
        let product = rs.product_multiplicities();
        Self {
            rs,
            product,
            tol: VOLUME_TOL,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn root_system(&self) -> &RootSystem {
        &self.rs
    }

    pub fn dim(&self) -> usize {
        self.rs.dim()
    }

    /// Per-axis multiplicities for rank-one and product systems.
    pub fn product(&self) -> Option<&[f64]> {
        self.product.as_deref()
    }

    pub fn weight(&self, x: &[f64]) -> f64 {
        match &self.product {
            Some(k) => k
                .iter()
                .zip(x)
                .map(|(&kj, &xj)| axis_weight(kj, xj))
                .product(),
            None => weight(&self.rs, x),
        }
    }

    /// Weighted volume of B(center, radius), memoized.
    pub fn ball_volume(&self, center: &[f64], radius: f64) -> Result<BallVolume> {
        if !(radius > 0.0) {
            return Err(Error::Domain(format!(
                "ball radius {radius} must be positive"
            )));
        }
        let mut key: Vec<u64> = center.iter().map(|c| c.to_bits()).collect();
        key.push(radius.to_bits());
        if let Some(v) = self.cache.lock().expect("volume cache").get(&key) {
            return Ok(v.clone());
        }
        let (value, error) = self.integrate_ball(center, radius, None, self.tol)?;
        let v = BallVolume {
            center: center.to_vec(),
            radius,
            value,
            error_estimate: error,
        };
        self.cache
            .lock()
            .expect("volume cache")
            .insert(key, v.clone());
        Ok(v)
    }

    /// w(B(center, radius)).
    pub fn ball(&self, center: &[f64], radius: f64) -> Result<f64> {
        Ok(self.ball_volume(center, radius)?.value)
    }

    /// V(x, y, t) = max(w(B(x, t)), w(B(y, t))).
    pub fn v_max(&self, x: &[f64], y: &[f64], t: f64) -> Result<f64> {
        Ok(self.ball(x, t)?.max(self.ball(y, t)?))
    }

    /// Integral of `g` (or of 1) against dw over B(center, radius), with an
    /// error estimate. Fails with the best value if `tol` is not reached.
    pub fn integrate_ball(
        &self,
        center: &[f64],
        radius: f64,
        g: Option<Integrand<'_>>,
        tol: f64,
    ) -> Result<(f64, f64)> {
        let mut acc = Acc {
            error: 0.0,
            converged: true,
        };
        let mut x = vec![0.0; self.dim()];
        let value = self.ball_level(0, &mut x, center, radius, g, tol, &mut acc);
        if !acc.converged {
            return Err(Error::BudgetExceeded {
                best: value,
                error: acc.error,
            });
        }
        Ok((value, acc.error))
    }

    /// Same as [`Self::integrate_ball`] but forces numerical quadrature in
    /// every coordinate (no closed-form inner integral).
    pub fn integrate_ball_numeric(&self, center: &[f64], radius: f64, tol: f64) -> Result<f64> {
        let one = |_: &[f64]| 1.0;
        Ok(self.integrate_ball(center, radius, Some(&one), tol)?.0)
    }

    #[allow(clippy::too_many_arguments)]
    fn ball_level(
        &self,
        i: usize,
        x: &mut Vec<f64>,
        c: &[f64],
        rho: f64,
        g: Option<Integrand<'_>>,
        tol: f64,
        acc: &mut Acc,
    ) -> f64 {
        let n = self.dim();
        if rho <= 0.0 {
            return 0.0;
        }
        if i + 1 == n {
            let (lo, hi) = (c[i] - rho, c[i] + rho);
            if let (None, Some(k)) = (g, &self.product) {
                let prefix: f64 = (0..i).map(|j| axis_weight(k[j], x[j])).product();
                return prefix * axis_integral(k[i], lo, hi);
            }
            let breaks = self.inner_walls(x, i);
            let opts = QuadOptions::relative(0.1 * tol).with_abs(1e-300);
            let est = integrate_best(
                |s| {
                    x[i] = s;
                    let w = self.weight(x);
                    match g {
                        Some(g) => w * g(x),
                        None => w,
                    }
                },
                lo,
                hi,
                &breaks,
                &opts,
            );
            acc.error += est.error;
            acc.converged &= est.converged;
            return est.value;
        }
        let breaks: Vec<f64> = self
            .outer_walls(c, rho, i)
            .into_iter()
            .filter(|v| (v - c[i]).abs() < rho)
            .map(|v| ((v - c[i]) / rho).asin())
            .collect();
        let mut inner = Acc {
            error: 0.0,
            converged: true,
        };
        let opts = QuadOptions::relative(tol).with_abs(1e-300).with_budget(500);
        let est = integrate_best(
            |th| {
                x[i] = c[i] + rho * th.sin();
                let r = rho * th.cos();
                let mut a = Acc {
                    error: 0.0,
                    converged: true,
                };
                let v = self.ball_level(i + 1, x, c, r, g, tol, &mut a);
                inner.error = inner.error.max(a.error * rho);
                inner.converged &= a.converged;
                rho * th.cos() * v
            },
            -FRAC_PI_2,
            FRAC_PI_2,
            &breaks,
            &opts,
        );
        acc.error += est.error + PI * inner.error;
        acc.converged &= est.converged && inner.converged;
        est.value
    }

    /// Values of x_i where a wall meets the line through the fixed prefix.
    fn inner_walls(&self, x: &[f64], i: usize) -> Vec<f64> {
        if self.product.is_some() {
            return vec![0.0];
        }
        self.rs
            .roots()
            .iter()
            .filter(|r| r.vector[i].abs() > 1e-14)
            .map(|r| -(0..i).map(|j| r.vector[j] * x[j]).sum::<f64>() / r.vector[i])
            .collect()
    }

    /// Values of x_i at which the slice integral can lose smoothness.
    fn outer_walls(&self, c: &[f64], rho: f64, i: usize) -> Vec<f64> {
        let mut out = vec![0.0];
        if self.product.is_none() && self.dim() == 2 && i == 0 {
            // wall lines through the origin meet the circle boundary
            for r in self.rs.roots() {
                let d = [-r.vector[1], r.vector[0]];
                let dn = norm_sq(&d).sqrt();
                let d = [d[0] / dn, d[1] / dn];
                let b = dot(&d, c);
                let disc = b * b - (norm_sq(c) - rho * rho);
                if disc >= 0.0 {
                    for t in [b - disc.sqrt(), b + disc.sqrt()] {
                        out.push(t * d[0]);
                    }
                }
            }
        }
        out
    }

    /// Weighted measure of the box prod [lo_j, hi_j].
    pub fn box_mass(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        if let Some(k) = &self.product {
            return Ok(k
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&kj, (&a, &b))| axis_integral(kj, a, b))
                .product());
        }
        let mut acc = Acc {
            error: 0.0,
            converged: true,
        };
        let mut x = vec![0.0; self.dim()];
        let v = self.box_level(0, &mut x, lo, hi, &mut acc);
        if !acc.converged {
            return Err(Error::BudgetExceeded {
                best: v,
                error: acc.error,
            });
        }
        Ok(v)
    }

    fn box_level(&self, i: usize, x: &mut Vec<f64>, lo: &[f64], hi: &[f64], acc: &mut Acc) -> f64 {
        let n = self.dim();
        let mut breaks = if i + 1 == n {
            self.inner_walls(x, i)
        } else {
            vec![0.0]
        };
        if i == 0 && n == 2 {
            for r in self.rs.roots() {
                if r.vector[0].abs() > 1e-14 {
                    for edge in [lo[1], hi[1]] {
                        breaks.push(-r.vector[1] * edge / r.vector[0]);
                    }
                }
            }
        }
        let tol = if i + 1 == n { 0.1 * self.tol } else { self.tol };
        let opts = QuadOptions::relative(tol).with_abs(1e-300).with_budget(500);
        let mut inner_ok = true;
        let est = integrate_best(
            |s| {
                x[i] = s;
                if i + 1 == n {
                    self.weight(x)
                } else {
                    let mut a = Acc {
                        error: 0.0,
                        converged: true,
                    };
                    let v = self.box_level(i + 1, x, lo, hi, &mut a);
                    inner_ok &= a.converged;
                    v
                }
            },
            lo[i],
            hi[i],
            &breaks,
            &opts,
        );
        acc.error += est.error;
        acc.converged &= est.converged && inner_ok;
        est.value
    }

    /// c_k = int e^{-|x|^2/2} dw; closed form for product systems.
    pub fn c_k(&self) -> Result<f64> {
        match &self.product {
            Some(k) => Ok(k
                .iter()
                .map(|&kj| 2f64.powf(2.0 * kj + 0.5) * gamma(kj + 0.5))
                .product()),
            None => Ok(self.c_k_quadrature(CK_TOL)?.0),
        }
    }

    /// c_k by ball quadrature with an analytic bound on the Gaussian tail;
    /// returns (value, tail bound).
    pub fn c_k_quadrature(&self, tol: f64) -> Result<(f64, f64)> {
        let n = self.dim();
        let hd = self.rs.hom_dim();
        let digits = -tol.log10();
        let mut radius = (2.0 * LN_10 * (hd + digits)).sqrt();
        // w(u) <= 2^gamma on the unit sphere since |<alpha, u>| <= sqrt 2
        let tail = |r: f64| {
            2f64.powf(self.rs.gamma())
                * sphere_area(n)
                * 2f64.powf(hd / 2.0 - 1.0)
                * gamma(hd / 2.0)
                * gamma_ur(hd / 2.0, r * r / 2.0)
        };
        let g = |x: &[f64]| (-0.5 * norm_sq(x)).exp();
        let origin = vec![0.0; n];
        for _ in 0..20 {
            let (value, _) = self.integrate_ball(&origin, radius, Some(&g), 0.1 * tol)?;
            let t = tail(radius);
            if t <= 0.5 * tol * value {
                return Ok((value, t));
            }
            radius += 1.0;
        }
        Err(Error::TailBound {
            tail: tail(radius),
            tol,
        })
    }

    /// Certificates for the comparability, doubling and growth properties of
    /// ball volumes over centers `sweep.x_axis`^N and radii `sweep.t_values`.
    pub fn certify_facts(&self, sweep: &Sweep) -> Result<Vec<EstimateCertificate>> {
        let n = self.dim() as f64;
        let hd = self.rs.hom_dim();
        let mut domain = sweep.clone();
        domain.y_axis = vec![0.0];
        let refined = {
            let mut r = domain.refine();
            r.y_axis = vec![0.0];
            r
        };
        let summary = self.rs.describe();

        let behavior = |x: &[f64], _: &[f64], r: f64| -> Result<f64> {
            let model: f64 = r.powf(n)
                * self
                    .rs
                    .roots()
                    .iter()
                    .map(|a| (dot(&a.vector, x).abs() + r).powf(a.multiplicity))
                    .product::<f64>();
            Ok(self.ball(x, r)? / model)
        };
        let doubling = |x: &[f64], _: &[f64], r: f64| Ok(self.ball(x, 2.0 * r)? / self.ball(x, r)?);
        let growth = |x: &[f64], _: &[f64], r: f64| -> Result<f64> {
            let q = self.ball(x, 4.0 * r)? / self.ball(x, r)?;
            Ok((q / 4f64.powf(hd)).max(4f64.powf(n) / q))
        };

        let mut out = Vec::new();
        let mut cert =
            EstimateCertificate::new("measure_behavior", summary.clone(), domain.clone());
        cert.conclude(
            &evaluate(&domain, behavior)?,
            &evaluate(&refined, behavior)?,
        );
        if let (Some(lo), Some(hi)) = (cert.lower, cert.worst.as_ref().map(|w| w.ratio)) {
            cert.notes.push(format!(
                "w(B(x,r)) / (r^N prod(|<x,alpha>|+r)^k) observed in [{lo:.6e}, {hi:.6e}]"
            ));
        }
        out.push(cert);

        let mut cert =
            EstimateCertificate::new("measure_doubling", summary.clone(), domain.clone());
        cert.conclude(
            &evaluate(&domain, doubling)?,
            &evaluate(&refined, doubling)?,
        );
        out.push(cert);

        let mut cert = EstimateCertificate::new("measure_growth", summary, domain.clone());
        cert.conclude(&evaluate(&domain, growth)?, &evaluate(&refined, growth)?);
        let slopes = self.growth_exponents(&domain)?;
        let (smin, smax) = slopes
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| {
                (a.min(s), b.max(s))
            });
        cert.notes.push(format!(
            "fitted log-volume exponents in [{smin:.6}, {smax:.6}], admissible [{n}, {hd}]"
        ));
        if smin < n - 1e-6 || smax > hd + 1e-6 {
            cert.pass = false;
            cert.constant = None;
            cert.notes
                .push("fitted exponent outside [N, hom_dim]".into());
        }
        out.push(cert);
        Ok(out)
    }

    /// Least-squares slope of ln w(B(x, r)) against ln r for each center.
    pub fn growth_exponents(&self, sweep: &Sweep) -> Result<Vec<f64>> {
        let radii = &sweep.t_values;
        let lr: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let mean_r = lr.iter().sum::<f64>() / lr.len() as f64;
        let sxx: f64 = lr.iter().map(|l| (l - mean_r).powi(2)).sum();
        sweep
            .points()
            .iter()
            .map(|x| {
                let lv = radii
                    .iter()
                    .map(|&r| Ok(self.ball(x, r)?.ln()))
                    .collect::<Result<Vec<f64>>>()?;
                let mean_v = lv.iter().sum::<f64>() / lv.len() as f64;
                let sxy: f64 = lr
                    .iter()
                    .zip(&lv)
                    .map(|(a, b)| (a - mean_r) * (b - mean_v))
                    .sum();
                Ok(sxy / sxx)
            })
            .collect()
    }
}
