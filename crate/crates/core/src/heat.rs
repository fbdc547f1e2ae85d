//! Dunkl heat kernel of rank-one and A1-product systems, the operator
//! identities it satisfies, and certificates for its Gaussian-type bounds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::certificate::{
    evaluate, evaluate_many, judge, EstimateCertificate, SamplePoint, Sweep, DILATIONS,
    STABILITY_TOL,
};
use crate::dunkl::kernel::ProductKernel;
use crate::dunkl::operator::{apply_tj, apply_tj_squared};
use crate::dunkl::radial::ProductTranslator;
use crate::dunkl::transform::RadialFunction;
use crate::error::{Error, Result};
use crate::linalg::{dist, norm_sq};
use crate::measure::Measure;
use crate::quadrature::{integrate, QuadOptions};
use crate::root_system::RootSystem;
use crate::special;

/// Estimates with a certificate in this module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatEstimate {
    /// h_t <= c_k^{-1} (2t)^{-N/2} exp(-d^2 / 4t)
    Rosler,
    /// h_t <= C G_{t/c}
    HeatRadial,
    /// |D h_t| <= C t^{-order} h_{2t}
    DtDxDy2t,
    /// |D h_t| <= C t^{-order} G_{t/c}
    DtDxDy,
    /// |d_t^m h_t(x, y) - d_t^m h_t(x, y')| <= C t^{-m} (|y - y'| / sqrt t) G_{t/c}
    HeatHolder,
    /// |D h_t| <= C t^{-order} (1 + |x - y| / sqrt t)^{-2} G_{t/c}
    Heat2,
    /// the Hölder bound with the extra (1 + |x - y| / sqrt t)^{-2}
    Heat3,
    /// (1 + |x - y| / sqrt t)^2 h_t <= C (h_{2t} + sum_alpha k h_t(sigma_alpha x, y))
    HeatBetter2t,
}

impl HeatEstimate {
    pub const ALL: [HeatEstimate; 8] = [
        HeatEstimate::Rosler,
        HeatEstimate::HeatRadial,
        HeatEstimate::DtDxDy2t,
        HeatEstimate::DtDxDy,
        HeatEstimate::HeatHolder,
        HeatEstimate::Heat2,
        HeatEstimate::Heat3,
        HeatEstimate::HeatBetter2t,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            HeatEstimate::Rosler => "rosler",
            HeatEstimate::HeatRadial => "heat_radial",
            HeatEstimate::DtDxDy2t => "dtdxdy2t",
            HeatEstimate::DtDxDy => "dtdxdy",
            HeatEstimate::HeatHolder => "heat_holder",
            HeatEstimate::Heat2 => "heat2",
            HeatEstimate::Heat3 => "heat3",
            HeatEstimate::HeatBetter2t => "heat_better2t",
        }
    }

    /// Whether the right-hand side carries the unspecified dilation c.
    pub fn has_dilation(&self) -> bool {
        !matches!(
            self,
            HeatEstimate::Rosler | HeatEstimate::DtDxDy2t | HeatEstimate::HeatBetter2t
        )
    }
}

impl fmt::Display for HeatEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeatEstimate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeatEstimate::ALL
            .iter()
            .find(|e| e.name() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown heat estimate '{s}'")))
    }
}

/// Relative offsets |y - y'| / sqrt t used for the Hölder estimates.
const HOLDER_OFFSETS: [f64; 4] = [0.5, 1.0, -0.5, -1.0];

/// Heat kernel evaluator. Values are computed in log form so sweeps deep in
/// the Gaussian tail neither underflow nor lose relative accuracy.
#[derive(Debug, Clone)]
pub struct HeatKernel {
    rs: RootSystem,
    kernel: ProductKernel,
    measure: Measure,
    ln_c_k: f64,
    hd: f64,
}

impl HeatKernel {
    pub fn new(rs: RootSystem) -> Result<Self> {
        let kernel = ProductKernel::new(&rs)?;
        let measure = Measure::new(rs.clone());
        let ln_c_k = measure.c_k()?.ln();
        let hd = rs.hom_dim();
        Ok(Self {
            rs,
            kernel,
            measure,
            ln_c_k,
            hd,
        })
    }

    pub fn root_system(&self) -> &RootSystem {
        &self.rs
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn kernel(&self) -> &ProductKernel {
        &self.kernel
    }

    pub fn c_k(&self) -> f64 {
        self.ln_c_k.exp()
    }

    pub fn hom_dim(&self) -> f64 {
        self.hd
    }

    /// ln h_t(x, y).
    pub fn ln_eval(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = -self.ln_c_k - 0.5 * self.hd * (2.0 * t).ln();
        for (j, &k) in self.kernel.multiplicities().iter().enumerate() {
            let z = x[j] * y[j] / (2.0 * t);
            acc += special::kernel_ln(k, z) - (x[j] * x[j] + y[j] * y[j]) / (4.0 * t);
        }
        acc
    }

    /// h_t(x, y).
    pub fn eval(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        self.ln_eval(t, x, y).exp()
    }

    /// d/dt ln h_t(x, y).
    pub fn dt_log(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        // per axis (x^2 + y^2)/4t^2 - (z/t) L(z) = (|x| - |y|)^2/4t^2 + (|z|/t) gap(z)
        let mut acc = -0.5 * self.hd / t;
        for (j, &k) in self.kernel.multiplicities().iter().enumerate() {
            let z = x[j] * y[j] / (2.0 * t);
            let diff = x[j].abs() - y[j].abs();
            acc += diff * diff / (4.0 * t * t)
                + z.abs() / t * special::kernel_log_derivative_gap(k, z);
        }
        acc
    }

    /// d/dx_j ln h_t(x, y).
    pub fn dx_log(&self, t: f64, x: &[f64], y: &[f64], j: usize) -> f64 {
        let k = self.kernel.multiplicities()[j];
        let z = x[j] * y[j] / (2.0 * t);
        if z == 0.0 {
            return -x[j] / (2.0 * t) + y[j] / (2.0 * t) / (2.0 * k + 1.0);
        }
        let gap = special::kernel_log_derivative_gap(k, z);
        (-x[j].signum() * (x[j].abs() - y[j].abs()) - z.signum() * y[j] * gap) / (2.0 * t)
    }

    /// d/dt h_t(x, y).
    pub fn dt(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        self.eval(t, x, y) * self.dt_log(t, x, y)
    }

    /// ln G_t(x, y) = ln( V(x, y, sqrt t)^{-1} sum_sigma exp(-|x - sigma y|^2 / t) ).
    pub fn ln_gauss_like(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        let v = self.measure.v_max(x, y, t.sqrt())?;
        let exps: Vec<f64> = self
            .rs
            .group()
            .iter()
            .map(|g| -norm_sq(&crate::linalg::sub(x, &g.matrix.apply(y))) / t)
            .collect();
        Ok(log_sum_exp(&exps) - v.ln())
    }

    /// Sum over roots of k(alpha) h_t(sigma_alpha x, y), in log form.
    fn ln_reflected_sum(&self, t: f64, x: &[f64], y: &[f64], weight_j: Option<usize>) -> f64 {
        let mut terms = Vec::new();
        for root in self.rs.roots() {
            let a = &root.vector;
            let coef = match weight_j {
                None => root.multiplicity,
                Some(j) => 0.5 * root.multiplicity * a[j] * a[j],
            };
            if coef == 0.0 {
                continue;
            }
            let sx = crate::root_system::reflect(a, x).expect("roots are nonzero");
            terms.push(coef.ln() + self.ln_eval(t, &sx, y));
        }
        log_sum_exp(&terms)
    }

    /// Relative residual of T_{j,x} h_t(x, y) = ((y_j - x_j) / 2t) h_t(x, y);
    /// absolute (in units of h_t / sqrt t) when the right side vanishes.
    pub fn check_tj_identity(&self, t: f64, x: &[f64], y: &[f64], j: usize) -> Result<f64> {
        let base = self.ln_eval(t, x, y);
        let f = |p: &[f64]| (self.ln_eval(t, p, y) - base).exp();
        let step = 1e-3 * t.sqrt();
        let lhs = apply_tj(&self.rs, &f, j, x, step)?;
        let rhs = (y[j] - x[j]) / (2.0 * t);
        Ok(residual(lhs, rhs, 1.0 / t.sqrt()))
    }

    /// Relative residual of the T_{j,x}^2 identity.
    pub fn check_tj2_identity(&self, t: f64, x: &[f64], y: &[f64], j: usize) -> Result<f64> {
        let base = self.ln_eval(t, x, y);
        let f = |p: &[f64]| (self.ln_eval(t, p, y) - base).exp();
        let step = 2e-3 * t.sqrt();
        let lhs = apply_tj_squared(&self.rs, &f, j, x, step)?;
        let d = (y[j] - x[j]) / (2.0 * t);
        let reflected = (self.ln_reflected_sum(t, x, y, Some(j)) - base).exp();
        let rhs = d * d - 1.0 / (2.0 * t) - reflected / (2.0 * t);
        Ok(residual(lhs, rhs, 1.0 / t))
    }

    /// Relative residual of the heat equation in the form
    /// d_t h = (|x - y|^2 / 4t^2 - N / 2t) h - (1 / 2t) sum_alpha k h(sigma_alpha x, y),
    /// with d_t taken by a 4th-order central difference (Richardson-checked).
    pub fn check_dt_identity(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        let base = self.ln_eval(t, x, y);
        let g = |s: f64| (self.ln_eval(s, x, y) - base).exp();
        let fd = |h: f64| {
            (g(t - 2.0 * h) - 8.0 * g(t - h) + 8.0 * g(t + h) - g(t + 2.0 * h)) / (12.0 * h)
        };
        let h = 1e-3 * t;
        let coarse = fd(2.0 * h);
        let fine = fd(h);
        let lhs = fine + (fine - coarse) / 15.0;
        let n = x.len() as f64;
        let reflected = (self.ln_reflected_sum(t, x, y, None) - base).exp();
        let rhs = dist(x, y).powi(2) / (4.0 * t * t) - n / (2.0 * t) - reflected / (2.0 * t);
        Ok(residual(lhs, rhs, 1.0 / t))
    }

    /// Integral of h_t(x, .) against dw, by nested adaptive quadrature over a
    /// box that holds all but a negligible part of the mass.
    pub fn total_mass(&self, t: f64, x: &[f64], tol: f64) -> Result<f64> {
        let n = x.len();
        let reach = x.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 14.0 * t.sqrt() + 1.0;
        let k = self.kernel.multiplicities().to_vec();
        let mut y = vec![0.0; n];
        self.mass_level(0, t, x, &k, reach, tol, &mut y)
    }

    #[allow(clippy::too_many_arguments)]
    fn mass_level(
        &self,
        level: usize,
        t: f64,
        x: &[f64],
        k: &[f64],
        reach: f64,
        tol: f64,
        y: &mut Vec<f64>,
    ) -> Result<f64> {
        let n = x.len();
        let c = x[level].abs();
        let mut bps = vec![0.0];
        if c > 0.0 {
            bps.extend([-c, c]);
        }
        let opts = QuadOptions::relative(tol * 0.1)
            .with_abs(1e-300)
            .with_budget(4000);
        let kj = k[level];
        let mut err = None;
        let est = {
            let mut yy = y.clone();
            let f = |s: f64| {
                yy[level] = s;
                let w = if kj == 0.0 {
                    1.0
                } else {
                    s.abs().powf(2.0 * kj) * 2f64.powf(kj)
                };
                if w == 0.0 {
                    return 0.0;
                }
                if level + 1 == n {
                    w * self.eval(t, x, &yy)
                } else {
                    match self.mass_level(level + 1, t, x, k, reach, tol, &mut yy.clone()) {
                        Ok(v) => w * v,
                        Err(e) => {
                            err = Some(e);
                            0.0
                        }
                    }
                }
            };
            integrate(f, -reach, reach, &bps, &opts)?
        };
        if let Some(e) = err {
            return Err(e);
        }
        Ok(est.value)
    }

    /// Ratio LHS / RHS of `estimate` at one sweep point; `s` is the dilation of
    /// the comparison kernel G_{s t} (ignored without one).
    pub fn ratio(
        &self,
        estimate: HeatEstimate,
        s: f64,
        x: &[f64],
        y: &[f64],
        t: f64,
    ) -> Result<f64> {
        Ok((self.ln_lhs(estimate, x, y, t) - self.ln_rhs(estimate, s, x, y, t)?).exp())
    }

    /// Ratios for every dilation in [`DILATIONS`], sharing the left side.
    pub fn ratios(&self, estimate: HeatEstimate, x: &[f64], y: &[f64], t: f64) -> Result<Vec<f64>> {
        let lhs = self.ln_lhs(estimate, x, y, t);
        DILATIONS
            .iter()
            .map(|&s| Ok((lhs - self.ln_rhs(estimate, s, x, y, t)?).exp()))
            .collect()
    }

    fn ln_lhs(&self, estimate: HeatEstimate, x: &[f64], y: &[f64], t: f64) -> f64 {
        let decay = || 2.0 * (1.0 + dist(x, y) / t.sqrt()).ln();
        match estimate {
            HeatEstimate::Rosler | HeatEstimate::HeatRadial => self.ln_eval(t, x, y),
            HeatEstimate::DtDxDy2t | HeatEstimate::DtDxDy => self.ln_derivative_family(t, x, y),
            HeatEstimate::Heat2 => self.ln_derivative_family(t, x, y) + decay(),
            HeatEstimate::HeatHolder => self.ln_holder(t, x, y),
            HeatEstimate::Heat3 => self.ln_holder(t, x, y) + decay(),
            HeatEstimate::HeatBetter2t => self.ln_eval(t, x, y) + decay(),
        }
    }

    fn ln_rhs(&self, estimate: HeatEstimate, s: f64, x: &[f64], y: &[f64], t: f64) -> Result<f64> {
        Ok(match estimate {
            HeatEstimate::Rosler => {
                let d = self.rs.orbit_distance(x, y);
                -self.ln_c_k - 0.5 * self.hd * (2.0 * t).ln() - d * d / (4.0 * t)
            }
            HeatEstimate::DtDxDy2t => self.ln_eval(2.0 * t, x, y),
            HeatEstimate::HeatBetter2t => log_sum_exp(&[
                self.ln_eval(2.0 * t, x, y),
                self.ln_reflected_sum(t, x, y, None),
            ]),
            _ => self.ln_gauss_like(s * t, x, y)?,
        })
    }

    /// ln max over (m, alpha, beta) with m, |alpha|, |beta| <= 1 of
    /// t^{m + |alpha|/2 + |beta|/2} |d_t^m d_x^alpha d_y^beta h_t(x, y)|.
    fn ln_derivative_family(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let ln_h = self.ln_eval(t, x, y);
        let rt = t.sqrt();
        let mut best = 0.0f64; // (0, 0, 0)
        best = best.max(t * self.dt_log(t, x, y).abs());
        for j in 0..n {
            best = best.max(rt * self.dx_log(t, x, y, j).abs());
            best = best.max(rt * self.dx_log(t, y, x, j).abs());
        }
        // mixed d_{x_i} d_{y_j}: central difference in y_j of h * dx_log, relative to h(x, y)
        let step = 1e-3 * rt;
        for i in 0..n {
            for j in 0..n {
                let g = |dy: f64| {
                    let mut yy = y.to_vec();
                    yy[j] += dy;
                    (self.ln_eval(t, x, &yy) - ln_h).exp() * self.dx_log(t, x, &yy, i)
                };
                let d = (g(-2.0 * step) - 8.0 * g(-step) + 8.0 * g(step) - g(2.0 * step))
                    / (12.0 * step);
                best = best.max(t * d.abs());
            }
        }
        ln_h + best.ln()
    }

    /// ln max over m in {0, 1} and the Hölder offsets of
    /// t^m |d_t^m h_t(x, y) - d_t^m h_t(x, y')| / (|y - y'| / sqrt t).
    fn ln_holder(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let ln_h = self.ln_eval(t, x, y);
        let rt = t.sqrt();
        let dt0 = self.dt_log(t, x, y);
        let mut best = 0.0f64;
        for &delta in &HOLDER_OFFSETS {
            let yp: Vec<f64> = y.iter().map(|v| v + delta * rt / n.sqrt()).collect();
            let rel = (self.ln_eval(t, x, &yp) - ln_h).exp();
            let m0 = (1.0 - rel).abs();
            let m1 = t * (dt0 - rel * self.dt_log(t, x, &yp)).abs();
            best = best.max(m0.max(m1) / delta.abs());
        }
        ln_h + best.ln()
    }

    /// Certificate for one estimate: constant C on the sweep, refinement
    /// stability, and for dilated estimates the first stable c in {1, .., 1/16}.
    pub fn certify(&self, estimate: HeatEstimate, sweep: &Sweep) -> Result<EstimateCertificate> {
        if sweep.dim != self.rs.dim() {
            return Err(Error::Input(format!(
                "sweep dimension {} does not match the system dimension {}",
                sweep.dim,
                self.rs.dim()
            )));
        }
        let mut cert = EstimateCertificate::new(estimate.name(), self.rs.describe(), sweep.clone());
        let refined = sweep.refine();
        if estimate.has_dilation() {
            let m = DILATIONS.len();
            let base = evaluate_many(sweep, m, |x, y, t| self.ratios(estimate, x, y, t))?;
            let fine = evaluate_many(&refined, m, |x, y, t| self.ratios(estimate, x, y, t))?;
            cert.conclude_with_dilations(&base, &fine);
        } else {
            let base = evaluate(sweep, |x, y, t| self.ratio(estimate, 1.0, x, y, t))?;
            let fine = evaluate(&refined, |x, y, t| self.ratio(estimate, 1.0, x, y, t))?;
            cert.conclude(&base, &fine);
        }
        if estimate == HeatEstimate::Rosler {
            if let Some(c) = cert.constant {
                cert.notes.push(format!(
                    "sup ratio {c:.12} (the bound holds with constant 1 iff <= 1)"
                ));
            }
        }
        Ok(cert)
    }

    /// Sharpness of h_t(x, y) <~ w(B(y, sqrt t))^{-1} (1 + |x - y| / sqrt t)^{-exponent}
    /// along the t-sweep: rho(t) = h_t w(B(y, sqrt t)) (1 + |x - y| / sqrt t)^{exponent}.
    /// `exponent` is the claimed decay per reflection count times that count.
    pub fn certify_product_sharpness(
        &self,
        x: &[f64],
        y: &[f64],
        t_values: &[f64],
        per_reflection: f64,
    ) -> Result<SharpnessCertificate> {
        let k = self.rs.require_product()?;
        if k.iter().any(|&kj| kj <= 0.0) {
            return Err(Error::Input(
                "sharpness needs every multiplicity positive".into(),
            ));
        }
        let ell = self
            .rs
            .min_reflection_count(y, x, 1e-10)
            .ok_or_else(|| Error::Input("x is not in the orbit of y".into()))?;
        let exponent = per_reflection * ell as f64;
        let rho = |t: f64| -> Result<f64> {
            let vol = self.measure.ball(y, t.sqrt())?;
            Ok(
                (self.ln_eval(t, x, y) + vol.ln() + exponent * (1.0 + dist(x, y) / t.sqrt()).ln())
                    .exp(),
            )
        };
        let sample = |ts: &[f64]| -> Result<Vec<SamplePoint>> {
            ts.iter()
                .map(|&t| {
                    Ok(SamplePoint {
                        x: x.to_vec(),
                        y: y.to_vec(),
                        t,
                        ratio: rho(t)?,
                    })
                })
                .collect()
        };
        let domain = Sweep {
            dim: x.len(),
            x_axis: x.to_vec(),
            y_axis: y.to_vec(),
            t_values: t_values.to_vec(),
        };
        let fine_t = domain.refine().t_values;
        let base = sample(t_values)?;
        let fine = sample(&fine_t)?;
        let mut cert = EstimateCertificate::new("product_sharpness", self.rs.describe(), domain);
        cert.conclude(&base, &fine);
        let upper = judge(1.0, &base, &fine);
        let recip = |v: &[SamplePoint]| -> Vec<SamplePoint> {
            v.iter()
                .map(|s| SamplePoint {
                    ratio: 1.0 / s.ratio,
                    ..s.clone()
                })
                .collect()
        };
        let lower = judge(1.0, &recip(&base), &recip(&fine));
        let lower_bound = fine.iter().map(|s| s.ratio).fold(f64::INFINITY, f64::min);
        let upper_bound = fine.iter().map(|s| s.ratio).fold(0.0, f64::max);

        // least squares of ln h against ln(1 / sqrt t) over the small-t half
        let mut ts = fine_t.clone();
        ts.sort_by(f64::total_cmp);
        let small = &ts[..ts.len().div_ceil(2).max(2).min(ts.len())];
        let pts: Vec<(f64, f64)> = small
            .iter()
            .map(|&t| (-0.5 * t.ln(), self.ln_eval(t, x, y)))
            .collect();
        let slope = least_squares_slope(&pts);
        let n = x.len() as f64;
        let predicted = n - exponent;
        let slope_ok = (slope - predicted).abs() <= 0.1 * predicted.abs().max(1.0);

        cert.pass = upper.stable && lower.stable && lower_bound > 0.0 && slope_ok;
        cert.constant = if cert.pass { Some(upper_bound) } else { None };
        cert.lower = Some(lower_bound);
        if !upper.stable {
            cert.notes.push(format!(
                "upper band: {}",
                upper.reason.clone().unwrap_or_default()
            ));
        }
        if !lower.stable {
            cert.notes.push(format!(
                "lower band: {}",
                lower.reason.clone().unwrap_or_default()
            ));
        }
        cert.notes.push(format!(
            "slope of ln h vs ln(1/sqrt t) on t <= {:.3e}: fitted {slope:.4}, predicted {predicted:.4}",
            small.last().copied().unwrap_or(f64::NAN)
        ));
        cert.notes
            .push("finite-range evidence over the sweep, not a proof".into());
        Ok(SharpnessCertificate {
            certificate: cert,
            ell,
            exponent,
            upper_stable: upper.stable,
            lower_stable: lower.stable,
            band: (lower_bound, upper_bound),
            fitted_slope: slope,
            predicted_slope: predicted,
            observed_exponent: n - slope,
            rho: fine.iter().map(|s| (s.t, s.ratio)).collect(),
        })
    }

    /// Support and size of Phi_t(x, y) for a radial Phi supported in B(0, 1):
    /// |Phi_t(x, y)| < `support_tol` ||Phi||_inf where d(x, y) > (1 + slack) t, and
    /// sup |Phi_t(x, y)| V(x, y, t) (1 + |x - y| / t)^2 finite and stable.
    pub fn certify_radial_translation_bound(
        &self,
        phi: &RadialFunction,
        sweep: &Sweep,
        slack: f64,
        support_tol: f64,
    ) -> Result<EstimateCertificate> {
        match phi.support_radius() {
            Some(r) if r <= 1.0 => {}
            _ => {
                return Err(Error::Input(
                    "Phi must be supported in the closed unit ball".into(),
                ))
            }
        }
        let translator = ProductTranslator::new(self.kernel.multiplicities(), phi.clone(), 1e-10)?;
        let sup = phi.sup_norm();
        let refined = sweep.refine();
        let eval = |sw: &Sweep| -> Result<(Vec<SamplePoint>, f64, Option<SamplePoint>)> {
            let mut worst_out: Option<SamplePoint> = None;
            let all = evaluate(sw, |x, y, t| translator.dilated_kernel(t, x, y))?;
            let mut ratios = Vec::with_capacity(all.len());
            let mut outside = 0.0f64;
            for s in all {
                let d = self.rs.orbit_distance(&s.x, &s.y);
                if d > (1.0 + slack) * s.t {
                    let rel = s.ratio.abs() / sup;
                    if rel >= outside {
                        outside = rel;
                        worst_out = Some(SamplePoint {
                            ratio: rel,
                            ..s.clone()
                        });
                    }
                }
                let v = self.measure.v_max(&s.x, &s.y, s.t)?;
                let r = s.ratio.abs() * v * (1.0 + dist(&s.x, &s.y) / s.t).powi(2);
                ratios.push(SamplePoint { ratio: r, ..s });
            }
            Ok((ratios, outside, worst_out))
        };
        let (base, out_b, _) = eval(sweep)?;
        let (fine, out_f, worst_out) = eval(&refined)?;
        let mut cert = EstimateCertificate::new("compact", self.rs.describe(), sweep.clone());
        cert.conclude(&base, &fine);
        let outside = out_b.max(out_f);
        cert.notes.push(format!(
            "support: max |Phi_t(x,y)| / ||Phi||_inf = {outside:.3e} where d(x,y) > {:.3} t (tolerance {support_tol:.1e})",
            1.0 + slack
        ));
        if outside >= support_tol {
            cert.pass = false;
            cert.constant = None;
            if let Some(w) = worst_out {
                cert.notes.push(format!(
                    "support violated at x={:?} y={:?} t={}",
                    w.x, w.y, w.t
                ));
            }
        }
        Ok(cert)
    }

    /// Largest |Phi_t(x, y)| / ||Phi||_inf over the pairs of the sweep and its
    /// refinement with d(x, y) > (1 + slack) t.
    pub fn radial_translation_support(
        &self,
        phi: &RadialFunction,
        sweep: &Sweep,
        slack: f64,
    ) -> Result<SupportCheck> {
        let translator = ProductTranslator::new(self.kernel.multiplicities(), phi.clone(), 1e-10)?;
        let sup = phi.sup_norm();
        let mut check = SupportCheck {
            max_relative: 0.0,
            pairs: 0,
            worst: None,
        };
        for sw in [sweep.clone(), sweep.refine()] {
            let all = evaluate(&sw, |x, y, t| {
                if self.rs.orbit_distance(x, y) > (1.0 + slack) * t {
                    translator.dilated_kernel(t, x, y)
                } else {
                    Ok(f64::NAN)
                }
            })?;
            for s in all.into_iter().filter(|s| !s.ratio.is_nan()) {
                check.pairs += 1;
                let rel = s.ratio.abs() / sup;
                if rel >= check.max_relative {
                    check.max_relative = rel;
                    check.worst = Some(SamplePoint { ratio: rel, ..s });
                }
            }
        }
        Ok(check)
    }
}

/// Outcome of [`HeatKernel::radial_translation_support`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportCheck {
    pub max_relative: f64,
    pub pairs: usize,
    pub worst: Option<SamplePoint>,
}

/// Product-sharpness outcome with the rho(t) curve and the slope fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessCertificate {
    pub certificate: EstimateCertificate,
    pub ell: usize,
    pub exponent: f64,
    pub upper_stable: bool,
    pub lower_stable: bool,
    pub band: (f64, f64),
    pub fitted_slope: f64,
    pub predicted_slope: f64,
    /// Decay exponent of (1 + |x - y| / sqrt t) implied by the fitted slope.
    pub observed_exponent: f64,
    pub rho: Vec<(f64, f64)>,
}

fn residual(lhs: f64, rhs: f64, scale: f64) -> f64 {
    if rhs.abs() > 1e-3 * scale {
        (lhs - rhs).abs() / rhs.abs()
    } else {
        (lhs - rhs).abs() / scale
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Default sweep: x, y over [-6, 6] (17 points per axis in 1D, 9 otherwise),
/// 11 log-spaced t in [2^-6, 2^4].
pub fn default_sweep(dim: usize) -> Sweep {
    let n = if dim == 1 { 17 } else { 9 };
    Sweep::lattice(dim, -6.0, 6.0, n, 2f64.powi(-6), 16.0, 11)
}

/// Relative refinement tolerance used by the certificates.
pub const REFINEMENT_TOL: f64 = STABILITY_TOL;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn heat(k: &[f64]) -> HeatKernel {
        HeatKernel::new(RootSystem::a1_product(k).unwrap()).unwrap()
    }

    #[test]
    fn classical_gaussian() {
        let h = heat(&[0.0, 0.0]);
        let x = [0.3, -1.2];
        let y = [2.0, 0.7];
        let t = 0.37;
        let exact =
            (4.0 * std::f64::consts::PI * t).powi(-1) * (-dist(&x, &y).powi(2) / (4.0 * t)).exp();
        assert_relative_eq!(h.eval(t, &x, &y), exact, max_relative = 1e-12);
    }

    #[test]
    fn normalization_and_semigroup_in_rank_one() {
        for k in [0.0, 0.5, 1.0, 2.3] {
            let h = heat(&[k]);
            for t in [0.1, 1.0, 10.0] {
                for x in [-2.0, 0.0, 0.7] {
                    let m = h.total_mass(t, &[x], 1e-9).unwrap();
                    assert!((m - 1.0).abs() < 1e-6, "k={k} t={t} x={x}: {m}");
                }
            }
        }
        let h = heat(&[1.0]);
        let (t, s, x, y) = (0.3, 0.5, 0.8, -1.1);
        let opts = QuadOptions::relative(1e-11);
        let conv = integrate(
            |z| 2.0 * z * z * h.eval(t, &[x], &[z]) * h.eval(s, &[z], &[y]),
            -14.0,
            14.0,
            &[0.0, x, y, -x, -y],
            &opts,
        )
        .unwrap()
        .value;
        assert_relative_eq!(conv, h.eval(t + s, &[x], &[y]), max_relative = 1e-6);
    }

    #[test]
    fn identities_hold_at_spot_points() {
        let h = heat(&[1.0]);
        assert!(h.check_tj_identity(0.5, &[0.7], &[-1.3], 0).unwrap() < 1e-7);
        assert!(h.check_tj2_identity(0.5, &[0.7], &[-1.3], 0).unwrap() < 1e-5);
        assert!(h.check_dt_identity(0.5, &[0.7], &[-1.3]).unwrap() < 1e-6);
        assert!(h.check_tj_identity(0.5, &[0.7], &[0.7], 0).unwrap() < 1e-9);
        let h2 = heat(&[1.0, 1.0]);
        for j in 0..2 {
            assert!(
                h2.check_tj_identity(0.8, &[0.4, -1.1], &[1.5, 0.9], j)
                    .unwrap()
                    < 1e-7
            );
            assert!(
                h2.check_tj2_identity(0.8, &[0.4, -1.1], &[1.5, 0.9], j)
                    .unwrap()
                    < 1e-5
            );
        }
        assert!(
            h2.check_dt_identity(0.8, &[0.4, -1.1], &[1.5, 0.9])
                .unwrap()
                < 1e-6
        );
        let flat = heat(&[0.0]);
        assert!(flat.check_dt_identity(0.3, &[0.2], &[1.0]).unwrap() < 1e-6);
        assert!(flat.check_tj2_identity(0.3, &[0.2], &[1.0], 0).unwrap() < 1e-5);
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let h = heat(&[2.3, 0.5]);
        let (t, x, y) = (0.6, [0.9, -0.4], [-1.2, 0.3]);
        let e = 1e-5;
        let fd_t = (h.eval(t + e, &x, &y) - h.eval(t - e, &x, &y)) / (2.0 * e);
        assert_relative_eq!(h.dt(t, &x, &y), fd_t, max_relative = 1e-7);
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += e;
            xm[j] -= e;
            let fd = (h.eval(t, &xp, &y) - h.eval(t, &xm, &y)) / (2.0 * e);
            assert_relative_eq!(
                h.eval(t, &x, &y) * h.dx_log(t, &x, &y, j),
                fd,
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn rosler_ratio_is_one_classically() {
        let h = heat(&[0.0]);
        let sweep = Sweep::lattice(1, -3.0, 3.0, 5, 0.1, 2.0, 3);
        let cert = h.certify(HeatEstimate::Rosler, &sweep).unwrap();
        assert!(cert.pass);
        assert!((cert.constant.unwrap() - 1.0).abs() < 1e-12);
        assert!((cert.lower.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_like_is_invariant() {
        let h = heat(&[1.0, 0.5]);
        let x = [0.4, -1.3];
        let y = [1.1, 0.2];
        let g = h.ln_gauss_like(0.7, &x, &y).unwrap();
        for el in h.root_system().group() {
            let gx = el.matrix.apply(&x);
            let gy = el.matrix.apply(&y);
            assert!((h.ln_gauss_like(0.7, &gx, &y).unwrap() - g).abs() < 1e-9);
            assert!((h.ln_gauss_like(0.7, &x, &gy).unwrap() - g).abs() < 1e-9);
        }
    }

    #[test]
    fn heat2_certificate_in_rank_one() {
        let h = heat(&[1.0]);
        let sweep = Sweep::lattice(1, -6.0, 6.0, 17, 2f64.powi(-6), 16.0, 11);
        let cert = h.certify(HeatEstimate::HeatBetter2t, &sweep).unwrap();
        assert!(cert.pass, "{:?}", cert.notes);
    }

    #[test]
    fn radial_bump_support() {
        let h = heat(&[1.0]);
        let sweep = Sweep::lattice(1, -1.5, 1.5, 5, 0.5, 1.0, 2);
        let cert = h
            .certify_radial_translation_bound(&RadialFunction::Bump { m: 8 }, &sweep, 0.05, 1e-6)
            .unwrap();
        assert!(cert.pass, "{:?}", cert.notes);
        assert!(h
            .certify_radial_translation_bound(
                &RadialFunction::Gaussian { scale: 1.0 },
                &sweep,
                0.05,
                1e-6
            )
            .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn symmetric_positive_and_g_invariant(
            x in prop::collection::vec(-4.0f64..4.0, 2),
            y in prop::collection::vec(-4.0f64..4.0, 2),
            t in 0.05f64..5.0,
        ) {
            let h = heat(&[1.0, 0.5]);
            let a = h.eval(t, &x, &y);
            prop_assert!(a > 0.0);
            prop_assert!((h.ln_eval(t, &y, &x) - h.ln_eval(t, &x, &y)).abs() < 1e-12);
            for el in h.root_system().group() {
                let v = h.ln_eval(t, &el.matrix.apply(&x), &el.matrix.apply(&y));
                prop_assert!((v - h.ln_eval(t, &x, &y)).abs() < 1e-10);
            }
        }
    }
}
