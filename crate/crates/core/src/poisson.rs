//! Poisson kernel p_t of e^{-t sqrt(-Delta)} by subordination of the heat
//! kernel, its t-derivative q_t, and certificates for the Poisson bounds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ui};

use crate::certificate::{evaluate, EstimateCertificate, Sweep};
use crate::error::{Error, Result};
use crate::heat::HeatKernel;
use crate::linalg::{dist, norm};
use crate::quadrature::{integrate_best, QuadOptions};
use crate::root_system::RootSystem;

/// Split point of the subordination variable.
pub const SPLIT: f64 = 0.25;
/// Default relative tolerance of the subordination quadrature.
pub const POISSON_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoissonEstimate {
    /// p_t <= C V(x, y, t + d)^{-1} t / (t + d)
    PoissonUp,
    /// |d_t^m d_y^beta p_t| <= C p_t (t + d)^{-m-|beta|} (1 + d/t if m > 0)
    DtDyPoisson,
    /// p_t <= C t / V(x, y, d + t) (d + t) / (|x - y|^2 + t^2), N >= 2
    PoissonNew,
    /// the same bound times ln(1 + (|x - y| + t) / (d + t)), N = 1
    PoissonDim1,
    /// |t q_t| <= C p_t, i.e. the kernel of Q_t = t d/dt P_t against p_t
    QtBound,
}

impl PoissonEstimate {
    pub const ALL: [PoissonEstimate; 5] = [
        PoissonEstimate::PoissonUp,
        PoissonEstimate::DtDyPoisson,
        PoissonEstimate::PoissonNew,
        PoissonEstimate::PoissonDim1,
        PoissonEstimate::QtBound,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PoissonEstimate::PoissonUp => "poisson_up",
            PoissonEstimate::DtDyPoisson => "dtdy_poisson",
            PoissonEstimate::PoissonNew => "poisson_new",
            PoissonEstimate::PoissonDim1 => "poisson_dim1",
            PoissonEstimate::QtBound => "qt_bound",
        }
    }
}

impl fmt::Display for PoissonEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PoissonEstimate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PoissonEstimate::ALL
            .iter()
            .find(|e| e.name() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown Poisson estimate '{s}'")))
    }
}

/// Outcome of one subordination integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubordinationEstimate {
    pub value: f64,
    /// Quadrature error estimate plus both tail bounds; meets the tolerance
    /// relative to the sum of |piece| (equal to |value| when K >= 0).
    pub error: f64,
    pub lower_tail: f64,
    pub upper_tail: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub evaluations: usize,
}

/// Which kernel is subordinated.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Integrand {
    /// h_s
    Value,
    /// d/dt of h_{t^2/4u}
    Time,
    /// d/dy_j of h_s
    Space(usize),
}

#[derive(Debug, Clone)]
pub struct PoissonKernel {
    heat: HeatKernel,
    tol: f64,
}

impl PoissonKernel {
    pub fn new(rs: RootSystem) -> Result<Self> {
        Ok(Self {
            heat: HeatKernel::new(rs)?,
            tol: POISSON_TOL,
        })
    }

    pub fn from_heat(heat: HeatKernel) -> Self {
        Self {
            heat,
            tol: POISSON_TOL,
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn heat(&self) -> &HeatKernel {
        &self.heat
    }

    /// p_t(x, y).
    pub fn eval(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.poisson_kernel(t, x, y, self.tol)?.value)
    }

    /// q_t(x, y) = d/dt p_t(x, y).
    pub fn q(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        let p = self.eval(t, x, y)?;
        Ok(self.q_t_kernel(t, x, y, self.tol, p)?.value)
    }

    /// d/dy_j p_t(x, y).
    pub fn dy(&self, t: f64, x: &[f64], y: &[f64], j: usize) -> Result<f64> {
        let p = self.eval(t, x, y)?;
        Ok(self
            .subordinate(Integrand::Space(j), t, x, y, self.tol, self.tol * p / t)?
            .value)
    }

    pub fn poisson_kernel(
        &self,
        t: f64,
        x: &[f64],
        y: &[f64],
        tol: f64,
    ) -> Result<SubordinationEstimate> {
        self.subordinate(Integrand::Value, t, x, y, tol, 0.0)
    }

    /// q_t with absolute accuracy `tol * scale` (q_t changes sign, so a
    /// purely relative target is meaningless near its zeros; p_t / t is the
    /// natural scale).
    pub fn q_t_kernel(
        &self,
        t: f64,
        x: &[f64],
        y: &[f64],
        tol: f64,
        scale: f64,
    ) -> Result<SubordinationEstimate> {
        self.subordinate(Integrand::Time, t, x, y, tol, tol * scale / t)
    }

    /// pi^{-1/2} int_0^inf e^{-u} K(t^2 / 4u) du / sqrt u, split at u = 1/4:
    /// logarithmic variable below, plain variable above, both truncated
    /// where the analytic tail bounds fall below a quarter of the target.
    fn subordinate(
        &self,
        kind: Integrand,
        t: f64,
        x: &[f64],
        y: &[f64],
        tol: f64,
        abs_floor: f64,
    ) -> Result<SubordinationEstimate> {
        if t <= 0.0 {
            return Err(Error::Domain(format!("t must be positive, got {t}")));
        }
        let hd = self.heat.hom_dim();
        let pref =
            std::f64::consts::PI.sqrt().recip() / self.heat.c_k() * (2.0 / (t * t)).powf(0.5 * hd);
        // the kernel factor is bounded by (2u / t^2)^{hd/2} (a + b u) / c_k
        let (a, b) = match kind {
            Integrand::Value => (1.0, 0.0),
            Integrand::Time => {
                let r = norm(x) + norm(y);
                (hd / t, 2.0 * r * r / (t * t * t))
            }
            Integrand::Space(j) => (0.0, 2.0 * (x[j].abs() + y[j].abs()) / (t * t)),
        };
        let e1 = 0.5 * (hd + 1.0);
        let e2 = 0.5 * (hd + 3.0);
        let lower_tail = |um: f64| pref * (a * um.powf(e1) / e1 + b * um.powf(e2) / e2);
        let upper_tail =
            |uu: f64| pref * (a * gamma(e1) * gamma_ui(e1, uu) + b * gamma(e2) * gamma_ui(e2, uu));

        let inv_sqrt_pi = std::f64::consts::PI.sqrt().recip();
        let kernel = |u: f64| -> f64 {
            let s = t * t / (4.0 * u);
            let h = self.heat.eval(s, x, y);
            if h == 0.0 {
                return 0.0;
            }
            match kind {
                Integrand::Value => h,
                Integrand::Time => h * self.heat.dt_log(s, x, y) * 2.0 * s / t,
                Integrand::Space(j) => h * self.heat.dx_log(s, y, x, j),
            }
        };
        let below = |v: f64| {
            let u = v.exp();
            inv_sqrt_pi * (-u).exp() * u.sqrt() * kernel(u)
        };
        let above = |u: f64| inv_sqrt_pi * (-u).exp() * kernel(u) / u.sqrt();

        // breakpoints where h_s peaks in s (s ~ r^2 / 2hd for r = d, |x - y|)
        let d = self.heat.root_system().orbit_distance(x, y);
        let mut peaks: Vec<f64> = [d, dist(x, y)]
            .iter()
            .filter(|r| **r > 0.0)
            .map(|r| t * t * 2.0 * hd / (4.0 * r * r))
            .collect();
        peaks.sort_by(f64::total_cmp);

        let opts = QuadOptions::relative(0.25 * tol)
            .with_abs(abs_floor.max(1e-300) * 0.25)
            .with_budget(2000);
        let mut u_min = 1e-4f64.min(0.1 * peaks.first().copied().unwrap_or(1.0));
        let mut u_max = 40.0f64;
        let log_bps: Vec<f64> = peaks
            .iter()
            .filter(|p| **p < SPLIT)
            .map(|p| p.ln())
            .collect();
        let up_bps: Vec<f64> = peaks.iter().filter(|p| **p > SPLIT).copied().collect();
        let first_low = integrate_best(below, u_min.ln(), SPLIT.ln(), &log_bps, &opts);
        let first_high = integrate_best(above, SPLIT, u_max, &up_bps, &opts);
        let mut value = first_low.value + first_high.value;
        // pieces of a sign-changing integrand are only accurate relative to
        // their own size, so targets use the sum of |piece|
        let mut scale = first_low.value.abs() + first_high.value.abs();
        let mut error = first_low.error + first_high.error;
        let mut evaluations = first_low.evaluations + first_high.evaluations;
        let mut converged = first_low.converged && first_high.converged;
        let target = |v: f64| 0.25 * (tol * v.abs()).max(abs_floor);
        let mut rounds = 0;
        while lower_tail(u_min) > target(scale) && rounds < 60 {
            let next = u_min * 1e-3;
            let piece = integrate_best(below, next.ln(), u_min.ln(), &[], &opts);
            value += piece.value;
            scale += piece.value.abs();
            error += piece.error;
            evaluations += piece.evaluations;
            converged &= piece.converged;
            u_min = next;
            rounds += 1;
        }
        rounds = 0;
        while upper_tail(u_max) > target(scale) && rounds < 60 {
            let next = u_max + 40.0;
            let piece = integrate_best(above, u_max, next, &[], &opts);
            value += piece.value;
            scale += piece.value.abs();
            error += piece.error;
            evaluations += piece.evaluations;
            converged &= piece.converged;
            u_max = next;
            rounds += 1;
        }
        let lt = lower_tail(u_min);
        let ut = upper_tail(u_max);
        let total_error = error + lt + ut;
        if !converged || total_error > 2.0 * (tol * scale).max(abs_floor) + 1e-300 {
            return Err(Error::BudgetExceeded {
                best: value,
                error: total_error,
            });
        }
        Ok(SubordinationEstimate {
            value,
            error: total_error,
            lower_tail: lt,
            upper_tail: ut,
            u_min,
            u_max,
            evaluations,
        })
    }

    /// The log-free N >= 2 bound t / V(x, y, d + t) (d + t) / (|x - y|^2 + t^2).
    pub fn new_bound(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        let d = self.heat.root_system().orbit_distance(x, y);
        let r = dist(x, y);
        let v = self.heat.measure().v_max(x, y, d + t)?;
        Ok(t / v * (d + t) / (r * r + t * t))
    }

    /// The dimension-one factor ln(1 + (|x - y| + t) / (d + t)).
    pub fn log_factor(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        let d = self.heat.root_system().orbit_distance(x, y);
        (1.0 + (dist(x, y) + t) / (d + t)).ln()
    }

    pub fn ratio(&self, estimate: PoissonEstimate, x: &[f64], y: &[f64], t: f64) -> Result<f64> {
        let rs = self.heat.root_system();
        let d = rs.orbit_distance(x, y);
        let p = self.eval(t, x, y)?;
        match estimate {
            PoissonEstimate::PoissonUp => {
                let v = self.heat.measure().v_max(x, y, t + d)?;
                Ok(p / (t / (t + d) / v))
            }
            PoissonEstimate::PoissonNew => Ok(p / self.new_bound(t, x, y)?),
            PoissonEstimate::PoissonDim1 => {
                Ok(p / (self.new_bound(t, x, y)? * self.log_factor(t, x, y)))
            }
            PoissonEstimate::QtBound => {
                Ok(t * self.q_t_kernel(t, x, y, self.tol, p)?.value.abs() / p)
            }
            PoissonEstimate::DtDyPoisson => {
                let q = self.q_t_kernel(t, x, y, self.tol, p)?.value;
                let s = t + d;
                let mut best = (q * s / (1.0 + d / t)).abs();
                for j in 0..x.len() {
                    let floor = self.tol * p / t;
                    let dyj = |tt: f64| -> Result<f64> {
                        Ok(self
                            .subordinate(Integrand::Space(j), tt, x, y, self.tol, floor)?
                            .value)
                    };
                    best = best.max((dyj(t)? * s).abs());
                    // d_t d_{y_j} p by a 4th-order central difference in t
                    let h = 1e-3 * t;
                    let mixed = (dyj(t - 2.0 * h)? - 8.0 * dyj(t - h)? + 8.0 * dyj(t + h)?
                        - dyj(t + 2.0 * h)?)
                        / (12.0 * h);
                    best = best.max((mixed * s * s / (1.0 + d / t)).abs());
                }
                Ok(best / p)
            }
        }
    }

    pub fn certify(&self, estimate: PoissonEstimate, sweep: &Sweep) -> Result<EstimateCertificate> {
        let n = self.heat.root_system().dim();
        if sweep.dim != n {
            return Err(Error::Input(format!(
                "sweep dimension {} does not match {n}",
                sweep.dim
            )));
        }
        match estimate {
            PoissonEstimate::PoissonNew if n < 2 => {
                return Err(Error::Input("poisson_new is stated for N >= 2".into()))
            }
            PoissonEstimate::PoissonDim1 if n != 1 => {
                return Err(Error::Input("poisson_dim1 is stated for N = 1".into()))
            }
            _ => {}
        }
        let mut cert = EstimateCertificate::new(
            estimate.name(),
            self.heat.root_system().describe(),
            sweep.clone(),
        );
        let base = evaluate(sweep, |x, y, t| self.ratio(estimate, x, y, t))?;
        let fine = evaluate(&sweep.refine(), |x, y, t| self.ratio(estimate, x, y, t))?;
        cert.conclude(&base, &fine);
        if estimate == PoissonEstimate::PoissonDim1 {
            let demo = self.log_necessity(
                &[1.0],
                &[-1.0],
                &[0.25, 2f64.powi(-4), 2f64.powi(-6), 2f64.powi(-8)],
            )?;
            for row in &demo {
                cert.notes.push(format!(
                    "x=1 y=-1 t={:.3e}: ratio against the log bound {:.4e}, against the log-free bound {:.4e} (factor {:.3})",
                    row.t,
                    row.with_log,
                    row.without_log,
                    row.without_log / row.with_log
                ));
            }
        }
        Ok(cert)
    }

    /// Ratios of p_t against the bounds with and without the logarithm, along
    /// a t-sequence at a fixed pair.
    pub fn log_necessity(&self, x: &[f64], y: &[f64], ts: &[f64]) -> Result<Vec<LogComparison>> {
        ts.iter()
            .map(|&t| {
                let p = self.eval(t, x, y)?;
                let free = self.new_bound(t, x, y)?;
                Ok(LogComparison {
                    t,
                    with_log: p / (free * self.log_factor(t, x, y)),
                    without_log: p / free,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogComparison {
    pub t: f64,
    pub with_log: f64,
    pub without_log: f64,
}

/// Default sweep: x, y over [-4, 4] (9 points per axis in 1D, 5 otherwise),
/// 9 log-spaced t in [2^-6, 2^2].
pub fn default_sweep(dim: usize) -> Sweep {
    let n = if dim == 1 { 9 } else { 5 };
    Sweep::lattice(dim, -4.0, 4.0, n, 2f64.powi(-6), 4.0, 9)
}
