//! Dunkl transform, translation and convolution for product systems on tensor
//! quadrature grids, and Hankel-form transforms of radial functions.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::kernel::ProductKernel;
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::quadrature::{integrate, GaussLegendre, QuadOptions};
use crate::special::bessel_j_normalized;

/// Quadrature rule for 2^k |s|^{2k} ds on [-R, R]; nodes symmetric about 0,
/// weights positive (the weight factor is folded in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl AxisRule {
    /// Composite Gauss-Legendre with `order` nodes per panel: six panels
    /// graded geometrically towards 0, then panels no longer than `panel`.
    pub fn new(k: f64, radius: f64, panel: f64, order: usize) -> Self {
        let first = panel.min(radius);
        let mut edges = vec![0.0];
        for level in (0..6).rev() {
            edges.push(first / 2f64.powi(level));
        }
        let rest = ((radius - first) / panel).ceil().max(0.0) as usize;
        for i in 1..=rest {
            edges.push(first + (radius - first) * i as f64 / rest as f64);
        }
        let gl = GaussLegendre::new(order);
        let mut pos = Vec::new();
        for w in edges.windows(2) {
            for (s, wt) in gl.mapped(w[0], w[1]) {
                let dens = if k == 0.0 {
                    1.0
                } else {
                    2f64.powf(k) * s.powf(2.0 * k)
                };
                pos.push((s, wt * dens));
            }
        }
        let mut nodes = Vec::with_capacity(2 * pos.len());
        let mut weights = Vec::with_capacity(2 * pos.len());
        for &(s, w) in pos.iter().rev() {
            nodes.push(-s);
            weights.push(w);
        }
        for &(s, w) in &pos {
            nodes.push(s);
            weights.push(w);
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Tensor grid of per-axis rules on [-R, R]^N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformGrid {
    pub k: Vec<f64>,
    pub radius: f64,
    pub axes: Vec<AxisRule>,
}

impl TransformGrid {
    pub fn new(k: &[f64], radius: f64, panel: f64, order: usize) -> Self {
        Self {
            k: k.to_vec(),
            radius,
            axes: k
                .iter()
                .map(|&kj| AxisRule::new(kj, radius, panel, order))
                .collect(),
        }
    }

    /// Panels short enough to resolve oscillations up to frequency `max_freq`.
    pub fn resolving(k: &[f64], radius: f64, max_freq: f64) -> Self {
        Self::new(k, radius, (6.0 / max_freq).min(1.0), 16)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(AxisRule::len).collect()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        for j in (0..shape.len()).rev() {
            idx[j] = flat % shape[j];
            flat /= shape[j];
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.nodes[i])
            .collect()
    }

    pub fn weight(&self, flat: usize) -> f64 {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.weights[i])
            .product()
    }
}

/// Complex samples of a function on a [`TransformGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub grid: TransformGrid,
    pub values: Vec<Complex64>,
}

impl Sampled {
    pub fn from_fn<F: Fn(&[f64]) -> f64 + Sync>(grid: &TransformGrid, f: F) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| Complex64::new(f(&grid.point(i)), 0.0))
            .collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    /// sum of values times weights, i.e. int f dw.
    pub fn integral(&self) -> Complex64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.grid.weight(i))
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v.norm_sqr() * self.grid.weight(i))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest |f| on points with some coordinate beyond 0.9 R, relative to
    /// the overall max; a proxy for the truncation tail.
    pub fn edge_ratio(&self) -> f64 {
        let r = 0.9 * self.grid.radius;
        let edge = (0..self.values.len())
            .filter(|&i| self.grid.point(i).iter().any(|c| c.abs() > r))
            .map(|i| self.values[i].norm())
            .fold(0.0, f64::max);
        edge / self.max_abs().max(f64::MIN_POSITIVE)
    }

    pub fn pointwise<F: Fn(Complex64, Complex64) -> Complex64>(
        &self,
        other: &Sampled,
        op: F,
    ) -> Sampled {
        Sampled {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| op(*a, *b))
                .collect(),
        }
    }
}

/// c_k of the rank-one factor with multiplicity k.
pub fn axis_c_k(k: f64) -> f64 {
    2f64.powf(2.0 * k + 0.5) * gamma(k + 0.5)
}

/// Contracts axis `j` of a row-major array with `mat` (m x n).
fn contract_axis(
    values: &[Complex64],
    shape: &[usize],
    j: usize,
    mat: &[Complex64],
    m: usize,
) -> Vec<Complex64> {
    let n = shape[j];
    let outer: usize = shape[..j].iter().product();
    let inner: usize = shape[j + 1..].iter().product();
    let mut out = vec![Complex64::new(0.0, 0.0); outer * m * inner];
    out.par_chunks_mut(m * inner)
        .enumerate()
        .for_each(|(o, block)| {
            for a in 0..m {
                let row = &mat[a * n..(a + 1) * n];
                for b in 0..n {
                    let coef = row[b];
                    if coef == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let src = &values[(o * n + b) * inner..(o * n + b + 1) * inner];
                    let dst = &mut block[a * inner..(a + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += coef * s;
                    }
                }
            }
        });
    out
}

fn transform_impl(f: &Sampled, out: &TransformGrid, inverse: bool) -> Result<Sampled> {
    if f.grid.k != out.k {
        return Err(Error::Input(
            "transform grids carry different multiplicities".into(),
        ));
    }
    let mut values = f.values.clone();
    let mut shape = f.grid.shape();
    for j in 0..f.grid.dim() {
        let k = f.grid.k[j];
        let src = &f.grid.axes[j];
        let dst = &out.axes[j];
        let ck = axis_c_k(k);
        let m = dst.len();
        let n = src.len();
        let mat: Vec<Complex64> = (0..m * n)
            .into_par_iter()
            .map(|idx| {
                let (a, b) = (idx / n, idx % n);
                let e = crate::special::kernel_imag(k, src.nodes[b] * dst.nodes[a]);
                let e = if inverse { e.conj() } else { e };
                e * (src.weights[b] / ck)
            })
            .collect();
        values = contract_axis(&values, &shape, j, &mat, m);
        shape[j] = m;
    }
    Ok(Sampled {
        grid: out.clone(),
        values,
    })
}

/// F f(xi) = c_k^{-1} int f(x) E(x, -i xi) dw(x), evaluated on `out`.
/// Fails when f has not decayed to `tail_tol` (relative) near the grid edge.
pub fn dunkl_transform(f: &Sampled, out: &TransformGrid, tail_tol: f64) -> Result<Sampled> {
    let tail = f.edge_ratio();
    if tail > tail_tol {
        return Err(Error::TailBound {
            tail,
            tol: tail_tol,
        });
    }
    transform_impl(f, out, false)
}

/// Inverse transform c_k^{-1} int g(xi) E(x, i xi) dw(xi), evaluated on `out`.
pub fn inverse_dunkl_transform(g: &Sampled, out: &TransformGrid, tail_tol: f64) -> Result<Sampled> {
    let tail = g.edge_ratio();
    if tail > tail_tol {
        return Err(Error::TailBound {
            tail,
            tol: tail_tol,
        });
    }
    transform_impl(g, out, true)
}

/// (f * g)(x) = int F f F g E(x, i xi) dw(xi), from samples of f and g on a
/// common space grid, through the frequency grid `freq`.
pub fn dunkl_convolve(
    f: &Sampled,
    g: &Sampled,
    freq: &TransformGrid,
    tail_tol: f64,
) -> Result<Sampled> {
    let ff = dunkl_transform(f, freq, tail_tol)?;
    let fg = dunkl_transform(g, freq, tail_tol)?;
    let ck: f64 = freq.k.iter().map(|&k| axis_c_k(k)).product();
    let prod = ff.pointwise(&fg, |a, b| a * b * ck);
    transform_impl(&prod, &f.grid, true)
}

/// Radial functions with closed-form transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialFunction {
    /// exp(-r^2 / (2 s^2))
    Gaussian { scale: f64 },
    /// (1 - r^2)^m on the unit ball
    Bump { m: u32 },
    /// (16 r^2 - beta) (1 - 16 r^2)^m on B(0, 1/4); beta makes the dw-mean zero
    MeanZeroBump { m: u32, beta: f64 },
}

impl RadialFunction {
    /// The mean-zero profile on B(0, 1/4) for homogeneous dimension `hd`, with
    /// beta found by weighted radial quadrature.
    pub fn mean_zero_bump(m: u32, hd: f64) -> Result<Self> {
        let opts = QuadOptions::relative(1e-13);
        let b = |r: f64| (1.0 - 16.0 * r * r).max(0.0).powi(m as i32) * r.powf(hd - 1.0);
        let den = integrate(b, 0.0, 0.25, &[], &opts)?.value;
        let num = integrate(|r| 16.0 * r * r * b(r), 0.0, 0.25, &[], &opts)?.value;
        Ok(RadialFunction::MeanZeroBump { m, beta: num / den })
    }

    pub fn profile(&self, r: f64) -> f64 {
        match *self {
            RadialFunction::Gaussian { scale } => (-0.5 * r * r / (scale * scale)).exp(),
            RadialFunction::Bump { m } => (1.0 - r * r).max(0.0).powi(m as i32),
            RadialFunction::MeanZeroBump { m, beta } => {
                let u = 16.0 * r * r;
                if u >= 1.0 {
                    0.0
                } else {
                    (u - beta) * (1.0 - u).powi(m as i32)
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.profile(norm(x))
    }

    pub fn support_radius(&self) -> Option<f64> {
        match self {
            RadialFunction::Gaussian { .. } => None,
            RadialFunction::Bump { .. } => Some(1.0),
            RadialFunction::MeanZeroBump { .. } => Some(0.25),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match *self {
            RadialFunction::Gaussian { .. } | RadialFunction::Bump { .. } => 1.0,
            RadialFunction::MeanZeroBump { m, beta } => {
                // maximize |(u - beta)(1 - u)^m| over u in [0, 1]
                let crit = (1.0 + m as f64 * beta) / (m as f64 + 1.0);
                beta.abs()
                    .max(((crit - beta) * (1.0 - crit).powi(m as i32)).abs())
            }
        }
    }

    /// Dunkl transform as a function of |xi| for homogeneous dimension `hd`.
    pub fn transform(&self, hd: f64, rho: f64) -> f64 {
        let nu = hd / 2.0 - 1.0;
        match *self {
            RadialFunction::Gaussian { scale } => {
                scale.powf(hd) * (-0.5 * scale * scale * rho * rho).exp()
            }
            RadialFunction::Bump { m } => bump_transform(m, nu, rho),
            RadialFunction::MeanZeroBump { m, beta } => {
                // profile(r) = g(4r), g = (1 - beta) Bump_m - Bump_{m+1}
                let s = rho / 4.0;
                4f64.powf(-hd)
                    * ((1.0 - beta) * bump_transform(m, nu, s) - bump_transform(m + 1, nu, s))
            }
        }
    }
}

/// Transform of (1 - r^2)_+^m: Gamma(m+1) / (2^{nu+1} Gamma(nu+m+2)) j_{nu+m+1}(rho).
fn bump_transform(m: u32, nu: f64, rho: f64) -> f64 {
    let mf = m as f64;
    gamma(mf + 1.0) / (2f64.powf(nu + 1.0) * gamma(nu + mf + 2.0))
        * bessel_j_normalized(nu + mf + 1.0, rho)
}

/// Dunkl transform of a radial profile by direct quadrature of the Hankel
/// form (2^{hd/2-1} Gamma(hd/2))^{-1} int f(r) j_{hd/2-1}(r rho) r^{hd-1} dr.
pub fn hankel_transform<F: Fn(f64) -> f64>(
    profile: F,
    support: f64,
    hd: f64,
    rho: f64,
    tol: f64,
) -> Result<f64> {
    let nu = hd / 2.0 - 1.0;
    let norm = 2f64.powf(nu) * gamma(hd / 2.0);
    let opts = QuadOptions::relative(tol).with_abs(tol).with_budget(5000);
    let est = integrate(
        |r| profile(r) * bessel_j_normalized(nu, r * rho) * r.powf(hd - 1.0),
        0.0,
        support,
        &[],
        &opts,
    )?;
    Ok(est.value / norm)
}

/// Spectral Dunkl translation of a radial function:
/// tau_x f(y) = c_k^{-1} int E(i xi, x) E(i xi, y) F f(xi) dw(xi).
#[derive(Debug, Clone)]
pub struct RadialTranslator {
    kernel: ProductKernel,
    f: RadialFunction,
    hd: f64,
    c_k: f64,
    grid: TransformGrid,
    /// F f at the grid nodes times the node weight over c_k.
    coef: Vec<f64>,
    tail: f64,
}

impl RadialTranslator {
    /// Frequency grid of radius `freq_radius` resolving space points up to
    /// |x| <= `space_radius`.
    pub fn new(
        kernel: &ProductKernel,
        f: RadialFunction,
        freq_radius: f64,
        space_radius: f64,
        tail_tol: f64,
    ) -> Result<Self> {
        let k = kernel.multiplicities().to_vec();
        let hd = k.len() as f64 + 2.0 * k.iter().sum::<f64>();
        let c_k: f64 = k.iter().map(|&kj| axis_c_k(kj)).product();
        let grid = TransformGrid::resolving(&k, freq_radius, 2.0 * space_radius.max(1.0));
        // tail of int |F f| dw beyond the grid radius, relative to int |F f| dw
        let nu = hd / 2.0 - 1.0;
        let dens = |rho: f64| f.transform(hd, rho).abs() * rho.powf(hd - 1.0);
        let opts = QuadOptions::relative(1e-6)
            .with_abs(1e-300)
            .with_budget(5000);
        let total =
            crate::quadrature::integrate_best(dens, 0.0, 4.0 * freq_radius, &[freq_radius], &opts);
        let outside =
            crate::quadrature::integrate_best(dens, freq_radius, 4.0 * freq_radius, &[], &opts);
        let _ = nu;
        let tail = outside.value / total.value.max(f64::MIN_POSITIVE);
        if tail > tail_tol {
            return Err(Error::TailBound {
                tail,
                tol: tail_tol,
            });
        }
        let mut cache: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
        let mut coef = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let p = grid.point(i);
            let r = norm(&p);
            let v = *cache
                .entry(r.to_bits())
                .or_insert_with(|| f.transform(hd, r));
            coef.push(v * grid.weight(i) / c_k);
        }
        Ok(Self {
            kernel: kernel.clone(),
            f,
            hd,
            c_k,
            grid,
            coef,
            tail,
        })
    }

    pub fn function(&self) -> &RadialFunction {
        &self.f
    }

    pub fn hom_dim(&self) -> f64 {
        self.hd
    }

    pub fn c_k(&self) -> f64 {
        self.c_k
    }

    /// Relative mass of |F f| dw outside the frequency grid.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn grid(&self) -> &TransformGrid {
        &self.grid
    }

    /// tau_x f(y).
    pub fn translate(&self, x: &[f64], y: &[f64]) -> f64 {
        let k = self.kernel.multiplicities();
        let n = k.len();
        // per-axis factors E(i xi_j, x_j) E(i xi_j, y_j)
        let factors: Vec<Vec<Complex64>> = (0..n)
            .map(|j| {
                self.grid.axes[j]
                    .nodes
                    .iter()
                    .map(|&s| {
                        let a = crate::special::kernel_imag(k[j], s * x[j]).conj();
                        let b = crate::special::kernel_imag(k[j], s * y[j]).conj();
                        a * b
                    })
                    .collect()
            })
            .collect();
        let shape = self.grid.shape();
        let mut total = 0.0;
        let mut idx = vec![0usize; n];
        for flat in 0..self.coef.len() {
            let mut rem = flat;
            for j in (0..n).rev() {
                idx[j] = rem % shape[j];
                rem /= shape[j];
            }
            let mut e = Complex64::new(1.0, 0.0);
            for j in 0..n {
                e *= factors[j][idx[j]];
            }
            total += e.re * self.coef[flat];
        }
        total
    }

    /// f(x, y) = tau_x f(-y).
    pub fn kernel(&self, x: &[f64], y: &[f64]) -> f64 {
        let ny: Vec<f64> = y.iter().map(|v| -v).collect();
        self.translate(x, &ny)
    }

    /// f_t(x, y) for f_t(x) = t^{-hd} f(x / t), through the scaling rule
    /// f_t(x, y) = t^{-hd} f(x / t, y / t).
    pub fn dilated_kernel(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        let xs: Vec<f64> = x.iter().map(|v| v / t).collect();
        let ys: Vec<f64> = y.iter().map(|v| v / t).collect();
        t.powf(-self.hd) * self.kernel(&xs, &ys)
    }
}
