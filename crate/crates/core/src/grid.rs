//! Dyadic grid functions over the weighted measure, and the maximal and
//! square operators evaluated on them.
//!
//! A grid function lives on a box split into 2^level cells per axis.  Each
//! cell carries its center value and its exact dw-mass, so integrals are
//! cell sums `sum v_c m_c`.  Suprema over cones and ball families are taken
//! over finite node sets and are therefore lower bounds of the true sups.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heat::HeatKernel;
use crate::linalg::{norm, sub};
use crate::measure::Measure;
use crate::poisson::PoissonKernel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: u32,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGridFunction {
    lower: Vec<f64>,
    upper: Vec<f64>,
    level: u32,
    values: Vec<f64>,
    masses: Vec<f64>,
}

fn check_box(lower: &[f64], upper: &[f64], level: u32) -> Result<()> {
    if lower.is_empty() || lower.len() != upper.len() {
        return Err(Error::Input(
            "box corners must be nonempty and of equal length".into(),
        ));
    }
    if lower
        .iter()
        .zip(upper)
        .any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite())
    {
        return Err(Error::Input(format!(
            "empty or non-finite box {lower:?} .. {upper:?}"
        )));
    }
    let cells = (1usize << level).checked_pow(lower.len() as u32);
    if level > 24 || cells.map_or(true, |c| c > 1 << 26) {
        return Err(Error::Input(format!(
            "level {level} too fine for dimension {}",
            lower.len()
        )));
    }
    Ok(())
}

impl WeightedGridFunction {
    /// Samples `f` at cell centers; masses from the exact box measure.
    pub fn new<F: Fn(&[f64]) -> f64>(
        measure: &Measure,
        lower: &[f64],
        upper: &[f64],
        level: u32,
        f: F,
    ) -> Result<Self> {
        check_box(lower, upper, level)?;
        let mut g = Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            level,
            values: Vec::new(),
            masses: Vec::new(),
        };
        let n = g.len();
        let mut masses = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for c in 0..n {
            let (lo, hi) = g.cell_bounds(c);
            masses.push(measure.box_mass(&lo, &hi)?);
            values.push(f(&g.center(c)));
        }
        g.masses = masses;
        g.values = values;
        Ok(g)
    }

    pub fn from_values(
        measure: &Measure,
        lower: &[f64],
        upper: &[f64],
        level: u32,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mut g = Self::new(measure, lower, upper, level, |_| 0.0)?;
        if values.len() != g.len() {
            return Err(Error::Input(format!(
                "{} values for {} cells",
                values.len(),
                g.len()
            )));
        }
        g.values = values;
        Ok(g)
    }

    /// Same layout and masses, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::Input(format!(
                "{} values for {} cells",
                values.len(),
                self.len()
            )));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    pub fn map<F: Fn(&[f64], f64) -> f64>(&self, f: F) -> Self {
        let values = (0..self.len())
            .map(|c| f(&self.center(c), self.values[c]))
            .collect();
        Self {
            values,
            ..self.clone()
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.lower == other.lower && self.upper == other.upper && self.level == other.level
    }

    /// self + s * other.
    pub fn axpy(&self, s: f64, other: &Self) -> Result<Self> {
        if !self.same_layout(other) {
            return Err(Error::Input("grid functions on different layouts".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + s * b)
            .collect();
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn per_axis(&self) -> usize {
        1 << self.level
    }

    pub fn len(&self) -> usize {
        self.per_axis().pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn cell_size(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.per_axis() as f64
    }

    pub fn min_cell_size(&self) -> f64 {
        (0..self.dim())
            .map(|a| self.cell_size(a))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_cell_size(&self) -> f64 {
        (0..self.dim())
            .map(|a| self.cell_size(a))
            .fold(0.0, f64::max)
    }

    /// Axis 0 varies slowest.
    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let m = self.per_axis();
        let mut idx = vec![0; self.dim()];
        let mut rest = flat;
        for a in (0..self.dim()).rev() {
            idx[a] = rest % m;
            rest /= m;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.per_axis() + i)
    }

    pub fn cell_bounds(&self, flat: usize) -> (Vec<f64>, Vec<f64>) {
        let idx = self.multi_index(flat);
        let lo: Vec<f64> = (0..self.dim())
            .map(|a| self.lower[a] + idx[a] as f64 * self.cell_size(a))
            .collect();
        let hi = (0..self.dim()).map(|a| lo[a] + self.cell_size(a)).collect();
        (lo, hi)
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        let idx = self.multi_index(flat);
        (0..self.dim())
            .map(|a| self.lower[a] + (idx[a] as f64 + 0.5) * self.cell_size(a))
            .collect()
    }

    /// Cell containing x (closed on the upper box edge).
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = Vec::with_capacity(self.dim());
        for a in 0..self.dim() {
            if !(x[a] >= self.lower[a] && x[a] <= self.upper[a]) {
                return None;
            }
            let i = ((x[a] - self.lower[a]) / self.cell_size(a)).floor() as usize;
            idx.push(i.min(self.per_axis() - 1));
        }
        Some(self.flat_index(&idx))
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.masses)
            .map(|(v, m)| v * m)
            .sum()
    }

    /// L^p(dw) norm; `p = inf` is the essential sup over cells of positive mass.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self
                .values
                .iter()
                .zip(&self.masses)
                .filter(|(_, &m)| m > 0.0)
                .map(|(v, _)| v.abs())
                .fold(0.0, f64::max);
        }
        let s: f64 = self
            .values
            .iter()
            .zip(&self.masses)
            .map(|(v, m)| v.abs().powf(p) * m)
            .sum();
        s.powf(1.0 / p)
    }

    /// Integral of |f| over the cells whose centers satisfy `inside`.
    pub fn abs_integral_where<P: Fn(&[f64]) -> bool>(&self, inside: P) -> f64 {
        (0..self.len())
            .filter(|&c| self.values[c] != 0.0 && inside(&self.center(c)))
            .map(|c| self.values[c].abs() * self.masses[c])
            .sum()
    }

    /// Bounding box of the cells carrying nonzero values.
    pub fn support_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut lo = vec![f64::INFINITY; self.dim()];
        let mut hi = vec![f64::NEG_INFINITY; self.dim()];
        let mut any = false;
        for c in 0..self.len() {
            if self.values[c] != 0.0 {
                any = true;
                let (a, b) = self.cell_bounds(c);
                for i in 0..self.dim() {
                    lo[i] = lo[i].min(a[i]);
                    hi[i] = hi[i].max(b[i]);
                }
            }
        }
        any.then_some((lo, hi))
    }

    /// Largest relative gap between a cell mass and the sum of its 2^N
    /// children at the next level.
    pub fn refinement_defect(&self, measure: &Measure) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for c in 0..self.len() {
            let (lo, hi) = self.cell_bounds(c);
            let n = self.dim();
            let mut children = 0.0;
            for corner in 0..(1usize << n) {
                let mut a = lo.clone();
                let mut b = hi.clone();
                for i in 0..n {
                    let mid = 0.5 * (lo[i] + hi[i]);
                    if corner >> i & 1 == 0 {
                        b[i] = mid;
                    } else {
                        a[i] = mid;
                    }
                }
                children += measure.box_mass(&a, &b)?;
            }
            let scale = self.masses[c].max(f64::MIN_POSITIVE);
            worst = worst.max((self.masses[c] - children).abs() / scale);
        }
        Ok(worst)
    }

    pub fn header(&self) -> GridHeader {
        GridHeader {
            dim: self.dim(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            level: self.level,
            cells: self.len(),
        }
    }

    /// `# {json header}` line, a column line, then one row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("# ");
        out.push_str(&serde_json::to_string(&self.header()).expect("header serializes"));
        out.push('\n');
        let cols: Vec<String> = (0..self.dim()).map(|a| format!("center_{a}")).collect();
        out.push_str(&cols.join(","));
        out.push_str(",value,mass\n");
        for c in 0..self.len() {
            for x in self.center(c) {
                out.push_str(&format!("{x},"));
            }
            out.push_str(&format!("{},{}\n", self.values[c], self.masses[c]));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Input(format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| bad(1, "empty input".into()))?;
        let json = first
            .strip_prefix('#')
            .ok_or_else(|| bad(1, "expected '# {header}'".into()))?;
        let header: GridHeader =
            serde_json::from_str(json.trim()).map_err(|e| bad(1, e.to_string()))?;
        check_box(&header.lower, &header.upper, header.level).map_err(|e| bad(1, e.to_string()))?;
        if header.dim != header.lower.len() {
            return Err(bad(1, "dim does not match the box".into()));
        }
        let mut g = Self {
            lower: header.lower,
            upper: header.upper,
            level: header.level,
            values: Vec::new(),
            masses: Vec::new(),
        };
        if header.cells != g.len() {
            return Err(bad(
                1,
                format!("{} cells declared, layout has {}", header.cells, g.len()),
            ));
        }
        match lines.next() {
            Some((_, cols)) if cols.trim_end().ends_with("value,mass") => {}
            _ => return Err(bad(2, "missing column line".into())),
        }
        let width = g.dim() + 2;
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(i + 1, e.to_string()))?;
            if fields.len() != width {
                return Err(bad(
                    i + 1,
                    format!("expected {width} fields, found {}", fields.len()),
                ));
            }
            if fields[width - 1] < 0.0 || !fields[width - 1].is_finite() {
                return Err(bad(i + 1, "negative or non-finite mass".into()));
            }
            g.values.push(fields[width - 2]);
            g.masses.push(fields[width - 1]);
        }
        if g.values.len() != g.len() {
            return Err(bad(
                text.lines().count(),
                format!("{} rows for {} cells", g.values.len(), g.len()),
            ));
        }
        Ok(g)
    }
}

/// Truncated cone {(t, y): |x - y| < t, t_min <= t <= t_max} sampled on
/// log-spaced t levels and a lattice of offsets y = x + t u, |u| < 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeGrid {
    pub x: Vec<f64>,
    pub t_values: Vec<f64>,
    pub offsets: Vec<Vec<f64>>,
    pub resolution: usize,
}

impl ConeGrid {
    pub fn new(
        x: &[f64],
        t_min: f64,
        t_max: f64,
        levels: usize,
        resolution: usize,
    ) -> Result<Self> {
        if !(t_min > 0.0) || !(t_max >= t_min) || levels == 0 || resolution == 0 {
            return Err(Error::Input(format!(
                "cone needs 0 < t_min <= t_max, levels, resolution >= 1 (got {t_min}, {t_max}, {levels}, {resolution})"
            )));
        }
        let t_values = if levels == 1 || t_max == t_min {
            vec![t_min]
        } else {
            crate::certificate::logspace(t_min, t_max, levels)
        };
        let m = resolution as i64;
        let axis: Vec<f64> = (-(m - 1)..m).map(|j| j as f64 / m as f64).collect();
        let offsets = crate::certificate::lattice_points(&axis, x.len())
            .into_iter()
            .filter(|u| norm(u) < 1.0)
            .collect();
        Ok(Self {
            x: x.to_vec(),
            t_values,
            offsets,
            resolution,
        })
    }

    /// Truncation [cell size, 4 diam(supp f) + dist(x, supp f)].
    pub fn for_function(
        f: &WeightedGridFunction,
        x: &[f64],
        levels: usize,
        resolution: usize,
    ) -> Result<Self> {
        let t_min = f.max_cell_size();
        let t_max = match f.support_box() {
            None => t_min,
            Some((lo, hi)) => {
                let diam = norm(&sub(&hi, &lo));
                let gap: Vec<f64> = (0..x.len())
                    .map(|i| (lo[i] - x[i]).max(x[i] - hi[i]).max(0.0))
                    .collect();
                (4.0 * diam + norm(&gap)).max(t_min)
            }
        };
        Self::new(x, t_min, t_max, levels, resolution)
    }

    /// Nested refinement: every old node stays a node.
    pub fn refine(&self) -> Self {
        let levels = 2 * self.t_values.len() - 1;
        let t_min = self.t_values[0];
        let t_max = *self.t_values.last().unwrap();
        Self::new(&self.x, t_min, t_max, levels, 2 * self.resolution)
            .expect("refinement of a valid cone")
    }

    pub fn t_min(&self) -> f64 {
        self.t_values[0]
    }

    pub fn t_max(&self) -> f64 {
        *self.t_values.last().unwrap()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, Vec<f64>)> + '_ {
        self.t_values.iter().flat_map(move |&t| {
            self.offsets
                .iter()
                .map(move |u| (t, self.x.iter().zip(u).map(|(a, b)| a + t * b).collect()))
        })
    }

    pub fn len(&self) -> usize {
        self.t_values.len() * self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A supremum over finitely many nodes: a lower bound of the true sup.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupEstimate {
    pub value: f64,
    pub nodes: usize,
    pub lower_bound: bool,
    pub argmax: Option<(f64, Vec<f64>)>,
}

impl SupEstimate {
    fn from_candidates(candidates: impl Iterator<Item = (f64, Vec<f64>, f64)>) -> Self {
        let mut best = SupEstimate {
            value: 0.0,
            nodes: 0,
            lower_bound: true,
            argmax: None,
        };
        for (t, y, v) in candidates {
            best.nodes += 1;
            if v > best.value || best.argmax.is_none() {
                best.value = v.max(best.value);
                best.argmax = Some((t, y));
            }
        }
        best
    }
}

/// e^{t^2 Delta} f(y) = int h_{t^2}(y, z) f(z) dw(z) by cell quadrature.
pub fn heat_semigroup(heat: &HeatKernel, f: &WeightedGridFunction, t: f64, y: &[f64]) -> f64 {
    let s = t * t;
    (0..f.len())
        .filter(|&c| f.values()[c] != 0.0)
        .map(|c| heat.eval(s, y, &f.center(c)) * f.values()[c] * f.masses()[c])
        .sum()
}

/// M_H f(x) = sup over the cone of |e^{t^2 Delta} f(y)|.
pub fn nontangential_heat_maximal(
    heat: &HeatKernel,
    f: &WeightedGridFunction,
    cone: &ConeGrid,
) -> SupEstimate {
    let values: Vec<(f64, Vec<f64>, f64)> = cone
        .nodes()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(t, y)| {
            let v = heat_semigroup(heat, f, t, &y).abs();
            (t, y, v)
        })
        .collect();
    SupEstimate::from_candidates(values.into_iter())
}

/// Balls B(y, R) containing x: radii from `radii`, centers y = x + R u on
/// a lattice of offsets |u| < 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallSweep {
    pub radii: Vec<f64>,
    pub resolution: usize,
}

impl BallSweep {
    /// Dyadic radii from the cell size up to the box diameter.
    pub fn for_function(f: &WeightedGridFunction, resolution: usize) -> Self {
        let diam = norm(&sub(f.upper(), f.lower()));
        let mut radii = Vec::new();
        let mut r = f.max_cell_size();
        while r <= 2.0 * diam {
            radii.push(r);
            r *= 2.0;
        }
        Self { radii, resolution }
    }
}

/// M_HL f(x) = sup over balls containing x of w(B)^{-1} int_B |f| dw.
/// Cells count as inside a ball when their centers are.
pub fn hardy_littlewood_maximal(
    measure: &Measure,
    f: &WeightedGridFunction,
    x: &[f64],
    balls: &BallSweep,
) -> Result<SupEstimate> {
    let m = balls.resolution.max(1) as i64;
    let axis: Vec<f64> = (-(m - 1)..m).map(|j| j as f64 / m as f64).collect();
    let offsets: Vec<Vec<f64>> = crate::certificate::lattice_points(&axis, x.len())
        .into_iter()
        .filter(|u| norm(u) < 1.0)
        .collect();
    let mut candidates = Vec::new();
    for &r in &balls.radii {
        for u in &offsets {
            let y: Vec<f64> = x.iter().zip(u).map(|(a, b)| a + r * b).collect();
            let mass = f.abs_integral_where(|z| norm(&sub(z, &y)) < r);
            let v = if mass == 0.0 {
                0.0
            } else {
                mass / measure.ball(&y, r)?
            };
            candidates.push((r, y, v));
        }
    }
    Ok(SupEstimate::from_candidates(candidates.into_iter()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquareEstimate {
    pub value: f64,
    pub nodes: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub levels: usize,
    pub resolution: usize,
}

/// Q_t f(y) = int t q_t(y, z) f(z) dw(z), with q_t = d/dt p_t.
pub fn q_semigroup(
    poisson: &PoissonKernel,
    f: &WeightedGridFunction,
    t: f64,
    y: &[f64],
    tol: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for c in 0..f.len() {
        let v = f.values()[c];
        if v == 0.0 {
            continue;
        }
        let q = poisson
            .q_t_kernel(t, y, &f.center(c), tol, f64::MIN_POSITIVE)?
            .value;
        acc += t * q * v * f.masses()[c];
    }
    Ok(acc)
}

/// S f(x)^2 = int int_{|x-y|<t} |Q_t f(y)|^2 dw(y) dt / (t w(B(x, t))),
/// trapezoid in ln t over the cone levels, lattice cells of volume
/// (t/m)^N weighted by w(y) in y.
pub fn square_function(
    poisson: &PoissonKernel,
    f: &WeightedGridFunction,
    cone: &ConeGrid,
    tol: f64,
) -> Result<SquareEstimate> {
    let measure = poisson.heat().measure();
    let n = cone.x.len();
    let m = cone.resolution as f64;
    let levels: Vec<f64> = cone
        .t_values
        .par_iter()
        .map(|&t| -> Result<f64> {
            let cell = (t / m).powi(n as i32);
            let mut inner = 0.0;
            for u in &cone.offsets {
                let y: Vec<f64> = cone.x.iter().zip(u).map(|(a, b)| a + t * b).collect();
                let q = q_semigroup(poisson, f, t, &y, tol)?;
                inner += q * q * measure.weight(&y) * cell;
            }
            Ok(inner / measure.ball(&cone.x, t)?)
        })
        .collect::<Result<_>>()?;
    let lt: Vec<f64> = cone.t_values.iter().map(|t| t.ln()).collect();
    let mut total = 0.0;
    for i in 1..levels.len() {
        total += 0.5 * (levels[i] + levels[i - 1]) * (lt[i] - lt[i - 1]);
    }
    Ok(SquareEstimate {
        value: total.max(0.0).sqrt(),
        nodes: cone.len(),
        t_min: cone.t_min(),
        t_max: cone.t_max(),
        levels: cone.t_values.len(),
        resolution: cone.resolution,
    })
}

/// L^1(dw) norm of an operator profile sampled at cell centers, with a tail
/// beyond the box extrapolated from the decay C (r/d) w(B(x0, d))^{-1}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormEstimate {
    pub interior: f64,
    pub tail: f64,
    pub total: f64,
    pub decay_constant: f64,
}

/// The decay constant is the sup of profile * d * w(B(x0, d)) / r over the
/// outermost shell of cells; summing dyadic shells with the doubling bound
/// w(B(x0, 2d)) <= 2^{hom_dim} w(B(x0, d)) gives tail <= 2 (2^{hom_dim} - 1) C r / R.
pub fn l1_norm_with_tail(
    measure: &Measure,
    profile: &WeightedGridFunction,
    x0: &[f64],
    r: f64,
) -> Result<NormEstimate> {
    let interior = profile.lp_norm(1.0);
    // largest ball around x0 inside the box
    let reach = (0..profile.dim())
        .map(|a| (x0[a] - profile.lower()[a]).min(profile.upper()[a] - x0[a]))
        .fold(f64::INFINITY, f64::min);
    let shell = reach - 2.0 * profile.max_cell_size();
    let mut c: f64 = 0.0;
    for i in 0..profile.len() {
        let z = profile.center(i);
        let d = norm(&sub(&z, x0));
        if d >= shell && d > 0.0 {
            c = c.max(profile.values()[i].abs() * d * measure.ball(x0, d)? / r);
        }
    }
    let hd = measure.root_system().hom_dim();
    let tail = 2.0 * (2f64.powf(hd) - 1.0) * c * r / reach.max(f64::MIN_POSITIVE);
    Ok(NormEstimate {
        interior,
        tail,
        total: interior + tail,
        decay_constant: c,
    })
}

/// Evaluates `op` at every cell center of `layout` (values ignored).
pub fn profile<F>(layout: &WeightedGridFunction, op: F) -> Result<WeightedGridFunction>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let values: Vec<f64> = (0..layout.len())
        .into_par_iter()
        .map(|c| op(&layout.center(c)))
        .collect::<Result<_>>()?;
    layout.with_values(values)
}
