//! Atoms of the weighted Hardy space, tent atoms and the two constructive
//! decompositions: the chain of balls that carries orbit mass back to the
//! base ball, and the iterated Calderón-Zygmund split of (1,2)-atoms into
//! (1,inf)-atoms.
//!
//! All functions live on [`WeightedGridFunction`] layouts; indicators of
//! balls are taken cell by cell (center inside), and ball masses used for
//! normalization are the discrete masses of those cells, so the algebra of
//! the constructions is exact on the grid.

use rayon::prelude::*;
use serde::Serialize;

use crate::dunkl::{ProductTranslator, RadialFunction};
use crate::error::{Error, Result};
use crate::grid::{hardy_littlewood_maximal, BallSweep, WeightedGridFunction};
use crate::linalg::{dist, norm};
use crate::measure::Measure;
use crate::root_system::{RootSystem, WeylElement};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Support {
    Ball { center: Vec<f64>, radius: f64 },
    Cube { lower: Vec<f64>, upper: Vec<f64> },
}

impl Support {
    pub fn ball(center: &[f64], radius: f64) -> Self {
        Support::Ball {
            center: center.to_vec(),
            radius,
        }
    }

    pub fn cube(lower: &[f64], upper: &[f64]) -> Self {
        Support::Cube {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        }
    }

    pub fn measure(&self, m: &Measure) -> Result<f64> {
        match self {
            Support::Ball { center, radius } => m.ball(center, *radius),
            Support::Cube { lower, upper } => m.box_mass(lower, upper),
        }
    }

    /// Cell c of g lies in the support up to half a cell.
    fn holds_cell(&self, g: &WeightedGridFunction, c: usize) -> bool {
        let z = g.center(c);
        match self {
            Support::Ball { center, radius } => {
                let half_diag = 0.5
                    * (0..g.dim())
                        .map(|a| g.cell_size(a).powi(2))
                        .sum::<f64>()
                        .sqrt();
                dist(&z, center) <= radius + half_diag * (1.0 + 1e-12)
            }
            Support::Cube { lower, upper } => (0..g.dim()).all(|a| {
                let h = 0.5 * g.cell_size(a) * (1.0 + 1e-12);
                z[a] >= lower[a] - h && z[a] <= upper[a] + h
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CWAtomReport {
    pub support: Support,
    pub q: f64,
    pub support_ok: bool,
    /// L^1(dw) mass of the cells outside the support
    pub outside_mass: f64,
    pub size: f64,
    pub size_bound: f64,
    pub size_ok: bool,
    pub cancellation: f64,
    pub l1: f64,
    pub cancellation_ok: bool,
    pub pass: bool,
}

/// Support, size ||a||_q <= (1 + tol) w(S)^{1/q - 1} and cancellation
/// |int a dw| <= tol ||a||_1.
pub fn validate_cw_atom(
    measure: &Measure,
    a: &WeightedGridFunction,
    support: &Support,
    q: f64,
    tol: f64,
) -> Result<CWAtomReport> {
    if !(q > 1.0) {
        return Err(Error::Input(format!(
            "atom exponent must lie in (1, inf], got {q}"
        )));
    }
    let w = support.measure(measure)?;
    let outside_mass: f64 = (0..a.len())
        .filter(|&c| a.values()[c] != 0.0 && !support.holds_cell(a, c))
        .map(|c| a.values()[c].abs() * a.masses()[c])
        .sum();
    let size = a.lp_norm(q);
    let size_bound = if q.is_infinite() {
        1.0 / w
    } else {
        w.powf(1.0 / q - 1.0)
    };
    let l1 = a.lp_norm(1.0);
    let cancellation = a.integral().abs();
    let support_ok = outside_mass == 0.0;
    let size_ok = size <= (1.0 + tol) * size_bound;
    let cancellation_ok = cancellation <= tol * l1;
    Ok(CWAtomReport {
        support: support.clone(),
        q,
        support_ok,
        outside_mass,
        size,
        size_bound,
        size_ok,
        cancellation,
        l1,
        cancellation_ok,
        pass: support_ok && size_ok && cancellation_ok,
    })
}

/// Smallest mu with a / mu satisfying the size condition.
pub fn atom_multiple(
    measure: &Measure,
    a: &WeightedGridFunction,
    support: &Support,
    q: f64,
) -> Result<f64> {
    let w = support.measure(measure)?;
    let bound = if q.is_infinite() {
        1.0 / w
    } else {
        w.powf(1.0 / q - 1.0)
    };
    Ok(a.lp_norm(q) / bound)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Piece {
    pub label: String,
    pub lambda: f64,
    pub q: f64,
    pub support: Support,
    #[serde(skip)]
    pub atom: WeightedGridFunction,
    pub report: CWAtomReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainEntry {
    pub j: usize,
    pub image: Vec<f64>,
    pub distance: f64,
    pub in_chain: bool,
    pub m_j: Option<usize>,
    pub c_j: f64,
    /// |c_j| ||sigma_j(y0) - y0||^2 / r^2
    pub c_constant: Option<f64>,
    pub l2_norm: f64,
    pub spacing: Option<(f64, f64)>,
    /// m_j r^2 / ||sigma_j(y0) - y0||^2
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainBookkeeping {
    pub y0: Vec<f64>,
    pub r: f64,
    pub group_order: usize,
    pub entries: Vec<ChainEntry>,
    pub chain_coefficient_sum: f64,
    pub group_bound: f64,
    pub final_multiple: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CzRound {
    pub round: usize,
    pub pieces: usize,
    pub mass_in: f64,
    pub mass_out: f64,
    pub contraction: f64,
    pub worst_piece_contraction: f64,
    pub stopping_cubes: usize,
    /// max over pieces of sum w(Q_j) / (eps^2 w(Q))
    pub max_cube_mass_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CzBookkeeping {
    pub c1: f64,
    pub c2: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub initial_multiple: f64,
    pub rounds: Vec<CzRound>,
    pub max_good_multiple: f64,
    pub coefficient_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bookkeeping {
    Chain(ChainBookkeeping),
    Cz(CzBookkeeping),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub pieces: Vec<Piece>,
    #[serde(skip)]
    pub residual: WeightedGridFunction,
    pub residual_l1: f64,
    pub coefficient_sum: f64,
    /// ||input - sum lambda_j a_j - residual||_{L^1(dw)}
    pub reconstruction_error: f64,
    pub bookkeeping: Bookkeeping,
}

impl Decomposition {
    fn assemble(
        input: &WeightedGridFunction,
        pieces: Vec<Piece>,
        residual: WeightedGridFunction,
        bookkeeping: Bookkeeping,
    ) -> Result<Self> {
        let mut diff = input.axpy(-1.0, &residual)?;
        for p in &pieces {
            diff = diff.axpy(-p.lambda, &p.atom)?;
        }
        Ok(Self {
            coefficient_sum: pieces.iter().map(|p| p.lambda.abs()).sum(),
            residual_l1: residual.lp_norm(1.0),
            reconstruction_error: diff.lp_norm(1.0),
            pieces,
            residual,
            bookkeeping,
        })
    }

    pub fn all_valid(&self) -> bool {
        self.pieces.iter().all(|p| p.report.pass)
    }

    /// JSON with pieces referring to their atom data through `atom_ref(i)`.
    pub fn to_json<F: Fn(usize) -> String>(&self, atom_ref: F) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("decomposition serializes");
        if let Some(list) = v.get_mut("pieces").and_then(|p| p.as_array_mut()) {
            for (i, p) in list.iter_mut().enumerate() {
                p["atom_data"] = serde_json::Value::String(atom_ref(i));
            }
        }
        v
    }
}

/// Emits `coef * raw` as lambda * atom with the atom normalized at exponent q.
/// Pieces below rounding level relative to `scale` (an L^1 size) are dropped.
fn emit(
    measure: &Measure,
    label: String,
    coef: f64,
    raw: &WeightedGridFunction,
    support: Support,
    q: f64,
    tol: f64,
    scale: f64,
) -> Result<Option<Piece>> {
    let mu = atom_multiple(measure, raw, &support, q)?;
    if mu == 0.0 || raw.lp_norm(1.0) <= 1e-12 * scale {
        return Ok(None);
    }
    let atom = raw.scaled(1.0 / mu);
    let report = validate_cw_atom(measure, &atom, &support, q, tol)?;
    Ok(Some(Piece {
        label,
        lambda: coef * mu,
        q,
        support,
        atom,
        report,
    }))
}

/// Group elements with the identity first.
fn ordered_group(rs: &RootSystem) -> Vec<&WeylElement> {
    let mut g: Vec<&WeylElement> = rs.group().iter().collect();
    g.sort_by_key(|e| e.length);
    g
}

fn ball_indicator(g: &WeightedGridFunction, center: &[f64], r: f64) -> (WeightedGridFunction, f64) {
    let ind = g.map(|z, _| if dist(z, center) < r { 1.0 } else { 0.0 });
    let mass = ind.integral();
    (ind, mass)
}

/// Chain-of-balls decomposition of g supported on the orbit of B(y0, r)
/// into (1,2)-atom multiples.  `l2_budget` is the constant allowed in the
/// bound ||g||_{L^2(B(sigma(y0), r))} <= budget w(B(y0, r))^{-1/2} r^2 / ||sigma(y0) - y0||^2.
pub fn chain_decompose(
    rs: &RootSystem,
    measure: &Measure,
    g: &WeightedGridFunction,
    y0: &[f64],
    r: f64,
    l2_budget: f64,
    tol: f64,
) -> Result<Decomposition> {
    let l1 = g.lp_norm(1.0);
    if g.integral().abs() > tol * l1 {
        return Err(Error::Input(format!(
            "g fails cancellation: |int g dw| = {:.3e} > {tol:.1e} ||g||_1 = {:.3e}",
            g.integral().abs(),
            tol * l1
        )));
    }
    let group = ordered_group(rs);
    let images: Vec<Vec<f64>> = group.iter().map(|e| e.matrix.apply(y0)).collect();
    let half_diag = 0.5
        * (0..g.dim())
            .map(|a| g.cell_size(a).powi(2))
            .sum::<f64>()
            .sqrt();
    let reach = r + half_diag * (1.0 + 1e-12);
    // E_j by first orbit ball containing the cell center
    let mut owner = vec![None; g.len()];
    let mut outside = 0.0;
    for c in 0..g.len() {
        let z = g.center(c);
        owner[c] = images.iter().position(|p| dist(&z, p) <= reach);
        if owner[c].is_none() {
            outside += g.values()[c].abs() * g.masses()[c];
        }
    }
    if outside > tol * l1 {
        return Err(Error::Input(format!(
            "g is not supported on the orbit of B(y0, r): mass {outside:.3e} outside"
        )));
    }
    let w_base = measure.ball(y0, r)?;
    let mut pieces = Vec::new();
    let mut entries = Vec::new();
    let mut final_part = g.scaled(0.0);
    let mut chain_sum = 0.0;
    for (j, p) in images.iter().enumerate() {
        let gj = g.map(|_, _| 0.0).with_values(
            (0..g.len())
                .map(|c| {
                    if owner[c] == Some(j) {
                        g.values()[c]
                    } else {
                        0.0
                    }
                })
                .collect(),
        )?;
        let c_j = gj.integral();
        let distance = dist(p, y0);
        let l2 = gj.lp_norm(2.0);
        let in_chain = j > 0 && distance >= 4.0 * r;
        if !in_chain {
            final_part = final_part.axpy(1.0, &gj)?;
            entries.push(ChainEntry {
                j,
                image: p.clone(),
                distance,
                in_chain,
                m_j: None,
                c_j,
                c_constant: None,
                l2_norm: l2,
                spacing: None,
                coefficient: 0.0,
            });
            continue;
        }
        let shape = r * r / (distance * distance);
        let allowed = l2_budget * shape / w_base.sqrt();
        if l2 > allowed {
            return Err(Error::Input(format!(
                "L^2 budget exceeded on B(sigma_{j}(y0), r): {l2:.3e} > {allowed:.3e} (budget {l2_budget})"
            )));
        }
        let m_j = (distance / r).floor() as usize;
        if m_j < 4 {
            return Err(Error::Construction(format!(
                "chain length m_{j} = {m_j} < 4"
            )));
        }
        let points: Vec<Vec<f64>> = (0..=m_j)
            .map(|n| {
                p.iter()
                    .zip(y0)
                    .map(|(a, b)| a + n as f64 * (b - a) / m_j as f64)
                    .collect()
            })
            .collect();
        let steps: Vec<f64> = points.windows(2).map(|w| dist(&w[0], &w[1])).collect();
        let spacing = (
            steps.iter().cloned().fold(f64::INFINITY, f64::min),
            steps.iter().cloned().fold(0.0, f64::max),
        );
        let balls: Vec<(WeightedGridFunction, f64)> =
            points.iter().map(|x| ball_indicator(g, x, r)).collect();
        if let Some(n) = balls.iter().position(|(_, m)| *m <= 0.0) {
            return Err(Error::Input(format!(
                "grid too coarse: chain ball {n} of orbit point {j} holds no mass"
            )));
        }
        let scale = 1.0 / shape;
        let unit = |n: usize| balls[n].0.scaled(1.0 / balls[n].1);
        // a_0 = (D^2/r^2)(g_j - c_j 1_{B(x_1)}/w(B(x_1)))
        let a0 = gj.axpy(-c_j, &unit(1))?.scaled(scale);
        let mut coefficient = 0.0;
        if let Some(piece) = emit(
            measure,
            format!("chain {j} 0"),
            shape,
            &a0,
            Support::ball(&points[0], 4.0 * r),
            2.0,
            tol,
            l1 * scale,
        )? {
            pieces.push(piece);
        }
        coefficient += shape;
        for n in 1..m_j {
            let an = unit(n).axpy(-1.0, &unit(n + 1))?.scaled(c_j * scale);
            if let Some(piece) = emit(
                measure,
                format!("chain {j} {n}"),
                shape,
                &an,
                Support::ball(&points[n], 4.0 * r),
                2.0,
                tol,
                l1 * scale,
            )? {
                pieces.push(piece);
            }
            coefficient += shape;
        }
        chain_sum += coefficient;
        // b_j = c_j 1_{B(x_m)} / w(B(x_m)), x_m = y0
        final_part = final_part.axpy(c_j, &unit(m_j))?;
        entries.push(ChainEntry {
            j,
            image: p.clone(),
            distance,
            in_chain,
            m_j: Some(m_j),
            c_j,
            c_constant: Some(c_j.abs() / shape),
            l2_norm: l2,
            spacing: Some(spacing),
            coefficient,
        });
    }
    let mut final_multiple = 0.0;
    if let Some(piece) = emit(
        measure,
        "final".into(),
        1.0,
        &final_part,
        Support::ball(y0, 16.0 * r),
        2.0,
        tol,
        l1,
    )? {
        final_multiple = piece.lambda;
        pieces.insert(0, piece);
    }
    let book = ChainBookkeeping {
        y0: y0.to_vec(),
        r,
        group_order: group.len(),
        entries,
        chain_coefficient_sum: chain_sum,
        group_bound: group.len() as f64 / 4.0,
        final_multiple,
    };
    Decomposition::assemble(g, pieces, g.scaled(0.0), Bookkeeping::Chain(book))
}

/// Dyadic cube of a grid: `level` halvings of the box, `index` per axis.
#[derive(Debug, Clone, PartialEq)]
struct Cube {
    level: u32,
    index: Vec<usize>,
}

struct DyadicTree<'a> {
    g: &'a WeightedGridFunction,
}

impl<'a> DyadicTree<'a> {
    fn cells(&self, q: &Cube) -> Vec<usize> {
        let shift = self.g.level() - q.level;
        let side = 1usize << shift;
        let n = self.g.dim();
        let mut out = Vec::with_capacity(side.pow(n as u32));
        let mut idx = vec![0usize; n];
        loop {
            let cell: Vec<usize> = (0..n).map(|a| (q.index[a] << shift) + idx[a]).collect();
            out.push(self.g.flat_index(&cell));
            let mut a = n;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < side {
                    break;
                }
                idx[a] = 0;
            }
        }
    }

    fn children(&self, q: &Cube) -> Vec<Cube> {
        let n = self.g.dim();
        (0..(1usize << n))
            .map(|corner| Cube {
                level: q.level + 1,
                index: (0..n).map(|a| 2 * q.index[a] + (corner >> a & 1)).collect(),
            })
            .collect()
    }

    fn mass(&self, q: &Cube) -> f64 {
        self.cells(q).iter().map(|&c| self.g.masses()[c]).sum()
    }

    fn bounds(&self, q: &Cube) -> (Vec<f64>, Vec<f64>) {
        let n = self.g.dim();
        let lo: Vec<f64> = (0..n)
            .map(|a| {
                let side = (self.g.upper()[a] - self.g.lower()[a]) / (1u64 << q.level) as f64;
                self.g.lower()[a] + q.index[a] as f64 * side
            })
            .collect();
        let hi = (0..n)
            .map(|a| lo[a] + (self.g.upper()[a] - self.g.lower()[a]) / (1u64 << q.level) as f64)
            .collect();
        (lo, hi)
    }
}

/// max w(Q) / w(Q') over every dyadic cube of the grid and its children.
fn grid_doubling(g: &WeightedGridFunction) -> Result<f64> {
    let tree = DyadicTree { g };
    let mut worst: f64 = 1.0;
    let mut level = vec![Cube {
        level: 0,
        index: vec![0; g.dim()],
    }];
    for _ in 0..g.level() {
        let mut next = Vec::new();
        for q in &level {
            let wq = tree.mass(q);
            for child in tree.children(q) {
                let wc = tree.mass(&child);
                if wc <= 0.0 && wq > 0.0 {
                    return Err(Error::Config(format!(
                        "non-doubling numerics: empty child of a cube of mass {wq:.3e}"
                    )));
                }
                if wc > 0.0 {
                    worst = worst.max(wq / wc);
                }
                next.push(child);
            }
        }
        level = next;
    }
    Ok(worst)
}

/// w(Q) <= C1 w(Q') for half-side sub-cubes, sampled, with a 10% margin.
pub fn estimate_c1(measure: &Measure, cubes: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let mut worst: f64 = 1.0;
    for (lo, hi) in cubes {
        let wq = measure.box_mass(lo, hi)?;
        let n = lo.len();
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
            let wc = measure.box_mass(&a, &b)?;
            if !(wc > 0.0) || !wq.is_finite() {
                return Err(Error::Config(format!(
                    "non-doubling numerics on cube {lo:?}..{hi:?}"
                )));
            }
            worst = worst.max(wq / wc);
        }
    }
    Ok(1.1 * worst)
}

/// Cubes of `depth` dyadic generations inside a box.
pub fn dyadic_cubes(lower: &[f64], upper: &[f64], depth: u32) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = Vec::new();
    for level in 0..=depth {
        let m = 1usize << level;
        let cells = crate::certificate::lattice_points(
            &(0..m).map(|i| i as f64).collect::<Vec<_>>(),
            lower.len(),
        );
        for idx in cells {
            let lo: Vec<f64> = (0..lower.len())
                .map(|a| lower[a] + idx[a] * (upper[a] - lower[a]) / m as f64)
                .collect();
            let hi = (0..lower.len())
                .map(|a| lo[a] + (upper[a] - lower[a]) / m as f64)
                .collect();
            out.push((lo, hi));
        }
    }
    out
}

struct CzItem {
    cube: Cube,
    /// actual (unnormalized) function
    f: WeightedGridFunction,
}

/// Iterated Calderón-Zygmund split of a (1,2)-atom on the grid box Q into
/// (1,inf)-atom multiples.  `c1` defaults to the doubling constant of the
/// grid's dyadic tree with a 10% margin.
pub fn cz_split(
    measure: &Measure,
    a: &WeightedGridFunction,
    rounds: usize,
    tol: f64,
    c1: Option<f64>,
) -> Result<Decomposition> {
    let tree = DyadicTree { g: a };
    let top = Cube {
        level: 0,
        index: vec![0; a.dim()],
    };
    let wq = tree.mass(&top);
    let l1 = a.lp_norm(1.0);
    if a.integral().abs() > tol * l1 {
        return Err(Error::Input(format!(
            "input fails cancellation: |int a dw| = {:.3e} > {tol:.1e} ||a||_1",
            a.integral().abs()
        )));
    }
    let mu0 = a.lp_norm(2.0) * wq.sqrt();
    if mu0 > 1.0 + tol {
        return Err(Error::Input(format!(
            "input is not a (1,2)-atom on its box: ||a||_2 w(Q)^(1/2) = {mu0:.6}"
        )));
    }
    let c1 = match c1 {
        Some(c) => c,
        None => 1.1 * grid_doubling(a)?,
    };
    let eps = 0.25 / c1.sqrt();
    let c2 = (1.0 + c1.sqrt()) / eps;
    let mut book = CzBookkeeping {
        c1,
        c2,
        epsilon: eps,
        lambda: 1.0 / (eps * eps * wq * wq),
        initial_multiple: mu0,
        rounds: Vec::new(),
        max_good_multiple: 0.0,
        coefficient_bound: 2.0 * c2,
    };
    let mut pieces = Vec::new();
    let mut items = vec![CzItem {
        cube: top,
        f: a.clone(),
    }];
    for round in 0..rounds {
        if items.is_empty() {
            break;
        }
        let mut rec = CzRound {
            round,
            pieces: items.len(),
            mass_in: 0.0,
            mass_out: 0.0,
            contraction: 0.0,
            worst_piece_contraction: 0.0,
            stopping_cubes: 0,
            max_cube_mass_ratio: 0.0,
        };
        let mut next = Vec::new();
        for (i, item) in items.iter().enumerate() {
            let cells = tree.cells(&item.cube);
            let w = tree.mass(&item.cube);
            let norm2: f64 = cells
                .iter()
                .map(|&c| item.f.values()[c].powi(2) * a.masses()[c])
                .sum::<f64>()
                .sqrt();
            let mu = norm2 * w.sqrt();
            if mu == 0.0 {
                continue;
            }
            rec.mass_in += mu;
            let at: Vec<f64> = item.f.values().iter().map(|v| v / mu).collect();
            let item_l1 = item.f.lp_norm(1.0);
            let lambda = 1.0 / (eps * eps * w * w);
            // parent-first scan for maximal cubes with |a|^2 average above lambda
            let mut stops = Vec::new();
            let mut stack = tree.children(&item.cube);
            while let Some(q) = stack.pop() {
                let wc = tree.mass(&q);
                if wc <= 0.0 {
                    continue;
                }
                let avg: f64 = tree
                    .cells(&q)
                    .iter()
                    .map(|&c| at[c] * at[c] * a.masses()[c])
                    .sum::<f64>()
                    / wc;
                if avg > lambda {
                    stops.push(q);
                } else if q.level < a.level() {
                    stack.extend(tree.children(&q));
                }
            }
            let mut good = vec![0.0; a.len()];
            for &c in &cells {
                good[c] = at[c];
            }
            let mut stop_mass = 0.0;
            let mut out_piece = 0.0;
            for q in stops {
                let qc = tree.cells(&q);
                let wc = tree.mass(&q);
                stop_mass += wc;
                let avg: f64 = qc.iter().map(|&c| at[c] * a.masses()[c]).sum::<f64>() / wc;
                let mut bad = vec![0.0; a.len()];
                for &c in &qc {
                    good[c] = avg;
                    bad[c] = at[c] - avg;
                }
                let bad_norm: f64 = qc
                    .iter()
                    .map(|&c| bad[c] * bad[c] * a.masses()[c])
                    .sum::<f64>()
                    .sqrt();
                let m_out = mu * bad_norm * wc.sqrt();
                rec.stopping_cubes += 1;
                if m_out > 0.0 {
                    out_piece += m_out;
                    next.push(CzItem {
                        cube: q,
                        f: a.with_values(bad.iter().map(|v| v * mu).collect())?,
                    });
                }
            }
            rec.mass_out += out_piece;
            rec.worst_piece_contraction = rec.worst_piece_contraction.max(out_piece / mu);
            rec.max_cube_mass_ratio = rec.max_cube_mass_ratio.max(stop_mass / (eps * eps * w));
            let b = a.with_values(good)?;
            let (lo, hi) = tree.bounds(&item.cube);
            let support = Support::cube(&lo, &hi);
            if let Some(piece) = emit(
                measure,
                format!("good {round} {i}"),
                mu,
                &b,
                support,
                f64::INFINITY,
                tol,
                item_l1 / mu,
            )? {
                book.max_good_multiple = book.max_good_multiple.max(piece.lambda / mu);
                pieces.push(piece);
            }
        }
        rec.contraction = if rec.mass_in > 0.0 {
            rec.mass_out / rec.mass_in
        } else {
            0.0
        };
        book.rounds.push(rec);
        items = next;
    }
    let mut residual = a.scaled(0.0);
    for item in &items {
        residual = residual.axpy(1.0, &item.f)?;
    }
    Decomposition::assemble(a, pieces, residual, Bookkeeping::Cz(book))
}

/// Sampled T^1_2 atom A(t, x) on log-spaced t levels over a grid layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TentAtom {
    pub layout: WeightedGridFunction,
    pub t_values: Vec<f64>,
    /// d(ln t) weight of each level
    pub dlnt: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub y0: Vec<f64>,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TentReport {
    pub support_ok: bool,
    pub energy: f64,
    pub bound: f64,
    pub pass: bool,
}

impl TentAtom {
    /// Normalized indicator of {(t, x): t in [t_lo, t_hi], |x - y0| + t + h <= r},
    /// h the cell size (one cell of slack inside the tent).
    pub fn indicator(
        measure: &Measure,
        layout: &WeightedGridFunction,
        y0: &[f64],
        r: f64,
        t_lo: f64,
        t_hi: f64,
        levels: usize,
    ) -> Result<Self> {
        if !(0.0 < t_lo && t_lo < t_hi && levels > 0) {
            return Err(Error::Input(format!(
                "bad tent levels [{t_lo}, {t_hi}] x {levels}"
            )));
        }
        let edges = crate::certificate::logspace(t_lo, t_hi, levels + 1);
        let t_values: Vec<f64> = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        let dlnt: Vec<f64> = edges.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        let h = layout.max_cell_size();
        let values: Vec<Vec<f64>> = t_values
            .iter()
            .map(|&t| {
                (0..layout.len())
                    .map(|c| {
                        if dist(&layout.center(c), y0) + t + h <= r {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let mut atom = Self {
            layout: layout.scaled(0.0),
            t_values,
            dlnt,
            values,
            y0: y0.to_vec(),
            r,
        };
        let energy = atom.energy();
        if energy == 0.0 {
            return Err(Error::Input(
                "grid too coarse: the tent holds no cell".into(),
            ));
        }
        let c = (1.0 / (measure.ball(y0, r)? * energy)).sqrt();
        for row in atom.values.iter_mut() {
            for v in row.iter_mut() {
                *v *= c;
            }
        }
        Ok(atom)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for row in out.values.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    /// sum_t dlnt sum_x |A|^2 m_x.
    pub fn energy(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.dlnt)
            .map(|(row, d)| {
                d * row
                    .iter()
                    .zip(self.layout.masses())
                    .map(|(v, m)| v * v * m)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn level(&self, i: usize) -> WeightedGridFunction {
        self.layout
            .with_values(self.values[i].clone())
            .expect("same layout")
    }

    pub fn check(&self, measure: &Measure, tol: f64) -> Result<TentReport> {
        let mut support_ok = true;
        for (i, &t) in self.t_values.iter().enumerate() {
            for c in 0..self.layout.len() {
                if self.values[i][c] != 0.0
                    && dist(&self.layout.center(c), &self.y0) + t > self.r * (1.0 + 1e-12)
                {
                    support_ok = false;
                }
            }
        }
        let bound = 1.0 / measure.ball(&self.y0, self.r)?;
        let energy = self.energy();
        Ok(TentReport {
            support_ok,
            energy,
            bound,
            pass: support_ok && energy <= (1.0 + tol) * bound,
        })
    }
}

fn check_psi(psi: &ProductTranslator) -> Result<()> {
    match psi.function() {
        RadialFunction::MeanZeroBump { .. } => Ok(()),
        other => Err(Error::Input(format!(
            "Psi must be radial, mean zero and supported in B(0, 1/4); got {other:?}"
        ))),
    }
}

/// a(t_i, x) = int Psi_t(x, y) A(t, y) dw(y) at every cell center.
fn smoothed_level(
    psi: &ProductTranslator,
    tent: &TentAtom,
    i: usize,
    xs: &[usize],
) -> Result<Vec<f64>> {
    let t = tent.t_values[i];
    let row = &tent.values[i];
    let layout = &tent.layout;
    let active: Vec<usize> = (0..layout.len()).filter(|&c| row[c] != 0.0).collect();
    xs.par_iter()
        .map(|&cx| -> Result<f64> {
            let x = layout.center(cx);
            let mut acc = 0.0;
            for &cy in &active {
                let k = psi.dilated_kernel(t, &x, &layout.center(cy))?;
                acc += k * row[cy] * layout.masses()[cy];
            }
            Ok(acc)
        })
        .collect()
}

/// g = pi_Psi A = int a(t, .) dt / t on the tent's layout.
pub fn pi_psi_apply(psi: &ProductTranslator, tent: &TentAtom) -> Result<WeightedGridFunction> {
    check_psi(psi)?;
    let all: Vec<usize> = (0..tent.layout.len()).collect();
    let mut g = vec![0.0; tent.layout.len()];
    for i in 0..tent.t_values.len() {
        if tent.values[i].iter().all(|&v| v == 0.0) {
            continue;
        }
        let a = smoothed_level(psi, tent, i, &all)?;
        for (gv, av) in g.iter_mut().zip(a) {
            *gv += tent.dlnt[i] * av;
        }
    }
    tent.layout.with_values(g)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub image: Vec<f64>,
    pub gap: f64,
    pub skipped: Option<String>,
    /// max |a(t, x)| / (t^2 / gap^2 sum_sigma' M_HL(A(t, .))(sigma' x)) over B(sigma(y0), r)
    pub pointwise_ratio: f64,
    pub l2_norm: f64,
    pub l2_bound_shape: f64,
    /// ||g||_{L^2(B(sigma(y0), r))} / (w(B(y0, r))^{-1/2} r^2 / gap^2)
    pub l2_ratio: f64,
    pub pass: bool,
}

/// Both sides of the pointwise and L^2 lemmas on B(sigma(y0), r).
pub fn check_lemma_bounds(
    rs: &RootSystem,
    measure: &Measure,
    psi: &ProductTranslator,
    tent: &TentAtom,
    sigma: &WeylElement,
) -> Result<LemmaReport> {
    check_psi(psi)?;
    let image = sigma.matrix.apply(&tent.y0);
    let gap = dist(&image, &tent.y0);
    let r = tent.r;
    let mut report = LemmaReport {
        image: image.clone(),
        gap,
        skipped: None,
        pointwise_ratio: 0.0,
        l2_norm: 0.0,
        l2_bound_shape: 0.0,
        l2_ratio: 0.0,
        pass: false,
    };
    if gap <= 4.0 * r {
        report.skipped = Some(format!(
            "gap ||sigma(y0) - y0|| = {gap:.4} is not above 4r = {:.4}",
            4.0 * r
        ));
        return Ok(report);
    }
    let layout = &tent.layout;
    let xs: Vec<usize> = (0..layout.len())
        .filter(|&c| dist(&layout.center(c), &image) < r)
        .collect();
    if xs.is_empty() {
        return Err(Error::Input(
            "grid too coarse: B(sigma(y0), r) holds no cell".into(),
        ));
    }
    let mut g = vec![0.0; xs.len()];
    let mut worst: f64 = 0.0;
    for i in 0..tent.t_values.len() {
        let level = tent.level(i);
        if level.values().iter().all(|&v| v == 0.0) {
            continue;
        }
        let t = tent.t_values[i];
        let a = smoothed_level(psi, tent, i, &xs)?;
        let balls = BallSweep::for_function(&level, 2);
        for (n, &cx) in xs.iter().enumerate() {
            g[n] += tent.dlnt[i] * a[n];
            let x = layout.center(cx);
            let mut maximal = 0.0;
            for e in rs.group() {
                maximal +=
                    hardy_littlewood_maximal(measure, &level, &e.matrix.apply(&x), &balls)?.value;
            }
            let rhs = t * t / (gap * gap) * maximal;
            let ratio = if rhs > 0.0 {
                a[n].abs() / rhs
            } else if a[n] == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(ratio);
        }
    }
    let l2 = xs
        .iter()
        .zip(&g)
        .map(|(&c, v)| v * v * layout.masses()[c])
        .sum::<f64>()
        .sqrt();
    let shape = r * r / (gap * gap) / measure.ball(&tent.y0, r)?.sqrt();
    report.pointwise_ratio = worst;
    report.l2_norm = l2;
    report.l2_bound_shape = shape;
    report.l2_ratio = l2 / shape;
    report.pass = worst.is_finite() && report.l2_ratio.is_finite();
    Ok(report)
}

/// [`check_lemma_bounds`] for every group element.
pub fn check_lemma_bounds_all(
    rs: &RootSystem,
    measure: &Measure,
    psi: &ProductTranslator,
    tent: &TentAtom,
) -> Result<Vec<LemmaReport>> {
    rs.group()
        .iter()
        .map(|e| check_lemma_bounds(rs, measure, psi, tent, e))
        .collect()
}

/// Radius of the smallest ball around y0 holding the nonzero cells.
pub fn support_radius(g: &WeightedGridFunction, y0: &[f64]) -> f64 {
    (0..g.len())
        .filter(|&c| g.values()[c] != 0.0)
        .map(|c| norm(&crate::linalg::sub(&g.center(c), y0)))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_dim(k: f64) -> (RootSystem, Measure) {
        let rs = RootSystem::a1_product(&[k]).unwrap();
        (rs.clone(), Measure::new(rs))
    }

    fn dipole(m: &Measure) -> WeightedGridFunction {
        let layout = WeightedGridFunction::new(m, &[-4.0], &[4.0], 9, |_| 0.0).unwrap();
        let (plus, w) = ball_indicator(&layout, &[3.0], 0.25);
        let (minus, _) = ball_indicator(&layout, &[-3.0], 0.25);
        plus.axpy(-1.0, &minus)
            .unwrap()
            .scaled(1.0 / (2f64.sqrt() * w))
    }

    #[test]
    fn validator_flags_each_condition() {
        let (_, m) = one_dim(1.0);
        let layout = WeightedGridFunction::new(&m, &[-2.0], &[2.0], 7, |_| 0.0).unwrap();
        let (ind, w) = ball_indicator(&layout, &[1.0], 0.5);
        let (left, wl) = ball_indicator(&layout, &[0.75], 0.25);
        let right = ind.axpy(-1.0, &left).unwrap();
        let wr = w - wl;
        let a = left.scaled(1.0 / wl).axpy(-1.0 / wr, &right).unwrap();
        let mu = atom_multiple(&m, &a, &Support::ball(&[1.0], 0.5), 2.0).unwrap();
        let atom = a.scaled(1.0 / mu);
        let rep = validate_cw_atom(&m, &atom, &Support::ball(&[1.0], 0.5), 2.0, 1e-9).unwrap();
        assert!(rep.pass, "{rep:?}");
        let rep = validate_cw_atom(&m, &atom, &Support::ball(&[0.5], 0.3), 2.0, 1e-9).unwrap();
        assert!(!rep.support_ok && rep.outside_mass > 0.0);
        let rep = validate_cw_atom(
            &m,
            &atom.scaled(1.5),
            &Support::ball(&[1.0], 0.5),
            2.0,
            1e-9,
        )
        .unwrap();
        assert!(rep.support_ok && !rep.size_ok);
        let rep = validate_cw_atom(
            &m,
            &left.scaled(0.01),
            &Support::ball(&[1.0], 0.5),
            2.0,
            1e-9,
        )
        .unwrap();
        assert!(!rep.cancellation_ok);
        assert!(validate_cw_atom(&m, &atom, &Support::ball(&[1.0], 0.5), 1.0, 1e-9).is_err());
    }

    #[test]
    fn dipole_chain() {
        let (rs, m) = one_dim(1.0);
        let g = dipole(&m);
        let d = chain_decompose(&rs, &m, &g, &[3.0], 0.25, 1000.0, 1e-10).unwrap();
        let Bookkeeping::Chain(book) = &d.bookkeeping else {
            panic!()
        };
        let e = &book.entries[1];
        assert_eq!(e.m_j, Some(24));
        assert_relative_eq!(book.chain_coefficient_sum, 1.0 / 24.0, max_relative = 1e-12);
        assert!(book.chain_coefficient_sum <= book.group_bound);
        let (lo, hi) = e.spacing.unwrap();
        assert!(lo >= 0.25 - 1e-12 && hi < 0.5);
        // the final atom cancels exactly: 24 chain pieces only
        assert_eq!(book.final_multiple, 0.0);
        assert_eq!(d.pieces.len(), 24);
        assert!(d.all_valid());
        assert!(
            d.reconstruction_error <= 1e-10 * (g.lp_norm(1.0) + d.coefficient_sum),
            "{}",
            d.reconstruction_error
        );
        // c_1 carries all of the negative mass onto B(3, 1/4)
        assert_relative_eq!(e.c_j, -g.lp_norm(1.0) / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn chain_rejects_bad_input() {
        let (rs, m) = one_dim(1.0);
        let g = dipole(&m);
        let err = chain_decompose(&rs, &m, &g, &[3.0], 0.25, 10.0, 1e-10).unwrap_err();
        assert!(err.to_string().contains("budget"), "{err}");
        let shifted = g.map(|z, v| if z[0] > 0.0 { 2.0 * v } else { v });
        assert!(chain_decompose(&rs, &m, &shifted, &[3.0], 0.25, 1000.0, 1e-10).is_err());
        assert!(chain_decompose(&rs, &m, &g, &[2.0], 0.25, 1000.0, 1e-10).is_err());
    }

    #[test]
    fn doubling_constants() {
        let rs = RootSystem::a1_product(&[0.0, 0.0]).unwrap();
        let flat = Measure::new(rs);
        let c = estimate_c1(&flat, &dyadic_cubes(&[0.0, 0.0], &[1.0, 1.0], 2)).unwrap();
        assert_relative_eq!(c, 1.1 * 4.0, max_relative = 1e-9);
        let (_, m) = one_dim(1.0);
        let c = estimate_c1(&m, &[(vec![-1.0], vec![1.0])]).unwrap();
        assert_relative_eq!(c, 1.1 * 2.0, max_relative = 1e-9);
        // far from the wall the weight is nearly constant
        let c = estimate_c1(&m, &[(vec![100.0], vec![100.01])]).unwrap();
        assert!((c / 1.1 - 2.0).abs() < 1e-3, "{c}");
    }

    fn cz_atom(
        m: &Measure,
        lower: f64,
        upper: f64,
        level: u32,
        f: impl Fn(f64) -> f64,
    ) -> WeightedGridFunction {
        let g = WeightedGridFunction::new(m, &[lower], &[upper], level, |z| f(z[0])).unwrap();
        let mean = g.integral() / g.total_mass();
        let g = g.map(|_, v| v - mean);
        let mu = g.lp_norm(2.0) * g.total_mass().sqrt();
        g.scaled(1.0 / mu)
    }

    fn check_cz(m: &Measure, a: &WeightedGridFunction) -> Decomposition {
        let d = cz_split(m, a, 20, 1e-9, None).unwrap();
        let Bookkeeping::Cz(book) = &d.bookkeeping else {
            panic!()
        };
        assert!(d.all_valid());
        assert!(book.max_good_multiple <= book.c2 * (1.0 + 1e-9));
        assert!(d.coefficient_sum <= book.coefficient_bound);
        assert!(d.residual_l1 < 1e-5, "{}", d.residual_l1);
        assert!(d.reconstruction_error < 1e-10, "{}", d.reconstruction_error);
        for r in &book.rounds {
            assert!(
                r.worst_piece_contraction <= 0.5 + 1e-12 && r.contraction <= 0.5 + 1e-12,
                "{r:?}"
            );
            assert!(r.max_cube_mass_ratio <= 1.0 + 1e-12, "{r:?}");
        }
        d
    }

    #[test]
    fn cz_classical_spike() {
        let (_, m) = one_dim(0.0);
        let a = cz_atom(
            &m,
            0.0,
            1.0,
            10,
            |x| if x < 1.0 / 512.0 { 1.0 } else { 0.0 },
        );
        let d = check_cz(&m, &a);
        assert!(d.pieces.len() > 1);
    }

    #[test]
    fn cz_near_wall() {
        let (_, m) = one_dim(1.0);
        let a = cz_atom(&m, 0.0, 1.0, 10, |x| {
            if x < 0.02 {
                1.0 / (x * x + 1e-6)
            } else {
                0.0
            }
        });
        check_cz(&m, &a);
    }

    #[test]
    fn cz_flat_atom_is_one_piece() {
        let (_, m) = one_dim(0.0);
        let a = cz_atom(&m, 0.0, 1.0, 8, |x| if x < 0.5 { 1.0 } else { -1.0 });
        let d = check_cz(&m, &a);
        assert_eq!(d.pieces.len(), 1);
        assert_relative_eq!(
            d.pieces[0].lambda * d.pieces[0].atom.values()[0],
            a.values()[0],
            max_relative = 1e-12
        );
    }

    #[test]
    fn cz_rejects_non_atoms() {
        let (_, m) = one_dim(0.0);
        let a = cz_atom(&m, 0.0, 1.0, 6, |x| x);
        assert!(cz_split(&m, &a.scaled(2.0), 5, 1e-9, None).is_err());
        assert!(cz_split(&m, &a.map(|_, v| v + 0.1), 5, 1e-9, None).is_err());
    }

    fn tent_setup() -> (RootSystem, Measure, TentAtom, ProductTranslator) {
        let (rs, m) = one_dim(1.0);
        // cells well below the smallest kernel support t / 4
        let layout = WeightedGridFunction::new(&m, &[-2.5], &[2.5], 12, |_| 0.0).unwrap();
        let tent = TentAtom::indicator(&m, &layout, &[2.0], 0.3, 0.1, 0.25, 4).unwrap();
        let psi = ProductTranslator::new(
            &[1.0],
            RadialFunction::mean_zero_bump(4, 3.0).unwrap(),
            1e-10,
        )
        .unwrap();
        (rs, m, tent, psi)
    }

    #[test]
    fn tent_atom_is_normalized_and_supported() {
        let (_, m, tent, _) = tent_setup();
        let rep = tent.check(&m, 1e-12).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_relative_eq!(rep.energy, rep.bound, max_relative = 1e-12);
        assert!(!tent.scaled(1.1).check(&m, 1e-12).unwrap().pass);
    }

    #[test]
    fn pi_psi_of_a_tent_atom() {
        let (_, m, tent, psi) = tent_setup();
        let g = pi_psi_apply(&psi, &tent).unwrap();
        assert!(g.lp_norm(1.0) > 0.0);
        assert!(
            g.integral().abs() <= 1e-6 * g.lp_norm(1.0),
            "{} {}",
            g.integral(),
            g.lp_norm(1.0)
        );
        // supported on the orbit of B(y0, r)
        for c in 0..g.len() {
            let z = g.center(c)[0];
            if g.values()[c] != 0.0 {
                assert!((z.abs() - 2.0).abs() <= 0.3 + 1e-12, "{z}");
            }
        }
        let size = g.lp_norm(2.0) * m.ball(&[2.0], 0.3).unwrap().sqrt();
        assert!(size.is_finite() && size < 10.0, "{size}");
        assert!(pi_psi_apply(
            &ProductTranslator::new(&[1.0], RadialFunction::Bump { m: 2 }, 1e-8).unwrap(),
            &tent
        )
        .is_err());
    }

    #[test]
    fn lemma_ratios_are_finite() {
        let (rs, m, tent, psi) = tent_setup();
        let reports = check_lemma_bounds_all(&rs, &m, &psi, &tent).unwrap();
        assert!(reports[0].skipped.is_some());
        let rep = &reports[1];
        assert!(rep.skipped.is_none() && rep.pass, "{rep:?}");
        assert!(rep.pointwise_ratio > 0.0 && rep.l2_ratio > 0.0);
    }

    #[test]
    fn lemma_check_skips_without_distant_images() {
        let (_, m) = one_dim(0.0);
        let rs = m.root_system().clone();
        let layout = WeightedGridFunction::new(&m, &[-1.0], &[1.0], 7, |_| 0.0).unwrap();
        let tent = TentAtom::indicator(&m, &layout, &[0.0], 0.3, 0.03, 0.25, 3).unwrap();
        let psi = ProductTranslator::new(
            &[0.0],
            RadialFunction::mean_zero_bump(4, 1.0).unwrap(),
            1e-10,
        )
        .unwrap();
        let reports = check_lemma_bounds_all(&rs, &m, &psi, &tent).unwrap();
        assert!(reports.iter().all(|r| r.skipped.is_some()));
    }
}
