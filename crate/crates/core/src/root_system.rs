//! Root systems normalized to |alpha|^2 = 2, their reflection groups, orbits
//! and orbit distances.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, dot, norm_sq, Matrix};

/// Orbit points closer than this are identified.
pub const ORBIT_TOL: f64 = 1e-10;
/// Largest reflection group we are willing to enumerate.
pub const MAX_GROUP_ORDER: usize = 10_000;

/// Named or explicit description of a root system with multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSpec {
    /// A_1 x ... x A_1 with one multiplicity per axis; N is `k.len()`.
    A1Product {
        k: Vec<f64>,
    },
    A2 {
        k: f64,
    },
    B2 {
        k_short: f64,
        k_long: f64,
    },
    /// Arbitrary roots (any nonzero length, rescaled to sqrt 2) with multiplicities.
    Explicit {
        roots: Vec<(Vec<f64>, f64)>,
    },
}

impl SystemSpec {
    pub fn name(&self) -> String {
        match self {
            SystemSpec::A1Product { k } => format!("A1^{}", k.len()),
            SystemSpec::A2 { .. } => "A2".to_string(),
            SystemSpec::B2 { .. } => "B2".to_string(),
            SystemSpec::Explicit { roots } => format!("explicit({} roots)", roots.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub vector: Vec<f64>,
    pub multiplicity: f64,
}

/// A group element with the length of a shortest word in reflections producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylElement {
    pub matrix: Matrix,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitGeometry {
    pub base: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// Fewest reflections carrying `base` to the matching entry of `points`.
    pub reflection_counts: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RootSystem {
    spec: SystemSpec,
    dim: usize,
    /// Roots with positive multiplicity.
    roots: Vec<Root>,
    /// Length of each input root divided by sqrt 2, in input order.
    scales: Vec<f64>,
    group: Vec<WeylElement>,
    gamma: f64,
    hom_dim: f64,
}

/// sigma_alpha x = x - 2 <x, alpha> / |alpha|^2 alpha.
pub fn reflect(alpha: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let a2 = norm_sq(alpha);
    if a2 == 0.0 || !a2.is_finite() {
        return Err(Error::InvalidRoot(format!("{alpha:?}")));
    }
    let c = 2.0 * dot(x, alpha) / a2;
    Ok(x.iter().zip(alpha).map(|(xi, ai)| xi - c * ai).collect())
}

fn unit(n: usize, j: usize, len: f64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[j] = len;
    v
}

fn raw_roots(spec: &SystemSpec) -> Result<(usize, Vec<(Vec<f64>, f64)>)> {
    let s2 = std::f64::consts::SQRT_2;
    Ok(match spec {
        SystemSpec::A1Product { k } => {
            if k.is_empty() {
                return Err(Error::Construction("A1 product needs N >= 1".into()));
            }
            let n = k.len();
            let mut roots = Vec::with_capacity(2 * n);
            for (j, &kj) in k.iter().enumerate() {
                roots.push((unit(n, j, s2), kj));
                roots.push((unit(n, j, -s2), kj));
            }
            (n, roots)
        }
        SystemSpec::A2 { k } => {
            let roots = (0..6)
                .map(|m| {
                    let th = (30.0 + 60.0 * m as f64).to_radians();
                    (vec![s2 * th.cos(), s2 * th.sin()], *k)
                })
                .collect();
            (2, roots)
        }
        SystemSpec::B2 { k_short, k_long } => {
            let mut roots = Vec::new();
            for j in 0..2 {
                roots.push((unit(2, j, 1.0), *k_short));
                roots.push((unit(2, j, -1.0), *k_short));
            }
            for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                roots.push((vec![a, b], *k_long));
            }
            (2, roots)
        }
        SystemSpec::Explicit { roots } => {
            let n = roots
                .first()
                .map(|r| r.0.len())
                .ok_or_else(|| Error::Construction("empty root list".into()))?;
            if n == 0 || roots.iter().any(|r| r.0.len() != n) {
                return Err(Error::Construction(
                    "roots of inconsistent dimension".into(),
                ));
            }
            (n, roots.clone())
        }
    })
}

fn find_root(roots: &[Root], v: &[f64]) -> Option<usize> {
    roots.iter().position(|r| dist(&r.vector, v) <= ORBIT_TOL)
}

impl RootSystem {
    pub fn build(spec: &SystemSpec) -> Result<Self> {
        let (dim, raw) = raw_roots(spec)?;
        let mut all = Vec::with_capacity(raw.len());
        let mut scales = Vec::with_capacity(raw.len());
        for (v, k) in raw {
            let n2 = norm_sq(&v);
            if n2 == 0.0 || !n2.is_finite() {
                return Err(Error::InvalidRoot(format!("{v:?}")));
            }
            if !(k >= 0.0) || !k.is_finite() {
                return Err(Error::Construction(format!(
                    "multiplicity {k} of root {v:?} is not a nonnegative number"
                )));
            }
            let s = (n2 / 2.0).sqrt();
            scales.push(s);
            let vector: Vec<f64> = v.iter().map(|x| x / s).collect();
            if find_root(&all, &vector).is_some() {
                return Err(Error::Construction(format!("duplicate root {vector:?}")));
            }
            all.push(Root {
                vector,
                multiplicity: k,
            });
        }
        for a in &all {
            if (norm_sq(&a.vector) - 2.0).abs() > 1e-12 {
                return Err(Error::Construction(format!(
                    "root {:?} is not normalized",
                    a.vector
                )));
            }
        }
        // closure and invariance of the multiplicity, on the full root set
        for a in &all {
            for b in &all {
                let image = reflect(&a.vector, &b.vector)?;
                match find_root(&all, &image) {
                    None => {
                        return Err(Error::Construction(format!(
                            "reflection of {:?} in {:?} leaves the root set",
                            b.vector, a.vector
                        )))
                    }
                    Some(i) if (all[i].multiplicity - b.multiplicity).abs() > 1e-12 => {
                        return Err(Error::Construction(format!(
                            "multiplicity is not invariant: k({:?}) = {} but k({:?}) = {}",
                            b.vector, b.multiplicity, all[i].vector, all[i].multiplicity
                        )))
                    }
                    _ => {}
                }
            }
        }
        let roots: Vec<Root> = all.into_iter().filter(|r| r.multiplicity > 0.0).collect();
        let group = generate_group(dim, &roots)?;
        let gamma = 0.5 * roots.iter().map(|r| r.multiplicity).sum::<f64>();
        Ok(Self {
            spec: spec.clone(),
            dim,
            roots,
            scales,
            group,
            gamma,
            hom_dim: dim as f64 + 2.0 * gamma,
        })
    }

    pub fn a1_product(k: &[f64]) -> Result<Self> {
        Self::build(&SystemSpec::A1Product { k: k.to_vec() })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn roots(&self) -> &[Root] {
        &self.roots
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn group(&self) -> &[WeylElement] {
        &self.group
    }

    pub fn group_order(&self) -> usize {
        self.group.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Homogeneous dimension N + 2 gamma.
    pub fn hom_dim(&self) -> f64 {
        self.hom_dim
    }

    /// Per-axis multiplicities when every root is +-sqrt2 e_j (rank one and
    /// A_1 products), `None` otherwise.
    pub fn product_multiplicities(&self) -> Option<Vec<f64>> {
        let mut k = vec![0.0; self.dim];
        for r in &self.roots {
            let axis = r
                .vector
                .iter()
                .position(|c| (c.abs() - std::f64::consts::SQRT_2).abs() < 1e-12)?;
            if r.vector
                .iter()
                .enumerate()
                .any(|(j, c)| j != axis && c.abs() > 1e-12)
            {
                return None;
            }
            k[axis] = r.multiplicity;
        }
        if let SystemSpec::A1Product { k: declared } = &self.spec {
            return Some(declared.clone());
        }
        Some(k)
    }

    /// Like [`Self::product_multiplicities`] but an error names the system.
    pub fn require_product(&self) -> Result<Vec<f64>> {
        self.product_multiplicities().ok_or_else(|| {
            Error::UnsupportedSystem(format!(
                "closed-form kernels are available for rank-one and A1-product systems only, not {}",
                self.spec.name()
            ))
        })
    }

    pub fn orbit(&self, x: &[f64]) -> OrbitGeometry {
        let mut points: Vec<Vec<f64>> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for g in &self.group {
            let p = g.matrix.apply(x);
            match points.iter().position(|q| dist(q, &p) <= ORBIT_TOL) {
                Some(i) => counts[i] = counts[i].min(g.length),
                None => {
                    points.push(p);
                    counts.push(g.length);
                }
            }
        }
        OrbitGeometry {
            base: x.to_vec(),
            points,
            reflection_counts: counts,
        }
    }

    /// d(x, y) = min over the group of |sigma(x) - y|.
    pub fn orbit_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        self.group
            .iter()
            .map(|g| dist(&g.matrix.apply(x), y))
            .fold(f64::INFINITY, f64::min)
    }

    /// Fewest reflections sigma with |sigma(y) - x| <= tol, or `None` when x is
    /// not in the orbit of y.
    pub fn min_reflection_count(&self, x: &[f64], y: &[f64], tol: f64) -> Option<usize> {
        self.group
            .iter()
            .filter(|g| dist(&g.matrix.apply(y), x) <= tol)
            .map(|g| g.length)
            .min()
    }

    /// Roots taken one per +- pair.
    pub fn positive_roots(&self) -> Vec<&Root> {
        let mut out: Vec<&Root> = Vec::new();
        for r in &self.roots {
            let neg: Vec<f64> = r.vector.iter().map(|c| -c).collect();
            if !out.iter().any(|p| dist(&p.vector, &neg) <= ORBIT_TOL) {
                out.push(r);
            }
        }
        out
    }

    pub fn describe(&self) -> SystemSummary {
        SystemSummary {
            name: self.spec.name(),
            dim: self.dim,
            roots: self
                .roots
                .iter()
                .map(|r| (r.vector.clone(), r.multiplicity))
                .collect(),
            group_order: self.group.len(),
            gamma: self.gamma,
            hom_dim: self.hom_dim,
        }
    }
}

/// Flat serializable view of a root system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub name: String,
    pub dim: usize,
    pub roots: Vec<(Vec<f64>, f64)>,
    pub group_order: usize,
    pub gamma: f64,
    pub hom_dim: f64,
}

fn generate_group(dim: usize, roots: &[Root]) -> Result<Vec<WeylElement>> {
    let generators: Vec<Matrix> = roots
        .iter()
        .map(|r| Matrix::reflection(&r.vector))
        .collect();
    let mut elements = vec![WeylElement {
        matrix: Matrix::identity(dim),
        length: 0,
    }];
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let (current, length) = (elements[i].matrix.clone(), elements[i].length);
        for s in &generators {
            let next = s.mul(&current);
            if elements
                .iter()
                .any(|e| e.matrix.max_abs_diff(&next) <= ORBIT_TOL)
            {
                continue;
            }
            if elements.len() >= MAX_GROUP_ORDER {
                return Err(Error::Construction(format!(
                    "reflection group exceeds {MAX_GROUP_ORDER} elements"
                )));
            }
            elements.push(WeylElement {
                matrix: next,
                length: length + 1,
            });
            queue.push_back(elements.len() - 1);
        }
    }
    Ok(elements)
}
