//! Numeric certificates for kernel inequalities: sweeps, candidate dilations,
//! refinement stability and a JSON-serializable report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::root_system::SystemSummary;

/// Dilations s tried for comparison kernels of the form G_{s t}.
pub const DILATIONS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];
/// Relative change of the sup allowed between a sweep and its refinement.
pub const STABILITY_TOL: f64 = 0.05;

/// JSON has no inf or NaN, so those travel as the strings "inf", "-inf", "nan".
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
        Null(()),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Null(()) => Ok(f64::NAN),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(serde::de::Error::custom(format!("not a number: {t}"))),
            },
        }
    }
}

/// Tensor sweep: x ranges over `x_axis`^N, y over `y_axis`^N, t over `t_values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub dim: usize,
    pub x_axis: Vec<f64>,
    pub y_axis: Vec<f64>,
    pub t_values: Vec<f64>,
}

impl Sweep {
    /// `n` equispaced lattice points on [lo, hi] for both x and y, and
    /// `nt` log-spaced times on [t_lo, t_hi].
    pub fn lattice(
        dim: usize,
        lo: f64,
        hi: f64,
        n: usize,
        t_lo: f64,
        t_hi: f64,
        nt: usize,
    ) -> Self {
        Self {
            dim,
            x_axis: linspace(lo, hi, n),
            y_axis: linspace(lo, hi, n),
            t_values: logspace(t_lo, t_hi, nt),
        }
    }

    /// Inserts midpoints (geometric ones in t), so every base point survives.
    pub fn refine(&self) -> Self {
        Self {
            dim: self.dim,
            x_axis: refine_axis(&self.x_axis, false),
            y_axis: refine_axis(&self.y_axis, false),
            t_values: refine_axis(&self.t_values, true),
        }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        lattice_points(&self.x_axis, self.dim)
    }

    pub fn y_points(&self) -> Vec<Vec<f64>> {
        lattice_points(&self.y_axis, self.dim)
    }

    pub fn len(&self) -> usize {
        self.x_axis.len().pow(self.dim as u32)
            * self.y_axis.len().pow(self.dim as u32)
            * self.t_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn t_min(&self) -> f64 {
        self.t_values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect()
}

fn refine_axis(axis: &[f64], geometric: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * axis.len());
    for w in axis.windows(2) {
        out.push(w[0]);
        out.push(if geometric {
            (w[0] * w[1]).sqrt()
        } else {
            0.5 * (w[0] + w[1])
        });
    }
    if let Some(last) = axis.last() {
        out.push(*last);
    }
    out
}

pub fn lattice_points(axis: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![]];
    for _ in 0..dim {
        pts = pts
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    pts
}

/// One evaluated ratio LHS / RHS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: f64,
    #[serde(with = "extended_f64")]
    pub ratio: f64,
}

/// Extremes of a ratio over a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    pub sup: f64,
    pub inf: f64,
    pub worst: SamplePoint,
    pub best: SamplePoint,
    /// Largest ratio with t >= 2 t_min; detects growth towards the small-t edge.
    pub sup_away_from_small_t: f64,
    pub count: usize,
    pub non_finite: usize,
}

/// Evaluates `ratio(x, y, t)` on every sweep point in parallel; results keep
/// the lattice order, so reductions are deterministic.
pub fn evaluate<F>(sweep: &Sweep, ratio: F) -> Result<Vec<SamplePoint>>
where
    F: Fn(&[f64], &[f64], f64) -> Result<f64> + Sync,
{
    let xs = sweep.points();
    let ys = sweep.y_points();
    let mut jobs = Vec::with_capacity(sweep.len());
    for x in &xs {
        for y in &ys {
            for &t in &sweep.t_values {
                jobs.push((x, y, t));
            }
        }
    }
    jobs.par_iter()
        .map(|(x, y, t)| {
            Ok(SamplePoint {
                x: (*x).clone(),
                y: (*y).clone(),
                t: *t,
                ratio: ratio(x, y, *t)?,
            })
        })
        .collect()
}

/// Like [`evaluate`] for `m` ratios per point; returns one sample list per
/// ratio index.
pub fn evaluate_many<F>(sweep: &Sweep, m: usize, ratios: F) -> Result<Vec<Vec<SamplePoint>>>
where
    F: Fn(&[f64], &[f64], f64) -> Result<Vec<f64>> + Sync,
{
    let xs = sweep.points();
    let ys = sweep.y_points();
    let mut jobs = Vec::with_capacity(sweep.len());
    for x in &xs {
        for y in &ys {
            for &t in &sweep.t_values {
                jobs.push((x, y, t));
            }
        }
    }
    let values: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|(x, y, t)| ratios(x, y, *t))
        .collect::<Result<_>>()?;
    Ok((0..m)
        .map(|i| {
            jobs.iter()
                .zip(&values)
                .map(|((x, y, t), v)| SamplePoint {
                    x: (*x).clone(),
                    y: (*y).clone(),
                    t: *t,
                    ratio: v[i],
                })
                .collect()
        })
        .collect())
}

/// Skips samples where `ratio` returns `None` (outside the estimate's domain).
pub fn evaluate_partial<F>(sweep: &Sweep, ratio: F) -> Result<Vec<SamplePoint>>
where
    F: Fn(&[f64], &[f64], f64) -> Result<Option<f64>> + Sync,
{
    let all = evaluate(sweep, |x, y, t| Ok(ratio(x, y, t)?.unwrap_or(f64::NAN)))?;
    Ok(all.into_iter().filter(|s| !s.ratio.is_nan()).collect())
}

pub fn stats(samples: &[SamplePoint]) -> Option<RatioStats> {
    let t_min = samples.iter().map(|s| s.t).fold(f64::INFINITY, f64::min);
    let finite: Vec<&SamplePoint> = samples.iter().filter(|s| s.ratio.is_finite()).collect();
    let non_finite = samples.len() - finite.len();
    let first_bad = samples.iter().find(|s| !s.ratio.is_finite());
    let worst = match first_bad {
        Some(bad) => bad,
        None => finite
            .iter()
            .copied()
            .max_by(|a, b| a.ratio.total_cmp(&b.ratio))?,
    };
    let best = finite
        .iter()
        .copied()
        .min_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .unwrap_or(worst);
    let away = finite
        .iter()
        .filter(|s| s.t >= 2.0 * t_min * (1.0 - 1e-12))
        .map(|s| s.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    Some(RatioStats {
        sup: if non_finite > 0 {
            f64::INFINITY
        } else {
            worst.ratio
        },
        inf: best.ratio,
        worst: worst.clone(),
        best: best.clone(),
        sup_away_from_small_t: away,
        count: samples.len(),
        non_finite,
    })
}

/// Outcome of one candidate dilation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    /// Dilation s of the comparison kernel G_{s t}; the constant c = 1/s.
    pub dilation: f64,
    #[serde(with = "extended_f64")]
    pub sup: f64,
    #[serde(with = "extended_f64")]
    pub refined_sup: f64,
    pub stable: bool,
    pub reason: Option<String>,
}

/// Certificate for one named inequality LHS <= C * RHS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateCertificate {
    pub estimate: String,
    pub system: SystemSummary,
    pub domain: Sweep,
    /// Reported exponent constant c (the comparison kernel is G_{t/c}).
    pub c: Option<f64>,
    /// Best constant C on the sweep; present iff the certificate passes.
    pub constant: Option<f64>,
    /// Smallest observed ratio.
    pub lower: Option<f64>,
    pub worst: Option<SamplePoint>,
    pub candidates: Vec<CandidateReport>,
    /// Per-t largest ratio, for plotting.
    pub profile: Vec<SamplePoint>,
    pub notes: Vec<String>,
    pub pass: bool,
}

impl EstimateCertificate {
    pub fn new(estimate: &str, system: SystemSummary, domain: Sweep) -> Self {
        Self {
            estimate: estimate.to_string(),
            system,
            domain,
            c: None,
            constant: None,
            lower: None,
            worst: None,
            candidates: Vec::new(),
            profile: Vec::new(),
            notes: Vec::new(),
            pass: false,
        }
    }

    /// Fills in the result from base and refined samples of a ratio without
    /// a dilation parameter.
    pub fn conclude(&mut self, base: &[SamplePoint], refined: &[SamplePoint]) {
        let report = judge(1.0, base, refined);
        self.finish(report, base, refined, None);
    }

    fn finish(
        &mut self,
        report: CandidateReport,
        base: &[SamplePoint],
        refined: &[SamplePoint],
        c: Option<f64>,
    ) {
        let all = stats(refined).or_else(|| stats(base));
        if let Some(st) = &all {
            self.lower = Some(st.inf);
            self.worst = Some(st.worst.clone());
        }
        self.profile = profile(if refined.is_empty() { base } else { refined });
        if report.stable {
            self.pass = true;
            self.constant = Some(report.sup.max(report.refined_sup));
            self.c = c;
        } else {
            self.pass = false;
            self.constant = None;
            if let Some(reason) = &report.reason {
                self.notes.push(reason.clone());
            }
        }
        self.candidates.push(report);
    }

    /// Judges the samples of each dilation in [`DILATIONS`] order (index i of
    /// `base` and `refined` belongs to `DILATIONS[i]`) and keeps the first
    /// stable one.
    pub fn conclude_with_dilations(
        &mut self,
        base: &[Vec<SamplePoint>],
        refined: &[Vec<SamplePoint>],
    ) {
        let mut reports = Vec::new();
        for (i, &s) in DILATIONS.iter().enumerate() {
            let report = judge(s, &base[i], &refined[i]);
            if report.stable {
                self.candidates = reports;
                self.finish(report, &base[i], &refined[i], Some(1.0 / s));
                return;
            }
            reports.push(report);
        }
        let last = reports.pop().expect("at least one dilation");
        self.candidates = reports;
        let i = DILATIONS.len() - 1;
        self.finish(last, &base[i], &refined[i], None);
        self.notes
            .push("no dilation in {1, 2, 4, 8, 16} gave a stable finite ratio".into());
    }
}

/// Stability rule: finite, refinement changes the sup by less than 5%, and the
/// sup is not attained by growth at the small-t edge of the sweep.
pub fn judge(dilation: f64, base: &[SamplePoint], refined: &[SamplePoint]) -> CandidateReport {
    let (Some(b), Some(r)) = (stats(base), stats(refined)) else {
        return CandidateReport {
            dilation,
            sup: f64::NAN,
            refined_sup: f64::NAN,
            stable: false,
            reason: Some("empty sweep".into()),
        };
    };
    let mut reason = None;
    if !(b.sup.is_finite() && r.sup.is_finite()) {
        reason = Some(format!(
            "non-finite ratio at x={:?} y={:?} t={}",
            r.worst.x, r.worst.y, r.worst.t
        ));
    } else if (r.sup - b.sup).abs() > STABILITY_TOL * b.sup.abs().max(f64::MIN_POSITIVE) {
        reason = Some(format!(
            "sup changed from {:.6e} to {:.6e} under refinement",
            b.sup, r.sup
        ));
    } else if r.sup_away_from_small_t.is_finite()
        && r.sup > (1.0 + STABILITY_TOL) * r.sup_away_from_small_t
    {
        reason = Some(format!(
            "ratio grows towards the smallest t ({:.6e} vs {:.6e} for t >= 2 t_min)",
            r.sup, r.sup_away_from_small_t
        ));
    }
    CandidateReport {
        dilation,
        sup: b.sup,
        refined_sup: r.sup,
        stable: reason.is_none(),
        reason,
    }
}

/// Largest ratio for each distinct t, sorted by t.
pub fn profile(samples: &[SamplePoint]) -> Vec<SamplePoint> {
    let mut by_t: Vec<SamplePoint> = Vec::new();
    for s in samples {
        match by_t.iter_mut().find(|p| p.t == s.t) {
            Some(p) => {
                if s.ratio > p.ratio || s.ratio.is_nan() {
                    *p = s.clone();
                }
            }
            None => by_t.push(s.clone()),
        }
    }
    by_t.sort_by(|a, b| a.t.total_cmp(&b.t));
    by_t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, ratio: f64) -> SamplePoint {
        SamplePoint {
            x: vec![0.0],
            y: vec![0.0],
            t,
            ratio,
        }
    }

    #[test]
    fn non_finite_values_survive_json() {
        let c = CandidateReport {
            dilation: 2.0,
            sup: f64::INFINITY,
            refined_sup: 3.5,
            stable: false,
            reason: None,
        };
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"inf\""));
        assert_eq!(serde_json::from_str::<CandidateReport>(&text).unwrap(), c);
        let p: SamplePoint =
            serde_json::from_str(r#"{"x":[],"y":[],"t":1.0,"ratio":null}"#).unwrap();
        assert!(p.ratio.is_nan());
    }

    #[test]
    fn refinement_keeps_base_points() {
        let s = Sweep::lattice(1, -6.0, 6.0, 17, 1.0 / 64.0, 16.0, 11);
        let r = s.refine();
        assert_eq!(r.x_axis.len(), 33);
        assert_eq!(r.t_values.len(), 21);
        for (i, x) in s.x_axis.iter().enumerate() {
            assert_eq!(r.x_axis[2 * i], *x);
        }
        assert!((r.t_values[1] - 2f64.powf(-5.5)).abs() < 1e-15);
    }

    #[test]
    fn lattice_enumerates_tensor_product() {
        let pts = lattice_points(&[0.0, 1.0, 2.0], 2);
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[5], vec![1.0, 2.0]);
    }

    #[test]
    fn judge_rejects_small_t_growth() {
        let base: Vec<_> = [0.25, 0.5, 1.0]
            .iter()
            .map(|&t| sample(t, 1.0 / t))
            .collect();
        let r = judge(1.0, &base, &base);
        assert!(!r.stable);
        let flat: Vec<_> = [0.25, 0.5, 1.0].iter().map(|&t| sample(t, 2.0)).collect();
        assert!(judge(1.0, &flat, &flat).stable);
    }

    #[test]
    fn judge_rejects_non_finite_and_unstable() {
        let a = vec![sample(1.0, 1.0), sample(2.0, f64::INFINITY)];
        assert!(!judge(1.0, &a, &a).stable);
        let b = vec![sample(1.0, 1.0), sample(2.0, 1.0)];
        let c = vec![sample(1.0, 1.0), sample(2.0, 1.2)];
        assert!(!judge(1.0, &b, &c).stable);
    }

    #[test]
    fn constant_present_iff_pass() {
        let sys = SystemSummary {
            name: "test".into(),
            dim: 1,
            roots: vec![],
            group_order: 1,
            gamma: 0.0,
            hom_dim: 1.0,
        };
        let sweep = Sweep::lattice(1, 0.0, 1.0, 2, 1.0, 2.0, 2);
        let mut ok = EstimateCertificate::new("flat", sys.clone(), sweep.clone());
        let flat = vec![sample(1.0, 1.0), sample(2.0, 1.0)];
        ok.conclude(&flat, &flat);
        assert!(ok.pass && ok.constant == Some(1.0));
        let mut bad = EstimateCertificate::new("inf", sys, sweep);
        let inf = vec![sample(1.0, f64::INFINITY)];
        bad.conclude(&inf, &inf);
        assert!(!bad.pass && bad.constant.is_none());
    }
}
