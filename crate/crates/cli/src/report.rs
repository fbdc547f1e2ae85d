//! `report`: merge certificate files into per-estimate constants and
//! ratio-vs-parameter curves with a deterministic row order.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use dunkl_hardy::certificate::EstimateCertificate;

use crate::config::CampaignConfig;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub estimate: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: f64,
    pub ratio: f64,
}

fn cmp_vec(a: &[f64], b: &[f64]) -> Ordering {
    for (u, v) in a.iter().zip(b) {
        match u.total_cmp(v) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

fn row_order(a: &RatioRow, b: &RatioRow) -> Ordering {
    a.estimate
        .cmp(&b.estimate)
        .then_with(|| cmp_vec(&a.x, &b.x))
        .then_with(|| cmp_vec(&a.y, &b.y))
        .then_with(|| a.t.total_cmp(&b.t))
        .then_with(|| a.ratio.total_cmp(&b.ratio))
}

pub fn ratio_rows(certs: &[EstimateCertificate]) -> Vec<RatioRow> {
    certs
        .iter()
        .flat_map(|c| {
            c.profile.iter().map(|s| RatioRow {
                estimate: c.estimate.clone(),
                x: s.x.clone(),
                y: s.y.clone(),
                t: s.t,
                ratio: s.ratio,
            })
        })
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|a| a.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

pub fn write_ratios(path: &Path, mut rows: Vec<RatioRow>) -> Result<(), CliError> {
    rows.sort_by(row_order);
    let mut out = String::from("estimate,x,y,t,ratio\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.estimate,
            join(&r.x),
            join(&r.y),
            r.t,
            r.ratio
        ));
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |a| a.to_string())
}

fn write_constants(path: &Path, certs: &[EstimateCertificate]) -> Result<(), CliError> {
    let mut rows: Vec<String> = certs
        .iter()
        .map(|c| {
            format!(
                "{},{},{},{},{},{}",
                c.estimate,
                c.system.name,
                opt(c.c),
                opt(c.constant),
                opt(c.lower),
                c.pass
            )
        })
        .collect();
    rows.sort();
    let mut out = String::from("estimate,system,c,constant,lower,pass\n");
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

/// Certificates of a JSON-lines file; a line is either a certificate or an
/// object holding one under "certificate".
pub fn read_certificates(path: &Path) -> Result<Vec<EstimateCertificate>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |e: serde_json::Error| {
            CliError::data(format!("{} line {}: {e}", path.display(), i + 1))
        };
        let mut v: serde_json::Value = serde_json::from_str(line).map_err(bad)?;
        let cert = match v.get_mut("certificate") {
            Some(c) => c.take(),
            None => v,
        };
        out.push(serde_json::from_value(cert).map_err(bad)?);
    }
    Ok(out)
}

pub fn run(cfg: &CampaignConfig, files: &[PathBuf]) -> Result<u8, CliError> {
    let mut certs = Vec::new();
    for f in files {
        certs.extend(read_certificates(f)?);
    }
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    write_constants(&cfg.out.join("constants.csv"), &certs)?;
    write_ratios(&cfg.out.join("ratios.csv"), ratio_rows(&certs))?;
    println!(
        "merged {} certificates from {} files",
        certs.len(),
        files.len()
    );
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(e: &str, x: f64, t: f64, ratio: f64) -> RatioRow {
        RatioRow {
            estimate: e.into(),
            x: vec![x],
            y: vec![0.0],
            t,
            ratio,
        }
    }

    #[test]
    fn rows_sort_by_estimate_then_coordinates() {
        let mut rows = vec![
            row("b", 0.0, 1.0, 1.0),
            row("a", 1.0, 1.0, 1.0),
            row("a", -1.0, 2.0, 3.0),
            row("a", -1.0, 1.0, 2.0),
        ];
        rows.sort_by(row_order);
        let order: Vec<(String, f64, f64)> = rows
            .iter()
            .map(|r| (r.estimate.clone(), r.x[0], r.t))
            .collect();
        assert_eq!(
            order,
            vec![
                ("a".into(), -1.0, 1.0),
                ("a".into(), -1.0, 2.0),
                ("a".into(), 1.0, 1.0),
                ("b".into(), 0.0, 1.0)
            ]
        );
    }
}
