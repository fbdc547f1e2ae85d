//! `verify`: certificates for heat, Poisson and measure estimates.

use std::fs;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use dunkl_hardy::certificate::{logspace, EstimateCertificate, Sweep};
use dunkl_hardy::dunkl::RadialFunction;
use dunkl_hardy::heat::{self, HeatEstimate, HeatKernel};
use dunkl_hardy::measure::Measure;
use dunkl_hardy::poisson::{self, PoissonEstimate, PoissonKernel};
use dunkl_hardy::root_system::RootSystem;

use crate::config::CampaignConfig;
use crate::report::{ratio_rows, write_ratios};
use crate::CliError;

/// Estimate ids that are not single heat or Poisson inequalities.
const EXTRA: [&str; 4] = ["measure", "product_sharpness", "compact", "identities"];

enum Job {
    Heat(HeatEstimate),
    Poisson(PoissonEstimate),
    Measure,
    Sharpness,
    Compact,
    Identities,
}

fn parse(id: &str) -> Result<Job, CliError> {
    if let Ok(e) = id.parse::<HeatEstimate>() {
        return Ok(Job::Heat(e));
    }
    if let Ok(e) = id.parse::<PoissonEstimate>() {
        return Ok(Job::Poisson(e));
    }
    match id {
        "measure" => Ok(Job::Measure),
        "product_sharpness" => Ok(Job::Sharpness),
        "compact" => Ok(Job::Compact),
        "identities" => Ok(Job::Identities),
        _ => {
            let mut known: Vec<&str> = HeatEstimate::ALL.iter().map(|e| e.name()).collect();
            known.extend(PoissonEstimate::ALL.iter().map(|e| e.name()));
            known.extend(EXTRA);
            Err(CliError::usage(format!(
                "unknown estimate '{id}'; known: {}",
                known.join(", ")
            )))
        }
    }
}

fn needs_kernel(job: &Job) -> bool {
    !matches!(job, Job::Measure)
}

fn certify(
    job: &Job,
    id: &str,
    rs: &RootSystem,
    cfg: &CampaignConfig,
) -> Result<Vec<EstimateCertificate>, CliError> {
    let dim = rs.dim();
    let lib = |e| CliError::library(&format!("estimate {id}"), e);
    let sweep_or = |default: Sweep| cfg.sweep.as_ref().map_or(default, |s| s.sweep(dim));
    Ok(match job {
        Job::Heat(e) => {
            let h = HeatKernel::new(rs.clone()).map_err(lib)?;
            vec![h
                .certify(*e, &sweep_or(heat::default_sweep(dim)))
                .map_err(lib)?]
        }
        Job::Poisson(e) => {
            let p = PoissonKernel::new(rs.clone())
                .map_err(lib)?
                .with_tolerance(cfg.tol);
            vec![p
                .certify(*e, &sweep_or(poisson::default_sweep(dim)))
                .map_err(lib)?]
        }
        Job::Measure => {
            let m = Measure::new(rs.clone());
            m.certify_facts(&sweep_or(Sweep::lattice(dim, -3.0, 3.0, 7, 0.1, 10.0, 7)))
                .map_err(lib)?
        }
        Job::Sharpness => {
            let h = HeatKernel::new(rs.clone()).map_err(lib)?;
            let ts = match &cfg.sweep {
                Some(s) => logspace(s.t[0], s.t[1], s.t_points),
                None => logspace(2f64.powi(-10), 1.0, 11),
            };
            let s = h
                .certify_product_sharpness(&vec![-1.0; dim], &vec![1.0; dim], &ts, 4.0)
                .map_err(lib)?;
            vec![s.certificate]
        }
        Job::Compact => {
            let h = HeatKernel::new(rs.clone()).map_err(lib)?;
            let sweep = sweep_or(Sweep::lattice(dim, -3.0, 3.0, 13, 0.1, 2.0, 5));
            vec![h
                .certify_radial_translation_bound(
                    &RadialFunction::Bump { m: 8 },
                    &sweep,
                    0.05,
                    1e-6,
                )
                .map_err(lib)?]
        }
        Job::Identities => {
            let h = HeatKernel::new(rs.clone()).map_err(lib)?;
            vec![identities(&h, cfg.seed).map_err(lib)?]
        }
    })
}

/// Residuals of the T_j, T_j^2 and heat-equation identities at 50 seeded
/// spot points away from the walls.
fn identities(h: &HeatKernel, seed: u64) -> dunkl_hardy::error::Result<EstimateCertificate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = h.root_system().dim();
    let (mut tj, mut tj2, mut dt) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let mut draw = || {
            let v: f64 = rng.gen_range(0.2..3.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        };
        let x: Vec<f64> = (0..n).map(|_| draw()).collect();
        let y: Vec<f64> = (0..n).map(|_| draw()).collect();
        let t = rng.gen_range(0.2..2.0);
        for j in 0..n {
            tj = tj.max(h.check_tj_identity(t, &x, &y, j)?);
            tj2 = tj2.max(h.check_tj2_identity(t, &x, &y, j)?);
        }
        dt = dt.max(h.check_dt_identity(t, &x, &y)?);
    }
    let domain = Sweep {
        dim: n,
        x_axis: Vec::new(),
        y_axis: Vec::new(),
        t_values: Vec::new(),
    };
    let mut cert = EstimateCertificate::new("identities", h.root_system().describe(), domain);
    cert.pass = tj <= 1e-7 && tj2 <= 1e-5 && dt <= 1e-6;
    cert.constant = cert.pass.then_some(tj.max(tj2).max(dt));
    cert.notes.push(format!(
        "50 spot points, seed {seed}: T_j {tj:.3e} (1e-7), T_j^2 {tj2:.3e} (1e-5), heat equation {dt:.3e} (1e-6)"
    ));
    Ok(cert)
}

pub fn run(cfg: &CampaignConfig) -> Result<u8, CliError> {
    if cfg.estimates.is_empty() {
        return Err(CliError::usage(
            "no estimates requested (use --estimates)".into(),
        ));
    }
    let jobs: Vec<(String, Job)> = cfg
        .estimates
        .iter()
        .map(|id| Ok((id.clone(), parse(id)?)))
        .collect::<Result<_, CliError>>()?;
    let rs = RootSystem::build(&cfg.system).map_err(|e| CliError::library("system", e))?;
    // scope check before any work
    for (id, job) in &jobs {
        if needs_kernel(job) {
            rs.require_product()
                .map_err(|e| CliError::library(&format!("estimate {id}"), e))?;
        }
    }
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let path = cfg.out.join("certificates.jsonl");
    let mut file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut certs = Vec::new();
    for (id, job) in &jobs {
        for cert in certify(job, id, &rs, cfg)? {
            let verdict = if cert.pass { "PASS" } else { "FAIL" };
            println!(
                "{verdict} {} C={:?} c={:?}",
                cert.estimate, cert.constant, cert.c
            );
            let line = json!({ "campaign": cfg, "certificate": cert });
            writeln!(file, "{line}").map_err(|e| CliError::io(&path, e))?;
            certs.push(cert);
        }
    }
    write_ratios(&cfg.out.join("ratios.csv"), ratio_rows(&certs))?;
    Ok(if certs.iter().all(|c| c.pass) { 0 } else { 1 })
}
