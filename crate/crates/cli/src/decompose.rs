//! `decompose`: chain or Calderón-Zygmund decomposition of a grid function.

use std::fs;
use std::path::Path;

use serde_json::json;

use dunkl_hardy::atoms::{chain_decompose, cz_split, Bookkeeping, Decomposition};
use dunkl_hardy::grid::WeightedGridFunction;
use dunkl_hardy::measure::Measure;
use dunkl_hardy::root_system::RootSystem;

use crate::config::CampaignConfig;
use crate::{CliError, Mode};

fn summary(d: &Decomposition, input: &WeightedGridFunction) -> (bool, Vec<String>) {
    let invalid = d.pieces.iter().filter(|p| !p.report.pass).count();
    let scale = input.lp_norm(1.0) + d.coefficient_sum;
    let reconstruction_ok = d.reconstruction_error <= 1e-10 * scale.max(1.0);
    let mut lines = vec![
        format!("pieces {} (invalid {invalid})", d.pieces.len()),
        format!("coefficient sum {}", d.coefficient_sum),
        format!(
            "reconstruction error {:.3e} (ok {reconstruction_ok})",
            d.reconstruction_error
        ),
        format!("residual L1 {:.3e}", d.residual_l1),
    ];
    match &d.bookkeeping {
        Bookkeeping::Chain(b) => {
            lines.push("j,image,distance,in_chain,m_j,c_j,coefficient".into());
            for e in &b.entries {
                let image: Vec<String> = e.image.iter().map(|v| v.to_string()).collect();
                lines.push(format!(
                    "{},{},{},{},{},{},{}",
                    e.j,
                    image.join(";"),
                    e.distance,
                    e.in_chain,
                    e.m_j.map_or(String::new(), |m| m.to_string()),
                    e.c_j,
                    e.coefficient
                ));
            }
            lines.push(format!(
                "chain coefficient sum {} (bound |G|/4 = {})",
                b.chain_coefficient_sum, b.group_bound
            ));
        }
        Bookkeeping::Cz(b) => {
            lines.push(format!("C1 {} C2 {} epsilon {}", b.c1, b.c2, b.epsilon));
            lines.push(format!(
                "sum |lambda| {} <= 2 C2 = {}",
                d.coefficient_sum, b.coefficient_bound
            ));
            for r in &b.rounds {
                lines.push(format!(
                    "round {}: pieces {} mass {} -> {} contraction {}",
                    r.round, r.pieces, r.mass_in, r.mass_out, r.contraction
                ));
            }
        }
    }
    (invalid == 0 && reconstruction_ok, lines)
}

pub fn run(cfg: &CampaignConfig, mode: Mode, input: &Path) -> Result<u8, CliError> {
    let rs = RootSystem::build(&cfg.system).map_err(|e| CliError::library("system", e))?;
    let text = fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
    let g = WeightedGridFunction::from_csv(&text)
        .map_err(|e| CliError::data(format!("{}: {e}", input.display())))?;
    if g.dim() != rs.dim() {
        return Err(CliError::data(format!(
            "{}: grid dimension {} does not match the system's {}",
            input.display(),
            g.dim(),
            rs.dim()
        )));
    }
    let measure = Measure::new(rs.clone());
    let pre = |e| CliError::library("decompose", e);
    let d = match mode {
        Mode::Chain => {
            let p = &cfg.decompose;
            let y0 =
                p.y0.clone()
                    .ok_or_else(|| CliError::usage("chain mode needs --y0".into()))?;
            let r =
                p.r.ok_or_else(|| CliError::usage("chain mode needs --r".into()))?;
            if y0.len() != rs.dim() || !(r > 0.0) {
                return Err(CliError::usage(format!("bad base ball: y0 {y0:?}, r {r}")));
            }
            chain_decompose(
                &rs,
                &measure,
                &g,
                &y0,
                r,
                p.l2_budget.unwrap_or(1e3),
                cfg.tol,
            )
            .map_err(pre)?
        }
        Mode::Cz => cz_split(
            &measure,
            &g,
            cfg.decompose.rounds.unwrap_or(30),
            cfg.tol,
            None,
        )
        .map_err(pre)?,
    };
    let (ok, lines) = summary(&d, &g);
    for l in &lines {
        println!("{l}");
    }
    let atoms = cfg.out.join("atoms");
    fs::create_dir_all(&atoms).map_err(|e| CliError::io(&atoms, e))?;
    for (i, p) in d.pieces.iter().enumerate() {
        let path = atoms.join(format!("piece_{i:04}.csv"));
        fs::write(&path, p.atom.to_csv()).map_err(|e| CliError::io(&path, e))?;
    }
    let path = cfg.out.join("residual.csv");
    fs::write(&path, d.residual.to_csv()).map_err(|e| CliError::io(&path, e))?;
    let report = json!({
        "campaign": cfg,
        "input": input.display().to_string(),
        "decomposition": d.to_json(|i| format!("atoms/piece_{i:04}.csv")),
        "summary": lines,
        "pass": ok,
    });
    let path = cfg.out.join("decomposition.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(if ok { 0 } else { 1 })
}
