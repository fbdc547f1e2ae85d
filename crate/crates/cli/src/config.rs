//! Campaign configuration: a TOML file with sectioned tables, overridden by
//! command-line flags. The resolved configuration is echoed into every report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dunkl_hardy::certificate::Sweep;
use dunkl_hardy::root_system::SystemSpec;

use crate::CliError;

/// Contents of `--sweep-file`; every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub estimates: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub system: Option<SystemSpec>,
    pub sweep: Option<SweepConfig>,
    pub decompose: Option<DecomposeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// [lo, hi] for every coordinate of x and y
    pub x: [f64; 2],
    pub points: usize,
    /// [t_lo, t_hi], log-spaced
    pub t: [f64; 2],
    pub t_points: usize,
}

impl SweepConfig {
    pub fn sweep(&self, dim: usize) -> Sweep {
        Sweep::lattice(
            dim,
            self.x[0],
            self.x[1],
            self.points,
            self.t[0],
            self.t[1],
            self.t_points,
        )
    }

    fn check(&self) -> Result<(), CliError> {
        let ok = self.x[0] < self.x[1]
            && self.points >= 2
            && 0.0 < self.t[0]
            && self.t[0] < self.t[1]
            && self.t_points >= 2;
        if ok {
            Ok(())
        } else {
            Err(CliError::usage(format!(
                "empty or reversed sweep ranges: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeConfig {
    pub y0: Option<Vec<f64>>,
    pub r: Option<f64>,
    pub l2_budget: Option<f64>,
    pub rounds: Option<usize>,
}

/// Fully resolved campaign.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignConfig {
    pub system: SystemSpec,
    pub estimates: Vec<String>,
    pub sweep: Option<SweepConfig>,
    pub tol: f64,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub decompose: DecomposeConfig,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// a1xN, a2 or b2
    #[arg(long)]
    pub system: Option<String>,
    /// rank of a1xN
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// multiplicities, comma separated (one value is repeated over the axes of a1xN)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub k: Option<Vec<f64>>,
    /// estimate ids, comma separated
    #[arg(long, value_delimiter = ',')]
    pub estimates: Option<Vec<String>>,
    #[arg(long = "sweep-file")]
    pub sweep_file: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn named_system(name: &str, n: Option<usize>, k: Option<&[f64]>) -> Result<SystemSpec, CliError> {
    let k = k.unwrap_or(&[1.0]);
    match name {
        "a1xN" | "a1xn" | "a1" => {
            let n = n.unwrap_or(k.len());
            let k = match k.len() {
                1 => vec![k[0]; n],
                len if len == n => k.to_vec(),
                len => return Err(CliError::usage(format!("--k has {len} values for N = {n}"))),
            };
            if n == 0 {
                return Err(CliError::usage("--N must be positive".into()));
            }
            Ok(SystemSpec::A1Product { k })
        }
        "a2" => match k {
            [k] => Ok(SystemSpec::A2 { k: *k }),
            _ => Err(CliError::usage("a2 takes one multiplicity".into())),
        },
        "b2" => match k {
            [k] => Ok(SystemSpec::B2 {
                k_short: *k,
                k_long: *k,
            }),
            [s, l] => Ok(SystemSpec::B2 {
                k_short: *s,
                k_long: *l,
            }),
            _ => Err(CliError::usage("b2 takes one or two multiplicities".into())),
        },
        other => Err(CliError::usage(format!(
            "unknown system '{other}' (expected a1xN, a2 or b2)"
        ))),
    }
}

impl CampaignConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let file = match &args.sweep_file {
            Some(p) => read_file(p)?,
            None => FileConfig::default(),
        };
        let system = match (&args.system, &file.system) {
            (Some(name), _) => named_system(name, args.n, args.k.as_deref())?,
            (None, Some(spec)) => spec.clone(),
            (None, None) => named_system("a1xN", args.n.or(Some(1)), args.k.as_deref())?,
        };
        let tol = args.tol.or(file.tol).unwrap_or(1e-9);
        if !(tol > 0.0) {
            return Err(CliError::usage(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        if let Some(s) = &file.sweep {
            s.check()?;
        }
        let workers = args.workers.or(file.workers).unwrap_or(1);
        if workers == 0 {
            return Err(CliError::usage("--workers must be positive".into()));
        }
        Ok(Self {
            system,
            estimates: args
                .estimates
                .clone()
                .or(file.estimates)
                .unwrap_or_default(),
            sweep: file.sweep,
            tol,
            seed: args.seed.or(file.seed).unwrap_or(0),
            workers,
            out: args
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("out")),
            decompose: file.decompose.unwrap_or_default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_systems() {
        assert_eq!(
            named_system("a1xN", Some(2), Some(&[1.0])).unwrap(),
            SystemSpec::A1Product { k: vec![1.0, 1.0] }
        );
        assert_eq!(
            named_system("a1xN", None, Some(&[1.0, 0.5])).unwrap(),
            SystemSpec::A1Product { k: vec![1.0, 0.5] }
        );
        assert!(named_system("a1xN", Some(3), Some(&[1.0, 0.5])).is_err());
        assert_eq!(
            named_system("b2", None, Some(&[1.0, 2.0])).unwrap(),
            SystemSpec::B2 {
                k_short: 1.0,
                k_long: 2.0
            }
        );
        assert!(named_system("e8", None, None).is_err());
    }

    #[test]
    fn file_values_yield_to_flags() {
        let file: FileConfig = toml::from_str(
            r#"
            estimates = ["heat2"]
            seed = 5
            tol = 1e-6
            [system]
            kind = "a1_product"
            k = [0.5]
            [sweep]
            x = [-2.0, 2.0]
            points = 5
            t = [0.1, 1.0]
            t_points = 3
            "#,
        )
        .unwrap();
        assert_eq!(file.system, Some(SystemSpec::A1Product { k: vec![0.5] }));
        assert_eq!(file.sweep.unwrap().sweep(1).t_values.len(), 3);
        assert!(toml::from_str::<FileConfig>("colour = 3").is_err());
    }
}
