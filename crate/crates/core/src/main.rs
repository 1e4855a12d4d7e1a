use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pvbs::cli::{run, Command, JobConfig, ProbeSpec, RegionSpec};
use pvbs::model::ModelParams;
use pvbs::spectra::GapMode;
use pvbs::{PvbsError, Result};

/// Exact diagonalization laboratory for PVBS spin models.
#[derive(Parser, Debug)]
#[command(name = "pvbs", version)]
struct Cli {
    /// JSON job file, or an artifact from a previous run to replay.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for JSON/CSV artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for large matrix-vector products.
    #[arg(long, default_value_t = 1, global = true)]
    threads: usize,

    /// Relative residual tolerance of the eigensolver.
    #[arg(long, global = true)]
    tol: Option<f64>,

    #[command(subcommand)]
    job: Option<Job>,
}

#[derive(Args, Debug, Clone)]
struct RegionArgs {
    /// Box `[0,N_1] x ... x [0,N_d]`, e.g. `2,1`.
    #[arg(long = "box", value_delimiter = ',', group = "region")]
    extent: Option<Vec<usize>>,
    /// Centred box `[-N_1,N_1] x ...`.
    #[arg(long, value_delimiter = ',', group = "region")]
    centered_box: Option<Vec<usize>>,
    /// Diamond `D_L`.
    #[arg(long, group = "region")]
    diamond: Option<i64>,
    /// Site-list file.
    #[arg(long, group = "region")]
    sites: Option<PathBuf>,
}

impl RegionArgs {
    fn spec(&self) -> Result<RegionSpec> {
        if let Some(extent) = &self.extent {
            Ok(RegionSpec::Box { extent: extent.clone() })
        } else if let Some(half_extent) = &self.centered_box {
            Ok(RegionSpec::CenteredBox { half_extent: half_extent.clone() })
        } else if let Some(size) = self.diamond {
            Ok(RegionSpec::Diamond { size, odd_half: false })
        } else if let Some(path) = &self.sites {
            Ok(RegionSpec::SiteFile { path: path.clone() })
        } else {
            Err(PvbsError::InvalidRegion(
                "one of --box, --centered-box, --diamond, --sites is required".into(),
            ))
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ParamArgs {
    /// Couplings `λ_1,...,λ_d`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required_unless_present = "species_lambda")]
    lambda: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    delta: f64,
    /// Multi-species couplings, one species per `;`-separated group.
    #[arg(long)]
    species_lambda: Option<String>,
}

impl ParamArgs {
    fn params(&self) -> Result<ModelParams> {
        if let Some(text) = &self.species_lambda {
            let rows = parse_groups::<f64>(text)?;
            return Ok(ModelParams::multispecies(rows).with_delta(self.delta));
        }
        Ok(ModelParams::new(self.lambda.clone().unwrap_or_default()).with_delta(self.delta))
    }
}

fn parse_groups<T: std::str::FromStr>(text: &str) -> Result<Vec<Vec<T>>> {
    text.split(';')
        .map(|g| {
            g.split(',')
                .map(|v| {
                    v.trim().parse().map_err(|_| PvbsError::Parse {
                        line: 0,
                        msg: format!("bad number `{v}` in `{text}`"),
                    })
                })
                .collect()
        })
        .collect()
}

#[derive(Subcommand, Debug)]
enum Job {
    Lattice {
        #[command(flatten)]
        region: RegionArgs,
    },
    Kernel {
        #[command(flatten)]
        region: RegionArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        one_particle_only: bool,
    },
    Gap {
        #[command(flatten)]
        region: RegionArgs,
        #[command(flatten)]
        params: ParamArgs,
        /// Restrict to particle sectors `1..=N` instead of the full space.
        #[arg(long)]
        sectors: Option<usize>,
    },
    Spectrum {
        #[command(flatten)]
        region: RegionArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    Bounds {
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Rectangle probe on centred boxes (`--boxes 5,5;10,10`) or diamond probe (`--diamonds`).
    Probe {
        #[arg(long, conflicts_with = "diamonds")]
        boxes: Option<String>,
        #[arg(long, value_delimiter = ',')]
        z: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        diamonds: Option<Vec<i64>>,
        #[command(flatten)]
        params: ParamArgs,
    },
    Condition3 {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_delimiter = ',', default_value = "")]
        cross_section: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        heights: Vec<usize>,
    },
    Ltqo {
        #[arg(long = "box", value_delimiter = ',', required = true)]
        extent: Vec<usize>,
        /// Window sites, e.g. `3,3;3,4`.
        #[arg(long)]
        window: String,
        #[arg(long, value_delimiter = ',', required = true)]
        radii: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[command(flatten)]
        params: ParamArgs,
    },
    Scenario {
        /// `boxes_to_zd`, `boxes_to_quadrant` or `diamonds_to_half_plane`.
        #[arg(long)]
        family: String,
        #[arg(long)]
        n_max: usize,
        #[arg(long, default_value_t = 1e-9)]
        c_tol: f64,
        #[command(flatten)]
        params: ParamArgs,
    },
    Scaling {
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<i64>,
        #[arg(long)]
        lambda: f64,
    },
}

fn to_command(job: Job) -> Result<Command> {
    Ok(match job {
        Job::Lattice { region } => Command::Lattice { region: region.spec()? },
        Job::Kernel {
            region,
            params,
            one_particle_only,
        } => Command::Kernel {
            region: region.spec()?,
            params: params.params()?,
            one_particle_only,
        },
        Job::Gap {
            region,
            params,
            sectors,
        } => Command::Gap {
            region: region.spec()?,
            params: params.params()?,
            mode: sectors.map_or(GapMode::Full, |max_n| GapMode::Sectors { max_n }),
        },
        Job::Spectrum {
            region,
            params,
            count,
        } => Command::Spectrum {
            region: region.spec()?,
            params: params.params()?,
            count,
        },
        Job::Bounds { params } => Command::Bounds { params: params.params()? },
        Job::Probe {
            boxes,
            z,
            diamonds,
            params,
        } => {
            let params = params.params()?;
            if let Some(sizes) = diamonds {
                let lambda = *params.lambda.first().ok_or_else(|| {
                    PvbsError::InvalidParams("--lambda is required".into())
                })?;
                Command::Probe { probe: ProbeSpec::Diamond { sizes, lambda } }
            } else {
                let boxes = parse_groups::<usize>(boxes.as_deref().ok_or_else(|| {
                    PvbsError::InvalidParams("--boxes or --diamonds is required".into())
                })?)?;
                let z = z.unwrap_or_else(|| vec![1.0; params.dim()]);
                Command::Probe { probe: ProbeSpec::Rectangle { boxes, params, z } }
            }
        }
        Job::Condition3 {
            params,
            cross_section,
            heights,
        } => Command::Condition3 {
            params: params.params()?,
            cross_section: cross_section
                .iter()
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|_| PvbsError::Parse {
                        line: 0,
                        msg: format!("bad cross-section entry `{s}`"),
                    })
                })
                .collect::<Result<_>>()?,
            heights,
        },
        Job::Ltqo {
            extent,
            window,
            radii,
            trials,
            params,
        } => Command::Ltqo {
            box_extent: extent,
            window: parse_groups(&window)?,
            radii,
            params: params.params()?,
            trials,
        },
        Job::Scenario {
            family,
            n_max,
            c_tol,
            params,
        } => Command::Scenario {
            family: serde_json::from_value(serde_json::Value::String(family.clone())).map_err(
                |_| PvbsError::InvalidParams(format!("unknown family `{family}`")),
            )?,
            params: params.params()?,
            n_max,
            tol: c_tol,
        },
        Job::Scaling { sizes, lambda } => Command::Scaling { sizes, lambda },
    })
}

fn execute(cli: Cli) -> Result<()> {
    let mut config = match (cli.config, cli.job) {
        (Some(_), Some(_)) => {
            return Err(PvbsError::InvalidParams(
                "--config and an inline command are mutually exclusive".into(),
            ))
        }
        (Some(path), None) => JobConfig::load(path)?,
        (None, Some(job)) => JobConfig::new(to_command(job)?),
        (None, None) => {
            return Err(PvbsError::InvalidParams(
                "give --config or a command; see --help".into(),
            ))
        }
    };
    if let Some(seed) = cli.seed {
        config.solver.seed = seed;
    }
    if let Some(tol) = cli.tol {
        config.solver.tol = tol;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
        .map_err(|e| PvbsError::InvalidParams(e.to_string()))?;
    log::info!("running {}", config.command.name());
    let output = run(&config)?;
    if let Some(dir) = cli.out {
        for path in output.write(&dir, config.command.name())? {
            log::info!("wrote {}", path.display());
        }
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&output.report).expect("report serializes")
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pvbs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
