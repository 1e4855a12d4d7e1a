//! Job configuration and batch execution behind the `pvbs` binary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bounds::{
    diamond_probe_energy, gap_bounds, rectangle_probe_energy, slab_condition3_bound,
};
use crate::error::{PvbsError, Result};
use crate::groundstate::{
    kernel_pair, max_bond_residual, multispecies_ground_state, one_particle_ground_state,
};
use crate::lattice::{DiamondClass, DiamondRegion, LatticePoint, LatticeRegion};
use crate::model::{assemble_full, assemble_multispecies, Limits, ModelParams, Sector};
use crate::spectra::{finite_gap, kernel_check, one_particle_spectrum, GapMode, SolverOptions};
use crate::sparse::LinearOperator;
use crate::thermo::{
    classify_scenario, ltqo_f, ltqo_verify, one_particle_weight_in_window, FamilyKind, RegionFamily,
};

/// How a job names its lattice region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionSpec {
    Box { extent: Vec<usize> },
    CenteredBox { half_extent: Vec<usize> },
    Diamond {
        size: i64,
        #[serde(default)]
        odd_half: bool,
    },
    Sites { sites: Vec<Vec<i64>> },
    SiteFile { path: PathBuf },
}

impl RegionSpec {
    pub fn build(&self) -> Result<LatticeRegion> {
        match self {
            RegionSpec::Box { extent } => LatticeRegion::make_box(extent),
            RegionSpec::CenteredBox { half_extent } => LatticeRegion::make_centered_box(half_extent),
            RegionSpec::Diamond { size, odd_half } => {
                Ok(DiamondRegion::new(*size, *odd_half)?.region().clone())
            }
            RegionSpec::Sites { sites } => {
                let dim = sites.first().map_or(0, |s| s.len());
                LatticeRegion::from_sites(dim, sites.iter().map(|s| LatticePoint::new(s.clone())))
            }
            RegionSpec::SiteFile { path } => LatticeRegion::read_site_list(path),
        }
    }

    fn is_custom(&self) -> bool {
        matches!(self, RegionSpec::Sites { .. } | RegionSpec::SiteFile { .. })
    }
}

/// SHA-256 of the canonical site list of a region.
pub fn site_list_hash(region: &LatticeRegion) -> String {
    hex::encode(Sha256::digest(region.to_site_list().as_bytes()))
}

fn default_count() -> usize {
    1
}

fn default_tol() -> f64 {
    1e-9
}

fn default_trials() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeSpec {
    /// `z`-weighted trial state on each centred box `[-n_k, n_k]`.
    Rectangle {
        boxes: Vec<Vec<usize>>,
        params: ModelParams,
        z: Vec<f64>,
    },
    Diamond { sizes: Vec<i64>, lambda: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Site and edge counts of a region.
    Lattice { region: RegionSpec },
    /// Numerical kernel compared with the analytic ground states.
    Kernel {
        region: RegionSpec,
        params: ModelParams,
        /// Check only bond-wise annihilation of `ψ₁` in the one-particle
        /// sector; scales to large regions.
        #[serde(default)]
        one_particle_only: bool,
    },
    Gap {
        region: RegionSpec,
        params: ModelParams,
        #[serde(default = "default_gap_mode")]
        mode: GapMode,
    },
    /// Lowest eigenvalues of the one-particle matrix.
    Spectrum {
        region: RegionSpec,
        params: ModelParams,
        #[serde(default = "default_count")]
        count: usize,
    },
    Bounds { params: ModelParams },
    Probe { probe: ProbeSpec },
    Condition3 {
        params: ModelParams,
        cross_section: Vec<usize>,
        heights: Vec<usize>,
    },
    Ltqo {
        box_extent: Vec<usize>,
        window: Vec<Vec<i64>>,
        radii: Vec<usize>,
        params: ModelParams,
        #[serde(default = "default_trials")]
        trials: usize,
    },
    Scenario {
        family: FamilyKind,
        params: ModelParams,
        n_max: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// Diamond probe sweep with a power-law fit of the quotient.
    Scaling { sizes: Vec<i64>, lambda: f64 },
}

fn default_gap_mode() -> GapMode {
    GapMode::Full
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Lattice { .. } => "lattice",
            Command::Kernel { .. } => "kernel",
            Command::Gap { .. } => "gap",
            Command::Spectrum { .. } => "spectrum",
            Command::Bounds { .. } => "bounds",
            Command::Probe { .. } => "probe",
            Command::Condition3 { .. } => "condition3",
            Command::Ltqo { .. } => "ltqo",
            Command::Scenario { .. } => "scenario",
            Command::Scaling { .. } => "scaling",
        }
    }
}

/// A complete, replayable job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobConfig {
    #[serde(flatten)]
    pub command: Command,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub limits: Limits,
}

impl JobConfig {
    pub fn new(command: Command) -> Self {
        JobConfig {
            command,
            solver: SolverOptions::default(),
            limits: Limits::default(),
        }
    }

    /// Reads a job file. An artifact written by [`run`] is accepted too: its
    /// embedded `config` is replayed.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| PvbsError::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        let value = match value.get("config") {
            Some(inner) if value.get("result").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| PvbsError::Parse {
            line: 0,
            msg: e.to_string(),
        })
    }
}

/// What a job produced.
#[derive(Clone, Debug, PartialEq)]
pub struct JobOutput {
    /// `{"config": .., "site_list_sha256": .., "result": ..}`
    pub report: Value,
    /// Header and rows of the sweep table, when the command is a sweep.
    pub table: Option<(Vec<String>, Vec<Vec<String>>)>,
}

impl JobOutput {
    pub fn result(&self) -> &Value {
        &self.report["result"]
    }

    /// Writes `<name>.json` and, for sweeps, `<name>.csv` into `dir`.
    pub fn write(&self, dir: &Path, name: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let json_path = dir.join(format!("{name}.json"));
        let mut text = serde_json::to_string_pretty(&self.report).expect("report serializes");
        text.push('\n');
        fs::write(&json_path, text)?;
        let mut written = vec![json_path];
        if let Some((header, rows)) = &self.table {
            let csv_path = dir.join(format!("{name}.csv"));
            let mut buf = format!("# config: {}\n", self.report["config"]).into_bytes();
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(header).map_err(csv_error)?;
                for row in rows {
                    w.write_record(row).map_err(csv_error)?;
                }
                w.flush()?;
            }
            fs::write(&csv_path, buf)?;
            written.push(csv_path);
        }
        Ok(written)
    }
}

fn csv_error(e: csv::Error) -> PvbsError {
    PvbsError::Io(std::io::Error::other(e))
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `log value = log a + p log L`.
pub fn fit_power_law(series: &[(f64, f64)]) -> Result<PowerLawFit> {
    if series.len() < 3 {
        return Err(PvbsError::InvalidParams("power-law fit needs at least 3 points".into()));
    }
    if series.iter().any(|&(l, v)| !(l > 0.0 && v > 0.0)) {
        return Err(PvbsError::InvalidParams("power-law fit needs positive data".into()));
    }
    let pts: Vec<(f64, f64)> = series.iter().map(|&(l, v)| (l.ln(), v.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(PvbsError::InvalidParams("power-law fit needs distinct L values".into()));
    }
    let exponent = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(PowerLawFit {
        exponent,
        prefactor: (my - exponent * mx).exp(),
        r_squared,
    })
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

/// Runs one job.
pub fn run(config: &JobConfig) -> Result<JobOutput> {
    let opts = &config.solver;
    let limits = &config.limits;
    let mut hash = None;
    let mut table = None;
    let result = match &config.command {
        Command::Lattice { region } => {
            let r = region.build()?;
            hash = region.is_custom().then(|| site_list_hash(&r));
            let mut out = json!({
                "dim": r.dim(),
                "sites": r.len(),
                "edges": r.edges().len(),
                "connected": r.is_connected(),
                "box_bounds": r.box_bounds(),
            });
            if let RegionSpec::Diamond { size, odd_half } = region {
                let d = DiamondRegion::new(*size, *odd_half)?;
                let count = |c| d.sites_in(c).count();
                out["classes"] = json!({
                    "interior": count(DiamondClass::Interior),
                    "edge": count(DiamondClass::Edge),
                    "opposite": count(DiamondClass::Opposite),
                    "upper_side": count(DiamondClass::UpperSide),
                    "lower_side": count(DiamondClass::LowerSide),
                });
            }
            out
        }
        Command::Kernel {
            region,
            params,
            one_particle_only,
        } => {
            let r = region.build()?;
            hash = region.is_custom().then(|| site_list_hash(&r));
            run_kernel(&r, params, *one_particle_only, limits)?
        }
        Command::Gap { region, params, mode } => {
            let r = region.build()?;
            hash = region.is_custom().then(|| site_list_hash(&r));
            to_value(&finite_gap(&r, params, *mode, opts, limits)?)
        }
        Command::Spectrum {
            region,
            params,
            count,
        } => {
            let r = region.build()?;
            hash = region.is_custom().then(|| site_list_hash(&r));
            to_value(&one_particle_spectrum(&r, params, *count, opts)?)
        }
        Command::Bounds { params } => to_value(&gap_bounds(params, opts)?),
        Command::Probe { probe } => match probe {
            ProbeSpec::Rectangle { boxes, params, z } => {
                let mut rows = Vec::new();
                let mut out = Vec::new();
                for n in boxes {
                    let p = rectangle_probe_energy(n, params, z)?;
                    let label = n.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("x");
                    rows.push(vec![
                        label,
                        num(p.quotient),
                        num(p.closed_form),
                        num(p.bulk_term),
                        num(p.boundary_term),
                    ]);
                    out.push(json!({"half_extent": n, "probe": p}));
                }
                table = Some((
                    ["half_extent", "quotient", "closed_form", "bulk_term", "boundary_term"]
                        .map(String::from)
                        .to_vec(),
                    rows,
                ));
                Value::Array(out)
            }
            ProbeSpec::Diamond { sizes, lambda } => {
                let (value, t) = diamond_sweep(sizes, *lambda)?;
                table = Some(t);
                value
            }
        },
        Command::Condition3 {
            params,
            cross_section,
            heights,
        } => {
            let mut rows = Vec::new();
            let mut out = Vec::new();
            for &n in heights {
                let c = slab_condition3_bound(params, cross_section, n, limits)?;
                rows.push(vec![
                    n.to_string(),
                    num(c.numeric_sup),
                    num(c.analytic_bound),
                    num(c.epsilon_sq),
                ]);
                out.push(json!({"height": n, "bound": c}));
            }
            table = Some((
                ["height", "numeric_sup", "analytic_bound", "epsilon_sq"]
                    .map(String::from)
                    .to_vec(),
                rows,
            ));
            Value::Array(out)
        }
        Command::Ltqo {
            box_extent,
            window,
            radii,
            params,
            trials,
        } => {
            let b = LatticeRegion::make_box(box_extent)?;
            let x: Vec<LatticePoint> = window.iter().map(|c| LatticePoint::new(c.clone())).collect();
            let mut rows = Vec::new();
            let mut out = Vec::new();
            let mut f_values = Vec::new();
            for &l in radii {
                f_values.push(ltqo_f(&x, l, &b, params)?);
                for t in 0..*trials {
                    let seed = opts.seed.wrapping_add((l as u64) << 32).wrapping_add(t as u64);
                    let trial = ltqo_verify(&b, &x, l, params, seed)?;
                    rows.push(vec![
                        l.to_string(),
                        seed.to_string(),
                        num(trial.lhs),
                        num(trial.rhs),
                        (trial.lhs <= trial.rhs).to_string(),
                    ]);
                    out.push(trial);
                }
            }
            table = Some((
                ["radius", "seed", "lhs", "rhs", "holds"].map(String::from).to_vec(),
                rows,
            ));
            json!({
                "f": radii.iter().zip(&f_values).map(|(l, f)| json!({"radius": l, "f": f})).collect::<Vec<_>>(),
                "all_hold": out.iter().all(|t| t.lhs <= t.rhs),
                "trials": out,
            })
        }
        Command::Scenario {
            family,
            params,
            n_max,
            tol,
        } => {
            let fam = RegionFamily::new(*family, params.dim())?;
            let verdict = classify_scenario(&fam, params, *n_max, *tol)?;
            let last = fam.region(*n_max)?;
            let origin = LatticePoint::new(vec![0; params.dim()]);
            let weight = if last.contains(&origin) {
                Some(one_particle_weight_in_window(&last, params, &[origin])?)
            } else {
                None
            };
            json!({"verdict": verdict, "origin_weight": weight})
        }
        Command::Scaling { sizes, lambda } => {
            let (value, t) = diamond_sweep(sizes, *lambda)?;
            table = Some(t);
            value
        }
    };
    let report = json!({
        "config": to_value(config),
        "site_list_sha256": hash,
        "result": result,
    });
    Ok(JobOutput { report, table })
}

type Table = (Vec<String>, Vec<Vec<String>>);

fn diamond_sweep(sizes: &[i64], lambda: f64) -> Result<(Value, Table)> {
    let mut rows = Vec::new();
    let mut probes = Vec::new();
    for &size in sizes {
        let p = diamond_probe_energy(size, lambda)?;
        rows.push(vec![
            size.to_string(),
            num(p.quotient),
            num(p.closed_bound),
            p.holds.to_string(),
        ]);
        probes.push(p);
    }
    let series: Vec<(f64, f64)> = probes.iter().map(|p| (p.size as f64, p.quotient)).collect();
    let fit = if series.len() >= 3 { Some(fit_power_law(&series)?) } else { None };
    let value = json!({
        "probes": probes,
        "fit": fit,
        "all_hold": probes.iter().all(|p| p.holds),
    });
    let header = ["size", "quotient", "closed_bound", "holds"].map(String::from).to_vec();
    Ok((value, (header, rows)))
}

fn run_kernel(
    region: &LatticeRegion,
    params: &ModelParams,
    one_particle_only: bool,
    limits: &Limits,
) -> Result<Value> {
    if params.species > 1 {
        let h = assemble_multispecies(region, params, limits)?;
        let n = params.species;
        let mut states = Vec::new();
        for mask in 0u32..(1 << n) {
            let m: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).collect();
            if m.len() > region.len() {
                continue;
            }
            let s = multispecies_ground_state(region, params, &m)?;
            let mut y = vec![0.0; h.dim()];
            h.apply(&s.amplitudes, &mut y);
            let residual = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            states.push((m, s, residual));
        }
        let mut max_overlap: f64 = 0.0;
        for i in 0..states.len() {
            for j in 0..i {
                max_overlap = max_overlap.max(states[i].1.dot(&states[j].1).abs());
            }
        }
        return Ok(json!({
            "states": states.iter().map(|(m, _, r)| json!({"species": m, "residual": r})).collect::<Vec<_>>(),
            "max_residual": states.iter().map(|s| s.2).fold(0.0, f64::max),
            "max_overlap": max_overlap,
        }));
    }
    if one_particle_only {
        let psi = one_particle_ground_state(region, params, Sector::Particles(1))?;
        return Ok(json!({
            "sites": region.len(),
            "max_bond_residual": max_bond_residual(region, params, &psi)?,
        }));
    }
    let h = assemble_full(region, params, limits)?;
    let (a, b) = kernel_pair(region, params)?;
    let check = kernel_check(&h, &[a.amplitudes.clone(), b.amplitudes.clone()])?;
    Ok(json!({
        "check": check,
        "max_bond_residual": max_bond_residual(region, params, &b)?.max(max_bond_residual(region, params, &a)?),
        "overlap": a.dot(&b),
    }))
}
