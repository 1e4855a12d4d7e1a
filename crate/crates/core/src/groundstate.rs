//! Analytic zero-energy states and the normalisation `C(Λ) = Σ_x λ^{2x}`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{PvbsError, Result};
use crate::lattice::{LatticePoint, LatticeRegion};
use crate::model::{bond_matrix, multispecies_bond_matrix, ModelParams, Sector, SectorBasis};

/// Largest `log C` we are willing to exponentiate.
const MAX_LOG: f64 = 700.0;

/// `log λ^{2x} = Σ_k 2 x_k log λ_k`
pub fn log_weight(p: &LatticePoint, lambda: &[f64]) -> f64 {
    p.coords()
        .iter()
        .zip(lambda)
        .map(|(&x, l)| 2.0 * x as f64 * l.ln())
        .sum()
}

/// `log Σ_{x∈sites} λ^{2x}`, evaluated relative to the largest term.
pub fn log_normalization<'a, I>(sites: I, lambda: &[f64]) -> f64
where
    I: IntoIterator<Item = &'a LatticePoint>,
{
    let logs: Vec<f64> = sites.into_iter().map(|p| log_weight(p, lambda)).collect();
    log_sum_exp(&logs)
}

pub(crate) fn log_sum_exp(logs: &[f64]) -> f64 {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + logs.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// `c(λ, m) = Σ_{i=0}^{m} λ^{2i}`
pub fn geometric_sum(lambda: f64, m: usize) -> f64 {
    geometric_range_sum(lambda, 0, m as i64)
}

/// `Σ_{i=lo}^{hi} λ^{2i}`
pub fn geometric_range_sum(lambda: f64, lo: i64, hi: i64) -> f64 {
    (lo..=hi).map(|i| lambda.powi(2 * i as i32)).sum()
}

/// `C(Λ)` together with its per-direction factors when `Λ` is a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTable {
    pub value: f64,
    pub log_value: f64,
    /// `Σ_{i=lo_k}^{hi_k} λ_k^{2i}` for each axis of a box region.
    pub box_factors: Option<Vec<f64>>,
}

pub fn normalization_table(region: &LatticeRegion, params: &ModelParams) -> Result<NormalizationTable> {
    params.validate_for(region)?;
    let log_value = log_normalization(region.sites(), &params.lambda);
    if log_value > MAX_LOG {
        return Err(PvbsError::Overflow(format!(
            "C(Λ) = exp({log_value:.3}) is not representable"
        )));
    }
    let box_factors = region.box_bounds().map(|b| {
        b.iter()
            .zip(&params.lambda)
            .map(|(&(lo, hi), &l)| geometric_range_sum(l, lo, hi))
            .collect()
    });
    Ok(NormalizationTable {
        value: log_value.exp(),
        log_value,
        box_factors,
    })
}

/// `C(Λ) = Σ_{x∈Λ} λ^{2x}`
pub fn normalization_c(region: &LatticeRegion, params: &ModelParams) -> Result<f64> {
    normalization_table(region, params).map(|t| t.value)
}

/// The space a [`StateVector`] lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisLabel {
    /// All `2^sites` qubit configurations.
    Full { sites: usize },
    /// Qubit configurations with exactly `count` particles.
    Particles { sites: usize, count: usize },
    /// `(species+1)^sites` multi-species configurations.
    Species { sites: usize, species: usize },
}

impl BasisLabel {
    pub fn qubit(sites: usize, sector: Sector) -> Self {
        match sector {
            Sector::Full => BasisLabel::Full { sites },
            Sector::Particles(count) => BasisLabel::Particles { sites, count },
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            BasisLabel::Full { sites } => 1usize << sites,
            BasisLabel::Particles { sites, count } => {
                crate::model::binomial(sites, count) as usize
            }
            BasisLabel::Species { sites, species } => (species + 1).pow(sites as u32),
        }
    }
}

/// Dense amplitudes over an occupation basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub basis: BasisLabel,
    pub amplitudes: Vec<f64>,
}

impl StateVector {
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &StateVector) -> f64 {
        assert_eq!(self.basis, other.basis, "states live in different bases");
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Writes `pattern amplitude` pairs for the nonzero amplitudes. Qubit
    /// patterns are binary strings with site 0 as the rightmost digit;
    /// multi-species patterns list one species digit per site, site 0 last.
    pub fn write_pairs<W: Write>(&self, mut w: W) -> Result<()> {
        let basis = match self.basis {
            BasisLabel::Full { sites } => Some(SectorBasis::new(sites, Sector::Full)?),
            BasisLabel::Particles { sites, count } => {
                Some(SectorBasis::new(sites, Sector::Particles(count))?)
            }
            BasisLabel::Species { .. } => None,
        };
        for (rank, &a) in self.amplitudes.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let pattern = match (&basis, self.basis) {
                (Some(b), _) => format!("{:0width$b}", b.config(rank), width = b.n_sites().max(1)),
                (None, BasisLabel::Species { sites, species }) => {
                    let q = species + 1;
                    let mut digits = Vec::with_capacity(sites);
                    let mut c = rank;
                    for _ in 0..sites {
                        digits.push(char::from_digit((c % q) as u32, 36).unwrap());
                        c /= q;
                    }
                    digits.iter().rev().collect()
                }
                _ => unreachable!(),
            };
            writeln!(w, "{pattern} {a:.16e}")?;
        }
        Ok(())
    }
}

/// `ψ₀ = ⊗|0>`, one-hot on the empty configuration.
pub fn vacuum_vector(basis: BasisLabel) -> Result<StateVector> {
    if let BasisLabel::Particles { count, .. } = basis {
        if count != 0 {
            return Err(PvbsError::InvalidParams(format!(
                "the vacuum lives in the zero-particle sector, not N = {count}"
            )));
        }
    }
    let mut amplitudes = vec![0.0; basis.dim()];
    amplitudes[0] = 1.0;
    Ok(StateVector { basis, amplitudes })
}

/// Normalised `λ^x / sqrt(C(Λ))` per site ordinal. Computed as
/// `exp((log λ^{2x} - log C)/2)` so that large anisotropic regions do not
/// under- or overflow.
pub fn one_particle_amplitudes(region: &LatticeRegion, params: &ModelParams) -> Result<Vec<f64>> {
    params.validate_for(region)?;
    let logs: Vec<f64> = region
        .sites()
        .iter()
        .map(|p| log_weight(p, &params.lambda))
        .collect();
    let log_c = log_sum_exp(&logs);
    Ok(logs.iter().map(|t| (0.5 * (t - log_c)).exp()).collect())
}

/// `ψ₁ = C(Λ)^{-1/2} Σ_x λ^x ξ_{x}` in the full space or the one-particle sector.
pub fn one_particle_ground_state(
    region: &LatticeRegion,
    params: &ModelParams,
    sector: Sector,
) -> Result<StateVector> {
    params.require_single_species()?;
    region.require_connected()?;
    let amps = one_particle_amplitudes(region, params)?;
    match sector {
        Sector::Particles(1) => Ok(StateVector {
            basis: BasisLabel::Particles {
                sites: region.len(),
                count: 1,
            },
            amplitudes: amps,
        }),
        Sector::Full => {
            if region.len() > 63 {
                return Err(PvbsError::CapExceeded {
                    what: "bit-encoded basis sites",
                    requested: region.len() as u128,
                    cap: 63,
                });
            }
            let basis = BasisLabel::Full { sites: region.len() };
            let mut amplitudes = vec![0.0; basis.dim()];
            for (i, a) in amps.into_iter().enumerate() {
                amplitudes[1usize << i] = a;
            }
            Ok(StateVector { basis, amplitudes })
        }
        Sector::Particles(n) => Err(PvbsError::InvalidParams(format!(
            "the one-particle ground state has no component in sector N = {n}"
        ))),
    }
}

/// The orthonormal kernel basis `(ψ₀, ψ₁)` in the full space.
pub fn kernel_pair(region: &LatticeRegion, params: &ModelParams) -> Result<(StateVector, StateVector)> {
    params.require_ground_state_regime()?;
    let psi1 = one_particle_ground_state(region, params, Sector::Full)?;
    let psi0 = vacuum_vector(psi1.basis)?;
    Ok((psi0, psi1))
}

/// `ψ_M` for a set `M` of distinct species labels (1-based): the sum over
/// placements of species `i_j` at distinct sites `y_j` weighted by
/// `Π_j Π_k λ_(i_j,k)^{y_j,k}`, normalised.
///
/// Species are distinct within `M`, so every ordered placement names a
/// different configuration and no symmetrisation is needed.
pub fn multispecies_ground_state(
    region: &LatticeRegion,
    params: &ModelParams,
    species: &[usize],
) -> Result<StateVector> {
    params.validate_for(region)?;
    let n = params.species;
    let mut m = species.to_vec();
    m.sort_unstable();
    if m.windows(2).any(|w| w[0] == w[1]) || m.iter().any(|&s| s == 0 || s > n) {
        return Err(PvbsError::InvalidParams(format!(
            "species set {species:?} must hold distinct labels in 1..={n}"
        )));
    }
    if m.len() > region.len() {
        return Err(PvbsError::InvalidParams(format!(
            "{} species do not fit on {} sites",
            m.len(),
            region.len()
        )));
    }
    let q = n + 1;
    let basis = BasisLabel::Species {
        sites: region.len(),
        species: n,
    };
    let dim = basis.dim();
    let mut amplitudes = vec![0.0; dim];
    // log λ_(s,k) for every species
    let log_l: Vec<Vec<f64>> = (1..=n)
        .map(|s| (0..params.dim()).map(|k| params.species_lambda(s, k).ln()).collect())
        .collect();
    let mut logs = Vec::new();
    let mut support = Vec::new();
    for c in 0..dim {
        let mut rest = c;
        let mut present = Vec::with_capacity(m.len());
        let mut log_amp = 0.0;
        let mut ok = true;
        for site in 0..region.len() {
            let s = rest % q;
            rest /= q;
            if s != 0 {
                if !m.contains(&s) || present.contains(&s) {
                    ok = false;
                    break;
                }
                present.push(s);
                log_amp += region
                    .site(site)
                    .coords()
                    .iter()
                    .zip(&log_l[s - 1])
                    .map(|(&x, l)| x as f64 * l)
                    .sum::<f64>();
            }
        }
        if ok && present.len() == m.len() {
            support.push(c);
            logs.push(log_amp);
        }
    }
    let log_norm = 0.5 * log_sum_exp(&logs.iter().map(|t| 2.0 * t).collect::<Vec<_>>());
    for (c, t) in support.into_iter().zip(logs) {
        amplitudes[c] = (t - log_norm).exp();
    }
    Ok(StateVector { basis, amplitudes })
}

/// `max_edge ||h_edge ψ||` over every oriented edge of the region.
pub fn max_bond_residual(region: &LatticeRegion, params: &ModelParams, state: &StateVector) -> Result<f64> {
    params.validate_for(region)?;
    match state.basis {
        BasisLabel::Particles { sites, count: 1 } => {
            if sites != region.len() {
                return Err(PvbsError::InvalidParams("state does not match region".into()));
            }
            Ok(one_particle_bond_residuals(region, params, &state.amplitudes)
                .into_iter()
                .fold(0.0, f64::max))
        }
        BasisLabel::Full { sites } | BasisLabel::Particles { sites, .. } => {
            if sites != region.len() {
                return Err(PvbsError::InvalidParams("state does not match region".into()));
            }
            let sector = match state.basis {
                BasisLabel::Particles { count, .. } => Sector::Particles(count),
                _ => Sector::Full,
            };
            let basis = SectorBasis::new(sites, sector)?;
            let mut worst: f64 = 0.0;
            let mut out = vec![0.0; basis.len()];
            for e in region.edges() {
                let h = bond_matrix(e.direction, params)?;
                out.iter_mut().for_each(|v| *v = 0.0);
                let (bi, bj) = (1u64 << e.site, 1u64 << e.neighbor);
                for (rank, &a) in state.amplitudes.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let c = basis.config(rank);
                    let s = (((c & bi) != 0) as usize) << 1 | ((c & bj) != 0) as usize;
                    let rest = c & !(bi | bj);
                    for t in 0..4 {
                        let v = h[(t, s)];
                        if v != 0.0 {
                            let mut c2 = rest;
                            if t & 2 != 0 {
                                c2 |= bi;
                            }
                            if t & 1 != 0 {
                                c2 |= bj;
                            }
                            out[basis.rank(c2).expect("number conserving")] += v * a;
                        }
                    }
                }
                worst = worst.max(out.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
            Ok(worst)
        }
        BasisLabel::Species { sites, species } => {
            if sites != region.len() || species != params.species {
                return Err(PvbsError::InvalidParams("state does not match model".into()));
            }
            let q = species + 1;
            let pow: Vec<usize> = (0..sites).map(|i| q.pow(i as u32)).collect();
            let mut worst: f64 = 0.0;
            let mut out = vec![0.0; state.amplitudes.len()];
            for e in region.edges() {
                let h = multispecies_bond_matrix(e.direction, params);
                out.iter_mut().for_each(|v| *v = 0.0);
                let (pi, pj) = (pow[e.site], pow[e.neighbor]);
                for (c, &a) in state.amplitudes.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let (sa, sb) = ((c / pi) % q, (c / pj) % q);
                    let rest = c - sa * pi - sb * pj;
                    let s = sa * q + sb;
                    for (t, row) in h.iter().enumerate() {
                        if row[s] != 0.0 {
                            out[rest + (t / q) * pi + (t % q) * pj] += row[s] * a;
                        }
                    }
                }
                worst = worst.max(out.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
            Ok(worst)
        }
    }
}

/// Per-edge `||h_edge ψ||` for a one-particle state given by site amplitudes.
/// Only the `2x2` hopping block of the bond term acts on such a state.
pub fn one_particle_bond_residuals(
    region: &LatticeRegion,
    params: &ModelParams,
    amps: &[f64],
) -> Vec<f64> {
    region
        .edges()
        .iter()
        .map(|e| {
            let l = params.lambda[e.direction];
            let norm = 1.0 + l * l;
            let (ax, ay) = (amps[e.site], amps[e.neighbor]);
            // <φ_k | ψ> = (a_{x+e_k} - λ a_x)/sqrt(1+λ²); residual = |<φ_k|ψ>|
            ((ay - l * ax) / norm.sqrt()).abs()
        })
        .collect()
}
