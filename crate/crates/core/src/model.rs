//! Model parameters, occupation bases and Hamiltonian assembly.
//!
//! Site ordinal `i` of a [`LatticeRegion`] corresponds to bit `i` of a
//! configuration. A two-site bond term is written in the ordered basis
//! `|00>, |01>, |10>, |11>` with the lower-ordinal site (the tail `x` of the
//! edge `(x, x + e_k)`) as the first factor.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{PvbsError, Result};
use crate::lattice::LatticeRegion;
use crate::sparse::SparseOperator;

fn default_species() -> usize {
    1
}

/// Couplings `lambda_k` per direction, anisotropy `delta`, and the optional
/// multi-species couplings `multi_lambda[i][k]` (species `i+1`, direction `k`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_species")]
    pub species: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi_lambda: Option<Vec<Vec<f64>>>,
}

impl ModelParams {
    pub fn new(lambda: impl Into<Vec<f64>>) -> Self {
        ModelParams {
            lambda: lambda.into(),
            delta: 0.0,
            species: 1,
            multi_lambda: None,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// `n = multi_lambda.len()` species with direction-dependent couplings.
    pub fn multispecies(multi_lambda: Vec<Vec<f64>>) -> Self {
        let lambda = multi_lambda.first().cloned().unwrap_or_default();
        ModelParams {
            lambda,
            delta: 0.0,
            species: multi_lambda.len(),
            multi_lambda: Some(multi_lambda),
        }
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_empty() {
            return Err(PvbsError::InvalidParams("lambda must have at least one entry".into()));
        }
        if let Some(l) = self.lambda.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(PvbsError::InvalidParams(format!(
                "couplings must be positive and finite, got {l}"
            )));
        }
        if !self.delta.is_finite() {
            return Err(PvbsError::InvalidParams("delta must be finite".into()));
        }
        if self.species == 0 {
            return Err(PvbsError::InvalidParams("species must be at least 1".into()));
        }
        match &self.multi_lambda {
            Some(m) => {
                if m.len() != self.species {
                    return Err(PvbsError::InvalidParams(format!(
                        "multi_lambda has {} rows for {} species",
                        m.len(),
                        self.species
                    )));
                }
                for row in m {
                    if row.len() != self.dim() {
                        return Err(PvbsError::InvalidParams(
                            "multi_lambda rows must have one entry per direction".into(),
                        ));
                    }
                    if row.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                        return Err(PvbsError::InvalidParams(
                            "multi-species couplings must be positive and finite".into(),
                        ));
                    }
                }
            }
            None if self.species > 1 => {
                return Err(PvbsError::InvalidParams(
                    "multi_lambda is required when species > 1".into(),
                ));
            }
            None => {}
        }
        Ok(())
    }

    /// Parameters valid for `region`, which must have the same dimension.
    pub fn validate_for(&self, region: &LatticeRegion) -> Result<()> {
        self.validate()?;
        if region.dim() != self.dim() {
            return Err(PvbsError::InvalidParams(format!(
                "region has dimension {} but lambda has {} entries",
                region.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// The two-dimensional kernel is only guaranteed for `delta > -1`.
    pub fn require_ground_state_regime(&self) -> Result<()> {
        if self.delta > -1.0 {
            Ok(())
        } else {
            Err(PvbsError::InvalidParams(format!(
                "delta = {} is outside the regime delta > -1",
                self.delta
            )))
        }
    }

    pub fn require_single_species(&self) -> Result<()> {
        if self.species == 1 {
            Ok(())
        } else {
            Err(PvbsError::InvalidParams("operation needs a single species".into()))
        }
    }

    /// Coupling of species `species` (1-based) along direction `k` (0-based).
    pub fn species_lambda(&self, species: usize, k: usize) -> f64 {
        match &self.multi_lambda {
            Some(m) => m[species - 1][k],
            None => self.lambda[k],
        }
    }
}

/// Size caps for the exponentially large spaces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    /// Maximum number of sites for full Fock space assembly.
    pub full_sites: usize,
    /// Maximum dimension of a fixed-particle-number sector.
    pub sector_dim: u64,
    /// Maximum dimension `(n+1)^|Λ|` of a multi-species space.
    pub multispecies_dim: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            full_sites: 22,
            sector_dim: 1 << 22,
            multispecies_dim: 3u64.pow(12),
        }
    }
}

/// Which occupation-number subspace a basis spans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    Full,
    Particles(usize),
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    u64::try_from(acc).unwrap_or(u64::MAX)
}

/// Occupation patterns of a region, either all `2^|Λ|` of them or those with
/// exactly `N` particles, ordered by the integer value of the bit pattern.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    n_sites: usize,
    sector: Sector,
    configs: Vec<u64>,
    binom: Vec<Vec<u64>>,
}

impl SectorBasis {
    pub fn new(n_sites: usize, sector: Sector) -> Result<Self> {
        if n_sites > 63 {
            return Err(PvbsError::CapExceeded {
                what: "bit-encoded basis sites",
                requested: n_sites as u128,
                cap: 63,
            });
        }
        let configs = match sector {
            Sector::Full => Vec::new(),
            Sector::Particles(n) => {
                if n > n_sites {
                    return Err(PvbsError::OutOfRange {
                        what: "particle number",
                        value: n as i64,
                        allowed: format!("0..={n_sites}"),
                    });
                }
                enumerate_fixed_weight(n_sites, n)
            }
        };
        let binom = (0..=n_sites)
            .map(|m| (0..=n_sites).map(|k| binomial(m, k)).collect())
            .collect();
        Ok(SectorBasis {
            n_sites,
            sector,
            configs,
            binom,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn len(&self) -> usize {
        match self.sector {
            Sector::Full => 1usize << self.n_sites,
            Sector::Particles(_) => self.configs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn config(&self, rank: usize) -> u64 {
        match self.sector {
            Sector::Full => rank as u64,
            Sector::Particles(_) => self.configs[rank],
        }
    }

    /// Rank of a pattern. Fixed-weight patterns are ranked with the
    /// combinatorial number system, which reproduces integer order.
    pub fn rank(&self, config: u64) -> Option<usize> {
        match self.sector {
            Sector::Full => ((config >> self.n_sites) == 0).then_some(config as usize),
            Sector::Particles(n) => {
                if config.count_ones() as usize != n || (config >> self.n_sites) != 0 {
                    return None;
                }
                let mut rank = 0u64;
                let mut bits = config;
                let mut j = 1;
                while bits != 0 {
                    let p = bits.trailing_zeros() as usize;
                    rank += self.binom[p][j];
                    j += 1;
                    bits &= bits - 1;
                }
                Some(rank as usize)
            }
        }
    }
}

fn enumerate_fixed_weight(n_sites: usize, n: usize) -> Vec<u64> {
    let count = binomial(n_sites, n) as usize;
    let mut out = Vec::with_capacity(count);
    if n == 0 {
        out.push(0);
        return out;
    }
    let limit = 1u64 << n_sites;
    let mut v: u64 = (1u64 << n) - 1;
    while v < limit {
        out.push(v);
        // next pattern with the same popcount (Gosper)
        let c = v & v.wrapping_neg();
        let r = v + c;
        v = (((r ^ v) >> 2) / c) | r;
    }
    out
}

/// `h^(k)(Δ) = (1+Δ)|11><11| + |φ_k><φ_k|` with
/// `φ_k = (|01> - λ_k |10>) / sqrt(1 + λ_k²)`; `k` is zero-based.
pub fn bond_matrix(k: usize, params: &ModelParams) -> Result<Matrix4<f64>> {
    if k >= params.dim() {
        return Err(PvbsError::OutOfRange {
            what: "direction",
            value: k as i64,
            allowed: format!("0..{}", params.dim()),
        });
    }
    let l = params.lambda[k];
    let norm = 1.0 + l * l;
    let mut h = Matrix4::zeros();
    h[(1, 1)] = 1.0 / norm;
    h[(2, 2)] = l * l / norm;
    h[(1, 2)] = -l / norm;
    h[(2, 1)] = -l / norm;
    h[(3, 3)] = 1.0 + params.delta;
    Ok(h)
}

fn bond_matrices(params: &ModelParams) -> Result<Vec<Matrix4<f64>>> {
    (0..params.dim()).map(|k| bond_matrix(k, params)).collect()
}

/// Pushes the row `config` of the sum of embedded bond terms.
fn push_qubit_row(
    region: &LatticeRegion,
    bonds: &[Matrix4<f64>],
    config: u64,
    mut emit: impl FnMut(u64, f64),
) {
    for e in region.edges() {
        let (bi, bj) = (1u64 << e.site, 1u64 << e.neighbor);
        let s = (((config & bi) != 0) as usize) << 1 | ((config & bj) != 0) as usize;
        let h = &bonds[e.direction];
        let rest = config & !(bi | bj);
        for t in 0..4 {
            let v = h[(s, t)];
            if v != 0.0 {
                let mut c = rest;
                if t & 2 != 0 {
                    c |= bi;
                }
                if t & 1 != 0 {
                    c |= bj;
                }
                emit(c, v);
            }
        }
    }
}

/// `H_Λ` on the full `2^|Λ|` dimensional space.
pub fn assemble_full(
    region: &LatticeRegion,
    params: &ModelParams,
    limits: &Limits,
) -> Result<SparseOperator> {
    params.validate_for(region)?;
    params.require_single_species()?;
    if region.len() > limits.full_sites {
        return Err(PvbsError::CapExceeded {
            what: "full-space sites",
            requested: region.len() as u128,
            cap: limits.full_sites as u128,
        });
    }
    if !region.is_connected() {
        log::warn!("assembling a Hamiltonian on a disconnected region");
    }
    let bonds = bond_matrices(params)?;
    let dim = 1usize << region.len();
    Ok(SparseOperator::from_rows(dim, |row, buf| {
        push_qubit_row(region, &bonds, row as u64, |c, v| buf.push((c as usize, v)));
    }))
}

/// The `N`-particle block of `H_Λ`, built directly on the sector basis.
pub fn assemble_sector(
    region: &LatticeRegion,
    params: &ModelParams,
    particles: usize,
    limits: &Limits,
) -> Result<(SectorBasis, SparseOperator)> {
    params.validate_for(region)?;
    params.require_single_species()?;
    if particles > region.len() {
        return Err(PvbsError::OutOfRange {
            what: "particle number",
            value: particles as i64,
            allowed: format!("0..={}", region.len()),
        });
    }
    let dim = binomial(region.len(), particles);
    if dim > limits.sector_dim {
        return Err(PvbsError::CapExceeded {
            what: "sector dimension",
            requested: dim as u128,
            cap: limits.sector_dim as u128,
        });
    }
    let basis = SectorBasis::new(region.len(), Sector::Particles(particles))?;
    let bonds = bond_matrices(params)?;
    let op = SparseOperator::from_rows(basis.len(), |row, buf| {
        push_qubit_row(region, &bonds, basis.config(row), |c, v| {
            let col = basis.rank(c).expect("bond terms conserve particle number");
            buf.push((col, v));
        });
    });
    Ok((basis, op))
}

/// One-particle block indexed by site ordinal, built straight from the edge
/// list: hopping `-λ_k/(1+λ_k²)` on every edge, and on the diagonal
/// `λ_k²/(1+λ_k²)` per outgoing and `1/(1+λ_k²)` per incoming edge.
pub fn one_particle_matrix(region: &LatticeRegion, params: &ModelParams) -> Result<SparseOperator> {
    params.validate_for(region)?;
    params.require_single_species()?;
    let n = region.len();
    let mut diag = vec![0.0; n];
    let mut off: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in region.edges() {
        let l = params.lambda[e.direction];
        let norm = 1.0 + l * l;
        diag[e.site] += l * l / norm;
        diag[e.neighbor] += 1.0 / norm;
        off[e.site].push((e.neighbor, -l / norm));
        off[e.neighbor].push((e.site, -l / norm));
    }
    Ok(SparseOperator::from_rows(n, |r, buf| {
        buf.push((r, diag[r]));
        buf.extend_from_slice(&off[r]);
    }))
}

/// Bond term of the `n`-species model along direction `k`, a
/// `(n+1)² x (n+1)²` matrix in the basis `|a,b>` with index `a(n+1)+b`:
/// `Σ_i |φ_i><φ_i| + Σ_{i<=j} |φ_ij><φ_ij|` with `φ_i = |0,i> - λ_(i,k)|i,0>`,
/// `φ_ij = λ_(i,k)|i,j> - λ_(j,k)|j,i>` and `φ_ii = |i,i>`, all normalised.
pub fn multispecies_bond_matrix(k: usize, params: &ModelParams) -> Vec<Vec<f64>> {
    let n = params.species;
    let q = n + 1;
    let mut h = vec![vec![0.0; q * q]; q * q];
    let mut add_projector = |terms: &[(usize, f64)]| {
        let norm2: f64 = terms.iter().map(|(_, c)| c * c).sum();
        for &(a, ca) in terms {
            for &(b, cb) in terms {
                h[a][b] += ca * cb / norm2;
            }
        }
    };
    for i in 1..=n {
        let li = params.species_lambda(i, k);
        add_projector(&[(i, 1.0), (i * q, -li)]);
        add_projector(&[(i * q + i, 1.0)]);
        for j in i + 1..=n {
            let lj = params.species_lambda(j, k);
            add_projector(&[(i * q + j, li), (j * q + i, -lj)]);
        }
    }
    h
}

/// `H_Λ` for `n` species on the `(n+1)^|Λ|` dimensional space; site ordinal
/// `i` is base-`(n+1)` digit `i` of the configuration index.
pub fn assemble_multispecies(
    region: &LatticeRegion,
    params: &ModelParams,
    limits: &Limits,
) -> Result<SparseOperator> {
    params.validate_for(region)?;
    if params.delta != 0.0 {
        return Err(PvbsError::InvalidParams(
            "the multi-species model has no anisotropy term".into(),
        ));
    }
    let q = (params.species + 1) as u64;
    let dim = (q as u128).checked_pow(region.len() as u32).unwrap_or(u128::MAX);
    if dim > limits.multispecies_dim as u128 {
        return Err(PvbsError::CapExceeded {
            what: "multi-species dimension",
            requested: dim,
            cap: limits.multispecies_dim as u128,
        });
    }
    let dim = dim as usize;
    let pow: Vec<u64> = (0..region.len()).map(|i| q.pow(i as u32)).collect();
    let bonds: Vec<Vec<Vec<f64>>> = (0..params.dim())
        .map(|k| multispecies_bond_matrix(k, params))
        .collect();
    Ok(SparseOperator::from_rows(dim, |row, buf| {
        let c = row as u64;
        for e in region.edges() {
            let (pi, pj) = (pow[e.site], pow[e.neighbor]);
            let (a, b) = ((c / pi) % q, (c / pj) % q);
            let rest = c - a * pi - b * pj;
            let h = &bonds[e.direction];
            let s = (a * q + b) as usize;
            for (t, &v) in h[s].iter().enumerate() {
                if v != 0.0 {
                    let (ta, tb) = (t as u64 / q, t as u64 % q);
                    buf.push(((rest + ta * pi + tb * pj) as usize, v));
                }
            }
        }
    }))
}
