//! Finite-volume surrogates for thermodynamic-limit statements: scenario
//! classification of increasing region families, local topological order
//! and the edge-restricted one-particle gap.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::martingale_lower_bound;
use crate::error::{PvbsError, Result};
use crate::groundstate::{log_normalization, log_weight};
use crate::lattice::{enlarge_unbounded, DiamondRegion, LatticePoint, LatticeRegion};
use crate::model::{one_particle_matrix, ModelParams};
use crate::spectra::{lowest_eigenpairs, SolverOptions, SpectralReport};

pub type C64 = Complex<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// `[-n, n]^d`, exhausting `Z^d`.
    BoxesToZd,
    /// `[0, n]^d`, exhausting the positive orthant.
    BoxesToQuadrant,
    /// `D_{2n}`, exhausting the half-plane `x + y >= 0`.
    DiamondsToHalfPlane,
    Custom,
}

#[derive(Clone, Debug)]
pub struct RegionFamily {
    pub kind: FamilyKind,
    pub dim: usize,
    custom: Vec<LatticeRegion>,
}

impl RegionFamily {
    pub fn new(kind: FamilyKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(PvbsError::InvalidRegion("dimension must be at least 1".into()));
        }
        match kind {
            FamilyKind::Custom => Err(PvbsError::InvalidParams(
                "custom families are built with RegionFamily::custom".into(),
            )),
            FamilyKind::DiamondsToHalfPlane if dim != 2 => Err(PvbsError::InvalidParams(
                "diamond families live in d = 2".into(),
            )),
            _ => Ok(RegionFamily {
                kind,
                dim,
                custom: Vec::new(),
            }),
        }
    }

    /// `regions[n-1]` is `Λ_n`; each must contain its predecessor and be connected.
    pub fn custom(regions: Vec<LatticeRegion>) -> Result<Self> {
        let first = regions
            .first()
            .ok_or_else(|| PvbsError::InvalidRegion("empty region family".into()))?;
        let dim = first.dim();
        for (i, r) in regions.iter().enumerate() {
            r.require_connected()?;
            if r.dim() != dim {
                return Err(PvbsError::InvalidRegion("mixed dimensions in family".into()));
            }
            if i > 0 && !regions[i - 1].sites().iter().all(|p| r.contains(p)) {
                return Err(PvbsError::InvalidRegion(format!(
                    "family member {} does not contain member {i}",
                    i + 1
                )));
            }
        }
        Ok(RegionFamily {
            kind: FamilyKind::Custom,
            dim,
            custom: regions,
        })
    }

    pub fn max_index(&self) -> Option<usize> {
        match self.kind {
            FamilyKind::Custom => Some(self.custom.len()),
            _ => None,
        }
    }

    /// `Λ_n` for `n >= 1`.
    pub fn region(&self, n: usize) -> Result<LatticeRegion> {
        if n == 0 {
            return Err(PvbsError::OutOfRange {
                what: "family index",
                value: 0,
                allowed: ">= 1".into(),
            });
        }
        match self.kind {
            FamilyKind::BoxesToZd => LatticeRegion::make_centered_box(&vec![n; self.dim]),
            FamilyKind::BoxesToQuadrant => LatticeRegion::make_box(&vec![n; self.dim]),
            FamilyKind::DiamondsToHalfPlane => {
                Ok(DiamondRegion::new(2 * n as i64, false)?.region().clone())
            }
            FamilyKind::Custom => self.custom.get(n - 1).cloned().ok_or(PvbsError::OutOfRange {
                what: "family index",
                value: n as i64,
                allowed: format!("1..={}", self.custom.len()),
            }),
        }
    }

    /// Exact verdict and limit of `C(Λ_n)` for the built-in families.
    pub fn analytic_verdict(&self, params: &ModelParams) -> Option<(Scenario, Option<f64>)> {
        match self.kind {
            FamilyKind::BoxesToZd | FamilyKind::DiamondsToHalfPlane => Some((Scenario::I, None)),
            FamilyKind::BoxesToQuadrant => {
                if params.lambda.iter().all(|&l| l < 1.0) {
                    let limit = params.lambda.iter().map(|l| 1.0 / (1.0 - l * l)).product();
                    Some((Scenario::II, Some(limit)))
                } else {
                    Some((Scenario::I, None))
                }
            }
            FamilyKind::Custom => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// `C(Λ_n) -> ∞`: the one-particle state merges with the vacuum.
    I,
    /// `C(Λ_n)` converges: a second, orthogonal ground state survives.
    II,
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioVerdict {
    pub scenario: Scenario,
    /// What the increments alone say.
    pub numeric: Scenario,
    pub analytic: Option<Scenario>,
    pub log_c_sequence: Vec<f64>,
    pub c_sequence: Vec<f64>,
    /// `None` when the sequence diverges.
    pub limit_estimate: Option<f64>,
    /// Successive increment ratios `δ_n/δ_{n-1}`.
    pub increment_ratios: Vec<f64>,
}

/// Classifies `lim C(Λ_n)` from `n = 1..=n_max`.
///
/// Convergent: the last increment is below `tol·C` and the trailing
/// increment ratios stay below `1 - tol`. Divergent: the trailing increments
/// do not shrink. Anything else is left to the analytic criterion, if the
/// family has one.
pub fn classify_scenario(
    family: &RegionFamily,
    params: &ModelParams,
    n_max: usize,
    tol: f64,
) -> Result<ScenarioVerdict> {
    params.validate()?;
    if params.dim() != family.dim {
        return Err(PvbsError::InvalidParams("family and lambda dimensions differ".into()));
    }
    if n_max < 4 {
        return Err(PvbsError::OutOfRange {
            what: "n_max",
            value: n_max as i64,
            allowed: ">= 4".into(),
        });
    }
    if let Some(m) = family.max_index() {
        if n_max > m {
            return Err(PvbsError::OutOfRange {
                what: "n_max",
                value: n_max as i64,
                allowed: format!("<= {m}"),
            });
        }
    }
    let mut log_c = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let r = family.region(n)?;
        log_c.push(log_normalization(r.sites(), &params.lambda));
    }
    let c: Vec<f64> = log_c.iter().map(|l| l.exp()).collect();
    // δ_n relative to C_n, in log space so that divergent families stay finite
    let log_inc: Vec<f64> = log_c
        .windows(2)
        .map(|w| w[1] + (-(w[0] - w[1]).exp()).ln_1p())
        .collect();
    // increments lost to rounding on both sides count as fully decayed
    let ratios: Vec<f64> = log_inc
        .windows(2)
        .map(|w| {
            let q = (w[1] - w[0]).exp();
            if q.is_nan() { 0.0 } else { q }
        })
        .collect();
    let tail = &ratios[ratios.len().saturating_sub(3)..];
    let last_rel = (log_inc[log_inc.len() - 1] - log_c[log_c.len() - 1]).exp();
    let numeric = if last_rel < tol && tail.iter().all(|&q| q < 1.0 - tol) {
        Scenario::II
    } else if tail.iter().all(|&q| q >= 1.0) {
        Scenario::I
    } else {
        Scenario::Undecided
    };
    let analytic = family.analytic_verdict(params);
    if let Some((a, _)) = analytic {
        if numeric != Scenario::Undecided && numeric != a {
            return Err(PvbsError::Consistency(format!(
                "increments indicate {numeric:?}, the geometric series criterion gives {a:?}"
            )));
        }
    }
    let scenario = match (numeric, analytic) {
        (Scenario::Undecided, Some((a, _))) => a,
        (s, _) => s,
    };
    let limit_estimate = match scenario {
        Scenario::II => Some(aitken_tail(&c)),
        _ => None,
    };
    Ok(ScenarioVerdict {
        scenario,
        numeric,
        analytic: analytic.map(|a| a.0),
        log_c_sequence: log_c,
        c_sequence: c,
        limit_estimate,
        increment_ratios: ratios,
    })
}

/// Aitken extrapolation from the last three terms, falling back to the last
/// term when the increments are already at rounding level.
fn aitken_tail(c: &[f64]) -> f64 {
    let n = c.len();
    let (a, b, z) = (c[n - 3], c[n - 2], c[n - 1]);
    let (d1, d2) = (b - a, z - b);
    let denom = d2 - d1;
    if d2.abs() <= 1e-15 * z.abs() || denom == 0.0 {
        return z;
    }
    z - d2 * d2 / denom
}

/// `Σ_{x∈X} λ^{2x} / C(Λ)`: the weight of `ψ₁` inside the window.
pub fn one_particle_weight_in_window(
    region: &LatticeRegion,
    params: &ModelParams,
    window: &[LatticePoint],
) -> Result<f64> {
    params.validate_for(region)?;
    if let Some(p) = window.iter().find(|p| !region.contains(p)) {
        return Err(PvbsError::InvalidRegion(format!("window site {p} is outside the region")));
    }
    let lw = log_normalization(window.iter(), &params.lambda);
    let lc = log_normalization(region.sites(), &params.lambda);
    Ok((lw - lc).exp().min(1.0))
}

/// `f(l) = 2 sqrt(C(X)/C(X^{(l)}))` with `X^{(l)}` taken inside `ambient`.
pub fn ltqo_f(x: &[LatticePoint], l: usize, ambient: &LatticeRegion, params: &ModelParams) -> Result<f64> {
    params.validate_for(ambient)?;
    let y = ambient.enlarge(x, l)?;
    let lx = log_normalization(x.iter(), &params.lambda);
    let ly = log_normalization(y.iter(), &params.lambda);
    Ok(2.0 * (0.5 * (lx - ly)).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtqoTrial {
    /// `||G A G - c(A) G||`
    pub lhs: f64,
    /// `||A|| f(l)`
    pub rhs: f64,
    pub f: f64,
    pub norm_a: f64,
    pub c_l: f64,
    pub l: usize,
    pub seed: Option<u64>,
}

/// Random Hermitian observable on `n_sites` qubits: real and imaginary parts
/// uniform in `[-1, 1]`, then symmetrised.
pub fn random_hermitian(n_sites: usize, seed: u64) -> DMatrix<C64> {
    let dim = 1usize << n_sites;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = DMatrix::from_fn(dim, dim, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    (&b + b.adjoint()).map(|z| z * 0.5)
}

pub fn operator_norm(a: &DMatrix<C64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .fold(0.0, |m: f64, e| m.max(e.abs()))
}

/// Seeded random trial of the local topological order inequality.
pub fn ltqo_verify(
    lbox: &LatticeRegion,
    x: &[LatticePoint],
    l: usize,
    params: &ModelParams,
    seed: u64,
) -> Result<LtqoTrial> {
    let a = random_hermitian(x.len(), seed);
    let mut t = ltqo_verify_with(lbox, x, l, params, &a)?;
    t.seed = Some(seed);
    Ok(t)
}

/// `A` acts on the qubits of `x`, site `x[i]` being bit `i`.
///
/// Because `G_{X^{(l)}}` is the kernel projector of `X^{(l)}` tensored with
/// the identity, and `A` acts inside `X^{(l)}`, the operator norm reduces to
/// that of the `2x2` matrix `<ψ_i, A ψ_j> - c δ_ij` in the kernel basis of
/// `X^{(l)}`.
pub fn ltqo_verify_with(
    lbox: &LatticeRegion,
    x: &[LatticePoint],
    l: usize,
    params: &ModelParams,
    a: &DMatrix<C64>,
) -> Result<LtqoTrial> {
    params.validate_for(lbox)?;
    if x.is_empty() || x.len() > 12 {
        return Err(PvbsError::InvalidRegion("X must hold 1..=12 sites".into()));
    }
    let dim = 1usize << x.len();
    if a.nrows() != dim || a.ncols() != dim {
        return Err(PvbsError::InvalidParams(format!(
            "observable must be {dim}x{dim} for {} sites",
            x.len()
        )));
    }
    let y = enlarge_unbounded(x, l);
    if let Some(p) = y.iter().find(|p| !lbox.contains(p)) {
        return Err(PvbsError::InvalidRegion(format!(
            "X^({l}) reaches {p}, outside the box"
        )));
    }
    let ly = log_normalization(y.iter(), &params.lambda);
    let w: Vec<f64> = x
        .iter()
        .map(|p| (0.5 * (log_weight(p, &params.lambda) - ly)).exp())
        .collect();
    let wx_sq: f64 = w.iter().map(|v| v * v).sum();
    let a00 = a[(0, 0)].re;
    let m01: C64 = w.iter().enumerate().map(|(i, &wi)| a[(0, 1 << i)] * wi).sum();
    let mut m11 = (1.0 - wx_sq).max(0.0) * a00;
    for (i, &wi) in w.iter().enumerate() {
        for (j, &wj) in w.iter().enumerate() {
            m11 += wi * wj * a[(1 << i, 1 << j)].re;
        }
    }
    let c_l = 0.5 * (a00 + m11);
    let half_diff = 0.5 * (a00 - m11);
    let lhs = (half_diff * half_diff + m01.norm_sqr()).sqrt();
    let norm_a = operator_norm(a);
    let f = {
        let lx = log_normalization(x.iter(), &params.lambda);
        2.0 * (0.5 * (lx - ly)).exp()
    };
    Ok(LtqoTrial {
        lhs,
        rhs: norm_a * f,
        f,
        norm_a,
        c_l,
        l,
        seed: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BulkGap {
    pub size: i64,
    pub lambda: f64,
    pub margin: i64,
    pub sites_kept: usize,
    /// Spectrum of the one-particle matrix compressed to `x + y >= margin`.
    pub restricted: SpectralReport,
    /// Lowest two eigenvalues of the uncompressed one-particle matrix.
    pub unrestricted: Vec<f64>,
    pub martingale_lower: f64,
}

/// One-particle matrix of `D_L` compressed to the sites at `ℓ¹` distance at
/// least `margin` from the slanted edge `x + y = 0`.
pub fn bulk_projected_gap(size: i64, lam: f64, margin: i64, opts: &SolverOptions) -> Result<BulkGap> {
    if !(lam > 0.0 && lam < 1.0) {
        return Err(PvbsError::InvalidParams(format!("need 0 < lambda < 1, got {lam}")));
    }
    if margin < 0 {
        return Err(PvbsError::OutOfRange {
            what: "margin",
            value: margin,
            allowed: ">= 0".into(),
        });
    }
    let diamond = DiamondRegion::new(size, false)?;
    let region = diamond.region();
    let params = ModelParams::new([lam, lam]);
    let h = one_particle_matrix(region, &params)?;
    let keep: Vec<usize> = (0..region.len())
        .filter(|&i| {
            let c = region.site(i).coords();
            c[0] + c[1] >= margin
        })
        .collect();
    if keep.is_empty() {
        return Err(PvbsError::InvalidRegion(format!(
            "margin {margin} leaves no site of D_{size}"
        )));
    }
    let (restricted, _) = lowest_eigenpairs(&h.principal_submatrix(&keep), 2, opts, &[])?;
    let (full, _) = lowest_eigenpairs(&h, 2, opts, &[])?;
    Ok(BulkGap {
        size,
        lambda: lam,
        margin,
        sites_kept: keep.len(),
        restricted,
        unrestricted: full.eigenvalues,
        martingale_lower: martingale_lower_bound(&params, opts)?,
    })
}
