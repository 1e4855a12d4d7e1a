//! Analytic gap bounds, variational probes and the slab overlap estimate.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{PvbsError, Result};
use crate::groundstate::{geometric_sum, log_normalization, log_weight, one_particle_amplitudes};
use crate::lattice::{DiamondClass, DiamondRegion, LatticePoint, LatticeRegion};
use crate::model::{binomial, one_particle_matrix, Limits, ModelParams, Sector, SectorBasis};
use crate::spectra::{finite_gap, GapMode, SolverOptions};

/// Relative tolerance for the two probe evaluations to agree.
const PROBE_AGREEMENT: f64 = 1e-10;

/// `ε(λ)`; symmetric under `λ -> 1/λ` and equal to `1/sqrt(2)` at `λ = 1`.
pub fn epsilon(lam: f64) -> Result<f64> {
    if !(lam > 0.0 && lam.is_finite()) {
        return Err(PvbsError::InvalidParams(format!("epsilon needs lambda > 0, got {lam}")));
    }
    let s = (1.0 + lam * lam).sqrt();
    Ok(if lam < 1.0 {
        lam / s
    } else if lam > 1.0 {
        1.0 / s
    } else {
        std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Spectral gap of `H` on the unit hypercube `[0,1]^d`.
pub fn gamma_unit_hypercube(params: &ModelParams, opts: &SolverOptions) -> Result<f64> {
    params.validate()?;
    let d = params.dim();
    if d > 4 {
        return Err(PvbsError::CapExceeded {
            what: "hypercube dimension",
            requested: d as u128,
            cap: 4,
        });
    }
    let b = LatticeRegion::make_box(&vec![1; d])?;
    Ok(finite_gap(&b, params, GapMode::Full, opts, &Limits::default())?.gap)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapBounds {
    pub lower: f64,
    pub upper: f64,
    pub gamma_bd: f64,
    pub epsilon_factors: Vec<f64>,
    /// Some `λ_k = 1`, so the lower bound degenerates to zero.
    pub lower_trivial: bool,
    /// Every `λ_k = 1`, so the upper bound is zero.
    pub gapless: bool,
}

pub fn gap_bounds(params: &ModelParams, opts: &SolverOptions) -> Result<GapBounds> {
    let gamma_bd = gamma_unit_hypercube(params, opts)?;
    let epsilon_factors = params
        .lambda
        .iter()
        .map(|&l| epsilon(l))
        .collect::<Result<Vec<_>>>()?;
    Ok(GapBounds {
        lower: lower_from_gamma(gamma_bd, &params.lambda)?,
        upper: bulk_upper_bound(params)?,
        gamma_bd,
        epsilon_factors,
        lower_trivial: params.lambda.contains(&1.0),
        gapless: params.lambda.iter().all(|&l| l == 1.0),
    })
}

fn lower_from_gamma(gamma_bd: f64, lambda: &[f64]) -> Result<f64> {
    let mut prod = gamma_bd / 2f64.powi(lambda.len() as i32);
    for &l in lambda {
        let f = 1.0 - epsilon(l)? * std::f64::consts::SQRT_2;
        prod *= f * f;
    }
    Ok(if lambda.contains(&1.0) { 0.0 } else { prod })
}

/// `γ(B_d)/2^d Π_k (1 - sqrt(2) ε(λ_k))²`
pub fn martingale_lower_bound(params: &ModelParams, opts: &SolverOptions) -> Result<f64> {
    let gamma = gamma_unit_hypercube(params, opts)?;
    lower_from_gamma(gamma, &params.lambda)
}

/// `Σ_{k: λ_k ≠ 1} (1-λ_k)²/(1+λ_k²)`
pub fn bulk_upper_bound(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    Ok(params
        .lambda
        .iter()
        .filter(|&&l| l != 1.0)
        .map(|&l| (1.0 - l).powi(2) / (1.0 + l * l))
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectangleProbe {
    /// Rayleigh quotient from the sparse quadratic form.
    pub quotient: f64,
    /// The same quotient summed in closed form.
    pub closed_form: f64,
    /// Bond terms with both ends inside the box.
    pub bulk_term: f64,
    /// Bond terms crossing the box surface.
    pub boundary_term: f64,
}

/// Rayleigh quotient of `φ = Σ_x z^x ξ_x` over the centred box with
/// half-extent `n`, measured with the Hamiltonian of the box grown by one
/// layer.
pub fn rectangle_probe_energy(n: &[usize], params: &ModelParams, z: &[f64]) -> Result<RectangleProbe> {
    params.validate()?;
    params.require_single_species()?;
    let d = params.dim();
    if n.len() != d || z.len() != d {
        return Err(PvbsError::InvalidParams(format!(
            "box and z must have {d} entries"
        )));
    }
    if z.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return Err(PvbsError::InvalidParams("z must be finite and nonzero".into()));
    }
    let ranges: Vec<(i64, i64)> = n.iter().map(|&m| (-(m as i64) - 1, m as i64 + 1)).collect();
    let inside = |c: &[i64], k: usize| c[k].unsigned_abs() <= n[k] as u64;
    let grown = LatticeRegion::from_predicate(&ranges, |c| {
        (0..d).filter(|&k| !inside(c, k)).count() <= 1
    })?;
    let amps: Vec<f64> = grown
        .sites()
        .iter()
        .map(|p| {
            let c = p.coords();
            if (0..d).all(|k| inside(c, k)) {
                (0..d).map(|k| z[k].powi(c[k] as i32)).product()
            } else {
                0.0
            }
        })
        .collect();
    let h = one_particle_matrix(&grown, params)?;
    let quotient = h.quadratic_form(&amps) / amps.iter().map(|a| a * a).sum::<f64>();

    let mut bulk_term = 0.0;
    let mut boundary_term = 0.0;
    for k in 0..d {
        let (zk, lk, m) = (z[k], params.lambda[k], n[k] as i32);
        let s: f64 = (-m..=m).map(|j| zk.powi(2 * j)).sum();
        let denom = (1.0 + lk * lk) * s;
        bulk_term += (zk - lk).powi(2) * (s - zk.powi(2 * m)) / denom;
        boundary_term += (lk * lk * zk.powi(2 * m) + zk.powi(-2 * m)) / denom;
    }
    let closed_form = bulk_term + boundary_term;
    if (quotient - closed_form).abs() > PROBE_AGREEMENT * closed_form.abs().max(f64::MIN_POSITIVE) {
        return Err(PvbsError::Consistency(format!(
            "rectangle probe: quadratic form {quotient:.17e} vs closed form {closed_form:.17e}"
        )));
    }
    Ok(RectangleProbe {
        quotient,
        closed_form,
        bulk_term,
        boundary_term,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition3 {
    /// Largest `||G_slab ψ||²/||ψ||²` over the admissible vectors.
    pub numeric_sup: f64,
    pub analytic_bound: f64,
    pub epsilon_sq: f64,
    /// Number of free parameters `(a_x, b_x)`.
    pub parameters: usize,
}

/// Two-sector state on `T × [0, n+1]`: one- and two-particle amplitudes.
struct SlabVector {
    one: Vec<f64>,
    two: Vec<f64>,
}

/// Overlap between the ground-space projector of the top two layers and the
/// vectors that are ground states of `T × [0,n]` but orthogonal to the
/// ground space of `T × [0,n+1]`, restricted to at most one particle in the
/// added layer.
pub fn slab_condition3_bound(
    params: &ModelParams,
    cross_section: &[usize],
    n: usize,
    limits: &Limits,
) -> Result<Condition3> {
    params.validate()?;
    params.require_single_species()?;
    let d = params.dim();
    if cross_section.len() + 1 != d {
        return Err(PvbsError::InvalidParams(format!(
            "cross-section needs {} entries for d = {d}",
            d - 1
        )));
    }
    if n < 1 {
        return Err(PvbsError::OutOfRange {
            what: "slab height",
            value: n as i64,
            allowed: ">= 1".into(),
        });
    }
    let lam_d = params.lambda[d - 1];
    let c = |m: usize| geometric_sum(lam_d, m);
    let analytic_bound = lam_d * lam_d * c(n - 1) / ((1.0 + lam_d * lam_d) * c(n));
    let epsilon_sq = epsilon(lam_d)?.powi(2);

    let mut ext = cross_section.to_vec();
    ext.push(n + 1);
    let big = LatticeRegion::make_box(&ext)?;
    let sites = big.len();
    let pairs = binomial(sites, 2);
    if pairs as u128 > limits.sector_dim as u128 {
        return Err(PvbsError::CapExceeded {
            what: "two-particle sector dimension",
            requested: pairs as u128,
            cap: limits.sector_dim as u128,
        });
    }
    let height = |p: &LatticePoint| p.coords()[d - 1];
    let lower_pts: Vec<LatticePoint> =
        big.sites().iter().filter(|p| height(p) <= n as i64).cloned().collect();
    let slab_pts: Vec<LatticePoint> =
        big.sites().iter().filter(|p| height(p) >= n as i64).cloned().collect();
    let top: Vec<usize> = (0..sites).filter(|&i| height(big.site(i)) == n as i64 + 1).collect();
    let lower = big.subregion(&lower_pts)?;
    let slab = big.subregion(&slab_pts)?;

    let psi_lower = one_particle_amplitudes(&lower, params)?;
    let lower_ix: Vec<usize> = lower.sites().iter().map(|p| big.index_of(p).unwrap()).collect();
    let psi_slab = one_particle_amplitudes(&slab, params)?;
    let slab_ix: Vec<usize> = slab.sites().iter().map(|p| big.index_of(p).unwrap()).collect();
    let mut in_slab = vec![None; sites];
    for (j, &i) in slab_ix.iter().enumerate() {
        in_slab[i] = Some(j);
    }
    let log_c_lower = log_normalization(lower.sites(), &params.lambda);
    let basis2 = SectorBasis::new(sites, Sector::Particles(2))?;
    let rank2 = |a: usize, b: usize| basis2.rank((1u64 << a) | (1u64 << b)).unwrap();

    let mut columns = Vec::with_capacity(2 * top.len());
    for &x in &top {
        let coef = (0.5 * (log_weight(big.site(x), &params.lambda) - log_c_lower)).exp();
        let mut one = vec![0.0; sites];
        one[x] = 1.0;
        for (&i, &a) in lower_ix.iter().zip(&psi_lower) {
            one[i] -= coef * a;
        }
        columns.push(SlabVector {
            one,
            two: vec![0.0; basis2.len()],
        });
    }
    for &x in &top {
        let mut two = vec![0.0; basis2.len()];
        for (&i, &a) in lower_ix.iter().zip(&psi_lower) {
            two[rank2(i, x)] = a;
        }
        columns.push(SlabVector {
            one: vec![0.0; sites],
            two,
        });
    }

    // G_slab: keep the empty-slab part, project the one-particle slab part
    // onto ψ₁ of the slab, drop two slab particles.
    let project = |v: &SlabVector| -> SlabVector {
        let mut one = v.one.clone();
        let g: f64 = slab_ix.iter().zip(&psi_slab).map(|(&i, a)| a * v.one[i]).sum();
        for (&i, &a) in slab_ix.iter().zip(&psi_slab) {
            one[i] = g * a;
        }
        let mut two = vec![0.0; v.two.len()];
        for r in (0..sites).filter(|&r| in_slab[r].is_none()) {
            let g: f64 = slab_ix
                .iter()
                .zip(&psi_slab)
                .map(|(&s, a)| a * v.two[rank2(r.min(s), r.max(s))])
                .sum();
            for (&s, &a) in slab_ix.iter().zip(&psi_slab) {
                two[rank2(r.min(s), r.max(s))] = g * a;
            }
            for r2 in (r + 1..sites).filter(|&r2| in_slab[r2].is_none()) {
                let k = rank2(r, r2);
                two[k] = v.two[k];
            }
        }
        SlabVector { one, two }
    };
    let projected: Vec<SlabVector> = columns.iter().map(project).collect();
    let inner = |a: &SlabVector, b: &SlabVector| -> f64 {
        a.one.iter().zip(&b.one).map(|(x, y)| x * y).sum::<f64>()
            + a.two.iter().zip(&b.two).map(|(x, y)| x * y).sum::<f64>()
    };
    let m = columns.len();
    let gram = DMatrix::from_fn(m, m, |i, j| inner(&columns[i], &columns[j]));
    let target = DMatrix::from_fn(m, m, |i, j| inner(&projected[i], &projected[j]));
    let numeric_sup = generalized_max_eigenvalue(&target, gram)?;
    Ok(Condition3 {
        numeric_sup,
        analytic_bound,
        epsilon_sq,
        parameters: m,
    })
}

/// Largest `μ` with `A v = μ B v`, `B` positive definite.
fn generalized_max_eigenvalue(a: &DMatrix<f64>, b: DMatrix<f64>) -> Result<f64> {
    let chol = b
        .cholesky()
        .ok_or_else(|| PvbsError::Consistency("slab parameter Gram matrix is singular".into()))?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(a)
        .ok_or_else(|| PvbsError::Consistency("triangular solve failed".into()))?;
    let y = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| PvbsError::Consistency("triangular solve failed".into()))?;
    let sym = (&y + y.transpose()) * 0.5;
    Ok(SymmetricEigen::new(sym).eigenvalues.max())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiamondProbe {
    pub size: i64,
    pub lambda: f64,
    /// Rayleigh quotient from the sparse quadratic form on the grown diamond.
    pub quotient: f64,
    /// The same quotient from an explicit bond-by-bond sum.
    pub bond_sum: f64,
    pub closed_bound: f64,
    pub holds: bool,
}

/// `2(1 - cos(2π/L)) + 2λ^{2L+2}/(1+λ²)`
pub fn diamond_closed_bound(size: i64, lam: f64) -> f64 {
    let k = 2.0 * std::f64::consts::PI / size as f64;
    2.0 * (1.0 - k.cos()) + 2.0 * lam.powi(2 * size as i32 + 2) / (1.0 + lam * lam)
}

fn diamond_amplitude(p: &LatticePoint, lam: f64, k: f64) -> f64 {
    let (x, y) = (p.coords()[0], p.coords()[1]);
    lam.powi((x + y) as i32) * (k * (x - y) as f64).sin()
}

/// Energy of the edge-mode trial state `Σ λ^{x+y} sin(2π(x-y)/L) ξ_(x,y)`
/// on the diamond `D_L`.
pub fn diamond_probe_energy(size: i64, lam: f64) -> Result<DiamondProbe> {
    if !(lam > 0.0 && lam < 1.0) {
        return Err(PvbsError::InvalidParams(format!(
            "diamond probe needs 0 < lambda < 1, got {lam}"
        )));
    }
    let diamond = DiamondRegion::new(size, true)?;
    let grown = diamond.closure()?;
    let params = ModelParams::new([lam, lam]);
    let k = 2.0 * std::f64::consts::PI / size as f64;
    let amps: Vec<f64> = grown
        .sites()
        .iter()
        .map(|p| {
            if diamond.region().contains(p) {
                diamond_amplitude(p, lam, k)
            } else {
                0.0
            }
        })
        .collect();
    let norm_sq: f64 = amps.iter().map(|a| a * a).sum();
    let h = one_particle_matrix(&grown, &params)?;
    let quotient = h.quadratic_form(&amps) / norm_sq;

    let region = diamond.region();
    let amp = |p: &LatticePoint| {
        if region.contains(p) {
            diamond_amplitude(p, lam, k)
        } else {
            0.0
        }
    };
    let mut energy = 0.0;
    for p in region.sites() {
        for dir in 0..2 {
            let up = p.shifted(dir, 1);
            let down = p.shifted(dir, -1);
            energy += (amp(&up) - lam * amp(p)).powi(2);
            if !region.contains(&down) && grown.contains(&down) {
                energy += (amp(p) - lam * amp(&down)).powi(2);
            }
        }
    }
    let bond_sum = energy / (1.0 + lam * lam) / norm_sq;
    if (quotient - bond_sum).abs() > PROBE_AGREEMENT * bond_sum.abs() {
        return Err(PvbsError::Consistency(format!(
            "diamond probe: quadratic form {quotient:.17e} vs bond sum {bond_sum:.17e}"
        )));
    }
    let closed_bound = diamond_closed_bound(size, lam);
    Ok(DiamondProbe {
        size,
        lambda: lam,
        quotient,
        bond_sum,
        closed_bound,
        holds: quotient <= closed_bound + 1e-12,
    })
}

/// `(Σ_opp sin², Σ_edge sin²)` of `2π(x-y)/L` over the two diamond sides.
pub fn sine_weight_sides(size: i64) -> Result<(f64, f64)> {
    let diamond = DiamondRegion::new(size, false)?;
    let k = 2.0 * std::f64::consts::PI / size as f64;
    let sum = |class| -> f64 {
        diamond
            .sites_in(class)
            .map(|p| (k * (p.coords()[0] - p.coords()[1]) as f64).sin().powi(2))
            .sum()
    };
    Ok((sum(DiamondClass::Opposite), sum(DiamondClass::Edge)))
}
