//! Lowest eigenpairs of symmetric operators and finite-volume gaps.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PvbsError, Result};
use crate::groundstate::{kernel_pair, one_particle_amplitudes};
use crate::lattice::LatticeRegion;
use crate::model::{assemble_full, assemble_sector, one_particle_matrix, Limits, ModelParams};
use crate::sparse::{LinearOperator, SparseOperator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Residual target relative to `||op||_1`.
    pub tol: f64,
    pub seed: u64,
    /// Krylov vectors kept before an explicit restart.
    pub max_krylov: usize,
    pub max_restarts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-11,
            seed: 0,
            max_krylov: 200,
            max_restarts: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub eigenvalues: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub kernel_dim: usize,
    /// Smallest computed eigenvalue above the zero threshold.
    pub gap: Option<f64>,
    pub zero_threshold: f64,
    pub iterations: usize,
    pub tol: f64,
    pub seed: u64,
}

/// Eigenvalues below this count as zero.
pub fn zero_threshold(norm_one: f64) -> f64 {
    1e-10 * (1.0 + norm_one)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Two passes of classical Gram-Schmidt against `basis`.
fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, w);
            axpy(-c, b, w);
        }
    }
}

fn project_apply<O: LinearOperator + ?Sized>(op: &O, locked: &[Vec<f64>], x: &[f64], y: &mut [f64]) {
    op.apply(x, y);
    orthogonalize(y, locked);
}

/// Smallest eigenpair of the symmetric tridiagonal `(alpha, beta)`.
fn tridiagonal_lowest(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let e = SymmetricEigen::new(t);
    let k = e
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap();
    (e.eigenvalues[k], e.eigenvectors.column(k).iter().copied().collect())
}

/// The `count` smallest eigenpairs of `op` on the orthogonal complement of
/// `deflate`, found one at a time by restarted Lanczos with full
/// reorthogonalization and locking. Fewer pairs are returned when the
/// complement is smaller than `count`.
pub fn lowest_eigenpairs<O: LinearOperator + ?Sized>(
    op: &O,
    count: usize,
    opts: &SolverOptions,
    deflate: &[Vec<f64>],
) -> Result<(SpectralReport, Vec<Vec<f64>>)> {
    let n = op.dim();
    let op_norm = op.norm_one();
    let target = opts.tol * op_norm.max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut locked: Vec<Vec<f64>> = Vec::new();
    for v in deflate {
        if v.len() != n {
            return Err(PvbsError::InvalidParams(format!(
                "deflation vector has length {}, operator has dimension {n}",
                v.len()
            )));
        }
        let mut w = v.clone();
        orthogonalize(&mut w, &locked);
        let nw = norm(&w);
        if nw > 1e-8 {
            w.iter_mut().for_each(|x| *x /= nw);
            locked.push(w);
        }
    }
    let n_deflate = locked.len();

    let mut pairs: Vec<(f64, f64, Vec<f64>)> = Vec::new();
    let mut iterations = 0;
    let mut w = vec![0.0; n];
    while pairs.len() < count && locked.len() < n {
        let room = n - locked.len();
        let mut start = random_start(&mut rng, n, &locked);
        let mut found = None;
        for _restart in 0..=opts.max_restarts {
            let m_max = opts.max_krylov.min(room).max(1);
            let mut basis: Vec<Vec<f64>> = vec![start.clone()];
            let mut alpha = Vec::new();
            let mut beta: Vec<f64> = Vec::new();
            let (ritz, exhausted) = loop {
                let j = basis.len() - 1;
                project_apply(op, &locked, &basis[j], &mut w);
                iterations += 1;
                let a = dot(&basis[j], &w);
                alpha.push(a);
                axpy(-a, &basis[j], &mut w);
                if j > 0 {
                    axpy(-beta[j - 1], &basis[j - 1], &mut w);
                }
                orthogonalize(&mut w, &locked);
                orthogonalize(&mut w, &basis);
                let b = norm(&w);
                let breakdown = b <= 1e-13 * op_norm.max(1.0);
                let full = basis.len() >= m_max;
                if breakdown || full || basis.len().is_multiple_of(5) {
                    let ritz = tridiagonal_lowest(&alpha, &beta);
                    let estimate = b * ritz.1.last().unwrap().abs();
                    let exhausted = breakdown || basis.len() == room;
                    if exhausted || estimate <= 0.1 * target || full {
                        break (ritz, exhausted);
                    }
                }
                beta.push(b);
                basis.push(w.iter().map(|x| x / b).collect());
            };
            let (theta, s) = ritz;
            let mut y = vec![0.0; n];
            for (v, c) in basis.iter().zip(&s) {
                axpy(*c, v, &mut y);
            }
            orthogonalize(&mut y, &locked);
            let ny = norm(&y);
            y.iter_mut().for_each(|x| *x /= ny);
            project_apply(op, &locked, &y, &mut w);
            iterations += 1;
            let rq = dot(&y, &w);
            axpy(-rq, &y, &mut w);
            let res = norm(&w);
            if res <= target || exhausted {
                found = Some((rq, res, y));
                break;
            }
            log::debug!("restart: theta = {theta:.6e}, residual = {res:.3e}");
            start = y;
        }
        let Some((theta, res, y)) = found else {
            return Err(PvbsError::NonConvergence(format!(
                "eigenpair {} not converged to {:.1e} after {} restarts of {} vectors",
                pairs.len(),
                target,
                opts.max_restarts,
                opts.max_krylov
            )));
        };
        if res > target {
            log::warn!("eigenpair {} residual {res:.3e} above target {target:.3e}", pairs.len());
        }
        locked.push(y.clone());
        pairs.push((theta, res, y));
    }
    debug_assert_eq!(locked.len(), n_deflate + pairs.len());
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let thr = zero_threshold(op_norm);
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let report = SpectralReport {
        kernel_dim: eigenvalues.iter().filter(|e| e.abs() < thr).count(),
        gap: eigenvalues.iter().copied().find(|&e| e >= thr),
        residual_norms: pairs.iter().map(|p| p.1).collect(),
        eigenvalues,
        zero_threshold: thr,
        iterations,
        tol: opts.tol,
        seed: opts.seed,
    };
    Ok((report, pairs.into_iter().map(|p| p.2).collect()))
}

fn random_start(rng: &mut ChaCha8Rng, n: usize, locked: &[Vec<f64>]) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        orthogonalize(&mut v, locked);
        let nv = norm(&v);
        if nv > 1e-6 {
            v.iter_mut().for_each(|x| *x /= nv);
            return v;
        }
    }
}

/// All eigenvalues (ascending) and matching eigenvector columns.
pub fn dense_eigen(op: &SparseOperator) -> (Vec<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(op.to_dense());
    let mut order: Vec<usize> = (0..op.dim()).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = order.iter().map(|&k| e.eigenvalues[k]).collect();
    let vecs = DMatrix::from_fn(op.dim(), op.dim(), |i, j| e.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

pub fn dense_spectrum(op: &SparseOperator) -> Vec<f64> {
    dense_eigen(op).0
}

/// Numerical kernel of an operator compared against a proposed basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelCheck {
    pub kernel_dim: usize,
    pub zero_threshold: f64,
    /// `||(I - QQ^T) V||_2` with `Q` the numerical kernel and `V` the
    /// proposed orthonormal basis.
    pub subspace_angle: f64,
    /// Lowest few eigenvalues for diagnostics.
    pub low_eigenvalues: Vec<f64>,
}

/// Dense diagonalization of `op`; compares the eigenspace below the zero
/// threshold with `span(expected)`.
pub fn kernel_check(op: &SparseOperator, expected: &[Vec<f64>]) -> Result<KernelCheck> {
    let n = op.dim();
    if expected.iter().any(|v| v.len() != n) {
        return Err(PvbsError::InvalidParams("basis vector has the wrong length".into()));
    }
    let thr = zero_threshold(op.norm_one());
    let (vals, vecs) = dense_eigen(op);
    let kernel_dim = vals.iter().filter(|e| e.abs() < thr).count();
    let q = vecs.columns(0, kernel_dim);
    let v = DMatrix::from_fn(n, expected.len(), |i, j| expected[j][i]);
    let residual = &v - q * (q.transpose() * &v);
    let mut angle = residual.singular_values().max();
    if kernel_dim > expected.len() {
        // extra kernel directions are not captured by the proposed basis
        angle = angle.max(1.0);
    }
    Ok(KernelCheck {
        kernel_dim,
        zero_threshold: thr,
        subspace_angle: angle,
        low_eigenvalues: vals.into_iter().take(kernel_dim + 3).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    /// Whole Fock space with the analytic kernel deflated.
    Full,
    /// Sectors `1..=max_n` only.
    Sectors { max_n: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub gap: f64,
    pub mode: GapMode,
    /// `true` when some particle-number sector was not examined, so `gap`
    /// is only an upper bound for the true gap.
    pub partial_coverage: bool,
    /// Sector attaining the minimum (`None` in full mode).
    pub sector: Option<usize>,
    pub reports: Vec<SpectralReport>,
}

/// Smallest nonzero eigenvalue of `H_Λ`.
pub fn finite_gap(
    region: &LatticeRegion,
    params: &ModelParams,
    mode: GapMode,
    opts: &SolverOptions,
    limits: &Limits,
) -> Result<GapResult> {
    region.require_connected()?;
    params.require_ground_state_regime()?;
    if region.len() < 2 {
        return Err(PvbsError::InvalidRegion(
            "a single site has no nonzero spectrum".into(),
        ));
    }
    match mode {
        GapMode::Full => {
            let h = assemble_full(region, params, limits)?;
            let (a, b) = kernel_pair(region, params)?;
            let (report, _) = lowest_eigenpairs(&h, 1, opts, &[a.amplitudes, b.amplitudes])?;
            let gap = checked_gap(&report)?;
            Ok(GapResult {
                gap,
                mode,
                partial_coverage: false,
                sector: None,
                reports: vec![report],
            })
        }
        GapMode::Sectors { max_n } => {
            if max_n == 0 || max_n > region.len() {
                return Err(PvbsError::OutOfRange {
                    what: "max_n",
                    value: max_n as i64,
                    allowed: format!("1..={}", region.len()),
                });
            }
            let mut reports = Vec::new();
            let h1 = one_particle_matrix(region, params)?;
            let psi1 = one_particle_amplitudes(region, params)?;
            let (r1, _) = lowest_eigenpairs(&h1, 1, opts, &[psi1])?;
            let mut best = (checked_gap(&r1)?, 1);
            reports.push(r1);
            for n in 2..=max_n {
                let (_, h) = assemble_sector(region, params, n, limits)?;
                let (r, _) = lowest_eigenpairs(&h, 1, opts, &[])?;
                let g = checked_gap(&r)?;
                if g < best.0 {
                    best = (g, n);
                }
                reports.push(r);
            }
            Ok(GapResult {
                gap: best.0,
                mode,
                partial_coverage: max_n < region.len(),
                sector: Some(best.1),
                reports,
            })
        }
    }
}

fn checked_gap(report: &SpectralReport) -> Result<f64> {
    match report.eigenvalues.first() {
        Some(&e) if e >= report.zero_threshold => Ok(e),
        Some(&e) => Err(PvbsError::Consistency(format!(
            "eigenvalue {e:.3e} below the zero threshold after removing the analytic kernel"
        ))),
        None => Err(PvbsError::Consistency("no eigenvalue outside the kernel".into())),
    }
}

/// Smallest `count` eigenvalues of the one-particle matrix.
pub fn one_particle_spectrum(
    region: &LatticeRegion,
    params: &ModelParams,
    count: usize,
    opts: &SolverOptions,
) -> Result<SpectralReport> {
    region.require_connected()?;
    let h = one_particle_matrix(region, params)?;
    Ok(lowest_eigenpairs(&h, count.min(region.len()), opts, &[])?.0)
}
