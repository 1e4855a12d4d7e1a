//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line to stderr
//! (uncaptured) and then asserts.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use pvbs::bounds::{
    bulk_upper_bound, diamond_closed_bound, epsilon, gamma_unit_hypercube, martingale_lower_bound,
    rectangle_probe_energy, slab_condition3_bound,
};
use pvbs::cli::{fit_power_law, run, Command, JobConfig, ProbeSpec, RegionSpec};
use pvbs::groundstate::{max_bond_residual, multispecies_ground_state, one_particle_ground_state};
use pvbs::model::{assemble_multispecies, one_particle_matrix, Limits, ModelParams, Sector};
use pvbs::spectra::{dense_spectrum, finite_gap, one_particle_spectrum, GapMode, SolverOptions};
use pvbs::thermo::{
    classify_scenario, ltqo_f, ltqo_verify, one_particle_weight_in_window, FamilyKind,
    RegionFamily, Scenario,
};
use pvbs::{DiamondRegion, LatticePoint, LatticeRegion, LinearOperator};

fn report(id: u32, pass: bool, detail: &str) {
    let line = format!(
        "criterion {id:>2}: {} {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn l_shape() -> RegionSpec {
    RegionSpec::Sites {
        sites: vec![vec![0, 0], vec![1, 0], vec![2, 0], vec![0, 1], vec![0, 2]],
    }
}

fn random_lambda(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(0.3..3.0)).collect()
}

fn kernel_job(region: RegionSpec, params: ModelParams) -> JobConfig {
    JobConfig::new(Command::Kernel {
        region,
        params,
        one_particle_only: false,
    })
}

/// Kernel jobs of criterion 1.
fn criterion1_jobs() -> Vec<JobConfig> {
    let regions = [
        (RegionSpec::Box { extent: vec![1, 1] }, 2),
        (RegionSpec::Box { extent: vec![2, 1] }, 2),
        (l_shape(), 2),
        (RegionSpec::Box { extent: vec![7] }, 1),
        (RegionSpec::Box { extent: vec![2, 2] }, 2),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut jobs = Vec::new();
    for (region, d) in regions {
        for _ in 0..3 {
            jobs.push(kernel_job(region.clone(), ModelParams::new(random_lambda(&mut rng, d))));
        }
    }
    jobs
}

fn kernel_passes(out: &Value) -> (bool, String) {
    let check = &out["check"];
    let dim = check["kernel_dim"].as_u64().unwrap();
    let angle = check["subspace_angle"].as_f64().unwrap();
    (dim == 2 && angle <= 1e-8, format!("kernel_dim={dim} angle={angle:.1e}"))
}

#[test]
fn criterion_01_kernel_dimension() {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for job in criterion1_jobs() {
        let out = run(&job).unwrap();
        let (ok, detail) = kernel_passes(out.result());
        if !ok {
            eprintln!("  {detail} for {}", serde_json::to_string(&job).unwrap());
        }
        pass &= ok;
        worst = worst.max(out.result()["check"]["subspace_angle"].as_f64().unwrap());
    }
    report(1, pass, &format!("15 regions x draws, worst subspace angle {worst:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_02_bond_annihilation() {
    let cases: Vec<(LatticeRegion, ModelParams)> = vec![
        (
            DiamondRegion::new(22, false).unwrap().region().clone(),
            ModelParams::new([0.5, 0.5]),
        ),
        (LatticeRegion::make_box(&[99, 99]).unwrap(), ModelParams::new([0.8, 1.3])),
        (LatticeRegion::make_box(&[99, 99]).unwrap(), ModelParams::new([0.5, 0.5])),
        (LatticeRegion::make_box(&[9999]).unwrap(), ModelParams::new([0.999])),
        (LatticeRegion::make_box(&[20, 20, 20]).unwrap(), ModelParams::new([0.7, 1.2, 2.5])),
    ];
    let mut worst: f64 = 0.0;
    let mut largest = 0;
    for (r, p) in &cases {
        let psi = one_particle_ground_state(r, p, Sector::Particles(1)).unwrap();
        worst = worst.max(max_bond_residual(r, p, &psi).unwrap());
        largest = largest.max(r.len());
    }
    let pass = worst <= 1e-12 && largest >= 10_000;
    report(2, pass, &format!("max bond residual {worst:.2e} up to {largest} sites"));
    assert!(pass);
}

#[test]
fn criterion_03_unit_square_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let (a, b) = (rng.gen_range(0.3..3.0), rng.gen_range(0.3..3.0));
        let g = gamma_unit_hypercube(&ModelParams::new([a, b]), &opts()).unwrap();
        let closed = 2.0 - (1.0 + 4.0 * a * b / ((1.0 + a * a) * (1.0 + b * b))).sqrt();
        worst = worst.max((g - closed).abs());
    }
    let g = gamma_unit_hypercube(&ModelParams::new([1.0, 1.0]), &opts()).unwrap();
    let at_one = (g - (2.0 - 2f64.sqrt())).abs();
    let pass = worst <= 1e-10 && at_one <= 1e-10;
    report(3, pass, &format!("max |gap - closed form| {worst:.1e}, at (1,1) {at_one:.1e}"));
    assert!(pass);
}

#[test]
fn criterion_04_lower_bound_sandwich() {
    let limits = Limits::default();
    let mut cases: Vec<(Vec<f64>, Vec<usize>, GapMode)> = Vec::new();
    for lam in [[0.5, 0.5], [0.5, 2.0], [0.7, 1.5], [2.0, 3.0]] {
        for ext in [[1, 1], [2, 1], [2, 2], [3, 2]] {
            cases.push((lam.to_vec(), ext.to_vec(), GapMode::Full));
        }
        for ext in [[3, 3], [4, 4], [5, 5]] {
            cases.push((lam.to_vec(), ext.to_vec(), GapMode::Sectors { max_n: 3 }));
        }
    }
    for lam in [0.5, 2.0] {
        for n in [1usize, 3, 7, 11] {
            cases.push((vec![lam], vec![n], GapMode::Full));
        }
        for n in [15usize, 23, 35] {
            cases.push((vec![lam], vec![n], GapMode::Sectors { max_n: 3 }));
        }
    }
    let mut pass = true;
    let mut tightest = f64::INFINITY;
    for (lam, ext, mode) in &cases {
        let p = ModelParams::new(lam.clone());
        let lower = martingale_lower_bound(&p, &opts()).unwrap();
        let region = LatticeRegion::make_box(ext).unwrap();
        let g = finite_gap(&region, &p, *mode, &opts(), &limits).unwrap();
        if g.gap <= lower {
            pass = false;
            eprintln!("  gap {} <= lower {lower} for {lam:?} on {ext:?}", g.gap);
        }
        tightest = tightest.min(g.gap / lower);
    }
    report(
        4,
        pass,
        &format!("{} instances, smallest gap/lower ratio {tightest:.3}", cases.len()),
    );
    assert!(pass);
}

#[test]
fn criterion_05_condition3() {
    let mut pass = true;
    let mut worst_excess = f64::NEG_INFINITY;
    for lam_d in [0.5, 2.0] {
        for cross in [2usize, 3] {
            for n in [2usize, 3, 4] {
                let p = ModelParams::new([0.7, lam_d]);
                let c = slab_condition3_bound(&p, &[cross], n, &Limits::default()).unwrap();
                let eps2 = epsilon(lam_d).unwrap().powi(2);
                let ok = c.numeric_sup <= c.analytic_bound + 1e-10
                    && c.analytic_bound <= eps2 + 1e-10;
                if !ok {
                    eprintln!("  {c:?} for lambda_d={lam_d} N={cross} n={n}");
                }
                pass &= ok;
                worst_excess = worst_excess.max(c.numeric_sup - c.analytic_bound);
            }
        }
    }
    report(5, pass, &format!("max numeric_sup - analytic_bound {worst_excess:.1e}"));
    assert!(pass);
}

#[test]
fn criterion_06_rectangle_probe() {
    let p = ModelParams::new([0.5, 0.5]);
    let upper = bulk_upper_bound(&p).unwrap();
    let mut agree = true;
    let mut estimate_holds = true;
    let mut identity_err: f64 = 0.0;
    let mut rate = Vec::new();
    for n in [5usize, 10, 20, 40] {
        let r = rectangle_probe_energy(&[n, n], &p, &[1.0, 1.0]).unwrap();
        let claimed = upper + 2.0 / (2 * n + 1) as f64;
        agree &= (r.quotient - r.closed_form).abs() <= 1e-10 * r.closed_form;
        estimate_holds &= r.quotient <= claimed + 1e-12;
        identity_err = identity_err.max((r.quotient - claimed).abs());
        rate.push((r.quotient - upper) * (2 * n + 1) as f64);
    }
    let identity = identity_err <= 1e-10;
    let rate_ok = rate.iter().all(|&c| (c - 2.0).abs() <= 1e-10);
    let pass = agree && identity && rate_ok;
    report(
        6,
        pass,
        &format!(
            "closed vs quadratic form agree={agree}; quotient <= 0.4 + sum 1/(2n+1): {estimate_holds}; \
             equality off by {identity_err:.3e}; (quotient - 0.4)(2n+1) = {:.6} (claimed 2)",
            rate[0]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_diamond_gaplessness() {
    let lam = 0.5;
    let out = run(&JobConfig::new(Command::Scaling {
        sizes: vec![6, 10, 14, 18, 22],
        lambda: lam,
    }))
    .unwrap();
    let probes = out.result()["probes"].as_array().unwrap();
    let mut holds = true;
    let mut series = Vec::new();
    for p in probes {
        let size = p["size"].as_i64().unwrap();
        let q = p["quotient"].as_f64().unwrap();
        holds &= q <= diamond_closed_bound(size, lam) + 1e-12;
        series.push((size as f64, q));
    }
    let fit = fit_power_law(&series).unwrap();
    let pass = holds && (-2.2..=-1.8).contains(&fit.exponent);
    report(7, pass, &format!("bounds hold={holds}, fitted exponent {:.4}", fit.exponent));
    assert!(pass);
}

#[test]
fn criterion_08_separability() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let lam = random_lambda(&mut rng, 2);
        let b = LatticeRegion::make_box(&[5, 4]).unwrap();
        let rep = one_particle_spectrum(&b, &ModelParams::new(lam.clone()), 30, &opts()).unwrap();
        let chain = |n: usize, l: f64| {
            dense_spectrum(
                &one_particle_matrix(&LatticeRegion::make_box(&[n]).unwrap(), &ModelParams::new([l]))
                    .unwrap(),
            )
        };
        let (e, f) = (chain(5, lam[0]), chain(4, lam[1]));
        let mut sum: Vec<f64> = e.iter().flat_map(|a| f.iter().map(move |b| a + b)).collect();
        sum.sort_by(f64::total_cmp);
        assert_eq!(rep.eigenvalues.len(), sum.len());
        for (a, b) in rep.eigenvalues.iter().zip(&sum) {
            worst = worst.max((a - b).abs());
        }
    }
    let pass = worst <= 1e-10;
    report(8, pass, &format!("max deviation from Minkowski sum {worst:.1e}"));
    assert!(pass);
}

fn ltqo_window() -> Vec<LatticePoint> {
    LatticeRegion::from_ranges(&[(3, 4), (3, 4)]).unwrap().sites().to_vec()
}

#[test]
fn criterion_09_ltqo() {
    let p = ModelParams::new([0.6, 0.8]);
    let b = LatticeRegion::make_box(&[7, 7]).unwrap();
    let x = ltqo_window();
    let mut pass = true;
    let mut worst_ratio: f64 = 0.0;
    for l in 1..=3usize {
        for t in 0..20u64 {
            let trial = ltqo_verify(&b, &x, l, &p, 1000 * l as u64 + t).unwrap();
            pass &= trial.lhs <= trial.rhs;
            worst_ratio = worst_ratio.max(trial.lhs / trial.rhs);
        }
    }
    let f1 = ltqo_f(&x, 1, &b, &p).unwrap();
    let f3 = ltqo_f(&x, 3, &b, &p).unwrap();
    pass &= f3 / f1 < 1.0;
    report(
        9,
        pass,
        &format!("60 trials, max lhs/rhs {worst_ratio:.3}, f(3)/f(1) = {:.4}", f3 / f1),
    );
    assert!(pass);
}

#[test]
fn criterion_10_scenarios() {
    let half = ModelParams::new([0.5, 0.5]);
    let quadrant = RegionFamily::new(FamilyKind::BoxesToQuadrant, 2).unwrap();
    let v = classify_scenario(&quadrant, &half, 40, 1e-9).unwrap();
    let limit = v.limit_estimate.unwrap_or(f64::NAN);
    let ii = v.scenario == Scenario::II && (limit - 16.0 / 9.0).abs() <= 1e-9;
    let zd = RegionFamily::new(FamilyKind::BoxesToZd, 2).unwrap();
    let i_boxes = classify_scenario(&zd, &half, 40, 1e-9).unwrap().scenario == Scenario::I;
    let ones = classify_scenario(&quadrant, &ModelParams::new([1.0, 1.0]), 40, 1e-9).unwrap();
    let i_flat = ones.scenario == Scenario::I;
    let last = quadrant.region(40).unwrap();
    let w = one_particle_weight_in_window(&last, &half, &[LatticePoint::new(vec![0, 0])]).unwrap();
    let weight_ok = (w - 9.0 / 16.0).abs() <= 1e-9;
    let pass = ii && i_boxes && i_flat && weight_ok;
    report(
        10,
        pass,
        &format!("quadrant II limit {limit:.12}; Z^2 I={i_boxes}; flat I={i_flat}; origin weight {w:.12}"),
    );
    assert!(pass);
}

fn criterion11_jobs() -> Vec<JobConfig> {
    [-0.5, 0.0, 1.0, 5.0]
        .iter()
        .map(|&delta| {
            kernel_job(
                RegionSpec::Box { extent: vec![1, 2] },
                ModelParams::new([0.8, 1.3]).with_delta(delta),
            )
        })
        .collect()
}

#[test]
fn criterion_11_xxz_kernel() {
    let mut pass = true;
    let mut details = Vec::new();
    for job in criterion11_jobs() {
        let out = run(&job).unwrap();
        let (ok, detail) = kernel_passes(out.result());
        pass &= ok;
        details.push(detail);
    }
    report(11, pass, &details.join("; "));
    assert!(pass);
}

fn criterion12_jobs() -> Vec<JobConfig> {
    vec![
        kernel_job(
            RegionSpec::Box { extent: vec![3] },
            ModelParams::multispecies(vec![vec![0.6], vec![1.7]]),
        ),
        kernel_job(
            RegionSpec::Box { extent: vec![1, 1] },
            ModelParams::multispecies(vec![vec![0.6, 1.4], vec![1.7, 0.5]]),
        ),
    ]
}

#[test]
fn criterion_12_multispecies_kernel() {
    let mut pass = true;
    let mut worst_res: f64 = 0.0;
    let mut worst_overlap: f64 = 0.0;
    for job in criterion12_jobs() {
        let out = run(&job).unwrap();
        let r = out.result();
        assert_eq!(r["states"].as_array().unwrap().len(), 4);
        let res = r["max_residual"].as_f64().unwrap();
        let ov = r["max_overlap"].as_f64().unwrap();
        pass &= res <= 1e-12 && ov <= 1e-14;
        worst_res = worst_res.max(res);
        worst_overlap = worst_overlap.max(ov);
    }
    // independent of the job runner: direct assembly on the 2x2 box
    let b = LatticeRegion::make_box(&[1, 1]).unwrap();
    let p = ModelParams::multispecies(vec![vec![0.6, 1.4], vec![1.7, 0.5]]);
    let h = assemble_multispecies(&b, &p, &Limits::default()).unwrap();
    let s = multispecies_ground_state(&b, &p, &[1, 2]).unwrap();
    let mut y = vec![0.0; h.dim()];
    h.apply(&s.amplitudes, &mut y);
    pass &= y.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-12;
    report(
        12,
        pass,
        &format!("max residual {worst_res:.1e}, max overlap {worst_overlap:.1e}"),
    );
    assert!(pass);
}

/// Every number in `a` matches the one at the same place in `b`.
fn compare_numbers(a: &Value, b: &Value, worst: &mut f64) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            let rel = if x == y { 0.0 } else { (x - y).abs() / x.abs().max(y.abs()) };
            *worst = worst.max(rel);
            rel <= 1e-12
        }
        (Value::Array(x), Value::Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| compare_numbers(p, q, worst))
        }
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len()
                && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| compare_numbers(v, w, worst)))
        }
        _ => a == b,
    }
}

#[test]
fn criterion_13_replay() {
    let mut jobs = criterion1_jobs();
    jobs.push(JobConfig::new(Command::Kernel {
        region: RegionSpec::Diamond { size: 22, odd_half: true },
        params: ModelParams::new([0.5, 0.5]),
        one_particle_only: true,
    }));
    jobs.push(JobConfig::new(Command::Bounds { params: ModelParams::new([0.5, 1.0 / 3.0]) }));
    jobs.push(JobConfig::new(Command::Gap {
        region: RegionSpec::Box { extent: vec![3, 2] },
        params: ModelParams::new([0.7, 1.5]),
        mode: GapMode::Full,
    }));
    jobs.push(JobConfig::new(Command::Gap {
        region: RegionSpec::Box { extent: vec![4, 4] },
        params: ModelParams::new([0.5, 2.0]),
        mode: GapMode::Sectors { max_n: 3 },
    }));
    jobs.push(JobConfig::new(Command::Condition3 {
        params: ModelParams::new([0.7, 2.0]),
        cross_section: vec![3],
        heights: vec![2, 3, 4],
    }));
    jobs.push(JobConfig::new(Command::Probe {
        probe: ProbeSpec::Rectangle {
            boxes: vec![vec![5, 5], vec![10, 10], vec![20, 20], vec![40, 40]],
            params: ModelParams::new([0.5, 0.5]),
            z: vec![1.0, 1.0],
        },
    }));
    jobs.push(JobConfig::new(Command::Scaling {
        sizes: vec![6, 10, 14, 18, 22],
        lambda: 0.5,
    }));
    jobs.push(JobConfig::new(Command::Spectrum {
        region: RegionSpec::Box { extent: vec![5, 4] },
        params: ModelParams::new([0.9, 2.2]),
        count: 30,
    }));
    jobs.push(JobConfig::new(Command::Ltqo {
        box_extent: vec![7, 7],
        window: ltqo_window().iter().map(|p| p.coords().to_vec()).collect(),
        radii: vec![1, 2, 3],
        params: ModelParams::new([0.6, 0.8]),
        trials: 20,
    }));
    jobs.push(JobConfig::new(Command::Scenario {
        family: FamilyKind::BoxesToQuadrant,
        params: ModelParams::new([0.5, 0.5]),
        n_max: 40,
        tol: 1e-9,
    }));
    jobs.extend(criterion11_jobs());
    jobs.extend(criterion12_jobs());

    let dir = tempfile::tempdir().unwrap();
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for (i, job) in jobs.iter().enumerate() {
        let first = run(job).unwrap();
        let written = first.write(dir.path(), &format!("job{i}")).unwrap();
        let replayed = JobConfig::load(&written[0]).unwrap();
        pass &= &replayed == job;
        let second = run(&replayed).unwrap();
        pass &= compare_numbers(&first.report, &second.report, &mut worst);
    }
    report(
        13,
        pass,
        &format!("{} logged jobs replayed, worst relative deviation {worst:.1e}", jobs.len()),
    );
    assert!(pass);
}
