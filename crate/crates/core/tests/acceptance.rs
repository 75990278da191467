//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use condex::diagnostics::{cpo_pit, model_chi_curves, waic, CpoMethod, RegionPartition};
use condex::episodes::{decluster_runs, EpisodeSet, RunsConfig};
use condex::gmrf::{ar1_precision, factorize, matern_to_spde, Dimension, KrigingCorrection, SpdeOperator};
use condex::inference::{condition, fit, FitConfig, GaussianSystem, PosteriorFit, PriorTerms};
use condex::marginals::fit_gpd;
use condex::mesh::{distances, Mesh1D, Mesh2D, Point};
use condex::model::{parametric_alpha, AssembledModel, ModelSpec, Residual};
use condex::par::Execution;
use condex::simulate::{ConditionalSimulator, ResidualSampler};
use condex::sparse::{CsrMatrix, SymCsc};
use condex::stats::{ks_critical_1pct, ks_statistic, laplace_cdf, laplace_quantile, matern_correlation};

const EXEC: Execution = Execution::Parallel;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn dense_sym(q: &SymCsc) -> DMatrix<f64> {
    q.to_dense()
}

fn csr_from_dense(a: &DMatrix<f64>) -> CsrMatrix {
    let mut trip = Vec::new();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if a[(i, j)] != 0.0 {
                trip.push((i, j, a[(i, j)]));
            }
        }
    }
    CsrMatrix::from_triplets(a.nrows(), a.ncols(), &trip).unwrap()
}

fn dense_log_normal(y: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let chol = cov.clone().cholesky().unwrap();
    let ld = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    -0.5 * (y.len() as f64) * (2.0 * std::f64::consts::PI).ln() - 0.5 * ld - 0.5 * y.dot(&chol.solve(y))
}

/// Sparse SPD matrix: a random sparse symmetric pattern made diagonally dominant.
fn random_sparse_spd(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..i {
            if rng.random::<f64>() < 0.3 {
                let v: f64 = rng.sample(StandardNormal);
                q[(i, j)] = v;
                q[(j, i)] = v;
            }
        }
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| q[(i, j)].abs()).sum();
        q[(i, i)] = off + 0.5 + rng.random::<f64>();
    }
    q
}

fn gmrf_oracles() -> Outcome {
    let results: Vec<(f64, f64)> = condex::par::map_indexed(20, EXEC, |trial| {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial as u64);
        let m = 3 + trial % 10;
        let qd = random_sparse_spd(m, &mut rng);
        let q = SymCsc::from_dense(&qd);
        let f = factorize(&q).unwrap();
        let cov = qd.clone().try_inverse().unwrap();
        let w: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let wv = DVector::from_column_slice(&w);
        let dense_ld = 2.0 * qd.clone().cholesky().unwrap().l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let mut err: f64 = (f.log_det() - dense_ld).abs();
        err = err.max((f.log_density(&q, &w) - dense_log_normal(&wv, &cov)).abs());
        let solved = f.solve(&b);
        let dense_solved = &cov * DVector::from_column_slice(&b);
        err = err.max(solved.iter().zip(dense_solved.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));

        // constrained covariance from draws
        let k = 1 + trial % 2;
        let bd = DMatrix::from_fn(k, m, |_, _| -> f64 { rng.sample(StandardNormal) });
        let bs = csr_from_dense(&bd);
        let kc = KrigingCorrection::new(&f, &bs).unwrap();
        let zero = vec![0.0; k];
        let draws = 200_000;
        let mut s = DMatrix::<f64>::zeros(m, m);
        for _ in 0..draws {
            let x = DVector::from_vec(kc.apply(&f.sample(&mut rng), &zero));
            s += &x * x.transpose();
        }
        s /= draws as f64;
        let vb = &cov * bd.transpose();
        let target = &cov - &vb * (&bd * &vb).try_inverse().unwrap() * vb.transpose();
        (err, (s - &target).norm() / target.norm())
    });
    let exact = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let frob = results.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(exact < 1e-8 && frob < 0.03, format!("max exact error {exact:.2e}; max constrained Frobenius error {:.2}%", 100.0 * frob))
}

fn kronecker_ar1() -> Outcome {
    let mut err: f64 = 0.0;
    for len in 1..=8 {
        for rho in [-0.8, -0.3, 0.0, 0.4, 0.9] {
            let inv = dense_sym(&ar1_precision(len, rho).unwrap()).try_inverse().unwrap();
            for i in 0..len {
                for j in 0..len {
                    err = err.max((inv[(i, j)] - f64::powi(rho, (i as i32 - j as i32).abs())).abs());
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (nt, ns) in [(2, 3), (4, 4), (6, 4), (3, 2)] {
        let qt = ar1_precision(nt, 0.6).unwrap();
        let qs = SymCsc::from_dense(&random_sparse_spd(ns, &mut rng));
        let lhs = dense_sym(&qt.kron(&qs)).try_inverse().unwrap();
        let rhs = dense_sym(&qt).try_inverse().unwrap().kronecker(&dense_sym(&qs).try_inverse().unwrap());
        err = err.max((lhs - rhs).amax());
    }
    outcome(err < 1e-10, format!("max error {err:.2e}"))
}

/// Correlation of every vertex with vertex `c`, from a column of `Q⁻¹`.
fn correlations_from(q: &SymCsc, c: usize) -> Vec<f64> {
    let f = factorize(q).unwrap();
    let mut e = vec![0.0; q.dim()];
    e[c] = 1.0;
    let col = f.solve(&e);
    let var = f.selected_inverse().diag();
    (0..q.dim()).map(|i| col[i] / (var[i] * var[c]).sqrt()).collect()
}

fn spde_fidelity() -> Outcome {
    // 1D: 200 knots, spacing 0.5, range 10
    let range = 10.0;
    let knots: Vec<f64> = (0..200).map(|i| i as f64 * 0.5).collect();
    let mesh = Mesh1D::new(knots.clone(), 1, false).unwrap();
    let op = SpdeOperator::new(&mesh.fem(), 0.5, Dimension::One).unwrap();
    let q = op.precision_for(range, 1.0).unwrap();
    let c = 80;
    let corr = correlations_from(&q, c);
    let kappa = 2.0 / range;
    let at_range = corr[c + 20];
    let mut curve_err: f64 = 0.0;
    for k in 2..=20 {
        let h = k as f64 * 0.5;
        curve_err = curve_err.max((corr[c + k] - (-kappa * h).exp()).abs());
    }
    // 2D: regular grid, range 6
    let sites: Vec<Point> = (0..21 * 21).map(|k| [(k % 21) as f64, (k / 21) as f64]).collect();
    let mesh2 = Mesh2D::build(&sites, 1.0, 2.0, 8.0).unwrap();
    let op2 = SpdeOperator::new(&mesh2.fem(), 0.5, Dimension::Two).unwrap();
    let range2 = 6.0;
    let q2 = op2.precision_for(range2, 1.0).unwrap();
    let center = mesh2.vertices().iter().position(|v| (v[0] - 10.0).abs() < 1e-9 && (v[1] - 10.0).abs() < 1e-9).unwrap();
    let corr2 = correlations_from(&q2, center);
    let kappa2 = 2.0 / range2;
    let mut err2: f64 = 0.0;
    for lag in 1..=5 {
        let v = mesh2.vertices().iter().position(|v| (v[0] - 10.0 - lag as f64).abs() < 1e-9 && (v[1] - 10.0).abs() < 1e-9).unwrap();
        err2 = err2.max((corr2[v] - matern_correlation(lag as f64, kappa2, 0.5)).abs());
    }
    let pass = (at_range - 0.10).abs() <= 0.05 && curve_err < 0.05 && err2 < 0.08;
    outcome(pass, format!("1D corr at range {at_range:.3}, max curve error {curve_err:.3}; 2D max error {err2:.3}"))
}

fn marginal_likelihood_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut err: f64 = 0.0;
    for trial in 0..20 {
        let m = 1 + trial % 6;
        let d = 1 + trial % 8;
        let qd = random_sparse_spd(m, &mut rng);
        let a = DMatrix::from_fn(d, m, |_, _| -> f64 { if rng.random::<f64>() < 0.6 { rng.sample(StandardNormal) } else { 0.0 } });
        let offset = DVector::from_fn(d, |_, _| -> f64 { rng.sample(StandardNormal) });
        let v = DVector::from_fn(d, |_, _| -> f64 { 2.0 * rng.sample::<f64, _>(StandardNormal) });
        let s2 = 0.2 + rng.random::<f64>();
        let prior = SymCsc::from_dense(&qd);
        let post = SymCsc::from_dense(&(&qd + a.transpose() * &a / s2));
        let design = csr_from_dense(&a);
        let response: Vec<f64> = (&v - &offset).iter().cloned().collect();
        let sys = GaussianSystem {
            prior: &prior,
            prior_terms: PriorTerms::from_precision(&prior, None).unwrap(),
            posterior: &post,
            design: &design,
            response: &response,
            noise_variance: s2,
            constraint: None,
        };
        let (_, ll) = condition(&sys, None).unwrap();
        let cov = &a * qd.try_inverse().unwrap() * a.transpose() + DMatrix::identity(d, d) * s2;
        err = err.max((ll - dense_log_normal(&(&v - &offset), &cov)).abs());
    }
    outcome(err < 1e-8, format!("max error {err:.2e}"))
}

fn grid_sites(nx: usize, ny: usize) -> Vec<Point> {
    (0..nx * ny).map(|k| [(k % nx) as f64, (k / nx) as f64]).collect()
}

/// Episodes from a model with α = exp(−h/5), γ = 0, β = 0 and a Matérn
/// residual, conditioned at site `s0`.
#[allow(clippy::too_many_arguments)]
fn simulate_truth(
    sites: &[Point],
    s0: usize,
    mesh: &Mesh2D,
    ell: usize,
    noise_sd: f64,
    residual_sd: f64,
    residual_range: f64,
    n: usize,
    seed: u64,
) -> EpisodeSet {
    let op = SpdeOperator::new(&mesh.fem(), 0.5, Dimension::Two).unwrap();
    let qs = op.precision(&matern_to_spde(residual_range, residual_sd, 0.5, Dimension::Two).unwrap());
    let q = if ell > 1 { ar1_precision(ell, 0.5).unwrap().kron(&qs) } else { qs };
    let a = mesh.observation_matrix(sites).unwrap();
    let a0 = a.select_rows(&[s0]);
    let res = ResidualSampler::new(&q, a, a0, ell, Residual::SubtractS0).unwrap();
    let dist = distances(sites, sites[s0]);
    let mut alpha = Vec::new();
    for t in 0..ell {
        alpha.extend(dist.iter().map(|&h| parametric_alpha(h, 5.0, 1.0) * 0.9f64.powi(t as i32)));
    }
    let d = sites.len();
    let sim = ConditionalSimulator::new(d, ell, s0, alpha, vec![0.0; d * ell], 0.0, noise_sd, Some(res)).unwrap();
    sim.simulate_episodes(n, laplace_quantile(0.95), seed, EXEC)
}

fn assemble(preset: u8, mechanism: Option<Residual>, episodes: &EpisodeSet, sites: &[Point], mesh: &Mesh2D) -> AssembledModel {
    let mut spec = ModelSpec::preset(preset).unwrap();
    if let Some(m) = mechanism {
        spec.residual = m;
    }
    let dist = distances(sites, sites[episodes.conditioning_site]);
    let max = dist.iter().cloned().fold(0.0, f64::max);
    spec.splines.range = 2.0 * max;
    let spline = spec.spline_mesh(max).unwrap();
    AssembledModel::assemble(&spec, episodes, sites, Some(mesh), &spline).unwrap()
}

fn fit_model(model: AssembledModel) -> PosteriorFit {
    fit(Arc::new(model), &FitConfig::default()).unwrap()
}

fn constraint_invariants() -> Outcome {
    let sites = grid_sites(5, 5);
    let s0 = 12;
    let mesh = Mesh2D::build(&sites, 1.0, 2.0, 2.0).unwrap();
    let episodes = simulate_truth(&sites, s0, &mesh, 2, 0.2, 1.0, 3.0, 10, 5);
    let mut worst: f64 = 0.0;
    let mut variants = 0;
    for preset in 0..=6u8 {
        let mechanisms: &[Option<Residual>] =
            if preset == 6 { &[None] } else { &[Some(Residual::SubtractS0), Some(Residual::ConditionS0)] };
        for &mech in mechanisms {
            let f = fit_model(assemble(preset, mech, &episodes, &sites, &mesh));
            let model = f.model();
            let mut latents = vec![(f.latent_mean(), f.hyper_mean())];
            for s in 0..20 {
                let d = f.draw(9, s);
                latents.push((d.latent, f.grid()[d.grid_index].params));
            }
            for (w, h) in &latents {
                worst = worst.max((model.alpha_at(w, h, 0.0, 0).unwrap() - 1.0).abs());
                worst = worst.max(model.gamma_at(w, 0.0, 0).unwrap().abs());
                for j in 0..model.n_episodes() {
                    worst = worst.max(model.residual_at(w, model.row_index(j, s0, 0)).abs());
                }
            }
            // simulated episodes from the fit
            let sim = ConditionalSimulator::from_fit(&f).unwrap();
            for (x, values) in sim.simulate(20, 2.0, 3, EXEC) {
                worst = worst.max((values[s0] - x).abs());
            }
            if let Some(r) = ResidualSampler::for_model(model, &f.hyper_mean()).unwrap() {
                let mut rng = ChaCha8Rng::seed_from_u64(4);
                for _ in 0..20 {
                    worst = worst.max(r.sample(&mut rng)[s0].abs());
                }
            }
            variants += 1;
        }
    }
    outcome(worst < 1e-10, format!("{variants} variants, max deviation {worst:.2e}"))
}

struct RecoveryData {
    sites: Vec<Point>,
    mesh: Mesh2D,
    episodes: EpisodeSet,
}

fn recovery_data() -> RecoveryData {
    let sites = grid_sites(10, 10);
    let mesh = Mesh2D::build(&sites, 1.0, 2.0, 4.0).unwrap();
    let episodes = simulate_truth(&sites, 44, &mesh, 1, 0.1, 1.5, 4.0, 50, 2024);
    RecoveryData { sites, mesh, episodes }
}

fn recovery(f3: &PosteriorFit) -> Outcome {
    let truth = [("noise_variance", 0.01), ("residual_sd", 1.5), ("residual_range", 4.0)];
    let mut pass = true;
    let mut parts = Vec::new();
    for s in f3.hyper_summaries() {
        let (name, mode, lower, upper) = if s.name == "noise_sd" {
            ("noise_variance", s.mode * s.mode, s.lower * s.lower, s.upper * s.upper)
        } else {
            (s.name.as_str(), s.mode, s.lower, s.upper)
        };
        let Some(&(_, t)) = truth.iter().find(|(n, _)| *n == name) else { continue };
        let close = (mode - t).abs() <= 0.2 * t;
        let covered = lower <= t && t <= upper;
        pass &= close && covered;
        parts.push(format!("{name} mode {mode:.4} [{lower:.4}, {upper:.4}] truth {t}"));
    }
    outcome(pass, parts.join("; "))
}

fn waic_ordering(f0: &PosteriorFit, f3: &PosteriorFit, f6: &PosteriorFit) -> Outcome {
    let w: Vec<f64> = [f0, f3, f6].iter().map(|f| waic(f, 1000, 11, EXEC).unwrap().waic).collect();
    outcome(w[1] < w[0] && w[1] < w[2], format!("WAIC model 0 {:.1}, model 3 {:.1}, model 6 {:.1}", w[0], w[1], w[2]))
}

fn dependence_signature(f0: &PosteriorFit, f3: &PosteriorFit) -> Outcome {
    let model = f3.model();
    let partition = RegionPartition::rings(model.site_distances(), model.conditioning_site(), 4).unwrap();
    // mid-range band
    let band = 2;
    let chi = |f: &PosteriorFit| {
        let sim = ConditionalSimulator::from_fit(f).unwrap();
        let rows = model_chi_curves(&sim, &partition, &[0.9, 0.99], 50_000, 13, EXEC).unwrap();
        let at = |q: f64| rows.iter().find(|r| r.q == q && r.region == band).unwrap().model.unwrap();
        (at(0.9), at(0.99))
    };
    let (m3_90, m3_99) = chi(f3);
    let (m0_90, m0_99) = chi(f0);
    let r = &partition.regions[band];
    outcome(
        m3_99 < m3_90 - 0.02 && (m0_99 - m0_90).abs() < 0.05,
        format!(
            "distance ({:.2}, {:.2}]: model 3 chi 0.9 {m3_90:.3} / 0.99 {m3_99:.3}; model 0 chi 0.9 {m0_90:.3} / 0.99 {m0_99:.3}",
            r.inner, r.outer
        ),
    )
}

fn marginal_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let t = StudentT::new(3.0).unwrap();
    let sample: Vec<f64> = (0..10_000).map(|_| t.sample(&mut rng)).collect();
    let m = fit_gpd(&sample, 0.95).unwrap();
    let laplace: Vec<f64> = sample.iter().map(|&y| m.to_laplace(y).unwrap()).collect();
    let ks = ks_statistic(&laplace, laplace_cdf);
    let crit = ks_critical_1pct(laplace.len());
    let round_trip = sample
        .iter()
        .zip(&laplace)
        .filter(|(y, _)| **y > m.v)
        .map(|(y, x)| (m.from_laplace(*x) - y).abs())
        .fold(0.0, f64::max);
    outcome(ks < crit && round_trip < 1e-10, format!("KS {ks:.4} (critical {crit:.4}); GPD round trip {round_trip:.2e}"))
}

fn pit_calibration(f3: &PosteriorFit, data: &RecoveryData) -> Outcome {
    let sim = ConditionalSimulator::from_fit(f3).unwrap();
    let episodes = sim.simulate_episodes(50, laplace_quantile(0.95), 77, EXEC);
    let refit = fit_model(assemble(3, None, &episodes, &data.sites, &data.mesh));
    let pit = cpo_pit(&refit, CpoMethod::Integrated, EXEC).unwrap().pit;
    let ks = ks_statistic(&pit, |p| p.clamp(0.0, 1.0));
    let crit = ks_critical_1pct(pit.len());
    let sampled = cpo_pit(&refit, CpoMethod::Sampled { samples: 1000, seed: 5 }, EXEC).unwrap().pit;
    let ks_sampled = ks_statistic(&sampled, |p| p.clamp(0.0, 1.0));
    outcome(
        ks < crit,
        format!("{} observations, KS {ks:.4} (critical {crit:.4}); sampled estimator KS {ks_sampled:.4}", pit.len()),
    )
}

fn declustering() -> Outcome {
    let cfg = |r| RunsConfig { threshold: 1.0, run_length: r, block_length: 7, year_starts: vec![] };
    let series = |n: usize, hits: &[usize]| {
        let mut s = vec![0.0; n];
        for &h in hits {
            s[h] = 5.0;
        }
        s
    };
    let table_ok = decluster_runs(&series(40, &[3, 4, 20]), &cfg(12)).unwrap() == vec![3, 20]
        && decluster_runs(&series(40, &[3, 4, 10]), &cfg(12)).unwrap() == vec![3];
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut idempotent = 0;
    for _ in 0..100 {
        let n = rng.random_range(50..400);
        let s: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.1 { 2.0 } else { 0.0 }).collect();
        let c = RunsConfig { threshold: 1.0, run_length: rng.random_range(1..15), block_length: 3, year_starts: vec![n / 2] };
        let first = decluster_runs(&s, &c).unwrap();
        let again = decluster_runs(&series(n, &first), &c).unwrap();
        idempotent += (first == again) as usize;
    }
    outcome(table_ok && idempotent == 100, format!("hand traces {}; idempotent on {idempotent}/100 series", if table_ok { "match" } else { "differ" }))
}

fn peak_memory_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn scale_target() -> Outcome {
    let sites = grid_sites(50, 40);
    let s0 = 20 * 50 + 25;
    let mesh = Mesh2D::build(&sites, 3.0, 4.0, 6.0).unwrap();
    let episodes = simulate_truth(&sites, s0, &mesh, 1, 0.3, 1.5, 12.0, 30, 99);
    let start = Instant::now();
    let model = assemble(3, None, &episodes, &sites, &mesh);
    let latent = model.latent_dim();
    let f = fit_model(model);
    let elapsed = start.elapsed();
    let mem = peak_memory_bytes();
    let mem_ok = mem.is_none_or(|m| m < 4 << 30);
    outcome(
        elapsed < Duration::from_secs(15 * 60) && mem_ok,
        format!(
            "mesh {} vertices, latent dim {latent}, {} grid points, fit {:.1}s, peak memory {}",
            mesh.n_vertices(),
            f.grid().len(),
            elapsed.as_secs_f64(),
            mem.map_or("unknown".to_string(), |m| format!("{:.2} GB", m as f64 / (1u64 << 30) as f64))
        ),
    )
}

fn run(results: &mut Vec<bool>, number: usize, name: &str, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
    });
    println!(
        "criterion {number:>2} {name}: {} ({:.1}s) {}",
        if out.pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        out.detail
    );
    results.push(out.pass);
}

fn main() {
    // `cargo test -- --list` and filters from the harness are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut results = Vec::new();
    run(&mut results, 1, "GMRF oracle suite", gmrf_oracles);
    run(&mut results, 2, "Kronecker and AR(1) inverses", kronecker_ar1);
    run(&mut results, 3, "SPDE fidelity", spde_fidelity);
    run(&mut results, 4, "exact marginal likelihood", marginal_likelihood_oracle);
    run(&mut results, 5, "constraint invariants", constraint_invariants);

    let data = recovery_data();
    let fits = catch_unwind(AssertUnwindSafe(|| {
        let fit_preset = |p| fit_model(assemble(p, None, &data.episodes, &data.sites, &data.mesh));
        (fit_preset(0), fit_preset(3), fit_preset(6))
    }));
    match &fits {
        Ok((f0, f3, f6)) => {
            run(&mut results, 6, "synthetic recovery", || recovery(f3));
            run(&mut results, 7, "WAIC model selection", || waic_ordering(f0, f3, f6));
            run(&mut results, 8, "dependence-class signature", || dependence_signature(f0, f3));
        }
        Err(_) => {
            for (n, name) in [(6, "synthetic recovery"), (7, "WAIC model selection"), (8, "dependence-class signature")] {
                run(&mut results, n, name, || outcome(false, "fitting the recovery data failed"));
            }
        }
    }
    run(&mut results, 9, "marginal transform calibration", marginal_calibration);
    match &fits {
        Ok((_, f3, _)) => run(&mut results, 10, "PIT calibration", || pit_calibration(f3, &data)),
        Err(_) => run(&mut results, 10, "PIT calibration", || outcome(false, "fitting the recovery data failed")),
    }
    run(&mut results, 11, "declustering hand traces", declustering);
    run(&mut results, 12, "scale target", scale_target);

    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
