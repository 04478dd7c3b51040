//! Shared generators and brute-force oracles for the integration tests.
#![allow(dead_code)]

use mnir::corpus::SparseCounts;
use mnir::forward::{fit_logistic, fit_polr, LogisticOptions, PolrOptions};
use mnir::model::{
    collapse, neg_log_lik, EtaCache, FactorMatrix, MnirParams, Observations, PenaltyForm,
    PriorSpec,
};
use mnir::solver::{
    self, curvature_bound, gl_admissible, gl_bound_objective, grad_curv, kkt_check, update_gl,
    update_normal, Coordinate, SolverConfig,
};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Proptest settings without on-disk regression files.
pub fn proptest_config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        failure_persistence: None,
        ..Default::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Multinomial counts drawn from eta_ij = alpha_j + v_i' phi_j.
pub fn simulate_counts(
    rng: &mut ChaCha8Rng,
    alpha: &[f64],
    phi: &[f64],
    factors: &FactorMatrix,
    totals: std::ops::Range<u32>,
) -> SparseCounts {
    let p = alpha.len();
    let k = factors.n_factors();
    let mut triplets = Vec::new();
    for i in 0..factors.n_rows() {
        let eta: Vec<f64> = (0..p)
            .map(|j| alpha[j] + (0..k).map(|kk| factors.get(i, kk) * phi[j * k + kk]).sum::<f64>())
            .collect();
        let top = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = eta.iter().map(|e| (e - top).exp()).collect();
        let dist = WeightedIndex::new(&weights).unwrap();
        let m = rng.gen_range(totals.clone());
        let mut row = vec![0u32; p];
        for _ in 0..m {
            row[dist.sample(rng)] += 1;
        }
        triplets.extend(row.iter().enumerate().filter(|(_, &c)| c > 0).map(|(j, &c)| (i, j, c)));
    }
    SparseCounts::from_triplets(factors.n_rows(), p, triplets).unwrap()
}

/// A small random problem with parameters at a random state.
pub struct Problem {
    pub counts: SparseCounts,
    pub factors: FactorMatrix,
    pub obs: Observations,
    pub params: MnirParams,
}

pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, p: usize, k: usize) -> Problem {
    let values: Vec<f64> = (0..n * k).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let factors = FactorMatrix::new(n, k, values).unwrap();
    let alpha: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let phi: Vec<f64> = (0..p * k)
        .map(|_| if rng.gen_bool(0.5) { rng.gen_range(-1.0..1.0) } else { 0.0 })
        .collect();
    let counts = simulate_counts(rng, &alpha, &phi, &factors, 5..60);
    let obs = Observations::from_documents(&counts, &factors).unwrap();
    let mut params = MnirParams::zeros(p, k);
    params.alpha = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
    params.phi = (0..p * k)
        .map(|_| if rng.gen_bool(0.6) { rng.gen_range(-1.5..1.5) } else { 0.0 })
        .collect();
    Problem {
        counts,
        factors,
        obs,
        params,
    }
}

/// A random coordinate of a problem.
pub fn random_coordinate(rng: &mut ChaCha8Rng, params: &MnirParams, n_obs: usize) -> Coordinate {
    let token = rng.gen_range(0..params.p);
    match rng.gen_range(0..3) {
        0 => Coordinate::Intercept { token },
        1 => Coordinate::Loading {
            token,
            factor: rng.gen_range(0..params.k),
        },
        _ if params.u.is_some() => Coordinate::RandomEffect {
            obs: rng.gen_range(0..n_obs),
            token,
        },
        _ => Coordinate::Loading {
            token,
            factor: rng.gen_range(0..params.k),
        },
    }
}

pub fn get(params: &MnirParams, c: Coordinate) -> f64 {
    match c {
        Coordinate::Intercept { token } => params.alpha[token],
        Coordinate::Loading { token, factor } => params.loading(token, factor),
        Coordinate::RandomEffect { obs, token } => params.random_effect(obs, token),
    }
}

pub fn set(params: &mut MnirParams, c: Coordinate, value: f64) {
    match c {
        Coordinate::Intercept { token } => params.alpha[token] = value,
        Coordinate::Loading { token, factor } => *params.loading_mut(token, factor) = value,
        Coordinate::RandomEffect { obs, token } => {
            let p = params.p;
            params.u.as_mut().expect("random effects")[obs * p + token] = value
        }
    }
}

fn moved(params: &MnirParams, c: Coordinate, value: f64) -> MnirParams {
    let mut out = params.clone();
    set(&mut out, c, value);
    out
}

/// The quadratic bound dominates the restricted likelihood on a grid inside
/// the trust region, with equality at the current point.
pub fn check_bound_validity(problems: usize, seed: u64) -> Result<String, String> {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for t in 0..problems {
        let n = rng.gen_range(3..12);
        let p = rng.gen_range(2..8);
        let k = rng.gen_range(1..3);
        let mut pr = random_problem(&mut rng, n, p, k);
        if rng.gen_bool(0.3) {
            pr.params.u = Some((0..n * p).map(|_| rng.gen_range(-1.0..1.0)).collect());
        }
        let cache = EtaCache::new(&pr.params, &pr.obs).unwrap();
        let coord = random_coordinate(&mut rng, &pr.params, n);
        let delta = rng.gen_range(0.01..2.0);
        let (g, _) = grad_curv(coord, &pr.obs, &cache);
        let h = curvature_bound(coord, &pr.obs, &cache, delta);
        let theta = get(&pr.params, coord);
        let l0 = neg_log_lik(&pr.params, &pr.obs).unwrap();
        for step in 0..=40 {
            let d = -delta + 2.0 * delta * step as f64 / 40.0;
            let l = neg_log_lik(&moved(&pr.params, coord, theta + d), &pr.obs).unwrap();
            let b = l0 + g * d + 0.5 * h * d * d;
            let gap = b - l;
            let tol = 1e-10 * l0.abs().max(1.0);
            if gap < -tol {
                return Err(format!("problem {t}, {coord}: bound below likelihood by {gap:e} at d={d}"));
            }
            if d == 0.0 && gap.abs() > tol {
                return Err(format!("problem {t}: bound not tight at the current point"));
            }
            worst = worst.min(gap);
        }
    }
    Ok(format!("{problems} problems, smallest gap {worst:.3e}"))
}

/// Objective traces of full fits never increase.
pub fn check_monotone_objective(problems: usize, seed: u64) -> Result<String, String> {
    let mut rng = rng(seed);
    let mut total_sweeps = 0;
    for t in 0..problems {
        let n = rng.gen_range(4..15);
        let p = rng.gen_range(2..10);
        let k = rng.gen_range(1..3);
        let pr = random_problem(&mut rng, n, p, k);
        let cfg = SolverConfig {
            prior: PriorSpec::gamma_lasso(rng.gen_range(0.05..3.0), rng.gen_range(0.1..2.0)),
            max_sweeps: 200,
            ..Default::default()
        };
        let fit = solver::fit(&pr.counts, &pr.factors, &cfg).map_err(|e| e.to_string())?;
        total_sweeps += fit.sweeps;
        for (s, w) in fit.objective_trace.windows(2).enumerate() {
            if w[1] > w[0] + 1e-10 * w[0].abs().max(1.0) {
                return Err(format!("problem {t}: objective rose {} -> {} at sweep {}", w[0], w[1], s + 1));
            }
        }
    }
    Ok(format!("{problems} fits, {total_sweeps} sweeps"))
}

/// Analytic gradients against central finite differences.
pub fn check_gradients(states: usize, seed: u64) -> Result<String, String> {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for t in 0..states {
        let n = rng.gen_range(3..10);
        let p = rng.gen_range(2..8);
        let k = rng.gen_range(1..3);
        let mut pr = random_problem(&mut rng, n, p, k);
        if rng.gen_bool(0.3) {
            pr.params.u = Some((0..n * p).map(|_| rng.gen_range(-1.0..1.0)).collect());
        }
        let cache = EtaCache::new(&pr.params, &pr.obs).unwrap();
        let coord = random_coordinate(&mut rng, &pr.params, n);
        let (g, _) = grad_curv(coord, &pr.obs, &cache);
        let theta = get(&pr.params, coord);
        let eps = 1e-5;
        let up = neg_log_lik(&moved(&pr.params, coord, theta + eps), &pr.obs).unwrap();
        let down = neg_log_lik(&moved(&pr.params, coord, theta - eps), &pr.obs).unwrap();
        let fd = (up - down) / (2.0 * eps);
        let rel = (g - fd).abs() / g.abs().max(1.0);
        worst = worst.max(rel);
        if rel > 1e-5 {
            return Err(format!("state {t}, {coord}: analytic {g} vs finite difference {fd}"));
        }
    }
    Ok(format!("{states} states, worst relative error {worst:.2e}"))
}

pub struct GlDraw {
    pub g: f64,
    pub h: f64,
    pub phi: f64,
    pub s: f64,
    pub r: f64,
    pub delta: f64,
}

pub fn gl_draw(rng: &mut ChaCha8Rng) -> GlDraw {
    GlDraw {
        g: rng.gen_range(-20.0..20.0),
        h: 10f64.powf(rng.gen_range(-1.0..2.0)),
        phi: if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(-3.0..3.0) },
        s: 10f64.powf(rng.gen_range(-2.0..0.7)),
        r: 10f64.powf(rng.gen_range(-1.3..0.3)),
        delta: 10f64.powf(rng.gen_range(-2.0..0.5)),
    }
}

/// Exact gamma-lasso update against a dense grid over the admissible region.
pub fn check_update_gl_grid(draws: usize, grid: usize, seed: u64) -> Result<String, String> {
    let mut rng = rng(seed);
    let mut zeros = 0;
    for t in 0..draws {
        let d = gl_draw(&mut rng);
        let x = update_gl(d.g, d.h, d.phi, d.s, d.r, d.delta);
        let (lo, hi) = gl_admissible(d.phi, d.delta);
        if x < lo || x > hi {
            return Err(format!("draw {t}: {x} outside [{lo}, {hi}]"));
        }
        let b = |y: f64| gl_bound_objective(y, d.g, d.h, d.phi, d.s, d.r);
        let mut best = b(lo).min(b(hi));
        if lo <= 0.0 && hi >= 0.0 {
            best = best.min(b(0.0));
        }
        for step in 0..=grid {
            best = best.min(b(lo + (hi - lo) * step as f64 / grid as f64));
        }
        if b(x) > best + 1e-6 {
            return Err(format!(
                "draw {t} (g={}, h={}, phi={}, s={}, r={}, delta={}): B({x}) = {} but grid reaches {best}",
                d.g, d.h, d.phi, d.s, d.r, d.delta,
                b(x)
            ));
        }
        if x == 0.0 {
            zeros += 1;
        }
    }
    Ok(format!("{draws} draws on a {grid}-point grid, {zeros} at zero"))
}

/// Normal-prior update against a dense grid over the trust region.
pub fn check_update_normal_grid(draws: usize, grid: usize, seed: u64) -> Result<String, String> {
    let mut rng = rng(seed);
    for t in 0..draws {
        let g = rng.gen_range(-20.0..20.0);
        let h = 10f64.powf(rng.gen_range(-1.0..2.0));
        let theta = rng.gen_range(-3.0..3.0);
        let mu = rng.gen_range(-3.0..3.0);
        let var = 10f64.powf(rng.gen_range(-2.0..1.0));
        let delta = 10f64.powf(rng.gen_range(-2.0..0.5));
        let x = update_normal(g, h, theta, mu, var, delta);
        let b = |y: f64| {
            let d = y - theta;
            g * d + 0.5 * h * d * d + 0.5 * (y - mu).powi(2) / var
        };
        let mut best = f64::INFINITY;
        for step in 0..=grid {
            best = best.min(b(theta - delta + 2.0 * delta * step as f64 / grid as f64));
        }
        if (x - theta).abs() > delta * (1.0 + 1e-12) || b(x) > best + 1e-8 {
            return Err(format!("draw {t}: {x} gives {} vs grid {best}", b(x)));
        }
    }
    Ok(format!("{draws} draws"))
}

/// Curvature bound against the largest exact curvature over the trust region.
pub fn check_curvature_bound(draws: usize, seed: u64) -> Result<String, String> {
    let mut rng = rng(seed);
    let mut tightest = f64::INFINITY;
    for t in 0..draws {
        let n = rng.gen_range(2..10);
        let p = rng.gen_range(2..8);
        let k = rng.gen_range(1..3);
        let mut pr = random_problem(&mut rng, n, p, k);
        if rng.gen_bool(0.3) {
            pr.params.u = Some((0..n * p).map(|_| rng.gen_range(-1.0..1.0)).collect());
        }
        let cache = EtaCache::new(&pr.params, &pr.obs).unwrap();
        let coord = random_coordinate(&mut rng, &pr.params, n);
        let delta = 10f64.powf(rng.gen_range(-2.0..0.7));
        let bound = curvature_bound(coord, &pr.obs, &cache, delta);
        let theta = get(&pr.params, coord);
        let mut max_h: f64 = 0.0;
        for step in 0..=200 {
            let value = theta - delta + 2.0 * delta * step as f64 / 200.0;
            let p2 = moved(&pr.params, coord, value);
            let c2 = EtaCache::new(&p2, &pr.obs).unwrap();
            max_h = max_h.max(grad_curv(coord, &pr.obs, &c2).1);
        }
        if max_h > bound * (1.0 + 1e-10) + 1e-12 {
            return Err(format!("draw {t}, {coord}: bound {bound} below curvature {max_h}"));
        }
        if max_h > 0.0 {
            tightest = tightest.min(bound / max_h);
        }
    }
    Ok(format!("{draws} draws, tightest bound/curvature ratio {tightest:.4}"))
}

/// Likelihood differences agree between pooled and raw observations.
pub fn check_collapse_equivalence(pairs: usize, seed: u64) -> Result<String, String> {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for t in 0..pairs {
        let n = rng.gen_range(5..30);
        let p = rng.gen_range(2..10);
        let k = rng.gen_range(1..3);
        // Few distinct levels so that pooling actually happens.
        let levels: Vec<Vec<f64>> = (0..rng.gen_range(1..5))
            .map(|_| (0..k).map(|_| rng.gen_range(-2i32..=2) as f64).collect())
            .collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|_| levels[rng.gen_range(0..levels.len())].clone()).collect();
        let factors = FactorMatrix::from_rows(&rows).unwrap();
        let alpha: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let phi: Vec<f64> = (0..p * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let counts = simulate_counts(&mut rng, &alpha, &phi, &factors, 1..40);
        let raw = Observations::from_documents(&counts, &factors).unwrap();
        let pooled = Observations::from_collapsed(&collapse(&counts, &factors).unwrap()).unwrap();
        let draw = |rng: &mut ChaCha8Rng| {
            let mut m = MnirParams::zeros(p, k);
            m.alpha = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
            m.phi = (0..p * k).map(|_| rng.gen_range(-2.0..2.0)).collect();
            m
        };
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let d_raw = neg_log_lik(&a, &raw).unwrap() - neg_log_lik(&b, &raw).unwrap();
        let d_pool = neg_log_lik(&a, &pooled).unwrap() - neg_log_lik(&b, &pooled).unwrap();
        worst = worst.max((d_raw - d_pool).abs());
        if (d_raw - d_pool).abs() > 1e-8 {
            return Err(format!("pair {t}: raw difference {d_raw} vs pooled {d_pool}"));
        }
        // Loading gradients agree too.
        let (ca, cp) = (EtaCache::new(&a, &raw).unwrap(), EtaCache::new(&a, &pooled).unwrap());
        for j in 0..p {
            let c = Coordinate::Loading { token: j, factor: 0 };
            let (g1, _) = grad_curv(c, &raw, &ca);
            let (g2, _) = grad_curv(c, &pooled, &cp);
            if (g1 - g2).abs() > 1e-9 * g1.abs().max(1.0) {
                return Err(format!("pair {t}: loading gradient {g1} vs {g2}"));
            }
        }
    }
    Ok(format!("{pairs} parameter pairs, worst difference {worst:.2e}"))
}

/// Converged fits pass the KKT check; nudging one loading by 0.1 fails it.
pub fn check_kkt(fits: usize, seed: u64) -> Result<String, String> {
    let mut rng = rng(seed);
    let mut converged = 0;
    for t in 0..fits {
        let n = rng.gen_range(10..30);
        let p = rng.gen_range(3..10);
        let pr = random_problem(&mut rng, n, p, 1);
        let cfg = SolverConfig {
            prior: PriorSpec::gamma_lasso(rng.gen_range(0.1..2.0), 0.5),
            ..Default::default()
        };
        let fit = solver::fit(&pr.counts, &pr.factors, &cfg).map_err(|e| e.to_string())?;
        if !fit.converged {
            continue;
        }
        converged += 1;
        let obs = fit.observations(&pr.counts, &pr.factors).unwrap();
        let report = kkt_check(&fit, &obs).unwrap();
        if !report.passed {
            return Err(format!("fit {t}: converged but KKT fails ({:e})", report.max_violation));
        }
        let j = rng.gen_range(0..p);
        let mut nudged = fit.clone();
        *nudged.params.loading_mut(j, 0) += 0.1;
        let report = kkt_check(&nudged, &obs).unwrap();
        let coord = Coordinate::Loading { token: j, factor: 0 };
        if report.passed || report.violation_of(coord).is_none() {
            return Err(format!("fit {t}: perturbed loading {j} still passes"));
        }
    }
    if converged * 2 < fits {
        return Err(format!("only {converged} of {fits} fits converged"));
    }
    Ok(format!("{converged} converged fits certified, each perturbed fit rejected"))
}

/// The two-token, four-document path: gamma-lasso loadings sit at zero for
/// weak signal, then land nearer the maximum-likelihood value than lasso.
pub struct PathPoint {
    pub signal: u32,
    pub xv: f64,
    pub gl: f64,
    pub lasso: f64,
    pub mle: f64,
}

pub fn thresholding_path(shape: f64, rate: f64, m: u32) -> Vec<PathPoint> {
    let factors = FactorMatrix::from_column(vec![-1.0, -1.0, 1.0, 1.0]).unwrap();
    let mut out = Vec::new();
    for t in 0..m / 2 {
        let hi = m / 2 + t;
        let lo = m / 2 - t;
        let counts = SparseCounts::from_triplets(
            4,
            2,
            [
                (0, 0, lo),
                (0, 1, hi),
                (1, 0, lo),
                (1, 1, hi),
                (2, 0, hi),
                (2, 1, lo),
                (3, 0, hi),
                (3, 1, lo),
            ],
        )
        .unwrap();
        let run = |penalty: PenaltyForm| {
            let cfg = SolverConfig {
                prior: PriorSpec {
                    penalty,
                    ..PriorSpec::gamma_lasso(shape, rate)
                },
                standardize: false,
                tol: 1e-12,
                max_sweeps: 5000,
                ..Default::default()
            };
            let fit = solver::fit(&counts, &factors, &cfg).unwrap();
            fit.params.loading(0, 0) - fit.params.loading(1, 0)
        };
        out.push(PathPoint {
            signal: t,
            xv: 4.0 * t as f64,
            gl: run(PenaltyForm::GammaLasso),
            lasso: run(PenaltyForm::Lasso),
            mle: run(PenaltyForm::Unpenalized),
        });
    }
    out
}

pub fn check_thresholding_path() -> Result<String, String> {
    let (shape, rate) = (2.0, 0.5);
    let path = thresholding_path(shape, rate, 60);
    let threshold = shape / rate;
    let mut zero_run = 0;
    for pt in &path {
        if pt.xv <= threshold && pt.gl != 0.0 {
            return Err(format!("x'v = {} below s/r but loading difference {}", pt.xv, pt.gl));
        }
        if pt.gl == 0.0 {
            zero_run += 1;
        }
    }
    let strong: Vec<&PathPoint> = path.iter().filter(|pt| pt.xv >= 30.0 * threshold / 4.0).collect();
    if strong.is_empty() {
        return Err("no strong-signal points on the path".into());
    }
    for pt in &strong {
        if pt.gl == 0.0 {
            return Err(format!("gamma lasso still zero at x'v = {}", pt.xv));
        }
        if (pt.gl - pt.mle).abs() >= (pt.lasso - pt.mle).abs() {
            return Err(format!(
                "x'v = {}: gamma lasso {} no closer to MLE {} than lasso {}",
                pt.xv, pt.gl, pt.mle, pt.lasso
            ));
        }
    }
    Ok(format!(
        "{zero_run} of {} path points thresholded to zero; {} strong-signal points closer to the MLE than lasso",
        path.len(),
        strong.len()
    ))
}

/// Binary proportional odds reproduces the logit.
pub fn check_polr_logistic(datasets: usize, seed: u64) -> Result<String, String> {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for t in 0..datasets {
        let n = rng.gen_range(40..200);
        let beta = rng.gen_range(-2.0..2.0);
        let a = rng.gen_range(-1.0..1.0);
        let z: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-2.0..2.0)]).collect();
        let y: Vec<f64> = z
            .iter()
            .map(|r| {
                let p = 1.0 / (1.0 + (-(a + beta * r[0])).exp());
                if rng.gen_bool(p) { 1.0 } else { 0.0 }
            })
            .collect();
        let logit = fit_logistic(&z, &y, LogisticOptions::default()).map_err(|e| e.to_string())?;
        let polr = fit_polr(&z, &y, PolrOptions::default()).map_err(|e| e.to_string())?;
        let dev = (logit.beta[0] - polr.beta[0])
            .abs()
            .max((logit.intercepts[0] + polr.intercepts[0]).abs());
        worst = worst.max(dev);
        if dev > 1e-6 {
            return Err(format!(
                "dataset {t}: logit ({}, {}) vs polr ({}, {})",
                logit.intercepts[0], logit.beta[0], -polr.intercepts[0], polr.beta[0]
            ));
        }
    }
    Ok(format!("{datasets} datasets, worst deviation {worst:.2e}"))
}
