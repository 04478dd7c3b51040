//! MAP estimation by cyclic coordinate descent with per-coordinate trust
//! regions and exact minimisation of a quadratic upper bound.

mod bound;
mod kkt;
mod update;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SparseCounts, Vocabulary};
use crate::error::{MnirError, Result};
use crate::model::{
    collapse, EtaCache, FactorMatrix, MnirParams, Observations, PriorSpec,
};

pub use bound::{curvature_bound, grad_curv, Coordinate};
pub use kkt::{loading_violation, KktReport};
pub use update::{
    gl_admissible, gl_bound_objective, gl_penalty, penalty, penalty_weight, update_gl,
    update_lasso, update_loading, update_normal,
};

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub prior: PriorSpec,
    /// Stop when the relative objective change falls below this (and KKT holds).
    pub tol: f64,
    pub max_sweeps: usize,
    /// Initial trust-region half width for every coordinate.
    pub delta_init: f64,
    pub delta_floor: f64,
    pub kkt_tol: f64,
    /// Keep sweeping past `tol` until the KKT check passes (or `max_sweeps`).
    pub sweep_until_kkt: bool,
    /// Pool documents sharing a factor level before fitting.
    pub collapse: bool,
    /// Round factors to this grid before anything else.
    pub round: Option<f64>,
    /// Centre and scale each factor column to unit sample sd.
    pub standardize: bool,
    /// Shuffle the coordinate order within each block every sweep.
    pub shuffle_seed: Option<u64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            prior: PriorSpec::default(),
            tol: 1e-5,
            max_sweeps: 1000,
            delta_init: 1.0,
            delta_floor: 1e-6,
            kkt_tol: 1e-3,
            sweep_until_kkt: true,
            collapse: false,
            round: None,
            standardize: true,
            shuffle_seed: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.tol) || !positive(self.delta_init) || !positive(self.kkt_tol) {
            return Err(MnirError::InvalidConfig(
                "tol, delta_init and kkt_tol must be positive".into(),
            ));
        }
        if !(self.delta_floor > 0.0 && self.delta_floor <= self.delta_init) {
            return Err(MnirError::InvalidConfig(
                "delta_floor must lie in (0, delta_init]".into(),
            ));
        }
        if self.max_sweeps == 0 {
            return Err(MnirError::InvalidConfig("max_sweeps must be >= 1".into()));
        }
        if let Some(g) = self.round {
            if !positive(g) {
                return Err(MnirError::InvalidConfig(format!("rounding grid {g} must be > 0")));
            }
        }
        Ok(())
    }
}

/// A fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnirFit {
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
    pub config: SolverConfig,
    pub vocab: Option<Vocabulary>,
    pub factor_names: Vec<String>,
    /// (mean, sd) per factor column when standardised.
    pub factor_scaling: Option<Vec<(f64, f64)>>,
    pub n_obs: usize,
    pub params: MnirParams,
    /// Implied Laplace rates lambda_jk = s / (r + |phi_jk|), p x K.
    pub lambda: Vec<f64>,
    /// (mean, variance) of each observation's random-effect prior.
    pub random_effect_priors: Option<Vec<(f64, f64)>>,
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub kkt: KktReport,
    /// Loadings whose curvature at zero was below s / r^2 at the start.
    pub concavity_warnings: usize,
}

impl MnirFit {
    pub fn n_tokens(&self) -> usize {
        self.params.p
    }

    pub fn n_factors(&self) -> usize {
        self.params.k
    }

    /// Column `k` of the loadings.
    pub fn loadings(&self, k: usize) -> Vec<f64> {
        (0..self.params.p).map(|j| self.params.loading(j, k)).collect()
    }

    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }

    /// Apply the fit's rounding and standardisation to raw factors.
    pub fn prepare_factors(&self, raw: &FactorMatrix) -> Result<FactorMatrix> {
        let rounded = match self.config.round {
            Some(g) => raw.rounded(g)?,
            None => raw.clone(),
        };
        Ok(match &self.factor_scaling {
            Some(stats) => rounded.apply_scaling(stats),
            None => rounded,
        })
    }

    /// Rebuild the observations the fit was computed on.
    pub fn observations(&self, counts: &SparseCounts, raw: &FactorMatrix) -> Result<Observations> {
        let factors = self.prepare_factors(raw)?;
        if self.config.collapse {
            Observations::from_collapsed(&collapse(counts, &factors)?)
        } else {
            Observations::from_documents(counts, &factors)
        }
    }
}

fn objective(
    cache: &EtaCache,
    params: &MnirParams,
    obs: &Observations,
    prior: &PriorSpec,
    re_priors: Option<&[(f64, f64)]>,
) -> f64 {
    let var_alpha = prior.sigma_alpha * prior.sigma_alpha;
    let mut total = cache.neg_log_lik(obs);
    total += params.alpha.iter().map(|a| a * a / (2.0 * var_alpha)).sum::<f64>();
    total += params.phi.iter().map(|&f| penalty(f, prior)).sum::<f64>();
    if let (Some(priors), Some(u)) = (re_priors, &params.u) {
        for (i, &(mu, var)) in priors.iter().enumerate() {
            total += u[i * params.p..(i + 1) * params.p]
                .iter()
                .map(|x| (x - mu).powi(2) / (2.0 * var))
                .sum::<f64>();
        }
    }
    total
}

/// Penalised objective of `params` on `obs`.
pub fn penalized_objective(
    params: &MnirParams,
    obs: &Observations,
    prior: &PriorSpec,
    re_priors: Option<&[(f64, f64)]>,
) -> Result<f64> {
    let cache = EtaCache::new(params, obs)?;
    Ok(objective(&cache, params, obs, prior, re_priors))
}

/// KKT check of a fit against the observations it was computed on.
pub fn kkt_check(fit: &MnirFit, obs: &Observations) -> Result<KktReport> {
    let cache = EtaCache::new(&fit.params, obs)?;
    Ok(kkt::kkt_report(
        &fit.params,
        obs,
        &cache,
        &fit.config.prior,
        fit.random_effect_priors.as_deref(),
        fit.config.kkt_tol,
    ))
}

/// Fit a corpus, keeping its vocabulary in the result.
pub fn fit_corpus(corpus: &Corpus, factors: &FactorMatrix, config: &SolverConfig) -> Result<MnirFit> {
    check_totals(&corpus.counts, Some(&corpus.doc_ids))?;
    let mut fit = fit(&corpus.counts, factors, config)?;
    fit.vocab = Some(corpus.vocab.clone());
    Ok(fit)
}

fn check_totals(counts: &SparseCounts, ids: Option<&[String]>) -> Result<()> {
    let empty: Vec<String> = (0..counts.n_docs())
        .filter(|&i| counts.row_total(i) == 0)
        .map(|i| ids.map_or_else(|| format!("row {i}"), |d| d[i].clone()))
        .collect();
    if empty.is_empty() {
        Ok(())
    } else {
        Err(MnirError::ZeroTotal(empty))
    }
}

/// Fit the model to document counts and raw response factors.
pub fn fit(counts: &SparseCounts, factors: &FactorMatrix, config: &SolverConfig) -> Result<MnirFit> {
    config.validate()?;
    if counts.n_tokens() == 0 {
        return Err(MnirError::EmptyVocabulary);
    }
    if counts.n_docs() == 0 {
        return Err(MnirError::NoDocuments);
    }
    if counts.n_docs() != factors.n_rows() {
        return Err(MnirError::DimensionMismatch(format!(
            "{} documents but {} factor rows",
            counts.n_docs(),
            factors.n_rows()
        )));
    }
    check_totals(counts, None)?;

    let rounded = match config.round {
        Some(g) => factors.rounded(g)?,
        None => factors.clone(),
    };
    if let Some(column) = rounded
        .column_stats()
        .iter()
        .position(|&(_, sd)| !(sd > 0.0))
    {
        return Err(MnirError::ZeroVarianceFactor { column });
    }
    let (prepared, scaling) = if config.standardize {
        let (f, s) = rounded.standardized()?;
        (f, Some(s))
    } else {
        (rounded, None)
    };
    let obs = if config.collapse {
        Observations::from_collapsed(&collapse(counts, &prepared)?)?
    } else {
        Observations::from_documents(counts, &prepared)?
    };
    let mut fit = fit_observations(&obs, config)?;
    fit.factor_names = factors.names().to_vec();
    fit.factor_scaling = scaling;
    Ok(fit)
}

/// Trust-region half widths, one per coordinate.
struct Deltas {
    alpha: Vec<f64>,
    phi: Vec<f64>,
    u: Vec<f64>,
}

fn next_delta(delta: f64, moved: f64, floor: f64) -> f64 {
    (delta / 2.0).max(2.0 * moved.abs()).max(floor)
}

fn non_finite(coord: Coordinate, sweep: usize) -> MnirError {
    MnirError::NonFinite(format!("{coord} during sweep {sweep}"))
}

/// Shift along directions the likelihood cannot see.
///
/// Adding a constant to every intercept, to every loading of one factor, or
/// to every random effect of one observation leaves all q_ij unchanged, so
/// only the priors respond. Coordinate moves crawl along these directions;
/// solve them exactly instead, accepting a shift only when it lowers the
/// penalty.
fn recentre(params: &mut MnirParams, prior: &PriorSpec, re_priors: Option<&[(f64, f64)]>) {
    let p = params.p;
    let mean = params.alpha.iter().sum::<f64>() / p as f64;
    params.alpha.iter_mut().for_each(|a| *a -= mean);

    if prior.penalty != crate::model::PenaltyForm::Unpenalized {
        for kk in 0..params.k {
            let mut col: Vec<f64> = (0..p).map(|j| params.loading(j, kk)).collect();
            let current: f64 = col.iter().map(|&f| penalty(f, prior)).sum();
            col.sort_by(f64::total_cmp);
            let median = col[p / 2];
            if median == 0.0 {
                continue;
            }
            let shifted: f64 = col.iter().map(|&f| penalty(f - median, prior)).sum();
            if shifted < current {
                for j in 0..p {
                    *params.loading_mut(j, kk) -= median;
                }
            }
        }
    }

    if let (Some(priors), Some(u)) = (re_priors, params.u.as_mut()) {
        for (i, &(mu, _)) in priors.iter().enumerate() {
            let row = &mut u[i * p..(i + 1) * p];
            let shift = row.iter().sum::<f64>() / p as f64 - mu;
            row.iter_mut().for_each(|x| *x -= shift);
        }
    }
}

/// Fit on prepared observations (factors already rounded, scaled, pooled).
pub fn fit_observations(obs: &Observations, config: &SolverConfig) -> Result<MnirFit> {
    config.validate()?;
    let prior = config.prior;
    let p = obs.n_tokens();
    let k = obs.n_factors();
    let n = obs.n_obs();
    let re_priors = prior.random_effect_priors(obs.sizes())?;

    let mut params = MnirParams::zeros(p, k);
    let grand: f64 = (0..p).map(|j| obs.xsum(j) + 0.1).sum();
    params.alpha = (0..p).map(|j| ((obs.xsum(j) + 0.1) / grand).ln()).collect();
    let mean_alpha = params.alpha.iter().sum::<f64>() / p as f64;
    params.alpha.iter_mut().for_each(|a| *a -= mean_alpha);
    if re_priors.is_some() {
        params.u = Some(vec![0.0; n * p]);
    }

    let mut cache = EtaCache::new(&params, obs)?;

    let threshold = prior.shape / (prior.rate * prior.rate);
    let mut concavity_warnings = 0;
    for kk in 0..k {
        for j in 0..p {
            let (_, h) = grad_curv(Coordinate::Loading { token: j, factor: kk }, obs, &cache);
            if h < threshold {
                concavity_warnings += 1;
            }
        }
    }
    if concavity_warnings > 0 {
        log::warn!(
            "{concavity_warnings} of {} loadings start with curvature below s/r^2 = {threshold}; the objective may be non-concave there",
            p * k
        );
    }

    let mut deltas = Deltas {
        alpha: vec![config.delta_init; p],
        phi: vec![config.delta_init; p * k],
        u: vec![config.delta_init; if re_priors.is_some() { n * p } else { 0 }],
    };
    let var_alpha = prior.sigma_alpha * prior.sigma_alpha;
    let mut order: Vec<usize> = (0..p).collect();
    let mut rng = config.shuffle_seed.map(ChaCha8Rng::seed_from_u64);

    let start = objective(&cache, &params, obs, &prior, re_priors.as_deref());
    if !start.is_finite() {
        return Err(MnirError::NonFinite("objective at the starting point".into()));
    }
    let mut trace = vec![start];
    let mut converged = false;
    let mut sweeps = 0;
    let mut kkt = None;

    for sweep in 1..=config.max_sweeps {
        sweeps = sweep;
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }

        for &j in &order {
            let coord = Coordinate::Intercept { token: j };
            let delta = deltas.alpha[j];
            let (g, _, h) = bound::derivatives(coord, obs, &cache, Some(delta));
            let old = params.alpha[j];
            let new = update_normal(g, h, old, 0.0, var_alpha, delta);
            if !new.is_finite() {
                return Err(non_finite(coord, sweep));
            }
            let moved = new - old;
            if moved != 0.0 {
                params.alpha[j] = new;
                for i in 0..n {
                    cache.add(i, j, moved);
                }
            }
            deltas.alpha[j] = next_delta(delta, moved, config.delta_floor);
        }

        for kk in 0..k {
            for &j in &order {
                let coord = Coordinate::Loading { token: j, factor: kk };
                let delta = deltas.phi[j * k + kk];
                let (g, _, h) = bound::derivatives(coord, obs, &cache, Some(delta));
                let old = params.loading(j, kk);
                let new = update_loading(g, h, old, &prior, delta);
                if !new.is_finite() {
                    return Err(non_finite(coord, sweep));
                }
                let moved = new - old;
                if moved != 0.0 {
                    *params.loading_mut(j, kk) = new;
                    for i in 0..n {
                        let v = obs.factor(i, kk);
                        if v != 0.0 {
                            cache.add(i, j, moved * v);
                        }
                    }
                }
                deltas.phi[j * k + kk] = next_delta(delta, moved, config.delta_floor);
            }
        }

        if let Some(priors) = &re_priors {
            for (i, &(mu, var)) in priors.iter().enumerate() {
                for &j in &order {
                    let coord = Coordinate::RandomEffect { obs: i, token: j };
                    let delta = deltas.u[i * p + j];
                    let (g, _, h) = bound::derivatives(coord, obs, &cache, Some(delta));
                    let u = params.u.as_mut().expect("random effects allocated");
                    let old = u[i * p + j];
                    let new = update_normal(g, h, old, mu, var, delta);
                    if !new.is_finite() {
                        return Err(non_finite(coord, sweep));
                    }
                    let moved = new - old;
                    if moved != 0.0 {
                        u[i * p + j] = new;
                        cache.add(i, j, moved);
                    }
                    deltas.u[i * p + j] = next_delta(delta, moved, config.delta_floor);
                }
            }
        }

        recentre(&mut params, &prior, re_priors.as_deref());
        cache.refresh(&params, obs);
        let value = objective(&cache, &params, obs, &prior, re_priors.as_deref());
        if !value.is_finite() {
            return Err(MnirError::NonFinite(format!("objective after sweep {sweep}")));
        }
        let previous = *trace.last().expect("trace is never empty");
        if value > previous + 1e-9 * previous.abs().max(1.0) {
            log::warn!("objective rose from {previous} to {value} in sweep {sweep}");
        }
        trace.push(value);
        let relative = (previous - value).abs() / value.abs().max(1.0);
        log::debug!("sweep {sweep}: objective {value:.10e}, relative change {relative:.3e}");
        if relative < config.tol {
            let report = kkt::kkt_report(
                &params,
                obs,
                &cache,
                &prior,
                re_priors.as_deref(),
                config.kkt_tol,
            );
            let done = report.passed || !config.sweep_until_kkt;
            kkt = Some(report);
            if done {
                converged = true;
                break;
            }
        }
    }

    let kkt = match kkt {
        Some(report) if converged => report,
        _ => kkt::kkt_report(&params, obs, &cache, &prior, re_priors.as_deref(), config.kkt_tol),
    };
    if !converged {
        log::warn!(
            "no convergence after {sweeps} sweeps (max KKT violation {:.3e})",
            kkt.max_violation
        );
    }
    let lambda = params.phi.iter().map(|&f| penalty_weight(f, &prior)).collect();
    Ok(MnirFit {
        provenance: BTreeMap::new(),
        config: config.clone(),
        vocab: None,
        factor_names: (1..=k).map(|c| format!("f{c}")).collect(),
        factor_scaling: None,
        n_obs: n,
        params,
        lambda,
        random_effect_priors: re_priors,
        objective_trace: trace,
        sweeps,
        converged,
        kkt,
        concavity_warnings,
    })
}
