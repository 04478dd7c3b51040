//! First-order optimality check at a fitted point.

use serde::{Deserialize, Serialize};

use super::bound::{grad_curv, Coordinate};
use super::update::penalty_weight;
use crate::model::{EtaCache, MnirParams, Observations, PenaltyForm, PriorSpec};

/// Failing coordinates kept in a report.
const MAX_LISTED: usize = 50;

/// Outcome of a KKT check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub tol: f64,
    pub passed: bool,
    pub checked: usize,
    /// Number of coordinates whose violation exceeds `tol`.
    pub n_failed: usize,
    pub max_violation: f64,
    pub worst: Option<Coordinate>,
    /// Up to fifty failing coordinates with their violations.
    pub failures: Vec<(Coordinate, f64)>,
}

impl KktReport {
    /// Violation recorded for `coord`, if it failed and was listed.
    pub fn violation_of(&self, coord: Coordinate) -> Option<f64> {
        self.failures.iter().find(|(c, _)| *c == coord).map(|&(_, v)| v)
    }
}

/// Violation of the stationarity condition for one loading.
///
/// Nonzero: |sign(phi) lambda(phi) + g|. Zero: how far |g| exceeds the
/// subgradient bound s / r.
pub fn loading_violation(g: f64, phi: f64, prior: &PriorSpec) -> f64 {
    let lambda = penalty_weight(phi, prior);
    if phi != 0.0 {
        (phi.signum() * lambda + g).abs()
    } else if prior.penalty == PenaltyForm::Unpenalized {
        g.abs()
    } else {
        (g.abs() - lambda).max(0.0)
    }
}

pub(crate) fn kkt_report(
    params: &MnirParams,
    obs: &Observations,
    cache: &EtaCache,
    prior: &PriorSpec,
    re_priors: Option<&[(f64, f64)]>,
    tol: f64,
) -> KktReport {
    let mut report = KktReport {
        tol,
        passed: true,
        checked: 0,
        n_failed: 0,
        max_violation: 0.0,
        worst: None,
        failures: Vec::new(),
    };
    let mut record = |coord: Coordinate, violation: f64| {
        report.checked += 1;
        let violation = if violation.is_nan() { f64::INFINITY } else { violation };
        if violation > report.max_violation {
            report.max_violation = violation;
            report.worst = Some(coord);
        }
        if violation > tol {
            report.n_failed += 1;
            if report.failures.len() < MAX_LISTED {
                report.failures.push((coord, violation));
            }
        }
    };
    let var_alpha = prior.sigma_alpha * prior.sigma_alpha;
    for j in 0..params.p {
        let coord = Coordinate::Intercept { token: j };
        let (g, _) = grad_curv(coord, obs, cache);
        record(coord, (g + params.alpha[j] / var_alpha).abs());
    }
    for k in 0..params.k {
        for j in 0..params.p {
            let coord = Coordinate::Loading { token: j, factor: k };
            let (g, _) = grad_curv(coord, obs, cache);
            record(coord, loading_violation(g, params.loading(j, k), prior));
        }
    }
    if let Some(priors) = re_priors {
        for (i, &(mu, var)) in priors.iter().enumerate() {
            for j in 0..params.p {
                let coord = Coordinate::RandomEffect { obs: i, token: j };
                let (g, _) = grad_curv(coord, obs, cache);
                record(coord, (g + (params.random_effect(i, j) - mu) / var).abs());
            }
        }
    }
    report.passed = report.n_failed == 0;
    report
}
