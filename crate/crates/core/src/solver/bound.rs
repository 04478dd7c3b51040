//! Gradients, curvatures and trust-region curvature bounds of the negative
//! log likelihood along single coordinates.

use serde::{Deserialize, Serialize};

use crate::model::{EtaCache, Observations};

/// A single free parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Coordinate {
    Intercept { token: usize },
    Loading { token: usize, factor: usize },
    RandomEffect { obs: usize, token: usize },
}

impl Coordinate {
    pub fn token(&self) -> usize {
        match *self {
            Coordinate::Intercept { token }
            | Coordinate::Loading { token, .. }
            | Coordinate::RandomEffect { token, .. } => token,
        }
    }
}

impl std::fmt::Display for Coordinate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Coordinate::Intercept { token } => write!(f, "alpha[{token}]"),
            Coordinate::Loading { token, factor } => write!(f, "phi[{token}, {factor}]"),
            Coordinate::RandomEffect { obs, token } => write!(f, "u[{obs}, {token}]"),
        }
    }
}

/// 2 + 2 cosh(r), where r is the point of [d - a, d + a] nearest zero.
#[cfg(test)]
fn bound_denominator(d: f64, a: f64) -> f64 {
    let r = if d - a > 0.0 {
        d - a
    } else if d + a < 0.0 {
        d + a
    } else {
        0.0
    };
    2.0 + 2.0 * r.cosh()
}

/// The same denominator from the odds e^d and growth e^a, without logs.
fn bound_denominator_odds(odds: f64, grow: f64) -> f64 {
    let t = if odds > grow {
        odds / grow
    } else if odds * grow < 1.0 {
        odds * grow
    } else {
        return 4.0;
    };
    2.0 + t + 1.0 / t
}

/// Gradient, exact curvature and trust-region curvature bound together.
/// With `delta = None` the bound is skipped and returned as zero.
pub(crate) fn derivatives(
    coord: Coordinate,
    obs: &Observations,
    cache: &EtaCache,
    delta: Option<f64>,
) -> (f64, f64, f64) {
    let j = coord.token();
    let mut g = 0.0;
    let mut h = 0.0;
    let mut bound = 0.0;
    let unit_grow = delta.map_or(1.0, f64::exp);
    let mut visit = |i: usize, c: f64| {
        if c == 0.0 {
            return;
        }
        let m = obs.total(i);
        let q = cache.q(i, j);
        let mq = m * q;
        g += c * mq;
        h += c * c * mq * (1.0 - q);
        if let Some(delta) = delta {
            let grow = if c.abs() == 1.0 { unit_grow } else { (c.abs() * delta).exp() };
            bound += c * c * m / bound_denominator_odds(cache.odds(i, j), grow);
        }
    };
    let x_part = match coord {
        Coordinate::Intercept { token } => {
            for i in 0..obs.n_obs() {
                visit(i, 1.0);
            }
            obs.xsum(token)
        }
        Coordinate::Loading { token, factor } => {
            for i in 0..obs.n_obs() {
                visit(i, obs.factor(i, factor));
            }
            obs.xv(token, factor)
        }
        Coordinate::RandomEffect { obs: i, token } => {
            visit(i, 1.0);
            obs.count(i, token)
        }
    };
    (g - x_part, h, bound)
}

/// Gradient and curvature of the negative log likelihood along `coord`.
///
/// For a loading: g = -sum_i v_ik (x_ij - m_i q_ij), h = sum_i m_i v_ik^2 q_ij (1 - q_ij).
pub fn grad_curv(coord: Coordinate, obs: &Observations, cache: &EtaCache) -> (f64, f64) {
    let (g, h, _) = derivatives(coord, obs, cache, None);
    (g, h)
}

/// Upper bound on the curvature over a move of at most `delta` along `coord`.
///
/// Each observation contributes v^2 m / F with F = e/E + E/e + 2 minimised
/// over the achievable range of e = exp(eta_ij), where E is the sum of the
/// other exponentials.
pub fn curvature_bound(coord: Coordinate, obs: &Observations, cache: &EtaCache, delta: f64) -> f64 {
    derivatives(coord, obs, cache, Some(delta)).2
}
