//! One-dimensional trust-region updates.

use crate::model::{PenaltyForm, PriorSpec};

/// s log(1 + |phi| / r)
pub fn gl_penalty(phi: f64, shape: f64, rate: f64) -> f64 {
    shape * (phi.abs() / rate).ln_1p()
}

/// Cost of a loading under the prior's penalty form.
pub fn penalty(phi: f64, prior: &PriorSpec) -> f64 {
    match prior.penalty {
        PenaltyForm::GammaLasso => gl_penalty(phi, prior.shape, prior.rate),
        PenaltyForm::Lasso => prior.shape / prior.rate * phi.abs(),
        PenaltyForm::Unpenalized => 0.0,
    }
}

/// The implied Laplace rate lambda at `phi`: s / (r + |phi|) for the gamma lasso.
pub fn penalty_weight(phi: f64, prior: &PriorSpec) -> f64 {
    match prior.penalty {
        PenaltyForm::GammaLasso => prior.shape / (prior.rate + phi.abs()),
        PenaltyForm::Lasso => prior.shape / prior.rate,
        PenaltyForm::Unpenalized => 0.0,
    }
}

/// B(x) = g (x - phi) + H/2 (x - phi)^2 + s log(1 + |x| / r)
pub fn gl_bound_objective(x: f64, g: f64, h: f64, phi: f64, shape: f64, rate: f64) -> f64 {
    let d = x - phi;
    g * d + 0.5 * h * d * d + gl_penalty(x, shape, rate)
}

/// Interval a gamma-lasso loading may move to: the trust region intersected
/// with the sign of `phi` (both signs allowed at zero).
pub fn gl_admissible(phi: f64, delta: f64) -> (f64, f64) {
    if phi > 0.0 {
        ((phi - delta).max(0.0), phi + delta)
    } else if phi < 0.0 {
        (phi - delta, (phi + delta).min(0.0))
    } else {
        (-delta, delta)
    }
}

/// Stationary point of B on x > 0, if any.
fn positive_root(g: f64, h: f64, phi: f64, shape: f64, rate: f64) -> Option<f64> {
    let target = phi - g / h;
    let b = rate - target;
    let c = shape / h - rate * target;
    let disc = b * b - 4.0 * c;
    if !(disc >= 0.0) {
        return None;
    }
    let sq = disc.sqrt();
    let x = if b > 0.0 { -2.0 * c / (sq + b) } else { 0.5 * (sq - b) };
    (x > 0.0 && x.is_finite()).then_some(x)
}

/// Exact minimiser of the bound B over the admissible interval.
///
/// `h` is the curvature bound over the trust region. Ties resolve to zero.
pub fn update_gl(g: f64, h: f64, phi: f64, shape: f64, rate: f64, delta: f64) -> f64 {
    let h = if h > 0.0 { h } else { f64::MIN_POSITIVE };
    let (lo, hi) = gl_admissible(phi, delta);
    let b = |x: f64| gl_bound_objective(x, g, h, phi, shape, rate);

    let mut candidates = Vec::with_capacity(6);
    if lo <= 0.0 && hi >= 0.0 {
        candidates.push(0.0);
    }
    candidates.extend([lo, hi, phi]);
    if hi > 0.0 {
        candidates.extend(positive_root(g, h, phi, shape, rate));
    }
    if lo < 0.0 {
        candidates.extend(positive_root(-g, h, -phi, shape, rate).map(|x| -x));
    }

    let mut best = candidates[0];
    let mut best_val = b(best);
    for &x in &candidates[1..] {
        if x < lo || x > hi {
            continue;
        }
        let v = b(x);
        if v < best_val {
            best = x;
            best_val = v;
        }
    }
    best
}

/// Lasso update: soft-threshold the Newton target, then clip to the trust region.
pub fn update_lasso(g: f64, h: f64, phi: f64, lambda: f64, delta: f64) -> f64 {
    let h = if h > 0.0 { h } else { f64::MIN_POSITIVE };
    let target = phi - g / h;
    let shrunk = target.signum() * (target.abs() - lambda / h).max(0.0);
    shrunk.clamp(phi - delta, phi + delta)
}

/// Newton step under a normal prior N(mu, var), truncated to the trust region.
pub fn update_normal(g: f64, h: f64, theta: f64, mu: f64, var: f64, delta: f64) -> f64 {
    let step = (g + (theta - mu) / var) / (h.max(0.0) + 1.0 / var);
    theta - step.signum() * step.abs().min(delta)
}

/// Dispatch on the penalty form.
pub fn update_loading(g: f64, h: f64, phi: f64, prior: &PriorSpec, delta: f64) -> f64 {
    match prior.penalty {
        PenaltyForm::GammaLasso => update_gl(g, h, phi, prior.shape, prior.rate, delta),
        PenaltyForm::Lasso => update_lasso(g, h, phi, prior.shape / prior.rate, delta),
        PenaltyForm::Unpenalized => update_lasso(g, h, phi, 0.0, delta),
    }
}
