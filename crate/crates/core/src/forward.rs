//! Low-dimensional forward regressions of a response on SR scores: least
//! squares (linear, quadratic, interaction), binary logit and proportional
//! odds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MnirError, Result};
use crate::model::mean_sd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForwardKind {
    Linear,
    Quadratic,
    LinearWithInteraction,
    Logistic,
    Polr,
}

/// How the score columns are expanded into regression terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearSpec {
    /// 1 for [z], 2 for [z, z^2].
    pub degree: u8,
    /// Add pairwise products z_a z_b.
    pub interaction: bool,
    /// Centre and scale the product terms to unit sd.
    pub standardize_products: bool,
}

impl Default for LinearSpec {
    fn default() -> Self {
        LinearSpec {
            degree: 1,
            interaction: false,
            standardize_products: false,
        }
    }
}

/// In-sample fit statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub n: usize,
    pub r2: Option<f64>,
    pub rmse: Option<f64>,
    pub misclassified: Option<usize>,
    pub log_lik: Option<f64>,
}

/// A fitted forward regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardFit {
    pub kind: ForwardKind,
    pub n_inputs: usize,
    pub spec: LinearSpec,
    pub terms: Vec<String>,
    /// (mean, sd) applied to each term after expansion, if any.
    pub term_scaling: Vec<Option<(f64, f64)>>,
    /// Intercept for least squares and logit; increasing cutpoints for polr.
    pub intercepts: Vec<f64>,
    pub beta: Vec<f64>,
    /// Standard errors for intercepts followed by slopes.
    pub std_errors: Vec<f64>,
    /// Response labels for the logit (two) and polr (C) levels.
    pub levels: Vec<f64>,
    pub ridge: Option<f64>,
    pub iterations: usize,
    pub summary: FitSummary,
    /// (X'X)^-1 for least-squares fits, row-major.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub xtx_inv: Vec<f64>,
}

/// A prediction for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Prediction {
    Mean { value: f64 },
    Binary { prob: f64, class: f64 },
    Ordinal { probs: Vec<f64>, level: f64 },
}

impl Prediction {
    /// The point prediction: mean, class label or modal level.
    pub fn point(&self) -> f64 {
        match self {
            Prediction::Mean { value } => *value,
            Prediction::Binary { class, .. } => *class,
            Prediction::Ordinal { level, .. } => *level,
        }
    }

    /// Per-level probabilities (lowest level first), if any.
    pub fn probabilities(&self) -> Vec<f64> {
        match self {
            Prediction::Mean { .. } => Vec::new(),
            Prediction::Binary { prob, .. } => vec![1.0 - prob, *prob],
            Prediction::Ordinal { probs, .. } => probs.clone(),
        }
    }
}

fn check_rows(z: &[Vec<f64>], y_len: usize) -> Result<usize> {
    let k = z.first().map_or(0, Vec::len);
    if k == 0 || z.iter().any(|r| r.len() != k) {
        return Err(MnirError::DimensionMismatch("score rows must share a nonzero width".into()));
    }
    if z.len() != y_len {
        return Err(MnirError::DimensionMismatch(format!(
            "{} score rows but {} responses",
            z.len(),
            y_len
        )));
    }
    if z.iter().flatten().any(|v| !v.is_finite()) {
        return Err(MnirError::NonFinite("score value".into()));
    }
    Ok(k)
}

/// Term names and raw term values for one score row.
fn expand(row: &[f64], spec: &LinearSpec) -> Vec<f64> {
    let mut out = row.to_vec();
    if spec.degree >= 2 {
        out.extend(row.iter().map(|v| v * v));
    }
    if spec.interaction {
        for a in 0..row.len() {
            for b in a + 1..row.len() {
                out.push(row[a] * row[b]);
            }
        }
    }
    out
}

fn term_names(k: usize, spec: &LinearSpec) -> Vec<String> {
    let mut names: Vec<String> = (1..=k).map(|c| format!("z{c}")).collect();
    if spec.degree >= 2 {
        names.extend((1..=k).map(|c| format!("z{c}^2")));
    }
    if spec.interaction {
        for a in 1..=k {
            for b in a + 1..=k {
                names.push(format!("z{a}*z{b}"));
            }
        }
    }
    names
}

fn is_product(spec: &LinearSpec, k: usize, t: usize) -> bool {
    let squares = if spec.degree >= 2 { k } else { 0 };
    t >= k + squares
}

fn apply_scaling(terms: &mut [f64], scaling: &[Option<(f64, f64)>]) {
    for (t, s) in terms.iter_mut().zip(scaling) {
        if let Some((mu, sd)) = s {
            *t = (*t - mu) / sd;
        }
    }
}

/// Term matrix with a leading column of ones.
fn design(rows: &[Vec<f64>], spec: &LinearSpec, scaling: &[Option<(f64, f64)>]) -> DMatrix<f64> {
    let expanded: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut t = expand(r, spec);
            apply_scaling(&mut t, scaling);
            t
        })
        .collect();
    let width = expanded.first().map_or(0, Vec::len) + 1;
    DMatrix::from_fn(rows.len(), width, |i, c| if c == 0 { 1.0 } else { expanded[i][c - 1] })
}

fn validate_spec(spec: &LinearSpec) -> Result<()> {
    if !(1..=2).contains(&spec.degree) {
        return Err(MnirError::InvalidConfig(format!("degree {} must be 1 or 2", spec.degree)));
    }
    Ok(())
}

fn product_scaling(z: &[Vec<f64>], spec: &LinearSpec) -> Result<Vec<Option<(f64, f64)>>> {
    let k = z[0].len();
    let n_terms = term_names(k, spec).len();
    let expanded: Vec<Vec<f64>> = z.iter().map(|r| expand(r, spec)).collect();
    (0..n_terms)
        .map(|t| {
            if spec.standardize_products && is_product(spec, k, t) {
                let col: Vec<f64> = expanded.iter().map(|r| r[t]).collect();
                let (mu, sd) = mean_sd(&col);
                if !(sd > 0.0) {
                    return Err(MnirError::SingularDesign(format!("term {t} is constant")));
                }
                Ok(Some((mu, sd)))
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// Least squares of y on [1, expanded terms of z].
pub fn fit_linear(z: &[Vec<f64>], y: &[f64], spec: LinearSpec) -> Result<ForwardFit> {
    validate_spec(&spec)?;
    let k = check_rows(z, y.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(MnirError::NonFinite("response value".into()));
    }
    let scaling = product_scaling(z, &spec)?;
    let x = design(z, &spec, &scaling);
    let n = x.nrows();
    let width = x.ncols();
    if n <= width {
        return Err(MnirError::SingularDesign(format!("{n} rows for {width} coefficients")));
    }
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let xtx_inv = invert_spd(&xtx)
        .ok_or_else(|| MnirError::SingularDesign("X'X is not invertible".into()))?;
    let coef = &xtx_inv * (x.transpose() * &yv);
    let fitted = &x * &coef;
    let resid = &yv - &fitted;
    let rss = resid.norm_squared();
    let mean = yv.mean();
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let sigma2 = rss / (n - width) as f64;
    let std_errors = (0..width).map(|c| (sigma2 * xtx_inv[(c, c)]).sqrt()).collect();
    let kind = if spec.interaction {
        ForwardKind::LinearWithInteraction
    } else if spec.degree == 2 {
        ForwardKind::Quadratic
    } else {
        ForwardKind::Linear
    };
    Ok(ForwardFit {
        kind,
        n_inputs: k,
        spec,
        terms: term_names(k, &spec),
        term_scaling: scaling,
        intercepts: vec![coef[0]],
        beta: coef.iter().skip(1).copied().collect(),
        std_errors,
        levels: Vec::new(),
        ridge: None,
        iterations: 1,
        summary: FitSummary {
            n,
            r2: Some(if tss > 0.0 { 1.0 - rss / tss } else { 1.0 }),
            rmse: Some((rss / n as f64).sqrt()),
            misclassified: None,
            log_lik: None,
        },
        xtx_inv: xtx_inv.transpose().as_slice().to_vec(),
    })
}

/// Inverse of a symmetric positive definite matrix, rejecting near-singular ones.
fn invert_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let diag_max = (0..a.nrows()).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let chol = a.clone().cholesky()?;
    let l = chol.l();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-12 * diag_max) {
        return None;
    }
    Some(chol.inverse())
}

/// Internally studentised residuals e_i / (sigma sqrt(1 - h_ii)) of a least-squares fit.
pub fn studentized_residuals(fit: &ForwardFit, z: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    if fit.xtx_inv.is_empty() {
        return Err(MnirError::InvalidConfig("studentised residuals need a least-squares fit".into()));
    }
    check_rows(z, y.len())?;
    let x = design(z, &fit.spec, &fit.term_scaling);
    let width = x.ncols();
    let inv = DMatrix::from_row_slice(width, width, &fit.xtx_inv);
    let coef = DVector::from_iterator(width, fit.intercepts.iter().chain(&fit.beta).copied());
    let resid = DVector::from_column_slice(y) - &x * &coef;
    let n = x.nrows();
    let sigma2 = resid.norm_squared() / (n - width) as f64;
    Ok((0..n)
        .map(|i| {
            let xi = x.row(i).transpose();
            let h = (xi.transpose() * &inv * &xi)[0];
            resid[i] / (sigma2 * (1.0 - h)).sqrt()
        })
        .collect())
}

/// Options for the binary logit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Refit with a ridge penalty on the slopes when separation is detected.
    pub ridge_fallback: bool,
    pub ridge_precision: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            max_iter: 100,
            tol: 1e-10,
            ridge_fallback: false,
            ridge_precision: 1e-4,
        }
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^t)
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Two sorted distinct labels, mapped to 0/1.
fn binary_labels(y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut levels: Vec<f64> = y.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.len() != 2 {
        return Err(MnirError::ConstantResponse(format!(
            "binary response needs exactly two classes, found {}",
            levels.len()
        )));
    }
    let y01 = y.iter().map(|&v| if v == levels[1] { 1.0 } else { 0.0 }).collect();
    Ok((levels, y01))
}

/// Newton-fitted binary logit; the larger label is the "1" class.
pub fn fit_logistic(z: &[Vec<f64>], y: &[f64], opts: LogisticOptions) -> Result<ForwardFit> {
    let k = check_rows(z, y.len())?;
    let (levels, y01) = binary_labels(y)?;
    let spec = LinearSpec::default();
    let x = design(z, &spec, &vec![None; k]);
    if invert_spd(&(x.transpose() * &x)).is_none() {
        return Err(MnirError::SingularDesign("logit design is rank deficient".into()));
    }
    match logistic_newton(&x, &y01, opts, 0.0) {
        Ok(out) => Ok(logistic_fit(k, levels, &x, &y01, out, None)),
        Err(MnirError::Separation) if opts.ridge_fallback => {
            log::warn!(
                "separation detected; refitting with ridge precision {}",
                opts.ridge_precision
            );
            let out = logistic_newton(&x, &y01, opts, opts.ridge_precision)?;
            Ok(logistic_fit(k, levels, &x, &y01, out, Some(opts.ridge_precision)))
        }
        Err(e) => Err(e),
    }
}

struct NewtonOut {
    coef: DVector<f64>,
    cov: DMatrix<f64>,
    iterations: usize,
    log_lik: f64,
}

fn logistic_loglik(x: &DMatrix<f64>, y: &[f64], coef: &DVector<f64>, ridge: f64) -> f64 {
    let eta = x * coef;
    let ll: f64 = y.iter().zip(eta.iter()).map(|(&yi, &e)| yi * e - softplus(e)).sum();
    ll - 0.5 * ridge * coef.iter().skip(1).map(|b| b * b).sum::<f64>()
}

fn logistic_newton(x: &DMatrix<f64>, y: &[f64], opts: LogisticOptions, ridge: f64) -> Result<NewtonOut> {
    let (n, width) = x.shape();
    let mut coef = DVector::zeros(width);
    let ybar = y.iter().sum::<f64>() / n as f64;
    coef[0] = (ybar / (1.0 - ybar)).ln();
    let mut ll = logistic_loglik(x, y, &coef, ridge);
    let mut trace = vec![ll];
    for iter in 1..=opts.max_iter {
        let eta = x * &coef;
        let p: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let mut grad = DVector::zeros(width);
        let mut info = DMatrix::zeros(width, width);
        for i in 0..n {
            let xi = x.row(i);
            let w = p[i] * (1.0 - p[i]);
            for a in 0..width {
                grad[a] += xi[a] * (y[i] - p[i]);
                for b in 0..width {
                    info[(a, b)] += w * xi[a] * xi[b];
                }
            }
        }
        for a in 1..width {
            grad[a] -= ridge * coef[a];
            info[(a, a)] += ridge;
        }
        let Some(cov) = invert_spd(&info) else {
            return Err(if ridge == 0.0 {
                MnirError::Separation
            } else {
                MnirError::SingularDesign("logit information matrix".into())
            });
        };
        let step = &cov * &grad;
        let mut t = 1.0;
        let mut candidate = &coef + &step * t;
        let mut cand_ll = logistic_loglik(x, y, &candidate, ridge);
        while cand_ll < ll - 1e-12 * ll.abs() && t > 1e-8 {
            t *= 0.5;
            candidate = &coef + &step * t;
            cand_ll = logistic_loglik(x, y, &candidate, ridge);
        }
        let change = (cand_ll - ll).abs();
        coef = candidate;
        ll = cand_ll;
        trace.push(ll);
        let perfect = ridge == 0.0 && ll > -1e-6 * n as f64;
        let runaway = ridge == 0.0 && coef.iter().any(|c| c.abs() > 1e4);
        if perfect || runaway {
            return Err(MnirError::Separation);
        }
        let small_step = step.amax() * t < opts.tol * (1.0 + coef.amax());
        if small_step || (change < 1e-15 * ll.abs().max(1.0) && grad.amax() < 1e-8 * n as f64) {
            let cov = refreshed_cov(x, &coef, ridge).unwrap_or(cov);
            return Ok(NewtonOut {
                coef,
                cov,
                iterations: iter,
                log_lik: ll,
            });
        }
    }
    if ridge == 0.0 {
        Err(MnirError::Separation)
    } else {
        Err(MnirError::NonConvergence {
            iterations: opts.max_iter,
            trace,
        })
    }
}

fn refreshed_cov(x: &DMatrix<f64>, coef: &DVector<f64>, ridge: f64) -> Option<DMatrix<f64>> {
    let eta = x * coef;
    let width = x.ncols();
    let mut info = DMatrix::zeros(width, width);
    for i in 0..x.nrows() {
        let p = sigmoid(eta[i]);
        let w = p * (1.0 - p);
        let xi = x.row(i);
        for a in 0..width {
            for b in 0..width {
                info[(a, b)] += w * xi[a] * xi[b];
            }
        }
    }
    for a in 1..width {
        info[(a, a)] += ridge;
    }
    invert_spd(&info)
}

fn logistic_fit(
    k: usize,
    levels: Vec<f64>,
    x: &DMatrix<f64>,
    y01: &[f64],
    out: NewtonOut,
    ridge: Option<f64>,
) -> ForwardFit {
    let eta = x * &out.coef;
    let misclassified = eta
        .iter()
        .zip(y01)
        .filter(|(&e, &y)| (sigmoid(e) > 0.5) != (y == 1.0))
        .count();
    let spec = LinearSpec::default();
    ForwardFit {
        kind: ForwardKind::Logistic,
        n_inputs: k,
        spec,
        terms: term_names(k, &spec),
        term_scaling: vec![None; k],
        intercepts: vec![out.coef[0]],
        beta: out.coef.iter().skip(1).copied().collect(),
        std_errors: (0..out.coef.len()).map(|c| out.cov[(c, c)].sqrt()).collect(),
        levels,
        ridge,
        iterations: out.iterations,
        summary: FitSummary {
            n: y01.len(),
            r2: None,
            rmse: None,
            misclassified: Some(misclassified),
            log_lik: Some(out.log_lik),
        },
        xtx_inv: Vec::new(),
    }
}

/// Options for the proportional-odds fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolrOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PolrOptions {
    fn default() -> Self {
        PolrOptions {
            max_iter: 100,
            tol: 1e-10,
        }
    }
}

/// log(sigma(a) - sigma(b)) for a > b, with infinite a or b allowed.
fn log_interval_prob(a: f64, b: f64) -> f64 {
    if a == f64::INFINITY {
        return -softplus(b);
    }
    if b == f64::NEG_INFINITY {
        return -softplus(-a);
    }
    -softplus(-a) - softplus(b) + (-(b - a).exp_m1()).ln()
}

/// Cutpoints from theta = (alpha_1, log gaps).
fn cutpoints(theta: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(theta.len());
    let mut acc = theta[0];
    out.push(acc);
    for g in &theta[1..] {
        acc += g.exp();
        out.push(acc);
    }
    out
}

struct PolrEval {
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

/// Log likelihood with gradient and Hessian in (alpha, beta).
fn polr_eval(z: &[Vec<f64>], y: &[usize], alpha: &[f64], beta: &[f64]) -> PolrEval {
    let nc = alpha.len();
    let k = beta.len();
    let dim = nc + k;
    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);
    let mut da = DVector::zeros(dim);
    let mut db = DVector::zeros(dim);
    for (row, &c) in z.iter().zip(y) {
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let a = if c < nc { alpha[c] - eta } else { f64::INFINITY };
        let b = if c > 0 { alpha[c - 1] - eta } else { f64::NEG_INFINITY };
        let p = log_interval_prob(a, b).exp();
        let (fa, fpa) = if a.is_finite() {
            let s = sigmoid(a);
            (s * (1.0 - s), s * (1.0 - s) * (1.0 - 2.0 * s))
        } else {
            (0.0, 0.0)
        };
        let (fb, fpb) = if b.is_finite() {
            let s = sigmoid(b);
            (s * (1.0 - s), s * (1.0 - s) * (1.0 - 2.0 * s))
        } else {
            (0.0, 0.0)
        };
        let la = fa / p;
        let lb = -fb / p;
        let laa = fpa / p - la * la;
        let lbb = -fpb / p - lb * lb;
        let lab = -la * lb;
        da.fill(0.0);
        db.fill(0.0);
        if c < nc {
            da[c] = 1.0;
        }
        if c > 0 {
            db[c - 1] = 1.0;
        }
        for (kk, v) in row.iter().enumerate() {
            da[nc + kk] = -v;
            db[nc + kk] = -v;
        }
        grad.axpy(la, &da, 1.0);
        grad.axpy(lb, &db, 1.0);
        hess.ger(laa, &da, &da, 1.0);
        hess.ger(lbb, &db, &db, 1.0);
        hess.ger(lab, &da, &db, 1.0);
        hess.ger(lab, &db, &da, 1.0);
    }
    PolrEval { grad, hess }
}

fn polr_ll(z: &[Vec<f64>], y: &[usize], theta: &[f64], nc: usize) -> f64 {
    let alpha = cutpoints(&theta[..nc]);
    let beta = &theta[nc..];
    z.iter()
        .zip(y)
        .map(|(row, &c)| {
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            let a = if c < nc { alpha[c] - eta } else { f64::INFINITY };
            let b = if c > 0 { alpha[c - 1] - eta } else { f64::NEG_INFINITY };
            log_interval_prob(a, b)
        })
        .sum()
}

/// Proportional-odds logit p(y <= c) = sigma(alpha_c - beta'z), fitted by
/// damped Newton with cutpoints alpha_c = alpha_1 + sum of exp(gaps).
pub fn fit_polr(z: &[Vec<f64>], y: &[f64], opts: PolrOptions) -> Result<ForwardFit> {
    let k = check_rows(z, y.len())?;
    let mut levels: Vec<f64> = y.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.len() < 2 {
        return Err(MnirError::ConstantResponse("ordinal response has one level".into()));
    }
    let yi: Vec<usize> = y
        .iter()
        .map(|v| levels.binary_search_by(|l| l.total_cmp(v)).expect("level present"))
        .collect();
    let nc = levels.len() - 1;
    let n = y.len() as f64;

    // Empirical cumulative logits.
    let mut theta = vec![0.0; nc + k];
    let mut cum = 0.0;
    let mut prev = 0.0;
    for c in 0..nc {
        cum += yi.iter().filter(|&&v| v == c).count() as f64 / n;
        let logit = (cum / (1.0 - cum)).ln();
        theta[c] = if c == 0 { logit } else { (logit - prev).max(1e-6).ln() };
        prev = logit;
    }

    let mut ll = polr_ll(z, &yi, &theta, nc);
    let mut trace = vec![ll];
    for iter in 1..=opts.max_iter {
        let alpha = cutpoints(&theta[..nc]);
        let eval = polr_eval(z, &yi, &alpha, &theta[nc..]);
        // Chain rule to theta.
        let dim = nc + k;
        let mut jac = DMatrix::identity(dim, dim);
        for c in 0..nc {
            jac[(c, 0)] = 1.0;
            for l in 1..nc {
                jac[(c, l)] = if l <= c { theta[l].exp() } else { 0.0 };
            }
        }
        let grad = jac.transpose() * &eval.grad;
        let mut hess = jac.transpose() * &eval.hess * &jac;
        for l in 1..nc {
            let s: f64 = (l..nc).map(|c| eval.grad[c]).sum();
            hess[(l, l)] += s * theta[l].exp();
        }
        let neg = -hess;
        let mut damping = 0.0;
        let step = loop {
            let mut m = neg.clone();
            for d in 0..dim {
                m[(d, d)] += damping;
            }
            if let Some(ch) = m.cholesky() {
                break ch.solve(&grad);
            }
            damping = if damping == 0.0 { 1e-8 * neg.diagonal().amax().max(1.0) } else { damping * 10.0 };
            if damping > 1e12 {
                return Err(MnirError::NonConvergence { iterations: iter, trace });
            }
        };
        let mut t = 1.0;
        let mut candidate: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
        let mut cand_ll = polr_ll(z, &yi, &candidate, nc);
        while !(cand_ll >= ll - 1e-12 * ll.abs()) && t > 1e-10 {
            t *= 0.5;
            candidate = theta.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            cand_ll = polr_ll(z, &yi, &candidate, nc);
        }
        if !cand_ll.is_finite() {
            return Err(MnirError::NonConvergence { iterations: iter, trace });
        }
        let moved = step.amax() * t;
        theta = candidate;
        ll = cand_ll;
        trace.push(ll);
        if moved < opts.tol * (1.0 + theta.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
            let alpha = cutpoints(&theta[..nc]);
            let eval = polr_eval(z, &yi, &alpha, &theta[nc..]);
            let cov = invert_spd(&(-eval.hess)).unwrap_or_else(|| DMatrix::from_element(dim, dim, f64::NAN));
            let beta = theta[nc..].to_vec();
            let misclassified = z
                .iter()
                .zip(&yi)
                .filter(|(row, &c)| modal_level(&polr_probs(&alpha, &beta, row)) != c)
                .count();
            return Ok(ForwardFit {
                kind: ForwardKind::Polr,
                n_inputs: k,
                spec: LinearSpec::default(),
                terms: term_names(k, &LinearSpec::default()),
                term_scaling: vec![None; k],
                intercepts: alpha,
                beta,
                std_errors: (0..dim).map(|d| cov[(d, d)].sqrt()).collect(),
                levels,
                ridge: None,
                iterations: iter,
                summary: FitSummary {
                    n: y.len(),
                    r2: None,
                    rmse: None,
                    misclassified: Some(misclassified),
                    log_lik: Some(ll),
                },
                xtx_inv: Vec::new(),
            });
        }
    }
    Err(MnirError::NonConvergence {
        iterations: opts.max_iter,
        trace,
    })
}

fn polr_probs(alpha: &[f64], beta: &[f64], z: &[f64]) -> Vec<f64> {
    let eta: f64 = z.iter().zip(beta).map(|(a, b)| a * b).sum();
    let nc = alpha.len();
    (0..=nc)
        .map(|c| {
            let a = if c < nc { alpha[c] - eta } else { f64::INFINITY };
            let b = if c > 0 { alpha[c - 1] - eta } else { f64::NEG_INFINITY };
            log_interval_prob(a, b).exp()
        })
        .collect()
}

fn modal_level(probs: &[f64]) -> usize {
    let mut best = 0;
    for (c, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = c;
        }
    }
    best
}

/// Score-equation residual of a logit or polr fit: the largest absolute
/// gradient component of the log likelihood at the fitted values.
pub fn score_residual(fit: &ForwardFit, z: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    check_rows(z, y.len())?;
    match fit.kind {
        ForwardKind::Logistic => {
            let x = design(z, &fit.spec, &fit.term_scaling);
            let coef = DVector::from_iterator(x.ncols(), fit.intercepts.iter().chain(&fit.beta).copied());
            let eta = &x * &coef;
            let mut grad = DVector::<f64>::zeros(x.ncols());
            for i in 0..x.nrows() {
                let yi = if y[i] == fit.levels[1] { 1.0 } else { 0.0 };
                grad.axpy(yi - sigmoid(eta[i]), &x.row(i).transpose(), 1.0);
            }
            if let Some(r) = fit.ridge {
                for a in 1..x.ncols() {
                    grad[a] -= r * coef[a];
                }
            }
            Ok(grad.amax())
        }
        ForwardKind::Polr => {
            let yi: Vec<usize> = y
                .iter()
                .map(|v| {
                    fit.levels
                        .iter()
                        .position(|l| l == v)
                        .ok_or_else(|| MnirError::DimensionMismatch(format!("unknown level {v}")))
                })
                .collect::<Result<_>>()?;
            Ok(polr_eval(z, &yi, &fit.intercepts, &fit.beta).grad.amax())
        }
        _ => Err(MnirError::InvalidConfig("score equations apply to logit and polr fits".into())),
    }
}

/// Predict for each score row.
pub fn predict(fit: &ForwardFit, z: &[Vec<f64>]) -> Result<Vec<Prediction>> {
    if z.iter().any(|r| r.len() != fit.n_inputs) {
        return Err(MnirError::DimensionMismatch(format!(
            "fit expects {} score columns",
            fit.n_inputs
        )));
    }
    Ok(z.iter()
        .map(|row| match fit.kind {
            ForwardKind::Linear | ForwardKind::Quadratic | ForwardKind::LinearWithInteraction => {
                let mut t = expand(row, &fit.spec);
                apply_scaling(&mut t, &fit.term_scaling);
                let value = fit.intercepts[0] + t.iter().zip(&fit.beta).map(|(a, b)| a * b).sum::<f64>();
                Prediction::Mean { value }
            }
            ForwardKind::Logistic => {
                let eta = fit.intercepts[0] + row.iter().zip(&fit.beta).map(|(a, b)| a * b).sum::<f64>();
                let prob = sigmoid(eta);
                let class = if prob > 0.5 { fit.levels[1] } else { fit.levels[0] };
                Prediction::Binary { prob, class }
            }
            ForwardKind::Polr => {
                let probs = polr_probs(&fit.intercepts, &fit.beta, row);
                let level = fit.levels[modal_level(&probs)];
                Prediction::Ordinal { probs, level }
            }
        })
        .collect())
}

/// Residuals of the least-squares design columns, for checking orthogonality.
pub fn design_residual_products(fit: &ForwardFit, z: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    check_rows(z, y.len())?;
    let x = design(z, &fit.spec, &fit.term_scaling);
    let coef = DVector::from_iterator(x.ncols(), fit.intercepts.iter().chain(&fit.beta).copied());
    let resid = DVector::from_column_slice(y) - &x * &coef;
    Ok((x.transpose() * resid).iter().copied().collect())
}
