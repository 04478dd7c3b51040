//! Likelihood objects for multinomial inverse regression: response factors,
//! pooled observations, parameters, the cached linear predictor and the
//! negative log likelihood.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::SparseCounts;
use crate::error::{MnirError, Result};

/// n x K response factors, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMatrix {
    n: usize,
    k: usize,
    values: Vec<f64>,
    names: Vec<String>,
}

/// One distinct factor vector and the documents that share it.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub value: Vec<f64>,
    pub docs: Vec<usize>,
}

impl FactorMatrix {
    pub fn new(n: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        let names = (1..=k).map(|c| format!("f{c}")).collect();
        Self::with_names(n, k, values, names)
    }

    pub fn with_names(n: usize, k: usize, values: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if k == 0 {
            return Err(MnirError::InvalidConfig("factor dimension K must be >= 1".into()));
        }
        if values.len() != n * k || names.len() != k {
            return Err(MnirError::DimensionMismatch(format!(
                "{} values and {} names for a {n} x {k} factor matrix",
                values.len(),
                names.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(MnirError::NonFinite(format!(
                "factor value at row {}, column {}",
                pos / k,
                pos % k
            )));
        }
        Ok(FactorMatrix { n, k, values, names })
    }

    /// A single factor column.
    pub fn from_column(values: Vec<f64>) -> Result<Self> {
        Self::new(values.len(), 1, values)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(MnirError::DimensionMismatch("ragged factor rows".into()));
        }
        Self::new(rows.len(), k, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_factors(&self) -> usize {
        self.k
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.k + k]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, k)).collect()
    }

    pub fn select_rows(&self, docs: &[usize]) -> FactorMatrix {
        let values = docs.iter().flat_map(|&i| self.row(i).to_vec()).collect();
        FactorMatrix {
            n: docs.len(),
            k: self.k,
            values,
            names: self.names.clone(),
        }
    }

    /// Round every value to the nearest multiple of `grid`, ties away from zero.
    pub fn rounded(&self, grid: f64) -> Result<FactorMatrix> {
        if !(grid > 0.0 && grid.is_finite()) {
            return Err(MnirError::InvalidConfig(format!("rounding grid {grid} must be > 0")));
        }
        let values = self.values.iter().map(|v| (v / grid).round() * grid).collect();
        Ok(FactorMatrix {
            values,
            ..self.clone()
        })
    }

    /// Per-column mean and sample standard deviation.
    pub fn column_stats(&self) -> Vec<(f64, f64)> {
        (0..self.k)
            .map(|k| mean_sd(&self.column(k)))
            .collect()
    }

    /// Centre and scale each column to mean 0, sd 1.
    pub fn standardized(&self) -> Result<(FactorMatrix, Vec<(f64, f64)>)> {
        let stats = self.column_stats();
        if let Some(column) = stats.iter().position(|&(_, sd)| !(sd > 0.0)) {
            return Err(MnirError::ZeroVarianceFactor { column });
        }
        Ok((self.apply_scaling(&stats), stats))
    }

    pub fn apply_scaling(&self, stats: &[(f64, f64)]) -> FactorMatrix {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(pos, v)| {
                let (mu, sd) = stats[pos % self.k];
                (v - mu) / sd
            })
            .collect();
        FactorMatrix {
            values,
            ..self.clone()
        }
    }

    /// Distinct rows sorted lexicographically, with their member documents.
    pub fn levels(&self) -> Vec<Level> {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&a, &b| cmp_rows(self.row(a), self.row(b)).then(a.cmp(&b)));
        let mut levels: Vec<Level> = Vec::new();
        for i in order {
            match levels.last_mut() {
                Some(l) if cmp_rows(&l.value, self.row(i)) == Ordering::Equal => l.docs.push(i),
                _ => levels.push(Level {
                    value: self.row(i).to_vec(),
                    docs: vec![i],
                }),
            }
        }
        levels
    }
}

fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        // -0.0 and 0.0 are the same level.
        match (x + 0.0).total_cmp(&(y + 0.0)) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

pub(crate) fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let sd = if x.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// Random-effect settings for the subject effects u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RandomEffects {
    #[default]
    Off,
    /// u_vj ~ N(log n_v - sigma_v^2 / 2, sigma_v^2), sigma_v^2 = log(n_v + 1) - log(n_v).
    CollapsedLognormal,
    /// u_ij ~ N(0, variance) for every observation.
    Normal { variance: f64 },
}

/// Cost applied to each loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyForm {
    /// s log(1 + |phi| / r): MAP under independent gamma-Laplace priors.
    #[default]
    GammaLasso,
    /// Fixed-rate Laplace prior, (s / r) |phi|.
    Lasso,
    /// No penalty (maximum likelihood in the loadings).
    Unpenalized,
}

/// Prior hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Gamma shape s.
    pub shape: f64,
    /// Gamma rate r.
    pub rate: f64,
    pub sigma_alpha: f64,
    pub random_effects: RandomEffects,
    #[serde(default)]
    pub penalty: PenaltyForm,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            shape: 1.0,
            rate: 0.5,
            sigma_alpha: 1.0,
            random_effects: RandomEffects::Off,
            penalty: PenaltyForm::GammaLasso,
        }
    }
}

impl PriorSpec {
    pub fn gamma_lasso(shape: f64, rate: f64) -> Self {
        PriorSpec {
            shape,
            rate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.shape) || !positive(self.rate) || !positive(self.sigma_alpha) {
            return Err(MnirError::InvalidConfig(format!(
                "shape ({}), rate ({}) and sigma_alpha ({}) must be positive",
                self.shape, self.rate, self.sigma_alpha
            )));
        }
        if let RandomEffects::Normal { variance } = self.random_effects {
            if !positive(variance) {
                return Err(MnirError::InvalidConfig(format!(
                    "random-effect variance {variance} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Normal prior (mean, variance) for each observation's random effects,
    /// or None when random effects are off.
    pub fn random_effect_priors(&self, sizes: &[usize]) -> Result<Option<Vec<(f64, f64)>>> {
        match self.random_effects {
            RandomEffects::Off => Ok(None),
            RandomEffects::CollapsedLognormal => collapsed_re_prior(sizes).map(Some),
            RandomEffects::Normal { variance } => Ok(Some(vec![(0.0, variance); sizes.len()])),
        }
    }
}

/// Log-normal approximation to the Ga(n_v, 1) pooled random-effect prior.
pub fn collapsed_re_prior(sizes: &[usize]) -> Result<Vec<(f64, f64)>> {
    sizes
        .iter()
        .map(|&n| {
            if n < 1 {
                return Err(MnirError::InvalidConfig("level size n_v must be >= 1".into()));
            }
            let n = n as f64;
            let var = (1.0 / n).ln_1p();
            Ok((n.ln() - 0.5 * var, var))
        })
        .collect()
}

/// Counts pooled within factor levels.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedData {
    /// One row per level, in level order.
    pub counts: SparseCounts,
    /// Factor vector of each level.
    pub levels: Vec<Vec<f64>>,
    /// Documents pooled into each level.
    pub members: Vec<Vec<usize>>,
}

impl CollapsedData {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// n_v for each level.
    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// m_v for each level.
    pub fn totals(&self) -> &[u64] {
        self.counts.row_totals()
    }
}

/// Sum counts over documents sharing a factor level.
pub fn collapse(counts: &SparseCounts, factors: &FactorMatrix) -> Result<CollapsedData> {
    if counts.n_docs() != factors.n_rows() {
        return Err(MnirError::DimensionMismatch(format!(
            "{} documents but {} factor rows",
            counts.n_docs(),
            factors.n_rows()
        )));
    }
    let p = counts.n_tokens();
    let levels = factors.levels();
    let mut rows = Vec::with_capacity(levels.len());
    let mut dense = vec![0u32; p];
    for level in &levels {
        let mut touched = Vec::new();
        for &i in &level.docs {
            for (j, c) in counts.row(i) {
                if dense[j] == 0 {
                    touched.push(j);
                }
                dense[j] += c;
            }
        }
        touched.sort_unstable();
        rows.push(
            touched
                .iter()
                .map(|&j| (j, std::mem::take(&mut dense[j])))
                .collect(),
        );
    }
    Ok(CollapsedData {
        counts: SparseCounts::from_rows(p, rows),
        levels: levels.iter().map(|l| l.value.clone()).collect(),
        members: levels.into_iter().map(|l| l.docs).collect(),
    })
}

/// Observations the likelihood is evaluated on: documents or pooled levels.
#[derive(Debug, Clone)]
pub struct Observations {
    n: usize,
    p: usize,
    k: usize,
    counts: SparseCounts,
    col_ptr: Vec<usize>,
    col_obs: Vec<usize>,
    m: Vec<f64>,
    v: Vec<f64>,
    sizes: Vec<usize>,
    xv: Vec<f64>,
    xsum: Vec<f64>,
}

impl Observations {
    /// One observation per document.
    pub fn from_documents(counts: &SparseCounts, factors: &FactorMatrix) -> Result<Self> {
        if counts.n_docs() != factors.n_rows() {
            return Err(MnirError::DimensionMismatch(format!(
                "{} documents but {} factor rows",
                counts.n_docs(),
                factors.n_rows()
            )));
        }
        let v = (0..factors.n_rows()).flat_map(|i| factors.row(i).to_vec()).collect();
        Self::build(counts.clone(), v, factors.n_factors(), vec![1; counts.n_docs()])
    }

    /// One observation per factor level.
    pub fn from_collapsed(data: &CollapsedData) -> Result<Self> {
        let k = data.levels.first().map_or(0, Vec::len);
        Self::build(data.counts.clone(), data.levels.concat(), k, data.sizes())
    }

    fn build(counts: SparseCounts, v: Vec<f64>, k: usize, sizes: Vec<usize>) -> Result<Self> {
        let n = counts.n_docs();
        let p = counts.n_tokens();
        if n == 0 || p == 0 || k == 0 {
            return Err(MnirError::NoDocuments);
        }
        let mut col_count = vec![0usize; p + 1];
        for (_, j, _) in counts.entries() {
            col_count[j + 1] += 1;
        }
        for j in 0..p {
            col_count[j + 1] += col_count[j];
        }
        let col_ptr = col_count.clone();
        let mut fill = col_count;
        let mut col_obs = vec![0; counts.nnz()];
        let mut xv = vec![0.0; p * k];
        let mut xsum = vec![0.0; p];
        for (i, j, c) in counts.entries() {
            col_obs[fill[j]] = i;
            fill[j] += 1;
            let c = c as f64;
            xsum[j] += c;
            for kk in 0..k {
                xv[j * k + kk] += v[i * k + kk] * c;
            }
        }
        let m = counts.row_totals().iter().map(|&t| t as f64).collect();
        Ok(Observations {
            n,
            p,
            k,
            counts,
            col_ptr,
            col_obs,
            m,
            v,
            sizes,
            xv,
            xsum,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn n_tokens(&self) -> usize {
        self.p
    }

    pub fn n_factors(&self) -> usize {
        self.k
    }

    pub fn counts(&self) -> &SparseCounts {
        &self.counts
    }

    pub fn total(&self, i: usize) -> f64 {
        self.m[i]
    }

    pub fn factor(&self, i: usize, k: usize) -> f64 {
        self.v[i * self.k + k]
    }

    pub fn factors_of(&self, i: usize) -> &[f64] {
        &self.v[i * self.k..(i + 1) * self.k]
    }

    /// Documents pooled into observation `i`.
    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// sum_i v_ik x_ij
    pub fn xv(&self, j: usize, k: usize) -> f64 {
        self.xv[j * self.k + k]
    }

    /// sum_i x_ij
    pub fn xsum(&self, j: usize) -> f64 {
        self.xsum[j]
    }

    /// Observations with a nonzero count of token `j`.
    pub fn token_obs(&self, j: usize) -> &[usize] {
        &self.col_obs[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    /// x_ij
    pub fn count(&self, i: usize, j: usize) -> f64 {
        self.counts.get(i, j) as f64
    }
}

/// Intercepts, loadings and optional random effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct MnirParams {
    pub p: usize,
    pub k: usize,
    pub alpha: Vec<f64>,
    /// p x K loadings, `phi[j * k + kk]`.
    pub phi: Vec<f64>,
    /// n_obs x p random effects, `u[i * p + j]`.
    pub u: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    p: usize,
    k: usize,
    alpha: Vec<f64>,
    /// Nonzero loadings as (token, factor, value).
    phi: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u: Option<Vec<f64>>,
}

impl From<MnirParams> for ParamsRepr {
    fn from(m: MnirParams) -> Self {
        let phi = m
            .phi
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(pos, &v)| (pos / m.k, pos % m.k, v))
            .collect();
        ParamsRepr {
            p: m.p,
            k: m.k,
            alpha: m.alpha,
            phi,
            u: m.u,
        }
    }
}

impl TryFrom<ParamsRepr> for MnirParams {
    type Error = String;

    fn try_from(r: ParamsRepr) -> std::result::Result<Self, String> {
        if r.alpha.len() != r.p {
            return Err(format!("{} intercepts for {} tokens", r.alpha.len(), r.p));
        }
        let mut phi = vec![0.0; r.p * r.k];
        for (j, k, v) in r.phi {
            if j >= r.p || k >= r.k {
                return Err(format!("loading ({j}, {k}) out of range"));
            }
            phi[j * r.k + k] = v;
        }
        if let Some(u) = &r.u {
            if u.len() % r.p.max(1) != 0 {
                return Err("random effects not a multiple of p".into());
            }
        }
        Ok(MnirParams {
            p: r.p,
            k: r.k,
            alpha: r.alpha,
            phi,
            u: r.u,
        })
    }
}

impl MnirParams {
    pub fn zeros(p: usize, k: usize) -> Self {
        MnirParams {
            p,
            k,
            alpha: vec![0.0; p],
            phi: vec![0.0; p * k],
            u: None,
        }
    }

    pub fn loading(&self, j: usize, k: usize) -> f64 {
        self.phi[j * self.k + k]
    }

    pub fn loading_mut(&mut self, j: usize, k: usize) -> &mut f64 {
        &mut self.phi[j * self.k + k]
    }

    pub fn random_effect(&self, i: usize, j: usize) -> f64 {
        self.u.as_ref().map_or(0.0, |u| u[i * self.p + j])
    }

    /// eta_ij = alpha_j + u_ij + v_i' phi_j, from scratch.
    pub fn eta(&self, obs: &Observations, i: usize, j: usize) -> f64 {
        let mut e = self.alpha[j] + self.random_effect(i, j);
        for kk in 0..self.k {
            e += obs.factor(i, kk) * self.phi[j * self.k + kk];
        }
        e
    }

    pub fn nnz_loadings(&self) -> usize {
        self.phi.iter().filter(|&&v| v != 0.0).count()
    }

    fn check_shape(&self, obs: &Observations) -> Result<()> {
        if self.p != obs.n_tokens() || self.k != obs.n_factors() {
            return Err(MnirError::DimensionMismatch(format!(
                "parameters are {} x {}, observations {} x {}",
                self.p,
                self.k,
                obs.n_tokens(),
                obs.n_factors()
            )));
        }
        if let Some(u) = &self.u {
            if u.len() != obs.n_obs() * self.p {
                return Err(MnirError::DimensionMismatch(
                    "random effects do not match the observations".into(),
                ));
            }
        }
        Ok(())
    }
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let top = x.iter().position(|&v| v == max).unwrap_or(0);
    let rest: f64 = x
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != top)
        .map(|(_, v)| (v - max).exp())
        .sum();
    max + rest.ln_1p()
}

/// l = -sum_i [x_i'eta_i - m_i log sum_j exp(eta_ij)], without the
/// multinomial coefficient.
pub fn neg_log_lik(params: &MnirParams, obs: &Observations) -> Result<f64> {
    params.check_shape(obs)?;
    let p = obs.n_tokens();
    let mut eta = vec![0.0; p];
    let mut total = 0.0;
    for i in 0..obs.n_obs() {
        for (j, e) in eta.iter_mut().enumerate() {
            *e = params.eta(obs, i, j);
        }
        if let Some(j) = eta.iter().position(|e| !e.is_finite()) {
            return Err(MnirError::NonFinite(format!("eta at observation {i}, token {j}")));
        }
        let xeta: f64 = obs.counts().row(i).map(|(j, c)| c as f64 * eta[j]).sum();
        total -= xeta - obs.total(i) * log_sum_exp(&eta);
    }
    Ok(total)
}

/// Rows whose exponentiated predictor exceeds this are rebased.
const REBASE_LIMIT: f64 = 600.0;

/// Linear predictors with per-observation shifted exponentials.
///
/// `expo = exp(eta_ij - shift_i)` and `sums[i]` is their row sum,
/// so q_ij = expo / sums and the log normaliser is shift_i + ln(sums_i).
#[derive(Debug, Clone)]
pub struct EtaCache {
    n: usize,
    p: usize,
    eta: Vec<f64>,
    shift: Vec<f64>,
    expo: Vec<f64>,
    sums: Vec<f64>,
}

impl EtaCache {
    pub fn new(params: &MnirParams, obs: &Observations) -> Result<Self> {
        params.check_shape(obs)?;
        let n = obs.n_obs();
        let p = obs.n_tokens();
        let mut cache = EtaCache {
            n,
            p,
            eta: vec![0.0; n * p],
            shift: vec![0.0; n],
            expo: vec![0.0; n * p],
            sums: vec![0.0; n],
        };
        cache.refresh(params, obs);
        Ok(cache)
    }

    /// Storage is token-major so a coordinate's observations are contiguous.
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    /// Recompute everything from the parameters.
    pub fn refresh(&mut self, params: &MnirParams, obs: &Observations) {
        for i in 0..self.n {
            for j in 0..self.p {
                let pos = self.at(i, j);
                self.eta[pos] = params.eta(obs, i, j);
            }
            self.rebase(i);
        }
    }

    fn rebase(&mut self, i: usize) {
        let shift = (0..self.p)
            .map(|j| self.eta[self.at(i, j)])
            .fold(f64::NEG_INFINITY, f64::max);
        let shift = if shift.is_finite() { shift } else { 0.0 };
        let mut sum = 0.0;
        for j in 0..self.p {
            let pos = self.at(i, j);
            let e = (self.eta[pos] - shift).exp();
            self.expo[pos] = e;
            sum += e;
        }
        self.shift[i] = shift;
        self.sums[i] = sum;
    }

    /// Move eta_ij by `delta`.
    pub fn add(&mut self, i: usize, j: usize, delta: f64) {
        let pos = self.at(i, j);
        self.eta[pos] += delta;
        let z = self.eta[pos] - self.shift[i];
        if z > REBASE_LIMIT {
            self.rebase(i);
            return;
        }
        let e = z.exp();
        self.sums[i] += e - self.expo[pos];
        self.expo[pos] = e;
        if !(self.sums[i] > self.expo[pos] * 0.5) {
            // Cancellation made the running sum unreliable.
            self.rebase(i);
        }
    }

    pub fn eta(&self, i: usize, j: usize) -> f64 {
        self.eta[self.at(i, j)]
    }

    pub fn q(&self, i: usize, j: usize) -> f64 {
        self.expo[self.at(i, j)] / self.sums[i]
    }

    pub fn log_normalizer(&self, i: usize) -> f64 {
        self.shift[i] + self.sums[i].ln()
    }

    /// e^{eta_ij} / E_ij with E_ij = sum_{l != j} e^{eta_il}.
    pub fn odds(&self, i: usize, j: usize) -> f64 {
        let pos = self.at(i, j);
        let mut rest = self.sums[i] - self.expo[pos];
        if rest < 1e-8 * self.sums[i] {
            // Token j dominates the row; add up the others directly.
            rest = (0..self.p)
                .filter(|&l| l != j)
                .map(|l| self.expo[self.at(i, l)])
                .sum();
        }
        self.expo[pos] / rest
    }

    /// log(e^{eta_ij}) - log(E_ij).
    pub fn log_odds(&self, i: usize, j: usize) -> f64 {
        self.odds(i, j).ln()
    }

    /// Negative log likelihood from the cached predictors.
    pub fn neg_log_lik(&self, obs: &Observations) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            let xeta: f64 = obs
                .counts()
                .row(i)
                .map(|(j, c)| c as f64 * self.eta[self.at(i, j)])
                .sum();
            total -= xeta - obs.total(i) * self.log_normalizer(i);
        }
        total
    }

    /// Largest |cached eta - from-scratch eta|.
    pub fn max_drift(&self, params: &MnirParams, obs: &Observations) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.p {
                worst = worst.max((self.eta[self.at(i, j)] - params.eta(obs, i, j)).abs());
            }
        }
        worst
    }
}
