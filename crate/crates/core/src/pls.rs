//! Slant indices and stagewise inverse-regression partial least squares on
//! token frequencies.

use serde::{Deserialize, Serialize};

use crate::error::{MnirError, Result};
use crate::forward::{fit_linear, LinearSpec};
use crate::model::mean_sd;

/// Both forms of the slant index.
#[derive(Debug, Clone, PartialEq)]
pub struct SlantScores {
    /// sum_j b_j (f_ij - a_j) / sum_j b_j^2, with (a_j, b_j) from regressing f_j on y.
    pub gs: Vec<f64>,
    /// sum_j f_ij cor(f_j, y).
    pub normalized: Vec<f64>,
    /// Columns skipped for having zero variance.
    pub dropped: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LoadingKind {
    /// phi_jk = cor(F_j, v_{k-1}).
    #[default]
    Correlation,
    /// phi_jk = simple OLS slope of F_j on v_{k-1}.
    OlsSlope,
}

/// A fitted PLS model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsFit {
    pub k: usize,
    pub loading_kind: LoadingKind,
    /// (mean, sd) of each frequency column; sd 0 marks a dropped column.
    pub col_stats: Vec<(f64, f64)>,
    /// Loadings per stage, one entry per column.
    pub loadings: Vec<Vec<f64>>,
    /// Directions z_k on the training rows.
    pub directions: Vec<Vec<f64>>,
    /// Residualised factors v_1..v_K.
    pub residual_factors: Vec<Vec<f64>>,
    /// Intercept then one coefficient per direction.
    pub coef: Vec<f64>,
    pub fitted: Vec<f64>,
    pub r2: f64,
}

fn check_matrix(f: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    let p = f.first().map_or(0, Vec::len);
    if f.is_empty() || p == 0 {
        return Err(MnirError::NoDocuments);
    }
    if f.iter().any(|r| r.len() != p) || f.len() != y.len() {
        return Err(MnirError::DimensionMismatch(format!(
            "{} frequency rows and {} responses",
            f.len(),
            y.len()
        )));
    }
    let (_, sd) = mean_sd(y);
    if !(sd > 0.0) {
        return Err(MnirError::ConstantResponse("response has zero variance".into()));
    }
    Ok(p)
}

fn column_stats(f: &[Vec<f64>], p: usize) -> Vec<(f64, f64)> {
    (0..p)
        .map(|j| mean_sd(&f.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect()
}

/// Sample covariance of each column with `y`.
fn column_cov(f: &[Vec<f64>], stats: &[(f64, f64)], y: &[f64]) -> Vec<f64> {
    let (ybar, _) = mean_sd(y);
    let denom = (y.len() - 1) as f64;
    let mut cov = vec![0.0; stats.len()];
    for (row, yi) in f.iter().zip(y) {
        let dy = yi - ybar;
        for (j, c) in cov.iter_mut().enumerate() {
            *c += (row[j] - stats[j].0) * dy;
        }
    }
    cov.iter_mut().for_each(|c| *c /= denom);
    cov
}

fn warn_dropped(dropped: &[usize]) {
    if !dropped.is_empty() {
        log::warn!("dropping {} zero-variance frequency columns", dropped.len());
    }
}

/// Slant scores of each row of the frequency matrix `f` against `y`.
pub fn slant_index(f: &[Vec<f64>], y: &[f64]) -> Result<SlantScores> {
    let p = check_matrix(f, y)?;
    let stats = column_stats(f, p);
    let dropped: Vec<usize> = (0..p).filter(|&j| !(stats[j].1 > 0.0)).collect();
    warn_dropped(&dropped);
    let (ybar, ysd) = mean_sd(y);
    let cov = column_cov(f, &stats, y);
    let keep: Vec<usize> = (0..p).filter(|&j| stats[j].1 > 0.0).collect();
    let b: Vec<f64> = keep.iter().map(|&j| cov[j] / (ysd * ysd)).collect();
    let a: Vec<f64> = keep.iter().zip(&b).map(|(&j, bj)| stats[j].0 - bj * ybar).collect();
    let cor: Vec<f64> = keep.iter().map(|&j| cov[j] / (stats[j].1 * ysd)).collect();
    let bb: f64 = b.iter().map(|v| v * v).sum();
    let gs = f
        .iter()
        .map(|row| {
            keep.iter()
                .enumerate()
                .map(|(t, &j)| b[t] * (row[j] - a[t]))
                .sum::<f64>()
                / bb
        })
        .collect();
    let normalized = f
        .iter()
        .map(|row| keep.iter().enumerate().map(|(t, &j)| row[j] * cor[t]).sum())
        .collect();
    Ok(SlantScores {
        gs,
        normalized,
        dropped,
    })
}

/// Column-standardised copy of `f`, zero for dropped columns.
pub fn standardize_columns(f: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<(f64, f64)>) {
    let p = f.first().map_or(0, Vec::len);
    let stats = column_stats(f, p);
    let out = f
        .iter()
        .map(|row| {
            row.iter()
                .zip(&stats)
                .map(|(v, &(mu, sd))| if sd > 0.0 { (v - mu) / sd } else { 0.0 })
                .collect()
        })
        .collect();
    (out, stats)
}

fn project(fhat: &[Vec<f64>], phi: &[f64]) -> Vec<f64> {
    fhat.iter()
        .map(|row| row.iter().zip(phi).map(|(a, b)| a * b).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// K-direction PLS of `y` on the column-standardised frequency matrix.
pub fn pls_fit(f: &[Vec<f64>], y: &[f64], k: usize, loading_kind: LoadingKind) -> Result<PlsFit> {
    let p = check_matrix(f, y)?;
    if k == 0 {
        return Err(MnirError::InvalidConfig("PLS needs K >= 1".into()));
    }
    let (fhat, col_stats) = standardize_columns(f);
    let dropped: Vec<usize> = (0..p).filter(|&j| !(col_stats[j].1 > 0.0)).collect();
    warn_dropped(&dropped);
    let unit = vec![(0.0, 1.0); p];

    let mut v = y.to_vec();
    let mut loadings = Vec::with_capacity(k);
    let mut directions = Vec::with_capacity(k);
    let mut residual_factors = Vec::with_capacity(k);
    for stage in 1..=k {
        let (_, vsd) = mean_sd(&v);
        let cov = column_cov(&fhat, &unit, &v);
        let phi: Vec<f64> = (0..p)
            .map(|j| {
                if col_stats[j].1 > 0.0 && vsd > 0.0 {
                    match loading_kind {
                        LoadingKind::Correlation => (cov[j] / vsd).clamp(-1.0, 1.0),
                        LoadingKind::OlsSlope => cov[j] / (vsd * vsd),
                    }
                } else {
                    0.0
                }
            })
            .collect();
        let z = project(&fhat, &phi);
        let zz = dot(&z, &z);
        if !(zz > 0.0) {
            return Err(MnirError::StageCollapse(stage));
        }
        let coef = dot(&z, &v) / zz;
        v.iter_mut().zip(&z).for_each(|(vi, zi)| *vi -= coef * zi);
        loadings.push(phi);
        directions.push(z);
        residual_factors.push(v.clone());
    }

    let rows: Vec<Vec<f64>> = (0..y.len())
        .map(|i| directions.iter().map(|z| z[i]).collect())
        .collect();
    let ols = fit_linear(&rows, y, LinearSpec::default())?;
    let mut coef = ols.intercepts.clone();
    coef.extend(&ols.beta);
    let fitted = rows
        .iter()
        .map(|r| coef[0] + dot(&coef[1..], r))
        .collect();
    Ok(PlsFit {
        k,
        loading_kind,
        col_stats,
        loadings,
        directions,
        residual_factors,
        coef,
        fitted,
        r2: ols.summary.r2.expect("least squares reports R2"),
    })
}

/// Predictions for new frequency rows.
pub fn pls_predict(fit: &PlsFit, f: &[Vec<f64>]) -> Result<Vec<f64>> {
    let p = fit.col_stats.len();
    if f.iter().any(|r| r.len() != p) {
        return Err(MnirError::DimensionMismatch(format!("PLS fit expects {p} columns")));
    }
    Ok(f.iter()
        .map(|row| {
            let fhat: Vec<f64> = row
                .iter()
                .zip(&fit.col_stats)
                .map(|(v, &(mu, sd))| if sd > 0.0 { (v - mu) / sd } else { 0.0 })
                .collect();
            fit.coef[0]
                + fit
                    .loadings
                    .iter()
                    .zip(&fit.coef[1..])
                    .map(|(phi, c)| c * dot(&fhat, phi))
                    .sum::<f64>()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncorrelated_response_gives_zero_normalized_slant() {
        // Columns are symmetric in y by construction.
        let f = vec![
            vec![0.2, 0.5],
            vec![0.4, 0.1],
            vec![0.4, 0.1],
            vec![0.2, 0.5],
        ];
        let y = [1.0, 1.0, -1.0, -1.0];
        let s = slant_index(&f, &y).unwrap();
        assert!(s.normalized.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn single_column_equal_to_response() {
        let f: Vec<Vec<f64>> = [0.1, 0.3, 0.2, 0.6].iter().map(|&v| vec![v]).collect();
        let y = [0.1, 0.3, 0.2, 0.6];
        let s = slant_index(&f, &y).unwrap();
        for (z, fi) in s.normalized.iter().zip(&y) {
            assert!((z - fi).abs() < 1e-14);
        }
        // b = 1, a = 0: the GS form returns f itself.
        for (z, fi) in s.gs.iter().zip(&y) {
            assert!((z - fi).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_response_and_collapse() {
        let f = vec![vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.1]];
        assert!(matches!(
            slant_index(&f, &[1.0, 1.0, 1.0]),
            Err(MnirError::ConstantResponse(_))
        ));
        let flat = vec![vec![0.5]; 3];
        assert!(matches!(
            pls_fit(&flat, &[1.0, 2.0, 3.0], 1, LoadingKind::Correlation),
            Err(MnirError::StageCollapse(1))
        ));
    }

    #[test]
    fn stagewise_residuals_are_orthogonal() {
        let f: Vec<Vec<f64>> = (0..12)
            .map(|i| (0..4).map(|j| ((i * 5 + j * 3) % 7) as f64 / 7.0).collect())
            .collect();
        let y: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let fit = pls_fit(&f, &y, 3, LoadingKind::Correlation).unwrap();
        for (v, z) in fit.residual_factors.iter().zip(&fit.directions) {
            assert!(dot(v, z).abs() < 1e-10);
        }
        let pred = pls_predict(&fit, &f).unwrap();
        for (a, b) in pred.iter().zip(&fit.fitted) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
