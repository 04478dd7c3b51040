//! Sufficient-reduction scores z_i = Phi' f_i.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SparseCounts};
use crate::error::{MnirError, Result};
use crate::model::mean_sd;
use crate::solver::MnirFit;

/// Per-column (mean, sd) applied to scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub columns: Vec<(f64, f64)>,
}

/// n x K score matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SrScores {
    n: usize,
    k: usize,
    z: Vec<f64>,
    pub normalization: Option<Normalization>,
}

impl SrScores {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(MnirError::DimensionMismatch("ragged score rows".into()));
        }
        Ok(SrScores {
            n: rows.len(),
            k,
            z: rows.concat(),
            normalization: None,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.n
    }

    pub fn n_factors(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.z[i * self.k + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, k)).collect()
    }

    /// Standardise each column with its own sample mean and sd.
    pub fn standardize(&mut self) -> Result<()> {
        let columns: Vec<(f64, f64)> = (0..self.k).map(|k| mean_sd(&self.column(k))).collect();
        if let Some(column) = columns.iter().position(|&(_, sd)| !(sd > 0.0)) {
            return Err(MnirError::ZeroVarianceFactor { column });
        }
        self.apply(&Normalization { columns });
        Ok(())
    }

    /// Apply frozen standardisation parameters.
    pub fn apply(&mut self, norm: &Normalization) {
        for (pos, z) in self.z.iter_mut().enumerate() {
            let (mu, sd) = norm.columns[pos % self.k];
            *z = (*z - mu) / sd;
        }
        self.normalization = Some(norm.clone());
    }
}

fn project(fit: &MnirFit, counts: &SparseCounts, ids: Option<&[String]>) -> Result<SrScores> {
    if counts.n_tokens() != fit.n_tokens() {
        return Err(MnirError::VocabularyMismatch(format!(
            "fit has {} tokens, counts have {}",
            fit.n_tokens(),
            counts.n_tokens()
        )));
    }
    let empty: Vec<String> = (0..counts.n_docs())
        .filter(|&i| counts.row_total(i) == 0)
        .map(|i| ids.map_or_else(|| format!("row {i}"), |d| d[i].clone()))
        .collect();
    if !empty.is_empty() {
        return Err(MnirError::ZeroTotal(empty));
    }
    let k = fit.n_factors();
    let params = &fit.params;
    let z: Vec<f64> = (0..counts.n_docs())
        .into_par_iter()
        .flat_map_iter(|i| {
            let m = counts.row_total(i) as f64;
            let mut row = vec![0.0; k];
            for (j, c) in counts.row(i) {
                for (kk, r) in row.iter_mut().enumerate() {
                    *r += params.loading(j, kk) * c as f64;
                }
            }
            row.into_iter().map(move |r| r / m)
        })
        .collect();
    Ok(SrScores {
        n: counts.n_docs(),
        k,
        z,
        normalization: None,
    })
}

/// Scores for counts over exactly the fit's vocabulary.
pub fn sr_scores(fit: &MnirFit, counts: &SparseCounts, standardize: bool) -> Result<SrScores> {
    let mut scores = project(fit, counts, None)?;
    if standardize {
        scores.standardize()?;
    }
    Ok(scores)
}

/// Scores for a corpus whose vocabulary must equal the fit's.
pub fn sr_scores_corpus(fit: &MnirFit, corpus: &Corpus, standardize: bool) -> Result<SrScores> {
    if let Some(vocab) = &fit.vocab {
        if vocab != &corpus.vocab {
            return Err(MnirError::VocabularyMismatch(
                "corpus vocabulary differs from the fitted vocabulary".into(),
            ));
        }
    }
    let mut scores = project(fit, &corpus.counts, Some(&corpus.doc_ids))?;
    if standardize {
        scores.standardize()?;
    }
    Ok(scores)
}

/// Scores for new documents: out-of-vocabulary tokens are dropped from both
/// the counts and m_i, and `normalization` (frozen from training) is reapplied.
pub fn score_new_documents(
    fit: &MnirFit,
    corpus: &Corpus,
    normalization: Option<&Normalization>,
) -> Result<SrScores> {
    let vocab = fit.vocab.as_ref().ok_or_else(|| {
        MnirError::VocabularyMismatch("fit carries no vocabulary to project onto".into())
    })?;
    let projected = corpus.project_onto(vocab);
    let mut scores = project(fit, &projected.counts, Some(&projected.doc_ids))?;
    if let Some(norm) = normalization {
        if norm.columns.len() != scores.k {
            return Err(MnirError::DimensionMismatch(format!(
                "normalization has {} columns, scores {}",
                norm.columns.len(),
                scores.k
            )));
        }
        scores.apply(norm);
    }
    Ok(scores)
}
