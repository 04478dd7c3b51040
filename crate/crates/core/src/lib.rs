//! Multinomial inverse regression for text.
//!
//! Token counts are modelled as multinomial given a low-dimensional response
//! factor, with gamma-lasso penalised loadings fitted by coordinate descent.
//! The fitted loadings project documents onto sufficient reduction scores
//! that feed small forward regressions.

pub mod corpus;
pub mod error;
pub mod forward;
pub mod io;
pub mod model;
pub mod pls;
pub mod reduction;
pub mod solver;

pub use corpus::{Corpus, SparseCounts, TokenizerConfig, Vocabulary};
pub use error::{MnirError, Result};
pub use model::{FactorMatrix, MnirParams, PenaltyForm, PriorSpec, RandomEffects};
pub use reduction::{sr_scores, SrScores};
pub use solver::{fit, fit_corpus, MnirFit, SolverConfig};
