mod common;

use mnir::corpus::{Corpus, SparseCounts, Vocabulary};
use mnir::model::FactorMatrix;
use mnir::reduction::{score_new_documents, sr_scores, sr_scores_corpus};
use mnir::solver::{fit_corpus, MnirFit, SolverConfig};
use proptest::prelude::*;
use rand::Rng;

fn vocab(p: usize) -> Vocabulary {
    Vocabulary::new((0..p).map(|j| format!("t{j:02}")).collect()).unwrap()
}

/// A small fitted model whose loadings are then overwritten at random.
fn model(seed: u64, p: usize, k: usize) -> MnirFit {
    let mut rng = common::rng(seed);
    let n = 12;
    let triplets: Vec<(usize, usize, u32)> = (0..n)
        .flat_map(|i| (0..p).map(move |j| (i, j, 1 + ((i * 7 + j * 3) % 5) as u32)))
        .collect();
    let corpus = Corpus {
        counts: SparseCounts::from_triplets(n, p, triplets).unwrap(),
        vocab: vocab(p),
        doc_ids: (0..n).map(|i| format!("d{i}")).collect(),
    };
    let factors = FactorMatrix::new(n, k, (0..n * k).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let mut fit = fit_corpus(&corpus, &factors, &SolverConfig { max_sweeps: 5, ..Default::default() }).unwrap();
    fit.params.phi = (0..p * k).map(|_| rng.gen_range(-2.0..2.0)).collect();
    fit
}

fn counts_strategy(p: usize) -> impl Strategy<Value = Vec<Vec<u32>>> {
    prop::collection::vec(prop::collection::vec(0u32..6, p), 1..8)
        .prop_filter("nonempty rows", |rows| rows.iter().all(|r| r.iter().any(|&c| c > 0)))
}

fn to_counts(rows: &[Vec<u32>], p: usize) -> SparseCounts {
    let t: Vec<(usize, usize, u32)> = rows
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().enumerate().filter(|(_, &c)| c > 0).map(move |(j, &c)| (i, j, c)))
        .collect();
    SparseCounts::from_triplets(rows.len(), p, t).unwrap()
}

proptest! {
    #![proptest_config(common::proptest_config(128))]

    #[test]
    fn scores_invariant_to_scaling_counts(seed in any::<u64>(), rows in counts_strategy(5), c in 2u32..6) {
        let fit = model(seed, 5, 2);
        let a = sr_scores(&fit, &to_counts(&rows, 5), false).unwrap();
        let scaled: Vec<Vec<u32>> = rows.iter().map(|r| r.iter().map(|x| x * c).collect()).collect();
        let b = sr_scores(&fit, &to_counts(&scaled, 5), false).unwrap();
        for (x, y) in a.rows().concat().iter().zip(b.rows().concat()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn total_weighted_scores_add_over_splits(seed in any::<u64>(), rows in counts_strategy(5), cut in 0u32..6) {
        let fit = model(seed, 5, 2);
        let first: Vec<Vec<u32>> = rows.iter().map(|r| r.iter().map(|&x| x.min(cut)).collect()).collect();
        let second: Vec<Vec<u32>> = rows.iter().zip(&first).map(|(r, f)| r.iter().zip(f).map(|(a, b)| a - b).collect()).collect();
        let whole = sr_scores(&fit, &to_counts(&rows, 5), false).unwrap();
        for i in 0..rows.len() {
            let m: u32 = rows[i].iter().sum();
            let mut expected = [0.0; 2];
            for part in [&first, &second] {
                let mp: u32 = part[i].iter().sum();
                if mp == 0 {
                    continue;
                }
                let s = sr_scores(&fit, &to_counts(&part[i..=i], 5), false).unwrap();
                for (k, e) in expected.iter_mut().enumerate() {
                    *e += mp as f64 * s.get(0, k);
                }
            }
            for (k, e) in expected.iter().enumerate() {
                prop_assert!((m as f64 * whole.get(i, k) - e).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn zero_loadings_give_zero_scores() {
    let mut fit = model(61, 5, 2);
    fit.params.phi.iter_mut().for_each(|v| *v = 0.0);
    let s = sr_scores(&fit, &to_counts(&[vec![1, 2, 0, 0, 3]], 5), false).unwrap();
    assert_eq!(s.row(0), &[0.0, 0.0]);
}

#[test]
fn single_token_document_scores_its_loading_row() {
    let fit = model(62, 5, 2);
    for j in 0..5 {
        let mut row = vec![0; 5];
        row[j] = 3;
        let s = sr_scores(&fit, &to_counts(&[row], 5), false).unwrap();
        for k in 0..2 {
            assert!((s.get(0, k) - fit.params.loading(j, k)).abs() < 1e-15);
        }
    }
}

#[test]
fn unseen_tokens_contribute_nothing() {
    let fit = model(63, 5, 2);
    let known = Corpus {
        counts: to_counts(&[vec![1, 0, 2, 0, 1], vec![0, 4, 0, 1, 0]], 5),
        vocab: vocab(5),
        doc_ids: vec!["a".into(), "b".into()],
    };
    let mut tokens = vocab(5).tokens().to_vec();
    tokens.extend(["zz1".to_string(), "zz2".to_string()]);
    let mut extended_rows = vec![vec![1, 0, 2, 0, 1, 5, 0], vec![0, 4, 0, 1, 0, 2, 7]];
    let wider = Corpus {
        counts: to_counts(&extended_rows, 7),
        vocab: Vocabulary::new(tokens).unwrap(),
        doc_ids: known.doc_ids.clone(),
    };
    let base = sr_scores_corpus(&fit, &known, false).unwrap();
    let projected = score_new_documents(&fit, &wider, None).unwrap();
    assert_eq!(base, projected);
    assert!(sr_scores_corpus(&fit, &wider, false).is_err());
    extended_rows[0] = vec![0, 0, 0, 0, 0, 3, 3];
    let oov_only = Corpus {
        counts: to_counts(&extended_rows, 7),
        ..wider
    };
    assert!(score_new_documents(&fit, &oov_only, None).is_err());
}

#[test]
fn standardized_scores_have_unit_columns() {
    let fit = model(64, 5, 2);
    let rows: Vec<Vec<u32>> = (0..9).map(|i| (0..5).map(|j| ((i + 2 * j) % 4) as u32 + 1).collect()).collect();
    let s = sr_scores(&fit, &to_counts(&rows, 5), true).unwrap();
    for k in 0..2 {
        let col = s.column(k);
        let mean = col.iter().sum::<f64>() / 9.0;
        let var = col.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / 8.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }
    let again = score_new_documents(&fit, &Corpus {
        counts: to_counts(&rows, 5),
        vocab: vocab(5),
        doc_ids: (0..9).map(|i| i.to_string()).collect(),
    }, s.normalization.as_ref()).unwrap();
    assert_eq!(again.rows(), s.rows());
}
