mod common;

use mnir::corpus::{Corpus, Vocabulary};
use mnir::io::{load_model, read_counts, read_scores, read_vocabulary, save_model, write_counts, write_scores, write_vocabulary};
use mnir::model::{PriorSpec, RandomEffects};
use mnir::reduction::sr_scores;
use mnir::solver::{fit_corpus, SolverConfig};

fn workdir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("mnir-persist-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn model_json_round_trips_bit_for_bit() {
    let mut rng = common::rng(71);
    let pr = common::random_problem(&mut rng, 25, 7, 2);
    let corpus = Corpus {
        counts: pr.counts.clone(),
        vocab: Vocabulary::new((0..7).map(|j| format!("w{j}")).collect()).unwrap(),
        doc_ids: (0..25).map(|i| format!("doc{i}")).collect(),
    };
    let dir = workdir("model");
    for re in [RandomEffects::Off, RandomEffects::CollapsedLognormal] {
        let cfg = SolverConfig {
            prior: PriorSpec { random_effects: re, ..PriorSpec::gamma_lasso(0.5, 0.5) },
            collapse: re != RandomEffects::Off,
            round: (re != RandomEffects::Off).then_some(0.5),
            ..Default::default()
        };
        let fit = fit_corpus(&corpus, &pr.factors, &cfg).unwrap();
        let path = dir.join("model.json");
        save_model(&path, &fit).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, fit);
        for (a, b) in back.params.phi.iter().zip(&fit.params.phi) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let text = std::fs::read_to_string(&path).unwrap();
        save_model(&path, &back).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
        let s1 = sr_scores(&fit, &corpus.counts, false).unwrap();
        let s2 = sr_scores(&back, &corpus.counts, false).unwrap();
        assert_eq!(s1, s2);
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn tables_round_trip() {
    let mut rng = common::rng(72);
    let pr = common::random_problem(&mut rng, 10, 5, 1);
    let corpus = Corpus {
        counts: pr.counts.clone(),
        vocab: Vocabulary::new(["a", "b", "c", "d", "e"].map(String::from).to_vec()).unwrap(),
        doc_ids: (0..10).map(|i| format!("x{i}")).collect(),
    };
    let dir = workdir("tables");
    let header = vec!["generated by a test".to_string()];
    write_counts(&dir.join("counts.tsv"), &corpus, &header).unwrap();
    assert_eq!(read_counts(&dir.join("counts.tsv")).unwrap(), corpus);
    write_vocabulary(&dir.join("vocab.txt"), &corpus.vocab, &header).unwrap();
    assert_eq!(read_vocabulary(&dir.join("vocab.txt")).unwrap(), corpus.vocab);
    let fit = fit_corpus(&corpus, &pr.factors, &SolverConfig::default()).unwrap();
    let scores = sr_scores(&fit, &corpus.counts, false).unwrap();
    write_scores(&dir.join("z.tsv"), &corpus.doc_ids, &scores, &header).unwrap();
    let (ids, back) = read_scores(&dir.join("z.tsv")).unwrap();
    assert_eq!(ids, corpus.doc_ids);
    assert_eq!(back.rows(), scores.rows());
    std::fs::remove_dir_all(&dir).unwrap();
}
