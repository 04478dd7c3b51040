//! `mnir`: tokenize, fit, score, forward-regress and compare text models
//! from the command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use mnir::corpus::{count, english_stopwords, frequency_lift, tokenize, Corpus, TokenizerConfig};
use mnir::forward::{
    fit_linear, fit_logistic, fit_polr, predict, ForwardFit, LinearSpec, LogisticOptions,
    PolrOptions,
};
use mnir::io::{self, Table};
use mnir::model::{FactorMatrix, PenaltyForm, PriorSpec, RandomEffects};
use mnir::pls::{pls_fit, slant_index, LoadingKind};
use mnir::reduction::{score_new_documents, sr_scores_corpus, Normalization, SrScores};
use mnir::solver::{fit_corpus, SolverConfig};
use mnir::MnirError;

#[derive(Parser)]
#[command(name = "mnir", version, about = "Multinomial inverse regression for text")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn raw text into a count-triplet TSV and a vocabulary file.
    Tokenize(TokenizeArgs),
    /// Fit a gamma-lasso multinomial inverse regression.
    Fit(FitArgs),
    /// Project counts onto a fitted model's loadings.
    Score(ScoreArgs),
    /// Regress a response on SR scores.
    Forward(ForwardArgs),
    /// Predict from a forward fit.
    Predict(PredictArgs),
    /// Slant indices and inverse-regression PLS on token frequencies.
    Pls(PlsArgs),
    /// Top frequency-lift tokens per group.
    Lift(LiftArgs),
}

#[derive(Args)]
struct TokenizeArgs {
    /// A text file (one document per line, optionally `id<TAB>text`) or a
    /// directory with one document per file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1)]
    ngram_min: usize,
    #[arg(long, default_value_t = 1)]
    ngram_max: usize,
    /// Keep tokens used by at least this many documents.
    #[arg(long, default_value_t = 1)]
    min_docs: usize,
    #[arg(long)]
    no_stem: bool,
    #[arg(long)]
    no_stopwords: bool,
    /// Replace the bundled stop words with one word per line from a file.
    #[arg(long, conflicts_with = "no_stopwords")]
    stopwords: Option<PathBuf>,
    /// Do not form n-grams across `.`, `!` or `?`.
    #[arg(long)]
    no_span_sentences: bool,
    #[arg(long)]
    out_counts: PathBuf,
    #[arg(long)]
    out_vocab: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyArg {
    GammaLasso,
    Lasso,
    None,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    counts: PathBuf,
    /// TSV with an id column matching the count document ids.
    #[arg(long)]
    factors: PathBuf,
    /// Factor columns; `name=LABEL` makes a 0/1 indicator of a text column.
    #[arg(long, value_delimiter = ',', required = true)]
    columns: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    shape: f64,
    #[arg(long, default_value_t = 0.5)]
    rate: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_alpha: f64,
    #[arg(long, value_enum, default_value = "gamma-lasso")]
    penalty: PenaltyArg,
    /// Random effects with the collapsed lognormal prior.
    #[arg(long)]
    random_effects: bool,
    /// Pool documents that share a factor level.
    #[arg(long)]
    collapse: bool,
    /// Round factors to a multiple of this grid before fitting.
    #[arg(long)]
    round: Option<f64>,
    /// Fit on the raw factor scale.
    #[arg(long)]
    no_standardize: bool,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_sweeps: usize,
    /// Initial trust-region half width.
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 1e-6)]
    delta_floor: f64,
    #[arg(long, default_value_t = 1e-3)]
    kkt_tol: f64,
    /// Exit with status 1 if the final KKT check fails.
    #[arg(long)]
    require_kkt: bool,
    /// Shuffle the loading sweep order with this seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write raw SR scores of the training documents.
    #[arg(long)]
    out_scores: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    counts: PathBuf,
    /// Standardise score columns on these documents.
    #[arg(long, conflicts_with = "normalization")]
    standardize: bool,
    /// Apply a saved standardisation instead.
    #[arg(long)]
    normalization: Option<PathBuf>,
    /// Save the standardisation used.
    #[arg(long, requires = "standardize")]
    save_normalization: Option<PathBuf>,
    /// Drop tokens missing from the model vocabulary instead of failing.
    #[arg(long)]
    project: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ForwardKindArg {
    Linear,
    Quadratic,
    Interaction,
    Logistic,
    Polr,
}

#[derive(Args)]
struct ForwardArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    response: PathBuf,
    /// Response column; `name=LABEL` makes a 0/1 indicator.
    #[arg(long)]
    column: String,
    #[arg(long, value_enum)]
    kind: ForwardKindArg,
    /// For `interaction`: leave the product term unstandardised.
    #[arg(long)]
    raw_products: bool,
    /// For `logistic`: refit with a ridge penalty on separation.
    #[arg(long)]
    ridge_fallback: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LoadingArg {
    Correlation,
    OlsSlope,
}

#[derive(Args)]
struct PlsArgs {
    #[arg(long)]
    counts: PathBuf,
    #[arg(long)]
    response: PathBuf,
    #[arg(long)]
    column: String,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, value_enum, default_value = "correlation")]
    loadings: LoadingArg,
    #[arg(long)]
    out: PathBuf,
    /// Per-document slant scores (GS and normalised forms).
    #[arg(long)]
    out_slant: Option<PathBuf>,
}

#[derive(Args)]
struct LiftArgs {
    #[arg(long)]
    counts: PathBuf,
    #[arg(long)]
    groups: PathBuf,
    /// Grouping column.
    #[arg(long)]
    group: String,
    /// Bin a numeric column into `below`, `equal` and `above` this value.
    #[arg(long)]
    split_at: Option<f64>,
    /// Only list tokens used at least once in each of these groups
    /// (default: every group).
    #[arg(long, value_delimiter = ',')]
    used_by: Vec<String>,
    #[arg(long, default_value_t = 5)]
    top: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Tool version, arguments and input hashes, written into every output.
struct Provenance {
    entries: BTreeMap<String, String>,
}

impl Provenance {
    fn new(inputs: &[&Path]) -> anyhow::Result<Self> {
        let mut entries = BTreeMap::new();
        entries.insert("tool".into(), format!("mnir {}", env!("CARGO_PKG_VERSION")));
        let argv: Vec<String> = std::env::args().skip(1).collect();
        entries.insert("args".into(), argv.join(" "));
        for path in inputs {
            entries.insert(format!("sha256 {}", path.display()), hash_path(path)?);
        }
        Ok(Provenance { entries })
    }

    /// Tool and arguments first, then the input hashes.
    fn header(&self) -> Vec<String> {
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort_by_key(|k| (!k.starts_with("tool"), !k.starts_with("args"), k.as_str()));
        keys.into_iter().map(|k| format!("{k}: {}", self.entries[k])).collect()
    }
}

fn hash_path(path: &Path) -> anyhow::Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut names: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        names.sort();
        for p in names.iter().filter(|p| p.is_file()) {
            hasher.update(p.file_name().unwrap().to_string_lossy().as_bytes());
            hasher.update(std::fs::read(p)?);
        }
    } else {
        hasher.update(std::fs::read(path).with_context(|| format!("reading {}", path.display()))?);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    provenance: &'a BTreeMap<String, String>,
    #[serde(flatten)]
    body: &'a T,
}

fn write_json<T: Serialize>(path: &Path, prov: &Provenance, body: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(&Wrapped {
        provenance: &prov.entries,
        body,
    })?;
    write_text(path, &(text + "\n"))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn tsv_with_header(prov: &Provenance, body: &str) -> String {
    let mut out: String = prov.header().iter().map(|l| format!("# {l}\n")).collect();
    out.push_str(body);
    out
}

/// Numeric columns of `table` for `ids`; `name=LABEL` gives an indicator.
fn columns(table: &Table, ids: &[String], specs: &[String]) -> anyhow::Result<FactorMatrix> {
    let aligned = table.aligned(ids)?;
    let cols: Vec<Vec<f64>> = specs
        .iter()
        .map(|spec| match spec.split_once('=') {
            Some((name, label)) => Ok(aligned.text(name)?.iter().map(|v| f64::from(v == label)).collect()),
            None => aligned.numeric(spec),
        })
        .collect::<Result<_, MnirError>>()?;
    let n = ids.len();
    let values = (0..n).flat_map(|i| cols.iter().map(move |c| c[i])).collect();
    Ok(FactorMatrix::with_names(n, specs.len(), values, specs.to_vec())?)
}

fn read_corpus(path: &Path) -> anyhow::Result<Corpus> {
    io::read_counts(path).with_context(|| format!("reading counts {}", path.display()))
}

fn cmd_tokenize(a: &TokenizeArgs) -> anyhow::Result<()> {
    let prov = Provenance::new(&[&a.input])?;
    let docs = if a.input.is_dir() {
        io::read_text_dir(&a.input)?
    } else {
        io::read_text_lines(&a.input)?
    };
    let stopwords = if a.no_stopwords {
        Default::default()
    } else if let Some(path) = &a.stopwords {
        io::read_vocabulary(path)?.tokens().iter().cloned().collect()
    } else {
        english_stopwords()
    };
    let cfg = TokenizerConfig {
        stopwords,
        stem: !a.no_stem,
        ngram_min: a.ngram_min,
        ngram_max: a.ngram_max,
        min_doc_count: a.min_docs,
        span_sentences: !a.no_span_sentences,
    };
    cfg.validate()?;
    if docs.is_empty() {
        return Err(MnirError::EmptyVocabulary.into());
    }
    let tokens: Vec<Vec<String>> = docs.iter().map(|(_, text)| tokenize(text, &cfg)).collect();
    let out = count(&tokens, &cfg)?;
    let dropped = docs.len() - out.doc_map.len();
    if dropped > 0 {
        log::warn!("{dropped} documents had no surviving tokens and were dropped");
    }
    let corpus = Corpus {
        counts: out.counts,
        vocab: out.vocab,
        doc_ids: out.doc_map.iter().map(|&d| docs[d].0.clone()).collect(),
    };
    io::write_counts(&a.out_counts, &corpus, &prov.header())?;
    io::write_vocabulary(&a.out_vocab, &corpus.vocab, &prov.header())?;
    eprintln!(
        "{} documents, {} tokens, {} nonzero counts",
        corpus.doc_ids.len(),
        corpus.vocab.len(),
        corpus.counts.nnz()
    );
    Ok(())
}

/// Exit status 1 for a fit that must satisfy KKT but does not.
struct KktFailure(String);

fn cmd_fit(a: &FitArgs) -> anyhow::Result<Option<KktFailure>> {
    let prov = Provenance::new(&[&a.counts, &a.factors])?;
    let corpus = read_corpus(&a.counts)?;
    let table = io::read_table(&a.factors)?;
    let factors = columns(&table, &corpus.doc_ids, &a.columns)?;
    let penalty = match a.penalty {
        PenaltyArg::GammaLasso => PenaltyForm::GammaLasso,
        PenaltyArg::Lasso => PenaltyForm::Lasso,
        PenaltyArg::None => PenaltyForm::Unpenalized,
    };
    let cfg = SolverConfig {
        prior: PriorSpec {
            sigma_alpha: a.sigma_alpha,
            random_effects: if a.random_effects { RandomEffects::CollapsedLognormal } else { RandomEffects::Off },
            penalty,
            ..PriorSpec::gamma_lasso(a.shape, a.rate)
        },
        tol: a.tol,
        max_sweeps: a.max_sweeps,
        delta_init: a.delta,
        delta_floor: a.delta_floor,
        kkt_tol: a.kkt_tol,
        collapse: a.collapse,
        round: a.round,
        standardize: !a.no_standardize,
        shuffle_seed: a.seed,
        ..Default::default()
    };
    let mut fit = fit_corpus(&corpus, &factors, &cfg)?;
    fit.provenance = prov.entries.clone();
    io::save_model(&a.out, &fit)?;
    if let Some(path) = &a.out_scores {
        let z = sr_scores_corpus(&fit, &corpus, false)?;
        io::write_scores(path, &corpus.doc_ids, &z, &prov.header())?;
    }
    eprintln!(
        "{} sweeps, converged: {}, objective {:.6}, nonzero loadings {} of {}, KKT max violation {:.3e}",
        fit.sweeps,
        fit.converged,
        fit.objective(),
        fit.params.nnz_loadings(),
        fit.params.phi.len(),
        fit.kkt.max_violation
    );
    if !fit.converged {
        log::warn!("solver stopped at max_sweeps = {} before converging", a.max_sweeps);
    }
    if a.require_kkt && !fit.kkt.passed {
        let worst = fit.kkt.worst.map_or_else(String::new, |c| format!(" at {c}"));
        return Ok(Some(KktFailure(format!(
            "KKT check failed: {} of {} conditions exceed {:e} (max {:.3e}{worst})",
            fit.kkt.n_failed, fit.kkt.checked, fit.kkt.tol, fit.kkt.max_violation
        ))));
    }
    Ok(None)
}

fn cmd_score(a: &ScoreArgs) -> anyhow::Result<()> {
    let mut inputs: Vec<&Path> = vec![&a.model, &a.counts];
    if let Some(p) = &a.normalization {
        inputs.push(p);
    }
    let prov = Provenance::new(&inputs)?;
    let fit = io::load_model(&a.model)?;
    let corpus = read_corpus(&a.counts)?;
    let same_vocab = fit.vocab.as_ref().is_some_and(|v| v == &corpus.vocab);
    let frozen: Option<Normalization> = match &a.normalization {
        Some(p) => Some(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => None,
    };
    let mut z: SrScores = if same_vocab {
        sr_scores_corpus(&fit, &corpus, false)?
    } else if a.project {
        score_new_documents(&fit, &corpus, None)?
    } else {
        bail!(MnirError::VocabularyMismatch(
            "counts vocabulary differs from the model's; pass --project to drop unknown tokens".into()
        ));
    };
    if let Some(norm) = &frozen {
        if norm.columns.len() != z.n_factors() {
            bail!(MnirError::DimensionMismatch(format!(
                "normalization has {} columns, scores {}",
                norm.columns.len(),
                z.n_factors()
            )));
        }
        z.apply(norm);
    } else if a.standardize {
        z.standardize()?;
    }
    io::write_scores(&a.out, &corpus.doc_ids, &z, &prov.header())?;
    if let (Some(path), Some(norm)) = (&a.save_normalization, &z.normalization) {
        write_text(path, &(serde_json::to_string_pretty(norm)? + "\n"))?;
    }
    Ok(())
}

fn response(table: &Table, ids: &[String], spec: &str) -> anyhow::Result<Vec<f64>> {
    Ok(columns(table, ids, &[spec.to_string()])?.column(0))
}

fn cmd_forward(a: &ForwardArgs) -> anyhow::Result<()> {
    let prov = Provenance::new(&[&a.scores, &a.response])?;
    let (ids, z) = io::read_scores(&a.scores)?;
    let y = response(&io::read_table(&a.response)?, &ids, &a.column)?;
    let rows = z.rows();
    let fit = match a.kind {
        ForwardKindArg::Linear => fit_linear(&rows, &y, LinearSpec::default())?,
        ForwardKindArg::Quadratic => fit_linear(&rows, &y, LinearSpec { degree: 2, ..Default::default() })?,
        ForwardKindArg::Interaction => fit_linear(
            &rows,
            &y,
            LinearSpec {
                interaction: true,
                standardize_products: !a.raw_products,
                ..Default::default()
            },
        )?,
        ForwardKindArg::Logistic => fit_logistic(
            &rows,
            &y,
            LogisticOptions {
                ridge_fallback: a.ridge_fallback,
                ..Default::default()
            },
        )?,
        ForwardKindArg::Polr => fit_polr(&rows, &y, PolrOptions::default())?,
    };
    write_json(&a.out, &prov, &fit)?;
    print_forward(&fit);
    Ok(())
}

fn print_forward(fit: &ForwardFit) {
    let names: Vec<String> = if fit.intercepts.len() == 1 {
        vec!["(intercept)".into()]
    } else {
        (1..=fit.intercepts.len()).map(|c| format!("cut{c}")).collect()
    };
    let coefs = fit.intercepts.iter().chain(&fit.beta);
    for ((name, c), se) in names.iter().chain(&fit.terms).zip(coefs).zip(&fit.std_errors) {
        println!("{name}\t{c:.6}\t(se {se:.6})");
    }
    let s = &fit.summary;
    if let Some(r2) = s.r2 {
        println!("R2\t{r2:.6}");
    }
    if let Some(m) = s.misclassified {
        println!("misclassified\t{m} of {}", s.n);
    }
    if let Some(ll) = s.log_lik {
        println!("log-likelihood\t{ll:.6}");
    }
}

fn cmd_predict(a: &PredictArgs) -> anyhow::Result<()> {
    let prov = Provenance::new(&[&a.fit, &a.scores])?;
    let fit: ForwardFit = serde_json::from_str(&std::fs::read_to_string(&a.fit)?)
        .with_context(|| format!("reading forward fit {}", a.fit.display()))?;
    let (ids, z) = io::read_scores(&a.scores)?;
    let preds = predict(&fit, &z.rows())?;
    let mut body = String::from("doc_id\tprediction");
    let with_probs = !fit.levels.is_empty();
    if with_probs {
        for l in &fit.levels {
            body.push_str(&format!("\tp_{l}"));
        }
    }
    body.push('\n');
    for (id, p) in ids.iter().zip(&preds) {
        body.push_str(&format!("{id}\t{:?}", p.point()));
        for q in p.probabilities() {
            body.push_str(&format!("\t{q:?}"));
        }
        body.push('\n');
    }
    write_text(&a.out, &tsv_with_header(&prov, &body))
}

#[derive(Serialize)]
struct PlsReport<'a> {
    pls: &'a mnir::pls::PlsFit,
    slant_r2: Option<(f64, f64)>,
}

fn cmd_pls(a: &PlsArgs) -> anyhow::Result<()> {
    let prov = Provenance::new(&[&a.counts, &a.response])?;
    let corpus = read_corpus(&a.counts)?;
    let y = response(&io::read_table(&a.response)?, &corpus.doc_ids, &a.column)?;
    let f = corpus.counts.frequencies_dense();
    let kind = match a.loadings {
        LoadingArg::Correlation => LoadingKind::Correlation,
        LoadingArg::OlsSlope => LoadingKind::OlsSlope,
    };
    let fit = pls_fit(&f, &y, a.k, kind)?;
    println!("PLS K={}\tR2\t{:.6}", a.k, fit.r2);
    let mut slant_r2 = None;
    if let Some(path) = &a.out_slant {
        let slant = slant_index(&f, &y)?;
        let r2 = |z: &[f64]| -> anyhow::Result<f64> {
            let rows: Vec<Vec<f64>> = z.iter().map(|&v| vec![v]).collect();
            Ok(fit_linear(&rows, &y, LinearSpec::default())?.summary.r2.unwrap_or(f64::NAN))
        };
        let pair = (r2(&slant.gs)?, r2(&slant.normalized)?);
        println!("slant R2\t{:.6} (GS)\t{:.6} (normalized)", pair.0, pair.1);
        let mut body = String::from("doc_id\tslant_gs\tslant_normalized\n");
        for (i, id) in corpus.doc_ids.iter().enumerate() {
            body.push_str(&format!("{id}\t{:?}\t{:?}\n", slant.gs[i], slant.normalized[i]));
        }
        write_text(path, &tsv_with_header(&prov, &body))?;
        slant_r2 = Some(pair);
    }
    write_json(&a.out, &prov, &PlsReport { pls: &fit, slant_r2 })
}

fn cmd_lift(a: &LiftArgs) -> anyhow::Result<()> {
    let prov = Provenance::new(&[&a.counts, &a.groups])?;
    let corpus = read_corpus(&a.counts)?;
    let table = io::read_table(&a.groups)?.aligned(&corpus.doc_ids)?;
    let labels: Vec<String> = match a.split_at {
        Some(cut) => table
            .numeric(&a.group)?
            .iter()
            .map(|&v| if v < cut { "below" } else if v == cut { "equal" } else { "above" }.to_string())
            .collect(),
        None => table.text(&a.group)?,
    };
    let mut names: Vec<String> = labels.clone();
    names.sort();
    names.dedup();
    let groups: Vec<usize> = labels.iter().map(|l| names.binary_search(l).unwrap()).collect();
    let used_by: Vec<usize> = if a.used_by.is_empty() {
        (0..names.len()).collect()
    } else {
        a.used_by
            .iter()
            .map(|g| names.binary_search(g).map_err(|_| anyhow!(MnirError::EmptyGroup(g.clone()))))
            .collect::<anyhow::Result<_>>()?
    };
    let lift = frequency_lift(&corpus.counts, &groups, &names)?;
    let mut body = String::from("group\trank\ttoken\tlift\n");
    for (g, name) in names.iter().enumerate() {
        for (rank, (j, l)) in lift.top(g, a.top, &used_by).into_iter().enumerate() {
            let line = format!("{name}\t{}\t{}\t{l:.6}\n", rank + 1, corpus.vocab.token(j));
            print!("{line}");
            body.push_str(&line);
        }
    }
    write_text(&a.out, &tsv_with_header(&prov, &body))
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("MNIR_NUM_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| MnirError::InvalidConfig(format!("MNIR_NUM_THREADS=`{v}` is not a count")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<MnirError>() {
        Some(e) if e.is_numeric() => 1,
        _ => 2,
    }
}

fn run(cli: &Cli) -> anyhow::Result<Option<KktFailure>> {
    configure_threads()?;
    match &cli.command {
        Command::Tokenize(a) => cmd_tokenize(a)?,
        Command::Fit(a) => return cmd_fit(a),
        Command::Score(a) => cmd_score(a)?,
        Command::Forward(a) => cmd_forward(a)?,
        Command::Predict(a) => cmd_predict(a)?,
        Command::Pls(a) => cmd_pls(a)?,
        Command::Lift(a) => cmd_lift(a)?,
    }
    Ok(None)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(KktFailure(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
