//! File formats: count triplets, factor and score tables, vocabularies, raw
//! text and model JSON. Tabular files are tab separated; lines starting with
//! `#` are comments.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::corpus::{Corpus, SparseCounts, Vocabulary};
use crate::error::{MnirError, Result};
use crate::model::FactorMatrix;
use crate::reduction::SrScores;
use crate::solver::MnirFit;

fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push((n + 1, line.to_string()));
    }
    Ok(out)
}

fn loc(path: &Path, line: usize) -> String {
    format!("{}:{line}", path.display())
}

/// A header plus rows of string cells, keyed by the first column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Index of a named value column (the id column excluded).
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().skip(1).position(|c| c == name)
    }

    /// A value column parsed as numbers.
    pub fn numeric(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column_index(name).ok_or_else(|| {
            MnirError::parse(name, format!("no column `{name}` in {:?}", self.columns))
        })?;
        self.rows
            .iter()
            .zip(&self.ids)
            .map(|(r, id)| {
                r[c].parse::<f64>()
                    .map_err(|e| MnirError::parse(format!("{id}/{name}"), e.to_string()))
            })
            .collect()
    }

    /// A value column as strings.
    pub fn text(&self, name: &str) -> Result<Vec<String>> {
        let c = self.column_index(name).ok_or_else(|| {
            MnirError::parse(name, format!("no column `{name}` in {:?}", self.columns))
        })?;
        Ok(self.rows.iter().map(|r| r[c].clone()).collect())
    }

    /// Row positions for `ids`, erroring on any missing id.
    pub fn align(&self, ids: &[String]) -> Result<Vec<usize>> {
        let index: HashMap<&str, usize> =
            self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let missing: Vec<String> = ids.iter().filter(|id| !index.contains_key(id.as_str())).cloned().collect();
        if !missing.is_empty() {
            return Err(MnirError::DimensionMismatch(format!(
                "{} ids missing from table (first: {})",
                missing.len(),
                missing[0]
            )));
        }
        Ok(ids.iter().map(|id| index[id.as_str()]).collect())
    }

    /// Reorder rows to follow `ids`.
    pub fn aligned(&self, ids: &[String]) -> Result<Table> {
        let pos = self.align(ids)?;
        Ok(Table {
            columns: self.columns.clone(),
            ids: ids.to_vec(),
            rows: pos.iter().map(|&i| self.rows[i].clone()).collect(),
        })
    }
}

/// Read a TSV with a header row; the first column holds ids.
pub fn read_table(path: &Path) -> Result<Table> {
    let lines = data_lines(path)?;
    let Some(((_, header), body)) = lines.split_first() else {
        return Err(MnirError::parse(path.display().to_string(), "missing header"));
    };
    let columns: Vec<String> = header.split('\t').map(str::to_string).collect();
    let mut ids = Vec::with_capacity(body.len());
    let mut rows = Vec::with_capacity(body.len());
    let mut seen = BTreeSet::new();
    for (n, line) in body {
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != columns.len() {
            return Err(MnirError::parse(
                loc(path, *n),
                format!("{} fields, header has {}", cells.len(), columns.len()),
            ));
        }
        if !seen.insert(cells[0].to_string()) {
            return Err(MnirError::parse(loc(path, *n), format!("duplicate id `{}`", cells[0])));
        }
        ids.push(cells[0].to_string());
        rows.push(cells[1..].iter().map(|s| s.to_string()).collect());
    }
    Ok(Table { columns, ids, rows })
}

/// Read `doc_id<TAB>token<TAB>count` triplets. Documents keep the order of
/// first appearance; the vocabulary is sorted.
pub fn read_counts(path: &Path) -> Result<Corpus> {
    let lines = data_lines(path)?;
    let mut doc_index: HashMap<String, usize> = HashMap::new();
    let mut doc_ids = Vec::new();
    let mut tokens = BTreeSet::new();
    let mut raw = Vec::with_capacity(lines.len());
    for (pos, (n, line)) in lines.iter().enumerate() {
        let cells: Vec<&str> = line.split('\t').collect();
        if pos == 0 && cells.get(2) == Some(&"count") {
            continue;
        }
        if cells.len() != 3 {
            return Err(MnirError::parse(loc(path, *n), "expected doc_id, token, count"));
        }
        let count: u32 = cells[2]
            .parse()
            .map_err(|e| MnirError::parse(loc(path, *n), format!("count `{}`: {e}", cells[2])))?;
        let next = doc_ids.len();
        let doc = *doc_index.entry(cells[0].to_string()).or_insert_with(|| {
            doc_ids.push(cells[0].to_string());
            next
        });
        tokens.insert(cells[1].to_string());
        raw.push((doc, cells[1].to_string(), count));
    }
    if doc_ids.is_empty() {
        return Err(MnirError::NoDocuments);
    }
    let vocab = Vocabulary::new(tokens.into_iter().collect())?;
    let triplets = raw
        .into_iter()
        .map(|(d, t, c)| (d, vocab.id(&t).expect("token collected"), c));
    let counts = SparseCounts::from_triplets(doc_ids.len(), vocab.len(), triplets)?;
    Ok(Corpus {
        counts,
        vocab,
        doc_ids,
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(std::io::BufWriter::new(fs::File::create(path)?))
}

fn write_header(out: &mut impl Write, header: &[String]) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

/// Write count triplets in document then token order.
pub fn write_counts(path: &Path, corpus: &Corpus, header: &[String]) -> Result<()> {
    let mut out = create(path)?;
    write_header(&mut out, header)?;
    writeln!(out, "doc_id\ttoken\tcount")?;
    for (i, j, c) in corpus.counts.entries() {
        writeln!(out, "{}\t{}\t{c}", corpus.doc_ids[i], corpus.vocab.token(j))?;
    }
    out.flush()?;
    Ok(())
}

/// One token per line.
pub fn write_vocabulary(path: &Path, vocab: &Vocabulary, header: &[String]) -> Result<()> {
    let mut out = create(path)?;
    write_header(&mut out, header)?;
    for t in vocab.tokens() {
        writeln!(out, "{t}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_vocabulary(path: &Path) -> Result<Vocabulary> {
    Vocabulary::new(data_lines(path)?.into_iter().map(|(_, l)| l).collect())
}

/// Named numeric columns of a table, aligned to `ids`.
pub fn factors_from_table(table: &Table, ids: &[String], columns: &[String]) -> Result<FactorMatrix> {
    let aligned = table.aligned(ids)?;
    let cols: Vec<Vec<f64>> = columns.iter().map(|c| aligned.numeric(c)).collect::<Result<_>>()?;
    let n = ids.len();
    let values = (0..n).flat_map(|i| cols.iter().map(move |c| c[i])).collect();
    FactorMatrix::with_names(n, columns.len(), values, columns.to_vec())
}

/// Scores as `doc_id<TAB>z1...`.
pub fn write_scores(path: &Path, ids: &[String], scores: &SrScores, header: &[String]) -> Result<()> {
    let mut out = create(path)?;
    write_header(&mut out, header)?;
    write!(out, "doc_id")?;
    for k in 1..=scores.n_factors() {
        write!(out, "\tz{k}")?;
    }
    writeln!(out)?;
    for (i, id) in ids.iter().enumerate() {
        write!(out, "{id}")?;
        for z in scores.row(i) {
            write!(out, "\t{z:?}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Scores table back as ids and a score matrix.
pub fn read_scores(path: &Path) -> Result<(Vec<String>, SrScores)> {
    let table = read_table(path)?;
    let names: Vec<String> = table.columns[1..].to_vec();
    let cols: Vec<Vec<f64>> = names.iter().map(|c| table.numeric(c)).collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = (0..table.ids.len())
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect();
    Ok((table.ids, SrScores::from_rows(&rows)?))
}

/// One document per line: `doc_id<TAB>text`, or bare text numbered from 1.
pub fn read_text_lines(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut docs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some((id, body)) => docs.push((id.to_string(), body.to_string())),
            None => docs.push((format!("doc{}", n + 1), line.to_string())),
        }
    }
    Ok(docs)
}

/// Every regular file in `dir`, id'd by file name, in sorted order.
pub fn read_text_dir(dir: &Path) -> Result<Vec<(String, String)>> {
    let mut files: BTreeMap<String, std::path::PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            files.insert(entry.file_name().to_string_lossy().into_owned(), entry.path());
        }
    }
    files
        .into_iter()
        .map(|(name, p)| Ok((name, fs::read_to_string(p)?)))
        .collect()
}

pub fn save_model(path: &Path, fit: &MnirFit) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, fit)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<MnirFit> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
