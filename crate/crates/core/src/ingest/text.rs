//! Text inputs for the embedding pipeline: whitespace-tokenized corpora and
//! per-app documents with multi-label annotations.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::table::{read_csv, write_bytes, TableWriter};

/// Tokenized documents over a vocabulary built in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenCorpus {
    /// Documents as vocabulary indices.
    pub docs: Vec<Vec<usize>>,
    pub vocab: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenCorpus {
    pub fn from_documents<S: AsRef<str>>(docs: &[Vec<S>]) -> Self {
        let mut vocab = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let docs = docs
            .iter()
            .map(|doc| {
                doc.iter()
                    .map(|tok| {
                        let tok = tok.as_ref();
                        *index.entry(tok.to_string()).or_insert_with(|| {
                            vocab.push(tok.to_string());
                            vocab.len() - 1
                        })
                    })
                    .collect()
            })
            .collect();
        TokenCorpus { docs, vocab, index }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn word_index(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn total_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }
}

/// Load `corpus.txt`: one document per line, whitespace-tokenized. Blank
/// lines are skipped.
pub fn load_corpus(path: &Path) -> Result<TokenCorpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let docs: Vec<Vec<&str>> = text
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>())
        .filter(|toks| !toks.is_empty())
        .collect();
    if docs.is_empty() {
        return Err(Error::Invariant(format!(
            "{}: corpus is empty",
            path.display()
        )));
    }
    Ok(TokenCorpus::from_documents(&docs))
}

pub fn write_corpus(corpus: &TokenCorpus, path: &Path) -> Result<()> {
    let mut out = String::new();
    for doc in &corpus.docs {
        let line: Vec<&str> = doc.iter().map(|&w| corpus.vocab[w].as_str()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

/// Per-app documents with label sets; the label universe is the sorted
/// union of all labels seen.
#[derive(Debug, Clone, PartialEq)]
pub struct AppDocs {
    pub app_ids: Vec<String>,
    /// Raw tokens per app (vocabulary filtering happens at embedding time).
    pub tokens: Vec<Vec<String>>,
    pub labels: Vec<BTreeSet<String>>,
    pub label_universe: Vec<String>,
}

impl AppDocs {
    pub fn n(&self) -> usize {
        self.app_ids.len()
    }
}

/// Load `app_docs.csv` (app_id, text, labels); labels semicolon-separated,
/// possibly empty.
pub fn load_app_docs(path: &Path) -> Result<AppDocs> {
    let file = read_csv(path)?;
    file.expect_header(&["app_id", "text", "labels"])?;
    if file.is_empty() {
        return Err(Error::Invariant(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let mut app_ids = Vec::with_capacity(file.len());
    let mut tokens = Vec::with_capacity(file.len());
    let mut labels = Vec::with_capacity(file.len());
    let mut universe = BTreeSet::new();
    for i in 0..file.len() {
        app_ids.push(file.identifier(i, 0)?);
        tokens.push(
            file.text(i, 1)
                .split_whitespace()
                .map(|s| s.to_string())
                .collect(),
        );
        let set = file.label_set(i, 2);
        universe.extend(set.iter().cloned());
        labels.push(set);
    }
    Ok(AppDocs {
        app_ids,
        tokens,
        labels,
        label_universe: universe.into_iter().collect(),
    })
}

pub fn write_app_docs(docs: &AppDocs, path: &Path) -> Result<()> {
    let mut w = TableWriter::create(path, &["app_id", "text", "labels"])?;
    for i in 0..docs.n() {
        let labels: Vec<&str> = docs.labels[i].iter().map(|s| s.as_str()).collect();
        w.write_row([
            docs.app_ids[i].clone(),
            docs.tokens[i].join(" "),
            labels.join(";"),
        ])?;
    }
    w.finish()
}
