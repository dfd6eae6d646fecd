use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};
use crate::util::{fnv1a, fnv1a_continue, mix64};

/// Dense vectors keyed by post id (or user id, for node embeddings).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct Header {
    dim: usize,
}

#[derive(Deserialize)]
struct Row {
    #[serde(alias = "user_id", alias = "id")]
    post_id: String,
    v: Vec<f64>,
}

#[derive(Serialize)]
struct RowOut<'a> {
    #[serde(rename = "post_id")]
    key: &'a str,
    v: &'a [f64],
}

#[derive(Serialize)]
struct UserRowOut<'a> {
    user_id: &'a str,
    v: &'a [f64],
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("embedding dimension must be positive"));
        }
        Ok(Self {
            dim,
            vectors: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn insert(&mut self, key: impl Into<String>, v: Vec<f64>) -> Result<()> {
        let key = key.into();
        if v.len() != self.dim {
            return Err(Error::validation(format!(
                "vector for `{key}` has length {} but dim is {}",
                v.len(),
                self.dim
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation(format!(
                "vector for `{key}` has a non-finite component"
            )));
        }
        self.vectors.insert(key, v);
        Ok(())
    }

    /// Check keys against the corpus. Strict mode fails on unknown ids; lenient
    /// mode drops them with a warning. Returns the unknown ids.
    pub fn reconcile(&mut self, corpus: &Corpus, strict: bool) -> Result<Vec<String>> {
        let known: BTreeSet<&str> = corpus.posts().iter().map(|p| p.post_id.as_str()).collect();
        let unknown: Vec<String> = self
            .vectors
            .keys()
            .filter(|k| !known.contains(k.as_str()))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            if strict {
                return Err(Error::validation(format!(
                    "{} embedding ids are not in the corpus (first: `{}`)",
                    unknown.len(),
                    unknown[0]
                )));
            }
            log::warn!(
                "ignoring {} embeddings whose post id is not in the corpus",
                unknown.len()
            );
            for k in &unknown {
                self.vectors.remove(k);
            }
        }
        Ok(unknown)
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let record_err = |line: usize, message: String| Error::Record {
        path: path.to_path_buf(),
        line,
        message,
    };

    let header = loop {
        match lines.next() {
            Some((i, line)) => {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let h: Header = serde_json::from_str(&line)
                    .map_err(|e| record_err(i + 1, format!("bad header: {e}")))?;
                break h;
            }
            None => return Err(record_err(1, "missing `{\"dim\": D}` header".into())),
        }
    };
    let mut table = EmbeddingTable::new(header.dim)?;

    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row =
            serde_json::from_str(&line).map_err(|e| record_err(i + 1, format!("bad row: {e}")))?;
        if table.vectors.contains_key(&row.post_id) {
            return Err(record_err(i + 1, format!("duplicate id `{}`", row.post_id)));
        }
        table
            .insert(row.post_id, row.v)
            .map_err(|e| record_err(i + 1, e.to_string()))?;
    }
    Ok(table)
}

/// Write a table. `user_keys` selects `user_id` instead of `post_id` as the key field.
pub fn write_embeddings(path: &Path, table: &EmbeddingTable, user_keys: bool) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{{\"dim\":{}}}", table.dim).map_err(io)?;
    for (k, v) in &table.vectors {
        let line = if user_keys {
            serde_json::to_string(&UserRowOut { user_id: k, v })
        } else {
            serde_json::to_string(&RowOut { key: k, v })
        }
        .map_err(|e| Error::Internal(e.to_string()))?;
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Bucket index and sign for one token under the hashing embedder.
pub fn token_bucket(token: &str, dim: usize, seed: u64) -> (usize, f64) {
    let h = fnv1a_continue(fnv1a(&seed.to_le_bytes()), token.as_bytes());
    let bucket = (h % dim as u64) as usize;
    let sign = if mix64(h) & 1 == 0 { 1.0 } else { -1.0 };
    (bucket, sign)
}

#[derive(Debug, Clone)]
pub struct FallbackEmbedding {
    pub table: EmbeddingTable,
    /// Posts whose cleaned text had no tokens; they carry a zero vector.
    pub empty: Vec<String>,
}

/// Signed feature-hashing bag of words over the cleaned text, L2-normalized.
pub fn fallback_embed(corpus: &Corpus, dim: usize, seed: u64) -> Result<FallbackEmbedding> {
    if dim < 8 {
        return Err(Error::validation("fallback embedding dim must be at least 8"));
    }
    let mut table = EmbeddingTable::new(dim)?;
    let mut empty = Vec::new();
    for p in corpus.posts() {
        let mut v = vec![0.0; dim];
        for tok in tokenize(&p.text) {
            let (b, s) = token_bucket(&tok, dim, seed);
            v[b] += s;
        }
        let n = crate::util::norm(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        } else {
            empty.push(p.post_id.clone());
        }
        table.insert(p.post_id.clone(), v)?;
    }
    Ok(FallbackEmbedding { table, empty })
}
