//! Word-embedding tables: parsing the plain-text vector format, name lookup,
//! and uniformly random tables for the no-prior-knowledge ablation.

use std::io::{BufRead, Write};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Token → fixed-length vector. Immutable once built; insertion order is kept
/// so a table writes back in the order it was read.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: IndexMap<String, Vec<f64>>,
}

/// Result of parsing an embedding file.
#[derive(Debug, Clone)]
pub struct ParsedEmbeddings {
    pub table: EmbeddingTable,
    /// One message per ignored duplicate token.
    pub warnings: Vec<String>,
}

/// Splits a class or attribute name into lowercase tokens. `+`, `_`, `-` and
/// whitespace all separate tokens, so `killer+whale` and `killer whale` agree.
pub fn normalize_name(name: &str) -> Vec<String> {
    name.split(|c: char| c == '+' || c == '_' || c == '-' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

impl EmbeddingTable {
    /// Builds a table from explicit entries. Tokens are lowercased; the first
    /// occurrence of a token wins.
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: AsRef<str>,
    {
        if dim == 0 {
            return Err(Error::BadDim);
        }
        let mut map = IndexMap::new();
        for (i, (token, v)) in entries.into_iter().enumerate() {
            let token = token.as_ref().to_lowercase();
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(Error::BadLine {
                    line: i + 1,
                    reason: format!("invalid token `{token}`"),
                });
            }
            if v.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
            map.entry(token).or_insert(v);
        }
        if map.is_empty() {
            return Err(Error::Empty);
        }
        Ok(Self { dim, entries: map })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Mean of the vectors of every token in `name`.
    pub fn embed_name(&self, name: &str) -> Result<Vec<f64>> {
        let tokens = normalize_name(name);
        if tokens.is_empty() {
            return Err(Error::EmptyName(name.to_string()));
        }
        let mut acc = vec![0.0; self.dim];
        for token in &tokens {
            let v = self.get(token).ok_or_else(|| Error::UnknownToken {
                token: token.clone(),
                name: name.to_string(),
            })?;
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
        if tokens.len() > 1 {
            let n = tokens.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
        }
        Ok(acc)
    }

    /// Writes the table in the same text format `parse_embedding_text` reads.
    /// Values use the shortest representation that round-trips exactly.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for (token, v) in &self.entries {
            write!(out, "{token}")?;
            for x in v {
                write!(out, " {x:?}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Parses `token v1 v2 ... vd` lines. Blank lines are skipped; CRLF is accepted.
pub fn parse_embedding_text<R: BufRead>(reader: R, expected_dim: Option<usize>) -> Result<ParsedEmbeddings> {
    if expected_dim == Some(0) {
        return Err(Error::BadDim);
    }
    let mut dim = expected_dim;
    let mut entries: IndexMap<String, Vec<f64>> = IndexMap::new();
    let mut warnings = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let Some(token) = fields.next() else { continue };

        let mut values = Vec::with_capacity(dim.unwrap_or(0));
        for field in fields {
            let x: f64 = field.parse().map_err(|_| Error::BadLine {
                line: lineno,
                reason: format!("cannot parse `{field}` as a number"),
            })?;
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    line: lineno,
                    value: field.to_string(),
                });
            }
            values.push(x);
        }
        let want = *dim.get_or_insert(values.len());
        if values.len() != want || want == 0 {
            return Err(Error::BadLine {
                line: lineno,
                reason: format!("expected {want} values, found {}", values.len()),
            });
        }

        let token = token.to_lowercase();
        if entries.contains_key(&token) {
            warnings.push(format!("line {lineno}: duplicate token `{token}` ignored"));
        } else {
            entries.insert(token, values);
        }
    }

    match dim {
        Some(dim) if !entries.is_empty() => Ok(ParsedEmbeddings {
            table: EmbeddingTable { dim, entries },
            warnings,
        }),
        _ => Err(Error::Empty),
    }
}

/// Assigns every token of every name an i.i.d. vector uniform on [-1, 1].
/// Tokens shared between names get one vector, drawn at first appearance.
pub fn random_embedding_table(names: &[String], dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::BadDim);
    }
    if names.is_empty() {
        return Err(Error::Empty);
    }
    let mut seen = std::collections::HashSet::new();
    for name in names {
        let tokens = normalize_name(name);
        if tokens.is_empty() {
            return Err(Error::EmptyName(name.clone()));
        }
        if !seen.insert(tokens) {
            return Err(Error::DupName(name.clone()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries: IndexMap<String, Vec<f64>> = IndexMap::new();
    for name in names {
        for token in normalize_name(name) {
            if !entries.contains_key(&token) {
                let v = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
                entries.insert(token, v);
            }
        }
    }
    Ok(EmbeddingTable { dim, entries })
}
