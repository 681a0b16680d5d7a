//! Tweet text to dense vectors: averaged pretrained word embeddings, or a
//! hashed bag-of-words when no embedding file is available.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::stream::Instance;

/// Dense feature vector with finite entries.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature vector has non-finite entries"));
        }
        Ok(FeatureVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        FeatureVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// An instance paired with its feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturedInstance {
    pub instance: Instance,
    pub x: FeatureVector,
}

fn is_edge_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '…' | '«' | '»' | '¡' | '¿')
}

/// Lowercase and strip leading/trailing punctuation. May return an empty string.
pub fn normalize_token(raw: &str) -> String {
    raw.trim_matches(is_edge_punctuation).to_lowercase()
}

/// Unicode-whitespace tokens, normalized, empties dropped.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(normalize_token)
        .filter(|t| !t.is_empty())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let mut map = HashMap::new();
        for (token, v) in entries {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            let token = normalize_token(&token);
            if !token.is_empty() {
                map.insert(token, v);
            }
        }
        Ok(EmbeddingTable { dim, entries: map })
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
}

/// Loads a `token v1 ... vd` text file.
///
/// Lines with the wrong number of values or unparseable numbers are skipped;
/// the skip count is returned alongside the table. Duplicate tokens keep the
/// last occurrence.
pub fn load_embeddings(path: impl AsRef<Path>, expected_dim: usize) -> Result<(EmbeddingTable, usize)> {
    let path = path.as_ref();
    if expected_dim == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = HashMap::new();
    let mut skipped = 0usize;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = normalize_token(parts.next().unwrap_or_default());
        let values: Option<Vec<f64>> = parts
            .map(|p| p.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        match values {
            Some(v) if v.len() == expected_dim && !token.is_empty() => {
                entries.insert(token, v);
            }
            _ => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} malformed embedding lines", path.display());
    }
    if entries.is_empty() {
        return Err(Error::invalid(format!(
            "{}: no usable embedding lines of dimension {expected_dim}",
            path.display()
        )));
    }
    Ok((
        EmbeddingTable {
            dim: expected_dim,
            entries,
        },
        skipped,
    ))
}

/// Mean of the in-vocabulary token vectors; zero vector when none are known.
pub fn featurize(text: &str, table: &EmbeddingTable) -> FeatureVector {
    // Summing per distinct token in sorted order keeps the result independent of token order.
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let tokens: Vec<String> = tokenize(text).collect();
    for t in &tokens {
        if table.entries.contains_key(t.as_str()) {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut sum = vec![0.0; table.dim];
    let mut total = 0usize;
    for (token, count) in counts {
        let v = &table.entries[token];
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x * count as f64;
        }
        total += count;
    }
    if total > 0 {
        for s in &mut sum {
            *s /= total as f64;
        }
    }
    FeatureVector(sum)
}

/// FNV-1a over the seed bytes followed by the token bytes.
pub fn stable_hash(token: &str, seed: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes().iter().chain(token.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// L2-normalized token counts in `dim` hashed buckets.
pub fn hashed_bow(text: &str, dim: usize, seed: u64) -> Result<FeatureVector> {
    if dim < 8 {
        return Err(Error::invalid(format!(
            "hashed dimension must be >= 8, got {dim}"
        )));
    }
    let mut v = vec![0.0; dim];
    for token in tokenize(text) {
        v[(stable_hash(&token, seed) % dim as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    Ok(FeatureVector(v))
}

/// Text-to-vector strategy used by a run.
#[derive(Clone, Debug)]
pub enum Featurizer {
    Embeddings(EmbeddingTable),
    Hashed {
        dim: usize,
        seed: u64,
    },
    /// Only precomputed instance features are accepted.
    Precomputed {
        dim: usize,
    },
}

impl Featurizer {
    pub fn dim(&self) -> usize {
        match self {
            Featurizer::Embeddings(t) => t.dim(),
            Featurizer::Hashed { dim, .. } | Featurizer::Precomputed { dim } => *dim,
        }
    }

    /// Precomputed features win over text.
    pub fn featurize_instance(&self, inst: &Instance) -> Result<FeatureVector> {
        if let Some(f) = &inst.features {
            if f.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    got: f.len(),
                });
            }
            return FeatureVector::new(f.clone());
        }
        match self {
            Featurizer::Embeddings(t) => Ok(featurize(&inst.text, t)),
            Featurizer::Hashed { dim, seed } => hashed_bow(&inst.text, *dim, *seed),
            Featurizer::Precomputed { .. } => Err(Error::invalid(format!(
                "instance `{}` has no precomputed features",
                inst.id
            ))),
        }
    }
}
