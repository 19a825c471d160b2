//! Exact inner-product search over unit vectors, plus embedding providers.
//!
//! Every stored vector is normalized on insert, so an inner product is a
//! cosine similarity and one acceptance threshold means the same thing for
//! every provider.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::http::{Endpoint, JsonClient};
use crate::text_index::tokenize;

/// Default acceptance threshold on cosine similarity.
pub const DEFAULT_THRESHOLD: f64 = 0.3;

const NORM_TOLERANCE: f64 = 1e-6;

pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm.is_nan() || norm <= 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub fn normalize_f32(v: &[f32]) -> Result<Vec<f32>> {
    let wide: Vec<f64> = v.iter().map(|&x| x as f64).collect();
    Ok(normalize(&wide)?.into_iter().map(|x| x as f32).collect())
}

/// Inner product accumulated in `f64`.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatVectorIndex {
    dim: usize,
    threshold: f64,
    ids: Vec<String>,
    data: Vec<f32>,
    lookup: HashMap<String, usize>,
}

impl FlatVectorIndex {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        FlatVectorIndex {
            dim,
            threshold: DEFAULT_THRESHOLD,
            ids: Vec::new(),
            data: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Normalizes and stores `v` under `id`.
    pub fn add(&mut self, id: &str, v: &[f32]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        let unit = normalize_f32(v)?;
        self.insert_unit(id, unit)
    }

    fn insert_unit(&mut self, id: &str, unit: Vec<f32>) -> Result<()> {
        if self.lookup.contains_key(id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        self.lookup.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.data.extend_from_slice(&unit);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.lookup.get(id).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Cosine similarity between `q` and the stored vector `id`.
    pub fn similarity(&self, q: &[f32], id: &str) -> Option<f64> {
        self.get(id).map(|v| dot(q, v))
    }

    /// Up to `k` ids with `dot(q, v) >= threshold`, descending, ties by id.
    pub fn search(&self, q: &[f32], k: usize, threshold: f64) -> Result<Vec<(String, f64)>> {
        if q.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: q.len(),
            });
        }
        let mut hits: Vec<(usize, f64)> = (0..self.len())
            .map(|i| (i, dot(q, self.row(i))))
            .filter(|&(_, s)| s >= threshold)
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| self.ids[a.0].cmp(&self.ids[b.0])));
        hits.truncate(k);
        Ok(hits
            .into_iter()
            .map(|(i, s)| (self.ids[i].clone(), s))
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        write_vector_records(
            self.dim,
            self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), self.row(i))),
        )
    }

    /// Loads stored unit vectors without renormalizing them.
    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let (dim, records) = read_vector_records(buf)?;
        let mut idx = FlatVectorIndex::new(dim);
        for (id, v) in records {
            let norm = dot(&v, &v).sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::Corrupt(format!("vector {id:?} has norm {norm}")));
            }
            idx.insert_unit(&id, v)?;
        }
        Ok(idx)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

/// Serializes `(id, vector)` records behind the shared header and a `dim` field.
pub fn write_vector_records<'a>(
    dim: usize,
    records: impl IntoIterator<Item = (&'a str, &'a [f32])>,
) -> Vec<u8> {
    let mut w = Writer::with_header();
    w.u32(dim as u32);
    for (id, v) in records {
        debug_assert_eq!(v.len(), dim);
        w.str(id);
        for &x in v {
            w.f32(x);
        }
    }
    w.finish()
}

/// `(id, vector)` pairs in file order.
pub type VectorRecords = Vec<(String, Vec<f32>)>;

pub fn read_vector_records(buf: &[u8]) -> Result<(usize, VectorRecords)> {
    let mut r = Reader::with_header(buf, "vector file")?;
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(Error::Corrupt("dimension is zero".into()));
    }
    let mut out = Vec::new();
    while !r.is_empty() {
        let id = r.str()?;
        let v = (0..dim).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        out.push((id, v));
    }
    Ok((dim, out))
}

/// Turns texts into fixed-width vectors.
///
/// Implementations must be deterministic and return one vector per input, in
/// input order.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;

    fn embed_one(&self, text: &str) -> Result<Vec<f32>> {
        self.embed(&[text.to_string()])?
            .pop()
            .ok_or_else(|| Error::provider("provider returned no vectors", false))
    }
}

/// Deterministic stand-in for a neural encoder.
///
/// Each token maps to a seeded Gaussian direction; a text embeds as the
/// normalized mean of its token directions, so texts sharing tokens point the
/// same way.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 8, "hash embedder needs dim >= 8");
        HashEmbedder { dim, seed }
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(fnv1a(token.as_bytes()) ^ self.seed));
        let v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        normalize(&v).expect("gaussian sample is nonzero")
    }

    fn embed_text(&self, text: &str) -> Vec<f32> {
        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            tokens.push(text.to_string());
        }
        let mut acc = vec![0.0f64; self.dim];
        for t in &tokens {
            for (a, x) in acc.iter_mut().zip(self.token_vector(t)) {
                *a += x;
            }
        }
        match normalize(&acc) {
            Ok(v) => v.into_iter().map(|x| x as f32).collect(),
            // tokens cancelled exactly; fall back to the first token's direction
            Err(_) => self.token_vector(&tokens[0]).into_iter().map(|x| x as f32).collect(),
        }
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Remote encoder: `POST {base_url}/embed` with `{"texts": [...]}`.
pub struct HttpEmbedder {
    dim: usize,
    client: JsonClient,
}

impl HttpEmbedder {
    pub fn new(endpoint: Endpoint, dim: usize) -> Result<Self> {
        Ok(HttpEmbedder {
            dim,
            client: JsonClient::new(endpoint)?,
        })
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let resp: EmbedResponse = self.client.post("/embed", &EmbedRequest { texts })?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::provider(
                format!("expected {} vectors, got {}", texts.len(), resp.vectors.len()),
                false,
            ));
        }
        if let Some(v) = resp.vectors.iter().find(|v| v.len() != self.dim) {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(resp.vectors)
    }
}

/// Vectors computed offline, keyed by snippet or frame id.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedEmbeddings {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl PrecomputedEmbeddings {
    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let (dim, records) = read_vector_records(buf)?;
        let mut vectors = HashMap::with_capacity(records.len());
        for (id, v) in records {
            if vectors.insert(id.clone(), v).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(PrecomputedEmbeddings { dim, vectors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Vectors for `ids` in order; fails naming every missing id.
    pub fn lookup<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<Vec<f32>>> {
        let missing: Vec<String> = ids
            .iter()
            .filter(|id| !self.vectors.contains_key(id.as_ref()))
            .map(|id| id.as_ref().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingEmbeddings(missing));
        }
        Ok(ids.iter().map(|id| self.vectors[id.as_ref()].clone()).collect())
    }
}
