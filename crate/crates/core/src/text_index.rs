//! Tokenization and an Okapi BM25 inverted index, one per channel.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::model::{Channel, Snippet};

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 > 0.0) {
            return Err(Error::InvalidParams(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidParams(format!("b must be in [0,1], got {}", self.b)));
        }
        Ok(())
    }
}

/// Inverse document frequency with +0.5 smoothing, floored at zero.
pub fn idf(n_docs: usize, df: usize) -> f64 {
    let n = n_docs as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln().max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Posting {
    doc: u32,
    tf: u32,
}

/// Write-once inverted index over the snippets of one channel.
///
/// Documents are stored in ascending id order, so internal ordinals double as
/// the tie-break key.
#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    channel: Channel,
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_len: Vec<u32>,
    avg_dl: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

impl Bm25Index {
    pub fn build(docs: &[Snippet], params: Bm25Params) -> Result<Self> {
        Self::build_for(docs.first().map_or(Channel::Asr, |d| d.channel), docs, params)
    }

    /// Like [`Bm25Index::build`] but names the channel explicitly, so an empty
    /// corpus still records which channel it belongs to.
    pub fn build_for(channel: Channel, docs: &[Snippet], params: Bm25Params) -> Result<Self> {
        params.validate()?;
        if let Some(other) = docs.iter().find(|d| d.channel != channel) {
            return Err(Error::MixedChannels(channel, other.channel));
        }
        let mut order: Vec<&Snippet> = docs.iter().collect();
        order.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = order.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::DuplicateDocId(w[0].id.clone()));
        }

        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_ids = Vec::with_capacity(order.len());
        let mut doc_len = Vec::with_capacity(order.len());
        for (ord, doc) in order.iter().enumerate() {
            let tokens = tokenize(&doc.text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting {
                    doc: ord as u32,
                    tf: count,
                });
            }
            doc_ids.push(doc.id.clone());
            doc_len.push(tokens.len() as u32);
        }
        let avg_dl = if doc_len.is_empty() {
            0.0
        } else {
            doc_len.iter().map(|&l| l as f64).sum::<f64>() / doc_len.len() as f64
        };
        Ok(Bm25Index {
            channel,
            params,
            doc_ids,
            doc_len,
            avg_dl,
            postings,
        })
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_dl(&self) -> f64 {
        self.avg_dl
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<u32> {
        self.ordinal(doc_id).map(|o| self.doc_len[o])
    }

    /// Number of documents containing `term`.
    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    fn ordinal(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids
            .binary_search_by(|probe| probe.as_str().cmp(doc_id))
            .ok()
    }

    fn term_weight(&self, tf: u32, dl: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let avg = if self.avg_dl > 0.0 { self.avg_dl } else { 1.0 };
        tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl as f64 / avg))
    }

    /// BM25 relevance of one document to a token list. Each query token
    /// contributes once per occurrence in `query_tokens`.
    pub fn bm25_score(&self, query_tokens: &[String], doc_id: &str) -> Result<f64> {
        let ord = self
            .ordinal(doc_id)
            .ok_or_else(|| Error::UnknownDocId(doc_id.to_string()))?;
        let dl = self.doc_len[ord];
        let mut score = 0.0;
        for token in query_tokens {
            let Some(list) = self.postings.get(token) else {
                continue;
            };
            if let Ok(i) = list.binary_search_by_key(&(ord as u32), |p| p.doc) {
                score += idf(self.n_docs(), list.len()) * self.term_weight(list[i].tf, dl);
            }
        }
        Ok(score)
    }

    /// Top `pool_size` documents with positive score, descending, ties by id.
    pub fn search(&self, query_text: &str, pool_size: usize) -> Vec<(String, f64)> {
        let tokens = tokenize(query_text);
        let mut acc = vec![0.0f64; self.n_docs()];
        let mut touched = HashSet::new();
        for token in &tokens {
            let Some(list) = self.postings.get(token) else {
                continue;
            };
            let w = idf(self.n_docs(), list.len());
            for p in list {
                acc[p.doc as usize] += w * self.term_weight(p.tf, self.doc_len[p.doc as usize]);
                touched.insert(p.doc);
            }
        }
        let mut hits: Vec<(u32, f64)> = touched
            .into_iter()
            .map(|d| (d, acc[d as usize]))
            .filter(|&(_, s)| s > 0.0)
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.truncate(pool_size);
        hits.into_iter()
            .map(|(d, s)| (self.doc_ids[d as usize].clone(), s))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header();
        w.u8(self.channel.tag());
        w.f64(self.params.k1);
        w.f64(self.params.b);
        w.u32(self.doc_ids.len() as u32);
        for (id, len) in self.doc_ids.iter().zip(&self.doc_len) {
            w.str(id);
            w.u32(*len);
        }
        w.u32(self.postings.len() as u32);
        for (term, list) in &self.postings {
            w.str(term);
            w.u32(list.len() as u32);
            for p in list {
                w.u32(p.doc);
                w.u32(p.tf);
            }
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(buf, "bm25 index")?;
        let channel = Channel::from_tag(r.u8()?)
            .ok_or_else(|| Error::Corrupt("unknown channel tag".into()))?;
        let params = Bm25Params {
            k1: r.f64()?,
            b: r.f64()?,
        };
        params.validate()?;
        let n = r.u32()? as usize;
        let mut doc_ids = Vec::with_capacity(n.min(1 << 20));
        let mut doc_len = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            doc_ids.push(r.str()?);
            doc_len.push(r.u32()?);
        }
        if doc_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Corrupt("document ids not strictly sorted".into()));
        }
        let n_terms = r.u32()? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let term = r.str()?;
            let len = r.u32()? as usize;
            let mut list = Vec::with_capacity(len.min(n));
            for _ in 0..len {
                let doc = r.u32()?;
                let tf = r.u32()?;
                if doc as usize >= n {
                    return Err(Error::Corrupt(format!("posting references doc {doc}")));
                }
                list.push(Posting { doc, tf });
            }
            postings.insert(term, list);
        }
        if !r.is_empty() {
            return Err(Error::Corrupt("trailing bytes".into()));
        }
        let avg_dl = if n == 0 {
            0.0
        } else {
            doc_len.iter().map(|&l| l as f64).sum::<f64>() / n as f64
        };
        Ok(Bm25Index {
            channel,
            params,
            doc_ids,
            doc_len,
            avg_dl,
            postings,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}
