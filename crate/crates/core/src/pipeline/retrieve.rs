//! Per-channel candidate gathering, temporal rescoring, and acceptance filtering.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Channel, ScoredSnippet, Snippet};
use crate::temporal::{rescore, top_k, AnchorSet, DecayParams, RescoreConfig};
use crate::text_index::{tokenize, Bm25Index, Bm25Params};
use crate::vector_index::{EmbeddingProvider, FlatVectorIndex, DEFAULT_THRESHOLD};

/// How the raw score of a candidate is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// BM25 over the request text.
    #[default]
    Lexical,
    /// Cosine similarity to the request embedding, above the threshold.
    Dense,
    /// Union of both pools; raw score is the max of the min-max rescaled signals.
    MaxFuse,
}

impl std::str::FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lexical" => Ok(Fusion::Lexical),
            "dense" => Ok(Fusion::Dense),
            "max_fuse" | "max-fuse" | "maxfuse" => Ok(Fusion::MaxFuse),
            other => Err(Error::Config(format!("unknown fusion mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSettings {
    pub decay: DecayParams,
    pub rescore: RescoreConfig,
    pub fusion: Fusion,
    /// Dense acceptance threshold; hits whose cosine to the request falls below are dropped.
    pub tau: f64,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        RetrievalSettings {
            decay: DecayParams::default(),
            rescore: RescoreConfig::default(),
            fusion: Fusion::Lexical,
            tau: DEFAULT_THRESHOLD,
        }
    }
}

/// Lexical and dense indices over one channel's snippets.
#[derive(Debug, Clone)]
pub struct ChannelIndex {
    pub channel: Channel,
    pub bm25: Bm25Index,
    pub dense: FlatVectorIndex,
    snippets: HashMap<String, Snippet>,
}

impl ChannelIndex {
    pub fn new(bm25: Bm25Index, dense: FlatVectorIndex, snippets: Vec<Snippet>) -> Result<Self> {
        let channel = bm25.channel();
        let mut map = HashMap::with_capacity(snippets.len());
        for s in snippets {
            if s.channel != channel {
                return Err(Error::MixedChannels(channel, s.channel));
            }
            let id = s.id.clone();
            if map.insert(id.clone(), s).is_some() {
                return Err(Error::DuplicateDocId(id));
            }
        }
        let missing: Vec<String> = bm25
            .doc_ids()
            .iter()
            .filter(|id| !map.contains_key(*id))
            .cloned()
            .collect();
        if let Some(id) = missing.first() {
            return Err(Error::UnknownDocId(id.clone()));
        }
        if dense.len() != map.len() {
            return Err(Error::MissingEmbeddings(
                map.keys().filter(|id| dense.get(id).is_none()).cloned().collect(),
            ));
        }
        Ok(ChannelIndex {
            channel,
            bm25,
            dense,
            snippets: map,
        })
    }

    /// Builds both indices, embedding every snippet with `embedder`.
    pub fn build(
        channel: Channel,
        snippets: Vec<Snippet>,
        params: Bm25Params,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<Self> {
        let bm25 = Bm25Index::build_for(channel, &snippets, params)?;
        let texts: Vec<String> = snippets.iter().map(|s| s.text.clone()).collect();
        let vectors = if texts.is_empty() {
            Vec::new()
        } else {
            embedder.embed(&texts)?
        };
        Self::with_vectors(bm25, snippets, embedder.dim(), vectors)
    }

    /// Builds the dense side from vectors aligned with `snippets`.
    pub fn with_vectors(
        bm25: Bm25Index,
        snippets: Vec<Snippet>,
        dim: usize,
        vectors: Vec<Vec<f32>>,
    ) -> Result<Self> {
        let mut dense = FlatVectorIndex::new(dim);
        for (s, v) in snippets.iter().zip(&vectors) {
            dense.add(&s.id, v)?;
        }
        Self::new(bm25, dense, snippets)
    }

    pub fn snippet(&self, id: &str) -> Option<&Snippet> {
        self.snippets.get(id)
    }

    pub fn snippets_sorted(&self) -> Vec<&Snippet> {
        let mut v: Vec<&Snippet> = self.snippets.values().collect();
        v.sort_by(|a, b| a.t_start.total_cmp(&b.t_start).then_with(|| a.id.cmp(&b.id)));
        v
    }

    pub fn len(&self) -> usize {
        self.snippets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| {
            if hi > lo {
                (v - lo) / (hi - lo)
            } else if hi > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Candidate pool with raw scores for the chosen fusion mode.
pub fn candidate_pool(
    req_text: &str,
    query_vec: &[f32],
    index: &ChannelIndex,
    settings: &RetrievalSettings,
) -> Result<Vec<(String, f64)>> {
    let pool = settings.rescore.pool();
    Ok(match settings.fusion {
        Fusion::Lexical => index.bm25.search(req_text, pool),
        Fusion::Dense => index
            .dense
            .search(query_vec, pool, settings.tau)?
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .collect(),
        Fusion::MaxFuse => {
            let mut ids: BTreeSet<String> =
                index.bm25.search(req_text, pool).into_iter().map(|h| h.0).collect();
            ids.extend(index.dense.search(query_vec, pool, settings.tau)?.into_iter().map(|h| h.0));
            let ids: Vec<String> = ids.into_iter().collect();
            let tokens = tokenize(req_text);
            let lexical = ids
                .iter()
                .map(|id| index.bm25.bm25_score(&tokens, id))
                .collect::<Result<Vec<_>>>()?;
            let dense: Vec<f64> = ids
                .iter()
                .map(|id| index.dense.similarity(query_vec, id).unwrap_or(0.0).max(0.0))
                .collect();
            let (lexical, dense) = (min_max(&lexical), min_max(&dense));
            let mut fused: Vec<(String, f64)> = ids
                .into_iter()
                .enumerate()
                .map(|(i, id)| (id, lexical[i].max(dense[i])))
                .filter(|(_, s)| *s > 0.0)
                .collect();
            fused.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            fused.truncate(pool);
            fused
        }
    })
}

/// Retrieves, rescores, and filters the hits for one channel request.
///
/// The pool is `pool_multiplier × top_k` candidates; scores are normalized
/// over that pool, the top K are kept, and hits whose cosine to the request
/// is below `tau` are dropped last, so raising `tau` can only remove hits.
pub fn retrieve_channel(
    req_text: &str,
    query_vec: &[f32],
    index: &ChannelIndex,
    anchors: &AnchorSet,
    settings: &RetrievalSettings,
    duration_s: f64,
) -> Result<Vec<ScoredSnippet>> {
    if index.bm25.n_docs() == 0 {
        return Err(Error::EmptyIndex);
    }
    let pool = candidate_pool(req_text, query_vec, index, settings)?;
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let candidates: Vec<(Snippet, f64)> = pool
        .into_iter()
        .map(|(id, raw)| {
            index
                .snippet(&id)
                .cloned()
                .map(|s| (s, raw))
                .ok_or(Error::UnknownDocId(id))
        })
        .collect::<Result<_>>()?;
    let scored = match rescore(candidates, anchors, &settings.decay, duration_s) {
        Ok(s) => s,
        Err(Error::AllZeroMass) => {
            tracing::warn!(channel = %index.channel, "temporal decay underflowed for every candidate");
            return Ok(Vec::new());
        }
        Err(e) => return Err(e),
    };
    Ok(top_k(scored, settings.rescore.top_k)
        .into_iter()
        .filter(|h| {
            index
                .dense
                .similarity(query_vec, &h.snippet.id)
                .is_some_and(|s| s >= settings.tau)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector_index::HashEmbedder;

    fn index(texts: &[(&str, f64)]) -> (ChannelIndex, HashEmbedder) {
        let e = HashEmbedder::new(32, 5);
        let snippets = texts
            .iter()
            .enumerate()
            .map(|(i, (t, at))| Snippet::new(format!("s{i:02}"), Channel::Asr, *t, *at, *at))
            .collect();
        (
            ChannelIndex::build(Channel::Asr, snippets, Bm25Params::default(), &e).unwrap(),
            e,
        )
    }

    fn anchors() -> AnchorSet {
        AnchorSet {
            t_last: 100.0,
            t_first: 0.0,
            t_semantic: 50.0,
        }
    }

    #[test]
    fn single_match_gets_full_score() {
        let (idx, e) = index(&[("red kettle boils", 10.0), ("blue door", 20.0)]);
        let q = e.embed_one("red kettle").unwrap();
        let hits = retrieve_channel("red kettle", &q, &idx, &anchors(), &RetrievalSettings::default(), 100.0)
            .unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].score, 1.0);
        assert_eq!(hits[0].snippet.id, "s00");
    }

    #[test]
    fn empty_index_errors() {
        let (idx, e) = index(&[]);
        let q = e.embed_one("x").unwrap();
        assert!(matches!(
            retrieve_channel("x", &q, &idx, &anchors(), &RetrievalSettings::default(), 1.0),
            Err(Error::EmptyIndex)
        ));
    }

    #[test]
    fn tau_one_drops_everything() {
        let (idx, e) = index(&[("red kettle boils", 10.0), ("red pan", 20.0)]);
        let q = e.embed_one("red kettle").unwrap();
        let s = RetrievalSettings {
            tau: 1.0,
            ..Default::default()
        };
        assert!(retrieve_channel("red kettle", &q, &idx, &anchors(), &s, 100.0).unwrap().is_empty());
    }

    #[test]
    fn dense_and_fused_modes() {
        let (idx, e) = index(&[
            ("red kettle boils", 10.0),
            ("red kettle boils again", 60.0),
            ("blue door opens", 20.0),
        ]);
        let q = e.embed_one("red kettle").unwrap();
        for fusion in [Fusion::Dense, Fusion::MaxFuse] {
            let s = RetrievalSettings {
                fusion,
                ..Default::default()
            };
            let hits = retrieve_channel("red kettle", &q, &idx, &anchors(), &s, 100.0).unwrap();
            assert!(!hits.is_empty(), "{fusion:?}");
            let total: f64 = hits.iter().map(|h| h.score).sum();
            assert!(total <= 1.0 + 1e-9);
            assert!(hits.iter().all(|h| h.snippet.text.contains("kettle")));
        }
    }

    #[test]
    fn min_max_edges() {
        assert_eq!(min_max(&[2.0, 4.0, 3.0]), [0.0, 1.0, 0.5]);
        assert_eq!(min_max(&[0.7, 0.7]), [1.0, 1.0]);
        assert_eq!(min_max(&[0.0, 0.0]), [0.0, 0.0]);
    }

    #[test]
    fn fusion_parse() {
        assert_eq!("max_fuse".parse::<Fusion>().unwrap(), Fusion::MaxFuse);
        assert!("bogus".parse::<Fusion>().is_err());
    }
}
