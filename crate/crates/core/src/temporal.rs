//! Temporal rescoring of retrieval candidates.
//!
//! A candidate's raw score is multiplied by an exponential decay in its time
//! distance to three query anchors (last frame, first frame, and the frame most
//! similar to the query), renormalized over the candidate pool, and the top K
//! are kept:
//!
//! ```text
//! score_i = raw_i * exp(-Σ_k λ_k |a_k - t_i|) / Σ_j raw_j * exp(-Σ_k λ_k |a_k - t_j|)
//! ```

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameRecord, ScoredSnippet, Snippet};
use crate::vector_index::FlatVectorIndex;

/// The three reference times a query is anchored to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub t_last: f64,
    pub t_first: f64,
    pub t_semantic: f64,
}

impl AnchorSet {
    pub fn as_array(&self) -> [f64; 3] {
        [self.t_last, self.t_first, self.t_semantic]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeNorm {
    /// Distances are fractions of the video duration.
    NormalizedByDuration,
    RawSeconds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    /// Penalty strength per anchor, in `AnchorSet::as_array` order.
    pub lambdas: [f64; 3],
    pub time_norm: TimeNorm,
}

impl Default for DecayParams {
    fn default() -> Self {
        DecayParams {
            lambdas: [1.0; 3],
            time_norm: TimeNorm::NormalizedByDuration,
        }
    }
}

impl DecayParams {
    /// No temporal penalty at all.
    pub fn disabled() -> Self {
        DecayParams {
            lambdas: [0.0; 3],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config(format!(
                "lambdas must be non-negative, got {:?}",
                self.lambdas
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescoreConfig {
    pub top_k: usize,
    pub pool_multiplier: usize,
}

impl Default for RescoreConfig {
    fn default() -> Self {
        RescoreConfig {
            top_k: 10,
            pool_multiplier: 3,
        }
    }
}

impl RescoreConfig {
    /// Size of the candidate pool the normalization runs over.
    pub fn pool(&self) -> usize {
        self.pool_multiplier * self.top_k
    }
}

/// First/last frame times plus the time of the frame most similar to `query_vec`.
///
/// Frames without a stored vector in `frame_index` cannot be the semantic
/// anchor. Ties go to the earliest frame.
pub fn compute_anchors(
    frames: &[FrameRecord],
    query_vec: &[f32],
    frame_index: &FlatVectorIndex,
) -> Result<AnchorSet> {
    let first = frames.first().ok_or(Error::EmptyFrameList)?;
    let last = frames.last().unwrap();
    let mut best: Option<(f64, f64)> = None;
    for f in frames {
        let Some(sim) = frame_index.similarity(query_vec, &f.key()) else {
            continue;
        };
        let better = match best {
            None => true,
            Some((bs, bt)) => sim > bs || (sim == bs && f.t < bt),
        };
        if better {
            best = Some((sim, f.t));
        }
    }
    let (_, t_semantic) = best.ok_or(Error::MissingFrameEmbeddings)?;
    Ok(AnchorSet {
        t_last: last.t,
        t_first: first.t,
        t_semantic,
    })
}

/// `exp(-Σ_k λ_k |a_k - t|)`, with times divided by `duration_s` under
/// [`TimeNorm::NormalizedByDuration`].
pub fn decay_multiplier(t: f64, anchors: &AnchorSet, p: &DecayParams, duration_s: f64) -> f64 {
    let scale = match p.time_norm {
        TimeNorm::NormalizedByDuration => 1.0 / duration_s,
        TimeNorm::RawSeconds => 1.0,
    };
    let t = t * scale;
    let exponent: f64 = anchors
        .as_array()
        .iter()
        .zip(p.lambdas)
        .map(|(a, l)| l * (a * scale - t).abs())
        .sum();
    (-exponent).exp()
}

/// Applies decay to every candidate and normalizes over the given pool.
pub fn rescore(
    candidates: Vec<(Snippet, f64)>,
    anchors: &AnchorSet,
    p: &DecayParams,
    duration_s: f64,
) -> Result<Vec<ScoredSnippet>> {
    let mut out: Vec<ScoredSnippet> = candidates
        .into_iter()
        .map(|(snippet, raw)| {
            let decay = decay_multiplier(snippet.t_mid(), anchors, p, duration_s);
            ScoredSnippet {
                snippet,
                raw_score: raw,
                decay,
                score: 0.0,
            }
        })
        .collect();
    let mass: f64 = out.iter().map(|s| s.raw_score * s.decay).sum();
    if mass.is_nan() || mass <= 0.0 {
        return Err(Error::AllZeroMass);
    }
    for s in &mut out {
        s.score = s.raw_score * s.decay / mass;
    }
    Ok(out)
}

/// Ranking order: score descending, then earlier `t_mid`, then ascending id.
pub fn rank_order(a: &ScoredSnippet, b: &ScoredSnippet) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.snippet.t_mid().total_cmp(&b.snippet.t_mid()))
        .then_with(|| a.snippet.id.cmp(&b.snippet.id))
}

pub fn top_k(mut scored: Vec<ScoredSnippet>, k: usize) -> Vec<ScoredSnippet> {
    scored.sort_by(rank_order);
    scored.truncate(k);
    scored
}
