//! Semantic-entropy frame weighting and keyframe selection.
//!
//! Each sampled frame's similarity to the detection request is turned into a
//! probability `p_t`, its entropy term `H_t = -p_t ln p_t`, and a weight
//! `α_t = H_t / Σ H`. Frames whose raw similarity clears the threshold are
//! ranked by `α_t · s_t` inside equal time bins and drawn round-robin across
//! bins, so the selection stays spread over the whole video.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{Endpoint, JsonClient};
use crate::ingest::{parse_detection_jsonl, DetectedObject, DetectionRecord};
use crate::model::FrameRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameWeighting {
    pub sims: Vec<f64>,
    pub probs: Vec<f64>,
    pub entropy: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// Entropy weights with natural logarithms.
pub fn weight_frames(sims: &[f64]) -> FrameWeighting {
    weight_frames_in_base(sims, std::f64::consts::E)
}

/// Entropy weights with logarithms in `base`. `α` does not depend on the base.
pub fn weight_frames_in_base(sims: &[f64], base: f64) -> FrameWeighting {
    let n = sims.len();
    let clipped: Vec<f64> = sims.iter().map(|s| s.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let probs: Vec<f64> = if total > 0.0 {
        clipped.iter().map(|s| s / total).collect()
    } else {
        vec![0.0; n]
    };
    let ln_base = base.ln();
    let entropy: Vec<f64> = probs
        .iter()
        .map(|&p| if p > 0.0 { -p * p.ln() / ln_base } else { 0.0 })
        .collect();
    let h_total: f64 = entropy.iter().sum();
    let alpha = if h_total > 0.0 {
        entropy.iter().map(|h| h / h_total).collect()
    } else {
        vec![1.0 / n as f64; n]
    };
    FrameWeighting {
        sims: sims.to_vec(),
        probs,
        entropy,
        alpha,
    }
}

/// Weighting with every `α_t = 1/n`, used when entropy weighting is switched off.
pub fn uniform_weights(sims: &[f64]) -> FrameWeighting {
    let mut w = weight_frames(sims);
    let n = sims.len() as f64;
    w.alpha.iter_mut().for_each(|a| *a = 1.0 / n);
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    /// Minimum raw similarity for a frame to be a candidate.
    pub sim_threshold: f64,
    pub max_frames: usize,
    pub n_bins: usize,
    /// When false, `α` is uniform and ranking falls back to raw similarity.
    pub entropy_weighting: bool,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            sim_threshold: 0.3,
            max_frames: 16,
            n_bins: 8,
            entropy_weighting: true,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_frames == 0 || self.n_bins == 0 {
            return Err(Error::Config("max_frames and n_bins must be positive".into()));
        }
        if self.n_bins > self.max_frames {
            return Err(Error::Config(format!(
                "n_bins ({}) must not exceed max_frames ({})",
                self.n_bins, self.max_frames
            )));
        }
        Ok(())
    }
}

/// Picks keyframes: threshold on raw similarity, rank by `α·s` within time
/// bins over `[0, duration_s]`, then take one per bin per round until
/// `max_frames`. Output is sorted by time.
pub fn select_keyframes(
    frames: &[FrameRecord],
    sims: &[f64],
    cfg: &SelectorConfig,
    duration_s: f64,
) -> Result<Vec<FrameRecord>> {
    if frames.len() != sims.len() {
        return Err(Error::LengthMismatch {
            frames: frames.len(),
            sims: sims.len(),
        });
    }
    cfg.validate()?;
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    let weights = if cfg.entropy_weighting {
        weight_frames(sims)
    } else {
        uniform_weights(sims)
    };

    let mut bins: Vec<Vec<(f64, usize)>> = vec![Vec::new(); cfg.n_bins];
    for (i, f) in frames.iter().enumerate() {
        if sims[i] < cfg.sim_threshold {
            continue;
        }
        let bin = ((f.t / duration_s) * cfg.n_bins as f64).floor();
        let bin = (bin.max(0.0) as usize).min(cfg.n_bins - 1);
        bins[bin].push((weights.alpha[i] * sims[i], i));
    }
    for bin in &mut bins {
        bin.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(frames[a.1].t.total_cmp(&frames[b.1].t))
                .then(frames[a.1].frame_index.cmp(&frames[b.1].frame_index))
        });
    }

    let mut picked = Vec::new();
    let mut round = 0;
    while picked.len() < cfg.max_frames {
        let mut took_any = false;
        for bin in &bins {
            if picked.len() == cfg.max_frames {
                break;
            }
            if let Some(&(_, i)) = bin.get(round) {
                picked.push(i);
                took_any = true;
            }
        }
        if !took_any {
            break;
        }
        round += 1;
    }
    let mut out: Vec<FrameRecord> = picked.into_iter().map(|i| frames[i].clone()).collect();
    out.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.frame_index.cmp(&b.frame_index)));
    Ok(out)
}

/// Runs object detection on frames.
pub trait DetectorProvider: Send + Sync {
    /// One record per input frame, in input order.
    fn detect(&self, frames: &[FrameRecord]) -> Result<Vec<DetectionRecord>>;
}

pub fn detect_on_keyframes(
    keyframes: &[FrameRecord],
    detector: &dyn DetectorProvider,
) -> Result<Vec<DetectionRecord>> {
    if keyframes.is_empty() {
        return Ok(Vec::new());
    }
    let out = detector.detect(keyframes)?;
    if out.len() != keyframes.len() {
        return Err(Error::provider(
            format!("detector returned {} records for {} frames", out.len(), keyframes.len()),
            false,
        ));
    }
    Ok(out)
}

/// Serves detections from a precomputed DetectionRecord JSONL, by frame index.
/// Frames with no fixture record get an empty object list.
#[derive(Debug, Clone, Default)]
pub struct FixtureDetector {
    by_frame: HashMap<u64, DetectionRecord>,
}

impl FixtureDetector {
    pub fn new(records: impl IntoIterator<Item = DetectionRecord>) -> Self {
        FixtureDetector {
            by_frame: records.into_iter().map(|r| (r.frame_index, r)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(parse_detection_jsonl(&bytes)?.items))
    }
}

impl DetectorProvider for FixtureDetector {
    fn detect(&self, frames: &[FrameRecord]) -> Result<Vec<DetectionRecord>> {
        Ok(frames
            .iter()
            .map(|f| DetectionRecord {
                frame_index: f.frame_index,
                t: f.t,
                objects: self
                    .by_frame
                    .get(&f.frame_index)
                    .map(|r| r.objects.clone())
                    .unwrap_or_default(),
            })
            .collect())
    }
}

/// Deterministic detector for tests and demos.
///
/// Frame `i` yields `1 + i % 3` objects; object `j` takes label
/// `LABELS[(i + 2j) % LABELS.len()]`, a box derived from `i` and `j`, and
/// confidence `0.5 + 0.1·((i + j) % 5)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubDetector;

impl StubDetector {
    pub const LABELS: [&'static str; 6] = ["person", "car", "dog", "sign", "cup", "laptop"];
}

impl DetectorProvider for StubDetector {
    fn detect(&self, frames: &[FrameRecord]) -> Result<Vec<DetectionRecord>> {
        Ok(frames
            .iter()
            .map(|f| {
                let i = f.frame_index as usize;
                let objects = (0..1 + i % 3)
                    .map(|j| {
                        let x1 = ((i * 7 + j * 13) % 50) as f64 / 100.0;
                        let y1 = ((i * 11 + j * 5) % 50) as f64 / 100.0;
                        DetectedObject {
                            label: Self::LABELS[(i + 2 * j) % Self::LABELS.len()].to_string(),
                            bbox: [x1, y1, x1 + 0.25, y1 + 0.4],
                            confidence: 0.5 + 0.1 * ((i + j) % 5) as f64,
                        }
                    })
                    .collect();
                DetectionRecord {
                    frame_index: f.frame_index,
                    t: f.t,
                    objects,
                }
            })
            .collect())
    }
}

#[derive(Serialize)]
struct DetectRequest {
    frame_ids: Vec<String>,
}

#[derive(Deserialize)]
struct DetectResponse {
    frames: Vec<DetectFrame>,
}

#[derive(Deserialize)]
struct DetectFrame {
    #[serde(default)]
    objects: Vec<DetectedObject>,
}

/// Remote detector: `POST {base_url}/detect` with `{"frame_ids": [...]}`,
/// answering `{"frames": [{"objects": [...]}, ...]}` in request order.
pub struct HttpDetector {
    client: JsonClient,
}

impl HttpDetector {
    pub fn new(endpoint: Endpoint) -> Result<Self> {
        Ok(HttpDetector {
            client: JsonClient::new(endpoint)?,
        })
    }
}

impl DetectorProvider for HttpDetector {
    fn detect(&self, frames: &[FrameRecord]) -> Result<Vec<DetectionRecord>> {
        let req = DetectRequest {
            frame_ids: frames.iter().map(FrameRecord::key).collect(),
        };
        let resp: DetectResponse = self.client.post("/detect", &req)?;
        if resp.frames.len() != frames.len() {
            return Err(Error::provider(
                format!("expected {} frames, got {}", frames.len(), resp.frames.len()),
                false,
            ));
        }
        Ok(frames
            .iter()
            .zip(resp.frames)
            .map(|(f, d)| DetectionRecord {
                frame_index: f.frame_index,
                t: f.t,
                objects: d.objects,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(ts: &[f64]) -> Vec<FrameRecord> {
        ts.iter()
            .enumerate()
            .map(|(i, &t)| FrameRecord {
                frame_index: i as u64,
                t,
                embedding_ref: None,
            })
            .collect()
    }

    #[test]
    fn equal_sims_give_uniform_weights() {
        let w = weight_frames(&[0.4; 5]);
        for (p, a) in w.probs.iter().zip(&w.alpha) {
            assert!((p - 0.2).abs() < 1e-12);
            assert!((a - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn two_frame_weights() {
        let w = weight_frames(&[0.6, 0.2]);
        assert!((w.probs[0] - 0.75).abs() < 1e-12);
        assert!((w.entropy[0] - 0.215762).abs() < 1e-6);
        assert!((w.entropy[1] - 0.346574).abs() < 1e-6);
        assert!((w.alpha[0] - 0.383_688_546_6).abs() < 1e-9);
        assert!((w.alpha[1] - 0.616_311_453_4).abs() < 1e-9);
    }

    #[test]
    fn degenerate_weights_fall_back_to_uniform() {
        let w = weight_frames(&[0.7]);
        assert_eq!((w.probs[0], w.entropy[0], w.alpha[0]), (1.0, 0.0, 1.0));
        let w = weight_frames(&[-0.2, 0.0, 0.5]);
        assert_eq!(w.probs, [0.0, 0.0, 1.0]);
        assert!(w.alpha.iter().all(|&a| (a - 1.0 / 3.0).abs() < 1e-15));
        let w = weight_frames(&[-1.0, -0.5]);
        assert_eq!(w.alpha, [0.5, 0.5]);
    }

    #[test]
    fn all_below_threshold_selects_nothing() {
        let f = frames(&[1.0, 2.0, 3.0]);
        let sel = select_keyframes(&f, &[0.1, 0.2, 0.29], &SelectorConfig::default(), 4.0).unwrap();
        assert!(sel.is_empty());
    }

    #[test]
    fn one_frame_per_bin_when_symmetric() {
        let ts: Vec<f64> = (0..32).map(|i| i as f64 + 0.5).collect();
        let f = frames(&ts);
        let cfg = SelectorConfig {
            max_frames: 8,
            n_bins: 8,
            ..Default::default()
        };
        let sel = select_keyframes(&f, &[0.5; 32], &cfg, 32.0).unwrap();
        assert_eq!(sel.len(), 8);
        let bins: Vec<usize> = sel.iter().map(|f| (f.t / 4.0) as usize).collect();
        assert_eq!(bins, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn length_mismatch() {
        let f = frames(&[1.0]);
        assert!(matches!(
            select_keyframes(&f, &[0.5, 0.5], &SelectorConfig::default(), 2.0),
            Err(Error::LengthMismatch { frames: 1, sims: 2 })
        ));
    }

    #[test]
    fn fixture_detector_attaches_times() {
        let det = FixtureDetector::new([DetectionRecord {
            frame_index: 1,
            t: 99.0,
            objects: vec![DetectedObject {
                label: "car".into(),
                bbox: [0.1, 0.1, 0.2, 0.2],
                confidence: 0.7,
            }],
        }]);
        let f = frames(&[0.0, 4.0]);
        let out = detect_on_keyframes(&f, &det).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[0].objects.is_empty());
        assert_eq!(out[1].t, 4.0);
        assert_eq!(out[1].objects[0].label, "car");
        assert!(detect_on_keyframes(&[], &det).unwrap().is_empty());
    }
}
