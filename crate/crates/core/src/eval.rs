//! Synthetic needle corpora and the metrics computed over them.
//!
//! A corpus holds one target snippet ("needle") at a known time and several
//! lexically identical copies at times far from it, among random background
//! text. Lexical scoring alone cannot tell them apart; only the temporal
//! anchors can.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{FixtureDetector, StubDetector};
use crate::ingest::{CaptionedFrame, DetectedObject, DetectionRecord};
use crate::model::{Channel, QueryRequest, RetrievalRequest, Snippet, VideoRecord};
use crate::pipeline::{
    augment_query, compose, AblationFlags, AugmentedQuery, ChannelIndex, Engine, EngineSettings,
    StubLvlm,
};
use crate::text_index::{tokenize, Bm25Params};
use crate::vector_index::{EmbeddingProvider, FlatVectorIndex, HashEmbedder};

/// Length in seconds of every generated snippet.
pub const SNIPPET_SPAN_S: f64 = 2.0;

/// The threshold grid swept by default.
pub const DEFAULT_TAUS: [f64; 7] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 1.0];

fn default_n_frames() -> usize {
    crate::model::DEFAULT_SAMPLED_FRAMES
}

fn default_n_partial() -> usize {
    8
}

fn default_background_words() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub duration_s: f64,
    /// Background speech snippets.
    pub n_snippets: usize,
    /// Copies of the needle placed at least a quarter of the video away from it,
    /// with non-overlapping time spans.
    pub n_duplicates: usize,
    pub needle_time: f64,
    pub vocab_size: usize,
    pub query_terms: Vec<String>,
    #[serde(default = "default_n_frames")]
    pub n_frames: usize,
    /// On-screen text snippets; defaults to a quarter of `n_snippets`.
    #[serde(default)]
    pub n_ocr_snippets: Option<usize>,
    /// Snippets holding some but not all query terms, split across ASR and OCR.
    #[serde(default = "default_n_partial")]
    pub n_partial: usize,
    /// Background words appended to the query terms in the needle.
    #[serde(default = "default_background_words")]
    pub needle_background_words: usize,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_duplicates < 1 {
            return bad("n_duplicates must be at least 1".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 10.0 * SNIPPET_SPAN_S) {
            return bad(format!("duration_s must be at least {}", 10.0 * SNIPPET_SPAN_S));
        }
        if !(0.0..=self.duration_s).contains(&self.needle_time) {
            return bad(format!(
                "needle_time {} outside [0, {}]",
                self.needle_time, self.duration_s
            ));
        }
        if self.vocab_size < 8 {
            return bad("vocab_size must be at least 8".into());
        }
        if self.query_tokens().is_empty() {
            return bad("query_terms has no searchable words".into());
        }
        if self.n_frames == 0 {
            return bad("n_frames must be positive".into());
        }
        Ok(())
    }

    pub fn query_tokens(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in self.query_terms.iter().flat_map(|q| tokenize(q)) {
            if !out.contains(&t) {
                out.push(t);
            }
        }
        out
    }

    pub fn query_text(&self) -> String {
        self.query_tokens().join(" ")
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SyntheticSpec {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub needle_id: String,
    pub needle_time: f64,
    pub duplicate_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub spec: SyntheticSpec,
    pub video: VideoRecord,
    pub asr: Vec<Snippet>,
    pub ocr: Vec<Snippet>,
    pub frames: Vec<CaptionedFrame>,
    pub detections: Vec<DetectionRecord>,
    pub truth: GroundTruth,
}

const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// The `i`-th background word: three consonant-vowel syllables from the digits of `i`.
fn vocab_word(i: usize) -> String {
    let base = ONSETS.len() * VOWELS.len();
    let mut n = i;
    let mut w = String::new();
    for _ in 0..3 {
        let d = n % base;
        n /= base;
        w.push_str(ONSETS[d / VOWELS.len()]);
        w.push_str(VOWELS[d % VOWELS.len()]);
    }
    if n > 0 {
        w.push_str(&n.to_string());
    }
    w
}

fn vocabulary(size: usize, exclude: &[String]) -> Vec<String> {
    (0..)
        .map(vocab_word)
        .filter(|w| !exclude.contains(w))
        .take(size)
        .collect()
}

fn pick_words(rng: &mut ChaCha8Rng, vocab: &[String], n: usize) -> Vec<String> {
    (0..n)
        .map(|_| vocab[rng.random_range(0..vocab.len())].clone())
        .collect()
}

fn span_at(t_mid: f64, duration: f64) -> (f64, f64) {
    let start = (t_mid - SNIPPET_SPAN_S / 2.0).clamp(0.0, duration - SNIPPET_SPAN_S);
    (start, start + SNIPPET_SPAN_S)
}

/// Intervals of allowed duplicate midpoints.
fn duplicate_region(spec: &SyntheticSpec) -> Vec<(f64, f64)> {
    let d = spec.duration_s;
    let h = SNIPPET_SPAN_S / 2.0;
    let gap = d / 4.0;
    [(h, spec.needle_time - gap), (spec.needle_time + gap, d - h)]
        .into_iter()
        .filter(|(a, b)| b >= a)
        .collect()
}

/// Generates a corpus; the same spec always yields the same corpus.
pub fn gen_corpus(spec: &SyntheticSpec) -> Result<Corpus> {
    spec.validate()?;
    let region = duplicate_region(spec);
    let capacity: usize = region
        .iter()
        .map(|(a, b)| ((b - a) / SNIPPET_SPAN_S).floor() as usize + 1)
        .sum();
    if capacity < spec.n_duplicates {
        return Err(Error::InfeasibleSpec(format!(
            "{} non-overlapping duplicates do not fit at least {} s from the needle at {} (room for {capacity})",
            spec.n_duplicates,
            spec.duration_s / 4.0,
            spec.needle_time
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.duration_s;
    let query = spec.query_tokens();
    let vocab = vocabulary(spec.vocab_size, &query);
    let video = VideoRecord::new(format!("synthetic-{}", spec.seed), d)?;
    let random_mid = |rng: &mut ChaCha8Rng| rng.random_range(SNIPPET_SPAN_S / 2.0..=d - SNIPPET_SPAN_S / 2.0);

    let mut needle_words = query.clone();
    needle_words.extend(pick_words(&mut rng, &vocab, spec.needle_background_words));
    let needle_text = needle_words.join(" ");
    let needle_len = needle_words.len();

    // (text, t_mid, role) with role 0 = needle, 1 = duplicate, 2 = other
    let mut asr: Vec<(String, f64, u8)> = vec![(needle_text.clone(), spec.needle_time, 0)];
    let mut slots = Vec::new();
    for &(a, b) in &region {
        let n = ((b - a) / SNIPPET_SPAN_S).floor() as usize + 1;
        let offset = rng.random_range(0.0..=(b - a) - (n - 1) as f64 * SNIPPET_SPAN_S);
        slots.extend((0..n).map(|j| a + offset + j as f64 * SNIPPET_SPAN_S));
    }
    for &t in slots.choose_multiple(&mut rng, spec.n_duplicates) {
        asr.push((needle_text.clone(), t, 1));
    }
    for _ in 0..spec.n_snippets {
        let n = rng.random_range(5..=9);
        let t = random_mid(&mut rng);
        asr.push((pick_words(&mut rng, &vocab, n).join(" "), t, 2));
    }
    let mut ocr: Vec<(String, f64)> = Vec::new();
    for _ in 0..spec.n_ocr_snippets.unwrap_or(spec.n_snippets / 4) {
        let n = rng.random_range(2..=5);
        let t = random_mid(&mut rng);
        ocr.push((pick_words(&mut rng, &vocab, n).join(" "), t));
    }
    for i in 0..spec.n_partial {
        let k = rng.random_range(1..=query.len().saturating_sub(1).max(1)).min(query.len());
        let mut terms: Vec<String> = query.choose_multiple(&mut rng, k).cloned().collect();
        terms.extend(pick_words(&mut rng, &vocab, needle_len.saturating_sub(k).max(1)));
        let t = random_mid(&mut rng);
        if i % 2 == 0 {
            asr.push((terms.join(" "), t, 2));
        } else {
            ocr.push((terms.join(" "), t));
        }
    }

    let mut asr_order: Vec<usize> = (0..asr.len()).collect();
    asr_order.shuffle(&mut rng);
    let mut truth = GroundTruth {
        needle_id: String::new(),
        needle_time: spec.needle_time,
        duplicate_ids: Vec::new(),
    };
    let mut asr_snippets = Vec::with_capacity(asr.len());
    for (slot, (text, t, role)) in asr_order.into_iter().zip(asr) {
        let id = format!("asr-{slot:05}");
        let (start, end) = span_at(t, d);
        match role {
            0 => truth.needle_id = id.clone(),
            1 => truth.duplicate_ids.push(id.clone()),
            _ => {}
        }
        asr_snippets.push(Snippet::new(id, Channel::Asr, text, start, end));
    }
    asr_snippets.sort_by(|a, b| a.id.cmp(&b.id));
    truth.duplicate_ids.sort();

    let mut ocr_order: Vec<usize> = (0..ocr.len()).collect();
    ocr_order.shuffle(&mut rng);
    let mut ocr_snippets: Vec<Snippet> = ocr_order
        .into_iter()
        .zip(ocr)
        .map(|(slot, (text, t))| {
            let (start, end) = span_at(t, d);
            Snippet::new(format!("ocr-{slot:05}"), Channel::Ocr, text, start, end)
        })
        .collect();
    ocr_snippets.sort_by(|a, b| a.id.cmp(&b.id));

    let records = video.uniform_frames(spec.n_frames);
    let needle_frame = records
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1.t - spec.needle_time)
                .abs()
                .total_cmp(&(b.1.t - spec.needle_time).abs())
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut frames = Vec::with_capacity(records.len());
    let mut detections = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let mut words = if i == needle_frame {
            let mut w = query.clone();
            w.extend(pick_words(&mut rng, &vocab, 1));
            w
        } else if i.abs_diff(needle_frame) == 1 {
            let mut w = vec![query[0].clone()];
            w.extend(pick_words(&mut rng, &vocab, 3));
            w
        } else {
            pick_words(&mut rng, &vocab, 4)
        };
        words.dedup();
        frames.push(CaptionedFrame {
            frame_index: rec.frame_index,
            t: rec.t,
            caption: words.join(" "),
        });

        let mut labels: Vec<String> = (0..rng.random_range(1..=3))
            .map(|_| StubDetector::LABELS[rng.random_range(0..StubDetector::LABELS.len())].to_string())
            .collect();
        if i == needle_frame {
            labels.extend(query.iter().cloned());
        }
        let objects = labels
            .into_iter()
            .map(|label| {
                let x1 = rng.random_range(0..60) as f64 / 100.0;
                let y1 = rng.random_range(0..60) as f64 / 100.0;
                let w = rng.random_range(10..=40) as f64 / 100.0;
                let h = rng.random_range(10..=40) as f64 / 100.0;
                DetectedObject {
                    label,
                    bbox: [x1, y1, x1 + w, y1 + h],
                    confidence: rng.random_range(50..=99) as f64 / 100.0,
                }
            })
            .collect();
        detections.push(DetectionRecord {
            frame_index: rec.frame_index,
            t: rec.t,
            objects,
        });
    }

    Ok(Corpus {
        spec: spec.clone(),
        video,
        asr: asr_snippets,
        ocr: ocr_snippets,
        frames,
        detections,
        truth,
    })
}

/// Retrieval settings and embedders used to evaluate a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub settings: EngineSettings,
    pub bm25: Bm25Params,
    pub embed_dim: usize,
    pub text_seed: u64,
    pub frame_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            settings: EngineSettings::default(),
            bm25: Bm25Params::default(),
            embed_dim: 128,
            text_seed: 7,
            frame_seed: 11,
        }
    }
}

/// Indexes a corpus with hash embedders, a fixture detector, and the stub model.
pub fn build_engine(corpus: &Corpus, cfg: &EvalConfig) -> Result<Engine> {
    let text = HashEmbedder::new(cfg.embed_dim, cfg.text_seed);
    let frame = HashEmbedder::new(cfg.embed_dim, cfg.frame_seed);
    let mut channels = std::collections::BTreeMap::new();
    channels.insert(
        Channel::Asr,
        ChannelIndex::build(Channel::Asr, corpus.asr.clone(), cfg.bm25, &text)?,
    );
    channels.insert(
        Channel::Ocr,
        ChannelIndex::build(Channel::Ocr, corpus.ocr.clone(), cfg.bm25, &text)?,
    );
    let captions: Vec<String> = corpus.frames.iter().map(|f| f.caption.clone()).collect();
    let mut frame_index = FlatVectorIndex::new(cfg.embed_dim);
    let frames: Vec<_> = corpus.frames.iter().map(CaptionedFrame::record).collect();
    for (f, v) in frames.iter().zip(frame.embed(&captions)?) {
        frame_index.add(&f.key(), &v)?;
    }
    Ok(Engine {
        video: corpus.video.clone(),
        frames,
        frame_index,
        channels,
        text_embedder: Arc::new(text),
        frame_embedder: Arc::new(frame),
        detector: Arc::new(FixtureDetector::new(corpus.detections.clone())),
        lvlm: Arc::new(StubLvlm),
        settings: cfg.settings.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall_at_1: f64,
    pub recall_at_k: f64,
    pub mrr: f64,
    /// Distance from the top speech hit to the needle; the video duration when nothing is retrieved.
    pub mean_time_error_s: f64,
    /// Whitespace tokens of all retained evidence, scene graph included.
    pub tokens_retained: usize,
    /// Whitespace tokens of retrieved speech and on-screen text only.
    pub retrieved_text_tokens: usize,
    /// Tokens of the composed prompt.
    pub prompt_tokens: usize,
    pub wall_time_ms: f64,
}

impl EvalReport {
    /// The report with timing zeroed, for comparisons across runs.
    pub fn untimed(&self) -> Self {
        EvalReport {
            wall_time_ms: 0.0,
            ..self.clone()
        }
    }
}

/// Runs one query against an indexed corpus.
pub fn evaluate(engine: &Engine, corpus: &Corpus, flags: &AblationFlags) -> Result<EvalReport> {
    let started = Instant::now();
    let query = QueryRequest::new(corpus.spec.query_text(), &corpus.video.video_id)?;
    let request = RetrievalRequest::broadcast(&query.query_text);
    let retrieval = engine.retrieve(&query, &request, flags)?;
    let augmented = if flags.context {
        augment_query(engine.lvlm.as_ref(), &query, engine.settings.context_budget)
    } else {
        AugmentedQuery::original_only(&query.query_text)
    };
    let evidence = retrieval.evidence();
    let (tokens_retained, retrieved_text_tokens) =
        (evidence.token_estimate, evidence.retrieved_tokens());
    let bundle = compose(&retrieval.keyframes, evidence, augmented, engine.settings.budget_tokens)?;
    let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;

    // scores are normalized per channel pool, so ranks are only comparable within one channel
    let hits = retrieval.hits(Channel::Asr);
    let k = engine.settings.retrieval.rescore.top_k;
    let rank = hits
        .iter()
        .position(|h| h.snippet.id == corpus.truth.needle_id)
        .map(|p| p + 1);
    let hit_within = |n: usize| if rank.is_some_and(|r| r <= n) { 1.0 } else { 0.0 };
    Ok(EvalReport {
        recall_at_1: hit_within(1),
        recall_at_k: hit_within(k),
        mrr: rank.map_or(0.0, |r| 1.0 / r as f64),
        mean_time_error_s: hits.first().map_or(corpus.video.duration_s, |h| {
            (h.snippet.t_mid() - corpus.truth.needle_time).abs()
        }),
        tokens_retained,
        retrieved_text_tokens,
        prompt_tokens: bundle.total_tokens(),
        wall_time_ms,
    })
}

/// Indexes the corpus and evaluates it with `flags` applied.
pub fn run_eval(corpus: &Corpus, cfg: &EvalConfig, flags: &AblationFlags) -> Result<EvalReport> {
    evaluate(&build_engine(corpus, cfg)?, corpus, flags)
}

/// One report per dense acceptance threshold; `taus` must be ascending.
pub fn sweep_threshold(
    corpus: &Corpus,
    cfg: &EvalConfig,
    taus: &[f64],
    flags: &AblationFlags,
) -> Result<Vec<(f64, EvalReport)>> {
    if taus.windows(2).any(|w| w[0].partial_cmp(&w[1]).is_none_or(|o| o.is_gt())) {
        return Err(Error::Config("thresholds must be sorted ascending".into()));
    }
    let mut engine = build_engine(corpus, cfg)?;
    taus.iter()
        .map(|&tau| {
            engine.settings.retrieval.tau = tau;
            Ok((tau, evaluate(&engine, corpus, flags)?))
        })
        .collect()
}

/// One evaluated (seed, threshold) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub tau: f64,
    pub report: EvalReport,
}

/// Evaluates seeds `spec.seed .. spec.seed + n_seeds` at every threshold.
///
/// Seeds run on separate threads; output is ordered by seed, then threshold.
pub fn run_seeds(
    spec: &SyntheticSpec,
    cfg: &EvalConfig,
    taus: &[f64],
    flags: &AblationFlags,
    n_seeds: usize,
) -> Result<Vec<SeedRun>> {
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| spec.seed + i).collect();
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get()).min(seeds.len().max(1));
    let chunks: Vec<&[u64]> = seeds.chunks(seeds.len().div_ceil(workers).max(1)).collect();
    let per_chunk: Vec<Result<Vec<SeedRun>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|chunk| {
                scope.spawn(move || {
                    let mut out = Vec::new();
                    for &seed in *chunk {
                        let corpus = gen_corpus(&spec.with_seed(seed))?;
                        for (tau, report) in sweep_threshold(&corpus, cfg, taus, flags)? {
                            out.push(SeedRun { seed, tau, report });
                        }
                    }
                    Ok(out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("eval worker panicked"))
            .collect()
    });
    let mut runs = Vec::with_capacity(seeds.len() * taus.len());
    for chunk in per_chunk {
        runs.extend(chunk?);
    }
    Ok(runs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub stddev: f64,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Stat {
                mean: 0.0,
                stddev: 0.0,
            };
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let stddev = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, stddev }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub tau: f64,
    pub n: usize,
    pub recall_at_1: Stat,
    pub recall_at_k: Stat,
    pub mrr: Stat,
    pub mean_time_error_s: Stat,
    pub tokens_retained: Stat,
    pub retrieved_text_tokens: Stat,
    pub wall_time_ms: Stat,
}

/// Mean and spread per threshold, in threshold order.
pub fn aggregate(runs: &[SeedRun]) -> Vec<Aggregate> {
    let mut taus: Vec<f64> = runs.iter().map(|r| r.tau).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus.into_iter()
        .map(|tau| {
            let cell: Vec<&EvalReport> =
                runs.iter().filter(|r| r.tau == tau).map(|r| &r.report).collect();
            let stat = |f: fn(&EvalReport) -> f64| Stat::of(cell.iter().map(|r| f(r)));
            Aggregate {
                tau,
                n: cell.len(),
                recall_at_1: stat(|r| r.recall_at_1),
                recall_at_k: stat(|r| r.recall_at_k),
                mrr: stat(|r| r.mrr),
                mean_time_error_s: stat(|r| r.mean_time_error_s),
                tokens_retained: stat(|r| r.tokens_retained as f64),
                retrieved_text_tokens: stat(|r| r.retrieved_text_tokens as f64),
                wall_time_ms: stat(|r| r.wall_time_ms),
            }
        })
        .collect()
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        s.push('\n');
        s
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

/// Aligned text table: one row per run, then mean and stddev rows per threshold.
pub fn render_table(runs: &[SeedRun]) -> String {
    let header = ["tau", "seed", "r@1", "r@k", "mrr", "time_err_s", "tokens", "text_tokens", "ms"];
    let mut rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                format!("{:.2}", r.tau),
                r.seed.to_string(),
                format!("{:.3}", r.report.recall_at_1),
                format!("{:.3}", r.report.recall_at_k),
                format!("{:.3}", r.report.mrr),
                format!("{:.2}", r.report.mean_time_error_s),
                r.report.tokens_retained.to_string(),
                r.report.retrieved_text_tokens.to_string(),
                format!("{:.1}", r.report.wall_time_ms),
            ]
        })
        .collect();
    for a in aggregate(runs) {
        for (label, pick) in [("mean", 0usize), ("std", 1)] {
            let f = |s: Stat, digits: usize| {
                format!("{:.digits$}", if pick == 0 { s.mean } else { s.stddev })
            };
            rows.push(vec![
                format!("{:.2}", a.tau),
                label.to_string(),
                f(a.recall_at_1, 3),
                f(a.recall_at_k, 3),
                f(a.mrr, 3),
                f(a.mean_time_error_s, 2),
                f(a.tokens_retained, 1),
                f(a.retrieved_text_tokens, 1),
                f(a.wall_time_ms, 1),
            ]);
        }
    }
    table(&header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec() -> SyntheticSpec {
        SyntheticSpec {
            seed: 3,
            duration_s: 600.0,
            n_snippets: 120,
            n_duplicates: 20,
            needle_time: 330.0,
            vocab_size: 200,
            query_terms: vec!["violet".into(), "lantern".into(), "harbor".into()],
            n_frames: 64,
            n_ocr_snippets: None,
            n_partial: 8,
            needle_background_words: 3,
        }
    }

    #[test]
    fn vocab_words_are_distinct() {
        let v = vocabulary(500, &[]);
        let mut s = v.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 500);
        assert!(v.iter().all(|w| tokenize(w) == [w.clone()]));
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(gen_corpus(&spec()).unwrap(), gen_corpus(&spec()).unwrap());
        assert_ne!(gen_corpus(&spec()).unwrap(), gen_corpus(&spec().with_seed(4)).unwrap());
    }

    #[test]
    fn rejects_zero_duplicates() {
        let s = SyntheticSpec {
            n_duplicates: 0,
            ..spec()
        };
        assert!(matches!(gen_corpus(&s), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn duplicates_are_far_and_identical() {
        let s = SyntheticSpec {
            duration_s: 100.0,
            needle_time: 50.0,
            ..spec()
        };
        let c = gen_corpus(&s).unwrap();
        let needle = c.asr.iter().find(|x| x.id == c.truth.needle_id).unwrap();
        assert_eq!(c.truth.duplicate_ids.len(), 20);
        for id in &c.truth.duplicate_ids {
            let d = c.asr.iter().find(|x| &x.id == id).unwrap();
            assert_eq!(d.text, needle.text);
            assert!((d.t_mid() - 50.0).abs() >= 25.0);
        }
    }

    #[test]
    fn infeasible_when_no_room() {
        // [1, 25] and [75, 99] hold 13 two-second slots each
        let s = SyntheticSpec {
            duration_s: 100.0,
            needle_time: 50.0,
            n_duplicates: 27,
            ..spec()
        };
        assert!(gen_corpus(&SyntheticSpec { n_duplicates: 26, ..s.clone() }).is_ok());
        assert!(matches!(gen_corpus(&s), Err(Error::InfeasibleSpec(_))));
    }

    #[test]
    fn finds_the_needle_with_defaults() {
        let c = gen_corpus(&spec()).unwrap();
        let r = run_eval(&c, &EvalConfig::default(), &AblationFlags::default()).unwrap();
        assert_eq!(r.recall_at_1, 1.0);
        assert!(r.recall_at_1 <= r.recall_at_k);
    }

    #[test]
    fn sweep_is_monotone() {
        let c = gen_corpus(&spec()).unwrap();
        let out = sweep_threshold(&c, &EvalConfig::default(), &DEFAULT_TAUS, &AblationFlags::default()).unwrap();
        assert_eq!(out.len(), 7);
        for w in out.windows(2) {
            assert!(w[0].1.tokens_retained >= w[1].1.tokens_retained);
        }
        assert_eq!(out.last().unwrap().1.retrieved_text_tokens, 0);
        assert!(sweep_threshold(&c, &EvalConfig::default(), &[0.5, 0.1], &AblationFlags::default()).is_err());
    }

    #[test]
    fn stat_matches_hand_values() {
        let s = Stat::of([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.stddev - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(Stat::of([7.0]).stddev, 0.0);
    }

    #[test]
    fn table_has_aggregate_rows() {
        let runs = run_seeds(&spec(), &EvalConfig::default(), &[0.3], &AblationFlags::default(), 3).unwrap();
        assert_eq!(runs.len(), 3);
        let t = render_table(&runs);
        assert_eq!(t.lines().count(), 2 + 3 + 2);
        assert!(t.contains("mean") && t.contains("std"));
    }
}
