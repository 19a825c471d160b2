//! Command implementations behind the `chronorag` binary.
//!
//! An ingested corpus directory holds `video.json`, `asr.jsonl`, `ocr.jsonl`,
//! `detections.jsonl` and `frames.jsonl`. A built index directory holds those
//! plus `asr.bm25`, `asr.vec`, `ocr.bm25`, `ocr.vec` and `frames.vec`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{EmbedderKind, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{aggregate, gen_corpus, render_table, run_seeds, SeedRun, SyntheticSpec, DEFAULT_TAUS};
use crate::ingest::{
    parse_detection_jsonl, parse_frames_jsonl, parse_snippet_jsonl, parse_srt, parse_vtt,
    write_jsonl, CaptionedFrame, DetectionRecord,
};
use crate::model::{validate_snippet, Channel, FrameRecord, QueryRequest, Snippet, VideoRecord};
use crate::pipeline::{AblationFlags, ChannelIndex, Engine, Fusion, RunOutput};
use crate::text_index::Bm25Index;
use crate::vector_index::{FlatVectorIndex, PrecomputedEmbeddings};

pub const VIDEO_FILE: &str = "video.json";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const FRAMES_FILE: &str = "frames.jsonl";
pub const FRAME_VECTORS_FILE: &str = "frames.vec";

fn store_file(ch: Channel) -> String {
    format!("{}.jsonl", ch.as_str())
}

fn bm25_file(ch: Channel) -> String {
    format!("{}.bm25", ch.as_str())
}

fn vec_file(ch: Channel) -> String {
    format!("{}.vec", ch.as_str())
}

const TEXT_CHANNELS: [Channel; 2] = [Channel::Asr, Channel::Ocr];

#[derive(Debug, Parser)]
#[command(name = "chronorag", version, about = "Temporal-aware retrieval for long-video question answering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse subtitles, OCR and detection files into per-channel stores.
    Ingest {
        /// Files, or directories whose files are all read.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build BM25 and vector indices from an ingested directory.
    Build {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Answer a question about an indexed video and print the trace.
    Answer {
        query: String,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        video_id: Option<String>,
        /// Write the trace here instead of printing it.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Evaluate retrieval on generated needle corpora.
    Eval {
        spec: PathBuf,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Sweep the dense threshold over 0, 0.1, 0.2, 0.3, 0.4, 0.5, 1.0.
        #[arg(long)]
        sweep: bool,
        /// Directory for `eval_report.json` and `eval_report.txt`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
}

/// Overrides applied on top of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Tuning {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Three comma-separated decay strengths.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub lambda: Option<Vec<f64>>,
    #[arg(long)]
    pub topk: Option<usize>,
    #[arg(long)]
    pub pool_mult: Option<usize>,
    #[arg(long)]
    pub fusion: Option<Fusion>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub no_se: bool,
    #[arg(long)]
    pub no_tw: bool,
    #[arg(long)]
    pub no_ocr: bool,
    #[arg(long)]
    pub no_asr: bool,
    #[arg(long)]
    pub no_context: bool,
}

impl Tuning {
    pub fn flags(&self) -> AblationFlags {
        AblationFlags {
            se: !self.no_se,
            tw: !self.no_tw,
            ocr: !self.no_ocr,
            asr: !self.no_asr,
            context: !self.no_context,
        }
    }

    /// The config file (or defaults) with command-line overrides applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(t) = self.tau {
            cfg.tau = t;
        }
        if let Some(l) = &self.lambda {
            if l.len() != 3 {
                return Err(Error::Config(format!("--lambda takes three values, got {}", l.len())));
            }
            [cfg.lambda0, cfg.lambda1, cfg.lambda2] = [l[0], l[1], l[2]];
        }
        if let Some(k) = self.topk {
            cfg.top_k = k;
        }
        if let Some(m) = self.pool_mult {
            cfg.pool_multiplier = m;
        }
        if let Some(f) = self.fusion {
            cfg.fusion = f;
        }
        if let Some(b) = self.budget {
            cfg.budget_tokens = b;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Video,
    Subtitles,
    AsrJsonl,
    OcrJsonl,
    Detections,
    Frames,
}

/// Recognizes an input by its file name; `None` for files to skip.
pub fn classify(path: &Path) -> Option<InputKind> {
    let name = path.file_name()?.to_str()?.to_ascii_lowercase();
    Some(if name == VIDEO_FILE {
        InputKind::Video
    } else if name.ends_with(".srt") || name.ends_with(".vtt") {
        InputKind::Subtitles
    } else if name.ends_with(".det.jsonl") || name == DETECTIONS_FILE {
        InputKind::Detections
    } else if name.ends_with(".frames.jsonl") || name == FRAMES_FILE {
        InputKind::Frames
    } else if name.ends_with(".asr.jsonl") || name == "asr.jsonl" {
        InputKind::AsrJsonl
    } else if name.ends_with(".jsonl") {
        InputKind::OcrJsonl
    } else {
        return None;
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FileSummary {
    pub path: PathBuf,
    pub kind: InputKind,
    pub items: usize,
    pub dropped: usize,
    pub errors: Vec<String>,
    /// Set when the whole file was rejected.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub files: Vec<FileSummary>,
    pub video: VideoRecord,
    pub counts: BTreeMap<String, usize>,
}

impl fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for file in &self.files {
            write!(f, "{} ({:?}): ", file.path.display(), file.kind)?;
            match &file.failure {
                Some(why) => writeln!(f, "FAILED: {why}")?,
                None => writeln!(f, "{} records, {} dropped, {} bad lines", file.items, file.dropped, file.errors.len())?,
            }
            for e in &file.errors {
                writeln!(f, "  {e}")?;
            }
        }
        write!(f, "video {} ({:.1}s):", self.video.video_id, self.video.duration_s)?;
        for (k, v) in &self.counts {
            write!(f, " {k}={v}")?;
        }
        writeln!(f)
    }
}

fn expand_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            inner.sort();
            files.extend(inner);
        } else if p.exists() {
            files.push(p.clone());
        } else {
            return Err(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
    }
    Ok(files)
}

/// Parses every recognized input and writes validated stores into `out_dir`.
///
/// A bad file or line is reported in the summary; the command fails only
/// when nothing usable was read.
pub fn cmd_ingest(paths: &[PathBuf], out_dir: &Path) -> Result<IngestSummary> {
    let inputs: Vec<(PathBuf, InputKind)> = expand_inputs(paths)?
        .into_iter()
        .filter_map(|p| classify(&p).map(|k| (p, k)))
        .collect();
    if inputs.is_empty() {
        return Err(Error::NoInputs);
    }
    let n_subtitle_files = inputs.iter().filter(|(_, k)| *k == InputKind::Subtitles).count();

    let mut files = Vec::new();
    let mut video: Option<VideoRecord> = None;
    let mut asr: Vec<Snippet> = Vec::new();
    let mut ocr: Vec<Snippet> = Vec::new();
    let mut detections: Vec<DetectionRecord> = Vec::new();
    let mut frames: Vec<CaptionedFrame> = Vec::new();

    for (path, kind) in &inputs {
        let mut summary = FileSummary {
            path: path.clone(),
            kind: *kind,
            items: 0,
            dropped: 0,
            errors: Vec::new(),
            failure: None,
        };
        let outcome = (|| -> Result<()> {
            let bytes = read(path)?;
            match kind {
                InputKind::Video => {
                    let v: VideoRecord = serde_json::from_slice(&bytes)?;
                    v.validate()?;
                    video = Some(v);
                    summary.items = 1;
                }
                InputKind::Subtitles => {
                    let is_vtt = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("vtt"));
                    let mut parsed = if is_vtt { parse_vtt(&bytes)? } else { parse_srt(&bytes)? };
                    if n_subtitle_files > 1 {
                        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("subs");
                        parsed.iter_mut().for_each(|s| s.id = format!("{stem}/{}", s.id));
                    }
                    summary.items = parsed.len();
                    asr.extend(parsed);
                }
                InputKind::AsrJsonl | InputKind::OcrJsonl => {
                    let ch = if *kind == InputKind::AsrJsonl { Channel::Asr } else { Channel::Ocr };
                    let parsed = parse_snippet_jsonl(&bytes, ch)?;
                    summary.items = parsed.items.len();
                    summary.dropped = parsed.dropped;
                    summary.errors = parsed.errors.iter().map(ToString::to_string).collect();
                    if ch == Channel::Asr { &mut asr } else { &mut ocr }.extend(parsed.items);
                }
                InputKind::Detections => {
                    let parsed = parse_detection_jsonl(&bytes)?;
                    summary.items = parsed.items.len();
                    summary.errors = parsed.errors.iter().map(ToString::to_string).collect();
                    detections.extend(parsed.items);
                }
                InputKind::Frames => {
                    let parsed = parse_frames_jsonl(&bytes)?;
                    summary.items = parsed.items.len();
                    summary.errors = parsed.errors.iter().map(ToString::to_string).collect();
                    frames.extend(parsed.items);
                }
            }
            Ok(())
        })();
        if let Err(e) = outcome {
            tracing::warn!(path = %path.display(), "{e}");
            summary.failure = Some(e.to_string());
        }
        files.push(summary);
    }

    if asr.is_empty() && ocr.is_empty() && detections.is_empty() && frames.is_empty() {
        return Err(Error::NoInputs);
    }
    let video = match video {
        Some(v) => v,
        None => {
            let end = asr
                .iter()
                .chain(&ocr)
                .map(|s| s.t_end)
                .chain(detections.iter().map(|d| d.t))
                .chain(frames.iter().map(|f| f.t))
                .fold(0.0f64, f64::max);
            tracing::warn!("no {VIDEO_FILE} among the inputs; assuming the video ends at {end:.1}s");
            VideoRecord::new("video", end.max(1.0))?
        }
    };

    // second pass: bounds that need the video duration
    let keep = |items: Vec<Snippet>, ch: Channel, files: &mut Vec<FileSummary>| -> Vec<Snippet> {
        let mut seen = std::collections::HashSet::new();
        items
            .into_iter()
            .filter_map(|s| {
                let id = s.id.clone();
                let checked = validate_snippet(s, &video).and_then(|s| {
                    if seen.insert(s.id.clone()) {
                        Ok(s)
                    } else {
                        Err(Error::DuplicateDocId(s.id))
                    }
                });
                match checked {
                    Ok(s) => Some(s),
                    Err(e) => {
                        if let Some(f) = files.iter_mut().rev().find(|f| {
                            f.failure.is_none()
                                && match ch {
                                    Channel::Asr => matches!(f.kind, InputKind::Subtitles | InputKind::AsrJsonl),
                                    _ => f.kind == InputKind::OcrJsonl,
                                }
                        }) {
                            f.errors.push(format!("{id}: {e}"));
                        }
                        None
                    }
                }
            })
            .collect()
    };
    let asr = keep(asr, Channel::Asr, &mut files);
    let ocr = keep(ocr, Channel::Ocr, &mut files);
    detections.retain(|d| d.t <= video.duration_s);
    detections.sort_by_key(|d| d.frame_index);
    frames.retain(|f| f.t <= video.duration_s);
    frames.sort_by_key(|f| f.frame_index);
    frames.dedup_by_key(|f| f.frame_index);

    create_dir(out_dir)?;
    write(&out_dir.join(VIDEO_FILE), serde_json::to_string_pretty(&video)? + "\n")?;
    write(&out_dir.join(store_file(Channel::Asr)), write_jsonl(&asr))?;
    write(&out_dir.join(store_file(Channel::Ocr)), write_jsonl(&ocr))?;
    write(&out_dir.join(DETECTIONS_FILE), write_jsonl(&detections))?;
    write(&out_dir.join(FRAMES_FILE), write_jsonl(&frames))?;

    let counts = BTreeMap::from([
        ("asr".to_string(), asr.len()),
        ("ocr".to_string(), ocr.len()),
        ("detections".to_string(), detections.len()),
        ("frames".to_string(), frames.len()),
    ]);
    Ok(IngestSummary {
        files,
        video,
        counts,
    })
}

fn read_store(dir: &Path, ch: Channel) -> Result<Vec<Snippet>> {
    let path = dir.join(store_file(ch));
    if !path.exists() {
        return Ok(Vec::new());
    }
    let bytes = read(&path)?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    let parsed = parse_snippet_jsonl(&bytes, ch)?;
    if let Some(e) = parsed.errors.first() {
        return Err(Error::BadLine {
            line: e.line,
            message: format!("{}: {}", path.display(), e.message),
        });
    }
    Ok(parsed.items)
}

fn read_video(dir: &Path) -> Result<VideoRecord> {
    let path = dir.join(VIDEO_FILE);
    let v: VideoRecord = serde_json::from_slice(&read(&path)?)?;
    v.validate()?;
    Ok(v)
}

fn read_frames(dir: &Path) -> Result<Vec<CaptionedFrame>> {
    let path = dir.join(FRAMES_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let bytes = read(&path)?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    Ok(parse_frames_jsonl(&bytes)?.items)
}

#[derive(Debug, Clone, Serialize)]
pub struct ChannelStats {
    pub channel: Channel,
    pub n_docs: usize,
    pub avg_dl: f64,
    pub n_vectors: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildSummary {
    pub channels: Vec<ChannelStats>,
    pub n_frame_vectors: usize,
}

impl fmt::Display for BuildSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.channels {
            writeln!(
                f,
                "{}: {} docs, avg length {:.2}, {} vectors of dim {}",
                c.channel, c.n_docs, c.avg_dl, c.n_vectors, c.dim
            )?;
        }
        writeln!(f, "frames: {} vectors", self.n_frame_vectors)
    }
}

/// Indexes the stores in `in_dir` and writes indices plus copies of the stores to `out_dir`.
pub fn cmd_build(in_dir: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<BuildSummary> {
    let video = read_video(in_dir)?;
    let precomputed = match (cfg.embedder, &cfg.embeddings_file) {
        (EmbedderKind::File, Some(p)) => Some(PrecomputedEmbeddings::load(p)?),
        _ => None,
    };
    let text_embedder = cfg.text_embedder()?;
    let frame_embedder = cfg.frame_embedder()?;
    create_dir(out_dir)?;

    let mut channels = Vec::new();
    for ch in TEXT_CHANNELS {
        let snippets = read_store(in_dir, ch)?;
        let bm25 = Bm25Index::build_for(ch, &snippets, cfg.bm25())?;
        let index = match &precomputed {
            Some(p) => {
                let ids: Vec<&str> = snippets.iter().map(|s| s.id.as_str()).collect();
                let vectors = if ids.is_empty() { Vec::new() } else { p.lookup(&ids)? };
                ChannelIndex::with_vectors(bm25, snippets.clone(), p.dim(), vectors)?
            }
            None => ChannelIndex::build(ch, snippets.clone(), cfg.bm25(), text_embedder.as_ref())?,
        };
        index.bm25.save(&out_dir.join(bm25_file(ch)))?;
        index.dense.save(&out_dir.join(vec_file(ch)))?;
        write(&out_dir.join(store_file(ch)), write_jsonl(&snippets))?;
        channels.push(ChannelStats {
            channel: ch,
            n_docs: index.bm25.n_docs(),
            avg_dl: index.bm25.avg_dl(),
            n_vectors: index.dense.len(),
            dim: index.dense.dim(),
        });
    }

    let captioned = read_frames(in_dir)?;
    let mut frame_index;
    if let Some(p) = &precomputed {
        let frames: Vec<FrameRecord> = if captioned.is_empty() {
            video.uniform_frames(cfg.n_frames)
        } else {
            captioned.iter().map(CaptionedFrame::record).collect()
        };
        let keys: Vec<String> = frames.iter().map(FrameRecord::key).collect();
        frame_index = FlatVectorIndex::new(p.dim());
        for (k, v) in keys.iter().zip(p.lookup(&keys)?) {
            frame_index.add(k, &v)?;
        }
    } else {
        frame_index = FlatVectorIndex::new(frame_embedder.dim());
        let captions: Vec<String> = captioned.iter().map(|f| f.caption.clone()).collect();
        if !captions.is_empty() {
            for (f, v) in captioned.iter().zip(frame_embedder.embed(&captions)?) {
                frame_index.add(&f.record().key(), &v)?;
            }
        }
    }
    frame_index.save(&out_dir.join(FRAME_VECTORS_FILE))?;

    if in_dir != out_dir {
        write(&out_dir.join(VIDEO_FILE), serde_json::to_string_pretty(&video)? + "\n")?;
        write(&out_dir.join(FRAMES_FILE), write_jsonl(&captioned))?;
        let det = in_dir.join(DETECTIONS_FILE);
        let det_bytes = if det.exists() { read(&det)? } else { Vec::new() };
        write(&out_dir.join(DETECTIONS_FILE), det_bytes)?;
    }
    Ok(BuildSummary {
        channels,
        n_frame_vectors: frame_index.len(),
    })
}

/// Loads a built index directory into a ready engine.
pub fn load_engine(index_dir: &Path, cfg: &RunConfig) -> Result<Engine> {
    let video = read_video(index_dir)?;
    let mut channels = BTreeMap::new();
    for ch in TEXT_CHANNELS {
        let bm25_path = index_dir.join(bm25_file(ch));
        if !bm25_path.exists() {
            continue;
        }
        let bm25 = Bm25Index::load(&bm25_path)?;
        let dense = FlatVectorIndex::load(&index_dir.join(vec_file(ch)))?;
        let snippets = read_store(index_dir, ch)?;
        channels.insert(ch, ChannelIndex::new(bm25, dense, snippets)?);
    }
    let captioned = read_frames(index_dir)?;
    let frames = if captioned.is_empty() {
        video.uniform_frames(cfg.n_frames)
    } else {
        captioned.iter().map(CaptionedFrame::record).collect()
    };
    let frame_index = FlatVectorIndex::load(&index_dir.join(FRAME_VECTORS_FILE))?;
    let mut settings = cfg.engine_settings();
    settings.selector.sim_threshold = cfg.frame_tau;
    Ok(Engine {
        video,
        frames,
        frame_index,
        channels,
        text_embedder: cfg.text_embedder()?,
        frame_embedder: cfg.frame_embedder()?,
        detector: cfg.detector(&index_dir.join(DETECTIONS_FILE))?,
        lvlm: cfg.lvlm()?,
        settings,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HitTrace {
    pub id: String,
    pub t_mid: f64,
    pub raw_score: f64,
    pub decay: f64,
    pub score: f64,
}

/// Deterministic record of one answer run.
#[derive(Debug, Clone, Serialize)]
pub struct AnswerTrace {
    pub query: String,
    pub video_id: String,
    pub flags: AblationFlags,
    pub request: crate::model::RetrievalRequest,
    pub anchors: crate::temporal::AnchorSet,
    pub lambdas: [f64; 3],
    pub time_norm: crate::temporal::TimeNorm,
    pub tau: f64,
    pub fusion: Fusion,
    pub top_k: usize,
    pub hits: BTreeMap<Channel, Vec<HitTrace>>,
    pub keyframes: Vec<crate::pipeline::KeyframeRef>,
    pub scene_graph: Vec<String>,
    pub bundle_hash: String,
    pub evidence_tokens: usize,
    pub prompt_tokens: usize,
    pub warnings: Vec<String>,
    pub answer: String,
}

impl AnswerTrace {
    pub fn new(query: &QueryRequest, flags: AblationFlags, engine: &Engine, out: &RunOutput) -> Self {
        let r = &out.retrieval;
        let trace_hits = |hits: &[crate::model::ScoredSnippet]| {
            hits.iter()
                .map(|h| HitTrace {
                    id: h.snippet.id.clone(),
                    t_mid: h.snippet.t_mid(),
                    raw_score: h.raw_score,
                    decay: h.decay,
                    score: h.score,
                })
                .collect()
        };
        AnswerTrace {
            query: query.query_text.clone(),
            video_id: query.video_id.clone(),
            flags,
            request: out.request.clone(),
            anchors: r.anchors,
            lambdas: r.decay.lambdas,
            time_norm: r.decay.time_norm,
            tau: engine.settings.retrieval.tau,
            fusion: engine.settings.retrieval.fusion,
            top_k: engine.settings.retrieval.rescore.top_k,
            hits: BTreeMap::from([
                (Channel::Asr, trace_hits(&r.asr_hits)),
                (Channel::Ocr, trace_hits(&r.ocr_hits)),
            ]),
            keyframes: r.keyframes.iter().map(Into::into).collect(),
            scene_graph: r.scene_graph.lines.clone(),
            bundle_hash: out.bundle.hash(),
            evidence_tokens: out.bundle.evidence.token_estimate,
            prompt_tokens: out.bundle.total_tokens(),
            warnings: out.warnings.clone(),
            answer: out.answer.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes") + "\n"
    }
}

/// Runs the full pipeline for one question.
pub fn cmd_answer(
    query: &str,
    video_id: Option<&str>,
    index_dir: &Path,
    cfg: &RunConfig,
    flags: AblationFlags,
) -> Result<(String, AnswerTrace)> {
    let engine = load_engine(index_dir, cfg)?;
    let video_id = video_id.unwrap_or(&engine.video.video_id);
    if video_id != engine.video.video_id {
        return Err(Error::InvalidVideo(format!(
            "index holds video {:?}, not {video_id:?}",
            engine.video.video_id
        )));
    }
    let q = QueryRequest::new(query, video_id)?;
    let out = engine.run(&q, &flags)?;
    let trace = AnswerTrace::new(&q, flags, &engine, &out);
    Ok((out.answer, trace))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalOutput {
    pub spec: SyntheticSpec,
    pub config: RunConfig,
    pub flags: AblationFlags,
    pub runs: Vec<SeedRun>,
    pub aggregate: Vec<crate::eval::Aggregate>,
}

/// Generates `n_seeds` corpora starting at `spec.seed` and evaluates each at every threshold.
pub fn cmd_eval(
    spec: &SyntheticSpec,
    cfg: &RunConfig,
    flags: AblationFlags,
    n_seeds: usize,
    taus: &[f64],
) -> Result<EvalOutput> {
    if n_seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    // surface spec problems before spawning workers
    gen_corpus(spec)?;
    let runs = run_seeds(spec, &cfg.eval_config(), taus, &flags, n_seeds)?;
    Ok(EvalOutput {
        spec: spec.clone(),
        config: cfg.clone(),
        flags,
        aggregate: aggregate(&runs),
        runs,
    })
}

fn echo_config(cfg: &RunConfig) {
    eprintln!("effective config:\n{}", cfg.echo());
}

/// Executes a parsed command line, writing results to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<stdout>", e);
    match cli.command {
        Command::Ingest { paths, out: dir } => {
            let summary = cmd_ingest(&paths, &dir)?;
            write!(out, "{summary}").map_err(io)?;
        }
        Command::Build { input, out: dir, config } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            echo_config(&cfg);
            let summary = cmd_build(&input, &dir, &cfg)?;
            write!(out, "{summary}").map_err(io)?;
        }
        Command::Answer {
            query,
            index,
            video_id,
            trace,
            tuning,
        } => {
            let cfg = tuning.resolve()?;
            echo_config(&cfg);
            let index = index
                .or_else(|| cfg.index_dir.clone())
                .ok_or_else(|| Error::Config("no index directory: pass --index or set index_dir".into()))?;
            let (answer, t) = cmd_answer(&query, video_id.as_deref(), &index, &cfg, tuning.flags())?;
            writeln!(out, "{answer}").map_err(io)?;
            match trace {
                Some(p) => write(&p, t.to_json())?,
                None => write!(out, "{}", t.to_json()).map_err(io)?,
            }
        }
        Command::Eval {
            spec,
            seeds,
            sweep,
            out: dir,
            tuning,
        } => {
            let cfg = tuning.resolve()?;
            echo_config(&cfg);
            let text = std::fs::read_to_string(&spec).map_err(|e| Error::io(&spec, e))?;
            let spec: SyntheticSpec =
                serde_json::from_str(&text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
            let taus: Vec<f64> = if sweep { DEFAULT_TAUS.to_vec() } else { vec![cfg.tau] };
            let report = cmd_eval(&spec, &cfg, tuning.flags(), seeds, &taus)?;
            let table = render_table(&report.runs);
            write!(out, "{table}").map_err(io)?;
            if let Some(dir) = dir {
                create_dir(&dir)?;
                write(&dir.join("eval_report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
                write(&dir.join("eval_report.txt"), table)?;
            }
        }
    }
    Ok(())
}
