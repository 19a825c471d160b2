//! Temporal-aware retrieval for long-video question answering.
//!
//! Time-stamped speech transcripts, on-screen text, and object detections are
//! indexed per channel. A query is decoupled into per-channel requests, lexical
//! hits are rescored by their distance in time to three query anchors, and
//! keyframes are chosen by semantic entropy. The result is composed into a
//! single prompt for an external video-language model.
//!
//! Module map:
//!
//! * [`model`]: snippets, frames, videos, requests
//! * [`text_index`]: tokenization and BM25
//! * [`vector_index`]: exact inner-product search and embedding providers
//! * [`temporal`]: anchors, decay, rescoring, top-K
//! * [`frames`]: entropy weighting and keyframe selection
//! * [`ingest`]: SRT/WebVTT/JSONL parsing and scene-graph text
//! * [`pipeline`]: decoupling, retrieval, augmentation, composition
//! * [`eval`]: synthetic needle corpora, ablations, threshold sweeps
//! * [`config`] and [`cli`]: the JSON run configuration and commands


mod codec;

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;

pub mod frames;
pub mod http;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod temporal;
pub mod text_index;
pub mod vector_index;

pub use error::{Error, ErrorKind, Result};
pub use model::{Channel, FrameRecord, QueryRequest, RetrievalRequest, ScoredSnippet, Snippet, VideoRecord};
