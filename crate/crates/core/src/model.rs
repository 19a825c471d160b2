//! Shared domain types: videos, frames, time-stamped snippets, and requests.
//!
//! All times are seconds as `f64`. Frame indices are converted to seconds at
//! ingestion with [`frame_time`] and never used in downstream math.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, LineError, Result};

/// Number of frames uniformly sampled from a video before keyframe selection.
pub const DEFAULT_SAMPLED_FRAMES: usize = 64;

/// Auxiliary text channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Asr,
    Ocr,
    Det,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Asr, Channel::Ocr, Channel::Det];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Asr => "asr",
            Channel::Ocr => "ocr",
            Channel::Det => "det",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Channel::Asr => 0,
            Channel::Ocr => 1,
            Channel::Det => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Channel> {
        match tag {
            0 => Some(Channel::Asr),
            1 => Some(Channel::Ocr),
            2 => Some(Channel::Det),
            _ => None,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asr" => Ok(Channel::Asr),
            "ocr" => Ok(Channel::Ocr),
            "det" => Ok(Channel::Det),
            other => Err(Error::Config(format!("unknown channel {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
}

impl VideoRecord {
    pub fn new(video_id: impl Into<String>, duration_s: f64) -> Result<Self> {
        let v = VideoRecord {
            video_id: video_id.into(),
            duration_s,
            fps: None,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn with_fps(mut self, fps: f64) -> Result<Self> {
        self.fps = Some(fps);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.video_id.trim().is_empty() {
            return Err(Error::InvalidVideo("video_id is empty".into()));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::InvalidVideo(format!(
                "duration_s must be finite and positive, got {}",
                self.duration_s
            )));
        }
        if let Some(fps) = self.fps {
            if !(fps.is_finite() && fps > 0.0) {
                return Err(Error::InvalidVideo(format!("fps must be positive, got {fps}")));
            }
        }
        Ok(())
    }

    /// Times of `n` frames sampled at the centres of `n` equal slices.
    pub fn uniform_frames(&self, n: usize) -> Vec<FrameRecord> {
        let step = self.duration_s / n as f64;
        (0..n)
            .map(|i| FrameRecord {
                frame_index: i as u64,
                t: (i as f64 + 0.5) * step,
                embedding_ref: None,
            })
            .collect()
    }
}

/// A sampled frame: an index, its time, and optionally the id of its stored embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_ref: Option<String>,
}

impl FrameRecord {
    /// Key used to look the frame up in a vector index.
    pub fn key(&self) -> String {
        self.embedding_ref
            .clone()
            .unwrap_or_else(|| format!("frame-{:05}", self.frame_index))
    }
}

/// Converts a frame index to seconds, clamped to the video duration.
pub fn frame_time(frame_index: u64, video: &VideoRecord) -> Result<f64> {
    let fps = video.fps.ok_or(Error::MissingFps)?;
    if fps.is_nan() || fps <= 0.0 {
        return Err(Error::MissingFps);
    }
    Ok((frame_index as f64 / fps).clamp(0.0, video.duration_s))
}

/// One time-stamped unit of auxiliary text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub id: String,
    pub channel: Channel,
    pub text: String,
    pub t_start: f64,
    pub t_end: f64,
}

impl Snippet {
    pub fn new(
        id: impl Into<String>,
        channel: Channel,
        text: impl Into<String>,
        t_start: f64,
        t_end: f64,
    ) -> Self {
        Snippet {
            id: id.into(),
            channel,
            text: text.into(),
            t_start,
            t_end,
        }
    }

    /// Canonical timestamp used by temporal decay.
    pub fn t_mid(&self) -> f64 {
        (self.t_start + self.t_end) / 2.0
    }

    /// Checks text and interval without a duration bound.
    pub fn check_shape(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        if !self.t_start.is_finite() || self.t_start < 0.0 {
            return Err(Error::TimeOutOfRange {
                t: self.t_start,
                duration: f64::INFINITY,
            });
        }
        if !self.t_end.is_finite() {
            return Err(Error::TimeOutOfRange {
                t: self.t_end,
                duration: f64::INFINITY,
            });
        }
        if self.t_start > self.t_end {
            return Err(Error::InvertedInterval {
                start: self.t_start,
                end: self.t_end,
            });
        }
        Ok(())
    }
}

/// Validates a snippet against its video.
pub fn validate_snippet(s: Snippet, video: &VideoRecord) -> Result<Snippet> {
    if s.text.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    if s.t_start > s.t_end {
        return Err(Error::InvertedInterval {
            start: s.t_start,
            end: s.t_end,
        });
    }
    for t in [s.t_start, s.t_end] {
        if !(t.is_finite() && (0.0..=video.duration_s).contains(&t)) {
            return Err(Error::TimeOutOfRange {
                t,
                duration: video.duration_s,
            });
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub query_text: String,
    pub video_id: String,
}

impl QueryRequest {
    pub fn new(query_text: impl Into<String>, video_id: impl Into<String>) -> Result<Self> {
        let q = QueryRequest {
            query_text: query_text.into(),
            video_id: video_id.into(),
        };
        if q.query_text.trim().is_empty() {
            return Err(Error::EmptyQuery);
        }
        Ok(q)
    }
}

/// Per-channel retrieval requests; `None` means the channel is not searched.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRequest {
    pub asr: Option<String>,
    pub ocr: Option<String>,
    pub det: Option<String>,
}

impl RetrievalRequest {
    /// Same text for every channel.
    pub fn broadcast(text: &str) -> Self {
        RetrievalRequest {
            asr: Some(text.to_string()),
            ocr: Some(text.to_string()),
            det: Some(text.to_string()),
        }
    }

    pub fn get(&self, channel: Channel) -> Option<&str> {
        match channel {
            Channel::Asr => self.asr.as_deref(),
            Channel::Ocr => self.ocr.as_deref(),
            Channel::Det => self.det.as_deref(),
        }
    }

    /// Drops blank entries so an empty string is never searched.
    pub fn normalized(self) -> Self {
        let keep = |o: Option<String>| o.filter(|s| !s.trim().is_empty());
        RetrievalRequest {
            asr: keep(self.asr),
            ocr: keep(self.ocr),
            det: keep(self.det),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.asr.is_none() && self.ocr.is_none() && self.det.is_none()
    }
}

/// A snippet after temporal rescoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSnippet {
    pub snippet: Snippet,
    /// Raw retrieval score before decay.
    pub raw_score: f64,
    pub decay: f64,
    /// Normalized share of the candidate pool's decayed mass.
    pub score: f64,
}

#[derive(Deserialize)]
struct SnippetLine {
    id: String,
    channel: String,
    text: String,
    t_start: Option<f64>,
    t_end: Option<f64>,
    t: Option<f64>,
}

/// Parses one Snippet JSONL line. Unknown keys are ignored; a bare `t`
/// stands in for an instantaneous interval.
pub fn parse_snippet_line(line: &str) -> std::result::Result<Snippet, String> {
    let raw: SnippetLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let channel: Channel = raw
        .channel
        .parse()
        .map_err(|_| format!("unknown channel {:?}", raw.channel))?;
    let (t_start, t_end) = match (raw.t_start, raw.t_end, raw.t) {
        (Some(a), Some(b), _) => (a, b),
        (None, None, Some(t)) => (t, t),
        _ => return Err("missing t_start/t_end".to_string()),
    };
    Ok(Snippet {
        id: raw.id,
        channel,
        text: raw.text,
        t_start,
        t_end,
    })
}

/// Result of reading a JSONL file tolerantly.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub errors: Vec<LineError>,
    /// Lines skipped on purpose (e.g. empty text).
    pub dropped: usize,
}

/// Reads every non-blank line of a Snippet JSONL store.
pub fn read_snippet_jsonl(text: &str) -> Parsed<Snippet> {
    let mut out = Parsed::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_snippet_line(line) {
            Ok(s) => out.items.push(s),
            Err(message) => out.errors.push(LineError {
                line: i + 1,
                message,
            }),
        }
    }
    out
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed {
            items: Vec::new(),
            errors: Vec::new(),
            dropped: 0,
        }
    }
}

pub fn write_snippet_jsonl(snippets: &[Snippet]) -> String {
    let mut out = String::new();
    for s in snippets {
        out.push_str(&serde_json::to_string(s).expect("snippet serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn video(d: f64) -> VideoRecord {
        VideoRecord::new("v", d).unwrap()
    }

    #[test]
    fn validate_accepts_and_derives_midpoint() {
        let s = Snippet::new("a", Channel::Asr, "hello", 1.0, 3.0);
        let s = validate_snippet(s, &video(10.0)).unwrap();
        assert_eq!(s.t_mid(), 2.0);
    }

    #[test]
    fn validate_rejects_blank_text() {
        let s = Snippet::new("a", Channel::Asr, "  ", 1.0, 3.0);
        assert!(matches!(validate_snippet(s, &video(10.0)), Err(Error::EmptyText)));
    }

    #[test]
    fn validate_rejects_inverted_interval() {
        let s = Snippet::new("a", Channel::Asr, "x", 5.0, 2.0);
        assert!(matches!(
            validate_snippet(s, &video(10.0)),
            Err(Error::InvertedInterval { .. })
        ));
    }

    #[test]
    fn validate_rejects_out_of_range() {
        let s = Snippet::new("a", Channel::Asr, "x", 5.0, 12.0);
        assert!(matches!(
            validate_snippet(s, &video(10.0)),
            Err(Error::TimeOutOfRange { t, .. }) if t == 12.0
        ));
        let s = Snippet::new("a", Channel::Asr, "x", -1.0, 2.0);
        assert!(validate_snippet(s, &video(10.0)).is_err());
    }

    #[test]
    fn frame_time_cases() {
        let v = video(10.0).with_fps(2.0).unwrap();
        assert_eq!(frame_time(0, &v).unwrap(), 0.0);
        assert_eq!(frame_time(4, &v).unwrap(), 2.0);
        assert_eq!(frame_time(100, &v).unwrap(), 10.0);
        assert!(matches!(frame_time(1, &video(10.0)), Err(Error::MissingFps)));
    }

    #[test]
    fn video_validation() {
        assert!(VideoRecord::new("", 1.0).is_err());
        assert!(VideoRecord::new("v", 0.0).is_err());
        assert!(VideoRecord::new("v", f64::NAN).is_err());
        assert!(video(1.0).with_fps(0.0).is_err());
    }

    #[test]
    fn channel_tags_are_strict() {
        assert!(parse_snippet_line(r#"{"id":"a","channel":"ASR","text":"x","t_start":0,"t_end":1}"#).is_err());
        assert!(parse_snippet_line(r#"{"id":"a","channel":"audio","text":"x","t_start":0,"t_end":1}"#).is_err());
        let s = parse_snippet_line(
            r#"{"id":"a","channel":"det","text":"x","t_start":0,"t_end":1,"extra":true}"#,
        )
        .unwrap();
        assert_eq!(s.channel, Channel::Det);
    }

    #[test]
    fn bare_instant_line() {
        let s = parse_snippet_line(r#"{"id":"o1","channel":"ocr","text":"EXIT","t":4.5}"#).unwrap();
        assert_eq!((s.t_start, s.t_end), (4.5, 4.5));
    }

    #[test]
    fn jsonl_reports_line_numbers() {
        let text = "{\"id\":\"a\",\"channel\":\"asr\",\"text\":\"x\",\"t_start\":0,\"t_end\":1}\n\nnot json\n";
        let p = read_snippet_jsonl(text);
        assert_eq!(p.items.len(), 1);
        assert_eq!(p.errors.len(), 1);
        assert_eq!(p.errors[0].line, 3);
    }

    #[test]
    fn request_normalization_drops_blanks() {
        let r = RetrievalRequest {
            asr: Some("  ".into()),
            ocr: Some("sign".into()),
            det: None,
        }
        .normalized();
        assert_eq!(r.asr, None);
        assert_eq!(r.get(Channel::Ocr), Some("sign"));
        assert!(!r.is_empty());
    }

    fn arb_snippet() -> impl Strategy<Value = Snippet> {
        (
            "[a-z0-9-]{1,12}",
            prop_oneof![Just(Channel::Asr), Just(Channel::Ocr), Just(Channel::Det)],
            "[a-zA-Z0-9 \"\\\\é\\n]{0,20}[a-z]",
            0.0f64..1000.0,
            0.0f64..1000.0,
        )
            .prop_map(|(id, channel, text, a, b)| {
                Snippet::new(id, channel, text, a.min(b), a.max(b))
            })
    }

    proptest! {
        #[test]
        fn jsonl_round_trip_is_identity(s in arb_snippet()) {
            let v = video(1000.0);
            let s = validate_snippet(s, &v).unwrap();
            let line = write_snippet_jsonl(std::slice::from_ref(&s));
            let back = parse_snippet_line(line.trim_end()).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert!((back.t_mid() - (s.t_start + s.t_end) / 2.0).abs() <= 1e-12);
        }
    }
}
