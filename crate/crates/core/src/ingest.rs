//! Parsers for auxiliary text sources and the scene-graph renderer.
//!
//! SRT and WebVTT become ASR snippets, Snippet JSONL becomes OCR snippets, and
//! detection JSONL becomes [`DetectionRecord`]s that render to
//! [`SceneGraphText`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, LineError, Result};
use crate::model::{parse_snippet_line, Channel, FrameRecord, Parsed, Snippet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub label: String,
    /// Normalized `(x1, y1, x2, y2)`.
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub confidence: f64,
}

impl DetectedObject {
    pub fn validate(&self) -> Result<()> {
        let [x1, y1, x2, y2] = self.bbox;
        let in_unit = self.bbox.iter().all(|v| (0.0..=1.0).contains(v));
        if !in_unit || !(x1 < x2 && y1 < y2) {
            return Err(Error::InvalidBox(self.bbox));
        }
        if self.label.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::BadLine {
                line: 0,
                message: format!("confidence {} outside [0,1]", self.confidence),
            });
        }
        Ok(())
    }
}

/// Objects detected on one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame_index: u64,
    pub t: f64,
    #[serde(default)]
    pub objects: Vec<DetectedObject>,
}

/// Chronological, one line per keyframe.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneGraphText {
    pub lines: Vec<String>,
}

impl SceneGraphText {
    pub fn render(&self) -> String {
        let mut s = self.lines.join("\n");
        if !s.is_empty() {
            s.push('\n');
        }
        s
    }
}

/// Renders detections as `t=12.3s: person(0.310,0.420,0.550,0.880)[c=0.900], ...`.
///
/// Records are sorted by time; objects by descending confidence, then label.
pub fn serialize_scene_graph(dets: &[DetectionRecord]) -> Result<SceneGraphText> {
    let mut records: Vec<&DetectionRecord> = dets.iter().collect();
    records.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.frame_index.cmp(&b.frame_index)));
    let mut lines = Vec::with_capacity(records.len());
    for rec in records {
        for o in &rec.objects {
            let [x1, y1, x2, y2] = o.bbox;
            if !(x1 < x2 && y1 < y2) || o.bbox.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidBox(o.bbox));
            }
        }
        let mut objs: Vec<&DetectedObject> = rec.objects.iter().collect();
        objs.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then_with(|| a.label.cmp(&b.label))
        });
        let mut line = format!("t={:.1}s: ", rec.t);
        if objs.is_empty() {
            line.push_str("(none)");
        }
        for (i, o) in objs.iter().enumerate() {
            if i > 0 {
                line.push_str(", ");
            }
            let [x1, y1, x2, y2] = o.bbox;
            let label = o.label.split_whitespace().collect::<Vec<_>>().join(" ");
            write!(line, "{label}({x1:.3},{y1:.3},{x2:.3},{y2:.3})[c={:.3}]", o.confidence).unwrap();
        }
        lines.push(line);
    }
    Ok(SceneGraphText { lines })
}

fn decode_utf8(bytes: &[u8]) -> Result<&str> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    std::str::from_utf8(bytes).map_err(|e| Error::BadLine {
        line: 0,
        message: format!("invalid utf-8: {e}"),
    })
}

/// Parses `HH:MM:SS<sep>mmm`; hours may be omitted when `hours_optional`.
fn parse_clock(s: &str, sep: char, hours_optional: bool) -> Option<f64> {
    let (hms, ms) = s.trim().split_once(sep)?;
    if ms.len() != 3 || !ms.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let parts: Vec<&str> = hms.split(':').collect();
    let (h, m, sec) = match parts.as_slice() {
        [h, m, s] => (*h, *m, *s),
        [m, s] if hours_optional => ("0", *m, *s),
        _ => return None,
    };
    let num = |x: &str, max: Option<u64>| -> Option<u64> {
        if x.is_empty() || !x.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let v: u64 = x.parse().ok()?;
        match max {
            Some(m) if v >= m => None,
            _ => Some(v),
        }
    };
    if m.len() != 2 || sec.len() != 2 {
        return None;
    }
    let h = num(h, None)?;
    let m = num(m, Some(60))?;
    let sec = num(sec, Some(60))?;
    let ms: u64 = ms.parse().ok()?;
    Some((h * 3600 + m * 60 + sec) as f64 + ms as f64 / 1000.0)
}

fn strip_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut depth = 0usize;
    for c in text.chars() {
        match c {
            '<' => depth += 1,
            '>' if depth > 0 => depth -= 1,
            _ if depth == 0 => out.push(c),
            _ => {}
        }
    }
    out
}

fn join_cue_text(lines: &[&str]) -> String {
    lines
        .iter()
        .map(|l| strip_tags(l))
        .flat_map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Splits into blank-line-separated blocks of `(line_number, text)`.
fn blocks(text: &str) -> Vec<Vec<(usize, &str)>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push((i + 1, line));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn parse_timing(line: usize, text: &str, sep: char, hours_optional: bool) -> Result<(f64, f64)> {
    let bad = || Error::MalformedTimestamp {
        line,
        text: text.to_string(),
    };
    let (a, rest) = text.split_once("-->").ok_or_else(bad)?;
    // cue settings may follow the end time
    let b = rest.split_whitespace().next().ok_or_else(bad)?;
    let start = parse_clock(a, sep, hours_optional).ok_or_else(bad)?;
    let end = parse_clock(b, sep, hours_optional).ok_or_else(bad)?;
    if start > end {
        return Err(bad());
    }
    Ok((start, end))
}

fn cue_snippets(cues: Vec<(f64, f64, String)>) -> Vec<Snippet> {
    cues.into_iter()
        .filter(|(_, _, text)| !text.is_empty())
        .enumerate()
        .map(|(i, (s, e, text))| Snippet::new(format!("asr-{:05}", i + 1), Channel::Asr, text, s, e))
        .collect()
}

/// Parses SubRip subtitles into ASR snippets, one per cue.
///
/// Cue numbers are ignored, multi-line text is joined with single spaces,
/// and cues whose text is empty are skipped.
pub fn parse_srt(bytes: &[u8]) -> Result<Vec<Snippet>> {
    let text = decode_utf8(bytes)?;
    if text.trim().is_empty() {
        return Err(Error::EmptyFile);
    }
    let mut cues = Vec::new();
    for block in blocks(text) {
        let timing_at = block
            .iter()
            .position(|(_, l)| l.contains("-->"))
            .ok_or_else(|| Error::MalformedTimestamp {
                line: block[0].0,
                text: block[0].1.to_string(),
            })?;
        if timing_at > 1 {
            return Err(Error::MalformedTimestamp {
                line: block[0].0,
                text: block[0].1.to_string(),
            });
        }
        let (line_no, timing) = block[timing_at];
        let (start, end) = parse_timing(line_no, timing, ',', false)?;
        let body: Vec<&str> = block[timing_at + 1..].iter().map(|(_, l)| *l).collect();
        cues.push((start, end, join_cue_text(&body)));
    }
    Ok(cue_snippets(cues))
}

/// Parses WebVTT into ASR snippets with the same semantics as [`parse_srt`].
/// NOTE, STYLE and REGION blocks are skipped.
pub fn parse_vtt(bytes: &[u8]) -> Result<Vec<Snippet>> {
    let text = decode_utf8(bytes)?;
    let first = text.lines().next().unwrap_or("");
    let is_header = first == "WEBVTT"
        || first.starts_with("WEBVTT ")
        || first.starts_with("WEBVTT\t");
    if !is_header {
        return Err(Error::MissingHeader);
    }
    let mut cues = Vec::new();
    // the first block is the header and its metadata
    for block in blocks(text).into_iter().skip(1) {
        let head = block[0].1;
        if head.starts_with("NOTE") || head.starts_with("STYLE") || head.starts_with("REGION") {
            continue;
        }
        let timing_at = block
            .iter()
            .position(|(_, l)| l.contains("-->"))
            .filter(|&p| p <= 1)
            .ok_or_else(|| Error::MalformedTimestamp {
                line: block[0].0,
                text: head.to_string(),
            })?;
        let (line_no, timing) = block[timing_at];
        let (start, end) = parse_timing(line_no, timing, '.', true)?;
        let body: Vec<&str> = block[timing_at + 1..].iter().map(|(_, l)| *l).collect();
        cues.push((start, end, join_cue_text(&body)));
    }
    Ok(cue_snippets(cues))
}

/// Parses an OCR Snippet JSONL file.
///
/// Bad lines are collected rather than fatal; empty-text lines are dropped and
/// counted. The file is rejected only if no line parses.
pub fn parse_ocr_jsonl(bytes: &[u8]) -> Result<Parsed<Snippet>> {
    parse_snippet_jsonl(bytes, Channel::Ocr)
}

/// Channel-checked Snippet JSONL reader shared by every snippet store.
pub fn parse_snippet_jsonl(bytes: &[u8], channel: Channel) -> Result<Parsed<Snippet>> {
    let text = decode_utf8(bytes)?;
    let mut out = Parsed::default();
    let mut seen = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        seen += 1;
        let line_no = i + 1;
        let parsed = parse_snippet_line(line).and_then(|s| {
            if s.channel != channel {
                return Err(Error::ChannelMismatch {
                    line: line_no,
                    expected: channel,
                    found: s.channel,
                }
                .to_string());
            }
            if s.text.trim().is_empty() {
                return Ok(None);
            }
            s.check_shape().map_err(|e| e.to_string())?;
            Ok(Some(s))
        });
        match parsed {
            Ok(Some(s)) => out.items.push(s),
            Ok(None) => out.dropped += 1,
            Err(message) => out.errors.push(LineError {
                line: line_no,
                message,
            }),
        }
    }
    if seen == 0 {
        return Err(Error::EmptyFile);
    }
    if out.items.is_empty() && out.dropped == 0 {
        return Err(Error::AllLinesFailed(out.errors));
    }
    Ok(out)
}

/// Parses detection JSONL with the same per-line tolerance as snippet stores.
pub fn parse_detection_jsonl(bytes: &[u8]) -> Result<Parsed<DetectionRecord>> {
    let text = decode_utf8(bytes)?;
    let mut out = Parsed::default();
    let mut seen = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        seen += 1;
        let parsed = serde_json::from_str::<DetectionRecord>(line)
            .map_err(|e| e.to_string())
            .and_then(|rec| {
                if !(rec.t.is_finite() && rec.t >= 0.0) {
                    return Err(format!("time {} is invalid", rec.t));
                }
                for o in &rec.objects {
                    o.validate().map_err(|e| e.to_string())?;
                }
                Ok(rec)
            });
        match parsed {
            Ok(rec) => out.items.push(rec),
            Err(message) => out.errors.push(LineError {
                line: i + 1,
                message,
            }),
        }
    }
    if seen == 0 {
        return Err(Error::EmptyFile);
    }
    if out.items.is_empty() {
        return Err(Error::AllLinesFailed(out.errors));
    }
    Ok(out)
}

/// A sampled frame with a text description, embedded to stand in for pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionedFrame {
    pub frame_index: u64,
    pub t: f64,
    pub caption: String,
}

impl CaptionedFrame {
    pub fn record(&self) -> FrameRecord {
        FrameRecord {
            frame_index: self.frame_index,
            t: self.t,
            embedding_ref: None,
        }
    }
}

/// Parses `{"frame_index", "t", "caption"}` lines; same tolerance as detections.
pub fn parse_frames_jsonl(bytes: &[u8]) -> Result<Parsed<CaptionedFrame>> {
    let text = decode_utf8(bytes)?;
    let mut out = Parsed::default();
    let mut seen = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        seen += 1;
        let parsed = serde_json::from_str::<CaptionedFrame>(line)
            .map_err(|e| e.to_string())
            .and_then(|f| {
                if !(f.t.is_finite() && f.t >= 0.0) {
                    return Err(format!("time {} is invalid", f.t));
                }
                if f.caption.trim().is_empty() {
                    return Err("caption is empty".to_string());
                }
                Ok(f)
            });
        match parsed {
            Ok(f) => out.items.push(f),
            Err(message) => out.errors.push(LineError {
                line: i + 1,
                message,
            }),
        }
    }
    if seen == 0 {
        return Err(Error::EmptyFile);
    }
    if out.items.is_empty() {
        return Err(Error::AllLinesFailed(out.errors));
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srt_single_cue() {
        let s = parse_srt(b"1\n00:00:01,500 --> 00:00:03,000\nhello\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].t_start, s[0].t_end), (1.5, 3.0));
        assert_eq!(s[0].text, "hello");
        assert_eq!(s[0].channel, Channel::Asr);
    }

    #[test]
    fn srt_multiline_bom_crlf() {
        let src = "\u{feff}1\r\n00:01:00,000 --> 00:01:02,250\r\nfirst line\r\n  second  line\r\n\r\n2\r\n01:00:00,000 --> 01:00:01,000\r\n<i>tagged</i>\r\n";
        let s = parse_srt(src.as_bytes()).unwrap();
        assert_eq!(s[0].text, "first line second line");
        assert_eq!(s[0].t_end, 62.25);
        assert_eq!(s[1].t_start, 3600.0);
        assert_eq!(s[1].text, "tagged");
        assert_eq!(s[1].id, "asr-00002");
    }

    #[test]
    fn srt_bad_seconds() {
        let err = parse_srt(b"1\n00:00:99,000 --> 00:00:99,500\nx\n").unwrap_err();
        assert!(matches!(err, Error::MalformedTimestamp { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn srt_empty_file() {
        assert!(matches!(parse_srt(b"  \n\n"), Err(Error::EmptyFile)));
    }

    #[test]
    fn vtt_minimal_and_header() {
        let s = parse_vtt(b"WEBVTT\n\n00:01.000 --> 00:02.000\nhi there\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].t_start, s[0].t_end), (1.0, 2.0));
        assert!(matches!(parse_vtt(b"00:01.000 --> 00:02.000\nhi\n"), Err(Error::MissingHeader)));
    }

    #[test]
    fn vtt_skips_note_and_style() {
        let src = "WEBVTT - title\nKind: captions\n\nNOTE a comment\nspanning --> lines\n\nSTYLE\n::cue { color: red }\n\ncue-1\n00:00:05.000 --> 00:00:06.000 align:start\n<v Ann>hello</v> world\n";
        let s = parse_vtt(src.as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].text, "hello world");
        assert_eq!(s[0].t_start, 5.0);
    }

    #[test]
    fn vtt_malformed() {
        assert!(matches!(
            parse_vtt(b"WEBVTT\n\n00:00:01.00 --> 00:00:02.000\nx\n"),
            Err(Error::MalformedTimestamp { line: 3, .. })
        ));
    }

    #[test]
    fn ocr_jsonl_tolerance() {
        let good = r#"{"id":"o1","channel":"ocr","text":"EXIT","t_start":1,"t_end":1}"#;
        let good2 = r#"{"id":"o2","channel":"ocr","text":"SALE","t":2}"#;
        let good3 = r#"{"id":"o3","channel":"ocr","text":"OPEN","t":3}"#;
        let three = format!("{good}\n{good2}\n{good3}\n");
        assert_eq!(parse_ocr_jsonl(three.as_bytes()).unwrap().items.len(), 3);

        let mixed = format!("{good}\n{{broken\n{good2}\n");
        let p = parse_ocr_jsonl(mixed.as_bytes()).unwrap();
        assert_eq!(p.items.len(), 2);
        assert_eq!(p.errors.len(), 1);
        assert_eq!(p.errors[0].line, 2);

        let wrong = r#"{"id":"a1","channel":"asr","text":"x","t":1}"#;
        let p = parse_ocr_jsonl(format!("{good}\n{wrong}\n").as_bytes()).unwrap();
        assert!(p.errors[0].message.contains("channel asr"), "{:?}", p.errors);

        let blank = r#"{"id":"o9","channel":"ocr","text":"   ","t":1}"#;
        let p = parse_ocr_jsonl(format!("{good}\n{blank}\n").as_bytes()).unwrap();
        assert_eq!((p.items.len(), p.dropped), (1, 1));

        assert!(matches!(parse_ocr_jsonl(b"nope\n"), Err(Error::AllLinesFailed(_))));
    }

    fn obj(label: &str, bbox: [f64; 4], c: f64) -> DetectedObject {
        DetectedObject {
            label: label.into(),
            bbox,
            confidence: c,
        }
    }

    #[test]
    fn scene_graph_format() {
        let g = serialize_scene_graph(&[DetectionRecord {
            frame_index: 0,
            t: 12.3,
            objects: vec![obj("person", [0.31, 0.42, 0.55, 0.88], 0.9)],
        }])
        .unwrap();
        assert_eq!(g.lines, ["t=12.3s: person(0.310,0.420,0.550,0.880)[c=0.900]"]);

        let g = serialize_scene_graph(&[DetectionRecord {
            frame_index: 1,
            t: 5.0,
            objects: vec![],
        }])
        .unwrap();
        assert_eq!(g.lines, ["t=5.0s: (none)"]);
    }

    #[test]
    fn scene_graph_orders_by_confidence_then_label() {
        let g = serialize_scene_graph(&[DetectionRecord {
            frame_index: 0,
            t: 1.0,
            objects: vec![
                obj("cup", [0.0, 0.0, 0.5, 0.5], 0.5),
                obj("dog", [0.1, 0.1, 0.2, 0.2], 0.9),
                obj("bag", [0.1, 0.1, 0.2, 0.2], 0.5),
            ],
        }])
        .unwrap();
        let line = &g.lines[0];
        let pos = |s: &str| line.find(s).unwrap();
        assert!(pos("dog") < pos("bag") && pos("bag") < pos("cup"));
    }

    #[test]
    fn scene_graph_rejects_bad_box() {
        let err = serialize_scene_graph(&[DetectionRecord {
            frame_index: 0,
            t: 1.0,
            objects: vec![obj("x", [0.5, 0.1, 0.4, 0.2], 0.5)],
        }]);
        assert!(matches!(err, Err(Error::InvalidBox(_))));
    }

    #[test]
    fn detection_jsonl() {
        let src = r#"{"frame_index":3,"t":1.5,"objects":[{"label":"car","box":[0.1,0.2,0.3,0.4],"confidence":0.8}]}
{"frame_index":4,"t":2.0,"objects":[{"label":"car","box":[0.5,0.2,0.3,0.4],"confidence":0.8}]}
"#;
        let p = parse_detection_jsonl(src.as_bytes()).unwrap();
        assert_eq!(p.items.len(), 1);
        assert_eq!(p.errors[0].line, 2);
    }
}
