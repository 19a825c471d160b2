mod common;

use rand::Rng;

use chronorag::error::Error;
use chronorag::frames::{detect_on_keyframes, StubDetector};
use chronorag::ingest::{parse_detection_jsonl, parse_ocr_jsonl, parse_srt, parse_vtt, serialize_scene_graph};
use chronorag::model::FrameRecord;

fn stamp(t: f64, sep: char) -> String {
    let ms = (t * 1000.0).round() as u64;
    format!(
        "{:02}:{:02}:{:02}{sep}{:03}",
        ms / 3_600_000,
        ms / 60_000 % 60,
        ms / 1000 % 60,
        ms % 1000
    )
}

/// The same random cues written as SubRip and as WebVTT parse identically.
#[test]
fn srt_and_vtt_agree() {
    let mut r = common::rng(11);
    for _ in 0..50 {
        let mut srt = String::new();
        let mut vtt = String::from("WEBVTT\n\nNOTE generated\n\n");
        let mut t = 0.0;
        let n = r.random_range(1..30);
        let mut expected = Vec::new();
        for i in 0..n {
            let start = t + r.random_range(0..5000) as f64 / 1000.0;
            let end = start + r.random_range(1..8000) as f64 / 1000.0;
            t = end;
            let lines: Vec<String> = (0..r.random_range(1..3))
                .map(|_| common::random_query(&mut r))
                .collect();
            srt.push_str(&format!("{}\n{} --> {}\n{}\n\n", i + 1, stamp(start, ','), stamp(end, ','), lines.join("\n")));
            vtt.push_str(&format!("{} --> {} align:start\n<v Guide>{}</v>\n\n", stamp(start, '.'), stamp(end, '.'), lines.join("\n")));
            expected.push((start, end, lines.join(" ")));
        }
        let a = parse_srt(srt.as_bytes()).unwrap();
        let b = parse_vtt(vtt.as_bytes()).unwrap();
        assert_eq!(a, b);
        for (s, (start, end, text)) in a.iter().zip(&expected) {
            assert!((s.t_start - start).abs() < 1e-9 && (s.t_end - end).abs() < 1e-9);
            assert_eq!(&s.text, text);
        }
    }
}

#[test]
fn crlf_and_bom_are_accepted() {
    let srt = "\u{feff}1\r\n00:00:01,000 --> 00:00:02,500\r\nHello there\r\n\r\n";
    let s = parse_srt(srt.as_bytes()).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].text, "Hello there");
    assert_eq!((s[0].t_start, s[0].t_end), (1.0, 2.5));
}

#[test]
fn malformed_timestamp_names_the_line() {
    let srt = "1\n00:00:01,000 --> 00:00:02,000\nok\n\n2\n00:00:xx,000 --> 00:00:04,000\nbad\n";
    match parse_srt(srt.as_bytes()) {
        Err(Error::MalformedTimestamp { line, .. }) => assert_eq!(line, 6),
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse_vtt(b"1\n00:00.000 --> 00:01.000\nx\n"), Err(Error::MissingHeader)));
}

#[test]
fn ocr_jsonl_tolerates_bad_lines() {
    let text = concat!(
        r#"{"id":"o1","channel":"ocr","text":"EXIT","t_start":1,"t_end":2}"#, "\n",
        "not json\n",
        r#"{"id":"o2","channel":"ocr","text":"   ","t_start":1,"t_end":2}"#, "\n",
        r#"{"id":"o3","channel":"asr","text":"wrong channel","t_start":1,"t_end":2}"#, "\n",
        r#"{"id":"o4","channel":"ocr","text":"late","t_start":5,"t_end":3}"#, "\n",
    );
    let p = parse_ocr_jsonl(text.as_bytes()).unwrap();
    assert_eq!(p.items.len(), 1);
    assert_eq!(p.dropped, 1);
    assert_eq!(p.errors.iter().map(|e| e.line).collect::<Vec<_>>(), [2, 4, 5]);
    assert!(matches!(parse_ocr_jsonl(b"garbage\n"), Err(Error::AllLinesFailed(_))));
    assert!(matches!(parse_ocr_jsonl(b"\n\n"), Err(Error::EmptyFile)));
}

#[test]
fn detections_reject_bad_boxes_per_line() {
    let text = concat!(
        r#"{"frame_index":0,"t":0.5,"objects":[{"label":"cup","box":[0.1,0.1,0.2,0.2],"confidence":0.9}]}"#, "\n",
        r#"{"frame_index":1,"t":1.5,"objects":[{"label":"cup","box":[0.5,0.1,0.2,0.2],"confidence":0.9}]}"#, "\n",
    );
    let p = parse_detection_jsonl(text.as_bytes()).unwrap();
    assert_eq!(p.items.len(), 1);
    assert_eq!(p.errors[0].line, 2);
}

/// Five frames through the stub detector; the rendering is frozen.
#[test]
fn stub_scene_graph_golden() {
    let frames: Vec<FrameRecord> = (0..5)
        .map(|i| FrameRecord { frame_index: i, t: i as f64 * 2.5, embedding_ref: None })
        .collect();
    let dets = detect_on_keyframes(&frames, &StubDetector).unwrap();
    let text = serialize_scene_graph(&dets).unwrap().render();
    let golden = std::fs::read_to_string(common::golden("stub_scene_graph.txt")).unwrap();
    assert_eq!(text, golden);
    assert_eq!(text, serialize_scene_graph(&detect_on_keyframes(&frames, &StubDetector).unwrap()).unwrap().render());
}
