//! Parses the demo subtitles, OCR lines and detections, then prints a scene graph.

use std::path::Path;

use chronorag::ingest::{parse_detection_jsonl, parse_ocr_jsonl, parse_srt, serialize_scene_graph};

fn main() -> chronorag::Result<()> {
    let raw = Path::new(env!("CARGO_MANIFEST_DIR")).join("demo/raw");
    let read = |name: &str| std::fs::read(raw.join(name)).expect("demo file");

    let cues = parse_srt(&read("guide.srt"))?;
    println!("{} subtitle cues", cues.len());
    for s in cues.iter().take(3) {
        println!("  [{:>6.1}-{:>6.1}] {}", s.t_start, s.t_end, s.text);
    }

    let ocr = parse_ocr_jsonl(&read("screen.jsonl"))?;
    println!("{} OCR lines ({} bad)", ocr.items.len(), ocr.errors.len());

    let dets = parse_detection_jsonl(&read("camera.det.jsonl"))?;
    let graph = serialize_scene_graph(&dets.items[..4])?;
    println!("scene graph of the first four frames:\n{}", graph.render());
    Ok(())
}
