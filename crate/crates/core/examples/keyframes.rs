//! Entropy weights and keyframe selection over synthetic frame similarities.

use chronorag::frames::{select_keyframes, weight_frames, SelectorConfig};
use chronorag::model::VideoRecord;

fn main() -> chronorag::Result<()> {
    let video = VideoRecord::new("clip", 120.0)?;
    let frames = video.uniform_frames(24);
    // a bump of similarity around t = 80s
    let sims: Vec<f64> = frames
        .iter()
        .map(|f| 0.15 + 0.7 * (-((f.t - 80.0) / 15.0).powi(2)).exp())
        .collect();

    let w = weight_frames(&[0.6, 0.2]);
    println!("alpha for sims (0.6, 0.2): ({:.6}, {:.6})", w.alpha[0], w.alpha[1]);

    let cfg = SelectorConfig { max_frames: 6, n_bins: 6, ..Default::default() };
    for f in select_keyframes(&frames, &sims, &cfg, video.duration_s)? {
        println!("keyframe {:>3} at {:>6.1}s", f.frame_index, f.t);
    }
    Ok(())
}
