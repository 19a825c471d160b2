//! Two identical snippets at different times: decay keeps the one near the anchors.

use chronorag::model::{Channel, Snippet};
use chronorag::temporal::{rescore, top_k, AnchorSet, DecayParams};

fn main() -> chronorag::Result<()> {
    let duration = 600.0;
    let anchors = AnchorSet { t_last: 590.0, t_first: 10.0, t_semantic: 330.0 };
    let pool = vec![
        (Snippet::new("early", Channel::Asr, "violet lantern harbor", 40.0, 42.0), 3.1),
        (Snippet::new("on-time", Channel::Asr, "violet lantern harbor", 329.0, 331.0), 3.1),
        (Snippet::new("late", Channel::Asr, "violet lantern harbor", 560.0, 562.0), 3.1),
    ];
    for (label, params) in [("with decay", DecayParams::default()), ("without decay", DecayParams::disabled())] {
        println!("{label}:");
        for h in top_k(rescore(pool.clone(), &anchors, &params, duration)?, 3) {
            println!("  {:<8} t={:>5.1} decay={:.4} score={:.4}", h.snippet.id, h.snippet.t_mid(), h.decay, h.score);
        }
    }
    Ok(())
}
