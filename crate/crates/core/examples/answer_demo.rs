//! Ingests, indexes and answers a question on the bundled demo with the stub model.
//!
//! cargo run --example answer_demo -- "What does the sign at the harbor say?"

use std::path::Path;

use chronorag::cli::{cmd_answer, cmd_build, cmd_ingest};
use chronorag::config::RunConfig;
use chronorag::pipeline::AblationFlags;

fn main() -> chronorag::Result<()> {
    let question = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "What did the guide mention about the lantern festival?".into());
    let work = std::env::temp_dir().join(format!("chronorag-demo-{}", std::process::id()));
    let raw = Path::new(env!("CARGO_MANIFEST_DIR")).join("demo/raw");

    print!("{}", cmd_ingest(&[raw], &work.join("store"))?);
    let cfg = RunConfig::default();
    print!("{}", cmd_build(&work.join("store"), &work.join("index"), &cfg)?);
    let (answer, trace) = cmd_answer(&question, None, &work.join("index"), &cfg, AblationFlags::default())?;
    println!("\nQ: {question}\nA: {answer}");
    println!("keyframes: {:?}", trace.keyframes.iter().map(|k| k.t).collect::<Vec<_>>());
    for (ch, hits) in &trace.hits {
        for h in hits.iter().take(3) {
            println!("  {ch} {} t={:.1} score={:.3}", h.id, h.t_mid, h.score);
        }
    }
    let _ = std::fs::remove_dir_all(&work);
    Ok(())
}
