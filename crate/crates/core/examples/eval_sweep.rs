//! Needle-in-duplicates evaluation: decay on and off, then a threshold sweep.

use chronorag::eval::{render_table, run_seeds, EvalConfig, SyntheticSpec, DEFAULT_TAUS};
use chronorag::pipeline::AblationFlags;

fn main() -> chronorag::Result<()> {
    let spec: SyntheticSpec = serde_json::from_str(include_str!("../demo/eval_spec.json"))?;
    let cfg = EvalConfig::default();
    let tau = cfg.settings.retrieval.tau;

    let on = run_seeds(&spec, &cfg, &[tau], &AblationFlags::default(), 5)?;
    let off = run_seeds(&spec, &cfg, &[tau], &AblationFlags { tw: false, ..Default::default() }, 5)?;
    println!("with temporal decay:\n{}", render_table(&on));
    println!("without:\n{}", render_table(&off));

    let sweep = run_seeds(&spec, &cfg, &DEFAULT_TAUS, &AblationFlags::default(), 1)?;
    println!("threshold sweep:\n{}", render_table(&sweep));
    Ok(())
}
