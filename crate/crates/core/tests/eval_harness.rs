use chronorag::error::Error;
use chronorag::eval::{gen_corpus, run_eval, run_seeds, sweep_threshold, EvalConfig, SyntheticSpec, DEFAULT_TAUS};
use chronorag::pipeline::AblationFlags;

fn spec(seed: u64) -> SyntheticSpec {
    serde_json::from_value(serde_json::json!({
        "seed": seed,
        "duration_s": 600.0,
        "n_snippets": 120,
        "n_duplicates": 20,
        "needle_time": 330.0,
        "vocab_size": 200,
        "query_terms": ["violet", "lantern", "harbor"]
    }))
    .unwrap()
}

fn no_tw() -> AblationFlags {
    AblationFlags { tw: false, ..AblationFlags::default() }
}

/// Without decay the needle ties its duplicates, and ties go to the earliest
/// midpoint, so the needle wins only when it is the earliest copy.
#[test]
fn without_decay_the_needle_is_one_of_many() {
    let cfg = EvalConfig::default();
    let mut hits = 0.0;
    for seed in 0..20 {
        let corpus = gen_corpus(&spec(seed)).unwrap();
        let r = run_eval(&corpus, &cfg, &no_tw()).unwrap();
        let earliest = corpus
            .asr
            .iter()
            .filter(|s| corpus.truth.duplicate_ids.contains(&s.id))
            .all(|s| s.t_mid() > corpus.truth.needle_time);
        assert_eq!(r.recall_at_1, if earliest { 1.0 } else { 0.0 }, "seed {seed}");
        hits += r.recall_at_1;
    }
    let chance = 1.0 / 21.0;
    assert!(hits / 20.0 <= chance + 0.1, "no-decay recall {}", hits / 20.0);
}

#[test]
fn decay_finds_the_needle_and_cuts_time_error() {
    let cfg = EvalConfig::default();
    let runs_tw = run_seeds(&spec(100), &cfg, &[0.3], &AblationFlags::default(), 20).unwrap();
    let runs_flat = run_seeds(&spec(100), &cfg, &[0.3], &no_tw(), 20).unwrap();
    let mean = |runs: &[chronorag::eval::SeedRun], f: fn(&chronorag::eval::EvalReport) -> f64| {
        runs.iter().map(|r| f(&r.report)).sum::<f64>() / runs.len() as f64
    };
    assert!(mean(&runs_tw, |r| r.recall_at_1) >= 0.9);
    assert!(mean(&runs_tw, |r| r.mean_time_error_s) < mean(&runs_flat, |r| r.mean_time_error_s));
    for (a, b) in runs_tw.iter().zip(&runs_flat) {
        assert_eq!(a.seed, b.seed);
        assert!(a.report.recall_at_1 >= b.report.recall_at_1);
    }
}

#[test]
fn uniform_frame_weights_still_find_the_needle() {
    let corpus = gen_corpus(&spec(5)).unwrap();
    let flags = AblationFlags { se: false, ..AblationFlags::default() };
    assert_eq!(run_eval(&corpus, &EvalConfig::default(), &flags).unwrap().recall_at_1, 1.0);
}

#[test]
fn reports_are_deterministic() {
    let a = gen_corpus(&spec(9)).unwrap();
    let b = gen_corpus(&spec(9)).unwrap();
    assert_eq!(a, b);
    let cfg = EvalConfig::default();
    let ra = sweep_threshold(&a, &cfg, &DEFAULT_TAUS, &AblationFlags::default()).unwrap();
    let rb = sweep_threshold(&b, &cfg, &DEFAULT_TAUS, &AblationFlags::default()).unwrap();
    for ((ta, x), (tb, y)) in ra.iter().zip(&rb) {
        assert_eq!(ta, tb);
        assert_eq!(x.untimed(), y.untimed());
    }
    let parallel = run_seeds(&spec(9), &cfg, &DEFAULT_TAUS, &AblationFlags::default(), 3).unwrap();
    for (run, (tau, r)) in parallel.iter().zip(&ra) {
        assert_eq!(run.tau, *tau);
        assert_eq!(run.report.untimed(), r.untimed());
    }
    assert_ne!(gen_corpus(&spec(10)).unwrap().asr, a.asr);
}

#[test]
fn corpus_matches_its_spec() {
    let s = spec(4);
    let c = gen_corpus(&s).unwrap();
    assert_eq!(c.asr.len(), 1 + 20 + 120 + 4);
    assert_eq!(c.ocr.len(), 30 + 4);
    assert_eq!(c.frames.len(), 64);
    let needle = c.asr.iter().find(|x| x.id == c.truth.needle_id).unwrap();
    for term in s.query_tokens() {
        assert!(needle.text.split(' ').any(|w| w == term));
    }
    assert!((needle.t_mid() - 330.0).abs() < 1e-9);
    let mut dups: Vec<_> = c.asr.iter().filter(|x| c.truth.duplicate_ids.contains(&x.id)).collect();
    assert_eq!(dups.len(), 20);
    dups.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    for w in dups.windows(2) {
        assert!(w[1].t_start >= w[0].t_end - 1e-9, "overlap");
    }
    for d in dups {
        assert_eq!(d.text, needle.text);
        assert!((d.t_mid() - 330.0).abs() >= 150.0 - 1e-9);
    }
}

#[test]
fn bad_specs_are_rejected() {
    let mut s = spec(1);
    s.n_duplicates = 0;
    assert!(matches!(gen_corpus(&s), Err(Error::InvalidSpec(_))));
    let mut s = spec(1);
    s.needle_time = 700.0;
    assert!(matches!(gen_corpus(&s), Err(Error::InvalidSpec(_))));
    let mut s = spec(1);
    s.n_duplicates = 500;
    assert!(matches!(gen_corpus(&s), Err(Error::InfeasibleSpec(_))));
    assert!(serde_json::from_str::<SyntheticSpec>(r#"{"seed":1,"bogus":2}"#).is_err());
    let c = gen_corpus(&spec(1)).unwrap();
    assert!(sweep_threshold(&c, &EvalConfig::default(), &[0.5, 0.1], &AblationFlags::default()).is_err());
}
