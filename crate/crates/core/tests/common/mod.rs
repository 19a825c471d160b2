//! Independent reference computations shared by the integration tests.
//! Nothing here calls the scoring code under test.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chronorag::model::{Channel, Snippet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Okapi BM25 straight from the definition, recomputing every statistic per call.
pub fn bm25_oracle(docs: &[(String, String)], query: &str, k1: f64, b: f64) -> Vec<(String, f64)> {
    let tokenized: Vec<(String, Vec<String>)> =
        docs.iter().map(|(id, t)| (id.clone(), words(t))).collect();
    let n = tokenized.len() as f64;
    let avgdl = tokenized.iter().map(|(_, w)| w.len() as f64).sum::<f64>() / n.max(1.0);
    let q = words(query);
    let mut scored: Vec<(String, f64)> = tokenized
        .iter()
        .map(|(id, doc)| {
            let dl = doc.len() as f64;
            let mut s = 0.0;
            for term in &q {
                let tf = doc.iter().filter(|w| *w == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = tokenized.iter().filter(|(_, d)| d.contains(term)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln().max(0.0);
                let norm = if avgdl > 0.0 { dl / avgdl } else { 1.0 };
                s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
            }
            (id.clone(), s)
        })
        .filter(|(_, s)| *s > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored
}

/// Entropy weights with every intermediate written out.
pub fn alpha_oracle(sims: &[f64]) -> Vec<f64> {
    let pos: Vec<f64> = sims.iter().map(|&s| if s > 0.0 { s } else { 0.0 }).collect();
    let z: f64 = pos.iter().sum();
    if z == 0.0 {
        return vec![1.0 / sims.len() as f64; sims.len()];
    }
    let mut h = Vec::new();
    for &s in &pos {
        let p = s / z;
        h.push(if p == 0.0 { 0.0 } else { -p * p.ln() });
    }
    let hz: f64 = h.iter().sum();
    if hz == 0.0 {
        return vec![1.0 / sims.len() as f64; sims.len()];
    }
    h.iter().map(|x| x / hz).collect()
}

/// `exp(-(λ0|a0-t| + λ1|a1-t| + λ2|a2-t|))` on times divided by `duration`.
pub fn decay_oracle(t: f64, anchors: [f64; 3], lambdas: [f64; 3], duration: f64) -> f64 {
    let t = t / duration;
    let e = lambdas[0] * (anchors[0] / duration - t).abs()
        + lambdas[1] * (anchors[1] / duration - t).abs()
        + lambdas[2] * (anchors[2] / duration - t).abs();
    (-e).exp()
}

pub fn dot64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| (x / n) as f32).collect();
        }
    }
}

pub const SMALL_VOCAB: [&str; 12] = [
    "red", "boat", "sign", "harbor", "lamp", "fish", "gate", "crane", "bread", "tower", "rope",
    "salt",
];

/// Random snippets over a small vocabulary so terms collide often.
pub fn random_snippets(rng: &mut ChaCha8Rng, n: usize, channel: Channel, duration: f64) -> Vec<Snippet> {
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=8);
            let text: Vec<&str> = (0..len)
                .map(|_| SMALL_VOCAB[rng.random_range(0..SMALL_VOCAB.len())])
                .collect();
            let t = rng.random_range(0.0..duration - 1.0);
            Snippet::new(format!("{}-{:04}", channel.as_str(), i), channel, text.join(" "), t, t + 1.0)
        })
        .collect()
}

pub fn random_query(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=3);
    (0..n)
        .map(|_| SMALL_VOCAB[rng.random_range(0..SMALL_VOCAB.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn counts(items: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for i in items {
        *m.entry(i.as_str()).or_default() += 1;
    }
    m
}

pub fn demo_raw() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("demo/raw")
}

pub fn golden(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}
