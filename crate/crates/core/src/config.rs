//! The JSON run configuration shared by every command.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::frames::{DetectorProvider, FixtureDetector, HttpDetector, SelectorConfig, StubDetector};
use crate::http::Endpoint;
use crate::pipeline::{
    EngineSettings, Fusion, HttpLvlm, LvlmProvider, RetrievalSettings, StubLvlm,
    DEFAULT_BUDGET_TOKENS, DEFAULT_CONTEXT_BUDGET, MIN_BUDGET_TOKENS,
};
use crate::temporal::{DecayParams, RescoreConfig, TimeNorm};
use crate::text_index::Bm25Params;
use crate::vector_index::{EmbeddingProvider, HashEmbedder, HttpEmbedder, DEFAULT_THRESHOLD};

pub const LVLM_ENV: &str = "CHRONORAG_LVLM";
pub const EMBED_ENV: &str = "CHRONORAG_EMBED";
pub const DETECT_ENV: &str = "CHRONORAG_DETECT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Stub,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Hash,
    Http,
    /// Stored vectors come from `embeddings_file`; queries use the hash embedder.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// Detections ingested alongside the transcripts.
    #[default]
    Fixture,
    Stub,
    Http,
}

/// Every tunable in one flat object. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dense acceptance threshold for retrieved snippets.
    pub tau: f64,
    /// Minimum raw similarity for a keyframe candidate.
    pub frame_tau: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub time_norm: TimeNorm,
    pub top_k: usize,
    pub pool_multiplier: usize,
    pub fusion: Fusion,
    pub budget_tokens: usize,
    pub context_budget: usize,
    pub n_bins: usize,
    pub max_frames: usize,
    /// Frames sampled when a video has no frame list.
    pub n_frames: usize,
    pub k1: f64,
    pub b: f64,
    pub embed_dim: usize,
    pub embed_seed: u64,
    pub frame_embed_seed: u64,
    pub provider: ProviderKind,
    pub lvlm_url: Option<String>,
    pub lvlm_model: String,
    pub embedder: EmbedderKind,
    pub embed_url: Option<String>,
    pub embeddings_file: Option<PathBuf>,
    pub detector: DetectorKind,
    pub detect_url: Option<String>,
    pub timeout_s: f64,
    pub corpus_dir: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let eval = EvalConfig::default();
        RunConfig {
            tau: DEFAULT_THRESHOLD,
            frame_tau: SelectorConfig::default().sim_threshold,
            lambda0: 1.0,
            lambda1: 1.0,
            lambda2: 1.0,
            time_norm: TimeNorm::NormalizedByDuration,
            top_k: RescoreConfig::default().top_k,
            pool_multiplier: RescoreConfig::default().pool_multiplier,
            fusion: Fusion::Lexical,
            budget_tokens: DEFAULT_BUDGET_TOKENS,
            context_budget: DEFAULT_CONTEXT_BUDGET,
            n_bins: SelectorConfig::default().n_bins,
            max_frames: SelectorConfig::default().max_frames,
            n_frames: crate::model::DEFAULT_SAMPLED_FRAMES,
            k1: Bm25Params::default().k1,
            b: Bm25Params::default().b,
            embed_dim: eval.embed_dim,
            embed_seed: eval.text_seed,
            frame_embed_seed: eval.frame_seed,
            provider: ProviderKind::Stub,
            lvlm_url: None,
            lvlm_model: "default".to_string(),
            embedder: EmbedderKind::Hash,
            embed_url: None,
            embeddings_file: None,
            detector: DetectorKind::Fixture,
            detect_url: None,
            timeout_s: crate::http::DEFAULT_TIMEOUT.as_secs_f64(),
            corpus_dir: None,
            index_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.tau.is_finite() && self.frame_tau.is_finite()) {
            return fail("tau and frame_tau must be finite".into());
        }
        self.decay().validate()?;
        if self.top_k == 0 || self.pool_multiplier == 0 {
            return fail("top_k and pool_multiplier must be positive".into());
        }
        if self.budget_tokens < MIN_BUDGET_TOKENS {
            return fail(format!("budget_tokens must be at least {MIN_BUDGET_TOKENS}"));
        }
        self.selector().validate()?;
        if self.n_frames == 0 {
            return fail("n_frames must be positive".into());
        }
        self.bm25().validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.embed_dim < 8 {
            return fail("embed_dim must be at least 8".into());
        }
        if self.embedder == EmbedderKind::File && self.embeddings_file.is_none() {
            return fail("embedder \"file\" needs embeddings_file".into());
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return fail("timeout_s must be positive".into());
        }
        Ok(())
    }

    pub fn decay(&self) -> DecayParams {
        DecayParams {
            lambdas: [self.lambda0, self.lambda1, self.lambda2],
            time_norm: self.time_norm,
        }
    }

    pub fn bm25(&self) -> Bm25Params {
        Bm25Params {
            k1: self.k1,
            b: self.b,
        }
    }

    pub fn selector(&self) -> SelectorConfig {
        SelectorConfig {
            sim_threshold: self.frame_tau,
            max_frames: self.max_frames,
            n_bins: self.n_bins,
            entropy_weighting: true,
        }
    }

    pub fn engine_settings(&self) -> EngineSettings {
        EngineSettings {
            retrieval: RetrievalSettings {
                decay: self.decay(),
                rescore: RescoreConfig {
                    top_k: self.top_k,
                    pool_multiplier: self.pool_multiplier,
                },
                fusion: self.fusion,
                tau: self.tau,
            },
            selector: self.selector(),
            budget_tokens: self.budget_tokens,
            context_budget: self.context_budget,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            settings: self.engine_settings(),
            bm25: self.bm25(),
            embed_dim: self.embed_dim,
            text_seed: self.embed_seed,
            frame_seed: self.frame_embed_seed,
        }
    }

    /// Pretty JSON of every effective value.
    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn endpoint(&self, url: &Option<String>, env: &str) -> Result<Endpoint> {
        let ep = match url {
            Some(u) => Endpoint::new(u.clone())
                .with_token(std::env::var(format!("{env}_KEY")).ok()),
            None => Endpoint::from_env(env)?,
        };
        Ok(ep.with_timeout(Duration::from_secs_f64(self.timeout_s)))
    }

    pub fn lvlm(&self) -> Result<Arc<dyn LvlmProvider>> {
        Ok(match self.provider {
            ProviderKind::Stub => Arc::new(StubLvlm),
            ProviderKind::Http => Arc::new(HttpLvlm::new(
                self.endpoint(&self.lvlm_url, LVLM_ENV)?,
                self.lvlm_model.clone(),
            )?),
        })
    }

    /// Embedder for snippet text and queries.
    pub fn text_embedder(&self) -> Result<Arc<dyn EmbeddingProvider>> {
        self.embedder_with_seed(self.embed_seed)
    }

    /// Embedder for frame captions and the query in frame space.
    pub fn frame_embedder(&self) -> Result<Arc<dyn EmbeddingProvider>> {
        self.embedder_with_seed(self.frame_embed_seed)
    }

    fn embedder_with_seed(&self, seed: u64) -> Result<Arc<dyn EmbeddingProvider>> {
        Ok(match self.embedder {
            EmbedderKind::Hash | EmbedderKind::File => Arc::new(HashEmbedder::new(self.embed_dim, seed)),
            EmbedderKind::Http => Arc::new(HttpEmbedder::new(
                self.endpoint(&self.embed_url, EMBED_ENV)?,
                self.embed_dim,
            )?),
        })
    }

    /// `fixture` is the ingested detections file, used by [`DetectorKind::Fixture`].
    pub fn detector(&self, fixture: &Path) -> Result<Arc<dyn DetectorProvider>> {
        Ok(match self.detector {
            DetectorKind::Fixture => {
                if fixture.exists() {
                    Arc::new(FixtureDetector::load(fixture)?)
                } else {
                    Arc::new(FixtureDetector::default())
                }
            }
            DetectorKind::Stub => Arc::new(StubDetector),
            DetectorKind::Http => Arc::new(HttpDetector::new(
                self.endpoint(&self.detect_url, DETECT_ENV)?,
            )?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_rejected() {
        let e = RunConfig::from_json(r#"{"tua": 0.5}"#).unwrap_err();
        assert!(matches!(e, Error::Config(ref m) if m.contains("tua")));
        assert_eq!(e.kind().exit_code(), 1);
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig {
            tau: 0.45,
            fusion: Fusion::MaxFuse,
            lambda2: 2.5,
            ..Default::default()
        };
        assert_eq!(RunConfig::from_json(&c.echo()).unwrap(), c);
    }

    #[test]
    fn settings_follow_keys() {
        let c = RunConfig::from_json(r#"{"lambda0": 0, "lambda1": 0.5, "lambda2": 2, "top_k": 4, "frame_tau": 0.2}"#).unwrap();
        let s = c.engine_settings();
        assert_eq!(s.retrieval.decay.lambdas, [0.0, 0.5, 2.0]);
        assert_eq!(s.retrieval.rescore.pool(), 12);
        assert_eq!(s.selector.sim_threshold, 0.2);
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            r#"{"lambda1": -1}"#,
            r#"{"budget_tokens": 100}"#,
            r#"{"n_bins": 32, "max_frames": 16}"#,
            r#"{"b": 2}"#,
            r#"{"embedder": "file"}"#,
            r#"{"fusion": "fancy"}"#,
        ] {
            assert!(matches!(RunConfig::from_json(bad), Err(Error::Config(_))), "{bad}");
        }
    }
}
