//! Two-stage question answering over a video's text channels.
//!
//! 1. The answer model rewrites the question into per-channel requests.
//! 2. Each non-null request is retrieved and temporally rescored; keyframes are
//!    selected and their detections rendered as a scene graph.
//! 3. The model generates background context and rephrasings.
//! 4. Everything is composed into one prompt and answered.

mod prompt;
mod provider;
mod retrieve;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use prompt::{
    compose, count_tokens, parse_sections, render_hit, truncate_at_sentence, AugmentedQuery,
    Evidence, KeyframeRef, PromptBundle, Section, DEFAULT_BUDGET_TOKENS, MIN_BUDGET_TOKENS,
};
pub use provider::{DecodeParams, HttpLvlm, LvlmProvider, StubLvlm};
pub use retrieve::{candidate_pool, retrieve_channel, ChannelIndex, Fusion, RetrievalSettings};

use crate::error::{Error, Result};
use crate::frames::{detect_on_keyframes, select_keyframes, DetectorProvider, SelectorConfig};
use crate::ingest::{serialize_scene_graph, DetectionRecord, SceneGraphText};
use crate::model::{Channel, FrameRecord, QueryRequest, RetrievalRequest, ScoredSnippet, VideoRecord};
use crate::temporal::{compute_anchors, AnchorSet, DecayParams};
use crate::vector_index::{EmbeddingProvider, FlatVectorIndex};

/// Instruction for turning a question into per-channel retrieval requests.
/// Written for this crate; no canonical wording exists.
pub const DECOUPLE_PROMPT: &str = "You prepare retrieval requests for a video question \
answering system. You cannot see the video. Read the user's question and decide what to look \
up in three sources: \"asr\" (the speech transcript), \"ocr\" (text shown on screen), and \
\"det\" (objects visible in frames). Reply with exactly one JSON object of the form \
{\"asr\": string or null, \"ocr\": string or null, \"det\": string or null}. Use null for any \
source that is not needed. Each string holds only the key words to search for.";

/// Instruction for background context and rephrasings.
pub const AUGMENT_PROMPT: &str = "Given a question, first generate a helpful background \
context. Then, provide 2-3 alternative phrasings of the question with similar meaning.\n\
Reply in this format:\nContext: <one paragraph>\nPhrasings:\n1. <phrasing>\n2. <phrasing>";

pub const ANSWER_SYSTEM_PROMPT: &str = "You answer questions about a video. You are given its \
keyframes and evidence extracted from it, organized in sections: a scene graph of detected \
objects, speech transcript excerpts, on-screen text, background context, the question, and \
rephrasings of it. Prefer evidence from the video over general knowledge and answer concisely.";

/// Default token budget for generated background context.
pub const DEFAULT_CONTEXT_BUDGET: usize = 512;

/// Switches that remove one mechanism at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    /// Entropy weighting in keyframe selection.
    pub se: bool,
    /// Temporal decay in rescoring.
    pub tw: bool,
    pub ocr: bool,
    pub asr: bool,
    /// Generated background context and rephrasings.
    pub context: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            se: true,
            tw: true,
            ocr: true,
            asr: true,
            context: true,
        }
    }
}

#[derive(Deserialize)]
struct RawRequest {
    asr: Option<String>,
    ocr: Option<String>,
    det: Option<String>,
}

fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

/// Asks the model for per-channel requests.
///
/// Unparseable replies fall back to the question text on every channel.
/// Returns any warning alongside the request.
pub fn decouple_query(
    lvlm: &dyn LvlmProvider,
    q: &QueryRequest,
) -> Result<(RetrievalRequest, Option<String>)> {
    let reply = lvlm.complete(DECOUPLE_PROMPT, &q.query_text, &DecodeParams::default())?;
    let parsed = extract_json_object(&reply)
        .and_then(|j| serde_json::from_str::<RawRequest>(j).ok());
    match parsed {
        Some(r) => Ok((
            RetrievalRequest {
                asr: r.asr,
                ocr: r.ocr,
                det: r.det,
            }
            .normalized(),
            None,
        )),
        None => {
            let warning = "decoupling reply was not a JSON request; searching every channel with the question".to_string();
            tracing::warn!("{warning}");
            Ok((RetrievalRequest::broadcast(&q.query_text), Some(warning)))
        }
    }
}

/// Parses a `Context: ... Phrasings: 1. ... 2. ...` reply.
fn parse_augmentation(reply: &str) -> Option<(String, Vec<String>)> {
    let mut context = Vec::new();
    let mut phrasings = Vec::new();
    let mut in_phrasings = false;
    for line in reply.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let numbered = trimmed
            .split_once(['.', ')'])
            .filter(|(n, _)| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
            .map(|(_, rest)| rest.trim());
        if let Some(p) = numbered {
            in_phrasings = true;
            if !p.is_empty() {
                phrasings.push(p.to_string());
            }
        } else if trimmed.to_ascii_lowercase().starts_with("phrasings") {
            in_phrasings = true;
        } else if !in_phrasings {
            let text = trimmed
                .strip_prefix("Context:")
                .or_else(|| trimmed.strip_prefix("context:"))
                .unwrap_or(trimmed)
                .trim();
            if !text.is_empty() {
                context.push(text.to_string());
            }
        }
    }
    phrasings.truncate(3);
    (phrasings.len() >= 2).then(|| (context.join(" "), phrasings))
}

/// Generates background context and rephrasings in one model call.
///
/// Provider failures and malformed replies degrade to the original question
/// alone, with the reason kept in `warning`. Context longer than
/// `context_budget` tokens is cut at a sentence boundary.
pub fn augment_query(
    lvlm: &dyn LvlmProvider,
    q: &QueryRequest,
    context_budget: usize,
) -> AugmentedQuery {
    let degraded = |why: String| {
        tracing::warn!("{why}");
        AugmentedQuery {
            warning: Some(why),
            ..AugmentedQuery::original_only(&q.query_text)
        }
    };
    let reply = match lvlm.complete(AUGMENT_PROMPT, &q.query_text, &DecodeParams::default()) {
        Ok(r) => r,
        Err(e) => return degraded(format!("augmentation unavailable: {e}")),
    };
    match parse_augmentation(&reply) {
        Some((context, reformulations)) => AugmentedQuery {
            original: q.query_text.clone(),
            reformulations,
            generated_context: truncate_at_sentence(&context, context_budget),
            warning: None,
        },
        None => degraded("augmentation reply had fewer than two phrasings".to_string()),
    }
}

/// Sends the composed bundle to the model and returns its reply verbatim.
pub fn answer(lvlm: &dyn LvlmProvider, bundle: &PromptBundle) -> Result<String> {
    tracing::info!(
        bundle = %bundle.hash(),
        evidence_tokens = bundle.evidence.token_estimate,
        total_tokens = bundle.total_tokens(),
        "answering"
    );
    lvlm.complete(ANSWER_SYSTEM_PROMPT, &bundle.rendered, &DecodeParams::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSettings {
    pub retrieval: RetrievalSettings,
    pub selector: SelectorConfig,
    pub budget_tokens: usize,
    pub context_budget: usize,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            retrieval: RetrievalSettings::default(),
            selector: SelectorConfig::default(),
            budget_tokens: DEFAULT_BUDGET_TOKENS,
            context_budget: DEFAULT_CONTEXT_BUDGET,
        }
    }
}

/// What retrieval produced for one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub anchors: AnchorSet,
    pub decay: DecayParams,
    pub asr_hits: Vec<ScoredSnippet>,
    pub ocr_hits: Vec<ScoredSnippet>,
    pub keyframes: Vec<FrameRecord>,
    pub detections: Vec<DetectionRecord>,
    pub scene_graph: SceneGraphText,
}

impl Retrieval {
    pub fn evidence(&self) -> Evidence {
        Evidence::new(
            self.asr_hits.clone(),
            self.ocr_hits.clone(),
            self.scene_graph.clone(),
        )
    }

    pub fn hits(&self, channel: Channel) -> &[ScoredSnippet] {
        match channel {
            Channel::Asr => &self.asr_hits,
            Channel::Ocr => &self.ocr_hits,
            Channel::Det => &[],
        }
    }
}

/// One full question-answering run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub request: RetrievalRequest,
    pub retrieval: Retrieval,
    pub bundle: PromptBundle,
    pub answer: String,
    pub warnings: Vec<String>,
}

/// Loaded indices and providers for one video.
pub struct Engine {
    pub video: VideoRecord,
    pub frames: Vec<FrameRecord>,
    pub frame_index: FlatVectorIndex,
    pub channels: BTreeMap<Channel, ChannelIndex>,
    pub text_embedder: Arc<dyn EmbeddingProvider>,
    pub frame_embedder: Arc<dyn EmbeddingProvider>,
    pub detector: Arc<dyn DetectorProvider>,
    pub lvlm: Arc<dyn LvlmProvider>,
    pub settings: EngineSettings,
}

impl Engine {
    /// Retrieves evidence for `request`; channels run concurrently.
    pub fn retrieve(
        &self,
        query: &QueryRequest,
        request: &RetrievalRequest,
        flags: &AblationFlags,
    ) -> Result<Retrieval> {
        // the visual request, when there is one, drives both the semantic anchor and keyframes
        let frame_text = request.det.as_deref().unwrap_or(&query.query_text);
        let frame_vec = self.frame_embedder.embed_one(frame_text)?;
        let anchors = compute_anchors(&self.frames, &frame_vec, &self.frame_index)?;
        let mut settings = self.settings.retrieval;
        if !flags.tw {
            settings.decay = DecayParams {
                lambdas: [0.0; 3],
                ..settings.decay
            };
        }

        let wanted: Vec<(Channel, &str, &ChannelIndex)> = [(Channel::Asr, flags.asr), (Channel::Ocr, flags.ocr)]
            .into_iter()
            .filter(|&(_, on)| on)
            .filter_map(|(ch, _)| Some((ch, request.get(ch)?, self.channels.get(&ch)?)))
            .collect();
        let duration = self.video.duration_s;
        let results: Vec<(Channel, Result<Vec<ScoredSnippet>>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = wanted
                .iter()
                .map(|&(ch, text, index)| {
                    let embedder = &self.text_embedder;
                    let settings = &settings;
                    let anchors = &anchors;
                    scope.spawn(move || {
                        let run = || -> Result<Vec<ScoredSnippet>> {
                            if index.is_empty() {
                                return Ok(Vec::new());
                            }
                            let qv = embedder.embed_one(text)?;
                            retrieve_channel(text, &qv, index, anchors, settings, duration)
                        };
                        (ch, run())
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("retrieval thread panicked"))
                .collect()
        });
        let mut asr_hits = Vec::new();
        let mut ocr_hits = Vec::new();
        for (ch, hits) in results {
            let hits = hits?;
            match ch {
                Channel::Asr => asr_hits = hits,
                _ => ocr_hits = hits,
            }
        }

        let sims: Vec<f64> = self
            .frames
            .iter()
            .map(|f| self.frame_index.similarity(&frame_vec, &f.key()).unwrap_or(0.0))
            .collect();
        let selector = SelectorConfig {
            entropy_weighting: flags.se,
            ..self.settings.selector
        };
        let keyframes = select_keyframes(&self.frames, &sims, &selector, duration)?;
        let detections = if request.det.is_some() {
            detect_on_keyframes(&keyframes, self.detector.as_ref())?
        } else {
            Vec::new()
        };
        let scene_graph = serialize_scene_graph(&detections)?;

        Ok(Retrieval {
            anchors,
            decay: settings.decay,
            asr_hits,
            ocr_hits,
            keyframes,
            detections,
            scene_graph,
        })
    }

    /// Decouple, retrieve, augment, compose, answer.
    pub fn run(&self, query: &QueryRequest, flags: &AblationFlags) -> Result<RunOutput> {
        let mut warnings = Vec::new();
        let (request, warning) =
            decouple_query(self.lvlm.as_ref(), query).map_err(|e| e.at_stage("decouple"))?;
        warnings.extend(warning);
        let retrieval = self
            .retrieve(query, &request, flags)
            .map_err(|e| e.at_stage("retrieve"))?;
        let augmented = if flags.context {
            augment_query(self.lvlm.as_ref(), query, self.settings.context_budget)
        } else {
            AugmentedQuery::original_only(&query.query_text)
        };
        warnings.extend(augmented.warning.clone());
        let bundle = compose(
            &retrieval.keyframes,
            retrieval.evidence(),
            augmented,
            self.settings.budget_tokens,
        )
        .map_err(|e| e.at_stage("compose"))?;
        let answer = answer(self.lvlm.as_ref(), &bundle).map_err(|e| e.at_stage("answer"))?;
        Ok(RunOutput {
            request,
            retrieval,
            bundle,
            answer,
            warnings,
        })
    }
}

/// Fails with [`Error::ProviderUnavailable`]; stands in for a dead endpoint.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnavailableLvlm {
    pub retriable: bool,
}

impl LvlmProvider for UnavailableLvlm {
    fn complete(&self, _: &str, _: &str, _: &DecodeParams) -> Result<String> {
        Err(Error::provider("provider is down", self.retriable))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Canned(&'static str);

    impl LvlmProvider for Canned {
        fn complete(&self, _: &str, _: &str, _: &DecodeParams) -> Result<String> {
            Ok(self.0.to_string())
        }
    }

    fn q(text: &str) -> QueryRequest {
        QueryRequest::new(text, "v").unwrap()
    }

    #[test]
    fn decouple_with_stub() {
        let (r, w) = decouple_query(&StubLvlm, &q("What does the sign say?")).unwrap();
        assert_eq!(
            r,
            RetrievalRequest {
                asr: None,
                ocr: Some("sign".into()),
                det: Some("sign".into()),
            }
        );
        assert!(w.is_none());
    }

    #[test]
    fn decouple_falls_back_on_garbage() {
        let (r, w) = decouple_query(&Canned("sure, here you go"), &q("Who wins?")).unwrap();
        assert_eq!(r, RetrievalRequest::broadcast("Who wins?"));
        assert!(w.is_some());
    }

    #[test]
    fn decouple_all_null_is_empty() {
        let (r, _) =
            decouple_query(&Canned(r#"{"asr": null, "ocr": null, "det": null}"#), &q("x")).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn decouple_json_inside_prose() {
        let (r, _) = decouple_query(
            &Canned("Here:\n```json\n{\"asr\": \"goal\", \"ocr\": null, \"det\": \"\"}\n```"),
            &q("x"),
        )
        .unwrap();
        assert_eq!(r.asr.as_deref(), Some("goal"));
        assert_eq!(r.det, None);
    }

    #[test]
    fn decouple_propagates_provider_error() {
        assert!(matches!(
            decouple_query(&UnavailableLvlm { retriable: true }, &q("x")),
            Err(Error::ProviderUnavailable { retriable: true, .. })
        ));
    }

    #[test]
    fn augment_with_stub() {
        let aq = augment_query(&StubLvlm, &q("What does the sign say?"), 512);
        assert_eq!(aq.reformulations.len(), 2);
        assert!(aq.generated_context.contains("sign"));
        assert!(aq.warning.is_none());
    }

    #[test]
    fn augment_degrades() {
        let aq = augment_query(&UnavailableLvlm::default(), &q("Why?"), 512);
        assert_eq!(aq.original, "Why?");
        assert!(aq.reformulations.is_empty() && aq.generated_context.is_empty());
        assert!(aq.warning.is_some());

        let aq = augment_query(&Canned("Context: only context"), &q("Why?"), 512);
        assert!(aq.reformulations.is_empty());
    }

    #[test]
    fn augment_caps_phrasings_and_context() {
        let reply = "Some background. More of it here. And a third sentence.\n1) a\n2) b\n3) c\n4) d";
        let aq = augment_query(&Canned(reply), &q("x"), 6);
        assert_eq!(aq.reformulations, ["a", "b", "c"]);
        assert_eq!(aq.generated_context, "Some background. More of it here.");
    }

    #[test]
    fn answer_is_verbatim_and_deterministic() {
        let bundle = compose(&[], Evidence::default(), AugmentedQuery::original_only("x"), 256).unwrap();
        assert_eq!(answer(&Canned("  raw reply \n"), &bundle).unwrap(), "  raw reply \n");
        let a = answer(&StubLvlm, &bundle).unwrap();
        assert_eq!(a, answer(&StubLvlm, &bundle).unwrap());
        assert!(answer(&UnavailableLvlm { retriable: true }, &bundle)
            .unwrap_err()
            .is_retriable());
    }
}
