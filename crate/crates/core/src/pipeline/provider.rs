//! Answer-model providers: a chat-completions client and a deterministic stub.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{Endpoint, JsonClient};
use crate::text_index::tokenize;

use super::prompt::{parse_sections, Section};
use super::{ANSWER_SYSTEM_PROMPT, AUGMENT_PROMPT, DECOUPLE_PROMPT};

/// Decoding settings sent with every call. Temperature 0 keeps runs comparable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

/// The external video-language model.
pub trait LvlmProvider: Send + Sync {
    fn complete(&self, system_prompt: &str, user_prompt: &str, params: &DecodeParams)
        -> Result<String>;
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: Option<String>,
}

/// `POST {base_url}/chat/completions` with a system and a user message.
pub struct HttpLvlm {
    client: JsonClient,
    model: String,
}

impl HttpLvlm {
    pub fn new(endpoint: Endpoint, model: impl Into<String>) -> Result<Self> {
        Ok(HttpLvlm {
            client: JsonClient::new(endpoint)?,
            model: model.into(),
        })
    }
}

impl LvlmProvider for HttpLvlm {
    fn complete(&self, system: &str, user: &str, params: &DecodeParams) -> Result<String> {
        let req = ChatRequest {
            model: &self.model,
            messages: [
                ChatMessage {
                    role: "system",
                    content: system,
                },
                ChatMessage {
                    role: "user",
                    content: user,
                },
            ],
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let resp: ChatResponse = self.client.post("/chat/completions", &req)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::provider("completion has no content", false))
    }
}

/// Words the stub treats as grammar rather than content.
const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "an", "and", "any", "are", "as", "at", "be", "been", "before",
    "being", "between", "but", "by", "can", "could", "did", "do", "does", "doing", "done",
    "during", "each", "for", "from", "had", "has", "have", "he", "her", "his", "how", "i", "if",
    "in", "into", "is", "it", "its", "many", "much", "of", "on", "or", "our", "say", "says",
    "she", "should", "so", "some", "than", "that", "the", "their", "them", "then", "there",
    "these", "they", "this", "those", "to", "up", "was", "we", "were", "what", "when", "where",
    "which", "while", "who", "whom", "whose", "why", "will", "with", "would", "you", "your",
    "video", "shown", "show", "shows", "appear", "appears", "happen", "happens", "there",
];

/// Words suggesting the answer is written on screen.
const OCR_CUES: &[&str] = &[
    "sign", "text", "written", "write", "writes", "read", "reads", "caption", "title", "screen",
    "label", "word", "words", "number", "board", "poster", "banner", "logo", "subtitle",
];

/// Words suggesting the answer is spoken.
const ASR_CUES: &[&str] = &[
    "said", "speak", "speaks", "spoke", "talk", "talks", "talked", "mention", "mentions",
    "mentioned", "hear", "heard", "voice", "narrator", "tell", "tells", "told", "audio", "sound",
    "song", "sing", "sings", "ask", "asks", "asked", "explain", "explains", "explained",
];

/// Deterministic offline provider; every response is a pure function of the prompts.
///
/// * Decoupling: content words are the question tokens minus [`STOPWORDS`].
///   `ocr` gets them when the question contains an on-screen cue, `asr` when it
///   contains a speech cue, and both when it contains neither. `det` gets them
///   whenever any exist. With no content words every channel is null.
/// * Augmentation: a fixed context template naming the content words, followed
///   by two templated rephrasings.
/// * Answering: quotes the first ASR hit, else the first OCR hit, else the
///   first scene-graph line.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubLvlm;

impl StubLvlm {
    fn content_words(question: &str) -> Vec<String> {
        tokenize(question)
            .into_iter()
            .filter(|t| !STOPWORDS.contains(&t.as_str()))
            .collect()
    }

    fn decouple(question: &str) -> String {
        let tokens = tokenize(question);
        let content = Self::content_words(question);
        let has = |cues: &[&str]| tokens.iter().any(|t| cues.contains(&t.as_str()));
        let (ocr_cue, asr_cue) = (has(OCR_CUES), has(ASR_CUES));
        let words = (!content.is_empty()).then(|| content.join(" "));
        let pick = |on: bool| if on { words.clone() } else { None };
        let neither = !ocr_cue && !asr_cue;
        serde_json::json!({
            "asr": pick(asr_cue || neither),
            "ocr": pick(ocr_cue || neither),
            "det": words,
        })
        .to_string()
    }

    fn augment(question: &str) -> String {
        let q = question.split_whitespace().collect::<Vec<_>>().join(" ");
        let q = q.trim_end_matches('?').trim_end();
        let content = Self::content_words(q);
        let topic = if content.is_empty() {
            "the video".to_string()
        } else {
            content.join(", ")
        };
        let mut lower = q.chars();
        let lowered = match lower.next() {
            Some(c) => c.to_lowercase().collect::<String>() + lower.as_str(),
            None => String::new(),
        };
        format!(
            "Context: The question concerns {topic}. Useful details usually appear in what is \
             said, in on-screen text, or in the objects visible around the moments where {topic} \
             occurs. Answers should rely on those moments rather than on general knowledge.\n\
             Phrasings:\n\
             1. In the video, {q}?\n\
             2. According to what is shown or said in the video, {lowered}?\n"
        )
    }

    fn answer(prompt: &str) -> String {
        let sections = parse_sections(prompt).unwrap_or_default();
        let first = |want: Section| {
            sections
                .iter()
                .find(|(s, _)| *s == want)
                .and_then(|(_, body)| body.first().cloned())
        };
        let quote = first(Section::AsrEvidence)
            .or_else(|| first(Section::OcrEvidence))
            .or_else(|| first(Section::SceneGraph));
        match quote {
            Some(line) => {
                // hit lines look like "- [id t=12.0s score=0.500] text"
                let (when, text) = match line.strip_prefix("- [").and_then(|r| r.split_once("] ")) {
                    Some((meta, text)) => (
                        meta.split_whitespace()
                            .find_map(|w| w.strip_prefix("t="))
                            .unwrap_or("?")
                            .to_string(),
                        text.to_string(),
                    ),
                    None => match line.split_once(": ") {
                        Some((t, rest)) => (t.trim_start_matches("t=").to_string(), rest.to_string()),
                        None => ("?".to_string(), line.clone()),
                    },
                };
                format!("Based on the video evidence at {when}: \"{text}\"")
            }
            None => "The video evidence does not answer the question.".to_string(),
        }
    }
}

impl LvlmProvider for StubLvlm {
    fn complete(&self, system: &str, user: &str, _params: &DecodeParams) -> Result<String> {
        Ok(if system == DECOUPLE_PROMPT {
            Self::decouple(user)
        } else if system == AUGMENT_PROMPT {
            Self::augment(user)
        } else if system == ANSWER_SYSTEM_PROMPT {
            Self::answer(user)
        } else {
            String::new()
        })
    }
}
