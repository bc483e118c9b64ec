//! LLM rewrite requests for the `prompt_llm` operator.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Placeholder replaced by the prompt being rewritten.
pub const PROMPT_PLACEHOLDER: &str = "[PROMPT]";

pub const POSITIVE_TEMPLATE: &str = "Rewrite the following positive prompt such that it works best for a diffusion model for text to image generation: \"[PROMPT]\". Give a short description followed by a few comma (,) separated short image feature descriptions. Return only the updated prompt and nothing else.";

pub const NEGATIVE_TEMPLATE: &str = "Replace the following negative prompt with a new one such that it works best for a diffusion model for text to image generation: \"[PROMPT]\". Return a comma (,) separated list for the new prompt. Return only the updated prompt and nothing else.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSide {
    Positive,
    Negative,
}

impl PromptSide {
    pub fn template(self) -> &'static str {
        match self {
            PromptSide::Positive => POSITIVE_TEMPLATE,
            PromptSide::Negative => NEGATIVE_TEMPLATE,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptSide::Positive => "positive",
            PromptSide::Negative => "negative",
        }
    }
}

pub fn render_request(side: PromptSide, prompt: &str) -> String {
    side.template().replace(PROMPT_PLACEHOLDER, prompt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmRequest {
    pub model: String,
    pub seed: u64,
    pub temperature: f64,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("LLM backend unreachable: {0}")]
    Unreachable(String),
    #[error("LLM request failed: {0}")]
    Request(String),
    #[error("LLM returned an empty response")]
    EmptyResponse,
}

/// Text completion contract: request in, non-empty response out.
pub trait LlmBackend: Sync {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError>;
}

impl<T: LlmBackend + ?Sized> LlmBackend for &T {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

/// Trims whitespace and one layer of wrapping quotes.
pub fn normalize_response(raw: &str) -> String {
    let mut s = raw.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('\u{201c}', '\u{201d}'), ('`', '`')] {
        if s.len() >= open.len_utf8() + close.len_utf8() && s.starts_with(open) && s.ends_with(close) {
            s = s[open.len_utf8()..s.len() - close.len_utf8()].trim();
            break;
        }
    }
    s.to_string()
}

/// Recovers the prompt spliced into a request built by [`render_request`].
pub fn extract_prompt(request: &str) -> Option<(PromptSide, &str)> {
    for side in [PromptSide::Positive, PromptSide::Negative] {
        let template = side.template();
        let (head, tail) = template.split_once(PROMPT_PLACEHOLDER)?;
        if let Some(rest) = request.strip_prefix(head) {
            if let Some(prompt) = rest.strip_suffix(tail) {
                return Some((side, prompt));
            }
        }
    }
    None
}

/// Offline stand-in for an LLM: appends one suffix, chosen by the request
/// seed, to the prompt embedded in the request.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedLlm {
    pub positive_suffixes: Vec<String>,
    pub negative_suffixes: Vec<String>,
}

impl ScriptedLlm {
    pub fn new(positive_suffixes: Vec<String>, negative_suffixes: Vec<String>) -> Self {
        ScriptedLlm { positive_suffixes, negative_suffixes }
    }
}

impl LlmBackend for ScriptedLlm {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let (side, prompt) =
            extract_prompt(&request.prompt).ok_or_else(|| LlmError::Request("unrecognized request template".into()))?;
        let suffixes = match side {
            PromptSide::Positive => &self.positive_suffixes,
            PromptSide::Negative => &self.negative_suffixes,
        };
        if suffixes.is_empty() {
            return Ok(prompt.to_string());
        }
        let pick = &suffixes[(request.seed % suffixes.len() as u64) as usize];
        let prompt = prompt.trim();
        Ok(if prompt.is_empty() { pick.clone() } else { alloc::format!("{prompt}, {pick}") })
    }
}
