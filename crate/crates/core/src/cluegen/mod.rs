//! Prompt construction, clue generation through a pluggable backend,
//! response parsing, clue validation and fine-tune export.

mod backend;
mod export;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{LazyLock, Mutex};
use std::thread;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{clue_length, ContextKeywordPair};
use crate::text::{self, EmptyAnswer};

pub use backend::{
    BackendConfig, BackendError, BackendKind, ConfigError, GenerationRequest, HttpBackend, MockBackend,
    RateLimiter, RetryPolicy, TextBackend,
};
pub use export::{export_finetune_records, ExportOptions, ExportRecord, ExportSummary, FineTuneSidecar};

pub const PLACEHOLDERS: [&str; 4] = ["context", "keyword", "category", "n_clues"];

static PLACEHOLDER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([A-Za-z_]+)\}").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_text: String,
    pub template_id: String,
    pub language: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template is missing the {{{0}}} placeholder")]
    MissingPlaceholder(String),
    #[error("placeholder {{{0}}} appears more than once")]
    DuplicatePlaceholder(String),
    #[error("unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("n_clues must be at least 1")]
    ZeroClues,
}

impl PromptTemplate {
    pub fn new(template_id: &str, language: &str, template_text: &str) -> Result<Self, TemplateError> {
        let template = Self {
            template_text: template_text.to_string(),
            template_id: template_id.to_string(),
            language: language.to_string(),
        };
        template.validate()?;
        Ok(template)
    }

    pub fn arabic() -> Self {
        Self::new("default-ar", "ar", include_str!("../../assets/prompt_ar.txt")).expect("shipped template is valid")
    }

    pub fn english() -> Self {
        Self::new("default-en", "en", include_str!("../../assets/prompt_en.txt")).expect("shipped template is valid")
    }

    /// Each of the four placeholders must occur exactly once, and nothing
    /// else may look like a placeholder.
    pub fn validate(&self) -> Result<(), TemplateError> {
        let mut counts = [0usize; 4];
        for cap in PLACEHOLDER_RE.captures_iter(&self.template_text) {
            let name = &cap[1];
            match PLACEHOLDERS.iter().position(|p| *p == name) {
                Some(i) => counts[i] += 1,
                None => return Err(TemplateError::UnknownPlaceholder(name.to_string())),
            }
        }
        for (name, count) in PLACEHOLDERS.iter().zip(counts) {
            match count {
                0 => return Err(TemplateError::MissingPlaceholder(name.to_string())),
                1 => {}
                _ => return Err(TemplateError::DuplicatePlaceholder(name.to_string())),
            }
        }
        Ok(())
    }
}

/// Fills `template` for `pair`. Substitution is single-pass, so braces inside
/// the context or keyword are never re-expanded.
pub fn build_prompt(pair: &ContextKeywordPair, template: &PromptTemplate, n_clues: usize) -> Result<String, TemplateError> {
    template.validate()?;
    if n_clues == 0 {
        return Err(TemplateError::ZeroClues);
    }
    let n = n_clues.to_string();
    let filled = PLACEHOLDER_RE.replace_all(&template.template_text, |cap: &regex::Captures<'_>| match &cap[1] {
        "context" => pair.context.clone(),
        "keyword" => pair.keyword.clone(),
        "category" => pair.category.clone(),
        _ => n.clone(),
    });
    Ok(filled.into_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub max_output_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self { temperature: 0.1, top_p: 0.95, top_k: 50, max_output_tokens: 512 }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.top_k == 0 || self.max_output_tokens == 0 {
            return Err("top_k and max_output_tokens must be positive".into());
        }
        Ok(())
    }
}

/// Training hyperparameters recorded next to an export. Never executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneConfigRecord {
    pub model_name: String,
    pub batch_size: u32,
    pub learning_rate: f64,
    pub epochs: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lora_r: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lora_alpha: Option<u32>,
}

impl FineTuneConfigRecord {
    pub fn gpt35_turbo() -> Self {
        Self {
            model_name: "gpt-3.5-turbo".into(),
            batch_size: 16,
            learning_rate: 0.01,
            epochs: 3,
            lora_r: None,
            lora_alpha: None,
        }
    }

    pub fn llama3_8b_lora() -> Self {
        Self {
            model_name: "Meta-Llama-3-8B-Instruct".into(),
            batch_size: 128,
            learning_rate: 3e-4,
            epochs: 3,
            lora_r: Some(32),
            lora_alpha: Some(64),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "gpt35" | "gpt-3.5-turbo" => Some(Self::gpt35_turbo()),
            "llama" | "llama3-8b" => Some(Self::llama3_8b_lora()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive_ints = [Some(self.batch_size), Some(self.epochs), self.lora_r, self.lora_alpha];
        if positive_ints.iter().flatten().any(|v| *v == 0) || self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err("fine-tune values must be positive".into());
        }
        Ok(())
    }
}

/// How many clues to request for a context of a given length:
/// `base + floor((words - offset) / step)`, clamped to `[base, cap]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClueCountPolicy {
    pub base: usize,
    pub offset_words: usize,
    pub step_words: usize,
    pub cap: usize,
}

impl Default for ClueCountPolicy {
    fn default() -> Self {
        Self { base: 3, offset_words: 200, step_words: 200, cap: 6 }
    }
}

impl ClueCountPolicy {
    pub fn clue_count(&self, context_words: usize) -> usize {
        let extra = (context_words as i64 - self.offset_words as i64).div_euclid(self.step_words.max(1) as i64);
        (self.base as i64 + extra).clamp(self.base as i64, self.cap.max(self.base) as i64) as usize
    }
}

pub fn clue_count_policy(context_word_count: usize) -> usize {
    ClueCountPolicy::default().clue_count(context_word_count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClueFlag {
    EmptyClue,
    AnswerLeakage,
    LetterCountMismatch,
    OutOfLengthRange,
}

impl ClueFlag {
    /// Length is advisory; every other flag disqualifies the clue.
    pub fn is_hard(self) -> bool {
        self != Self::OutOfLengthRange
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reasons", rename_all = "lowercase")]
pub enum ValidationStatus {
    Pass,
    Flagged(Vec<ClueFlag>),
}

impl ValidationStatus {
    pub fn has(&self, flag: ClueFlag) -> bool {
        matches!(self, Self::Flagged(flags) if flags.contains(&flag))
    }

    pub fn is_pass(&self) -> bool {
        matches!(self, Self::Pass)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClueRecord {
    pub clue_id: String,
    pub clue_text: String,
    pub answer: String,
    pub context_ref: String,
    pub category: String,
    pub generator_id: String,
    pub validation_status: ValidationStatus,
}

impl ClueRecord {
    pub fn new(pair: &ContextKeywordPair, index: usize, clue_text: String, generator_id: &str) -> Self {
        let context_ref = pair.pair_id();
        let validation_status = validate_clue(&clue_text, &pair.keyword).expect("pair keywords are nonempty");
        Self {
            clue_id: clue_id(&context_ref, index),
            clue_text,
            answer: pair.keyword.clone(),
            context_ref,
            category: pair.category.clone(),
            generator_id: generator_id.to_string(),
            validation_status,
        }
    }
}

pub fn clue_id(context_ref: &str, index: usize) -> String {
    format!("{context_ref}-c{index}")
}

pub const CLUE_LENGTH_RANGE: (usize, usize) = (10, 60);

static LETTER_CLAIM_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:من\s*([0-9٠-٩۰-۹]+)\s*(?:حروف|أحرف|احرف|حرف)|\(\s*([0-9٠-٩۰-۹]+)\s*(?:حروف|أحرف|احرف)\s*\))")
        .unwrap()
});

/// Letter counts a clue claims for its answer ("من 4 حروف").
pub fn claimed_letter_counts(clue: &str) -> Vec<usize> {
    LETTER_CLAIM_RE
        .captures_iter(clue)
        .filter_map(|cap| {
            let digits = cap.get(1).or(cap.get(2))?.as_str();
            digits.chars().try_fold(0usize, |acc, c| Some(acc * 10 + text::digit_value(c)? as usize))
        })
        .collect()
}

/// Runs every check independently and reports all that fire.
pub fn validate_clue(clue: &str, answer: &str) -> Result<ValidationStatus, EmptyAnswer> {
    let leaked = text::contains_answer(clue, answer)?;
    let mut flags = Vec::new();
    if clue.trim().is_empty() {
        flags.push(ClueFlag::EmptyClue);
    } else {
        if leaked {
            flags.push(ClueFlag::AnswerLeakage);
        }
        let letters = text::count_letters(answer);
        if claimed_letter_counts(clue).into_iter().any(|n| n != letters) {
            flags.push(ClueFlag::LetterCountMismatch);
        }
        let len = clue_length(clue);
        if len < CLUE_LENGTH_RANGE.0 || len > CLUE_LENGTH_RANGE.1 {
            flags.push(ClueFlag::OutOfLengthRange);
        }
    }
    Ok(if flags.is_empty() { ValidationStatus::Pass } else { ValidationStatus::Flagged(flags) })
}

static MARKER_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:[-*•·–]+\s*|\(?[0-9٠-٩۰-۹]+\s*[.)\-:،]\s*|[0-9٠-٩۰-۹]+\s+)").unwrap()
});
static LABEL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(?:أفقي(?:اً|ا)?|افقي(?:اً|ا)?|رأسي(?:اً|ا)?|راسي(?:اً|ا)?|عمودي(?:اً|ا)?|across|down|horizontal|vertical)\s*(?:[:：\-]\s*|$)")
        .unwrap()
});

const QUOTES: &[char] = &['"', '\'', '«', '»', '“', '”', '„', '‘', '’', '`'];

/// Splits a raw model response into clue strings: one per line, with list
/// markers (Western or Arabic-Indic numbering, bullets), direction labels
/// and wrapping quotes removed. Empty results are dropped; order is kept.
/// A JSON array of strings is accepted as well.
pub fn parse_clue_response(raw: &str) -> Vec<String> {
    let trimmed = raw.trim();
    if trimmed.starts_with('[') {
        if let Ok(items) = serde_json::from_str::<Vec<String>>(trimmed) {
            return items.iter().filter_map(|s| clean_line(s)).collect();
        }
    }
    trimmed.lines().filter_map(clean_line).collect()
}

fn clean_line(line: &str) -> Option<String> {
    let mut s = line.trim().trim_matches('*').trim();
    loop {
        let before = s.len();
        if let Some(m) = MARKER_RE.find(s) {
            s = s[m.end()..].trim_start();
        }
        if let Some(m) = LABEL_RE.find(s) {
            s = s[m.end()..].trim_start();
        }
        s = s.trim_matches(|c: char| QUOTES.contains(&c) || c.is_whitespace());
        if s.len() == before {
            break;
        }
    }
    (!s.is_empty()).then(|| s.to_string())
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    BackendUnavailable { attempts: u32, message: String },
    #[error("backend rejected the request: {0}")]
    BackendRejected(String),
    #[error("backend response could not be parsed: {0}")]
    ResponseUnparseable(String),
    #[error("backend returned no clues")]
    EmptyResponse,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("pair keyword is empty")]
    EmptyKeyword,
}

impl GenerateError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::BackendUnavailable { .. } => "backend-unavailable",
            Self::BackendRejected(_) => "backend-rejected",
            Self::ResponseUnparseable(_) => "response-unparseable",
            Self::EmptyResponse => "empty-response",
            Self::Template(_) => "invalid-template",
            Self::EmptyKeyword => "empty-answer",
        }
    }
}

/// Clues for one pair, or why generation failed.
pub type PairResult = Result<Vec<ClueRecord>, GenerateError>;

/// Everything needed to turn pairs into validated clue records.
pub struct ClueGenerator<'a> {
    pub backend: &'a dyn TextBackend,
    pub template: &'a PromptTemplate,
    pub params: SamplingParams,
    pub count_policy: ClueCountPolicy,
    pub retry: RetryPolicy,
}

impl<'a> ClueGenerator<'a> {
    pub fn new(backend: &'a dyn TextBackend, template: &'a PromptTemplate, params: SamplingParams) -> Self {
        Self { backend, template, params, count_policy: ClueCountPolicy::default(), retry: RetryPolicy::default() }
    }

    pub fn generate(&self, pair: &ContextKeywordPair) -> Result<Vec<ClueRecord>, GenerateError> {
        if pair.keyword.trim().is_empty() {
            return Err(GenerateError::EmptyKeyword);
        }
        let n_clues = self.count_policy.clue_count(text::word_count(&pair.context));
        let prompt = build_prompt(pair, self.template, n_clues)?;
        let request = GenerationRequest {
            prompt: &prompt,
            n_clues,
            pair,
            params: self.params,
        };
        let raw = self.call_with_retry(&request)?;
        if raw.trim().is_empty() {
            return Err(GenerateError::EmptyResponse);
        }
        let mut clues = parse_clue_response(&raw);
        if clues.is_empty() {
            return Err(GenerateError::ResponseUnparseable(truncate_for_log(&raw)));
        }
        if clues.len() < n_clues {
            log::warn!("{}: backend returned {} of {} clues", pair.pair_id(), clues.len(), n_clues);
        }
        clues.truncate(n_clues);
        Ok(clues
            .into_iter()
            .enumerate()
            .map(|(i, text)| ClueRecord::new(pair, i, text, self.backend.id()))
            .collect())
    }

    fn call_with_retry(&self, request: &GenerationRequest<'_>) -> Result<String, GenerateError> {
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match self.backend.complete(request) {
                Ok(raw) => return Ok(raw),
                Err(BackendError::Unavailable(message)) => {
                    if attempt > self.retry.max_retries {
                        return Err(GenerateError::BackendUnavailable { attempts: attempt, message });
                    }
                    let delay = self.retry.delay(attempt);
                    log::warn!("backend unavailable ({message}); retry {attempt} in {delay:?}");
                    thread::sleep(delay);
                }
                Err(BackendError::Rejected(m)) => return Err(GenerateError::BackendRejected(m)),
                Err(BackendError::Malformed(m)) => return Err(GenerateError::ResponseUnparseable(m)),
            }
        }
    }

    /// Generates for every pair with at most `concurrency` requests in
    /// flight. Results come back in input order.
    pub fn generate_all(
        &self,
        pairs: &[ContextKeywordPair],
        concurrency: usize,
    ) -> Vec<PairResult> {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<PairResult>>> = Mutex::new((0..pairs.len()).map(|_| None).collect());
        thread::scope(|scope| {
            for _ in 0..concurrency.clamp(1, pairs.len().max(1)) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(pair) = pairs.get(i) else { break };
                    let result = self.generate(pair);
                    slots.lock().unwrap()[i] = Some(result);
                });
            }
        });
        slots.into_inner().unwrap().into_iter().map(|r| r.expect("every slot filled")).collect()
    }
}

/// Convenience wrapper using the default count policy and retry settings.
pub fn generate_clues(
    pair: &ContextKeywordPair,
    backend: &dyn TextBackend,
    template: &PromptTemplate,
    params: SamplingParams,
) -> Result<Vec<ClueRecord>, GenerateError> {
    ClueGenerator::new(backend, template, params).generate(pair)
}

fn truncate_for_log(s: &str) -> String {
    s.chars().take(120).collect()
}
