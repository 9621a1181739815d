//! Article ingestion, bold-keyword extraction, the filtering funnel from
//! articles to (context, keyword) pairs, dataset splitting and statistics.

use std::collections::{BTreeMap, HashSet};
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cluegen::ClueRecord;
use crate::text::{self, KeywordRejection, KeywordRules, NormalizationProfile, RulesError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub id: String,
    pub title: String,
    pub intro_text: String,
    #[serde(default)]
    pub bold_keywords: Vec<String>,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub url: String,
    #[serde(default)]
    pub view_count: Option<u64>,
    /// Headlines, summary, associative terms and anything else carried along.
    #[serde(default)]
    pub extra_metadata: BTreeMap<String, String>,
}

impl ArticleRecord {
    /// Completes a record whose intro still carries wikitext: keywords are
    /// pulled from bold markup when none were given and the markup is
    /// stripped from the intro. Returns whether bold markup was unbalanced.
    pub fn resolve_markup(&mut self) -> bool {
        if !self.intro_text.contains("''") && !self.intro_text.contains("[[") && !self.intro_text.contains("{{") {
            return false;
        }
        let extraction = extract_bold_keywords(&self.intro_text);
        if self.bold_keywords.is_empty() {
            self.bold_keywords = extraction.keywords;
        }
        self.intro_text = strip_markup(&self.intro_text).trim().to_string();
        extraction.unbalanced
    }
}

/// One (context, answer keyword, category) unit eligible for clue generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextKeywordPair {
    pub context: String,
    pub keyword: String,
    pub category: String,
    pub source_article_id: String,
}

impl ContextKeywordPair {
    /// Stable, URL-safe identifier derived from the article id and keyword.
    pub fn pair_id(&self) -> String {
        pair_id(&self.source_article_id, &self.keyword)
    }
}

pub fn pair_id(article_id: &str, keyword: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(article_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(keyword.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
    format!("p-{hex}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_context_words: usize,
    pub max_context_words: Option<usize>,
    pub keyword_rules: KeywordRules,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { min_context_words: 50, max_context_words: None, keyword_rules: KeywordRules::default() }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterConfigError {
    #[error("min_context_words must be at least 1")]
    MinWords,
    #[error("max_context_words ({max}) is below min_context_words ({min})")]
    MaxBelowMin { min: usize, max: usize },
    #[error(transparent)]
    Rules(#[from] RulesError),
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterConfigError> {
        if self.min_context_words < 1 {
            return Err(FilterConfigError::MinWords);
        }
        if let Some(max) = self.max_context_words {
            if max < self.min_context_words {
                return Err(FilterConfigError::MaxBelowMin { min: self.min_context_words, max });
            }
        }
        self.keyword_rules.validate()?;
        Ok(())
    }
}

/// The rule that rejected a candidate pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterRule {
    ContextTooShort,
    ContextTooLong,
    TooManyWords,
    BelowMinLength,
    AboveMaxLength,
    ContainsNumeral,
    ContainsNonArabicLetter,
    ContainsSpecialCharacter,
}

impl FilterRule {
    pub fn rule_id(self) -> &'static str {
        match self {
            Self::ContextTooShort => "context-too-short",
            Self::ContextTooLong => "context-too-long",
            Self::TooManyWords => "too-many-words",
            Self::BelowMinLength => "below-min-length",
            Self::AboveMaxLength => "above-max-length",
            Self::ContainsNumeral => "contains-numeral",
            Self::ContainsNonArabicLetter => "contains-non-arabic-letter",
            Self::ContainsSpecialCharacter => "contains-special-character",
        }
    }

    /// Stage of the funnel the rule belongs to, in evaluation order.
    pub fn stage(self) -> &'static str {
        match self {
            Self::ContextTooShort | Self::ContextTooLong => "context-length",
            Self::TooManyWords => "keyword-word-count",
            Self::BelowMinLength | Self::AboveMaxLength => "keyword-char-limit",
            _ => "keyword-charset",
        }
    }
}

impl From<KeywordRejection> for FilterRule {
    fn from(r: KeywordRejection) -> Self {
        match r {
            KeywordRejection::TooManyWords => Self::TooManyWords,
            KeywordRejection::BelowMinLength => Self::BelowMinLength,
            KeywordRejection::AboveMaxLength => Self::AboveMaxLength,
            KeywordRejection::ContainsNumeral => Self::ContainsNumeral,
            KeywordRejection::ContainsNonArabicLetter => Self::ContainsNonArabicLetter,
            KeywordRejection::ContainsSpecialCharacter => Self::ContainsSpecialCharacter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub pair_id: String,
    pub source_article_id: String,
    pub keyword: String,
    pub rule: FilterRule,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FilterOutcome {
    pub kept: Vec<ContextKeywordPair>,
    pub rejected: Vec<Rejection>,
}

impl FilterOutcome {
    pub fn candidate_count(&self) -> usize {
        self.kept.len() + self.rejected.len()
    }

    pub fn rejections_by_rule(&self) -> BTreeMap<FilterRule, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.rejected {
            *counts.entry(r.rule).or_insert(0) += 1;
        }
        counts
    }
}

/// Turns articles into candidate pairs (one per distinct bold keyword) and
/// sorts each into kept or rejected. Rules are checked as context length,
/// keyword word count, keyword letter count, keyword charset; the first
/// failure is recorded.
pub fn filter_corpus(records: &[ArticleRecord], config: &FilterConfig) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for record in records {
        let words = text::word_count(&record.intro_text);
        let context_rule = if words < config.min_context_words {
            Some(FilterRule::ContextTooShort)
        } else if config.max_context_words.is_some_and(|max| words > max) {
            Some(FilterRule::ContextTooLong)
        } else {
            None
        };
        let mut seen = HashSet::new();
        for keyword in &record.bold_keywords {
            let keyword = keyword.trim();
            if !seen.insert(keyword) {
                continue;
            }
            let rule = context_rule
                .or_else(|| text::validate_keyword(keyword, &config.keyword_rules).err().map(FilterRule::from));
            let pair = ContextKeywordPair {
                context: record.intro_text.clone(),
                keyword: keyword.to_string(),
                category: record.category.clone(),
                source_article_id: record.id.clone(),
            };
            match rule {
                None => out.kept.push(pair),
                Some(rule) => out.rejected.push(Rejection {
                    pair_id: pair.pair_id(),
                    source_article_id: pair.source_article_id,
                    keyword: pair.keyword,
                    rule,
                }),
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BoldKeywords {
    pub keywords: Vec<String>,
    /// Bold markup was left open at a line end or at the end of input.
    pub unbalanced: bool,
}

/// Extracts the spans wrapped in `'''` bold markup, trimmed and
/// deduplicated in first-occurrence order. Markup inside a span (links,
/// italics, templates) is stripped. Bold resets at line breaks, as in
/// MediaWiki; an unterminated span is dropped and flagged.
pub fn extract_bold_keywords(wikitext: &str) -> BoldKeywords {
    let mut result = BoldKeywords::default();
    let mut seen = HashSet::new();
    let mut bold = false;
    let mut span = String::new();
    let chars: Vec<char> = wikitext.chars().collect();
    let mut i = 0;
    let mut finish = |span: &mut String, result: &mut BoldKeywords| {
        let cleaned = strip_markup(span);
        let cleaned = cleaned.split_whitespace().collect::<Vec<_>>().join(" ");
        if !cleaned.is_empty() && seen.insert(cleaned.clone()) {
            result.keywords.push(cleaned);
        }
        span.clear();
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '\'' {
            let run = chars[i..].iter().take_while(|&&c| c == '\'').count();
            i += run;
            let (literal, toggles_bold) = match run {
                1 | 2 => (if run == 1 { 1 } else { 0 }, false),
                3 => (0, true),
                4 => (1, true),
                n => (n - 5, true),
            };
            if bold {
                span.extend(std::iter::repeat_n('\'', literal));
            }
            if toggles_bold {
                if bold {
                    finish(&mut span, &mut result);
                }
                bold = !bold;
            }
            continue;
        }
        if c == '\n' && bold {
            result.unbalanced = true;
            bold = false;
            span.clear();
        }
        if bold {
            span.push(c);
        }
        i += 1;
    }
    if bold {
        result.unbalanced = true;
    }
    result
}

static REF_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)<ref[^>/]*/>|<ref[^>]*>.*?</ref>").unwrap());
static TAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"</?[A-Za-z][^>]*>").unwrap());
static LINK_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[\[(?:[^\[\]|]*\|)?([^\[\]|]*)\]\]").unwrap());
static EXTLINK_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[(?:https?:)?//[^\s\]]+\s*([^\]]*)\]").unwrap());
static QUOTES_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"''+").unwrap());

/// Reduces lead-section wikitext to plain text: references and tags are
/// dropped, templates removed, links replaced by their label, and emphasis
/// markup removed.
pub fn strip_markup(wikitext: &str) -> String {
    let without_refs = REF_RE.replace_all(wikitext, "");
    let without_templates = remove_templates(&without_refs);
    let without_tags = TAG_RE.replace_all(&without_templates, "");
    let links = LINK_RE.replace_all(&without_tags, "$1");
    let extlinks = EXTLINK_RE.replace_all(&links, "$1");
    QUOTES_RE.replace_all(&extlinks, "").into_owned()
}

fn remove_templates(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut depth = 0usize;
    let mut rest = s;
    while !rest.is_empty() {
        if rest.starts_with("{{") {
            depth += 1;
            rest = &rest[2..];
        } else if depth > 0 && rest.starts_with("}}") {
            depth -= 1;
            rest = &rest[2..];
        } else {
            let c = rest.chars().next().unwrap();
            if depth == 0 {
                out.push(c);
            }
            rest = &rest[c.len_utf8()..];
        }
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("train count {train_count} exceeds the {available} available pairs")]
pub struct SplitError {
    pub train_count: usize,
    pub available: usize,
}

/// Shuffles deterministically under `seed` and takes the first `train_count`
/// items as the training set.
pub fn split_dataset<T: Clone>(items: &[T], train_count: usize, seed: u64) -> Result<(Vec<T>, Vec<T>), SplitError> {
    if train_count > items.len() {
        return Err(SplitError { train_count, available: items.len() });
    }
    let mut shuffled = items.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = shuffled.split_off(train_count);
    Ok((shuffled, test))
}

/// Fixed-width histogram. Keys are bin lower bounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: u64,
    pub bins: BTreeMap<u64, u64>,
}

impl Histogram {
    pub fn new(bin_width: u64) -> Self {
        Self { bin_width: bin_width.max(1), bins: BTreeMap::new() }
    }

    pub fn add(&mut self, value: u64) {
        *self.bins.entry(value / self.bin_width * self.bin_width).or_insert(0) += 1;
    }

    pub fn total(&self) -> u64 {
        self.bins.values().sum()
    }

    /// Lower bound of the most populated bin (smallest on ties).
    pub fn mode(&self) -> Option<u64> {
        self.bins.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(k, _)| *k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub pair_count: u64,
    pub clue_count: u64,
    pub context_words: Histogram,
    pub keyword_letters: Histogram,
    pub clue_chars: Histogram,
    pub categories: BTreeMap<String, u64>,
}

pub const CONTEXT_WORDS_BIN: u64 = 25;
pub const KEYWORD_LETTERS_BIN: u64 = 1;
pub const CLUE_CHARS_BIN: u64 = 5;

/// Length distributions and category frequencies over pairs and clues.
pub fn dataset_stats(pairs: &[ContextKeywordPair], clues: &[ClueRecord]) -> StatsReport {
    let mut report = StatsReport {
        pair_count: pairs.len() as u64,
        clue_count: clues.len() as u64,
        context_words: Histogram::new(CONTEXT_WORDS_BIN),
        keyword_letters: Histogram::new(KEYWORD_LETTERS_BIN),
        clue_chars: Histogram::new(CLUE_CHARS_BIN),
        categories: BTreeMap::new(),
    };
    for pair in pairs {
        report.context_words.add(text::word_count(&pair.context) as u64);
        report.keyword_letters.add(text::count_letters(&pair.keyword) as u64);
        *report.categories.entry(pair.category.clone()).or_insert(0) += 1;
    }
    for clue in clues {
        report.clue_chars.add(clue_length(&clue.clue_text) as u64);
    }
    report
}

/// Character length of a clue: scalar values of the trimmed text with
/// diacritics and tatweel removed, spaces included.
pub fn clue_length(clue: &str) -> usize {
    text::normalize(clue.trim(), NormalizationProfile::COUNTING).chars().count()
}
