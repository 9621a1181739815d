//! Arabic-script normalization, letter counting, keyword validation and
//! answer-leakage detection.
//!
//! Everything here is pure and allocation-light; all other modules go through
//! these functions so that "a letter" and "the same word" mean one thing
//! across the crate.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TATWEEL: char = '\u{0640}';
const ALEF: char = '\u{0627}';
const DEFINITE_ARTICLE: &str = "\u{0627}\u{0644}";

/// Arabic harakat and tanween, U+064B through U+0652.
pub fn is_diacritic(c: char) -> bool {
    ('\u{064B}'..='\u{0652}').contains(&c)
}

/// Alef with madda, hamza above and hamza below.
fn is_alef_variant(c: char) -> bool {
    matches!(c, '\u{0622}' | '\u{0623}' | '\u{0625}')
}

pub fn is_arabic_letter(c: char) -> bool {
    matches!(c,
        '\u{0620}'..='\u{063F}'
        | '\u{0641}'..='\u{064A}'
        | '\u{066E}'..='\u{066F}'
        | '\u{0671}'..='\u{06D3}'
        | '\u{06D5}'
        | '\u{06EE}'..='\u{06EF}'
        | '\u{06FA}'..='\u{06FC}'
        | '\u{06FF}')
}

/// Western, Arabic-Indic and Extended Arabic-Indic digits.
pub fn is_any_digit(c: char) -> bool {
    c.is_ascii_digit() || ('\u{0660}'..='\u{0669}').contains(&c) || ('\u{06F0}'..='\u{06F9}').contains(&c)
}

/// Value of a digit in any of the scripts accepted by [`is_any_digit`].
pub fn digit_value(c: char) -> Option<u32> {
    match c {
        '0'..='9' => Some(c as u32 - '0' as u32),
        '\u{0660}'..='\u{0669}' => Some(c as u32 - 0x0660),
        '\u{06F0}'..='\u{06F9}' => Some(c as u32 - 0x06F0),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NormalizationProfile {
    pub strip_diacritics: bool,
    pub strip_tatweel: bool,
    pub unify_alef_variants: bool,
    pub strip_definite_article: bool,
}

impl NormalizationProfile {
    /// Identity profile.
    pub const NONE: Self = Self {
        strip_diacritics: false,
        strip_tatweel: false,
        unify_alef_variants: false,
        strip_definite_article: false,
    };

    /// Diacritics and tatweel removed. This is the profile letter counting
    /// and ROUGE tokenization use.
    pub const COUNTING: Self = Self {
        strip_diacritics: true,
        strip_tatweel: true,
        unify_alef_variants: false,
        strip_definite_article: false,
    };

    /// Counting profile plus alef unification. Used for matching answers
    /// against clues and for grid letters.
    pub const MATCHING: Self = Self {
        strip_diacritics: true,
        strip_tatweel: true,
        unify_alef_variants: true,
        strip_definite_article: false,
    };

    pub const ALL: Self = Self {
        strip_diacritics: true,
        strip_tatweel: true,
        unify_alef_variants: true,
        strip_definite_article: true,
    };
}

/// Normalizes `text` according to `profile`.
///
/// Whitespace is preserved as-is; the definite-article rule applies to each
/// whitespace-separated word. A leading "ال" is removed only when at least two
/// letters remain and the remainder does not itself begin with "ال", which
/// keeps the function idempotent for every profile.
pub fn normalize(text: &str, profile: NormalizationProfile) -> String {
    let mut out = String::with_capacity(text.len());
    let mut word = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            flush_word(&mut out, &mut word, profile);
            out.push(c);
            continue;
        }
        if profile.strip_diacritics && is_diacritic(c) {
            continue;
        }
        if profile.strip_tatweel && c == TATWEEL {
            continue;
        }
        if profile.unify_alef_variants && is_alef_variant(c) {
            word.push(ALEF);
        } else {
            word.push(c);
        }
    }
    flush_word(&mut out, &mut word, profile);
    out
}

fn flush_word(out: &mut String, word: &mut String, profile: NormalizationProfile) {
    if profile.strip_definite_article {
        out.push_str(strip_article(word));
    } else {
        out.push_str(word);
    }
    word.clear();
}

/// Removes one leading definite article if the idempotence-safe conditions hold.
fn strip_article(word: &str) -> &str {
    match word.strip_prefix(DEFINITE_ARTICLE) {
        Some(rest) if rest.chars().count() >= 2 && !rest.starts_with(DEFINITE_ARTICLE) => rest,
        _ => word,
    }
}

/// Number of letters in `word`: Unicode scalar values left after removing
/// diacritics and tatweel, not counting whitespace.
pub fn count_letters(word: &str) -> usize {
    word.chars()
        .filter(|&c| !c.is_whitespace() && !is_diacritic(c) && c != TATWEEL)
        .count()
}

/// Count of maximal whitespace-separated tokens.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeywordRules {
    pub min_chars: usize,
    pub max_chars: usize,
    pub max_words: usize,
    pub allow_digits: bool,
    pub allow_non_arabic_letters: bool,
}

impl Default for KeywordRules {
    fn default() -> Self {
        Self {
            min_chars: 3,
            max_chars: 20,
            max_words: 2,
            allow_digits: false,
            allow_non_arabic_letters: false,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RulesError {
    #[error("min_chars must be at least 1")]
    MinChars,
    #[error("max_chars ({max}) is below min_chars ({min})")]
    MaxBelowMin { min: usize, max: usize },
    #[error("max_words must be at least 1")]
    MaxWords,
}

impl KeywordRules {
    pub fn validate(&self) -> Result<(), RulesError> {
        if self.min_chars < 1 {
            return Err(RulesError::MinChars);
        }
        if self.max_chars < self.min_chars {
            return Err(RulesError::MaxBelowMin { min: self.min_chars, max: self.max_chars });
        }
        if self.max_words < 1 {
            return Err(RulesError::MaxWords);
        }
        Ok(())
    }
}

/// Why a keyword was turned down. Checks run in declaration order and the
/// first failure wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeywordRejection {
    TooManyWords,
    BelowMinLength,
    AboveMaxLength,
    ContainsNumeral,
    ContainsNonArabicLetter,
    ContainsSpecialCharacter,
}

impl KeywordRejection {
    pub fn rule_id(self) -> &'static str {
        match self {
            Self::TooManyWords => "too-many-words",
            Self::BelowMinLength => "below-min-length",
            Self::AboveMaxLength => "above-max-length",
            Self::ContainsNumeral => "contains-numeral",
            Self::ContainsNonArabicLetter => "contains-non-arabic-letter",
            Self::ContainsSpecialCharacter => "contains-special-character",
        }
    }
}

impl fmt::Display for KeywordRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.rule_id())
    }
}

/// Checks a candidate answer keyword against `rules`.
///
/// Order: word count, letter count (whitespace removed, diacritics and tatweel
/// ignored), then character set. Diacritics and tatweel are never charset
/// violations.
pub fn validate_keyword(keyword: &str, rules: &KeywordRules) -> Result<(), KeywordRejection> {
    let normalized = normalize(keyword, NormalizationProfile::COUNTING);
    if word_count(&normalized) > rules.max_words {
        return Err(KeywordRejection::TooManyWords);
    }
    let letters = count_letters(&normalized);
    if letters < rules.min_chars {
        return Err(KeywordRejection::BelowMinLength);
    }
    if letters > rules.max_chars {
        return Err(KeywordRejection::AboveMaxLength);
    }
    for c in normalized.chars().filter(|c| !c.is_whitespace()) {
        let violation = if is_any_digit(c) {
            (!rules.allow_digits).then_some(KeywordRejection::ContainsNumeral)
        } else if is_arabic_letter(c) {
            None
        } else if c.is_alphabetic() {
            (!rules.allow_non_arabic_letters).then_some(KeywordRejection::ContainsNonArabicLetter)
        } else {
            Some(KeywordRejection::ContainsSpecialCharacter)
        };
        if let Some(rejection) = violation {
            return Err(rejection);
        }
    }
    Ok(())
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("answer is empty")]
pub struct EmptyAnswer;

/// Surface forms of `answer` that count as "the answer" inside a clue: the
/// matching-normalized answer and the same with the definite article added
/// or removed. Variants shorter than two letters are dropped.
pub fn answer_variants(answer: &str) -> Result<Vec<String>, EmptyAnswer> {
    let base = collapse_whitespace(&normalize(answer, NormalizationProfile::MATCHING));
    if base.is_empty() {
        return Err(EmptyAnswer);
    }
    let mut variants = vec![base.clone()];
    let toggled = match base.strip_prefix(DEFINITE_ARTICLE) {
        Some(rest) => rest.to_string(),
        None => format!("{DEFINITE_ARTICLE}{base}"),
    };
    if toggled.chars().count() >= 2 && toggled != base {
        variants.push(toggled);
    }
    Ok(variants)
}

/// True iff the clue contains the answer, or its definite-article variant,
/// as a token or inside a token, after diacritics/tatweel removal and alef
/// unification on both sides.
pub fn contains_answer(clue: &str, answer: &str) -> Result<bool, EmptyAnswer> {
    let variants = answer_variants(answer)?;
    let clue = collapse_whitespace(&normalize(clue, NormalizationProfile::MATCHING));
    let tokens: Vec<&str> = clue.split(' ').collect();
    Ok(variants.iter().any(|v| {
        if v.contains(' ') {
            // multi-word answers can only occur across tokens
            clue.contains(v.as_str())
        } else {
            tokens.iter().any(|t| t.contains(v.as_str()))
        }
    }))
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
