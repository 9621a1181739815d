//! ROUGE-1/2/L scoring, A–E rating aggregation and leakage rate.
//!
//! Tokens are whitespace-separated words after diacritics and tatweel
//! removal. There is no stemming and punctuation stays attached to its word.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluegen::ClueRecord;
use crate::text::{self, NormalizationProfile};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Self::from_pr(ratio(overlap, candidate_total), ratio(overlap, reference_total))
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { precision, recall, f1 }
    }

    pub fn get(&self, variant: ScoreVariant) -> f64 {
        match variant {
            ScoreVariant::Precision => self.precision,
            ScoreVariant::Recall => self.recall,
            ScoreVariant::F1 => self.f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreVariant {
    Precision,
    Recall,
    F1,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text::normalize(text, NormalizationProfile::COUNTING)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N with clipped n-gram counts.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> RougeScore {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap: usize = cand.iter().map(|(g, c)| (*c).min(refs.get(g).copied().unwrap_or(0))).sum();
    RougeScore::from_counts(overlap, cand.values().sum(), refs.values().sum())
}

/// Length of the longest common subsequence, by dynamic programming over
/// two rolling rows.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> RougeScore {
    RougeScore::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// ROUGE-1, ROUGE-2 and ROUGE-L of one candidate text against one reference text.
pub fn rouge_texts(candidate: &str, reference: &str) -> [RougeScore; 3] {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    [rouge_n(&c, &r, 1), rouge_n(&c, &r, 2), rouge_l(&c, &r)]
}

/// Clues generated for one context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClueSet {
    pub context_ref: String,
    pub context: String,
    pub clues: Vec<String>,
}

/// Groups clue records by context, keeping first-appearance order. The
/// context text comes from `contexts` (context_ref → text).
pub fn clue_sets(clues: &[ClueRecord], contexts: &HashMap<String, String>) -> Vec<ClueSet> {
    let mut order: Vec<String> = Vec::new();
    let mut by_ref: HashMap<String, Vec<String>> = HashMap::new();
    for clue in clues {
        by_ref
            .entry(clue.context_ref.clone())
            .or_insert_with(|| {
                order.push(clue.context_ref.clone());
                Vec::new()
            })
            .push(clue.clue_text.clone());
    }
    order
        .into_iter()
        .map(|r| ClueSet {
            context: contexts.get(&r).cloned().unwrap_or_default(),
            clues: by_ref.remove(&r).unwrap_or_default(),
            context_ref: r,
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub enum ReferenceMode<'a> {
    /// Each clue against the source context of its set.
    AgainstSourceText,
    /// Each clue against the reference clue with the same (context, index).
    AgainstReferenceClues(&'a [ClueSet]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRouge {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
    pub scored: usize,
    pub skipped: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("nothing to score")]
    EmptyScoredSet,
    #[error("no ratings to aggregate")]
    EmptyRatings,
    #[error("unknown rating level `{0}`")]
    UnknownLevel(String),
    #[error("timestamp `{0}` is not ISO-8601")]
    BadTimestamp(String),
    #[error("duplicate rating for clue `{clue_ref}` by `{annotator_id}`")]
    DuplicateRating { clue_ref: String, annotator_id: String },
}

/// Unweighted mean over scored clues of precision, recall and F1 for each
/// metric. Summation follows input order, so results are reproducible.
pub fn corpus_rouge(candidates: &[ClueSet], mode: ReferenceMode<'_>) -> Result<CorpusRouge, EvalError> {
    let mut sums = [RougeScore::default(); 3];
    let mut scored = 0usize;
    let mut skipped = 0usize;
    let mut add = |scores: [RougeScore; 3]| {
        for (sum, s) in sums.iter_mut().zip(scores) {
            sum.precision += s.precision;
            sum.recall += s.recall;
            sum.f1 += s.f1;
        }
        scored += 1;
    };
    match mode {
        ReferenceMode::AgainstSourceText => {
            for set in candidates {
                let context = tokenize(&set.context);
                for clue in &set.clues {
                    let c = tokenize(clue);
                    add([rouge_n(&c, &context, 1), rouge_n(&c, &context, 2), rouge_l(&c, &context)]);
                }
            }
        }
        ReferenceMode::AgainstReferenceClues(references) => {
            let refs: HashMap<&str, &ClueSet> = references.iter().map(|r| (r.context_ref.as_str(), r)).collect();
            for set in candidates {
                let reference = refs.get(set.context_ref.as_str());
                for (i, clue) in set.clues.iter().enumerate() {
                    match reference.and_then(|r| r.clues.get(i)) {
                        Some(r) => add(rouge_texts(clue, r)),
                        None => skipped += 1,
                    }
                }
            }
        }
    }
    if scored == 0 {
        return Err(EvalError::EmptyScoredSet);
    }
    let n = scored as f64;
    let mean = |s: RougeScore| RougeScore { precision: s.precision / n, recall: s.recall / n, f1: s.f1 / n };
    Ok(CorpusRouge { rouge1: mean(sums[0]), rouge2: mean(sums[1]), rouge_l: mean(sums[2]), scored, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RatingLevel {
    A,
    B,
    C,
    D,
    E,
}

impl RatingLevel {
    pub const ALL: [RatingLevel; 5] = [Self::A, Self::B, Self::C, Self::D, Self::E];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        (b'A' + self as u8) as char
    }

    /// Guidance shown to raters.
    pub fn description(self) -> &'static str {
        match self {
            Self::A => "Correct and coherent: fits the context, the answer and the category.",
            Self::B => "Acceptable with a small flaw, typically a weak tie to the category.",
            Self::C => "Points at the answer but is vague or only loosely tied to the context.",
            Self::D => "Wrong or irrelevant for the answer or the context.",
            Self::E => "Unusable: the answer, or a form of it, appears in the clue.",
        }
    }
}

impl fmt::Display for RatingLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for RatingLevel {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().trim_start_matches("RATING-").to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "C" => Ok(Self::C),
            "D" => Ok(Self::D),
            "E" => Ok(Self::E),
            _ => Err(EvalError::UnknownLevel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub clue_ref: String,
    pub rating: RatingLevel,
    pub annotator_id: String,
    pub timestamp: String,
    /// Generator of the rated clue; the server fills it in when omitted.
    #[serde(default)]
    pub model_id: String,
}

impl RatingRecord {
    pub fn validate(&self) -> Result<(), EvalError> {
        chrono::DateTime::parse_from_rfc3339(&self.timestamp)
            .map(|_| ())
            .or_else(|_| chrono::NaiveDateTime::parse_from_str(&self.timestamp, "%Y-%m-%dT%H:%M:%S").map(|_| ()))
            .map_err(|_| EvalError::BadTimestamp(self.timestamp.clone()))
    }

    /// Uniqueness key: one rating per clue and annotator.
    pub fn key(&self) -> String {
        format!("{}|{}", self.clue_ref, self.annotator_id)
    }
}

/// Fails on the first repeated (clue_ref, annotator_id).
pub fn check_unique(records: &[RatingRecord]) -> Result<(), EvalError> {
    let mut seen = std::collections::HashSet::new();
    for r in records {
        if !seen.insert(r.key()) {
            return Err(EvalError::DuplicateRating { clue_ref: r.clue_ref.clone(), annotator_id: r.annotator_id.clone() });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRow {
    pub model_id: String,
    pub total: u64,
    pub counts: BTreeMap<RatingLevel, u64>,
    /// Percentages in hundredths of a percent, so 7886 is 78.86%.
    pub hundredths: BTreeMap<RatingLevel, u32>,
}

impl RatingRow {
    pub fn percent(&self, level: RatingLevel) -> f64 {
        self.hundredths.get(&level).copied().unwrap_or(0) as f64 / 100.0
    }

    pub fn percent_sum(&self) -> f64 {
        self.hundredths.values().sum::<u32>() as f64 / 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingReport {
    pub rows: Vec<RatingRow>,
}

/// Largest shortfall from 100% a row may show, in hundredths.
const ROW_SLACK: u64 = 2;

/// Percentages per level, truncated to two decimals. If truncation leaves
/// a row more than 0.02 short of 100, the levels with the largest
/// remainders are raised by 0.01 until it is within that slack.
pub fn level_hundredths(counts: &[u64; 5]) -> [u32; 5] {
    let total: u64 = counts.iter().sum();
    let mut out = [0u32; 5];
    if total == 0 {
        return out;
    }
    let mut remainders = [0u64; 5];
    for i in 0..5 {
        out[i] = (counts[i] * 10_000 / total) as u32;
        remainders[i] = counts[i] * 10_000 % total;
    }
    let mut deficit = 10_000u64 - out.iter().map(|&h| h as u64).sum::<u64>();
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
    for i in order {
        if deficit <= ROW_SLACK {
            break;
        }
        if remainders[i] > 0 {
            out[i] += 1;
            deficit -= 1;
        }
    }
    out
}

/// Per-model rating distribution, rows sorted by model id.
pub fn aggregate_ratings(records: &[RatingRecord]) -> Result<RatingReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRatings);
    }
    let mut per_model: BTreeMap<&str, [u64; 5]> = BTreeMap::new();
    for r in records {
        per_model.entry(&r.model_id).or_default()[r.rating.index()] += 1;
    }
    let rows = per_model
        .into_iter()
        .map(|(model, counts)| {
            let hundredths = level_hundredths(&counts);
            RatingRow {
                model_id: model.to_string(),
                total: counts.iter().sum(),
                counts: RatingLevel::ALL.iter().map(|&l| (l, counts[l.index()])).collect(),
                hundredths: RatingLevel::ALL.iter().map(|&l| (l, hundredths[l.index()])).collect(),
            }
        })
        .collect();
    Ok(RatingReport { rows })
}

/// Plain-text table: one column per model, one row per level, percentages
/// with two decimals, plus a row of totals.
pub fn render_rating_table(report: &RatingReport) -> String {
    let width = report.rows.iter().map(|r| r.model_id.chars().count()).max().unwrap_or(0).max(8);
    let mut out = String::new();
    let _ = write!(out, "{:<8}", "Rating");
    for row in &report.rows {
        let _ = write!(out, " {:>width$}", row.model_id);
    }
    out.push('\n');
    for level in RatingLevel::ALL {
        let _ = write!(out, "{:<8}", level.letter());
        for row in &report.rows {
            let _ = write!(out, " {:>width$.2}", row.percent(level));
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<8}", "n");
    for row in &report.rows {
        let _ = write!(out, " {:>width$}", row.total);
    }
    out.push('\n');
    out
}

/// Fraction of clues that contain their own answer; 0 for no clues.
pub fn leakage_rate(clues: &[ClueRecord]) -> f64 {
    if clues.is_empty() {
        return 0.0;
    }
    let leaked = clues
        .iter()
        .filter(|c| text::contains_answer(&c.clue_text, &c.answer).unwrap_or(false))
        .count();
    leaked as f64 / clues.len() as f64
}
