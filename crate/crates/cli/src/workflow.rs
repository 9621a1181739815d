//! Pipeline steps shared by the command line and the HTTP service.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use arcross_core::cluegen::{ClueGenerator, ClueRecord};
use arcross_core::corpus::{filter_corpus, ArticleRecord, ContextKeywordPair, FilterConfig, FilterOutcome};
use arcross_core::grid::{build_crossword, AnswerEntry, BuildConfig, BuildFailure, FailureKind, Puzzle};
use arcross_core::store::{read_jsonl, DraftStatus, PuzzleDraft, Store, StoreFile};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Default, Serialize)]
pub struct IngestSummary {
    pub ingested: usize,
    pub duplicates: usize,
    pub unbalanced_markup: usize,
}

/// Appends new articles to the corpus, skipping ids already present.
pub fn ingest_records(store: &Store, records: Vec<ArticleRecord>) -> Result<IngestSummary, CliError> {
    let existing: Vec<ArticleRecord> = store.read_all(StoreFile::Corpus)?;
    let mut seen: HashSet<String> = existing.into_iter().map(|r| r.id).collect();
    let mut summary = IngestSummary::default();
    let mut fresh = Vec::new();
    for mut record in records {
        if !seen.insert(record.id.clone()) {
            summary.duplicates += 1;
            continue;
        }
        if record.resolve_markup() {
            log::warn!("{}: unbalanced bold markup", record.id);
            summary.unbalanced_markup += 1;
        }
        fresh.push(record);
    }
    summary.ingested = store.append(StoreFile::Corpus, &fresh)?;
    Ok(summary)
}

pub fn read_article_file(path: &Path) -> Result<Vec<ArticleRecord>, CliError> {
    read_jsonl(path).map_err(CliError::from)
}

#[derive(Debug, Serialize)]
pub struct FilterSummary {
    pub articles: usize,
    pub candidates: usize,
    pub kept: usize,
    pub rejected: usize,
    pub rejected_by_rule: BTreeMap<String, usize>,
}

/// Filters the whole corpus, replacing the pairs and rejection files.
pub fn run_filter(store: &Store, config: &FilterConfig) -> Result<FilterSummary, CliError> {
    config.validate().map_err(|e| CliError::pipeline("invalid-config", e))?;
    let corpus: Vec<ArticleRecord> = store.read_all(StoreFile::Corpus)?;
    let FilterOutcome { kept, rejected } = filter_corpus(&corpus, config);
    let rejected_by_rule = rejected.iter().fold(BTreeMap::new(), |mut m, r| {
        *m.entry(r.rule.rule_id().to_string()).or_insert(0) += 1;
        m
    });
    store.rewrite(StoreFile::Pairs, &kept)?;
    store.rewrite(StoreFile::Rejections, &rejected)?;
    Ok(FilterSummary {
        articles: corpus.len(),
        candidates: kept.len() + rejected.len(),
        kept: kept.len(),
        rejected: rejected.len(),
        rejected_by_rule,
    })
}

#[derive(Debug, Default, Serialize)]
pub struct GenerateSummary {
    pub pairs: usize,
    pub clues: usize,
    pub flagged: usize,
    pub failed: BTreeMap<String, usize>,
}

/// Generates clues for every pair and replaces the clues file. Output order
/// follows pair order, so a deterministic backend gives identical files.
pub fn run_generation(
    store: &Store,
    generator: &ClueGenerator<'_>,
    concurrency: usize,
    limit: Option<usize>,
) -> Result<GenerateSummary, CliError> {
    let mut pairs: Vec<ContextKeywordPair> = store.read_all(StoreFile::Pairs)?;
    if let Some(n) = limit {
        pairs.truncate(n);
    }
    let results = generator.generate_all(&pairs, concurrency);
    let mut summary = GenerateSummary { pairs: pairs.len(), ..Default::default() };
    let mut clues = Vec::new();
    for (pair, result) in pairs.iter().zip(results) {
        match result {
            Ok(set) => clues.extend(set),
            Err(e) => {
                log::warn!("{}: {e}", pair.pair_id());
                *summary.failed.entry(e.kind().to_string()).or_insert(0) += 1;
            }
        }
    }
    summary.clues = clues.len();
    summary.flagged = clues.iter().filter(|c| !c.validation_status.is_pass()).count();
    store.rewrite(StoreFile::Clues, &clues)?;
    Ok(summary)
}

/// Answers for the clues a draft selected, in selection order.
pub fn draft_answers(clues: &HashMap<String, ClueRecord>, draft: &PuzzleDraft) -> Result<Vec<AnswerEntry>, String> {
    draft
        .selected_clue_refs
        .iter()
        .map(|r| match clues.get(r) {
            Some(c) => Ok(AnswerEntry::new(c.answer.clone(), c.clue_id.clone())),
            None => Err(r.clone()),
        })
        .collect()
}

/// Builds a draft's grid and returns the draft in its built state.
pub fn build_draft(
    clues: &HashMap<String, ClueRecord>,
    draft: &PuzzleDraft,
    config: &BuildConfig,
) -> Result<PuzzleDraft, BuildFailure> {
    let answers = draft_answers(clues, draft).map_err(|missing| BuildFailure {
        kind: FailureKind::EmptyInput,
        message: format!("selected clue `{missing}` is not in the store"),
        unplaceable: vec![missing],
        components: Vec::new(),
        backtracks: 0,
    })?;
    let grid = build_crossword(&answers, config)?;
    let puzzle = Puzzle::from_grid(&grid).expect("built grids are valid");
    Ok(PuzzleDraft { status: DraftStatus::Built, grid: Some(puzzle), ..draft.clone() })
}

/// Sequential ids keep drafts reproducible across runs.
pub fn next_draft_id(drafts: &[PuzzleDraft]) -> String {
    let taken: HashSet<&str> = drafts.iter().map(|d| d.draft_id.as_str()).collect();
    (drafts.len() + 1..)
        .map(|n| format!("d{n}"))
        .find(|id| !taken.contains(id.as_str()))
        .expect("unbounded range")
}

pub fn clue_index(clues: Vec<ClueRecord>) -> HashMap<String, ClueRecord> {
    clues.into_iter().map(|c| (c.clue_id.clone(), c)).collect()
}

/// Applies additions then removals; changing the selection drops any grid.
pub fn update_selection(draft: &PuzzleDraft, add: &[String], remove: &[String]) -> PuzzleDraft {
    let mut refs = draft.selected_clue_refs.clone();
    for r in add {
        if !refs.contains(r) {
            refs.push(r.clone());
        }
    }
    refs.retain(|r| !remove.contains(r));
    if refs == draft.selected_clue_refs {
        return draft.clone();
    }
    PuzzleDraft { draft_id: draft.draft_id.clone(), selected_clue_refs: refs, status: DraftStatus::Selecting, grid: None }
}
