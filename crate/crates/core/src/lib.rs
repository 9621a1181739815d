//! Arabic educational text to crossword clues and criss-cross grids.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! * [`text`] normalizes Arabic script, counts letters, validates keywords and
//!   detects answer leakage.
//! * [`corpus`] ingests article records, extracts bolded keywords, filters
//!   (context, keyword) pairs, splits and summarizes the dataset.
//! * [`wiki`] fetches lead sections from a MediaWiki-compatible API or from
//!   local fixtures.
//! * [`cluegen`] builds prompts, drives a [`cluegen::TextBackend`], parses and
//!   validates clues, and exports instruction-tuning records.
//! * [`evaluation`] scores clues with ROUGE-1/2/L and aggregates A–E ratings.
//! * [`grid`] lays answers out as a right-to-left criss-cross puzzle.
//! * [`store`] is the append-only line-delimited JSON store tying it together.

pub mod cluegen;
pub mod corpus;
pub mod evaluation;
pub mod grid;
pub mod store;
pub mod text;
pub mod wiki;

pub use cluegen::{ClueRecord, ValidationStatus};
pub use corpus::{ArticleRecord, ContextKeywordPair, FilterConfig};
pub use evaluation::{RatingLevel, RatingRecord, RougeScore};
pub use grid::{BuildConfig, Grid, Orientation, Placement, Puzzle};
pub use store::{PuzzleDraft, Store, StoreFile};
pub use text::{KeywordRules, NormalizationProfile};
