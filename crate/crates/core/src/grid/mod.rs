//! Criss-cross crossword layout for right-to-left answers.
//!
//! Coordinates are logical: `row` grows downward and `col` grows in reading
//! order, so letter `k` of an across word sits at `col + k` and column 0 is
//! the rightmost column on screen. Renderers mirror with
//! `display_x = width - 1 - col`.

mod build;
mod render;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::text::{self, NormalizationProfile};

pub use build::{build_best, build_crossword, AnswerEntry, BuildConfig, BuildFailure, FailureKind, ScoreWeights};
pub use render::{render_grid, RenderError, RenderFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Across,
    Down,
}

impl Orientation {
    /// Step in (row, col) between consecutive letters.
    pub fn step(self) -> (i32, i32) {
        match self {
            Self::Across => (0, 1),
            Self::Down => (1, 0),
        }
    }

    pub fn other(self) -> Self {
        match self {
            Self::Across => Self::Down,
            Self::Down => Self::Across,
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Across => "across",
            Self::Down => "down",
        })
    }
}

/// Letters an answer occupies in the grid: matching normalization (no
/// diacritics or tatweel, unified alef, article kept) with whitespace removed.
pub fn grid_letters(answer: &str) -> String {
    text::normalize(answer, NormalizationProfile::MATCHING)
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    /// Grid letters, see [`grid_letters`].
    pub word: String,
    /// The answer as given, spaces included.
    pub answer: String,
    pub row: usize,
    pub col: usize,
    pub orientation: Orientation,
    pub clue_ref: String,
}

impl Placement {
    pub fn len(&self) -> usize {
        self.word.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    /// (row, col, letter) for every letter in reading order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, char)> + '_ {
        let (dr, dc) = self.orientation.step();
        self.word
            .chars()
            .enumerate()
            .map(move |(k, ch)| (self.row + k * dr as usize, self.col + k * dc as usize, ch))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    /// `cells[row][col]`, `None` for a block.
    pub cells: Vec<Vec<Option<char>>>,
    pub placements: Vec<Placement>,
    /// Clue number of each placement, parallel to `placements`. May be empty
    /// for hand-built grids; [`number_clues`] is the source of truth.
    pub numbering: Vec<u32>,
}

impl Grid {
    /// Lays placements onto a fresh matrix sized to fit them. Where two
    /// placements disagree on a letter the earlier one wins, which
    /// [`validate_grid`] then reports.
    pub fn from_placements(placements: Vec<Placement>) -> Self {
        let height = placements.iter().flat_map(|p| p.cells().map(|c| c.0 + 1)).max().unwrap_or(0);
        let width = placements.iter().flat_map(|p| p.cells().map(|c| c.1 + 1)).max().unwrap_or(0);
        let mut cells = vec![vec![None; width]; height];
        for p in &placements {
            for (r, c, ch) in p.cells() {
                cells[r][c].get_or_insert(ch);
            }
        }
        Self { height, width, cells, placements, numbering: Vec::new() }
    }

    pub fn letter_count(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_some()).count()
    }

    /// Number of cells shared by two placements.
    pub fn intersection_count(&self) -> usize {
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        for p in &self.placements {
            for (r, c, _) in p.cells() {
                *seen.entry((r, c)).or_insert(0) += 1;
            }
        }
        seen.values().filter(|&&n| n > 1).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationRule {
    DimensionMismatch,
    OutOfBounds,
    WordTooShort,
    CellLetterMismatch,
    CrossingLetterMismatch,
    ParallelOverlap,
    UncoveredLetter,
    Disconnected,
    AdjacentParallel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: ViolationRule,
    pub row: Option<usize>,
    pub col: Option<usize>,
    pub detail: String,
}

impl Violation {
    fn at(rule: ViolationRule, row: usize, col: usize, detail: String) -> Self {
        Self { rule, row: Some(row), col: Some(col), detail }
    }
}

/// Placements covering each cell: placement index, letter, orientation.
type Coverage = BTreeMap<(usize, usize), Vec<(usize, char, Orientation)>>;

/// Checks every structural rule of a criss-cross grid and lists all
/// violations found.
pub fn validate_grid(grid: &Grid) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if grid.cells.len() != grid.height || grid.cells.iter().any(|row| row.len() != grid.width) {
        violations.push(Violation {
            rule: ViolationRule::DimensionMismatch,
            row: None,
            col: None,
            detail: format!("cells do not form a {}x{} matrix", grid.height, grid.width),
        });
        return Err(violations);
    }

    let multi = grid.placements.len() >= 2;
    let mut coverage: Coverage = BTreeMap::new();
    for (i, p) in grid.placements.iter().enumerate() {
        if p.is_empty() || (multi && p.len() < 2) {
            violations.push(Violation::at(ViolationRule::WordTooShort, p.row, p.col, format!("placement {i} `{}`", p.word)));
        }
        if p.cells().any(|(r, c, _)| r >= grid.height || c >= grid.width) {
            violations.push(Violation::at(ViolationRule::OutOfBounds, p.row, p.col, format!("placement {i} `{}`", p.word)));
            continue;
        }
        for (r, c, ch) in p.cells() {
            if grid.cells[r][c] != Some(ch) {
                violations.push(Violation::at(
                    ViolationRule::CellLetterMismatch,
                    r,
                    c,
                    format!("placement {i} expects `{ch}`, cell holds {:?}", grid.cells[r][c]),
                ));
            }
            coverage.entry((r, c)).or_default().push((i, ch, p.orientation));
        }
    }

    for (&(r, c), covering) in &coverage {
        for (a, rest) in covering.iter().enumerate() {
            for b in &covering[a + 1..] {
                if rest.1 != b.1 {
                    violations.push(Violation::at(
                        ViolationRule::CrossingLetterMismatch,
                        r,
                        c,
                        format!("placements {} and {} disagree (`{}` vs `{}`)", rest.0, b.0, rest.1, b.1),
                    ));
                }
                if rest.2 == b.2 {
                    violations.push(Violation::at(
                        ViolationRule::ParallelOverlap,
                        r,
                        c,
                        format!("placements {} and {} are both {}", rest.0, b.0, rest.2),
                    ));
                }
            }
        }
    }
    for (r, row) in grid.cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            if cell.is_some() && !coverage.contains_key(&(r, c)) {
                violations.push(Violation::at(ViolationRule::UncoveredLetter, r, c, "letter outside every placement".into()));
            }
        }
    }

    if multi && components(grid.placements.len(), &coverage) > 1 {
        violations.push(Violation {
            rule: ViolationRule::Disconnected,
            row: None,
            col: None,
            detail: "placements do not form one connected group".into(),
        });
    }

    check_runs(grid, &mut violations);

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

fn components(n: usize, coverage: &Coverage) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for covering in coverage.values() {
        for w in covering.windows(2) {
            let (a, b) = (find(&mut parent, w[0].0), find(&mut parent, w[1].0));
            parent[a] = b;
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

/// Every maximal horizontal or vertical run of two or more letters must be
/// exactly one placement of that orientation; anything else means parallel
/// words touch without crossing.
fn check_runs(grid: &Grid, violations: &mut Vec<Violation>) {
    let starts: HashMap<(usize, usize, Orientation), usize> = grid
        .placements
        .iter()
        .map(|p| ((p.row, p.col, p.orientation), p.len()))
        .collect();
    let filled = |r: usize, c: usize| grid.cells[r][c].is_some();
    for orientation in [Orientation::Across, Orientation::Down] {
        let (lines, span) = match orientation {
            Orientation::Across => (grid.height, grid.width),
            Orientation::Down => (grid.width, grid.height),
        };
        for line in 0..lines {
            let at = |k: usize| match orientation {
                Orientation::Across => (line, k),
                Orientation::Down => (k, line),
            };
            let mut k = 0;
            while k < span {
                let (r, c) = at(k);
                if !filled(r, c) {
                    k += 1;
                    continue;
                }
                let start = k;
                while k < span && {
                    let (r, c) = at(k);
                    filled(r, c)
                } {
                    k += 1;
                }
                let len = k - start;
                let (r, c) = at(start);
                if len >= 2 && starts.get(&(r, c, orientation)) != Some(&len) {
                    violations.push(Violation::at(
                        ViolationRule::AdjacentParallel,
                        r,
                        c,
                        format!("{len}-letter {orientation} run is not a placed word"),
                    ));
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClueEntry {
    pub number: u32,
    pub word: String,
    pub answer: String,
    pub clue_ref: String,
    pub row: usize,
    pub col: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Numbering {
    /// Number of each placement, parallel to `Grid::placements`.
    pub numbers: Vec<u32>,
    /// أفقي
    pub across: Vec<ClueEntry>,
    /// رأسي
    pub down: Vec<ClueEntry>,
}

/// Numbers start cells scanning rows top to bottom and, within a row, right
/// to left on screen (ascending logical column). Across and down words that
/// start in the same cell share a number.
pub fn number_clues(grid: &Grid) -> Result<Numbering, Vec<Violation>> {
    validate_grid(grid)?;
    let mut starts: Vec<(usize, usize)> = grid.placements.iter().map(|p| (p.row, p.col)).collect();
    starts.sort_unstable();
    starts.dedup();
    let number_of: HashMap<(usize, usize), u32> =
        starts.iter().enumerate().map(|(i, &cell)| (cell, i as u32 + 1)).collect();
    let numbers: Vec<u32> = grid.placements.iter().map(|p| number_of[&(p.row, p.col)]).collect();
    let mut across = Vec::new();
    let mut down = Vec::new();
    for (p, &number) in grid.placements.iter().zip(&numbers) {
        let entry = ClueEntry {
            number,
            word: p.word.clone(),
            answer: p.answer.clone(),
            clue_ref: p.clue_ref.clone(),
            row: p.row,
            col: p.col,
            length: p.len(),
        };
        match p.orientation {
            Orientation::Across => across.push(entry),
            Orientation::Down => down.push(entry),
        }
    }
    across.sort_by_key(|e| e.number);
    down.sort_by_key(|e| e.number);
    Ok(Numbering { numbers, across, down })
}

/// The structured-JSON puzzle exchanged with the UI and written by
/// `export --format json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Puzzle {
    pub height: usize,
    pub width: usize,
    pub cells: Vec<Vec<Option<String>>>,
    pub placements: Vec<PuzzlePlacement>,
    pub across: Vec<ClueEntry>,
    pub down: Vec<ClueEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuzzlePlacement {
    pub word: String,
    pub answer: String,
    pub row: usize,
    pub col: usize,
    pub orientation: Orientation,
    pub number: u32,
    pub clue_ref: String,
}

impl Puzzle {
    pub fn from_grid(grid: &Grid) -> Result<Self, Vec<Violation>> {
        let numbering = number_clues(grid)?;
        Ok(Self {
            height: grid.height,
            width: grid.width,
            cells: grid
                .cells
                .iter()
                .map(|row| row.iter().map(|c| c.map(String::from)).collect())
                .collect(),
            placements: grid
                .placements
                .iter()
                .zip(&numbering.numbers)
                .map(|(p, &number)| PuzzlePlacement {
                    word: p.word.clone(),
                    answer: p.answer.clone(),
                    row: p.row,
                    col: p.col,
                    orientation: p.orientation,
                    number,
                    clue_ref: p.clue_ref.clone(),
                })
                .collect(),
            across: numbering.across,
            down: numbering.down,
        })
    }

    pub fn to_grid(&self) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
            cells: self
                .cells
                .iter()
                .map(|row| row.iter().map(|c| c.as_deref().and_then(|s| s.chars().next())).collect())
                .collect(),
            placements: self
                .placements
                .iter()
                .map(|p| Placement {
                    word: p.word.clone(),
                    answer: p.answer.clone(),
                    row: p.row,
                    col: p.col,
                    orientation: p.orientation,
                    clue_ref: p.clue_ref.clone(),
                })
                .collect(),
            numbering: self.placements.iter().map(|p| p.number).collect(),
        }
    }
}
