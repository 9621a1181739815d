use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{grid_letters, number_clues, Grid, Orientation, Placement};

/// An answer to lay out, with the clue it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerEntry {
    pub answer: String,
    pub clue_ref: String,
}

impl AnswerEntry {
    pub fn new(answer: impl Into<String>, clue_ref: impl Into<String>) -> Self {
        Self { answer: answer.into(), clue_ref: clue_ref.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    /// Reward per crossing a candidate creates.
    pub intersections: f64,
    /// Penalty per unit of bounding-box growth (height + width).
    pub compactness: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self { intersections: 1.0, compactness: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub seed: u64,
    /// Undone placements allowed before giving up.
    pub max_backtracks: u64,
    pub max_grid_side: usize,
    pub score_weights: ScoreWeights,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self { seed: 0, max_backtracks: 5_000, max_grid_side: 30, score_weights: ScoreWeights::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    EmptyInput,
    AnswerTooShort,
    AnswerTooLong,
    DuplicateAnswer,
    ConnectivityImpossible,
    SearchBudgetExhausted,
    NoLayoutFound,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::EmptyInput => "empty-input",
            Self::AnswerTooShort => "answer-too-short",
            Self::AnswerTooLong => "answer-too-long",
            Self::DuplicateAnswer => "duplicate-answer",
            Self::ConnectivityImpossible => "connectivity-impossible",
            Self::SearchBudgetExhausted => "search-budget-exhausted",
            Self::NoLayoutFound => "no-layout-found",
        })
    }
}

/// Why a build failed, with the answers responsible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("{kind}: {message}")]
pub struct BuildFailure {
    pub kind: FailureKind,
    pub message: String,
    /// Answers that could not be placed (or that triggered the input check).
    pub unplaceable: Vec<String>,
    /// Groups of answers linked by shared letters; only filled for
    /// connectivity failures.
    pub components: Vec<Vec<String>>,
    pub backtracks: u64,
}

impl BuildFailure {
    fn input(kind: FailureKind, message: String, answers: Vec<String>) -> Self {
        Self { kind, message, unplaceable: answers, components: Vec::new(), backtracks: 0 }
    }
}

/// Lays every answer into one connected criss-cross grid.
///
/// Depth-first search: answers are tried longest first, the first answer
/// goes across at the origin, and each step places the first unplaced answer
/// that has any legal crossing. Candidates are ordered by score with a
/// seeded random tie-break, so the same input and seed always give the
/// same grid.
pub fn build_crossword(answers: &[AnswerEntry], config: &BuildConfig) -> Result<Grid, BuildFailure> {
    let letters = check_input(answers, config)?;

    let mut order: Vec<usize> = (0..answers.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(letters[i].len()));
    let words: Vec<Vec<char>> = order.iter().map(|&i| letters[i].clone()).collect();

    let mut search = Search::new(&words, config);
    search.place(0, (0, 0), Orientation::Across);
    let outcome = search.dfs(words.len() - 1);
    let unplaced = |placed: &[bool]| -> Vec<String> {
        order
            .iter()
            .zip(placed)
            .filter(|(_, &p)| !p)
            .map(|(&i, _)| answers[i].answer.clone())
            .collect()
    };
    match outcome {
        Outcome::Found => {}
        Outcome::DeadEnd => {
            return Err(BuildFailure {
                kind: FailureKind::NoLayoutFound,
                message: "search space exhausted without a complete layout".into(),
                unplaceable: unplaced(&search.best_partial),
                components: Vec::new(),
                backtracks: search.backtracks,
            })
        }
        Outcome::Exhausted => {
            return Err(BuildFailure {
                kind: FailureKind::SearchBudgetExhausted,
                message: format!("gave up after {} backtracks", search.backtracks),
                unplaceable: unplaced(&search.best_partial),
                components: Vec::new(),
                backtracks: search.backtracks,
            })
        }
    }

    let (min_r, min_c, _, _) = search.bbox();
    let mut placements: Vec<(usize, Placement)> = search
        .placed
        .iter()
        .enumerate()
        .map(|(w, slot)| {
            let (r, c, orientation) = slot.expect("complete layout");
            let src = order[w];
            (
                src,
                Placement {
                    word: letters[src].iter().collect(),
                    answer: answers[src].answer.clone(),
                    row: (r - min_r) as usize,
                    col: (c - min_c) as usize,
                    orientation,
                    clue_ref: answers[src].clue_ref.clone(),
                },
            )
        })
        .collect();
    placements.sort_by_key(|(src, _)| *src);
    let mut grid = Grid::from_placements(placements.into_iter().map(|(_, p)| p).collect());

    let numbering = number_clues(&grid).map_err(|violations| BuildFailure {
        kind: FailureKind::NoLayoutFound,
        message: format!("internal layout error: {:?}", violations[0]),
        unplaceable: Vec::new(),
        components: Vec::new(),
        backtracks: search.backtracks,
    })?;
    let mut numbered: Vec<(u32, Placement)> = numbering.numbers.into_iter().zip(grid.placements).collect();
    numbered.sort_by_key(|(n, p)| (*n, p.orientation));
    grid.numbering = numbered.iter().map(|(n, _)| *n).collect();
    grid.placements = numbered.into_iter().map(|(_, p)| p).collect();
    Ok(grid)
}

/// Runs one build per seed in parallel and keeps the best-scoring grid,
/// preferring the lowest seed on ties. Fails with the first seed's failure
/// when no seed succeeds.
pub fn build_best(answers: &[AnswerEntry], config: &BuildConfig, seeds: &[u64]) -> Result<(u64, Grid), BuildFailure> {
    if seeds.is_empty() {
        return build_crossword(answers, config).map(|g| (config.seed, g));
    }
    let results: Vec<(u64, Result<Grid, BuildFailure>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let config = BuildConfig { seed, ..*config };
                scope.spawn(move || (seed, build_crossword(answers, &config)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("build thread panicked")).collect()
    });
    let mut best: Option<(f64, u64, Grid)> = None;
    let mut first_failure = None;
    for (seed, result) in results {
        match result {
            Ok(grid) => {
                let score = layout_score(&grid, &config.score_weights);
                let better = match &best {
                    None => true,
                    Some((s, bseed, _)) => score > *s || (score == *s && seed < *bseed),
                };
                if better {
                    best = Some((score, seed, grid));
                }
            }
            Err(e) => {
                first_failure.get_or_insert(e);
            }
        }
    }
    match best {
        Some((_, seed, grid)) => Ok((seed, grid)),
        None => Err(first_failure.expect("at least one seed")),
    }
}

/// Whole-grid score: crossings rewarded, bounding box penalized.
pub fn layout_score(grid: &Grid, weights: &ScoreWeights) -> f64 {
    weights.intersections * grid.intersection_count() as f64 - weights.compactness * (grid.height + grid.width) as f64
}

fn check_input(answers: &[AnswerEntry], config: &BuildConfig) -> Result<Vec<Vec<char>>, BuildFailure> {
    if answers.is_empty() {
        return Err(BuildFailure::input(FailureKind::EmptyInput, "no answers given".into(), Vec::new()));
    }
    let letters: Vec<Vec<char>> = answers.iter().map(|a| grid_letters(&a.answer).chars().collect()).collect();

    let min_len = if answers.len() > 1 { 2 } else { 1 };
    let short: Vec<String> = answers
        .iter()
        .zip(&letters)
        .filter(|(_, l)| l.len() < min_len)
        .map(|(a, _)| a.answer.clone())
        .collect();
    if !short.is_empty() {
        return Err(BuildFailure::input(
            FailureKind::AnswerTooShort,
            format!("answers need at least {min_len} letters"),
            short,
        ));
    }
    let long: Vec<String> = answers
        .iter()
        .zip(&letters)
        .filter(|(_, l)| l.len() > config.max_grid_side)
        .map(|(a, _)| a.answer.clone())
        .collect();
    if !long.is_empty() {
        return Err(BuildFailure::input(
            FailureKind::AnswerTooLong,
            format!("answers longer than the {}-cell grid side", config.max_grid_side),
            long,
        ));
    }

    let mut seen: BTreeMap<&[char], usize> = BTreeMap::new();
    let mut duplicates = Vec::new();
    for (i, l) in letters.iter().enumerate() {
        if let Some(&first) = seen.get(l.as_slice()) {
            if !duplicates.contains(&answers[first].answer) {
                duplicates.push(answers[first].answer.clone());
            }
            duplicates.push(answers[i].answer.clone());
        } else {
            seen.insert(l, i);
        }
    }
    if !duplicates.is_empty() {
        return Err(BuildFailure::input(
            FailureKind::DuplicateAnswer,
            "answers repeat after normalization".into(),
            duplicates,
        ));
    }

    let groups = letter_components(&letters);
    if groups.len() > 1 {
        let longest = (0..letters.len()).max_by_key(|&i| (letters[i].len(), std::cmp::Reverse(i))).unwrap_or(0);
        let names = |g: &Vec<usize>| g.iter().map(|&i| answers[i].answer.clone()).collect::<Vec<_>>();
        let unplaceable = groups.iter().filter(|g| !g.contains(&longest)).flat_map(names).collect();
        return Err(BuildFailure {
            kind: FailureKind::ConnectivityImpossible,
            message: format!("answers split into {} groups with no shared letters", groups.len()),
            unplaceable,
            components: groups.iter().map(names).collect(),
            backtracks: 0,
        });
    }
    Ok(letters)
}

/// Groups of answer indices connected through shared letters, each group in
/// input order, groups ordered by their first member.
fn letter_components(letters: &[Vec<char>]) -> Vec<Vec<usize>> {
    let sets: Vec<BTreeSet<char>> = letters.iter().map(|l| l.iter().copied().collect()).collect();
    let mut group = vec![usize::MAX; letters.len()];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for start in 0..letters.len() {
        if group[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        group[start] = id;
        let mut members = vec![start];
        let mut k = 0;
        while k < members.len() {
            let cur = members[k];
            for other in 0..letters.len() {
                if group[other] == usize::MAX && !sets[cur].is_disjoint(&sets[other]) {
                    group[other] = id;
                    members.push(other);
                }
            }
            k += 1;
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    letter: char,
    across: bool,
    down: bool,
}

impl Cell {
    fn has(&self, o: Orientation) -> bool {
        match o {
            Orientation::Across => self.across,
            Orientation::Down => self.down,
        }
    }

    fn set(&mut self, o: Orientation, value: bool) {
        match o {
            Orientation::Across => self.across = value,
            Orientation::Down => self.down = value,
        }
    }
}

type Pos = (i32, i32);

struct Candidate {
    start: Pos,
    orientation: Orientation,
    score: f64,
    tie: u64,
}

enum Outcome {
    Found,
    DeadEnd,
    Exhausted,
}

struct Search<'a> {
    words: &'a [Vec<char>],
    config: &'a BuildConfig,
    cells: BTreeMap<Pos, Cell>,
    placed: Vec<Option<(i32, i32, Orientation)>>,
    bboxes: Vec<(i32, i32, i32, i32)>,
    rng: ChaCha8Rng,
    backtracks: u64,
    best_partial: Vec<bool>,
}

impl<'a> Search<'a> {
    fn new(words: &'a [Vec<char>], config: &'a BuildConfig) -> Self {
        Self {
            words,
            config,
            cells: BTreeMap::new(),
            placed: vec![None; words.len()],
            bboxes: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            backtracks: 0,
            best_partial: vec![false; words.len()],
        }
    }

    fn bbox(&self) -> (i32, i32, i32, i32) {
        *self.bboxes.last().expect("at least one placement")
    }

    fn occupied(&self, pos: Pos) -> bool {
        self.cells.contains_key(&pos)
    }

    fn dfs(&mut self, remaining: usize) -> Outcome {
        if remaining == 0 {
            return Outcome::Found;
        }
        let mut next = None;
        for w in 0..self.words.len() {
            if self.placed[w].is_none() {
                let c = self.candidates(w);
                if !c.is_empty() {
                    next = Some((w, c));
                    break;
                }
            }
        }
        let Some((w, candidates)) = next else {
            let count = self.placed.iter().filter(|p| p.is_some()).count();
            if count > self.best_partial.iter().filter(|&&b| b).count() {
                self.best_partial = self.placed.iter().map(Option::is_some).collect();
            }
            return Outcome::DeadEnd;
        };
        for cand in candidates {
            self.place(w, cand.start, cand.orientation);
            match self.dfs(remaining - 1) {
                Outcome::Found => return Outcome::Found,
                Outcome::Exhausted => return Outcome::Exhausted,
                Outcome::DeadEnd => {}
            }
            self.unplace(w);
            self.backtracks += 1;
            if self.backtracks > self.config.max_backtracks {
                return Outcome::Exhausted;
            }
        }
        Outcome::DeadEnd
    }

    fn candidates(&mut self, w: usize) -> Vec<Candidate> {
        let word = &self.words[w];
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (&(r, c), cell) in &self.cells {
            let orientation = match (cell.across, cell.down) {
                (true, true) => continue,
                (true, false) => Orientation::Down,
                _ => Orientation::Across,
            };
            let (dr, dc) = orientation.step();
            for (k, &ch) in word.iter().enumerate() {
                if ch != cell.letter {
                    continue;
                }
                let start = (r - k as i32 * dr, c - k as i32 * dc);
                if seen.insert((start, orientation)) {
                    if let Some(score) = self.fit(word, start, orientation) {
                        out.push((start, orientation, score));
                    }
                }
            }
        }
        let mut cands: Vec<Candidate> = out
            .into_iter()
            .map(|(start, orientation, score)| Candidate { start, orientation, score, tie: self.rng.random() })
            .collect();
        cands.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.tie.cmp(&b.tie)));
        cands
    }

    /// Score of a legal placement, `None` when it breaks a rule.
    fn fit(&self, word: &[char], (r, c): Pos, o: Orientation) -> Option<f64> {
        let (dr, dc) = o.step();
        let (pr, pc) = (dc, dr);
        let len = word.len() as i32;
        if self.occupied((r - dr, c - dc)) || self.occupied((r + len * dr, c + len * dc)) {
            return None;
        }
        let mut crossings = 0;
        for (k, &ch) in word.iter().enumerate() {
            let pos = (r + k as i32 * dr, c + k as i32 * dc);
            match self.cells.get(&pos) {
                Some(cell) => {
                    if cell.letter != ch || cell.has(o) {
                        return None;
                    }
                    crossings += 1;
                }
                None => {
                    if self.occupied((pos.0 + pr, pos.1 + pc)) || self.occupied((pos.0 - pr, pos.1 - pc)) {
                        return None;
                    }
                }
            }
        }
        if crossings == 0 {
            return None;
        }
        let (min_r, min_c, max_r, max_c) = self.bbox();
        let (end_r, end_c) = (r + (len - 1) * dr, c + (len - 1) * dc);
        let (nmin_r, nmin_c, nmax_r, nmax_c) = (min_r.min(r), min_c.min(c), max_r.max(end_r), max_c.max(end_c));
        let side = self.config.max_grid_side as i32;
        if nmax_r - nmin_r + 1 > side || nmax_c - nmin_c + 1 > side {
            return None;
        }
        let growth = (nmax_r - nmin_r + nmax_c - nmin_c) - (max_r - min_r + max_c - min_c);
        let weights = &self.config.score_weights;
        Some(weights.intersections * crossings as f64 - weights.compactness * growth as f64)
    }

    fn place(&mut self, w: usize, (r, c): Pos, o: Orientation) {
        let (dr, dc) = o.step();
        let len = self.words[w].len() as i32;
        for (k, &ch) in self.words[w].iter().enumerate() {
            let pos = (r + k as i32 * dr, c + k as i32 * dc);
            self.cells
                .entry(pos)
                .or_insert(Cell { letter: ch, across: false, down: false })
                .set(o, true);
        }
        let (end_r, end_c) = (r + (len - 1) * dr, c + (len - 1) * dc);
        let next = match self.bboxes.last() {
            Some(&(a, b, x, y)) => (a.min(r), b.min(c), x.max(end_r), y.max(end_c)),
            None => (r, c, end_r, end_c),
        };
        self.bboxes.push(next);
        self.placed[w] = Some((r, c, o));
    }

    fn unplace(&mut self, w: usize) {
        let (r, c, o) = self.placed[w].take().expect("word is placed");
        let (dr, dc) = o.step();
        for k in 0..self.words[w].len() as i32 {
            let pos = (r + k * dr, c + k * dc);
            let cell = self.cells.get_mut(&pos).expect("placed cell");
            cell.set(o, false);
            if !cell.across && !cell.down {
                self.cells.remove(&pos);
            }
        }
        self.bboxes.pop();
    }
}
