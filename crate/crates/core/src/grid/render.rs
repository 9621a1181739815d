use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use super::{number_clues, ClueEntry, Grid, Puzzle, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Text,
    Svg,
    Json,
}

impl FromStr for RenderFormat {
    type Err = RenderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Self::Text),
            "svg" => Ok(Self::Svg),
            "json" => Ok(Self::Json),
            other => Err(RenderError::UnsupportedFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("unsupported format `{0}` (expected text, svg or json)")]
    UnsupportedFormat(String),
    #[error("grid is invalid ({} violations, first: {:?})", .0.len(), .0.first().map(|v| v.rule))]
    InvalidGrid(Vec<Violation>),
}

const CELL: usize = 40;

/// Renders a valid grid. Text and SVG mirror logical columns so that column
/// 0 is drawn rightmost.
pub fn render_grid(grid: &Grid, format: RenderFormat) -> Result<Vec<u8>, RenderError> {
    let numbering = number_clues(grid).map_err(RenderError::InvalidGrid)?;
    let start_numbers = || {
        let mut starts = vec![vec![None; grid.width]; grid.height];
        for (p, &n) in grid.placements.iter().zip(&numbering.numbers) {
            starts[p.row][p.col] = Some(n);
        }
        starts
    };
    let out = match format {
        RenderFormat::Json => {
            let puzzle = Puzzle::from_grid(grid).map_err(RenderError::InvalidGrid)?;
            let mut bytes = serde_json::to_vec_pretty(&puzzle).expect("puzzle serializes");
            bytes.push(b'\n');
            bytes
        }
        RenderFormat::Text => {
            let mut s = String::new();
            for row in &grid.cells {
                let line: Vec<String> = row.iter().rev().map(|c| c.map_or("#".into(), String::from)).collect();
                s.push_str(&line.join(" "));
                s.push('\n');
            }
            write_list(&mut s, "أفقي", &numbering.across);
            write_list(&mut s, "رأسي", &numbering.down);
            s.into_bytes()
        }
        RenderFormat::Svg => render_svg(grid, &start_numbers()).into_bytes(),
    };
    Ok(out)
}

fn write_list(s: &mut String, title: &str, entries: &[ClueEntry]) {
    if entries.is_empty() {
        return;
    }
    let _ = write!(s, "\n{title}:\n");
    for e in entries {
        let _ = writeln!(s, "{}. {} ({}) [{}]", e.number, e.answer, e.length, e.clue_ref);
    }
}

fn render_svg(grid: &Grid, starts: &[Vec<Option<u32>>]) -> String {
    let (w, h) = (grid.width * CELL, grid.height * CELL);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" direction="rtl">"#
    );
    s.push_str(
        "<style>.cell{fill:#fff;stroke:#000;stroke-width:1}.letter{font:20px sans-serif;text-anchor:middle}.num{font:10px sans-serif;text-anchor:end}</style>\n",
    );
    for (r, row) in grid.cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let Some(ch) = cell else { continue };
            let x = (grid.width - 1 - c) * CELL;
            let y = r * CELL;
            let _ = writeln!(s, r#"<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}"/>"#);
            let _ = writeln!(
                s,
                r#"<text class="letter" x="{}" y="{}">{}</text>"#,
                x + CELL / 2,
                y + CELL * 7 / 10,
                escape(*ch)
            );
            if let Some(n) = starts[r][c] {
                let _ = writeln!(s, r#"<text class="num" x="{}" y="{}">{n}</text>"#, x + CELL - 3, y + 11);
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(ch: char) -> String {
    match ch {
        '<' => "&lt;".into(),
        '>' => "&gt;".into(),
        '&' => "&amp;".into(),
        '"' => "&quot;".into(),
        c => c.to_string(),
    }
}
