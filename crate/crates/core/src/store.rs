//! Append-only line-delimited JSON files under one root directory.
//!
//! `manifest.json` names each file and carries the schema version. Appends
//! go out as one `write` per batch; a line cut short by a crash is dropped
//! on the next read (with a warning) and truncated on the next append.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Puzzle;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub schema_version: u32,
    pub corpus_path: String,
    pub pairs_path: String,
    pub clues_path: String,
    pub ratings_path: String,
    pub drafts_path: String,
    pub rejections_path: String,
}

impl Default for StoreManifest {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            corpus_path: "corpus.jsonl".into(),
            pairs_path: "pairs.jsonl".into(),
            clues_path: "clues.jsonl".into(),
            ratings_path: "ratings.jsonl".into(),
            drafts_path: "drafts.jsonl".into(),
            rejections_path: "rejections.jsonl".into(),
        }
    }
}

impl StoreManifest {
    pub fn relative_path(&self, file: StoreFile) -> &str {
        match file {
            StoreFile::Corpus => &self.corpus_path,
            StoreFile::Pairs => &self.pairs_path,
            StoreFile::Clues => &self.clues_path,
            StoreFile::Ratings => &self.ratings_path,
            StoreFile::Drafts => &self.drafts_path,
            StoreFile::Rejections => &self.rejections_path,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StoreFile {
    Corpus,
    Pairs,
    Clues,
    Ratings,
    Drafts,
    Rejections,
}

impl StoreFile {
    pub const ALL: [StoreFile; 6] = [Self::Corpus, Self::Pairs, Self::Clues, Self::Ratings, Self::Drafts, Self::Rejections];
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("no store at {} (missing {MANIFEST_FILE})", .0.display())]
    Missing(PathBuf),
    #[error("store schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaMismatch { found: u32 },
    #[error("{} is not a store file", .0.display())]
    UnknownPath(PathBuf),
    #[error("{}:{line}: {source}", path.display())]
    Parse { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("serialize: {0}")]
    Serialize(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DraftStatus {
    Selecting,
    Built,
    Exported,
}

/// A puzzle being assembled. Drafts are appended on every change; the last
/// line for a `draft_id` is its current state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuzzleDraft {
    pub draft_id: String,
    pub selected_clue_refs: Vec<String>,
    pub status: DraftStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Puzzle>,
}

impl PuzzleDraft {
    pub fn new(draft_id: impl Into<String>) -> Self {
        Self { draft_id: draft_id.into(), selected_clue_refs: Vec::new(), status: DraftStatus::Selecting, grid: None }
    }
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    manifest: StoreManifest,
    writer: Mutex<()>,
}

impl Store {
    /// Opens the store at `root`, creating the directory and a default
    /// manifest when none exists.
    pub fn open_or_init(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref();
        if root.join(MANIFEST_FILE).exists() {
            return Self::open(root);
        }
        fs::create_dir_all(root).map_err(io_err(root))?;
        let manifest = StoreManifest::default();
        let path = root.join(MANIFEST_FILE);
        let body = serde_json::to_vec_pretty(&manifest)?;
        fs::write(&path, body).map_err(io_err(&path))?;
        Ok(Self { root: root.to_path_buf(), manifest, writer: Mutex::new(()) })
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref();
        let path = root.join(MANIFEST_FILE);
        let body = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::Missing(root.to_path_buf())),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let version: serde_json::Value =
            serde_json::from_slice(&body).map_err(|source| StoreError::Parse { path: path.clone(), line: 1, source })?;
        let found = version["schema_version"].as_u64().unwrap_or(0) as u32;
        if found != SCHEMA_VERSION {
            return Err(StoreError::SchemaMismatch { found });
        }
        let manifest =
            serde_json::from_value(version).map_err(|source| StoreError::Parse { path: path.clone(), line: 1, source })?;
        Ok(Self { root: root.to_path_buf(), manifest, writer: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn path(&self, file: StoreFile) -> PathBuf {
        self.root.join(self.manifest.relative_path(file))
    }

    /// Appends records as one write. Returns how many were written.
    pub fn append<T: Serialize>(&self, file: StoreFile, records: &[T]) -> Result<usize, StoreError> {
        let path = self.path(file);
        self.append_at(&path, records)
    }

    /// Like [`Store::append`] but addressed by path; refuses paths the
    /// manifest does not list.
    pub fn append_to_path<T: Serialize>(&self, path: impl AsRef<Path>, records: &[T]) -> Result<usize, StoreError> {
        let path = path.as_ref();
        let known = StoreFile::ALL.iter().map(|&f| self.path(f)).find(|p| p == path || p.ends_with(path));
        match known {
            Some(p) => self.append_at(&p, records),
            None => Err(StoreError::UnknownPath(path.to_path_buf())),
        }
    }

    fn append_at<T: Serialize>(&self, path: &Path, records: &[T]) -> Result<usize, StoreError> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        if buf.is_empty() {
            return Ok(0);
        }
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut f = OpenOptions::new().read(true).append(true).create(true).open(path).map_err(io_err(path))?;
        drop_partial_tail(&mut f).map_err(io_err(path))?;
        f.write_all(&buf).map_err(io_err(path))?;
        f.sync_data().map_err(io_err(path))?;
        Ok(records.len())
    }

    /// All complete records in file order. A missing file reads as empty.
    pub fn read_all<T: DeserializeOwned>(&self, file: StoreFile) -> Result<Vec<T>, StoreError> {
        read_jsonl(&self.path(file))
    }

    /// Replaces a file's contents atomically.
    pub fn rewrite<T: Serialize>(&self, file: StoreFile, records: &[T]) -> Result<(), StoreError> {
        let path = self.path(file);
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root).map_err(io_err(&self.root))?;
        {
            let mut w = io::BufWriter::new(tmp.as_file_mut());
            for r in records {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n").map_err(io_err(&path))?;
            }
            w.flush().map_err(io_err(&path))?;
        }
        tmp.persist(&path).map_err(|e| io_err(&path)(e.error))?;
        Ok(())
    }

    /// Current state of every draft, in order of first appearance.
    pub fn drafts(&self) -> Result<Vec<PuzzleDraft>, StoreError> {
        let all: Vec<PuzzleDraft> = self.read_all(StoreFile::Drafts)?;
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut out: Vec<PuzzleDraft> = Vec::new();
        for d in all {
            match index.get(&d.draft_id) {
                Some(&i) => out[i] = d,
                None => {
                    index.insert(d.draft_id.clone(), out.len());
                    out.push(d);
                }
            }
        }
        Ok(out)
    }

    pub fn draft(&self, draft_id: &str) -> Result<Option<PuzzleDraft>, StoreError> {
        Ok(self.drafts()?.into_iter().find(|d| d.draft_id == draft_id))
    }
}

/// Truncates anything after the last newline.
fn drop_partial_tail(f: &mut File) -> io::Result<()> {
    let len = f.metadata()?.len();
    if len == 0 {
        return Ok(());
    }
    let mut last = [0u8];
    f.seek(SeekFrom::Start(len - 1))?;
    f.read_exact(&mut last)?;
    if last[0] == b'\n' {
        return Ok(());
    }
    let mut keep = len;
    let mut chunk = vec![0u8; 4096];
    while keep > 0 {
        let start = keep.saturating_sub(chunk.len() as u64);
        let n = (keep - start) as usize;
        f.seek(SeekFrom::Start(start))?;
        f.read_exact(&mut chunk[..n])?;
        if let Some(pos) = chunk[..n].iter().rposition(|&b| b == b'\n') {
            keep = start + pos as u64 + 1;
            break;
        }
        keep = start;
    }
    log::warn!("dropping {} bytes of partial trailing line", len - keep);
    f.set_len(keep)
}

/// Reads a JSONL file, skipping blank lines and an unterminated last line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if complete.len() < text.len() {
        log::warn!("{}: ignoring partial trailing line", path.display());
    }
    let mut out = Vec::new();
    for (i, line) in complete.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|source| StoreError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Writes records as JSONL to any writer.
pub fn write_jsonl<T: Serialize, W: Write>(out: &mut W, records: &[T]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn init_then_open() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open_or_init(dir.path()).unwrap();
        assert_eq!(store.manifest().schema_version, 1);
        let again = Store::open(dir.path()).unwrap();
        assert_eq!(again.manifest(), store.manifest());
    }

    #[test]
    fn missing_and_mismatched() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Store::open(dir.path()), Err(StoreError::Missing(_))));
        fs::write(dir.path().join(MANIFEST_FILE), r#"{"schema_version": 7}"#).unwrap();
        assert!(matches!(Store::open(dir.path()), Err(StoreError::SchemaMismatch { found: 7 })));
    }

    #[test]
    fn append_and_read() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open_or_init(dir.path()).unwrap();
        store.append(StoreFile::Pairs, &[json!({"a": 1}), json!({"a": 2})]).unwrap();
        store.append(StoreFile::Pairs, &[json!({"a": 3})]).unwrap();
        let got: Vec<serde_json::Value> = store.read_all(StoreFile::Pairs).unwrap();
        assert_eq!(got.len(), 3);
        assert_eq!(got[2]["a"], 3);
        let none: Vec<serde_json::Value> = store.read_all(StoreFile::Ratings).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn partial_tail_is_skipped_then_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open_or_init(dir.path()).unwrap();
        store.append(StoreFile::Clues, &[json!({"a": 1})]).unwrap();
        let path = store.path(StoreFile::Clues);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"a": 2, "trunc"#).unwrap();
        drop(f);
        let got: Vec<serde_json::Value> = store.read_all(StoreFile::Clues).unwrap();
        assert_eq!(got.len(), 1);
        store.append(StoreFile::Clues, &[json!({"a": 3})]).unwrap();
        let got: Vec<serde_json::Value> = store.read_all(StoreFile::Clues).unwrap();
        assert_eq!(got.iter().map(|v| v["a"].as_i64().unwrap()).collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open_or_init(dir.path()).unwrap();
        fs::write(store.path(StoreFile::Pairs), "{\"a\":1}\nnot json\n{\"a\":2}\n").unwrap();
        let err = store.read_all::<serde_json::Value>(StoreFile::Pairs).unwrap_err();
        assert!(matches!(err, StoreError::Parse { line: 2, .. }));
    }

    #[test]
    fn unknown_path_refused() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open_or_init(dir.path()).unwrap();
        let err = store.append_to_path(dir.path().join("other.jsonl"), &[json!({})]).unwrap_err();
        assert!(matches!(err, StoreError::UnknownPath(_)));
        assert_eq!(store.append_to_path("ratings.jsonl", &[json!({})]).unwrap(), 1);
    }

    #[test]
    fn rewrite_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open_or_init(dir.path()).unwrap();
        store.append(StoreFile::Pairs, &[json!(1), json!(2)]).unwrap();
        store.rewrite(StoreFile::Pairs, &[json!(9)]).unwrap();
        let got: Vec<serde_json::Value> = store.read_all(StoreFile::Pairs).unwrap();
        assert_eq!(got, vec![json!(9)]);
    }

    #[test]
    fn last_draft_line_wins() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open_or_init(dir.path()).unwrap();
        let mut d = PuzzleDraft::new("d1");
        store.append(StoreFile::Drafts, &[d.clone(), PuzzleDraft::new("d2")]).unwrap();
        d.selected_clue_refs.push("p-1-c0".into());
        store.append(StoreFile::Drafts, &[d.clone()]).unwrap();
        let drafts = store.drafts().unwrap();
        assert_eq!(drafts.len(), 2);
        assert_eq!(drafts[0], d);
        assert_eq!(store.draft("d2").unwrap().unwrap().status, DraftStatus::Selecting);
    }
}
