//! Lead-section client for a MediaWiki-compatible API.
//!
//! Live mode issues `action=query&prop=revisions|info&rvsection=0` with
//! `formatversion=2`. Fixture mode reads `<dir>/<percent-encoded title>.json`
//! holding the same response body, so fixtures can be captured with curl.

use std::path::{Path, PathBuf};
use std::time::Duration;

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use serde_json::Value;
use thiserror::Error;

use crate::cluegen::RetryPolicy;
use crate::corpus::{extract_bold_keywords, strip_markup, ArticleRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchMode {
    Live,
    Fixture(PathBuf),
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("article `{0}` not found")]
    NotFound(String),
    #[error("network failure: {0}")]
    Network(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl FetchError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, Self::Network(_))
    }
}

/// File name a fixture for `title` is stored under.
pub fn fixture_file_name(title: &str) -> String {
    format!("{}.json", utf8_percent_encode(title, NON_ALPHANUMERIC))
}

pub struct WikiClient {
    agent: ureq::Agent,
    endpoint: String,
    mode: FetchMode,
    category: String,
}

impl WikiClient {
    pub fn new(endpoint: &str, mode: FetchMode) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, endpoint: endpoint.to_string(), mode, category: String::new() }
    }

    /// Category stamped on every fetched record.
    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = category.into();
        self
    }

    pub fn fetch(&self, title: &str) -> Result<ArticleRecord, FetchError> {
        let body = match &self.mode {
            FetchMode::Fixture(dir) => read_fixture(dir, title)?,
            FetchMode::Live => self.get_live(title)?,
        };
        let value: Value = serde_json::from_str(&body).map_err(|e| FetchError::Malformed(e.to_string()))?;
        let mut record = parse_response(&value, title)?;
        record.category = self.category.clone();
        if record.url.is_empty() && self.mode == FetchMode::Live {
            record.url = format!("{}?curid={}", self.endpoint, record.id);
        }
        Ok(record)
    }

    fn get_live(&self, title: &str) -> Result<String, FetchError> {
        let mut response = self
            .agent
            .get(&self.endpoint)
            .query("action", "query")
            .query("prop", "revisions|info")
            .query("rvprop", "content")
            .query("rvslots", "main")
            .query("rvsection", "0")
            .query("inprop", "url")
            .query("format", "json")
            .query("formatversion", "2")
            .query("titles", title)
            .call()
            .map_err(|e| FetchError::Network(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| FetchError::Network(e.to_string()))?;
        match status {
            200..=299 => Ok(body),
            404 => Err(FetchError::NotFound(title.to_string())),
            429 | 500..=599 => Err(FetchError::Network(format!("HTTP {status}"))),
            _ => Err(FetchError::Malformed(format!("HTTP {status}"))),
        }
    }

    /// Fetches titles with at most `concurrency` requests in flight,
    /// retrying network failures per `retry`. Results keep input order.
    pub fn fetch_many(
        &self,
        titles: &[String],
        concurrency: usize,
        retry: &RetryPolicy,
    ) -> Vec<Result<ArticleRecord, FetchError>> {
        let concurrency = concurrency.max(1);
        let mut out = Vec::with_capacity(titles.len());
        for chunk in titles.chunks(concurrency) {
            let results: Vec<_> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk.iter().map(|t| scope.spawn(|| self.fetch_with_retry(t, retry))).collect();
                handles.into_iter().map(|h| h.join().expect("fetch thread panicked")).collect()
            });
            out.extend(results);
        }
        out
    }

    fn fetch_with_retry(&self, title: &str, retry: &RetryPolicy) -> Result<ArticleRecord, FetchError> {
        let mut attempt = 0;
        loop {
            match self.fetch(title) {
                Err(e) if e.is_retriable() && attempt < retry.max_retries => {
                    attempt += 1;
                    log::warn!("fetch `{title}` failed ({e}), retry {attempt}");
                    std::thread::sleep(retry.delay(attempt));
                }
                other => return other,
            }
        }
    }
}

/// One-shot fetch; see [`WikiClient`].
pub fn fetch_article(title: &str, endpoint: &str, mode: FetchMode) -> Result<ArticleRecord, FetchError> {
    WikiClient::new(endpoint, mode).fetch(title)
}

fn read_fixture(dir: &Path, title: &str) -> Result<String, FetchError> {
    let path = dir.join(fixture_file_name(title));
    match std::fs::read(&path) {
        Ok(bytes) => String::from_utf8(bytes).map_err(|e| FetchError::Malformed(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(FetchError::NotFound(title.to_string())),
        Err(e) => Err(FetchError::Network(format!("{}: {e}", path.display()))),
    }
}

fn parse_response(value: &Value, title: &str) -> Result<ArticleRecord, FetchError> {
    let page = value
        .pointer("/query/pages/0")
        .ok_or_else(|| FetchError::Malformed("missing query.pages".into()))?;
    if page.get("missing").is_some() || page.get("invalid").is_some() {
        return Err(FetchError::NotFound(title.to_string()));
    }
    let revision = page.pointer("/revisions/0").ok_or_else(|| FetchError::Malformed("missing revisions".into()))?;
    let content = revision
        .pointer("/slots/main/content")
        .or_else(|| revision.get("content"))
        .and_then(Value::as_str)
        .ok_or_else(|| FetchError::Malformed("missing revision content".into()))?;
    let lead = match content.find("\n==") {
        Some(i) => &content[..i],
        None => content,
    };
    let bold = extract_bold_keywords(lead);
    if bold.unbalanced {
        log::warn!("`{title}`: unbalanced bold markup");
    }
    let page_title = page.get("title").and_then(Value::as_str).unwrap_or(title);
    let id = match page.get("pageid") {
        Some(Value::Number(n)) => n.to_string(),
        _ => page_title.to_string(),
    };
    Ok(ArticleRecord {
        id,
        title: page_title.to_string(),
        intro_text: strip_markup(lead).trim().to_string(),
        bold_keywords: bold.keywords,
        category: String::new(),
        url: page.get("fullurl").and_then(Value::as_str).unwrap_or_default().to_string(),
        view_count: None,
        extra_metadata: Default::default(),
    })
}
