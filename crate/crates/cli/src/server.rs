//! JSON-over-HTTP API for rating clues and curating puzzle drafts.
//!
//! Reads go against an immutable snapshot of the store; each mutation takes
//! the writer lock, appends to the store, then swaps in a fresh snapshot.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex, RwLock};

use arcross_core::cluegen::ClueRecord;
use arcross_core::corpus::{dataset_stats, ContextKeywordPair};
use arcross_core::evaluation::{aggregate_ratings, render_rating_table, RatingLevel, RatingRecord};
use arcross_core::grid::{render_grid, BuildConfig, RenderFormat};
use arcross_core::store::{PuzzleDraft, Store, StoreError, StoreFile};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::error::CliError;
use crate::workflow;

/// Everything the handlers read, loaded from the store.
#[derive(Debug, Default, Clone)]
pub struct Snapshot {
    pub pairs: Vec<ContextKeywordPair>,
    pub pair_index: HashMap<String, usize>,
    pub clues: Vec<ClueRecord>,
    pub clue_index: HashMap<String, usize>,
    pub ratings: Vec<RatingRecord>,
    pub rating_keys: HashSet<String>,
    pub drafts: Vec<PuzzleDraft>,
}

impl Snapshot {
    pub fn load(store: &Store) -> Result<Self, StoreError> {
        let pairs: Vec<ContextKeywordPair> = store.read_all(StoreFile::Pairs)?;
        let clues: Vec<ClueRecord> = store.read_all(StoreFile::Clues)?;
        let ratings: Vec<RatingRecord> = store.read_all(StoreFile::Ratings)?;
        Ok(Self {
            pair_index: pairs.iter().enumerate().map(|(i, p)| (p.pair_id(), i)).collect(),
            clue_index: clues.iter().enumerate().map(|(i, c)| (c.clue_id.clone(), i)).collect(),
            rating_keys: ratings.iter().map(RatingRecord::key).collect(),
            drafts: store.drafts()?,
            pairs,
            clues,
            ratings,
        })
    }

    fn clue(&self, id: &str) -> Option<&ClueRecord> {
        self.clue_index.get(id).map(|&i| &self.clues[i])
    }

    fn draft(&self, id: &str) -> Option<&PuzzleDraft> {
        self.drafts.iter().find(|d| d.draft_id == id)
    }

    fn put_draft(&mut self, draft: PuzzleDraft) {
        match self.drafts.iter_mut().find(|d| d.draft_id == draft.draft_id) {
            Some(slot) => *slot = draft,
            None => self.drafts.push(draft),
        }
    }
}

pub struct AppState {
    store: Store,
    snapshot: RwLock<Arc<Snapshot>>,
    writer: Mutex<()>,
}

impl AppState {
    pub fn new(store: Store) -> Result<Self, StoreError> {
        let snapshot = Snapshot::load(&store)?;
        Ok(Self { store, snapshot: RwLock::new(Arc::new(snapshot)), writer: Mutex::new(()) })
    }

    fn read(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Runs `f` under the writer lock against a copy of the snapshot; the
    /// copy replaces the snapshot only when `f` succeeds.
    fn mutate<T>(&self, f: impl FnOnce(&Store, &mut Snapshot) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut next = (*self.read()).clone();
        let out = f(&self.store, &mut next)?;
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(next);
        Ok(out)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl std::fmt::Display) -> Self {
        Self { status, body: json!({"error": kind, "message": message.to_string()}) }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", format!("no {what} `{id}`"))
    }

    fn bad_request(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "store-error", e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = State<Arc<AppState>>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(ApiError::bad_request)
}

/// Like [`parse_body`] but an empty body means the default value.
fn parse_optional_body<T: DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        Ok(T::default())
    } else {
        parse_body(body)
    }
}

pub fn router(state: Arc<AppState>, cors_origin: Option<&str>) -> Result<Router, CliError> {
    let cors = match cors_origin {
        Some(origin) => {
            let origin = HeaderValue::from_str(origin).map_err(|e| CliError::Usage(format!("bad CORS origin: {e}")))?;
            CorsLayer::new().allow_origin(AllowOrigin::exact(origin))
        }
        None => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);
    Ok(Router::new()
        .route("/contexts", get(list_contexts))
        .route("/contexts/{id}/clues", get(context_clues))
        .route("/ratings", post(post_rating))
        .route("/reports/ratings", get(rating_report))
        .route("/reports/stats", get(stats_report))
        .route("/rubric", get(rubric))
        .route("/drafts", get(list_drafts).post(create_draft))
        .route("/drafts/{id}", get(get_draft))
        .route("/drafts/{id}/clues", post(select_clues))
        .route("/drafts/{id}/build", post(build))
        .route("/drafts/{id}/puzzle", get(puzzle))
        .layer(cors)
        .with_state(state))
}

pub fn serve(store: Store, host: &str, port: u16, cors_origin: Option<&str>) -> Result<(), CliError> {
    let state = Arc::new(AppState::new(store)?);
    let app = router(state, cors_origin)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, app).await
    })?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct Page {
    #[serde(default)]
    offset: usize,
    #[serde(default = "default_limit")]
    limit: usize,
}

fn default_limit() -> usize {
    50
}

async fn list_contexts(State(state): Shared, Query(page): Query<Page>) -> Json<Value> {
    let snap = state.read();
    let limit = page.limit.min(500);
    let mut clue_counts: HashMap<&str, usize> = HashMap::new();
    for c in &snap.clues {
        *clue_counts.entry(c.context_ref.as_str()).or_insert(0) += 1;
    }
    let items: Vec<Value> = snap
        .pairs
        .iter()
        .skip(page.offset)
        .take(limit)
        .map(|p| {
            let id = p.pair_id();
            json!({
                "id": id,
                "keyword": p.keyword,
                "category": p.category,
                "source_article_id": p.source_article_id,
                "context": p.context,
                "clue_count": clue_counts.get(id.as_str()).copied().unwrap_or(0),
            })
        })
        .collect();
    Json(json!({"total": snap.pairs.len(), "offset": page.offset, "limit": limit, "items": items}))
}

async fn context_clues(State(state): Shared, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let snap = state.read();
    let pair = snap.pair_index.get(&id).map(|&i| &snap.pairs[i]).ok_or_else(|| ApiError::not_found("context", &id))?;
    let clues: Vec<&ClueRecord> = snap.clues.iter().filter(|c| c.context_ref == id).collect();
    Ok(Json(json!({"id": id, "keyword": pair.keyword, "context": pair.context, "category": pair.category, "clues": clues})))
}

async fn post_rating(State(state): Shared, body: Bytes) -> ApiResult<(StatusCode, Json<RatingRecord>)> {
    let mut record: RatingRecord = parse_body(&body)?;
    record.validate().map_err(ApiError::bad_request)?;
    if record.annotator_id.trim().is_empty() {
        return Err(ApiError::bad_request("annotator_id is required"));
    }
    let record = state.mutate(move |store, snap| {
        let clue = snap.clue(&record.clue_ref).ok_or_else(|| ApiError::not_found("clue", &record.clue_ref))?;
        if record.model_id.is_empty() {
            record.model_id = clue.generator_id.clone();
        }
        if snap.rating_keys.contains(&record.key()) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "duplicate-rating",
                format!("`{}` already rated clue `{}`", record.annotator_id, record.clue_ref),
            ));
        }
        store.append(StoreFile::Ratings, std::slice::from_ref(&record))?;
        snap.rating_keys.insert(record.key());
        snap.ratings.push(record.clone());
        Ok(record)
    })?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn rating_report(State(state): Shared) -> ApiResult<Json<Value>> {
    let snap = state.read();
    if snap.ratings.is_empty() {
        return Ok(Json(json!({"rows": [], "table": ""})));
    }
    let report = aggregate_ratings(&snap.ratings).map_err(ApiError::bad_request)?;
    Ok(Json(json!({"rows": report.rows, "table": render_rating_table(&report)})))
}

async fn stats_report(State(state): Shared) -> Json<Value> {
    let snap = state.read();
    Json(serde_json::to_value(dataset_stats(&snap.pairs, &snap.clues)).expect("stats serialize"))
}

async fn rubric() -> Json<Value> {
    let levels: Vec<Value> = RatingLevel::ALL
        .iter()
        .map(|l| json!({"level": l.letter().to_string(), "description": l.description()}))
        .collect();
    Json(json!({"levels": levels}))
}

async fn list_drafts(State(state): Shared) -> Json<Vec<PuzzleDraft>> {
    Json(state.read().drafts.clone())
}

async fn get_draft(State(state): Shared, Path(id): Path<String>) -> ApiResult<Json<PuzzleDraft>> {
    state.read().draft(&id).cloned().map(Json).ok_or_else(|| ApiError::not_found("draft", &id))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewDraft {
    draft_id: Option<String>,
    #[serde(default)]
    clue_refs: Vec<String>,
}

fn check_clues(snap: &Snapshot, refs: &[String]) -> ApiResult<()> {
    match refs.iter().find(|r| snap.clue(r).is_none()) {
        Some(r) => Err(ApiError::not_found("clue", r)),
        None => Ok(()),
    }
}

async fn create_draft(State(state): Shared, body: Bytes) -> ApiResult<(StatusCode, Json<PuzzleDraft>)> {
    let req: NewDraft = parse_optional_body(&body)?;
    let draft = state.mutate(move |store, snap| {
        check_clues(snap, &req.clue_refs)?;
        let id = req.draft_id.unwrap_or_else(|| workflow::next_draft_id(&snap.drafts));
        if id.is_empty() {
            return Err(ApiError::bad_request("draft_id must not be empty"));
        }
        if snap.draft(&id).is_some() {
            return Err(ApiError::new(StatusCode::CONFLICT, "duplicate-draft", format!("draft `{id}` exists")));
        }
        let draft = workflow::update_selection(&PuzzleDraft::new(id), &req.clue_refs, &[]);
        store.append(StoreFile::Drafts, std::slice::from_ref(&draft))?;
        snap.put_draft(draft.clone());
        Ok(draft)
    })?;
    Ok((StatusCode::CREATED, Json(draft)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Selection {
    #[serde(default)]
    add: Vec<String>,
    #[serde(default)]
    remove: Vec<String>,
}

async fn select_clues(State(state): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<PuzzleDraft>> {
    let sel: Selection = parse_body(&body)?;
    let draft = state.mutate(move |store, snap| {
        let current = snap.draft(&id).ok_or_else(|| ApiError::not_found("draft", &id))?;
        check_clues(snap, &sel.add)?;
        let next = workflow::update_selection(current, &sel.add, &sel.remove);
        if &next != current {
            store.append(StoreFile::Drafts, std::slice::from_ref(&next))?;
            snap.put_draft(next.clone());
        }
        Ok(next)
    })?;
    Ok(Json(draft))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildRequest {
    #[serde(default)]
    seed: u64,
    max_backtracks: Option<u64>,
}

async fn build(State(state): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: BuildRequest = parse_optional_body(&body)?;
    let mut config = BuildConfig { seed: req.seed, ..Default::default() };
    if let Some(n) = req.max_backtracks {
        config.max_backtracks = n;
    }
    let built = state.mutate(move |store, snap| {
        let current = snap.draft(&id).ok_or_else(|| ApiError::not_found("draft", &id))?;
        let clues: HashMap<String, ClueRecord> = current
            .selected_clue_refs
            .iter()
            .filter_map(|r| snap.clue(r).map(|c| (r.clone(), c.clone())))
            .collect();
        let built = workflow::build_draft(&clues, current, &config).map_err(|failure| ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({"error": "build-failed", "message": failure.to_string(), "diagnostics": failure}),
        })?;
        store.append(StoreFile::Drafts, std::slice::from_ref(&built))?;
        snap.put_draft(built.clone());
        Ok(built)
    })?;
    Ok(puzzle_response(&built))
}

fn puzzle_response(draft: &PuzzleDraft) -> Response {
    let grid = draft.grid.as_ref().expect("caller checked").to_grid();
    let bytes = render_grid(&grid, RenderFormat::Json).expect("stored puzzles render");
    ([(header::CONTENT_TYPE, "application/json; charset=utf-8")], bytes).into_response()
}

async fn puzzle(State(state): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let snap = state.read();
    let draft = snap.draft(&id).ok_or_else(|| ApiError::not_found("draft", &id))?;
    if draft.grid.is_none() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "not-built", format!("draft `{id}` has no grid yet")));
    }
    Ok(puzzle_response(draft))
}
