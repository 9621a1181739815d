use std::sync::Arc;

use arcross_cli::server::{router, AppState};
use arcross_core::cluegen::ClueRecord;
use arcross_core::corpus::ContextKeywordPair;
use arcross_core::store::{Store, StoreFile};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn pair(keyword: &str) -> ContextKeywordPair {
    ContextKeywordPair {
        context: format!("نص تعليمي قصير يتحدث عن {keyword} وما يتصل به"),
        keyword: keyword.into(),
        category: "عام".into(),
        source_article_id: format!("art-{keyword}"),
    }
}

struct Fixture {
    _dir: tempfile::TempDir,
    store_path: std::path::PathBuf,
    app: Router,
    clue_ids: Vec<String>,
    pair_ids: Vec<String>,
}

fn fixture(keywords: &[&str]) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let store_path = dir.path().join("store");
    let store = Store::open_or_init(&store_path).unwrap();
    let pairs: Vec<ContextKeywordPair> = keywords.iter().map(|k| pair(k)).collect();
    let clues: Vec<ClueRecord> = pairs
        .iter()
        .flat_map(|p| (0..2).map(move |i| ClueRecord::new(p, i, format!("تلميح رقم {i} عن الموضوع"), "mock")))
        .collect();
    store.append(StoreFile::Pairs, &pairs).unwrap();
    store.append(StoreFile::Clues, &clues).unwrap();
    let app = router(Arc::new(AppState::new(store).unwrap()), None).unwrap();
    Fixture {
        _dir: dir,
        store_path,
        app,
        clue_ids: clues.iter().filter(|c| c.clue_id.ends_with("-c0")).map(|c| c.clue_id.clone()).collect(),
        pair_ids: pairs.iter().map(ContextKeywordPair::pair_id).collect(),
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => builder.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => builder.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn rating(clue: &str, annotator: &str, level: &str) -> Value {
    json!({"clue_ref": clue, "rating": level, "annotator_id": annotator, "timestamp": "2024-05-01T10:00:00Z"})
}

#[tokio::test]
async fn contexts_are_paged() {
    let f = fixture(&["مصر", "قلم", "نهر"]);
    let (status, page) = call_json(&f.app, "GET", "/contexts?offset=1&limit=1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(page["total"], 3);
    assert_eq!(page["items"].as_array().unwrap().len(), 1);
    assert_eq!(page["items"][0]["id"], f.pair_ids[1]);
    assert_eq!(page["items"][0]["clue_count"], 2);

    let (status, clues) = call_json(&f.app, "GET", &format!("/contexts/{}/clues", f.pair_ids[0]), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(clues["clues"].as_array().unwrap().len(), 2);
    assert_eq!(call(&f.app, "GET", "/contexts/p-missing/clues", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn rating_uniqueness_and_report() {
    let f = fixture(&["مصر"]);
    let body = rating(&f.clue_ids[0], "u1", "A");
    let (status, created) = call_json(&f.app, "POST", "/ratings", Some(body.clone())).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(created["model_id"], "mock");
    assert_eq!(call(&f.app, "POST", "/ratings", Some(body)).await.0, StatusCode::CONFLICT);
    let other = rating(&f.clue_ids[0], "u2", "D");
    assert_eq!(call(&f.app, "POST", "/ratings", Some(other)).await.0, StatusCode::CREATED);

    let (_, report) = call_json(&f.app, "GET", "/reports/ratings", None).await;
    assert_eq!(report["rows"][0]["total"], 2);
    assert!(report["table"].as_str().unwrap().contains("50.00"));

    let lines = std::fs::read_to_string(f.store_path.join("ratings.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);
}

#[tokio::test]
async fn rating_errors() {
    let f = fixture(&["مصر"]);
    let (status, _) = call(&f.app, "POST", "/ratings", Some(json!({"clue_ref": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let bad_level = rating(&f.clue_ids[0], "u1", "F");
    assert_eq!(call(&f.app, "POST", "/ratings", Some(bad_level)).await.0, StatusCode::BAD_REQUEST);
    let mut bad_time = rating(&f.clue_ids[0], "u1", "A");
    bad_time["timestamp"] = json!("yesterday");
    assert_eq!(call(&f.app, "POST", "/ratings", Some(bad_time)).await.0, StatusCode::BAD_REQUEST);
    let unknown = rating("p-000000000000-c9", "u1", "A");
    assert_eq!(call(&f.app, "POST", "/ratings", Some(unknown)).await.0, StatusCode::NOT_FOUND);
    let (status, _) = call(&f.app, "POST", "/ratings", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn rubric_lists_five_levels() {
    let f = fixture(&["مصر"]);
    let (status, rubric) = call_json(&f.app, "GET", "/rubric", None).await;
    assert_eq!(status, StatusCode::OK);
    let levels = rubric["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 5);
    assert_eq!(levels[0]["level"], "A");
    assert!(!levels[4]["description"].as_str().unwrap().is_empty());
}

#[tokio::test]
async fn draft_build_and_puzzle() {
    let f = fixture(&["مصر", "صوت"]);
    let (status, draft) = call_json(&f.app, "POST", "/drafts", None).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = draft["draft_id"].as_str().unwrap().to_string();

    let sel = json!({"add": f.clue_ids});
    let (status, draft) = call_json(&f.app, "POST", &format!("/drafts/{id}/clues"), Some(sel)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(draft["selected_clue_refs"].as_array().unwrap().len(), 2);

    assert_eq!(call(&f.app, "GET", &format!("/drafts/{id}/puzzle"), None).await.0, StatusCode::NOT_FOUND);

    let (status, built) = call(&f.app, "POST", &format!("/drafts/{id}/build"), Some(json!({"seed": 1}))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, stored) = call(&f.app, "GET", &format!("/drafts/{id}/puzzle"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(built, stored);
    let puzzle: Value = serde_json::from_slice(&stored).unwrap();
    let across = puzzle["placements"].as_array().unwrap().iter().find(|p| p["orientation"] == "across").unwrap();
    let (row, col) = (across["row"].as_u64().unwrap() as usize, across["col"].as_u64().unwrap() as usize);
    let first = across["word"].as_str().unwrap().chars().next().unwrap().to_string();
    assert_eq!(puzzle["cells"][row][col], first);

    let (_, draft) = call_json(&f.app, "GET", &format!("/drafts/{id}"), None).await;
    assert_eq!(draft["status"], "built");
}

#[tokio::test]
async fn disjoint_build_is_422_with_diagnostics() {
    let f = fixture(&["مصر", "قلب"]);
    let body = json!({"draft_id": "mine", "clue_refs": f.clue_ids});
    let (status, _) = call_json(&f.app, "POST", "/drafts", Some(body.clone())).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(call(&f.app, "POST", "/drafts", Some(body)).await.0, StatusCode::CONFLICT);

    let (status, err) = call_json(&f.app, "POST", "/drafts/mine/build", Some(json!({"seed": 0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["diagnostics"]["kind"], "connectivity-impossible");
    let named: Vec<&str> = err["diagnostics"]["components"].as_array().unwrap().iter().flat_map(|c| c.as_array().unwrap()).map(|v| v.as_str().unwrap()).collect();
    assert!(named.contains(&"مصر") && named.contains(&"قلب"));
}

#[tokio::test]
async fn draft_errors() {
    let f = fixture(&["مصر"]);
    assert_eq!(call(&f.app, "POST", "/drafts/none/clues", Some(json!({"add": []}))).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&f.app, "POST", "/drafts/none/build", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&f.app, "GET", "/drafts/none/puzzle", None).await.0, StatusCode::NOT_FOUND);
    let unknown = json!({"clue_refs": ["p-zzz-c0"]});
    assert_eq!(call(&f.app, "POST", "/drafts", Some(unknown)).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&f.app, "POST", "/drafts", Some(json!({"bogus": 1}))).await.0, StatusCode::BAD_REQUEST);
    let (_, d) = call_json(&f.app, "POST", "/drafts", None).await;
    let id = d["draft_id"].as_str().unwrap();
    let sel = json!({"add": ["p-zzz-c0"]});
    assert_eq!(call(&f.app, "POST", &format!("/drafts/{id}/clues"), Some(sel)).await.0, StatusCode::NOT_FOUND);
    let (status, err) = call_json(&f.app, "POST", &format!("/drafts/{id}/build"), Some(json!({"seed": "x"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "bad-request");
}

#[tokio::test]
async fn mutations_replay_from_the_store() {
    let f = fixture(&["مصر", "صوت"]);
    call(&f.app, "POST", "/ratings", Some(rating(&f.clue_ids[0], "u1", "B"))).await;
    call(&f.app, "POST", "/drafts", Some(json!({"clue_refs": f.clue_ids}))).await;
    call(&f.app, "POST", "/drafts/d1/build", Some(json!({"seed": 4}))).await;
    let (_, before) = call(&f.app, "GET", "/drafts/d1/puzzle", None).await;

    let reopened = router(Arc::new(AppState::new(Store::open(&f.store_path).unwrap()).unwrap()), None).unwrap();
    let (status, after) = call(&reopened, "GET", "/drafts/d1/puzzle", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(before, after);
    assert_eq!(call(&reopened, "POST", "/ratings", Some(rating(&f.clue_ids[0], "u1", "A"))).await.0, StatusCode::CONFLICT);
}

#[tokio::test]
async fn stats_and_cors() {
    let f = fixture(&["مصر", "صوت"]);
    let (status, stats) = call_json(&f.app, "GET", "/reports/stats", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stats["pair_count"], 2);
    assert_eq!(stats["clue_count"], 4);

    let req = Request::builder()
        .uri("/rubric")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = f.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}
