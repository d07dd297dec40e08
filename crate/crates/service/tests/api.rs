use std::path::Path;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use figtab::archive::read_entries;
use figtab::geometry::Rect;
use figtab::pdf::fixture::{build_pdf, solid_rgb, FixturePage, XrefStyle};
use figtab::table::parse_reply;
use figtab::vlm::{BackendConfig, BackendRegistry, MockSettings, Provider};
use figtab_service::api::{FigureList, SessionCreated, SessionSummary, TableView, UploadResponse};
use figtab_service::{multipart, router, AppState, ErrorBody, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

const CANNED: &str = "Region\tSales\tCost\nNorth\t1,200\t300\nSouth\t950\t410\nEast\t?\t2.5k";

fn registry() -> BackendRegistry {
    let mut echo = BackendConfig::mock_reply(CANNED);
    echo.name = "echo".into();
    echo.model_id = "echo".into();
    let scripted = |name: &str, status: u16| {
        let mut c = BackendConfig::new(Provider::Mock, name);
        c.max_retries = 0;
        c.mock = Some(MockSettings {
            reply: Some(CANNED.into()),
            script: vec![status],
            ..Default::default()
        });
        (name.to_string(), c)
    };
    let mut slow = echo.clone();
    slow.name = "slow".into();
    slow.mock.as_mut().unwrap().latency_ms = 150;
    let mut keyed = BackendConfig::new(Provider::Anthropic, "claude-haiku-4-5");
    keyed.name = "keyed".into();
    keyed.api_key_env = "FIGTAB_TEST_KEY_THAT_IS_NEVER_SET".into();
    BackendRegistry {
        default: Some("echo".into()),
        backends: [
            ("echo".to_string(), echo),
            ("slow".to_string(), slow),
            ("keyed".to_string(), keyed),
            scripted("limited", 429),
            scripted("broken", 500),
            scripted("hung", 0),
        ]
        .into_iter()
        .collect(),
    }
}

fn app_at(root: &Path) -> (AppState, Router) {
    let mut cfg = ServiceConfig::new(root).with_registry(registry());
    cfg.max_upload_bytes = 2 * 1024 * 1024;
    let state = AppState::new(cfg).unwrap();
    (state.clone(), router(state))
}

/// Two figures on one page: a filled box above each caption.
fn two_figure_pdf(first: &str, second: &str) -> Vec<u8> {
    let mut p = FixturePage::letter();
    p.image(Rect::new(100.0, 100.0, 400.0, 280.0), 8, 6, solid_rgb(8, 6, [200, 40, 40]));
    p.text(100.0, 300.0, 10.0, &format!("{first}: Sales by region."));
    p.fill_rect(Rect::new(100.0, 420.0, 400.0, 600.0), [40, 40, 200]);
    p.text(100.0, 620.0, 10.0, &format!("{second}: Cost by region."));
    build_pdf(&[p], XrefStyle::Table)
}

async fn call(app: &Router, method: &str, uri: &str, ctype: Option<&str>, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(c) = ctype {
        req = req.header("content-type", c);
    }
    let resp = app.clone().oneshot(req.body(Body::from(body)).unwrap()).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = match body {
        Some(v) => call(app, method, uri, Some("application/json"), v.to_string().into_bytes()).await,
        None => call(app, method, uri, None, Vec::new()).await,
    };
    let v = if b.is_empty() { Value::Null } else { serde_json::from_slice(&b).expect("JSON body") };
    (s, v)
}

async fn new_session(app: &Router) -> String {
    let (s, v) = call_json(app, "POST", "/sessions", None).await;
    assert_eq!(s, StatusCode::CREATED);
    serde_json::from_value::<SessionCreated>(v).unwrap().session_id
}

async fn upload(app: &Router, sid: &str, files: &[(&str, &[u8])]) -> (StatusCode, Vec<u8>) {
    let parts: Vec<(&str, &str, &[u8])> = files.iter().map(|(n, d)| ("file", *n, *d)).collect();
    let body = multipart::encode("figtab-test-boundary", &parts);
    call(
        app,
        "POST",
        &format!("/sessions/{sid}/documents"),
        Some("multipart/form-data; boundary=figtab-test-boundary"),
        body,
    )
    .await
}

async fn upload_ok(app: &Router, sid: &str, name: &str, pdf: &[u8]) -> UploadResponse {
    let (s, b) = upload(app, sid, &[(name, pdf)]).await;
    assert_eq!(s, StatusCode::CREATED, "{}", String::from_utf8_lossy(&b));
    serde_json::from_slice(&b).unwrap()
}

fn error_of(v: &Value) -> ErrorBody {
    serde_json::from_value(v.clone()).unwrap()
}

async fn extract(app: &Router, fref: &str, body: Value) -> (StatusCode, Value) {
    call_json(app, "POST", &format!("/figures/{fref}/extract"), Some(body)).await
}

async fn figures(app: &Router, sid: &str) -> FigureList {
    let (s, v) = call_json(app, "GET", &format!("/sessions/{sid}/figures"), None).await;
    assert_eq!(s, StatusCode::OK);
    serde_json::from_value(v).unwrap()
}

#[tokio::test]
async fn sessions_start_empty_and_ids_differ() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_at(dir.path());
    let a = new_session(&app).await;
    let b = new_session(&app).await;
    assert_ne!(a, b);
    assert_eq!(a.len(), 32);
    let (s, v) = call_json(&app, "GET", &format!("/sessions/{a}"), None).await;
    assert_eq!(s, StatusCode::OK);
    let summary: SessionSummary = serde_json::from_value(v).unwrap();
    assert!(summary.documents.is_empty());
    assert!(figures(&app, &a).await.figures.is_empty());
}

#[tokio::test]
async fn uploads_accumulate_figures() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_at(dir.path());
    let sid = new_session(&app).await;
    let first = upload_ok(&app, &sid, "a.pdf", &two_figure_pdf("Figure 1", "Figure 2")).await;
    assert_eq!(first.figures.len(), 2);
    let labels: Vec<&str> = first.figures.iter().map(|f| f.label.as_str()).collect();
    assert_eq!(labels, ["Figure 1", "Figure 2"]);
    for f in &first.figures {
        assert_eq!((f.page, f.doc_id.as_str(), f.filename.as_str()), (1, "doc1", "a.pdf"));
        assert_eq!(f.image_url, format!("/figures/{}/image", f.figure_ref));
        assert!(f.crop.width() > 0.0 && f.crop.height() > 0.0);
    }
    // Crops contain the planted boxes.
    assert!(first.figures[0].crop.contains(&Rect::new(100.0, 100.0, 400.0, 280.0)));
    assert!(first.figures[1].crop.contains(&Rect::new(100.0, 420.0, 400.0, 600.0)));

    let second = upload_ok(&app, &sid, "b.pdf", &two_figure_pdf("Figure 3", "Figure 4")).await;
    assert_eq!(second.figures.len(), 2);
    assert_eq!(second.documents.len(), 2);
    let all = figures(&app, &sid).await.figures;
    assert_eq!(all.len(), 4);
    let docs: Vec<&str> = all.iter().map(|f| f.doc_id.as_str()).collect();
    assert_eq!(docs, ["doc1", "doc1", "doc2", "doc2"]);
    let refs: std::collections::HashSet<&str> = all.iter().map(|f| f.figure_ref.as_str()).collect();
    assert_eq!(refs.len(), 4);

    let f = &all[0];
    let (s, png) = call(&app, "GET", &f.image_url, None, vec![]).await;
    assert_eq!(s, StatusCode::OK);
    let img = image::load_from_memory(&png).unwrap();
    assert_eq!((img.width(), img.height()), (f.width, f.height));
}

#[tokio::test]
async fn upload_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_at(dir.path());
    let sid = new_session(&app).await;
    let (s, b) = upload(&app, &sid, &[("notes.txt", b"just some text, not a pdf")]).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_of(&serde_json::from_slice(&b).unwrap()).error, "malformed_pdf");
    // A bad file in a batch leaves the session untouched.
    let good = two_figure_pdf("Figure 1", "Figure 2");
    let (s, _) = upload(&app, &sid, &[("a.pdf", &good), ("bad.pdf", b"%PDF-garbage")]).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(figures(&app, &sid).await.figures.is_empty());

    let ghost = "0".repeat(32);
    let (s, b) = upload(&app, &ghost, &[("a.pdf", &good)]).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(error_of(&serde_json::from_slice(&b).unwrap()).error, "unknown_session");

    // Raw PDF body without multipart framing is accepted too.
    let (s, b) = call(&app, "POST", &format!("/sessions/{sid}/documents"), Some("application/pdf"), good).await;
    assert_eq!(s, StatusCode::CREATED);
    let r: UploadResponse = serde_json::from_slice(&b).unwrap();
    assert_eq!(r.figures.len(), 2);

    let big = vec![b'x'; 3 * 1024 * 1024];
    let (s, b) = call(&app, "POST", &format!("/sessions/{sid}/documents"), Some("application/pdf"), big).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(error_of(&serde_json::from_slice(&b).unwrap()).error, "payload_too_large");
}

#[tokio::test]
async fn echo_extraction_stores_the_canned_table() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_at(dir.path());
    let sid = new_session(&app).await;
    let up = upload_ok(&app, &sid, "a.pdf", &two_figure_pdf("Figure 1", "Figure 2")).await;
    let fref = &up.figures[0].figure_ref;

    let (s, _) = call_json(&app, "GET", &format!("/figures/{fref}/table"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, v) = extract(&app, fref, json!({"backend": "echo", "prompt": "simple"})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let first: TableView = serde_json::from_value(v).unwrap();
    let want = parse_reply(CANNED).unwrap();
    assert_eq!(first.table.header, want.header);
    assert_eq!(first.table.rows, want.rows);
    assert_eq!(first.table.row_confidence, want.row_confidence);
    assert_eq!(first.table.to_tsv(), want.to_tsv());
    assert_eq!(first.table.source_figure.as_deref(), Some(fref.as_str()));
    assert_eq!((first.backend.as_str(), first.label.as_str()), ("echo", "Figure 1"));

    let (_, v) = call_json(&app, "GET", &format!("/figures/{fref}/table"), None).await;
    assert_eq!(serde_json::from_value::<TableView>(v).unwrap(), first);

    // Re-extraction overwrites the slot and moves the timestamp forward; empty body uses the default backend.
    let (s, v) = call(&app, "POST", &format!("/figures/{fref}/extract"), None, vec![]).await;
    assert_eq!(s, StatusCode::OK);
    let again: TableView = serde_json::from_slice(&v).unwrap();
    assert!(again.updated_at > first.updated_at);
    assert_eq!(again.table.rows, first.table.rows);

    let listed = figures(&app, &sid).await.figures;
    assert_eq!(listed.iter().map(|f| f.has_table).collect::<Vec<_>>(), [true, false]);

    let (s, v) = extract(&app, &format!("{sid}-99"), json!({})).await;
    assert_eq!((s, error_of(&v).error.as_str()), (StatusCode::NOT_FOUND, "unknown_figure"));
    let (s, v) = extract(&app, "not-a-ref", json!({})).await;
    assert_eq!((s, error_of(&v).error.as_str()), (StatusCode::NOT_FOUND, "unknown_figure"));
}

#[tokio::test]
async fn keys_and_backends_are_server_side() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_at(dir.path());
    let (s, v) = call_json(&app, "GET", "/backends", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["default"], "echo");
    let text = v.to_string();
    assert!(!text.contains("api_key") && !text.contains("FIGTAB_TEST_KEY"), "{text}");

    let sid = new_session(&app).await;
    let up = upload_ok(&app, &sid, "a.pdf", &two_figure_pdf("Figure 1", "Figure 2")).await;
    let fref = &up.figures[0].figure_ref;
    let (s, v) = extract(&app, fref, json!({"backend": "keyed", "api_key": "sk-from-the-browser"})).await;
    assert_eq!((s, error_of(&v).error.as_str()), (StatusCode::BAD_REQUEST, "bad_request"));
    let (s, v) = extract(&app, fref, json!({"backend": "nope"})).await;
    assert_eq!((s, error_of(&v).error.as_str()), (StatusCode::BAD_REQUEST, "unknown_backend"));
    // Missing env var fails before any network call.
    let (s, v) = extract(&app, fref, json!({"backend": "keyed"})).await;
    assert_eq!((s, error_of(&v).error.as_str()), (StatusCode::BAD_GATEWAY, "auth_error"));
}

#[tokio::test]
async fn provider_failures_map_to_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_at(dir.path());
    let sid = new_session(&app).await;
    let up = upload_ok(&app, &sid, "a.pdf", &two_figure_pdf("Figure 1", "Figure 2")).await;
    let fref = &up.figures[0].figure_ref;
    for (backend, status, code) in [
        ("limited", StatusCode::TOO_MANY_REQUESTS, "rate_limited"),
        ("broken", StatusCode::BAD_GATEWAY, "rate_limited"),
        ("hung", StatusCode::GATEWAY_TIMEOUT, "timeout"),
    ] {
        let (s, v) = extract(&app, fref, json!({ "backend": backend })).await;
        assert_eq!(s, status, "{backend}: {v}");
        assert_eq!(error_of(&v).error, code);
    }
    // Failed extractions store nothing.
    let (s, _) = call_json(&app, "GET", &format!("/figures/{fref}/table"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

async fn session_with_table(app: &Router) -> (String, String) {
    let sid = new_session(app).await;
    let up = upload_ok(app, &sid, "a.pdf", &two_figure_pdf("Figure 1", "Figure 2")).await;
    let fref = up.figures[0].figure_ref.clone();
    let (s, _) = extract(app, &fref, json!({"backend": "echo"})).await;
    assert_eq!(s, StatusCode::OK);
    (sid, fref)
}

#[tokio::test]
async fn edit_then_export_reflects_edit() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_at(dir.path());
    let (sid, fref) = session_with_table(&app).await;
    let (_, before) = call_json(&app, "GET", &format!("/figures/{fref}/table"), None).await;
    let before: TableView = serde_json::from_value(before).unwrap();

    let (s, v) = call_json(
        &app,
        "PATCH",
        &format!("/figures/{fref}/table"),
        Some(json!({"row_index": 2, "col_index": 1, "new_raw": "2.3 million"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let after: TableView = serde_json::from_value(v).unwrap();
    assert_eq!(after.table.rows[2][1].raw, "2.3 million");
    assert_eq!(after.table.rows[2][1].numeric, Some(2_300_000.0));
    assert_eq!(after.edit_count, 1);
    assert!(after.updated_at > before.updated_at);
    let changed = (0..3)
        .filter(|&r| before.table.row_confidence[r] != after.table.row_confidence[r])
        .collect::<Vec<_>>();
    assert_eq!(changed, [2]);

    let (s, v) = call_json(
        &app,
        "PATCH",
        &format!("/figures/{fref}/table"),
        Some(json!({"row_index": 9, "col_index": 0, "new_raw": "x"})),
    )
    .await;
    assert_eq!((s, error_of(&v).error.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "index_out_of_bounds"));

    let (s, zip) = call(&app, "GET", &format!("/sessions/{sid}/export?format=csv"), None, vec![]).await;
    assert_eq!(s, StatusCode::OK);
    let entries = read_entries(&zip).unwrap();
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0].0, "figure-1.csv");
    let csv = String::from_utf8(entries[0].1.clone()).unwrap();
    assert!(csv.contains("2.3 million"), "{csv}");
}

#[tokio::test]
async fn export_rules() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_at(dir.path());
    let sid = new_session(&app).await;
    let (s, v) = call_json(&app, "GET", &format!("/sessions/{sid}/export?format=csv"), None).await;
    assert_eq!((s, error_of(&v).error.as_str()), (StatusCode::CONFLICT, "nothing_to_export"));

    let a = upload_ok(&app, &sid, "a.pdf", &two_figure_pdf("Figure 1", "Figure 2")).await;
    let b = upload_ok(&app, &sid, "b.pdf", &two_figure_pdf("Figure 1", "Figure 5")).await;
    for f in a.figures.iter().chain(&b.figures) {
        assert_eq!(extract(&app, &f.figure_ref, json!({})).await.0, StatusCode::OK);
    }
    let (s, zip) = call(&app, "GET", &format!("/sessions/{sid}/export?format=csv"), None, vec![]).await;
    assert_eq!(s, StatusCode::OK);
    let names: Vec<String> = read_entries(&zip).unwrap().into_iter().map(|e| e.0).collect();
    assert_eq!(names, ["figure-1-doc1.csv", "figure-2.csv", "figure-1-doc2.csv", "figure-5.csv"]);

    for (fmt, ext) in [("tsv", "tsv"), ("json", "json"), ("latex", "tex"), ("r", "R"), ("xlsx", "xlsx")] {
        let (s, zip) = call(&app, "GET", &format!("/sessions/{sid}/export?format={fmt}"), None, vec![]).await;
        assert_eq!(s, StatusCode::OK, "{fmt}");
        let entries = read_entries(&zip).unwrap();
        assert_eq!(entries.len(), 4);
        assert!(entries.iter().all(|(n, _)| n.ends_with(&format!(".{ext}"))));
    }
    let (s, v) = call_json(&app, "GET", &format!("/sessions/{sid}/export?format=docx"), None).await;
    assert_eq!((s, error_of(&v).error.as_str()), (StatusCode::BAD_REQUEST, "bad_request"));
}

#[tokio::test]
async fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (sid, fref, table, listing) = {
        let (_, app) = app_at(dir.path());
        let (sid, fref) = session_with_table(&app).await;
        upload_ok(&app, &sid, "b.pdf", &two_figure_pdf("Figure 7", "Figure 8")).await;
        let (_, v) = call_json(
            &app,
            "PATCH",
            &format!("/figures/{fref}/table"),
            Some(json!({"row_index": 0, "col_index": 1, "new_raw": "1,250"})),
        )
        .await;
        let listing = figures(&app, &sid).await;
        (sid, fref, v, listing)
    };
    // A fresh process over the same storage root.
    let (state, app) = app_at(dir.path());
    assert_eq!(state.store().ids(), vec![sid.clone()]);
    assert_eq!(figures(&app, &sid).await, listing);
    let (s, v) = call_json(&app, "GET", &format!("/figures/{fref}/table"), None).await;
    assert_eq!((s, v), (StatusCode::OK, table));
    let (s, png) = call(&app, "GET", &listing.figures[3].image_url, None, vec![]).await;
    assert_eq!(s, StatusCode::OK);
    assert!(image::load_from_memory(&png).is_ok());
    // The snapshot on disk equals memory.
    let handle = state.store().get(&sid).unwrap();
    assert_eq!(*handle.lock().await, state.store().load_snapshot(&sid).unwrap());
}

#[tokio::test]
async fn sessions_are_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_at(dir.path());
    let (a, fref_a) = session_with_table(&app).await;
    let b = new_session(&app).await;
    assert!(figures(&app, &b).await.figures.is_empty());
    let (s, _) = call_json(&app, "GET", &format!("/sessions/{b}/export?format=csv"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    // B's id with A's figure number names nothing.
    let k = fref_a.rsplit('-').next().unwrap();
    let forged = format!("{b}-{k}");
    for (m, uri) in [("GET", format!("/figures/{forged}/table")), ("GET", format!("/figures/{forged}/image"))] {
        let (s, v) = call_json(&app, m, &uri, None).await;
        assert_eq!((s, error_of(&v).error.as_str()), (StatusCode::NOT_FOUND, "unknown_figure"));
    }
    let (s, _) = call_json(&app, "GET", &format!("/figures/{fref_a}/table"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_ne!(a, b);
}

#[tokio::test]
async fn concurrent_extractions_in_one_session_all_commit() {
    let dir = tempfile::tempdir().unwrap();
    let (state, app) = app_at(dir.path());
    let sid = new_session(&app).await;
    upload_ok(&app, &sid, "a.pdf", &two_figure_pdf("Figure 1", "Figure 2")).await;
    upload_ok(&app, &sid, "b.pdf", &two_figure_pdf("Figure 3", "Figure 4")).await;
    let refs: Vec<String> = figures(&app, &sid).await.figures.into_iter().map(|f| f.figure_ref).collect();
    let results = futures_join(refs.iter().map(|r| {
        let app = app.clone();
        let r = r.clone();
        async move { extract(&app, &r, json!({"backend": "slow"})).await.0 }
    }))
    .await;
    assert!(results.iter().all(|s| *s == StatusCode::OK));
    let snap = state.store().load_snapshot(&sid).unwrap();
    assert_eq!(snap.tables.len(), 4);
}

async fn futures_join<F: std::future::Future<Output = StatusCode> + Send + 'static>(
    futs: impl Iterator<Item = F>,
) -> Vec<StatusCode> {
    let handles: Vec<_> = futs.map(tokio::spawn).collect();
    let mut out = Vec::new();
    for h in handles {
        out.push(h.await.unwrap());
    }
    out
}

#[tokio::test]
async fn unwritable_storage_is_507() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    let (_, app) = app_at(&root);
    std::fs::remove_dir_all(&root).unwrap();
    std::fs::write(&root, b"not a directory").unwrap();
    let (s, v) = call_json(&app, "POST", "/sessions", None).await;
    assert_eq!((s, error_of(&v).error.as_str()), (StatusCode::INSUFFICIENT_STORAGE, "storage_full"));
}

#[tokio::test]
async fn health() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_at(dir.path());
    let (s, v) = call_json(&app, "GET", "/health", None).await;
    assert_eq!((s, v), (StatusCode::OK, json!({"status": "ok"})));
}
