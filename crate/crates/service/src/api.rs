use std::collections::HashMap;
use std::sync::{Arc, Mutex as StdMutex};

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use figtab::archive::ZipWriter;
use figtab::export::{export_table, ExportFormat, ExportOptions};
use figtab::geometry::Rect;
use figtab::pdf::{detect_figures, DetectOptions, PdfDocument};
use figtab::table::{parse_reply, CellEdit, DataTable, Provenance};
use figtab::vlm::{encode_png, PromptKind, PromptProfile, Provider, VlmClient};
use serde::{Deserialize, Serialize};
use tracing::info;

use crate::store::{later_than, DocumentEntry, FigureEntry, Session, SessionStore, TableEntry};
use crate::{multipart, ServiceConfig, ServiceError};

type ApiResult<T> = Result<T, ServiceError>;

struct Inner {
    config: ServiceConfig,
    store: SessionStore,
    clients: StdMutex<HashMap<String, Arc<VlmClient>>>,
}

/// Shared handler state: config, session store and one client per backend.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Self, ServiceError> {
        let store = SessionStore::open(&config.storage_root, config.session_ttl)?;
        Ok(AppState(Arc::new(Inner {
            config,
            store,
            clients: StdMutex::new(HashMap::new()),
        })))
    }

    pub fn store(&self) -> &SessionStore {
        &self.0.store
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.0.config
    }

    /// Clients are built on first use and shared, so a backend's rate limit spans requests.
    fn client(&self, backend: Option<&str>) -> ApiResult<Arc<VlmClient>> {
        let cfg = self
            .0
            .config
            .registry
            .resolve(backend)
            .map_err(|_| ServiceError::UnknownBackend(backend.unwrap_or("<default>").to_string()))?;
        let mut clients = self.0.clients.lock().expect("client cache lock");
        if let Some(c) = clients.get(&cfg.name) {
            return Ok(c.clone());
        }
        let client = Arc::new(VlmClient::new(cfg.clone())?);
        clients.insert(cfg.name.clone(), client.clone());
        Ok(client)
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.config().max_upload_bytes;
    Router::new()
        .route("/health", get(health))
        .route("/backends", get(backends))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_summary))
        .route("/sessions/{id}/documents", post(upload))
        .route("/sessions/{id}/figures", get(list_figures))
        .route("/sessions/{id}/export", get(export_session))
        .route("/figures/{fref}/image", get(figure_image))
        .route("/figures/{fref}/extract", post(extract_figure))
        .route("/figures/{fref}/table", get(get_table).patch(edit_cell))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureDescriptor {
    pub figure_ref: String,
    pub doc_id: String,
    pub filename: String,
    pub label: String,
    /// 1-based.
    pub page: usize,
    pub crop: Rect,
    pub caption: String,
    pub width: u32,
    pub height: u32,
    pub dpi: u32,
    pub image_url: String,
    pub has_table: bool,
}

fn descriptor(session: &Session, doc: &DocumentEntry, f: &FigureEntry) -> FigureDescriptor {
    FigureDescriptor {
        figure_ref: f.figure_ref.clone(),
        doc_id: doc.doc_id.clone(),
        filename: doc.filename.clone(),
        label: f.label.clone(),
        page: f.page_index + 1,
        crop: f.crop,
        caption: f.caption.clone(),
        width: f.width,
        height: f.height,
        dpi: f.dpi,
        image_url: format!("/figures/{}/image", f.figure_ref),
        has_table: session.tables.contains_key(&f.figure_ref),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub doc_id: String,
    pub filename: String,
    pub figure_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub documents: Vec<DocumentSummary>,
    pub table_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadResponse {
    pub session_id: String,
    pub documents: Vec<DocumentSummary>,
    /// Figures added by this upload.
    pub figures: Vec<FigureDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureList {
    pub session_id: String,
    pub figures: Vec<FigureDescriptor>,
}

/// Body of `POST /figures/{ref}/extract`. Backends are chosen by name only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractRequest {
    #[serde(default)]
    pub backend: Option<String>,
    #[serde(default)]
    pub prompt: Option<PromptKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableView {
    pub figure_ref: String,
    pub label: String,
    pub table: DataTable,
    pub backend: String,
    pub model_id: String,
    pub prompt_kind: PromptKind,
    pub extracted_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub edit_count: u32,
}

fn table_view(figure_ref: &str, label: &str, e: &TableEntry) -> TableView {
    TableView {
        figure_ref: figure_ref.to_string(),
        label: label.to_string(),
        table: e.table.clone(),
        backend: e.backend.clone(),
        model_id: e.model_id.clone(),
        prompt_kind: e.prompt_kind,
        extracted_at: e.extracted_at,
        updated_at: e.updated_at,
        edit_count: e.edit_count,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub name: String,
    pub provider: Provider,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendList {
    pub default: Option<String>,
    pub backends: Vec<BackendInfo>,
}

fn body_bytes(body: Result<Bytes, BytesRejection>) -> ApiResult<Bytes> {
    body.map_err(|r| {
        if r.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ServiceError::PayloadTooLarge
        } else {
            ServiceError::BadRequest(r.body_text())
        }
    })
}

fn json_body<T: serde::de::DeserializeOwned + Default>(bytes: &[u8]) -> ApiResult<T> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn backends(State(state): State<AppState>) -> Json<BackendList> {
    let reg = &state.config().registry;
    Json(BackendList {
        default: reg.default.clone(),
        backends: reg
            .backends
            .iter()
            .map(|(name, b)| BackendInfo {
                name: name.clone(),
                provider: b.provider,
                model_id: b.model_id.clone(),
            })
            .collect(),
    })
}

async fn create_session(State(state): State<AppState>) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let s = state.store().create()?;
    info!(session = %s.session_id, "session created");
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: s.session_id,
            created_at: s.created_at,
        }),
    ))
}

fn doc_summaries(s: &Session) -> Vec<DocumentSummary> {
    s.documents
        .iter()
        .map(|d| DocumentSummary {
            doc_id: d.doc_id.clone(),
            filename: d.filename.clone(),
            figure_count: d.figures.len(),
        })
        .collect()
}

async fn session_summary(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionSummary>> {
    let handle = state.store().get(&id)?;
    let s = handle.lock().await;
    Ok(Json(SessionSummary {
        session_id: s.session_id.clone(),
        created_at: s.created_at,
        updated_at: s.updated_at,
        documents: doc_summaries(&s),
        table_count: s.tables.len(),
    }))
}

struct DetectedFigure {
    label: String,
    page_index: usize,
    crop: Rect,
    caption: String,
    width: u32,
    height: u32,
    dpi: u32,
    png: Vec<u8>,
}

fn detect(bytes: &[u8], dpi: u32) -> ApiResult<Vec<DetectedFigure>> {
    let doc = PdfDocument::open(bytes)?;
    let regions = detect_figures(&doc, &DetectOptions { dpi, ..Default::default() })?;
    regions
        .into_iter()
        .map(|r| {
            Ok(DetectedFigure {
                png: encode_png(&r.image).map_err(|e| ServiceError::Internal(e.to_string()))?,
                label: r.caption.label,
                page_index: r.caption.page_index,
                crop: r.crop,
                caption: r.caption.caption_text,
                width: r.image.width(),
                height: r.image.height(),
                dpi: r.dpi,
            })
        })
        .collect()
}

/// PDF files from a multipart body, or the raw body when it is not multipart.
fn uploaded_files(headers: &HeaderMap, body: &[u8]) -> ApiResult<Vec<(String, Vec<u8>)>> {
    let ctype = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).unwrap_or("");
    if ctype.to_ascii_lowercase().starts_with("multipart/") {
        let boundary = multipart::boundary(ctype)
            .ok_or_else(|| ServiceError::BadRequest("multipart body without a boundary".into()))?;
        let parts = multipart::parse(body, &boundary).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        let files: Vec<(String, Vec<u8>)> = parts
            .into_iter()
            .filter(|p| p.filename.is_some())
            .enumerate()
            .map(|(i, p)| {
                let name = p.filename.filter(|f| !f.is_empty()).unwrap_or_else(|| format!("upload-{}.pdf", i + 1));
                (name, p.data)
            })
            .collect();
        if files.is_empty() {
            return Err(ServiceError::BadRequest("multipart body has no file part".into()));
        }
        Ok(files)
    } else {
        Ok(vec![("upload.pdf".to_string(), body.to_vec())])
    }
}

async fn upload(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<(StatusCode, Json<UploadResponse>)> {
    let handle = state.store().get(&id)?;
    let body = body_bytes(body)?;
    let files = uploaded_files(&headers, &body)?;
    let dpi = state.config().dpi;
    // Every file is parsed before the session changes, so one bad file rejects the upload.
    let detected = tokio::task::spawn_blocking(move || {
        files
            .into_iter()
            .map(|(name, bytes)| detect(&bytes, dpi).map(|figs| (name, figs)))
            .collect::<ApiResult<Vec<_>>>()
    })
    .await
    .map_err(|e| ServiceError::Internal(e.to_string()))??;

    let mut s = handle.lock().await;
    let mut next = s.clone();
    let mut added = Vec::new();
    for (filename, figs) in detected {
        let mut doc = DocumentEntry {
            doc_id: next.next_doc_id(),
            filename,
            uploaded_at: later_than(next.updated_at),
            figures: Vec::new(),
        };
        for f in figs {
            let figure_ref = next.next_figure_ref();
            state.store().write_figure(&figure_ref, &f.png)?;
            doc.figures.push(FigureEntry {
                figure_ref,
                label: f.label,
                page_index: f.page_index,
                crop: f.crop,
                caption: f.caption,
                width: f.width,
                height: f.height,
                dpi: f.dpi,
            });
        }
        info!(session = %next.session_id, doc = %doc.doc_id, figures = doc.figures.len(), "document added");
        added.push(doc.doc_id.clone());
        next.documents.push(doc);
    }
    next.touch();
    state.store().persist(&next)?;
    *s = next;
    let figures = s
        .documents
        .iter()
        .filter(|d| added.contains(&d.doc_id))
        .flat_map(|d| d.figures.iter().map(move |f| (d, f)))
        .map(|(d, f)| descriptor(&s, d, f))
        .collect();
    Ok((
        StatusCode::CREATED,
        Json(UploadResponse {
            session_id: s.session_id.clone(),
            documents: doc_summaries(&s),
            figures,
        }),
    ))
}

async fn list_figures(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<FigureList>> {
    let handle = state.store().get(&id)?;
    let s = handle.lock().await;
    Ok(Json(FigureList {
        session_id: s.session_id.clone(),
        figures: s.figures().map(|(d, f)| descriptor(&s, d, f)).collect(),
    }))
}

async fn figure_image(State(state): State<AppState>, Path(fref): Path<String>) -> ApiResult<Response> {
    let handle = state.store().get_for_figure(&fref)?;
    let path = {
        let s = handle.lock().await;
        s.figure(&fref).ok_or_else(|| ServiceError::UnknownFigure(fref.clone()))?;
        state.store().figure_path(&fref).ok_or_else(|| ServiceError::UnknownFigure(fref.clone()))?
    };
    let png = tokio::fs::read(&path)
        .await
        .map_err(|e| ServiceError::Internal(format!("figure image {}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn extract_figure(
    State(state): State<AppState>,
    Path(fref): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<Json<TableView>> {
    let handle = state.store().get_for_figure(&fref)?;
    let req: ExtractRequest = json_body(&body_bytes(body)?)?;
    {
        let s = handle.lock().await;
        s.figure(&fref).ok_or_else(|| ServiceError::UnknownFigure(fref.clone()))?;
    }
    let client = state.client(req.backend.as_deref())?;
    let path = state.store().figure_path(&fref).ok_or_else(|| ServiceError::UnknownFigure(fref.clone()))?;
    let png = tokio::fs::read(&path)
        .await
        .map_err(|e| ServiceError::Internal(format!("figure image {}: {e}", path.display())))?;
    let profile = PromptProfile::for_kind(req.prompt.unwrap_or_default());

    // The provider call runs without the session lock; only the commit takes it.
    let raw = client.extract_png(&png, &profile).await?;
    let mut table = parse_reply(&raw.response_text)?;
    table.source_figure = Some(fref.clone());

    let mut s = handle.lock().await;
    let label = s
        .figure(&fref)
        .map(|(_, f)| f.label.clone())
        .ok_or_else(|| ServiceError::UnknownFigure(fref.clone()))?;
    let mut next = s.clone();
    let now = match next.tables.get(&fref) {
        Some(prev) => later_than(prev.updated_at.max(next.updated_at)),
        None => later_than(next.updated_at),
    };
    table.provenance = Some(Provenance {
        backend: raw.backend.clone(),
        prompt_kind: raw.prompt_kind,
        timestamp: now,
    });
    let entry = TableEntry {
        table,
        backend: raw.backend,
        model_id: raw.model_id,
        prompt_kind: raw.prompt_kind,
        response_text: raw.response_text,
        extracted_at: now,
        updated_at: now,
        edit_count: 0,
    };
    let view = table_view(&fref, &label, &entry);
    next.tables.insert(fref.clone(), entry);
    next.updated_at = now;
    state.store().persist(&next)?;
    *s = next;
    info!(figure = %fref, backend = %view.backend, rows = view.table.height(), "table extracted");
    Ok(Json(view))
}

async fn get_table(State(state): State<AppState>, Path(fref): Path<String>) -> ApiResult<Json<TableView>> {
    let handle = state.store().get_for_figure(&fref)?;
    let s = handle.lock().await;
    let (_, f) = s.figure(&fref).ok_or_else(|| ServiceError::UnknownFigure(fref.clone()))?;
    let entry = s.tables.get(&fref).ok_or_else(|| ServiceError::NoTable(fref.clone()))?;
    Ok(Json(table_view(&fref, &f.label, entry)))
}

async fn edit_cell(
    State(state): State<AppState>,
    Path(fref): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<Json<TableView>> {
    let handle = state.store().get_for_figure(&fref)?;
    let bytes = body_bytes(body)?;
    let edit: CellEdit = serde_json::from_slice(&bytes).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let mut s = handle.lock().await;
    let label = s
        .figure(&fref)
        .map(|(_, f)| f.label.clone())
        .ok_or_else(|| ServiceError::UnknownFigure(fref.clone()))?;
    let mut next = s.clone();
    let entry = next.tables.get_mut(&fref).ok_or_else(|| ServiceError::NoTable(fref.clone()))?;
    entry.table.apply_edit_in_place(&edit)?;
    entry.updated_at = later_than(entry.updated_at);
    entry.edit_count += 1;
    let view = table_view(&fref, &label, entry);
    next.touch();
    state.store().persist(&next)?;
    *s = next;
    Ok(Json(view))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
    #[serde(default)]
    confidence: bool,
}

/// `Figure 1` -> `figure-1`.
pub fn slug(label: &str) -> String {
    let mut out = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        "figure".to_string()
    } else {
        out
    }
}

/// Archive entry stems for `(doc_id, label)` pairs: the label slug, with `-{doc_id}`
/// appended when several tables share it, and a counter if that still collides.
pub fn export_names(items: &[(&str, &str)]) -> Vec<String> {
    let bases: Vec<String> = items.iter().map(|(_, l)| slug(l)).collect();
    let mut counts = HashMap::<&str, usize>::new();
    for b in &bases {
        *counts.entry(b).or_default() += 1;
    }
    let mut used = HashMap::<String, usize>::new();
    bases
        .iter()
        .zip(items)
        .map(|(b, (doc, _))| {
            let name = if counts[b.as_str()] > 1 { format!("{b}-{doc}") } else { b.clone() };
            let n = used.entry(name.clone()).or_default();
            *n += 1;
            if *n == 1 {
                name
            } else {
                format!("{name}-{n}")
            }
        })
        .collect()
}

/// One exported file per table, in figure order, zipped.
pub fn export_archive(session: &Session, format: ExportFormat, include_confidence: bool) -> ApiResult<Vec<u8>> {
    let tables: Vec<(&DocumentEntry, &FigureEntry, &TableEntry)> = session
        .figures()
        .filter_map(|(d, f)| session.tables.get(&f.figure_ref).map(|t| (d, f, t)))
        .collect();
    if tables.is_empty() {
        return Err(ServiceError::NothingToExport);
    }
    let keys: Vec<(&str, &str)> = tables.iter().map(|(d, f, _)| (d.doc_id.as_str(), f.label.as_str())).collect();
    let mut zip = ZipWriter::new();
    for ((_, _, t), stem) in tables.iter().zip(export_names(&keys)) {
        let mut table_name = stem.replace('-', "_");
        if table_name.starts_with(|c: char| c.is_ascii_digit()) {
            table_name.insert_str(0, "t_");
        }
        let opts = ExportOptions {
            include_confidence,
            table_name,
        };
        let bytes = export_table(&t.table, format, &opts).map_err(|e| ServiceError::Internal(e.to_string()))?;
        zip.add(&format!("{stem}.{}", format.extension()), &bytes)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
    }
    Ok(zip.finish())
}

async fn export_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    let handle = state.store().get(&id)?;
    let format: ExportFormat = q
        .format
        .as_deref()
        .unwrap_or("csv")
        .parse()
        .map_err(ServiceError::BadRequest)?;
    let s = handle.lock().await;
    let zip = export_archive(&s, format, q.confidence)?;
    let disposition = format!("attachment; filename=\"tables-{format}.zip\"");
    Ok((
        [
            (header::CONTENT_TYPE, "application/zip".to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        zip,
    )
        .into_response())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("Figure 1"), "figure-1");
        assert_eq!(slug("Fig. 2a"), "fig-2a");
        assert_eq!(slug("  "), "figure");
    }

    #[test]
    fn names_gain_doc_suffix_only_on_collision() {
        let names = export_names(&[("doc1", "Figure 1"), ("doc1", "Figure 2"), ("doc2", "Figure 1")]);
        assert_eq!(names, ["figure-1-doc1", "figure-2", "figure-1-doc2"]);
        let same_doc = export_names(&[("doc1", "Figure 1"), ("doc1", "Figure 1")]);
        assert_eq!(same_doc, ["figure-1-doc1", "figure-1-doc1-2"]);
    }

    #[test]
    fn extract_request_rejects_key_fields() {
        assert!(serde_json::from_str::<ExtractRequest>(r#"{"backend":"x","api_key":"sk"}"#).is_err());
        let r: ExtractRequest = serde_json::from_str(r#"{"backend":"x","prompt":"detailed"}"#).unwrap();
        assert_eq!(r.prompt, Some(PromptKind::Detailed));
    }
}
