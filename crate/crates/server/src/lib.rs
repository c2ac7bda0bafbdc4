//! HTTP facade over the chromaseq engine.
//!
//! The engine is stateless; uploaded documents live in a session store and
//! every mutating request replaces the stored document. Requests on the same
//! document are serialized by a per-document lock.

pub mod contract;
mod store;

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::Engine;
use chromaseq::document::render_preview;
use chromaseq::recolor::{recolor_to_code, RecolorConfig};
use chromaseq::recommend::{recommend, RecommendMode, RecommendOptions, SlotRef};
use chromaseq::{extract_multi_palette, Checkpoint, ColorCode, GraphicDocument, RasterImage};
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use store::{Favorite, Session, SessionStore};

/// The published schema for every endpoint.
pub const OPENAPI: &str = include_str!("../openapi.json");

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Idle sessions older than this are dropped. `None` keeps them forever.
    pub session_ttl: Option<Duration>,
    /// Directory for session files; in-memory only when `None`.
    pub persist_dir: Option<PathBuf>,
    pub palette_seed: u64,
    pub recolor: RecolorConfig,
    pub max_body_bytes: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            session_ttl: Some(Duration::from_secs(3600)),
            persist_dir: None,
            palette_seed: 0,
            recolor: RecolorConfig::default(),
            max_body_bytes: 32 << 20,
        }
    }
}

pub struct AppState {
    pub checkpoint: Arc<Checkpoint>,
    pub store: SessionStore,
    pub config: ServerConfig,
}

pub fn app(checkpoint: Arc<Checkpoint>, config: ServerConfig) -> std::io::Result<Router> {
    let store = SessionStore::new(config.session_ttl, config.persist_dir.clone())?;
    let limit = config.max_body_bytes;
    let state = Arc::new(AppState { checkpoint, store, config });
    Ok(Router::new()
        .route("/health", get(health))
        .route("/openapi.json", get(openapi))
        .route("/documents", post(upload))
        .route("/documents/{id}", get(show))
        .route("/documents/{id}/elements/{eid}/image", put(replace_image))
        .route("/documents/{id}/recommend", post(recommend_slots))
        .route("/documents/{id}/recolor", post(recolor))
        .route("/documents/{id}/favorites", post(mark_favorite).get(list_favorites))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state))
}

pub async fn serve(addr: SocketAddr, checkpoint: Arc<Checkpoint>, config: ServerConfig) -> std::io::Result<()> {
    let router = app(checkpoint, config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router).await
}

// Errors.

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    path: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
            path: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_argument", message)
    }

    fn no_document(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "document_not_found", format!("document {id:?} not found"))
    }
}

impl From<chromaseq::Error> for ApiError {
    fn from(e: chromaseq::Error) -> Self {
        use chromaseq::Error as E;
        let message = e.to_string();
        let (status, kind) = match &e {
            E::Parse { path, .. } => {
                return Self {
                    path: Some(path.clone()),
                    ..Self::new(StatusCode::BAD_REQUEST, "parse_error", message)
                }
            }
            E::Image(_) => (StatusCode::BAD_REQUEST, "invalid_image"),
            E::ElementNotFound(_) => (StatusCode::NOT_FOUND, "element_not_found"),
            E::WrongElementKind { .. } => (StatusCode::CONFLICT, "wrong_element_kind"),
            E::InvalidSlot { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_slot"),
            E::InvalidCode(_) | E::InvalidColor(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_code"),
            E::InvalidArgument(_) | E::Masking(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_argument"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, kind, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut err = json!({"status": self.status.as_u16(), "kind": self.kind, "message": self.message});
        if let Some(p) = self.path {
            err["path"] = json!(p);
        }
        (self.status, Json(json!({ "error": err }))).into_response()
    }
}

type ApiResult<T = Json<Value>> = Result<T, ApiError>;

/// Parses a JSON body: malformed JSON or wrong shapes are 400.
fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError {
            path: Some(if path == "." || path == "?" { "$".into() } else { path }),
            ..ApiError::bad_request(e.inner().to_string())
        }
    })
}

// Handlers.

impl AppState {
    fn palettes(&self, doc: &GraphicDocument) -> ApiResult<Value> {
        Ok(extract_multi_palette(doc, self.config.palette_seed)?.to_json(self.checkpoint.vocab().config()))
    }

    fn persist(&self, id: uuid::Uuid, s: &Session) -> ApiResult<()> {
        self.store
            .persist(id, s)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", format!("persisting session: {e}")))
    }
}

async fn health(State(st): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "vocab_size": st.checkpoint.vocab().len(),
        "sessions": st.store.len(),
    }))
}

async fn openapi() -> Response {
    ([(header::CONTENT_TYPE, "application/json")], OPENAPI).into_response()
}

async fn upload(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let doc = GraphicDocument::parse(&body)?;
    let palettes = st.palettes(&doc)?;
    let (id, session) = st.store.insert(doc);
    st.persist(id, &*session.lock().await)?;
    Ok(Json(json!({ "id": id.to_string(), "palettes": palettes })))
}

async fn show(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    let (_, session) = st.store.get(&id).ok_or_else(|| ApiError::no_document(&id))?;
    let s = session.lock().await;
    Ok(Json(json!({
        "id": id,
        "document": s.document.to_json_value(),
        "palettes": st.palettes(&s.document)?,
    })))
}

async fn replace_image(State(st): State<Arc<AppState>>, Path((id, eid)): Path<(String, String)>, body: Bytes) -> ApiResult {
    let (uid, session) = st.store.get(&id).ok_or_else(|| ApiError::no_document(&id))?;
    let mut s = session.lock().await;
    // check the element before decoding so kind errors win over bad payloads
    let e = s.document.element(&eid).ok_or_else(|| chromaseq::Error::ElementNotFound(eid.clone()))?;
    if !e.kind.is_image_like() {
        return Err(chromaseq::Error::WrongElementKind {
            id: eid,
            kind: e.kind.to_string(),
            expected: "imageElement or maskElement",
        }
        .into());
    }
    let img = RasterImage::decode_png(&body)?;
    let doc = s.document.replace_image_element(&eid, img)?;
    let palettes = st.palettes(&doc)?;
    s.document = doc;
    st.persist(uid, &s)?;
    Ok(Json(json!({ "id": id, "palettes": palettes })))
}

fn default_n() -> usize {
    3
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecommendRequest {
    slots: Vec<String>,
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default)]
    exclude: Vec<String>,
    #[serde(default)]
    mode: RecommendMode,
    #[serde(default)]
    frequency_penalty: f64,
}

fn parse_code(s: &str) -> ApiResult<ColorCode> {
    s.parse::<ColorCode>().map_err(|_| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_code", format!("invalid color code {s:?}")))
}

async fn recommend_slots(State(st): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let (_, session) = st.store.get(&id).ok_or_else(|| ApiError::no_document(&id))?;
    let req: RecommendRequest = parse_body(&body)?;
    let slots: Vec<SlotRef> = req.slots.iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
    let max_n = st.checkpoint.vocab().num_colors();
    if req.n == 0 || req.n > max_n {
        return Err(ApiError::unprocessable(format!("n must be in 1..={max_n}")));
    }
    let exclude: BTreeSet<ColorCode> = req.exclude.iter().map(|c| parse_code(c)).collect::<ApiResult<_>>()?;
    let opts = RecommendOptions {
        n: req.n,
        mode: req.mode,
        frequency_penalty: req.frequency_penalty,
        exclude,
        palette_seed: st.config.palette_seed,
    };
    let s = session.lock().await;
    let recs = recommend(&s.document, &slots, &opts, &st.checkpoint)?;
    Ok(Json(json!({ "recommendations": recs })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecolorRequest {
    slot: String,
    code: String,
}

fn preview_uri(doc: &GraphicDocument) -> String {
    let mut s = String::from("data:image/png;base64,");
    base64::engine::general_purpose::STANDARD.encode_string(render_preview(doc).encode_png(), &mut s);
    s
}

async fn recolor(State(st): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let (uid, session) = st.store.get(&id).ok_or_else(|| ApiError::no_document(&id))?;
    let req: RecolorRequest = parse_body(&body)?;
    let slot: SlotRef = req.slot.parse()?;
    let code = parse_code(&req.code)?;
    let mut s = session.lock().await;
    let mp = extract_multi_palette(&s.document, st.config.palette_seed)?;
    slot.validate(&mp)?;
    let vocab = st.checkpoint.vocab();
    let current = chromaseq::quantize(mp.get(slot.group).colors[slot.slot], vocab.config());
    // the slot's own code is always accepted (it is the identity edit)
    if code != current && !vocab.contains(code) {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_code",
            format!("color code {code} is not in the model vocabulary"),
        ));
    }
    let doc = recolor_to_code(&s.document, slot, code, &st.checkpoint, st.config.palette_seed, &st.config.recolor)?;
    let palettes = st.palettes(&doc)?;
    let preview = preview_uri(&doc);
    s.document = doc;
    st.persist(uid, &s)?;
    Ok(Json(json!({
        "id": id,
        "document": s.document.to_json_value(),
        "palettes": palettes,
        "preview": preview,
    })))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FavoriteRequest {
    #[serde(default)]
    snapshot: Option<Value>,
}

async fn mark_favorite(State(st): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let (uid, session) = st.store.get(&id).ok_or_else(|| ApiError::no_document(&id))?;
    let req: FavoriteRequest = if body.is_empty() { FavoriteRequest::default() } else { parse_body(&body)? };
    let mut s = session.lock().await;
    let doc = match req.snapshot {
        Some(v) => GraphicDocument::parse(v.to_string().as_bytes())?,
        None => s.document.clone(),
    };
    let document = doc.to_json_value();
    let fav_id: String = Sha256::digest(document.to_string().as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect();
    let created = !s.favorites.iter().any(|f| f.id == fav_id);
    if created {
        let palettes = st.palettes(&doc)?;
        s.favorites.push(Favorite {
            id: fav_id.clone(),
            document,
            palettes,
        });
        st.persist(uid, &s)?;
    }
    let fav = s.favorites.iter().find(|f| f.id == fav_id).expect("just stored");
    Ok(Json(json!({ "favorite": fav, "created": created, "count": s.favorites.len() })))
}

async fn list_favorites(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    let (_, session) = st.store.get(&id).ok_or_else(|| ApiError::no_document(&id))?;
    let s = session.lock().await;
    Ok(Json(json!({ "favorites": s.favorites })))
}
