//! JSON-over-HTTP API, the per-session WebSocket channel and the static UI
//! route. Tokens travel as `Authorization: Bearer <token>`; the WebSocket
//! also accepts `?token=` because browsers cannot set headers on upgrades.

use std::net::SocketAddr;
use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use super::{Engine, InputEvent, SessionConfig};
use crate::error::{Error, Result};
use crate::frame::BBox;
use crate::store::Share;

#[derive(Clone)]
struct AppState {
    engine: Arc<Engine>,
    ui_dir: PathBuf,
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::AuthFailure | Error::AuthExpired => StatusCode::UNAUTHORIZED,
        Error::AccessDenied => StatusCode::FORBIDDEN,
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::AlreadyExists(_) => StatusCode::CONFLICT,
        Error::NotImplemented => StatusCode::NOT_IMPLEMENTED,
        Error::StreamStall(_) => StatusCode::SERVICE_UNAVAILABLE,
        Error::Bounds { .. }
        | Error::LabelParse(_)
        | Error::InvalidArgument(_)
        | Error::InvalidTemplate(_)
        | Error::FlatTemplate
        | Error::EmptyText
        | Error::UnsupportedCharacter(_) => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn bearer(headers: &HeaderMap) -> ApiResult<String> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_string())
        .ok_or(ApiError(Error::AuthFailure))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::Storage(std::io::Error::other(e.to_string()))))?
        .map_err(ApiError)
}

#[derive(Deserialize)]
struct LoginBody {
    username: String,
    password: String,
}

async fn login(State(st): State<AppState>, Json(body): Json<LoginBody>) -> ApiResult<impl IntoResponse> {
    let token = blocking(move || st.engine.store().authenticate(&body.username, &body.password)).await?;
    Ok(Json(json!({ "token": token })))
}

async fn devices(State(st): State<AppState>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    Ok(Json(st.engine.store().devices(&bearer(&headers)?)?))
}

async fn interventions(State(st): State<AppState>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    Ok(Json(st.engine.store().list_interventions(&bearer(&headers)?)?))
}

#[derive(Deserialize)]
struct SessionBody {
    device: String,
    #[serde(default)]
    interventions: Vec<String>,
    fps: Option<u32>,
    capture_every: Option<u32>,
}

async fn create_session(
    State(st): State<AppState>,
    headers: HeaderMap,
    Json(body): Json<SessionBody>,
) -> ApiResult<impl IntoResponse> {
    let token = bearer(&headers)?;
    let fps = body.fps.unwrap_or(st.engine.config().default_fps);
    let cfg = SessionConfig {
        fps,
        capture_every: body.capture_every.unwrap_or(fps),
    };
    let info = blocking(move || st.engine.create_session(&token, &body.device, &body.interventions, cfg)).await?;
    Ok((StatusCode::CREATED, Json(info)))
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn frame(State(st): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Response> {
    let token = bearer(&headers)?;
    Ok(png(blocking(move || st.engine.next_frame(&token, &id)).await?))
}

async fn input(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(event): Json<InputEvent>,
) -> ApiResult<impl IntoResponse> {
    let token = bearer(&headers)?;
    Ok(Json(blocking(move || st.engine.send_input(&token, &id, &event)).await?))
}

#[derive(Deserialize)]
struct ScreenomeQuery {
    device: Option<String>,
    from: Option<u64>,
    to: Option<u64>,
}

async fn screenome(
    State(st): State<AppState>,
    headers: HeaderMap,
    Query(q): Query<ScreenomeQuery>,
) -> ApiResult<impl IntoResponse> {
    let token = bearer(&headers)?;
    let store = st.engine.store();
    let user = store.user_for(&token)?;
    Ok(Json(store.list_screenome(&token, &user, q.device.as_deref(), q.from, q.to)?))
}

async fn screenome_png(State(st): State<AppState>, headers: HeaderMap, Path(file): Path<String>) -> ApiResult<Response> {
    let token = bearer(&headers)?;
    let seq: u64 = file
        .strip_suffix(".png")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::NotFound(format!("screenome frame {file:?}")))?;
    let bytes = blocking(move || {
        let store = st.engine.store();
        let user = store.user_for(&token)?;
        store.frame_png(&token, &user, seq)
    })
    .await?;
    Ok(png(bytes))
}

#[derive(Deserialize)]
struct AnnotationBody {
    entry_seq: u64,
    bbox: BBox,
    label: String,
}

async fn annotate(
    State(st): State<AppState>,
    headers: HeaderMap,
    Json(body): Json<AnnotationBody>,
) -> ApiResult<impl IntoResponse> {
    let token = bearer(&headers)?;
    let ann = st.engine.store().save_annotation(&token, body.entry_seq, body.bbox, &body.label)?;
    Ok((StatusCode::CREATED, Json(ann)))
}

#[derive(Deserialize, Default)]
struct CompileBody {
    #[serde(default)]
    share: Share,
}

async fn compile(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<u64>,
    body: Option<Json<CompileBody>>,
) -> ApiResult<impl IntoResponse> {
    let token = bearer(&headers)?;
    let share = body.map(|Json(b)| b.share).unwrap_or_default();
    Ok(Json(blocking(move || st.engine.store().compile(&token, id, share)).await?))
}

#[derive(Deserialize)]
struct WsQuery {
    token: Option<String>,
}

async fn channel(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(q): Query<WsQuery>,
    ws: WebSocketUpgrade,
) -> ApiResult<Response> {
    let token = match q.token {
        Some(t) => t,
        None => bearer(&headers)?,
    };
    let session = st.engine.session(&token, &id)?;
    let fps = session.lock().unwrap_or_else(|e| e.into_inner()).info().fps;
    Ok(ws.on_upgrade(move |socket| stream(socket, st.engine, token, id, fps)))
}

/// Pushes a binary PNG per tick and answers each text-frame input event
/// with a JSON acknowledgment.
async fn stream(mut socket: WebSocket, engine: Arc<Engine>, token: String, id: String, fps: u32) {
    let mut tick = tokio::time::interval(Duration::from_secs_f64(1.0 / fps.max(1) as f64));
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    loop {
        tokio::select! {
            _ = tick.tick() => {
                let (e, t, i) = (engine.clone(), token.clone(), id.clone());
                let msg = match tokio::task::spawn_blocking(move || e.next_frame(&t, &i)).await {
                    Ok(Ok(bytes)) => Message::Binary(bytes),
                    Ok(Err(err @ Error::StreamStall(_))) => Message::Text(json!({ "error": err.to_string() }).to_string()),
                    Ok(Err(err)) => {
                        let _ = socket.send(Message::Text(json!({ "error": err.to_string() }).to_string())).await;
                        break;
                    }
                    Err(_) => break,
                };
                if socket.send(msg).await.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => {
                let reply = match incoming {
                    Some(Ok(Message::Text(text))) => match serde_json::from_str::<InputEvent>(&text) {
                        Ok(event) => match engine.send_input(&token, &id, &event) {
                            Ok(ack) => json!({ "ack": ack }),
                            Err(e) => json!({ "error": e.to_string() }),
                        },
                        Err(e) => json!({ "error": format!("bad input event: {e}") }),
                    },
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                if socket.send(Message::Text(reply.to_string())).await.is_err() {
                    break;
                }
            }
        }
    }
}

fn content_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("png") => "image/png",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

async fn ui_file(st: &AppState, rel: &str) -> Response {
    let rel = FsPath::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return StatusCode::NOT_FOUND.into_response();
    }
    let mut path = st.ui_dir.join(rel);
    if rel.as_os_str().is_empty() || path.is_dir() {
        path = path.join("index.html");
    }
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn ui_index(State(st): State<AppState>) -> Response {
    ui_file(&st, "").await
}

async fn ui_path(State(st): State<AppState>, Path(rel): Path<String>) -> Response {
    ui_file(&st, &rel).await
}

/// Routes for `engine`, serving the built UI bundle from `ui_dir`.
pub fn router(engine: Arc<Engine>, ui_dir: impl Into<PathBuf>) -> Router {
    let state = AppState {
        engine,
        ui_dir: ui_dir.into(),
    };
    Router::new()
        .route("/auth/login", post(login))
        .route("/devices", get(devices))
        .route("/interventions", get(interventions))
        .route("/sessions", post(create_session))
        .route("/sessions/:id/frame", get(frame))
        .route("/sessions/:id/input", post(input))
        .route("/sessions/:id/ws", get(channel))
        .route("/screenome", get(screenome))
        .route("/screenome/:file", get(screenome_png))
        .route("/annotations", post(annotate))
        .route("/annotations/:id/compile", post(compile))
        .route("/ui", get(ui_index))
        .route("/ui/", get(ui_index))
        .route("/ui/*path", get(ui_path))
        .with_state(state)
}

pub async fn serve(listener: TcpListener, engine: Arc<Engine>, ui_dir: PathBuf) -> Result<()> {
    axum::serve(listener, router(engine, ui_dir)).await?;
    Ok(())
}

/// A server on its own thread and runtime; stops when dropped.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `addr` (port 0 picks a free one) and serves in the background.
pub fn spawn(engine: Arc<Engine>, ui_dir: impl Into<PathBuf>, addr: SocketAddr) -> Result<ServerHandle> {
    let ui_dir = ui_dir.into();
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let addr = std_listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let listener = match TcpListener::from_std(std_listener) {
                Ok(l) => l,
                Err(e) => {
                    log::error!("listener: {e}");
                    return;
                }
            };
            let app = router(engine, ui_dir);
            let shutdown = async {
                let _ = rx.await;
            };
            if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
                log::error!("server: {e}");
            }
        });
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
