//! In-memory session service for interactive tuning.
//!
//! A session holds one image, the last config and the last run's output.
//! Runs of one session never overlap: a run request arriving while another is
//! executing is rejected with 409 rather than queued, so a client always
//! knows which config produced the artifacts it fetches next.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use smearcount::netpbm::{load_pgm, save_pgm};
use smearcount::{run_pipeline, Error, GrayImage, PipelineConfig, PipelineOutput};

const MAX_BODY_BYTES: usize = 256 << 20;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    stage: Option<&'static str>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            stage: None,
        }
    }

    fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(stage) = self.stage {
            body["stage"] = json!(stage);
        }
        (self.status, Json(body)).into_response()
    }
}

#[derive(Debug, Clone, Serialize)]
struct Failure {
    stage: Option<&'static str>,
    message: String,
}

#[derive(Default)]
struct RunState {
    running: bool,
    output: Option<Arc<PipelineOutput>>,
    failure: Option<Failure>,
}

struct Session {
    image: Arc<GrayImage>,
    state: Mutex<RunState>,
}

#[derive(Default)]
pub struct AppState {
    sessions: Mutex<HashMap<String, Arc<Session>>>,
}

type Shared = Arc<AppState>;

impl AppState {
    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }
}

pub fn router() -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/:id", get(session_status).delete(delete_session))
        .route("/sessions/:id/run", post(run_session))
        .route("/sessions/:id/report", get(session_report))
        .route("/sessions/:id/stages/:name", get(session_stage))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(Shared::default())
}

pub async fn serve(host: &str, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router()).await
}

async fn create_session(State(app): State<Shared>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let image = load_pgm(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_image", e.to_string()))?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let body = json!({ "session_id": id, "width": image.width(), "height": image.height() });
    let session = Session {
        image: Arc::new(image),
        state: Mutex::new(RunState::default()),
    };
    app.sessions.lock().unwrap().insert(id, Arc::new(session));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn session_status(State(app): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let session = app.session(&id)?;
    let state = session.state.lock().unwrap();
    let status = match (&state.output, &state.failure, state.running) {
        (_, _, true) => "running",
        (_, Some(_), _) => "failed",
        (Some(_), _, _) => "done",
        (None, None, false) => "no run yet",
    };
    let mut stages = vec!["original".to_string()];
    if let Some(out) = &state.output {
        stages.extend(out.artifacts.keys().cloned());
    }
    Ok(Json(json!({
        "session_id": id,
        "width": session.image.width(),
        "height": session.image.height(),
        "status": status,
        "failure": state.failure,
        "stages": stages,
    })))
}

async fn delete_session(State(app): State<Shared>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    match app.sessions.lock().unwrap().remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::unknown_session(&id)),
    }
}

/// Clears the busy flag even if the run panics.
struct BusyGuard(Arc<Session>);

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.0.state.lock().unwrap().running = false;
    }
}

fn json_response(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

async fn run_session(State(app): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let session = app.session(&id)?;
    let text = std::str::from_utf8(&body)
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "bad_config", "config body is not UTF-8"))?;
    let cfg = PipelineConfig::from_json(text)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_config", e.to_string()))?;
    {
        let mut state = session.state.lock().unwrap();
        if state.running {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "run_in_progress",
                "this session is already running",
            ));
        }
        state.running = true;
    }
    let guard = BusyGuard(session.clone());
    let image = session.image.clone();
    let result = tokio::task::spawn_blocking(move || run_pipeline(&image, &cfg))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;

    let mut state = session.state.lock().unwrap();
    let response = match result {
        Ok(out) => {
            let text = out.report.to_json();
            state.output = Some(Arc::new(out));
            state.failure = None;
            Ok(json_response(text))
        }
        Err(e) => {
            let stage = e.stage();
            state.output = None;
            state.failure = Some(Failure {
                stage,
                message: e.to_string(),
            });
            Err(stage_error(e))
        }
    };
    drop(state);
    drop(guard);
    response
}

fn stage_error(e: Error) -> ApiError {
    match e.stage() {
        Some(stage) => ApiError {
            stage: Some(stage),
            ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "stage_failed", e.to_string())
        },
        None => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    }
}

fn latest_output(session: &Session) -> Result<Arc<PipelineOutput>, ApiError> {
    session
        .state
        .lock()
        .unwrap()
        .output
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_run_yet", "the session has no successful run"))
}

async fn session_report(State(app): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = app.session(&id)?;
    Ok(json_response(latest_output(&session)?.report.to_json()))
}

async fn session_stage(
    State(app): State<Shared>,
    Path((id, name)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let session = app.session(&id)?;
    let (content_type, bytes) = if name == "original" {
        ("image/x-portable-graymap", save_pgm(&session.image))
    } else {
        let out = latest_output(&session)?;
        let art = out.artifacts.get(&name).ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_stage",
                format!("no stage image {name:?}"),
            )
        })?;
        (art.content_type(), art.encode())
    };
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}
