//! HTTP API over a shared [`Session`].
//!
//! Mutations go through a fair async mutex, so key presses are applied in the
//! order they arrive. Events are published to subscribers while the lock is
//! held, which keeps the event stream in the same order as the responses.

use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use hda_access::screenreader::Key;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{broadcast, Mutex};

use crate::session::{LoggedEvent, Session};

const EVENT_BUFFER: usize = 256;

#[derive(Clone)]
pub struct AppState {
    session: Arc<Mutex<Session>>,
    events: broadcast::Sender<LoggedEvent>,
}

impl AppState {
    pub fn new(session: Session) -> Self {
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        AppState {
            session: Arc::new(Mutex::new(session)),
            events,
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/form", get(get_form))
        .route("/api/key", post(post_key))
        .route("/api/events", get(get_events))
        .route("/api/audio/last", get(get_last_audio))
        .route("/api/transcript", get(get_transcript))
        .with_state(state)
}

fn error(status: StatusCode, msg: impl ToString) -> Response {
    (status, Json(json!({ "error": msg.to_string() }))).into_response()
}

async fn get_form(State(state): State<AppState>) -> Response {
    Json(state.session.lock().await.form().snapshot()).into_response()
}

#[derive(Deserialize)]
struct KeyRequest {
    key: String,
}

#[derive(Serialize)]
struct KeyResponse {
    events: Vec<LoggedEvent>,
    focus: usize,
}

async fn post_key(State(state): State<AppState>, Json(req): Json<KeyRequest>) -> Response {
    let key: Key = match req.key.parse() {
        Ok(k) => k,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let mut session = state.session.lock().await;
    match session.press(key) {
        Ok(events) => {
            for e in &events {
                // no subscribers is fine
                let _ = state.events.send(e.clone());
            }
            Json(KeyResponse {
                events,
                focus: session.form().focus_index(),
            })
            .into_response()
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn get_events(State(state): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = state.events.subscribe();
    let stream = stream::unfold(rx, |mut rx| async move {
        let event = match rx.recv().await {
            Ok(ev) => Event::default()
                .event("ui")
                .id(ev.seq.to_string())
                .json_data(&ev)
                .expect("events serialize"),
            Err(broadcast::error::RecvError::Lagged(n)) => Event::default().event("lagged").data(n.to_string()),
            Err(broadcast::error::RecvError::Closed) => return None,
        };
        Some((Ok(event), rx))
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

async fn get_last_audio(State(state): State<AppState>) -> Response {
    match state.session.lock().await.last_wav() {
        Some(wav) => ([(header::CONTENT_TYPE, "audio/wav")], wav.to_vec()).into_response(),
        None => error(StatusCode::NOT_FOUND, "no audio yet"),
    }
}

async fn get_transcript(State(state): State<AppState>) -> Response {
    let text = state.session.lock().await.transcript();
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response()
}
