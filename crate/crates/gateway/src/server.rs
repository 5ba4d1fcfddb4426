//! HTTP API under `/v1/`. Every response carries the world version, both in
//! the body and in the `x-world-version` header.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chainvoice_core::bn::BnError;
use chainvoice_core::flow::FlowError;
use chainvoice_core::ledger::{ChainId, LedgerError, PartyId};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::session::{FaultPlan, QueryRequest, Session, SessionError, SubmitRequest};

pub const VERSION_HEADER: &str = "x-world-version";

pub type Shared = Arc<Mutex<Session>>;

pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    version: u64,
}

impl ApiError {
    fn malformed(message: String, version: u64) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            kind: "malformed",
            message,
            version,
        }
    }

    fn from_session(e: SessionError, version: u64) -> Self {
        let (status, kind) = match &e {
            SessionError::Unauthenticated => (StatusCode::UNAUTHORIZED, "unauthenticated"),
            SessionError::Query(BnError::ImpossibleEvidence) => {
                (StatusCode::BAD_REQUEST, "impossible_evidence")
            }
            SessionError::Query(_) => (StatusCode::BAD_REQUEST, "invalid_query"),
            SessionError::Ledger(l) | SessionError::Flow(FlowError::Ledger { source: l, .. }) => {
                ledger_status(l)
            }
            SessionError::Flow(FlowError::ValidationFailed(_)) => {
                (StatusCode::BAD_REQUEST, "validation_failed")
            }
            SessionError::Flow(FlowError::Parse(_) | FlowError::Discount(_)) => {
                (StatusCode::BAD_REQUEST, "malformed")
            }
            SessionError::Flow(_) => (StatusCode::INTERNAL_SERVER_ERROR, "flow_failed"),
            SessionError::NotAParty { .. } => (StatusCode::FORBIDDEN, "not_a_party"),
            SessionError::StaleVersion { .. } => (StatusCode::CONFLICT, "version_conflict"),
        };
        ApiError {
            status,
            kind,
            message: e.to_string(),
            version,
        }
    }
}

fn ledger_status(e: &LedgerError) -> (StatusCode, &'static str) {
    match e {
        LedgerError::PrivacyViolation { .. } | LedgerError::NotAMember { .. } => {
            (StatusCode::FORBIDDEN, "privacy_violation")
        }
        LedgerError::UnknownChain(_)
        | LedgerError::UnknownAddress(_)
        | LedgerError::UnknownParty(_) => (StatusCode::NOT_FOUND, "not_found"),
        _ => (StatusCode::BAD_REQUEST, "ledger_rejected"),
    }
}

fn with_version(status: StatusCode, version: u64, body: Value) -> Response {
    let mut resp = (status, Json(body)).into_response();
    resp.headers_mut()
        .insert(VERSION_HEADER, HeaderValue::from(version));
    resp
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "version": self.version, "error": self.kind, "message": self.message });
        with_version(self.status, self.version, body)
    }
}

fn ok(version: u64, mut body: Value) -> Response {
    body["version"] = json!(version);
    with_version(StatusCode::OK, version, body)
}

fn parse<T: DeserializeOwned>(body: &Bytes, version: u64) -> Result<T, ApiError> {
    let text = if body.is_empty() { &b"{}"[..] } else { body };
    serde_json::from_slice(text).map_err(|e| ApiError::malformed(e.to_string(), version))
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
}

fn caller(session: &Session, headers: &HeaderMap) -> Result<Option<PartyId>, ApiError> {
    match bearer(headers) {
        None if headers.contains_key(header::AUTHORIZATION) => Err(ApiError::from_session(
            SessionError::Unauthenticated,
            session.version(),
        )),
        None => Ok(None),
        Some(t) => session
            .authenticate(t)
            .map(Some)
            .map_err(|e| ApiError::from_session(e, session.version())),
    }
}

fn required_caller(session: &Session, headers: &HeaderMap) -> Result<PartyId, ApiError> {
    caller(session, headers)?
        .ok_or_else(|| ApiError::from_session(SessionError::Unauthenticated, session.version()))
}

fn lock(state: &Shared) -> std::sync::MutexGuard<'_, Session> {
    // a panic mid-request leaves no partial world write behind the lock
    state.lock().unwrap_or_else(|e| e.into_inner())
}

async fn session_info(State(state): State<Shared>) -> Response {
    let s = lock(&state);
    ok(
        s.version(),
        json!({ "seed": s.world().seed(), "parties": s.tokens() }),
    )
}

async fn models(State(state): State<Shared>) -> Response {
    let s = lock(&state);
    ok(s.version(), json!({ "models": s.models() }))
}

async fn post_query(State(state): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let s = lock(&state);
    let req: QueryRequest = parse(&body, s.version())?;
    let posterior = s
        .query(&req)
        .map_err(|e| ApiError::from_session(e, s.version()))?;
    Ok(ok(s.version(), json!({ "posterior": posterior })))
}

async fn chains(State(state): State<Shared>, headers: HeaderMap) -> Result<Response, ApiError> {
    let s = lock(&state);
    let who = caller(&s, &headers)?;
    Ok(ok(s.version(), json!({ "chains": s.chains(who.as_ref()) })))
}

async fn chain_log(
    State(state): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let s = lock(&state);
    let who = required_caller(&s, &headers)?;
    let chain = ChainId::from(id);
    let entries = s
        .chain_log(&chain, &who)
        .map_err(|e| ApiError::from_session(e, s.version()))?;
    Ok(ok(
        s.version(),
        json!({ "chain": chain, "entries": entries }),
    ))
}

async fn scenarios(State(state): State<Shared>) -> Response {
    let s = lock(&state);
    ok(
        s.version(),
        json!({ "scenarios": s.scenarios().scenarios() }),
    )
}

async fn post_request(
    State(state): State<Shared>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let mut s = lock(&state);
    let who = required_caller(&s, &headers)?;
    let req: SubmitRequest = parse(&body, s.version())?;
    let outcome = s
        .submit(&who, &req)
        .map_err(|e| ApiError::from_session(e, s.version()))?;
    Ok(ok(
        s.version(),
        json!({ "outcome": outcome, "trace": outcome.trace() }),
    ))
}

async fn get_faults(State(state): State<Shared>) -> Response {
    let s = lock(&state);
    ok(s.version(), json!({ "fault": s.armed_fault() }))
}

async fn post_faults(State(state): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let mut s = lock(&state);
    let plan: FaultPlan = parse(&body, s.version())?;
    let version = s
        .arm_fault(&plan)
        .map_err(|e| ApiError::from_session(e, s.version()))?;
    Ok(ok(version, json!({ "fault": s.armed_fault() })))
}

/// The `/v1/` API, optionally serving a built console from `ui_dir`.
pub fn router(state: Shared, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/v1/session", get(session_info))
        .route("/v1/models", get(models))
        .route("/v1/query", axum::routing::post(post_query))
        .route("/v1/chains", get(chains))
        .route("/v1/chains/{id}/log", get(chain_log))
        .route("/v1/scenarios", get(scenarios))
        .route("/v1/requests", axum::routing::post(post_request))
        .route("/v1/faults", get(get_faults).post(post_faults))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(
    addr: std::net::SocketAddr,
    state: Shared,
    ui_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, ui_dir)).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_statuses() {
        let cases = [
            (
                SessionError::Unauthenticated,
                StatusCode::UNAUTHORIZED,
                "unauthenticated",
            ),
            (
                SessionError::Query(BnError::ImpossibleEvidence),
                StatusCode::BAD_REQUEST,
                "impossible_evidence",
            ),
            (
                SessionError::StaleVersion {
                    expected: 1,
                    current: 2,
                },
                StatusCode::CONFLICT,
                "version_conflict",
            ),
            (
                SessionError::Ledger(LedgerError::UnknownChain(ChainId::from("X"))),
                StatusCode::NOT_FOUND,
                "not_found",
            ),
        ];
        for (e, status, kind) in cases {
            let api = ApiError::from_session(e, 7);
            assert_eq!((api.status, api.kind, api.version), (status, kind, 7));
        }
    }
}
