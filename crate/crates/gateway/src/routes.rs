use std::sync::Arc;
use std::time::Duration;

use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use govgate_core::enactment::{
    to_ndjson, ApprovalDecision, ApprovalRequest, FinalOutput, Session, SessionId, SessionPhase,
};
use govgate_core::policy::{PolicyId, PolicyKind};

use crate::error::ApiError;
use crate::state::{CreateSession, Gateway};

type ApiResult<T> = Result<T, ApiError>;

/// Header naming the deciding actor when the body does not.
pub const ACTOR_HEADER: &str = "x-govgate-actor";

/// `Json` whose rejections use the API error body.
struct Body<T>(T);

impl<S: Send + Sync, T: serde::de::DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| Body(v))
            .map_err(|e| ApiError::bad_request("bad_request", e.body_text()))
    }
}

/// `Query` whose rejections use the API error body.
struct Params<T>(T);

impl<S: Send + Sync, T: serde::de::DeserializeOwned> FromRequestParts<S> for Params<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        Query::<T>::from_request_parts(parts, state)
            .await
            .map(|Query(v)| Params(v))
            .map_err(|e| ApiError::bad_request("bad_request", e.body_text()))
    }
}

/// Longest accepted long-poll wait.
const MAX_WATCH: Duration = Duration::from_secs(60);

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/trace", get(get_trace))
        .route("/v1/approvals/pending", get(pending))
        .route("/v1/approvals/watch", get(watch))
        .route("/v1/approvals/{id}", get(get_approval))
        .route("/v1/approvals/{id}/decision", post(decide))
        .route("/v1/policies", get(list_policies))
        .route("/v1/policies/{id}", get(get_policy).put(put_policy).delete(delete_policy))
        .with_state(gateway)
}

/// Runs blocking engine work off the async executor.
async fn blocking<T, F>(gateway: &Arc<Gateway>, f: F) -> ApiResult<T>
where
    F: FnOnce(&Gateway) -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    let gateway = gateway.clone();
    tokio::task::spawn_blocking(move || f(&gateway))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

#[derive(Serialize)]
struct Created {
    session_id: SessionId,
    phase: SessionPhase,
}

async fn create_session(
    State(gw): State<Arc<Gateway>>,
    Body(req): Body<CreateSession>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let (session_id, phase) = blocking(&gw, move |g| g.start_session(req)).await?;
    Ok((StatusCode::CREATED, Json(Created { session_id, phase })))
}

#[derive(Serialize)]
struct SessionView {
    session_id: SessionId,
    phase: SessionPhase,
    user_input: String,
    app_id: Option<String>,
    playbook: Option<PolicyId>,
    pending_approval: Option<String>,
    block_message: Option<String>,
    output: Option<FinalOutput>,
    executions: std::collections::BTreeMap<String, u32>,
    trace_len: usize,
}

impl From<Session> for SessionView {
    fn from(s: Session) -> Self {
        Self {
            session_id: s.id,
            phase: s.phase,
            user_input: s.context.user_input,
            app_id: s.context.app_id,
            playbook: s.playbook,
            pending_approval: s.pending_approval,
            block_message: s.block_message,
            output: s.output,
            executions: s.executions,
            trace_len: s.trace.len(),
        }
    }
}

async fn get_session(State(gw): State<Arc<Gateway>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let session = gw.engine().session(&SessionId::new(id))?;
    Ok(Json(session.into()))
}

#[derive(Deserialize)]
struct TraceQuery {
    from_sequence: Option<u64>,
}

async fn get_trace(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<String>,
    Params(q): Params<TraceQuery>,
) -> ApiResult<Response> {
    let trace = gw.engine().trace(&SessionId::new(id))?;
    let from = q.from_sequence.unwrap_or(0);
    let body = to_ndjson(trace.iter().filter(|e| e.sequence >= from));
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn pending(State(gw): State<Arc<Gateway>>) -> Json<Vec<ApprovalRequest>> {
    Json(gw.engine().pending_approvals())
}

async fn get_approval(State(gw): State<Arc<Gateway>>, Path(id): Path<String>) -> ApiResult<Json<ApprovalRequest>> {
    gw.engine()
        .approval(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found("approval request", &id))
}

#[derive(Deserialize)]
struct WatchQuery {
    timeout_s: Option<f64>,
}

/// Long poll: answers as soon as at least one request is pending, or 204
/// when the timeout passes first.
async fn watch(State(gw): State<Arc<Gateway>>, Params(q): Params<WatchQuery>) -> ApiResult<Response> {
    let timeout = match q.timeout_s {
        Some(t) if !(t.is_finite() && t >= 0.0) => {
            return Err(ApiError::bad_request("bad_request", "timeout_s must be a non-negative number"))
        }
        Some(t) => Duration::from_secs_f64(t).min(MAX_WATCH),
        None => Duration::from_secs(30),
    };
    let notify = gw.pending_notify();
    let deadline = tokio::time::Instant::now() + timeout;
    loop {
        let notified = notify.notified();
        tokio::pin!(notified);
        // register before looking, so a request created in between still wakes us
        notified.as_mut().enable();
        let pending = gw.engine().pending_approvals();
        if !pending.is_empty() {
            return Ok(Json(pending).into_response());
        }
        if tokio::time::timeout_at(deadline, notified).await.is_err() {
            return Ok(StatusCode::NO_CONTENT.into_response());
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    decision: ApprovalDecision,
    #[serde(default)]
    actor: Option<String>,
}

#[derive(Serialize)]
struct DecisionView {
    request: ApprovalRequest,
    phase: SessionPhase,
}

async fn decide(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Body(body): Body<DecisionBody>,
) -> ApiResult<Json<DecisionView>> {
    let actor = body
        .actor
        .or_else(|| headers.get(ACTOR_HEADER).and_then(|v| v.to_str().ok()).map(str::to_owned))
        .filter(|a| !a.trim().is_empty())
        .ok_or_else(|| ApiError::bad_request("bad_request", "an actor is required"))?;
    let (request, phase) = blocking(&gw, move |g| g.decide(&id, body.decision, &actor)).await?;
    Ok(Json(DecisionView { request, phase }))
}

#[derive(Deserialize)]
struct KindQuery {
    kind: Option<String>,
}

async fn list_policies(State(gw): State<Arc<Gateway>>, Params(q): Params<KindQuery>) -> ApiResult<Response> {
    let kind = match q.kind {
        Some(k) => Some(
            serde_json::from_value::<PolicyKind>(serde_json::Value::String(k.clone()))
                .map_err(|_| ApiError::bad_request("bad_request", format!("unknown policy kind `{k}`")))?,
        ),
        None => None,
    };
    Ok(Json(gw.policies(kind)).into_response())
}

async fn get_policy(State(gw): State<Arc<Gateway>>, Path(id): Path<String>) -> ApiResult<Response> {
    let source = gw
        .policy_source(&PolicyId::new(id.clone()))
        .ok_or_else(|| ApiError::not_found("policy", &id))?;
    Ok(([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], source).into_response())
}

async fn put_policy(State(gw): State<Arc<Gateway>>, Path(id): Path<String>, body: String) -> ApiResult<StatusCode> {
    let created = blocking(&gw, move |g| g.put_policy(&PolicyId::new(id), &body)).await?;
    Ok(if created { StatusCode::CREATED } else { StatusCode::OK })
}

async fn delete_policy(State(gw): State<Arc<Gateway>>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    blocking(&gw, move |g| g.delete_policy(&PolicyId::new(id))).await?;
    Ok(StatusCode::NO_CONTENT)
}
