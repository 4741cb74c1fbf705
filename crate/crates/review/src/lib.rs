//! JSON-over-HTTP front end for [`sidewalk::review::ReviewQueue`].
//!
//! Routes live under `/v1`. Errors come back as `{"code": ..., "message": ...}` with
//! `code` one of `not_found`, `conflict`, `validation`, `precondition`, `bad_request`,
//! `unauthorized` or `internal`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use sidewalk::mask::{MaskImage, Provenance};
use sidewalk::review::{Claim, RefinementStats, ReviewQueue, ReviewTask, StageSummary, TaskStatus};
use sidewalk::Error;

#[derive(Clone)]
pub struct ServiceState {
    pub queue: Arc<ReviewQueue>,
    /// When set, every request must carry `Authorization: Bearer <token>`.
    pub token: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

pub struct Failure(StatusCode, ApiError);

impl Failure {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self(
            status,
            ApiError {
                code: code.into(),
                message: message.into(),
            },
        )
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            Error::InvalidClass { .. } | Error::Shape { .. } | Error::Codec(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "validation")
            }
            Error::Precondition(_) => (StatusCode::PRECONDITION_FAILED, "precondition"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = Result<T, Failure>;

fn authorize(state: &ServiceState, headers: &HeaderMap) -> ApiResult<()> {
    let Some(expected) = &state.token else {
        return Ok(());
    };
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if given == Some(expected.as_str()) {
        Ok(())
    } else {
        Err(Failure::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong reviewer token"))
    }
}

/// Task as served to clients: masks travel as base64 indexed PNGs.
#[derive(Debug, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub image_id: String,
    pub stage: usize,
    pub status: TaskStatus,
    pub reviewer_id: Option<String>,
    pub revision: u32,
    pub image_uncertainty: f64,
    pub predicted_png: String,
    pub refined_png: Option<String>,
    pub stats: Option<RefinementStats>,
}

fn png_b64(mask: &MaskImage) -> ApiResult<String> {
    Ok(base64::engine::general_purpose::STANDARD.encode(mask.to_png(None)?))
}

impl TaskView {
    fn from_task(t: &ReviewTask) -> ApiResult<Self> {
        Ok(Self {
            task_id: t.task_id.clone(),
            image_id: t.image_id.clone(),
            stage: t.stage,
            status: t.status,
            reviewer_id: t.reviewer_id.clone(),
            revision: t.revision,
            image_uncertainty: t.uncertainty.image_uncertainty,
            predicted_png: png_b64(&t.predicted)?,
            refined_png: t.refined.as_ref().map(png_b64).transpose()?,
            stats: t.stats,
        })
    }
}

#[derive(Debug, Deserialize)]
pub struct StatusFilter {
    pub status: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClaimRequest {
    pub reviewer_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MaskUpload {
    pub reviewer_id: String,
    /// Claim token returned by the claim call.
    pub token: String,
    pub mask_png: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RejectRequest {
    pub reason: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SummaryView {
    pub stage: usize,
    pub counts: BTreeMap<String, usize>,
    pub confusion: Vec<Vec<u64>>,
    pub mean_fraction_changed: Option<f64>,
    pub mean_edit_seconds: Option<f64>,
}

impl From<StageSummary> for SummaryView {
    fn from(s: StageSummary) -> Self {
        Self {
            stage: s.stage,
            counts: s.counts.into_iter().map(|(k, v)| (k.as_str().to_string(), v)).collect(),
            confusion: s.confusion.rows(),
            mean_fraction_changed: s.mean_fraction_changed,
            mean_edit_seconds: s.mean_edit_seconds,
        }
    }
}

async fn list_tasks(
    State(st): State<ServiceState>,
    headers: HeaderMap,
    Path(stage): Path<usize>,
    Query(filter): Query<StatusFilter>,
) -> ApiResult<Json<Vec<TaskView>>> {
    authorize(&st, &headers)?;
    let status = match filter.status.as_deref() {
        None => None,
        Some(s) => Some(
            TaskStatus::parse(s)
                .ok_or_else(|| Failure::new(StatusCode::BAD_REQUEST, "bad_request", format!("unknown status {s:?}")))?,
        ),
    };
    let tasks = st.queue.tasks(stage, status)?;
    Ok(Json(tasks.iter().map(TaskView::from_task).collect::<ApiResult<_>>()?))
}

async fn get_task(State(st): State<ServiceState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Json<TaskView>> {
    authorize(&st, &headers)?;
    Ok(Json(TaskView::from_task(&st.queue.get(&id)?)?))
}

async fn claim(
    State(st): State<ServiceState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(req): Json<ClaimRequest>,
) -> ApiResult<Json<Claim>> {
    authorize(&st, &headers)?;
    Ok(Json(st.queue.claim(&id, &req.reviewer_id)?))
}

async fn put_mask(
    State(st): State<ServiceState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(req): Json<MaskUpload>,
) -> ApiResult<Json<TaskView>> {
    authorize(&st, &headers)?;
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(req.mask_png.as_bytes())
        .map_err(|e| Failure::new(StatusCode::BAD_REQUEST, "bad_request", format!("mask_png is not base64: {e}")))?;
    let mask = MaskImage::from_png(&bytes, Provenance::HumanRefined)?;
    let task = st.queue.submit_refinement(&id, &req.token, &req.reviewer_id, mask)?;
    Ok(Json(TaskView::from_task(&task)?))
}

async fn accept(State(st): State<ServiceState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Json<TaskView>> {
    authorize(&st, &headers)?;
    Ok(Json(TaskView::from_task(&st.queue.accept(&id)?)?))
}

async fn reject(
    State(st): State<ServiceState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(req): Json<RejectRequest>,
) -> ApiResult<Json<TaskView>> {
    authorize(&st, &headers)?;
    Ok(Json(TaskView::from_task(&st.queue.reject(&id, &req.reason)?)?))
}

async fn requeue(State(st): State<ServiceState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Json<TaskView>> {
    authorize(&st, &headers)?;
    Ok(Json(TaskView::from_task(&st.queue.requeue(&id)?)?))
}

async fn uncertainty(State(st): State<ServiceState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Response> {
    authorize(&st, &headers)?;
    let png = st.queue.get(&id)?.uncertainty.to_png()?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn summary(State(st): State<ServiceState>, headers: HeaderMap, Path(stage): Path<usize>) -> ApiResult<Json<SummaryView>> {
    authorize(&st, &headers)?;
    Ok(Json(st.queue.stage_summary(stage)?.into()))
}

pub fn router(state: ServiceState) -> Router {
    Router::new()
        .route("/v1/stages/{k}/tasks", get(list_tasks))
        .route("/v1/stages/{k}/summary", get(summary))
        .route("/v1/tasks/{id}", get(get_task))
        .route("/v1/tasks/{id}/claim", post(claim))
        .route("/v1/tasks/{id}/mask", put(put_mask))
        .route("/v1/tasks/{id}/accept", post(accept))
        .route("/v1/tasks/{id}/reject", post(reject))
        .route("/v1/tasks/{id}/requeue", post(requeue))
        .route("/v1/tasks/{id}/uncertainty", get(uncertainty))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: ServiceState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
