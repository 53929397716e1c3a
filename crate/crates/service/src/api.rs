use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::{DateTime, FixedOffset, NaiveDate, Utc};
use platter_core::dataset::parse_yolo_label_file;
use platter_core::detect::parse_detection_file;
use platter_core::eval::{evaluate_detections, EvalOptions, MetricsReport};
use platter_core::nutrition::{
    BmrFormula, CalorieGoal, CalorieTable, DayEntry, Diary, DiaryEvent, Dish, MealInput, MealLog,
    NutritionError, TrackerState, UserProfile, UserRecord,
};
use platter_core::{ClassRegistry, Dataset, DishCounts};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::error::ApiError;
use crate::store::{Committed, Store};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
const MAX_KEY_LEN: usize = 200;
const MAX_BODY_BYTES: usize = 64 << 20;

/// Read-only configuration shared by all requests.
#[derive(Debug, Clone)]
pub struct Catalog {
    pub registry: ClassRegistry,
    pub table: CalorieTable,
    /// Detections below this confidence are ignored when logging meals.
    pub confidence_threshold: f64,
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    catalog: Arc<Catalog>,
    eval_slots: Arc<Semaphore>,
}

impl AppState {
    /// `eval_workers` bounds how many evaluations run at once.
    pub fn new(store: Store, catalog: Catalog, eval_workers: usize) -> Self {
        Self {
            store: Arc::new(store),
            catalog: Arc::new(catalog),
            eval_slots: Arc::new(Semaphore::new(eval_workers.max(1))),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/users", post(create_user))
        .route("/users/{id}", get(get_user))
        .route("/users/{id}/goal", put(set_goal))
        .route("/users/{id}/meals", post(post_meal))
        .route("/users/{id}/tracker", get(get_tracker))
        .route("/users/{id}/history", get(get_history))
        .route("/dishes", get(get_dishes))
        .route("/evaluations", post(post_evaluation))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    Ok(serde_json::from_slice(body)?)
}

fn idempotency_key(headers: &HeaderMap) -> Result<Option<String>, ApiError> {
    let Some(value) = headers.get(IDEMPOTENCY_HEADER) else {
        return Ok(None);
    };
    match value.to_str() {
        Ok(s) if !s.is_empty() && s.len() <= MAX_KEY_LEN => Ok(Some(s.to_owned())),
        _ => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_idempotency_key",
            format!("Idempotency-Key must be 1 to {MAX_KEY_LEN} visible ASCII characters"),
        )),
    }
}

/// Persists one write off the async runtime, since it waits on fsync.
async fn write(
    state: &AppState,
    headers: &HeaderMap,
    kind: &'static str,
    user_id: Option<String>,
    prepare: impl FnOnce(&Diary) -> Result<DiaryEvent, NutritionError> + Send + 'static,
) -> Result<Committed, ApiError> {
    let key = idempotency_key(headers)?;
    let store = state.store.clone();
    tokio::task::spawn_blocking(move || {
        store.commit(key.as_deref(), kind, user_id.as_deref(), prepare)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
    .map_err(Into::into)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedUser {
    pub user_id: String,
    pub profile: UserProfile,
}

async fn create_user(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<CreatedUser>), ApiError> {
    let profile: UserProfile = parse_body(&body)?;
    let user_id = uuid::Uuid::new_v4().simple().to_string();
    let committed = write(&state, &headers, "user_created", None, move |d| {
        d.prepare_user(&user_id, &profile)
    })
    .await?;
    let DiaryEvent::UserCreated { user_id, profile } = committed.event else {
        unreachable!("kind checked by the store")
    };
    Ok((StatusCode::CREATED, Json(CreatedUser { user_id, profile })))
}

async fn get_user(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<UserRecord>, ApiError> {
    Ok(Json(state.store.read(|d| d.user(&id).cloned())?))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalRequest {
    formula: Option<BmrFormula>,
}

async fn set_goal(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<CalorieGoal>, ApiError> {
    let req: GoalRequest = if body.iter().all(u8::is_ascii_whitespace) {
        GoalRequest::default()
    } else {
        parse_body(&body)?
    };
    let user = id.clone();
    let committed = write(&state, &headers, "goal_set", Some(id), move |d| {
        d.prepare_goal(&user, req.formula)
    })
    .await?;
    let DiaryEvent::GoalSet { goal, .. } = committed.event else {
        unreachable!("kind checked by the store")
    };
    Ok(Json(goal))
}

/// Either `counts` or `detections` (raw detection-file lines).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MealRequest {
    counts: Option<DishCounts>,
    detections: Option<String>,
    /// Names the uploaded detection file in the meal's source.
    file_id: Option<String>,
    timestamp: Option<DateTime<FixedOffset>>,
}

async fn post_meal(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<MealLog>), ApiError> {
    let req: MealRequest = parse_body(&body)?;
    let input = match (req.counts, req.detections) {
        (Some(counts), None) => MealInput::Counts(counts),
        (None, Some(lines)) => {
            let file_id = req.file_id.unwrap_or_else(|| "upload".to_owned());
            let set = parse_detection_file(&file_id, &lines, &state.catalog.registry)
                .map_err(|e| ApiError::parse(&file_id, &e))?;
            MealInput::Detections {
                set,
                confidence_threshold: state.catalog.confidence_threshold,
            }
        }
        _ => {
            return Err(ApiError::unprocessable(
                "invalid_meal_request",
                "give exactly one of `counts` or `detections`",
            ))
        }
    };
    let timestamp = req
        .timestamp
        .map_or_else(Utc::now, |t| t.with_timezone(&Utc));
    let catalog = state.catalog.clone();
    let user = id.clone();
    let committed = write(&state, &headers, "meal_logged", Some(id), move |d| {
        d.prepare_meal(&user, &input, &catalog.table, timestamp)
    })
    .await?;
    let DiaryEvent::MealLogged(meal) = committed.event else {
        unreachable!("kind checked by the store")
    };
    Ok((StatusCode::CREATED, Json(meal)))
}

#[derive(Debug, Deserialize)]
struct TrackerQuery {
    at: Option<DateTime<FixedOffset>>,
}

async fn get_tracker(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<TrackerQuery>, QueryRejection>,
) -> Result<Json<TrackerState>, ApiError> {
    let Query(q) = query?;
    let now = q.at.map_or_else(Utc::now, |t| t.with_timezone(&Utc));
    Ok(Json(state.store.read(|d| d.tracker_state(&id, now))?))
}

#[derive(Debug, Deserialize)]
struct HistoryQuery {
    from: NaiveDate,
    to: NaiveDate,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct History {
    pub user_id: String,
    pub days: Vec<DayEntry>,
}

async fn get_history(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<HistoryQuery>, QueryRejection>,
) -> Result<Json<History>, ApiError> {
    let Query(q) = query?;
    let days = state.store.read(|d| d.history(&id, q.from, q.to))?;
    Ok(Json(History { user_id: id, days }))
}

#[derive(Debug, Serialize)]
struct Dishes<'a> {
    dishes: Vec<&'a Dish>,
    /// Registry classes that have no calorie entry and cannot be logged.
    missing_classes: Vec<usize>,
}

async fn get_dishes(State(state): State<AppState>) -> Json<serde_json::Value> {
    let c = &state.catalog;
    let view = Dishes {
        dishes: c.table.dishes().collect(),
        missing_classes: c.table.missing_classes(&c.registry),
    };
    Json(serde_json::to_value(view).expect("dishes serialize"))
}

/// Ground truth and detections as file contents keyed by image id.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluationRequest {
    /// Defaults to the service's class list.
    classes: Option<Vec<String>>,
    labels: BTreeMap<String, String>,
    #[serde(default)]
    detections: BTreeMap<String, String>,
    iou_threshold: Option<f64>,
    confidence_threshold: Option<f64>,
    #[serde(default)]
    with_curves: bool,
}

fn run_evaluation(
    req: EvaluationRequest,
    default_registry: &ClassRegistry,
) -> Result<MetricsReport, ApiError> {
    let registry = match req.classes {
        Some(names) => ClassRegistry::new(names)?,
        None => default_registry.clone(),
    };
    let images = req
        .labels
        .iter()
        .map(|(id, text)| {
            parse_yolo_label_file(id, text, &registry)
                .map_err(|e| ApiError::parse(&format!("labels/{id}"), &e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sets = req
        .detections
        .iter()
        .map(|(id, text)| {
            parse_detection_file(id, text, &registry)
                .map_err(|e| ApiError::parse(&format!("detections/{id}"), &e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let dataset = Dataset::new(registry, images)?;
    let defaults = EvalOptions::default();
    let options = EvalOptions {
        iou_threshold: req.iou_threshold.unwrap_or(defaults.iou_threshold),
        confidence_threshold: req
            .confidence_threshold
            .unwrap_or(defaults.confidence_threshold),
        with_curves: req.with_curves,
    };
    Ok(evaluate_detections(&dataset, &sets, &options)?)
}

async fn post_evaluation(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<Json<MetricsReport>, ApiError> {
    let req: EvaluationRequest = parse_body(&body)?;
    let permit = state
        .eval_slots
        .clone()
        .acquire_owned()
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let catalog = state.catalog.clone();
    let report = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        run_evaluation(req, &catalog.registry)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(report))
}
