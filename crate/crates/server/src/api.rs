//! Routes and handlers.
//!
//! Each session has its own lock, so distinct sessions proceed in parallel.
//! Students are shared by their sessions and locked after the session;
//! the log is locked last. A request works on copies and commits them only
//! once its events are durably appended, so a failure leaves no trace.
//! Snapshots take the write side of a gate that every request holds for
//! reading, which gives them a consistent cut.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard, RwLock, RwLockReadGuard};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use cardstack_core::config::{
    FeatureParams, GestureParams, InferenceParams, ModelParams, RadarParams, RecommenderParams,
};
use cardstack_core::events::EndReason;
use cardstack_core::radar::{default_labels, AxisLabel};
use cardstack_core::session::{
    self, EngineState, Env, GestureInput, ProgressSummary, Resolution, Session, StackView, SystemClock,
};
use cardstack_core::student::{AnswerOutcome, ItemPool, StudentState};
use cardstack_core::{CardId, ChoiceEvent, Config, Error, ItemId, SessionId, StudentId};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::store::Store;

type ApiResult<T> = Result<T, ApiError>;

/// Poisoning only follows a panic mid-request, and requests commit by
/// swapping in finished copies, so the guarded data is still consistent.
fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Debug)]
struct SessionSlot {
    session: Session,
    /// This session's events, in seq order.
    events: Vec<ChoiceEvent>,
}

#[derive(Debug, Default)]
struct Registry {
    sessions: HashMap<SessionId, Arc<Mutex<SessionSlot>>>,
    created: u64,
}

#[derive(Debug)]
struct Shared {
    pool: Arc<ItemPool>,
    config: Arc<Config>,
    gate: RwLock<()>,
    registry: RwLock<Registry>,
    students: Mutex<HashMap<StudentId, Arc<Mutex<StudentState>>>>,
    store: Mutex<Store>,
}

/// Shared service state; cheap to clone.
#[derive(Debug, Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    /// A service that keeps its log in memory only.
    pub fn in_memory(pool: Arc<ItemPool>, config: Arc<Config>) -> Self {
        Self::from_parts(pool, config, EngineState::default(), Vec::new(), Store::in_memory())
    }

    /// Recovers from the configured log and snapshot and persists to them.
    pub fn open(pool: Arc<ItemPool>, config: Arc<Config>) -> cardstack_core::Result<Self> {
        let (store, state, events) = Store::open(&config, &pool)?;
        Ok(Self::from_parts(pool, config, state, events, store))
    }

    fn from_parts(
        pool: Arc<ItemPool>,
        config: Arc<Config>,
        state: EngineState,
        events: Vec<ChoiceEvent>,
        store: Store,
    ) -> Self {
        let mut by_session: HashMap<SessionId, Vec<ChoiceEvent>> = HashMap::new();
        for e in events {
            by_session.entry(e.session_id.clone()).or_default().push(e);
        }
        let sessions = state
            .sessions
            .into_iter()
            .map(|(id, session)| {
                let events = by_session.remove(&id).unwrap_or_default();
                (id, Arc::new(Mutex::new(SessionSlot { session, events })))
            })
            .collect();
        let students = state
            .students
            .into_iter()
            .map(|(id, s)| (id, Arc::new(Mutex::new(s))))
            .collect();
        Self {
            shared: Arc::new(Shared {
                pool,
                config,
                gate: RwLock::new(()),
                registry: RwLock::new(Registry {
                    sessions,
                    created: state.sessions_created,
                }),
                students: Mutex::new(students),
                store: Mutex::new(store),
            }),
        }
    }

    fn env(&self) -> Env<'_> {
        Env::new(&self.shared.pool, &self.shared.config)
    }

    fn enter(&self) -> RwLockReadGuard<'_, ()> {
        self.shared.gate.read().unwrap_or_else(|p| p.into_inner())
    }

    fn slot(&self, id: &SessionId) -> ApiResult<Arc<Mutex<SessionSlot>>> {
        let registry = self.shared.registry.read().unwrap_or_else(|p| p.into_inner());
        registry.sessions.get(id).cloned().ok_or_else(|| {
            Error::NotFound {
                what: "session",
                id: id.to_string(),
            }
            .into()
        })
    }

    fn student(&self, id: &StudentId) -> Arc<Mutex<StudentState>> {
        let initial = self.shared.config.recommender.initial_cr_target;
        lock(&self.shared.students)
            .entry(id.clone())
            .or_insert_with(|| Arc::new(Mutex::new(StudentState::new(id.clone(), initial))))
            .clone()
    }

    fn persist(&self, events: &[ChoiceEvent]) -> ApiResult<()> {
        lock(&self.shared.store).append(events).map_err(|e| {
            tracing::error!(error = %e, "event log append failed; request rolled back");
            ApiError::internal(e.to_string())
        })
    }

    /// Writes a snapshot if one is due. Runs after a request released its
    /// locks; the write gate waits out every request in flight.
    fn maybe_snapshot(&self) {
        if !lock(&self.shared.store).snapshot_due() {
            return;
        }
        let _quiet = self.shared.gate.write().unwrap_or_else(|p| p.into_inner());
        let mut store = lock(&self.shared.store);
        if !store.snapshot_due() {
            return;
        }
        if let Err(e) = store.snapshot(&self.engine_state()) {
            tracing::warn!(error = %e, "snapshot failed");
        }
    }

    /// Copy of the whole state. Consistent only when no request is in flight.
    fn engine_state(&self) -> EngineState {
        // Separate statements: readers lock a session before the student
        // map, so the map guard must be gone before any session is locked.
        let students: Vec<_> = lock(&self.shared.students)
            .iter()
            .map(|(id, s)| (id.clone(), s.clone()))
            .collect();
        let registry = self.shared.registry.read().unwrap_or_else(|p| p.into_inner());
        EngineState {
            students: students.into_iter().map(|(id, s)| (id, lock(&s).clone())).collect(),
            sessions: registry
                .sessions
                .iter()
                .map(|(id, slot)| (id.clone(), lock(slot).session.clone()))
                .collect(),
            sessions_created: registry.created,
        }
    }

    /// Every logged event, grouped by session.
    pub fn events(&self) -> Vec<ChoiceEvent> {
        let _quiet = self.shared.gate.write().unwrap_or_else(|p| p.into_inner());
        let registry = self.shared.registry.read().unwrap_or_else(|p| p.into_inner());
        let mut ids: Vec<_> = registry.sessions.keys().cloned().collect();
        ids.sort();
        ids.iter()
            .flat_map(|id| lock(&registry.sessions[id]).events.clone())
            .collect()
    }

    fn create(&self, student_id: StudentId) -> ApiResult<StackView> {
        let _gate = self.enter();
        let student = self.student(&student_id);
        let mut student = lock(&student);
        // Reserve an id; it is only published once the session commits.
        let session_id = {
            let mut registry = self.shared.registry.write().unwrap_or_else(|p| p.into_inner());
            let id = (registry.created + 1..)
                .map(|n| SessionId::new(format!("s-{n}")))
                .find(|id| !registry.sessions.contains_key(id))
                .expect("unbounded range");
            registry.created += 1;
            id
        };
        let mut clock = SystemClock;
        let mut learner = student.clone();
        let (mut session, mut events) = session::start_session(session_id.clone(), &mut learner, None, &mut clock);
        events.extend(session::deal(self.env(), &mut session, &learner, &mut clock)?);
        self.persist(&events)?;
        let view = StackView::from(&session);
        *student = learner;
        let slot = Arc::new(Mutex::new(SessionSlot { session, events }));
        let mut registry = self.shared.registry.write().unwrap_or_else(|p| p.into_inner());
        registry.sessions.insert(session_id, slot);
        Ok(view)
    }

    /// Runs `f` on copies of the session and its student, persists the
    /// events it returns and only then commits the copies.
    fn with_session<T>(
        &self,
        id: &SessionId,
        f: impl FnOnce(Env<'_>, &mut Session, &mut StudentState) -> cardstack_core::Result<(T, Vec<ChoiceEvent>)>,
    ) -> ApiResult<T> {
        let out = {
            let _gate = self.enter();
            let slot = self.slot(id)?;
            let mut slot = lock(&slot);
            let student = self.student(&slot.session.student_id);
            let mut student = lock(&student);
            let mut session = slot.session.clone();
            let mut learner = student.clone();
            let (out, events) = f(self.env(), &mut session, &mut learner)?;
            self.persist(&events)?;
            slot.session = session;
            slot.events.extend(events);
            *student = learner;
            out
        };
        self.maybe_snapshot();
        Ok(out)
    }

    fn read<T>(&self, id: &SessionId, f: impl FnOnce(&SessionSlot, &StudentState) -> T) -> ApiResult<T> {
        let slot = self.slot(id)?;
        let slot = lock(&slot);
        let student = self.student(&slot.session.student_id);
        let student = lock(&student);
        Ok(f(&slot, &student))
    }

    fn progress(&self, id: &SessionId) -> ApiResult<ProgressSummary> {
        self.read(id, |slot, student| slot.session.progress(student, &self.shared.config))
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateSessionRequest {
    pub student_id: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GestureRequest {
    pub card_id: CardId,
    #[serde(flatten)]
    pub input: GestureInput,
    #[serde(default)]
    pub request_token: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GestureResponse {
    #[serde(flatten)]
    pub resolution: Resolution,
    /// Content reference of the engaged item, on tap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<ItemId>,
    pub stack: StackView,
}

#[derive(Debug, Clone, Deserialize)]
pub struct AnswerRequest {
    pub card_id: CardId,
    pub correct: bool,
    pub elapsed_s: f64,
    #[serde(default)]
    pub request_token: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub progress: ProgressSummary,
    pub stack: StackView,
}

/// Constants a client needs to mirror server behaviour.
#[derive(Debug, Clone, Serialize)]
pub struct ClientConfig<'a> {
    pub model: &'a ModelParams,
    pub features: &'a FeatureParams,
    pub gesture: &'a GestureParams,
    pub recommender: &'a RecommenderParams,
    pub inference: &'a InferenceParams,
    pub radar: &'a RadarParams,
    pub axis_labels: Vec<AxisLabel>,
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("request body: {e}")))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/config", get(get_config))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/stack", get(get_stack))
        .route("/sessions/{id}/gesture", post(post_gesture))
        .route("/sessions/{id}/answer", post(post_answer))
        .route("/sessions/{id}/progress", get(get_progress))
        .route("/sessions/{id}/events", get(get_events))
        .route("/sessions/{id}/end", post(end_session))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(state)
}

async fn get_config(State(app): State<AppState>) -> Json<serde_json::Value> {
    let c = &*app.shared.config;
    let view = ClientConfig {
        model: &c.model,
        features: &c.features,
        gesture: &c.gesture,
        recommender: &c.recommender,
        inference: &c.inference,
        radar: &c.radar,
        axis_labels: default_labels(),
    };
    Json(serde_json::to_value(view).expect("config always serializes"))
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<StackView>)> {
    let req: CreateSessionRequest = parse(&body)?;
    let student_id = StudentId::parse(&req.student_id)?;
    let view = app.create(student_id)?;
    app.maybe_snapshot();
    tracing::info!(session = %view.session_id, student = %view.student_id, "session created");
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_stack(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StackView>> {
    Ok(Json(
        app.read(&SessionId::new(id), |slot, _| StackView::from(&slot.session))?,
    ))
}

async fn post_gesture(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<GestureResponse>> {
    let req: GestureRequest = parse(&body)?;
    let response = app.with_session(&SessionId::new(id), |env, session, student| {
        let (resolution, events) = session::gesture(
            env,
            session,
            student,
            &req.card_id,
            req.input,
            req.request_token.clone(),
            &mut SystemClock,
        )?;
        let stack = StackView::from(&*session);
        let item_id = match resolution {
            Resolution::Engaged => stack.top.as_ref().map(|c| c.item_id.clone()),
            _ => None,
        };
        Ok((
            GestureResponse {
                resolution,
                item_id,
                stack,
            },
            events,
        ))
    })?;
    Ok(Json(response))
}

async fn post_answer(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<AnswerResponse>> {
    let req: AnswerRequest = parse(&body)?;
    let config = app.shared.config.clone();
    let response = app.with_session(&SessionId::new(id), |env, session, student| {
        let outcome = AnswerOutcome::new(req.correct, req.elapsed_s)?;
        let events = session::answer(
            env,
            session,
            student,
            &req.card_id,
            outcome,
            req.request_token.clone(),
            &mut SystemClock,
        )?;
        let response = AnswerResponse {
            progress: session.progress(student, &config),
            stack: StackView::from(&*session),
        };
        Ok((response, events))
    })?;
    Ok(Json(response))
}

async fn get_progress(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ProgressSummary>> {
    Ok(Json(app.progress(&SessionId::new(id))?))
}

async fn get_events(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<ChoiceEvent>>> {
    Ok(Json(app.read(&SessionId::new(id), |slot, _| slot.events.clone())?))
}

async fn end_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StackView>> {
    let view = app.with_session(&SessionId::new(id), |_, session, _| {
        let events = session::end_session(session, EndReason::Closed, &mut SystemClock)?;
        Ok((StackView::from(&*session), events))
    })?;
    Ok(Json(view))
}
