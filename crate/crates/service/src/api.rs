//! HTTP routes. Every session write goes through `TutorSession::apply`;
//! every verification write goes through the pipeline.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::{Body, Bytes};
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Extension, Json, Router};
use hypocompass::harness::Executor;
use hypocompass::literal::{Literal, TestInput};
use hypocompass::model::{Exercise, PracticeSuite, TestCase, TestCategory};
use hypocompass::pipeline::{
    finalize, FinalizeOptions, LlmBackend, Pipeline, PipelineConfig, SuiteDraft, TemplateSet, VerifyAction,
};
use hypocompass::selector::SelectorConfig;
use hypocompass::tutor::{
    AgentState, Command, DialogMessage, Phase, PlanEntry, Response as TutorResponse, TutorError, TutorSession,
    DEFAULT_PLAN_EXERCISES,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Tokens;
use crate::error::ApiError;
use crate::store::{Collections, ExerciseRecord, Job, JobStatus, SessionRecord, Store, StoredResponse, SuiteRecord};

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Instructor,
    Student,
}

/// Caller identity attached to each authenticated request.
#[derive(Debug, Clone)]
pub struct Caller {
    pub role: Role,
    /// Position of the token in its role's list, used as a stable name.
    pub name: String,
}

/// Per-key async mutexes serializing writes to one session or suite.
#[derive(Default)]
struct KeyedLocks(Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>);

impl KeyedLocks {
    async fn lock(&self, key: &str) -> tokio::sync::OwnedMutexGuard<()> {
        let lock = {
            let mut map = self.0.lock().unwrap_or_else(|p| p.into_inner());
            map.entry(key.to_string()).or_default().clone()
        };
        lock.lock_owned().await
    }
}

pub struct AppState {
    store: Mutex<Store>,
    exec: Arc<dyn Executor>,
    backend: Arc<dyn LlmBackend>,
    templates: TemplateSet,
    pipeline: PipelineConfig,
    tokens: Tokens,
    clock: Clock,
    locks: KeyedLocks,
}

impl AppState {
    pub fn new(store: Store, exec: Arc<dyn Executor>, backend: Arc<dyn LlmBackend>, pipeline: PipelineConfig, tokens: Tokens) -> Self {
        AppState {
            store: Mutex::new(store),
            exec,
            backend,
            templates: TemplateSet::builtin(),
            pipeline,
            tokens,
            clock: Arc::new(wall_clock_ms),
            locks: KeyedLocks::default(),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    fn store(&self) -> MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Runs `f` against a snapshot of the collections.
    pub fn read<T>(&self, f: impl FnOnce(&Collections) -> T) -> T {
        f(&self.store().data)
    }

    fn caller(&self, headers: &HeaderMap) -> Option<Caller> {
        let token = headers.get("authorization")?.to_str().ok()?.strip_prefix("Bearer ")?.trim();
        let find = |list: &[String]| list.iter().position(|t| t == token);
        if let Some(i) = find(&self.tokens.instructor) {
            return Some(Caller { role: Role::Instructor, name: format!("instructor-{}", i + 1) });
        }
        find(&self.tokens.student).map(|i| Caller { role: Role::Student, name: format!("student-{}", i + 1) })
    }
}

fn wall_clock_ms() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

pub fn router(state: Arc<AppState>) -> Router {
    let instructor = Router::new()
        .route("/exercises", post(create_exercise))
        .route("/exercises/{id}", get(get_exercise))
        .route("/exercises/{id}/generate", post(generate))
        .route("/jobs/{id}", get(get_job))
        .route("/suites", post(import_suite))
        .route("/suites/{id}", get(get_suite))
        .route("/suites/{id}/pending-steps", get(pending_steps))
        .route("/suites/{id}/select", post(select))
        .route("/steps/{id}/verify", post(verify))
        .route_layer(middleware::from_fn_with_state(state.clone(), idempotency))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_instructor));
    let student = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/tests", post(add_test))
        .route("/sessions/{id}/categories", post(create_category))
        .route("/sessions/{id}/queue", post(advance_queue))
        .route("/sessions/{id}/run", post(run_suite))
        .route("/sessions/{id}/hint", post(hint))
        .route("/sessions/{id}/explanation", post(explanation))
        .route("/sessions/{id}/confirm", post(confirm))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/events", get(events))
        .route_layer(middleware::from_fn_with_state(state.clone(), idempotency))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_any_role));
    instructor.merge(student).fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") }).with_state(state)
}

async fn authenticate(state: &AppState, mut req: Request, next: Next, instructor_only: bool) -> Response {
    match state.caller(req.headers()) {
        None => ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or unknown bearer token").into_response(),
        Some(c) if instructor_only && c.role != Role::Instructor => {
            ApiError::new(StatusCode::FORBIDDEN, "forbidden", "this route requires an instructor token").into_response()
        }
        Some(c) => {
            req.extensions_mut().insert(c);
            next.run(req).await
        }
    }
}

async fn require_instructor(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    authenticate(&state, req, next, true).await
}

async fn require_any_role(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    authenticate(&state, req, next, false).await
}

/// A POST carrying an `Idempotency-Key` header is executed once; repeats
/// get the stored status and body back.
async fn idempotency(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let key = req.headers().get("idempotency-key").and_then(|v| v.to_str().ok()).map(str::to_string);
    let (true, Some(key)) = (req.method() == Method::POST, key) else {
        return next.run(req).await;
    };
    let scoped = format!("{} {}", req.uri().path(), key);
    let _guard = state.locks.lock(&format!("idempotency {scoped}")).await;
    if let Some(stored) = state.read(|d| d.idempotency.get(&scoped).cloned()) {
        let status = StatusCode::from_u16(stored.status).unwrap_or(StatusCode::OK);
        let mut response = (status, Json(stored.body)).into_response();
        response.headers_mut().insert("idempotent-replay", HeaderValue::from_static("true"));
        return response;
    }
    let response = next.run(req).await;
    let (parts, body) = response.into_parts();
    let bytes = match axum::body::to_bytes(body, usize::MAX).await {
        Ok(b) => b,
        Err(e) => return ApiError::internal(e.to_string()).into_response(),
    };
    if !parts.status.is_server_error() {
        if let Ok(body) = serde_json::from_slice::<Value>(&bytes) {
            let stored = StoredResponse { status: parts.status.as_u16(), body };
            if let Err(e) = state.store().put_response(&scoped, stored) {
                return ApiError::from(e).into_response();
            }
        }
    }
    Response::from_parts(parts, Body::from(bytes))
}

/// JSON body extractor whose rejections use the service error format. An
/// empty body reads as `{}`.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e| ApiError::bad_request(e.to_string()))?;
        let text: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { &bytes };
        serde_json::from_slice(text).map(ApiJson).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

/// Compares an `If-Match` header, when present, with the current version.
fn check_version(headers: &HeaderMap, current: u64) -> Result<(), ApiError> {
    let Some(value) = headers.get("if-match") else { return Ok(()) };
    let text = value.to_str().unwrap_or_default().trim().trim_matches('"');
    match text.parse::<u64>() {
        Ok(v) if v == current => Ok(()),
        Ok(v) => Err(ApiError::conflict("version_conflict", format!("expected version {v}, current version is {current}"))),
        Err(_) => Err(ApiError::bad_request("If-Match must be a version number")),
    }
}

fn created(body: Value) -> Response {
    (StatusCode::CREATED, Json(body)).into_response()
}

async fn create_exercise(State(state): State<Arc<AppState>>, ApiJson(exercise): ApiJson<Exercise>) -> Result<Response, ApiError> {
    if exercise.description.trim().is_empty() {
        return Err(ApiError::unprocessable("invalid_exercise", "description is empty"));
    }
    let violations = exercise.check();
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(ApiError::unprocessable("invalid_exercise", text.join("; ")));
    }
    let mut store = state.store();
    if store.data.exercises.contains_key(&exercise.id) {
        return Err(ApiError::conflict("exists", format!("exercise {} already exists", exercise.id)));
    }
    let record = ExerciseRecord { version: 1, exercise };
    store.put_exercise(record.clone())?;
    Ok(created(json!(record)))
}

async fn get_exercise(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<ExerciseRecord>, ApiError> {
    state.read(|d| d.exercises.get(&id).cloned()).map(Json).ok_or_else(|| ApiError::not_found("exercise", &id))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenerateBody {
    buggy_count: Option<usize>,
}

async fn generate(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<GenerateBody>,
) -> Result<Response, ApiError> {
    let mut config = state.pipeline.clone();
    if let Some(n) = body.buggy_count {
        if n == 0 {
            return Err(ApiError::unprocessable("invalid_count", "buggy_count must be positive"));
        }
        config.buggy_count = n;
    }
    let (exercise, job) = {
        let mut store = state.store();
        let exercise = store.data.exercises.get(&id).cloned().ok_or_else(|| ApiError::not_found("exercise", &id))?.exercise;
        let suite_id = Collections::next_id(&store.data.suites, "suite");
        let job = Job {
            id: Collections::next_id(&store.data.jobs, "job"),
            exercise_id: id.clone(),
            suite_id: suite_id.clone(),
            status: JobStatus::Queued,
            error: None,
        };
        let placeholder =
            SuiteRecord { id: suite_id, exercise_id: id, version: 1, draft: None, suite: None, clusters: None, notices: Vec::new() };
        store.put_suite(placeholder)?;
        store.put_job(job.clone())?;
        (exercise, job)
    };
    tokio::spawn(run_generation(state.clone(), exercise, config, job.clone()));
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

async fn run_generation(state: Arc<AppState>, exercise: Exercise, config: PipelineConfig, mut job: Job) {
    let _guard = state.locks.lock(&format!("suite {}", job.suite_id)).await;
    job.status = JobStatus::Running;
    if let Err(e) = state.store().put_job(job.clone()) {
        tracing::error!("{e}");
        return;
    }
    let worker = state.clone();
    let result = blocking(move || {
        let pipeline = Pipeline::new(worker.backend.as_ref(), worker.exec.as_ref(), worker.templates.clone());
        pipeline.generate(exercise, config).map_err(|e| e.to_string())
    })
    .await
    .unwrap_or_else(|e| Err(e.message));

    let mut store = state.store();
    match result {
        Ok(draft) => {
            let mut record = store.data.suites.get(&job.suite_id).cloned().expect("placeholder suite stored with the job");
            record.version += 1;
            record.draft = Some(draft);
            job.status = JobStatus::Succeeded;
            if let Err(e) = store.put_suite(record) {
                job.status = JobStatus::Failed;
                job.error = Some(e.to_string());
            }
        }
        Err(message) => {
            job.status = JobStatus::Failed;
            job.error = Some(message);
        }
    }
    if let Err(e) = store.put_job(job) {
        tracing::error!("{e}");
    }
}

async fn get_job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Job>, ApiError> {
    state.read(|d| d.jobs.get(&id).cloned()).map(Json).ok_or_else(|| ApiError::not_found("job", &id))
}

fn suite_status(record: &SuiteRecord) -> &'static str {
    match (&record.suite, &record.draft) {
        (Some(_), _) => "finalized",
        (None, None) => "generating",
        (None, Some(d)) if d.is_fully_verified() => "verified",
        (None, Some(_)) => "verifying",
    }
}

fn suite_body(record: &SuiteRecord) -> Value {
    let mut body = json!(record);
    body["status"] = json!(suite_status(record));
    body["pending_steps"] = json!(record.draft.as_ref().map_or(0, |d| d.pending_steps().count()));
    body
}

fn load_suite(state: &AppState, id: &str) -> Result<SuiteRecord, ApiError> {
    state.read(|d| d.suites.get(id).cloned()).ok_or_else(|| ApiError::not_found("suite", id))
}

async fn get_suite(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    Ok(Json(suite_body(&load_suite(&state, &id)?)))
}

async fn pending_steps(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let record = load_suite(&state, &id)?;
    let steps: Vec<Value> = record
        .draft
        .iter()
        .flat_map(SuiteDraft::pending_steps)
        .map(|s| {
            let mut v = json!(s);
            v["ref"] = json!(format!("{}:{}", record.id, s.id));
            v
        })
        .collect();
    Ok(Json(json!({ "suite_id": record.id, "version": record.version, "steps": steps })))
}

#[derive(Debug, Deserialize)]
struct VerifyBody {
    #[serde(flatten)]
    action: VerifyAction,
    #[serde(default)]
    edit_seconds: Option<f64>,
}

/// `POST /steps/{suite_id}:{step_id}/verify`, then generation of whatever
/// the decision unblocked. A second decision on the same step gets 409.
async fn verify(
    State(state): State<Arc<AppState>>,
    Extension(caller): Extension<Caller>,
    Path(step_ref): Path<String>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<VerifyBody>,
) -> Result<Json<Value>, ApiError> {
    let (suite_id, step_id) =
        step_ref.split_once(':').ok_or_else(|| ApiError::bad_request("step id must have the form <suite_id>:<step_id>"))?;
    let _guard = state.locks.lock(&format!("suite {suite_id}")).await;
    let mut record = load_suite(&state, suite_id)?;
    check_version(&headers, record.version)?;
    if record.suite.is_some() {
        return Err(ApiError::conflict("finalized", format!("suite {suite_id} is already finalized")));
    }
    let draft = record.draft.take().ok_or_else(|| ApiError::conflict("not_ready", format!("suite {suite_id} is still generating")))?;

    let worker = state.clone();
    let step = step_id.to_string();
    let (draft, status, generated) = blocking(move || {
        let pipeline = Pipeline::new(worker.backend.as_ref(), worker.exec.as_ref(), worker.templates.clone());
        let mut draft = draft;
        let status = pipeline.verify_step(&mut draft, &step, body.action, &caller.name, body.edit_seconds)?;
        let generated = pipeline.advance(&mut draft)?;
        Ok::<_, ApiError>((draft, status, generated))
    })
    .await??;

    record.version += 1;
    record.draft = Some(draft);
    state.store().put_suite(record.clone())?;
    let draft = record.draft.as_ref().expect("just stored");
    Ok(Json(json!({
        "suite_id": suite_id,
        "step_id": step_id,
        "version": record.version,
        "status": status,
        "generated": generated,
        "pending_steps": draft.pending_steps().count(),
        "fully_verified": draft.is_fully_verified(),
    })))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct SelectBody {
    #[serde(flatten)]
    selector: SelectorConfig,
    clusters: Option<usize>,
}

async fn select(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<SelectBody>,
) -> Result<Json<Value>, ApiError> {
    let _guard = state.locks.lock(&format!("suite {id}")).await;
    let mut record = load_suite(&state, &id)?;
    check_version(&headers, record.version)?;
    let draft = record.draft.as_ref().ok_or_else(|| ApiError::conflict("not_ready", format!("suite {id} has no draft to select from")))?;
    let pending = draft.pending_steps().count();
    if pending > 0 {
        return Err(ApiError::unprocessable("pending_steps", format!("{pending} steps still await verification")));
    }
    body.selector.validate().map_err(|e| ApiError::unprocessable("selection", e.to_string()))?;
    let mut options = FinalizeOptions { selector: body.selector, ..FinalizeOptions::default() };
    if let Some(k) = body.clusters {
        options.clusters = k;
    }
    let finalized = finalize(draft, &options)?;
    record.version += 1;
    record.suite = Some(finalized.suite);
    record.clusters = finalized.clusters;
    record.notices = finalized.notices;
    state.store().put_suite(record.clone())?;
    Ok(Json(suite_body(&record)))
}

/// Stores an already finalized suite, registering its exercise if needed.
async fn import_suite(State(state): State<Arc<AppState>>, ApiJson(suite): ApiJson<PracticeSuite>) -> Result<Response, ApiError> {
    let violations = suite.violations();
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(ApiError::unprocessable("invalid_suite", text.join("; ")));
    }
    let mut store = state.store();
    let exercise_id = suite.exercise.id.clone();
    match store.data.exercises.get(&exercise_id) {
        Some(existing) if !same_exercise(&existing.exercise, &suite.exercise) => {
            return Err(ApiError::conflict("exercise_mismatch", format!("suite embeds a different exercise {exercise_id}")));
        }
        Some(_) => {}
        None => {
            let mut exercise = suite.exercise.clone();
            exercise.reference_outputs.clear();
            store.put_exercise(ExerciseRecord { version: 1, exercise })?;
        }
    }
    let record = SuiteRecord {
        id: Collections::next_id(&store.data.suites, "suite"),
        exercise_id,
        version: 1,
        draft: None,
        suite: Some(suite),
        clusters: None,
        notices: Vec::new(),
    };
    store.put_suite(record.clone())?;
    Ok(created(suite_body(&record)))
}

fn same_exercise(a: &Exercise, b: &Exercise) -> bool {
    a.description == b.description
        && a.function_name == b.function_name
        && a.reference_solution == b.reference_solution
        && a.reference_inputs == b.reference_inputs
}

/// What a student sees of a session. Bug records, distractor links and
/// reference outputs stay on the server.
#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    pub id: String,
    pub version: u64,
    pub student_id: String,
    pub phase: Phase,
    pub exercise_index: usize,
    pub exercise_count: usize,
    pub exercise: ExerciseView,
    pub categories: Vec<TestCategory>,
    pub user_suite: Vec<TestCase>,
    pub queue: Vec<AgentView>,
    pub active_agent: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExerciseView {
    pub id: String,
    pub description: String,
    pub function_name: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AgentView {
    pub display_name: String,
    pub original_source: String,
    pub current_source: String,
    pub dialog: Vec<DialogMessage>,
    pub options: Vec<OptionView>,
    pub fixed: bool,
    pub resolved: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptionView {
    pub id: String,
    pub text: String,
}

impl SessionView {
    pub fn new(session: &TutorSession, version: u64) -> Self {
        let exercise = &session.suite().exercise;
        let agent = |a: &AgentState| AgentView {
            display_name: a.display_name.clone(),
            original_source: a.original_source.clone(),
            current_source: a.current_source.clone(),
            dialog: a.dialog.clone(),
            options: a.options.iter().map(|o| OptionView { id: o.id.clone(), text: o.text.clone() }).collect(),
            fixed: a.fixed,
            resolved: a.resolved,
        };
        SessionView {
            id: session.id.clone(),
            version,
            student_id: session.student_id.clone(),
            phase: session.phase,
            exercise_index: session.exercise_index,
            exercise_count: session.exercise_plan.len(),
            exercise: ExerciseView {
                id: exercise.id.clone(),
                description: exercise.description.clone(),
                function_name: exercise.function_name.clone(),
            },
            categories: session.categories.clone(),
            user_suite: session.user_suite.clone(),
            queue: session.queue.iter().map(agent).collect(),
            active_agent: session.active().map(|_| session.active_agent),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CreateSession {
    student_id: Option<String>,
    suite_ids: Option<Vec<String>>,
    seed: Option<u64>,
}

/// Opens a session. Without `suite_ids` the plan is the first finalized
/// verified suites in id order.
async fn create_session(
    State(state): State<Arc<AppState>>,
    Extension(caller): Extension<Caller>,
    ApiJson(body): ApiJson<CreateSession>,
) -> Result<Response, ApiError> {
    let now = (state.clock)();
    let mut store = state.store();
    let suites = &store.data.suites;
    let suite_ids: Vec<String> = match body.suite_ids {
        Some(ids) => ids,
        None => suites
            .values()
            .filter(|r| r.suite.as_ref().is_some_and(|s| s.verified))
            .take(DEFAULT_PLAN_EXERCISES)
            .map(|r| r.id.clone())
            .collect(),
    };
    let mut plan = Vec::new();
    for id in &suite_ids {
        let record = suites.get(id).ok_or_else(|| ApiError::not_found("suite", id))?;
        let suite = record.suite.clone().ok_or_else(|| ApiError::from(TutorError::UnverifiedSuite(id.clone())))?;
        plan.push(PlanEntry { suite_id: id.clone(), suite });
    }
    let id = Collections::next_id(&store.data.sessions, "session");
    let seed = body.seed.unwrap_or_else(|| id.trim_start_matches("session-").parse().unwrap_or(0));
    let student = body.student_id.unwrap_or(caller.name);
    let session = TutorSession::start(&id, &student, plan, seed, now)?;
    let record = SessionRecord { version: 1, suite_ids, session };
    store.put_session(&id, record.clone())?;
    Ok(created(json!(SessionView::new(&record.session, record.version))))
}

fn load_session(state: &AppState, id: &str) -> Result<SessionRecord, ApiError> {
    state.read(|d| d.sessions.get(id).cloned()).ok_or_else(|| ApiError::not_found("session", id))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let record = load_session(&state, &id)?;
    Ok(Json(SessionView::new(&record.session, record.version)))
}

/// Applies one engine command under the session's write lock.
async fn session_command(state: Arc<AppState>, id: String, headers: &HeaderMap, command: Command) -> Result<Json<Value>, ApiError> {
    let _guard = state.locks.lock(&format!("session {id}")).await;
    let mut record = load_session(&state, &id)?;
    check_version(headers, record.version)?;
    let now = (state.clock)();
    let worker = state.clone();
    let (session, result) = blocking(move || {
        let mut session = record.session;
        let result = session.apply(worker.exec.as_ref(), command, now);
        (session, result)
    })
    .await?;
    let result: TutorResponse = result?;
    record = SessionRecord { version: record.version + 1, suite_ids: record.suite_ids, session };
    state.store().put_session(&id, record.clone())?;
    Ok(Json(json!({ "result": result, "session": SessionView::new(&record.session, record.version) })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AddTestBody {
    input: TestInput,
    claimed_output: Literal,
    category_id: String,
}

async fn add_test(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<AddTestBody>,
) -> Result<Json<Value>, ApiError> {
    let command = Command::AddTest { input: body.input, claimed_output: body.claimed_output, category_id: body.category_id };
    session_command(state, id, &headers, command).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CategoryBody {
    name: String,
}

async fn create_category(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<CategoryBody>,
) -> Result<Json<Value>, ApiError> {
    session_command(state, id, &headers, Command::CreateCategory { name: body.name }).await
}

/// Moves the office-hour queue forward: starts debugging after suite
/// building, or loads the next exercise once one is done.
async fn advance_queue(State(state): State<Arc<AppState>>, Path(id): Path<String>, headers: HeaderMap) -> Result<Json<Value>, ApiError> {
    let phase = load_session(&state, &id)?.session.phase;
    let command = if phase == Phase::ExerciseDone { Command::NextExercise } else { Command::StartDebugging };
    session_command(state, id, &headers, command).await
}

async fn run_suite(State(state): State<Arc<AppState>>, Path(id): Path<String>, headers: HeaderMap) -> Result<Json<Value>, ApiError> {
    session_command(state, id, &headers, Command::RunSuite).await
}

async fn hint(State(state): State<Arc<AppState>>, Path(id): Path<String>, headers: HeaderMap) -> Result<Json<Value>, ApiError> {
    session_command(state, id, &headers, Command::RequestHint).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplanationBody {
    choice_id: String,
}

async fn explanation(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<ExplanationBody>,
) -> Result<Json<Value>, ApiError> {
    session_command(state, id, &headers, Command::SelectExplanation { choice_id: body.choice_id }).await
}

async fn confirm(State(state): State<Arc<AppState>>, Path(id): Path<String>, headers: HeaderMap) -> Result<Json<Value>, ApiError> {
    session_command(state, id, &headers, Command::ConfirmResolved).await
}

async fn metrics(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    Ok(Json(json!(load_session(&state, &id)?.session.metrics())))
}

async fn events(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    Ok(Json(json!(load_session(&state, &id)?.session.event_log)))
}
