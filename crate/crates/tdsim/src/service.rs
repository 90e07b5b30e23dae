//! Local HTTP service for the browser UI.
//!
//! Simulations run concurrently on the blocking pool. Fits go through a
//! single worker, so at most one runs at a time and later requests wait in
//! FIFO order.

use std::collections::HashMap;
use std::convert::Infallible;
use std::ops::ControlFlow;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use tdsim_core::domain::TrapSpec;
use tdsim_core::fit::{run_pso, BoundsMode, ExperimentalSpectrum, FitProblem, FitResult};
use tdsim_core::io::parse_experiment;
use tdsim_core::project::Project;
use tdsim_core::pso::{IterationRecord, PsoOptions, Termination};
use tdsim_core::result::ModelKind;
use tdsim_core::spectrum::{desorption_rate, mass_balance_residual, DesorptionSpectrum};
use tdsim_core::Error;
use tokio::sync::{broadcast, mpsc};

use crate::is_solver_failure;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(id: u64) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no fit job {id}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = if is_solver_failure(&e) {
            StatusCode::INTERNAL_SERVER_ERROR
        } else {
            StatusCode::UNPROCESSABLE_ENTITY
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
    Cancelled,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed | JobStatus::Cancelled)
    }
}

/// One iteration of a running fit, with the best candidate decoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    #[serde(flatten)]
    pub record: IterationRecord,
    pub best_traps: Vec<TrapSpec>,
}

#[derive(Debug, Clone)]
enum JobEvent {
    Progress(Progress),
    Finished(JobStatus),
}

#[derive(Debug)]
struct JobData {
    status: JobStatus,
    trace: Vec<Progress>,
    result: Option<FitResult>,
    error: Option<String>,
}

#[derive(Debug)]
struct Job {
    id: u64,
    problem: FitProblem,
    options: PsoOptions,
    cancel: AtomicBool,
    data: Mutex<JobData>,
    events: broadcast::Sender<JobEvent>,
}

impl Job {
    fn data(&self) -> MutexGuard<'_, JobData> {
        self.data.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn finish(&self, status: JobStatus) {
        self.data().status = status;
        let _ = self.events.send(JobEvent::Finished(status));
    }
}

pub struct AppState {
    jobs: Mutex<HashMap<u64, Arc<Job>>>,
    next_id: AtomicU64,
    queue: mpsc::UnboundedSender<Arc<Job>>,
}

impl AppState {
    /// Creates the state and spawns the fit worker; needs a Tokio runtime.
    pub fn start() -> Arc<Self> {
        let (tx, mut rx) = mpsc::unbounded_channel::<Arc<Job>>();
        tokio::spawn(async move {
            while let Some(job) = rx.recv().await {
                if job.cancel.load(Ordering::SeqCst) {
                    continue;
                }
                let worker = Arc::clone(&job);
                if let Err(e) = tokio::task::spawn_blocking(move || run_job(&worker)).await {
                    job.data().error = Some(format!("fit worker panicked: {e}"));
                    job.finish(JobStatus::Failed);
                }
            }
        });
        Arc::new(AppState {
            jobs: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            queue: tx,
        })
    }

    fn jobs(&self) -> MutexGuard<'_, HashMap<u64, Arc<Job>>> {
        self.jobs.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn job(&self, id: u64) -> Result<Arc<Job>, ApiError> {
        self.jobs().get(&id).cloned().ok_or_else(|| ApiError::not_found(id))
    }
}

fn run_job(job: &Job) {
    job.data().status = JobStatus::Running;
    let outcome = run_pso(&job.problem, &job.options, |record| {
        let best_traps = job.problem.decode(&record.best_position).unwrap_or_default();
        let progress = Progress {
            record: record.clone(),
            best_traps,
        };
        job.data().trace.push(progress.clone());
        let _ = job.events.send(JobEvent::Progress(progress));
        if job.cancel.load(Ordering::SeqCst) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    let status = match outcome {
        Ok(result) => {
            let status = if result.termination == Termination::Cancelled {
                JobStatus::Cancelled
            } else {
                JobStatus::Done
            };
            job.data().result = Some(result);
            status
        }
        Err(e) => {
            job.data().error = Some(e.to_string());
            JobStatus::Failed
        }
    };
    job.finish(status);
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/simulate", post(simulate))
        .route("/fit", post(submit_fit))
        .route("/fit/:id", get(fit_status).delete(cancel_fit))
        .route("/fit/:id/events", get(fit_events))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulatedSpectrum {
    pub model: ModelKind,
    pub spectrum: DesorptionSpectrum,
    /// Absent for the lattice model and for runs without hydrogen.
    pub mass_balance_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub spectra: Vec<SimulatedSpectrum>,
}

async fn simulate(Json(project): Json<Project>) -> Result<Json<SimulateResponse>, ApiError> {
    project.validate()?;
    if project.models.is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no model selected"));
    }
    let tasks: Vec<_> = project
        .models
        .iter()
        .map(|&model| {
            let forward = project.forward(model);
            tokio::task::spawn_blocking(move || -> Result<SimulatedSpectrum, Error> {
                if model == ModelKind::Lattice {
                    return Ok(SimulatedSpectrum {
                        model,
                        spectrum: forward.spectrum()?,
                        mass_balance_residual: None,
                    });
                }
                let fields = forward.fields()?;
                Ok(SimulatedSpectrum {
                    model,
                    spectrum: desorption_rate(&fields)?,
                    mass_balance_residual: mass_balance_residual(&fields).ok(),
                })
            })
        })
        .collect();
    let mut spectra = Vec::with_capacity(tasks.len());
    for task in tasks {
        let done = task
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        spectra.push(done?);
    }
    Ok(Json(SimulateResponse { spectra }))
}

/// Raw two-column file contents, parsed like the CLI's `--data`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawData {
    pub text: String,
    #[serde(default = "default_column")]
    pub column: String,
    #[serde(default = "default_units")]
    pub units: String,
}

fn default_column() -> String {
    "deltaC".into()
}

fn default_units() -> String {
    "K,mol/(m3*s)".into()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Forward model; the project's first numerical model otherwise.
    pub model: Option<ModelKind>,
    pub bounds: Option<BoundsMode>,
    pub update_initial_concentration: bool,
    pub seed: Option<u64>,
    pub max_iterations: Option<usize>,
    pub population: Option<usize>,
    pub tolerance: Option<f64>,
    pub stall_window: Option<usize>,
}

/// The measurement comes from `experiment`, else `data`, else the
/// spectrum embedded in the project.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRequest {
    pub project: Project,
    #[serde(default)]
    pub experiment: Option<ExperimentalSpectrum>,
    #[serde(default)]
    pub data: Option<RawData>,
    #[serde(default)]
    pub options: FitOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobView {
    pub id: u64,
    pub status: JobStatus,
    pub trace: Vec<Progress>,
    pub result: Option<FitResult>,
    pub error: Option<String>,
}

fn build_problem(req: FitRequest) -> Result<(FitProblem, PsoOptions), Error> {
    let FitRequest {
        project,
        experiment,
        data,
        options,
    } = req;
    project.validate()?;
    let experiment = match (experiment, data, &project.experiment) {
        (Some(e), _, _) => {
            e.validate()?;
            e
        }
        (None, Some(raw), _) => parse_experiment(
            &raw.text,
            raw.column.parse()?,
            raw.units.parse()?,
            &project.material,
            &project.protocol,
        )?,
        (None, None, Some(e)) => e.clone(),
        (None, None, None) => {
            return Err(Error::InvalidParameter("no experimental spectrum supplied".into()));
        }
    };
    let model = options
        .model
        .or_else(|| project.models.iter().copied().find(|m| *m != ModelKind::Lattice))
        .unwrap_or(ModelKind::Oriani);
    let problem = FitProblem {
        base: project.forward(model),
        experiment,
        bounds_mode: options.bounds.unwrap_or(BoundsMode::Global),
        update_initial_concentration: options.update_initial_concentration,
    };
    problem.validate()?;
    let defaults = PsoOptions::default();
    let pso = PsoOptions {
        max_iterations: options.max_iterations.unwrap_or(defaults.max_iterations),
        population: options.population.unwrap_or(defaults.population),
        tolerance: options.tolerance.unwrap_or(defaults.tolerance),
        stall_window: options.stall_window.unwrap_or(defaults.stall_window),
        seed: options.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    pso.validate()?;
    Ok((problem, pso))
}

async fn submit_fit(
    State(state): State<Arc<AppState>>,
    Json(req): Json<FitRequest>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let (problem, options) = build_problem(req)?;
    let id = state.next_id.fetch_add(1, Ordering::SeqCst);
    let (events, _) = broadcast::channel(256);
    let job = Arc::new(Job {
        id,
        problem,
        options,
        cancel: AtomicBool::new(false),
        data: Mutex::new(JobData {
            status: JobStatus::Queued,
            trace: Vec::new(),
            result: None,
            error: None,
        }),
        events,
    });
    state.jobs().insert(id, Arc::clone(&job));
    state
        .queue
        .send(job)
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "fit worker is not running"))?;
    Ok((
        StatusCode::ACCEPTED,
        Json(serde_json::json!({ "id": id, "status": JobStatus::Queued })),
    ))
}

fn view(job: &Job) -> JobView {
    let d = job.data();
    JobView {
        id: job.id,
        status: d.status,
        trace: d.trace.clone(),
        result: d.result.clone(),
        error: d.error.clone(),
    }
}

async fn fit_status(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Json<JobView>, ApiError> {
    let job = state.job(id)?;
    Ok(Json(view(&job)))
}

async fn cancel_fit(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Json<JobView>, ApiError> {
    let job = state.job(id)?;
    job.cancel.store(true, Ordering::SeqCst);
    let queued = job.data().status == JobStatus::Queued;
    if queued {
        job.finish(JobStatus::Cancelled);
    }
    Ok(Json(view(&job)))
}

fn progress_event(p: &Progress) -> Event {
    Event::default()
        .event("progress")
        .json_data(p)
        .unwrap_or_else(|_| Event::default().event("progress"))
}

fn status_event(status: JobStatus) -> Event {
    Event::default()
        .event("status")
        .json_data(serde_json::json!({ "status": status }))
        .unwrap_or_else(|_| Event::default().event("status"))
}

/// Replays the iterations so far, then streams live ones. The stream ends
/// with a `status` event once the job is finished.
async fn fit_events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<u64>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let job = state.job(id)?;
    let rx = job.events.subscribe();
    let (mut replay, last, status) = {
        let d = job.data();
        let replay: Vec<Event> = d.trace.iter().map(progress_event).collect();
        (replay, d.trace.last().map(|p| p.record.iteration), d.status)
    };
    let finished = status.is_terminal();
    if finished {
        replay.push(status_event(status));
    }
    let live = stream::unfold((rx, finished), move |(mut rx, finished)| async move {
        if finished {
            return None;
        }
        loop {
            match rx.recv().await {
                Ok(JobEvent::Progress(p)) => {
                    if last.is_some_and(|l| p.record.iteration <= l) {
                        continue;
                    }
                    return Some((progress_event(&p), (rx, false)));
                }
                Ok(JobEvent::Finished(s)) => return Some((status_event(s), (rx, true))),
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    let events = stream::iter(replay).chain(live).map(Ok);
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}
