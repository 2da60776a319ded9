//! HTTP API under `/api/v1`.
//!
//! Handlers are thin: request bodies are parsed here, the work runs on the
//! blocking pool through [`AppState`] methods that tests call directly.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query as UrlQuery, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clipquery_core::automata::CompileError;
use clipquery_core::highway::{render_frame, Frame, HighwayState};
use clipquery_core::search::{Interval, SearchError, SearchStats};
use clipquery_core::{Dfa, Formula, Query, QueryAutomata, QueryError, Vocabulary};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::generator::GenerateSpec;
use crate::store::{self, Stored};

pub const DEFAULT_PAGE_SIZE: usize = 4;

#[derive(Debug, Clone)]
pub struct Config {
    pub data_dir: PathBuf,
    pub page_cap: usize,
}

/// Error envelope `{code, message, detail}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    fn with(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    fn bad(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, code, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"code": self.code, "message": self.message, "detail": self.detail});
        (self.status, Json(body)).into_response()
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        match &e {
            QueryError::UnknownPredicate(p) => {
                ApiError::bad("unknown_predicate", e.to_string()).with(json!({"predicate": p}))
            }
            QueryError::UnknownField(f) => ApiError::bad("unknown_field", e.to_string()).with(json!({"field": f})),
            _ => ApiError::bad("invalid_query", e.to_string()),
        }
    }
}

impl From<CompileError> for ApiError {
    fn from(e: CompileError) -> Self {
        ApiError::bad("compile_limit", e.to_string())
    }
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad("invalid_body", e.to_string()).with(json!({"line": e.line(), "column": e.column()})))
}

fn parse_ltlf(text: &str) -> Result<Formula, ApiError> {
    Formula::parse(text)
        .map_err(|e| ApiError::bad("parse_error", e.to_string()).with(json!({"offset": e.offset(), "input": text})))
}

fn check_atoms(f: &Formula, vocab: &Vocabulary) -> Result<(), ApiError> {
    match f.atoms().into_iter().find(|a| vocab.index_of(a).is_none()) {
        Some(a) => {
            Err(ApiError::bad("unknown_predicate", format!("unknown predicate `{a}`")).with(json!({"predicate": a})))
        }
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Wire types

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryOptions {
    pub page_size: Option<usize>,
    /// Visit episodes in an order shuffled by this seed.
    pub seed: Option<u64>,
    pub min_len: Option<usize>,
    pub pad: Option<usize>,
    /// Include frame documents in clip descriptors (default true).
    pub frames: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<Query>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ltlf: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cursor: Option<String>,
    #[serde(default)]
    pub options: QueryOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipDescriptor {
    pub episode: u64,
    pub start: usize,
    pub end: usize,
    pub window_start: usize,
    pub window_end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_step: Option<usize>,
    /// Route serving this clip's frames.
    pub href: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCounts {
    pub phi: usize,
    pub eventually: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub dataset: String,
    pub canonical: String,
    pub states: StateCounts,
    pub clips: Vec<ClipDescriptor>,
    pub next_cursor: Option<String>,
    /// True when `next_cursor` leads to at least one more clip.
    pub more: bool,
    pub letter_reads: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompileRequest {
    pub formula: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileResponse {
    pub canonical: String,
    pub states: usize,
    pub states_unminimized: usize,
    pub initial: usize,
    pub accepting: Vec<usize>,
    pub support: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub id: String,
    pub episodes: usize,
    pub total_steps: usize,
    pub content_hash: String,
    pub vocabulary_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GenerateSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub id: String,
    pub created: bool,
    #[serde(flatten)]
    pub summary: DatasetSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateInfo {
    pub name: String,
    pub description: String,
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupInfo {
    pub name: String,
    pub exclusive: bool,
    pub description: String,
    pub predicates: Vec<PredicateInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicatesResponse {
    pub version: u32,
    pub hash: String,
    pub groups: Vec<GroupInfo>,
}

impl PredicatesResponse {
    pub fn of(v: &Vocabulary) -> Self {
        let groups = v
            .groups()
            .iter()
            .map(|g| GroupInfo {
                name: g.name.clone(),
                exclusive: g.exclusive,
                description: g.description.clone(),
                predicates: v
                    .members(&g.name)
                    .map(|p| PredicateInfo {
                        name: p.name.clone(),
                        description: p.description.clone(),
                        params: p.params.iter().cloned().collect(),
                    })
                    .collect(),
            })
            .collect();
        PredicatesResponse {
            version: v.version,
            hash: store::vocabulary_hash(v),
            groups,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipFrames {
    pub dataset: String,
    pub episode: u64,
    pub start: usize,
    pub end: usize,
    pub frames: Vec<Frame>,
    #[serde(rename = "abstract")]
    pub abstract_states: Vec<Vec<String>>,
}

// ---------------------------------------------------------------------------
// State

type Loaded = Arc<Stored<HighwayState>>;

pub struct AppState {
    config: Config,
    datasets: RwLock<BTreeMap<String, Loaded>>,
    automata: RwLock<HashMap<(String, String), Arc<QueryAutomata>>>,
    flights: tokio::sync::Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

fn format_cursor(episode_index: usize, position: usize) -> String {
    format!("{episode_index}.{position}")
}

fn parse_cursor(text: &str) -> Result<(usize, usize), ApiError> {
    let bad = || ApiError::bad("bad_cursor", format!("malformed cursor `{text}`"));
    let (e, p) = text.split_once('.').ok_or_else(bad)?;
    let e = e.parse().map_err(|_| bad())?;
    let p: usize = p.parse().map_err(|_| bad())?;
    if p == 0 {
        return Err(bad());
    }
    Ok((e, p))
}

impl AppState {
    /// Opens the data directory and loads every dataset found in it.
    pub fn open(config: Config) -> anyhow::Result<Self> {
        std::fs::create_dir_all(&config.data_dir)?;
        let mut datasets = BTreeMap::new();
        for entry in std::fs::read_dir(&config.data_dir)? {
            let path = entry?.path();
            if !path.join(store::MANIFEST).is_file() {
                continue;
            }
            let id = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            let stored = crate::load_highway(&path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            datasets.insert(id, Arc::new(stored));
        }
        Ok(AppState {
            config,
            datasets: RwLock::new(datasets),
            automata: RwLock::new(HashMap::new()),
            flights: tokio::sync::Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    /// Registers an already loaded dataset under `id`.
    pub fn insert(&self, id: &str, stored: Stored<HighwayState>) {
        self.datasets.write().unwrap().insert(id.to_string(), Arc::new(stored));
    }

    fn dataset(&self, id: &str) -> Result<Loaded, ApiError> {
        self.datasets.read().unwrap().get(id).cloned().ok_or_else(|| {
            ApiError::not_found("unknown_dataset", format!("no dataset `{id}`")).with(json!({"dataset": id}))
        })
    }

    pub fn datasets(&self) -> Vec<DatasetSummary> {
        self.datasets
            .read()
            .unwrap()
            .iter()
            .map(|(id, s)| summary(id, s))
            .collect()
    }

    fn automata(&self, formula: &Formula, vocab: &Vocabulary) -> Result<Arc<QueryAutomata>, ApiError> {
        let key = (store::vocabulary_hash(vocab), formula.to_string());
        if let Some(a) = self.automata.read().unwrap().get(&key) {
            return Ok(a.clone());
        }
        let compiled = QueryAutomata::compile(formula, vocab).map_err(|e| match e {
            SearchError::Compile(c) => ApiError::from(c),
            SearchError::Bind(b) => ApiError::bad("unknown_predicate", b.to_string()),
        })?;
        let compiled = Arc::new(compiled);
        self.automata.write().unwrap().insert(key, compiled.clone());
        Ok(compiled)
    }

    pub fn cached_automata(&self) -> usize {
        self.automata.read().unwrap().len()
    }

    pub fn query(&self, req: &QueryRequest) -> Result<QueryResponse, ApiError> {
        let stored = self.dataset(&req.dataset)?;
        let ds = &stored.dataset;
        let vocab = ds.vocabulary();
        let formula = match (&req.query, &req.ltlf) {
            (Some(_), Some(_)) => return Err(ApiError::bad("invalid_query", "give `query` or `ltlf`, not both")),
            (Some(q), None) => q.compile(vocab)?,
            (None, Some(text)) => {
                let f = parse_ltlf(text)?;
                check_atoms(&f, vocab)?;
                f
            }
            (None, None) => Query::default().compile(vocab)?,
        };
        let qa = self.automata(&formula, vocab)?;
        let opts = &req.options;
        let page_size = opts
            .page_size
            .unwrap_or(DEFAULT_PAGE_SIZE)
            .clamp(1, self.config.page_cap.max(1));
        let min_len = opts.min_len.unwrap_or(2);
        let pad = opts.pad.unwrap_or(5);
        let with_frames = opts.frames.unwrap_or(true);

        let mut order: Vec<usize> = (0..ds.episodes().len()).collect();
        if let Some(seed) = opts.seed {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        let mut cursor = match &req.cursor {
            Some(c) => parse_cursor(c)?,
            None => (0, 1),
        };
        let mut stats = SearchStats::default();
        let mut clips = Vec::new();
        let next_cursor = loop {
            let before = cursor;
            let Some((slot, m)) = next_match(&qa, ds, &order, &mut cursor, min_len, &mut stats) else {
                break None;
            };
            if clips.len() == page_size {
                break Some(format_cursor(before.0, before.1));
            }
            let ep = &ds.episodes()[slot];
            let clip = clipquery_core::Clip::new(
                clipquery_core::Match {
                    episode: ep.id(),
                    start: m.start,
                    end: m.end,
                    formula: qa.canonical().to_string(),
                },
                ep.len(),
                pad,
            );
            clips.push(ClipDescriptor {
                episode: ep.id(),
                start: m.start,
                end: m.end,
                window_start: clip.window_start,
                window_end: clip.window_end,
                trigger_step: ep.meta().trigger_step,
                href: format!(
                    "/api/v1/clips/{}/{}/{}/{}",
                    req.dataset,
                    ep.id(),
                    clip.window_start,
                    clip.window_end
                ),
                frames: if with_frames {
                    clip.frames(ep).iter().map(render_frame).collect()
                } else {
                    Vec::new()
                },
            });
        };
        let (phi, eventually) = qa.state_counts();
        Ok(QueryResponse {
            dataset: req.dataset.clone(),
            canonical: qa.canonical().to_string(),
            states: StateCounts { phi, eventually },
            clips,
            more: next_cursor.is_some(),
            next_cursor,
            letter_reads: stats.letter_reads(),
        })
    }

    pub fn clip(&self, dataset: &str, episode: u64, start: usize, end: usize) -> Result<ClipFrames, ApiError> {
        let stored = self.dataset(dataset)?;
        let ep = stored
            .dataset
            .episode(episode)
            .ok_or_else(|| ApiError::not_found("out_of_range", format!("no episode {episode}")))?;
        if start == 0 || start > end || end > ep.len() {
            return Err(ApiError::not_found(
                "out_of_range",
                format!("interval [{start}, {end}] outside episode of {} steps", ep.len()),
            )
            .with(json!({"steps": ep.len()})));
        }
        let iv = Interval { start, end };
        let vocab = stored.dataset.vocabulary();
        Ok(ClipFrames {
            dataset: dataset.to_string(),
            episode,
            start,
            end,
            frames: iv.slice(ep.concrete()).iter().map(render_frame).collect(),
            abstract_states: iv
                .slice(ep.trace())
                .iter()
                .map(|s| vocab.names_of(*s).into_iter().map(String::from).collect())
                .collect(),
        })
    }

    pub async fn generate(self: &Arc<Self>, spec: GenerateSpec) -> Result<GenerateResponse, ApiError> {
        spec.validate()
            .map_err(|e| ApiError::bad("invalid_config", e.to_string()))?;
        let id = spec.content_id();
        let existing = |s: &Self| s.datasets.read().unwrap().get(&id).map(|d| summary(&id, d));
        if let Some(summary) = existing(self) {
            return Ok(GenerateResponse {
                id,
                created: false,
                summary,
            });
        }
        let flight = self.flights.lock().await.entry(id.clone()).or_default().clone();
        let _guard = flight.lock().await;
        if let Some(summary) = existing(self) {
            return Ok(GenerateResponse {
                id,
                created: false,
                summary,
            });
        }
        let dir = self.config.data_dir.join(&id);
        let job = spec.clone();
        let stored = tokio::task::spawn_blocking(move || -> Result<Stored<HighwayState>, ApiError> {
            let ds = job.run().map_err(|e| ApiError::bad("invalid_config", e.to_string()))?;
            store::save(&ds, &dir, Some(&job)).map_err(|e| ApiError::internal(e.to_string()))
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
        let summary = summary(&id, &stored);
        self.insert(&id, stored);
        self.flights.lock().await.remove(&id);
        Ok(GenerateResponse {
            id,
            created: true,
            summary,
        })
    }

    pub fn predicates(&self, dataset: Option<&str>) -> Result<PredicatesResponse, ApiError> {
        match dataset {
            Some(id) => Ok(PredicatesResponse::of(self.dataset(id)?.dataset.vocabulary())),
            None => Ok(PredicatesResponse::of(&clipquery_core::highway::vocabulary())),
        }
    }
}

pub fn compile(req: &CompileRequest) -> Result<CompileResponse, ApiError> {
    let f = parse_ltlf(&req.formula)?;
    let dfa = Dfa::compile(&f)?;
    let raw = Dfa::compile_with(&f, &clipquery_core::CompileOptions::unminimized())?;
    Ok(CompileResponse {
        canonical: f.to_string(),
        states: dfa.len(),
        states_unminimized: raw.len(),
        initial: dfa.initial(),
        accepting: dfa.accepting().iter().collect(),
        support: dfa.support().to_vec(),
    })
}

fn summary(id: &str, s: &Stored<HighwayState>) -> DatasetSummary {
    DatasetSummary {
        id: id.to_string(),
        episodes: s.dataset.episodes().len(),
        total_steps: s.dataset.total_steps(),
        content_hash: s.manifest.content_hash.clone(),
        vocabulary_hash: s.manifest.vocabulary_hash.clone(),
        generator: s.manifest.generator.clone(),
    }
}

/// Next match at or after `cursor` over episodes visited in `order`; leaves
/// `cursor` just past it. Returns the episode slot and interval.
fn next_match<S>(
    qa: &QueryAutomata,
    ds: &clipquery_core::Dataset<S>,
    order: &[usize],
    cursor: &mut (usize, usize),
    min_len: usize,
    stats: &mut SearchStats,
) -> Option<(usize, Interval)> {
    while let Some(&slot) = order.get(cursor.0) {
        let trace = ds.episodes()[slot].trace();
        match qa.find_next(trace, cursor.1, stats) {
            Some(m) => {
                *cursor = if m.end >= trace.len() {
                    (cursor.0 + 1, 1)
                } else {
                    (cursor.0, m.end + 1)
                };
                if m.len() >= min_len {
                    return Some((slot, m));
                }
            }
            None => *cursor = (cursor.0 + 1, 1),
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Routes

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

#[derive(Deserialize)]
struct PredicatesParams {
    dataset: Option<String>,
}

async fn predicates_route(
    State(app): State<Arc<AppState>>,
    UrlQuery(p): UrlQuery<PredicatesParams>,
) -> Result<Json<PredicatesResponse>, ApiError> {
    app.predicates(p.dataset.as_deref()).map(Json)
}

async fn datasets_route(State(app): State<Arc<AppState>>) -> Json<Vec<DatasetSummary>> {
    Json(app.datasets())
}

async fn generate_route(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Json<GenerateResponse>, ApiError> {
    let spec: GenerateSpec = parse_body(&body)?;
    app.generate(spec).await.map(Json)
}

async fn query_route(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Json<QueryResponse>, ApiError> {
    let req: QueryRequest = parse_body(&body)?;
    blocking(move || app.query(&req)).await.map(Json)
}

async fn clip_route(
    State(app): State<Arc<AppState>>,
    Path((dataset, episode, k, l)): Path<(String, u64, usize, usize)>,
) -> Result<Json<ClipFrames>, ApiError> {
    blocking(move || app.clip(&dataset, episode, k, l)).await.map(Json)
}

async fn compile_route(body: Bytes) -> Result<Json<CompileResponse>, ApiError> {
    let req: CompileRequest = parse_body(&body)?;
    blocking(move || compile(&req)).await.map(Json)
}

async fn fallback() -> ApiError {
    ApiError::not_found("no_route", "no such route")
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/predicates", get(predicates_route))
        .route("/api/v1/datasets", get(datasets_route))
        .route("/api/v1/datasets:generate", post(generate_route))
        .route("/api/v1/queries", post(query_route))
        .route("/api/v1/clips/{dataset}/{episode}/{k}/{l}", get(clip_route))
        .route("/api/v1/ltlf:compile", post(compile_route))
        .fallback(fallback)
        .with_state(app)
}

pub async fn serve(app: Arc<AppState>, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app)).await?;
    Ok(())
}
