//! HTTP JSON API over one dataset directory.
//!
//! Every response carries an `x-daedalus-snapshot` header,
//! `<dataset version>:<label log position>`, naming the state it was
//! computed against. Reads take the label store's read lock for their whole
//! computation; label writes are serialized through the repository mutex
//! and persisted before the response is sent.

mod error;
mod jobs;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::Context;
use axum::body::Body;
use axum::extract::{Path as UrlPath, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use daedalus_core::filter::{
    apply_filters, filter_summaries, FilterSpec, FilterState, FilterSummary,
};
use daedalus_core::labels::{
    AlphabetDef, AlphabetId, LabelAlphabet, LabelId, LabelQuery, LabelStore, MergePolicy, Snapshot,
    Stamp, UNLABELED,
};
use daedalus_core::layout::{
    attribute_layout, bin_numeric_attribute, BinSpec, GridLayout, LayoutConfig,
};
use daedalus_core::model::AttributeDescriptor;
use daedalus_core::projection::validate_request;
use daedalus_core::selection::{
    hit_test, selection_stats, PercentBase, Selection, SelectionGeometry, DEFAULT_STAT_BINS,
};
use daedalus_core::{Dataset, FacetKey};

use crate::coords::CoordFile;
use crate::images::{load_images, thumb_path, ImageStore, ThumbMode, DEFAULT_THUMB_EDGE};
use crate::labelio::{encode_snapshot, now_ms, LabelRepo};
use crate::manifest::load_dataset;

pub use error::{ApiError, ApiJson, ApiQuery, ErrorBody, ErrorDetail};
pub use jobs::{
    AlphabetRef, Job, JobQueue, JobState, JobView, ProjectionRequest, SnapshotRef, DEFAULT_WORKERS,
    PROJECTION_DIR,
};

pub const SNAPSHOT_HEADER: &str = "x-daedalus-snapshot";
const DEFAULT_WHO: &str = "anonymous";

/// Where thumbnail bytes come from.
#[derive(Debug)]
pub enum Thumbs {
    /// `thumbs/<row>.png` and `thumbs/<row>.t.png` under the dataset root.
    Disk(PathBuf),
    Memory(ImageStore),
    None,
}

#[derive(Debug)]
pub struct AppState {
    pub dataset: Arc<Dataset>,
    pub version: String,
    index: HashMap<String, usize>,
    pub labels: RwLock<LabelStore>,
    repo: Mutex<Option<LabelRepo>>,
    pub jobs: Arc<JobQueue>,
    pub thumbs: Thumbs,
    /// Nice bins for every numeric attribute, used when a request has none.
    pub default_bins: BTreeMap<String, BinSpec>,
}

impl AppState {
    /// State over an in-memory dataset; nothing is persisted.
    pub fn new(
        dataset: Dataset,
        labels: LabelStore,
        thumbs: Thumbs,
        workers: usize,
    ) -> anyhow::Result<Self> {
        Self::build(dataset, labels, None, thumbs, workers, None)
    }

    fn build(
        dataset: Dataset,
        labels: LabelStore,
        repo: Option<LabelRepo>,
        thumbs: Thumbs,
        workers: usize,
        root: Option<PathBuf>,
    ) -> anyhow::Result<Self> {
        let mut default_bins = BTreeMap::new();
        for name in dataset.schema.numeric_names() {
            let values = dataset.numeric_column(name)?;
            if !values.is_empty() {
                default_bins.insert(
                    name.to_string(),
                    bin_numeric_attribute(name, &values, DEFAULT_STAT_BINS)?,
                );
            }
        }
        let index = dataset
            .particles
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), i))
            .collect();
        Ok(AppState {
            version: dataset.version(),
            dataset: Arc::new(dataset),
            index,
            labels: RwLock::new(labels),
            repo: Mutex::new(repo),
            jobs: Arc::new(JobQueue::new(workers, root)),
            thumbs,
            default_bins,
        })
    }

    /// Opens a dataset directory: loads and validates the dataset, restores
    /// labels and makes sure thumbnails exist (building them on first use).
    /// Returns the state and warnings.
    pub fn open(root: &Path, workers: usize) -> anyhow::Result<(Self, Vec<String>)> {
        let dataset = load_dataset(root).with_context(|| format!("loading {}", root.display()))?;
        let (repo, labels, mut warnings) = LabelRepo::open(root, dataset.ids())?;
        if !dataset.is_empty() && !thumb_path(root, 0, ThumbMode::Transparent).exists() {
            log::info!("building thumbnails for {} particles", dataset.len());
            let (store, missing) = load_images(&dataset, root, DEFAULT_THUMB_EDGE)?;
            store.save(root)?;
            warnings.extend(missing);
        }
        let state = Self::build(
            dataset,
            labels,
            Some(repo),
            Thumbs::Disk(root.to_path_buf()),
            workers,
            Some(root.to_path_buf()),
        )?;
        Ok((state, warnings))
    }

    fn snapshot(&self, labels: &LabelStore) -> SnapshotRef {
        SnapshotRef {
            dataset: self.version.clone(),
            log: labels.log().len(),
        }
    }

    fn row_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Bins for `key`: explicit edges, a target count, or the defaults.
    fn resolve_bins(
        &self,
        key: &FacetKey,
        edges: Option<Vec<f64>>,
        target: Option<usize>,
    ) -> Result<Option<BinSpec>, ApiError> {
        let FacetKey::Attribute(name) = key else {
            return Ok(None);
        };
        let d = self.dataset.schema.require(name).map_err(|e| {
            ApiError::validation(e.to_string()).with_detail("/attribute", e.to_string())
        })?;
        if !d.kind.is_numeric() {
            return Ok(None);
        }
        match (edges, target) {
            (Some(edges), _) => BinSpec::from_edges(name, edges)
                .map(Some)
                .map_err(|e| ApiError::from_core(e, "")),
            (None, Some(t)) => bin_numeric_attribute(name, &self.dataset.numeric_column(name)?, t)
                .map(Some)
                .map_err(|e| ApiError::from_core(e, "")),
            (None, None) => Ok(self.default_bins.get(name).cloned()),
        }
    }

    fn merged_bins(&self, given: Vec<BinSpec>) -> Vec<BinSpec> {
        let mut all = self.default_bins.clone();
        for b in given {
            all.insert(b.attribute.clone(), b);
        }
        all.into_values().collect()
    }

    /// Runs one serialized label mutation and persists it.
    fn mutate<T>(
        &self,
        who: Option<String>,
        f: impl FnOnce(&mut LabelStore, &Stamp) -> Result<T, ApiError>,
    ) -> Result<(T, SnapshotRef), ApiError> {
        let mut repo = self.repo.lock().unwrap();
        let mut labels = self.labels.write().unwrap();
        let stamp = Stamp::new(who.as_deref().unwrap_or(DEFAULT_WHO), now_ms());
        let out = f(&mut labels, &stamp)?;
        if let Some(repo) = repo.as_mut() {
            repo.sync(&labels)
                .map_err(|e| ApiError::internal(format!("persisting labels: {e}")))?;
        }
        Ok((out, self.snapshot(&labels)))
    }

    /// Writes a final label snapshot; called on shutdown.
    pub fn checkpoint(&self) -> std::io::Result<()> {
        let mut repo = self.repo.lock().unwrap();
        match repo.as_mut() {
            Some(r) => r.write_snapshot(&self.labels.read().unwrap()),
            None => Ok(()),
        }
    }
}

type Shared = Arc<AppState>;
type ApiResult = Result<Response, ApiError>;

fn with_snapshot(mut response: Response, snapshot: &SnapshotRef) -> Response {
    if let Ok(v) = HeaderValue::from_str(&format!("{}:{}", snapshot.dataset, snapshot.log)) {
        response.headers_mut().insert(SNAPSHOT_HEADER, v);
    }
    response
}

fn reply<T: Serialize>(snapshot: &SnapshotRef, body: &T) -> Response {
    with_snapshot(Json(body).into_response(), snapshot)
}

fn binary(snapshot: &SnapshotRef, bytes: Vec<u8>) -> Response {
    let response = ([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response();
    with_snapshot(response, snapshot)
}

/// Runs a computation on the blocking pool.
async fn blocking(
    state: Shared,
    f: impl FnOnce(&AppState) -> ApiResult + Send + 'static,
) -> ApiResult {
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .unwrap_or_else(|e| Err(ApiError::internal(format!("handler panicked: {e}"))))
}

async fn snapshot_header(State(state): State<Shared>, req: Request, next: Next) -> Response {
    let response = next.run(req).await;
    if response.headers().contains_key(SNAPSHOT_HEADER) {
        return response;
    }
    let snapshot = state.snapshot(&state.labels.read().unwrap());
    with_snapshot(response, &snapshot)
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/dataset", get(get_dataset))
        .route("/attributes", get(get_attributes))
        .route("/layout", post(post_layout))
        .route("/projection", post(post_projection))
        .route(
            "/projection/{job}",
            get(get_projection).delete(delete_projection),
        )
        .route("/filters/summary", post(post_filter_summary))
        .route("/selection/stats", post(post_selection_stats))
        .route("/selection/hit", post(post_selection_hit))
        .route("/alphabets", get(get_alphabets).post(post_alphabet))
        .route("/alphabets/{id}/assign", post(post_assign))
        .route("/alphabets/{id}/unassign", post(post_unassign))
        .route(
            "/labels/{alphabet}/{label}/particles",
            get(get_label_particles),
        )
        .route("/thumb/{id}", get(get_thumb))
        .route("/snapshot", get(get_snapshot).post(post_snapshot))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .layer(middleware::from_fn_with_state(
            state.clone(),
            snapshot_header,
        ))
        .with_state(state)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
    log::info!("shutting down");
}

/// Serves until Ctrl-C or SIGTERM, then writes a label checkpoint.
pub async fn serve(state: Shared, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    state.checkpoint()?;
    Ok(())
}

// ---------------------------------------------------------------- dataset

#[derive(Serialize)]
struct DatasetView<'a> {
    version: &'a str,
    rows: usize,
    provenance: daedalus_core::Provenance,
    created_at: i64,
    schema: &'a daedalus_core::AttributeSchema,
    /// Particle ids in row order; coordinate blocks follow this order.
    ids: Vec<&'a str>,
}

async fn get_dataset(State(state): State<Shared>) -> Response {
    let snapshot = state.snapshot(&state.labels.read().unwrap());
    let d = &state.dataset;
    let view = DatasetView {
        version: &state.version,
        rows: d.len(),
        provenance: d.provenance,
        created_at: d.created_at,
        schema: &d.schema,
        ids: d.ids().collect(),
    };
    reply(&snapshot, &view)
}

#[derive(Serialize)]
struct AttributeView<'a> {
    #[serde(flatten)]
    descriptor: &'a AttributeDescriptor,
    #[serde(skip_serializing_if = "Option::is_none")]
    bins: Option<&'a BinSpec>,
}

#[derive(Serialize)]
struct AttributesView<'a> {
    attributes: Vec<AttributeView<'a>>,
    /// Label alphabets, usable wherever an attribute is.
    alphabets: Vec<&'a LabelAlphabet>,
}

async fn get_attributes(State(state): State<Shared>) -> Response {
    let labels = state.labels.read().unwrap();
    let view = AttributesView {
        attributes: state
            .dataset
            .schema
            .descriptors()
            .iter()
            .map(|d| AttributeView {
                descriptor: d,
                bins: state.default_bins.get(&d.name),
            })
            .collect(),
        alphabets: labels.alphabets().collect(),
    };
    reply(&state.snapshot(&labels), &view)
}

// ----------------------------------------------------------------- layout

#[derive(Debug, Clone, Default, Deserialize)]
struct FormatQuery {
    #[serde(default)]
    format: Option<String>,
}

impl FormatQuery {
    fn binary(&self) -> Result<bool, ApiError> {
        match self.format.as_deref() {
            None | Some("json") => Ok(false),
            Some("binary") => Ok(true),
            Some(other) => Err(ApiError::validation(format!("unknown format `{other}`"))
                .with_detail("/format", "expected json or binary")),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct LayoutRequest {
    pub attribute: FacetKey,
    /// Explicit bin edges for a numeric attribute.
    #[serde(default)]
    pub edges: Option<Vec<f64>>,
    /// Target bin count for a numeric attribute.
    #[serde(default)]
    pub target_bins: Option<usize>,
    #[serde(default)]
    pub config: LayoutConfig,
}

#[derive(Serialize)]
struct LayoutView {
    #[serde(flatten)]
    layout: GridLayout,
    #[serde(skip_serializing_if = "Option::is_none")]
    bins: Option<BinSpec>,
}

fn compute_layout(
    state: &AppState,
    labels: &LabelStore,
    req: LayoutRequest,
) -> Result<(GridLayout, Option<BinSpec>), ApiError> {
    let bins = state.resolve_bins(&req.attribute, req.edges, req.target_bins)?;
    let layout = attribute_layout(
        &state.dataset,
        labels,
        &req.attribute,
        bins.as_ref(),
        &req.config,
    )
    .map_err(|e| ApiError::from_request_error(e, "/config"))?;
    Ok((layout, bins))
}

async fn post_layout(
    State(state): State<Shared>,
    ApiQuery(q): ApiQuery<FormatQuery>,
    ApiJson(req): ApiJson<LayoutRequest>,
) -> ApiResult {
    let binary_out = q.binary()?;
    blocking(state, move |state| {
        let labels = state.labels.read().unwrap();
        let snapshot = state.snapshot(&labels);
        let (layout, bins) = compute_layout(state, &labels, req)?;
        if binary_out {
            Ok(binary(
                &snapshot,
                CoordFile::layout(&layout, bins, &state.version).encode(),
            ))
        } else {
            Ok(reply(&snapshot, &LayoutView { layout, bins }))
        }
    })
    .await
}

// ------------------------------------------------------------- projection

fn resolve_alphabet(
    labels: &LabelStore,
    alphabet: &AlphabetRef,
) -> daedalus_core::Result<AlphabetId> {
    match alphabet {
        AlphabetRef::Id(id) => labels.alphabet(*id).map(|a| a.id),
        AlphabetRef::Name(name) => labels.alphabet_by_name(name).map(|a| a.id),
    }
}

async fn post_projection(
    State(state): State<Shared>,
    ApiJson(req): ApiJson<ProjectionRequest>,
) -> ApiResult {
    let labels = state.labels.read().unwrap();
    let alphabet = req
        .alphabet
        .as_ref()
        .map(|a| resolve_alphabet(&labels, a))
        .transpose()
        .map_err(|e| ApiError::from_request_error(e, ""))?;
    validate_request(
        &state.dataset,
        &labels,
        &req.attributes,
        alphabet,
        &req.config,
    )
    .map_err(|e| match e {
        daedalus_core::Error::InvalidConfig {
            field: "attributes",
            ..
        }
        | daedalus_core::Error::EmptySelection => {
            ApiError::validation(e.to_string()).with_detail("/attributes", e.to_string())
        }
        daedalus_core::Error::UnknownAttribute(a) => {
            let message = format!("unknown attribute `{a}`");
            ApiError::validation(message.clone()).with_detail("/attributes", message)
        }
        other => ApiError::from_request_error(other, "/config"),
    })?;
    let snapshot = state.snapshot(&labels);
    let (job, created) = state.jobs.submit(
        state.dataset.clone(),
        &labels,
        req,
        alphabet,
        snapshot.clone(),
    );
    drop(labels);
    let status = if created {
        StatusCode::ACCEPTED
    } else {
        StatusCode::OK
    };
    Ok(with_snapshot(
        (status, Json(job.view())).into_response(),
        &snapshot,
    ))
}

async fn get_projection(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    ApiQuery(q): ApiQuery<FormatQuery>,
) -> ApiResult {
    let job = state
        .jobs
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown job `{id}`")))?;
    if q.binary()? {
        let bytes = job.result_bytes().ok_or_else(|| {
            ApiError::conflict(format!("job `{id}` is {:?}, not done", job.state()).to_lowercase())
        })?;
        return Ok(binary(&job.snapshot, bytes.as_ref().clone()));
    }
    Ok(reply(&job.snapshot, &job.view()))
}

async fn delete_projection(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let view = state
        .jobs
        .cancel(&id)
        .await
        .ok_or_else(|| ApiError::not_found(format!("unknown job `{id}`")))?;
    Ok(reply(&view.snapshot.clone(), &view))
}

// ---------------------------------------------------------------- filters

#[derive(Debug, Clone, Deserialize)]
struct SummaryRequest {
    #[serde(default)]
    filters: Vec<FilterSpec>,
    /// Facets to summarize; every attribute and alphabet when absent.
    #[serde(default)]
    keys: Option<Vec<FacetKey>>,
    /// Bin overrides for numeric attributes.
    #[serde(default)]
    bins: Vec<BinSpec>,
}

#[derive(Serialize)]
struct SummaryView {
    included: usize,
    total: usize,
    summaries: Vec<FilterSummary>,
}

fn filter_state(filters: Vec<FilterSpec>) -> Result<FilterState, ApiError> {
    FilterState::new(filters).map_err(|e| ApiError::from_core(e, "/filters"))
}

async fn post_filter_summary(
    State(state): State<Shared>,
    ApiJson(req): ApiJson<SummaryRequest>,
) -> ApiResult {
    blocking(state, move |state| {
        let labels = state.labels.read().unwrap();
        let snapshot = state.snapshot(&labels);
        let filters = filter_state(req.filters)?;
        let keys = req.keys.unwrap_or_else(|| {
            let mut keys: Vec<FacetKey> = state
                .dataset
                .schema
                .names()
                .map(FacetKey::attribute)
                .collect();
            keys.extend(labels.alphabets().map(|a| FacetKey::Alphabet(a.id)));
            keys
        });
        let bins: BTreeMap<String, BinSpec> = state
            .merged_bins(req.bins)
            .into_iter()
            .map(|b| (b.attribute.clone(), b))
            .collect();
        let keyed: Vec<(FacetKey, Option<&BinSpec>)> = keys
            .into_iter()
            .map(|key| {
                let spec = match &key {
                    FacetKey::Attribute(a) => bins.get(a),
                    FacetKey::Alphabet(_) => None,
                };
                (key, spec)
            })
            .collect();
        let summaries = filter_summaries(&filters, &state.dataset, &labels, &keyed)
            .map_err(|e| ApiError::from_request_error(e, ""))?;
        let included = match summaries.first() {
            Some(s) => s.included,
            None => apply_filters(&filters, &state.dataset, &labels)?
                .iter()
                .filter(|&&m| m)
                .count(),
        };
        Ok(reply(
            &snapshot,
            &SummaryView {
                included,
                total: state.dataset.len(),
                summaries,
            },
        ))
    })
    .await
}

// -------------------------------------------------------------- selection

#[derive(Debug, Clone, Deserialize)]
struct StatsRequest {
    ids: Vec<String>,
    #[serde(default)]
    bins: Vec<BinSpec>,
    #[serde(default)]
    base: PercentBase,
}

async fn post_selection_stats(
    State(state): State<Shared>,
    ApiJson(req): ApiJson<StatsRequest>,
) -> ApiResult {
    blocking(state, move |state| {
        let labels = state.labels.read().unwrap();
        let snapshot = state.snapshot(&labels);
        let selection = Selection {
            ids: req.ids.into_iter().collect(),
            dataset: state.version.clone(),
        };
        let bins = state.merged_bins(req.bins);
        let stats = selection_stats(&selection, &state.dataset, &labels, &bins, req.base)?;
        Ok(reply(&snapshot, &stats))
    })
    .await
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase")]
enum HitSource {
    /// Coordinates of a finished projection job.
    Projection { job: String },
    /// Coordinates of an attribute layout.
    Layout(LayoutRequest),
}

#[derive(Debug, Clone, Deserialize)]
struct HitRequest {
    geometry: SelectionGeometry,
    source: HitSource,
    /// Only particles passing these filters can be hit.
    #[serde(default)]
    filters: Vec<FilterSpec>,
}

#[derive(Serialize)]
struct IdsView {
    count: usize,
    ids: Vec<String>,
}

async fn post_selection_hit(
    State(state): State<Shared>,
    ApiJson(req): ApiJson<HitRequest>,
) -> ApiResult {
    blocking(state, move |state| {
        let labels = state.labels.read().unwrap();
        let snapshot = state.snapshot(&labels);
        let coordinates: Vec<[f64; 2]> = match req.source {
            HitSource::Projection { job } => {
                let job = state.jobs.get(&job).ok_or_else(|| {
                    ApiError::validation(format!("unknown job `{job}`"))
                        .with_detail("/source/projection/job", "unknown job")
                })?;
                let file = job
                    .result()
                    .ok_or_else(|| ApiError::conflict(format!("job `{}` has no result", job.id)))?;
                file.coordinates
                    .iter()
                    .map(|p| [f64::from(p[0]), f64::from(p[1])])
                    .collect()
            }
            HitSource::Layout(layout) => compute_layout(state, &labels, layout)?.0.coordinates(),
        };
        let visible = if req.filters.is_empty() {
            None
        } else {
            Some(apply_filters(
                &filter_state(req.filters)?,
                &state.dataset,
                &labels,
            )?)
        };
        let rows = hit_test(&req.geometry, &coordinates, visible.as_deref())?;
        let ids: Vec<String> = rows
            .iter()
            .map(|&r| state.dataset.particles[r].id.clone())
            .collect();
        Ok(reply(
            &snapshot,
            &IdsView {
                count: ids.len(),
                ids,
            },
        ))
    })
    .await
}

// -------------------------------------------------------------- alphabets

#[derive(Serialize)]
struct AlphabetView<'a> {
    #[serde(flatten)]
    alphabet: &'a LabelAlphabet,
    /// Assignment count per label id.
    counts: BTreeMap<LabelId, usize>,
    unlabeled: usize,
}

#[derive(Serialize)]
struct AlphabetsView<'a> {
    alphabets: Vec<AlphabetView<'a>>,
}

async fn get_alphabets(State(state): State<Shared>) -> Response {
    let labels = state.labels.read().unwrap();
    let alphabets = labels
        .alphabets()
        .map(|a| {
            let mut counts: BTreeMap<LabelId, usize> = a.labels.iter().map(|l| (l.id, 0)).collect();
            for (_, l) in labels.assignments().of(a.id) {
                *counts.entry(l).or_default() += 1;
            }
            let assigned: usize = counts.values().sum();
            AlphabetView {
                alphabet: a,
                counts,
                unlabeled: state.dataset.len() - assigned,
            }
        })
        .collect();
    reply(&state.snapshot(&labels), &AlphabetsView { alphabets })
}

#[derive(Debug, Clone, Deserialize)]
struct UpsertRequest {
    #[serde(flatten)]
    def: AlphabetDef,
    #[serde(default)]
    force: bool,
    #[serde(default)]
    who: Option<String>,
}

async fn post_alphabet(
    State(state): State<Shared>,
    ApiJson(req): ApiJson<UpsertRequest>,
) -> ApiResult {
    let created = req.def.id.is_none();
    blocking(state, move |state| {
        let (alphabet, snapshot) = state.mutate(req.who, |labels, stamp| {
            Ok(labels.upsert_alphabet(req.def, req.force, stamp)?)
        })?;
        let status = if created {
            StatusCode::CREATED
        } else {
            StatusCode::OK
        };
        Ok(with_snapshot(
            (status, Json(alphabet)).into_response(),
            &snapshot,
        ))
    })
    .await
}

/// A path segment naming an alphabet by id or name.
fn alphabet_from_path(labels: &LabelStore, segment: &str) -> Result<AlphabetId, ApiError> {
    resolve_alphabet_segment(labels, segment).map_err(ApiError::from)
}

/// A label given by id or by name.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum LabelRef {
    Id(LabelId),
    Name(String),
}

fn resolve_label(
    labels: &LabelStore,
    alphabet: AlphabetId,
    label: &LabelRef,
) -> daedalus_core::Result<LabelId> {
    let a = labels.alphabet(alphabet)?;
    let found = match label {
        LabelRef::Id(id) => a.label(*id),
        LabelRef::Name(name) => a.label_by_name(name),
    };
    found
        .map(|l| l.id)
        .ok_or_else(|| daedalus_core::Error::UnknownLabel {
            alphabet,
            label: match label {
                LabelRef::Id(id) => id.to_string(),
                LabelRef::Name(n) => n.clone(),
            },
        })
}

#[derive(Debug, Clone, Deserialize)]
struct AssignRequest {
    particles: Vec<String>,
    label: LabelRef,
    #[serde(default)]
    who: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct UnassignRequest {
    particles: Vec<String>,
    #[serde(default)]
    who: Option<String>,
}

#[derive(Serialize)]
struct ChangeView {
    changed: usize,
    log: usize,
}

async fn post_assign(
    State(state): State<Shared>,
    UrlPath(segment): UrlPath<String>,
    ApiJson(req): ApiJson<AssignRequest>,
) -> ApiResult {
    blocking(state, move |state| {
        let (changed, snapshot) = state.mutate(req.who, |labels, stamp| {
            let alphabet = resolve_alphabet_segment(labels, &segment)?;
            // an unknown label in the body is a bad request, not a missing resource
            let label = resolve_label(labels, alphabet, &req.label).map_err(|e| {
                ApiError::validation(e.to_string()).with_detail("/label", e.to_string())
            })?;
            Ok(labels.assign(&req.particles, alphabet, label, stamp)?)
        })?;
        Ok(reply(
            &snapshot,
            &ChangeView {
                changed,
                log: snapshot.log,
            },
        ))
    })
    .await
}

async fn post_unassign(
    State(state): State<Shared>,
    UrlPath(segment): UrlPath<String>,
    ApiJson(req): ApiJson<UnassignRequest>,
) -> ApiResult {
    blocking(state, move |state| {
        let (changed, snapshot) = state.mutate(req.who, |labels, stamp| {
            let alphabet = resolve_alphabet_segment(labels, &segment)?;
            Ok(labels.unassign(&req.particles, alphabet, stamp)?)
        })?;
        Ok(reply(
            &snapshot,
            &ChangeView {
                changed,
                log: snapshot.log,
            },
        ))
    })
    .await
}

fn resolve_alphabet_segment(
    labels: &LabelStore,
    segment: &str,
) -> daedalus_core::Result<AlphabetId> {
    match segment.parse::<u64>() {
        Ok(id) => labels.alphabet(AlphabetId(id)).map(|a| a.id),
        Err(_) => labels.alphabet_by_name(segment).map(|a| a.id),
    }
}

async fn get_label_particles(
    State(state): State<Shared>,
    UrlPath((alphabet, label)): UrlPath<(String, String)>,
) -> ApiResult {
    let labels = state.labels.read().unwrap();
    let alphabet = alphabet_from_path(&labels, &alphabet)?;
    let query = if label == UNLABELED {
        LabelQuery::Unlabeled
    } else {
        let r = match label.parse::<u64>() {
            Ok(id) => LabelRef::Id(LabelId(id)),
            Err(_) => LabelRef::Name(label),
        };
        LabelQuery::Label(resolve_label(&labels, alphabet, &r)?)
    };
    let ids: Vec<String> = labels
        .query_by_label(alphabet, query)?
        .into_iter()
        .collect();
    Ok(reply(
        &state.snapshot(&labels),
        &IdsView {
            count: ids.len(),
            ids,
        },
    ))
}

// ------------------------------------------------------------- thumbnails

#[derive(Debug, Clone, Default, Deserialize)]
struct ThumbQuery {
    #[serde(default)]
    mode: ThumbMode,
}

/// Strong validator: quoted hex SHA-256 of the bytes.
pub fn etag(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("\"{hex}\"")
}

async fn get_thumb(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    ApiQuery(q): ApiQuery<ThumbQuery>,
    headers: HeaderMap,
) -> ApiResult {
    let row = state
        .row_of(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown particle `{id}`")))?;
    let bytes = match &state.thumbs {
        Thumbs::Disk(root) => {
            let path = thumb_path(root, row, q.mode);
            tokio::fs::read(&path)
                .await
                .map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?
        }
        Thumbs::Memory(store) => store
            .get(&id)
            .map(|e| e.thumbnail.bytes(q.mode).to_vec())
            .ok_or_else(|| ApiError::not_found(format!("no thumbnail for `{id}`")))?,
        Thumbs::None => return Err(ApiError::not_found("this dataset has no thumbnails")),
    };
    let tag = etag(&bytes);
    let matches = headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == tag || t.trim() == "*"));
    let common = [
        (header::ETAG, tag),
        (header::CACHE_CONTROL, "public, max-age=86400".to_string()),
    ];
    if matches {
        return Ok((StatusCode::NOT_MODIFIED, common).into_response());
    }
    Ok((
        common,
        [(header::CONTENT_TYPE, "image/png")],
        Body::from(bytes),
    )
        .into_response())
}

// --------------------------------------------------------------- snapshot

async fn get_snapshot(State(state): State<Shared>) -> Response {
    let labels = state.labels.read().unwrap();
    let bytes = encode_snapshot(&labels.export_snapshot());
    let response = ([(header::CONTENT_TYPE, "application/json")], bytes).into_response();
    with_snapshot(response, &state.snapshot(&labels))
}

#[derive(Debug, Clone, Deserialize)]
struct ImportQuery {
    #[serde(default = "default_policy")]
    policy: MergePolicy,
    #[serde(default)]
    who: Option<String>,
}

fn default_policy() -> MergePolicy {
    MergePolicy::Reject
}

#[derive(Serialize)]
struct ImportView {
    alphabets: usize,
    assignments: usize,
    log: usize,
}

async fn post_snapshot(
    State(state): State<Shared>,
    ApiQuery(q): ApiQuery<ImportQuery>,
    ApiJson(doc): ApiJson<Snapshot>,
) -> ApiResult {
    blocking(state, move |state| {
        let (view, snapshot) = state.mutate(q.who, |labels, stamp| {
            labels.import_snapshot(&doc, q.policy, stamp)?;
            Ok(ImportView {
                alphabets: labels.alphabets().count(),
                assignments: labels.assignments().len(),
                log: labels.log().len(),
            })
        })?;
        Ok(reply(&snapshot, &view))
    })
    .await
}
