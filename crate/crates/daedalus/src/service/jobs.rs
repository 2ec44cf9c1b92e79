//! Asynchronous projection jobs on a bounded worker pool.
//!
//! A job runs against the dataset and a clone of the label store taken at
//! submission, so later label edits never leak into a running projection.
//! Identical requests against the same label state share one job unless it
//! failed or was cancelled.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::Semaphore;

use daedalus_core::labels::{AlphabetId, LabelStore};
use daedalus_core::projection::{project, ProjectionConfig};
use daedalus_core::{Dataset, Error as CoreError};

use crate::coords::{CoordFile, CoordHeader};
use crate::labelio::now_ms;

pub const DEFAULT_WORKERS: usize = 2;
pub const PROJECTION_DIR: &str = "projections";

/// An alphabet given by id or by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphabetRef {
    Id(AlphabetId),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRequest {
    pub attributes: Vec<String>,
    #[serde(default)]
    pub alphabet: Option<AlphabetRef>,
    #[serde(default)]
    pub config: ProjectionConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            JobState::Done | JobState::Failed | JobState::Cancelled
        )
    }
}

/// Dataset version and label log position a response was computed against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRef {
    pub dataset: String,
    pub log: usize,
}

#[derive(Debug, Default)]
struct Outcome {
    error: Option<String>,
    file: Option<Arc<CoordFile>>,
    bytes: Option<Arc<Vec<u8>>>,
}

#[derive(Debug)]
pub struct Job {
    pub id: String,
    pub request: ProjectionRequest,
    pub alphabet: Option<AlphabetId>,
    pub snapshot: SnapshotRef,
    pub submitted_at: i64,
    state: Mutex<(JobState, Outcome)>,
    epochs_done: AtomicUsize,
    cancel: AtomicBool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub id: String,
    pub state: JobState,
    /// Fraction of epochs completed, in [0, 1]; never decreases.
    pub progress: f64,
    pub request: ProjectionRequest,
    pub snapshot: SnapshotRef,
    pub submitted_at: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Header of the result file once done.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<CoordHeader>,
}

impl Job {
    pub fn state(&self) -> JobState {
        self.state.lock().unwrap().0
    }

    pub fn view(&self) -> JobView {
        let guard = self.state.lock().unwrap();
        let (state, outcome) = &*guard;
        let total = self.request.config.n_epochs.max(1);
        let progress = if *state == JobState::Done {
            1.0
        } else {
            self.epochs_done.load(Ordering::Relaxed).min(total) as f64 / total as f64
        };
        JobView {
            id: self.id.clone(),
            state: *state,
            progress,
            request: self.request.clone(),
            snapshot: self.snapshot.clone(),
            submitted_at: self.submitted_at,
            error: outcome.error.clone(),
            result: outcome.file.as_ref().map(|f| f.header.clone()),
        }
    }

    /// Encoded result file, once done.
    pub fn result_bytes(&self) -> Option<Arc<Vec<u8>>> {
        self.state.lock().unwrap().1.bytes.clone()
    }

    pub fn result(&self) -> Option<Arc<CoordFile>> {
        self.state.lock().unwrap().1.file.clone()
    }

    /// Moves to `next` if that is a legal forward transition.
    fn transition(&self, next: JobState, outcome: Option<Outcome>) -> bool {
        let mut guard = self.state.lock().unwrap();
        let legal = match (guard.0, next) {
            (JobState::Queued, JobState::Running | JobState::Cancelled) => true,
            (JobState::Running, s) => s.is_terminal(),
            _ => false,
        };
        if legal {
            guard.0 = next;
            if let Some(o) = outcome {
                guard.1 = o;
            }
        }
        legal
    }
}

#[derive(Debug)]
pub struct JobQueue {
    jobs: Mutex<BTreeMap<String, Arc<Job>>>,
    by_key: Mutex<HashMap<String, String>>,
    permits: Arc<Semaphore>,
    counter: AtomicU64,
    /// Dataset directory; results are persisted under `projections/`.
    root: Option<PathBuf>,
}

impl JobQueue {
    pub fn new(workers: usize, root: Option<PathBuf>) -> Self {
        JobQueue {
            jobs: Mutex::new(BTreeMap::new()),
            by_key: Mutex::new(HashMap::new()),
            permits: Arc::new(Semaphore::new(workers.max(1))),
            counter: AtomicU64::new(0),
            root,
        }
    }

    pub fn get(&self, id: &str) -> Option<Arc<Job>> {
        self.jobs.lock().unwrap().get(id).cloned()
    }

    /// Enqueues a validated request, or returns the live job for an
    /// identical one. `labels` must be the store the request was validated
    /// against. Must be called within a Tokio runtime.
    pub fn submit(
        self: &Arc<Self>,
        dataset: Arc<Dataset>,
        labels: &LabelStore,
        request: ProjectionRequest,
        alphabet: Option<AlphabetId>,
        snapshot: SnapshotRef,
    ) -> (Arc<Job>, bool) {
        // the label state matters only for supervised projections
        let log_key = alphabet.map(|_| snapshot.log);
        let key = serde_json::to_string(&(
            &request.attributes,
            alphabet,
            &request.config,
            &snapshot.dataset,
            log_key,
        ))
        .expect("request serializes");
        let mut by_key = self.by_key.lock().unwrap();
        if let Some(existing) = by_key.get(&key).and_then(|id| self.get(id)) {
            if !matches!(existing.state(), JobState::Failed | JobState::Cancelled) {
                return (existing, false);
            }
        }
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let submitted_at = now_ms();
        let digest = Sha256::digest(format!("{key}|{submitted_at}|{n}").as_bytes());
        let id: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        let job = Arc::new(Job {
            id: id.clone(),
            request,
            alphabet,
            snapshot,
            submitted_at,
            state: Mutex::new((JobState::Queued, Outcome::default())),
            epochs_done: AtomicUsize::new(0),
            cancel: AtomicBool::new(false),
        });
        by_key.insert(key, id.clone());
        self.jobs.lock().unwrap().insert(id, job.clone());
        drop(by_key);

        let labels = match alphabet {
            Some(_) => labels.clone(),
            None => LabelStore::new(Vec::<String>::new()),
        };
        tokio::spawn(self.clone().run(job.clone(), dataset, labels));
        (job, true)
    }

    async fn run(self: Arc<Self>, job: Arc<Job>, dataset: Arc<Dataset>, labels: LabelStore) {
        let Ok(_permit) = self.permits.clone().acquire_owned().await else {
            return;
        };
        if job.cancel.load(Ordering::Relaxed) || !job.transition(JobState::Running, None) {
            return;
        }
        log::info!("projection {} started", job.id);
        let worker = job.clone();
        let root = self.root.clone();
        let finished = tokio::task::spawn_blocking(move || {
            let job = worker;
            let mut progress = |epoch: usize, _total: usize| {
                job.epochs_done.fetch_max(epoch, Ordering::Relaxed);
                !job.cancel.load(Ordering::Relaxed)
            };
            let config = &job.request.config;
            let result = project(
                &dataset,
                &labels,
                &job.request.attributes,
                job.alphabet,
                config,
                None,
                &mut progress,
            )?;
            let result = daedalus_core::projection::ProjectionResult {
                computed_at: Some(now_ms()),
                ..result
            };
            let file = CoordFile::projection(result, &job.snapshot.dataset);
            let bytes = file.encode();
            if let Some(root) = root {
                let path = root.join(PROJECTION_DIR).join(format!("{}.bin", job.id));
                if let Err(e) = std::fs::create_dir_all(root.join(PROJECTION_DIR))
                    .and_then(|_| std::fs::write(&path, &bytes))
                {
                    log::warn!("could not persist {}: {e}", path.display());
                }
            }
            Ok::<_, CoreError>((file, bytes))
        })
        .await;
        let (state, outcome) = match finished {
            Ok(Ok((file, bytes))) => (
                JobState::Done,
                Outcome {
                    error: None,
                    file: Some(Arc::new(file)),
                    bytes: Some(Arc::new(bytes)),
                },
            ),
            Ok(Err(CoreError::Cancelled)) => (JobState::Cancelled, Outcome::default()),
            Ok(Err(e)) => (
                JobState::Failed,
                Outcome {
                    error: Some(e.to_string()),
                    ..Outcome::default()
                },
            ),
            Err(e) => (
                JobState::Failed,
                Outcome {
                    error: Some(format!("worker panicked: {e}")),
                    ..Outcome::default()
                },
            ),
        };
        log::info!("projection {} {:?}", job.id, state);
        job.transition(state, Some(outcome));
    }

    /// Cancels a queued or running job and waits briefly for the worker to
    /// stop. Cancelling a finished job changes nothing.
    pub async fn cancel(&self, id: &str) -> Option<JobView> {
        let job = self.get(id)?;
        job.cancel.store(true, Ordering::Relaxed);
        if job.transition(JobState::Cancelled, None) {
            return Some(job.view());
        }
        for _ in 0..500 {
            if job.state().is_terminal() {
                break;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        Some(job.view())
    }

    /// Waits until the job reaches a terminal state.
    pub async fn wait(&self, id: &str) -> Option<JobView> {
        let job = self.get(id)?;
        while !job.state().is_terminal() {
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
        Some(job.view())
    }

    pub fn len(&self) -> usize {
        self.jobs.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
