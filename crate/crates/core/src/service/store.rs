//! Score and job records with optional directory persistence.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::midi::SparseRoll;

/// A fresh 128-bit random id as 32 lowercase hex digits.
pub fn new_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub pianoroll: SparseRoll,
    pub source_filename: String,
    pub created_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    /// Whether `self → next` is a legal transition.
    pub fn can_become(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running) | (JobState::Running, JobState::Done) | (JobState::Running, JobState::Failed)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub score_id: String,
    pub instrument_label: String,
    pub state: JobState,
    /// Every state the job has been in, in order.
    pub history: Vec<JobState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audio_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    pub created_at: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown id {0}")]
    NotFound(String),
    #[error("illegal job transition {from:?} -> {to:?}")]
    IllegalTransition { from: JobState, to: JobState },
}

/// Thread-safe in-memory store. With a persistence directory, every write is
/// mirrored as `scores/<id>.json`, `jobs/<id>.json` and `audio/<id>.wav`.
#[derive(Debug, Default)]
pub struct Store {
    scores: RwLock<HashMap<String, ScoreRecord>>,
    jobs: Mutex<HashMap<String, JobRecord>>,
    audio: RwLock<HashMap<String, Vec<u8>>>,
    persist: Option<PathBuf>,
}

impl Store {
    pub fn in_memory() -> Self {
        Store::default()
    }

    /// Opens a persistent store, reloading scores and finished jobs.
    pub fn persistent(dir: &Path) -> std::io::Result<Self> {
        for sub in ["scores", "jobs", "audio"] {
            std::fs::create_dir_all(dir.join(sub))?;
        }
        let store = Store {
            persist: Some(dir.to_path_buf()),
            ..Store::default()
        };
        for entry in std::fs::read_dir(dir.join("scores"))? {
            let path = entry?.path();
            match std::fs::read(&path).ok().and_then(|b| serde_json::from_slice::<ScoreRecord>(&b).ok()) {
                Some(rec) if rec.pianoroll.validate().is_ok() => {
                    store.scores.write().expect("lock").insert(rec.id.clone(), rec);
                }
                _ => log::warn!("skipping unreadable score file {}", path.display()),
            }
        }
        for entry in std::fs::read_dir(dir.join("jobs"))? {
            let path = entry?.path();
            let Some(rec) = std::fs::read(&path).ok().and_then(|b| serde_json::from_slice::<JobRecord>(&b).ok()) else {
                log::warn!("skipping unreadable job file {}", path.display());
                continue;
            };
            if !rec.state.is_terminal() {
                continue;
            }
            if rec.state == JobState::Done {
                match std::fs::read(dir.join("audio").join(format!("{}.wav", rec.id))) {
                    Ok(wav) => {
                        store.audio.write().expect("lock").insert(rec.id.clone(), wav);
                    }
                    Err(_) => continue,
                }
            }
            store.jobs.lock().expect("lock").insert(rec.id.clone(), rec);
        }
        Ok(store)
    }

    fn persist_json<T: Serialize>(&self, kind: &str, id: &str, value: &T) {
        if let Some(dir) = &self.persist {
            let path = dir.join(kind).join(format!("{id}.json"));
            let bytes = serde_json::to_vec_pretty(value).expect("records serialize");
            if let Err(e) = std::fs::write(&path, bytes) {
                log::error!("persisting {}: {e}", path.display());
            }
        }
    }

    pub fn insert_score(&self, record: ScoreRecord) {
        self.persist_json("scores", &record.id, &record);
        self.scores.write().expect("lock").insert(record.id.clone(), record);
    }

    pub fn score(&self, id: &str) -> Option<ScoreRecord> {
        self.scores.read().expect("lock").get(id).cloned()
    }

    /// Atomically swaps the roll of an existing score.
    pub fn replace_roll(&self, id: &str, roll: SparseRoll) -> Result<(), StoreError> {
        let mut scores = self.scores.write().expect("lock");
        let rec = scores.get_mut(id).ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        rec.pianoroll = roll;
        self.persist_json("scores", id, rec);
        Ok(())
    }

    pub fn insert_job(&self, record: JobRecord) {
        self.persist_json("jobs", &record.id, &record);
        self.jobs.lock().expect("lock").insert(record.id.clone(), record);
    }

    pub fn job(&self, id: &str) -> Option<JobRecord> {
        self.jobs.lock().expect("lock").get(id).cloned()
    }

    /// Moves a job to `next`, refusing illegal transitions.
    pub fn transition(&self, id: &str, next: JobState, update: impl FnOnce(&mut JobRecord)) -> Result<(), StoreError> {
        let mut jobs = self.jobs.lock().expect("lock");
        let rec = jobs.get_mut(id).ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        if !rec.state.can_become(next) {
            return Err(StoreError::IllegalTransition { from: rec.state, to: next });
        }
        rec.state = next;
        rec.history.push(next);
        update(rec);
        self.persist_json("jobs", id, rec);
        Ok(())
    }

    pub fn put_audio(&self, job_id: &str, wav: Vec<u8>) {
        if let Some(dir) = &self.persist {
            let path = dir.join("audio").join(format!("{job_id}.wav"));
            if let Err(e) = std::fs::write(&path, &wav) {
                log::error!("persisting {}: {e}", path.display());
            }
        }
        self.audio.write().expect("lock").insert(job_id.to_string(), wav);
    }

    pub fn audio(&self, job_id: &str) -> Option<Vec<u8>> {
        self.audio.read().expect("lock").get(job_id).cloned()
    }
}
