//! In-memory registry of long-running engine jobs.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::ErrorBody;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Train,
    Optimize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    /// Fraction of the budget used, in [0, 1].
    pub progress: f64,
    /// Store id of the produced artifact once done.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    #[serde(default)]
    pub log: Vec<String>,
}

impl JobRecord {
    pub fn is_finished(&self) -> bool {
        matches!(self.state, JobState::Done | JobState::Failed)
    }
}

#[derive(Default)]
pub struct JobRegistry {
    next: AtomicU64,
    jobs: Mutex<HashMap<String, JobRecord>>,
}

impl JobRegistry {
    pub fn create(&self, kind: JobKind) -> JobRecord {
        let n = self.next.fetch_add(1, Ordering::Relaxed) + 1;
        let kind_name = match kind {
            JobKind::Train => "train",
            JobKind::Optimize => "optimize",
        };
        let rec = JobRecord {
            id: format!("{kind_name}-{n:06}"),
            kind,
            state: JobState::Queued,
            progress: 0.0,
            result: None,
            error: None,
            log: vec!["queued".into()],
        };
        self.jobs.lock().unwrap().insert(rec.id.clone(), rec.clone());
        rec
    }

    pub fn get(&self, id: &str) -> Option<JobRecord> {
        self.jobs.lock().unwrap().get(id).cloned()
    }

    pub fn update(&self, id: &str, f: impl FnOnce(&mut JobRecord)) {
        if let Some(r) = self.jobs.lock().unwrap().get_mut(id) {
            f(r);
        }
    }

    pub fn list(&self) -> Vec<JobRecord> {
        let mut v: Vec<_> = self.jobs.lock().unwrap().values().cloned().collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }
}
