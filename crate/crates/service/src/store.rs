//! Single-file store: in-memory collections backed by an append-only log of
//! JSON records. The log is compacted to the latest record per key on open.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use hypocompass::model::{Exercise, PracticeSuite};
use hypocompass::pipeline::{ClusterReport, SuiteDraft};
use hypocompass::tutor::TutorSession;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseRecord {
    pub version: u64,
    pub exercise: Exercise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRecord {
    pub id: String,
    pub exercise_id: String,
    pub version: u64,
    /// Absent for suites imported as finished documents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draft: Option<SuiteDraft>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<PracticeSuite>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<ClusterReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub version: u64,
    pub suite_ids: Vec<String>,
    pub session: TutorSession,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub exercise_id: String,
    pub suite_id: String,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredResponse {
    pub status: u16,
    pub body: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Exercise(ExerciseRecord),
    Suite(SuiteRecord),
    Session { id: String, record: SessionRecord },
    Job(Job),
    Idempotency { key: String, response: StoredResponse },
}

/// Session snapshots are rewritten on every command, so the log is
/// compacted once this many records have been appended.
const COMPACT_AFTER: usize = 2000;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store i/o on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("store {path} line {line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
}

#[derive(Debug, Default)]
pub struct Collections {
    pub exercises: BTreeMap<String, ExerciseRecord>,
    pub suites: BTreeMap<String, SuiteRecord>,
    pub sessions: BTreeMap<String, SessionRecord>,
    pub jobs: BTreeMap<String, Job>,
    pub idempotency: BTreeMap<String, StoredResponse>,
}

pub struct Store {
    path: PathBuf,
    log: File,
    /// Records appended since the last compaction.
    appended: usize,
    pub data: Collections,
}

impl Store {
    /// Loads the store, compacts its log, and marks jobs that were still
    /// running as failed.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let io = |source| StoreError::Io { path: path.display().to_string(), source };
        let mut data = Collections::default();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            let lines: Vec<String> = reader.lines().collect::<Result<_, _>>().map_err(io)?;
            let count = lines.len();
            for (i, line) in lines.into_iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Record>(&line) {
                    Ok(record) => data.apply(record),
                    // A torn final write is dropped; anything earlier is corruption.
                    Err(e) if i + 1 == count => tracing::warn!("dropping unreadable last store record: {e}"),
                    Err(e) => return Err(StoreError::Corrupt { path: path.display().to_string(), line: i + 1, message: e.to_string() }),
                }
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        for job in data.jobs.values_mut() {
            if matches!(job.status, JobStatus::Queued | JobStatus::Running) {
                job.status = JobStatus::Failed;
                job.error = Some("interrupted by a service restart".into());
            }
        }

        let log = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        let mut store = Store { path: path.to_path_buf(), log, data, appended: 0 };
        store.compact()?;
        Ok(store)
    }

    /// Rewrites the log with one record per key.
    pub fn compact(&mut self) -> Result<(), StoreError> {
        let io = |source| StoreError::Io { path: self.path.display().to_string(), source };
        let tmp = self.path.with_extension("compact");
        {
            let mut out = std::io::BufWriter::new(File::create(&tmp).map_err(io)?);
            for record in self.data.records() {
                writeln!(out, "{}", serde_json::to_string(&record).expect("records serialize")).map_err(io)?;
            }
            out.into_inner().map_err(|e| io(e.into_error()))?.sync_all().map_err(io)?;
        }
        std::fs::rename(&tmp, &self.path).map_err(io)?;
        self.log = OpenOptions::new().append(true).open(&self.path).map_err(io)?;
        self.appended = 0;
        Ok(())
    }

    fn append(&mut self, record: Record) -> Result<(), StoreError> {
        let io = |source| StoreError::Io { path: self.path.display().to_string(), source };
        let mut line = serde_json::to_string(&record).expect("records serialize");
        line.push('\n');
        self.log.write_all(line.as_bytes()).map_err(io)?;
        self.log.sync_data().map_err(io)?;
        self.data.apply(record);
        self.appended += 1;
        if self.appended > COMPACT_AFTER {
            self.compact()?;
        }
        Ok(())
    }

    pub fn put_exercise(&mut self, record: ExerciseRecord) -> Result<(), StoreError> {
        self.append(Record::Exercise(record))
    }

    pub fn put_suite(&mut self, record: SuiteRecord) -> Result<(), StoreError> {
        self.append(Record::Suite(record))
    }

    pub fn put_session(&mut self, id: &str, record: SessionRecord) -> Result<(), StoreError> {
        self.append(Record::Session { id: id.to_string(), record })
    }

    pub fn put_job(&mut self, job: Job) -> Result<(), StoreError> {
        self.append(Record::Job(job))
    }

    pub fn put_response(&mut self, key: &str, response: StoredResponse) -> Result<(), StoreError> {
        self.append(Record::Idempotency { key: key.to_string(), response })
    }
}

impl Collections {
    fn apply(&mut self, record: Record) {
        match record {
            Record::Exercise(r) => {
                self.exercises.insert(r.exercise.id.clone(), r);
            }
            Record::Suite(r) => {
                self.suites.insert(r.id.clone(), r);
            }
            Record::Session { id, record } => {
                self.sessions.insert(id, record);
            }
            Record::Job(job) => {
                self.jobs.insert(job.id.clone(), job);
            }
            Record::Idempotency { key, response } => {
                self.idempotency.insert(key, response);
            }
        }
    }

    fn records(&self) -> Vec<Record> {
        let mut out: Vec<Record> = self.exercises.values().cloned().map(Record::Exercise).collect();
        out.extend(self.suites.values().cloned().map(Record::Suite));
        out.extend(self.sessions.iter().map(|(id, r)| Record::Session { id: id.clone(), record: r.clone() }));
        out.extend(self.jobs.values().cloned().map(Record::Job));
        out.extend(self.idempotency.iter().map(|(k, r)| Record::Idempotency { key: k.clone(), response: r.clone() }));
        out
    }

    /// Next free id of the form `<prefix>-NNNN`.
    pub fn next_id<V>(map: &BTreeMap<String, V>, prefix: &str) -> String {
        let n = map
            .keys()
            .filter_map(|k| k.strip_prefix(prefix).and_then(|r| r.strip_prefix('-')).and_then(|r| r.parse::<u64>().ok()))
            .max()
            .unwrap_or(0);
        format!("{prefix}-{:04}", n + 1)
    }
}
