//! Interactive experiment sessions: an append-only event record, the state
//! it replays to, and an on-disk store with one JSONL file per session.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use condmeasure::sequential::{
    all_gains, choose_placement, greedy_index, update, Decision, ExperimentConfig, ExperimentState, StopReason,
};
use condmeasure::space::Point;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spec::ExperimentSpec;

/// Tolerance for replayed posterior snapshots.
pub const REPLAY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("no session {0}")]
    UnknownSession(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no placement {0:?}")]
    UnknownPlacement(String),
    #[error("{0}")]
    InvalidOutcome(String),
    #[error("outcome {outcome} at {placement} has zero probability under the current posterior")]
    ZeroEvidence { placement: String, outcome: String },
    #[error("session terminated ({0})")]
    Terminated(String),
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("no such endpoint")]
    UnknownEndpoint,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownSession(_) => "unknown_session",
            SessionError::InvalidConfig(_) => "invalid_config",
            SessionError::UnknownPlacement(_) => "unknown_placement",
            SessionError::InvalidOutcome(_) => "invalid_outcome",
            SessionError::ZeroEvidence { .. } => "zero_evidence",
            SessionError::Terminated(_) => "session_terminated",
            SessionError::NothingToUndo => "nothing_to_undo",
            SessionError::UnknownEndpoint => "unknown_endpoint",
            SessionError::InvalidRequest(_) => "invalid_request",
            SessionError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            SessionError::UnknownSession(_) | SessionError::UnknownEndpoint => 404,
            SessionError::InvalidConfig(_) | SessionError::InvalidRequest(_) => 400,
            SessionError::UnknownPlacement(_) | SessionError::InvalidOutcome(_) | SessionError::ZeroEvidence { .. } => 422,
            SessionError::Terminated(_) | SessionError::NothingToUndo => 409,
            SessionError::Internal(_) => 500,
        }
    }
}

fn internal(e: impl std::fmt::Display) -> SessionError {
    SessionError::Internal(e.to_string())
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Outcome { placement: String, outcome: String },
    Undo,
}

/// One accepted action with the posterior it led to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: usize,
    pub at_ms: u64,
    #[serde(flatten)]
    pub action: Action,
    /// Trials in effect after the action.
    pub trials: usize,
    /// Posterior mass per parameter, in parameter order.
    pub posterior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub created_at_ms: u64,
    pub config: ExperimentSpec,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mass {
    pub theta: String,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub trial: usize,
    pub placement: String,
    pub outcome: String,
    pub expected_gain_nats: f64,
    pub posterior_entropy_nats: f64,
    pub evidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementView {
    pub label: String,
    pub outcomes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub session_id: String,
    /// Number of accepted actions; increases with every change.
    pub version: usize,
    pub trials: usize,
    pub posterior: Vec<Mass>,
    pub entropy_nats: f64,
    pub history: Vec<TrialView>,
    pub terminated: bool,
    pub stop_reason: Option<StopReason>,
    pub placements: Vec<PlacementView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    pub placement: String,
    pub gain_nats: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub session_id: String,
    pub version: usize,
    /// Next placement under the configured policy; `None` once terminated.
    pub recommended: Option<String>,
    /// Largest expected gain, lowest index on ties.
    pub greedy: String,
    pub gains: Vec<Gain>,
    pub terminated: bool,
    pub stop_reason: Option<StopReason>,
}

#[derive(Debug)]
pub struct Session {
    id: String,
    created_at_ms: u64,
    spec: ExperimentSpec,
    config: ExperimentConfig,
    /// Accepted outcomes in effect, as `(placement index, outcome)`.
    script: Vec<(usize, Point)>,
    state: ExperimentState,
    events: Vec<Event>,
}

impl Session {
    pub fn new(id: impl Into<String>, spec: ExperimentSpec, created_at_ms: u64) -> Result<Self, SessionError> {
        let config = spec.build().map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        let state = ExperimentState::initial(&config);
        Ok(Session {
            id: id.into(),
            created_at_ms,
            spec,
            config,
            script: Vec::new(),
            state,
            events: Vec::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn state(&self) -> &ExperimentState {
        &self.state
    }

    fn posterior_vector(&self) -> Vec<f64> {
        self.config
            .prior()
            .space()
            .atom_points()
            .map(|t| self.state.posterior.point_mass(&t))
            .collect()
    }

    fn decision(&self) -> Result<Decision, SessionError> {
        choose_placement(&self.config, &self.state).map_err(internal)
    }

    pub fn view(&self) -> Result<StateView, SessionError> {
        let stop = match self.decision()? {
            Decision::Terminate(r) => Some(r),
            Decision::Place(_) => None,
        };
        let labels = |x: usize| self.config.placements()[x].label().to_string();
        Ok(StateView {
            session_id: self.id.clone(),
            version: self.events.len(),
            trials: self.state.history.len(),
            posterior: self
                .config
                .prior()
                .space()
                .atom_points()
                .map(|t| Mass {
                    mass: self.state.posterior.point_mass(&t),
                    theta: t.to_string(),
                })
                .collect(),
            entropy_nats: self.state.entropy(),
            history: self
                .state
                .history
                .iter()
                .enumerate()
                .map(|(i, t)| TrialView {
                    trial: i + 1,
                    placement: labels(t.placement),
                    outcome: t.outcome.to_string(),
                    expected_gain_nats: t.expected_gain,
                    posterior_entropy_nats: t.entropy,
                    evidence: t.evidence,
                })
                .collect(),
            terminated: stop.is_some(),
            stop_reason: stop,
            placements: self
                .config
                .placements()
                .iter()
                .map(|p| PlacementView {
                    label: p.label().to_string(),
                    outcomes: p.outcomes().map(|y| y.to_string()).collect(),
                })
                .collect(),
        })
    }

    pub fn propose(&self) -> Result<Proposal, SessionError> {
        let gains = all_gains(&self.config, &self.state).map_err(internal)?;
        let labels: Vec<String> = self.config.placements().iter().map(|p| p.label().to_string()).collect();
        let (recommended, stop) = match self.decision()? {
            Decision::Place(x) => (Some(labels[x].clone()), None),
            Decision::Terminate(r) => (None, Some(r)),
        };
        Ok(Proposal {
            session_id: self.id.clone(),
            version: self.events.len(),
            recommended,
            greedy: labels[greedy_index(&gains)].clone(),
            gains: labels
                .iter()
                .zip(&gains)
                .map(|(l, g)| Gain {
                    placement: l.clone(),
                    gain_nats: *g,
                })
                .collect(),
            terminated: stop.is_some(),
            stop_reason: stop,
        })
    }

    /// Validates and applies one outcome. The state is untouched on error.
    pub fn record_outcome(&mut self, placement: &str, outcome: &str, at_ms: u64) -> Result<&Event, SessionError> {
        if let Decision::Terminate(r) = self.decision()? {
            return Err(SessionError::Terminated(r.to_string()));
        }
        let x = self
            .config
            .placement_index(placement)
            .ok_or_else(|| SessionError::UnknownPlacement(placement.to_string()))?;
        let p = &self.config.placements()[x];
        let y = Point::parse(outcome).map_err(SessionError::InvalidOutcome)?;
        if !p.likelihood().to_space().contains(&y) {
            let valid: Vec<String> = p.outcomes().map(|y| y.to_string()).collect();
            return Err(SessionError::InvalidOutcome(format!(
                "outcome {outcome:?} is not one of {valid:?} for placement {placement}"
            )));
        }
        let next = update(&self.config, &self.state, x, &y).map_err(internal)?;
        if next.flagged.is_some() {
            return Err(SessionError::ZeroEvidence {
                placement: placement.to_string(),
                outcome: outcome.to_string(),
            });
        }
        self.state = next;
        self.script.push((x, y));
        self.push_event(
            Action::Outcome {
                placement: placement.to_string(),
                outcome: outcome.to_string(),
            },
            at_ms,
        );
        Ok(self.events.last().expect("event pushed"))
    }

    /// Drops the last outcome in effect and replays the rest from the prior.
    pub fn undo(&mut self, at_ms: u64) -> Result<&Event, SessionError> {
        if self.script.is_empty() {
            return Err(SessionError::NothingToUndo);
        }
        let mut script = self.script.clone();
        script.pop();
        let state = replay_script(&self.config, &script)?;
        self.script = script;
        self.state = state;
        self.push_event(Action::Undo, at_ms);
        Ok(self.events.last().expect("event pushed"))
    }

    fn push_event(&mut self, action: Action, at_ms: u64) {
        let e = Event {
            seq: self.events.len() + 1,
            at_ms,
            action,
            trials: self.state.history.len(),
            posterior: self.posterior_vector(),
        };
        self.events.push(e);
    }

    pub fn record(&self) -> SessionRecord {
        SessionRecord {
            session_id: self.id.clone(),
            created_at_ms: self.created_at_ms,
            config: self.spec.clone(),
            events: self.events.clone(),
        }
    }

    /// Rebuilds a session from its record, checking every snapshot.
    pub fn replay(record: &SessionRecord) -> Result<Session, SessionError> {
        let mut s = Session::new(record.session_id.clone(), record.config.clone(), record.created_at_ms)?;
        for e in &record.events {
            s.apply(e)?;
        }
        Ok(s)
    }

    fn apply(&mut self, e: &Event) -> Result<(), SessionError> {
        if e.seq != self.events.len() + 1 {
            return Err(SessionError::Internal(format!("event {} out of order", e.seq)));
        }
        match &e.action {
            Action::Outcome { placement, outcome } => {
                self.record_outcome(placement, outcome, e.at_ms)?;
            }
            Action::Undo => {
                self.undo(e.at_ms)?;
            }
        }
        let got = &self.events.last().expect("event applied").posterior;
        let drift = got
            .iter()
            .zip(&e.posterior)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if got.len() != e.posterior.len() || drift > REPLAY_TOL || self.state.history.len() != e.trials {
            return Err(SessionError::Internal(format!("replay of event {} drifts by {drift}", e.seq)));
        }
        Ok(())
    }
}

fn replay_script(cfg: &ExperimentConfig, script: &[(usize, Point)]) -> Result<ExperimentState, SessionError> {
    let mut s = ExperimentState::initial(cfg);
    for (x, y) in script {
        s = update(cfg, &s, *x, y).map_err(internal)?;
        if s.flagged.is_some() {
            return Err(SessionError::Internal(format!("replayed outcome {y} has zero evidence")));
        }
    }
    Ok(s)
}

/// First line of a session file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename = "created")]
struct Created {
    session_id: String,
    created_at_ms: u64,
    config: ExperimentSpec,
}

/// Sessions in memory, each behind its own lock, mirrored to
/// `<dir>/<id>.jsonl` when a directory is configured.
#[derive(Debug, Default)]
pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        SessionStore::default()
    }

    /// Opens `dir`, creating it if needed, and replays every session file.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(internal)?;
        let mut sessions = HashMap::new();
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(internal)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        entries.sort();
        for path in entries {
            let record = read_record(&path)?;
            let s = Session::replay(&record)?;
            sessions.insert(record.session_id, Arc::new(Mutex::new(s)));
        }
        Ok(SessionStore {
            dir: Some(dir),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn path(&self, id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    pub fn create(&self, spec: ExperimentSpec) -> Result<StateView, SessionError> {
        let id = uuid::Uuid::new_v4().to_string();
        let at = now_ms();
        let s = Session::new(id.clone(), spec.clone(), at)?;
        if let Some(path) = self.path(&id) {
            let line = serde_json::to_string(&Created {
                session_id: id.clone(),
                created_at_ms: at,
                config: spec,
            })
            .map_err(internal)?;
            let mut f = File::create(&path).map_err(internal)?;
            writeln!(f, "{line}").map_err(internal)?;
            f.sync_data().map_err(internal)?;
        }
        let view = s.view()?;
        self.sessions
            .write()
            .expect("store lock")
            .insert(id, Arc::new(Mutex::new(s)));
        Ok(view)
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions
            .read()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    /// Runs `f` with the session locked; one writer at a time per session.
    pub fn with<T>(&self, id: &str, f: impl FnOnce(&Session) -> Result<T, SessionError>) -> Result<T, SessionError> {
        let s = self.get(id)?;
        let guard = s.lock().map_err(|_| SessionError::Internal("session lock poisoned".into()))?;
        f(&guard)
    }

    fn mutate(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session) -> Result<Event, SessionError>,
    ) -> Result<StateView, SessionError> {
        let s = self.get(id)?;
        let mut guard = s.lock().map_err(|_| SessionError::Internal("session lock poisoned".into()))?;
        let event = f(&mut guard)?;
        if let Some(path) = self.path(id) {
            append(&path, &event)?;
        }
        guard.view()
    }

    pub fn record_outcome(&self, id: &str, placement: &str, outcome: &str) -> Result<StateView, SessionError> {
        self.mutate(id, |s| s.record_outcome(placement, outcome, now_ms()).cloned())
    }

    pub fn undo(&self, id: &str) -> Result<StateView, SessionError> {
        self.mutate(id, |s| s.undo(now_ms()).cloned())
    }
}

fn append(path: &Path, event: &Event) -> Result<(), SessionError> {
    let line = serde_json::to_string(event).map_err(internal)?;
    let mut f = OpenOptions::new().append(true).open(path).map_err(internal)?;
    writeln!(f, "{line}").map_err(internal)?;
    f.sync_data().map_err(internal)
}

pub fn read_record(path: &Path) -> Result<SessionRecord, SessionError> {
    let f = File::open(path).map_err(internal)?;
    let mut lines = BufReader::new(f).lines();
    let first = lines
        .next()
        .ok_or_else(|| SessionError::Internal(format!("{} is empty", path.display())))?
        .map_err(internal)?;
    let created: Created = serde_json::from_str(&first).map_err(internal)?;
    let mut events = Vec::new();
    for line in lines {
        let line = line.map_err(internal)?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(internal)?);
    }
    Ok(SessionRecord {
        session_id: created.session_id,
        created_at_ms: created.created_at_ms,
        config: created.config,
        events,
    })
}
