//! Sessions and their on-disk store.
//!
//! Each session lives in `<dir>/<id>.json`, rewritten atomically (temp file
//! plus rename) after every mutation. A store without a directory keeps
//! sessions in memory only.

use std::collections::HashMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use harvest_core::config::ExperimentConfig;
use harvest_core::model::clamp_and_classify;
use harvest_core::reward::terminal_value;
use harvest_core::{Channel, HyperState, KnowledgeState, Observation, PhysicalState, TerminalClass};

use crate::error::ApiError;

/// One ingested measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Epoch the measurement belongs to.
    pub epoch: u32,
    pub p: f64,
    pub i: f64,
    pub observation: Observation,
    /// False when the step ended in failure and was not learned from.
    pub learned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvestOutcome {
    pub total_reward: f64,
    pub stopping_time: u32,
    pub harvest_reward: f64,
    pub class: TerminalClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub prior: KnowledgeState,
    /// Physical state as measured (not clamped), knowledge and epoch.
    pub state: HyperState,
    pub log: Vec<LogEntry>,
    /// Discounted continuation charges paid so far.
    pub accrued: f64,
    pub outcome: Option<HarvestOutcome>,
    pub created: u64,
    pub updated: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub inherent: f64,
    pub model_risk: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub protein: Split,
    pub impurity: Split,
}

impl VarianceDecomposition {
    /// `None` until both channels have `λ > 1`.
    pub fn of(k: &KnowledgeState) -> Option<Self> {
        let split = |c| {
            k.decompose_variance(c).ok().map(|s| Split {
                inherent: s.inherent,
                model_risk: s.model_risk,
                total: s.total(),
            })
        };
        Some(Self { protein: split(Channel::Protein)?, impurity: split(Channel::Impurity)? })
    }
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl Session {
    pub fn new(config: ExperimentConfig, prior: KnowledgeState, seed: u64) -> Self {
        let t = now();
        Self {
            id: uuid::Uuid::new_v4().simple().to_string(),
            state: HyperState::new(config.limits.initial_state(), prior, 0),
            config,
            seed,
            prior,
            log: Vec::new(),
            accrued: 0.0,
            outcome: None,
            created: t,
            updated: t,
        }
    }

    /// Clamped physical state and its class.
    pub fn current(&self) -> (PhysicalState, TerminalClass) {
        clamp_and_classify(&self.state.physical, self.state.t, &self.config.limits)
    }

    /// Knowledge obtained by folding the learned log entries into the prior.
    pub fn replayed_knowledge(&self) -> KnowledgeState {
        self.log.iter().filter(|e| e.learned).fold(self.prior, |k, e| k.update(&e.observation))
    }

    fn ensure_live(&self) -> Result<(), ApiError> {
        if self.outcome.is_some() {
            return Err(ApiError::conflict("session already harvested"));
        }
        Ok(())
    }

    /// Continue one period and ingest the measured state.
    pub fn observe(&mut self, p_next: f64, i_next: f64) -> Result<LogEntry, ApiError> {
        for (field, v) in [("p_next", p_next), ("i_next", i_next)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ApiError::unprocessable(format!("{field} must be a positive number"), Some(field)));
            }
        }
        self.ensure_live()?;
        let (here, class) = self.current();
        if class.is_forced() {
            return Err(ApiError::conflict(format!("batch must be harvested ({})", class.label())));
        }
        let limits = &self.config.limits;
        let next = PhysicalState::new(p_next, i_next);
        let obs = here.log_ratio(&next);
        let learned = i_next < limits.i_bar;
        let gamma = self.config.economics.gamma;
        self.accrued -= gamma.powi(self.state.t as i32) * self.config.economics.c_u;
        if learned {
            self.state.knowledge = self.state.knowledge.update(&obs);
        }
        self.state.physical = next;
        self.state.t += 1;
        let entry = LogEntry { epoch: self.state.t, p: p_next, i: i_next, observation: obs, learned };
        self.log.push(entry);
        self.updated = now();
        Ok(entry)
    }

    /// End the batch at the current state.
    pub fn harvest(&mut self) -> Result<HarvestOutcome, ApiError> {
        self.ensure_live()?;
        let (state, class) = self.current();
        let econ = &self.config.economics;
        let reward = terminal_value(&state, class, econ);
        let out = HarvestOutcome {
            total_reward: self.accrued + econ.gamma.powi(self.state.t as i32) * reward,
            stopping_time: self.state.t,
            harvest_reward: reward,
            class,
        };
        self.outcome = Some(out);
        self.updated = now();
        Ok(out)
    }

    pub fn is_live(&self) -> bool {
        self.outcome.is_none()
    }
}

pub type SessionHandle = Arc<tokio::sync::Mutex<Session>>;

/// Session map with optional file persistence.
pub struct Store {
    dir: Option<PathBuf>,
    sessions: Mutex<HashMap<String, SessionHandle>>,
}

impl Store {
    pub fn memory() -> Self {
        Self { dir: None, sessions: Mutex::new(HashMap::new()) }
    }

    /// Open (creating if needed) a directory store and load its sessions.
    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            let s: Session = serde_json::from_str(&text)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
            sessions.insert(s.id.clone(), Arc::new(tokio::sync::Mutex::new(s)));
        }
        Ok(Self { dir: Some(dir), sessions: Mutex::new(sessions) })
    }

    pub fn get(&self, id: &str) -> Option<SessionHandle> {
        self.sessions.lock().expect("store lock").get(id).cloned()
    }

    pub fn insert(&self, session: Session) -> io::Result<SessionHandle> {
        self.persist(&session)?;
        let id = session.id.clone();
        let handle = Arc::new(tokio::sync::Mutex::new(session));
        self.sessions.lock().expect("store lock").insert(id, handle.clone());
        Ok(handle)
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn persist(&self, session: &Session) -> io::Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(format!("{}.json", session.id));
        let tmp = dir.join(format!("{}.json.tmp", session.id));
        std::fs::write(&tmp, serde_json::to_vec_pretty(session)?)?;
        std::fs::rename(tmp, path)
    }
}
