use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tokio::sync::Notify;

use govgate_core::clock::SystemClock;
use govgate_core::embed::HashingEmbedder;
use govgate_core::enactment::{
    ApprovalDecision, ApprovalRequest, Engine, EngineObserver, Session, SessionId, SessionPhase,
    ToolRegistry,
};
use govgate_core::harness::{
    fixture_executor, Cursor, Drive, HarnessError, NoHandler, ScriptedAgent, SessionRunner,
    ToolFixture,
};
use govgate_core::policy::{parse_policy_unchecked, validate_policy, PolicyId, PolicyKind};
use govgate_core::store::{PolicyStore, StoreError};
use govgate_core::trigger::MatchContext;

use crate::error::ApiError;

#[derive(Debug, Clone, Default)]
pub struct GatewayConfig {
    /// Policy store directory. Policy edits are written back to it.
    pub store_dir: PathBuf,
    /// Tool fixtures (definitions plus canned responses).
    pub tools: Option<PathBuf>,
    /// Snapshot file for sessions, approvals and agent cursors. Without it
    /// paused sessions are lost on restart.
    pub persist: Option<PathBuf>,
    pub system_prompt: Option<String>,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("cannot load policy store: {0}")]
    StoreLoad(#[from] StoreError),
    #[error("cannot read tools from {path}: {message}")]
    Tools { path: PathBuf, message: String },
    #[error("cannot restore sessions from {path}: {message}")]
    Restore { path: PathBuf, message: String },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

/// Agent script and position of a session driven by the gateway.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Run {
    pub agent: ScriptedAgent,
    pub cursor: Cursor,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Snapshot {
    sessions: Vec<Session>,
    approvals: Vec<ApprovalRequest>,
    runs: BTreeMap<SessionId, Run>,
}

struct Notifier(Arc<Notify>);

impl EngineObserver for Notifier {
    fn approval_requested(&self, _: &ApprovalRequest) {
        self.0.notify_waiters();
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub input: String,
    #[serde(default)]
    pub intent: Option<String>,
    #[serde(default)]
    pub app_id: Option<String>,
    #[serde(default)]
    pub state: Value,
    /// Scripted agent to drive the session. Defaults to one that answers
    /// with an empty response and calls no tools.
    #[serde(default)]
    pub agent: Option<ScriptedAgent>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub id: PolicyId,
    pub kind: PolicyKind,
    pub priority: i64,
    pub enabled: bool,
    pub summary: String,
}

/// Shared state behind the HTTP handlers. Every method blocks and is meant
/// to run off the async executor.
pub struct Gateway {
    engine: Engine,
    store_dir: Option<PathBuf>,
    persist: Option<PathBuf>,
    runs: Mutex<HashMap<SessionId, Arc<Mutex<Run>>>>,
    pending: Arc<Notify>,
    store_writes: Mutex<()>,
    snapshot_lock: Mutex<()>,
}

fn read_tools(path: &Path) -> Result<Vec<ToolFixture>, GatewayError> {
    let err = |message: String| GatewayError::Tools { path: path.into(), message };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

impl Gateway {
    /// Loads the store (refreshing its embeddings cache), the tools and, when
    /// persistence is on, the sessions of a previous run.
    pub fn open(config: &GatewayConfig) -> Result<Arc<Self>, GatewayError> {
        let (store, _) = PolicyStore::load(
            &config.store_dir,
            Arc::new(HashingEmbedder::default()),
            Arc::new(SystemClock),
        )?;
        store.save_cache(&config.store_dir)?;
        let fixtures = match &config.tools {
            Some(path) => read_tools(path)?,
            None => Vec::new(),
        };
        let registry = ToolRegistry::new(fixtures.iter().map(|f| f.definition.clone()).collect())
            .map_err(|e| GatewayError::Tools {
                path: config.tools.clone().unwrap_or_default(),
                message: e.to_string(),
            })?;
        let mut builder = Engine::builder(Arc::new(RwLock::new(store)), Arc::new(registry))
            .executor(Arc::new(fixture_executor(&fixtures)));
        if let Some(prompt) = &config.system_prompt {
            builder = builder.system_prompt(prompt.clone());
        }
        let gateway = Self::new(builder.build(), Some(config.store_dir.clone()), config.persist.clone());
        if let Some(path) = &config.persist {
            gateway.restore(path)?;
        }
        Ok(gateway)
    }

    /// Wraps an engine. `store_dir` receives policy edits; `persist` is the
    /// snapshot file.
    pub fn new(engine: Engine, store_dir: Option<PathBuf>, persist: Option<PathBuf>) -> Arc<Self> {
        let pending = Arc::new(Notify::new());
        engine.subscribe(Arc::new(Notifier(pending.clone())));
        Arc::new(Self {
            engine,
            store_dir,
            persist,
            runs: Mutex::new(HashMap::new()),
            pending,
            store_writes: Mutex::new(()),
            snapshot_lock: Mutex::new(()),
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Signalled whenever a new approval request is created.
    pub fn pending_notify(&self) -> Arc<Notify> {
        self.pending.clone()
    }

    fn restore(&self, path: &Path) -> Result<(), GatewayError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(GatewayError::Restore { path: path.into(), message: e.to_string() }),
        };
        let snapshot: Snapshot = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Restore { path: path.into(), message: e.to_string() })?;
        let mut by_session: HashMap<SessionId, Vec<ApprovalRequest>> = HashMap::new();
        for a in snapshot.approvals {
            by_session.entry(a.session.clone()).or_default().push(a);
        }
        for session in snapshot.sessions {
            let approvals = by_session.remove(&session.id).unwrap_or_default();
            self.engine
                .restore_session(session, approvals)
                .map_err(|e| GatewayError::Restore { path: path.into(), message: e.to_string() })?;
        }
        let mut runs = self.runs.lock();
        for (id, run) in snapshot.runs {
            runs.insert(id, Arc::new(Mutex::new(run)));
        }
        Ok(())
    }

    /// Writes the snapshot file, if persistence is on.
    fn snapshot(&self) -> Result<(), ApiError> {
        let Some(path) = &self.persist else { return Ok(()) };
        let _guard = self.snapshot_lock.lock();
        let mut snapshot = Snapshot::default();
        for id in self.engine.session_ids() {
            snapshot.sessions.push(self.engine.session(&id)?);
            snapshot.approvals.extend(self.engine.approvals_for(&id));
        }
        let runs: Vec<(SessionId, Arc<Mutex<Run>>)> =
            self.runs.lock().iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        for (id, run) in runs {
            snapshot.runs.insert(id, run.lock().clone());
        }
        let text = serde_json::to_vec(&snapshot).map_err(|e| ApiError::internal(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text)
            .and_then(|_| fs::rename(&tmp, path))
            .map_err(|e| ApiError::internal(format!("cannot write snapshot: {e}")))
    }

    /// Advances a session until it finishes or pauses for approval.
    fn drive(&self, id: &SessionId) -> Result<SessionPhase, ApiError> {
        let Some(run) = self.runs.lock().get(id).cloned() else {
            return Ok(self.engine.phase(id)?);
        };
        let mut run = run.lock();
        let Run { agent, cursor } = &mut *run;
        let runner = SessionRunner { engine: &self.engine, agent, approvals: &NoHandler };
        match runner.drive(id, cursor) {
            Ok(Drive::Paused(_)) => Ok(SessionPhase::AwaitingApproval),
            Ok(Drive::Finished(phase)) => Ok(phase),
            Err(HarnessError::ScriptExhausted { .. }) => Ok(self.engine.phase(id)?),
            Err(e) => Err(e.into()),
        }
    }

    pub fn start_session(&self, req: CreateSession) -> Result<(SessionId, SessionPhase), ApiError> {
        let context = MatchContext {
            intent: req.intent,
            app_id: req.app_id,
            state: req.state,
            ..MatchContext::new(req.input)
        };
        let agent = req.agent.unwrap_or_else(|| ScriptedAgent::answering(""));
        let id = self.engine.create_session(context);
        self.runs
            .lock()
            .insert(id.clone(), Arc::new(Mutex::new(Run { agent, cursor: Cursor::default() })));
        let phase = self.drive(&id)?;
        self.snapshot()?;
        Ok((id, phase))
    }

    /// Resolves a request and resumes its session before returning, so the
    /// caller never observes the session still waiting on this request.
    pub fn decide(
        &self,
        request_id: &str,
        decision: ApprovalDecision,
        actor: &str,
    ) -> Result<(ApprovalRequest, SessionPhase), ApiError> {
        self.engine.resolve_approval(request_id, decision, actor)?;
        let request = self
            .engine
            .approval(request_id)
            .ok_or_else(|| ApiError::not_found("approval request", request_id))?;
        let phase = self.drive(&request.session)?;
        self.snapshot()?;
        Ok((request, phase))
    }

    pub fn policies(&self, kind: Option<PolicyKind>) -> Vec<PolicySummary> {
        let store = self.engine.store().read();
        store
            .policies()
            .filter(|p| kind.is_none_or(|k| p.kind() == k))
            .map(|p| PolicySummary {
                id: p.id.clone(),
                kind: p.kind(),
                priority: p.priority,
                enabled: p.enabled,
                summary: p.summary(),
            })
            .collect()
    }

    pub fn policy_source(&self, id: &PolicyId) -> Option<String> {
        self.engine.store().read().get(id).map(|s| s.source.clone())
    }

    /// Validates and stores a policy file under `id`. Returns true when the
    /// policy is new.
    pub fn put_policy(&self, id: &PolicyId, text: &str) -> Result<bool, ApiError> {
        let policy = parse_policy_unchecked(text)
            .map_err(|e| ApiError::bad_request("invalid_policy", e.to_string()))?;
        let violations = validate_policy(&policy);
        if !violations.is_empty() {
            return Err(ApiError::invalid_policy(violations));
        }
        if &policy.id != id {
            return Err(ApiError::bad_request(
                "id_mismatch",
                format!("file declares id `{}` but the path names `{id}`", policy.id),
            ));
        }
        let _guard = self.store_writes.lock();
        let created = {
            let mut store = self.engine.store().write();
            let created = store.get(id).is_none();
            store.upsert_source(text).map_err(|e| ApiError::bad_request("invalid_policy", e.to_string()))?;
            created
        };
        self.sync_store(id)?;
        Ok(created)
    }

    pub fn delete_policy(&self, id: &PolicyId) -> Result<(), ApiError> {
        let _guard = self.store_writes.lock();
        if !self.engine.store().write().delete(id) {
            return Err(ApiError::not_found("policy", id.as_str()));
        }
        self.sync_store(id)
    }

    fn sync_store(&self, id: &PolicyId) -> Result<(), ApiError> {
        let Some(dir) = &self.store_dir else { return Ok(()) };
        let store = self.engine.store().read();
        store
            .sync_policy_file(dir, id)
            .and_then(|_| store.save_cache(dir))
            .map_err(|e| ApiError::internal(e.to_string()))
    }
}
