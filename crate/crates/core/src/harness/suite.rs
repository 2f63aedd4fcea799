use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::metrics::{compute_metrics, ConfigMetrics, ConfigRuns};
use super::runner::HarnessError;
use super::scenario::{outcome_of, run_scenario, Scenario, ScenarioOutcome};
use crate::clock::SteppingClock;
use crate::embed::HashingEmbedder;
use crate::enactment::{
    BasicFormatter, Engine, FormatterError, FormatterModel, IdSource, RecordingExecutor,
    RegistryError, SessionPhase, ToolDefinition, ToolRegistry,
};
use crate::policy::{parse_policy_file, ParseError, PolicyId};
use crate::policy_agent::{ResolverVerdict, ScriptFallback, ScriptedResolver};
use crate::store::{PolicyStore, StoreError};

pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Policy { path: PathBuf, source: ParseError },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("unknown policy configuration {0:?}")]
    UnknownConfig(String),
    #[error("configuration {config:?} names unknown policy {id}")]
    UnknownPolicy { config: String, id: PolicyId },
    #[error("duplicate scenario id {0:?}")]
    DuplicateScenario(String),
    #[error("no suite configuration found above {0}")]
    NotInSuite(PathBuf),
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("suite has no scenarios")]
    Empty,
}

fn default_tools() -> String {
    "tools.json".into()
}

fn default_policies() -> String {
    "policies".into()
}

fn default_scenarios() -> String {
    "scenarios".into()
}

/// Canned formatter outputs keyed by response text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormatterFixtures {
    #[serde(default)]
    pub markdown: HashMap<String, String>,
    #[serde(default)]
    pub extract: HashMap<String, Value>,
}

impl FormatterModel for FormatterFixtures {
    fn restructure(&self, response: &str) -> Result<String, FormatterError> {
        match self.markdown.get(response) {
            Some(out) => Ok(out.clone()),
            None => BasicFormatter.restructure(response),
        }
    }

    fn extract(&self, response: &str, schema: &Value) -> Result<Value, FormatterError> {
        match self.extract.get(response) {
            Some(out) => Ok(out.clone()),
            None => BasicFormatter.extract(response, schema),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default = "default_tools")]
    pub tools: String,
    #[serde(default = "default_policies")]
    pub policies_dir: String,
    #[serde(default = "default_scenarios")]
    pub scenarios_dir: String,
    /// Named policy subsets.
    pub configs: BTreeMap<String, Vec<PolicyId>>,
    #[serde(default)]
    pub system_prompt: Option<String>,
    /// Resolver verdicts keyed by context hash.
    #[serde(default)]
    pub resolver: BTreeMap<String, ResolverVerdict>,
    #[serde(default)]
    pub formatter: FormatterFixtures,
}

/// A tool definition plus the behaviour of its fake implementation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolFixture {
    #[serde(flatten)]
    pub definition: ToolDefinition,
    #[serde(default)]
    pub response: Value,
    #[serde(default)]
    pub fails: bool,
}

/// An executor answering with the canned fixture responses.
pub fn fixture_executor(fixtures: &[ToolFixture]) -> RecordingExecutor {
    fixtures.iter().fold(RecordingExecutor::new(), |e, f| {
        let e = e.with_response(f.definition.name.clone(), f.response.clone());
        if f.fails {
            e.with_failure(f.definition.name.clone())
        } else {
            e
        }
    })
}

/// Scenarios, tools and policies loaded from a suite directory.
#[derive(Debug, Clone)]
pub struct Suite {
    pub name: String,
    pub config: SuiteConfig,
    pub fixtures: Vec<ToolFixture>,
    pub registry: Arc<ToolRegistry>,
    /// Policy file texts by id.
    pub policies: BTreeMap<PolicyId, String>,
    pub scenarios: Vec<Scenario>,
}

fn read(path: &Path) -> Result<String, SuiteError> {
    fs::read_to_string(path).map_err(|source| SuiteError::Io { path: path.into(), source })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, SuiteError> {
    serde_json::from_str(&read(path)?).map_err(|source| SuiteError::Json { path: path.into(), source })
}

fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, SuiteError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| SuiteError::Io { path: dir.into(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == ext))
        .collect();
    out.sort();
    Ok(out)
}

impl Suite {
    pub fn load(dir: &Path) -> Result<Self, SuiteError> {
        let config: SuiteConfig = read_json(&dir.join(CONFIG_FILE))?;
        let fixtures: Vec<ToolFixture> = read_json(&dir.join(&config.tools))?;
        let registry =
            Arc::new(ToolRegistry::new(fixtures.iter().map(|f| f.definition.clone()).collect())?);

        let mut policies = BTreeMap::new();
        let policy_dir = dir.join(&config.policies_dir);
        if policy_dir.is_dir() {
            for path in files_with_ext(&policy_dir, "md")? {
                let text = read(&path)?;
                let policy = parse_policy_file(&text)
                    .map_err(|source| SuiteError::Policy { path: path.clone(), source })?;
                policies.insert(policy.id, text);
            }
        }
        for (name, ids) in &config.configs {
            if let Some(id) = ids.iter().find(|id| !policies.contains_key(*id)) {
                return Err(SuiteError::UnknownPolicy { config: name.clone(), id: id.clone() });
            }
        }

        let mut scenarios: Vec<Scenario> = Vec::new();
        for path in files_with_ext(&dir.join(&config.scenarios_dir), "json")? {
            let sc: Scenario = read_json(&path)?;
            if scenarios.iter().any(|s| s.id == sc.id) {
                return Err(SuiteError::DuplicateScenario(sc.id));
            }
            scenarios.push(sc);
        }
        scenarios.sort_by(|a, b| a.id.cmp(&b.id));

        let name = dir
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "suite".into());
        Ok(Self { name, config, fixtures, registry, policies, scenarios })
    }

    /// Loads a suite directory, or the suite containing a single scenario
    /// file restricted to that scenario.
    pub fn load_path(path: &Path) -> Result<Self, SuiteError> {
        if path.is_dir() {
            return Self::load(path);
        }
        let root = path
            .ancestors()
            .skip(1)
            .find(|d| d.join(CONFIG_FILE).is_file())
            .ok_or_else(|| SuiteError::NotInSuite(path.into()))?;
        let sc: Scenario = read_json(path)?;
        let mut suite = Self::load(root)?;
        suite.scenarios.retain(|s| s.id == sc.id);
        Ok(suite)
    }

    pub fn config_names(&self) -> Vec<String> {
        self.config.configs.keys().cloned().collect()
    }

    fn policy_ids(&self, config: &str, sc: &Scenario) -> Result<Vec<PolicyId>, SuiteError> {
        let ids = self
            .config
            .configs
            .get(config)
            .ok_or_else(|| SuiteError::UnknownConfig(config.into()))?;
        Ok(ids
            .iter()
            .filter(|id| sc.policy_set.as_ref().is_none_or(|set| set.contains(id)))
            .cloned()
            .collect())
    }

    /// A freshly built store holding exactly `ids`.
    pub fn build_store(&self, ids: &[PolicyId]) -> Result<PolicyStore, SuiteError> {
        let mut store = PolicyStore::new(Arc::new(HashingEmbedder::default()))
            .with_clock(Arc::new(SteppingClock::default()));
        for id in ids {
            store.upsert_source(&self.policies[id])?;
        }
        Ok(store)
    }

    pub fn resolver(&self) -> ScriptedResolver {
        self.config.resolver.iter().fold(
            ScriptedResolver::new().with_fallback(ScriptFallback::TopCandidate),
            |r, (key, verdict)| r.with_keyed_verdict(key.clone(), verdict.clone()),
        )
    }

    pub fn executor(&self) -> RecordingExecutor {
        fixture_executor(&self.fixtures)
    }

    /// An engine over a fresh store, with deterministic clock and ids.
    pub fn engine(&self, store: PolicyStore, resolver: Arc<ScriptedResolver>) -> Engine {
        let mut builder = Engine::builder(Arc::new(RwLock::new(store)), self.registry.clone())
            .resolver(resolver)
            .formatter(Arc::new(self.config.formatter.clone()))
            .executor(Arc::new(self.executor()))
            .clock(Arc::new(SteppingClock::default()))
            .ids(IdSource::sequential());
        if let Some(prompt) = &self.config.system_prompt {
            builder = builder.system_prompt(prompt.clone());
        }
        builder.build()
    }

    /// Runs one scenario under a named configuration in its own engine.
    pub fn run_one(&self, sc: &Scenario, config: &str) -> Result<ScenarioRecord, SuiteError> {
        let store = self.build_store(&self.policy_ids(config, sc)?)?;
        let resolver = Arc::new(self.resolver());
        let engine = self.engine(store, resolver.clone());
        let outcome = match run_scenario(sc, &engine) {
            Ok(outcome) => outcome,
            Err(HarnessError::ScriptExhausted { step }) => {
                let id = engine.session_ids().pop().expect("session was created");
                let mut o = outcome_of(sc, &engine, &id, SessionPhase::Failed)
                    .expect("session exists");
                o.passed = false;
                o.failures.insert(0, format!("agent script exhausted at step {step}"));
                o
            }
            Err(HarnessError::Enactment(e)) => panic!("engine misuse by the runner: {e}"),
        };
        Ok(ScenarioRecord { outcome, resolver_calls: resolver.calls() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioRecord {
    #[serde(flatten)]
    pub outcome: ScenarioOutcome,
    pub resolver_calls: usize,
}

/// Results of running a suite under one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: String,
    pub config: String,
    pub scenarios: usize,
    pub runs: usize,
    pub per_run_passes: Vec<usize>,
    /// Mean fraction of scenarios passed.
    pub success_rate: f64,
    pub metrics: ConfigMetrics,
    /// Passes out of `runs` per scenario id.
    pub per_scenario: BTreeMap<String, usize>,
    #[serde(skip)]
    pub records: Vec<Vec<ScenarioRecord>>,
}

/// Runs every scenario `repetitions` times under `config`. Each scenario run
/// gets a freshly built store.
pub fn run_suite(suite: &Suite, config: &str, repetitions: usize) -> Result<SuiteResult, SuiteError> {
    if repetitions == 0 {
        return Err(SuiteError::NoRepetitions);
    }
    if suite.scenarios.is_empty() {
        return Err(SuiteError::Empty);
    }
    if !suite.config.configs.contains_key(config) {
        return Err(SuiteError::UnknownConfig(config.into()));
    }
    let mut records = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let run = suite
            .scenarios
            .iter()
            .map(|sc| suite.run_one(sc, config))
            .collect::<Result<Vec<_>, _>>()?;
        records.push(run);
    }
    let per_run_passes: Vec<usize> =
        records.iter().map(|run| run.iter().filter(|r| r.outcome.passed).count()).collect();
    let mut per_scenario = BTreeMap::new();
    for run in &records {
        for r in run {
            *per_scenario.entry(r.outcome.scenario.clone()).or_insert(0) += usize::from(r.outcome.passed);
        }
    }
    let total = suite.scenarios.len();
    let metrics = compute_metrics(&[ConfigRuns {
        config: config.into(),
        total,
        per_run_passes: per_run_passes.clone(),
    }])
    .expect("runs and scenarios are nonempty")
    .configs
    .remove(0);
    Ok(SuiteResult {
        suite: suite.name.clone(),
        config: config.into(),
        scenarios: total,
        runs: repetitions,
        success_rate: per_run_passes.iter().sum::<usize>() as f64 / (total * repetitions) as f64,
        per_run_passes,
        metrics,
        per_scenario,
        records,
    })
}
