//! Declarative experiment configuration.
//!
//! A flat TOML document:
//!
//! ```toml
//! game = "A"              # "A", "B", or "inline" with a [network] table
//! agent = "llm"           # uniform | best-response | mwu | exp3 | llm
//! representation = "S-RO" # required for agent = "llm"
//! trials = 10
//! seed = 0                # trial i uses seed + i
//! out = "runs/s-ro"
//!
//! [backend]
//! kind = "live"           # live | replay | scripted
//! model = "gpt-4o-2024-08-06"
//! api_key_env = "OPENAI_API_KEY"
//! rate_limit = 5
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentSpec, DEFAULT_EXPLORATION_RATE, DEFAULT_LEARNING_RATE};
use crate::engine::{ExperimentPlan, TrialConfig, DEFAULT_ROUNDS};
use crate::llm::{
    Backend, LiveBackend, LiveConfig, LlmClient, LlmError, RetryPolicy, DEFAULT_API_KEY_ENV,
    DEFAULT_ENDPOINT, DEFAULT_MODEL,
};
use crate::network::{canonical, CongestionNetwork, NetworkSpec};
use crate::repr::ReprAxes;

use super::runlog::read_transcripts;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("replay transcripts: {0}")]
    Transcripts(String),
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Uniform,
    BestResponse,
    Mwu,
    Exp3,
    Llm,
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(AgentKind::Uniform),
            "best-response" | "best_response" => Ok(AgentKind::BestResponse),
            "mwu" => Ok(AgentKind::Mwu),
            "exp3" => Ok(AgentKind::Exp3),
            "llm" => Ok(AgentKind::Llm),
            _ => Err(format!(
                "unknown agent kind {s:?} (uniform, best-response, mwu, exp3, llm)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Replay,
    Scripted,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(BackendKind::Live),
            "replay" => Ok(BackendKind::Replay),
            "scripted" => Ok(BackendKind::Scripted),
            _ => Err(format!("unknown backend {s:?} (live, replay, scripted)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Name of the environment variable holding the credential.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    /// Requests per second across all agents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit: Option<usize>,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Directory of per-trial transcript files, for replay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcripts: Option<PathBuf>,
    /// Canned answers handed out in order, for the scripted backend.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub responses: Vec<String>,
}

fn default_endpoint() -> String {
    DEFAULT_ENDPOINT.into()
}
fn default_model() -> String {
    DEFAULT_MODEL.into()
}
fn default_temperature() -> f64 {
    1.0
}
fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.into()
}
fn default_max_attempts() -> u32 {
    RetryPolicy::default().max_attempts
}
fn default_timeout() -> u64 {
    120
}

impl BackendConfig {
    pub fn new(kind: BackendKind) -> Self {
        Self {
            kind,
            endpoint: default_endpoint(),
            model: default_model(),
            temperature: default_temperature(),
            api_key_env: default_api_key_env(),
            rate_limit: None,
            max_attempts: default_max_attempts(),
            timeout_secs: default_timeout(),
            transcripts: None,
            responses: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_game")]
    pub game: String,
    /// Custom network, used when `game = "inline"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSpec>,
    pub agent: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representation: Option<String>,
    #[serde(default = "default_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_exploration")]
    pub exploration_rate: f64,
    /// Number of agents; defaults to the network's own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<usize>,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub parallel_agents: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendConfig>,
}

fn default_game() -> String {
    "A".into()
}
fn default_rate() -> f64 {
    DEFAULT_LEARNING_RATE
}
fn default_exploration() -> f64 {
    DEFAULT_EXPLORATION_RATE
}
fn default_rounds() -> usize {
    DEFAULT_ROUNDS
}
fn default_out() -> PathBuf {
    PathBuf::from("runs")
}
fn default_workers() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(game: &str, agent: AgentKind, trials: usize) -> Self {
        Self {
            game: game.into(),
            network: None,
            agent,
            representation: None,
            learning_rate: default_rate(),
            exploration_rate: default_exploration(),
            agents: None,
            rounds: default_rounds(),
            trials,
            seed: 0,
            out: default_out(),
            workers: default_workers(),
            parallel_agents: false,
            backend: None,
        }
    }

    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config = Self::parse_toml(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Parses without the semantic checks, for callers that patch fields
    /// before calling [`validate`](Self::validate).
    pub fn parse_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials < 1 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.rounds < 1 {
            return Err(invalid("rounds", "must be at least 1"));
        }
        if self.workers < 1 {
            return Err(invalid("workers", "must be at least 1"));
        }
        if matches!(self.agents, Some(n) if n < 2) {
            return Err(invalid("agents", "need at least 2 agents"));
        }
        self.network()?;
        let spec = self.agent_spec()?;
        if spec.is_llm() && self.backend.is_none() {
            return Err(invalid("backend", "language-model agents need a [backend] table"));
        }
        if spec.is_llm() {
            self.trial_template()?
                .validate()
                .map_err(|e| invalid("game", e.to_string()))?;
        }
        Ok(())
    }

    pub fn network(&self) -> Result<CongestionNetwork, ConfigError> {
        let network = if self.game.eq_ignore_ascii_case("inline") {
            let spec = self
                .network
                .as_ref()
                .ok_or_else(|| invalid("network", "game = \"inline\" needs a [network] table"))?;
            CongestionNetwork::from_spec(spec).map_err(|e| invalid("network", e.to_string()))?
        } else {
            if self.network.is_some() {
                return Err(invalid("network", "only allowed with game = \"inline\""));
            }
            canonical(&self.game)
                .ok_or_else(|| invalid("game", format!("unknown game {:?}", self.game)))?
        };
        Ok(match self.agents {
            Some(n) => network.with_agents(n),
            None => network,
        })
    }

    pub fn agent_spec(&self) -> Result<AgentSpec, ConfigError> {
        let rate = |field, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(invalid(field, format!("must be positive, got {v}")))
            }
        };
        Ok(match self.agent {
            AgentKind::Uniform => AgentSpec::Uniform,
            AgentKind::BestResponse => AgentSpec::BestResponse,
            AgentKind::Mwu => AgentSpec::Mwu {
                learning_rate: rate("learning_rate", self.learning_rate)?,
            },
            AgentKind::Exp3 => {
                let gamma = self.exploration_rate;
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return Err(invalid("exploration_rate", format!("must be in (0, 1], got {gamma}")));
                }
                AgentSpec::Exp3 {
                    learning_rate: rate("learning_rate", self.learning_rate)?,
                    exploration_rate: gamma,
                }
            }
            AgentKind::Llm => {
                let code = self
                    .representation
                    .as_deref()
                    .ok_or_else(|| invalid("representation", "required for agent = \"llm\""))?;
                let representation: ReprAxes = code
                    .parse()
                    .map_err(|e: crate::repr::ReprError| invalid("representation", e.to_string()))?;
                AgentSpec::Llm { representation }
            }
        })
    }

    pub fn trial_template(&self) -> Result<TrialConfig, ConfigError> {
        let network = self.network()?;
        let mut template = TrialConfig::new(&network, self.agent_spec()?, self.seed);
        template.rounds = self.rounds;
        template.parallel_agents = self.parallel_agents;
        Ok(template)
    }

    pub fn plan(&self) -> Result<ExperimentPlan, ConfigError> {
        Ok(ExperimentPlan {
            template: self.trial_template()?,
            trials: self.trials,
            seed_base: self.seed,
            workers: self.workers,
        })
    }

    /// Builds the shared client for language-model runs; `None` otherwise.
    /// Live backends read their credential from the named environment
    /// variable here, so a missing key fails before any trial starts.
    pub fn build_client(&self) -> Result<Option<Arc<LlmClient>>, ConfigError> {
        if self.agent != AgentKind::Llm {
            return Ok(None);
        }
        let b = self
            .backend
            .as_ref()
            .ok_or_else(|| invalid("backend", "language-model agents need a [backend] table"))?;
        let backend = match b.kind {
            BackendKind::Live => {
                let live = LiveConfig {
                    endpoint: b.endpoint.clone(),
                    api_key_env: b.api_key_env.clone(),
                    rate_limit: b.rate_limit,
                    retry: RetryPolicy {
                        max_attempts: b.max_attempts,
                        ..RetryPolicy::default()
                    },
                    timeout: Duration::from_secs(b.timeout_secs),
                };
                Backend::Live(Box::new(LiveBackend::from_env(live)?))
            }
            BackendKind::Replay => {
                let dir = b
                    .transcripts
                    .as_ref()
                    .ok_or_else(|| invalid("backend.transcripts", "required for replay"))?;
                let entries =
                    read_transcripts(dir).map_err(|e| ConfigError::Transcripts(e.to_string()))?;
                Backend::replay(&entries)
            }
            BackendKind::Scripted => Backend::scripted(b.responses.iter().cloned()),
        };
        Ok(Some(Arc::new(LlmClient::new(backend, b.model.clone(), b.temperature))))
    }
}
