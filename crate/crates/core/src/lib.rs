//! Repeated atomic selfish-routing games played by learning algorithms and
//! language-model agents.
//!
//! The crate covers the whole simulation path: congestion networks and their
//! payoff/regret arithmetic ([`network`]), the round/trial/experiment engine
//! ([`engine`]), natural-language state representations ([`repr`]), decision
//! policies ([`agents`]), a chat-completion client ([`llm`]), metrics
//! ([`metrics`]) and the config, run-log and report formats ([`io`]).

pub mod agents;
pub mod engine;
pub mod history;
pub mod io;
pub mod llm;
pub mod metrics;
pub mod network;
pub mod repr;
pub mod seed;

pub use agents::{AgentSpec, Policy, WeightState};
pub use engine::{run_experiment, run_round, run_trial, ExperimentPlan, TrialConfig, TrialResult};
pub use history::{GameHistory, RoundRecord};
pub use metrics::{summarize_experiment, ExperimentSummary};
pub use network::{game_a, game_b, ActionProfile, CongestionNetwork, Cost, EdgeCost};
pub use repr::ReprAxes;
