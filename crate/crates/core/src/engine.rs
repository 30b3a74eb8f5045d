//! Repeated-game orchestration.
//!
//! A round polls every agent for a route given the completed history, waits
//! for all decisions (the barrier), evaluates the profile on a freshly reset
//! network, and only then hands the record back to each policy. Trials run a
//! fixed number of rounds; experiments run trials with seeds `seed_base + i`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    AgentError, AgentSpec, BestResponsePolicy, DecisionContext, Exp3Policy, LlmPolicy, MwuPolicy,
    Policy, UniformPolicy,
};
use crate::history::{GameHistory, RoundRecord};
use crate::llm::{LlmClient, Transcript, TranscriptEntry};
use crate::metrics::{focal_count, switch_counts, GameKind};
use crate::network::{ActionProfile, CongestionNetwork, NetworkError, NetworkSpec};
use crate::repr::render_system_prompt;
use crate::seed::{agent_rng, AgentRng};

pub const DEFAULT_ROUNDS: usize = 40;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid trial configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("round {round}: agent {agent}: {source}")]
    Agent {
        round: usize,
        agent: usize,
        #[source]
        source: AgentError,
    },
}

/// A failure inside one round, tagged with the agent that caused it.
#[derive(Debug, Error)]
#[error("agent {agent}: {source}")]
pub struct RoundError {
    pub agent: usize,
    #[source]
    pub source: AgentError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub network: NetworkSpec,
    pub agents: usize,
    pub rounds: usize,
    pub agent: AgentSpec,
    pub seed: u64,
    pub trial: usize,
    /// Poll agents of a round on the thread pool instead of in order.
    #[serde(default)]
    pub parallel_agents: bool,
}

impl TrialConfig {
    pub fn new(network: &CongestionNetwork, agent: AgentSpec, seed: u64) -> Self {
        Self {
            network: network.to_spec(),
            agents: network.default_agents(),
            rounds: DEFAULT_ROUNDS,
            agent,
            seed,
            trial: 0,
            parallel_agents: false,
        }
    }

    pub fn with_agents(mut self, n: usize) -> Self {
        self.agents = n;
        self
    }

    pub fn with_rounds(mut self, rounds: usize) -> Self {
        self.rounds = rounds;
        self
    }

    /// The network, with its agent count set to this trial's.
    pub fn build_network(&self) -> Result<CongestionNetwork, EngineError> {
        Ok(CongestionNetwork::from_spec(&self.network)?.with_agents(self.agents))
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.rounds < 1 {
            return Err(EngineError::Config("rounds must be at least 1".into()));
        }
        if self.agents < 2 {
            return Err(EngineError::Config("need at least 2 agents".into()));
        }
        let network = self.build_network()?;
        if self.agent.is_llm() {
            render_system_prompt(&network, self.rounds)
                .map_err(|e| EngineError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// A policy with its private random stream.
pub struct AgentSlot {
    pub policy: Box<dyn Policy>,
    pub rng: AgentRng,
}

/// Builds one policy per agent; language-model agents share `client` and
/// write to `transcript`.
pub fn build_agents(
    config: &TrialConfig,
    network: &CongestionNetwork,
    client: Option<&Arc<LlmClient>>,
    transcript: &Arc<Transcript>,
) -> Result<Vec<AgentSlot>, EngineError> {
    let k = network.route_count();
    (0..config.agents)
        .map(|agent| {
            let policy: Box<dyn Policy> = match config.agent {
                AgentSpec::Uniform => Box::new(UniformPolicy),
                AgentSpec::BestResponse => Box::new(BestResponsePolicy),
                AgentSpec::Mwu { learning_rate } => Box::new(MwuPolicy::new(k, learning_rate)),
                AgentSpec::Exp3 {
                    learning_rate,
                    exploration_rate,
                } => Box::new(Exp3Policy::new(k, learning_rate, exploration_rate)),
                AgentSpec::Llm { representation } => {
                    let client = client.ok_or_else(|| EngineError::Agent {
                        round: 0,
                        agent,
                        source: AgentError::NoClient,
                    })?;
                    Box::new(LlmPolicy::new(
                        representation,
                        Arc::clone(client),
                        Arc::clone(transcript),
                    ))
                }
            };
            Ok(AgentSlot {
                policy,
                rng: agent_rng(config.seed, agent),
            })
        })
        .collect()
}

/// Plays one round: collect all decisions, evaluate, then deliver feedback.
pub fn run_round(
    network: &CongestionNetwork,
    agents: &mut [AgentSlot],
    history: &GameHistory,
    rounds: usize,
    trial: usize,
    parallel: bool,
) -> Result<RoundRecord, RoundError> {
    let round = history.len() + 1;
    let decide = |(agent, slot): (usize, &mut AgentSlot)| {
        let ctx = DecisionContext {
            agent,
            round,
            rounds,
            trial,
            network,
            history,
        };
        slot.policy
            .decide(&ctx, &mut slot.rng)
            .map_err(|source| RoundError { agent, source })
    };
    let choices: Vec<usize> = if parallel {
        agents.par_iter_mut().enumerate().map(decide).collect::<Result<_, _>>()?
    } else {
        agents.iter_mut().enumerate().map(decide).collect::<Result<_, _>>()?
    };

    let record = RoundRecord::evaluate(network, round, ActionProfile::new(choices)).map_err(|e| {
        RoundError {
            agent: match &e {
                NetworkError::InvalidProfile { agent, .. } => *agent,
                _ => 0,
            },
            source: e.into(),
        }
    })?;

    for (agent, slot) in agents.iter_mut().enumerate() {
        slot.policy
            .observe(network, &record, agent)
            .map_err(|source| RoundError { agent, source })?;
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub config: TrialConfig,
    pub history: GameHistory,
    pub switch_counts: Vec<usize>,
    /// Focal-route count per round; absent for non-canonical networks.
    pub focal_counts: Option<Vec<usize>>,
    /// Every completion attempt of the trial's language-model agents.
    #[serde(skip)]
    pub transcript: Vec<TranscriptEntry>,
    /// Final learner weights per agent, for weight-based policies.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_weights: Option<Vec<Vec<f64>>>,
}

impl TrialResult {
    pub fn label(&self) -> String {
        self.config.agent.label()
    }

    pub fn network(&self) -> Result<CongestionNetwork, EngineError> {
        self.config.build_network()
    }

    /// Derives the per-trial statistics from a finished history.
    pub fn assemble(
        config: TrialConfig,
        history: GameHistory,
        transcript: Vec<TranscriptEntry>,
        final_weights: Option<Vec<Vec<f64>>>,
    ) -> Result<Self, EngineError> {
        let network = config.build_network()?;
        let focal_counts = GameKind::of(&network).ok().map(|_| {
            history
                .records()
                .iter()
                .map(|r| focal_count(&network, &r.counts).expect("canonical game"))
                .collect()
        });
        Ok(Self {
            switch_counts: switch_counts(&history),
            focal_counts,
            config,
            history,
            transcript,
            final_weights,
        })
    }
}

pub fn run_trial(
    config: &TrialConfig,
    client: Option<&Arc<LlmClient>>,
) -> Result<TrialResult, EngineError> {
    run_trial_with(config, client, &mut |_| {})
}

/// Like [`run_trial`], calling `on_round` after each committed round.
pub fn run_trial_with(
    config: &TrialConfig,
    client: Option<&Arc<LlmClient>>,
    on_round: &mut dyn FnMut(&RoundRecord),
) -> Result<TrialResult, EngineError> {
    run_trial_recorded(config, client, on_round).0
}

/// Runs a trial and also returns the transcript, which survives failures.
pub fn run_trial_recorded(
    config: &TrialConfig,
    client: Option<&Arc<LlmClient>>,
    on_round: &mut dyn FnMut(&RoundRecord),
) -> (Result<TrialResult, EngineError>, Vec<TranscriptEntry>) {
    let transcript = Arc::new(Transcript::new());
    let result = play(config, client, &transcript, on_round);
    let entries = transcript.snapshot();
    let result = result.and_then(|(history, weights)| {
        TrialResult::assemble(config.clone(), history, entries.clone(), weights)
    });
    (result, entries)
}

fn play(
    config: &TrialConfig,
    client: Option<&Arc<LlmClient>>,
    transcript: &Arc<Transcript>,
    on_round: &mut dyn FnMut(&RoundRecord),
) -> Result<(GameHistory, Option<Vec<Vec<f64>>>), EngineError> {
    config.validate()?;
    let network = config.build_network()?;
    let mut agents = build_agents(config, &network, client, transcript)?;
    let mut history = GameHistory::new();
    for _ in 0..config.rounds {
        let record = run_round(
            &network,
            &mut agents,
            &history,
            config.rounds,
            config.trial,
            config.parallel_agents,
        )
        .map_err(|e| EngineError::Agent {
            round: history.len() + 1,
            agent: e.agent,
            source: e.source,
        })?;
        on_round(&record);
        history.push(record);
    }
    let final_weights = agents
        .iter()
        .map(|s| s.policy.weights().map(|w| w.weights().to_vec()))
        .collect::<Option<Vec<_>>>();
    Ok((history, final_weights))
}

/// Outcome of one trial of an experiment; failures are kept, not dropped.
#[derive(Debug)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub result: Result<TrialResult, EngineError>,
    /// Completion attempts of the trial, kept even when it failed.
    pub transcript: Vec<TranscriptEntry>,
}

/// Progress events emitted while an experiment runs. They may arrive from
/// several worker threads; `trial` identifies the source.
#[derive(Debug)]
pub enum TrialEvent<'a> {
    Round { trial: usize, record: &'a RoundRecord },
    Finished { outcome: &'a TrialOutcome },
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub template: TrialConfig,
    pub trials: usize,
    pub seed_base: u64,
    /// Worker threads for running trials concurrently; 1 runs them in order.
    pub workers: usize,
}

/// Runs `plan.trials` trials, trial `i` with seed `seed_base + i`. Results
/// come back in trial order regardless of worker count.
pub fn run_experiment(
    plan: &ExperimentPlan,
    client: Option<&Arc<LlmClient>>,
    sink: &(dyn Fn(TrialEvent<'_>) + Sync),
) -> Result<Vec<TrialOutcome>, EngineError> {
    if plan.trials < 1 {
        return Err(EngineError::Config("trials must be at least 1".into()));
    }
    plan.template.validate()?;
    let run_one = |i: usize| {
        let mut config = plan.template.clone();
        config.trial = i;
        config.seed = plan.seed_base.wrapping_add(i as u64);
        let (result, transcript) = run_trial_recorded(&config, client, &mut |record| {
            sink(TrialEvent::Round { trial: i, record })
        });
        if let Err(e) = &result {
            log::error!("trial {i} failed: {e}");
        }
        let outcome = TrialOutcome {
            trial: i,
            seed: config.seed,
            result,
            transcript,
        };
        sink(TrialEvent::Finished { outcome: &outcome });
        outcome
    };
    if plan.workers <= 1 {
        return Ok((0..plan.trials).map(run_one).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| EngineError::Config(e.to_string()))?;
    Ok(pool.install(|| (0..plan.trials).into_par_iter().map(run_one).collect()))
}
