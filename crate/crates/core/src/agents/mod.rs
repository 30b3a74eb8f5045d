//! Decision policies.
//!
//! Every agent owns one [`Policy`]. The engine calls [`Policy::decide`] once
//! per round with the history of completed rounds only, then, after all
//! decisions of the round are committed and evaluated, calls
//! [`Policy::observe`] with the round's record. Learning state changes only
//! in `observe`.

mod llm;
mod weights;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{GameHistory, RoundRecord};
use crate::llm::{LlmError, ParseError};
use crate::network::{CongestionNetwork, Cost, NetworkError};
use crate::repr::{ReprAxes, ReprError};
use crate::seed::AgentRng;

pub use llm::{LlmPolicy, MAX_LLM_ATTEMPTS};
pub use weights::{sample_index, WeightState};

pub const DEFAULT_LEARNING_RATE: f64 = 0.75;
pub const DEFAULT_EXPLORATION_RATE: f64 = 0.75;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("loss {0} outside [0, 1]")]
    LossOutOfRange(f64),
    #[error("expected {expected} losses, got {got}")]
    LossArity { expected: usize, got: usize },
    #[error("played-action probability {0} must be in (0, 1]")]
    BadProbability(f64),
    #[error("action {action} out of range for {k} actions")]
    BadAction { action: usize, k: usize },
    #[error("payoff {payoff} outside [0, {endowment}]")]
    PayoffOutOfRange { payoff: Cost, endowment: Cost },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Repr(#[from] ReprError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("no usable answer after {attempts} attempts: {last}")]
    Unparseable { attempts: usize, last: ParseError },
    #[error("language-model agents need a configured client")]
    NoClient,
}

/// What an agent may look at when choosing its next route.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub agent: usize,
    /// 1-based index of the round being decided.
    pub round: usize,
    /// Total rounds in the game.
    pub rounds: usize,
    pub trial: usize,
    pub network: &'a CongestionNetwork,
    /// Exactly `round - 1` completed rounds.
    pub history: &'a GameHistory,
}

pub trait Policy: Send {
    fn decide(&mut self, ctx: &DecisionContext<'_>, rng: &mut AgentRng) -> Result<usize, AgentError>;

    fn observe(
        &mut self,
        _network: &CongestionNetwork,
        _record: &RoundRecord,
        _agent: usize,
    ) -> Result<(), AgentError> {
        Ok(())
    }

    /// Learner weights, for policies that keep them.
    fn weights(&self) -> Option<&WeightState> {
        None
    }
}

/// Policy kind plus hyperparameters, as written in configs and run logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AgentSpec {
    Uniform,
    BestResponse,
    Mwu {
        learning_rate: f64,
    },
    Exp3 {
        learning_rate: f64,
        exploration_rate: f64,
    },
    Llm {
        representation: ReprAxes,
    },
}

impl AgentSpec {
    pub fn mwu() -> Self {
        AgentSpec::Mwu {
            learning_rate: DEFAULT_LEARNING_RATE,
        }
    }

    pub fn exp3() -> Self {
        AgentSpec::Exp3 {
            learning_rate: DEFAULT_LEARNING_RATE,
            exploration_rate: DEFAULT_EXPLORATION_RATE,
        }
    }

    /// Row label used in reports: the representation code for language-model
    /// agents, the algorithm name otherwise.
    pub fn label(&self) -> String {
        match self {
            AgentSpec::Uniform => "Uniform".into(),
            AgentSpec::BestResponse => "BestResponse".into(),
            AgentSpec::Mwu { .. } => "MWU".into(),
            AgentSpec::Exp3 { .. } => "EXP3".into(),
            AgentSpec::Llm { representation } => representation.code(),
        }
    }

    pub fn is_llm(&self) -> bool {
        matches!(self, AgentSpec::Llm { .. })
    }

    pub fn representation(&self) -> Option<ReprAxes> {
        match self {
            AgentSpec::Llm { representation } => Some(*representation),
            _ => None,
        }
    }
}

/// Rescales a payoff in `[0, endowment]` to a loss in `[0, 1]`.
pub fn loss_from_payoff(payoff: Cost, endowment: Cost) -> Result<f64, AgentError> {
    if payoff < 0 || payoff > endowment || endowment <= 0 {
        return Err(AgentError::PayoffOutOfRange { payoff, endowment });
    }
    Ok(1.0 - payoff as f64 / endowment as f64)
}

#[derive(Debug, Clone, Default)]
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn decide(&mut self, ctx: &DecisionContext<'_>, rng: &mut AgentRng) -> Result<usize, AgentError> {
        Ok(rng.gen_range(0..ctx.network.route_count()))
    }
}

/// Myopic best response to the previous round, holding the others fixed.
///
/// Round 1 is uniformly random. A tie with the current route keeps it;
/// otherwise the lowest-index best route is taken.
#[derive(Debug, Clone, Default)]
pub struct BestResponsePolicy;

pub fn best_response(network: &CongestionNetwork, last: &RoundRecord, agent: usize) -> usize {
    let own = last.choice(agent);
    let cf = network.counterfactuals_from_counts(&last.counts, own);
    let best = *cf.iter().max().expect("at least one route");
    if cf[own] == best {
        own
    } else {
        cf.iter().position(|&v| v == best).expect("max exists")
    }
}

impl Policy for BestResponsePolicy {
    fn decide(&mut self, ctx: &DecisionContext<'_>, rng: &mut AgentRng) -> Result<usize, AgentError> {
        match ctx.history.last() {
            None => Ok(rng.gen_range(0..ctx.network.route_count())),
            Some(last) => Ok(best_response(ctx.network, last, ctx.agent)),
        }
    }
}

/// Multiplicative weights with full feedback: after each round every route's
/// loss is computed from the agent's counterfactual payoffs.
#[derive(Debug, Clone)]
pub struct MwuPolicy {
    state: WeightState,
}

impl MwuPolicy {
    pub fn new(routes: usize, learning_rate: f64) -> Self {
        Self {
            state: WeightState::new(routes, learning_rate, 0.0),
        }
    }
}

impl Policy for MwuPolicy {
    fn decide(&mut self, _ctx: &DecisionContext<'_>, rng: &mut AgentRng) -> Result<usize, AgentError> {
        Ok(sample_index(&self.state.mwu_probabilities(), rng))
    }

    fn observe(
        &mut self,
        network: &CongestionNetwork,
        record: &RoundRecord,
        agent: usize,
    ) -> Result<(), AgentError> {
        let cf = network.counterfactual_payoffs(&record.choices, agent)?;
        let losses = cf
            .into_iter()
            .map(|p| loss_from_payoff(p, network.endowment()))
            .collect::<Result<Vec<_>, _>>()?;
        self.state.mwu_update(&losses)
    }

    fn weights(&self) -> Option<&WeightState> {
        Some(&self.state)
    }
}

/// EXP3: samples from the exploration mixture, then updates only the played
/// route with the importance-weighted loss of its realized payoff.
#[derive(Debug, Clone)]
pub struct Exp3Policy {
    state: WeightState,
    pending: Option<(usize, f64)>,
}

impl Exp3Policy {
    pub fn new(routes: usize, learning_rate: f64, exploration_rate: f64) -> Self {
        Self {
            state: WeightState::new(routes, learning_rate, exploration_rate),
            pending: None,
        }
    }
}

impl Policy for Exp3Policy {
    fn decide(&mut self, _ctx: &DecisionContext<'_>, rng: &mut AgentRng) -> Result<usize, AgentError> {
        let probs = self.state.exp3_probabilities();
        let action = sample_index(&probs, rng);
        self.pending = Some((action, probs[action]));
        Ok(action)
    }

    fn observe(
        &mut self,
        network: &CongestionNetwork,
        record: &RoundRecord,
        agent: usize,
    ) -> Result<(), AgentError> {
        let played = record.choice(agent);
        let prob = match self.pending.take() {
            Some((action, p)) if action == played => p,
            _ => self.state.exp3_probabilities()[played],
        };
        let loss = loss_from_payoff(record.payoffs[agent], network.endowment())?;
        self.state.exp3_update(played, loss, prob)
    }

    fn weights(&self) -> Option<&WeightState> {
        Some(&self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{game_a, game_b, ActionProfile};
    use crate::seed::agent_rng;

    fn ctx<'a>(network: &'a CongestionNetwork, history: &'a GameHistory, agent: usize) -> DecisionContext<'a> {
        DecisionContext {
            agent,
            round: history.len() + 1,
            rounds: 40,
            trial: 0,
            network,
            history,
        }
    }

    #[test]
    fn losses_from_payoffs() {
        assert_eq!(loss_from_payoff(400, 400).unwrap(), 0.0);
        assert_eq!(loss_from_payoff(0, 400).unwrap(), 1.0);
        assert_eq!(loss_from_payoff(100, 400).unwrap(), 0.75);
        assert!(loss_from_payoff(401, 400).is_err());
        assert!(loss_from_payoff(-1, 400).is_err());
    }

    #[test]
    fn uniform_frequency() {
        let a = game_a();
        let h = GameHistory::new();
        let mut rng = agent_rng(1, 0);
        let mut p = UniformPolicy;
        let draws = 10_000;
        let upper = (0..draws)
            .filter(|_| p.decide(&ctx(&a, &h, 0), &mut rng).unwrap() == 0)
            .count();
        let freq = upper as f64 / draws as f64;
        assert!((freq - 0.5).abs() <= 0.02, "{freq}");
    }

    #[test]
    fn best_response_game_a() {
        let a = game_a();
        // agent 17 was on O-R-D with 13 there and 5 on O-L-D
        let mut h = GameHistory::new();
        h.push(RoundRecord::evaluate(&a, 1, ActionProfile::from_counts(&[5, 13])).unwrap());
        let mut rng = agent_rng(0, 17);
        assert_eq!(BestResponsePolicy.decide(&ctx(&a, &h, 17), &mut rng).unwrap(), 0);
        // agent 0 on O-L-D is already best off
        assert_eq!(BestResponsePolicy.decide(&ctx(&a, &h, 0), &mut rng).unwrap(), 0);
    }

    #[test]
    fn best_response_keeps_equilibrium_routes() {
        let a = game_a();
        let rec = RoundRecord::evaluate(&a, 1, ActionProfile::from_counts(&[9, 9])).unwrap();
        for agent in 0..18 {
            assert_eq!(best_response(&a, &rec, agent), rec.choice(agent));
        }
        let b = game_b();
        let rec = RoundRecord::evaluate(&b, 1, ActionProfile::from_counts(&[0, 0, 18])).unwrap();
        for agent in 0..18 {
            assert_eq!(best_response(&b, &rec, agent), 2);
        }
    }

    #[test]
    fn best_response_game_b_is_bridge() {
        let b = game_b();
        for counts in [[18, 0, 0], [0, 18, 0], [6, 6, 6], [1, 16, 1]] {
            let rec = RoundRecord::evaluate(&b, 1, ActionProfile::from_counts(&counts)).unwrap();
            for agent in 0..18 {
                assert_eq!(best_response(&b, &rec, agent), 2, "{counts:?}");
            }
        }
    }

    #[test]
    fn mwu_observe_uses_counterfactual_losses() {
        let a = game_a();
        let rec = RoundRecord::evaluate(&a, 1, ActionProfile::from_counts(&[7, 11])).unwrap();
        let mut p = MwuPolicy::new(2, 0.75);
        p.observe(&a, &rec, 17).unwrap();
        // counterfactual payoffs (110, 80) -> losses (0.725, 0.8)
        let w = p.weights().unwrap().weights();
        assert_eq!(w[0], 1.0);
        let expected = (-0.75 * (0.8 - 0.725f64)).exp();
        assert!((w[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn exp3_observe_updates_played_route_only() {
        let b = game_b();
        let h = GameHistory::new();
        let mut p = Exp3Policy::new(3, 0.75, 0.75);
        let mut rng = agent_rng(3, 0);
        let played = p.decide(&ctx(&b, &h, 0), &mut rng).unwrap();
        let mut counts = [0usize; 3];
        counts[played] = 18;
        let rec = RoundRecord::evaluate(&b, 1, ActionProfile::from_counts(&counts)).unwrap();
        p.observe(&b, &rec, 0).unwrap();
        let w = p.weights().unwrap().weights();
        for (r, &x) in w.iter().enumerate() {
            if r == played {
                assert!(x < 1.0);
            } else {
                assert_eq!(x, 1.0);
            }
        }
    }

    #[test]
    fn spec_labels() {
        assert_eq!(AgentSpec::mwu().label(), "MWU");
        assert_eq!(AgentSpec::exp3().label(), "EXP3");
        let s = AgentSpec::Llm {
            representation: "S-RO".parse().unwrap(),
        };
        assert_eq!(s.label(), "S-RO");
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"kind":"llm","representation":"S-RO"}"#);
        assert_eq!(serde_json::from_str::<AgentSpec>(&json).unwrap(), s);
    }
}
