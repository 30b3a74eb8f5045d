//! Per-round records and the game history they form.

use serde::{Deserialize, Serialize};

use crate::network::{ActionProfile, CongestionNetwork, Cost, NetworkError};

/// Outcome of one round: every agent's route, the route counts, and the
/// resulting payoffs and regrets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    pub choices: ActionProfile,
    /// Agents per route, in route-catalog order.
    pub counts: Vec<usize>,
    pub payoffs: Vec<Cost>,
    pub regrets: Vec<Cost>,
}

impl RoundRecord {
    /// Evaluates a committed profile on a freshly reset network.
    pub fn evaluate(
        network: &CongestionNetwork,
        round: usize,
        choices: ActionProfile,
    ) -> Result<Self, NetworkError> {
        let payoffs = network.payoffs(&choices)?;
        let regrets = network.regrets(&choices)?;
        let counts = choices.route_counts(network.route_count());
        Ok(Self {
            round,
            choices,
            counts,
            payoffs,
            regrets,
        })
    }

    pub fn agents(&self) -> usize {
        self.choices.len()
    }

    pub fn choice(&self, agent: usize) -> usize {
        self.choices.choice(agent)
    }

    pub fn mean_payoff(&self) -> f64 {
        mean(&self.payoffs)
    }

    pub fn mean_regret(&self) -> f64 {
        mean(&self.regrets)
    }
}

fn mean(v: &[Cost]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<Cost>() as f64 / v.len() as f64
}

/// Ordered round records; round indices run 1, 2, 3, ...
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GameHistory {
    records: Vec<RoundRecord>,
}

impl GameHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a history, checking that rounds are consecutive from 1.
    pub fn from_records(records: Vec<RoundRecord>) -> Option<Self> {
        records
            .iter()
            .enumerate()
            .all(|(i, r)| r.round == i + 1)
            .then_some(Self { records })
    }

    pub fn push(&mut self, mut record: RoundRecord) {
        record.round = self.records.len() + 1;
        self.records.push(record);
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&RoundRecord> {
        self.records.last()
    }

    /// Route chosen by `agent` in each round.
    pub fn agent_routes(&self, agent: usize) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().map(move |r| r.choice(agent))
    }

    /// History truncated to its first `rounds` records.
    pub fn prefix(&self, rounds: usize) -> GameHistory {
        GameHistory {
            records: self.records[..rounds.min(self.records.len())].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::game_a;

    #[test]
    fn record_conserves_agents() {
        let a = game_a();
        let r = RoundRecord::evaluate(&a, 1, ActionProfile::from_counts(&[5, 13])).unwrap();
        assert_eq!(r.counts.iter().sum::<usize>(), 18);
        assert_eq!(r.payoffs.len(), 18);
        assert_eq!(r.regrets.len(), 18);
        for agent in 0..18 {
            assert_eq!(r.regrets[agent], a.regret(&r.choices, agent).unwrap());
        }
    }

    #[test]
    fn push_renumbers_rounds() {
        let a = game_a();
        let mut h = GameHistory::new();
        for _ in 0..3 {
            h.push(RoundRecord::evaluate(&a, 99, ActionProfile::from_counts(&[9, 9])).unwrap());
        }
        let rounds: Vec<_> = h.records().iter().map(|r| r.round).collect();
        assert_eq!(rounds, vec![1, 2, 3]);
        assert!(GameHistory::from_records(h.records()[1..].to_vec()).is_none());
    }
}
