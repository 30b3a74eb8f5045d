//! Exponential-weights state shared by MWU and EXP3.

use rand::Rng;

use super::AgentError;

/// Per-route positive weights with the learner's rates.
///
/// Weights start at 1 and are divided by their maximum after every update,
/// which leaves both algorithms' probabilities unchanged but keeps the
/// weights away from underflow.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    weights: Vec<f64>,
    learning_rate: f64,
    exploration_rate: f64,
}

impl WeightState {
    pub fn new(routes: usize, learning_rate: f64, exploration_rate: f64) -> Self {
        assert!(routes > 0, "need at least one route");
        Self {
            weights: vec![1.0; routes],
            learning_rate,
            exploration_rate,
        }
    }

    pub fn with_weights(weights: Vec<f64>, learning_rate: f64, exploration_rate: f64) -> Self {
        assert!(!weights.is_empty());
        assert!(weights.iter().all(|w| w.is_finite() && *w > 0.0));
        Self {
            weights,
            learning_rate,
            exploration_rate,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn exploration_rate(&self) -> f64 {
        self.exploration_rate
    }

    fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `w_i / sum_j w_j`
    pub fn mwu_probabilities(&self) -> Vec<f64> {
        let total = self.total();
        self.weights.iter().map(|w| w / total).collect()
    }

    /// `(1 - gamma) * w_i / sum_j w_j + gamma / k`
    pub fn exp3_probabilities(&self) -> Vec<f64> {
        let g = self.exploration_rate;
        let floor = g / self.k() as f64;
        self.mwu_probabilities()
            .into_iter()
            .map(|p| (1.0 - g) * p + floor)
            .collect()
    }

    /// Full-information update `w_i <- w_i * exp(-eta * loss_i)`.
    pub fn mwu_update(&mut self, losses: &[f64]) -> Result<(), AgentError> {
        if losses.len() != self.k() {
            return Err(AgentError::LossArity {
                expected: self.k(),
                got: losses.len(),
            });
        }
        for &l in losses {
            check_loss(l)?;
        }
        for (w, l) in self.weights.iter_mut().zip(losses) {
            *w *= (-self.learning_rate * l).exp();
        }
        self.renormalize();
        Ok(())
    }

    /// Bandit update: only the played route's weight moves, using the
    /// importance-weighted estimate `loss / prob_played`.
    pub fn exp3_update(
        &mut self,
        played: usize,
        loss: f64,
        prob_played: f64,
    ) -> Result<(), AgentError> {
        check_loss(loss)?;
        if !(prob_played > 0.0 && prob_played <= 1.0) {
            return Err(AgentError::BadProbability(prob_played));
        }
        if played >= self.k() {
            return Err(AgentError::BadAction {
                action: played,
                k: self.k(),
            });
        }
        let estimate = loss / prob_played;
        self.weights[played] *= (-self.learning_rate * estimate).exp();
        self.renormalize();
        Ok(())
    }

    fn renormalize(&mut self) {
        let max = self.weights.iter().copied().fold(f64::MIN, f64::max);
        for w in &mut self.weights {
            *w /= max;
            // a weight this far below the leader has no effect on sampling
            if *w < f64::MIN_POSITIVE {
                *w = f64::MIN_POSITIVE;
            }
        }
    }
}

fn check_loss(l: f64) -> Result<(), AgentError> {
    if (0.0..=1.0).contains(&l) {
        Ok(())
    } else {
        Err(AgentError::LossOutOfRange(l))
    }
}

/// Draws an index from a probability vector by inverse CDF.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
