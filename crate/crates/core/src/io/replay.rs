//! Re-running a logged trial and checking it decision for decision.

use std::sync::Arc;

use thiserror::Error;

use super::runlog::{read_transcripts, transcript_path, RunLog, RunLogError, TRANSCRIPT_DIR};
use crate::engine::{run_trial_with, EngineError};
use crate::history::RoundRecord;
use crate::llm::{Backend, LlmClient, LlmError};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    RunLog(#[from] RunLogError),
    #[error("trial {0} not found in the run log")]
    UnknownTrial(usize),
    #[error("trial {0} did not complete in the recorded run")]
    Incomplete(usize),
    #[error("replay diverged at round {round}, agent {agent}: {detail}")]
    Diverged {
        round: usize,
        agent: usize,
        detail: String,
    },
    #[error("replay failed: {0}")]
    Engine(EngineError),
}

impl ReplayError {
    /// Whether the failure is a request with no stored response.
    pub fn is_replay_miss(&self) -> bool {
        matches!(
            self,
            ReplayError::Engine(EngineError::Agent {
                source: crate::agents::AgentError::Llm(LlmError::ReplayMiss(_)),
                ..
            })
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub trial: usize,
    pub rounds: usize,
    pub decisions: usize,
}

/// The first agent whose choice differs, if any.
fn first_mismatch(expected: &RoundRecord, got: &RoundRecord) -> Option<(usize, String)> {
    let (e, g) = (expected.choices.choices(), got.choices.choices());
    if let Some(agent) = (0..e.len().min(g.len())).find(|&a| e[a] != g[a]) {
        return Some((agent, format!("recorded route {}, replayed route {}", e[agent], g[agent])));
    }
    if e.len() != g.len() {
        return Some((e.len().min(g.len()), "agent count differs".into()));
    }
    if expected != got {
        return Some((0, "round outcome differs".into()));
    }
    None
}

/// Re-executes `trial` of a run. Language-model agents are answered from
/// the trial's stored transcript; an absent transcript leaves the replay
/// backend empty, so the first request fails with a replay miss.
pub fn replay_trial(log: &RunLog, trial: usize) -> Result<ReplayReport, ReplayError> {
    let logged = log.trial(trial).ok_or(ReplayError::UnknownTrial(trial))?;
    if !logged.is_complete() {
        return Err(ReplayError::Incomplete(trial));
    }
    let config = log.trial_config(trial);
    let mut recorded = true;
    let client = if config.agent.is_llm() {
        let path = transcript_path(&log.dir().join(TRANSCRIPT_DIR), trial);
        let entries = if path.exists() {
            read_transcripts(&path)?
        } else {
            log::warn!("{}: no transcript; every request will miss", path.display());
            recorded = false;
            Vec::new()
        };
        let (model, temperature) = log
            .header
            .config
            .as_ref()
            .and_then(|c| c.backend.as_ref())
            .map(|b| (b.model.clone(), b.temperature))
            .unwrap_or_else(|| (crate::llm::DEFAULT_MODEL.into(), 1.0));
        Some(Arc::new(LlmClient::new(Backend::replay(&entries), model, temperature)))
    } else {
        None
    };

    let mut divergence: Option<(usize, usize, String)> = None;
    let result = run_trial_with(&config, client.as_ref(), &mut |got| {
        if divergence.is_some() {
            return;
        }
        let expected = &logged.rounds[got.round - 1];
        if let Some((agent, detail)) = first_mismatch(expected, got) {
            divergence = Some((got.round, agent, detail));
        }
    });
    if let Some((round, agent, detail)) = divergence {
        return Err(ReplayError::Diverged { round, agent, detail });
    }
    match result {
        Ok(r) => Ok(ReplayReport {
            trial,
            rounds: r.history.len(),
            decisions: r.history.len() * config.agents,
        }),
        // with a transcript on hand, a failure in a round that matched so
        // far (including a miss after an unexpected re-prompt) is where the
        // replay left the recorded path
        Err(EngineError::Agent { round, agent, source }) if recorded => {
            Err(ReplayError::Diverged {
                round,
                agent,
                detail: source.to_string(),
            })
        }
        Err(e) => Err(ReplayError::Engine(e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentSpec;
    use crate::engine::{run_experiment, ExperimentPlan, TrialConfig};
    use crate::io::runlog::{Header, RunLogWriter, SCHEMA_VERSION};
    use crate::network::game_b;

    #[test]
    fn algorithmic_trial_replays_and_edits_are_caught() {
        let dir = tempfile::tempdir().unwrap();
        let header = Header {
            schema_version: SCHEMA_VERSION,
            config: None,
            template: TrialConfig::new(&game_b(), AgentSpec::exp3(), 0).with_rounds(6),
            trials: 2,
            seed_base: 3,
        };
        let writer = RunLogWriter::create(dir.path(), &header).unwrap();
        let plan = ExperimentPlan {
            template: header.template.clone(),
            trials: 2,
            seed_base: 3,
            workers: 1,
        };
        run_experiment(&plan, None, &|e| writer.record(e)).unwrap();
        writer.finish().unwrap();
        let mut log = RunLog::read(dir.path()).unwrap();
        let report = replay_trial(&log, 1).unwrap();
        assert_eq!(report.decisions, 6 * 18);
        assert!(matches!(replay_trial(&log, 7), Err(ReplayError::UnknownTrial(7))));

        let rec = &mut log.trials[1].rounds[3];
        let mut choices = rec.choices.choices().to_vec();
        choices[5] = (choices[5] + 1) % 3;
        rec.choices = crate::network::ActionProfile::new(choices);
        match replay_trial(&log, 1) {
            Err(ReplayError::Diverged { round, agent, .. }) => assert_eq!((round, agent), (4, 5)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
