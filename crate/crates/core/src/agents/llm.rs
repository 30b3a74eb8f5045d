use std::sync::Arc;

use super::{AgentError, DecisionContext, Policy};
use crate::llm::{parse_route, LlmClient, RequestKey, Transcript, TranscriptEntry};
use crate::repr::{render_context, render_format_reminder, ChatTurn, ReprAxes};
use crate::seed::AgentRng;

/// Total tries per decision, counting the first.
pub const MAX_LLM_ATTEMPTS: usize = 3;

/// Language-model agent: renders its representation of the history, asks the
/// client for a completion and parses the route out of the answer.
///
/// An answer without a usable route is followed by a format reminder and a
/// fresh request, up to [`MAX_LLM_ATTEMPTS`] in total. Every attempt is
/// written to the transcript before `decide` returns.
pub struct LlmPolicy {
    axes: ReprAxes,
    client: Arc<LlmClient>,
    transcript: Arc<Transcript>,
    /// Accepted raw answers, one per completed round.
    completions: Vec<String>,
}

impl LlmPolicy {
    pub fn new(axes: ReprAxes, client: Arc<LlmClient>, transcript: Arc<Transcript>) -> Self {
        Self {
            axes,
            client,
            transcript,
            completions: Vec::new(),
        }
    }

    pub fn completions(&self) -> &[String] {
        &self.completions
    }
}

impl Policy for LlmPolicy {
    fn decide(&mut self, ctx: &DecisionContext<'_>, _rng: &mut AgentRng) -> Result<usize, AgentError> {
        let mut turns = render_context(
            ctx.history,
            ctx.agent,
            self.axes,
            ctx.network,
            ctx.rounds,
            &self.completions,
        )?;
        let routes = ctx.network.route_names();
        let mut last_problem = None;
        for attempt in 0..MAX_LLM_ATTEMPTS {
            let key = RequestKey {
                trial: ctx.trial,
                agent: ctx.agent,
                round: ctx.round,
                attempt,
            };
            let request = self.client.request(&turns, key)?;
            let mut entry = TranscriptEntry {
                key,
                messages: request.messages.clone(),
                response: None,
                error: None,
                parsed_route: None,
                latency_ms: 0,
                prompt_tokens: None,
                completion_tokens: None,
            };
            let completion = match self.client.complete(&request) {
                Ok(c) => c,
                Err(e) => {
                    entry.error = Some(e.to_string());
                    self.transcript.append(entry);
                    return Err(e.into());
                }
            };
            entry.latency_ms = completion.latency.as_millis() as u64;
            entry.prompt_tokens = completion.prompt_tokens;
            entry.completion_tokens = completion.completion_tokens;
            entry.response = Some(completion.text.clone());
            match parse_route(&completion.text, &routes) {
                Ok(route) => {
                    entry.parsed_route = Some(route.to_string());
                    self.transcript.append(entry);
                    self.completions.push(completion.text);
                    return Ok(ctx.network.route_index(route).expect("parsed from catalog"));
                }
                Err(problem) => {
                    entry.error = Some(problem.to_string());
                    self.transcript.append(entry);
                    turns.push(ChatTurn::agent(completion.text));
                    turns.push(ChatTurn::environment(render_format_reminder(
                        ctx.network,
                        &problem.to_string(),
                    )));
                    last_problem = Some(problem);
                }
            }
        }
        Err(AgentError::Unparseable {
            attempts: MAX_LLM_ATTEMPTS,
            last: last_problem.expect("at least one attempt"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::GameHistory;
    use crate::llm::{Backend, ParseError, DEFAULT_MODEL};
    use crate::network::game_a;
    use crate::seed::agent_rng;

    fn run(responses: &[&str]) -> (Result<usize, AgentError>, Arc<Transcript>) {
        let a = game_a();
        let h = GameHistory::new();
        let client = Arc::new(LlmClient::new(
            Backend::scripted(responses.iter().copied()),
            DEFAULT_MODEL,
            1.0,
        ));
        let transcript = Arc::new(Transcript::new());
        let mut p = LlmPolicy::new("S-RO".parse().unwrap(), client, Arc::clone(&transcript));
        let ctx = DecisionContext {
            agent: 0,
            round: 1,
            rounds: 40,
            trial: 0,
            network: &a,
            history: &h,
        };
        (p.decide(&ctx, &mut agent_rng(0, 0)), transcript)
    }

    #[test]
    fn scripted_answer() {
        let (r, t) = run(&[r#"{"route": "O-L-D"}"#]);
        assert_eq!(r.unwrap(), 0);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn fenced_answer_after_prose() {
        let (r, _) = run(&["Step 1... so\n```json\n{\"route\": \"O-R-D\"}\n```"]);
        assert_eq!(r.unwrap(), 1);
    }

    #[test]
    fn retries_then_succeeds() {
        let (r, t) = run(&["no idea", r#"{"route": "O-R-D"}"#]);
        assert_eq!(r.unwrap(), 1);
        let entries = t.snapshot();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[1].key.attempt, 1);
        // the re-prompt carries the bad answer and a reminder
        let last = entries[1].messages.last().unwrap();
        assert!(last.content.contains("could not be used"));
        assert_eq!(entries[1].messages.len(), 3);
    }

    #[test]
    fn invalid_route_exhausts_budget() {
        let bad = r#"{"route": "O-X-D"}"#;
        let (r, t) = run(&[bad, bad, bad, bad]);
        match r {
            Err(AgentError::Unparseable { attempts, last }) => {
                assert_eq!(attempts, 3);
                assert_eq!(last, ParseError::InvalidRoute("O-X-D".into()));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn client_failure_is_recorded() {
        let (r, t) = run(&[]);
        assert!(matches!(r, Err(AgentError::Llm(_))));
        assert!(t.snapshot()[0].error.is_some());
    }
}
