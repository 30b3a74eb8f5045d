//! Natural-language state representations.
//!
//! A representation is picked along three independent axes:
//!
//! * action informativeness: the agent sees only its own choices ([`ActionInfo::OwnOnly`])
//!   or also the route-count distribution of every round ([`ActionInfo::Everyone`]);
//! * reward informativeness: realized payoff ([`RewardInfo::Payoff`]) or regret
//!   ([`RewardInfo::Regret`]);
//! * prompting style: the whole chat transcript ([`PromptStyle::FullChat`]) or one
//!   compressed summary of all past rounds ([`PromptStyle::Summary`]).
//!
//! The eight combinations are named by codes such as `S-RO`: style letter,
//! dash, reward letter, action letter.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{GameHistory, RoundRecord};
use crate::network::{game_a, game_b, CongestionNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionInfo {
    OwnOnly,
    Everyone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardInfo {
    Payoff,
    Regret,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptStyle {
    FullChat,
    Summary,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReprError {
    #[error("unknown representation code `{0}` (expected one of F-PE, F-PO, F-RE, F-RO, S-PE, S-PO, S-RE, S-RO)")]
    BadCode(String),
    #[error("no prompt template for network `{0}`; only the canonical games A and B are supported")]
    UnsupportedNetwork(String),
    #[error("full-chat rendering needs {needed} stored completions for agent {agent}, found {found}")]
    MissingTranscript {
        agent: usize,
        needed: usize,
        found: usize,
    },
}

/// One of the eight state representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReprAxes {
    pub action_info: ActionInfo,
    pub reward_info: RewardInfo,
    pub style: PromptStyle,
}

impl ReprAxes {
    pub const fn new(style: PromptStyle, reward_info: RewardInfo, action_info: ActionInfo) -> Self {
        Self {
            action_info,
            reward_info,
            style,
        }
    }

    /// All eight representations, full-chat first, in table order.
    pub fn all() -> [ReprAxes; 8] {
        use ActionInfo::*;
        use PromptStyle::*;
        use RewardInfo::*;
        [
            Self::new(FullChat, Payoff, Everyone),
            Self::new(FullChat, Payoff, OwnOnly),
            Self::new(FullChat, Regret, Everyone),
            Self::new(FullChat, Regret, OwnOnly),
            Self::new(Summary, Payoff, Everyone),
            Self::new(Summary, Payoff, OwnOnly),
            Self::new(Summary, Regret, Everyone),
            Self::new(Summary, Regret, OwnOnly),
        ]
    }

    pub fn code(&self) -> String {
        let s = match self.style {
            PromptStyle::FullChat => 'F',
            PromptStyle::Summary => 'S',
        };
        let r = match self.reward_info {
            RewardInfo::Payoff => 'P',
            RewardInfo::Regret => 'R',
        };
        let a = match self.action_info {
            ActionInfo::Everyone => 'E',
            ActionInfo::OwnOnly => 'O',
        };
        format!("{s}-{r}{a}")
    }

    pub fn describe(&self) -> String {
        format!(
            "{}, {}, {}",
            match self.style {
                PromptStyle::FullChat => "full chat",
                PromptStyle::Summary => "summarized",
            },
            match self.reward_info {
                RewardInfo::Payoff => "payoff feedback",
                RewardInfo::Regret => "regret feedback",
            },
            match self.action_info {
                ActionInfo::Everyone => "everyone's actions",
                ActionInfo::OwnOnly => "own actions only",
            }
        )
    }
}

impl fmt::Display for ReprAxes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for ReprAxes {
    type Err = ReprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ReprError::BadCode(s.to_string());
        let b = s.trim().as_bytes();
        if b.len() != 4 || b[1] != b'-' {
            return Err(bad());
        }
        let style = match b[0].to_ascii_uppercase() {
            b'F' => PromptStyle::FullChat,
            b'S' => PromptStyle::Summary,
            _ => return Err(bad()),
        };
        let reward_info = match b[2].to_ascii_uppercase() {
            b'P' => RewardInfo::Payoff,
            b'R' => RewardInfo::Regret,
            _ => return Err(bad()),
        };
        let action_info = match b[3].to_ascii_uppercase() {
            b'E' => ActionInfo::Everyone,
            b'O' => ActionInfo::OwnOnly,
            _ => return Err(bad()),
        };
        Ok(Self::new(style, reward_info, action_info))
    }
}

impl Serialize for ReprAxes {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.code())
    }
}

impl<'de> Deserialize<'de> for ReprAxes {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Environment,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub content: String,
}

impl ChatTurn {
    pub fn environment(content: impl Into<String>) -> Self {
        Self {
            role: Role::Environment,
            content: content.into(),
        }
    }

    pub fn agent(content: impl Into<String>) -> Self {
        Self {
            role: Role::Agent,
            content: content.into(),
        }
    }
}

const OUTPUT_SCHEMA: &str = r#"{"properties": {"route": {"title": "Route", "description": "choice of route", "type": "string"}}, "required": ["route"]}"#;

fn canonical_family(network: &CongestionNetwork) -> Option<bool> {
    let same = |c: &CongestionNetwork| {
        c.nodes() == network.nodes()
            && c.edges() == network.edges()
            && c.route_names() == network.route_names()
            && c.endowment() == network.endowment()
    };
    if same(&game_a()) {
        Some(false)
    } else if same(&game_b()) {
        Some(true)
    } else {
        None
    }
}

/// Game instructions sent at the top of every request.
///
/// The participant count comes from the network's agent count. Only the
/// canonical two- and three-route networks have a template.
pub fn render_system_prompt(
    network: &CongestionNetwork,
    rounds: usize,
) -> Result<String, ReprError> {
    let bridge = canonical_family(network)
        .ok_or_else(|| ReprError::UnsupportedNetwork(network.name().to_string()))?;
    let n = network.default_agents();
    let k = network.route_count();
    let endowment = network.endowment();

    let segments: Vec<String> = (0..network.edges().len())
        .map(|e| {
            format!(
                "Segment {}, cost function: {}",
                network.edge_label(e),
                network.edges()[e].cost.describe()
            )
        })
        .collect();
    let route_list = network
        .route_names()
        .iter()
        .map(|r| format!("'{r}'"))
        .collect::<Vec<_>>()
        .join(", ");

    let mut paragraphs: Vec<String> = vec![
        format!(
            "You will be participating in an experiment on route selection in traffic networks.\n\
             During this experiment you'll be asked to make many decisions about route selection in a traffic network game.\n\
             Your payoff will depend on the decisions you make as well as the decisions made by the other participants. \
             There are {n} participants in this experiment, including yourself, who will be asked to serve as drivers and \
             choose a route to travel in a traffic network game that is described below.\n\
             You will play the game for {rounds} identical rounds."
        ),
        "Consider the very simple traffic network described below.".into(),
        "Nodes:".into(),
        network.nodes().join(" "),
        "Segments and associated costs:".into(),
    ];
    paragraphs.extend(segments);
    paragraphs.push(format!(
        "Each driver is required to choose one of {k} routes to travel from the starting point, denoted by O, \
         to the final destination, denoted by D. There are {k} alternative routes and they are denoted by [{route_list}]."
    ));
    paragraphs.push(
        "Travel is always costly in terms of the time needed to complete a segment of the road, tolls, fuel etc. \
         The travel costs are written near each segment of the route you choose. For example, if you choose route O-L-D, \
         you will be charged a total cost of 10X + 210 where X indicates the number of participants who choose segment \
         O-L to travel from O to L plus a fixed cost of 210 for traveling on segment L-D."
            .into(),
    );
    let mut similarly = "Similarly, if you choose route O-R-D, you will be charged a total travel cost of 210 + 10Y, \
         where Y indicates the number of participants who choose the segment R-D to drive from O to D.\n"
        .to_string();
    if bridge {
        similarly.push_str(
            "Finally, if you choose route O-L-R-D, you will be charged a total travel cost of 10X + 0 + 10Y, \
             where X indicates the number of participants who choose segment O-L and Y indicates the number of \
             participants who choose segment R-D.\n",
        );
    }
    similarly.push_str(
        "Please note that the cost charged for segments O-L and R-D depends on the number of drivers choosing them.",
    );
    paragraphs.push(similarly);
    let mut fixed = "In contrast, the cost charged for traveling on segments L-D and O-R is fixed at 210 and does not \
         depend on the number of drivers choosing them."
        .to_string();
    if bridge {
        fixed.push_str(
            "\nThe cost charged for traveling on segment L-R is fixed at 0 and does not depend on the number of \
             drivers choosing it.",
        );
    }
    paragraphs.push(fixed);
    paragraphs.push(
        "All the drivers make their route choices independently of one another and leave point O at the same time."
            .into(),
    );
    paragraphs.push("Example.".into());
    let mut example = format!(
        "If you happen to be the only driver who chooses route O-L-D, and all other {others} drivers choose route O-R-D, \
         then your travel cost from point O to point D is equal to (10 x 1) + 210 = 220.\n\
         If, on another round, you and 2 more drivers choose route O-R-D and {rest} other drivers choose route O-L-D, \
         then your travel cost for that round will be 210 + (10 x 3) = 240.",
        others = n.saturating_sub(1),
        rest = n.saturating_sub(3),
    );
    if bridge {
        // 12 on the bridge, 4 upper, 2 lower: O-L carries 16, R-D carries 14
        let on_bridge = n.saturating_sub(6);
        let ol = on_bridge + 4;
        let rd = on_bridge + 2;
        example.push_str(&format!(
            "\nIf, on yet another round, you and {} other drivers choose route O-L-R-D, 4 drivers choose route O-L-D \
             and 2 drivers choose route O-R-D, then your travel cost for that round will be \
             (10 x {ol}) + 0 + (10 x {rd}) = {}.",
            on_bridge.saturating_sub(1),
            10 * (ol + rd),
        ));
    }
    paragraphs.push(example);
    paragraphs.push(format!(
        "At the beginning of each round, you will receive an endowment of {endowment} points.\n\
         Your payoff for each round will be determined by subtracting your travel cost from your endowment.\n\
         Your goal is to maximize your payoff (likewise minimize your cost).\n\
         At the end of each round, you will be informed of the number of drivers who chose each route and your payoff for that round. \n\
         All {rounds} rounds have exactly the same structure."
    ));
    paragraphs.push(
        "The output should be formatted as a JSON instance that conforms to the JSON schema below.".into(),
    );
    paragraphs.push(
        r#"As an example, for the schema {"properties": {"foo": {"title": "Foo", "description": "a list of strings", "type": "array", "items": {"type": "string"}}}, "required": ["foo"]}
the object {"foo": ["bar", "baz"]} is a well-formatted instance of the schema. The object {"properties": {"foo": ["bar", "baz"]}} is not well-formatted."#
            .into(),
    );
    paragraphs.push("Here is the output schema:".into());
    paragraphs.push(format!("```\n{OUTPUT_SCHEMA}\n```"));
    Ok(paragraphs.join("\n\n"))
}

/// Closing instruction of every request: pick one route, reason step by
/// step, answer in the schema.
pub fn render_decision_request(network: &CongestionNetwork) -> String {
    format!(
        "The available routes are: {routes}\n\n\
         Choose exactly one route for this round. Think step-by-step about which route will give you the highest \
         payoff, then give your final answer as a JSON instance that conforms to the output schema above, \
         for example {{\"route\": \"{first}\"}}.",
        routes = network.route_names().join(", "),
        first = network.route_names()[0],
    )
}

/// Sent after an unusable answer before the next attempt.
pub fn render_format_reminder(network: &CongestionNetwork, problem: &str) -> String {
    format!(
        "Your previous answer could not be used: {problem}. Reply with a single JSON object of the form \
         {{\"route\": \"<route>\"}}, where <route> is exactly one of: {}.",
        network.route_names().join(", ")
    )
}

/// Route names with counts, most crowded first. Ties put the agent's own
/// route first, then follow catalog order. Empty routes are omitted.
pub fn distribution_order(record: &RoundRecord, own: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..record.counts.len())
        .filter(|&r| record.counts[r] > 0)
        .collect();
    order.sort_by_key(|&r| (std::cmp::Reverse(record.counts[r]), r != own, r));
    order
}

/// The lines describing one past round to one agent.
pub fn round_block_lines(
    record: &RoundRecord,
    agent: usize,
    axes: ReprAxes,
    network: &CongestionNetwork,
) -> Vec<String> {
    let own = record.choice(agent);
    let names = network.route_names();
    let mut lines = vec![format!("Your Choice: {}", names[own])];
    if axes.action_info == ActionInfo::Everyone {
        let entries: Vec<String> = distribution_order(record, own)
            .into_iter()
            .map(|r| format!("'{}': {}", names[r], record.counts[r]))
            .collect();
        lines.push(format!(
            "Route Choice Distribution: {{{}}}",
            entries.join(", ")
        ));
    }
    lines.push(match axes.reward_info {
        RewardInfo::Payoff => format!("Your Payoff: {}", record.payoffs[agent]),
        RewardInfo::Regret => format!("Your Regret: {}", record.regrets[agent]),
    });
    lines
}

/// Round block as a blank-line separated paragraph list.
pub fn render_round_block(
    record: &RoundRecord,
    agent: usize,
    axes: ReprAxes,
    network: &CongestionNetwork,
) -> String {
    round_block_lines(record, agent, axes, network).join("\n\n")
}

fn agent_header(agent: usize) -> String {
    format!("You are agent {agent}.")
}

/// Body of the summarized history turn, without the decision request.
pub fn render_summary(
    history: &GameHistory,
    agent: usize,
    axes: ReprAxes,
    network: &CongestionNetwork,
) -> String {
    let mut out = format!("{}\n\nSummary of previous rounds:", agent_header(agent));
    for record in history.records() {
        out.push_str(&format!("\n\n  Round {}:", record.round));
        for line in round_block_lines(record, agent, axes, network) {
            out.push_str("\n\n    ");
            out.push_str(&line);
        }
    }
    out
}

/// Environment turn that follows a completed round in full-chat contexts.
pub fn render_previous_round(
    record: &RoundRecord,
    agent: usize,
    axes: ReprAxes,
    network: &CongestionNetwork,
) -> String {
    format!(
        "{}\n\nSummary of previous round:\n\n{}",
        agent_header(agent),
        render_round_block(record, agent, axes, network)
    )
}

/// Builds the message list for `agent`'s next decision.
///
/// The decision request is appended to the final environment turn, so a
/// summarized context is two turns once there is history and a full-chat
/// context is `1 + 2 * rounds` turns. `completions` holds the agent's raw
/// answers for the past rounds and is only read in full-chat style.
pub fn render_context(
    history: &GameHistory,
    agent: usize,
    axes: ReprAxes,
    network: &CongestionNetwork,
    rounds: usize,
    completions: &[String],
) -> Result<Vec<ChatTurn>, ReprError> {
    let system = render_system_prompt(network, rounds)?;
    let request = render_decision_request(network);
    let with_request = |body: &str| format!("{body}\n\n{request}");

    if history.is_empty() {
        return Ok(vec![ChatTurn::environment(with_request(&system))]);
    }
    match axes.style {
        PromptStyle::Summary => Ok(vec![
            ChatTurn::environment(system),
            ChatTurn::environment(with_request(&render_summary(
                history, agent, axes, network,
            ))),
        ]),
        PromptStyle::FullChat => {
            if completions.len() < history.len() {
                return Err(ReprError::MissingTranscript {
                    agent,
                    needed: history.len(),
                    found: completions.len(),
                });
            }
            let mut turns = Vec::with_capacity(1 + 2 * history.len());
            turns.push(ChatTurn::environment(with_request(&system)));
            for (record, completion) in history.records().iter().zip(completions) {
                turns.push(ChatTurn::agent(completion.clone()));
                turns.push(ChatTurn::environment(with_request(
                    &render_previous_round(record, agent, axes, network),
                )));
            }
            Ok(turns)
        }
    }
}
