//! Congestion networks with affine, load-dependent edge costs.
//!
//! A [`CongestionNetwork`] is a directed graph whose edges carry an
//! [`EdgeCost`] of the form `slope * load + intercept`, plus a catalog of
//! origin-destination routes. Every quantity is an exact integer, so payoffs
//! and regrets for the canonical games never go through floating point.
//!
//! Payoffs depend on a profile only through its route counts. Counterfactual
//! evaluation moves a single agent to another route while everyone else keeps
//! their realized choice.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cost units, points and loads all share this integer type.
pub type Cost = i64;

/// Default number of agents in the canonical games.
pub const CANONICAL_AGENTS: usize = 18;
/// Points each agent receives at the start of every round.
pub const CANONICAL_ENDOWMENT: Cost = 400;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetworkError {
    #[error("agent {agent} chose route index {route}, but the network has {routes} routes")]
    InvalidProfile {
        agent: usize,
        route: usize,
        routes: usize,
    },
    #[error("agent index {agent} out of range for a profile of {n} agents")]
    AgentOutOfRange { agent: usize, n: usize },
    #[error("edge cost must be nonnegative (slope {slope}, intercept {intercept})")]
    NegativeCost { slope: Cost, intercept: Cost },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(String, String),
    #[error("route {route} uses missing edge {from}-{to}")]
    MissingEdge {
        route: String,
        from: String,
        to: String,
    },
    #[error("route {0} needs at least two nodes")]
    ShortRoute(String),
    #[error("route {0} does not share the network's origin and destination")]
    EndpointMismatch(String),
    #[error("duplicate route `{0}`")]
    DuplicateRoute(String),
    #[error("a network needs at least one route")]
    NoRoutes,
    #[error("endowment must be positive, got {0}")]
    BadEndowment(Cost),
}

/// Affine edge cost `slope * load + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeCost {
    pub slope: Cost,
    pub intercept: Cost,
}

impl EdgeCost {
    pub fn new(slope: Cost, intercept: Cost) -> Result<Self, NetworkError> {
        if slope < 0 || intercept < 0 {
            return Err(NetworkError::NegativeCost { slope, intercept });
        }
        Ok(Self { slope, intercept })
    }

    pub fn linear(slope: Cost) -> Self {
        Self {
            slope,
            intercept: 0,
        }
    }

    pub fn constant(intercept: Cost) -> Self {
        Self {
            slope: 0,
            intercept,
        }
    }

    #[inline]
    pub fn eval(&self, load: Cost) -> Cost {
        self.slope * load + self.intercept
    }

    /// Renders the cost function the way the game instructions print it,
    /// e.g. `10 * X` or `210`.
    pub fn describe(&self) -> String {
        match (self.slope, self.intercept) {
            (0, c) => c.to_string(),
            (s, 0) => format!("{s} * X"),
            (s, c) => format!("{s} * X + {c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub cost: EdgeCost,
}

/// A named origin-destination path through the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    name: String,
    nodes: Vec<usize>,
    edges: Vec<usize>,
}

impl Route {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Indices into [`CongestionNetwork::edges`], in travel order.
    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }
}

/// Per-edge agent counts, indexed like [`CongestionNetwork::edges`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeLoads(Vec<Cost>);

impl EdgeLoads {
    pub fn get(&self, edge: usize) -> Cost {
        self.0[edge]
    }

    pub fn as_slice(&self) -> &[Cost] {
        &self.0
    }
}

/// The joint route choice of all agents in one round.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionProfile {
    choices: Vec<usize>,
}

impl ActionProfile {
    pub fn new(choices: Vec<usize>) -> Self {
        Self { choices }
    }

    /// A profile with `counts[r]` agents on route `r`, agents filled in route order.
    pub fn from_counts(counts: &[usize]) -> Self {
        let choices = counts
            .iter()
            .enumerate()
            .flat_map(|(r, &c)| std::iter::repeat(r).take(c))
            .collect();
        Self { choices }
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    pub fn choice(&self, agent: usize) -> usize {
        self.choices[agent]
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    /// Number of agents on each of `routes` routes.
    pub fn route_counts(&self, routes: usize) -> Vec<usize> {
        let mut counts = vec![0; routes];
        for &c in &self.choices {
            counts[c] += 1;
        }
        counts
    }
}

/// Directed graph with affine edge costs and a route catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CongestionNetwork {
    name: String,
    nodes: Vec<String>,
    edges: Vec<Edge>,
    routes: Vec<Route>,
    endowment: Cost,
    default_agents: usize,
}

/// Declarative form of a network, used by config files and the run log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub nodes: Vec<String>,
    pub edges: Vec<EdgeSpec>,
    /// Each route as a node sequence, e.g. `["O", "L", "D"]`.
    pub routes: Vec<Vec<String>>,
    #[serde(default = "default_endowment")]
    pub endowment: Cost,
    #[serde(default = "default_agents")]
    pub agents: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub slope: Cost,
    #[serde(default)]
    pub intercept: Cost,
}

fn default_endowment() -> Cost {
    CANONICAL_ENDOWMENT
}

fn default_agents() -> usize {
    CANONICAL_AGENTS
}

impl CongestionNetwork {
    pub fn from_spec(spec: &NetworkSpec) -> Result<Self, NetworkError> {
        if spec.endowment <= 0 {
            return Err(NetworkError::BadEndowment(spec.endowment));
        }
        let mut nodes: Vec<String> = Vec::with_capacity(spec.nodes.len());
        for n in &spec.nodes {
            if nodes.contains(n) {
                return Err(NetworkError::DuplicateNode(n.clone()));
            }
            nodes.push(n.clone());
        }
        let node_index = |label: &str| {
            nodes
                .iter()
                .position(|n| n == label)
                .ok_or_else(|| NetworkError::UnknownNode(label.to_string()))
        };

        let mut edges: Vec<Edge> = Vec::with_capacity(spec.edges.len());
        for e in &spec.edges {
            let from = node_index(&e.from)?;
            let to = node_index(&e.to)?;
            if edges.iter().any(|x| x.from == from && x.to == to) {
                return Err(NetworkError::DuplicateEdge(e.from.clone(), e.to.clone()));
            }
            edges.push(Edge {
                from,
                to,
                cost: EdgeCost::new(e.slope, e.intercept)?,
            });
        }

        if spec.routes.is_empty() {
            return Err(NetworkError::NoRoutes);
        }
        let mut routes: Vec<Route> = Vec::with_capacity(spec.routes.len());
        for path in &spec.routes {
            let name = path.join("-");
            if path.len() < 2 {
                return Err(NetworkError::ShortRoute(name));
            }
            if routes.iter().any(|r| r.name == name) {
                return Err(NetworkError::DuplicateRoute(name));
            }
            let route_nodes = path
                .iter()
                .map(|p| node_index(p))
                .collect::<Result<Vec<_>, _>>()?;
            let mut route_edges = Vec::with_capacity(path.len() - 1);
            for w in route_nodes.windows(2) {
                let idx = edges
                    .iter()
                    .position(|e| e.from == w[0] && e.to == w[1])
                    .ok_or_else(|| NetworkError::MissingEdge {
                        route: name.clone(),
                        from: nodes[w[0]].clone(),
                        to: nodes[w[1]].clone(),
                    })?;
                route_edges.push(idx);
            }
            if let Some(first) = routes.first() {
                if first.nodes[0] != route_nodes[0]
                    || first.nodes.last() != route_nodes.last()
                {
                    return Err(NetworkError::EndpointMismatch(name));
                }
            }
            routes.push(Route {
                name,
                nodes: route_nodes,
                edges: route_edges,
            });
        }

        Ok(Self {
            name: spec.name.clone(),
            nodes,
            edges,
            routes,
            endowment: spec.endowment,
            default_agents: spec.agents,
        })
    }

    pub fn to_spec(&self) -> NetworkSpec {
        NetworkSpec {
            name: self.name.clone(),
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeSpec {
                    from: self.nodes[e.from].clone(),
                    to: self.nodes[e.to].clone(),
                    slope: e.cost.slope,
                    intercept: e.cost.intercept,
                })
                .collect(),
            routes: self
                .routes
                .iter()
                .map(|r| r.nodes.iter().map(|&n| self.nodes[n].clone()).collect())
                .collect(),
            endowment: self.endowment,
            agents: self.default_agents,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn route_count(&self) -> usize {
        self.routes.len()
    }

    pub fn route_names(&self) -> Vec<&str> {
        self.routes.iter().map(|r| r.name.as_str()).collect()
    }

    pub fn route_index(&self, name: &str) -> Option<usize> {
        self.routes.iter().position(|r| r.name == name)
    }

    pub fn endowment(&self) -> Cost {
        self.endowment
    }

    pub fn default_agents(&self) -> usize {
        self.default_agents
    }

    /// Returns a copy with a different default agent count.
    pub fn with_agents(mut self, n: usize) -> Self {
        self.default_agents = n;
        self
    }

    pub fn edge_label(&self, edge: usize) -> String {
        let e = &self.edges[edge];
        format!("{}-{}", self.nodes[e.from], self.nodes[e.to])
    }

    pub fn edge_index(&self, from: &str, to: &str) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| self.nodes[e.from] == from && self.nodes[e.to] == to)
    }

    pub fn validate(&self, profile: &ActionProfile) -> Result<(), NetworkError> {
        let routes = self.routes.len();
        match profile
            .choices()
            .iter()
            .enumerate()
            .find(|(_, &r)| r >= routes)
        {
            Some((agent, &route)) => Err(NetworkError::InvalidProfile {
                agent,
                route,
                routes,
            }),
            None => Ok(()),
        }
    }

    /// Edge loads induced by per-route agent counts.
    pub fn loads_from_counts(&self, counts: &[usize]) -> EdgeLoads {
        let mut loads = vec![0; self.edges.len()];
        for (route, &c) in self.routes.iter().zip(counts) {
            for &e in &route.edges {
                loads[e] += c as Cost;
            }
        }
        EdgeLoads(loads)
    }

    pub fn edge_loads(&self, profile: &ActionProfile) -> Result<EdgeLoads, NetworkError> {
        self.validate(profile)?;
        Ok(self.loads_from_counts(&profile.route_counts(self.routes.len())))
    }

    pub fn route_cost(&self, route: usize, loads: &EdgeLoads) -> Cost {
        self.routes[route]
            .edges
            .iter()
            .map(|&e| self.edges[e].cost.eval(loads.get(e)))
            .sum()
    }

    /// Cost of each route under the given loads.
    pub fn route_costs(&self, loads: &EdgeLoads) -> Vec<Cost> {
        (0..self.routes.len())
            .map(|r| self.route_cost(r, loads))
            .collect()
    }

    pub fn payoffs(&self, profile: &ActionProfile) -> Result<Vec<Cost>, NetworkError> {
        let loads = self.edge_loads(profile)?;
        let route_payoffs: Vec<Cost> = self
            .route_costs(&loads)
            .into_iter()
            .map(|c| self.endowment - c)
            .collect();
        Ok(profile
            .choices()
            .iter()
            .map(|&r| route_payoffs[r])
            .collect())
    }

    /// Payoff `agent` would get on each route if it alone deviated there.
    ///
    /// The entry for the agent's realized route equals its realized payoff.
    pub fn counterfactual_payoffs(
        &self,
        profile: &ActionProfile,
        agent: usize,
    ) -> Result<Vec<Cost>, NetworkError> {
        self.validate(profile)?;
        if agent >= profile.len() {
            return Err(NetworkError::AgentOutOfRange {
                agent,
                n: profile.len(),
            });
        }
        let counts = profile.route_counts(self.routes.len());
        Ok(self.counterfactuals_from_counts(&counts, profile.choice(agent)))
    }

    /// Counterfactual payoffs for an agent currently on `own`, given the full
    /// route counts (which include that agent).
    pub fn counterfactuals_from_counts(&self, counts: &[usize], own: usize) -> Vec<Cost> {
        let mut others = counts.to_vec();
        others[own] -= 1;
        let base = self.loads_from_counts(&others);
        self.routes
            .iter()
            .map(|route| {
                let cost: Cost = route
                    .edges
                    .iter()
                    .map(|&e| self.edges[e].cost.eval(base.get(e) + 1))
                    .sum();
                self.endowment - cost
            })
            .collect()
    }

    pub fn regret(&self, profile: &ActionProfile, agent: usize) -> Result<Cost, NetworkError> {
        let cf = self.counterfactual_payoffs(profile, agent)?;
        let realized = cf[profile.choice(agent)];
        Ok(cf.iter().copied().max().unwrap_or(realized) - realized)
    }

    /// Regret of every agent; agents on the same route share a value.
    pub fn regrets(&self, profile: &ActionProfile) -> Result<Vec<Cost>, NetworkError> {
        self.validate(profile)?;
        let counts = profile.route_counts(self.routes.len());
        let per_route: Vec<Option<Cost>> = counts
            .iter()
            .enumerate()
            .map(|(r, &c)| {
                (c > 0).then(|| {
                    let cf = self.counterfactuals_from_counts(&counts, r);
                    cf.iter().copied().max().unwrap_or(cf[r]) - cf[r]
                })
            })
            .collect();
        Ok(profile
            .choices()
            .iter()
            .map(|&r| per_route[r].expect("occupied route"))
            .collect())
    }
}

fn canonical_spec(name: &str, with_bridge: bool) -> NetworkSpec {
    let edge = |from: &str, to: &str, slope, intercept| EdgeSpec {
        from: from.into(),
        to: to.into(),
        slope,
        intercept,
    };
    let mut edges = vec![
        edge("O", "L", 10, 0),
        edge("O", "R", 0, 210),
        edge("L", "D", 0, 210),
        edge("R", "D", 10, 0),
    ];
    let path = |p: &[&str]| p.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut routes = vec![path(&["O", "L", "D"]), path(&["O", "R", "D"])];
    if with_bridge {
        edges.push(edge("L", "R", 0, 0));
        routes.push(path(&["O", "L", "R", "D"]));
    }
    NetworkSpec {
        name: name.into(),
        nodes: ["O", "L", "R", "D"].iter().map(|s| s.to_string()).collect(),
        edges,
        routes,
        endowment: CANONICAL_ENDOWMENT,
        agents: CANONICAL_AGENTS,
    }
}

/// Two-route network: upper route O-L-D and lower route O-R-D.
pub fn game_a() -> CongestionNetwork {
    CongestionNetwork::from_spec(&canonical_spec("A", false)).expect("canonical game A")
}

/// Game A plus a zero-cost L-R link, which opens the bridge route O-L-R-D.
pub fn game_b() -> CongestionNetwork {
    CongestionNetwork::from_spec(&canonical_spec("B", true)).expect("canonical game B")
}

/// Looks up a built-in game by id (`"A"` or `"B"`, case-insensitive).
pub fn canonical(id: &str) -> Option<CongestionNetwork> {
    match id {
        "A" | "a" => Some(game_a()),
        "B" | "b" => Some(game_b()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(net: &CongestionNetwork, loads: &EdgeLoads, from: &str, to: &str) -> Cost {
        loads.get(net.edge_index(from, to).unwrap())
    }

    #[test]
    fn canonical_route_catalogs() {
        assert_eq!(game_a().route_names(), vec!["O-L-D", "O-R-D"]);
        assert_eq!(game_b().route_count(), 3);
        let b = game_b();
        let lr = b.edge_index("L", "R").unwrap();
        assert_eq!(b.edges()[lr].cost, EdgeCost::constant(0));
        assert_eq!(b.endowment(), 400);
        assert_eq!(b.default_agents(), 18);
    }

    #[test]
    fn loads_all_on_bridge() {
        let b = game_b();
        let p = ActionProfile::new(vec![2; 18]);
        let l = b.edge_loads(&p).unwrap();
        assert_eq!(load(&b, &l, "O", "L"), 18);
        assert_eq!(load(&b, &l, "L", "R"), 18);
        assert_eq!(load(&b, &l, "R", "D"), 18);
        assert_eq!(load(&b, &l, "O", "R"), 0);
        assert_eq!(load(&b, &l, "L", "D"), 0);
    }

    #[test]
    fn loads_game_a_split() {
        let a = game_a();
        let p = ActionProfile::from_counts(&[5, 13]);
        let l = a.edge_loads(&p).unwrap();
        assert_eq!(load(&a, &l, "O", "L"), 5);
        assert_eq!(load(&a, &l, "L", "D"), 5);
        assert_eq!(load(&a, &l, "O", "R"), 13);
        assert_eq!(load(&a, &l, "R", "D"), 13);
    }

    #[test]
    fn loads_small_game_b() {
        // one upper, two bridge, none lower
        let b = game_b().with_agents(3);
        let p = ActionProfile::from_counts(&[1, 0, 2]);
        let l = b.edge_loads(&p).unwrap();
        assert_eq!(load(&b, &l, "O", "L"), 3);
        assert_eq!(load(&b, &l, "L", "R"), 2);
        assert_eq!(load(&b, &l, "R", "D"), 2);
        assert_eq!(load(&b, &l, "L", "D"), 1);
        assert_eq!(load(&b, &l, "O", "R"), 0);
    }

    #[test]
    fn invalid_route_index_rejected() {
        let a = game_a();
        let err = a.edge_loads(&ActionProfile::new(vec![0, 2])).unwrap_err();
        assert_eq!(
            err,
            NetworkError::InvalidProfile {
                agent: 1,
                route: 2,
                routes: 2
            }
        );
    }

    #[test]
    fn route_costs_from_instruction_examples() {
        let a = game_a();
        // lone driver on O-L-D, 17 on O-R-D
        let l = a.loads_from_counts(&[1, 17]);
        assert_eq!(a.route_cost(0, &l), 220);
        // 3 on O-R-D, 15 on O-L-D
        let l = a.loads_from_counts(&[15, 3]);
        assert_eq!(a.route_cost(1, &l), 240);
        let b = game_b();
        let l = b.loads_from_counts(&[0, 0, 18]);
        assert_eq!(b.route_cost(2, &l), 360);
    }

    #[test]
    fn payoffs_examples() {
        let a = game_a();
        let p = ActionProfile::from_counts(&[5, 13]);
        assert_eq!(a.payoffs(&p).unwrap()[17], 60);
        let p = ActionProfile::from_counts(&[9, 9]);
        assert!(a.payoffs(&p).unwrap().iter().all(|&v| v == 100));
        let b = game_b();
        let p = ActionProfile::from_counts(&[0, 0, 18]);
        assert!(b.payoffs(&p).unwrap().iter().all(|&v| v == 40));
    }

    #[test]
    fn counterfactual_examples() {
        let a = game_a();
        // agent on O-R-D with {O-R-D: 11, O-L-D: 7}
        let p = ActionProfile::from_counts(&[7, 11]);
        assert_eq!(a.counterfactual_payoffs(&p, 17).unwrap(), vec![110, 80]);
        // agent on O-L-D with {O-L-D: 17, O-R-D: 1}
        let p = ActionProfile::from_counts(&[17, 1]);
        assert_eq!(a.counterfactual_payoffs(&p, 0).unwrap(), vec![20, 170]);
        let b = game_b();
        let p = ActionProfile::from_counts(&[0, 0, 18]);
        assert_eq!(b.counterfactual_payoffs(&p, 4).unwrap(), vec![10, 10, 40]);
    }

    #[test]
    fn regret_examples() {
        let a = game_a();
        let p = ActionProfile::from_counts(&[7, 11]);
        assert_eq!(a.regret(&p, 17).unwrap(), 30);
        let p = ActionProfile::from_counts(&[2, 16]);
        assert_eq!(a.regret(&p, 17).unwrap(), 130);
        let b = game_b();
        let p = ActionProfile::from_counts(&[0, 0, 18]);
        assert!(b.regrets(&p).unwrap().iter().all(|&r| r == 0));
    }

    #[test]
    fn agent_out_of_range() {
        let a = game_a();
        let p = ActionProfile::from_counts(&[1, 1]);
        assert!(matches!(
            a.regret(&p, 2),
            Err(NetworkError::AgentOutOfRange { agent: 2, n: 2 })
        ));
    }

    #[test]
    fn spec_validation_errors() {
        let mut spec = game_b().to_spec();
        spec.routes.push(vec!["O".into(), "D".into()]);
        assert!(matches!(
            CongestionNetwork::from_spec(&spec),
            Err(NetworkError::MissingEdge { .. })
        ));
        let mut spec = game_a().to_spec();
        spec.edges[0].slope = -1;
        assert!(matches!(
            CongestionNetwork::from_spec(&spec),
            Err(NetworkError::NegativeCost { .. })
        ));
        let mut spec = game_a().to_spec();
        spec.routes.push(spec.routes[0].clone());
        assert!(matches!(
            CongestionNetwork::from_spec(&spec),
            Err(NetworkError::DuplicateRoute(_))
        ));
    }

    #[test]
    fn spec_round_trip() {
        let b = game_b();
        assert_eq!(CongestionNetwork::from_spec(&b.to_spec()).unwrap(), b);
    }

    #[test]
    fn cost_descriptions() {
        assert_eq!(EdgeCost::linear(10).describe(), "10 * X");
        assert_eq!(EdgeCost::constant(210).describe(), "210");
        assert_eq!(EdgeCost::constant(0).describe(), "0");
    }
}
