//! Aggregate and per-round metrics over trials.
//!
//! Per-trial aggregates average over the rounds of a trial first; the
//! cross-trial mean and standard error (sample SD with n - 1, divided by
//! sqrt of the trial count) are taken over those per-trial values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::TrialResult;
use crate::history::GameHistory;
use crate::network::{CongestionNetwork, Cost};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no focal route or equilibrium target is defined for game `{0}`")]
    UnknownGame(String),
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("no successful trials to summarize")]
    NoTrials,
    #[error("trials are not homogeneous: {0}")]
    Heterogeneous(String),
}

/// Which canonical game a network is, judged by its route catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GameKind {
    /// Two symmetric routes; the focal count is the less crowded one.
    A,
    /// Bridge game; the focal route is O-L-R-D.
    B { bridge: usize },
}

impl GameKind {
    pub fn of(network: &CongestionNetwork) -> Result<Self, MetricsError> {
        let names = network.route_names();
        match (network.name(), names.as_slice()) {
            ("A", ["O-L-D", "O-R-D"]) => Ok(GameKind::A),
            ("B", [_, _, _]) => network
                .route_index("O-L-R-D")
                .map(|bridge| GameKind::B { bridge })
                .ok_or_else(|| MetricsError::UnknownGame(network.name().into())),
            _ => Err(MetricsError::UnknownGame(network.name().into())),
        }
    }
}

pub fn focal_count(network: &CongestionNetwork, counts: &[usize]) -> Result<usize, MetricsError> {
    Ok(match GameKind::of(network)? {
        GameKind::A => counts[0].min(counts[1]),
        GameKind::B { bridge } => counts[bridge],
    })
}

/// Equilibrium deviation: L1 distance between the route counts and the pure
/// equilibrium counts, (n/2, n/2) in game A and everyone on the bridge in
/// game B. For n = 18 these are the targets (9, 9) and (0, 0, 18).
pub fn deviation_score(network: &CongestionNetwork, counts: &[usize]) -> Result<Cost, MetricsError> {
    let n: usize = counts.iter().sum();
    let n = n as Cost;
    Ok(match GameKind::of(network)? {
        GameKind::A => {
            // doubled to stay integral for odd n
            let twice: Cost = counts.iter().map(|&c| (2 * c as Cost - n).abs()).sum();
            twice / 2
        }
        GameKind::B { bridge } => counts
            .iter()
            .enumerate()
            .map(|(r, &c)| {
                if r == bridge {
                    (c as Cost - n).abs()
                } else {
                    c as Cost
                }
            })
            .sum(),
    })
}

/// Per agent, the number of rounds whose route differs from the round before.
pub fn switch_counts(history: &GameHistory) -> Vec<usize> {
    let n = history.records().first().map_or(0, |r| r.agents());
    let mut counts = vec![0; n];
    for pair in history.records().windows(2) {
        for (agent, c) in counts.iter_mut().enumerate() {
            if pair[0].choice(agent) != pair[1].choice(agent) {
                *c += 1;
            }
        }
    }
    counts
}

/// Fraction of agents switching in each round (0 in round 1).
pub fn switch_fractions(history: &GameHistory) -> Vec<f64> {
    let mut out = Vec::with_capacity(history.len());
    let records = history.records();
    for (t, r) in records.iter().enumerate() {
        if t == 0 {
            out.push(0.0);
            continue;
        }
        let prev = &records[t - 1];
        let switched = (0..r.agents())
            .filter(|&a| r.choice(a) != prev.choice(a))
            .count();
        out.push(switched as f64 / r.agents() as f64);
    }
    out
}

/// Tie-adjusted Kendall rank correlation (tau-b).
///
/// Returns `Ok(None)` when either series is constant, where the coefficient
/// is undefined. Runs in O(n log n) by counting inversions with a merge sort.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<Option<f64>, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(MetricsError::TooShort(n));
    }
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let pairs_in = |len: u64| len * len.saturating_sub(1) / 2;
    let total = pairs_in(n as u64);

    let mut tied_x = 0;
    let mut tied_xy = 0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pairs[j].0 == pairs[i].0 {
            j += 1;
        }
        tied_x += pairs_in((j - i) as u64);
        let mut k = i;
        while k < j {
            let mut m = k + 1;
            while m < j && pairs[m].1 == pairs[k].1 {
                m += 1;
            }
            tied_xy += pairs_in((m - k) as u64);
            k = m;
        }
        i = j;
    }

    let mut y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut y, &mut buf);

    let mut tied_y = 0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && y[j] == y[i] {
            j += 1;
        }
        tied_y += pairs_in((j - i) as u64);
        i = j;
    }

    let denom_x = total - tied_x;
    let denom_y = total - tied_y;
    if denom_x == 0 || denom_y == 0 {
        return Ok(None);
    }
    let numerator =
        total as i64 - tied_x as i64 - tied_y as i64 + tied_xy as i64 - 2 * swaps as i64;
    Ok(Some(numerator as f64 / ((denom_x as f64) * (denom_y as f64)).sqrt()))
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(left, bl) + merge_count(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1); `None` below two values.
pub fn sample_sd(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m).powi(2)).sum();
    Some((ss / (v.len() - 1) as f64).sqrt())
}

pub fn standard_error(v: &[f64]) -> Option<f64> {
    sample_sd(v).map(|sd| sd / (v.len() as f64).sqrt())
}

/// One metric over trials: per-round values, per-trial aggregates, and their
/// cross-trial means and standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub name: String,
    /// `per_round[trial][round]`
    pub per_round: Vec<Vec<f64>>,
    pub per_trial: Vec<f64>,
    pub mean: f64,
    pub se: Option<f64>,
    pub round_mean: Vec<f64>,
    pub round_se: Vec<Option<f64>>,
}

impl MetricSeries {
    /// Aggregates each trial by its mean over rounds.
    pub fn averaged(name: &str, per_round: Vec<Vec<f64>>) -> Self {
        let per_trial = per_round.iter().map(|r| mean(r)).collect();
        Self::with_trial_values(name, per_round, per_trial)
    }

    pub fn with_trial_values(name: &str, per_round: Vec<Vec<f64>>, per_trial: Vec<f64>) -> Self {
        let rounds = per_round.iter().map(Vec::len).min().unwrap_or(0);
        let mut round_mean = Vec::with_capacity(rounds);
        let mut round_se = Vec::with_capacity(rounds);
        for t in 0..rounds {
            let col: Vec<f64> = per_round.iter().map(|r| r[t]).collect();
            round_mean.push(mean(&col));
            round_se.push(standard_error(&col));
        }
        Self {
            name: name.to_string(),
            mean: mean(&per_trial),
            se: standard_error(&per_trial),
            per_round,
            per_trial,
            round_mean,
            round_se,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSummary {
    pub route: String,
    /// Mean agents on the route, over rounds then trials.
    pub mean: f64,
    /// Standard error of the per-trial means.
    pub se_trials: Option<f64>,
    /// Within-trial SD of the per-round count, averaged over trials.
    pub sd_rounds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    /// `scores[trial][round]`
    pub scores: Vec<Vec<Cost>>,
    /// Per-trial tau between round number and deviation; `None` if undefined.
    pub taus: Vec<Option<f64>>,
    /// Mean over trials with a defined tau.
    pub mean_tau: Option<f64>,
    pub tau_se: Option<f64>,
    pub undefined: usize,
    /// Set when n differs from 18 and the targets were scaled.
    pub scaled_targets: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub label: String,
    pub game: String,
    pub agents: usize,
    pub rounds: usize,
    pub trials: usize,
    pub failed_trials: usize,
    pub routes: Vec<RouteSummary>,
    pub focal: Option<MetricSeries>,
    pub payoff: MetricSeries,
    pub regret: MetricSeries,
    pub switches: MetricSeries,
    pub deviation: Option<DeviationSummary>,
}

impl ExperimentSummary {
    pub fn route(&self, name: &str) -> Option<&RouteSummary> {
        self.routes.iter().find(|r| r.route == name)
    }

    /// Every metric series that is present, focal first.
    pub fn series(&self) -> Vec<&MetricSeries> {
        let mut v = Vec::with_capacity(4);
        if let Some(f) = &self.focal {
            v.push(f);
        }
        v.extend([&self.payoff, &self.regret, &self.switches]);
        v
    }
}

/// Summarizes trials of one configuration. `failed` counts trials that did
/// not finish; they are reported but take no part in any aggregate.
pub fn summarize_experiment(
    results: &[TrialResult],
    failed: usize,
) -> Result<ExperimentSummary, MetricsError> {
    let first = results.first().ok_or(MetricsError::NoTrials)?;
    let network = first.network().map_err(|e| MetricsError::Heterogeneous(e.to_string()))?;
    let label = first.label();
    for r in &results[1..] {
        if r.config.network != first.config.network
            || r.config.agents != first.config.agents
            || r.config.rounds != first.config.rounds
            || r.label() != label
        {
            return Err(MetricsError::Heterogeneous(format!(
                "trial {} differs from trial {}",
                r.config.trial, first.config.trial
            )));
        }
    }
    let k = network.route_count();

    let routes = (0..k)
        .map(|route| {
            let per_trial: Vec<Vec<f64>> = results
                .iter()
                .map(|t| {
                    t.history
                        .records()
                        .iter()
                        .map(|r| r.counts[route] as f64)
                        .collect()
                })
                .collect();
            let means: Vec<f64> = per_trial.iter().map(|v| mean(v)).collect();
            let sds: Vec<f64> = per_trial.iter().filter_map(|v| sample_sd(v)).collect();
            RouteSummary {
                route: network.route_names()[route].to_string(),
                mean: mean(&means),
                se_trials: standard_error(&means),
                sd_rounds: (!sds.is_empty()).then(|| mean(&sds)),
            }
        })
        .collect();

    let game = GameKind::of(&network).ok();
    let focal = game.map(|_| {
        MetricSeries::averaged(
            "focal",
            results
                .iter()
                .map(|t| {
                    t.history
                        .records()
                        .iter()
                        .map(|r| focal_count(&network, &r.counts).expect("canonical game") as f64)
                        .collect()
                })
                .collect(),
        )
    });
    let per_round = |f: fn(&crate::history::RoundRecord) -> f64| -> Vec<Vec<f64>> {
        results
            .iter()
            .map(|t| t.history.records().iter().map(f).collect())
            .collect()
    };
    let payoff = MetricSeries::averaged("payoff", per_round(|r| r.mean_payoff()));
    let regret = MetricSeries::averaged("regret", per_round(|r| r.mean_regret()));
    let switches = MetricSeries::with_trial_values(
        "switches",
        results.iter().map(|t| switch_fractions(&t.history)).collect(),
        results
            .iter()
            .map(|t| {
                let c = switch_counts(&t.history);
                c.iter().sum::<usize>() as f64 / c.len().max(1) as f64
            })
            .collect(),
    );

    let deviation = match game {
        Some(_) => {
            let scores: Vec<Vec<Cost>> = results
                .iter()
                .map(|t| {
                    t.history
                        .records()
                        .iter()
                        .map(|r| deviation_score(&network, &r.counts).expect("canonical game"))
                        .collect()
                })
                .collect();
            let taus: Vec<Option<f64>> = scores
                .iter()
                .map(|s| {
                    let xs: Vec<f64> = (1..=s.len()).map(|t| t as f64).collect();
                    let ys: Vec<f64> = s.iter().map(|&d| d as f64).collect();
                    kendall_tau(&xs, &ys).ok().flatten()
                })
                .collect();
            let defined: Vec<f64> = taus.iter().flatten().copied().collect();
            Some(DeviationSummary {
                undefined: taus.len() - defined.len(),
                mean_tau: (!defined.is_empty()).then(|| mean(&defined)),
                tau_se: standard_error(&defined),
                scores,
                taus,
                scaled_targets: first.config.agents != crate::network::CANONICAL_AGENTS,
            })
        }
        None => None,
    };

    Ok(ExperimentSummary {
        label,
        game: network.name().to_string(),
        agents: first.config.agents,
        rounds: first.config.rounds,
        trials: results.len(),
        failed_trials: failed,
        routes,
        focal,
        payoff,
        regret,
        switches,
        deviation,
    })
}
