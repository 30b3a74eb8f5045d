//! Analysis artifacts for one or more run logs.
//!
//! Each log becomes one row: its agent label (algorithm or representation
//! code) on its game. Outputs are `table1.csv` (route means with both error
//! estimates), `trajectories.csv` (per-round mean and standard error of the
//! four metrics), `tau.csv` (per-trial rank correlation of the deviation
//! score with time), `summary.json`, and one SVG line chart per metric.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::runlog::{RunLog, RunLogError};
use crate::metrics::{summarize_experiment, ExperimentSummary, MetricSeries, MetricsError};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no run logs given")]
    NoInput,
    #[error(transparent)]
    RunLog(#[from] RunLogError),
    #[error("{path}: {source}")]
    Metrics {
        path: PathBuf,
        #[source]
        source: MetricsError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub source: PathBuf,
    pub summary: ExperimentSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

pub const CHART_METRICS: [&str; 4] = ["focal", "payoff", "regret", "switches"];

/// Reads and summarizes every log. Failed and unfinished trials are left
/// out of the aggregates; failed ones are counted.
pub fn analyze(paths: &[PathBuf]) -> Result<Report, ReportError> {
    if paths.is_empty() {
        return Err(ReportError::NoInput);
    }
    let rows = paths
        .iter()
        .map(|p| {
            let log = RunLog::read(p)?;
            let results = log.results()?;
            let summary = summarize_experiment(&results, log.failed()).map_err(|source| {
                ReportError::Metrics {
                    path: log.path.clone(),
                    source,
                }
            })?;
            Ok(ReportRow {
                source: log.path,
                summary,
            })
        })
        .collect::<Result<_, ReportError>>()?;
    Ok(Report { rows })
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

fn opt2(v: Option<f64>) -> String {
    v.map(fmt2).unwrap_or_default()
}

fn opt4(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

impl Report {
    /// Route names over all rows, in first-seen order.
    pub fn route_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = Vec::new();
        for row in &self.rows {
            for r in &row.summary.routes {
                if !cols.contains(&r.route) {
                    cols.push(r.route.clone());
                }
            }
        }
        cols
    }

    /// Route means per row; `se` is the standard error across trial means,
    /// `sd` the mean within-trial standard deviation across rounds.
    pub fn table1_csv(&self) -> Result<String, ReportError> {
        let cols = self.route_columns();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head = vec!["label", "game", "agents", "rounds", "trials", "failed"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        for c in &cols {
            head.extend([c.clone(), format!("{c} se"), format!("{c} sd")]);
        }
        w.write_record(&head)?;
        for row in &self.rows {
            let s = &row.summary;
            let mut rec = vec![
                s.label.clone(),
                s.game.clone(),
                s.agents.to_string(),
                s.rounds.to_string(),
                s.trials.to_string(),
                s.failed_trials.to_string(),
            ];
            for c in &cols {
                match s.route(c) {
                    Some(r) => rec.extend([fmt2(r.mean), opt2(r.se_trials), opt2(r.sd_rounds)]),
                    None => rec.extend([String::new(), String::new(), String::new()]),
                }
            }
            w.write_record(&rec)?;
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8"))
    }

    pub fn trajectories_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head = vec!["label".to_string(), "game".into(), "round".into()];
        for m in CHART_METRICS {
            head.extend([format!("{m}_mean"), format!("{m}_se")]);
        }
        w.write_record(&head)?;
        for row in &self.rows {
            let s = &row.summary;
            let series = |name: &str| -> Option<&MetricSeries> {
                s.series().into_iter().find(|m| m.name == name)
            };
            for t in 0..s.rounds {
                let mut rec = vec![s.label.clone(), s.game.clone(), (t + 1).to_string()];
                for m in CHART_METRICS {
                    match series(m) {
                        Some(ms) => rec.extend([
                            format!("{:.4}", ms.round_mean[t]),
                            opt4(ms.round_se[t]),
                        ]),
                        None => rec.extend([String::new(), String::new()]),
                    }
                }
                w.write_record(&rec)?;
            }
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8"))
    }

    /// One line per trial (`undefined` is 1 when the score never changed),
    /// then one `mean` line per row carrying the undefined count.
    pub fn tau_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "game", "trial", "tau", "undefined"])?;
        for row in &self.rows {
            let s = &row.summary;
            let Some(d) = &s.deviation else { continue };
            for (i, tau) in d.taus.iter().enumerate() {
                w.write_record([
                    s.label.clone(),
                    s.game.clone(),
                    i.to_string(),
                    opt4(*tau),
                    u8::from(tau.is_none()).to_string(),
                ])?;
            }
            w.write_record([
                s.label.clone(),
                s.game.clone(),
                "mean".into(),
                opt4(d.mean_tau),
                d.undefined.to_string(),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8"))
    }

    /// Line chart of one metric's per-round mean, one line per row.
    pub fn chart_svg(&self, metric: &str) -> Option<String> {
        let lines: Vec<(&str, &str, &[f64])> = self
            .rows
            .iter()
            .filter_map(|r| {
                let s = &r.summary;
                s.series()
                    .into_iter()
                    .find(|m| m.name == metric)
                    .map(|m| (s.label.as_str(), s.game.as_str(), m.round_mean.as_slice()))
            })
            .collect();
        if lines.is_empty() {
            return None;
        }
        Some(line_chart(metric, &lines))
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ReportError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut files = vec![
            ("table1.csv".to_string(), self.table1_csv()?),
            ("trajectories.csv".to_string(), self.trajectories_csv()?),
            ("tau.csv".to_string(), self.tau_csv()?),
            (
                "summary.json".to_string(),
                serde_json::to_string_pretty(self).expect("summary serializes") + "\n",
            ),
        ];
        for m in CHART_METRICS {
            if let Some(svg) = self.chart_svg(m) {
                files.push((format!("{m}.svg"), svg));
            }
        }
        let mut written = Vec::new();
        for (name, text) in files {
            let path = dir.join(name);
            fs::write(&path, text).map_err(io(&path))?;
            written.push(path);
        }
        Ok(written)
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn line_chart(title: &str, lines: &[(&str, &str, &[f64])]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 360.0, 56.0, 150.0, 28.0, 36.0);
    let rounds = lines.iter().map(|l| l.2.len()).max().unwrap_or(1).max(2);
    let values = lines.iter().flat_map(|l| l.2.iter().copied());
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !(hi > lo) {
        lo -= 1.0;
        hi += 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x = |t: usize| left + pw * t as f64 / (rounds - 1) as f64;
    let y = |v: f64| top + ph * (1.0 - (v - lo) / (hi - lo));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{left}" y="18" font-size="13">{title} by round</text>"#);
    let _ = writeln!(
        s,
        r##"<path d="M{left},{top} V{} H{}" fill="none" stroke="#333"/>"##,
        top + ph,
        left + pw
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            left - 4.0,
            y(v) + 4.0
        );
    }
    for t in [1, rounds / 2, rounds] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{t}</text>"#,
            x(t - 1),
            top + ph + 16.0
        );
    }
    for (i, (label, game, data)) in lines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = data
            .iter()
            .enumerate()
            .map(|(t, &v)| format!("{:.1},{:.1}", x(t), y(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.join(" ")
        );
        let ly = top + 14.0 * i as f64 + 8.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly:.1}" fill="{color}">{label} ({game})</text>"#,
            left + pw + 10.0
        );
    }
    s.push_str("</svg>\n");
    s
}
