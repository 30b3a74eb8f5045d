//! JSONL run logs.
//!
//! One file per experiment: a header line, then for each trial its round
//! lines followed by a footer. Trials appear in trial order even when they
//! run concurrently; the trial at the head of the queue streams straight to
//! disk and later ones are buffered until it finishes. Nothing time-dependent
//! is written, so algorithmic runs with equal seeds give identical files.
//!
//! Language-model completions go to `transcripts/trial-<i>.jsonl` next to the
//! log so the metric path never has to parse bulky prompt text.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::ExperimentConfig;
use crate::engine::{ExperimentPlan, TrialConfig, TrialEvent, TrialOutcome, TrialResult};
use crate::history::{GameHistory, RoundRecord};
use crate::llm::TranscriptEntry;
use crate::network::{ActionProfile, Cost};

pub const SCHEMA_VERSION: u32 = 1;
pub const RUNLOG_FILE: &str = "runlog.jsonl";
pub const TRANSCRIPT_DIR: &str = "transcripts";

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: schema version {found}, expected {SCHEMA_VERSION}")]
    SchemaVersion { path: PathBuf, found: u32 },
    #[error("{path}: missing header line")]
    MissingHeader { path: PathBuf },
    #[error("trial {trial}: {message}")]
    Inconsistent { trial: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunLogError + '_ {
    move |source| RunLogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema_version: u32,
    /// The configuration as given, when the run came from a config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ExperimentConfig>,
    /// Settings shared by every trial; trial `i` uses seed `seed_base + i`.
    pub template: TrialConfig,
    pub trials: usize,
    pub seed_base: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLine {
    pub trial: usize,
    pub round: usize,
    pub choices: ActionProfile,
    /// Agents per route, in catalog order.
    pub distribution: Vec<usize>,
    pub payoffs: Vec<Cost>,
    pub regrets: Vec<Cost>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFooter {
    pub trial: usize,
    pub seed: u64,
    pub status: TrialStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub switch_counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_counts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_weights: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Line {
    Header(Header),
    Round(RoundLine),
    Trial(TrialFooter),
}

impl RoundLine {
    pub fn from_record(trial: usize, r: &RoundRecord) -> Self {
        Self {
            trial,
            round: r.round,
            choices: r.choices.clone(),
            distribution: r.counts.clone(),
            payoffs: r.payoffs.clone(),
            regrets: r.regrets.clone(),
        }
    }

    pub fn into_record(self) -> RoundRecord {
        RoundRecord {
            round: self.round,
            choices: self.choices,
            counts: self.distribution,
            payoffs: self.payoffs,
            regrets: self.regrets,
        }
    }
}

impl TrialFooter {
    pub fn from_outcome(outcome: &TrialOutcome) -> Self {
        match &outcome.result {
            Ok(r) => Self {
                trial: outcome.trial,
                seed: outcome.seed,
                status: TrialStatus::Ok,
                error: None,
                switch_counts: r.switch_counts.clone(),
                focal_counts: r.focal_counts.clone(),
                final_weights: r.final_weights.clone(),
            },
            Err(e) => Self {
                trial: outcome.trial,
                seed: outcome.seed,
                status: TrialStatus::Failed,
                error: Some(e.to_string()),
                switch_counts: Vec::new(),
                focal_counts: None,
                final_weights: None,
            },
        }
    }
}

fn to_line(line: &Line) -> String {
    let mut s = serde_json::to_string(line).expect("run log lines serialize");
    s.push('\n');
    s
}

struct Ordering<W: Write> {
    out: W,
    next: usize,
    pending: BTreeMap<usize, String>,
    finished: BTreeSet<usize>,
    error: Option<std::io::Error>,
}

impl<W: Write> Ordering<W> {
    fn emit(&mut self, trial: usize, text: &str) {
        if trial == self.next {
            self.write(text);
        } else {
            self.pending.entry(trial).or_default().push_str(text);
        }
    }

    fn write(&mut self, text: &str) {
        if self.error.is_none() {
            if let Err(e) = self.out.write_all(text.as_bytes()).and_then(|_| self.out.flush()) {
                self.error = Some(e);
            }
        }
    }

    fn finish(&mut self, trial: usize) {
        self.finished.insert(trial);
        while self.finished.remove(&self.next) {
            self.next += 1;
            if let Some(text) = self.pending.remove(&self.next) {
                self.write(&text);
            }
        }
    }
}

/// Single writer for one experiment's log, safe to feed from many threads.
pub struct RunLogWriter<W: Write = BufWriter<File>> {
    state: Mutex<Ordering<W>>,
    transcripts: Option<PathBuf>,
}

impl RunLogWriter {
    /// Creates `dir/runlog.jsonl` (and the transcript directory for
    /// language-model runs) and writes the header.
    pub fn create(dir: &Path, header: &Header) -> Result<Self, RunLogError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(RUNLOG_FILE);
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut writer = Self::new(BufWriter::new(file), header).map_err(io_err(&path))?;
        if header.template.agent.is_llm() {
            let t = dir.join(TRANSCRIPT_DIR);
            fs::create_dir_all(&t).map_err(io_err(&t))?;
            writer.transcripts = Some(t);
        }
        Ok(writer)
    }
}

impl<W: Write> RunLogWriter<W> {
    pub fn new(mut out: W, header: &Header) -> std::io::Result<Self> {
        out.write_all(to_line(&Line::Header(header.clone())).as_bytes())?;
        out.flush()?;
        Ok(Self {
            state: Mutex::new(Ordering {
                out,
                next: 0,
                pending: BTreeMap::new(),
                finished: BTreeSet::new(),
                error: None,
            }),
            transcripts: None,
        })
    }

    /// Feeds one engine event; usable directly as an experiment sink.
    pub fn record(&self, event: TrialEvent<'_>) {
        match event {
            TrialEvent::Round { trial, record } => {
                let text = to_line(&Line::Round(RoundLine::from_record(trial, record)));
                self.state.lock().expect("run log lock").emit(trial, &text);
            }
            TrialEvent::Finished { outcome } => {
                if let Some(dir) = &self.transcripts {
                    let path = transcript_path(dir, outcome.trial);
                    if let Err(e) = write_transcript(&path, &outcome.transcript) {
                        log::error!("{}: {e}", path.display());
                    }
                }
                let text = to_line(&Line::Trial(TrialFooter::from_outcome(outcome)));
                let mut state = self.state.lock().expect("run log lock");
                state.emit(outcome.trial, &text);
                state.finish(outcome.trial);
            }
        }
    }

    /// Returns the underlying writer, or the first write error.
    pub fn finish(self) -> std::io::Result<W> {
        let state = self.state.into_inner().expect("run log lock");
        match state.error {
            Some(e) => Err(e),
            None => Ok(state.out),
        }
    }
}

pub fn transcript_path(dir: &Path, trial: usize) -> PathBuf {
    dir.join(format!("trial-{trial}.jsonl"))
}

pub fn write_transcript(path: &Path, entries: &[TranscriptEntry]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads one transcript file, or every `trial-*.jsonl` in a directory.
pub fn read_transcripts(path: &Path) -> Result<Vec<TranscriptEntry>, RunLogError> {
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in fs::read_dir(path).map_err(io_err(path))? {
            let p = entry.map_err(io_err(path))?.path();
            if p.extension().is_some_and(|e| e == "jsonl") {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }
    let mut entries = Vec::new();
    for file in files {
        for (line, text) in read_lines(&file)? {
            entries.push(serde_json::from_str(&text).map_err(|e| RunLogError::Malformed {
                path: file.clone(),
                line,
                message: e.to_string(),
            })?);
        }
    }
    Ok(entries)
}

/// Non-empty lines with their 1-based numbers. A final line without a
/// terminating newline is a torn write and is dropped.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, RunLogError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut lines = Vec::new();
    let mut buf = String::new();
    let mut n = 0;
    loop {
        buf.clear();
        let read = reader.read_line(&mut buf).map_err(io_err(path))?;
        if read == 0 {
            break;
        }
        n += 1;
        if !buf.ends_with('\n') {
            log::warn!("{}:{n}: ignoring incomplete final line", path.display());
            break;
        }
        let text = buf.trim_end();
        if !text.is_empty() {
            lines.push((n, text.to_string()));
        }
    }
    Ok(lines)
}

/// One trial as found in a log; `footer` is absent if the run stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedTrial {
    pub trial: usize,
    pub rounds: Vec<RoundRecord>,
    pub footer: Option<TrialFooter>,
}

impl LoggedTrial {
    pub fn is_complete(&self) -> bool {
        matches!(&self.footer, Some(f) if f.status == TrialStatus::Ok)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub path: PathBuf,
    pub header: Header,
    pub trials: Vec<LoggedTrial>,
}

/// Accepts either a log file or the directory holding `runlog.jsonl`.
pub fn resolve_runlog(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(RUNLOG_FILE)
    } else {
        path.to_path_buf()
    }
}

impl RunLog {
    pub fn read(path: &Path) -> Result<Self, RunLogError> {
        let path = resolve_runlog(path);
        let lines = read_lines(&path)?;
        let mut header = None;
        let mut trials: BTreeMap<usize, LoggedTrial> = BTreeMap::new();
        for (n, text) in lines {
            let malformed = |message: String| RunLogError::Malformed {
                path: path.clone(),
                line: n,
                message,
            };
            if header.is_none() {
                let value: serde_json::Value =
                    serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
                if value.get("type").and_then(|t| t.as_str()) != Some("header") {
                    return Err(RunLogError::MissingHeader { path });
                }
                let found = value
                    .get("schema_version")
                    .and_then(|v| v.as_u64())
                    .ok_or_else(|| malformed("header without schema_version".into()))?;
                if found != SCHEMA_VERSION as u64 {
                    return Err(RunLogError::SchemaVersion {
                        path,
                        found: found as u32,
                    });
                }
            }
            match serde_json::from_str::<Line>(&text).map_err(|e| malformed(e.to_string()))? {
                Line::Header(h) => {
                    if header.replace(h).is_some() {
                        return Err(malformed("second header".into()));
                    }
                }
                Line::Round(r) => {
                    let t = trials.entry(r.trial).or_insert_with(|| LoggedTrial {
                        trial: r.trial,
                        rounds: Vec::new(),
                        footer: None,
                    });
                    if t.footer.is_some() || r.round != t.rounds.len() + 1 {
                        return Err(malformed(format!(
                            "unexpected round {} for trial {}",
                            r.round, r.trial
                        )));
                    }
                    t.rounds.push(r.into_record());
                }
                Line::Trial(f) => {
                    let t = trials.entry(f.trial).or_insert_with(|| LoggedTrial {
                        trial: f.trial,
                        rounds: Vec::new(),
                        footer: None,
                    });
                    if t.footer.replace(f).is_some() {
                        return Err(malformed("second footer".into()));
                    }
                }
            }
        }
        let header = header.ok_or_else(|| RunLogError::MissingHeader { path: path.clone() })?;
        Ok(Self {
            path,
            header,
            trials: trials.into_values().collect(),
        })
    }

    pub fn dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    pub fn trial(&self, trial: usize) -> Option<&LoggedTrial> {
        self.trials.iter().find(|t| t.trial == trial)
    }

    /// Config of trial `i` as the engine saw it.
    pub fn trial_config(&self, trial: usize) -> TrialConfig {
        let mut config = self.header.template.clone();
        config.trial = trial;
        config.seed = self.header.seed_base.wrapping_add(trial as u64);
        config
    }

    pub fn plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            template: self.header.template.clone(),
            trials: self.header.trials,
            seed_base: self.header.seed_base,
            workers: 1,
        }
    }

    /// Trials that ended with a failure footer.
    pub fn failed(&self) -> usize {
        self.trials
            .iter()
            .filter(|t| matches!(&t.footer, Some(f) if f.status == TrialStatus::Failed))
            .count()
    }

    /// Rebuilds the results of every completed trial, with transcripts when
    /// they were stored. Derived fields are recomputed and checked against
    /// the footer.
    pub fn results(&self) -> Result<Vec<TrialResult>, RunLogError> {
        let tdir = self.dir().join(TRANSCRIPT_DIR);
        self.trials
            .iter()
            .filter(|t| t.is_complete())
            .map(|t| {
                let footer = t.footer.as_ref().expect("complete trial has a footer");
                let config = self.trial_config(t.trial);
                let inconsistent = |message: String| RunLogError::Inconsistent {
                    trial: t.trial,
                    message,
                };
                if footer.seed != config.seed {
                    return Err(inconsistent(format!(
                        "footer seed {} but header implies {}",
                        footer.seed, config.seed
                    )));
                }
                let history = GameHistory::from_records(t.rounds.clone())
                    .ok_or_else(|| inconsistent("rounds are not consecutive".into()))?;
                if history.len() != config.rounds {
                    return Err(inconsistent(format!(
                        "{} rounds logged, {} configured",
                        history.len(),
                        config.rounds
                    )));
                }
                let path = transcript_path(&tdir, t.trial);
                let transcript = if path.exists() {
                    read_transcripts(&path)?
                } else {
                    Vec::new()
                };
                let result =
                    TrialResult::assemble(config, history, transcript, footer.final_weights.clone())
                        .map_err(|e| inconsistent(e.to_string()))?;
                if result.switch_counts != footer.switch_counts
                    || result.focal_counts != footer.focal_counts
                {
                    return Err(inconsistent("footer statistics disagree with rounds".into()));
                }
                Ok(result)
            })
            .collect()
    }
}
