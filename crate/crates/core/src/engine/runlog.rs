//! Run log types and the on-disk run directory.
//!
//! ```text
//! <dir>/config.json              RunHeader
//! <dir>/rounds.jsonl             one RoundRecord per line
//! <dir>/summary.json             RunSummary
//! <dir>/transcripts/round_<n>/<country>.json
//! <dir>/boards/round_<n>.txt
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EngineConfig, EngineError};
use crate::policy::prompts::StagedPrompts;
use crate::policy::{InboxItem, SessionRecord};
use crate::protocol::Action;
use crate::roster::{CountryId, Roster};
use crate::secretary::Negotiation;
use crate::worldstate::{BoardSnapshot, PendingRequest, Stick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxRounds,
    BoardConnectivity,
    Aborted,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::MaxRounds => "max_rounds",
            StopReason::BoardConnectivity => "board_connectivity",
            StopReason::Aborted => "aborted",
        })
    }
}

/// One agent's round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryRound {
    pub country: CountryId,
    pub inbox: Vec<InboxItem>,
    pub negotiation: Negotiation,
    pub final_lines: Vec<String>,
    /// Cache keys of the chat exchanges behind this round, if any.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exchanges: Vec<String>,
    /// sha256 of the agent's serialized view after the round.
    pub view_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EventStatus {
    Applied,
    Superseded { rule: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedEvent {
    pub action: Action,
    pub line: String,
    #[serde(flatten)]
    pub status: EventStatus,
}

impl AppliedEvent {
    pub fn applied(&self) -> bool {
        self.status == EventStatus::Applied
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub countries: Vec<CountryRound>,
    /// Every final action in application order.
    pub events: Vec<AppliedEvent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expired: Vec<PendingRequest>,
    /// Canonical board at the end of the round.
    pub board: BoardSnapshot,
    pub sticks: Vec<Stick>,
}

impl RoundRecord {
    pub fn applied(&self) -> impl Iterator<Item = &Action> {
        self.events.iter().filter(|e| e.applied()).map(|e| &e.action)
    }

    pub fn country(&self, c: CountryId) -> Option<&CountryRound> {
        self.countries.iter().find(|r| r.country == c)
    }
}

/// Contents of `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub scenario_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlay_digest: Option<String>,
    /// Digest of the scenario as run (after overlay and anonymization).
    pub scenario_digest: String,
    pub roster: Roster,
    pub config: EngineConfig,
    pub policies: Vec<String>,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rounds: u32,
    pub termination: StopReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub header: RunHeader,
    pub rounds: Vec<RoundRecord>,
    pub termination: StopReason,
}

impl RunLog {
    pub fn round(&self, r: u32) -> Option<&RoundRecord> {
        r.checked_sub(1).and_then(|i| self.rounds.get(i as usize))
    }

    pub fn roster(&self) -> &Roster {
        &self.header.roster
    }

    /// Reads a run directory written by [`RunWriter`].
    pub fn load(dir: &Path) -> Result<RunLog, EngineError> {
        let header: RunHeader = read_json(&dir.join("config.json"))?;
        let summary: RunSummary = read_json(&dir.join("summary.json"))?;
        let path = dir.join("rounds.jsonl");
        let file = File::open(&path).map_err(|e| EngineError::io(&path, e))?;
        let mut rounds = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| EngineError::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: RoundRecord = serde_json::from_str(&line).map_err(|e| {
                EngineError::Corrupt(format!("{} line {}: {e}", path.display(), i + 1))
            })?;
            rounds.push(record);
        }
        for (i, r) in rounds.iter().enumerate() {
            if r.round as usize != i + 1 {
                return Err(EngineError::Corrupt(format!(
                    "rounds are not contiguous: line {} holds round {}",
                    i + 1,
                    r.round
                )));
            }
        }
        Ok(RunLog {
            header,
            rounds,
            termination: summary.termination,
        })
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, EngineError> {
    let text = fs::read_to_string(path).map_err(|e| EngineError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| EngineError::Corrupt(format!("{}: {e}", path.display())))
}

/// Per-agent transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub round: u32,
    pub country: String,
    pub policy: String,
    pub prompts: StagedPrompts,
    pub session: SessionRecord,
    pub negotiation: Negotiation,
}

/// Single owner of a run directory.
pub struct RunWriter {
    dir: PathBuf,
    rounds: BufWriter<File>,
}

impl RunWriter {
    pub fn create(dir: &Path, header: &RunHeader) -> Result<Self, EngineError> {
        for sub in ["transcripts", "boards"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| EngineError::io(&p, e))?;
        }
        write_json(&dir.join("config.json"), header)?;
        let path = dir.join("rounds.jsonl");
        let file = File::create(&path).map_err(|e| EngineError::io(&path, e))?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            rounds: BufWriter::new(file),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_round(
        &mut self,
        record: &RoundRecord,
        transcripts: &[Transcript],
        board_text: &str,
    ) -> Result<(), EngineError> {
        let path = self.dir.join("rounds.jsonl");
        let line = serde_json::to_string(record).expect("round records serialize");
        writeln!(self.rounds, "{line}")
            .and_then(|_| self.rounds.flush())
            .map_err(|e| EngineError::io(&path, e))?;
        let tdir = self.dir.join("transcripts").join(format!("round_{}", record.round));
        fs::create_dir_all(&tdir).map_err(|e| EngineError::io(&tdir, e))?;
        for t in transcripts {
            write_json(&tdir.join(format!("{}.json", file_stem(&t.country))), t)?;
        }
        let board = self
            .dir
            .join("boards")
            .join(format!("round_{}.txt", record.round));
        fs::write(&board, board_text).map_err(|e| EngineError::io(&board, e))
    }

    pub fn finish(mut self, summary: &RunSummary) -> Result<(), EngineError> {
        let path = self.dir.join("rounds.jsonl");
        self.rounds.flush().map_err(|e| EngineError::io(&path, e))?;
        write_json(&self.dir.join("summary.json"), summary)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EngineError> {
    let mut text = serde_json::to_string_pretty(value).expect("run artifacts serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| EngineError::io(path, e))
}

/// Filesystem-safe country name.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}
