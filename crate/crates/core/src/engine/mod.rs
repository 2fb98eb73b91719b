//! Synchronous round orchestration.
//!
//! Each round: route the previous round's applied actions by publicity,
//! snapshot the world, run every agent's secretary loop against that same
//! snapshot (in parallel), then apply the final actions serially. Responses
//! go first, then everything else, each sub-ordered by roster index and
//! proposal order. Requests not answered in their delivery round lapse.

pub mod runlog;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::policy::prompts::build_prompts;
use crate::policy::{AgentContext, InboxItem, Policy, PolicyError};
use crate::protocol::{format_action, Action, ActionKind};
use crate::roster::{CountryId, Roster};
use crate::scenario::{render_profile, Scenario};
use crate::secretary::{negotiate, SecretaryContext};
use crate::worldstate::{render_board, translate_board, Board, WorldState};

pub use runlog::{
    AppliedEvent, CountryRound, EventStatus, RoundRecord, RunHeader, RunLog, RunSummary,
    RunWriter, StopReason, Transcript,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub max_rounds: u32,
    pub eval_snapshot_round: u32,
    /// Rounds of own past actions shown to the agent.
    pub history_window: u32,
    pub stop_on_connectivity: bool,
    /// Consecutive identical connected boards needed to stop.
    pub stability_window: u32,
    pub mobilization_public: bool,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_rounds: 10,
            eval_snapshot_round: 6,
            history_window: 1,
            stop_on_connectivity: false,
            stability_window: 3,
            mobilization_public: true,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.max_rounds == 0 {
            return Err(EngineError::Config("max_rounds must be at least 1".into()));
        }
        if self.eval_snapshot_round == 0 || self.eval_snapshot_round > self.max_rounds {
            return Err(EngineError::Config(format!(
                "eval_snapshot_round {} outside 1..={}",
                self.eval_snapshot_round, self.max_rounds
            )));
        }
        if self.stability_window == 0 {
            return Err(EngineError::Config("stability_window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    Config(String),
    #[error("expected {expected} policies, one per roster country, got {got}")]
    PolicyCount { expected: usize, got: usize },
    #[error("{country} in round {round}: {source}")]
    Policy {
        round: u32,
        country: String,
        #[source]
        source: PolicyError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt run log: {0}")]
    Corrupt(String),
    #[error("replay diverges in round {round}: {detail}")]
    Divergence { round: u32, detail: String },
}

impl EngineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        EngineError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub struct Engine<'s> {
    scenario: &'s Scenario,
    roster: Roster,
    policies: Vec<Arc<dyn Policy>>,
    config: EngineConfig,
    overlay_digest: Option<String>,
    out: Option<PathBuf>,
    state: WorldState,
    profiles: Vec<String>,
    records: Vec<RoundRecord>,
}

struct Turn {
    record: CountryRound,
    transcript: Transcript,
}

impl<'s> Engine<'s> {
    pub fn new(
        scenario: &'s Scenario,
        policies: Vec<Arc<dyn Policy>>,
        config: EngineConfig,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let roster = scenario.roster();
        if policies.len() != roster.len() {
            return Err(EngineError::PolicyCount {
                expected: roster.len(),
                got: policies.len(),
            });
        }
        let profiles = roster
            .ids()
            .map(|c| render_profile(scenario.profile(c)))
            .collect();
        let state =
            WorldState::new(roster.len()).with_mobilization_public(config.mobilization_public);
        Ok(Engine {
            scenario,
            roster,
            policies,
            config,
            overlay_digest: None,
            out: None,
            state,
            profiles,
            records: Vec::new(),
        })
    }

    pub fn with_overlay_digest(mut self, digest: Option<String>) -> Self {
        self.overlay_digest = digest;
        self
    }

    /// Persist the run into `dir`.
    pub fn with_output(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out = Some(dir.into());
        self
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn header(&self) -> RunHeader {
        RunHeader {
            scenario_id: self.scenario.id.clone(),
            overlay_digest: self.overlay_digest.clone(),
            scenario_digest: digest_json(self.scenario),
            roster: self.roster.clone(),
            config: self.config.clone(),
            policies: self.policies.iter().map(|p| p.describe()).collect(),
        }
    }

    /// Runs to completion. On a fatal policy error or I/O failure the rounds
    /// completed so far are already on disk and the summary records the abort.
    pub fn run(mut self) -> Result<RunLog, EngineError> {
        let header = self.header();
        let mut writer = match &self.out {
            Some(dir) => Some(RunWriter::create(dir, &header)?),
            None => None,
        };
        let termination = loop {
            let round = self.records.len() as u32 + 1;
            let (record, transcripts) = match self.step(round) {
                Ok(x) => x,
                Err(e) => {
                    if let Some(w) = writer.take() {
                        w.finish(&RunSummary {
                            rounds: round - 1,
                            termination: StopReason::Aborted,
                            error: Some(e.to_string()),
                        })?;
                    }
                    return Err(e);
                }
            };
            if let Some(w) = writer.as_mut() {
                let board = self.state.board();
                let text = format!(
                    "{}\n{}\n",
                    render_board(board, &self.roster),
                    translate_board(board, &self.roster)
                );
                w.write_round(&record, &transcripts, &text)?;
            }
            tracing::info!(round, events = record.events.len(), "round complete");
            self.records.push(record);
            if let Some(reason) = should_stop(&self.records, &self.config) {
                break reason;
            }
        };
        if let Some(w) = writer {
            w.finish(&RunSummary {
                rounds: self.records.len() as u32,
                termination,
                error: None,
            })?;
        }
        Ok(RunLog {
            header,
            rounds: self.records,
            termination,
        })
    }

    fn inboxes(&self, round: u32) -> Vec<Vec<InboxItem>> {
        let n = self.roster.len();
        if round == 1 {
            let item = InboxItem {
                round: 0,
                from: None,
                public: true,
                text: self.scenario.trigger.text.clone(),
            };
            return vec![vec![item]; n];
        }
        let mut out = vec![Vec::new(); n];
        let Some(prev) = self.records.last() else {
            return out;
        };
        for action in prev.applied() {
            let public = action.is_public();
            let recipients: Vec<CountryId> = match action.kind {
                ActionKind::WaitWithoutAction => vec![],
                ActionKind::GeneralMobilization if !self.config.mobilization_public => vec![],
                _ if public => self.roster.ids().filter(|c| *c != action.actor).collect(),
                _ => action.target.into_iter().collect(),
            };
            let text = format_action(action, &self.roster);
            for r in recipients {
                out[r.0].push(InboxItem {
                    round: prev.round,
                    from: Some(action.actor),
                    public,
                    text: text.clone(),
                });
            }
        }
        out
    }

    fn history(&self, c: CountryId, round: u32) -> Vec<String> {
        let from = round.saturating_sub(self.config.history_window).max(1);
        (from..round)
            .filter_map(|r| self.records.get(r as usize - 1))
            .flat_map(|rec| {
                rec.country(c)
                    .map(|cr| cr.final_lines.clone())
                    .unwrap_or_default()
                    .into_iter()
                    .map(move |l| format!("Round {}: {l}", rec.round))
            })
            .collect()
    }

    fn context(&self, c: CountryId, round: u32, inbox: Vec<InboxItem>) -> AgentContext {
        let view = self.state.agent_view(c).expect("roster country");
        let known = self.state.known_mobilized(c).expect("roster country");
        AgentContext {
            round,
            actor: c,
            roster: self.roster.clone(),
            attitude: self.scenario.attitude,
            profile: self.profiles[c.0].clone(),
            situation: situation_text(&view, &known, &self.roster),
            inbox,
            history: self.history(c, round),
            view,
            mobilized: self.state.stick(c).mobilized,
            pending: self.state.pending_for(c).into_iter().cloned().collect(),
        }
    }

    /// Plays one round against the current state.
    pub fn step(&mut self, round: u32) -> Result<(RoundRecord, Vec<Transcript>), EngineError> {
        let inboxes = self.inboxes(round);
        self.state.round = round;
        let contexts: Vec<AgentContext> = self
            .roster
            .ids()
            .zip(inboxes)
            .map(|(c, inbox)| self.context(c, round, inbox))
            .collect();

        let state = &self.state;
        let roster = &self.roster;
        let turns: Vec<Result<Turn, EngineError>> = contexts
            .par_iter()
            .zip(self.policies.par_iter())
            .map(|(ctx, policy)| {
                let sctx = SecretaryContext::from_state(state, ctx.actor, roster);
                let fatal: Mutex<Option<PolicyError>> = Mutex::new(None);
                let mut session = policy.begin(ctx);
                let negotiation = negotiate(&sctx, |fb| {
                    session.propose(fb).inspect_err(|e| {
                        if e.is_fatal() {
                            *fatal.lock().expect("unpoisoned") = Some(e.clone());
                        }
                    })
                });
                let session = session.finish();
                if let Some(source) = fatal.into_inner().expect("unpoisoned") {
                    return Err(EngineError::Policy {
                        round,
                        country: ctx.name().to_string(),
                        source,
                    });
                }
                let final_lines = negotiation
                    .actions
                    .iter()
                    .map(|a| format_action(a, roster))
                    .collect();
                Ok(Turn {
                    record: CountryRound {
                        country: ctx.actor,
                        inbox: ctx.inbox.clone(),
                        negotiation: negotiation.clone(),
                        final_lines,
                        exchanges: session.exchanges.clone(),
                        view_digest: String::new(),
                    },
                    transcript: Transcript {
                        round,
                        country: ctx.name().to_string(),
                        policy: policy.describe(),
                        prompts: build_prompts(ctx),
                        session,
                        negotiation,
                    },
                })
            })
            .collect();
        let turns = turns.into_iter().collect::<Result<Vec<_>, _>>()?;

        let mut ordered: Vec<&Action> = turns
            .iter()
            .flat_map(|t| t.record.negotiation.actions.iter())
            .collect();
        ordered.sort_by_key(|a| !a.kind.is_response());
        let events = ordered
            .into_iter()
            .map(|action| {
                let status = match self.state.apply_in_place(action) {
                    Ok(()) => EventStatus::Applied,
                    Err(e) => {
                        tracing::debug!(round, %e, "action superseded");
                        EventStatus::Superseded {
                            rule: e.rule().to_string(),
                            reason: e.to_string(),
                        }
                    }
                };
                AppliedEvent {
                    action: action.clone(),
                    line: format_action(action, &self.roster),
                    status,
                }
            })
            .collect();
        let expired = self.state.expire_requests_before(round);

        let mut countries = Vec::with_capacity(turns.len());
        let mut transcripts = Vec::with_capacity(turns.len());
        for t in turns {
            let mut record = t.record;
            record.view_digest =
                digest_json(&self.state.agent_view(record.country).expect("roster country"));
            countries.push(record);
            transcripts.push(t.transcript);
        }
        Ok((
            RoundRecord {
                round,
                countries,
                events,
                expired,
                board: self.state.board().snapshot(),
                sticks: self.state.sticks().to_vec(),
            },
            transcripts,
        ))
    }
}

/// Board translation plus known mobilizations, from one agent's view.
pub fn situation_text(view: &Board, mobilized: &BTreeSet<CountryId>, roster: &Roster) -> String {
    let mut parts = Vec::new();
    let board = translate_board(view, roster);
    if !board.is_empty() {
        parts.push(board);
    }
    for c in mobilized {
        parts.push(format!(
            "{} has carried out a general mobilization.",
            roster.prose_name(*c, true)
        ));
    }
    parts.join(" ")
}

/// Termination check after the last recorded round.
pub fn should_stop(records: &[RoundRecord], config: &EngineConfig) -> Option<StopReason> {
    let last = records.last()?;
    if config.stop_on_connectivity {
        let r = config.stability_window as usize;
        if records.len() >= r {
            let window = &records[records.len() - r..];
            let stable = window.iter().all(|w| w.board.codes == last.board.codes);
            let connected = Board::from_snapshot(&last.board)
                .map(|b| b.is_connected())
                .unwrap_or(false);
            if stable && connected {
                return Some(StopReason::BoardConnectivity);
            }
        }
    }
    (last.round >= config.max_rounds).then_some(StopReason::MaxRounds)
}

/// Re-applies every recorded final action from the initial state and checks
/// the recorded verdicts, boards and sticks.
pub fn verify_log(log: &RunLog) -> Result<(), EngineError> {
    let n = log.roster().len();
    let mut state = WorldState::new(n).with_mobilization_public(log.header.config.mobilization_public);
    for record in &log.rounds {
        state.round = record.round;
        let finals: Vec<&Action> = record
            .countries
            .iter()
            .flat_map(|c| c.negotiation.actions.iter())
            .collect();
        let mut expected: Vec<&Action> = finals.clone();
        expected.sort_by_key(|a| !a.kind.is_response());
        let recorded: Vec<&Action> = record.events.iter().map(|e| &e.action).collect();
        if expected != recorded {
            return Err(EngineError::Divergence {
                round: record.round,
                detail: "event order does not match final actions".into(),
            });
        }
        for event in &record.events {
            let ok = state.apply_in_place(&event.action).is_ok();
            if ok != event.applied() {
                return Err(EngineError::Divergence {
                    round: record.round,
                    detail: format!("verdict differs for {:?}", event.line),
                });
            }
        }
        state.expire_requests_before(record.round);
        if state.board().snapshot() != record.board {
            return Err(EngineError::Divergence {
                round: record.round,
                detail: "board snapshot differs".into(),
            });
        }
        if state.sticks() != record.sticks.as_slice() {
            return Err(EngineError::Divergence {
                round: record.round,
                detail: "stick snapshot differs".into(),
            });
        }
    }
    Ok(())
}

pub(crate) fn digest_json<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("value serializes");
    hex::encode(Sha256::digest(bytes))
}
