//! Agent decision-making behind one interface.
//!
//! A [`Policy`] opens a [`Session`] per agent per round. The secretary's
//! correction loop calls [`Session::propose`] with the previous verdict's
//! feedback, and the engine persists [`Session::finish`] as the transcript.

pub mod chat;
pub mod prompts;
pub mod random;
pub mod scripted;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::roster::{CountryId, Roster};
use crate::scenario::Attitude;
use crate::worldstate::{Board, PendingRequest};

pub use chat::{
    CacheMode, ChatCache, ChatClient, ChatMessage, ChatPolicy, ChatRequest, HttpTransport, RetryPolicy,
    Transport, TransportError,
};
pub use random::RandomPolicy;
pub use scripted::{Script, ScriptedPolicy};

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyError {
    #[error("ReplayMiss: no cached response for request {key}")]
    ReplayMiss { key: String },
    #[error("policy unavailable: {0}")]
    Unavailable(String),
    #[error("script has no entry for {country} in round {round}")]
    ScriptGap { round: u32, country: String },
    #[error("cache: {0}")]
    Cache(String),
}

impl PolicyError {
    /// Whether the run must stop rather than degrade the agent to waiting.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            PolicyError::ReplayMiss { .. } | PolicyError::ScriptGap { .. } | PolicyError::Cache(_)
        )
    }
}

/// One delivered line in an agent's inbox.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InboxItem {
    pub round: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<CountryId>,
    pub public: bool,
    pub text: String,
}

/// Everything a policy may see. All world text derives from the agent's
/// own view.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentContext {
    pub round: u32,
    pub actor: CountryId,
    pub roster: Roster,
    pub attitude: Attitude,
    pub profile: String,
    /// Board translation plus known mobilizations.
    pub situation: String,
    pub inbox: Vec<InboxItem>,
    /// The agent's own final action lines from earlier rounds.
    pub history: Vec<String>,
    pub view: Board,
    pub mobilized: bool,
    /// Requests addressed to the agent.
    pub pending: Vec<PendingRequest>,
}

impl AgentContext {
    pub fn name(&self) -> &str {
        self.roster.name(self.actor)
    }
}

/// What a session leaves behind for the run transcript.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub messages: Vec<ChatMessage>,
    /// Cache keys of every chat exchange, in call order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exchanges: Vec<String>,
}

pub trait Session {
    fn propose(&mut self, feedback: Option<&str>) -> Result<Vec<String>, PolicyError>;
    fn finish(self: Box<Self>) -> SessionRecord;
}

pub trait Policy: Send + Sync {
    fn begin<'a>(&'a self, ctx: &'a AgentContext) -> Box<dyn Session + 'a>;
    fn describe(&self) -> String;
}

/// Per-agent seed: the first eight bytes (little endian) of
/// `sha256("warsim:{master}:{country}:{round}:{attempt}")`.
pub fn derive_seed(master: u64, country: CountryId, round: u32, attempt: u32) -> u64 {
    let digest = Sha256::digest(format!("warsim:{master}:{}:{round}:{attempt}", country.0));
    u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"))
}

/// Lines of a model answer that carry an action.
pub fn extract_action_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| {
            l.trim()
                .trim_start_matches(['-', '*', '•'])
                .trim()
                .trim_matches('`')
                .trim()
        })
        .map(strip_enumeration)
        .filter(|l| l.contains(" has chosen to "))
        .map(String::from)
        .collect()
}

fn strip_enumeration(line: &str) -> &str {
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        if let Some(rest) = line[digits..].strip_prefix(['.', ')']) {
            return rest.trim_start();
        }
    }
    line
}
