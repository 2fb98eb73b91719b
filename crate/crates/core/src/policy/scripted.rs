//! Policies replaying action lines from a script file.
//!
//! A script is either a plain map `round -> country -> [lines]` or an object
//! with `rounds`, optional `corrections` (served when the secretary asks for
//! a revision) and optional `amendments` documenting edits to a source
//! transcript.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AgentContext, Policy, PolicyError, Session, SessionRecord};
use crate::roster::{CountryId, Roster};

type RoundMap = BTreeMap<String, BTreeMap<String, Vec<String>>>;

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("script schema violation: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("script round key {0:?} is not a positive integer")]
    BadRound(String),
    #[error("script names unknown country {0:?}")]
    UnknownCountry(String),
}

/// One documented edit relative to a source transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Amendment {
    pub round: u32,
    pub country: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub added: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed: Option<String>,
    pub rule: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub rounds: RoundMap,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub corrections: RoundMap,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub amendments: Vec<Amendment>,
    #[serde(default, rename = "_comment", skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Full(Script),
    Plain(RoundMap),
}

impl Script {
    pub fn from_json(text: &str) -> Result<Self, ScriptError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let script = if value.get("rounds").is_some() {
            serde_json::from_value::<Script>(value)?
        } else {
            match serde_json::from_value::<ScriptFile>(value)? {
                ScriptFile::Full(s) => s,
                ScriptFile::Plain(rounds) => Script {
                    rounds,
                    ..Script::default()
                },
            }
        };
        for key in script.rounds.keys().chain(script.corrections.keys()) {
            parse_round(key)?;
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn max_round(&self) -> u32 {
        self.rounds
            .keys()
            .filter_map(|k| parse_round(k).ok())
            .max()
            .unwrap_or(0)
    }

    /// Lines for `(round, country)`, by exact roster name.
    pub fn lines(&self, round: u32, country: &str) -> Option<&Vec<String>> {
        self.rounds.get(&round.to_string())?.get(country)
    }

    pub fn lines_mut(&mut self, round: u32, country: &str) -> Option<&mut Vec<String>> {
        self.rounds.get_mut(&round.to_string())?.get_mut(country)
    }
}

fn parse_round(key: &str) -> Result<u32, ScriptError> {
    key.parse::<u32>()
        .ok()
        .filter(|r| *r > 0)
        .ok_or_else(|| ScriptError::BadRound(key.to_string()))
}

type Resolved = BTreeMap<(u32, CountryId), Vec<String>>;

fn resolve(map: &RoundMap, roster: &Roster) -> Result<Resolved, ScriptError> {
    let mut out = BTreeMap::new();
    for (round, countries) in map {
        let round = parse_round(round)?;
        for (name, lines) in countries {
            let id = roster
                .resolve(name)
                .ok_or_else(|| ScriptError::UnknownCountry(name.clone()))?;
            out.insert((round, id), lines.clone());
        }
    }
    Ok(out)
}

pub struct ScriptedPolicy {
    rounds: Resolved,
    corrections: Resolved,
}

impl ScriptedPolicy {
    pub fn new(script: &Script, roster: &Roster) -> Result<Self, ScriptError> {
        Ok(ScriptedPolicy {
            rounds: resolve(&script.rounds, roster)?,
            corrections: resolve(&script.corrections, roster)?,
        })
    }
}

impl Policy for ScriptedPolicy {
    fn begin<'a>(&'a self, ctx: &'a AgentContext) -> Box<dyn Session + 'a> {
        Box::new(ScriptedSession { policy: self, ctx })
    }

    fn describe(&self) -> String {
        "scripted".into()
    }
}

struct ScriptedSession<'a> {
    policy: &'a ScriptedPolicy,
    ctx: &'a AgentContext,
}

impl Session for ScriptedSession<'_> {
    fn propose(&mut self, feedback: Option<&str>) -> Result<Vec<String>, PolicyError> {
        let key = (self.ctx.round, self.ctx.actor);
        if feedback.is_some() {
            if let Some(lines) = self.policy.corrections.get(&key) {
                return Ok(lines.clone());
            }
        }
        self.policy
            .rounds
            .get(&key)
            .cloned()
            .ok_or_else(|| PolicyError::ScriptGap {
                round: self.ctx.round,
                country: self.ctx.name().to_string(),
            })
    }

    fn finish(self: Box<Self>) -> SessionRecord {
        SessionRecord::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Attitude;
    use crate::worldstate::Board;

    fn ctx(round: u32, actor: usize) -> AgentContext {
        AgentContext {
            round,
            actor: CountryId(actor),
            roster: Roster::from_names(&["Qi", "Chu"]),
            attitude: Attitude::Default,
            profile: String::new(),
            situation: String::new(),
            inbox: vec![],
            history: vec![],
            view: Board::new(2),
            mobilized: false,
            pending: vec![],
        }
    }

    #[test]
    fn plain_and_full_forms() {
        let roster = Roster::from_names(&["Qi", "Chu"]);
        let plain = Script::from_json(r#"{"1": {"Qi": ["Qi has chosen to Wait without Action"]}}"#)
            .unwrap();
        let p = ScriptedPolicy::new(&plain, &roster).unwrap();
        let c = ctx(1, 0);
        assert_eq!(
            p.begin(&c).propose(None).unwrap(),
            vec!["Qi has chosen to Wait without Action"]
        );
        let c2 = ctx(1, 1);
        assert!(matches!(
            p.begin(&c2).propose(None),
            Err(PolicyError::ScriptGap { round: 1, .. })
        ));

        let full = Script::from_json(
            r#"{"rounds": {"1": {"Chu": ["bad line"]}},
                "corrections": {"1": {"Chu": ["Chu has chosen to Wait without Action"]}}}"#,
        )
        .unwrap();
        let p = ScriptedPolicy::new(&full, &roster).unwrap();
        let mut s = p.begin(&c2);
        assert_eq!(s.propose(None).unwrap(), vec!["bad line"]);
        assert_eq!(
            s.propose(Some("Action 1 violates R1: x")).unwrap(),
            vec!["Chu has chosen to Wait without Action"]
        );
        assert_eq!(full.max_round(), 1);
    }

    #[test]
    fn rejects_bad_keys() {
        assert!(matches!(
            Script::from_json(r#"{"zero": {}}"#),
            Err(ScriptError::BadRound(_))
        ));
        let s = Script::from_json(r#"{"1": {"Atlantis": []}}"#).unwrap();
        assert!(matches!(
            ScriptedPolicy::new(&s, &Roster::from_names(&["Qi"])),
            Err(ScriptError::UnknownCountry(_))
        ));
    }
}
