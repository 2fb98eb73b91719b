#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use warsim::engine::{Engine, EngineConfig, RunLog};
use warsim::policy::{ChatRequest, Policy, Script, ScriptedPolicy, Transport, TransportError};
use warsim::scenario::Scenario;

pub fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn config(rounds: u32, snapshot: u32) -> EngineConfig {
    EngineConfig {
        max_rounds: rounds,
        eval_snapshot_round: snapshot,
        ..EngineConfig::default()
    }
}

pub fn scripted_policies(scenario: &Scenario, fixture: &str) -> Vec<Arc<dyn Policy>> {
    let script = Script::load(&repo_path(fixture)).expect("fixture loads");
    let policy: Arc<dyn Policy> =
        Arc::new(ScriptedPolicy::new(&script, &scenario.roster()).expect("fixture resolves"));
    vec![policy; scenario.roster().len()]
}

pub fn scripted_run(scenario: &Scenario, fixture: &str, rounds: u32, snapshot: u32) -> RunLog {
    Engine::new(scenario, scripted_policies(scenario, fixture), config(rounds, snapshot))
        .expect("engine config")
        .run()
        .expect("scripted run completes")
}

/// Deterministic stand-in for a chat model: analysis text for the first
/// three stages, then a mobilization plus an alliance request whose target
/// depends on the request digest.
pub struct MockModel;

impl MockModel {
    pub fn answer(request: &ChatRequest) -> String {
        let system = &request.messages[0].content;
        let country = system
            .split("decision maker of ")
            .nth(1)
            .and_then(|s| s.split(" and can").next())
            .unwrap_or("Nobody")
            .to_string();
        let users = request.messages.iter().filter(|m| m.role == "user").count();
        if users < 4 {
            return format!("Analysis for {country}, stage {users}.");
        }
        let stage1 = &request.messages[1].content;
        let others: Vec<&str> = stage1
            .split("# Countries in the world\n")
            .nth(1)
            .and_then(|s| s.lines().next())
            .unwrap_or("")
            .split(", ")
            .filter(|c| *c != country)
            .collect();
        let key = request.cache_key();
        let pick = usize::from_str_radix(&key[..4], 16).unwrap() % others.len().max(1);
        format!(
            "Summary.\n{country} has chosen to General Mobilization\n{country} has chosen to Request Military Alliance to {}",
            others.get(pick).copied().unwrap_or("Nobody")
        )
    }
}

impl Transport for MockModel {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        Ok(Self::answer(request))
    }
}
