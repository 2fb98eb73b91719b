//! Turning command-line flags into a scenario, policies and engine config.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use warsim::engine::EngineConfig;
use warsim::policy::{
    CacheMode, ChatCache, ChatClient, ChatPolicy, HttpTransport, Policy, RandomPolicy, Script,
    ScriptedPolicy, Transport,
};
use warsim::scenario::{resolve_scenario, resolve_trigger, Attitude, Overlay, Scenario, TriggerSpec};

/// File written next to `config.json` so `replay` can rebuild the run.
pub const INVOCATION_FILE: &str = "invocation.json";

#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Chat,
    Scripted,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Record,
    Replay,
}

impl From<ModeArg> for CacheMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Record => CacheMode::Record,
            ModeArg::Replay => CacheMode::Replay,
        }
    }
}

/// Flags shared by `run` and `counterfactual`.
#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Built-in scenario name (wwi, wwii, wsp) or path to a scenario file
    #[arg(long, default_value = "wwi")]
    pub scenario: String,
    #[arg(long, value_enum, default_value_t = PolicyKind::Random)]
    pub policy: PolicyKind,
    /// Action script for --policy scripted
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long, default_value = "gpt-4")]
    pub model: String,
    #[arg(long, default_value = "https://api.openai.com/v1/chat/completions")]
    pub endpoint: String,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Cache mode for --policy chat
    #[arg(long, value_enum, default_value_t = ModeArg::Record)]
    pub mode: ModeArg,
    #[arg(long, default_value = "cache")]
    pub cache: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub rounds: u32,
    /// Master seed; per-agent streams derive from (seed, country, round)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overlay file; repeat to compose in order
    #[arg(long)]
    pub overlay: Vec<PathBuf>,
    /// Built-in trigger (null, naval_incident, dardanelles) or trigger file
    #[arg(long)]
    pub trigger: Option<String>,
    /// default, aggressive or conservative
    #[arg(long)]
    pub attitude: Option<Attitude>,
    /// Replace country names with the scenario's aliases
    #[arg(long)]
    pub anonymize: bool,
    /// Round scored by `eval` (defaults to the scenario's, capped at --rounds)
    #[arg(long)]
    pub snapshot_round: Option<u32>,
    #[arg(long)]
    pub stop_on_connectivity: bool,
    #[arg(long, default_value_t = 3)]
    pub stability_window: u32,
    #[arg(long, default_value_t = 1)]
    pub history_window: u32,
    /// Announce mobilizations only to the mobilizing country
    #[arg(long)]
    pub private_mobilization: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    pub model: String,
    pub endpoint: String,
    pub temperature: f64,
    pub cache: PathBuf,
    pub seed: u64,
}

/// Everything needed to execute a run again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlay_digest: Option<String>,
    pub config: EngineConfig,
    pub policy: PolicySpec,
}

impl Invocation {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(INVOCATION_FILE);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn write(&self, run_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(run_dir)
            .with_context(|| format!("creating {}", run_dir.display()))?;
        let path = run_dir.join(INVOCATION_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

impl SimArgs {
    pub fn overlay(&self) -> Result<Overlay> {
        let mut overlay = Overlay::default();
        for path in &self.overlay {
            let next = Overlay::load(path).map_err(|e| usage(format!("overlay: {e}")))?;
            overlay = overlay.merge(next);
        }
        if let Some(t) = &self.trigger {
            let event = resolve_trigger(t).map_err(|e| usage(format!("trigger: {e}")))?;
            overlay.trigger_override = Some(TriggerSpec::Event(event));
        }
        if let Some(a) = self.attitude {
            overlay.attitude = Some(a);
        }
        Ok(overlay)
    }

    /// Patched (and optionally anonymized) scenario plus the overlay digest.
    pub fn scenario(&self) -> Result<(Scenario, Option<String>)> {
        let base = resolve_scenario(&self.scenario).map_err(|e| usage(e.to_string()))?;
        let overlay = self.overlay()?;
        let mut scenario = base.apply_overlay(&overlay).map_err(|e| usage(e.to_string()))?;
        if self.anonymize {
            scenario = scenario.anonymize().map_err(|e| usage(e.to_string()))?;
        }
        let digest = (!overlay.is_empty()).then(|| overlay.digest());
        Ok((scenario, digest))
    }

    pub fn config(&self, scenario: &Scenario, seed: u64) -> Result<EngineConfig> {
        if self.rounds == 0 {
            return Err(usage("--rounds must be at least 1"));
        }
        if self.stability_window == 0 {
            return Err(usage("--stability-window must be at least 1"));
        }
        let snapshot = self
            .snapshot_round
            .unwrap_or(scenario.ground_truth.snapshot_round)
            .clamp(1, self.rounds);
        Ok(EngineConfig {
            max_rounds: self.rounds,
            eval_snapshot_round: snapshot,
            history_window: self.history_window,
            stop_on_connectivity: self.stop_on_connectivity,
            stability_window: self.stability_window,
            mobilization_public: !self.private_mobilization,
            seed,
        })
    }

    pub fn policy_spec(&self, seed: u64) -> Result<PolicySpec> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(usage("--temperature must lie in [0, 2]"));
        }
        let script = match (self.policy, &self.script) {
            (PolicyKind::Scripted, None) => {
                return Err(usage("--policy scripted needs --script"))
            }
            (PolicyKind::Scripted, Some(p)) => Some(
                std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))?,
            ),
            _ => None,
        };
        Ok(PolicySpec {
            kind: self.policy,
            script,
            model: self.model.clone(),
            endpoint: self.endpoint.clone(),
            temperature: self.temperature,
            cache: self.cache.clone(),
            seed,
        })
    }

    pub fn invocation(&self, seed: u64) -> Result<Invocation> {
        let (scenario, overlay_digest) = self.scenario()?;
        let config = self.config(&scenario, seed)?;
        let policy = self.policy_spec(seed)?;
        Ok(Invocation {
            scenario,
            overlay_digest,
            config,
            policy,
        })
    }
}

pub fn build_policies(
    spec: &PolicySpec,
    scenario: &Scenario,
    mode: CacheMode,
) -> Result<Vec<Arc<dyn Policy>>> {
    let roster = scenario.roster();
    let policy: Arc<dyn Policy> = match spec.kind {
        PolicyKind::Random => Arc::new(RandomPolicy::new(spec.seed)),
        PolicyKind::Scripted => {
            let path = spec
                .script
                .as_deref()
                .ok_or_else(|| usage("--policy scripted needs --script"))?;
            let script = Script::load(path).map_err(|e| usage(format!("script: {e}")))?;
            Arc::new(ScriptedPolicy::new(&script, &roster).map_err(|e| usage(format!("script: {e}")))?)
        }
        PolicyKind::Chat => {
            let transport: Option<Arc<dyn Transport>> = match mode {
                CacheMode::Record => Some(Arc::new(
                    HttpTransport::from_env(spec.endpoint.clone())
                        .map_err(|e| anyhow::anyhow!("http client: {}", e.message))?,
                )),
                CacheMode::Replay => None,
            };
            let client = ChatClient::new(transport, Some(ChatCache::new(&spec.cache)), mode);
            Arc::new(
                ChatPolicy::new(Arc::new(client), spec.model.clone(), spec.temperature)
                    .with_seed(spec.seed),
            )
        }
    };
    Ok(vec![policy; roster.len()])
}
