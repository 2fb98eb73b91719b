//! Staged guiding prompts built from versioned text files.

use serde::{Deserialize, Serialize};

use super::AgentContext;
use crate::protocol::{format_action, Action, ActionKind, InputType};
use crate::roster::{CountryId, Roster};
use crate::scenario::Attitude;

pub const PROMPT_VERSION: &str = "v1";

const SYSTEM_DEFAULT: &str = include_str!("../../../../prompts/v1/system_default.txt");
const SYSTEM_AGGRESSIVE: &str = include_str!("../../../../prompts/v1/system_aggressive.txt");
const SYSTEM_CONSERVATIVE: &str = include_str!("../../../../prompts/v1/system_conservative.txt");
const ANALYSIS_DEFAULT: &str = include_str!("../../../../prompts/v1/analysis_default.txt");
const ANALYSIS_AGGRESSIVE: &str = include_str!("../../../../prompts/v1/analysis_aggressive.txt");
const ANALYSIS_CONSERVATIVE: &str = include_str!("../../../../prompts/v1/analysis_conservative.txt");
const CONTEXT: &str = include_str!("../../../../prompts/v1/context.txt");
const STEP1: &str = include_str!("../../../../prompts/v1/step1_allies.txt");
const STEP2: &str = include_str!("../../../../prompts/v1/step2_enemies.txt");
const STEP3: &str = include_str!("../../../../prompts/v1/step3_actions.txt");
const STEP4: &str = include_str!("../../../../prompts/v1/step4_summary.txt");
const CORRECTION: &str = include_str!("../../../../prompts/v1/correction.txt");

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.trim_end().to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{{{k}}}}}"), v);
    }
    out
}

pub fn system_text(attitude: Attitude, country: &str) -> String {
    let t = match attitude {
        Attitude::Default => SYSTEM_DEFAULT,
        Attitude::Aggressive => SYSTEM_AGGRESSIVE,
        Attitude::Conservative => SYSTEM_CONSERVATIVE,
    };
    fill(t, &[("country", country)])
}

fn analysis_text(attitude: Attitude, country: &str) -> String {
    let t = match attitude {
        Attitude::Default => ANALYSIS_DEFAULT,
        Attitude::Aggressive => ANALYSIS_AGGRESSIVE,
        Attitude::Conservative => ANALYSIS_CONSERVATIVE,
    };
    fill(t, &[("country", country)])
}

/// Every action form with `<Target>` and `<Content>` slots.
pub fn action_menu(actor_name: &str) -> String {
    let r = Roster::from_names(&[actor_name, "<Target>"]);
    ActionKind::ALL
        .iter()
        .map(|&kind| {
            let action = match kind.properties().input_type {
                InputType::None => Action {
                    actor: CountryId(0),
                    kind,
                    target: None,
                    content: None,
                },
                InputType::Targets => Action::targeted(CountryId(0), kind, CountryId(1)),
                InputType::TargetsAndContent => {
                    Action::with_content(CountryId(0), kind, CountryId(1), "<Content>")
                }
            };
            format_action(&action, &r)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagedPrompts {
    pub system: String,
    /// Four user turns; the first carries the full context.
    pub stages: Vec<String>,
}

pub fn build_prompts(ctx: &AgentContext) -> StagedPrompts {
    let country = ctx.name();
    let inbox = if ctx.inbox.is_empty() {
        "None.".to_string()
    } else {
        ctx.inbox
            .iter()
            .map(|i| format!("- {}", i.text))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let history = if ctx.history.is_empty() {
        "None.".to_string()
    } else {
        ctx.history.join("\n")
    };
    let situation = if ctx.situation.trim().is_empty() {
        "No relations have been established yet.".to_string()
    } else {
        ctx.situation.clone()
    };
    let round = ctx.round.to_string();
    let countries = ctx.roster.names().join(", ");
    let actions = action_menu(country);
    let analysis = analysis_text(ctx.attitude, country);
    let vars: Vec<(&str, &str)> = vec![
        ("country", country),
        ("round", &round),
        ("profile", &ctx.profile),
        ("countries", &countries),
        ("situation", &situation),
        ("inbox", &inbox),
        ("history", &history),
        ("actions", &actions),
        ("analysis", &analysis),
    ];
    let context = fill(CONTEXT, &vars);
    StagedPrompts {
        system: system_text(ctx.attitude, country),
        stages: vec![
            format!("{context}\n\n{}", fill(STEP1, &vars)),
            fill(STEP2, &vars),
            fill(STEP3, &vars),
            fill(STEP4, &vars),
        ],
    }
}

pub fn correction_prompt(ctx: &AgentContext, feedback: &str) -> String {
    fill(CORRECTION, &[("country", ctx.name()), ("feedback", feedback)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::InboxItem;
    use crate::worldstate::Board;

    fn ctx(attitude: Attitude) -> AgentContext {
        AgentContext {
            round: 2,
            actor: CountryId(0),
            roster: Roster::from_names(&["France", "Britain"]),
            attitude,
            profile: "## France profile\n".into(),
            situation: "Britain has declared war against France.".into(),
            inbox: vec![InboxItem {
                round: 1,
                from: None,
                public: true,
                text: "Something happened.".into(),
            }],
            history: vec![],
            view: Board::new(2),
            mobilized: false,
            pending: vec![],
        }
    }

    #[test]
    fn attitude_variants() {
        let d = build_prompts(&ctx(Attitude::Default));
        assert!(d.system.starts_with("You are an AI agent playing a virtual war game."));
        let a = build_prompts(&ctx(Attitude::Aggressive));
        assert!(a
            .system
            .contains("take aggressive actions as long as they can benefit your country"));
        let c = build_prompts(&ctx(Attitude::Conservative));
        assert_ne!(c.system, d.system);
        assert_ne!(c.stages[2], a.stages[2]);
    }

    #[test]
    fn four_stages_with_situation() {
        let p = build_prompts(&ctx(Attitude::Default));
        assert_eq!(p.stages.len(), 4);
        assert!(p.stages[0].contains("Something happened."));
        assert!(p.stages[0].contains("France has chosen to Declare War against <Target>"));
        assert!(p.stages[1].contains("potential enemy"));
        assert!(p.stages[1].contains("Britain has declared war against France."));
        assert!(p.stages[3].contains("France has chosen to Wait without Action"));
        assert!(!p.stages.iter().any(|s| s.contains("{{")));
    }

    #[test]
    fn menu_covers_action_space() {
        assert_eq!(action_menu("X").lines().count(), ActionKind::ALL.len());
        assert!(correction_prompt(&ctx(Attitude::Default), "Action 1 violates R4: x").contains("R4"));
    }
}
