//! Deterministic proposal validator and the bounded correction loop.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::protocol::{parse_actions, Action, Family, ParseErrorKind};
use crate::roster::{CountryId, Roster};
use crate::worldstate::{Board, PendingRequest, Stick, WorldState};

/// Maximum policy invocations per agent per round.
pub const MAX_EXCHANGES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
}

impl Rule {
    pub fn summary(self) -> &'static str {
        match self {
            Rule::R1 => "line must follow the action grammar",
            Rule::R2 => "verb must belong to the action space",
            Rule::R3 => "countries must exist and the actor must be the proposing country",
            Rule::R4 => "a response needs a matching pending request",
            Rule::R5 => "general mobilization must precede a war declaration",
            Rule::R6 => "war needs a Default relation; betray any pact first",
            Rule::R7 => "betray and publish need the relation to exist",
            Rule::R8 => "a proposal must not contradict itself",
        }
    }

    fn from_id(id: &str) -> Rule {
        match id {
            "R1" => Rule::R1,
            "R2" => Rule::R2,
            "R3" => Rule::R3,
            "R4" => Rule::R4,
            "R5" => Rule::R5,
            "R6" => Rule::R6,
            "R7" => Rule::R7,
            _ => Rule::R8,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    /// Zero-based proposal line index.
    pub index: usize,
    pub rule: Rule,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Accepted,
    Revise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    pub issues: Vec<Issue>,
    /// Parsed actions per proposal line; empty for lines that failed to parse.
    #[serde(skip)]
    pub parsed: Vec<Vec<Action>>,
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        self.status == Status::Accepted
    }

    pub fn flagged(&self, index: usize) -> bool {
        self.issues.iter().any(|i| i.index == index)
    }

    /// Numbered feedback text, one line per issue.
    pub fn feedback(&self) -> String {
        self.issues
            .iter()
            .map(|i| format!("Action {} violates {}: {}", i.index + 1, i.rule, i.reason))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// What the secretary may consult: the proposing agent's own view.
#[derive(Debug, Clone)]
pub struct SecretaryContext<'a> {
    pub actor: CountryId,
    pub roster: &'a Roster,
    pub round: u32,
    pub view: Board,
    pub stick: Stick,
    /// Requests involving the actor.
    pub pending: Vec<PendingRequest>,
}

impl<'a> SecretaryContext<'a> {
    pub fn from_state(state: &WorldState, actor: CountryId, roster: &'a Roster) -> Self {
        SecretaryContext {
            actor,
            roster,
            round: state.round,
            view: state
                .agent_view(actor)
                .expect("actor is on the roster"),
            stick: *state.stick(actor),
            pending: state
                .pending()
                .iter()
                .filter(|p| p.requester == actor || p.target == actor)
                .cloned()
                .collect(),
        }
    }

    fn scratch(&self) -> WorldState {
        let mut sticks = vec![Stick::default(); self.view.size()];
        sticks[self.actor.0] = self.stick;
        WorldState::from_parts(self.round, self.view.clone(), sticks, self.pending.clone())
    }
}

/// Pairs of actions that cannot both stand in one proposal.
fn contradicts(a: &Action, b: &Action) -> bool {
    if a.target != b.target || a.target.is_none() {
        return false;
    }
    use Family::*;
    let (fa, fb) = (a.kind.family(), b.kind.family());
    let one_way = |x: Family, y: Family| match (x, y) {
        (Accept(p), Reject(q)) => p == q,
        (Request(p) | Accept(p), Betray(q)) => p == q,
        (War, Request(_) | Accept(_)) => true,
        _ => false,
    };
    one_way(fa, fb) || one_way(fb, fa)
}

/// Evaluates every rule over the proposal. Actions are simulated in
/// application order (responses first, then the rest in proposal order)
/// against a scratch copy of the agent's view; exact repeats are no-ops.
pub fn validate(proposal: &[String], ctx: &SecretaryContext<'_>) -> Verdict {
    let mut issues = Vec::new();
    let mut parsed: Vec<Vec<Action>> = Vec::with_capacity(proposal.len());
    for (index, line) in proposal.iter().enumerate() {
        match parse_actions(line, ctx.roster) {
            Ok(actions) => {
                if let Some(a) = actions.iter().find(|a| a.actor != ctx.actor) {
                    issues.push(Issue {
                        index,
                        rule: Rule::R3,
                        reason: format!(
                            "the actor must be {}, not {}",
                            ctx.roster.name(ctx.actor),
                            ctx.roster.name(a.actor)
                        ),
                    });
                    parsed.push(Vec::new());
                } else {
                    parsed.push(actions);
                }
            }
            Err(e) => {
                let rule = match e.kind {
                    ParseErrorKind::UnknownVerb => Rule::R2,
                    ParseErrorKind::UnknownCountry => Rule::R3,
                    ParseErrorKind::MalformedObject
                        if ctx.roster.resolve(&e.span) == Some(ctx.actor) =>
                    {
                        Rule::R3
                    }
                    ParseErrorKind::MalformedObject => Rule::R1,
                };
                let reason = match rule {
                    Rule::R2 => format!("\"{}\" is not an available action", e.span),
                    Rule::R3 if e.kind == ParseErrorKind::UnknownCountry => {
                        format!("\"{}\" is not a country in this world", e.span)
                    }
                    Rule::R3 => "a country cannot target itself".to_string(),
                    _ => format!("cannot read \"{}\" as an action line", e.span),
                };
                issues.push(Issue {
                    index,
                    rule,
                    reason,
                });
                parsed.push(Vec::new());
            }
        }
    }

    // Repeat until the surviving lines simulate cleanly on their own, so
    // dropping every flagged line always yields an accepted proposal.
    let mut excluded: BTreeSet<usize> = issues.iter().map(|i| i.index).collect();
    loop {
        let mut order: Vec<(usize, &Action)> = parsed
            .iter()
            .enumerate()
            .filter(|(i, _)| !excluded.contains(i))
            .flat_map(|(i, acts)| acts.iter().map(move |a| (i, a)))
            .collect();
        order.sort_by_key(|(i, a)| (!a.kind.is_response(), *i));

        let mut state = ctx.scratch();
        let mut applied: Vec<(usize, &Action)> = Vec::new();
        let mut bad = BTreeSet::new();
        for (index, action) in order {
            if applied.iter().any(|(_, a)| *a == action) {
                continue;
            }
            if let Err(e) = state.apply_in_place(action) {
                issues.push(Issue {
                    index,
                    rule: Rule::from_id(e.rule()),
                    reason: describe(&e, ctx.roster),
                });
                bad.insert(index);
                continue;
            }
            applied.push((index, action));
        }

        // Contradictions among otherwise valid actions; the later line is flagged.
        let mut valid: Vec<(usize, &Action)> =
            applied.into_iter().filter(|(i, _)| !bad.contains(i)).collect();
        valid.sort_by_key(|(i, _)| *i);
        for (k, (i, a)) in valid.iter().enumerate() {
            if let Some((j, b)) = valid[..k].iter().find(|(j, b)| j != i && contradicts(a, b)) {
                issues.push(Issue {
                    index: *i,
                    rule: Rule::R8,
                    reason: format!(
                        "{} contradicts action {} ({}) toward {}",
                        a.kind,
                        j + 1,
                        b.kind,
                        ctx.roster.name(a.target.expect("contradictions are targeted"))
                    ),
                });
                bad.insert(*i);
            }
        }
        if bad.is_empty() {
            break;
        }
        excluded.extend(bad);
    }

    issues.sort_by_key(|i| (i.index, i.rule));
    issues.dedup_by(|a, b| a.index == b.index && a.rule == b.rule && a.reason == b.reason);
    Verdict {
        status: if issues.is_empty() {
            Status::Accepted
        } else {
            Status::Revise
        },
        issues,
        parsed,
    }
}

fn describe(e: &crate::worldstate::ApplyError, roster: &Roster) -> String {
    use crate::worldstate::ApplyError::*;
    let n = |c: &CountryId| roster.name(*c).to_string();
    match e {
        DeclareWarUnmobilized { actor } => {
            format!("{} must choose General Mobilization before declaring war", n(actor))
        }
        DeclareWarAgainstRelated {
            target, relation, ..
        } => format!(
            "{} holds a {:?} with you; betray it before declaring war",
            n(target),
            relation
        ),
        AlreadyAtWar { target, .. } => format!("already at war with {}", n(target)),
        AcceptWithoutRequest {
            target, request, ..
        } => format!("{} has not sent a pending {}", n(target), request),
        RejectWithoutRequest {
            target, request, ..
        } => format!("{} has not sent a pending {} to reject", n(target), request),
        PublishNonexistentRelation {
            target, relation, ..
        } => format!("there is no {:?} with {} to publish", relation, n(target)),
        BetrayNonexistentRelation {
            target, relation, ..
        } => format!("there is no {:?} with {} to betray", relation, n(target)),
        Malformed(m) => m.to_string(),
        UnknownCountry(c) => format!("{c} is not a country in this world"),
    }
}

/// Drops every flagged line; falls back to waiting when nothing is left.
pub fn amend(proposal: &[String], verdict: &Verdict, actor: CountryId) -> Vec<Action> {
    let mut out: Vec<Action> = Vec::new();
    for (i, _) in proposal.iter().enumerate() {
        if verdict.flagged(i) {
            continue;
        }
        if let Some(actions) = verdict.parsed.get(i) {
            out.extend(actions.iter().cloned());
        }
    }
    if out.is_empty() {
        vec![Action::wait(actor)]
    } else {
        out
    }
}

/// Kept lines of an amendment, for transcripts.
pub fn amend_lines(proposal: &[String], verdict: &Verdict) -> Vec<String> {
    proposal
        .iter()
        .enumerate()
        .filter(|(i, _)| !verdict.flagged(*i))
        .map(|(_, l)| l.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub proposal: Vec<String>,
    pub status: Status,
    pub issues: Vec<Issue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    Amended,
    /// Policy failed; the agent waits this round.
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Negotiation {
    pub exchanges: Vec<Exchange>,
    pub outcome: Outcome,
    pub actions: Vec<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Runs propose -> validate up to [`MAX_EXCHANGES`] times, then amends.
/// `propose` receives the previous verdict's feedback after a rejection.
pub fn negotiate<E: fmt::Display>(
    ctx: &SecretaryContext<'_>,
    mut propose: impl FnMut(Option<&str>) -> Result<Vec<String>, E>,
) -> Negotiation {
    let mut exchanges = Vec::new();
    let mut feedback: Option<String> = None;
    loop {
        let proposal = match propose(feedback.as_deref()) {
            Ok(p) => p,
            Err(e) => {
                tracing::warn!(actor = ctx.actor.0, error = %e, "proposal failed");
                return Negotiation {
                    exchanges,
                    outcome: Outcome::Degraded,
                    actions: vec![Action::wait(ctx.actor)],
                    error: Some(e.to_string()),
                };
            }
        };
        let verdict = validate(&proposal, ctx);
        exchanges.push(Exchange {
            proposal: proposal.clone(),
            status: verdict.status,
            issues: verdict.issues.clone(),
        });
        if verdict.is_accepted() {
            let mut actions = dedup(verdict.parsed.into_iter().flatten().collect());
            if actions.is_empty() {
                actions.push(Action::wait(ctx.actor));
            }
            return Negotiation {
                exchanges,
                outcome: Outcome::Accepted,
                actions,
                error: None,
            };
        }
        if exchanges.len() >= MAX_EXCHANGES {
            return Negotiation {
                exchanges,
                outcome: Outcome::Amended,
                actions: dedup(amend(&proposal, &verdict, ctx.actor)),
                error: None,
            };
        }
        feedback = Some(verdict.feedback());
    }
}

/// Removes exact repeats, keeping first occurrences.
pub fn dedup(actions: Vec<Action>) -> Vec<Action> {
    let mut out: Vec<Action> = Vec::with_capacity(actions.len());
    for a in actions {
        if !out.contains(&a) {
            out.push(a);
        }
    }
    out
}
