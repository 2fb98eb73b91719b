//! The closed diplomatic action space and its line grammar.
//!
//! Every action travels as one UTF-8 line of the form
//! `<Actor> has chosen to <Verb Phrase>[ <object>]`. The object preposition is
//! fixed per kind:
//!
//! | kind                        | object                                       |
//! |-----------------------------|----------------------------------------------|
//! | Request \*                  | `to T`                                       |
//! | Present Peace Agreement     | `to T with the following content: C`         |
//! | Send Message                | `to T with the following content: C`         |
//! | Accept \* / Reject \*       | `from T`                                     |
//! | Declare War / Betray \*     | `against T`                                  |
//! | Publish \*                  | `on <Actor> and T`                           |
//! | General Mobilization / Wait | none                                         |
//!
//! Reject and Publish Peace Agreement lines extend the pattern by analogy with
//! the other verbs; no historical transcript shows them.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roster::{CountryId, Roster};

/// Agreement families that occupy a board cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Agreement {
    MilitaryAlliance,
    NonInterventionTreaty,
    PeaceAgreement,
}

impl Agreement {
    pub const ALL: [Agreement; 3] = [
        Agreement::MilitaryAlliance,
        Agreement::NonInterventionTreaty,
        Agreement::PeaceAgreement,
    ];

    pub fn title(self) -> &'static str {
        match self {
            Agreement::MilitaryAlliance => "Military Alliance",
            Agreement::NonInterventionTreaty => "Non-Intervention Treaty",
            Agreement::PeaceAgreement => "Peace Agreement",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    WaitWithoutAction,
    GeneralMobilization,
    DeclareWar,
    RequestMilitaryAlliance,
    RequestNonInterventionTreaty,
    PresentPeaceAgreement,
    AcceptMilitaryAlliance,
    AcceptNonInterventionTreaty,
    AcceptPeaceAgreement,
    RejectMilitaryAlliance,
    RejectNonInterventionTreaty,
    RejectPeaceAgreement,
    PublishMilitaryAlliance,
    PublishNonInterventionTreaty,
    PublishPeaceAgreement,
    BetrayMilitaryAlliance,
    BetrayNonInterventionTreaty,
    BetrayPeaceAgreement,
    SendMessage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Publicity {
    Public,
    Private,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputType {
    None,
    Targets,
    TargetsAndContent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionProperties {
    pub publicity: Publicity,
    pub input_type: InputType,
    pub require_response: bool,
}

/// Coarse grouping used for object prepositions and application order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Wait,
    Mobilization,
    War,
    Request(Agreement),
    Accept(Agreement),
    Reject(Agreement),
    Publish(Agreement),
    Betray(Agreement),
    Message,
}

impl ActionKind {
    pub const ALL: [ActionKind; 19] = [
        ActionKind::WaitWithoutAction,
        ActionKind::GeneralMobilization,
        ActionKind::DeclareWar,
        ActionKind::RequestMilitaryAlliance,
        ActionKind::RequestNonInterventionTreaty,
        ActionKind::PresentPeaceAgreement,
        ActionKind::AcceptMilitaryAlliance,
        ActionKind::AcceptNonInterventionTreaty,
        ActionKind::AcceptPeaceAgreement,
        ActionKind::RejectMilitaryAlliance,
        ActionKind::RejectNonInterventionTreaty,
        ActionKind::RejectPeaceAgreement,
        ActionKind::PublishMilitaryAlliance,
        ActionKind::PublishNonInterventionTreaty,
        ActionKind::PublishPeaceAgreement,
        ActionKind::BetrayMilitaryAlliance,
        ActionKind::BetrayNonInterventionTreaty,
        ActionKind::BetrayPeaceAgreement,
        ActionKind::SendMessage,
    ];

    pub fn family(self) -> Family {
        use ActionKind::*;
        use Agreement::*;
        match self {
            WaitWithoutAction => Family::Wait,
            GeneralMobilization => Family::Mobilization,
            DeclareWar => Family::War,
            RequestMilitaryAlliance => Family::Request(MilitaryAlliance),
            RequestNonInterventionTreaty => Family::Request(NonInterventionTreaty),
            PresentPeaceAgreement => Family::Request(PeaceAgreement),
            AcceptMilitaryAlliance => Family::Accept(MilitaryAlliance),
            AcceptNonInterventionTreaty => Family::Accept(NonInterventionTreaty),
            AcceptPeaceAgreement => Family::Accept(PeaceAgreement),
            RejectMilitaryAlliance => Family::Reject(MilitaryAlliance),
            RejectNonInterventionTreaty => Family::Reject(NonInterventionTreaty),
            RejectPeaceAgreement => Family::Reject(PeaceAgreement),
            PublishMilitaryAlliance => Family::Publish(MilitaryAlliance),
            PublishNonInterventionTreaty => Family::Publish(NonInterventionTreaty),
            PublishPeaceAgreement => Family::Publish(PeaceAgreement),
            BetrayMilitaryAlliance => Family::Betray(MilitaryAlliance),
            BetrayNonInterventionTreaty => Family::Betray(NonInterventionTreaty),
            BetrayPeaceAgreement => Family::Betray(PeaceAgreement),
            SendMessage => Family::Message,
        }
    }

    /// The agreement family this kind acts on, if any.
    pub fn agreement(self) -> Option<Agreement> {
        match self.family() {
            Family::Request(a)
            | Family::Accept(a)
            | Family::Reject(a)
            | Family::Publish(a)
            | Family::Betray(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_response(self) -> bool {
        matches!(self.family(), Family::Accept(_) | Family::Reject(_))
    }

    pub fn verb_phrase(self) -> &'static str {
        use ActionKind::*;
        match self {
            WaitWithoutAction => "Wait without Action",
            GeneralMobilization => "General Mobilization",
            DeclareWar => "Declare War",
            RequestMilitaryAlliance => "Request Military Alliance",
            RequestNonInterventionTreaty => "Request Non-Intervention Treaty",
            PresentPeaceAgreement => "Present Peace Agreement",
            AcceptMilitaryAlliance => "Accept Military Alliance",
            AcceptNonInterventionTreaty => "Accept Non-Intervention Treaty",
            AcceptPeaceAgreement => "Accept Peace Agreement",
            RejectMilitaryAlliance => "Reject Military Alliance",
            RejectNonInterventionTreaty => "Reject Non-Intervention Treaty",
            RejectPeaceAgreement => "Reject Peace Agreement",
            PublishMilitaryAlliance => "Publish Military Alliance",
            PublishNonInterventionTreaty => "Publish Non-Intervention Treaty",
            PublishPeaceAgreement => "Publish Peace Agreement",
            BetrayMilitaryAlliance => "Betray Military Alliance",
            BetrayNonInterventionTreaty => "Betray Non-Intervention Treaty",
            BetrayPeaceAgreement => "Betray Peace Agreement",
            SendMessage => "Send Message",
        }
    }

    pub fn properties(self) -> ActionProperties {
        properties_of(self)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.verb_phrase())
    }
}

pub fn properties_of(kind: ActionKind) -> ActionProperties {
    let (publicity, input_type, require_response) = match kind.family() {
        Family::Wait => (Publicity::Private, InputType::None, false),
        Family::Mobilization => (Publicity::Public, InputType::None, false),
        Family::War => (Publicity::Public, InputType::Targets, false),
        Family::Request(Agreement::PeaceAgreement) => {
            (Publicity::Private, InputType::TargetsAndContent, true)
        }
        Family::Request(_) => (Publicity::Private, InputType::Targets, true),
        Family::Accept(_) | Family::Reject(_) => (Publicity::Private, InputType::Targets, false),
        Family::Publish(_) => (Publicity::Public, InputType::Targets, false),
        Family::Betray(_) => (Publicity::Public, InputType::Targets, false),
        Family::Message => (Publicity::Private, InputType::TargetsAndContent, true),
    };
    ActionProperties {
        publicity,
        input_type,
        require_response,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("{0} does not require a response")]
    NotARequest(ActionKind),
    #[error("{kind} {problem}")]
    InvalidAction { kind: ActionKind, problem: &'static str },
}

/// Valid responses to a request-type action.
pub fn response_kinds_for(request: ActionKind) -> Result<Vec<ActionKind>, ProtocolError> {
    use ActionKind::*;
    match request {
        RequestMilitaryAlliance => Ok(vec![AcceptMilitaryAlliance, RejectMilitaryAlliance]),
        RequestNonInterventionTreaty => {
            Ok(vec![AcceptNonInterventionTreaty, RejectNonInterventionTreaty])
        }
        PresentPeaceAgreement => Ok(vec![AcceptPeaceAgreement, RejectPeaceAgreement]),
        SendMessage => Ok(vec![SendMessage]),
        other => Err(ProtocolError::NotARequest(other)),
    }
}

/// One diplomatic act by one country against at most one counterparty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    pub actor: CountryId,
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<CountryId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
}

impl Action {
    pub fn new(
        actor: CountryId,
        kind: ActionKind,
        target: Option<CountryId>,
        content: Option<String>,
    ) -> Result<Self, ProtocolError> {
        let input = properties_of(kind).input_type;
        let invalid = |problem| Err(ProtocolError::InvalidAction { kind, problem });
        match (input, target, &content) {
            (InputType::None, Some(_), _) => return invalid("takes no target"),
            (InputType::None, None, Some(_)) | (InputType::Targets, _, Some(_)) => {
                return invalid("takes no content")
            }
            (InputType::Targets | InputType::TargetsAndContent, None, _) => {
                return invalid("requires a target")
            }
            (InputType::TargetsAndContent, _, None) => return invalid("requires content"),
            _ => {}
        }
        if target == Some(actor) {
            return invalid("cannot target the actor");
        }
        Ok(Action {
            actor,
            kind,
            target,
            content,
        })
    }

    pub fn wait(actor: CountryId) -> Self {
        Action {
            actor,
            kind: ActionKind::WaitWithoutAction,
            target: None,
            content: None,
        }
    }

    pub fn mobilize(actor: CountryId) -> Self {
        Action {
            actor,
            kind: ActionKind::GeneralMobilization,
            target: None,
            content: None,
        }
    }

    pub fn targeted(actor: CountryId, kind: ActionKind, target: CountryId) -> Self {
        Action {
            actor,
            kind,
            target: Some(target),
            content: None,
        }
    }

    pub fn with_content(
        actor: CountryId,
        kind: ActionKind,
        target: CountryId,
        content: impl Into<String>,
    ) -> Self {
        Action {
            actor,
            kind,
            target: Some(target),
            content: Some(content.into()),
        }
    }

    pub fn properties(&self) -> ActionProperties {
        properties_of(self.kind)
    }

    pub fn is_public(&self) -> bool {
        self.properties().publicity == Publicity::Public
    }

    /// Whether `country` is actor or counterparty.
    pub fn involves(&self, country: CountryId) -> bool {
        self.actor == country || self.target == Some(country)
    }
}

const CHOSEN: &str = " has chosen to ";
const CONTENT_MARKER: &str = " with the following content:";

/// Renders an action in the canonical line grammar.
pub fn format_action(action: &Action, roster: &Roster) -> String {
    let actor = roster.name(action.actor);
    let verb = action.kind.verb_phrase();
    let target = action.target.map(|t| roster.name(t)).unwrap_or_default();
    match action.kind.family() {
        Family::Wait | Family::Mobilization => format!("{actor}{CHOSEN}{verb}"),
        Family::Request(_) | Family::Message => match &action.content {
            Some(content) => format!("{actor}{CHOSEN}{verb} to {target}{CONTENT_MARKER} {content}"),
            None => format!("{actor}{CHOSEN}{verb} to {target}"),
        },
        Family::Accept(_) | Family::Reject(_) => format!("{actor}{CHOSEN}{verb} from {target}"),
        Family::War | Family::Betray(_) => format!("{actor}{CHOSEN}{verb} against {target}"),
        Family::Publish(_) => format!("{actor}{CHOSEN}{verb} on {actor} and {target}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    UnknownVerb,
    UnknownCountry,
    MalformedObject,
}

/// A grammar failure carrying the offending span, suitable as correction
/// feedback.
#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
#[error("{kind:?} at \"{span}\"")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: String,
}

impl ParseError {
    fn new(kind: ParseErrorKind, span: &str) -> Self {
        ParseError {
            kind,
            span: span.trim().to_string(),
        }
    }
}

/// Strips a leading `To X:` routing prefix as seen in transcripts.
fn strip_routing_prefix(line: &str) -> &str {
    let trimmed = line.trim();
    if let Some(rest) = trimmed.strip_prefix("To ") {
        if let (Some(colon), Some(chosen)) = (rest.find(':'), rest.find(CHOSEN)) {
            if colon < chosen {
                return rest[colon + 1..].trim_start();
            }
        }
    }
    trimmed
}

fn resolve(roster: &Roster, text: &str) -> Result<CountryId, ParseError> {
    roster
        .resolve(text)
        .ok_or_else(|| ParseError::new(ParseErrorKind::UnknownCountry, text))
}

/// Splits "A, B and C" into its items.
fn split_targets(text: &str) -> Vec<&str> {
    text.split(", ")
        .flat_map(|chunk| chunk.split(" and "))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Parses one grammar line into actions, one per named counterparty.
pub fn parse_actions(line: &str, roster: &Roster) -> Result<Vec<Action>, ParseError> {
    let body = strip_routing_prefix(line);
    let Some(pos) = body.find(CHOSEN) else {
        return Err(ParseError::new(ParseErrorKind::MalformedObject, body));
    };
    let actor = resolve(roster, &body[..pos])?;
    let rest = &body[pos + CHOSEN.len()..];

    // Longest verb phrase wins ("Send Message" vs hypothetical prefixes).
    let kind = ActionKind::ALL
        .iter()
        .copied()
        .filter(|k| {
            rest.strip_prefix(k.verb_phrase())
                .is_some_and(|tail| tail.is_empty() || tail.starts_with([' ', '.']))
        })
        .max_by_key(|k| k.verb_phrase().len())
        .ok_or_else(|| {
            let span = rest.split(" to ").next().unwrap_or(rest);
            ParseError::new(ParseErrorKind::UnknownVerb, span)
        })?;
    let object = rest[kind.verb_phrase().len()..].trim();
    let object = if properties_of(kind).input_type == InputType::TargetsAndContent {
        object
    } else {
        object.trim_end_matches('.').trim_end()
    };

    let malformed = || ParseError::new(ParseErrorKind::MalformedObject, object);
    match kind.family() {
        Family::Wait | Family::Mobilization => {
            if object.is_empty() {
                Ok(vec![Action {
                    actor,
                    kind,
                    target: None,
                    content: None,
                }])
            } else {
                Err(malformed())
            }
        }
        Family::Publish(_) => {
            let names = object.strip_prefix("on ").ok_or_else(malformed)?;
            let parties = split_targets(names)
                .into_iter()
                .map(|n| resolve(roster, n))
                .collect::<Result<Vec<_>, _>>()?;
            match parties.as_slice() {
                [a, b] if *a == actor && *b != actor => {
                    Ok(vec![Action::targeted(actor, kind, *b)])
                }
                [a, b] if *b == actor && *a != actor => {
                    Ok(vec![Action::targeted(actor, kind, *a)])
                }
                _ => Err(malformed()),
            }
        }
        family => {
            let preposition = match family {
                Family::Request(_) | Family::Message => "to ",
                Family::Accept(_) | Family::Reject(_) => "from ",
                _ => "against ",
            };
            let tail = object.strip_prefix(preposition).ok_or_else(malformed)?;
            let needs_content = properties_of(kind).input_type == InputType::TargetsAndContent;
            let (names, content) = match tail.find(CONTENT_MARKER) {
                Some(i) if needs_content => {
                    let content = tail[i + CONTENT_MARKER.len()..].trim();
                    if content.is_empty() {
                        return Err(malformed());
                    }
                    (&tail[..i], Some(content.to_string()))
                }
                Some(_) => return Err(malformed()),
                None if needs_content => return Err(malformed()),
                None => (tail, None),
            };
            let targets = split_targets(names);
            if targets.is_empty() {
                return Err(malformed());
            }
            targets
                .into_iter()
                .map(|n| {
                    let target = resolve(roster, n)?;
                    if target == actor {
                        return Err(ParseError::new(ParseErrorKind::MalformedObject, n));
                    }
                    Ok(Action {
                        actor,
                        kind,
                        target: Some(target),
                        content: content.clone(),
                    })
                })
                .collect()
        }
    }
}

/// Parses a line naming exactly one counterparty (or none).
pub fn parse_action(line: &str, roster: &Roster) -> Result<Action, ParseError> {
    let mut actions = parse_actions(line, roster)?;
    if actions.len() == 1 {
        Ok(actions.remove(0))
    } else {
        Err(ParseError::new(ParseErrorKind::MalformedObject, line))
    }
}
