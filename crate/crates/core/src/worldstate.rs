//! Canonical Board, Sticks, pending requests and per-agent knowledge.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsu::DisjointSets;
use crate::protocol::{Action, ActionKind, Agreement, Family};
use crate::roster::{CountryId, Roster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationKind {
    Default,
    War,
    MilitaryAlliance,
    NonInterventionTreaty,
    PeaceAgreement,
}

impl RelationKind {
    pub fn code(self) -> char {
        match self {
            RelationKind::Default => 'D',
            RelationKind::War => 'W',
            RelationKind::MilitaryAlliance => 'M',
            RelationKind::NonInterventionTreaty => 'T',
            RelationKind::PeaceAgreement => 'P',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        Some(match c {
            'D' => RelationKind::Default,
            'W' => RelationKind::War,
            'M' => RelationKind::MilitaryAlliance,
            'T' => RelationKind::NonInterventionTreaty,
            'P' => RelationKind::PeaceAgreement,
            _ => return None,
        })
    }

    pub fn symbol(self) -> char {
        match self {
            RelationKind::Default => '.',
            RelationKind::War => 'x',
            RelationKind::MilitaryAlliance => '&',
            RelationKind::NonInterventionTreaty => 'o',
            RelationKind::PeaceAgreement => '~',
        }
    }

    pub fn is_agreement(self) -> bool {
        matches!(
            self,
            RelationKind::MilitaryAlliance
                | RelationKind::NonInterventionTreaty
                | RelationKind::PeaceAgreement
        )
    }
}

impl From<Agreement> for RelationKind {
    fn from(a: Agreement) -> Self {
        match a {
            Agreement::MilitaryAlliance => RelationKind::MilitaryAlliance,
            Agreement::NonInterventionTreaty => RelationKind::NonInterventionTreaty,
            Agreement::PeaceAgreement => RelationKind::PeaceAgreement,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Private,
    Public,
}

/// One board cell. `initiator` is the declarer of a war or the requester of
/// an agreement; narrative sentences name it first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub kind: RelationKind,
    pub visibility: Visibility,
    pub established_round: u32,
    pub initiator: Option<CountryId>,
}

impl Relation {
    pub const DEFAULT: Relation = Relation {
        kind: RelationKind::Default,
        visibility: Visibility::Public,
        established_round: 0,
        initiator: None,
    };

    pub fn default_at(round: u32) -> Self {
        Relation {
            established_round: round,
            ..Relation::DEFAULT
        }
    }
}

/// Symmetric relation matrix over roster order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Board {
    n: usize,
    cells: Vec<Relation>,
}

impl Board {
    pub fn new(n: usize) -> Self {
        Board {
            n,
            cells: vec![Relation::DEFAULT; n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: CountryId, b: CountryId) -> Relation {
        self.cells[a.0 * self.n + b.0]
    }

    pub fn kind(&self, a: CountryId, b: CountryId) -> RelationKind {
        self.get(a, b).kind
    }

    /// Writes both (a,b) and (b,a). Writing the diagonal is a logic error.
    pub fn set(&mut self, a: CountryId, b: CountryId, rel: Relation) {
        assert_ne!(a, b, "board diagonal is fixed");
        self.cells[a.0 * self.n + b.0] = rel;
        self.cells[b.0 * self.n + a.0] = rel;
    }

    /// Upper-triangle pairs (i<j) in row-major order with their relation.
    pub fn pairs(&self) -> impl Iterator<Item = (CountryId, CountryId, Relation)> + '_ {
        (0..self.n).flat_map(move |i| {
            (i + 1..self.n).map(move |j| (CountryId(i), CountryId(j), self.cells[i * self.n + j]))
        })
    }

    pub fn non_default_pairs(&self) -> impl Iterator<Item = (CountryId, CountryId, Relation)> + '_ {
        self.pairs().filter(|(_, _, r)| r.kind != RelationKind::Default)
    }

    pub fn edges_of(&self, kind: RelationKind) -> Vec<(CountryId, CountryId)> {
        self.pairs()
            .filter(|(_, _, r)| r.kind == kind)
            .map(|(a, b, _)| (a, b))
            .collect()
    }

    /// Whether the graph of non-Default cells spans every country.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut dsu = DisjointSets::new(self.n);
        for (a, b, _) in self.non_default_pairs() {
            dsu.union(a.0, b.0);
        }
        dsu.components().len() == 1
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            self.cells[i * self.n + i] == Relation::DEFAULT
                && (0..self.n).all(|j| self.cells[i * self.n + j] == self.cells[j * self.n + i])
        })
    }

    /// One-letter code rows, e.g. `["DW", "WD"]`.
    pub fn codes(&self) -> Vec<String> {
        (0..self.n)
            .map(|i| {
                (0..self.n)
                    .map(|j| self.cells[i * self.n + j].kind.code())
                    .collect()
            })
            .collect()
    }

    pub fn snapshot(&self) -> BoardSnapshot {
        BoardSnapshot {
            codes: self.codes(),
            cells: self
                .non_default_pairs()
                .map(|(a, b, r)| CellDetail {
                    a,
                    b,
                    visibility: r.visibility,
                    initiator: r.initiator,
                    round: r.established_round,
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snap: &BoardSnapshot) -> Result<Self, WorldError> {
        let n = snap.codes.len();
        let mut board = Board::new(n);
        for (i, row) in snap.codes.iter().enumerate() {
            let chars: Vec<char> = row.chars().collect();
            if chars.len() != n {
                return Err(WorldError::BadSnapshot(format!("row {i} has {} cells", chars.len())));
            }
            for (j, c) in chars.into_iter().enumerate() {
                let kind = RelationKind::from_code(c)
                    .ok_or_else(|| WorldError::BadSnapshot(format!("code {c:?}")))?;
                if i < j && kind != RelationKind::Default {
                    board.set(
                        CountryId(i),
                        CountryId(j),
                        Relation {
                            kind,
                            visibility: Visibility::Public,
                            established_round: 0,
                            initiator: None,
                        },
                    );
                }
            }
        }
        for d in &snap.cells {
            if d.a.0 >= n || d.b.0 >= n || d.a == d.b {
                return Err(WorldError::BadSnapshot(format!("cell {}-{}", d.a, d.b)));
            }
            let mut rel = board.get(d.a, d.b);
            rel.visibility = d.visibility;
            rel.initiator = d.initiator;
            rel.established_round = d.round;
            board.set(d.a, d.b, rel);
        }
        if !board.is_symmetric() {
            return Err(WorldError::BadSnapshot("asymmetric matrix".into()));
        }
        Ok(board)
    }
}

/// Serialized board: code matrix plus per-cell visibility and initiator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardSnapshot {
    pub codes: Vec<String>,
    pub cells: Vec<CellDetail>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellDetail {
    pub a: CountryId,
    pub b: CountryId,
    pub visibility: Visibility,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initiator: Option<CountryId>,
    pub round: u32,
}

/// Internal country record. Only mobilization carries semantics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stick {
    pub mobilized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal_stability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub war_readiness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub requester: CountryId,
    pub target: CountryId,
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    pub issued_round: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fact", rename_all = "snake_case")]
pub enum FactKind {
    Relation {
        a: CountryId,
        b: CountryId,
        relation: Relation,
    },
    Mobilized { country: CountryId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub round: u32,
    #[serde(flatten)]
    pub kind: FactKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApplyError {
    #[error("{actor} must mobilize before declaring war")]
    DeclareWarUnmobilized { actor: CountryId },
    #[error("{actor} holds {relation:?} with {target}; betray it before declaring war")]
    DeclareWarAgainstRelated {
        actor: CountryId,
        target: CountryId,
        relation: RelationKind,
    },
    #[error("{actor} is already at war with {target}")]
    AlreadyAtWar { actor: CountryId, target: CountryId },
    #[error("{actor} has no pending {request} from {target}")]
    AcceptWithoutRequest {
        actor: CountryId,
        target: CountryId,
        request: ActionKind,
    },
    #[error("{actor} has no pending {request} from {target} to reject")]
    RejectWithoutRequest {
        actor: CountryId,
        target: CountryId,
        request: ActionKind,
    },
    #[error("no {relation:?} between {actor} and {target} to publish")]
    PublishNonexistentRelation {
        actor: CountryId,
        target: CountryId,
        relation: RelationKind,
    },
    #[error("no {relation:?} between {actor} and {target} to betray")]
    BetrayNonexistentRelation {
        actor: CountryId,
        target: CountryId,
        relation: RelationKind,
    },
    #[error("action is malformed: {0}")]
    Malformed(&'static str),
    #[error("country {0} is not on the roster")]
    UnknownCountry(CountryId),
}

impl ApplyError {
    /// Secretary rule id matching this failure.
    pub fn rule(&self) -> &'static str {
        match self {
            ApplyError::AcceptWithoutRequest { .. } | ApplyError::RejectWithoutRequest { .. } => {
                "R4"
            }
            ApplyError::DeclareWarUnmobilized { .. } => "R5",
            ApplyError::DeclareWarAgainstRelated { .. } | ApplyError::AlreadyAtWar { .. } => "R6",
            ApplyError::PublishNonexistentRelation { .. }
            | ApplyError::BetrayNonexistentRelation { .. } => "R7",
            ApplyError::Malformed(_) | ApplyError::UnknownCountry(_) => "R3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("country {0} is not on the roster")]
    UnknownCountry(CountryId),
    #[error("malformed board snapshot: {0}")]
    BadSnapshot(String),
}

/// The request kind an Accept/Reject answers.
pub fn request_kind_for(agreement: Agreement) -> ActionKind {
    match agreement {
        Agreement::MilitaryAlliance => ActionKind::RequestMilitaryAlliance,
        Agreement::NonInterventionTreaty => ActionKind::RequestNonInterventionTreaty,
        Agreement::PeaceAgreement => ActionKind::PresentPeaceAgreement,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub round: u32,
    board: Board,
    sticks: Vec<Stick>,
    pending: Vec<PendingRequest>,
    facts: Vec<Fact>,
    knowledge: Vec<BTreeSet<usize>>,
    pub mobilization_public: bool,
}

impl WorldState {
    pub fn new(n: usize) -> Self {
        WorldState {
            round: 0,
            board: Board::new(n),
            sticks: vec![Stick::default(); n],
            pending: Vec::new(),
            facts: Vec::new(),
            knowledge: vec![BTreeSet::new(); n],
            mobilization_public: true,
        }
    }

    /// Scratch state seeded from a view; carries no knowledge log history.
    pub fn from_parts(
        round: u32,
        board: Board,
        sticks: Vec<Stick>,
        pending: Vec<PendingRequest>,
    ) -> Self {
        let n = board.size();
        assert_eq!(sticks.len(), n, "one stick per country");
        WorldState {
            round,
            board,
            sticks,
            pending,
            facts: Vec::new(),
            knowledge: vec![BTreeSet::new(); n],
            mobilization_public: true,
        }
    }

    pub fn with_mobilization_public(mut self, public: bool) -> Self {
        self.mobilization_public = public;
        self
    }

    pub fn size(&self) -> usize {
        self.board.size()
    }

    pub fn board(&self) -> &Board {
        &self.board
    }

    pub fn stick(&self, c: CountryId) -> &Stick {
        &self.sticks[c.0]
    }

    pub fn sticks(&self) -> &[Stick] {
        &self.sticks
    }

    pub fn pending(&self) -> &[PendingRequest] {
        &self.pending
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn knowledge(&self, c: CountryId) -> &BTreeSet<usize> {
        &self.knowledge[c.0]
    }

    pub fn mobilized(&self) -> BTreeSet<CountryId> {
        (0..self.size())
            .filter(|&i| self.sticks[i].mobilized)
            .map(CountryId)
            .collect()
    }

    fn check(&self, c: CountryId) -> Result<(), WorldError> {
        if c.0 < self.size() {
            Ok(())
        } else {
            Err(WorldError::UnknownCountry(c))
        }
    }

    /// Pending requests addressed to `c`.
    pub fn pending_for(&self, c: CountryId) -> Vec<&PendingRequest> {
        self.pending.iter().filter(|p| p.target == c).collect()
    }

    pub fn has_pending(&self, requester: CountryId, target: CountryId, kind: ActionKind) -> bool {
        self.pending
            .iter()
            .any(|p| p.requester == requester && p.target == target && p.kind == kind)
    }

    /// Drops requests issued before `round`. Called at the end of each round
    /// so a request lives through exactly its delivery round.
    pub fn expire_requests_before(&mut self, round: u32) -> Vec<PendingRequest> {
        let (keep, dropped): (Vec<_>, Vec<_>) =
            self.pending.drain(..).partition(|p| p.issued_round >= round);
        self.pending = keep;
        dropped
    }

    /// Board as known to `country`: the latest known fact per pair.
    pub fn agent_view(&self, country: CountryId) -> Result<Board, WorldError> {
        self.check(country)?;
        let mut board = Board::new(self.size());
        for &id in &self.knowledge[country.0] {
            if let FactKind::Relation { a, b, relation } = self.facts[id].kind {
                board.set(a, b, relation);
            }
        }
        Ok(board)
    }

    /// Countries `observer` knows to be mobilized.
    pub fn known_mobilized(&self, observer: CountryId) -> Result<BTreeSet<CountryId>, WorldError> {
        self.check(observer)?;
        Ok(self.knowledge[observer.0]
            .iter()
            .filter_map(|&id| match self.facts[id].kind {
                FactKind::Mobilized { country } => Some(country),
                _ => None,
            })
            .collect())
    }

    fn record(&mut self, kind: FactKind, audience: Audience) {
        let id = self.facts.len();
        self.facts.push(Fact {
            round: self.round,
            kind,
        });
        match audience {
            Audience::All => self.knowledge.iter_mut().for_each(|k| {
                k.insert(id);
            }),
            Audience::Parties(a, b) => {
                self.knowledge[a.0].insert(id);
                self.knowledge[b.0].insert(id);
            }
        }
    }

    fn set_relation(&mut self, a: CountryId, b: CountryId, relation: Relation) {
        self.board.set(a, b, relation);
        let audience = match relation.visibility {
            Visibility::Public => Audience::All,
            Visibility::Private => Audience::Parties(a, b),
        };
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.record(
            FactKind::Relation {
                a: lo,
                b: hi,
                relation,
            },
            audience,
        );
    }

    /// Pure transition: returns the successor state or the violated rule.
    pub fn apply_event(&self, action: &Action) -> Result<WorldState, ApplyError> {
        let mut next = self.clone();
        next.apply_in_place(action)?;
        Ok(next)
    }

    /// In-place transition; on error the state is left untouched.
    pub fn apply_in_place(&mut self, action: &Action) -> Result<(), ApplyError> {
        let actor = action.actor;
        if actor.0 >= self.size() {
            return Err(ApplyError::UnknownCountry(actor));
        }
        let family = action.kind.family();
        let target = match (family, action.target) {
            (Family::Wait | Family::Mobilization, None) => None,
            (Family::Wait | Family::Mobilization, Some(_)) => {
                return Err(ApplyError::Malformed("unexpected target"))
            }
            (_, Some(t)) if t.0 >= self.size() => return Err(ApplyError::UnknownCountry(t)),
            (_, Some(t)) if t == actor => return Err(ApplyError::Malformed("actor targets itself")),
            (_, Some(t)) => Some(t),
            (_, None) => return Err(ApplyError::Malformed("missing target")),
        };
        let round = self.round;
        match family {
            Family::Wait | Family::Message => {}
            Family::Mobilization => {
                if !self.sticks[actor.0].mobilized {
                    self.sticks[actor.0].mobilized = true;
                    let audience = if self.mobilization_public {
                        Audience::All
                    } else {
                        Audience::Parties(actor, actor)
                    };
                    self.record(FactKind::Mobilized { country: actor }, audience);
                }
            }
            Family::War => {
                let t = target.expect("checked");
                if !self.sticks[actor.0].mobilized {
                    return Err(ApplyError::DeclareWarUnmobilized { actor });
                }
                match self.board.kind(actor, t) {
                    RelationKind::Default => {}
                    RelationKind::War => return Err(ApplyError::AlreadyAtWar { actor, target: t }),
                    relation => {
                        return Err(ApplyError::DeclareWarAgainstRelated {
                            actor,
                            target: t,
                            relation,
                        })
                    }
                }
                self.set_relation(
                    actor,
                    t,
                    Relation {
                        kind: RelationKind::War,
                        visibility: Visibility::Public,
                        established_round: round,
                        initiator: Some(actor),
                    },
                );
            }
            Family::Request(_) => {
                let t = target.expect("checked");
                self.pending
                    .retain(|p| !(p.requester == actor && p.target == t && p.kind == action.kind));
                self.pending.push(PendingRequest {
                    requester: actor,
                    target: t,
                    kind: action.kind,
                    content: action.content.clone(),
                    issued_round: round,
                });
            }
            Family::Accept(agreement) => {
                let t = target.expect("checked");
                let request = request_kind_for(agreement);
                let Some(pos) = self
                    .pending
                    .iter()
                    .position(|p| p.requester == t && p.target == actor && p.kind == request)
                else {
                    return Err(ApplyError::AcceptWithoutRequest {
                        actor,
                        target: t,
                        request,
                    });
                };
                self.pending.remove(pos);
                let kind = RelationKind::from(agreement);
                if self.board.kind(actor, t) != kind {
                    self.set_relation(
                        actor,
                        t,
                        Relation {
                            kind,
                            visibility: Visibility::Private,
                            established_round: round,
                            initiator: Some(t),
                        },
                    );
                }
            }
            Family::Reject(agreement) => {
                let t = target.expect("checked");
                let request = request_kind_for(agreement);
                let Some(pos) = self
                    .pending
                    .iter()
                    .position(|p| p.requester == t && p.target == actor && p.kind == request)
                else {
                    return Err(ApplyError::RejectWithoutRequest {
                        actor,
                        target: t,
                        request,
                    });
                };
                self.pending.remove(pos);
            }
            Family::Publish(agreement) => {
                let t = target.expect("checked");
                let relation = RelationKind::from(agreement);
                let current = self.board.get(actor, t);
                if current.kind != relation {
                    return Err(ApplyError::PublishNonexistentRelation {
                        actor,
                        target: t,
                        relation,
                    });
                }
                if current.visibility == Visibility::Private {
                    self.set_relation(
                        actor,
                        t,
                        Relation {
                            visibility: Visibility::Public,
                            ..current
                        },
                    );
                }
            }
            Family::Betray(agreement) => {
                let t = target.expect("checked");
                let relation = RelationKind::from(agreement);
                if self.board.kind(actor, t) != relation {
                    return Err(ApplyError::BetrayNonexistentRelation {
                        actor,
                        target: t,
                        relation,
                    });
                }
                self.set_relation(actor, t, Relation::default_at(round));
            }
        }
        Ok(())
    }

    /// Whether the canonical relation graph spans the roster.
    pub fn relation_graph_connected(&self) -> bool {
        self.board.is_connected()
    }
}

enum Audience {
    All,
    Parties(CountryId, CountryId),
}

/// Narrative paragraph for a board, one sentence per non-Default pair in
/// row-major upper-triangle order.
pub fn translate_board(board: &Board, roster: &Roster) -> String {
    board
        .non_default_pairs()
        .map(|(a, b, rel)| {
            let (first, second) = match rel.initiator {
                Some(i) if i == b => (b, a),
                _ => (a, b),
            };
            let x = roster.prose_name(first, true);
            let y = roster.prose_name(second, false);
            match rel.kind {
                RelationKind::NonInterventionTreaty => {
                    format!("{x} has signed a non-intervention treaty with {y}.")
                }
                RelationKind::PeaceAgreement => format!("{x} has signed a peace agreement with {y}."),
                RelationKind::War => format!("{x} has declared war against {y}."),
                RelationKind::MilitaryAlliance => {
                    format!("{x} and {y} have formed a military alliance.")
                }
                RelationKind::Default => unreachable!("filtered"),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Character grid with roster labels as headers.
pub fn render_board(board: &Board, roster: &Roster) -> String {
    let labels: Vec<&str> = roster.ids().map(|id| roster.label(id)).collect();
    let width = labels.iter().map(|l| l.chars().count()).max().unwrap_or(1);
    let pad = |s: &str| format!("{s:>width$}");
    let mut out = String::new();
    out.push_str(&" ".repeat(width));
    for l in &labels {
        out.push(' ');
        out.push_str(&pad(l));
    }
    out.push('\n');
    for i in 0..board.size() {
        out.push_str(&pad(labels[i]));
        for j in 0..board.size() {
            out.push(' ');
            let sym = board.kind(CountryId(i), CountryId(j)).symbol().to_string();
            out.push_str(&pad(&sym));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roster::RosterEntry;

    fn wwi() -> Roster {
        let e = |n: &str, l: &str, art: Option<&str>| RosterEntry {
            name: n.into(),
            label: l.into(),
            article: art.map(String::from),
            aliases: vec![],
        };
        Roster::new(vec![
            e("Britain", "B", None),
            e("France", "F", None),
            e("German Empire", "G", None),
            e("Austria-Hungary", "A", None),
            e("Russia", "R", None),
            e("Serbia", "S", None),
            e("United States", "U", Some("the")),
            e("Ottoman Empire", "O", None),
        ])
    }

    const B: CountryId = CountryId(0);
    const F: CountryId = CountryId(1);
    const G: CountryId = CountryId(2);
    const A: CountryId = CountryId(3);
    const R: CountryId = CountryId(4);
    const S: CountryId = CountryId(5);
    const U: CountryId = CountryId(6);
    const O: CountryId = CountryId(7);

    fn apply(s: &mut WorldState, a: Action) {
        s.apply_in_place(&a).unwrap_or_else(|e| panic!("{a:?}: {e}"));
    }

    fn ally(s: &mut WorldState, kind: ActionKind, accept: ActionKind, from: CountryId, to: CountryId) {
        apply(s, Action::targeted(from, kind, to));
        apply(s, Action::targeted(to, accept, from));
    }

    #[test]
    fn betray_then_war() {
        let mut s = WorldState::new(8);
        s.round = 1;
        ally(
            &mut s,
            ActionKind::RequestNonInterventionTreaty,
            ActionKind::AcceptNonInterventionTreaty,
            A,
            B,
        );
        assert_eq!(s.board().kind(B, A), RelationKind::NonInterventionTreaty);
        apply(&mut s, Action::mobilize(B));
        let err = s
            .apply_event(&Action::targeted(B, ActionKind::DeclareWar, A))
            .unwrap_err();
        assert!(matches!(err, ApplyError::DeclareWarAgainstRelated { .. }));
        apply(&mut s, Action::targeted(B, ActionKind::BetrayNonInterventionTreaty, A));
        assert_eq!(s.board().kind(B, A), RelationKind::Default);
        apply(&mut s, Action::targeted(B, ActionKind::DeclareWar, A));
        assert_eq!(s.board().kind(A, B), RelationKind::War);
        assert_eq!(s.board().get(A, B).initiator, Some(B));
    }

    #[test]
    fn peace_replaces_war() {
        let mut s = WorldState::new(8);
        apply(&mut s, Action::mobilize(G));
        apply(&mut s, Action::targeted(G, ActionKind::DeclareWar, B));
        apply(
            &mut s,
            Action::with_content(B, ActionKind::PresentPeaceAgreement, G, "terms"),
        );
        apply(&mut s, Action::targeted(G, ActionKind::AcceptPeaceAgreement, B));
        assert_eq!(s.board().kind(G, B), RelationKind::PeaceAgreement);
    }

    #[test]
    fn unmobilized_war_and_missing_relations_fail() {
        let s = WorldState::new(3);
        let war = Action::targeted(CountryId(0), ActionKind::DeclareWar, CountryId(1));
        assert_eq!(
            s.apply_event(&war),
            Err(ApplyError::DeclareWarUnmobilized { actor: CountryId(0) })
        );
        let acc = Action::targeted(CountryId(0), ActionKind::AcceptMilitaryAlliance, CountryId(1));
        assert!(matches!(s.apply_event(&acc), Err(ApplyError::AcceptWithoutRequest { .. })));
        let bet = Action::targeted(CountryId(0), ActionKind::BetrayMilitaryAlliance, CountryId(1));
        assert!(matches!(s.apply_event(&bet), Err(ApplyError::BetrayNonexistentRelation { .. })));
        let publ = Action::targeted(CountryId(0), ActionKind::PublishPeaceAgreement, CountryId(1));
        assert!(matches!(s.apply_event(&publ), Err(ApplyError::PublishNonexistentRelation { .. })));
        assert_eq!(s, WorldState::new(3));
    }

    #[test]
    fn private_alliances_stay_with_parties_until_published() {
        let mut s = WorldState::new(8);
        ally(
            &mut s,
            ActionKind::RequestMilitaryAlliance,
            ActionKind::AcceptMilitaryAlliance,
            R,
            S,
        );
        assert_eq!(s.agent_view(F).unwrap().kind(R, S), RelationKind::Default);
        assert_eq!(s.agent_view(R).unwrap().kind(R, S), RelationKind::MilitaryAlliance);
        assert_eq!(s.agent_view(S).unwrap().kind(S, R), RelationKind::MilitaryAlliance);
        let before = s.knowledge(F).clone();
        apply(&mut s, Action::targeted(S, ActionKind::PublishMilitaryAlliance, R));
        for c in 0..8 {
            assert_eq!(
                s.agent_view(CountryId(c)).unwrap().kind(R, S),
                RelationKind::MilitaryAlliance
            );
        }
        assert!(before.is_subset(s.knowledge(F)));
        // Re-publishing is a no-op.
        let facts = s.facts().len();
        apply(&mut s, Action::targeted(R, ActionKind::PublishMilitaryAlliance, S));
        assert_eq!(s.facts().len(), facts);
    }

    #[test]
    fn fresh_view_is_default_and_unknown_country_errors() {
        let s = WorldState::new(4);
        assert_eq!(s.agent_view(CountryId(2)).unwrap(), Board::new(4));
        assert_eq!(
            s.agent_view(CountryId(9)),
            Err(WorldError::UnknownCountry(CountryId(9)))
        );
    }

    #[test]
    fn mobilization_is_idempotent_and_optionally_private() {
        let mut s = WorldState::new(3);
        apply(&mut s, Action::mobilize(CountryId(1)));
        apply(&mut s, Action::mobilize(CountryId(1)));
        assert_eq!(s.facts().len(), 1);
        assert!(s.known_mobilized(CountryId(0)).unwrap().contains(&CountryId(1)));

        let mut p = WorldState::new(3).with_mobilization_public(false);
        apply(&mut p, Action::mobilize(CountryId(1)));
        assert!(p.known_mobilized(CountryId(0)).unwrap().is_empty());
        assert!(p.known_mobilized(CountryId(1)).unwrap().contains(&CountryId(1)));
    }

    #[test]
    fn requests_lapse_after_their_delivery_round() {
        let mut s = WorldState::new(2);
        s.round = 1;
        apply(
            &mut s,
            Action::targeted(CountryId(0), ActionKind::RequestMilitaryAlliance, CountryId(1)),
        );
        assert!(s.expire_requests_before(1).is_empty());
        assert_eq!(s.expire_requests_before(2).len(), 1);
        assert!(s.pending().is_empty());
    }

    /// Board of the listing used to illustrate the translation function.
    fn listing_board() -> Board {
        let mut s = WorldState::new(8);
        ally(
            &mut s,
            ActionKind::RequestNonInterventionTreaty,
            ActionKind::AcceptNonInterventionTreaty,
            F,
            A,
        );
        apply(&mut s, Action::with_content(O, ActionKind::PresentPeaceAgreement, U, "peace"));
        apply(&mut s, Action::targeted(U, ActionKind::AcceptPeaceAgreement, O));
        apply(&mut s, Action::mobilize(G));
        apply(&mut s, Action::targeted(G, ActionKind::DeclareWar, B));
        ally(
            &mut s,
            ActionKind::RequestMilitaryAlliance,
            ActionKind::AcceptMilitaryAlliance,
            R,
            S,
        );
        s.board().clone()
    }

    #[test]
    fn translation_matches_listing_sentences() {
        let text = translate_board(&listing_board(), &wwi());
        let mut got: Vec<&str> = text.split_inclusive(". ").map(str::trim).collect();
        got.sort();
        let mut want = vec![
            "France has signed a non-intervention treaty with Austria-Hungary.",
            "Ottoman Empire has signed a peace agreement with the United States.",
            "German Empire has declared war against Britain.",
            "Russia and Serbia have formed a military alliance.",
        ];
        want.sort();
        assert_eq!(got, want);
        assert_eq!(translate_board(&Board::new(8), &wwi()), "");
    }

    #[test]
    fn render_marks_both_cells() {
        let grid = render_board(&listing_board(), &wwi());
        let rows: Vec<Vec<&str>> = grid.lines().map(|l| l.split_whitespace().collect()).collect();
        assert_eq!(rows[0], vec!["B", "F", "G", "A", "R", "S", "U", "O"]);
        // rows[1 + i] = [label, cells...]
        assert_eq!(rows[1 + G.0][1 + B.0], "x");
        assert_eq!(rows[1 + B.0][1 + G.0], "x");
        assert_eq!(rows[1 + R.0][1 + S.0], "&");
        assert_eq!(rows[1 + F.0][1 + A.0], "o");
        assert_eq!(rows[1 + O.0][1 + U.0], "~");
        let empty = render_board(&Board::new(8), &wwi());
        assert!(empty.lines().skip(1).all(|l| l[1..].trim().chars().all(|c| c == '.' || c == ' ')));
    }

    #[test]
    fn snapshot_round_trips() {
        let board = listing_board();
        let snap = board.snapshot();
        assert_eq!(snap.codes[G.0].chars().nth(B.0), Some('W'));
        assert_eq!(Board::from_snapshot(&snap).unwrap(), board);
        let json = serde_json::to_string(&snap).unwrap();
        let back: BoardSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(back, snap);
    }

    #[test]
    fn connectivity() {
        assert!(!Board::new(3).is_connected());
        let mut b = Board::new(3);
        let m = Relation {
            kind: RelationKind::MilitaryAlliance,
            ..Relation::DEFAULT
        };
        b.set(CountryId(0), CountryId(1), m);
        assert!(!b.is_connected());
        b.set(CountryId(1), CountryId(2), m);
        assert!(b.is_connected());
    }
}
