//! Seeded policy sampling legal actions from the agent's own view.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, AgentContext, Policy, PolicyError, Session, SessionRecord};
use crate::protocol::{format_action, Action, ActionKind, Agreement};
use crate::worldstate::{request_kind_for, RelationKind, Visibility};

/// Samples up to `max_actions` actions, at most one per counterparty, so
/// every proposal is legal against the agent's view.
pub struct RandomPolicy {
    seed: u64,
    max_actions: usize,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            seed,
            max_actions: 3,
        }
    }

    pub fn with_max_actions(mut self, n: usize) -> Self {
        self.max_actions = n;
        self
    }

    /// Every legal single action for the agent.
    pub fn candidates(ctx: &AgentContext) -> Vec<Action> {
        let me = ctx.actor;
        let mut out = Vec::new();
        if !ctx.mobilized {
            out.push(Action::mobilize(me));
        }
        for p in &ctx.pending {
            if p.target != me {
                continue;
            }
            let agreement = Agreement::ALL
                .into_iter()
                .find(|a| request_kind_for(*a) == p.kind);
            if let Some(a) = agreement {
                let (accept, reject) = match a {
                    Agreement::MilitaryAlliance => (
                        ActionKind::AcceptMilitaryAlliance,
                        ActionKind::RejectMilitaryAlliance,
                    ),
                    Agreement::NonInterventionTreaty => (
                        ActionKind::AcceptNonInterventionTreaty,
                        ActionKind::RejectNonInterventionTreaty,
                    ),
                    Agreement::PeaceAgreement => (
                        ActionKind::AcceptPeaceAgreement,
                        ActionKind::RejectPeaceAgreement,
                    ),
                };
                out.push(Action::targeted(me, accept, p.requester));
                out.push(Action::targeted(me, reject, p.requester));
            }
        }
        for t in ctx.roster.ids().filter(|t| *t != me) {
            let rel = ctx.view.get(me, t);
            match rel.kind {
                RelationKind::Default if ctx.mobilized => {
                    out.push(Action::targeted(me, ActionKind::DeclareWar, t))
                }
                RelationKind::War => out.push(Action::with_content(
                    me,
                    ActionKind::PresentPeaceAgreement,
                    t,
                    format!("{} offers to end the war.", ctx.name()),
                )),
                _ => {}
            }
            if rel.kind != RelationKind::MilitaryAlliance {
                out.push(Action::targeted(me, ActionKind::RequestMilitaryAlliance, t));
            }
            if rel.kind != RelationKind::NonInterventionTreaty {
                out.push(Action::targeted(me, ActionKind::RequestNonInterventionTreaty, t));
            }
            let (publish, betray) = match rel.kind {
                RelationKind::MilitaryAlliance => (
                    ActionKind::PublishMilitaryAlliance,
                    ActionKind::BetrayMilitaryAlliance,
                ),
                RelationKind::NonInterventionTreaty => (
                    ActionKind::PublishNonInterventionTreaty,
                    ActionKind::BetrayNonInterventionTreaty,
                ),
                RelationKind::PeaceAgreement => (
                    ActionKind::PublishPeaceAgreement,
                    ActionKind::BetrayPeaceAgreement,
                ),
                _ => (ActionKind::WaitWithoutAction, ActionKind::WaitWithoutAction),
            };
            if publish != ActionKind::WaitWithoutAction {
                if rel.visibility == Visibility::Private {
                    out.push(Action::targeted(me, publish, t));
                }
                out.push(Action::targeted(me, betray, t));
            }
            out.push(Action::with_content(
                me,
                ActionKind::SendMessage,
                t,
                format!("{} sends greetings in round {}.", ctx.name(), ctx.round),
            ));
        }
        out
    }

    pub fn sample(&self, ctx: &AgentContext, attempt: u32) -> Vec<Action> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, ctx.actor, ctx.round, attempt));
        let mut pool = Self::candidates(ctx);
        pool.shuffle(&mut rng);
        let want = rng.random_range(0..=self.max_actions);
        let mut chosen: Vec<Action> = Vec::new();
        for a in pool {
            if chosen.len() >= want {
                break;
            }
            if a.target.is_some() && chosen.iter().any(|c| c.target == a.target) {
                continue;
            }
            chosen.push(a);
        }
        if chosen.is_empty() {
            chosen.push(Action::wait(ctx.actor));
        }
        chosen
    }
}

impl Policy for RandomPolicy {
    fn begin<'a>(&'a self, ctx: &'a AgentContext) -> Box<dyn Session + 'a> {
        Box::new(RandomSession {
            policy: self,
            ctx,
            attempt: 0,
        })
    }

    fn describe(&self) -> String {
        format!("random:{}", self.seed)
    }
}

struct RandomSession<'a> {
    policy: &'a RandomPolicy,
    ctx: &'a AgentContext,
    attempt: u32,
}

impl Session for RandomSession<'_> {
    fn propose(&mut self, _feedback: Option<&str>) -> Result<Vec<String>, PolicyError> {
        let actions = self.policy.sample(self.ctx, self.attempt);
        self.attempt += 1;
        Ok(actions
            .iter()
            .map(|a| format_action(a, &self.ctx.roster))
            .collect())
    }

    fn finish(self: Box<Self>) -> SessionRecord {
        SessionRecord::default()
    }
}
