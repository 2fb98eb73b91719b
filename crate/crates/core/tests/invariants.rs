mod support;

use std::sync::Arc;

use proptest::prelude::*;

use warsim::engine::Engine;
use warsim::eval::{jaccard, nmi, observed_at, Partition};
use warsim::policy::{Policy, RandomPolicy};
use warsim::protocol::{format_action, parse_action, Action, ActionKind, InputType};
use warsim::roster::{CountryId, Roster};
use warsim::scenario::builtin_scenario;
use warsim::worldstate::{Visibility, WorldState};

const N: usize = 4;

fn roster() -> Roster {
    Roster::from_names(&["Qin", "Chu", "Yan", "Zhao"])
}

fn action() -> impl Strategy<Value = Action> {
    (0..N, 0..ActionKind::ALL.len(), 1..N, "[a-z ]{0,12}").prop_map(|(a, k, off, text)| {
        let kind = ActionKind::ALL[k];
        let actor = CountryId(a);
        let target = CountryId((a + off) % N);
        match kind.properties().input_type {
            InputType::None if kind == ActionKind::WaitWithoutAction => Action::wait(actor),
            InputType::None => Action::mobilize(actor),
            InputType::Targets => Action::targeted(actor, kind, target),
            InputType::TargetsAndContent => {
                Action::with_content(actor, kind, target, format!("terms{}", text.trim_end()))
            }
        }
    })
}

fn history() -> impl Strategy<Value = Vec<(u32, Action)>> {
    prop::collection::vec((1u32..4, action()), 0..40).prop_map(|mut v| {
        v.sort_by_key(|(r, _)| *r);
        v
    })
}

fn play(steps: &[(u32, Action)], public_mobilization: bool) -> WorldState {
    let mut w = WorldState::new(N).with_mobilization_public(public_mobilization);
    for (round, a) in steps {
        w.round = *round;
        let _ = w.apply_in_place(a);
    }
    w
}

fn labels(n: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..n, n)
}

proptest! {
    #[test]
    fn board_stays_symmetric(steps in history()) {
        let w = play(&steps, true);
        prop_assert!(w.board().is_symmetric());
    }

    #[test]
    fn failed_transitions_leave_state_untouched(steps in history(), a in action()) {
        let w = play(&steps, true);
        let mut copy = w.clone();
        if copy.apply_in_place(&a).is_err() {
            prop_assert_eq!(copy, w);
        }
    }

    #[test]
    fn parties_and_public_cells_are_known(steps in history()) {
        let w = play(&steps, true);
        for c in 0..N {
            let view = w.agent_view(CountryId(c)).unwrap();
            for (a, b, rel) in w.board().pairs() {
                if a.0 == c || b.0 == c || rel.visibility == Visibility::Public {
                    prop_assert_eq!(view.get(a, b), rel);
                }
            }
        }
    }

    #[test]
    fn mobilization_is_permanent_and_known(steps in history(), public in any::<bool>()) {
        let mut w = WorldState::new(N).with_mobilization_public(public);
        let mut seen = std::collections::BTreeSet::new();
        for (round, a) in &steps {
            w.round = *round;
            let _ = w.apply_in_place(a);
            let now = w.mobilized();
            prop_assert!(seen.is_subset(&now));
            seen = now;
        }
        for c in 0..N {
            let known = w.known_mobilized(CountryId(c)).unwrap();
            prop_assert!(known.is_subset(&seen));
            if public {
                prop_assert_eq!(&known, &seen);
            }
        }
    }

    #[test]
    fn war_needs_mobilization_and_default(steps in history(), a in action()) {
        let w = play(&steps, true);
        if a.kind == ActionKind::DeclareWar && w.apply_event(&a).is_ok() {
            let t = a.target.unwrap();
            prop_assert!(w.stick(a.actor).mobilized);
            prop_assert_eq!(w.board().kind(a.actor, t), warsim::worldstate::RelationKind::Default);
        }
    }

    #[test]
    fn action_lines_round_trip(a in action()) {
        let r = roster();
        let line = format_action(&a, &r);
        prop_assert_eq!(parse_action(&line, &r).unwrap(), a);
    }

    #[test]
    fn nmi_is_symmetric_and_bounded(p in labels(6), q in labels(6)) {
        let (p, q) = (Partition::from_labels(&p), Partition::from_labels(&q));
        let x = nmi(&p, &q).unwrap();
        let y = nmi(&q, &p).unwrap();
        prop_assert!((x - y).abs() < 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&x));
        prop_assert!((nmi(&p, &p).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jaccard_bounds(a in prop::collection::btree_set(0u8..10, 0..8),
                      b in prop::collection::btree_set(0u8..10, 0..8)) {
        let j = jaccard(&a, &b);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(j, jaccard(&b, &a));
        prop_assert_eq!(jaccard(&a, &a), 1.0);
        if !a.is_empty() {
            prop_assert_eq!(jaccard(&a, &std::collections::BTreeSet::new()), 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn cumulative_sets_grow_with_snapshot(seed in any::<u64>()) {
        let s = builtin_scenario("wsp").unwrap().unwrap();
        let p: Arc<dyn Policy> = Arc::new(RandomPolicy::new(seed));
        let log = Engine::new(&s, vec![p; s.roster().len()], support::config(6, 6))
            .unwrap()
            .run()
            .unwrap();
        for r in 2..=6 {
            let before = observed_at(&log, r - 1).unwrap();
            let after = observed_at(&log, r).unwrap();
            prop_assert!(before.wars.is_subset(&after.wars));
            prop_assert!(before.mobilized.is_subset(&after.mobilized));
        }
        warsim::engine::verify_log(&log).unwrap();
    }
}
