use std::collections::BTreeSet;
use std::sync::Arc;

use cardstack_core::events::{parse_jsonl, write_jsonl, EventKind};
use cardstack_core::replay::replay;
use cardstack_core::session::{Engine, GestureInput, Resolution, TickClock};
use cardstack_core::sim::generate_items;
use cardstack_core::student::{AnswerOutcome, ItemPool};
use cardstack_core::{Config, ItemId, StudentId};
use proptest::prelude::*;

fn engine(n_items: usize) -> Engine<TickClock> {
    let pool = ItemPool::new(generate_items(n_items, 1.0, 3)).unwrap();
    Engine::new(Arc::new(pool), Arc::new(Config::default()), TickClock::default())
}

#[derive(Debug, Clone, Copy)]
enum Step {
    Skip(f64),
    Hesitate,
    Engage(bool),
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        (0.3f64..1.0, any::<bool>()).prop_map(|(d, left)| Step::Skip(if left { -d } else { d })),
        Just(Step::Hesitate),
        any::<bool>().prop_map(Step::Engage),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Random choice sequences: no consumed item is re-offered, cr_target
    /// stays in [0,1], seq stays gapless and the log folds back to the
    /// live state.
    #[test]
    fn random_choice_sequences(steps in prop::collection::vec(step(), 1..40)) {
        let mut eng = engine(25);
        let sid = eng.start_session(&StudentId::from("p"), None, None).unwrap();
        eng.deal(&sid).unwrap();
        let mut consumed = BTreeSet::<ItemId>::new();
        for s in steps {
            let Some(top) = eng.stack(&sid).unwrap().top else { break };
            prop_assert!(!consumed.contains(&top.item_id), "re-offered {}", top.item_id);
            let c = top.card_id.clone();
            match s {
                Step::Skip(dx) => {
                    eng.gesture(&sid, &c, GestureInput::Drag { dx, vx: 0.0 }, None).unwrap();
                    let r = eng.gesture(&sid, &c, GestureInput::Release { dx, vx: 0.0 }, None).unwrap();
                    prop_assert!(matches!(r, Resolution::Swiped { .. }), "expected a swipe, got {:?}", r);
                    consumed.insert(top.item_id);
                }
                Step::Hesitate => {
                    eng.gesture(&sid, &c, GestureInput::Drag { dx: 0.1, vx: 0.0 }, None).unwrap();
                    let r = eng.gesture(&sid, &c, GestureInput::Release { dx: 0.1, vx: 0.0 }, None).unwrap();
                    prop_assert_eq!(r, Resolution::Canceled);
                }
                Step::Engage(correct) => {
                    eng.gesture(&sid, &c, GestureInput::Tap, None).unwrap();
                    eng.answer(&sid, &c, AnswerOutcome::new(correct, 45.0).unwrap(), None).unwrap();
                    consumed.insert(top.item_id);
                }
            }
            let queued: Vec<_> = eng.state.session(&sid).unwrap().queue.preloaded.iter().map(|c| c.item_id.clone()).collect();
            prop_assert!(queued.iter().all(|i| !consumed.contains(i)));
            let st = &eng.state.students[&StudentId::from("p")];
            prop_assert!((0.0..=1.0).contains(&st.cr_target));
        }
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &eng.log).unwrap();
        let events = parse_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap();
        let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
        prop_assert_eq!(seqs, (1..=events.len() as u64).collect::<Vec<_>>());
        let folded = replay(&events, &eng.pool, &eng.config).unwrap();
        prop_assert_eq!(&folded, &eng.state);
        prop_assert_eq!(folded.progress(&sid, &eng.config).unwrap(), eng.progress(&sid).unwrap());
    }
}

#[test]
fn fresh_session_has_empty_progress() {
    let mut eng = engine(10);
    let view = eng.create_session(&StudentId::from("q")).unwrap();
    let p = eng.progress(&view.session_id).unwrap();
    assert_eq!((p.cards_skipped, p.cards_answered), (0, 0));
    assert!(p.feature_history.is_empty() && p.area_history.is_empty());
    assert_eq!(p.score, 500.0);
}

#[test]
fn one_engagement_records_one_snapshot() {
    let mut eng = engine(10);
    let view = eng.create_session(&StudentId::from("q")).unwrap();
    let sid = view.session_id;
    let card = view.top.unwrap().card_id;
    eng.gesture(&sid, &card, GestureInput::Tap, None).unwrap();
    let p = eng
        .answer(&sid, &card, AnswerOutcome::new(true, 20.0).unwrap(), None)
        .unwrap();
    assert_eq!(p.feature_history.len(), 1);
    assert_eq!(p.area_history.len(), 1);
    assert_eq!(
        p.feature_history[0].seq,
        eng.session_events(&sid)
            .iter()
            .find(|e| e.kind() == EventKind::Tap)
            .unwrap()
            .seq
    );
}

#[test]
fn truncated_log_tail_is_detected() {
    let mut eng = engine(10);
    let view = eng.create_session(&StudentId::from("q")).unwrap();
    let card = view.top.unwrap().card_id;
    eng.gesture(&view.session_id, &card, GestureInput::Drag { dx: 0.5, vx: 0.0 }, None)
        .unwrap();
    eng.gesture(
        &view.session_id,
        &card,
        GestureInput::Release { dx: 0.5, vx: 0.0 },
        None,
    )
    .unwrap();
    // Drop the preload that follows the replacement card's load.
    let cut = eng.log.len() - 1;
    assert_eq!(eng.log[cut].kind(), EventKind::Preload);
    assert!(replay(&eng.log[..cut], &eng.pool, &eng.config).is_err());
    assert!(replay(&eng.log, &eng.pool, &eng.config).is_ok());
}
