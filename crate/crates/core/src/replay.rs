//! Rebuilds engine state by folding a choice-event log.
//!
//! The fold never ranks: cards come from `load` events with their frozen
//! features, and every other event is a lifecycle step on a known card. This
//! makes it an independent check of the live engine as well as the recovery
//! path after a restart.

use std::collections::BTreeMap;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::events::{ChoiceEvent, EventBody};
use crate::ids::{CardId, SessionId};
use crate::lifecycle::{apply_lifecycle_event, transform_for_dx, Card, LifecycleEvent};
use crate::radar::{build_radar_model, default_labels, polygon_area, LabelStyleSpec};
use crate::recommender::SessionQueue;
use crate::session::{EngineState, FeatureSnapshot, Resolution, Session, SessionCounters, SessionStatus, TokenRecord};
use crate::student::{update_on_answer, AnswerOutcome, ItemPool};

fn corrupt(e: &ChoiceEvent, msg: impl std::fmt::Display) -> Error {
    Error::Log(format!("session {} seq {}: {msg}", e.session_id, e.seq))
}

#[derive(Debug)]
pub struct Replayer<'a> {
    pool: &'a ItemPool,
    config: &'a Config,
    state: EngineState,
    /// Cards between their load and preload events.
    loading: BTreeMap<SessionId, Card>,
}

impl<'a> Replayer<'a> {
    pub fn new(pool: &'a ItemPool, config: &'a Config) -> Self {
        Self::from_state(EngineState::default(), pool, config)
    }

    /// Continues folding on top of a snapshot.
    pub fn from_state(state: EngineState, pool: &'a ItemPool, config: &'a Config) -> Self {
        Self {
            pool,
            config,
            state,
            loading: BTreeMap::new(),
        }
    }

    pub fn apply_all<'e>(&mut self, events: impl IntoIterator<Item = &'e ChoiceEvent>) -> Result<()> {
        events.into_iter().try_for_each(|e| self.apply(e))
    }

    pub fn finish(mut self) -> Result<EngineState> {
        if let Some((sid, _)) = self.loading.iter().next() {
            return Err(Error::Log(format!("session {sid}: log ends between load and preload")));
        }
        for s in self.state.sessions.values_mut() {
            if !matches!(s.status, SessionStatus::Ended(_)) {
                s.status = if s.queue.top.is_some() {
                    SessionStatus::Active
                } else {
                    SessionStatus::Exhausted
                };
            }
        }
        Ok(self.state)
    }

    pub fn apply(&mut self, e: &ChoiceEvent) -> Result<()> {
        if let EventBody::SessionStart {
            student_id,
            student,
            policy,
        } = &e.body
        {
            return self.start(e, student_id, student, policy.clone());
        }
        let session = self
            .state
            .sessions
            .get_mut(&e.session_id)
            .ok_or_else(|| corrupt(e, "event for unknown session"))?;
        if e.seq != session.next_seq {
            return Err(corrupt(e, format!("expected seq {}", session.next_seq)));
        }
        if matches!(session.status, SessionStatus::Ended(_)) {
            return Err(corrupt(e, "event after session_end"));
        }
        session.next_seq += 1;
        let student = self
            .state
            .students
            .get_mut(&session.student_id)
            .ok_or_else(|| corrupt(e, "unknown student"))?;
        let q = &mut session.queue;
        let card_id = || e.card_id.clone().ok_or_else(|| corrupt(e, "missing card_id"));

        match &e.body {
            EventBody::SessionStart { .. } => unreachable!(),
            EventBody::SessionEnd { reason } => session.status = SessionStatus::Ended(*reason),
            EventBody::Load { features } => {
                let item_id = e.item_id.clone().ok_or_else(|| corrupt(e, "load without item_id"))?;
                let radar = build_radar_model(
                    features,
                    &default_labels(),
                    LabelStyleSpec::default(),
                    &self.config.radar.grid_rings,
                )?;
                q.cards_created += 1;
                let card = Card::load(card_id()?, item_id, *features, radar);
                if self.loading.insert(e.session_id.clone(), card).is_some() {
                    return Err(corrupt(e, "two loads without a preload"));
                }
            }
            EventBody::Preload {} => {
                let card = self
                    .loading
                    .remove(&e.session_id)
                    .filter(|c| Some(&c.card_id) == e.card_id.as_ref())
                    .ok_or_else(|| corrupt(e, "preload of a card that was not loaded"))?;
                q.preloaded.push(apply_lifecycle_event(&card, LifecycleEvent::Preload)?);
            }
            EventBody::Promote {} => {
                let id = card_id()?;
                if q.top.is_some() || q.preloaded.first().map(|c| &c.card_id) != Some(&id) {
                    return Err(corrupt(e, "promote of a card that is not next"));
                }
                let card = q.preloaded.remove(0);
                q.top = Some(apply_lifecycle_event(&card, LifecycleEvent::Promote)?);
                session.counters.cards_seen += 1;
            }
            EventBody::Drag { dx, token, .. } => {
                let id = card_id()?;
                step_top(q, &id, LifecycleEvent::Drag, e)?;
                let transform = transform_for_dx(*dx, &self.config.gesture);
                remember(&mut session.tokens, token, &id, Resolution::Dragging { transform });
            }
            EventBody::Cancel { token, .. } => {
                let id = card_id()?;
                step_top(q, &id, LifecycleEvent::ReleaseCancel, e)?;
                remember(&mut session.tokens, token, &id, Resolution::Canceled);
            }
            EventBody::Swipe { direction, token, .. } => {
                let id = card_id()?;
                let card = step_top(q, &id, LifecycleEvent::ReleaseSwipe, e)?;
                q.top = None;
                q.skipped_item_ids.insert(card.item_id.clone());
                q.consumed_item_ids.insert(card.item_id);
                session.counters.cards_skipped += 1;
                remember(
                    &mut session.tokens,
                    token,
                    &id,
                    Resolution::Swiped { direction: *direction },
                );
            }
            EventBody::Tap { token } => {
                let id = card_id()?;
                let card = step_top(q, &id, LifecycleEvent::Tap, e)?;
                let beta = self.config.recommender.cr_target_rate;
                student.cr_target = ((1.0 - beta) * student.cr_target + beta * card.features.cr).clamp(0.0, 1.0);
                session.counters.feature_history.push(FeatureSnapshot {
                    seq: e.seq,
                    normalized: card.features.normalized,
                });
                session.counters.area_history.push(polygon_area(&card.radar));
                remember(&mut session.tokens, token, &id, Resolution::Engaged);
            }
            EventBody::Answer {
                correct,
                elapsed_s,
                token,
            } => {
                let id = card_id()?;
                let card = step_top(q, &id, LifecycleEvent::Answer, e)?;
                let item = self
                    .pool
                    .get(&card.item_id)
                    .ok_or_else(|| corrupt(e, format!("item {} not in pool", card.item_id)))?;
                *student = update_on_answer(
                    student,
                    item,
                    &AnswerOutcome::new(*correct, *elapsed_s)?,
                    &self.config.model,
                )?;
                q.top = None;
                q.previous_item = Some(item.clone());
                q.consumed_item_ids.insert(card.item_id);
                session.counters.cards_answered += 1;
                remember(&mut session.tokens, token, &id, Resolution::Answered);
            }
        }
        Ok(())
    }

    fn start(
        &mut self,
        e: &ChoiceEvent,
        student_id: &crate::ids::StudentId,
        snapshot: &crate::student::StudentState,
        policy: Option<String>,
    ) -> Result<()> {
        if e.seq != 1 {
            return Err(corrupt(e, "session_start must be seq 1"));
        }
        if self.state.sessions.contains_key(&e.session_id) {
            return Err(corrupt(e, "duplicate session_start"));
        }
        let student = self
            .state
            .students
            .entry(student_id.clone())
            .or_insert_with(|| snapshot.clone());
        student.items_consumed_in_session = 0;
        if student != snapshot {
            return Err(corrupt(e, "student snapshot disagrees with replayed state"));
        }
        self.state.sessions_created += 1;
        self.state.sessions.insert(
            e.session_id.clone(),
            Session {
                session_id: e.session_id.clone(),
                student_id: student_id.clone(),
                queue: SessionQueue::new(e.session_id.clone()),
                status: SessionStatus::Exhausted,
                next_seq: 2,
                counters: SessionCounters::default(),
                tokens: BTreeMap::new(),
                policy,
            },
        );
        Ok(())
    }
}

fn step_top(q: &mut SessionQueue, id: &CardId, event: LifecycleEvent, e: &ChoiceEvent) -> Result<Card> {
    let top = q
        .top
        .as_ref()
        .filter(|c| &c.card_id == id)
        .ok_or_else(|| corrupt(e, format!("{event} on a card that is not on top")))?;
    let card = apply_lifecycle_event(top, event).map_err(|err| corrupt(e, err))?;
    q.top = Some(card.clone());
    Ok(card)
}

fn remember(tokens: &mut BTreeMap<String, TokenRecord>, token: &Option<String>, id: &CardId, resolution: Resolution) {
    if let Some(t) = token {
        tokens.insert(
            t.clone(),
            TokenRecord {
                card_id: id.clone(),
                resolution,
            },
        );
    }
}

/// Folds a complete log from scratch.
pub fn replay(events: &[ChoiceEvent], pool: &ItemPool, config: &Config) -> Result<EngineState> {
    let mut r = Replayer::new(pool, config);
    r.apply_all(events)?;
    r.finish()
}
