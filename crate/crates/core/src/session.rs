//! Session orchestration: every mutation of a card stack goes through here
//! and comes back as the list of [`ChoiceEvent`]s it produced.
//!
//! Operations work on a copy of the session and student and commit only on
//! success, so a rejected request leaves no trace in state or log.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::events::{ChoiceEvent, EndReason, EventBody};
use crate::features::AXIS_COUNT;
use crate::ids::{CardId, SessionId, StudentId};
use crate::lifecycle::{
    apply_lifecycle_event, resolve_release, transform_for_dx, Card, CardState, GestureSample, LifecycleEvent, Release,
    SwipeDirection, TransformSpec,
};
use crate::radar::{polygon_area, RadarRenderModel};
use crate::recommender::{Choice, QueueChange, Recommender, SessionQueue};
use crate::student::{score_estimate, update_on_answer, AnswerOutcome, ItemPool, StudentState};

pub trait Clock {
    fn now_ms(&mut self) -> i64;
}

/// Wall-clock UTC milliseconds.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&mut self) -> i64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(0)
    }
}

/// One tick per event, for reproducible logs.
#[derive(Debug, Default, Clone, Copy)]
pub struct TickClock(pub i64);

impl Clock for TickClock {
    fn now_ms(&mut self) -> i64 {
        self.0 += 1;
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum SessionStatus {
    Active,
    /// No card left to show.
    Exhausted,
    Ended(EndReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSnapshot {
    pub seq: u64,
    pub normalized: [f64; AXIS_COUNT],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionCounters {
    pub cards_seen: u64,
    pub cards_skipped: u64,
    pub cards_answered: u64,
    /// Engaged cards, in engagement order.
    pub feature_history: Vec<FeatureSnapshot>,
    pub area_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressSummary {
    pub theta: f64,
    pub score: f64,
    pub cards_seen: u64,
    pub cards_skipped: u64,
    pub cards_answered: u64,
    pub feature_history: Vec<FeatureSnapshot>,
    pub area_history: Vec<f64>,
}

/// What a gesture or answer request resolved to. Cached per idempotency
/// token so a retried request gets the original answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "resolution")]
pub enum Resolution {
    Dragging { transform: TransformSpec },
    Swiped { direction: SwipeDirection },
    Canceled,
    Engaged,
    Answered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub card_id: CardId,
    pub resolution: Resolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: SessionId,
    pub student_id: StudentId,
    pub queue: SessionQueue,
    pub status: SessionStatus,
    /// Sequence number the next event will carry; the first event is 1.
    pub next_seq: u64,
    pub counters: SessionCounters,
    pub tokens: BTreeMap<String, TokenRecord>,
    pub policy: Option<String>,
}

impl Session {
    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    pub fn progress(&self, student: &StudentState, config: &Config) -> ProgressSummary {
        ProgressSummary {
            theta: student.theta,
            score: score_estimate(student.theta, &config.model.score),
            cards_seen: self.counters.cards_seen,
            cards_skipped: self.counters.cards_skipped,
            cards_answered: self.counters.cards_answered,
            feature_history: self.counters.feature_history.clone(),
            area_history: self.counters.area_history.clone(),
        }
    }

    fn ensure_open(&self) -> Result<()> {
        match self.status {
            SessionStatus::Ended(_) => Err(Error::SessionClosed(self.session_id.to_string())),
            _ => Ok(()),
        }
    }

    fn refresh_status(&mut self) {
        if !matches!(self.status, SessionStatus::Ended(_)) {
            self.status = if self.queue.top.is_some() {
                SessionStatus::Active
            } else {
                SessionStatus::Exhausted
            };
        }
    }
}

/// Gesture kinds accepted from a client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GestureInput {
    Drag { dx: f64, vx: f64 },
    Release { dx: f64, vx: f64 },
    Tap,
}

/// Read-only pieces every operation needs.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub pool: &'a ItemPool,
    pub config: &'a Config,
}

impl<'a> Env<'a> {
    pub fn new(pool: &'a ItemPool, config: &'a Config) -> Self {
        Self { pool, config }
    }

    fn recommender(&self) -> Recommender<'a> {
        Recommender::new(self.pool, self.config)
    }
}

struct Emitter<'c> {
    clock: &'c mut dyn Clock,
    events: Vec<ChoiceEvent>,
}

impl<'c> Emitter<'c> {
    fn new(clock: &'c mut dyn Clock) -> Self {
        Self {
            clock,
            events: Vec::new(),
        }
    }

    fn emit(&mut self, session: &mut Session, card: Option<&Card>, body: EventBody) -> u64 {
        let seq = session.next_seq;
        session.next_seq += 1;
        self.events.push(ChoiceEvent {
            seq,
            timestamp: self.clock.now_ms(),
            session_id: session.session_id.clone(),
            card_id: card.map(|c| c.card_id.clone()),
            item_id: card.map(|c| c.item_id.clone()),
            body,
        });
        seq
    }

    fn emit_changes(&mut self, session: &mut Session, changes: Vec<QueueChange>) {
        for change in changes {
            match change {
                QueueChange::Loaded(card) => {
                    self.emit(
                        session,
                        Some(&card),
                        EventBody::Load {
                            features: card.features,
                        },
                    );
                }
                QueueChange::Preloaded(id) => {
                    let card = find_card(&session.queue, &id).cloned();
                    self.emit(session, card.as_ref(), EventBody::Preload {});
                }
                QueueChange::Promoted(id) => {
                    session.counters.cards_seen += 1;
                    let card = find_card(&session.queue, &id).cloned();
                    self.emit(session, card.as_ref(), EventBody::Promote {});
                }
            }
        }
    }
}

fn find_card<'q>(q: &'q SessionQueue, id: &CardId) -> Option<&'q Card> {
    q.top.iter().chain(&q.preloaded).find(|c| &c.card_id == id)
}

/// Opens a session without dealing any cards. Resets the student's
/// per-session counter.
pub fn start_session(
    session_id: SessionId,
    student: &mut StudentState,
    policy: Option<String>,
    clock: &mut dyn Clock,
) -> (Session, Vec<ChoiceEvent>) {
    student.items_consumed_in_session = 0;
    let mut session = Session {
        session_id: session_id.clone(),
        student_id: student.student_id.clone(),
        queue: SessionQueue::new(session_id),
        status: SessionStatus::Exhausted,
        next_seq: 1,
        counters: SessionCounters::default(),
        tokens: BTreeMap::new(),
        policy: policy.clone(),
    };
    let mut out = Emitter::new(clock);
    out.emit(
        &mut session,
        None,
        EventBody::SessionStart {
            student_id: student.student_id.clone(),
            student: student.clone(),
            policy,
        },
    );
    (session, out.events)
}

/// Ranks the pool and deals the initial stack.
pub fn deal(
    env: Env<'_>,
    session: &mut Session,
    student: &StudentState,
    clock: &mut dyn Clock,
) -> Result<Vec<ChoiceEvent>> {
    session.ensure_open()?;
    let mut next = session.clone();
    let changes = env.recommender().replenish(&mut next.queue, student)?;
    let mut out = Emitter::new(clock);
    out.emit_changes(&mut next, changes);
    next.refresh_status();
    *session = next;
    Ok(out.events)
}

fn cached(session: &Session, card_id: &CardId, token: Option<&str>) -> Result<Option<Resolution>> {
    let Some(rec) = token.and_then(|t| session.tokens.get(t)) else {
        return Ok(None);
    };
    if &rec.card_id != card_id {
        return Err(Error::Validation(format!(
            "request token already used for card {}",
            rec.card_id
        )));
    }
    Ok(Some(rec.resolution))
}

fn remember(session: &mut Session, card_id: &CardId, token: Option<String>, resolution: Resolution) {
    if let Some(t) = token {
        session.tokens.insert(
            t,
            TokenRecord {
                card_id: card_id.clone(),
                resolution,
            },
        );
    }
}

/// Applies a drag, release or tap to the top card. A retried request with a
/// known token returns the original resolution and emits nothing.
pub fn gesture(
    env: Env<'_>,
    session: &mut Session,
    student: &mut StudentState,
    card_id: &CardId,
    input: GestureInput,
    token: Option<String>,
    clock: &mut dyn Clock,
) -> Result<(Resolution, Vec<ChoiceEvent>)> {
    session.ensure_open()?;
    if let Some(res) = cached(session, card_id, token.as_deref())? {
        return Ok((res, Vec::new()));
    }
    let mut next = session.clone();
    let mut learner = student.clone();
    let top = next.queue.top_card(card_id)?.clone();
    let mut out = Emitter::new(clock);

    let resolution = match input {
        GestureInput::Drag { dx, vx } => {
            let g = GestureSample::new(dx, vx)?;
            let card = apply_lifecycle_event(&top, LifecycleEvent::Drag)?;
            out.emit(
                &mut next,
                Some(&card),
                EventBody::Drag {
                    dx: g.dx,
                    vx: g.vx,
                    token: token.clone(),
                },
            );
            next.queue.top = Some(card);
            Resolution::Dragging {
                transform: transform_for_dx(g.dx, &env.config.gesture),
            }
        }
        GestureInput::Release { dx, vx } => {
            let g = GestureSample::new(dx, vx)?;
            match resolve_release(g, &env.config.gesture) {
                Release::Canceled => {
                    let card = apply_lifecycle_event(&top, LifecycleEvent::ReleaseCancel)?;
                    out.emit(
                        &mut next,
                        Some(&card),
                        EventBody::Cancel {
                            dx: g.dx,
                            vx: g.vx,
                            token: token.clone(),
                        },
                    );
                    next.queue.top = Some(card);
                    Resolution::Canceled
                }
                Release::Swiped(direction) => {
                    let card = apply_lifecycle_event(&top, LifecycleEvent::ReleaseSwipe)?;
                    out.emit(
                        &mut next,
                        Some(&card),
                        EventBody::Swipe {
                            dx: g.dx,
                            vx: g.vx,
                            direction,
                            token: token.clone(),
                        },
                    );
                    next.queue.top = Some(card);
                    next.counters.cards_skipped += 1;
                    let changes = env
                        .recommender()
                        .on_choice(&mut next.queue, &mut learner, card_id, Choice::Skip)?;
                    out.emit_changes(&mut next, changes);
                    Resolution::Swiped { direction }
                }
            }
        }
        GestureInput::Tap => {
            let card = apply_lifecycle_event(&top, LifecycleEvent::Tap)?;
            let seq = out.emit(&mut next, Some(&card), EventBody::Tap { token: token.clone() });
            next.counters.feature_history.push(FeatureSnapshot {
                seq,
                normalized: card.features.normalized,
            });
            next.counters.area_history.push(polygon_area(&card.radar));
            next.queue.top = Some(card);
            env.recommender()
                .on_choice(&mut next.queue, &mut learner, card_id, Choice::Engage)?;
            Resolution::Engaged
        }
    };
    remember(&mut next, card_id, token, resolution);
    next.refresh_status();
    *session = next;
    *student = learner;
    Ok((resolution, out.events))
}

/// Records the answer to the engaged top card, updates the student model and
/// deals the next card.
pub fn answer(
    env: Env<'_>,
    session: &mut Session,
    student: &mut StudentState,
    card_id: &CardId,
    outcome: AnswerOutcome,
    token: Option<String>,
    clock: &mut dyn Clock,
) -> Result<Vec<ChoiceEvent>> {
    session.ensure_open()?;
    if cached(session, card_id, token.as_deref())?.is_some() {
        return Ok(Vec::new());
    }
    let outcome = AnswerOutcome::new(outcome.correct, outcome.elapsed_s)?;
    let mut next = session.clone();
    let top = next.queue.top_card(card_id)?.clone();
    let card = apply_lifecycle_event(&top, LifecycleEvent::Answer)?;
    let item = env
        .pool
        .get(&card.item_id)
        .ok_or_else(|| Error::not_found("item", card.item_id.to_string()))?;
    let learner = update_on_answer(student, item, &outcome, &env.config.model)?;

    let mut out = Emitter::new(clock);
    out.emit(
        &mut next,
        Some(&card),
        EventBody::Answer {
            correct: outcome.correct,
            elapsed_s: outcome.elapsed_s,
            token: token.clone(),
        },
    );
    next.queue.top = Some(card);
    next.counters.cards_answered += 1;
    let changes = env.recommender().on_answered(&mut next.queue, &learner, card_id)?;
    out.emit_changes(&mut next, changes);
    remember(&mut next, card_id, token, Resolution::Answered);
    next.refresh_status();
    *session = next;
    *student = learner;
    Ok(out.events)
}

pub fn end_session(session: &mut Session, reason: EndReason, clock: &mut dyn Clock) -> Result<Vec<ChoiceEvent>> {
    session.ensure_open()?;
    let mut out = Emitter::new(clock);
    out.emit(session, None, EventBody::SessionEnd { reason });
    session.status = SessionStatus::Ended(reason);
    Ok(out.events)
}

/// Everything that event replay reconstructs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub students: BTreeMap<StudentId, StudentState>,
    pub sessions: BTreeMap<SessionId, Session>,
    pub sessions_created: u64,
}

impl EngineState {
    pub fn session(&self, id: &SessionId) -> Result<&Session> {
        self.sessions
            .get(id)
            .ok_or_else(|| Error::not_found("session", id.to_string()))
    }

    pub fn progress(&self, id: &SessionId, config: &Config) -> Result<ProgressSummary> {
        let session = self.session(id)?;
        let student = self
            .students
            .get(&session.student_id)
            .ok_or_else(|| Error::not_found("student", session.student_id.to_string()))?;
        Ok(session.progress(student, config))
    }
}

/// Wire form of a card: `{card_id, item_id, features: {e, cp, cr, o, i}, radar, state}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardView {
    pub card_id: CardId,
    pub item_id: crate::ids::ItemId,
    pub features: FeaturesView,
    pub radar: RadarRenderModel,
    pub state: CardState,
    pub animate_radar: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeaturesView {
    pub e: f64,
    pub cp: f64,
    pub cr: f64,
    pub o: f64,
    pub i: f64,
}

impl From<&Card> for CardView {
    fn from(c: &Card) -> Self {
        Self {
            card_id: c.card_id.clone(),
            item_id: c.item_id.clone(),
            features: FeaturesView {
                e: c.features.e_raw,
                cp: c.features.cp,
                cr: c.features.cr,
                o: c.features.o,
                i: c.features.i,
            },
            radar: c.radar.clone(),
            state: c.state,
            animate_radar: c.radar_animation_enabled(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackView {
    pub session_id: SessionId,
    pub student_id: StudentId,
    #[serde(flatten)]
    pub status: SessionStatus,
    pub top: Option<CardView>,
    /// The next view behind the top card.
    pub next: Option<CardView>,
    pub preloaded: usize,
    pub last_seq: u64,
}

impl From<&Session> for StackView {
    fn from(s: &Session) -> Self {
        Self {
            session_id: s.session_id.clone(),
            student_id: s.student_id.clone(),
            status: s.status,
            top: s.queue.top.as_ref().map(CardView::from),
            next: s.queue.preloaded.first().map(CardView::from),
            preloaded: s.queue.preloaded.len(),
            last_seq: s.last_seq(),
        }
    }
}

/// Single-threaded engine over shared catalog and config. The simulator and
/// tests drive this directly; the HTTP service wraps the same free
/// functions with per-session locking.
#[derive(Debug, Clone)]
pub struct Engine<C: Clock = SystemClock> {
    pub state: EngineState,
    pub pool: Arc<ItemPool>,
    pub config: Arc<Config>,
    pub clock: C,
    /// Every event emitted so far, in emission order.
    pub log: Vec<ChoiceEvent>,
}

impl<C: Clock> Engine<C> {
    pub fn new(pool: Arc<ItemPool>, config: Arc<Config>, clock: C) -> Self {
        Self::from_state(EngineState::default(), pool, config, clock)
    }

    pub fn from_state(state: EngineState, pool: Arc<ItemPool>, config: Arc<Config>, clock: C) -> Self {
        Self {
            state,
            pool,
            config,
            clock,
            log: Vec::new(),
        }
    }

    fn split(
        &mut self,
        id: &SessionId,
    ) -> Result<(Env<'_>, &mut Session, &mut StudentState, &mut C, &mut Vec<ChoiceEvent>)> {
        let session = self
            .state
            .sessions
            .get_mut(id)
            .ok_or_else(|| Error::not_found("session", id.to_string()))?;
        let student = self
            .state
            .students
            .get_mut(&session.student_id)
            .ok_or_else(|| Error::not_found("student", session.student_id.to_string()))?;
        Ok((
            Env::new(&self.pool, &self.config),
            session,
            student,
            &mut self.clock,
            &mut self.log,
        ))
    }

    fn next_session_id(&mut self) -> SessionId {
        self.state.sessions_created += 1;
        SessionId::new(format!("s-{}", self.state.sessions_created))
    }

    /// Opens a session without dealing cards; see [`Engine::deal`].
    pub fn start_session(
        &mut self,
        student_id: &StudentId,
        session_id: Option<SessionId>,
        policy: Option<String>,
    ) -> Result<SessionId> {
        let session_id = match session_id {
            Some(id) if self.state.sessions.contains_key(&id) => {
                return Err(Error::Validation(format!("session {id} already exists")))
            }
            Some(id) => {
                self.state.sessions_created += 1;
                id
            }
            None => self.next_session_id(),
        };
        let initial = self.config.recommender.initial_cr_target;
        let student = self
            .state
            .students
            .entry(student_id.clone())
            .or_insert_with(|| StudentState::new(student_id.clone(), initial));
        let (session, events) = start_session(session_id.clone(), student, policy, &mut self.clock);
        self.log.extend(events);
        self.state.sessions.insert(session_id.clone(), session);
        Ok(session_id)
    }

    pub fn deal(&mut self, id: &SessionId) -> Result<Vec<ChoiceEvent>> {
        let (env, session, student, clock, log) = self.split(id)?;
        let events = deal(env, session, student, clock)?;
        log.extend(events.iter().cloned());
        Ok(events)
    }

    /// Starts a session and deals its initial stack.
    pub fn create_session(&mut self, student_id: &StudentId) -> Result<StackView> {
        let id = self.start_session(student_id, None, None)?;
        self.deal(&id)?;
        self.stack(&id)
    }

    pub fn gesture(
        &mut self,
        id: &SessionId,
        card_id: &CardId,
        input: GestureInput,
        token: Option<String>,
    ) -> Result<Resolution> {
        let (env, session, student, clock, log) = self.split(id)?;
        let (res, events) = gesture(env, session, student, card_id, input, token, clock)?;
        log.extend(events);
        Ok(res)
    }

    pub fn answer(
        &mut self,
        id: &SessionId,
        card_id: &CardId,
        outcome: AnswerOutcome,
        token: Option<String>,
    ) -> Result<ProgressSummary> {
        let (env, session, student, clock, log) = self.split(id)?;
        let events = answer(env, session, student, card_id, outcome, token, clock)?;
        log.extend(events);
        self.progress(id)
    }

    pub fn end_session(&mut self, id: &SessionId, reason: EndReason) -> Result<()> {
        let (_, session, _, clock, log) = self.split(id)?;
        log.extend(end_session(session, reason, clock)?);
        Ok(())
    }

    pub fn stack(&self, id: &SessionId) -> Result<StackView> {
        Ok(StackView::from(self.state.session(id)?))
    }

    pub fn progress(&self, id: &SessionId) -> Result<ProgressSummary> {
        self.state.progress(id, &self.config)
    }

    pub fn session_events(&self, id: &SessionId) -> Vec<ChoiceEvent> {
        self.log.iter().filter(|e| &e.session_id == id).cloned().collect()
    }
}
