//! Candidate ranking and the per-session card queue (one top card plus a few
//! preloaded cards behind it).
//!
//! Ranking is a linear score over the same features shown on the card, so
//! the explanation a student sees and the ordering agree.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::config::{Config, RankingWeights};
use crate::error::{Error, Result};
use crate::features::{compute_features, initiative, SessionContext};
use crate::ids::{CardId, ItemId, SessionId};
use crate::lifecycle::{apply_lifecycle_event, Card, CardState, LifecycleEvent};
use crate::radar::{build_radar_model, default_labels, LabelStyleSpec};
use crate::student::{ItemPool, LearningItem, StudentState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionQueue {
    pub session_id: SessionId,
    pub top: Option<Card>,
    pub preloaded: Vec<Card>,
    /// Skipped and answered items; never offered again in this session.
    pub consumed_item_ids: BTreeSet<ItemId>,
    pub skipped_item_ids: BTreeSet<ItemId>,
    /// The last item whose card was answered.
    pub previous_item: Option<LearningItem>,
    /// Counter behind card ids.
    pub cards_created: u64,
}

impl SessionQueue {
    pub fn new(session_id: SessionId) -> Self {
        Self {
            session_id,
            top: None,
            preloaded: Vec::new(),
            consumed_item_ids: BTreeSet::new(),
            skipped_item_ids: BTreeSet::new(),
            previous_item: None,
            cards_created: 0,
        }
    }

    pub fn queued_item_ids(&self) -> impl Iterator<Item = &ItemId> {
        self.top.iter().chain(&self.preloaded).map(|c| &c.item_id)
    }

    /// Checks that `card_id` is the current top card.
    pub fn top_card(&self, card_id: &CardId) -> Result<&Card> {
        match &self.top {
            Some(c) if &c.card_id == card_id => Ok(c),
            _ => Err(Error::StaleCard {
                card_id: card_id.to_string(),
            }),
        }
    }

    pub fn context<'a>(&'a self, s: &StudentState) -> SessionContext<'a> {
        SessionContext::for_student(s, self.previous_item.as_ref())
    }
}

/// A change to the queue, in the order it happened. The session layer turns
/// these into log events.
#[derive(Debug, Clone, PartialEq)]
pub enum QueueChange {
    Loaded(Box<Card>),
    Preloaded(CardId),
    Promoted(CardId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Skip,
    Engage,
}

/// Ranks and builds cards for one session. Borrowed, stateless apart from
/// the catalog and configuration.
#[derive(Debug, Clone, Copy)]
pub struct Recommender<'a> {
    pub pool: &'a ItemPool,
    pub config: &'a Config,
}

impl<'a> Recommender<'a> {
    pub fn new(pool: &'a ItemPool, config: &'a Config) -> Self {
        Self { pool, config }
    }

    fn weights(&self) -> &RankingWeights {
        &self.config.recommender.weights
    }

    /// Pool items that are neither consumed nor already in the stack.
    pub fn candidates(&self, q: &SessionQueue) -> Vec<&'a LearningItem> {
        let queued: BTreeSet<&ItemId> = q.queued_item_ids().collect();
        self.pool
            .items()
            .iter()
            .filter(|it| !q.consumed_item_ids.contains(&it.item_id) && !queued.contains(&it.item_id))
            .collect()
    }

    /// Highest similarity (1 - initiative) between `it` and any skipped item.
    pub fn max_similarity_to_skipped(&self, q: &SessionQueue, it: &LearningItem) -> f64 {
        q.skipped_item_ids
            .iter()
            .filter_map(|id| self.pool.get(id))
            .map(|skipped| 1.0 - initiative(Some(skipped), it))
            .fold(0.0, f64::max)
    }

    pub fn score(
        &self,
        s: &StudentState,
        it: &LearningItem,
        q: &SessionQueue,
        ctx: &SessionContext<'_>,
    ) -> Result<f64> {
        let w = self.weights();
        let fv = compute_features(s, it, ctx, &self.config.model, &self.config.features)?;
        let fit = 1.0 - (fv.cr - s.cr_target).abs();
        Ok(w.w_gain * fv.normalized[0] + w.w_fit * fit - w.skip_penalty * self.max_similarity_to_skipped(q, it))
    }

    /// Sorts `pool` by descending score, ties by ascending item id.
    pub fn rank_candidates(
        &self,
        s: &StudentState,
        pool: &[&'a LearningItem],
        q: &SessionQueue,
        ctx: &SessionContext<'_>,
    ) -> Result<Vec<&'a LearningItem>> {
        let mut scored = pool
            .iter()
            .map(|&it| Ok((self.score(s, it, q, ctx)?, it)))
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|(sa, a), (sb, b)| sb.total_cmp(sa).then_with(|| a.item_id.cmp(&b.item_id)));
        Ok(scored.into_iter().map(|(_, it)| it).collect())
    }

    fn make_card(&self, q: &mut SessionQueue, s: &StudentState, it: &LearningItem) -> Result<Card> {
        let ctx = q.context(s);
        let features = compute_features(s, it, &ctx, &self.config.model, &self.config.features)?;
        let radar = build_radar_model(
            &features,
            &default_labels(),
            LabelStyleSpec::default(),
            &self.config.radar.grid_rings,
        )?;
        q.cards_created += 1;
        let card_id = CardId::new(format!("c{}", q.cards_created));
        Ok(Card::load(card_id, it.item_id.clone(), features, radar))
    }

    /// Moves the first preloaded card to the top if the top is empty.
    pub fn promote(&self, q: &mut SessionQueue, changes: &mut Vec<QueueChange>) -> Result<()> {
        if q.top.is_none() && !q.preloaded.is_empty() {
            let card = apply_lifecycle_event(&q.preloaded.remove(0), LifecycleEvent::Promote)?;
            changes.push(QueueChange::Promoted(card.card_id.clone()));
            q.top = Some(card);
        }
        Ok(())
    }

    /// Extends the stack from the head of `ranked` up to the preload depth.
    /// Features are computed here and frozen on the card.
    pub fn refill(&self, q: &mut SessionQueue, s: &StudentState, ranked: &[&LearningItem]) -> Result<Vec<QueueChange>> {
        let depth = self.config.recommender.preload_depth;
        let mut changes = Vec::new();
        self.promote(q, &mut changes)?;
        let mut ranked = ranked.iter();
        while q.top.is_none() || q.preloaded.len() < depth {
            let Some(it) = ranked.next() else { break };
            let card = self.make_card(q, s, it)?;
            changes.push(QueueChange::Loaded(Box::new(card.clone())));
            let card = apply_lifecycle_event(&card, LifecycleEvent::Preload)?;
            changes.push(QueueChange::Preloaded(card.card_id.clone()));
            q.preloaded.push(card);
            self.promote(q, &mut changes)?;
        }
        Ok(changes)
    }

    /// Ranks the remaining candidates and refills the stack.
    pub fn replenish(&self, q: &mut SessionQueue, s: &StudentState) -> Result<Vec<QueueChange>> {
        let depth = self.config.recommender.preload_depth;
        if q.top.is_some() && q.preloaded.len() >= depth {
            return Ok(Vec::new());
        }
        let candidates = self.candidates(q);
        let ranked = self.rank_candidates(s, &candidates, q, &q.context(s))?;
        self.refill(q, s, &ranked)
    }

    /// Records a skip or an engagement on the top card. The card's lifecycle
    /// state must already reflect the choice (`Skipped` or `Engaged`).
    ///
    /// Only engagements move `cr_target`; a skip may reject the topic rather
    /// than the difficulty.
    pub fn on_choice(
        &self,
        q: &mut SessionQueue,
        s: &mut StudentState,
        card_id: &CardId,
        choice: Choice,
    ) -> Result<Vec<QueueChange>> {
        let card = q.top_card(card_id)?;
        match choice {
            Choice::Engage => {
                let beta = self.config.recommender.cr_target_rate;
                s.cr_target = ((1.0 - beta) * s.cr_target + beta * card.features.cr).clamp(0.0, 1.0);
                Ok(Vec::new())
            }
            Choice::Skip => {
                let item_id = card.item_id.clone();
                q.top = None;
                q.skipped_item_ids.insert(item_id.clone());
                q.consumed_item_ids.insert(item_id);
                self.replenish(q, s)
            }
        }
    }

    /// Retires the answered top card and brings in the next one.
    pub fn on_answered(&self, q: &mut SessionQueue, s: &StudentState, card_id: &CardId) -> Result<Vec<QueueChange>> {
        let card = q.top_card(card_id)?;
        if card.state != CardState::Answered {
            return Err(Error::RejectedTransition {
                state: card.state,
                event: LifecycleEvent::Answer,
            });
        }
        let item_id = card.item_id.clone();
        q.top = None;
        q.previous_item = self.pool.get(&item_id).cloned();
        q.consumed_item_ids.insert(item_id);
        self.replenish(q, s)
    }
}
