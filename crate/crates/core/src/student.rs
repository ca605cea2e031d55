//! Per-student latent model: Rasch correctness, Elo-style ability updates and
//! the scaled score the expected-gain feature is measured in.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ModelParams, ScoreScale};
use crate::error::{Error, Result};
use crate::ids::{ItemId, StudentId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentState {
    pub student_id: StudentId,
    /// Ability, logit scale.
    pub theta: f64,
    /// Speed trait, log-time scale. Positive means faster than the item median.
    pub tau: f64,
    pub items_consumed_in_session: u32,
    pub recent_correct_rate: f64,
    /// Preferred correctness probability, learned from engagements.
    pub cr_target: f64,
}

impl StudentState {
    pub fn new(student_id: StudentId, cr_target: f64) -> Self {
        Self {
            student_id,
            theta: 0.0,
            tau: 0.0,
            items_consumed_in_session: 0,
            recent_correct_rate: 0.5,
            cr_target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() || !self.tau.is_finite() {
            return Err(Error::invalid("student theta and tau must be finite"));
        }
        if !(0.0..=1.0).contains(&self.recent_correct_rate) || !(0.0..=1.0).contains(&self.cr_target) {
            return Err(Error::invalid("student rates must lie in [0,1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningItem {
    #[serde(rename = "id")]
    pub item_id: ItemId,
    pub difficulty_b: f64,
    /// Log of the median answer time in seconds.
    pub log_median_time_mu: f64,
    pub time_limit_s: f64,
    pub topic_tags: BTreeSet<String>,
}

impl LearningItem {
    pub fn validate(&self) -> Result<()> {
        if !self.difficulty_b.is_finite() || !self.log_median_time_mu.is_finite() {
            return Err(Error::invalid(format!("item {}: non-finite parameters", self.item_id)));
        }
        if !(self.time_limit_s.is_finite() && self.time_limit_s > 0.0) {
            return Err(Error::invalid(format!(
                "item {}: time_limit_s must be > 0",
                self.item_id
            )));
        }
        if self.topic_tags.is_empty() {
            return Err(Error::invalid(format!("item {}: topic_tags is empty", self.item_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnswerOutcome {
    pub correct: bool,
    pub elapsed_s: f64,
}

impl AnswerOutcome {
    pub fn new(correct: bool, elapsed_s: f64) -> Result<Self> {
        if !(elapsed_s.is_finite() && elapsed_s > 0.0) {
            return Err(Error::Validation(format!("elapsed_s must be > 0, got {elapsed_s}")));
        }
        Ok(Self { correct, elapsed_s })
    }
}

/// Immutable item catalog, indexed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemPool {
    items: Vec<LearningItem>,
    index: BTreeMap<ItemId, usize>,
}

impl ItemPool {
    pub fn new(mut items: Vec<LearningItem>) -> Result<Self> {
        items.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        let mut index = BTreeMap::new();
        for (i, it) in items.iter().enumerate() {
            it.validate()?;
            if index.insert(it.item_id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate item id {}", it.item_id)));
            }
        }
        Ok(Self { items, index })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let items: Vec<LearningItem> =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("item pool: {e}")))?;
        Self::new(items)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, id: &ItemId) -> Option<&LearningItem> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    /// Items in ascending id order.
    pub fn items(&self) -> &[LearningItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Rasch probability of a correct answer.
pub fn predict_correctness(s: &StudentState, it: &LearningItem) -> Result<f64> {
    rasch(s.theta, it.difficulty_b)
}

pub fn rasch(theta: f64, difficulty_b: f64) -> Result<f64> {
    if !theta.is_finite() || !difficulty_b.is_finite() {
        return Err(Error::invalid(format!(
            "non-finite ability/difficulty ({theta}, {difficulty_b})"
        )));
    }
    Ok(logistic(theta - difficulty_b))
}

/// Elo step on ability plus EWMA of correctness; bumps the session counter.
pub fn update_on_answer(
    s: &StudentState,
    it: &LearningItem,
    out: &AnswerOutcome,
    params: &ModelParams,
) -> Result<StudentState> {
    s.validate()?;
    it.validate()?;
    let out = AnswerOutcome::new(out.correct, out.elapsed_s)?;
    let p = predict_correctness(s, it)?;
    let y = if out.correct { 1.0 } else { 0.0 };
    let alpha = params.ewma_alpha;
    Ok(StudentState {
        theta: s.theta + params.k * (y - p),
        recent_correct_rate: ((1.0 - alpha) * s.recent_correct_rate + alpha * y).clamp(0.0, 1.0),
        items_consumed_in_session: s.items_consumed_in_session.saturating_add(1),
        ..s.clone()
    })
}

pub fn score_estimate(theta: f64, scale: &ScoreScale) -> f64 {
    (scale.midpoint + scale.points_per_logit * theta)
        .round()
        .clamp(scale.min, scale.max)
}
