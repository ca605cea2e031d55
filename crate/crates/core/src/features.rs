//! The five card features: expected score gain (E), completion probability
//! (Cp), correctness probability (Cr), on-time probability (O) and
//! initiative (I), each also normalized to a radius in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::config::{FeatureParams, ModelParams};
use crate::error::{Error, Result};
use crate::student::{logistic, predict_correctness, score_estimate, LearningItem, StudentState};

/// Axis order used everywhere: E, Cp, Cr, O, I.
pub const AXIS_COUNT: usize = 5;

pub const AXIS_LABELS: [(&str, &str); AXIS_COUNT] = [
    ("E", "Expected Score Gain"),
    ("Cp", "Completion Probability"),
    ("Cr", "Correctness Probability"),
    ("O", "On-Time Probability"),
    ("I", "Initiative"),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Expected score gain in points.
    pub e_raw: f64,
    pub cp: f64,
    pub cr: f64,
    pub o: f64,
    pub i: f64,
    pub normalized: [f64; AXIS_COUNT],
}

impl FeatureVector {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.cp, self.cr, self.o, self.i];
        if self.e_raw.is_nan()
            || self.e_raw < 0.0
            || probs.iter().chain(&self.normalized).any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::invalid(format!("feature vector out of range: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionContext<'a> {
    /// Last item whose card was answered in this session.
    pub previous_item: Option<&'a LearningItem>,
    pub items_consumed: u32,
    pub recent_correct_rate: f64,
}

impl<'a> SessionContext<'a> {
    pub fn fresh() -> Self {
        Self {
            previous_item: None,
            items_consumed: 0,
            recent_correct_rate: 0.5,
        }
    }

    pub fn for_student(s: &StudentState, previous_item: Option<&'a LearningItem>) -> Self {
        Self {
            previous_item,
            items_consumed: s.items_consumed_in_session,
            recent_correct_rate: s.recent_correct_rate,
        }
    }
}

/// Score points gained if the student answers `it` correctly. Never negative
/// because the score map is monotone.
pub fn expected_score_gain(s: &StudentState, it: &LearningItem, model: &ModelParams) -> Result<f64> {
    let p = predict_correctness(s, it)?;
    let after = score_estimate(s.theta + model.k * (1.0 - p), &model.score);
    let now = score_estimate(s.theta, &model.score);
    Ok((after - now).max(0.0))
}

pub fn completion_probability(ctx: &SessionContext<'_>, params: &FeatureParams) -> f64 {
    logistic(params.c0 - params.c1 * f64::from(ctx.items_consumed) + params.c2 * (ctx.recent_correct_rate - 0.5))
}

/// Standard normal CDF.
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Probability that a lognormal answer time, centered on the item median
/// shifted by the student's speed, beats the item's time limit.
pub fn on_time_probability(s: &StudentState, it: &LearningItem, params: &FeatureParams) -> Result<f64> {
    if it.time_limit_s.is_nan() || it.time_limit_s <= 0.0 {
        return Err(Error::invalid(format!(
            "time limit must be > 0, got {}",
            it.time_limit_s
        )));
    }
    let adjusted_median = it.log_median_time_mu - s.tau;
    Ok(normal_cdf((it.time_limit_s.ln() - adjusted_median) / params.sigma_t))
}

fn jaccard(a: &std::collections::BTreeSet<String>, b: &std::collections::BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Novelty of `it` relative to the previously solved item; 1.0 when there is none.
pub fn initiative(prev: Option<&LearningItem>, it: &LearningItem) -> f64 {
    let Some(prev) = prev else {
        return 1.0;
    };
    let difficulty_gap = ((it.difficulty_b - prev.difficulty_b).abs() / 4.0).clamp(0.0, 1.0);
    0.5 * difficulty_gap + 0.5 * (1.0 - jaccard(&it.topic_tags, &prev.topic_tags))
}

pub fn compute_features(
    s: &StudentState,
    it: &LearningItem,
    ctx: &SessionContext<'_>,
    model: &ModelParams,
    params: &FeatureParams,
) -> Result<FeatureVector> {
    s.validate()?;
    it.validate()?;
    let e_raw = expected_score_gain(s, it, model)?;
    let cp = completion_probability(ctx, params);
    let cr = predict_correctness(s, it)?;
    let o = on_time_probability(s, it, params)?;
    let i = initiative(ctx.previous_item, it);
    let fv = FeatureVector {
        e_raw,
        cp,
        cr,
        o,
        i,
        normalized: [(e_raw / params.e_max).clamp(0.0, 1.0), cp, cr, o, i],
    };
    fv.validate()?;
    Ok(fv)
}
