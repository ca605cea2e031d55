//! Tunable constants shared by the service, the simulator and the UI.
//!
//! Every section has a `Default` matching the shipped configuration, and the
//! whole tree deserializes from a JSON file where any field may be omitted.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Student-model constants: Elo step, EWMA rate and the scaled score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Elo step size applied to `(y - p)`.
    pub k: f64,
    /// EWMA rate for the recent correctness rate.
    pub ewma_alpha: f64,
    pub score: ScoreScale,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            k: 0.3,
            ewma_alpha: 0.2,
            score: ScoreScale::default(),
        }
    }
}

/// Linear map from ability (logits) to a clamped, rounded point score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreScale {
    pub midpoint: f64,
    pub points_per_logit: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for ScoreScale {
    fn default() -> Self {
        Self {
            midpoint: 500.0,
            points_per_logit: 100.0,
            min: 0.0,
            max: 990.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureParams {
    /// Expected score gain that maps to a full radius.
    pub e_max: f64,
    /// Completion-probability intercept.
    pub c0: f64,
    /// Fatigue per consumed item.
    pub c1: f64,
    /// Weight on the recent success rate (centered at 0.5).
    pub c2: f64,
    /// Log-time spread of answer durations.
    pub sigma_t: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            e_max: 30.0,
            c0: 3.0,
            c1: 0.05,
            c2: 1.0,
            sigma_t: 0.5,
        }
    }
}

/// Snap and transform constants. Distances are in card widths, velocities in
/// card widths per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GestureParams {
    pub distance_threshold: f64,
    pub velocity_threshold: f64,
    pub max_rotation_deg: f64,
    pub rest_scale: f64,
    pub rest_opacity: f64,
    /// Movement below which a press counts as a tap (client side).
    pub tap_deadzone: f64,
}

impl Default for GestureParams {
    fn default() -> Self {
        Self {
            distance_threshold: 0.3,
            velocity_threshold: 2.0,
            max_rotation_deg: 15.0,
            rest_scale: 0.9,
            rest_opacity: 0.5,
            tap_deadzone: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankingWeights {
    pub w_gain: f64,
    pub w_fit: f64,
    pub skip_penalty: f64,
}

impl Default for RankingWeights {
    fn default() -> Self {
        Self {
            w_gain: 1.0,
            w_fit: 1.0,
            skip_penalty: 0.5,
        }
    }
}

impl RankingWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("w_gain", self.w_gain),
            ("w_fit", self.w_fit),
            ("skip_penalty", self.skip_penalty),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::invalid(format!("ranking weight {name} must be >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommenderParams {
    pub weights: RankingWeights,
    pub preload_depth: usize,
    /// EWMA rate pulling `cr_target` toward the correctness of engaged cards.
    pub cr_target_rate: f64,
    /// `cr_target` given to students seen for the first time.
    pub initial_cr_target: f64,
}

impl Default for RecommenderParams {
    fn default() -> Self {
        Self {
            weights: RankingWeights::default(),
            preload_depth: 2,
            cr_target_rate: 0.2,
            initial_cr_target: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceParams {
    pub margin: f64,
    pub min_choices: usize,
}

impl Default for InferenceParams {
    fn default() -> Self {
        Self {
            margin: 0.05,
            min_choices: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarParams {
    pub grid_rings: Vec<f64>,
}

impl Default for RadarParams {
    fn default() -> Self {
        Self {
            grid_rings: vec![0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceParams {
    pub listen_addr: SocketAddr,
    pub item_pool_path: PathBuf,
    pub event_log_path: PathBuf,
    pub snapshot_path: Option<PathBuf>,
    /// Write a snapshot after this many appended events; 0 disables.
    pub snapshot_every: u64,
}

impl Default for ServiceParams {
    fn default() -> Self {
        Self {
            listen_addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            item_pool_path: PathBuf::from("items.json"),
            event_log_path: PathBuf::from("events.jsonl"),
            snapshot_path: None,
            snapshot_every: 0,
        }
    }
}

/// Environment variable that overrides `service.listen_addr`.
pub const LISTEN_ENV: &str = "CARDSTACK_LISTEN";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub model: ModelParams,
    pub features: FeatureParams,
    pub gesture: GestureParams,
    pub recommender: RecommenderParams,
    pub inference: InferenceParams,
    pub radar: RadarParams,
    pub service: ServiceParams,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }

    /// Applies the listen-address environment override, if set.
    pub fn with_env_overrides(mut self) -> Result<Self> {
        if let Ok(addr) = std::env::var(LISTEN_ENV) {
            self.service.listen_addr = addr
                .parse()
                .map_err(|e| Error::Validation(format!("{LISTEN_ENV}={addr}: {e}")))?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if !(m.k.is_finite() && m.k > 0.0) {
            return Err(Error::Validation("model.k must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&m.ewma_alpha) {
            return Err(Error::Validation("model.ewma_alpha must be in [0,1]".into()));
        }
        if !(m.score.min < m.score.max && m.score.points_per_logit > 0.0) {
            return Err(Error::Validation("model.score has an empty range".into()));
        }
        let f = &self.features;
        if !(f.e_max > 0.0 && f.sigma_t > 0.0) {
            return Err(Error::Validation(
                "features.e_max and features.sigma_t must be > 0".into(),
            ));
        }
        let g = &self.gesture;
        if !(g.distance_threshold > 0.0 && g.velocity_threshold > 0.0) {
            return Err(Error::Validation("gesture thresholds must be > 0".into()));
        }
        self.recommender
            .weights
            .validate()
            .map_err(|e| Error::Validation(e.to_string()))?;
        let r = &self.recommender;
        if !(0.0..=1.0).contains(&r.cr_target_rate) || !(0.0..=1.0).contains(&r.initial_cr_target) {
            return Err(Error::Validation("recommender rates must be in [0,1]".into()));
        }
        if self.radar.grid_rings.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Validation("radar.grid_rings must lie in [0,1]".into()));
        }
        Ok(())
    }
}
