//! Card lifecycle, release (snap) resolution and drag-driven transforms.
//!
//! ```text
//! Queued --preload--> Preloaded --promote--> TopIdle --drag--> Dragging
//!                                              |  ^               |  |
//!                                             tap  \-release_cancel  release_swipe
//!                                              v                     v
//!                                           Engaged --answer--> Answered   Skipped
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::GestureParams;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::ids::{CardId, ItemId};
use crate::radar::RadarRenderModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardState {
    Queued,
    Preloaded,
    TopIdle,
    Dragging,
    Skipped,
    Engaged,
    Answered,
}

impl CardState {
    pub const ALL: [CardState; 7] = [
        CardState::Queued,
        CardState::Preloaded,
        CardState::TopIdle,
        CardState::Dragging,
        CardState::Skipped,
        CardState::Engaged,
        CardState::Answered,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, CardState::Skipped | CardState::Answered)
    }

    /// Top-of-stack states in which the card is under interaction.
    pub fn is_front(self) -> bool {
        matches!(self, CardState::TopIdle | CardState::Dragging)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CardState::Queued => "queued",
            CardState::Preloaded => "preloaded",
            CardState::TopIdle => "top_idle",
            CardState::Dragging => "dragging",
            CardState::Skipped => "skipped",
            CardState::Engaged => "engaged",
            CardState::Answered => "answered",
        }
    }
}

impl fmt::Display for CardState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifecycleEvent {
    Load,
    Preload,
    Promote,
    Drag,
    ReleaseCancel,
    ReleaseSwipe,
    Tap,
    Answer,
}

impl LifecycleEvent {
    pub const ALL: [LifecycleEvent; 8] = [
        LifecycleEvent::Load,
        LifecycleEvent::Preload,
        LifecycleEvent::Promote,
        LifecycleEvent::Drag,
        LifecycleEvent::ReleaseCancel,
        LifecycleEvent::ReleaseSwipe,
        LifecycleEvent::Tap,
        LifecycleEvent::Answer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LifecycleEvent::Load => "load",
            LifecycleEvent::Preload => "preload",
            LifecycleEvent::Promote => "promote",
            LifecycleEvent::Drag => "drag",
            LifecycleEvent::ReleaseCancel => "release_cancel",
            LifecycleEvent::ReleaseSwipe => "release_swipe",
            LifecycleEvent::Tap => "tap",
            LifecycleEvent::Answer => "answer",
        }
    }
}

impl fmt::Display for LifecycleEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The transition table. `Load` creates a card and is never legal on an
/// existing one. Repeated drag samples keep a card in `Dragging`.
pub fn next_state(state: CardState, event: LifecycleEvent) -> Option<CardState> {
    use CardState::*;
    use LifecycleEvent::*;
    match (state, event) {
        (Queued, Preload) => Some(Preloaded),
        (Preloaded, Promote) => Some(TopIdle),
        (TopIdle, Drag) | (Dragging, Drag) => Some(Dragging),
        (Dragging, ReleaseCancel) => Some(TopIdle),
        (Dragging, ReleaseSwipe) => Some(Skipped),
        (TopIdle, Tap) => Some(Engaged),
        (Engaged, Answer) => Some(Answered),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Card {
    pub card_id: CardId,
    pub item_id: ItemId,
    /// Computed once at load time; a displayed pentagon never changes.
    pub features: FeatureVector,
    pub radar: RadarRenderModel,
    pub state: CardState,
}

impl Card {
    /// The load event: a new card enters the queue.
    pub fn load(card_id: CardId, item_id: ItemId, features: FeatureVector, radar: RadarRenderModel) -> Self {
        Self {
            card_id,
            item_id,
            features,
            radar,
            state: CardState::Queued,
        }
    }

    /// The radar chart animates only on the front card, so queued content
    /// stays hidden until it reaches the top.
    pub fn radar_animation_enabled(&self) -> bool {
        self.state.is_front()
    }
}

/// Applies one lifecycle event, leaving `card` untouched on rejection.
pub fn apply_lifecycle_event(card: &Card, event: LifecycleEvent) -> Result<Card> {
    let state = next_state(card.state, event).ok_or(Error::RejectedTransition {
        state: card.state,
        event,
    })?;
    Ok(Card { state, ..card.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureSample {
    /// Signed displacement in card widths.
    pub dx: f64,
    /// Signed velocity in card widths per second.
    pub vx: f64,
}

impl GestureSample {
    pub fn new(dx: f64, vx: f64) -> Result<Self> {
        if !dx.is_finite() || !vx.is_finite() {
            return Err(Error::Validation(format!(
                "gesture must be finite, got dx={dx} vx={vx}"
            )));
        }
        Ok(Self { dx, vx })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwipeDirection {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "resolution", content = "direction")]
pub enum Release {
    Swiped(SwipeDirection),
    Canceled,
}

/// Swipe when dragged past the distance threshold, or flung past the velocity
/// threshold in the direction of the drag. Both directions mean skip.
pub fn resolve_release(g: GestureSample, params: &GestureParams) -> Release {
    let far = g.dx.abs() >= params.distance_threshold;
    let fling = g.dx != 0.0 && g.vx.abs() >= params.velocity_threshold && g.vx.signum() == g.dx.signum();
    if far || fling {
        let dir = if g.dx > 0.0 {
            SwipeDirection::Right
        } else {
            SwipeDirection::Left
        };
        Release::Swiped(dir)
    } else {
        Release::Canceled
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopTransform {
    pub translate_x: f64,
    pub rotate_deg: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NextTransform {
    pub scale: f64,
    pub opacity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub top: TopTransform,
    pub next: NextTransform,
}

pub fn transform_for_dx(dx: f64, params: &GestureParams) -> TransformSpec {
    let d = params.distance_threshold;
    let progress = (dx.abs() / d).min(1.0);
    TransformSpec {
        top: TopTransform {
            translate_x: dx,
            rotate_deg: params.max_rotation_deg * (dx / d).clamp(-1.0, 1.0),
            scale: 1.0,
        },
        next: NextTransform {
            scale: params.rest_scale + (1.0 - params.rest_scale) * progress,
            opacity: params.rest_opacity + (1.0 - params.rest_opacity) * progress,
        },
    }
}
