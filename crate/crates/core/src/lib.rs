//! Swipe-or-tap learning recommender.
//!
//! Each recommended item is shown as a card carrying five features drawn as a
//! pentagon: expected score gain, completion probability, correctness
//! probability, on-time probability and initiative. The student swipes to
//! skip or taps to engage. Every interaction is logged as a [`ChoiceEvent`],
//! the ranking adapts to what the student engages with, and the log alone is
//! enough to rebuild session state.
//!
//! Module map:
//! - [`student`]: Rasch correctness, Elo updates, scaled score
//! - [`features`]: the five card features and their normalization
//! - [`radar`]: pentagon geometry
//! - [`lifecycle`]: card states, swipe/cancel resolution, drag transforms
//! - [`recommender`]: ranking and the per-session card queue
//! - [`session`]: the operations a client drives, emitting events
//! - [`replay`]: folding an event log back into state
//! - [`sim`]: simulated students and preference recovery

pub mod config;
pub mod error;
pub mod events;
pub mod features;
pub mod ids;
pub mod lifecycle;
pub mod radar;
pub mod recommender;
pub mod replay;
pub mod session;
pub mod sim;
pub mod student;

pub use config::Config;
pub use error::{Error, Result};
pub use events::{ChoiceEvent, EventBody, EventKind};
pub use ids::{CardId, ItemId, SessionId, StudentId};
