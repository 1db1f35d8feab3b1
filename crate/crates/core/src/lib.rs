//! Offline kiosk assistant engine: text preprocessing, intent classification,
//! FAQ retrieval, short-answer extraction, kiosk events and usage analytics.

pub mod analytics;
pub mod augment;
pub mod classify;
pub mod error;
pub mod events;
pub mod qa;
pub mod text;

pub use error::{Error, Result};
