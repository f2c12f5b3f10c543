//! Core primitives for GUI grounding: pixel geometry, the grounding-action
//! wire grammar, reward computation, conditional zoom math, and prompt
//! templates.
//!
//! This crate is `no_std` (with `alloc`) so the same logic can run inside
//! trainers, services, or embedded harnesses. IO, image handling, model
//! transport, and the CLI live in the companion `zoomground` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod action;
pub mod geometry;
pub mod prompt;
pub mod reward;
pub mod zoom;

pub use action::{FormatError, FormatErrorKind, GroundingAction, ParseMode, Verb};
pub use geometry::{ImageSize, PixelBox, PixelPoint};
pub use reward::{CombineMode, RewardBreakdown, RewardConfig, RewardWeights};
pub use zoom::{ZoomConfig, ZoomTransform};
