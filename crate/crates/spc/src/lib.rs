//! Adversarial self-play between a "sneaky" step generator and a step-level
//! critic, with rollout-based validation, offline policy-gradient training,
//! and critic-guided stepwise search.
//!
//! The crate runs end-to-end at desk scale on a synthetic arithmetic domain
//! ([`toyworld`]) with exact ground truth, and talks to chat-completion
//! endpoints through the [`backend`] abstraction for full-scale use.

pub mod backend;
pub mod config;
pub mod core;
pub mod data;
pub mod error;
pub mod evalbench;
pub mod game;
pub mod pipeline;
pub mod roles;
pub mod search;
pub mod toyworld;
pub mod train;
pub mod util;
pub mod validate;

pub use error::{Error, Result};
