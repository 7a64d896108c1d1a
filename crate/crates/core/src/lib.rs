//! Embodied audiovisual search simulator.
//!
//! An agent on a parking-lot map hears a target through a noisy ITD cue and
//! sees cars through a narrow, occludable field of view. Both cues are fused
//! into an egocentric polar belief, and a policy chooses to turn, step, stay
//! or commit to the current best guess.

pub mod auditory;
pub mod belief;
pub mod bridge;
pub mod config;
pub mod environment;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod policy;
pub mod render;
pub mod scene;
pub mod selftest;
pub mod visual;

pub use error::{Error, Result};
