//! Dual adversarial feature generation for generalized zero-shot learning.
//!
//! A semantic→visual generator synthesizes class-conditional visual
//! features from attribute vectors and noise; a visual→semantic generator
//! maps them back. Two Wasserstein critics with gradient penalty drive the
//! two directions, and centroid regularizers keep the reconstructed
//! attributes and the cycle-generated features consistent per class.
//! Synthesized features for unseen classes then train an ordinary softmax
//! classifier over all classes.

pub mod checkpoint;
pub mod classifier;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod losses;
pub mod networks;
pub mod optim;
pub mod rng;
pub mod synthesis;
pub mod trainer;

pub use error::{Error, Result};
