//! Simulator and trainer for a stacked-intelligent-metasurface diffractive
//! deep neural network (SIM-D²NN) that classifies terrain from raw complex IQ
//! patches in the wave domain.
//!
//! The pipeline mirrors the physical system:
//!
//! ```text
//! IQ scene -> patches -> downsample -> normalize -> phase-rotation concat
//!          -> layer 0 (Φ⁰) -> W¹ Φ¹ ... W^L Φ^L -> H (Rician, path loss) + AWGN
//!          -> argmax |y_k|²
//! ```
//!
//! Only the per-layer phases θ are trained ([`network::PhaseParams`]); the
//! digital baseline ([`network::DigitalParams`]) drops the unit-modulus
//! constraint on the same graph.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod binio;
pub mod channel;
pub mod config;
pub mod data;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod geometry;
pub mod metrics;
pub mod network;
pub mod propagation;
pub mod rng;
pub mod training;

pub use error::{Error, Result};

/// Complex scalar used for all field computations.
pub type C64 = num_complex::Complex64;
