//! Event-triggered inter-agent communication for multi-agent reinforcement
//! learning under an explicit channel budget.
//!
//! The crate is `no_std` (with `alloc`) and contains only computation:
//!
//! - [`nn`]: a fixed-topology MLP with exact backpropagation and Adam.
//! - [`envs`]: cooperative navigation and toroidal predator–prey gridworlds.
//! - [`bandwidth`]: channel budget → sending-probability ceiling → discounted
//!   penalty threshold, plus the online message-variance estimator.
//! - [`comms`]: trigger-time sets and zero-order-hold message boards.
//! - [`agents`]: the shared encoder / actor / gate networks and the
//!   centralized value heads.
//! - [`training`]: full-communication actor–critic pretraining and the
//!   Lagrangian-constrained gate training, plus the baseline gating modes.
//! - [`eval`]: evaluation episodes, reports, and per-step trajectory records.
//!
//! File formats, configuration and the command-line front end live in the
//! `etcomm` companion crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod agents;
pub mod bandwidth;
pub mod comms;
pub mod envs;
mod error;
pub mod eval;
pub(crate) mod math;
pub mod nn;
pub mod training;

pub use error::{Error, Result};

/// Deterministic RNG used everywhere in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a stream tag.
///
/// SplitMix64 finalizer over `seed ^ tag·φ`; used to give evaluation episodes,
/// environments and policies their own RNG streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
