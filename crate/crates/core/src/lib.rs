//! Triplet-loss geometry on the unit hypersphere.
//!
//! The crate models a triplet `(anchor, positive, negative)` by its position on the
//! *triplet diagram*, the point `(S_ap, S_an)` of anchor-positive and anchor-negative
//! cosine similarities, and provides:
//!
//! - [`geometry`]: sphere primitives, diagram coordinates and the plane projection factor.
//! - [`loss`]: NCA, margin and selectively contrastive triplet losses with exact gradients.
//! - [`dynamics`]: closed-form single-step similarity updates, the entanglement model,
//!   vector fields over the diagram and rollouts.
//! - [`mining`]: batch similarities and triplet selection strategies.
//! - [`synthdata`]: seeded labeled datasets on the sphere.
//! - [`trainer`]: a deterministic linear-embedding training loop.
//! - [`eval`]: Recall@K, the collapse metric and diagram extraction.
//!
//! Everything is `no_std` compatible (with `alloc`); the `std` feature only forwards to
//! dependencies.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dynamics;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod loss;
pub mod mining;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
pub use geometry::{TripletCoord, TripletFeatures, UnitVector};
pub use loss::{BaseLoss, LossKind, LossSpec};
pub use mining::{Batch, Label, MinedTriplet, MiningStrategy};
