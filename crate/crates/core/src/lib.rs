//! Simulation and statistical verification toolkit for boundary-case
//! branching random walks whose associated one-dimensional walk lies in the
//! domain of attraction of a spectrally positive stable law with tail index
//! in (1, 2).
//!
//! The crate is organized around the three ways of looking at the same
//! particle system:
//!
//! * [`stable_walk`] — the associated one-dimensional random walk: a
//!   mean-zero step law with an exact Pareto right tail, path simulation,
//!   barrier-crossing (ballot-type) probability estimators, and a Hill
//!   estimator for the tail index.
//! * [`reproduction`] — reproduction point-process laws in the boundary
//!   normalization (unit mean of the exponentially weighted brood, zero
//!   weighted drift), condition checkers, and the walk/tree consistency
//!   oracle provided by the many-to-one identity.
//! * [`forward_sim`] — generation-by-generation simulation of the full
//!   particle system with population-control policies, producing minimal
//!   positions and the additive/restricted/derivative martingales.
//! * [`spine_sim`] — the size-biased description of the system: a
//!   distinguished spine moving as the associated walk, its brother broods,
//!   barrier events along the spine, and importance-sampling estimators.
//! * [`harness`] — experiment presets, deterministic parallel replica
//!   orchestration, and CSV/JSON persistence.
//!
//! Everything is deterministic given a master seed: replicas draw from
//! ChaCha streams selected by replica index, and tree simulations derive one
//! key per particle from the path back to the root (see [`rng`]).

pub mod error;
pub mod forward_sim;
pub mod harness;
pub mod numeric;
pub mod reproduction;
pub mod rng;
pub mod spine_sim;
pub mod stable_walk;
pub mod stats;

pub use error::{Error, Result};
