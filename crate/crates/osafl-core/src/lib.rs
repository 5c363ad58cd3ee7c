//! Algorithm core for a score-aided federated learning simulator over a
//! resource-constrained wireless network.
//!
//! The crate is split along the natural seams of the system:
//!
//! - [`ml`] — a minimal multi-layer perceptron kernel with softmax
//!   cross-entropy, exact gradients, and mini-batch SGD over flat parameter
//!   vectors, so protocols can treat models as plain `Vec<f64>`.
//! - [`content`] — the synthetic video-caching workload: catalog, per-user
//!   exploit/explore request model, both dataset constructions, and bounded
//!   FIFO client buffers with stochastic arrivals.
//! - [`wireless`] — link gains and the four computation/upload time and
//!   energy cost formulas that feed the resource optimizer.
//! - [`optim`] — the per-client joint optimizer: closed-form local-round and
//!   CPU-frequency sub-solvers, an SCA transmit-power sub-solver, and the
//!   outer iterative loop that classifies stragglers.
//! - [`protocols`] — the score-weighted server round plus the modified
//!   FedAvg/FedProx/FedNova/AFA-CD/FedDisco baselines and a centralized
//!   genie, all over the same client population.
//!
//! Everything is deterministic: randomness enters only through [`rng`]
//! streams keyed by `(seed, domain, client, round)`, which makes serial and
//! parallel execution bit-identical.
//!
//! The crate is `no_std`-compatible (with `alloc`); enable the `libm`
//! feature instead of the default `std` feature for `no_std` builds.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("enable either the `std` or the `libm` feature");

pub mod content;
mod math;
pub mod ml;
pub mod optim;
pub mod protocols;
pub mod rng;
pub mod wireless;
