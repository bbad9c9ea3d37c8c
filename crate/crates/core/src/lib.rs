//! Deterministic simulation of contagion in financial networks.
//!
//! The crate models banks as balance sheets connected by two channels:
//! direct interbank exposures and overlapping asset portfolios. On top of
//! the domain types in [`model`] it provides seeded network generators
//! ([`netgen`]) and three dynamics engines: loss cascades over exposures
//! ([`cascade`]), self-consistent payment clearing ([`clearing`]), and
//! fire-sale contagion with price impact ([`firesale`]). On top of those
//! sit systemic-importance rankings ([`rank`]) and bail-out / buy-out
//! intervention experiments ([`intervene`]).
//!
//! Determinism is a contract: every stochastic routine takes an explicit
//! seed and derives per-trial RNG streams by counter splitting ([`seed`]),
//! so results are independent of execution order and worker count.

pub mod cascade;
pub mod clearing;
pub mod cli;
pub mod firesale;
pub mod intervene;
pub mod io;
pub mod model;
pub mod netgen;
pub mod rank;
pub mod seed;
