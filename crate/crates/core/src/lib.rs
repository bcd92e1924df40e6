//! Self-adaptation framework for networked systems.
//!
//! The crate bundles everything needed to run a verified MAPE-K feedback
//! loop over a simulated managed system:
//!
//! - [`engine`] — a small modeling language for networks of
//!   discrete-stochastic automata plus the execution engine that runs them;
//! - [`smc`] — statistical model checking: probability estimation with
//!   accuracy/confidence sample sizing and mean estimation with RSEM
//!   stopping;
//! - [`deltaiot`] — ground-truth simulator of a multi-hop IoT network
//!   (motes, links, duty cycles, SNR-driven loss, energy accounting);
//! - [`qmodels`] — predictive quality models (packet loss, energy, latency)
//!   evaluated against candidate configurations;
//! - [`mape`] — the feedback loop itself: knowledge, monitor, analyzer,
//!   planner, executor, failsafe;
//! - [`verify`] — design-time exhaustive exploration of the loop composed
//!   with scripted stubs, with reachability and leads-to properties;
//! - [`evolve`] — staged, validated, atomic online updates of goals and
//!   quality models;
//! - [`healthsvc`] — a second managed system (service-based health
//!   assistance workflow) demonstrating framework reuse.

pub mod deltaiot;
pub mod engine;
pub mod evolve;
pub mod healthsvc;
pub mod mape;
pub mod oracle;
pub mod qmodels;
pub mod rng;
pub mod smc;
pub mod stats;
pub mod verify;

pub use rng::StreamRng;
