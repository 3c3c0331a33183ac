//! Interruptibility-aware decision stack for a mobile robot that needs human
//! assistance: synthetic detector logs, multi-rate feature fusion, a
//! latent-dynamic CRF classifier, interruption policies, a discrete-event
//! simulator of the assembly study protocol and the statistics used to
//! analyse its outcomes.
//!
//! Data flows through the modules in this order:
//!
//! ```text
//! scene ──► features ──► ldcrf ──► policy ──► sim ──► analysis
//! ```
//!
//! With the `parallel` feature (on by default) sequence gradients, cross
//! validation folds and batches of trials are evaluated with rayon; without
//! it the same code runs sequentially and produces identical results.

pub mod analysis;
pub mod features;
pub mod ldcrf;
pub mod par;
pub mod policy;
pub mod rng;
pub mod scene;
pub mod sim;

/// Interval between classifier ticks at the default 2 Hz rate.
pub const TICK_SECONDS: f64 = 0.5;
