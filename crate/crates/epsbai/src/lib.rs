//! (ε,δ)-PAC best-answer identification in transductive linear bandits.
//!
//! Layers, bottom up: [`linalg`] (designs, pseudo-inverses, least squares),
//! [`model`] (instances, ε-optimality, closest alternatives), [`chartime`]
//! (characteristic times and optimal allocations), [`stopping`] (GLR
//! thresholds and evaluation schedules), [`learner`] (AdaHedge),
//! [`sampling`] (the game-based sampler and baselines), [`sim`] (Gaussian
//! runs, batches, CSV) and [`cli`].

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chartime;
pub mod cli;
pub mod learner;
pub mod linalg;
pub mod model;
pub mod sampling;
pub mod sim;
pub mod stopping;
