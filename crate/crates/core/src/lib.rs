//! Multi-object tracking and identification with set-valued particle
//! filters.
//!
//! The joint state of all objects in the monitored area is a finite set of
//! kinematic states; observations are finite sets of detections from a
//! noisy detector with false positives and misses. A particle filter works
//! directly on these sets: the observation likelihood sums over pruned data
//! associations (ranked assignments inside prioritized false/missing
//! hypotheses), a refinement proposal births objects from unexplained
//! detections, population-level density estimators supply motion and
//! proposal weights, and an EM pass extracts individually identified
//! objects with persistent IDs and existence confidences.
//!
//! The crate also ships the surrounding experiment harness: a birth-death
//! scenario simulator, CLEAR MOT evaluation, and the pruning benchmark.

pub mod assignment;
pub mod bench;
pub mod filter;
pub mod identify;
pub mod observation;
pub mod metrics;
pub mod models;
pub mod numeric;
pub mod sim;
pub mod tracker;

pub use models::{Detection, Mat2, ModelParams, ObjectState, ParticleSet, Rect};
