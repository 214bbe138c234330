//! Intention sharing for vulnerable road users.
//!
//! Each station fits a quadratic to its own recent motion, encodes the
//! predicted end state as a fixed-size shape, and broadcasts it in a VAM.
//! The crate covers the prediction and geometry, the wire codec, the
//! message generation rules, a discrete-event channel simulator that
//! measures inter-packet gaps, and a harness that counts the work done by
//! intention-sharing and intention-detection rounds.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod codec;
pub mod coordination;
pub mod geometry;
pub mod gnss;
pub mod netsim;
pub mod prediction;
pub mod rng;
pub mod vam_engine;

pub use geometry::{ConvexPolygon, Cov2, Point2, Segment, UncertaintyEllipse};
pub use prediction::{MotionHistory, MotionSample, PredictedTrajectory, QuadraticFit};
