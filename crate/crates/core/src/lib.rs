//! Tracking a moving maximum with Bayesian optimization.
//!
//! A Gaussian-process surrogate over space and time models an expensive
//! similarity score. Each frame the tracker spends a fixed query budget
//! chosen by an expected-improvement rule whose exploration margin shrinks
//! as the frame's search accumulates evidence, then moves its box to the
//! maximum of the surrogate's mean.
//!
//! The main entry points are [`tracker::tracker_init`] and
//! [`tracker::Tracker::step`]; [`harness`] drives whole sequences.

pub mod acquisition;
pub mod config;
pub mod dop;
pub mod error;
pub mod geometry;
pub mod gp;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod par;
pub mod selftest;
pub mod similarity;
pub mod tracker;

pub use error::{Error, ProtocolError, Result};
