//! Invariant sets of random permutations.
//!
//! The probability p(k) that a random permutation of a large set fixes some
//! set of size k equals the probability that k is a subset sum of a
//! multiset with independent Pois(1/i) multiplicities. This crate computes
//! that probability exactly for small k and by simulation for large k, and
//! implements the random-walk and subset-sum objects that describe its
//! asymptotics.

pub mod constants;
pub mod error;
pub mod gfun;
pub mod harmonic;
pub mod measures;
pub mod perm;
pub mod processes;
pub mod quad;
pub mod rngkit;
pub mod sumstats;
pub mod verify;
pub mod walks;

pub use error::{Error, Result};
pub use rngkit::{MCEstimate, McPlan, Stream, StreamSeed};
