//! Procurement mechanisms that trade social cost for a spread-out supplier set.
//!
//! Three mechanisms are implemented together with their equilibrium solvers:
//!
//! * [`dsic`]: α-proportional allocation ([`alpha_par`]) with Myerson payments,
//! * [`tullock`]: Tullock procurement contests with a reward budget,
//! * [`paid_as_bid`]: α-proportional allocation where winners are paid their bid.
//!
//! [`verify`] is a brute-force best-response oracle used to certify solver
//! output, and [`cli`] backs the `procure-lab` binary.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alpha_par;
pub mod cli;
pub mod dsic;
pub mod error;
pub mod model;
pub mod numerics;
pub mod paid_as_bid;
pub mod tullock;
pub mod verify;

pub use error::{Error, Result};
pub use model::{Allocation, BidVector, CostVector, Outcome};
