//! Partitioned co-simulation of a reinforcement-learning controller with
//! external flow and structure solvers.

// `!(x > 0.0)` style checks are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapter;
pub mod control;
pub mod coupling;
pub mod scenarios;
pub mod surrogate;
pub mod transport;
