//! Distributed NMPC for polytopic robots with dual-based collision avoidance.

// Negated comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ca_solver;
pub mod coordinator;
pub mod dual_distance;
pub mod dynamics;
pub mod error;
pub mod error_bound;
pub mod export;
pub mod geometry;
pub mod nmpc;
pub mod qp;
pub mod scenarios;
