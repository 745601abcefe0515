//! Simulation and analysis toolkit for spin-3/2 silicon-vacancy centers in
//! 6H-SiC.

// NaN must fail range checks, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch;
pub mod fit;
pub mod odmr;
pub mod par;
pub mod preset;
pub mod pump;
pub mod seq;
pub mod spin;
