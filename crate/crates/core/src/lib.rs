//! Stability analysis for the scalar delay equation
//! `x'(t) = -a x(t) - b ∫ x(t - τ) dη(τ)` with a probability delay kernel `η`.

// `!(x > 0.0)` style checks are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod boundary;
pub mod charfun;
pub mod criteria;
pub mod distributions;
pub mod extremal;
pub mod quadrature;
pub mod simulator;
mod special;
